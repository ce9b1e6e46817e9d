//! Market instances and the three regime choice rules.
//!
//! Agents are processed in index order, which stands in for the priority
//! order. Under capacitated supply this is serial dictatorship over the
//! remaining item multiset; under uncapacitated supply one agent faces all
//! `n` items.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::rng::{Lane, RandomStream};

pub const DEFAULT_UPFRONT_CAP: usize = 4096;

/// What an agent observes when choosing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    NoInformation,
    OnlyQuality,
    FullInformation,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::NoInformation, Regime::OnlyQuality, Regime::FullInformation];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            Regime::NoInformation => "none",
            Regime::OnlyQuality => "quality",
            Regime::FullInformation => "full",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "empty" | "0" | "no-information" | "noinformation" => Ok(Regime::NoInformation),
            "q" | "quality" | "only-quality" | "onlyquality" => Ok(Regime::OnlyQuality),
            "u" | "full" | "full-information" | "fullinformation" => Ok(Regime::FullInformation),
            other => Err(Error::domain(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Supply {
    Uncapacitated,
    CapacitatedUnit,
    /// Item `y` can be taken `capacities[y]` times; the sum equals the agent count.
    CapacitatedGeneral { capacities: Vec<u32> },
}

/// Welfare setting, the coarse view of [`Supply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Uncapacitated,
    Capacitated,
}

impl Setting {
    pub fn short(self) -> &'static str {
        match self {
            Setting::Uncapacitated => "uncap",
            Setting::Capacitated => "cap",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uncap" | "uncapacitated" => Ok(Setting::Uncapacitated),
            "cap" | "capacitated" => Ok(Setting::Capacitated),
            other => Err(Error::domain(format!("unknown setting `{other}`"))),
        }
    }
}

impl Supply {
    pub fn setting(&self) -> Setting {
        match self {
            Supply::Uncapacitated => Setting::Uncapacitated,
            _ => Setting::Capacitated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Materialize the full agent × item idiosyncratic matrix; shared by all regimes.
    #[default]
    Upfront,
    /// Draw idiosyncratic values only when an agent looks at them.
    Deferred,
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upfront" => Ok(SamplingMode::Upfront),
            "deferred" => Ok(SamplingMode::Deferred),
            other => Err(Error::domain(format!("unknown sampling mode `{other}`"))),
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_UPFRONT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Number of agents (and of item slots).
    pub n: usize,
    pub rho: f64,
    pub supply: Supply,
    pub dist_q: DistSpec,
    pub dist_phi: DistSpec,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub base_seed: u64,
    /// Largest `n` for which an upfront `n × items` matrix may be materialized.
    #[serde(default = "default_cap")]
    pub upfront_cap: usize,
}

impl MarketConfig {
    pub fn new(n: usize, rho: f64, supply: Supply, dist_q: DistSpec, dist_phi: DistSpec) -> Self {
        Self {
            n,
            rho,
            supply,
            dist_q,
            dist_phi,
            sampling_mode: SamplingMode::Upfront,
            base_seed: 0,
            upfront_cap: DEFAULT_UPFRONT_CAP,
        }
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.sampling_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn setting(&self) -> Setting {
        self.supply.setting()
    }

    /// Number of distinct items.
    pub fn items(&self) -> usize {
        match &self.supply {
            Supply::CapacitatedGeneral { capacities } => capacities.len(),
            _ => self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("market needs at least one agent"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::domain(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if let Supply::CapacitatedGeneral { capacities } = &self.supply {
            if capacities.is_empty() || capacities.contains(&0) {
                return Err(Error::domain("capacities must be positive"));
            }
            let total: u64 = capacities.iter().map(|&c| c as u64).sum();
            if total != self.n as u64 {
                return Err(Error::domain(format!(
                    "capacities sum to {total} but the market has {} agents",
                    self.n
                )));
            }
        }
        Ok(())
    }

    fn capacities(&self) -> Option<&[u32]> {
        match &self.supply {
            Supply::CapacitatedGeneral { capacities } => Some(capacities),
            _ => None,
        }
    }
}

/// Dense row-major agent × item matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PhiMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::domain("ragged idiosyncratic matrix"));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.data[agent * self.cols..(agent + 1) * self.cols]
    }

    pub fn get(&self, agent: usize, item: usize) -> f64 {
        self.data[agent * self.cols + item]
    }
}

/// Where idiosyncratic values come from in one trial.
#[derive(Debug, Clone)]
pub enum PhiSource {
    Upfront(PhiMatrix),
    /// Lazy draws; each regime reads its own lane so regimes do not perturb each other.
    Deferred { dist: DistSpec, base_seed: u64, trial: u64 },
}

impl PhiSource {
    pub fn deferred_stream(&self, regime: Regime) -> Option<RandomStream> {
        match *self {
            PhiSource::Upfront(_) => None,
            PhiSource::Deferred { base_seed, trial, .. } => {
                // Full information reads the upfront lane: its first agent scans
                // items in index order, so it sees the same values as row 0 of
                // the upfront matrix, and a one-agent market agrees exactly.
                let lane = match regime {
                    Regime::NoInformation => Lane::DeferredNoInformation,
                    Regime::OnlyQuality => Lane::DeferredOnlyQuality,
                    Regime::FullInformation => Lane::Idiosyncratic,
                };
                Some(RandomStream::for_trial(base_seed, trial, lane))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub q: Vec<f64>,
    pub phi: PhiSource,
}

/// Draws the common terms and prepares the idiosyncratic source for one trial.
pub fn draw_instance(config: &MarketConfig, trial: u64) -> Result<Instance> {
    config.validate()?;
    let items = config.items();
    let mut common = RandomStream::for_trial(config.base_seed, trial, Lane::Common);
    let q = config.dist_q.sample(&mut common, items);
    let phi = match config.sampling_mode {
        SamplingMode::Upfront => {
            if config.n > config.upfront_cap {
                return Err(Error::Resource(format!(
                    "upfront idiosyncratic matrix needs n <= {} (got n = {}); use deferred sampling",
                    config.upfront_cap, config.n
                )));
            }
            let mut stream = RandomStream::for_trial(config.base_seed, trial, Lane::Idiosyncratic);
            let mut data = vec![0.0; config.n * items];
            config.dist_phi.sample_into(&mut stream, &mut data);
            PhiSource::Upfront(PhiMatrix {
                rows: config.n,
                cols: items,
                data,
            })
        }
        SamplingMode::Deferred => PhiSource::Deferred {
            dist: config.dist_phi,
            base_seed: config.base_seed,
            trial,
        },
    };
    Ok(Instance { q, phi })
}

/// Per-agent result of one regime in one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationOutcome {
    pub regime: Regime,
    pub assignment: Vec<usize>,
    pub utility: Vec<f64>,
    pub q_component: Vec<f64>,
    pub phi_component: Vec<f64>,
}

impl AllocationOutcome {
    fn with_capacity(regime: Regime, n: usize) -> Self {
        Self {
            regime,
            assignment: Vec::with_capacity(n),
            utility: Vec::with_capacity(n),
            q_component: Vec::with_capacity(n),
            phi_component: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, item: usize, q_part: f64, phi_part: f64) {
        self.assignment.push(item);
        self.q_component.push(q_part);
        self.phi_component.push(phi_part);
        self.utility.push(q_part + phi_part);
    }

    pub fn average_utility(&self) -> f64 {
        crate::special::compensated_sum(self.utility.iter().copied()) / self.utility.len() as f64
    }

    /// CSV rows `trial,regime,agent,item,utility,q_component,phi_component`.
    pub fn write_csv<W: Write>(&self, writer: &mut csv::Writer<W>, trial: u64) -> Result<()> {
        for agent in 0..self.assignment.len() {
            writer.serialize(OutcomeRow {
                trial,
                regime: self.regime.short(),
                agent,
                item: self.assignment[agent],
                utility: self.utility[agent],
                q_component: self.q_component[agent],
                phi_component: self.phi_component[agent],
            })?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct OutcomeRow {
    trial: u64,
    regime: &'static str,
    agent: usize,
    item: usize,
    utility: f64,
    q_component: f64,
    phi_component: f64,
}

/// Keeps the maximum seen so far, breaking exact ties uniformly at random
/// (reservoir sampling over the tied set). Randomness is consumed only on ties.
struct ArgMax {
    best: usize,
    value: f64,
    ties: u64,
}

impl ArgMax {
    fn new() -> Self {
        Self {
            best: usize::MAX,
            value: f64::NEG_INFINITY,
            ties: 0,
        }
    }

    #[inline]
    fn offer(&mut self, idx: usize, value: f64, stream: &mut RandomStream) {
        if value > self.value || self.best == usize::MAX {
            self.best = idx;
            self.value = value;
            self.ties = 1;
        } else if value == self.value {
            self.ties += 1;
            if stream.below(self.ties) == 0 {
                self.best = idx;
            }
        }
    }
}

/// One agent's choice among all items (uncapacitated supply).
///
/// The returned utility is the realized `(1-ρ)q_j + ρφ_j` for the chosen `j`,
/// including the idiosyncratic part the agent did not observe.
pub fn choose_uncapacitated(
    regime: Regime,
    rho: f64,
    q: &[f64],
    phi_row: &[f64],
    tie_stream: &mut RandomStream,
) -> (usize, f64) {
    assert_eq!(q.len(), phi_row.len(), "q and phi row lengths differ");
    assert!(!q.is_empty(), "no items to choose from");
    let w = 1.0 - rho;
    let j = match regime {
        Regime::NoInformation => tie_stream.index(q.len()),
        Regime::OnlyQuality => {
            let mut best = ArgMax::new();
            for (j, &qj) in q.iter().enumerate() {
                best.offer(j, qj, tie_stream);
            }
            best.best
        }
        Regime::FullInformation => {
            let mut best = ArgMax::new();
            for (j, (&qj, &pj)) in q.iter().zip(phi_row).enumerate() {
                best.offer(j, w * qj + rho * pj, tie_stream);
            }
            best.best
        }
    };
    (j, w * q[j] + rho * phi_row[j])
}

/// Items chosen and utilities of the single agent under each regime, on one shared draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncapacitatedTrial {
    pub item: [usize; 3],
    pub utility: [f64; 3],
}

impl UncapacitatedTrial {
    pub fn utility_of(&self, regime: Regime) -> f64 {
        self.utility[regime.index()]
    }
}

/// One uncapacitated trial. Only the evaluated agent's idiosyncratic row is
/// drawn, whatever the sampling mode, so large `n` stays linear in memory.
pub fn run_uncapacitated_trial(config: &MarketConfig, trial: u64) -> Result<UncapacitatedTrial> {
    if config.setting() != Setting::Uncapacitated {
        return Err(Error::precondition("uncapacitated trial on a capacitated config"));
    }
    config.validate()?;
    let n = config.n;
    let mut common = RandomStream::for_trial(config.base_seed, trial, Lane::Common);
    let q = config.dist_q.sample(&mut common, n);
    let mut idio = RandomStream::for_trial(config.base_seed, trial, Lane::Idiosyncratic);
    let phi = config.dist_phi.sample(&mut idio, n);
    let mut choice = RandomStream::for_trial(config.base_seed, trial, Lane::Choice);
    let mut out = UncapacitatedTrial {
        item: [0; 3],
        utility: [0.0; 3],
    };
    for regime in Regime::ALL {
        let (j, u) = choose_uncapacitated(regime, config.rho, &q, &phi, &mut choice);
        out.item[regime.index()] = j;
        out.utility[regime.index()] = u;
    }
    Ok(out)
}

/// The three regimes' allocations on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitatedTrial {
    pub outcomes: [AllocationOutcome; 3],
}

impl CapacitatedTrial {
    pub fn outcome(&self, regime: Regime) -> &AllocationOutcome {
        &self.outcomes[regime.index()]
    }

    pub fn average_utility(&self, regime: Regime) -> f64 {
        self.outcome(regime).average_utility()
    }
}

pub fn run_capacitated_trial(config: &MarketConfig, trial: u64) -> Result<CapacitatedTrial> {
    if config.setting() != Setting::Capacitated {
        return Err(Error::precondition("capacitated trial on an uncapacitated config"));
    }
    let instance = draw_instance(config, trial)?;
    let caps = config.capacities();
    let outcomes = Regime::ALL.map(|regime| {
        let mut choice = RandomStream::for_trial(
            crate::rng::derive(config.base_seed, regime as u64 + 1),
            trial,
            Lane::Choice,
        );
        let phi = match &instance.phi {
            PhiSource::Upfront(m) => PhiAccess::Matrix(m),
            deferred => PhiAccess::Lazy {
                dist: config.dist_phi,
                stream: deferred.deferred_stream(regime).expect("deferred source"),
            },
        };
        allocate(regime, config.rho, config.n, &instance.q, caps, phi, &mut choice)
    });
    Ok(CapacitatedTrial { outcomes })
}

/// Access to idiosyncratic values during an allocation.
pub enum PhiAccess<'a> {
    Matrix(&'a PhiMatrix),
    Lazy { dist: DistSpec, stream: RandomStream },
}

impl PhiAccess<'_> {
    #[inline]
    fn value(&mut self, agent: usize, item: usize) -> f64 {
        match self {
            PhiAccess::Matrix(m) => m.get(agent, item),
            PhiAccess::Lazy { dist, stream } => dist.sample_one(stream),
        }
    }
}

/// Serial dictatorship on a fixed instance: `agents` agents pick in index
/// order from items with remaining capacity (`capacities = None` means unit).
pub fn allocate(
    regime: Regime,
    rho: f64,
    agents: usize,
    q: &[f64],
    capacities: Option<&[u32]>,
    mut phi: PhiAccess<'_>,
    choice: &mut RandomStream,
) -> AllocationOutcome {
    let items = q.len();
    let mut remaining: Vec<u32> = match capacities {
        Some(c) => c.to_vec(),
        None => vec![1; items],
    };
    debug_assert_eq!(remaining.iter().map(|&c| c as usize).sum::<usize>(), agents);
    let w = 1.0 - rho;
    let mut out = AllocationOutcome::with_capacity(regime, agents);

    match regime {
        Regime::NoInformation => {
            let mut avail: Vec<usize> = (0..items).collect();
            for agent in 0..agents {
                let slot = choice.index(avail.len());
                let y = avail[slot];
                take(&mut remaining, &mut avail, slot);
                let p = phi.value(agent, y);
                out.push(y, w * q[y], rho * p);
            }
        }
        Regime::OnlyQuality => {
            // descending q; equal-q groups are drawn from uniformly
            let mut order: Vec<usize> = (0..items).collect();
            order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
            let mut next = 0;
            let mut group: Vec<usize> = Vec::new();
            for agent in 0..agents {
                if group.is_empty() {
                    let start = next;
                    while next < items && q[order[next]] == q[order[start]] {
                        next += 1;
                    }
                    group.extend_from_slice(&order[start..next]);
                }
                let slot = if group.len() > 1 { choice.index(group.len()) } else { 0 };
                let y = group[slot];
                take(&mut remaining, &mut group, slot);
                let p = phi.value(agent, y);
                out.push(y, w * q[y], rho * p);
            }
        }
        Regime::FullInformation => {
            let mut avail: Vec<usize> = (0..items).collect();
            for agent in 0..agents {
                let mut best = ArgMax::new();
                let mut best_phi = 0.0;
                for (slot, &y) in avail.iter().enumerate() {
                    let p = phi.value(agent, y);
                    let before = best.best;
                    best.offer(slot, w * q[y] + rho * p, choice);
                    if best.best != before {
                        best_phi = p;
                    }
                }
                let slot = best.best;
                let y = avail[slot];
                take(&mut remaining, &mut avail, slot);
                out.push(y, w * q[y], rho * best_phi);
            }
        }
    }
    out
}

fn take(remaining: &mut [u32], avail: &mut Vec<usize>, slot: usize) {
    let y = avail[slot];
    remaining[y] -= 1;
    if remaining[y] == 0 {
        avail.swap_remove(slot);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pareto() -> DistSpec {
        DistSpec::pareto(1.0, 2.0).unwrap()
    }

    fn cap_config(n: usize, rho: f64) -> MarketConfig {
        MarketConfig::new(n, rho, Supply::CapacitatedUnit, pareto(), pareto()).with_seed(17)
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("q".parse::<Regime>().unwrap(), Regime::OnlyQuality);
        assert_eq!("none".parse::<Regime>().unwrap(), Regime::NoInformation);
        assert_eq!("u".parse::<Regime>().unwrap(), Regime::FullInformation);
        assert!("x".parse::<Regime>().is_err());
        assert!(Regime::NoInformation < Regime::OnlyQuality);
    }

    #[test]
    fn uncapacitated_choice_examples() {
        let mut s = RandomStream::from_key(1);
        let q = [1.0, 5.0, 2.0];
        let phi = [9.0, 0.0, 0.0];
        assert_eq!(choose_uncapacitated(Regime::OnlyQuality, 0.5, &q, &phi, &mut s), (1, 2.5));
        assert_eq!(choose_uncapacitated(Regime::FullInformation, 0.5, &q, &phi, &mut s), (0, 5.0));
        assert_eq!(choose_uncapacitated(Regime::FullInformation, 0.0, &q, &phi, &mut s), (1, 5.0));
    }

    #[test]
    fn ties_are_broken_uniformly() {
        let mut s = RandomStream::from_key(2);
        let q = [3.0, 1.0, 3.0, 3.0];
        let phi = [0.0; 4];
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            counts[choose_uncapacitated(Regime::OnlyQuality, 0.5, &q, &phi, &mut s).0] += 1;
        }
        assert_eq!(counts[1], 0);
        for &c in &[counts[0], counts[2], counts[3]] {
            assert!((c as f64 - 10_000.0).abs() < 400.0, "{counts:?}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cap_config(4, 0.5);
        assert!(c.validate().is_ok());
        c.rho = 1.5;
        assert!(c.validate().is_err());
        let mut g = cap_config(5, 0.5);
        g.supply = Supply::CapacitatedGeneral { capacities: vec![2, 2] };
        assert!(g.validate().is_err());
        g.supply = Supply::CapacitatedGeneral { capacities: vec![2, 3] };
        assert!(g.validate().is_ok());
        assert_eq!(g.items(), 2);
        let json = serde_json::to_string(&g).unwrap();
        let back: MarketConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn draw_instance_is_deterministic_and_capped() {
        let c = cap_config(3, 0.5);
        let a = draw_instance(&c, 4).unwrap();
        let b = draw_instance(&c, 4).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.q.len(), 3);
        assert!(a.q.iter().all(|&x| x >= 1.0));
        match (&a.phi, &b.phi) {
            (PhiSource::Upfront(x), PhiSource::Upfront(y)) => assert_eq!(x, y),
            _ => panic!("expected upfront"),
        }
        let big = cap_config(100_000, 0.5);
        assert!(matches!(draw_instance(&big, 0), Err(Error::Resource(_))));
        let deferred = big.clone().with_mode(SamplingMode::Deferred);
        assert!(draw_instance(&deferred, 0).is_ok());
    }

    #[test]
    fn two_by_two_full_information() {
        let phi = PhiMatrix::from_rows(vec![vec![3.0, 1.0], vec![2.0, 5.0]]).unwrap();
        let mut s = RandomStream::from_key(0);
        let out = allocate(
            Regime::FullInformation,
            1.0,
            2,
            &[0.0, 0.0],
            None,
            PhiAccess::Matrix(&phi),
            &mut s,
        );
        assert_eq!(out.assignment, vec![0, 1]);
        assert_eq!(out.utility.iter().sum::<f64>(), 8.0);
    }

    #[test]
    fn only_quality_takes_descending_q() {
        let c = cap_config(50, 0.3);
        let trial = run_capacitated_trial(&c, 0).unwrap();
        let inst = draw_instance(&c, 0).unwrap();
        let oq = trial.outcome(Regime::OnlyQuality);
        let taken: Vec<f64> = oq.assignment.iter().map(|&y| inst.q[y]).collect();
        let mut sorted = inst.q.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(taken, sorted);
    }

    #[test]
    fn unit_capacity_assignments_are_permutations() {
        for mode in [SamplingMode::Upfront, SamplingMode::Deferred] {
            let c = cap_config(40, 0.6).with_mode(mode);
            let trial = run_capacitated_trial(&c, 9).unwrap();
            let inst = draw_instance(&c, 9).unwrap();
            let total_q: f64 = inst.q.iter().sum();
            for o in &trial.outcomes {
                let mut a = o.assignment.clone();
                a.sort_unstable();
                assert_eq!(a, (0..40).collect::<Vec<_>>());
                let q_sum: f64 = o.assignment.iter().map(|&y| inst.q[y]).sum();
                assert!((q_sum - total_q).abs() < 1e-9 * total_q);
                for k in 0..40 {
                    assert_eq!(o.utility[k], o.q_component[k] + o.phi_component[k]);
                    assert!(o.utility[k] >= 0.0);
                }
            }
        }
    }

    #[test]
    fn general_capacities_respected() {
        let mut c = cap_config(6, 0.5);
        c.supply = Supply::CapacitatedGeneral { capacities: vec![1, 2, 3] };
        for mode in [SamplingMode::Upfront, SamplingMode::Deferred] {
            let c = c.clone().with_mode(mode);
            let trial = run_capacitated_trial(&c, 1).unwrap();
            for o in &trial.outcomes {
                let mut counts = [0u32; 3];
                for &y in &o.assignment {
                    counts[y] += 1;
                }
                assert_eq!(counts, [1, 2, 3]);
            }
        }
    }

    #[test]
    fn full_information_is_optimal_per_agent() {
        let c = cap_config(30, 0.7);
        let inst = draw_instance(&c, 2).unwrap();
        let PhiSource::Upfront(phi) = &inst.phi else { panic!() };
        let trial = run_capacitated_trial(&c, 2).unwrap();
        let full = trial.outcome(Regime::FullInformation);
        let mut available = vec![true; 30];
        for k in 0..30 {
            for y in 0..30 {
                if available[y] {
                    let z = 0.3 * inst.q[y] + 0.7 * phi.get(k, y);
                    assert!(full.utility[k] >= z);
                }
            }
            available[full.assignment[k]] = false;
        }
    }

    #[test]
    fn rho_zero_collapses_full_to_quality() {
        let c = cap_config(25, 0.0);
        let trial = run_capacitated_trial(&c, 3).unwrap();
        assert_eq!(
            trial.outcome(Regime::OnlyQuality).assignment,
            trial.outcome(Regime::FullInformation).assignment
        );
    }

    #[test]
    fn uncapacitated_trial_edge_cases() {
        let base = MarketConfig::new(20, 0.0, Supply::Uncapacitated, pareto(), pareto()).with_seed(5);
        let t = run_uncapacitated_trial(&base, 0).unwrap();
        assert_eq!(t.utility_of(Regime::OnlyQuality), t.utility_of(Regime::FullInformation));

        let mut one = base.clone();
        one.rho = 1.0;
        let t = run_uncapacitated_trial(&one, 0).unwrap();
        let mut idio = RandomStream::for_trial(5, 0, Lane::Idiosyncratic);
        let row = pareto().sample(&mut idio, 20);
        let max = row.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(t.utility_of(Regime::FullInformation), max);

        let mut single = base.clone();
        single.n = 1;
        single.rho = 0.4;
        let t = run_uncapacitated_trial(&single, 0).unwrap();
        assert_eq!(t.utility[0], t.utility[1]);
        assert_eq!(t.utility[1], t.utility[2]);

        assert!(run_uncapacitated_trial(&cap_config(3, 0.5), 0).is_err());
        assert!(run_capacitated_trial(&base, 0).is_err());
    }

    #[test]
    fn capacitated_trials_are_reproducible() {
        let c = cap_config(20, 0.5);
        assert_eq!(run_capacitated_trial(&c, 7).unwrap(), run_capacitated_trial(&c, 7).unwrap());
        let d = c.with_mode(SamplingMode::Deferred);
        assert_eq!(run_capacitated_trial(&d, 7).unwrap(), run_capacitated_trial(&d, 7).unwrap());
    }

    #[test]
    fn outcome_csv_rows() {
        let c = cap_config(3, 0.5);
        let trial = run_capacitated_trial(&c, 0).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        trial.outcome(Regime::OnlyQuality).write_csv(&mut w, 0).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "trial,regime,agent,item,utility,q_component,phi_component");
        assert_eq!(lines.count(), 3);
    }
}
