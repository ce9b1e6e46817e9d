//! Grid sweeps over (n, ρ) producing gap estimates next to their predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::asymptotics::predict_gap;
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::{MarketConfig, Regime, SamplingMode, Setting, Supply, DEFAULT_UPFRONT_CAP};
use crate::rng::derive;
use crate::welfare::{gap_from_stats, trial_statistics};

/// An ordered pair of regimes, written `from:to` (e.g. `none:quality`, `q:u`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GapPair {
    pub from: Regime,
    pub to: Regime,
}

impl GapPair {
    pub const RANKINGS: GapPair = GapPair {
        from: Regime::NoInformation,
        to: Regime::OnlyQuality,
    };
    pub const PERSONALIZATION: GapPair = GapPair {
        from: Regime::OnlyQuality,
        to: Regime::FullInformation,
    };
}

impl fmt::Display for GapPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.from, self.to)
    }
}

impl FromStr for GapPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("gap `{s}` must look like from:to")))?;
        let pair = GapPair {
            from: a.parse()?,
            to: b.parse()?,
        };
        if pair.from == pair.to {
            return Err(Error::domain(format!("gap `{s}` compares a regime with itself")));
        }
        Ok(pair)
    }
}

impl Serialize for GapPair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GapPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether rows are divided by the matching theorem's normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerChoice {
    #[default]
    Theorem,
    None,
}

impl FromStr for NormalizerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(NormalizerChoice::Theorem),
            "none" => Ok(NormalizerChoice::None),
            other => Err(Error::domain(format!("unknown normalizer `{other}`"))),
        }
    }
}

/// `{0, 0.05, …, 1}`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

fn default_cap() -> usize {
    DEFAULT_UPFRONT_CAP
}

fn default_gaps() -> Vec<GapPair> {
    vec![GapPair::RANKINGS, GapPair::PERSONALIZATION]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub supply: Supply,
    pub dist_q: DistSpec,
    pub dist_phi: DistSpec,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_cap")]
    pub upfront_cap: usize,
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub trials: u64,
    /// Per-`n` trial counts overriding `trials`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trials_by_n: BTreeMap<usize, u64>,
    #[serde(default = "default_gaps")]
    pub gaps: Vec<GapPair>,
    #[serde(default)]
    pub normalizer: NormalizerChoice,
}

impl SweepSpec {
    pub fn new(supply: Supply, dist_q: DistSpec, dist_phi: DistSpec, n_grid: Vec<usize>, trials: u64) -> Self {
        Self {
            supply,
            dist_q,
            dist_phi,
            sampling_mode: SamplingMode::Upfront,
            base_seed: 0,
            upfront_cap: DEFAULT_UPFRONT_CAP,
            rho_grid: default_rho_grid(),
            n_grid,
            trials,
            trials_by_n: BTreeMap::new(),
            gaps: default_gaps(),
            normalizer: NormalizerChoice::Theorem,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho_grid.is_empty() || self.n_grid.is_empty() || self.gaps.is_empty() {
            return Err(Error::precondition("rho grid, n grid and gap list must be nonempty"));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::domain(format!("rho grid value {r} outside [0, 1]")));
        }
        if self.n_grid.contains(&0) {
            return Err(Error::domain("n grid values must be positive"));
        }
        if self.gaps.iter().any(|g| g.from == g.to) {
            return Err(Error::domain("a gap compares a regime with itself"));
        }
        if (0..self.n_grid.len()).any(|i| self.trials_for(self.n_grid[i]) < 2) {
            return Err(Error::precondition("every cell needs at least two trials"));
        }
        Ok(())
    }

    pub fn setting(&self) -> Setting {
        self.supply.setting()
    }

    pub fn trials_for(&self, n: usize) -> u64 {
        self.trials_by_n.get(&n).copied().unwrap_or(self.trials)
    }

    /// The market of one grid cell. Its seed is derived from
    /// `(base_seed, n, rho_index)`, so a cell can be rerun on its own.
    pub fn cell_config(&self, n: usize, rho_index: usize) -> MarketConfig {
        MarketConfig {
            n,
            rho: self.rho_grid[rho_index],
            supply: self.supply.clone(),
            dist_q: self.dist_q,
            dist_phi: self.dist_phi,
            sampling_mode: self.sampling_mode,
            base_seed: cell_seed(self.base_seed, n, rho_index),
            upfront_cap: self.upfront_cap,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rho_grid.len() * self.n_grid.len() * self.gaps.len()
    }
}

pub fn cell_seed(base_seed: u64, n: usize, rho_index: usize) -> u64 {
    derive(derive(base_seed, n as u64), rho_index as u64)
}

/// One output line: a gap estimate in one cell, with its prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: Setting,
    pub from: String,
    pub to: String,
    pub n: usize,
    pub rho: f64,
    pub dist_q: String,
    pub dist_phi: String,
    pub trials: u64,
    pub delta: Option<f64>,
    pub stderr: Option<f64>,
    pub paired: Option<bool>,
    pub theorem_id: String,
    pub leading_value: Option<f64>,
    pub normalizer: Option<f64>,
    pub predicted_gap: Option<f64>,
    pub normalized: Option<f64>,
    pub extrapolated: Option<bool>,
    /// `ok`, or `failed: <reason>` when the cell could not be computed.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn gap(&self) -> Option<GapPair> {
        format!("{}:{}", self.from, self.to).parse().ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.is_ok())
    }

    pub fn find(&self, n: usize, rho: f64, gap: GapPair) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && (r.rho - rho).abs() < 1e-12 && r.gap() == Some(gap))
    }
}

/// `delta / normalizer`, nudged by an ulp or two when that makes
/// `normalized × normalizer` reproduce `delta` bit for bit.
pub fn exact_quotient(delta: f64, normalizer: f64) -> f64 {
    let r = delta / normalizer;
    if !r.is_finite() || r * normalizer == delta {
        return r;
    }
    let mut down = r;
    let mut up = r;
    for _ in 0..4 {
        down = next_toward(down, f64::NEG_INFINITY);
        up = next_toward(up, f64::INFINITY);
        if up * normalizer == delta {
            return up;
        }
        if down * normalizer == delta {
            return down;
        }
    }
    r
}

fn next_toward(x: f64, target: f64) -> f64 {
    if x == 0.0 {
        let tiny = f64::from_bits(1);
        return if target > 0.0 { tiny } else { -tiny };
    }
    let bits = x.to_bits();
    let away_from_zero = (target > x) == (x > 0.0);
    f64::from_bits(if away_from_zero { bits + 1 } else { bits - 1 })
}

fn failed_row(spec: &SweepSpec, n: usize, rho: f64, gap: GapPair, trials: u64, reason: &str) -> SweepRow {
    SweepRow {
        setting: spec.setting(),
        from: gap.from.short().to_string(),
        to: gap.to.short().to_string(),
        n,
        rho,
        dist_q: spec.dist_q.to_string(),
        dist_phi: spec.dist_phi.to_string(),
        trials,
        delta: None,
        stderr: None,
        paired: None,
        theorem_id: String::new(),
        leading_value: None,
        normalizer: None,
        predicted_gap: None,
        normalized: None,
        extrapolated: None,
        status: format!("failed: {reason}"),
    }
}

/// Runs every cell of `spec` on a pool of `workers` threads.
///
/// Rows come out ordered by n, then ρ, then gap, and are identical for any
/// worker count: trials are collected in index order and reduced sequentially.
/// A cell that errors yields rows marked as failed rather than aborting the sweep.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(spec.row_count());
    run_sweep_streaming(spec, workers, |row| rows.push(row.clone()))?;
    Ok(SweepTable {
        spec: spec.clone(),
        rows,
    })
}

/// Like [`run_sweep`], handing each row to `sink` as soon as its cell finishes.
pub fn run_sweep_streaming(spec: &SweepSpec, workers: usize, mut sink: impl FnMut(&SweepRow)) -> Result<()> {
    spec.validate()?;
    if workers == 0 {
        return Err(Error::precondition("worker count must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(format!("cannot start worker pool: {e}")))?;
    for &n in &spec.n_grid {
        let trials = spec.trials_for(n);
        for (ri, &rho) in spec.rho_grid.iter().enumerate() {
            let config = spec.cell_config(n, ri);
            let stats = pool.install(|| trial_statistics(&config, trials));
            for &gap in &spec.gaps {
                let row = match &stats {
                    Err(e) => failed_row(spec, n, rho, gap, trials, &e.to_string()),
                    Ok(stats) => cell_row(spec, &config, stats, gap, trials),
                };
                sink(&row);
            }
        }
    }
    Ok(())
}

fn cell_row(spec: &SweepSpec, config: &MarketConfig, stats: &[[f64; 3]], gap: GapPair, trials: u64) -> SweepRow {
    let est = gap_from_stats(config, stats, gap.from, gap.to);
    let prediction = predict_gap(
        config.setting(),
        gap.from,
        gap.to,
        &config.dist_q,
        &config.dist_phi,
        config.rho,
        config.n,
    )
    .ok();
    let normalizer = match spec.normalizer {
        NormalizerChoice::None => Some(1.0),
        NormalizerChoice::Theorem => prediction.as_ref().map(|p| p.normalizer),
    };
    SweepRow {
        setting: config.setting(),
        from: gap.from.short().to_string(),
        to: gap.to.short().to_string(),
        n: config.n,
        rho: config.rho,
        dist_q: config.dist_q.to_string(),
        dist_phi: config.dist_phi.to_string(),
        trials,
        delta: Some(est.delta),
        stderr: Some(est.stderr),
        paired: Some(est.paired),
        theorem_id: prediction.as_ref().map(|p| p.theorem_id.clone()).unwrap_or_default(),
        leading_value: prediction.as_ref().map(|p| p.leading_value),
        normalizer,
        predicted_gap: prediction.as_ref().map(|p| p.predicted_gap),
        normalized: normalizer.map(|z| exact_quotient(est.delta, z)),
        extrapolated: prediction.as_ref().map(|p| p.extrapolated),
        status: "ok".to_string(),
    }
}
