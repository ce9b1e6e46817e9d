//! The invariant and oracle suite behind the `validate` command.
//!
//! Every check yields an [`OracleReport`]; failures are data, never errors.

use std::fmt;
use std::str::FromStr;

use crate::asymptotics::{
    capacitated_gap_bounds, g_function, pareto_max_asymptote, pareto_max_finite_n, predict_gap,
};
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::{
    draw_instance, run_capacitated_trial, MarketConfig, PhiMatrix, PhiSource, Regime, Setting, Supply,
};
use crate::oracles::{
    brute_force_capacitated, crosscheck_sampling_modes, monte_carlo_max_moment, pareto_to_exponential_limit_check,
    quad_max_moment, simulate_fixed_instance, z_score, OracleReport,
};
use crate::rng::RandomStream;
use crate::special::gamma;
use crate::welfare::{estimate_welfare, gap_from_stats, trial_statistics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Dist,
    Market,
    Welfare,
    Asymptotics,
    Oracles,
}

impl Suite {
    const MODULES: [Suite; 5] = [Suite::Dist, Suite::Market, Suite::Welfare, Suite::Asymptotics, Suite::Oracles];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "dist" => Suite::Dist,
            "market" => Suite::Market,
            "welfare" => Suite::Welfare,
            "asymptotics" => Suite::Asymptotics,
            "oracles" => Suite::Oracles,
            other => return Err(Error::domain(format!("unknown validation suite `{other}`"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::All => "all",
            Suite::Dist => "dist",
            Suite::Market => "market",
            Suite::Welfare => "welfare",
            Suite::Asymptotics => "asymptotics",
            Suite::Oracles => "oracles",
        })
    }
}

type MaxMomentFn = dyn Fn(&DistSpec, u64) -> f64 + Send + Sync;

/// Replaceable closed forms, so the suite itself can be shown to catch a broken build.
pub struct ValidationHooks {
    pub max_moment: Box<MaxMomentFn>,
}

impl Default for ValidationHooks {
    fn default() -> Self {
        Self {
            max_moment: Box::new(|spec, m| spec.exact_max_moment(m)),
        }
    }
}

pub fn validate(suite: Suite) -> Vec<OracleReport> {
    validate_with(suite, &ValidationHooks::default())
}

pub fn validate_with(suite: Suite, hooks: &ValidationHooks) -> Vec<OracleReport> {
    match suite {
        Suite::All => Suite::MODULES.iter().flat_map(|&s| validate_with(s, hooks)).collect(),
        Suite::Dist => dist_suite(hooks),
        Suite::Market => market_suite(),
        Suite::Welfare => welfare_suite(hooks),
        Suite::Asymptotics => asymptotics_suite(hooks),
        Suite::Oracles => oracles_suite(),
    }
}

pub fn all_passed(reports: &[OracleReport]) -> bool {
    reports.iter().all(|r| r.pass)
}

fn families() -> [DistSpec; 3] {
    [
        DistSpec::Pareto { c: 1.0, alpha: 2.0 },
        DistSpec::Exponential { c: 1.0, lambda: 1.0 },
        DistSpec::Uniform { a: 0.0, b: 1.0 },
    ]
}

fn or_failed(name: &str, tolerance: f64, r: Result<OracleReport>) -> OracleReport {
    r.unwrap_or_else(|_| OracleReport::failed(name, tolerance))
}

fn flag(name: impl Into<String>, ok: bool) -> OracleReport {
    OracleReport::new(name, 1.0, if ok { 1.0 } else { 0.0 }, 0.5)
}

fn dist_suite(hooks: &ValidationHooks) -> Vec<OracleReport> {
    let mut out = Vec::new();
    for spec in families() {
        let fam = spec.family_name();
        for m in [1u64, 2, 10, 100, 1000] {
            let name = format!("max_moment_vs_quadrature_{fam}_m{m}");
            match quad_max_moment(&spec, m, 1e-10) {
                Ok(q) => out.push(OracleReport::new(name, q, (hooks.max_moment)(&spec, m), 1e-6 * q.abs())),
                Err(_) => out.push(OracleReport::failed(name, 1e-6)),
            }
        }
        out.push(OracleReport::new(
            format!("max_moment_of_one_is_mean_{fam}"),
            spec.mean(),
            (hooks.max_moment)(&spec, 1),
            1e-12 * spec.mean().abs().max(1.0),
        ));
        let increasing = (1..60).all(|m| (hooks.max_moment)(&spec, m + 1) > (hooks.max_moment)(&spec, m));
        out.push(flag(format!("max_moment_increasing_{fam}"), increasing));
        for (i, m) in [2u64, 10, 100].into_iter().enumerate() {
            let mc = monte_carlo_max_moment(&spec, m, 100_000, 0xD15 + i as u64);
            out.push(OracleReport::new(
                format!("max_moment_monte_carlo_{fam}_m{m}"),
                0.0,
                z_score(&mc, (hooks.max_moment)(&spec, m)),
                3.0,
            ));
        }
        let tail_ok = [0.0, spec.mean(), 10.0, 1e3]
            .windows(2)
            .all(|w| spec.tail_prob(w[0]) >= spec.tail_prob(w[1]));
        out.push(flag(format!("tail_nonincreasing_{fam}"), tail_ok && spec.tail_prob(0.0) == 1.0));
    }
    let p = DistSpec::Pareto { c: 1.5, alpha: 2.5 };
    let worst = [1.5, 2.0, 10.0, 1e4]
        .iter()
        .map(|&x| (p.tail_prob(x) / (1.5 / x).powf(2.5) - 1.0).abs())
        .fold(0.0, f64::max);
    out.push(OracleReport::new("pareto_tail_exact", 0.0, worst, 1e-12));
    out
}

fn market_suite() -> Vec<OracleReport> {
    let mut out = Vec::new();
    let pareto = DistSpec::Pareto { c: 1.0, alpha: 2.0 };
    let exp = DistSpec::Exponential { c: 1.0, lambda: 1.0 };
    for (n, dist, rho) in [(8, pareto, 0.5), (64, exp, 1.0)] {
        let cfg = MarketConfig::new(n, rho, Supply::CapacitatedUnit, dist, dist).with_seed(0x5A);
        let name = format!("sampling_modes_n{n}");
        out.push(or_failed(&name, 3.0, crosscheck_sampling_modes(&cfg, 10_000)));
    }

    let cfg = MarketConfig::new(30, 0.4, Supply::CapacitatedUnit, pareto, pareto).with_seed(0x5B);
    let mut invariant_ok = true;
    let mut certificate_ok = true;
    for t in 0..20 {
        let (Ok(trial), Ok(inst)) = (run_capacitated_trial(&cfg, t), draw_instance(&cfg, t)) else {
            invariant_ok = false;
            break;
        };
        let total: f64 = inst.q.iter().sum();
        for o in &trial.outcomes {
            let q_sum: f64 = o.assignment.iter().map(|&y| inst.q[y]).sum();
            invariant_ok &= (q_sum - total).abs() <= 1e-9 * total;
            invariant_ok &= (0..cfg.n).all(|k| o.utility[k] == o.q_component[k] + o.phi_component[k]);
        }
        if let PhiSource::Upfront(phi) = &inst.phi {
            let full = trial.outcome(Regime::FullInformation);
            let mut free = vec![true; cfg.n];
            for k in 0..cfg.n {
                for y in (0..cfg.n).filter(|&y| free[y]) {
                    certificate_ok &= full.utility[k] >= 0.6 * inst.q[y] + 0.4 * phi.get(k, y);
                }
                free[full.assignment[k]] = false;
            }
        }
    }
    out.push(flag("permutation_invariance_and_additivity", invariant_ok));
    out.push(flag("full_information_optimality_certificate", certificate_ok));

    let zero = MarketConfig::new(30, 0.0, Supply::CapacitatedUnit, pareto, pareto).with_seed(0x5C);
    let collapse = (0..10).all(|t| {
        run_capacitated_trial(&zero, t)
            .map(|r| r.outcome(Regime::OnlyQuality).assignment == r.outcome(Regime::FullInformation).assignment)
            .unwrap_or(false)
    });
    out.push(flag("rho_zero_collapse", collapse));
    out
}

fn welfare_suite(hooks: &ValidationHooks) -> Vec<OracleReport> {
    let mut out = Vec::new();
    let exp = DistSpec::Exponential { c: 1.0, lambda: 1.0 };
    let pareto3 = DistSpec::Pareto { c: 1.0, alpha: 3.0 };
    for (supply, dist) in [
        (Supply::Uncapacitated, pareto3),
        (Supply::Uncapacitated, exp),
        (Supply::CapacitatedUnit, exp),
    ] {
        let cfg = MarketConfig::new(20, 0.5, supply, dist, dist).with_seed(0x3E);
        let setting = cfg.setting();
        let Ok(est) = estimate_welfare(&cfg, 20_000) else {
            out.push(OracleReport::failed(format!("welfare_estimate_{setting}"), 3.0));
            continue;
        };
        let baseline = 0.5 * dist.mean() + 0.5 * dist.mean();
        let quality = match setting {
            Setting::Uncapacitated => 0.5 * (hooks.max_moment)(&dist, cfg.n as u64) + 0.5 * dist.mean(),
            Setting::Capacitated => baseline,
        };
        for (regime, value) in [(Regime::NoInformation, baseline), (Regime::OnlyQuality, quality)] {
            let e = est[regime.index()];
            let s = crate::welfare::SampleSummary {
                mean: e.mean,
                stderr: e.stderr,
                count: e.trials,
            };
            out.push(OracleReport::new(
                format!("analytic_welfare_{setting}_{}_{}", regime.short(), dist.family_name()),
                0.0,
                z_score(&s, value),
                3.0,
            ));
        }
        let monotone = est[0].mean <= est[1].mean + 3.0 * est[1].stderr && est[1].mean <= est[2].mean + 3.0 * est[2].stderr;
        out.push(flag(format!("information_monotonicity_{setting}_{}", dist.family_name()), monotone));
    }

    let cfg = MarketConfig::new(50, 0.7, Supply::CapacitatedUnit, exp, exp).with_seed(0x3F);
    match trial_statistics(&cfg, 2000) {
        Ok(stats) => {
            let g = gap_from_stats(&cfg, &stats, Regime::NoInformation, Regime::OnlyQuality);
            let s = crate::welfare::SampleSummary {
                mean: g.delta,
                stderr: g.stderr,
                count: g.trials,
            };
            out.push(OracleReport::new("capacitated_rankings_gap_zero", 0.0, z_score(&s, 0.0), 3.0));
            let a = gap_from_stats(&cfg, &stats, Regime::NoInformation, Regime::OnlyQuality).delta;
            let b = gap_from_stats(&cfg, &stats, Regime::OnlyQuality, Regime::FullInformation).delta;
            let c = gap_from_stats(&cfg, &stats, Regime::NoInformation, Regime::FullInformation).delta;
            out.push(OracleReport::new("gap_additivity", c, a + b, 1e-12 * c.abs().max(1.0)));
        }
        Err(_) => out.push(OracleReport::failed("capacitated_rankings_gap_zero", 3.0)),
    }
    out
}

fn asymptotics_suite(hooks: &ValidationHooks) -> Vec<OracleReport> {
    let mut out = Vec::new();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let value = |r: Result<f64>| r.unwrap_or(f64::NAN);
    out.push(OracleReport::new("pareto_asymptote_1_2_100", 10.0 * sqrt_pi, value(pareto_max_asymptote(1.0, 2.0, 100.0)), 1e-12));
    out.push(OracleReport::new("pareto_asymptote_2_5_1", 2.0 * gamma(0.8), value(pareto_max_asymptote(2.0, 5.0, 1.0)), 1e-12));
    for (c, alpha, n) in [(1.0, 2.0, 4u64), (2.0, 5.0, 100), (1.0, 1.5, 1000)] {
        let spec = DistSpec::Pareto { c, alpha };
        let closed = value(pareto_max_finite_n(c, alpha, n as f64));
        out.push(OracleReport::new(
            format!("pareto_finite_n_matches_max_moment_{alpha}_{n}"),
            (hooks.max_moment)(&spec, n),
            closed,
            1e-10 * closed.abs(),
        ));
    }
    let ratio = value(pareto_max_finite_n(1.0, 2.0, 1e6)) / value(pareto_max_asymptote(1.0, 2.0, 1e6));
    out.push(OracleReport::new("pareto_finite_n_over_asymptote_1e6", 1.0, ratio, 0.01));
    out.push(OracleReport::new("g_half_2", 0.5f64.sqrt() - 0.5, g_function(0.5, 2.0), 1e-15));
    let g_ok = [2.0, 5.0, 10.0, 64.0].windows(2).all(|w| {
        (1..20).all(|i| {
            let rho = i as f64 / 20.0;
            g_function(rho, w[1]) <= g_function(rho, w[0]) + 1e-15 && g_function(rho, w[0]) >= 0.0
        })
    });
    out.push(flag("g_nonincreasing_in_alpha", g_ok));

    for q in families() {
        for phi in families() {
            let zero = predict_gap(Setting::Capacitated, Regime::NoInformation, Regime::OnlyQuality, &q, &phi, 0.5, 100)
                .map(|p| p.predicted_gap)
                .unwrap_or(f64::NAN);
            out.push(OracleReport::new(
                format!("capacitated_rankings_prediction_{}_{}", q.family_name(), phi.family_name()),
                0.0,
                zero,
                0.0,
            ));
            let b = capacitated_gap_bounds(&q, &phi, 0.3, 100);
            let width = b.map(|b| b.upper - b.lower).unwrap_or(f64::NAN);
            out.push(OracleReport::new(
                format!("bounds_width_{}_{}", q.family_name(), phi.family_name()),
                0.7 * q.mean(),
                width,
                1e-9,
            ));
        }
    }
    let p = DistSpec::Pareto { c: 1.0, alpha: 2.0 };
    let tight = capacitated_gap_bounds(&p, &p, 1.0, 10_000)
        .ok()
        .zip(predict_gap(Setting::Capacitated, Regime::OnlyQuality, Regime::FullInformation, &p, &p, 1.0, 10_000).ok())
        .map(|(b, pr)| b.upper / pr.normalizer)
        .unwrap_or(f64::NAN);
    out.push(OracleReport::new("capacitated_pareto_bound_tightness_1e4", 1.0, tight, 0.05));
    match pareto_to_exponential_limit_check(1.0, &[1e2, 1e4, 1e6]) {
        Ok(reports) => out.extend(reports),
        Err(_) => out.push(OracleReport::failed("pareto_exp_limit", 0.1)),
    }
    out
}

fn oracles_suite() -> Vec<OracleReport> {
    let mut out = Vec::new();
    let mut stream = RandomStream::from_key(0x0B);
    let dist = DistSpec::Exponential { c: 1.0, lambda: 1.0 };
    for instance in 0..10 {
        let n = 2 + instance % 5;
        let q = dist.sample(&mut stream, n);
        let rows = (0..n).map(|_| dist.sample(&mut stream, n)).collect();
        let phi = PhiMatrix::from_rows(rows).expect("square");
        let rho = 0.1 + 0.08 * instance as f64;
        for regime in Regime::ALL {
            let name = format!("brute_force_vs_simulation_{instance}_{}", regime.short());
            match brute_force_capacitated(&q, &phi, rho, regime) {
                Ok(exact) => {
                    let mc = simulate_fixed_instance(&q, &phi, rho, regime, 4000, instance as u64);
                    out.push(OracleReport::new(name, 0.0, z_score(&mc, exact), 3.0));
                }
                Err(_) => out.push(OracleReport::failed(name, 3.0)),
            }
        }
    }
    let mut pi = [0usize, 1, 2, 3, 4];
    let q = dist.sample(&mut stream, 5);
    let rows: Vec<Vec<f64>> = (0..5).map(|_| dist.sample(&mut stream, 5)).collect();
    stream.shuffle(&mut pi);
    let q_perm: Vec<f64> = pi.iter().map(|&j| q[j]).collect();
    let rows_perm: Vec<Vec<f64>> = rows.iter().map(|r| pi.iter().map(|&j| r[j]).collect()).collect();
    let phi = PhiMatrix::from_rows(rows).expect("square");
    let phi_perm = PhiMatrix::from_rows(rows_perm).expect("square");
    for regime in Regime::ALL {
        let a = brute_force_capacitated(&q, &phi, 0.5, regime).unwrap_or(f64::NAN);
        let b = brute_force_capacitated(&q_perm, &phi_perm, 0.5, regime).unwrap_or(f64::NAN);
        out.push(OracleReport::new(format!("brute_force_relabeling_{}", regime.short()), a, b, 1e-12 * a.abs()));
    }
    out
}
