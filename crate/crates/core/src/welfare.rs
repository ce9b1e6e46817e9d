//! Welfare and welfare-gap estimation from simulated trials.

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::{
    run_capacitated_trial, run_uncapacitated_trial, MarketConfig, Regime, SamplingMode, Setting,
};
use crate::special::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareEstimate {
    pub setting: Setting,
    pub regime: Regime,
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Set when a Pareto exponent ≤ 2 makes the per-trial variance infinite,
    /// so `stderr` understates the true uncertainty.
    pub heavy_tail_unreliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    pub from_regime: Regime,
    pub to_regime: Regime,
    pub delta: f64,
    pub stderr: f64,
    pub trials: u64,
    pub paired: bool,
    pub heavy_tail_unreliable: bool,
}

/// Mean and standard error with compensated accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

pub fn summarize(values: impl IntoIterator<Item = f64> + Clone) -> SampleSummary {
    let mut sum = NeumaierSum::default();
    let mut count = 0u64;
    for v in values.clone() {
        sum.add(v);
        count += 1;
    }
    if count == 0 {
        return SampleSummary {
            mean: f64::NAN,
            stderr: f64::NAN,
            count,
        };
    }
    let mean = sum.total() / count as f64;
    let mut ss = NeumaierSum::default();
    for v in values {
        let d = v - mean;
        ss.add(d * d);
    }
    let stderr = if count > 1 {
        (ss.total() / (count - 1) as f64 / count as f64).sqrt()
    } else {
        0.0
    };
    SampleSummary { mean, stderr, count }
}

fn heavy_tailed(config: &MarketConfig) -> bool {
    config.dist_q.is_heavy_tailed() || config.dist_phi.is_heavy_tailed()
}

/// Per-trial welfare statistic for each regime, in trial order.
///
/// Capacitated trials contribute the average utility over agents;
/// uncapacitated trials the single agent's utility. Trials run on the
/// current rayon pool; the result does not depend on its size.
pub fn trial_statistics(config: &MarketConfig, trials: u64) -> Result<Vec<[f64; 3]>> {
    config.validate()?;
    match config.setting() {
        Setting::Uncapacitated => (0..trials)
            .into_par_iter()
            .map(|t| run_uncapacitated_trial(config, t).map(|r| r.utility))
            .collect(),
        Setting::Capacitated => (0..trials)
            .into_par_iter()
            .map(|t| {
                run_capacitated_trial(config, t).map(|r| Regime::ALL.map(|g| r.average_utility(g)))
            })
            .collect(),
    }
}

/// Whether regimes share every random draw within a trial.
pub fn is_paired(config: &MarketConfig) -> bool {
    config.setting() == Setting::Uncapacitated || config.sampling_mode == SamplingMode::Upfront
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < 2 {
        return Err(Error::precondition("at least two trials are needed for a standard error"));
    }
    Ok(())
}

pub fn welfare_from_stats(config: &MarketConfig, stats: &[[f64; 3]]) -> [WelfareEstimate; 3] {
    let heavy = heavy_tailed(config);
    Regime::ALL.map(|regime| {
        let s = summarize(stats.iter().map(|r| r[regime.index()]));
        WelfareEstimate {
            setting: config.setting(),
            regime,
            mean: s.mean,
            stderr: s.stderr,
            trials: s.count,
            heavy_tail_unreliable: heavy,
        }
    })
}

pub fn gap_from_stats(config: &MarketConfig, stats: &[[f64; 3]], from: Regime, to: Regime) -> GapEstimate {
    let (f, t) = (from.index(), to.index());
    let paired = is_paired(config);
    let (delta, stderr) = if paired {
        let s = summarize(stats.iter().map(|r| r[t] - r[f]));
        (s.mean, s.stderr)
    } else {
        let a = summarize(stats.iter().map(|r| r[f]));
        let b = summarize(stats.iter().map(|r| r[t]));
        (b.mean - a.mean, a.stderr.hypot(b.stderr))
    };
    GapEstimate {
        from_regime: from,
        to_regime: to,
        delta,
        stderr,
        trials: stats.len() as u64,
        paired,
        heavy_tail_unreliable: heavy_tailed(config),
    }
}

/// Mean welfare of every regime, indexed by [`Regime::index`].
pub fn estimate_welfare(config: &MarketConfig, trials: u64) -> Result<[WelfareEstimate; 3]> {
    check_trials(trials)?;
    let stats = trial_statistics(config, trials)?;
    Ok(welfare_from_stats(config, &stats))
}

/// `AW(to) − AW(from)`, paired across regimes whenever they share draws.
pub fn estimate_gap(config: &MarketConfig, trials: u64, from: Regime, to: Regime) -> Result<GapEstimate> {
    check_trials(trials)?;
    if from == to {
        return Err(Error::precondition("gap endpoints must differ"));
    }
    let stats = trial_statistics(config, trials)?;
    Ok(gap_from_stats(config, &stats, from, to))
}

/// Closed-form welfare where one exists; `None` for full information.
pub fn analytic_welfare(setting: Setting, regime: Regime, config: &MarketConfig) -> Option<f64> {
    let rho = config.rho;
    let baseline = (1.0 - rho) * config.dist_q.mean() + rho * config.dist_phi.mean();
    match (setting, regime) {
        (_, Regime::NoInformation) => Some(baseline),
        (Setting::Capacitated, Regime::OnlyQuality) => Some(baseline),
        (Setting::Uncapacitated, Regime::OnlyQuality) => Some(
            (1.0 - rho) * config.dist_q.exact_max_moment(config.n as u64) + rho * config.dist_phi.mean(),
        ),
        (_, Regime::FullInformation) => None,
    }
}

/// Flat export row shared by welfare and gap estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub setting: Setting,
    pub quantity: String,
    pub n: usize,
    pub rho: f64,
    pub dist_q: String,
    pub dist_phi: String,
    pub trials: u64,
    pub value: f64,
    pub stderr: f64,
}

fn row(config: &MarketConfig, quantity: String, trials: u64, value: f64, stderr: f64) -> EstimateRow {
    EstimateRow {
        setting: config.setting(),
        quantity,
        n: config.n,
        rho: config.rho,
        dist_q: spec_label(&config.dist_q),
        dist_phi: spec_label(&config.dist_phi),
        trials,
        value,
        stderr,
    }
}

fn spec_label(spec: &DistSpec) -> String {
    spec.to_string()
}

impl WelfareEstimate {
    pub fn to_row(&self, config: &MarketConfig) -> EstimateRow {
        row(config, self.regime.short().to_string(), self.trials, self.mean, self.stderr)
    }
}

impl GapEstimate {
    pub fn to_row(&self, config: &MarketConfig) -> EstimateRow {
        let label = format!("{}->{}", self.from_regime.short(), self.to_regime.short());
        row(config, label, self.trials, self.delta, self.stderr)
    }
}
