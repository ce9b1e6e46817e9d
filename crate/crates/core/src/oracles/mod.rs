//! Independent numerical ground truth for the closed forms and the simulator.

mod brute;
mod quadrature;

pub use brute::{brute_force_capacitated, BRUTE_FORCE_MAX_N};
pub use quadrature::{integrate, quad_max_moment, quad_max_moment_with, DEFAULT_MAX_SUBDIVISIONS};

use serde::{Deserialize, Serialize};

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::{allocate, MarketConfig, PhiAccess, PhiMatrix, Regime, SamplingMode, Setting};
use crate::rng::{derive, RandomStream};
use crate::special::ln_gamma_ratio;
use crate::welfare::{estimate_welfare, summarize, SampleSummary};

/// Outcome of one reference-vs-tested comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub reference_value: f64,
    pub tested_value: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, reference_value: f64, tested_value: f64, tolerance: f64) -> Self {
        let abs_error = (tested_value - reference_value).abs();
        Self {
            name: name.into(),
            reference_value,
            tested_value,
            abs_error,
            tolerance,
            // NaN never passes
            pass: abs_error <= tolerance,
        }
    }

    /// A report for a check that could not be evaluated.
    pub fn failed(name: impl Into<String>, tolerance: f64) -> Self {
        Self::new(name, 0.0, f64::NAN, tolerance)
    }
}

/// Compares full-information capacitated welfare under upfront and deferred
/// sampling; the tested value is `|z|` and must stay below 3.
pub fn crosscheck_sampling_modes(config: &MarketConfig, trials: u64) -> Result<OracleReport> {
    if config.setting() != Setting::Capacitated {
        return Err(Error::precondition("sampling-mode crosscheck needs a capacitated config"));
    }
    if trials < 1000 {
        return Err(Error::precondition("sampling-mode crosscheck needs at least 1000 trials"));
    }
    let full = Regime::FullInformation.index();
    let upfront = estimate_welfare(&config.clone().with_mode(SamplingMode::Upfront), trials)?[full];
    let deferred = estimate_welfare(&config.clone().with_mode(SamplingMode::Deferred), trials)?[full];
    let diff = upfront.mean - deferred.mean;
    let se = upfront.stderr.hypot(deferred.stderr);
    let z = if diff == 0.0 { 0.0 } else { diff / se };
    Ok(OracleReport::new(
        format!("sampling_modes_n{}_rho{}", config.n, config.rho),
        0.0,
        z.abs(),
        3.0,
    ))
}

/// Capacitated-Pareto normalizer with `α = ln n`, `c = ln n / λ`, divided by
/// `ln n / λ`. The Gamma ratio then tends to `n^{1/ln n} = e`, so the ratio
/// is reported relative to `e`; it should sit within 0.1 of 1.
pub fn pareto_to_exponential_limit_check(lambda: f64, n_grid: &[f64]) -> Result<Vec<OracleReport>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("lambda must be positive, got {lambda}")));
    }
    if n_grid.windows(2).any(|w| !(w[0] < w[1])) || n_grid.iter().any(|&n| !(n > std::f64::consts::E)) {
        return Err(Error::precondition("n grid must be ascending with every n > e"));
    }
    Ok(n_grid
        .iter()
        .map(|&n| {
            let ratio = pareto_exponential_ratio(lambda, n);
            OracleReport::new(format!("pareto_exp_limit_n{n:e}"), 1.0, ratio / std::f64::consts::E, 0.1)
        })
        .collect())
}

/// The Pareto normalizer at `α = ln n`, `c = ln n/λ`, over `ln n/λ`.
pub fn pareto_exponential_ratio(lambda: f64, n: f64) -> f64 {
    let alpha = n.ln();
    let c = alpha / lambda;
    let normalizer =
        c * alpha / (alpha + 1.0) * crate::special::gamma(1.0 - 1.0 / alpha) * ln_gamma_ratio(n + 1.0, n + 1.0 - 1.0 / alpha).exp();
    normalizer / (alpha / lambda)
}

/// Empirical mean of the maximum of `m` draws over `samples` repetitions.
pub fn monte_carlo_max_moment(spec: &DistSpec, m: u64, samples: u64, seed: u64) -> SampleSummary {
    let mut stream = RandomStream::from_key(seed);
    let maxima: Vec<f64> = (0..samples)
        .map(|_| (0..m).map(|_| spec.sample_one(&mut stream)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    summarize(maxima.iter().copied())
}

/// Average welfare of the simulator on a fixed unit-capacity instance,
/// repeated over `samples` independent draws of the regime's own randomness.
pub fn simulate_fixed_instance(
    q: &[f64],
    phi: &PhiMatrix,
    rho: f64,
    regime: Regime,
    samples: u64,
    seed: u64,
) -> SampleSummary {
    let values: Vec<f64> = (0..samples)
        .map(|s| {
            let mut choice = RandomStream::from_key(derive(seed, s));
            allocate(regime, rho, q.len(), q, None, PhiAccess::Matrix(phi), &mut choice).average_utility()
        })
        .collect();
    summarize(values.iter().copied())
}

/// `|mean − reference| / stderr`; agreement to rounding error counts as zero,
/// which matters for deterministic regimes whose stderr is exactly 0.
pub fn z_score(summary: &SampleSummary, reference: f64) -> f64 {
    let diff = summary.mean - reference;
    if diff.abs() <= 1e-12 * reference.abs().max(1.0) {
        0.0
    } else {
        (diff / summary.stderr).abs()
    }
}
