//! Distribution families for the common and idiosyncratic utility terms.
//!
//! Each family realizes its tail class with equality beyond a finite point:
//! the Pareto family has survival exactly `(c/x)^α` on `[c, ∞)`, and the
//! exponential family is a rate-λ exponential shifted by `ln(c)/λ`, so its
//! survival is exactly `c·e^{-λx}` on its support. That makes every limiting
//! constant attainable and gives closed-form order-statistic moments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::special::{harmonic, ln_gamma, ln_gamma_ratio};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
#[serde(try_from = "DistInput")]
pub enum DistSpec {
    /// Survival `(c/x)^α` for `x ≥ c`.
    Pareto { c: f64, alpha: f64 },
    /// `(ln c + E)/λ` with `E` standard exponential.
    Exponential { c: f64, lambda: f64 },
    Uniform { a: f64, b: f64 },
}

#[derive(Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
enum RawDistSpec {
    Pareto { c: f64, alpha: f64 },
    Exponential { c: f64, lambda: f64 },
    Uniform { a: f64, b: f64 },
}

// Config files may use either the tagged object or the compact `family:params` string.
#[derive(Deserialize)]
#[serde(untagged)]
enum DistInput {
    Compact(String),
    Tagged(RawDistSpec),
}

impl TryFrom<DistInput> for DistSpec {
    type Error = Error;

    fn try_from(input: DistInput) -> Result<Self> {
        match input {
            DistInput::Compact(text) => text.parse(),
            DistInput::Tagged(RawDistSpec::Pareto { c, alpha }) => DistSpec::pareto(c, alpha),
            DistInput::Tagged(RawDistSpec::Exponential { c, lambda }) => DistSpec::exponential(c, lambda),
            DistInput::Tagged(RawDistSpec::Uniform { a, b }) => DistSpec::uniform(a, b),
        }
    }
}

impl DistSpec {
    pub fn pareto(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("pareto scale must be positive, got {c}")));
        }
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "pareto exponent must exceed 1 for a finite mean, got {alpha}"
            )));
        }
        Ok(DistSpec::Pareto { c, alpha })
    }

    pub fn exponential(c: f64, lambda: f64) -> Result<Self> {
        if !(c >= 1.0) || !c.is_finite() {
            return Err(Error::domain(format!(
                "exponential tail coefficient must be at least 1, got {c}"
            )));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain(format!("exponential rate must be positive, got {lambda}")));
        }
        Ok(DistSpec::Exponential { c, lambda })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0) || !b.is_finite() || !(b > a) {
            return Err(Error::domain(format!("uniform needs 0 <= a < b < inf, got [{a}, {b}]")));
        }
        Ok(DistSpec::Uniform { a, b })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DistSpec::Pareto { .. } => "pareto",
            DistSpec::Exponential { .. } => "exponential",
            DistSpec::Uniform { .. } => "uniform",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Pareto { c, alpha } => c * alpha / (alpha - 1.0),
            DistSpec::Exponential { c, lambda } => (c.ln() + 1.0) / lambda,
            DistSpec::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    pub fn support_min(&self) -> f64 {
        match *self {
            DistSpec::Pareto { c, .. } => c,
            DistSpec::Exponential { c, lambda } => c.ln() / lambda,
            DistSpec::Uniform { a, .. } => a,
        }
    }

    pub fn support_max(&self) -> Option<f64> {
        match *self {
            DistSpec::Uniform { b, .. } => Some(b),
            _ => None,
        }
    }

    /// `P(X > x)`.
    pub fn tail_prob(&self, x: f64) -> f64 {
        if x < self.support_min() {
            return 1.0;
        }
        let s = match *self {
            DistSpec::Pareto { c, alpha } => (c / x).powf(alpha),
            DistSpec::Exponential { c, lambda } => c * (-lambda * x).exp(),
            DistSpec::Uniform { a, b } => (b - x) / (b - a),
        };
        s.clamp(0.0, 1.0)
    }

    /// Inverse of the survival function: the `x` with `P(X > x) = u`, for `u ∈ (0, 1]`.
    pub fn inverse_survival(&self, u: f64) -> f64 {
        match *self {
            DistSpec::Pareto { c, alpha } => c * (-u.ln() / alpha).exp(),
            DistSpec::Exponential { c, lambda } => (c.ln() - u.ln()) / lambda,
            DistSpec::Uniform { a, b } => b - (b - a) * u,
        }
    }

    /// One inverse-CDF draw.
    #[inline]
    pub fn sample_one(&self, stream: &mut RandomStream) -> f64 {
        self.inverse_survival(stream.uniform_open0())
    }

    pub fn sample(&self, stream: &mut RandomStream, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.sample_into(stream, &mut out);
        out
    }

    pub fn sample_into(&self, stream: &mut RandomStream, out: &mut [f64]) {
        for slot in out.iter_mut() {
            *slot = self.sample_one(stream);
        }
    }

    /// Exact `E[max of m i.i.d. draws]`; the max of zero draws is taken as 0.
    pub fn exact_max_moment(&self, m: u64) -> f64 {
        match *self {
            DistSpec::Pareto { c, alpha } if m > 0 => {
                let inv = 1.0 / alpha;
                let mf = m as f64;
                c * (ln_gamma(1.0 - inv) + ln_gamma_ratio(mf + 1.0, mf + 1.0 - inv)).exp()
            }
            _ => max_moment_with(self, m, ln_gamma),
        }
    }

    /// Pareto with `α ≤ 2`: the maximum (and per-trial averages) have infinite variance.
    pub fn is_heavy_tailed(&self) -> bool {
        matches!(*self, DistSpec::Pareto { alpha, .. } if alpha <= 2.0)
    }
}

/// Expected maximum with an injectable log-Gamma, so validation can be fault-tested.
pub fn max_moment_with(spec: &DistSpec, m: u64, ln_gamma: impl Fn(f64) -> f64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    match *spec {
        DistSpec::Pareto { c, alpha } => {
            let inv = 1.0 / alpha;
            c * (ln_gamma(1.0 - inv) + ln_gamma(mf + 1.0) - ln_gamma(mf + 1.0 - inv)).exp()
        }
        DistSpec::Exponential { c, lambda } => (c.ln() + harmonic(m)) / lambda,
        DistSpec::Uniform { a, b } => a + (b - a) * mf / (mf + 1.0),
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistSpec::Pareto { c, alpha } => write!(f, "pareto:{c},{alpha}"),
            DistSpec::Exponential { c, lambda } => write!(f, "exponential:{c},{lambda}"),
            DistSpec::Uniform { a, b } => write!(f, "uniform:{a},{b}"),
        }
    }
}

/// Parses `family:p1,p2`, e.g. `pareto:1,2`, `exponential:1,1`, `uniform:0,1`.
impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("expected family:params, got `{s}`")))?;
        let values = params
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::domain(format!("bad parameter in `{s}`: {e}")))?;
        let [p1, p2] = values[..] else {
            return Err(Error::domain(format!("expected two parameters in `{s}`")));
        };
        match family.trim().to_ascii_lowercase().as_str() {
            "pareto" => DistSpec::pareto(p1, p2),
            "exponential" | "exp" => DistSpec::exponential(p1, p2),
            "uniform" => DistSpec::uniform(p1, p2),
            other => Err(Error::domain(format!("unknown family `{other}`"))),
        }
    }
}
