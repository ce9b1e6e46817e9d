//! Closed-form limits, normalizers and bounds for the welfare gaps.

use serde::Serialize;

use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::{Regime, Setting};
use crate::special::{gamma, ln_gamma_ratio, NeumaierSum};

/// Limit constant and normalizer for one gap; `predicted_gap = leading_value × normalizer`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub theorem_id: String,
    pub leading_value: f64,
    pub normalizer: f64,
    pub predicted_gap: f64,
    /// The limit was derived for `ρ ∈ (0, 1)` and is continued to an endpoint.
    pub extrapolated: bool,
}

impl Prediction {
    fn new(theorem_id: &str, leading_value: f64, normalizer: f64) -> Self {
        Self {
            theorem_id: theorem_id.to_string(),
            leading_value,
            normalizer,
            predicted_gap: leading_value * normalizer,
            extrapolated: false,
        }
    }
}

/// Bracket for the capacitated personalization gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
    /// Average over agents of the expected best idiosyncratic draw among remaining items.
    pub phi_n: f64,
}

fn check_pareto(c: f64, alpha: f64, n: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) || !(alpha > 1.0 && alpha.is_finite()) || !(n >= 1.0) {
        return Err(Error::domain(format!(
            "need c > 0, alpha > 1, n >= 1 (got c = {c}, alpha = {alpha}, n = {n})"
        )));
    }
    Ok(())
}

/// `c·Γ(1−1/α)·n^{1/α}`, the leading-order expected maximum of `n` Pareto draws.
pub fn pareto_max_asymptote(c: f64, alpha: f64, n: f64) -> Result<f64> {
    check_pareto(c, alpha, n)?;
    Ok(c * gamma(1.0 - 1.0 / alpha) * n.powf(1.0 / alpha))
}

/// `c·Γ(1−1/α)·Γ(n+1)/Γ(n+1−1/α)`, the exact expected maximum of `n` Pareto draws.
pub fn pareto_max_finite_n(c: f64, alpha: f64, n: f64) -> Result<f64> {
    check_pareto(c, alpha, n)?;
    Ok(c * gamma(1.0 - 1.0 / alpha) * ln_gamma_ratio(n + 1.0, n + 1.0 - 1.0 / alpha).exp())
}

/// `ln(n)/λ`. `n` is real so normalizers can be evaluated anywhere.
pub fn exp_max_asymptote(lambda: f64, n: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(n >= 2.0) && n != std::f64::consts::E {
        return Err(Error::domain(format!("need lambda > 0 and n >= 2 (got {lambda}, {n})")));
    }
    Ok(n.ln() / lambda)
}

/// Pareto tail `(c_Z, α_Z)` of `(1−ρ)X + ρY` for independent Pareto-tailed `X`, `Y`.
pub fn combine_pareto_tails(rho: f64, cx: f64, alpha_x: f64, cy: f64, alpha_y: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::domain(format!("rho must lie strictly inside (0, 1), got {rho}")));
    }
    for (c, a) in [(cx, alpha_x), (cy, alpha_y)] {
        if !(c > 0.0 && c.is_finite()) || !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("invalid tail parameters ({c}, {a})")));
        }
    }
    Ok(if alpha_x < alpha_y {
        ((1.0 - rho) * cx, alpha_x)
    } else if alpha_x > alpha_y {
        (rho * cy, alpha_y)
    } else {
        (lp_norm((1.0 - rho) * cx, rho * cy, alpha_x), alpha_x)
    })
}

/// `(a^p + b^p)^{1/p}` for `a, b ≥ 0`, scaled to avoid overflow at large `p`.
fn lp_norm(a: f64, b: f64, p: f64) -> f64 {
    let m = a.max(b);
    if m == 0.0 {
        return 0.0;
    }
    m * ((a / m).powf(p) + (b / m).powf(p)).powf(1.0 / p)
}

/// `((1−ρ)^α + ρ^α)^{1/α} − (1−ρ)`.
pub fn g_function(rho: f64, alpha: f64) -> f64 {
    lp_norm(1.0 - rho, rho, alpha) - (1.0 - rho)
}

fn unsupported(what: impl Into<String>, nearest: &str) -> Error {
    Error::Unsupported {
        what: what.into(),
        nearest: nearest.to_string(),
    }
}

/// Leading-order prediction for `Δ_{from→to}` at finite `n`.
pub fn predict_gap(
    setting: Setting,
    from: Regime,
    to: Regime,
    dist_q: &DistSpec,
    dist_phi: &DistSpec,
    rho: f64,
    n: usize,
) -> Result<Prediction> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    if n == 0 {
        return Err(Error::domain("n must be positive"));
    }
    match (from, to) {
        (Regime::NoInformation, Regime::OnlyQuality) | (Regime::OnlyQuality, Regime::FullInformation) => {}
        (Regime::NoInformation, Regime::FullInformation) => {
            // the two steps share a normalizer in every covered case where this is asked
            let a = predict_gap(setting, from, Regime::OnlyQuality, dist_q, dist_phi, rho, n)?;
            let b = predict_gap(setting, Regime::OnlyQuality, to, dist_q, dist_phi, rho, n)?;
            let normalizer = b.normalizer;
            let total = a.predicted_gap + b.predicted_gap;
            return Ok(Prediction {
                theorem_id: format!("{}+{}", a.theorem_id, b.theorem_id),
                leading_value: total / normalizer,
                normalizer,
                predicted_gap: total,
                extrapolated: a.extrapolated || b.extrapolated,
            });
        }
        _ => {
            return Err(unsupported(
                format!("gap {from}->{to}"),
                "forward gaps none->quality, quality->full, none->full",
            ))
        }
    }
    let nf = n as f64;
    let rankings = from == Regime::NoInformation;
    match setting {
        Setting::Capacitated => {
            if rankings {
                let id = match dist_phi {
                    DistSpec::Uniform { .. } => "cap_bounded_rankings_zero",
                    _ => "cap_rankings_zero",
                };
                return Ok(Prediction::new(id, 0.0, 1.0));
            }
            match *dist_phi {
                DistSpec::Pareto { c, alpha } => {
                    let normalizer = alpha / (alpha + 1.0) * pareto_max_finite_n(c, alpha, nf)?;
                    Ok(Prediction::new("cap_pareto_personalization", rho, normalizer))
                }
                DistSpec::Exponential { lambda, .. } => {
                    let normalizer = exp_max_asymptote(lambda, nf)?;
                    Ok(Prediction::new("cap_exp_personalization", rho, normalizer))
                }
                DistSpec::Uniform { a, b } => match *dist_q {
                    DistSpec::Uniform { a: qa, b: qb } if qa == a && qb == b => Ok(Prediction::new(
                        "cap_bounded_personalization",
                        rho * (b - dist_phi.mean()),
                        1.0,
                    )),
                    _ => Err(unsupported(
                        "bounded idiosyncratic terms with a differently supported common term",
                        "cap_bounded_personalization (both terms on the same [a, b])",
                    )),
                },
            }
        }
        Setting::Uncapacitated => match (*dist_q, *dist_phi) {
            (DistSpec::Pareto { c: cq, alpha: aq }, DistSpec::Pareto { c: cp, alpha: ap }) => {
                if rankings {
                    let normalizer = pareto_max_asymptote(cq, aq, nf)?;
                    return Ok(Prediction::new("uncap_pareto_rankings", 1.0 - rho, normalizer));
                }
                if aq == ap {
                    let normalizer = pareto_max_asymptote(1.0, aq, nf)?;
                    let leading = lp_norm((1.0 - rho) * cq, rho * cp, aq) - (1.0 - rho) * cq;
                    Ok(Prediction::new("uncap_pareto_personalization_equal", leading, normalizer))
                } else {
                    let (c, a) = if aq < ap { (cq, aq) } else { (cp, ap) };
                    let normalizer = pareto_max_asymptote(c, a, nf)?;
                    let leading = if aq > ap { rho } else { 0.0 };
                    Ok(Prediction::new("uncap_pareto_personalization_unequal", leading, normalizer))
                }
            }
            (DistSpec::Exponential { lambda: lq, .. }, DistSpec::Exponential { lambda: lp, .. }) => {
                let mut p = if rankings {
                    Prediction::new("uncap_exp_rankings", 1.0 - rho, exp_max_asymptote(lq, nf)?)
                } else if lq == lp {
                    Prediction::new(
                        "uncap_exp_personalization",
                        (2.0 * rho - 1.0).max(0.0),
                        exp_max_asymptote(lq, nf)?,
                    )
                } else {
                    let base = (1.0 - rho) / lq;
                    Prediction::new(
                        "uncap_exp_personalization_unequal",
                        base.max(rho / lp) - base,
                        exp_max_asymptote(1.0, nf)?,
                    )
                };
                p.extrapolated = rho == 0.0 || rho == 1.0;
                Ok(p)
            }
            (q, phi) if std::mem::discriminant(&q) != std::mem::discriminant(&phi) => Err(unsupported(
                format!("uncapacitated {} common terms with {} idiosyncratic terms", q.family_name(), phi.family_name()),
                "uncap_pareto_* or uncap_exp_* with matching families",
            )),
            _ => Err(unsupported(
                "uncapacitated bounded distributions",
                "cap_bounded_personalization",
            )),
        },
    }
}

/// `Φₙ = n⁻¹ Σ_{k=1}^{n} E[max of k idiosyncratic draws]`.
pub fn phi_n(dist_phi: &DistSpec, n: usize) -> f64 {
    let mut acc = NeumaierSum::default();
    for k in 1..=n as u64 {
        acc.add(dist_phi.exact_max_moment(k));
    }
    acc.total() / n as f64
}

/// Lower and upper bounds on the capacitated personalization gap at finite `n`.
pub fn capacitated_gap_bounds(dist_q: &DistSpec, dist_phi: &DistSpec, rho: f64, n: usize) -> Result<GapBounds> {
    if !(0.0..=1.0).contains(&rho) || n == 0 {
        return Err(Error::domain(format!("need rho in [0, 1] and n >= 1 (got {rho}, {n})")));
    }
    let phi_n = phi_n(dist_phi, n);
    let mu_phi = dist_phi.mean();
    Ok(GapBounds {
        lower: rho * phi_n - ((1.0 - rho) * dist_q.mean() + rho * mu_phi),
        upper: rho * phi_n - rho * mu_phi,
        phi_n,
    })
}
