//! Figure-reproduction presets with their published reference coordinates.

use std::collections::BTreeMap;

use serde::Serialize;

use super::reference_data::*;
use super::sweep::{default_rho_grid, run_sweep, GapPair, SweepSpec, SweepTable};
use crate::asymptotics::{capacitated_gap_bounds, g_function};
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::market::Supply;

pub const PRESET_IDS: [&str; 12] = [
    "uncap-pareto-a",
    "uncap-pareto-g",
    "uncap-pareto-b-alpha2",
    "uncap-pareto-b-alpha5",
    "uncap-exp-a",
    "uncap-exp-b",
    "cap-pareto-a",
    "cap-pareto-b",
    "cap-exp-a",
    "cap-exp-b",
    "bounded-a",
    "bounded-b",
];

/// Plotted points of one curve at a fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSeries {
    pub n: usize,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigurePreset {
    pub id: String,
    pub description: String,
    /// `None` for purely analytic panels.
    pub spec: Option<SweepSpec>,
    pub gap: Option<GapPair>,
    pub reference: Vec<ReferenceSeries>,
}

fn series(n: usize, points: &[(f64, f64)]) -> ReferenceSeries {
    ReferenceSeries {
        n,
        points: points.to_vec(),
    }
}

struct Panel {
    supply: Supply,
    dist: DistSpec,
    gap: GapPair,
    n_grid: Vec<usize>,
    trials: u64,
    trials_by_n: &'static [(usize, u64)],
}

fn build(id: &str, description: &str, panel: Panel, reference: Vec<ReferenceSeries>) -> FigurePreset {
    let mut spec = SweepSpec::new(panel.supply, panel.dist, panel.dist, panel.n_grid, panel.trials);
    spec.gaps = vec![panel.gap];
    spec.trials_by_n = panel.trials_by_n.iter().copied().collect::<BTreeMap<_, _>>();
    FigurePreset {
        id: id.to_string(),
        description: description.to_string(),
        spec: Some(spec),
        gap: Some(panel.gap),
        reference,
    }
}

/// Default trial budgets: 2000 per capacitated cell at n = 100; 10⁵ per
/// single-agent cell at n = 100, scaled down where n makes trials expensive.
pub fn preset(id: &str) -> Result<FigurePreset> {
    let pareto2 = DistSpec::pareto(1.0, 2.0)?;
    let pareto5 = DistSpec::pareto(1.0, 5.0)?;
    let exp1 = DistSpec::exponential(1.0, 1.0)?;
    let unif = DistSpec::uniform(0.0, 1.0)?;
    let uncap = |dist, gap, n_grid, trials, trials_by_n| Panel {
        supply: Supply::Uncapacitated,
        dist,
        gap,
        n_grid,
        trials,
        trials_by_n,
    };
    let cap = |dist, gap| Panel {
        supply: Supply::CapacitatedUnit,
        dist,
        gap,
        n_grid: vec![100],
        trials: 2000,
        trials_by_n: &[],
    };
    let rankings = GapPair::RANKINGS;
    let personal = GapPair::PERSONALIZATION;
    Ok(match id {
        "uncap-pareto-a" => build(
            id,
            "single agent, Pareto(1, 2) terms: rankings gain / (c Γ(1-1/α) n^(1/α))",
            uncap(pareto2, rankings, vec![100], 100_000, &[]),
            vec![series(100, &UNCAP_PARETO_A_N100)],
        ),
        "uncap-pareto-g" => FigurePreset {
            id: id.to_string(),
            description: "limit constant g(rho; alpha) for alpha in {2, 5, 10} and the alpha -> infinity limit".to_string(),
            spec: None,
            gap: None,
            reference: Vec::new(),
        },
        "uncap-pareto-b-alpha2" => build(
            id,
            "single agent, Pareto(1, 2) terms: personalization gain / (Γ(1-1/α) n^(1/α))",
            uncap(pareto2, personal, vec![100, 1000], 100_000, &[(1000, 20_000)]),
            vec![series(100, &UNCAP_ALPHA2_N100), series(1000, &UNCAP_ALPHA2_N1000)],
        ),
        "uncap-pareto-b-alpha5" => build(
            id,
            "single agent, Pareto(1, 5) terms: personalization gain / (Γ(1-1/α) n^(1/α))",
            uncap(
                pareto5,
                personal,
                vec![1000, 10_000, 100_000],
                5000,
                &[(10_000, 2000), (100_000, 1000)],
            ),
            vec![
                series(1000, &UNCAP_ALPHA5_N1000),
                series(10_000, &UNCAP_ALPHA5_N10000),
                series(100_000, &UNCAP_ALPHA5_N100000),
            ],
        ),
        "uncap-exp-a" => build(
            id,
            "single agent, Exp(1) terms: rankings gain / ln n",
            uncap(exp1, rankings, vec![100], 100_000, &[]),
            vec![series(100, &UNCAP_EXP_A_N100)],
        ),
        "uncap-exp-b" => build(
            id,
            "single agent, Exp(1) terms: personalization gain / ln n",
            uncap(exp1, personal, vec![100], 100_000, &[]),
            vec![series(100, &UNCAP_EXP_B_N100)],
        ),
        "cap-pareto-a" => build(
            id,
            "unit capacities, Pareto(1, 2) terms: raw rankings gain",
            cap(pareto2, rankings),
            vec![series(100, &CAP_PARETO_A_N100)],
        ),
        "cap-pareto-b" => build(
            id,
            "unit capacities, Pareto(1, 2) terms: personalization gain / (C Γ(n+1)/Γ(n+1-1/α))",
            cap(pareto2, personal),
            vec![series(100, &CAP_PARETO_B_N100)],
        ),
        "cap-exp-a" => build(
            id,
            "unit capacities, Exp(1) terms: raw rankings gain",
            cap(exp1, rankings),
            vec![series(100, &CAP_EXP_A_N100)],
        ),
        "cap-exp-b" => build(
            id,
            "unit capacities, Exp(1) terms: personalization gain / ln n",
            cap(exp1, personal),
            vec![series(100, &CAP_EXP_B_N100)],
        ),
        "bounded-a" => build(
            id,
            "unit capacities, Uniform[0, 1] terms: raw rankings gain",
            cap(unif, rankings),
            vec![series(100, &BOUNDED_A_N100)],
        ),
        "bounded-b" => build(
            id,
            "unit capacities, Uniform[0, 1] terms: raw personalization gain",
            cap(unif, personal),
            vec![series(100, &BOUNDED_B_N100)],
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub n: usize,
    pub rho: f64,
    pub reference: f64,
    pub simulated: Option<f64>,
    pub abs_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub label: String,
    pub n: Option<usize>,
    pub rho: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureReport {
    pub preset_id: String,
    pub table: Option<SweepTable>,
    pub comparisons: Vec<Comparison>,
    pub theory: Vec<CurvePoint>,
    /// Largest |simulated − reference| over the plotted points.
    pub max_abs_deviation: Option<f64>,
}

/// Runs a preset and joins the simulation with its reference points and theory curves.
pub fn reproduce_figure(id: &str, trials_override: Option<u64>, workers: usize) -> Result<FigureReport> {
    let preset = preset(id)?;
    let Some(mut spec) = preset.spec.clone() else {
        return Ok(FigureReport {
            preset_id: preset.id,
            table: None,
            comparisons: Vec::new(),
            theory: g_curves(),
            max_abs_deviation: None,
        });
    };
    if let Some(t) = trials_override {
        spec.trials = t;
        spec.trials_by_n.clear();
    }
    let table = run_sweep(&spec, workers)?;
    Ok(figure_report(&preset, table))
}

/// Joins an already computed table with a preset's references.
pub fn figure_report(preset: &FigurePreset, table: SweepTable) -> FigureReport {
    let gap = preset.gap.expect("simulated presets have a gap");
    let mut comparisons = Vec::new();
    for s in &preset.reference {
        for &(rho, reference) in &s.points {
            let simulated = table.find(s.n, rho, gap).and_then(|r| r.normalized);
            comparisons.push(Comparison {
                n: s.n,
                rho,
                reference,
                simulated,
                abs_deviation: simulated.map(|v| (v - reference).abs()),
            });
        }
    }
    let mut theory: Vec<CurvePoint> = table
        .rows
        .iter()
        .filter_map(|r| {
            r.leading_value.map(|v| CurvePoint {
                label: "limit".to_string(),
                n: Some(r.n),
                rho: r.rho,
                value: v,
            })
        })
        .collect();
    if preset.id == "bounded-b" {
        for &n in &table.spec.n_grid {
            for &rho in &table.spec.rho_grid {
                if let Ok(b) = capacitated_gap_bounds(&table.spec.dist_q, &table.spec.dist_phi, rho, n) {
                    for (label, value) in [("lower bound", b.lower), ("upper bound", b.upper)] {
                        theory.push(CurvePoint {
                            label: label.to_string(),
                            n: Some(n),
                            rho,
                            value,
                        });
                    }
                }
            }
        }
    }
    let max_abs_deviation = comparisons
        .iter()
        .filter_map(|c| c.abs_deviation)
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
    FigureReport {
        preset_id: preset.id.clone(),
        table: Some(table),
        comparisons,
        theory,
        max_abs_deviation,
    }
}

fn g_curves() -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for alpha in [2.0, 5.0, 10.0] {
        for rho in default_rho_grid() {
            out.push(CurvePoint {
                label: format!("alpha={alpha}"),
                n: None,
                rho,
                value: g_function(rho, alpha),
            });
        }
    }
    for rho in default_rho_grid() {
        out.push(CurvePoint {
            label: "alpha=inf".to_string(),
            n: None,
            rho,
            value: (2.0 * rho - 1.0).max(0.0),
        });
    }
    out
}
