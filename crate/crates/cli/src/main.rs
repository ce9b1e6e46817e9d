use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use infomarket::asymptotics::{capacitated_gap_bounds, predict_gap};
use infomarket::experiment::output::{emit, with_output, write_json, Format};
use infomarket::experiment::sweep::{run_sweep_streaming, SweepRow};
use infomarket::experiment::validate::all_passed;
use infomarket::experiment::{reproduce_figure, validate, GapPair, NormalizerChoice, Suite, SweepSpec, SweepTable};
use infomarket::oracles::{
    brute_force_capacitated, crosscheck_sampling_modes, pareto_to_exponential_limit_check, quad_max_moment,
    OracleReport,
};
use infomarket::market::PhiMatrix;
use infomarket::welfare::{gap_from_stats, trial_statistics, welfare_from_stats, EstimateRow};
use infomarket::{DistSpec, Error, MarketConfig, Regime, SamplingMode, Setting, Supply};

#[derive(Parser)]
#[command(name = "infomarket", version, about = "Information regimes in matching markets: simulation and asymptotics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-regime welfare (or gaps) for one market.
    Simulate(SimulateArgs),
    /// Run a grid of (n, rho) cells and emit one row per cell and gap.
    Sweep(SweepArgs),
    /// Reproduce a published figure from its preset.
    Figure(FigureArgs),
    /// Evaluate closed-form predictions and bounds only.
    Predict(PredictArgs),
    /// Run the invariant and oracle suite; exits 2 on any failure.
    Validate(ValidateArgs),
    /// Run a single numerical oracle.
    Oracle {
        #[command(subcommand)]
        oracle: OracleCommand,
    },
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: Format,
}

#[derive(Args)]
struct MarketArgs {
    #[arg(long, default_value = "cap", value_parser = parse_setting)]
    setting: Setting,
    /// File with per-item capacities (JSON array or whitespace/comma separated).
    #[arg(long)]
    capacities: Option<PathBuf>,
    #[arg(long = "dist-q", default_value = "pareto:1,2", value_parser = parse_dist)]
    dist_q: DistSpec,
    #[arg(long = "dist-phi", default_value = "pareto:1,2", value_parser = parse_dist)]
    dist_phi: DistSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "upfront", value_parser = parse_mode)]
    mode: SamplingMode,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value_t = 2000)]
    trials: u64,
    /// Report only this regime's welfare.
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Report gaps instead of welfare, e.g. `none:quality`.
    #[arg(long, value_delimiter = ',', value_parser = parse_gap)]
    gap: Vec<GapPair>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep description; flags given explicitly override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long, value_parser = parse_setting)]
    setting: Option<Setting>,
    #[arg(long)]
    capacities: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = parse_gap)]
    gap: Vec<GapPair>,
    #[arg(long = "dist-q", value_parser = parse_dist)]
    dist_q: Option<DistSpec>,
    #[arg(long = "dist-phi", value_parser = parse_dist)]
    dist_phi: Option<DistSpec>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SamplingMode>,
    #[arg(long, value_parser = parse_normalizer)]
    normalizer: Option<NormalizerChoice>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct FigureArgs {
    preset: String,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, default_value = "cap", value_parser = parse_setting)]
    setting: Setting,
    #[arg(long, value_delimiter = ',', value_parser = parse_gap, default_value = "quality:full")]
    gap: Vec<GapPair>,
    #[arg(long = "dist-q", default_value = "pareto:1,2", value_parser = parse_dist)]
    dist_q: DistSpec,
    #[arg(long = "dist-phi", default_value = "pareto:1,2", value_parser = parse_dist)]
    dist_phi: DistSpec,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    rho: Vec<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(default_value = "all", value_parser = parse_suite)]
    suite: Suite,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: Format,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Expected maximum of m draws by adaptive quadrature, next to the closed form.
    Quad {
        #[arg(long, value_parser = parse_dist)]
        dist: DistSpec,
        #[arg(long)]
        m: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Exact expected welfare of a small instance read from JSON `{q, phi, rho, regime}`.
    Brute {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Upfront versus deferred full-information welfare (|z| must stay below 3).
    Crosscheck {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long = "dist-q", default_value = "pareto:1,2", value_parser = parse_dist)]
        dist_q: DistSpec,
        #[arg(long = "dist-phi", default_value = "pareto:1,2", value_parser = parse_dist)]
        dist_phi: DistSpec,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pareto normalizer with alpha = ln n against ln n / lambda.
    Limit {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long = "n", value_delimiter = ',', default_value = "100,10000,1000000")]
        n_grid: Vec<f64>,
    },
}

fn parse_dist(s: &str) -> Result<DistSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_mode(s: &str) -> Result<SamplingMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_gap(s: &str) -> Result<GapPair, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}
fn parse_normalizer(s: &str) -> Result<NormalizerChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Validation,
    Resource(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Resource(_) | Error::Convergence { .. } => Failure::Resource(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::Figure(a) => figure(a),
        Command::Predict(a) => predict(a),
        Command::Validate(a) => run_validate(a),
        Command::Oracle { oracle } => run_oracle(oracle),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation) => ExitCode::from(2),
        Err(Failure::Resource(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn read_capacities(path: &Path) -> Result<Vec<u32>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Ok(v) = serde_json::from_str::<Vec<u32>>(&text) {
        return Ok(v);
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u32>().map_err(|_| Failure::Usage(format!("bad capacity `{t}` in {}", path.display()))))
        .collect()
}

fn supply_for(setting: Setting, capacities: Option<&Path>) -> Result<Supply, Failure> {
    match (setting, capacities) {
        (_, Some(path)) => Ok(Supply::CapacitatedGeneral {
            capacities: read_capacities(path)?,
        }),
        (Setting::Uncapacitated, None) => Ok(Supply::Uncapacitated),
        (Setting::Capacitated, None) => Ok(Supply::CapacitatedUnit),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Failure::Resource(e.to_string()))
}

#[derive(Serialize)]
struct SimulateDocument<'a> {
    config: &'a MarketConfig,
    rows: &'a [EstimateRow],
}

fn simulate(a: SimulateArgs) -> CliResult {
    let supply = supply_for(a.market.setting, a.market.capacities.as_deref())?;
    let n = match &supply {
        Supply::CapacitatedGeneral { capacities } if a.n == 100 => capacities.iter().map(|&c| c as usize).sum(),
        _ => a.n,
    };
    let config = MarketConfig::new(n, a.rho, supply, a.market.dist_q, a.market.dist_phi)
        .with_mode(a.market.mode)
        .with_seed(a.market.seed);
    if a.trials < 2 {
        return Err(Failure::Usage("--trials must be at least 2".into()));
    }
    let stats = pool(a.market.workers.unwrap_or_else(default_workers))?.install(|| trial_statistics(&config, a.trials))?;
    let rows: Vec<EstimateRow> = if a.gap.is_empty() {
        welfare_from_stats(&config, &stats)
            .iter()
            .filter(|w| a.regime.is_none_or(|r| r == w.regime))
            .map(|w| w.to_row(&config))
            .collect()
    } else {
        a.gap
            .iter()
            .map(|g| gap_from_stats(&config, &stats, g.from, g.to).to_row(&config))
            .collect()
    };
    let doc = SimulateDocument { config: &config, rows: &rows };
    emit(&rows, &doc, a.output.format, a.output.out.as_deref())?;
    Ok(())
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec, Failure> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<SweepSpec>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let p = DistSpec::pareto(1.0, 2.0)?;
            SweepSpec::new(Supply::CapacitatedUnit, p, p, vec![100], 2000)
        }
    };
    if a.setting.is_some() || a.capacities.is_some() {
        let setting = a.setting.unwrap_or(Setting::Capacitated);
        spec.supply = supply_for(setting, a.capacities.as_deref())?;
    }
    if !a.n.is_empty() {
        spec.n_grid = a.n.clone();
    }
    if !a.rho.is_empty() {
        spec.rho_grid = a.rho.clone();
    }
    if !a.gap.is_empty() {
        spec.gaps = a.gap.clone();
    }
    if let Some(d) = a.dist_q {
        spec.dist_q = d;
    }
    if let Some(d) = a.dist_phi {
        spec.dist_phi = d;
    }
    if let Some(t) = a.trials {
        spec.trials = t;
        spec.trials_by_n.clear();
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    if let Some(m) = a.mode {
        spec.sampling_mode = m;
    }
    if let Some(z) = a.normalizer {
        spec.normalizer = z;
    }
    spec.validate()?;
    Ok(spec)
}

fn sweep(a: SweepArgs) -> CliResult {
    let spec = sweep_spec(&a)?;
    let workers = a.workers.unwrap_or_else(default_workers);
    let mut rows: Vec<SweepRow> = Vec::with_capacity(spec.row_count());
    match a.output.format {
        Format::Csv => {
            // rows are flushed cell by cell so an interrupted sweep leaves a usable prefix
            with_output(a.output.out.as_deref(), |w| {
                let mut writer = csv::Writer::from_writer(w);
                let mut failure = None;
                run_sweep_streaming(&spec, workers, |row| {
                    if failure.is_none() {
                        failure = writer.serialize(row).and_then(|_| Ok(writer.flush()?)).err();
                    }
                    rows.push(row.clone());
                })?;
                match failure {
                    Some(e) => Err(e.into()),
                    None => Ok(()),
                }
            })?;
        }
        Format::Json => {
            run_sweep_streaming(&spec, workers, |row| rows.push(row.clone()))?;
            let table = SweepTable { spec: spec.clone(), rows };
            with_output(a.output.out.as_deref(), |w| write_json(&table, w))?;
            rows = table.rows;
        }
    }
    report_failed_rows(&rows)
}

fn report_failed_rows(rows: &[SweepRow]) -> CliResult {
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| !r.is_ok()).collect();
    if let Some(first) = failed.first() {
        return Err(Failure::Resource(format!("{} of {} rows failed; first: {}", failed.len(), rows.len(), first.status)));
    }
    Ok(())
}

fn figure(a: FigureArgs) -> CliResult {
    let report = reproduce_figure(&a.preset, a.trials, a.workers.unwrap_or_else(default_workers))?;
    match a.output.format {
        Format::Csv => {
            if let Some(table) = &report.table {
                emit(&table.rows, &report, Format::Csv, a.output.out.as_deref())?;
            } else {
                emit(&report.theory, &report, Format::Csv, a.output.out.as_deref())?;
            }
        }
        Format::Json => emit::<SweepRow, _>(&[], &report, Format::Json, a.output.out.as_deref())?,
    }
    if let Some(d) = report.max_abs_deviation {
        eprintln!("{}: max |simulated - reference| = {d:.4}", report.preset_id);
    }
    match &report.table {
        Some(t) => report_failed_rows(&t.rows),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct PredictRow {
    setting: Setting,
    from: &'static str,
    to: &'static str,
    n: usize,
    rho: f64,
    theorem_id: String,
    leading_value: Option<f64>,
    normalizer: Option<f64>,
    predicted_gap: Option<f64>,
    extrapolated: Option<bool>,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
    phi_n: Option<f64>,
    note: String,
}

fn predict(a: PredictArgs) -> CliResult {
    let mut rows = Vec::new();
    for &n in &a.n {
        for &rho in &a.rho {
            for g in &a.gap {
                let bounds = (a.setting == Setting::Capacitated && *g == GapPair::PERSONALIZATION)
                    .then(|| capacitated_gap_bounds(&a.dist_q, &a.dist_phi, rho, n).ok())
                    .flatten();
                let pred = predict_gap(a.setting, g.from, g.to, &a.dist_q, &a.dist_phi, rho, n);
                let note = match &pred {
                    Err(e @ Error::Unsupported { .. }) => e.to_string(),
                    Err(e) => return Err(e.clone_message().into()),
                    Ok(_) => String::new(),
                };
                let pred = pred.ok();
                rows.push(PredictRow {
                    setting: a.setting,
                    from: g.from.short(),
                    to: g.to.short(),
                    n,
                    rho,
                    theorem_id: pred.as_ref().map(|p| p.theorem_id.clone()).unwrap_or_default(),
                    leading_value: pred.as_ref().map(|p| p.leading_value),
                    normalizer: pred.as_ref().map(|p| p.normalizer),
                    predicted_gap: pred.as_ref().map(|p| p.predicted_gap),
                    extrapolated: pred.as_ref().map(|p| p.extrapolated),
                    lower_bound: bounds.map(|b| b.lower),
                    upper_bound: bounds.map(|b| b.upper),
                    phi_n: bounds.map(|b| b.phi_n),
                    note,
                });
            }
        }
    }
    emit(&rows, &rows, a.output.format, a.output.out.as_deref())?;
    Ok(())
}

trait CloneMessage {
    fn clone_message(&self) -> Error;
}

impl CloneMessage for Error {
    fn clone_message(&self) -> Error {
        Error::Domain(self.to_string())
    }
}

fn run_validate(a: ValidateArgs) -> CliResult {
    let reports = validate(a.suite);
    emit(&reports, &reports, a.format, a.out.as_deref())?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    eprintln!("{}: {} checks, {} failed", a.suite, reports.len(), failed);
    if all_passed(&reports) {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

#[derive(serde::Deserialize)]
struct BruteInstance {
    q: Vec<f64>,
    phi: Vec<Vec<f64>>,
    rho: f64,
    regime: String,
}

fn print_reports(reports: &[OracleReport]) -> CliResult {
    with_output(None, |w| write_json(reports, w))?;
    if all_passed(reports) {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn run_oracle(cmd: OracleCommand) -> CliResult {
    match cmd {
        OracleCommand::Quad { dist, m, tol } => {
            let quad = quad_max_moment(&dist, m, tol)?;
            let exact = dist.exact_max_moment(m);
            let report = OracleReport::new(format!("quadrature_{dist}_m{m}"), exact, quad, 1e-6 * exact.abs());
            print_reports(&[report])
        }
        OracleCommand::Brute { instance } => {
            let text =
                std::fs::read_to_string(&instance).map_err(|e| Failure::Usage(format!("{}: {e}", instance.display())))?;
            let inst: BruteInstance = serde_json::from_str(&text).map_err(|e| Failure::Usage(e.to_string()))?;
            let regime: Regime = inst.regime.parse()?;
            let phi = PhiMatrix::from_rows(inst.phi)?;
            let value = brute_force_capacitated(&inst.q, &phi, inst.rho, regime)?;
            with_output(None, |w| write_json(&serde_json::json!({ "regime": regime, "expected_welfare": value }), w))?;
            Ok(())
        }
        OracleCommand::Crosscheck {
            n,
            rho,
            dist_q,
            dist_phi,
            trials,
            seed,
        } => {
            let config = MarketConfig::new(n, rho, Supply::CapacitatedUnit, dist_q, dist_phi).with_seed(seed);
            let report = crosscheck_sampling_modes(&config, trials)?;
            print_reports(&[report])
        }
        OracleCommand::Limit { lambda, n_grid } => print_reports(&pareto_to_exponential_limit_check(lambda, &n_grid)?),
    }
}
