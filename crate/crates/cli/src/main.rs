//! `tssort` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 optimizer did not
//! converge under `--strict`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tssort::baselines::{binarize, sortnregress_ts, OrderKind, OrderStrategy};
use tssort::datasets::{self, GraphDocument};
use tssort::dynotears;
use tssort::graphs::EdgeScope;
use tssort::harness::{
    self, BinnedBenchConfig, ExternalEstimates, GridConfig, MethodRegistry, NoiseModel, Proposal, ScalingConfig,
};
use tssort::metrics::{evaluate, evaluate_summary};
use tssort::{
    marginal_variance, r2_scores, rng, simulate, sortability_score, standardize, CriterionKind, DynoConfig, Error,
    EvalMode, GraphGenConfig, PairMode, SimConfig, SummaryGraph,
};

#[derive(Parser, Debug)]
#[command(name = "tssort", version, about = "Sortability measurement and structure learning for SVAR time series")]
struct Cli {
    /// Worker threads for the experiment drivers (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a stationary random SVAR and simulate panels from it.
    Generate(GenerateArgs),
    /// Sortability of a panel with respect to a ground-truth graph.
    Sortability(SortabilityArgs),
    /// Estimate a ts-graph from a panel.
    Fit(FitArgs),
    /// F1 of an estimated graph against the truth.
    Evaluate(EvaluateArgs),
    /// Method benchmark on sortability-binned datasets.
    BenchBinned(BinnedArgs),
    /// Mean sortability over a grid of contemporaneous and lagged degrees.
    BenchGrid(GridArgs),
    /// Sortability statistics for growing numbers of nodes.
    BenchScaling(ScalingArgs),
}

#[derive(Args, Debug, Clone)]
struct SeedArg {
    /// Random seed; falls back to TSSORT_SEED, then 0.
    #[arg(long, env = "TSSORT_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct GenArgs {
    /// Expected contemporaneous mean degree.
    #[arg(long = "dc", default_value_t = 4.0)]
    d_c: f64,
    /// Expected mean degree per lag.
    #[arg(long = "dl", default_value_t = 1.0)]
    d_l: f64,
    #[arg(long, default_value_t = 3)]
    tau_max: usize,
    /// Lagged weight decay.
    #[arg(long, default_value_t = 1.1)]
    delta: f64,
}

impl GenArgs {
    fn config(&self, d: usize, seed: u64) -> GraphGenConfig {
        GraphGenConfig {
            d,
            d_c: self.d_c,
            d_l: self.d_l,
            tau_max: self.tau_max,
            delta: self.delta,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CriterionArg {
    #[value(alias = "variance")]
    Var,
    R2,
}

impl From<CriterionArg> for CriterionKind {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Var => CriterionKind::Variance,
            CriterionArg::R2 => CriterionKind::R2,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Admissible,
    #[value(alias = "all_connected")]
    AllConnected,
    #[value(alias = "path_weighted")]
    PathWeighted,
}

impl From<ModeArg> for PairMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Admissible => PairMode::Admissible,
            ModeArg::AllConnected => PairMode::AllConnected,
            ModeArg::PathWeighted => PairMode::PathWeighted,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ScopeArg {
    Overall,
    Contemp,
    Lagged,
}

impl From<ScopeArg> for EdgeScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Overall => EdgeScope::Overall,
            ScopeArg::Contemp => EdgeScope::Contemporaneous,
            ScopeArg::Lagged => EdgeScope::Lagged,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum EvalModeArg {
    Overall,
    Contemp,
    Lagged,
    Summary,
    All,
}

impl EvalModeArg {
    fn modes(self) -> Vec<EvalMode> {
        match self {
            EvalModeArg::Overall => vec![EvalMode::Overall],
            EvalModeArg::Contemp => vec![EvalMode::Contemp],
            EvalModeArg::Lagged => vec![EvalMode::Lagged],
            EvalModeArg::Summary => vec![EvalMode::Summary],
            EvalModeArg::All => EvalMode::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[command(flatten)]
    gen: GenArgs,
    /// Samples per panel.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Independent panels simulated from the same graph.
    #[arg(long, default_value_t = 1)]
    realizations: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Output directory; receives panel_<k>.csv and truth.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SortabilityArgs {
    /// Panel CSV.
    #[arg(long)]
    data: PathBuf,
    /// Ground truth: ts-graph JSON, or summary-graph CSV.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value_t = CriterionArg::Var)]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Admissible)]
    mode: ModeArg,
    /// Edges of a ts-graph truth to build the summary graph from.
    #[arg(long, value_enum, default_value_t = ScopeArg::Overall)]
    scope: ScopeArg,
    /// Lags in the R² regressions; defaults to the truth's tau_max (or 1).
    #[arg(long)]
    tau_max: Option<usize>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Varsortnregress,
    R2sortnregress,
    Randomregress,
    Reversesortnregress,
    Dynotears,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 3)]
    tau_max: usize,
    /// Standardize the panel before fitting.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0.05)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda2: f64,
    /// Cutoff on |w| applied by the optimizer-based method.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Exit with code 3 if the optimizer misses the acyclicity tolerance.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    seed: SeedArg,
    /// Estimated graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Estimated graph JSON.
    #[arg(long)]
    est: PathBuf,
    /// Ground truth: ts-graph JSON, or summary-graph CSV (summary mode only).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalModeArg::All)]
    mode: EvalModeArg,
    /// Estimated weights with |w| <= threshold are dropped.
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct BinnedArgs {
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Datasets per bin.
    #[arg(long, default_value_t = 30)]
    m: usize,
    /// Bin edges from 0 to 1.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1")]
    bins: Vec<f64>,
    #[arg(long, value_enum, default_value_t = CriterionArg::Var)]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Admissible)]
    mode: ModeArg,
    /// Edges whose summary graph defines the binning score.
    #[arg(long, value_enum, default_value_t = ScopeArg::Overall)]
    scope: ScopeArg,
    #[arg(long, value_delimiter = ',', default_value = "varsortnregress,randomregress")]
    methods: Vec<String>,
    /// Extra method reading estimates from `<dir>/<trial>.json`, as NAME=DIR.
    #[arg(long, value_parser = parse_external)]
    external: Vec<(String, PathBuf)>,
    /// Sortability rejections allowed per bin (default 200 * m).
    #[arg(long)]
    max_attempts: Option<usize>,
    /// Contemporaneous and lagged degrees drawn per dataset; empty keeps --dc/--dl.
    #[arg(long, value_delimiter = ',', default_value = "")]
    degrees: Vec<String>,
    /// Per-node noise std is 10^u, u uniform in [LOW, HIGH).
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [-1.0, 1.0], allow_hyphen_values = true)]
    noise_log10: Vec<f64>,
    /// Unit noise on every node instead of --noise-log10.
    #[arg(long)]
    unit_noise: bool,
    #[arg(long, default_value_t = 0.05)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.05)]
    lambda2: f64,
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Also write every accepted dataset under OUT/datasets.
    #[arg(long)]
    save_datasets: bool,
    #[command(flatten)]
    seed: SeedArg,
    /// Output directory for trials.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,3,4,6,8")]
    degrees: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_enum, default_value_t = CriterionArg::Var)]
    criterion: CriterionArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Admissible)]
    mode: ModeArg,
    /// Non-stationary draws tolerated per trial.
    #[arg(long, default_value_t = 1000)]
    max_draws: usize,
    #[command(flatten)]
    seed: SeedArg,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[arg(long, value_delimiter = ',', default_value = "10")]
    d_list: Vec<usize>,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, default_value_t = 100)]
    graphs: usize,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Admissible)]
    mode: ModeArg,
    #[command(flatten)]
    seed: SeedArg,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn parse_external(s: &str) -> Result<(String, PathBuf), String> {
    let (name, dir) = s.split_once('=').ok_or_else(|| format!("expected NAME=DIR, got {s:?}"))?;
    if name.is_empty() || dir.is_empty() {
        return Err(format!("expected NAME=DIR, got {s:?}"));
    }
    Ok((name.to_owned(), PathBuf::from(dir)))
}

enum Failure {
    Usage(String),
    Data(Error),
    NotConverged(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e)
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn report_config<T: Serialize>(command: &str, seed: Option<u64>, config: &T) {
    let json = serde_json::to_string(config).expect("configs serialize");
    match seed {
        Some(s) => eprintln!("tssort {command}: seed {s}, config {json}"),
        None => eprintln!("tssort {command}: config {json}"),
    }
}

fn write_file(path: &Path, body: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialize"));
}

enum Truth {
    Ts(tssort::WeightedTsGraph),
    Summary(SummaryGraph),
}

fn load_truth(path: &Path, names: Option<&[String]>) -> Result<Truth, Error> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        Ok(Truth::Summary(datasets::load_summary_csv(path, names)?))
    } else {
        Ok(Truth::Ts(datasets::load_ts_graph_json(path)?))
    }
}

fn generate(a: &GenerateArgs) -> Outcome {
    let seed = a.seed.seed;
    let gen = a.gen.config(a.d, seed);
    #[derive(Serialize)]
    struct Resolved<'a> {
        gen: &'a GraphGenConfig,
        n: usize,
        burn_in: usize,
        realizations: usize,
    }
    report_config(
        "generate",
        Some(seed),
        &Resolved {
            gen: &gen,
            n: a.n,
            burn_in: a.burn_in,
            realizations: a.realizations,
        },
    );
    if a.realizations == 0 {
        return Err(Failure::Usage("--realizations must be >= 1".into()));
    }
    gen.validate()?;
    let (graph, rejected) = harness::stationary_graph(&gen, harness::DEFAULT_MAX_DRAWS, &mut rng::stream(seed, 0))?;
    log::info!("{rejected} non-stationary draws rejected");
    let sim = SimConfig {
        burn_in: a.burn_in,
        ..SimConfig::new(a.n, seed)
    };
    let panels = (0..a.realizations)
        .map(|k| simulate(&graph, &sim, &mut rng::stream(seed, k as u64 + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    for (k, p) in panels.iter().enumerate() {
        datasets::write_panel_csv(a.out.join(format!("panel_{k}.csv")), p)?;
    }
    datasets::write_ts_graph_json(a.out.join("truth.json"), &graph)?;
    Ok(())
}

fn sortability(a: &SortabilityArgs) -> Outcome {
    report_config(
        "sortability",
        None,
        &serde_json::json!({
            "data": a.data, "truth": a.truth, "criterion": CriterionKind::from(a.criterion),
            "mode": PairMode::from(a.mode), "scope": EdgeScope::from(a.scope), "tau_max": a.tau_max,
        }),
    );
    let panel = datasets::load_panel_csv(&a.data)?;
    let (summary, truth_tau) = match load_truth(&a.truth, Some(panel.names()))? {
        Truth::Ts(g) => (EdgeScope::from(a.scope).summary(&g), Some(g.tau_max())),
        Truth::Summary(s) => {
            if !matches!(a.scope, ScopeArg::Overall) {
                return Err(Failure::Usage("--scope needs a ts-graph truth".into()));
            }
            (s, None)
        }
    };
    if summary.d() != panel.d() {
        return Err(Error::ShapeMismatch(format!("truth has {} nodes, panel has {}", summary.d(), panel.d())).into());
    }
    let cri = match a.criterion {
        CriterionArg::Var => marginal_variance(&panel),
        CriterionArg::R2 => r2_scores(&panel, a.tau_max.or(truth_tau).unwrap_or(1))?,
    };
    print_json(&sortability_score(&cri, &summary, a.mode.into())?);
    Ok(())
}

fn fit(a: &FitArgs) -> Outcome {
    let dyno = DynoConfig {
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        threshold: a.threshold,
        ..Default::default()
    };
    report_config(
        "fit",
        Some(a.seed.seed),
        &serde_json::json!({
            "data": a.data, "method": format!("{:?}", a.method).to_lowercase(), "tau_max": a.tau_max,
            "standardize": a.standardize, "dynotears": dyno, "strict": a.strict,
        }),
    );
    dyno.validate()?;
    let mut panel = datasets::load_panel_csv(&a.data)?;
    if a.standardize {
        panel = standardize(&panel)?;
    }
    let order = |kind| OrderStrategy { kind, seed: a.seed.seed };
    let (name, est, meta) = match a.method {
        MethodArg::Dynotears => {
            let fit = dynotears::fit(&panel, a.tau_max, &dyno)?;
            let meta = serde_json::json!({
                "converged": fit.converged, "h": fit.h, "rho": fit.rho,
                "outer_iterations": fit.outer_iterations, "repaired_edges": fit.repaired_edges,
            });
            if a.strict && !fit.converged {
                let doc = GraphDocument::from_estimate(&fit.estimate, "dynotears").with_metadata(meta);
                datasets::write_graph_document(&a.out, &doc)?;
                return Err(Failure::NotConverged(Error::NotConverged {
                    h: fit.h,
                    outer: fit.outer_iterations,
                }));
            }
            ("dynotears", fit.estimate, meta)
        }
        MethodArg::Varsortnregress => ("varsortnregress", sortnregress_ts(&panel, a.tau_max, order(OrderKind::Variance))?, serde_json::Value::Null),
        MethodArg::R2sortnregress => ("r2sortnregress", sortnregress_ts(&panel, a.tau_max, order(OrderKind::R2))?, serde_json::Value::Null),
        MethodArg::Randomregress => ("randomregress", sortnregress_ts(&panel, a.tau_max, order(OrderKind::Random))?, serde_json::Value::Null),
        MethodArg::Reversesortnregress => (
            "reversesortnregress",
            sortnregress_ts(&panel, a.tau_max, order(OrderKind::VarianceReversed))?,
            serde_json::Value::Null,
        ),
    };
    let mut doc = GraphDocument::from_estimate(&est, name);
    if !meta.is_null() {
        doc = doc.with_metadata(meta);
    }
    datasets::write_graph_document(&a.out, &doc)?;
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Outcome {
    report_config(
        "evaluate",
        None,
        &serde_json::json!({"est": a.est, "truth": a.truth, "mode": format!("{:?}", a.mode).to_lowercase(), "threshold": a.threshold}),
    );
    let est = datasets::load_graph_document(&a.est)?.to_estimate(&a.est)?;
    let est_stack = binarize(&est, a.threshold);
    let reports = match load_truth(&a.truth, None)? {
        Truth::Ts(g) => a
            .mode
            .modes()
            .into_iter()
            .map(|m| evaluate(&est_stack, &g.pattern(), m))
            .collect::<Result<Vec<_>, _>>()?,
        Truth::Summary(s) => match a.mode {
            EvalModeArg::Summary | EvalModeArg::All => vec![evaluate_summary(&est_stack.summary(), &s)?],
            _ => return Err(Failure::Usage("a summary-graph truth supports only --mode summary".into())),
        },
    };
    if reports.len() == 1 {
        print_json(&reports[0]);
    } else {
        print_json(&reports);
    }
    Ok(())
}

fn parse_degrees(raw: &[String]) -> Result<Vec<f64>, Failure> {
    raw.iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("--degrees: {s:?} is not a number"))))
        .collect()
}

fn bench_binned(a: &BinnedArgs) -> Outcome {
    let bins: Vec<(f64, f64)> = a.bins.windows(2).map(|w| (w[0], w[1])).collect();
    let noise = if a.unit_noise {
        NoiseModel::Unit
    } else {
        NoiseModel::LogUniform {
            log10_low: a.noise_log10[0],
            log10_high: a.noise_log10[1],
        }
    };
    let cfg = BinnedBenchConfig {
        d: a.d,
        bins,
        m: a.m,
        criterion: a.criterion.into(),
        mode: a.mode.into(),
        scope: a.scope.into(),
        methods: a.methods.clone(),
        n: a.n,
        max_attempts: a.max_attempts,
        base_seed: a.seed.seed,
        gen: a.gen.config(a.d, a.seed.seed),
        proposal: Proposal {
            degrees: parse_degrees(&a.degrees)?,
            noise,
        },
        threshold: a.threshold,
        dyno: DynoConfig {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            threshold: a.threshold,
            ..Default::default()
        },
        ..Default::default()
    };
    report_config("bench-binned", Some(a.seed.seed), &cfg);
    let mut registry = MethodRegistry::builtin(&cfg.dyno);
    for (name, dir) in &a.external {
        registry.register(name, ExternalEstimates { dir: dir.clone() });
    }
    let res = harness::binned_benchmark(&cfg, &registry)?;
    res.write(&a.out)?;
    if a.save_datasets {
        res.write_datasets(&a.out.join("datasets"))?;
    }
    for b in res.summary.bins.iter().filter(|b| b.underfilled) {
        eprintln!("warning: bin [{}, {}) holds {} of {} datasets", b.lo, b.hi, b.achieved, a.m);
    }
    Ok(())
}

fn bench_grid(a: &GridArgs) -> Outcome {
    let cfg = GridConfig {
        d: a.d,
        degrees: a.degrees.clone(),
        trials: a.trials,
        n: a.n,
        base_seed: a.seed.seed,
        criterion: a.criterion.into(),
        mode: a.mode.into(),
        gen: a.gen.config(a.d, a.seed.seed),
        max_draws: a.max_draws,
    };
    report_config("bench-grid", Some(a.seed.seed), &cfg);
    let res = harness::degree_grid_study(&cfg)?;
    write_file(&a.out, &res.to_csv())?;
    Ok(())
}

fn bench_scaling(a: &ScalingArgs) -> Outcome {
    let cfg = ScalingConfig {
        d_list: a.d_list.clone(),
        graphs_per_d: a.graphs,
        n: a.n,
        base_seed: a.seed.seed,
        gen: a.gen.config(10, a.seed.seed),
        mode: a.mode.into(),
        ..Default::default()
    };
    report_config("bench-scaling", Some(a.seed.seed), &cfg);
    let res = harness::node_scaling_study(&cfg)?;
    write_file(&a.out, &res.to_csv())?;
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Sortability(a) => sortability(a),
        Command::Fit(a) => fit(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::BenchBinned(a) => bench_binned(a),
        Command::BenchGrid(a) => bench_grid(a),
        Command::BenchScaling(a) => bench_scaling(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("global thread pool is configured once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
