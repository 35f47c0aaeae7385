//! Experiment drivers.
//!
//! Three designs are supported: sortability statistics as the number of
//! nodes grows, mean sortability over a grid of contemporaneous and lagged
//! degrees, and a method benchmark on datasets rejection-sampled into
//! sortability bins.
//!
//! Every trial draws from its own RNG stream derived from the base seed and
//! the trial index, and results are collected in index order, so output does
//! not depend on the size of the thread pool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{binarize, sortnregress_ts, EstimatedTsGraph, OrderKind, OrderStrategy};
use crate::datasets::{self, GraphDocument};
use crate::dynotears::{self, DynoConfig};
use crate::error::{Error, Result};
use crate::graphs::{generate_er_tsgraph, summary_of, EdgeScope, GraphGenConfig, SummaryGraph, WeightedTsGraph};
use crate::metrics::{evaluate, EvalMode};
use crate::rng;
use crate::sortability::{marginal_variance, r2_scores, sortability_score, CriterionKind, CriterionVector, PairMode};
use crate::svar::{is_stable, simulate, standardize, Panel, SimConfig};

/// Non-stationary graph draws tolerated per dataset before giving up.
pub const DEFAULT_MAX_DRAWS: usize = 100_000;

/// Per-node noise scale of simulated panels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    /// Standard normal noise on every node.
    Unit,
    /// Standard deviation `10^u` with `u ~ U[log10_low, log10_high)` per node.
    LogUniform { log10_low: f64, log10_high: f64 },
}

impl NoiseModel {
    fn sample<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Option<Vec<f64>> {
        match *self {
            NoiseModel::Unit => None,
            NoiseModel::LogUniform { log10_low, log10_high } => Some(
                (0..d)
                    .map(|_| {
                        let u = if log10_high > log10_low { rng.random_range(log10_low..log10_high) } else { log10_low };
                        10f64.powf(u)
                    })
                    .collect(),
            ),
        }
    }
}

/// A stationary graph together with one simulated panel.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: WeightedTsGraph,
    pub panel: Panel,
    /// Non-stationary or diverging draws discarded on the way.
    pub unstable: usize,
}

/// Draw graphs until one passes the stationarity test. Returns the graph
/// and the number of rejected draws; fails with [`Error::Unstable`] once
/// `max_draws` draws have been rejected.
pub fn stationary_graph<R: Rng + ?Sized>(gen: &GraphGenConfig, max_draws: usize, rng: &mut R) -> Result<(WeightedTsGraph, usize)> {
    for rejected in 0..max_draws {
        let graph = generate_er_tsgraph(gen, rng)?;
        if is_stable(&graph)? {
            return Ok((graph, rejected));
        }
    }
    Err(Error::Unstable { radius: f64::NAN })
}

/// A stationary graph and one panel simulated from it. Simulations that
/// diverge count as rejected draws.
pub fn draw_dataset<R: Rng + ?Sized>(
    gen: &GraphGenConfig,
    n: usize,
    noise: &NoiseModel,
    max_draws: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let mut unstable = 0;
    loop {
        let (graph, rejected) = stationary_graph(gen, max_draws.saturating_sub(unstable), rng)?;
        unstable += rejected;
        let sim = SimConfig {
            noise_std: noise.sample(gen.d, rng),
            ..SimConfig::new(n, 0)
        };
        match simulate(&graph, &sim, rng) {
            Ok(panel) => return Ok(Dataset { graph, panel, unstable }),
            Err(Error::Unstable { .. } | Error::NumericalOverflow { .. }) => unstable += 1,
            Err(e) => return Err(e),
        }
    }
}

fn criterion(p: &Panel, kind: CriterionKind, tau_max: usize) -> Result<CriterionVector> {
    match kind {
        CriterionKind::Variance => Ok(marginal_variance(p)),
        CriterionKind::R2 => r2_scores(p, tau_max),
    }
}

/// Score, or `None` when the graph has no pairs to compare.
fn score_or_none(cri: &CriterionVector, g: &SummaryGraph, mode: PairMode) -> Result<Option<f64>> {
    match sortability_score(cri, g, mode) {
        Ok(r) => Ok(Some(r.score)),
        Err(Error::NoAdmissiblePairs) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            count: xs.len(),
            mean,
            std: var.sqrt(),
        })
    }
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[h] } else { 0.5 * (v[h - 1] + v[h]) })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

// ---------------------------------------------------------------------------
// node scaling

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub d_list: Vec<usize>,
    pub graphs_per_d: usize,
    pub n: usize,
    pub base_seed: u64,
    /// Template; `d` is overwritten per entry of `d_list`.
    pub gen: GraphGenConfig,
    pub mode: PairMode,
    pub max_draws: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            d_list: vec![10],
            graphs_per_d: 100,
            n: 500,
            base_seed: 0,
            gen: GraphGenConfig::default(),
            mode: PairMode::Admissible,
            max_draws: DEFAULT_MAX_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub d: usize,
    pub scope: EdgeScope,
    pub criterion: CriterionKind,
    /// `None` when no graph had a defined score in this scope.
    pub stats: Option<Moments>,
    pub graphs: usize,
    pub unstable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
}

impl ScalingResult {
    pub fn row(&self, d: usize, scope: EdgeScope, criterion: CriterionKind) -> Option<&ScalingRow> {
        self.rows
            .iter()
            .find(|r| r.d == d && r.scope == scope && r.criterion == criterion)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("d,scope,criterion,mean,std,defined,graphs,unstable\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.d,
                r.scope.name(),
                r.criterion.name(),
                fmt_opt(r.stats.map(|s| s.mean)),
                fmt_opt(r.stats.map(|s| s.std)),
                r.stats.map_or(0, |s| s.count),
                r.graphs,
                r.unstable
            );
        }
        out
    }
}

/// Sortability of the contemporaneous, lagged and full summary graphs of
/// random stationary SVARs, for each `d` in `cfg.d_list`.
pub fn node_scaling_study(cfg: &ScalingConfig) -> Result<ScalingResult> {
    if cfg.graphs_per_d == 0 || cfg.d_list.iter().any(|&d| d < 2) {
        return Err(Error::InvalidConfig("node scaling needs graphs_per_d >= 1 and every d >= 2".into()));
    }
    let kinds = [CriterionKind::Variance, CriterionKind::R2];
    let mut rows = Vec::new();
    for &d in &cfg.d_list {
        let gen = GraphGenConfig { d, ..cfg.gen.clone() };
        gen.validate()?;
        let seed = rng::derive_seed(cfg.base_seed, d as u64);
        // trial -> (scores[criterion][scope], unstable)
        let trials: Vec<([[Option<f64>; 3]; 2], usize)> = (0..cfg.graphs_per_d)
            .into_par_iter()
            .map(|k| {
                let mut r = rng::stream(seed, k as u64);
                let ds = draw_dataset(&gen, cfg.n, &NoiseModel::Unit, cfg.max_draws, &mut r)?;
                let mut scores = [[None; 3]; 2];
                for (c, &kind) in kinds.iter().enumerate() {
                    let cri = criterion(&ds.panel, kind, gen.tau_max)?;
                    for (s, scope) in EdgeScope::ALL.iter().enumerate() {
                        scores[c][s] = score_or_none(&cri, &scope.summary(&ds.graph), cfg.mode)?;
                    }
                }
                Ok((scores, ds.unstable))
            })
            .collect::<Result<_>>()?;
        let unstable = trials.iter().map(|t| t.1).sum();
        for (c, &kind) in kinds.iter().enumerate() {
            for (s, &scope) in EdgeScope::ALL.iter().enumerate() {
                let xs: Vec<f64> = trials.iter().filter_map(|t| t.0[c][s]).collect();
                rows.push(ScalingRow {
                    d,
                    scope,
                    criterion: kind,
                    stats: Moments::of(&xs),
                    graphs: cfg.graphs_per_d,
                    unstable,
                });
            }
        }
    }
    Ok(ScalingResult {
        config: cfg.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// degree grid

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub d: usize,
    /// Values used for both `d_c` and `d_l`.
    pub degrees: Vec<f64>,
    pub trials: usize,
    pub n: usize,
    pub base_seed: u64,
    pub criterion: CriterionKind,
    pub mode: PairMode,
    /// Template for everything except `d`, `d_c`, `d_l`.
    pub gen: GraphGenConfig,
    /// Non-stationary draws tolerated per trial before it is dropped.
    pub max_draws: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            d: 10,
            degrees: vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0],
            trials: 20,
            n: 500,
            base_seed: 0,
            criterion: CriterionKind::Variance,
            mode: PairMode::Admissible,
            gen: GraphGenConfig::default(),
            max_draws: 1000,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() || self.degrees.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("degrees must be a nonempty list of values >= 0".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub d_c: f64,
    pub d_l: f64,
    /// `None` marks a missing cell: degrees out of range for `d`, every
    /// trial non-stationary, or no trial with a defined score.
    pub stats: Option<Moments>,
    /// Trials that produced a stationary dataset.
    pub accepted: usize,
    pub unstable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub config: GridConfig,
    pub cells: Vec<GridCell>,
}

impl GridResult {
    pub fn cell(&self, d_c: f64, d_l: f64) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.d_c == d_c && c.d_l == d_l)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("d_c,d_l,mean,std,defined,accepted,unstable\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.d_c,
                c.d_l,
                fmt_opt(c.stats.map(|s| s.mean)),
                fmt_opt(c.stats.map(|s| s.std)),
                c.stats.map_or(0, |s| s.count),
                c.accepted,
                c.unstable
            );
        }
        out
    }
}

/// Mean overall sortability for every `(d_c, d_l)` pair of `cfg.degrees`.
pub fn degree_grid_study(cfg: &GridConfig) -> Result<GridResult> {
    cfg.validate()?;
    let cells: Vec<(f64, f64)> = cfg
        .degrees
        .iter()
        .flat_map(|&dc| cfg.degrees.iter().map(move |&dl| (dc, dl)))
        .collect();
    let out = cells
        .par_iter()
        .enumerate()
        .map(|(idx, &(d_c, d_l))| {
            let gen = GraphGenConfig {
                d: cfg.d,
                d_c,
                d_l,
                ..cfg.gen.clone()
            };
            let mut cell = GridCell {
                d_c,
                d_l,
                stats: None,
                accepted: 0,
                unstable: 0,
            };
            if gen.validate().is_err() {
                log::warn!("grid cell d_c={d_c}, d_l={d_l} is out of range for d={}", cfg.d);
                return Ok(cell);
            }
            let seed = rng::derive_seed(cfg.base_seed, idx as u64);
            let mut xs = Vec::new();
            for k in 0..cfg.trials {
                let mut r = rng::stream(seed, k as u64);
                match draw_dataset(&gen, cfg.n, &NoiseModel::Unit, cfg.max_draws, &mut r) {
                    Ok(ds) => {
                        cell.accepted += 1;
                        cell.unstable += ds.unstable;
                        let cri = criterion(&ds.panel, cfg.criterion, gen.tau_max)?;
                        xs.extend(score_or_none(&cri, &summary_of(&ds.graph), cfg.mode)?);
                    }
                    Err(Error::Unstable { .. }) => cell.unstable += cfg.max_draws,
                    Err(e) => return Err(e),
                }
            }
            cell.stats = Moments::of(&xs);
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridResult {
        config: cfg.clone(),
        cells: out,
    })
}

// ---------------------------------------------------------------------------
// methods

/// What a method sees of one benchmark dataset.
pub struct Trial<'a> {
    /// Stable identifier, also the file stem for external estimates.
    pub id: &'a str,
    /// Seed reserved for the method's own randomness.
    pub seed: u64,
    pub panel: &'a Panel,
    pub truth: &'a WeightedTsGraph,
    pub tau_max: usize,
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub estimate: EstimatedTsGraph,
    /// Overrides the benchmark's binarization threshold.
    pub threshold: Option<f64>,
    pub converged: Option<bool>,
}

impl MethodOutput {
    fn plain(estimate: EstimatedTsGraph) -> Self {
        Self {
            estimate,
            threshold: None,
            converged: None,
        }
    }
}

pub trait Method: Send + Sync {
    fn estimate(&self, trial: &Trial<'_>) -> Result<MethodOutput>;
}

struct SortRegress(OrderKind);

impl Method for SortRegress {
    fn estimate(&self, t: &Trial<'_>) -> Result<MethodOutput> {
        let strategy = OrderStrategy { kind: self.0, seed: t.seed };
        Ok(MethodOutput::plain(sortnregress_ts(t.panel, t.tau_max, strategy)?))
    }
}

struct Dynotears(DynoConfig);

impl Method for Dynotears {
    fn estimate(&self, t: &Trial<'_>) -> Result<MethodOutput> {
        let fit = dynotears::fit(t.panel, t.tau_max, &self.0)?;
        Ok(MethodOutput {
            estimate: fit.estimate,
            // the fit is already thresholded
            threshold: Some(0.0),
            converged: Some(fit.converged),
        })
    }
}

/// Returns the ground truth; checks the plumbing.
struct TruthOracle;

impl Method for TruthOracle {
    fn estimate(&self, t: &Trial<'_>) -> Result<MethodOutput> {
        Ok(MethodOutput {
            estimate: EstimatedTsGraph::from_ts_graph(t.truth),
            threshold: Some(0.0),
            converged: None,
        })
    }
}

struct Standardized(Arc<dyn Method>);

impl Method for Standardized {
    fn estimate(&self, t: &Trial<'_>) -> Result<MethodOutput> {
        let panel = standardize(t.panel)?;
        self.0.estimate(&Trial { panel: &panel, ..*t })
    }
}

/// Reads `<dir>/<trial id>.json`, e.g. estimates produced by another tool
/// on datasets exported with [`BinnedResult::write_datasets`].
pub struct ExternalEstimates {
    pub dir: std::path::PathBuf,
}

impl Method for ExternalEstimates {
    fn estimate(&self, t: &Trial<'_>) -> Result<MethodOutput> {
        let path = self.dir.join(format!("{}.json", t.id));
        let doc = datasets::load_graph_document(&path)?;
        Ok(MethodOutput::plain(doc.to_estimate(&path)?))
    }
}

/// Name-keyed methods. Any registered name `x` is also reachable as
/// `x_standardized`, which standardizes the panel first.
#[derive(Clone)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Arc<dyn Method>>,
}

pub const STANDARDIZED_SUFFIX: &str = "_standardized";

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn builtin(dyno: &DynoConfig) -> Self {
        let mut r = Self::empty();
        r.register("varsortnregress", SortRegress(OrderKind::Variance));
        r.register("r2sortnregress", SortRegress(OrderKind::R2));
        r.register("randomregress", SortRegress(OrderKind::Random));
        r.register("reversesortnregress", SortRegress(OrderKind::VarianceReversed));
        r.register("dynotears", Dynotears(dyno.clone()));
        r.register("truth", TruthOracle);
        r
    }

    pub fn register(&mut self, name: &str, method: impl Method + 'static) {
        self.methods.insert(name.to_owned(), Arc::new(method));
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Method>> {
        if let Some(m) = self.methods.get(name) {
            return Some(m.clone());
        }
        let base = name.strip_suffix(STANDARDIZED_SUFFIX)?;
        let inner = self.methods.get(base)?.clone();
        Some(Arc::new(Standardized(inner)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.methods.keys().map(String::as_str)
    }
}

fn name_hash(name: &str) -> u64 {
    // FNV-1a
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

// ---------------------------------------------------------------------------
// binned benchmark

/// How candidate datasets are drawn before binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// `d_c` and `d_l` are drawn uniformly from this list (values out of
    /// range for `d` are skipped). Empty keeps the template degrees.
    pub degrees: Vec<f64>,
    pub noise: NoiseModel,
}

impl Default for Proposal {
    /// Template degrees with per-node noise scales spread over two decades,
    /// so that every sortability bin can be reached.
    fn default() -> Self {
        Self {
            degrees: Vec::new(),
            noise: NoiseModel::LogUniform {
                log10_low: -1.0,
                log10_high: 1.0,
            },
        }
    }
}

impl Proposal {
    /// The template graph configuration with unit noise.
    pub fn template() -> Self {
        Self {
            degrees: Vec::new(),
            noise: NoiseModel::Unit,
        }
    }

    fn config<R: Rng + ?Sized>(&self, gen: &GraphGenConfig, rng: &mut R) -> GraphGenConfig {
        let mut g = gen.clone();
        let pick = |rng: &mut R, max: f64| -> Option<f64> {
            let ok: Vec<f64> = self.degrees.iter().copied().filter(|&v| v <= max).collect();
            (!ok.is_empty()).then(|| ok[rng.random_range(0..ok.len())])
        };
        if let Some(v) = pick(rng, (gen.d - 1) as f64) {
            g.d_c = v;
        }
        if let Some(v) = pick(rng, gen.d as f64) {
            g.d_l = v;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedBenchConfig {
    pub d: usize,
    /// Half-open `[lo, hi)` intervals; the last one also contains its upper end.
    pub bins: Vec<(f64, f64)>,
    /// Datasets per bin.
    pub m: usize,
    pub criterion: CriterionKind,
    pub mode: PairMode,
    /// Edges whose summary graph the binning score is computed on.
    pub scope: EdgeScope,
    pub methods: Vec<String>,
    pub n: usize,
    /// Sortability-rejection cap per bin; `None` means `200 * m`.
    pub max_attempts: Option<usize>,
    pub base_seed: u64,
    pub gen: GraphGenConfig,
    pub proposal: Proposal,
    pub threshold: f64,
    pub dyno: DynoConfig,
    /// Non-stationary draws tolerated per attempt; an attempt that hits
    /// the cap is rejected.
    pub max_draws: usize,
}

pub fn equal_bins(k: usize) -> Vec<(f64, f64)> {
    (0..k).map(|i| (i as f64 / k as f64, (i + 1) as f64 / k as f64)).collect()
}

impl Default for BinnedBenchConfig {
    fn default() -> Self {
        Self {
            d: 10,
            bins: equal_bins(5),
            m: 30,
            criterion: CriterionKind::Variance,
            mode: PairMode::Admissible,
            scope: EdgeScope::Overall,
            methods: vec!["varsortnregress".into(), "randomregress".into()],
            n: 500,
            max_attempts: None,
            base_seed: 0,
            gen: GraphGenConfig::default(),
            proposal: Proposal::default(),
            threshold: crate::baselines::DEFAULT_THRESHOLD,
            dyno: DynoConfig::default(),
            max_draws: 2000,
        }
    }
}

impl BinnedBenchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.m == 0 {
            return bad("m must be >= 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        let first = self.bins.first().map(|b| b.0);
        let last = self.bins.last().map(|b| b.1);
        let contiguous = self.bins.windows(2).all(|w| w[0].1 == w[1].0);
        if first != Some(0.0) || last != Some(1.0) || !contiguous || self.bins.iter().any(|b| !(b.0 < b.1)) {
            return bad("bins must be increasing, contiguous and cover [0, 1]");
        }
        if self.max_attempts == Some(0) {
            return bad("max_attempts must be >= 1");
        }
        GraphGenConfig { d: self.d, ..self.gen.clone() }.validate()?;
        self.dyno.validate()
    }

    pub fn attempts_per_bin(&self) -> usize {
        self.max_attempts.unwrap_or(200 * self.m)
    }

    fn bin_of(&self, score: f64) -> Option<usize> {
        let last = self.bins.len() - 1;
        self.bins
            .iter()
            .position(|&(lo, hi)| score >= lo && score < hi)
            .or_else(|| (score == self.bins[last].1).then_some(last))
    }
}

/// One row per trial, method and evaluation mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: String,
    pub bin: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub attempt: usize,
    pub sortability: f64,
    pub method: String,
    pub mode: EvalMode,
    pub tp: Option<usize>,
    pub fp: Option<usize>,
    #[serde(rename = "fn")]
    pub fn_: Option<usize>,
    pub f1: Option<f64>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub achieved: usize,
    pub underfilled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub bin: usize,
    pub method: String,
    pub mode: EvalMode,
    pub f1: Option<Moments>,
    pub median_f1: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinnedSummary {
    pub config: BinnedBenchConfig,
    pub attempts: usize,
    /// Attempts whose score was undefined or fell in a full bin.
    pub rejected: usize,
    pub undefined: usize,
    pub unstable: usize,
    pub bins: Vec<BinSummary>,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone)]
pub struct AcceptedDataset {
    pub id: String,
    pub bin: usize,
    pub attempt: usize,
    pub seed: u64,
    pub sortability: f64,
    pub data: Dataset,
}

#[derive(Debug, Clone)]
pub struct BinnedResult {
    pub rows: Vec<TrialRow>,
    pub summary: BinnedSummary,
    pub datasets: Vec<AcceptedDataset>,
}

impl BinnedResult {
    pub fn mean_f1(&self, bin: usize, method: &str, mode: EvalMode) -> Option<f64> {
        self.summary
            .methods
            .iter()
            .find(|s| s.bin == bin && s.method == method && s.mode == mode)
            .and_then(|s| s.f1.map(|m| m.mean))
    }

    pub fn trials_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary).expect("summary always serializes");
        s.push('\n');
        s
    }

    /// `trials.csv` and `summary.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("trials.csv", self.trials_csv()?), ("summary.json", self.summary_json())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Every accepted dataset as `<dir>/<id>/panel_0.csv` plus `truth.json`.
    pub fn write_datasets(&self, dir: &Path) -> Result<()> {
        for ds in &self.datasets {
            datasets::write_corpus(dir, &ds.id, std::slice::from_ref(&ds.data.panel), &ds.data.graph)?;
        }
        Ok(())
    }
}

/// Attempts evaluated per parallel batch. Fixed so that acceptance order
/// does not depend on the thread count.
const ATTEMPT_BATCH: usize = 64;

/// Rejection-sample datasets into sortability bins and score every method
/// on each of them.
pub fn binned_benchmark(cfg: &BinnedBenchConfig, registry: &MethodRegistry) -> Result<BinnedResult> {
    cfg.validate()?;
    let methods: Vec<(String, Arc<dyn Method>)> = cfg
        .methods
        .iter()
        .map(|name| {
            registry
                .get(name)
                .map(|m| (name.clone(), m))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown method {name:?}")))
        })
        .collect::<Result<_>>()?;
    let gen = GraphGenConfig { d: cfg.d, ..cfg.gen.clone() };
    let nbins = cfg.bins.len();
    let cap = cfg.attempts_per_bin() * nbins;

    let mut filled: Vec<Vec<AcceptedDataset>> = vec![Vec::new(); nbins];
    let (mut attempts, mut undefined, mut unstable, mut rejected) = (0, 0, 0, 0);
    while attempts < cap && filled.iter().any(|b| b.len() < cfg.m) {
        let batch: Vec<(usize, u64, Option<Dataset>, Option<f64>)> = (attempts..(attempts + ATTEMPT_BATCH).min(cap))
            .into_par_iter()
            .map(|k| {
                let seed = rng::derive_seed(cfg.base_seed, k as u64);
                let mut r = rng::seeded(seed);
                let g = cfg.proposal.config(&gen, &mut r);
                let ds = match draw_dataset(&g, cfg.n, &cfg.proposal.noise, cfg.max_draws, &mut r) {
                    Ok(ds) => ds,
                    Err(Error::Unstable { .. }) => return Ok((k, seed, None, None)),
                    Err(e) => return Err(e),
                };
                let cri = criterion(&ds.panel, cfg.criterion, g.tau_max)?;
                let score = score_or_none(&cri, &cfg.scope.summary(&ds.graph), cfg.mode)?;
                Ok((k, seed, Some(ds), score))
            })
            .collect::<Result<_>>()?;
        for (k, seed, ds, score) in batch {
            attempts += 1;
            let Some(ds) = ds else {
                unstable += cfg.max_draws;
                rejected += 1;
                continue;
            };
            unstable += ds.unstable;
            let Some(score) = score else {
                undefined += 1;
                rejected += 1;
                continue;
            };
            match cfg.bin_of(score) {
                Some(b) if filled[b].len() < cfg.m => {
                    let slot = filled[b].len();
                    filled[b].push(AcceptedDataset {
                        id: format!("bin{b}_slot{slot:03}"),
                        bin: b,
                        attempt: k,
                        seed,
                        sortability: score,
                        data: ds,
                    });
                }
                _ => rejected += 1,
            }
            if filled.iter().all(|b| b.len() >= cfg.m) {
                break;
            }
        }
    }

    let bins: Vec<BinSummary> = filled
        .iter()
        .enumerate()
        .map(|(b, v)| {
            if v.len() < cfg.m {
                log::warn!(
                    "bin [{}, {}) underfilled: {} of {} datasets after {attempts} attempts",
                    cfg.bins[b].0,
                    cfg.bins[b].1,
                    v.len(),
                    cfg.m
                );
            }
            BinSummary {
                bin: b,
                lo: cfg.bins[b].0,
                hi: cfg.bins[b].1,
                achieved: v.len(),
                underfilled: v.len() < cfg.m,
            }
        })
        .collect();
    let datasets: Vec<AcceptedDataset> = filled.into_iter().flatten().collect();

    let jobs: Vec<(&AcceptedDataset, &(String, Arc<dyn Method>))> =
        datasets.iter().flat_map(|ds| methods.iter().map(move |m| (ds, m))).collect();
    let rows: Vec<TrialRow> = jobs
        .par_iter()
        .map(|(ds, (name, method))| run_method(cfg, ds, name, method.as_ref(), gen.tau_max))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut summaries = Vec::new();
    for b in 0..nbins {
        for name in &cfg.methods {
            for mode in EvalMode::ALL {
                let sel: Vec<&TrialRow> = rows
                    .iter()
                    .filter(|r| r.bin == b && &r.method == name && r.mode == mode)
                    .collect();
                let f1: Vec<f64> = sel.iter().filter_map(|r| r.f1).collect();
                summaries.push(MethodSummary {
                    bin: b,
                    method: name.clone(),
                    mode,
                    f1: Moments::of(&f1),
                    median_f1: median(&f1),
                    failures: sel.len() - f1.len(),
                });
            }
        }
    }

    Ok(BinnedResult {
        rows,
        summary: BinnedSummary {
            config: cfg.clone(),
            attempts,
            rejected,
            undefined,
            unstable,
            bins,
            methods: summaries,
        },
        datasets,
    })
}

fn run_method(cfg: &BinnedBenchConfig, ds: &AcceptedDataset, name: &str, method: &dyn Method, tau_max: usize) -> Vec<TrialRow> {
    let trial = Trial {
        id: &ds.id,
        seed: rng::derive_seed(ds.seed, name_hash(name)),
        panel: &ds.data.panel,
        truth: &ds.data.graph,
        tau_max,
    };
    let row = |mode: EvalMode| TrialRow {
        trial: ds.id.clone(),
        bin: ds.bin,
        bin_lo: cfg.bins[ds.bin].0,
        bin_hi: cfg.bins[ds.bin].1,
        attempt: ds.attempt,
        sortability: ds.sortability,
        method: name.to_owned(),
        mode,
        tp: None,
        fp: None,
        fn_: None,
        f1: None,
        converged: None,
        error: None,
    };
    let truth = ds.data.graph.pattern();
    let outcome = method.estimate(&trial).and_then(|out| {
        let est = binarize(&out.estimate, out.threshold.unwrap_or(cfg.threshold));
        EvalMode::ALL
            .iter()
            .map(|&mode| evaluate(&est, &truth, mode))
            .collect::<Result<Vec<_>>>()
            .map(|reports| (reports, out.converged))
    });
    match outcome {
        Ok((reports, converged)) => reports
            .into_iter()
            .map(|rep| TrialRow {
                tp: Some(rep.tp),
                fp: Some(rep.fp),
                fn_: Some(rep.fn_),
                f1: Some(rep.f1),
                converged,
                ..row(rep.mode)
            })
            .collect(),
        Err(e) => {
            log::warn!("{name} failed on {}: {e}", ds.id);
            EvalMode::ALL
                .iter()
                .map(|&mode| TrialRow {
                    error: Some(e.to_string()),
                    ..row(mode)
                })
                .collect()
        }
    }
}

/// Graph document for an accepted dataset's estimate, tagged with the method.
pub fn estimate_document(est: &EstimatedTsGraph, method: &str) -> GraphDocument {
    GraphDocument::from_estimate(est, method)
}
