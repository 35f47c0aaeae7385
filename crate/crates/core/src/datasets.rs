//! File formats: panels as CSV, summary graphs as 0/1 CSV, ts-graphs as JSON,
//! and multi-realization corpora laid out as
//! `<dir>/<name>/panel_<k>.csv` plus `<dir>/<name>/truth.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::EstimatedTsGraph;
use crate::error::{Error, Result};
use crate::graphs::{summary_of, SummaryGraph, WeightedTsGraph};
use crate::svar::Panel;

/// Weights at or below this magnitude are read as structural zeros.
pub const LOAD_ZERO_TOL: f64 = 1e-12;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

fn reader(text: &str, has_headers: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (row, msg) = match e.position() {
        Some(p) => (p.line() as usize, e.to_string()),
        None => (0, e.to_string()),
    };
    Error::Malformed {
        path: path.to_path_buf(),
        row,
        col: 0,
        msg,
    }
}

/// Panel CSV: header row of column names, one row per time step.
/// `row` in errors is the 1-based line number, `col` the 1-based field.
pub fn load_panel_csv(path: impl AsRef<Path>) -> Result<Panel> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut rdr = reader(&text, true);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Empty(path.to_path_buf()));
    }
    let d = names.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != d {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                row: line,
                col: record.len().min(d) + 1,
                msg: format!("expected {d} fields, found {}", record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                path: path.to_path_buf(),
                row: line,
                col: c + 1,
                msg: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    row: line,
                    col: c + 1,
                    msg: format!("{field:?} is not finite"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty(path.to_path_buf()));
    }
    Panel::new(names, DMatrix::from_row_slice(rows, d, &values))
}

/// Values are printed with 17 significant digits, which round-trips every
/// finite `f64`.
pub fn panel_csv_string(p: &Panel) -> String {
    let mut out = String::with_capacity(p.len() * p.d() * 24);
    out.push_str(&p.names().join(","));
    out.push('\n');
    for row in p.data().row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_panel_csv(path: impl AsRef<Path>, p: &Panel) -> Result<()> {
    write_bytes(path.as_ref(), panel_csv_string(p).as_bytes())
}

/// `d × d` matrix of 0/1, row = source, column = target. An optional first
/// row of column names is accepted; when `names` is given it must match.
pub fn load_summary_csv(path: impl AsRef<Path>, names: Option<&[String]>) -> Result<SummaryGraph> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut rdr = reader(&text, false);
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    let header = rows
        .first()
        .is_some_and(|(_, r)| r.iter().any(|f| f.parse::<f64>().is_err()));
    if header {
        let (_, head) = rows.remove(0);
        if let Some(names) = names {
            if head.as_slice() != names {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    msg: format!("header {head:?} does not match expected names {names:?}"),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    let d = rows.len();
    if let Some((_, r)) = rows.iter().find(|(_, r)| r.len() != d) {
        return Err(Error::NonSquare {
            path: path.to_path_buf(),
            rows: d,
            cols: r.len(),
        });
    }
    if let Some(names) = names {
        if names.len() != d {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!("{d}x{d} matrix for {} names", names.len()),
            });
        }
    }
    let mut g = SummaryGraph::empty(d);
    for (i, (line, r)) in rows.iter().enumerate() {
        for (j, field) in r.iter().enumerate() {
            let on = match field.parse::<f64>() {
                Ok(v) if v == 0.0 => false,
                Ok(v) if v == 1.0 => true,
                _ => {
                    return Err(Error::NonBinary {
                        path: path.to_path_buf(),
                        row: *line,
                        col: j + 1,
                    })
                }
            };
            g.set(i, j, on);
        }
    }
    Ok(g)
}

pub fn summary_csv_string(g: &SummaryGraph) -> String {
    let d = g.d();
    let mut out = String::with_capacity(d * d * 2);
    for i in 0..d {
        let row: Vec<&str> = (0..d).map(|j| if g.has_edge(i, j) { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_summary_csv(path: impl AsRef<Path>, g: &SummaryGraph) -> Result<()> {
    write_bytes(path.as_ref(), summary_csv_string(g).as_bytes())
}

/// On-disk form of a ts-graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub d: usize,
    pub tau_max: usize,
    /// `[lag][from][to]`
    pub weights: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl GraphDocument {
    pub fn from_slices(slices: &[DMatrix<f64>]) -> Self {
        let d = slices.first().map_or(0, |w| w.nrows());
        Self {
            d,
            tau_max: slices.len().saturating_sub(1),
            weights: slices
                .iter()
                .map(|w| (0..d).map(|i| (0..d).map(|j| w[(i, j)]).collect()).collect())
                .collect(),
            method: None,
            metadata: None,
        }
    }

    pub fn from_graph(g: &WeightedTsGraph) -> Self {
        Self::from_slices(g.weights())
    }

    pub fn from_estimate(est: &EstimatedTsGraph, method: &str) -> Self {
        Self {
            method: Some(method.to_owned()),
            ..Self::from_slices(&est.slices())
        }
    }

    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    fn slices(&self, path: &Path) -> Result<Vec<DMatrix<f64>>> {
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            msg,
        };
        if self.d == 0 {
            return Err(schema("d must be at least 1".into()));
        }
        if self.weights.len() != self.tau_max + 1 {
            return Err(schema(format!(
                "tau_max {} needs {} weight slices, found {}",
                self.tau_max,
                self.tau_max + 1,
                self.weights.len()
            )));
        }
        let mut out = Vec::with_capacity(self.weights.len());
        for (k, slice) in self.weights.iter().enumerate() {
            if slice.len() != self.d || slice.iter().any(|r| r.len() != self.d) {
                return Err(schema(format!("slice {k} is not {0}x{0}", self.d)));
            }
            let mut w = DMatrix::from_fn(self.d, self.d, |i, j| slice[i][j]);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(schema(format!("slice {k} has a non-finite weight")));
            }
            w.apply(|v| {
                if v.abs() <= LOAD_ZERO_TOL {
                    *v = 0.0
                }
            });
            out.push(w);
        }
        Ok(out)
    }

    /// Validated graph. A cyclic contemporaneous slice is logged, not
    /// rejected: external ground truths sometimes carry one.
    pub fn to_graph(&self, path: &Path) -> Result<WeightedTsGraph> {
        let g = WeightedTsGraph::new(self.slices(path)?)?;
        if !g.is_contemporaneous_acyclic() {
            log::warn!("{}: contemporaneous slice contains a cycle", path.display());
        }
        Ok(g)
    }

    pub fn to_estimate(&self, path: &Path) -> Result<EstimatedTsGraph> {
        let mut slices = self.slices(path)?;
        let w_c = slices.remove(0);
        Ok(EstimatedTsGraph { w_c, w_l: slices })
    }
}

pub fn load_graph_document(path: impl AsRef<Path>) -> Result<GraphDocument> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn load_ts_graph_json(path: impl AsRef<Path>) -> Result<WeightedTsGraph> {
    let path = path.as_ref();
    load_graph_document(path)?.to_graph(path)
}

pub fn graph_json_string(doc: &GraphDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("graph documents always serialize");
    s.push('\n');
    s
}

pub fn write_graph_document(path: impl AsRef<Path>, doc: &GraphDocument) -> Result<()> {
    write_bytes(path.as_ref(), graph_json_string(doc).as_bytes())
}

pub fn write_ts_graph_json(path: impl AsRef<Path>, g: &WeightedTsGraph) -> Result<()> {
    write_graph_document(path, &GraphDocument::from_graph(g))
}

/// A panel with whatever ground truth is known for it.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub panel: Panel,
    pub truth_summary: Option<SummaryGraph>,
    pub truth_ts: Option<WeightedTsGraph>,
}

impl LabeledDataset {
    /// Checks that the two truths agree when both are given.
    pub fn new(
        name: impl Into<String>,
        panel: Panel,
        truth_summary: Option<SummaryGraph>,
        truth_ts: Option<WeightedTsGraph>,
    ) -> Result<Self> {
        for d in [truth_summary.as_ref().map(|g| g.d()), truth_ts.as_ref().map(|g| g.d())]
            .into_iter()
            .flatten()
        {
            if d != panel.d() {
                return Err(Error::ShapeMismatch(format!("truth has {d} nodes, panel has {}", panel.d())));
            }
        }
        if let (Some(s), Some(g)) = (&truth_summary, &truth_ts) {
            if &summary_of(g) != s {
                return Err(Error::ShapeMismatch(
                    "summary truth disagrees with the ts-graph truth".into(),
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            panel,
            truth_summary,
            truth_ts,
        })
    }

    /// The summary truth, derived from the ts-graph if only that is known.
    pub fn summary(&self) -> Option<SummaryGraph> {
        self.truth_summary
            .clone()
            .or_else(|| self.truth_ts.as_ref().map(summary_of))
    }
}

fn panel_index(file_name: &str) -> Option<usize> {
    file_name.strip_prefix("panel_")?.strip_suffix(".csv")?.parse().ok()
}

/// Write `<dir>/<name>/panel_<k>.csv` for every panel and `truth.json`.
pub fn write_corpus(dir: impl AsRef<Path>, name: &str, panels: &[Panel], truth: &WeightedTsGraph) -> Result<PathBuf> {
    let root = dir.as_ref().join(name);
    for (k, p) in panels.iter().enumerate() {
        write_panel_csv(root.join(format!("panel_{k}.csv")), p)?;
    }
    write_ts_graph_json(root.join("truth.json"), truth)?;
    Ok(root)
}

/// Read every `panel_<k>.csv` under `root` in index order, each labeled
/// with `truth.json` (ts-graph) or `truth.csv` (summary) when present.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Vec<LabeledDataset>> {
    let root = root.as_ref();
    let name = root
        .file_name()
        .map_or_else(|| "corpus".to_owned(), |n| n.to_string_lossy().into_owned());
    let mut files: Vec<(usize, PathBuf)> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            let k = panel_index(path.file_name()?.to_str()?)?;
            Some((k, path))
        })
        .collect();
    if files.is_empty() {
        return Err(Error::Empty(root.to_path_buf()));
    }
    files.sort();
    let json = root.join("truth.json");
    let csv_truth = root.join("truth.csv");
    let truth_ts = if json.exists() { Some(load_ts_graph_json(&json)?) } else { None };
    files
        .into_iter()
        .map(|(k, path)| {
            let panel = load_panel_csv(&path)?;
            let truth_summary = if csv_truth.exists() {
                Some(load_summary_csv(&csv_truth, Some(panel.names())).or_else(|e| match e {
                    Error::Schema { .. } => load_summary_csv(&csv_truth, None),
                    other => Err(other),
                })?)
            } else {
                None
            };
            LabeledDataset::new(format!("{name}/{k}"), panel, truth_summary, truth_ts.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_er_tsgraph, GraphGenConfig};
    use crate::rng;
    use proptest::prelude::{any, prop, prop_assert, proptest, ProptestConfig};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_panel(t: usize, d: usize, seed: u64) -> Panel {
        let mut r = rng::seeded(seed);
        let data = DMatrix::from_fn(t, d, |_, _| {
            let v: f64 = StandardNormal.sample(&mut r);
            v * 10f64.powi(r.random_range(-8..8))
        });
        Panel::from_data(data).unwrap()
    }

    #[test]
    fn small_panel_reads_with_header_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "a,b\n1,2\n3,4.5\n-1e-3,7\n").unwrap();
        let p = load_panel_csv(&path).unwrap();
        assert_eq!(p.names(), ["a", "b"]);
        assert_eq!(p.len(), 3);
        assert_eq!(p.data()[(1, 1)], 4.5);
        assert_eq!(p.data()[(2, 0)], -1e-3);
    }

    #[test]
    fn nan_cell_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "a,b\n1,2\n3,NaN\n").unwrap();
        match load_panel_csv(&path) {
            Err(Error::Malformed { row, col, .. }) => assert_eq!((row, col), (3, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_and_header_only_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        fs::write(&path, "").unwrap();
        assert!(matches!(load_panel_csv(&path), Err(Error::Empty(_))));
        fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(load_panel_csv(&path), Err(Error::Empty(_))));
        assert!(matches!(
            load_panel_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn panel_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for seed in 0..20 {
            let p = random_panel(30, 4, seed);
            let path = dir.path().join(format!("p{seed}.csv"));
            write_panel_csv(&path, &p).unwrap();
            let q = load_panel_csv(&path).unwrap();
            assert_eq!(p.names(), q.names());
            for (a, b) in p.data().iter().zip(q.data().iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn summary_csv_cases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "0,0,0\n0,0,0\n0,0,0\n").unwrap();
        assert_eq!(load_summary_csv(&path, None).unwrap().edge_count(), 0);

        // A→B, B↔C, D→C with nodes A, B, C, D
        fs::write(&path, "A,B,C,D\n0,1,0,0\n0,0,1,0\n0,1,0,0\n0,0,1,0\n").unwrap();
        let names: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
        let g = load_summary_csv(&path, Some(&names)).unwrap();
        assert_eq!(g.edge_count(), 4);
        assert!(g.has_edge(1, 2) && g.has_edge(2, 1));
        let wrong: Vec<String> = ["A", "B", "X", "D"].map(String::from).to_vec();
        assert!(matches!(load_summary_csv(&path, Some(&wrong)), Err(Error::Schema { .. })));

        fs::write(&path, "0,1\n0,0\n1,0\n").unwrap();
        assert!(matches!(load_summary_csv(&path, None), Err(Error::NonSquare { .. })));
        fs::write(&path, "0,2\n0,0\n").unwrap();
        assert!(matches!(
            load_summary_csv(&path, None),
            Err(Error::NonBinary { row: 1, col: 2, .. })
        ));
    }

    #[test]
    fn summary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::seeded(3);
        for k in 0..20 {
            let d = r.random_range(1..8);
            let g = SummaryGraph::from_fn(d, |_, _| r.random_bool(0.3));
            let path = dir.path().join(format!("s{k}.csv"));
            write_summary_csv(&path, &g).unwrap();
            assert_eq!(load_summary_csv(&path, None).unwrap(), g);
        }
    }

    #[test]
    fn graph_json_round_trip_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::seeded(4);
        let g = generate_er_tsgraph(&GraphGenConfig::default(), &mut r).unwrap();
        let path = dir.path().join("g.json");
        write_ts_graph_json(&path, &g).unwrap();
        assert_eq!(load_ts_graph_json(&path).unwrap(), g);

        fs::write(&path, r#"{"d": 2, "tau_max": 0, "weights": [[[0, 1e-13], [0.5, 0]]]}"#).unwrap();
        let g0 = load_ts_graph_json(&path).unwrap();
        assert_eq!(g0.tau_max(), 0);
        assert!(g0.lagged().is_empty());
        assert_eq!(g0.slice(0)[(0, 1)], 0.0);
        assert_eq!(g0.slice(0)[(1, 0)], 0.5);

        fs::write(&path, r#"{"d": 2, "tau_max": 2, "weights": [[[0, 1], [0, 0]]]}"#).unwrap();
        assert!(matches!(load_ts_graph_json(&path), Err(Error::Schema { .. })));
        fs::write(&path, r#"{"d": 2, "tau_max": 0, "weights": [[[0, 1], [0]]]}"#).unwrap();
        assert!(matches!(load_ts_graph_json(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn estimate_document_keeps_method() {
        let est = EstimatedTsGraph {
            w_c: DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.0, 0.0]),
            w_l: vec![DMatrix::identity(2, 2) * 0.4],
        };
        let doc = GraphDocument::from_estimate(&est, "dynotears").with_metadata(serde_json::json!({"h": 0.0}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.json");
        write_graph_document(&path, &doc).unwrap();
        let back = load_graph_document(&path).unwrap();
        assert_eq!(back.method.as_deref(), Some("dynotears"));
        assert_eq!(back.to_estimate(&path).unwrap(), est);
    }

    #[test]
    fn corpus_layout_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = rng::seeded(5);
        let g = generate_er_tsgraph(&GraphGenConfig::default(), &mut r).unwrap();
        let panels: Vec<Panel> = (0..12).map(|k| random_panel(5, 10, k)).collect();
        let root = write_corpus(dir.path(), "er", &panels, &g).unwrap();
        let sets = load_corpus(&root).unwrap();
        assert_eq!(sets.len(), 12);
        for (k, s) in sets.iter().enumerate() {
            assert_eq!(s.name, format!("er/{k}"));
            assert_eq!(s.panel, panels[k]);
            assert_eq!(s.truth_ts.as_ref(), Some(&g));
            assert_eq!(s.summary().unwrap(), summary_of(&g));
        }
    }

    #[test]
    fn labeled_dataset_checks_consistency() {
        let p = random_panel(5, 2, 1);
        let mut g = WeightedTsGraph::zeros(2, 1);
        g.slice_mut(1)[(0, 1)] = 0.3;
        let right = SummaryGraph::from_edges(2, &[(0, 1)]);
        let wrong = SummaryGraph::from_edges(2, &[(1, 0)]);
        assert!(LabeledDataset::new("x", p.clone(), Some(right), Some(g.clone())).is_ok());
        assert!(LabeledDataset::new("x", p, Some(wrong), Some(g)).is_err());
    }

    fn valid_files() -> Vec<(&'static str, String)> {
        let mut r = rng::seeded(6);
        let g = generate_er_tsgraph(&GraphGenConfig::default(), &mut r).unwrap();
        vec![
            ("panel", panel_csv_string(&random_panel(6, 3, 7))),
            ("summary", summary_csv_string(&summary_of(&g))),
            ("graph", graph_json_string(&GraphDocument::from_graph(&g))),
        ]
    }

    fn load_any(kind: &str, path: &Path) -> std::result::Result<(), Error> {
        match kind {
            "panel" => load_panel_csv(path).map(drop),
            "summary" => load_summary_csv(path, None).map(drop),
            _ => load_ts_graph_json(path).map(drop),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn loaders_survive_truncation_and_garbling(
            which in 0usize..3,
            cut in 0.0f64..1.0,
            flips in prop::collection::vec((0.0f64..1.0, any::<u8>()), 0..6),
        ) {
            let files = valid_files();
            let (kind, text) = &files[which];
            let mut bytes = text.as_bytes().to_vec();
            bytes.truncate((bytes.len() as f64 * cut) as usize);
            for (pos, b) in flips {
                if !bytes.is_empty() {
                    let i = ((bytes.len() - 1) as f64 * pos) as usize;
                    bytes[i] = b;
                }
            }
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("f");
            fs::write(&path, &bytes).unwrap();
            // any typed outcome is fine; panics are not
            let res = std::panic::catch_unwind(|| load_any(kind, &path));
            prop_assert!(res.is_ok());
        }
    }
}
