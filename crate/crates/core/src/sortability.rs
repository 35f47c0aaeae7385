//! Sortability criteria and scores.
//!
//! A score is the fraction of node pairs `(i, j)` connected by a directed
//! path `i ⟹ j` whose criterion increases from `i` to `j`, with ties counted
//! as one half. [`PairMode::Admissible`] drops pairs that lie on a common
//! cycle of the summary graph, which would otherwise contribute exactly one
//! half each and pull every score toward 0.5.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{admissible_pairs, all_connected_pairs, SummaryGraph};
use crate::regression::ols;
use crate::svar::{column_moments, Panel};

/// Relative tolerance below which two criterion values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Variance,
    R2,
}

impl CriterionKind {
    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Variance => "variance",
            CriterionKind::R2 => "r2",
        }
    }
}

/// One criterion value per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVector {
    pub kind: CriterionKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Path-connected pairs not sharing a cycle.
    Admissible,
    /// Every path-connected pair.
    AllConnected,
    /// One term per (pair, path length) with a path of that length; DAGs only.
    PathWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortabilityReport {
    pub score: f64,
    pub pairs_total: usize,
    pub pairs_increasing: usize,
    pub pairs_tied: usize,
    pub mode: PairMode,
    pub criterion: CriterionKind,
}

/// `1` if `a < b`, `0.5` on a tie, `0` if `a > b`.
pub fn increasing(a: f64, b: f64) -> Result<f64> {
    Ok(match compare(a, b)? {
        Ordering3::Less => 1.0,
        Ordering3::Tie => 0.5,
        Ordering3::Greater => 0.0,
    })
}

enum Ordering3 {
    Less,
    Tie,
    Greater,
}

fn compare(a: f64, b: f64) -> Result<Ordering3> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite(format!("criterion values ({a}, {b})")));
    }
    let scale = 1f64.max(a.abs()).max(b.abs());
    Ok(if (a - b).abs() <= TIE_TOLERANCE * scale {
        Ordering3::Tie
    } else if a < b {
        Ordering3::Less
    } else {
        Ordering3::Greater
    })
}

/// Unbiased per-column sample variance.
pub fn marginal_variance(p: &Panel) -> CriterionVector {
    CriterionVector {
        kind: CriterionKind::Variance,
        values: column_moments(p.data()).into_iter().map(|(_, v)| v).collect(),
    }
}

/// Lag-embedded panel: rows `t = tau..T-1`, column `k·d + j` holds `X^j_{t-k}`.
pub(crate) fn lag_embed(data: &DMatrix<f64>, tau_max: usize) -> DMatrix<f64> {
    let (t, d) = data.shape();
    let rows = t - tau_max;
    DMatrix::from_fn(rows, d * (tau_max + 1), |r, c| {
        let (k, j) = (c / d, c % d);
        data[(r + tau_max - k, j)]
    })
}

/// Coefficient of determination of each node regressed on all other nodes at
/// lag 0 and on every node (itself included) at lags `1..=tau_max`.
///
/// With a full-rank design the values come from the inverse correlation
/// matrix of the lag embedding, `R²_i = 1 - 1 / (C⁻¹)_ii`; otherwise each node
/// falls back to a minimum-norm least-squares fit.
pub fn r2_scores(p: &Panel, tau_max: usize) -> Result<CriterionVector> {
    let (t, d) = p.data().shape();
    let needed = d * (tau_max + 1) + 1;
    if t <= needed {
        return Err(Error::InsufficientSamples { needed, got: t });
    }
    let z = lag_embed(p.data(), tau_max);
    let rows = z.nrows() as f64;
    let cols = z.ncols();
    let mut zs = z.clone();
    let mut constant = vec![false; cols];
    for (c, mut col) in zs.column_iter_mut().enumerate() {
        let m = col.sum() / rows;
        col.add_scalar_mut(-m);
        let sd = (col.norm_squared() / rows).sqrt();
        if sd == 0.0 || z.column(c).iter().all(|&v| v == z[(0, c)]) {
            constant[c] = true;
            col.fill(0.0);
        } else {
            col /= sd;
        }
    }

    let values = if !constant.iter().any(|&c| c) {
        let corr = zs.tr_mul(&zs) / rows;
        corr.clone()
            .cholesky()
            .map(|ch| ch.inverse())
            .filter(|inv| (0..d).all(|i| inv[(i, i)].is_finite() && inv[(i, i)] < 1e12))
            .map(|inv| (0..d).map(|i| 1.0 - 1.0 / inv[(i, i)]).collect::<Vec<_>>())
    } else {
        None
    };
    let values = match values {
        Some(v) => v,
        None => r2_by_least_squares(&zs, &constant, d)?,
    };
    Ok(CriterionVector {
        kind: CriterionKind::R2,
        values: values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    })
}

fn r2_by_least_squares(zs: &DMatrix<f64>, constant: &[bool], d: usize) -> Result<Vec<f64>> {
    (0..d)
        .map(|i| {
            if constant[i] {
                return Ok(0.0);
            }
            let keep: Vec<usize> = (0..zs.ncols()).filter(|&c| c != i && !constant[c]).collect();
            let design = zs.select_columns(&keep);
            let target: DVector<f64> = zs.column(i).into_owned();
            let tss = target.norm_squared();
            let fit = ols(&design, &target)?;
            Ok(1.0 - fit.rss / tss)
        })
        .collect()
}

/// Sortability of `cri` with respect to the paths of `g`.
pub fn sortability_score(cri: &CriterionVector, g: &SummaryGraph, mode: PairMode) -> Result<SortabilityReport> {
    if cri.values.len() != g.d() {
        return Err(Error::ShapeMismatch(format!(
            "{} criterion values for a {}-node graph",
            cri.values.len(),
            g.d()
        )));
    }
    let terms: Vec<(usize, usize)> = match mode {
        PairMode::Admissible => admissible_pairs(g),
        PairMode::AllConnected => all_connected_pairs(g),
        PairMode::PathWeighted => path_length_terms(g)?,
    };
    if terms.is_empty() {
        return Err(Error::NoAdmissiblePairs);
    }
    let (mut inc, mut tied) = (0usize, 0usize);
    for &(i, j) in &terms {
        match compare(cri.values[i], cri.values[j])? {
            Ordering3::Less => inc += 1,
            Ordering3::Tie => tied += 1,
            Ordering3::Greater => {}
        }
    }
    let total = terms.len();
    Ok(SortabilityReport {
        score: (inc as f64 + 0.5 * tied as f64) / total as f64,
        pairs_total: total,
        pairs_increasing: inc,
        pairs_tied: tied,
        mode,
        criterion: cri.kind,
    })
}

/// One `(i, j)` entry per `k = 1..d-1` with `(Aᵏ)_ij != 0`.
fn path_length_terms(g: &SummaryGraph) -> Result<Vec<(usize, usize)>> {
    if !g.is_acyclic() {
        return Err(Error::CyclicGraph);
    }
    let d = g.d();
    let mut terms = Vec::new();
    let mut power: Vec<bool> = (0..d * d).map(|x| g.has_edge(x / d, x % d)).collect();
    for _ in 1..d {
        if !power.iter().any(|&b| b) {
            break;
        }
        for i in 0..d {
            for j in 0..d {
                if power[i * d + j] {
                    terms.push((i, j));
                }
            }
        }
        let mut next = vec![false; d * d];
        for i in 0..d {
            for k in 0..d {
                if power[i * d + k] {
                    for j in g.successors(k) {
                        next[i * d + j] = true;
                    }
                }
            }
        }
        power = next;
    }
    Ok(terms)
}
