//! Time-series graphs, summary graphs and their reachability structure.
//!
//! A [`WeightedTsGraph`] stores one `d × d` coefficient slice per lag, indexed
//! `[lag][from][to]`; slice 0 holds contemporaneous effects and must be
//! acyclic. Collapsing all lags gives a [`SummaryGraph`], which may contain
//! cycles and self-loops.

use std::ops::RangeInclusive;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lagged coefficient stack of a stationary SVAR process.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTsGraph {
    d: usize,
    weights: Vec<DMatrix<f64>>,
}

impl WeightedTsGraph {
    /// Build from slices `[W_0, W_1, .., W_tau]`; `weights[k][(i, j)]` is the
    /// coefficient of `X^i_{t-k}` in the equation for `X^j_t`.
    pub fn new(weights: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = weights.first() else {
            return Err(Error::ShapeMismatch("graph needs at least the lag-0 slice".into()));
        };
        let d = first.nrows();
        for (k, w) in weights.iter().enumerate() {
            if w.nrows() != d || w.ncols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "slice {k} is {}x{}, expected {d}x{d}",
                    w.nrows(),
                    w.ncols()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("graph slice {k}")));
            }
        }
        Ok(Self { d, weights })
    }

    pub fn zeros(d: usize, tau_max: usize) -> Self {
        Self {
            d,
            weights: vec![DMatrix::zeros(d, d); tau_max + 1],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn slice(&self, lag: usize) -> &DMatrix<f64> {
        &self.weights[lag]
    }

    pub fn slice_mut(&mut self, lag: usize) -> &mut DMatrix<f64> {
        &mut self.weights[lag]
    }

    pub fn contemporaneous(&self) -> &DMatrix<f64> {
        &self.weights[0]
    }

    pub fn lagged(&self) -> &[DMatrix<f64>] {
        &self.weights[1..]
    }

    /// Topological order of the contemporaneous slice, `None` if it is cyclic.
    pub fn contemporaneous_order(&self) -> Option<Vec<usize>> {
        topological_order(self.d, |i, j| self.weights[0][(i, j)] != 0.0)
    }

    pub fn is_contemporaneous_acyclic(&self) -> bool {
        self.contemporaneous_order().is_some()
    }

    /// Nonzero pattern of every slice.
    pub fn pattern(&self) -> AdjacencyStack {
        AdjacencyStack::from_weights(&self.weights, 0.0)
    }

    /// Set every entry with `|w| <= tol` to exactly zero.
    pub fn snap_zeros(&mut self, tol: f64) {
        for w in &mut self.weights {
            w.apply(|v| {
                if v.abs() <= tol {
                    *v = 0.0
                }
            });
        }
    }
}

/// Kahn's algorithm over an implicit edge predicate.
pub(crate) fn topological_order(d: usize, edge: impl Fn(usize, usize) -> bool) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; d];
    for i in 0..d {
        for j in 0..d {
            if edge(i, j) {
                indeg[j] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..d).filter(|&j| indeg[j] == 0).rev().collect();
    let mut order = Vec::with_capacity(d);
    while let Some(i) = ready.pop() {
        order.push(i);
        for j in (0..d).rev() {
            if edge(i, j) {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    (order.len() == d).then_some(order)
}

/// Directed graph over processes; `adj[i][j]` means `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SummaryGraph {
    d: usize,
    adj: Vec<bool>,
}

impl SummaryGraph {
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            adj: vec![false; d * d],
        }
    }

    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Self::empty(d);
        for &(i, j) in edges {
            g.set(i, j, true);
        }
        g
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = Self::empty(d);
        for i in 0..d {
            for j in 0..d {
                g.adj[i * d + j] = f(i, j);
            }
        }
        g
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        self.adj[i * self.d + j] = on;
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |i| (0..self.d).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.d).filter(move |&j| self.has_edge(i, j))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.d, |i, j| self.has_edge(j, i))
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(self.d, |i, j| self.has_edge(i, j)).is_some()
    }

    /// `reach[i][j]`: a directed path of length >= 1 leads from `i` to `j`.
    ///
    /// Computed on the condensation DAG, so the cost is one SCC pass plus a
    /// bitwise union per condensation edge.
    pub fn reachability(&self) -> Reachability {
        let d = self.d;
        let comps = strongly_connected_components(self);
        let mut comp_of = vec![0usize; d];
        for (c, members) in comps.iter().enumerate() {
            for &v in members {
                comp_of[v] = c;
            }
        }
        let cyclic: Vec<bool> = comps
            .iter()
            .map(|m| m.len() > 1 || self.has_edge(m[0], m[0]))
            .collect();
        // Tarjan emits sink components first, so successors are already done.
        let mut comp_reach: Vec<Vec<bool>> = Vec::with_capacity(comps.len());
        for (c, members) in comps.iter().enumerate() {
            let mut r = vec![false; d];
            for &u in members {
                for v in self.successors(u) {
                    let cv = comp_of[v];
                    if cv == c {
                        continue;
                    }
                    for &w in &comps[cv] {
                        r[w] = true;
                    }
                    for (x, &y) in r.iter_mut().zip(&comp_reach[cv]) {
                        *x |= y;
                    }
                }
            }
            if cyclic[c] {
                for &w in members {
                    r[w] = true;
                }
            }
            comp_reach.push(r);
        }
        let mut reach = vec![false; d * d];
        for i in 0..d {
            reach[i * d..(i + 1) * d].copy_from_slice(&comp_reach[comp_of[i]]);
        }
        Reachability { d, reach }
    }
}

/// Transitive closure of a summary graph.
#[derive(Debug, Clone)]
pub struct Reachability {
    d: usize,
    reach: Vec<bool>,
}

impl Reachability {
    #[inline]
    pub fn reaches(&self, i: usize, j: usize) -> bool {
        self.reach[i * self.d + j]
    }
}

/// Partition of the nodes into strongly connected components.
///
/// Iterative Tarjan; components come out in reverse topological order of the
/// condensation (sinks first), each sorted ascending.
pub fn strongly_connected_components(g: &SummaryGraph) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let d = g.d();
    let mut index = vec![UNSEEN; d];
    let mut lowlink = vec![0usize; d];
    let mut on_stack = vec![false; d];
    let mut stack: Vec<usize> = Vec::new();
    let mut comps = Vec::new();
    let mut next_index = 0usize;
    // (node, next successor to inspect)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..d {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut next)) = call.last_mut() {
            if let Some(w) = (*next..d).find(|&w| g.has_edge(v, w)) {
                *next = w + 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Ordered pairs `(i, j)` with `i ⟹ j` and `j ⇏ i`, sorted.
pub fn admissible_pairs(g: &SummaryGraph) -> Vec<(usize, usize)> {
    let reach = g.reachability();
    connected_pairs_with(g.d(), &reach, true)
}

/// Ordered pairs `(i, j)`, `i != j`, with `i ⟹ j`, including pairs inside
/// a cycle. Sorted.
pub fn all_connected_pairs(g: &SummaryGraph) -> Vec<(usize, usize)> {
    let reach = g.reachability();
    connected_pairs_with(g.d(), &reach, false)
}

fn connected_pairs_with(d: usize, reach: &Reachability, exclude_cyclic: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j && reach.reaches(i, j) && !(exclude_cyclic && reach.reaches(j, i)) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Summary graph of all lags.
pub fn summary_of(g: &WeightedTsGraph) -> SummaryGraph {
    summary_of_lags(g, 0..=g.tau_max())
}

/// Summary graph induced by the slices in `lags` only, e.g. `0..=0` for the
/// contemporaneous part or `1..=tau_max` for the lagged part.
pub fn summary_of_lags(g: &WeightedTsGraph, lags: RangeInclusive<usize>) -> SummaryGraph {
    let d = g.d();
    let slices: Vec<&DMatrix<f64>> = lags.filter_map(|k| g.weights.get(k)).collect();
    SummaryGraph::from_fn(d, |i, j| slices.iter().any(|w| w[(i, j)] != 0.0))
}

/// Which part of a ts-graph a statistic is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeScope {
    Contemporaneous,
    Lagged,
    Overall,
}

impl EdgeScope {
    pub const ALL: [EdgeScope; 3] = [EdgeScope::Contemporaneous, EdgeScope::Lagged, EdgeScope::Overall];

    pub fn summary(self, g: &WeightedTsGraph) -> SummaryGraph {
        match self {
            EdgeScope::Contemporaneous => summary_of_lags(g, 0..=0),
            EdgeScope::Lagged => summary_of_lags(g, 1..=g.tau_max().max(1)),
            EdgeScope::Overall => summary_of(g),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeScope::Contemporaneous => "contemp",
            EdgeScope::Lagged => "lagged",
            EdgeScope::Overall => "overall",
        }
    }
}

/// Binary edge stack `[lag][from][to]`, the unit compared by the metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyStack {
    d: usize,
    slices: Vec<Vec<bool>>,
}

impl AdjacencyStack {
    pub fn empty(d: usize, tau_max: usize) -> Self {
        Self {
            d,
            slices: vec![vec![false; d * d]; tau_max + 1],
        }
    }

    /// Entry is set iff `|w| > threshold`.
    pub fn from_weights(weights: &[DMatrix<f64>], threshold: f64) -> Self {
        let d = weights.first().map_or(0, |w| w.nrows());
        let slices = weights
            .iter()
            .map(|w| {
                let mut s = vec![false; d * d];
                for i in 0..d {
                    for j in 0..d {
                        s[i * d + j] = w[(i, j)].abs() > threshold;
                    }
                }
                s
            })
            .collect();
        Self { d, slices }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau_max(&self) -> usize {
        self.slices.len() - 1
    }

    #[inline]
    pub fn get(&self, lag: usize, i: usize, j: usize) -> bool {
        self.slices[lag][i * self.d + j]
    }

    pub fn set(&mut self, lag: usize, i: usize, j: usize, on: bool) {
        self.slices[lag][i * self.d + j] = on;
    }

    pub fn edge_count(&self) -> usize {
        self.slices.iter().flatten().filter(|&&e| e).count()
    }

    pub fn summary(&self) -> SummaryGraph {
        SummaryGraph::from_fn(self.d, |i, j| self.slices.iter().any(|s| s[i * self.d + j]))
    }

    pub fn is_contemporaneous_acyclic(&self) -> bool {
        topological_order(self.d, |i, j| self.get(0, i, j)).is_some()
    }
}

/// Parameters of the Erdős–Rényi SVAR graph generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphGenConfig {
    pub d: usize,
    /// Expected contemporaneous mean degree.
    pub d_c: f64,
    /// Expected mean degree per lag.
    pub d_l: f64,
    pub tau_max: usize,
    /// Weight decay; lag-`k` magnitudes are scaled by `1 / delta^(k-1)`.
    pub delta: f64,
    pub contemp_range: (f64, f64),
    pub lag_base_range: (f64, f64),
    pub seed: u64,
}

impl Default for GraphGenConfig {
    fn default() -> Self {
        Self {
            d: 10,
            d_c: 4.0,
            d_l: 1.0,
            tau_max: 3,
            delta: 1.1,
            contemp_range: (0.5, 2.0),
            lag_base_range: (0.3, 0.5),
            seed: 0,
        }
    }
}

impl GraphGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d < 2 {
            return bad(format!("d must be >= 2, got {}", self.d));
        }
        if !(self.delta > 1.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 1, got {}", self.delta));
        }
        for (name, (lo, hi)) in [("contemp_range", self.contemp_range), ("lag_base_range", self.lag_base_range)] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return bad(format!("{name} must satisfy 0 < low < high, got [{lo}, {hi}]"));
            }
        }
        if !(self.d_c >= 0.0 && self.d_c <= (self.d - 1) as f64) {
            return bad(format!("d_c must lie in [0, d-1] = [0, {}], got {}", self.d - 1, self.d_c));
        }
        if !(self.d_l >= 0.0 && self.d_l <= self.d as f64) {
            return bad(format!("d_l must lie in [0, d] = [0, {}], got {}", self.d, self.d_l));
        }
        Ok(())
    }
}

fn two_sided_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let mag = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Random ER ts-graph.
///
/// Contemporaneous edges are drawn on the strict lower triangle with
/// probability `d_c / (d - 1)` and then relabelled by a uniform node
/// permutation, which keeps the slice acyclic. Each lagged slice draws every
/// entry, diagonal included, with probability `d_l / d`.
pub fn generate_er_tsgraph<R: Rng + ?Sized>(cfg: &GraphGenConfig, rng: &mut R) -> Result<WeightedTsGraph> {
    cfg.validate()?;
    let d = cfg.d;
    let p_c = cfg.d_c / (d - 1) as f64;
    let p_l = cfg.d_l / d as f64;

    let mut lower = DMatrix::zeros(d, d);
    for i in 1..d {
        for j in 0..i {
            if rng.random_bool(p_c) {
                lower[(i, j)] = two_sided_uniform(rng, cfg.contemp_range.0, cfg.contemp_range.1);
            }
        }
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let mut w_c = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            w_c[(perm[i], perm[j])] = lower[(i, j)];
        }
    }

    let mut weights = vec![w_c];
    for lag in 1..=cfg.tau_max {
        let alpha = 1.0 / cfg.delta.powi(lag as i32 - 1);
        let (lo, hi) = (cfg.lag_base_range.0 * alpha, cfg.lag_base_range.1 * alpha);
        let mut w = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if rng.random_bool(p_l) {
                    w[(i, j)] = two_sided_uniform(rng, lo, hi);
                }
            }
        }
        weights.push(w);
    }
    Ok(WeightedTsGraph { d, weights })
}
