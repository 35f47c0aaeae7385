//! Continuous-optimization structure learning for SVAR processes.
//!
//! Minimizes
//!
//! ```text
//! 1/(2n) ‖X - X W_c - X_l W_l‖² + λ₁ ‖W_c‖₁ + λ₂ ‖W_l‖₁   s.t.   h(W_c) = 0
//! ```
//!
//! with an augmented Lagrangian outer loop around a bound-constrained
//! quasi-Newton inner solver. The ℓ1 terms are made smooth by writing every
//! weight as the difference of two nonnegative parts.

mod dag;
mod lbfgs;

pub use dag::{expm, h_dagness};
pub use lbfgs::{minimize as lbfgs_minimize, LbfgsOptions, LbfgsResult};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::EstimatedTsGraph;
use crate::error::{Error, Result};
use crate::graphs::{strongly_connected_components, SummaryGraph};
use crate::sortability::lag_embed;
use crate::svar::Panel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynoConfig {
    /// ℓ1 weight on the contemporaneous matrix.
    pub lambda1: f64,
    /// ℓ1 weight on the lagged matrices.
    pub lambda2: f64,
    /// Post-hoc cutoff on `|w|`.
    pub threshold: f64,
    pub max_outer: usize,
    pub h_tol: f64,
    pub rho_max: f64,
    /// Inner iterations per subproblem.
    pub max_inner: usize,
}

impl Default for DynoConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.05,
            lambda2: 0.05,
            threshold: 0.1,
            max_outer: 100,
            h_tol: 1e-8,
            rho_max: 1e16,
            max_inner: 1000,
        }
    }
}

impl DynoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda1 >= 0.0
            && self.lambda2 >= 0.0
            && self.threshold >= 0.0
            && self.h_tol > 0.0
            && self.rho_max > 1.0
            && self.max_outer > 0
            && self.max_inner > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("dynotears config out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynoFit {
    /// Thresholded weights with an acyclic contemporaneous part.
    pub estimate: EstimatedTsGraph,
    /// Solver output before thresholding.
    pub raw: EstimatedTsGraph,
    /// `h(W_c)` of the raw solution reached `h_tol`.
    pub converged: bool,
    pub h: f64,
    pub rho: f64,
    pub outer_iterations: usize,
    /// Contemporaneous edges dropped to break cycles after thresholding.
    pub repaired_edges: usize,
    /// Augmented objective along each inner solve.
    pub inner_traces: Vec<Vec<f64>>,
}

impl DynoFit {
    /// Turn an unconverged fit into [`Error::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                h: self.h,
                outer: self.outer_iterations,
            })
        }
    }
}

/// Least-squares part in Gram form over `B = [W_c; W_1; ..; W_tau]`.
struct Problem {
    d: usize,
    p: usize,
    /// `ZᵀZ / n`
    gram: DMatrix<f64>,
    /// `Zᵀ X / n`
    cross: DMatrix<f64>,
    /// `‖X‖² / n`
    scale: f64,
    lambda1: f64,
    lambda2: f64,
}

impl Problem {
    fn new(p: &Panel, tau_max: usize, cfg: &DynoConfig) -> Self {
        let d = p.d();
        let mut z = lag_embed(p.data(), tau_max);
        let n = z.nrows() as f64;
        // centered copy: the model has no intercept
        for j in 0..d {
            let col = p.data().column(j);
            let m = col.sum() / col.len() as f64;
            for k in 0..=tau_max {
                z.column_mut(k * d + j).add_scalar_mut(-m);
            }
        }
        let x = z.columns(0, d);
        Self {
            d,
            p: z.ncols(),
            gram: z.tr_mul(&z) / n,
            cross: z.tr_mul(&x) / n,
            scale: x.norm_squared() / n,
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
        }
    }

    fn len(&self) -> usize {
        2 * self.p * self.d
    }

    fn weights(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let half = self.p * self.d;
        DMatrix::from_fn(self.p, self.d, |r, c| {
            let k = c * self.p + r;
            x[k] - x[half + k]
        })
    }

    fn penalty(&self, row: usize) -> f64 {
        if row < self.d {
            self.lambda1
        } else {
            self.lambda2
        }
    }

    /// `0.5·(s - 2 tr(BᵀC) + tr(BᵀGB))` and its gradient `GB - C`.
    fn smooth_loss(&self, b: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let gb = &self.gram * b;
        let loss = 0.5 * (self.scale - 2.0 * b.dot(&self.cross) + b.dot(&gb));
        (loss, gb - &self.cross)
    }

    /// Smooth part of the augmented Lagrangian: loss + α h + ρ/2 h².
    fn smooth(&self, b: &DMatrix<f64>, alpha: f64, rho: f64) -> (f64, DMatrix<f64>) {
        let (loss, mut grad) = self.smooth_loss(b);
        let w = b.rows(0, self.d).into_owned();
        let (h, gh) = h_dagness(&w);
        let mut top = grad.rows_mut(0, self.d);
        top += gh * (alpha + rho * h);
        (loss + alpha * h + 0.5 * rho * h * h, grad)
    }

    fn objective(&self, x: &DVector<f64>, g: &mut DVector<f64>, alpha: f64, rho: f64) -> f64 {
        let b = self.weights(x);
        let (f, grad) = self.smooth(&b, alpha, rho);
        let half = self.p * self.d;
        let mut l1 = 0.0;
        for c in 0..self.d {
            for r in 0..self.p {
                let k = c * self.p + r;
                let lam = self.penalty(r);
                l1 += lam * (x[k] + x[half + k]);
                g[k] = grad[(r, c)] + lam;
                g[half + k] = -grad[(r, c)] + lam;
            }
        }
        f + l1
    }

    fn bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let half = self.p * self.d;
        let lo = DVector::zeros(self.len());
        let mut hi = DVector::from_element(self.len(), f64::INFINITY);
        for i in 0..self.d {
            let k = i * self.p + i;
            hi[k] = 0.0;
            hi[half + k] = 0.0;
        }
        (lo, hi)
    }

    fn split(&self, b: &DMatrix<f64>) -> EstimatedTsGraph {
        let d = self.d;
        let tau = self.p / d - 1;
        EstimatedTsGraph {
            w_c: b.rows(0, d).into_owned(),
            w_l: (1..=tau).map(|k| b.rows(k * d, d).into_owned()).collect(),
        }
    }
}

pub fn fit(p: &Panel, tau_max: usize, cfg: &DynoConfig) -> Result<DynoFit> {
    cfg.validate()?;
    let (t, d) = p.data().shape();
    let needed = d * (tau_max + 1) + 1;
    if t <= needed {
        return Err(Error::InsufficientSamples { needed, got: t });
    }
    if p.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("panel".into()));
    }
    let prob = Problem::new(p, tau_max, cfg);
    let (lo, hi) = prob.bounds();
    let opts = LbfgsOptions {
        max_iter: cfg.max_inner,
        ..Default::default()
    };

    let mut x = DVector::zeros(prob.len());
    let (mut rho, mut alpha, mut h) = (1.0f64, 0.0f64, f64::INFINITY);
    let mut traces = Vec::new();
    let mut outer = 0;
    while outer < cfg.max_outer {
        outer += 1;
        let mut x_new;
        let mut h_new;
        loop {
            let res = lbfgs_minimize(|v, g| prob.objective(v, g, alpha, rho), x.clone(), &lo, &hi, &opts);
            x_new = res.x;
            traces.push(res.trace);
            h_new = h_dagness(&prob.weights(&x_new).rows(0, d).into_owned()).0;
            if h_new > 0.25 * h && rho < cfg.rho_max {
                rho *= 10.0;
            } else {
                break;
            }
        }
        x = x_new;
        h = h_new;
        alpha += rho * h;
        if h <= cfg.h_tol || rho >= cfg.rho_max {
            break;
        }
    }
    let converged = h <= cfg.h_tol;
    if !converged {
        log::warn!("dynotears stopped with h = {h:.3e} after {outer} outer iterations (rho = {rho:.1e})");
    }

    let raw = prob.split(&prob.weights(&x));
    let mut estimate = raw.clone();
    for w in std::iter::once(&mut estimate.w_c).chain(estimate.w_l.iter_mut()) {
        w.apply(|v| {
            if v.abs() <= cfg.threshold {
                *v = 0.0
            }
        });
    }
    let repaired_edges = break_cycles(&mut estimate.w_c);
    Ok(DynoFit {
        estimate,
        raw,
        converged,
        h,
        rho,
        outer_iterations: outer,
        repaired_edges,
        inner_traces: traces,
    })
}

/// Zero the weakest edge inside a cycle until the pattern is acyclic.
/// Returns the number of edges removed.
pub(crate) fn break_cycles(w: &mut DMatrix<f64>) -> usize {
    let d = w.nrows();
    let mut removed = 0;
    loop {
        let g = SummaryGraph::from_fn(d, |i, j| w[(i, j)] != 0.0);
        let mut comp = vec![usize::MAX; d];
        let mut cyclic = false;
        for (c, members) in strongly_connected_components(&g).into_iter().enumerate() {
            for &v in &members {
                comp[v] = c;
            }
            cyclic |= members.len() > 1 || g.has_edge(members[0], members[0]);
        }
        if !cyclic {
            return removed;
        }
        let weakest = g
            .edges()
            .filter(|&(i, j)| comp[i] == comp[j])
            .min_by(|&(a, b), &(c, e)| w[(a, b)].abs().total_cmp(&w[(c, e)].abs()))
            .expect("a cyclic component has an edge");
        w[weakest] = 0.0;
        removed += 1;
    }
}
