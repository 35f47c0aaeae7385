//! Projected limited-memory BFGS for box-constrained problems.
//!
//! Each step builds a quasi-Newton direction on the coordinates that are not
//! pinned at a bound, projects the trial point back into the box and
//! backtracks until the Armijo condition holds. Accepted steps therefore
//! never increase the objective.

use std::collections::VecDeque;

use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's largest entry falls below this.
    pub pgtol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 1000,
            pgtol: 1e-6,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

fn project(x: &mut DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Minimize `f` over `lo <= x <= hi`. `fg` returns the objective and writes
/// the gradient into its second argument.
pub fn minimize<F>(
    mut fg: F,
    x0: DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &LbfgsOptions,
) -> LbfgsResult
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    project(&mut x, lo, hi);
    let mut g = DVector::zeros(n);
    let mut f = fg(&x, &mut g);
    let mut trace = vec![f];
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut g_new = DVector::zeros(n);
    let mut iterations = 0;

    while iterations < opts.max_iter {
        // coordinates held at a bound by the gradient
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) || lo[i] == hi[i]))
            .collect();
        let pg = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < opts.pgtol {
            break;
        }

        let mut dir = two_loop(&g, &free, &history);
        if !(g.dot(&dir) < 0.0) {
            history.clear();
            dir = DVector::from_fn(n, |i, _| if free[i] { -g[i] } else { 0.0 });
        }
        let mut step = if history.is_empty() { (1.0 / dir.amax()).min(1.0) } else { 1.0 };

        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = &x + &dir * step;
            project(&mut trial, lo, hi);
            let delta = &trial - &x;
            let f_trial = fg(&trial, &mut g_new);
            if f_trial.is_finite() && f_trial <= f + 1e-4 * g.dot(&delta).min(0.0) && f_trial <= f {
                accepted = Some((trial, f_trial, delta));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, f_trial, s)) = accepted else {
            break;
        };
        iterations += 1;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * y.norm_squared().max(f64::MIN_POSITIVE) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - f_trial;
        x = trial;
        f = f_trial;
        std::mem::swap(&mut g, &mut g_new);
        trace.push(f);
        if decrease <= opts.ftol * f.abs().max(1.0) {
            break;
        }
    }
    LbfgsResult {
        x,
        f,
        iterations,
        trace,
    }
}

/// `-H g` restricted to free coordinates, `H` the L-BFGS inverse Hessian.
fn two_loop(g: &DVector<f64>, free: &[bool], history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mask = |v: &DVector<f64>| DVector::from_fn(v.len(), |i, _| if free[i] { v[i] } else { 0.0 });
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, &mask(y), 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let (sm, ym) = (mask(s), mask(y));
        let yy = ym.norm_squared();
        if yy > 0.0 {
            let gamma = sm.dot(&ym) / yy;
            if gamma > 0.0 {
                q *= gamma;
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * mask(y).dot(&q);
        q.axpy(a - b, &mask(s), 1.0);
    }
    -q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_quadratic() {
        // f = Σ c_i (x_i - i)²
        let n = 6;
        let fg = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let mut f = 0.0;
            for i in 0..n {
                let c = (i + 1) as f64;
                let r = x[i] - i as f64;
                f += c * r * r;
                g[i] = 2.0 * c * r;
            }
            f
        };
        let lo = DVector::from_element(n, f64::NEG_INFINITY);
        let hi = DVector::from_element(n, f64::INFINITY);
        let res = minimize(fg, DVector::zeros(n), &lo, &hi, &LbfgsOptions::default());
        for i in 0..n {
            assert!((res.x[i] - i as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn active_bounds_and_monotone_trace() {
        // Rosenbrock with x >= 1.5 on the first coordinate: optimum at (1.5, 2.25)
        let fg = |x: &DVector<f64>, g: &mut DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let lo = DVector::from_vec(vec![1.5, f64::NEG_INFINITY]);
        let hi = DVector::from_element(2, f64::INFINITY);
        let opts = LbfgsOptions {
            pgtol: 1e-9,
            ..Default::default()
        };
        let res = minimize(fg, DVector::from_vec(vec![3.0, -1.0]), &lo, &hi, &opts);
        assert!((res.x[0] - 1.5).abs() < 1e-8);
        assert!((res.x[1] - 2.25).abs() < 1e-5, "{}", res.x);
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fixed_coordinates_stay_put() {
        let fg = |x: &DVector<f64>, g: &mut DVector<f64>| {
            g[0] = 2.0 * (x[0] - 5.0);
            g[1] = 2.0 * (x[1] - 5.0);
            (x[0] - 5.0).powi(2) + (x[1] - 5.0).powi(2)
        };
        let lo = DVector::from_vec(vec![0.0, 0.0]);
        let hi = DVector::from_vec(vec![0.0, f64::INFINITY]);
        let res = minimize(fg, DVector::zeros(2), &lo, &hi, &LbfgsOptions::default());
        assert_eq!(res.x[0], 0.0);
        assert!((res.x[1] - 5.0).abs() < 1e-6);
    }
}
