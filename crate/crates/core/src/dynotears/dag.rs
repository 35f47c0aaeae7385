//! Trace-exponential acyclicity measure.

use nalgebra::DMatrix;

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series. The series is summed until the next term is negligible relative
/// to the partial sum, so the truncation order adapts to the input.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);

    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= f64::EPSILON * 1e-2 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `h(W) = tr(exp(W ∘ W)) - d` and its gradient `exp(W ∘ W)ᵀ ∘ 2W`.
///
/// `h` is zero exactly when the nonzero pattern of `W` is acyclic and grows
/// with the weight carried by cycles.
pub fn h_dagness(w: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let d = w.nrows();
    let e = expm(&w.component_mul(w));
    let value = e.trace() - d as f64;
    let grad = e.transpose().component_mul(w) * 2.0;
    (value.max(0.0), grad)
}
