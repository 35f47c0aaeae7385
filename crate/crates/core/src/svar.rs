//! Simulation of stationary SVAR processes.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::WeightedTsGraph;
use crate::rng;

/// Spectral radius must stay below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-6;

const OVERFLOW_LIMIT: f64 = 1e12;

/// `T × d` observation matrix; row `t` is the state at time step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    names: Vec<String>,
    data: DMatrix<f64>,
}

impl Panel {
    pub fn new(names: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} column names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        if data.nrows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 1,
                got: data.nrows(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (t, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::NonFinite(format!("panel row {t}, column {j}")));
        }
        Ok(Self { names, data })
    }

    /// Panel with generated column names `X0, X1, ...`.
    pub fn from_data(data: DMatrix<f64>) -> Result<Self> {
        let names = (0..data.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(names, data)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<f64> {
        self.data
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Samples kept after burn-in.
    pub n: usize,
    pub burn_in: usize,
    /// Per-node noise standard deviation; `None` means 1.0 everywhere.
    pub noise_std: Option<Vec<f64>>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            burn_in: 1000,
            noise_std: None,
            seed,
        }
    }

    pub fn rng(&self) -> rng::Rng {
        rng::seeded(self.seed)
    }

    fn noise_for(&self, d: usize) -> Result<Vec<f64>> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n must be >= 2, got {}", self.n)));
        }
        match &self.noise_std {
            None => Ok(vec![1.0; d]),
            Some(s) if s.len() != d => Err(Error::InvalidConfig(format!(
                "noise_std has {} entries for {d} nodes",
                s.len()
            ))),
            Some(s) if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) => {
                Err(Error::InvalidConfig("noise_std entries must be positive".into()))
            }
            Some(s) => Ok(s.clone()),
        }
    }
}

/// Spectral radius of the companion matrix of the reduced-form VAR
/// `X_t = Σ_k B_k X_{t-k} + (I - W_cᵀ)⁻¹ η_t`, `B_k = (I - W_cᵀ)⁻¹ W_kᵀ`.
pub fn companion_spectral_radius(g: &WeightedTsGraph) -> Result<f64> {
    let d = g.d();
    let tau = g.tau_max();
    let a = DMatrix::<f64>::identity(d, d) - g.contemporaneous().transpose();
    let lu = a.lu();
    let inv = lu.try_inverse().ok_or(Error::SingularContemporaneous)?;
    if inv.iter().any(|v| !v.is_finite()) || inv.amax() > 1e14 {
        return Err(Error::SingularContemporaneous);
    }
    if g.lagged().iter().all(|w| w.iter().all(|&v| v == 0.0)) {
        return Ok(0.0);
    }
    let m = d * tau;
    let mut comp = DMatrix::<f64>::zeros(m, m);
    for k in 1..=tau {
        let b = &inv * g.slice(k).transpose();
        comp.view_mut((0, (k - 1) * d), (d, d)).copy_from(&b);
    }
    for r in d..m {
        comp[(r, r - d)] = 1.0;
    }
    Ok(gelfand_radius(comp))
}

/// `ρ(A) = lim ‖A^k‖^{1/k}`, evaluated at `k = 2^60` by normalized repeated
/// squaring. Companion matrices are badly balanced and the unshifted Schur
/// iteration does not always converge on them; squaring always terminates.
fn gelfand_radius(mut m: DMatrix<f64>) -> f64 {
    const SQUARINGS: i32 = 60;
    let s = m.amax();
    if s == 0.0 {
        return 0.0;
    }
    m /= s;
    let mut log_norm = s.ln();
    for j in 0..SQUARINGS {
        let sq = &m * &m;
        let s = sq.amax();
        if s == 0.0 || !s.is_finite() {
            return 0.0;
        }
        m = sq / s;
        // log‖A^(2^(j+1))‖ = 2·log‖A^(2^j)‖ + ln s, kept divided by 2^(j+1).
        log_norm += s.ln() / 2f64.powi(j + 1);
    }
    log_norm.exp()
}

/// Stationarity of the SVAR process defined by `g`.
pub fn is_stable(g: &WeightedTsGraph) -> Result<bool> {
    Ok(companion_spectral_radius(g)? < 1.0 - STABILITY_MARGIN)
}

/// Simulate `cfg.burn_in + cfg.n` steps from a zero initial state and keep
/// the last `cfg.n`.
///
/// Contemporaneous effects are resolved in topological order of `W_c`, so
/// each step costs one pass over the parent lists.
pub fn simulate<R: Rng + ?Sized>(g: &WeightedTsGraph, cfg: &SimConfig, rng: &mut R) -> Result<Panel> {
    let d = g.d();
    let tau = g.tau_max();
    let noise_std = cfg.noise_for(d)?;
    let order = g.contemporaneous_order().ok_or(Error::CyclicContemporaneous)?;
    let radius = companion_spectral_radius(g)?;
    if radius >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { radius });
    }

    // parents[j] = (lag, i, a^j_{i,t-lag})
    let parents: Vec<Vec<(usize, usize, f64)>> = (0..d)
        .map(|j| {
            let mut p = Vec::new();
            for k in 0..=tau {
                for i in 0..d {
                    let w = g.slice(k)[(i, j)];
                    if w != 0.0 {
                        p.push((k, i, w));
                    }
                }
            }
            p
        })
        .collect();

    let total = cfg.burn_in + cfg.n;
    let mut hist = vec![0.0f64; total * d];
    let mut noise = vec![0.0f64; d];
    for t in 0..total {
        for (e, s) in noise.iter_mut().zip(&noise_std) {
            let z: f64 = StandardNormal.sample(rng);
            *e = s * z;
        }
        for &j in &order {
            let mut v = noise[j];
            for &(k, i, w) in &parents[j] {
                if k <= t {
                    v += w * hist[(t - k) * d + i];
                }
            }
            if !(v.abs() <= OVERFLOW_LIMIT) {
                return Err(Error::NumericalOverflow { step: t });
            }
            hist[t * d + j] = v;
        }
    }
    let data = DMatrix::from_fn(cfg.n, d, |t, j| hist[(cfg.burn_in + t) * d + j]);
    Panel::from_data(data)
}

/// Per-column mean and unbiased variance.
pub(crate) fn column_moments(data: &DMatrix<f64>) -> Vec<(f64, f64)> {
    let t = data.nrows() as f64;
    data.column_iter()
        .map(|c| {
            let mean = c.sum() / t;
            let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean, ss / (t - 1.0))
        })
        .collect()
}

/// Shift and scale every column to sample mean 0 and unbiased variance 1.
pub fn standardize(p: &Panel) -> Result<Panel> {
    let moments = column_moments(p.data());
    let mut data = p.data().clone();
    for (j, (mean, var)) in moments.into_iter().enumerate() {
        let col = p.data().column(j);
        if col.iter().all(|&v| v == col[0]) || var <= 0.0 {
            return Err(Error::DegenerateColumn { column: j });
        }
        let sd = var.sqrt();
        data.column_mut(j).apply(|v| *v = (*v - mean) / sd);
    }
    Panel::new(p.names().to_vec(), data)
}
