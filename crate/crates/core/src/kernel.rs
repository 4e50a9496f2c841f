//! Calibration kernels, summary covariance estimation, effective sample size
//! and the adaptive bandwidth solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::LN_2PI;

pub const TAU_MIN: f64 = 1e-6;
pub const TAU_MAX: f64 = 1e6;
pub const TAU_REL_TOL: f64 = 1e-3;
pub const TAU_MAX_ITER: usize = 200;

/// Regularized summary covariance with its inverse and log-determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub sigma: Vec<f64>,
    pub sigma_inv: Vec<f64>,
    pub log_det: f64,
    pub ridge: f64,
    pub shrinkage: f64,
}

impl Covariance {
    pub fn identity(dim: usize) -> Self {
        let eye = DMatrix::<f64>::identity(dim, dim);
        Covariance {
            dim,
            sigma: eye.transpose().as_slice().to_vec(),
            sigma_inv: eye.as_slice().to_vec(),
            log_det: 0.0,
            ridge: 0.0,
            shrinkage: 0.0,
        }
    }

    pub fn from_matrix(sigma: DMatrix<f64>, ridge: f64, shrinkage: f64) -> Result<Self> {
        let dim = sigma.nrows();
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        Ok(Covariance {
            dim,
            sigma: sigma.transpose().as_slice().to_vec(),
            sigma_inv: inv.transpose().as_slice().to_vec(),
            log_det,
            ridge,
            shrinkage,
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.sigma)
    }

    /// `(x - x_o)^T Sigma^{-1} (x - x_o)`.
    pub fn mahalanobis_sq(&self, x: &[f64], x_o: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let di = x[i] - x_o[i];
            let row = &self.sigma_inv[i * d..(i + 1) * d];
            let mut s = 0.0;
            for j in 0..d {
                s += row[j] * (x[j] - x_o[j]);
            }
            acc += di * s;
        }
        acc
    }
}

/// Sample covariance `1/(N-1) sum (x_i - xbar)(x_i - xbar)^T`, shrunk toward
/// its diagonal by `shrinkage` and floored with `ridge * I`.
pub fn estimate_covariance(xs: &[Vec<f64>], ridge: f64, shrinkage: f64) -> Result<Covariance> {
    if xs.len() < 2 {
        return Err(Error::NotEnoughSamples { need: 2, got: xs.len() });
    }
    if !(0.0..=1.0).contains(&shrinkage) || !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("need ridge >= 0 and shrinkage in [0, 1]".into()));
    }
    let sigma = raw_covariance(xs)?;
    let d = sigma.nrows();
    let mut out = sigma.clone() * (1.0 - shrinkage);
    for i in 0..d {
        out[(i, i)] = sigma[(i, i)] + ridge;
    }
    Covariance::from_matrix(out, ridge, shrinkage)
}

/// Default ridge: `1e-6` times the mean of the raw sample variances.
pub fn default_ridge(xs: &[Vec<f64>]) -> Result<f64> {
    let sigma = raw_covariance(xs)?;
    let mean_diag = sigma.diagonal().mean();
    Ok(1e-6 * if mean_diag > 0.0 { mean_diag } else { 1.0 })
}

fn raw_covariance(xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if xs.len() < 2 {
        return Err(Error::NotEnoughSamples { need: 2, got: xs.len() });
    }
    let d = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::ShapeMismatch { expected: d, got: bad.len() });
    }
    let n = xs.len() as f64;
    let mut mean = DVector::<f64>::zeros(d);
    for x in xs {
        mean += DVector::from_column_slice(x);
    }
    mean /= n;
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    for x in xs {
        let c = DVector::from_column_slice(x) - &mean;
        sigma += &c * c.transpose();
    }
    Ok(sigma / (n - 1.0))
}

/// Bandwidth plus covariance: everything the Mahalanobis Gaussian kernel needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub tau: f64,
    pub cov: Covariance,
}

impl KernelState {
    pub fn new(tau: f64, cov: Covariance) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        Ok(KernelState { tau, cov })
    }

    /// Log of `(2pi)^{-d/2} |Sigma|^{-1/2} tau^{-d} exp(-m / (2 tau^2))` for a
    /// precomputed squared Mahalanobis distance `m`.
    pub fn log_weight_from_distance(&self, m: f64) -> f64 {
        let d = self.cov.dim as f64;
        -0.5 * d * LN_2PI - 0.5 * self.cov.log_det - d * self.tau.ln() - m / (2.0 * self.tau * self.tau)
    }

    pub fn log_weight(&self, x: &[f64], x_o: &[f64]) -> f64 {
        self.log_weight_from_distance(self.cov.mahalanobis_sq(x, x_o))
    }
}

/// Normalized Gaussian calibration kernel `K_tau(x, x_o)`.
pub fn kernel_weight(x: &[f64], x_o: &[f64], ks: &KernelState) -> f64 {
    ks.log_weight(x, x_o).exp()
}

/// Effective sample size `(sum w)^2 / sum w^2`.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::ZeroWeights);
    }
    let (s, s2) = weights.iter().fold((0.0, 0.0), |(s, s2), w| {
        let v = w / max;
        (s + v, s2 + v * v)
    });
    Ok(s * s / s2)
}

/// ESS of `exp(log_weights)`, computed without overflow.
pub fn ess_log(log_weights: &[f64]) -> Result<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ZeroWeights);
    }
    let (s, s2) = log_weights.iter().fold((0.0, 0.0), |(s, s2), lw| {
        let v = (lw - max).exp();
        (s + v, s2 + v * v)
    });
    Ok(s * s / s2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `f(r) = 1`
    Constant,
    /// `f(r) = ln(r - 1 + e)`
    Log,
}

pub fn schedule_f(round: usize, kind: ScheduleKind) -> f64 {
    debug_assert!(round >= 1);
    match kind {
        ScheduleKind::Constant => 1.0,
        ScheduleKind::Log => (round as f64 - 1.0 + std::f64::consts::E).ln(),
    }
}

/// ESS target `f(r) * beta * N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssSchedule {
    pub beta: f64,
    pub kind: ScheduleKind,
    pub per_round: usize,
}

impl EssSchedule {
    pub fn target(&self, round: usize) -> f64 {
        (schedule_f(round, self.kind) * self.beta * self.per_round as f64).max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauStatus {
    Solved,
    /// Target above every reachable ESS; `tau = TAU_MAX` returned.
    TargetTooHigh,
    /// Target below every reachable ESS; `tau = TAU_MIN` returned.
    TargetTooLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSolution {
    pub tau: f64,
    pub ess: f64,
    pub status: TauStatus,
}

fn ess_at(log_base: &[f64], distances: &[f64], tau: f64, buf: &mut Vec<f64>) -> f64 {
    let inv = 1.0 / (2.0 * tau * tau);
    buf.clear();
    buf.extend(log_base.iter().zip(distances).map(|(b, d)| b - d * inv));
    ess_log(buf).unwrap_or(0.0)
}

/// Finds `tau` with `ESS(tau) = target`, where the weight of sample `i` is
/// `base_i * exp(-distance_i / (2 tau^2))`. The kernel's `tau^{-d}` factor
/// cancels in the ESS and is left out.
pub fn solve_tau(base_weights: &[f64], distances: &[f64], target: f64) -> Result<TauSolution> {
    if base_weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("base weights must be finite and >= 0".into()));
    }
    let log_base: Vec<f64> = base_weights.iter().map(|w| w.ln()).collect();
    solve_tau_log(&log_base, distances, target)
}

/// [`solve_tau`] with log base weights (`-inf` for zero weight).
///
/// ESS is monotone in `tau` when the base weights are equal, but not in
/// general, so a log-spaced scan locates the largest `tau` whose ESS brackets
/// the target before bisecting.
pub fn solve_tau_log(log_base: &[f64], distances: &[f64], target: f64) -> Result<TauSolution> {
    if log_base.len() != distances.len() {
        return Err(Error::ShapeMismatch { expected: log_base.len(), got: distances.len() });
    }
    if log_base.iter().all(|b| *b == f64::NEG_INFINITY) {
        return Err(Error::ZeroWeights);
    }
    let positive = log_base.iter().filter(|b| **b > f64::NEG_INFINITY).count();
    if !(target >= 1.0) || target > log_base.len() as f64 {
        return Err(Error::InvalidArgument(format!(
            "ESS target {target} outside [1, {}]",
            log_base.len()
        )));
    }
    // Only samples with positive base weight matter.
    let (lb, dist): (Vec<f64>, Vec<f64>) = log_base
        .iter()
        .zip(distances)
        .filter(|(b, _)| **b > f64::NEG_INFINITY)
        .map(|(b, d)| (*b, *d))
        .unzip();
    debug_assert_eq!(lb.len(), positive);

    let mut buf = Vec::with_capacity(lb.len());
    let tol = TAU_REL_TOL * target;
    let (lo_ln, hi_ln) = (TAU_MIN.ln(), TAU_MAX.ln());
    const GRID: usize = 240;
    let grid: Vec<f64> = (0..=GRID).map(|i| hi_ln - (hi_ln - lo_ln) * i as f64 / GRID as f64).collect();
    let values: Vec<f64> = grid.iter().map(|l| ess_at(&lb, &dist, l.exp(), &mut buf)).collect();

    if (values[0] - target).abs() <= tol {
        return Ok(TauSolution { tau: TAU_MAX, ess: values[0], status: TauStatus::Solved });
    }
    // Walk down from TAU_MAX to the first sign change of ESS - target.
    for i in 0..GRID {
        let (a, b) = (values[i] - target, values[i + 1] - target);
        if b.abs() <= tol {
            return Ok(TauSolution { tau: grid[i + 1].exp(), ess: values[i + 1], status: TauStatus::Solved });
        }
        if a.signum() != b.signum() {
            return Ok(bisect(&lb, &dist, target, grid[i + 1], grid[i], &mut buf));
        }
    }
    let max_ess = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if target > max_ess {
        log::warn!("ESS target {target:.2} unreachable (max {max_ess:.2}); using tau = {TAU_MAX}");
        Ok(TauSolution { tau: TAU_MAX, ess: values[0], status: TauStatus::TargetTooHigh })
    } else {
        log::warn!("ESS target {target:.2} below every reachable ESS; using tau = {TAU_MIN}");
        Ok(TauSolution { tau: TAU_MIN, ess: values[GRID], status: TauStatus::TargetTooLow })
    }
}

fn bisect(lb: &[f64], dist: &[f64], target: f64, mut lo: f64, mut hi: f64, buf: &mut Vec<f64>) -> TauSolution {
    let tol = TAU_REL_TOL * target;
    let lo_above = ess_at(lb, dist, lo.exp(), buf) > target;
    let mut best = (hi.exp(), ess_at(lb, dist, hi.exp(), buf));
    for _ in 0..TAU_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let tau = mid.exp();
        let e = ess_at(lb, dist, tau, buf);
        if (e - target).abs() < (best.1 - target).abs() {
            best = (tau, e);
        }
        if (e - target).abs() <= tol {
            return TauSolution { tau, ess: e, status: TauStatus::Solved };
        }
        if (e > target) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TauSolution { tau: best.0, ess: best.1, status: TauStatus::Solved }
}
