use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::stats::{log_sum_exp, LN_2PI};

/// A mixture of `C` Gaussians in `n` dimensions, each with a lower-triangular
/// Cholesky factor of its covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogOutput {
    pub n: usize,
    /// Normalized log mixture weights.
    pub log_weights: Vec<f64>,
    /// `C x n`, row-major.
    pub means: Vec<f64>,
    /// `C x n x n`, row-major, zero above the diagonal.
    pub chol: Vec<f64>,
}

/// Per-component scratch filled by [`MogOutput::evaluate`].
#[derive(Debug, Clone, Default)]
pub struct MogScratch {
    /// `log w_c + log N(theta; mu_c, L_c L_c^T)`
    pub joint: Vec<f64>,
    /// `z_c = L_c^{-1} (theta - mu_c)`
    pub z: Vec<f64>,
    /// `v_c = L_c^{-T} z_c`
    pub v: Vec<f64>,
}

impl MogOutput {
    pub fn components(&self) -> usize {
        self.log_weights.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.n..(c + 1) * self.n]
    }

    pub fn chol_factor(&self, c: usize) -> &[f64] {
        &self.chol[c * self.n * self.n..(c + 1) * self.n * self.n]
    }

    /// Fills `scratch` and returns the mixture log-density at `theta`.
    pub fn evaluate(&self, theta: &[f64], scratch: &mut MogScratch, with_v: bool) -> f64 {
        let n = self.n;
        let c_count = self.components();
        scratch.joint.resize(c_count, 0.0);
        scratch.z.resize(c_count * n, 0.0);
        if with_v {
            scratch.v.resize(c_count * n, 0.0);
        }
        for c in 0..c_count {
            let mu = self.mean(c);
            let l = self.chol_factor(c);
            let z = &mut scratch.z[c * n..(c + 1) * n];
            let mut log_diag = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let mut s = theta[i] - mu[i];
                for j in 0..i {
                    s -= l[i * n + j] * z[j];
                }
                let lii = l[i * n + i];
                z[i] = s / lii;
                log_diag += lii.ln();
                sq += z[i] * z[i];
            }
            scratch.joint[c] = self.log_weights[c] - 0.5 * n as f64 * LN_2PI - log_diag - 0.5 * sq;
            if with_v {
                let v = &mut scratch.v[c * n..(c + 1) * n];
                for i in (0..n).rev() {
                    let mut s = z[i];
                    for j in i + 1..n {
                        s -= l[j * n + i] * v[j];
                    }
                    v[i] = s / l[i * n + i];
                }
            }
        }
        log_sum_exp(&scratch.joint)
    }

    pub fn log_prob(&self, theta: &[f64]) -> f64 {
        let mut scratch = MogScratch::default();
        self.evaluate(theta, &mut scratch, false)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = self.components() - 1;
        for (c, lw) in self.log_weights.iter().enumerate() {
            acc += lw.exp();
            if u < acc {
                comp = c;
                break;
            }
        }
        let n = self.n;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mu = self.mean(comp);
        let l = self.chol_factor(comp);
        (0..n)
            .map(|i| mu[i] + (0..=i).map(|j| l[i * n + j] * z[j]).sum::<f64>())
            .collect()
    }
}
