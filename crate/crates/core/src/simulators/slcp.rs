//! Simple likelihood, complex posterior: four draws from a 2-D Gaussian whose
//! mean and covariance depend on five parameters.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const DRAWS: usize = 4;

/// Mean, standard deviations and correlation of the 2-D Gaussian.
pub fn moments(theta: &[f64]) -> ([f64; 2], [f64; 2], f64) {
    ([theta[0], theta[1]], [theta[2] * theta[2], theta[3] * theta[3]], theta[4].tanh())
}

pub fn simulate<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if theta.len() != 5 {
        return Err(Error::ShapeMismatch { expected: 5, got: theta.len() });
    }
    let (mu, s, rho) = moments(theta);
    let tail = (1.0 - rho * rho).max(0.0).sqrt();
    let mut out = Vec::with_capacity(2 * DRAWS);
    for _ in 0..DRAWS {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        out.push(mu[0] + s[0] * z1);
        out.push(mu[1] + s[1] * (rho * z1 + tail * z2));
    }
    Ok(out)
}
