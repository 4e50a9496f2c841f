//! g-and-k distribution, sampled through its quantile function and summarized
//! by robust octile statistics.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sort_floats};

pub const DEFAULT_DRAWS: usize = 1000;

/// Maps `(A, log B, g, log(k + 1/2))` to `(A, B, g, k)`.
pub fn natural_params(unconstrained: &[f64]) -> [f64; 4] {
    [
        unconstrained[0],
        unconstrained[1].exp(),
        unconstrained[2],
        unconstrained[3].exp() - 0.5,
    ]
}

pub fn unconstrained_params(natural: &[f64]) -> [f64; 4] {
    [natural[0], natural[1].ln(), natural[2], (natural[3] + 0.5).ln()]
}

/// Quantile function evaluated at the standard-normal quantile `z`.
pub fn quantile_at(z: f64, a: f64, b: f64, g: f64, k: f64) -> f64 {
    // (1 - e^{-gz}) / (1 + e^{-gz}) = tanh(gz / 2)
    a + b * (1.0 + 0.8 * (0.5 * g * z).tanh()) * (1.0 + z * z).powf(k) * z
}

pub fn draw<R: Rng + ?Sized>(unconstrained: &[f64], count: usize, rng: &mut R) -> Result<Vec<f64>> {
    if unconstrained.len() != 4 {
        return Err(Error::ShapeMismatch { expected: 4, got: unconstrained.len() });
    }
    let [a, b, g, k] = natural_params(unconstrained);
    // z(q) for q ~ U(0,1) is a standard normal draw.
    Ok((0..count)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            quantile_at(z, a, b, g, k)
        })
        .collect())
}

/// `(S_A, S_B, S_g, S_k)` from the empirical octiles.
pub fn summarize(mut xs: Vec<f64>) -> Vec<f64> {
    sort_floats(&mut xs);
    let e: Vec<f64> = (1..=7).map(|i| quantile_sorted(&xs, i as f64 / 8.0)).collect();
    let s_b = e[5] - e[1];
    vec![
        e[3],
        s_b,
        (e[5] + e[1] - 2.0 * e[3]) / s_b,
        (e[6] - e[4] + e[2] - e[0]) / s_b,
    ]
}

pub fn simulate<R: Rng + ?Sized>(unconstrained: &[f64], draws: usize, rng: &mut R) -> Result<Vec<f64>> {
    Ok(summarize(draw(unconstrained, draws, rng)?))
}
