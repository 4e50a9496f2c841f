//! M/G/1 queue: uniform service times, exponential inter-arrival gaps.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sort_floats};

pub const JOBS: usize = 50;

/// Simulates `JOBS` jobs and returns the raw inter-departure times.
///
/// `theta = (service lower bound, service width, arrival rate)`.
pub fn inter_departure_times<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if theta.len() != 3 {
        return Err(Error::ShapeMismatch { expected: 3, got: theta.len() });
    }
    let (lo, width, rate) = (theta[0], theta[1], theta[2]);
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::OutsideSupport(format!("M/G/1 arrival rate must be > 0, got {rate}")));
    }
    if !(lo >= 0.0) || !(width >= 0.0) {
        return Err(Error::OutsideSupport(format!("M/G/1 service bounds must be >= 0, got {lo}, {width}")));
    }
    let gaps = Exp::new(rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut arrival = 0.0;
    let mut departure = 0.0;
    let mut out = Vec::with_capacity(JOBS);
    for _ in 0..JOBS {
        let service = lo + width * rng.random::<f64>();
        arrival += gaps.sample(rng);
        let next = departure + service + (arrival - departure).max(0.0);
        out.push(next - departure);
        departure = next;
    }
    Ok(out)
}

/// Logs of the 0/25/50/75/100th percentiles of the inter-departure times.
pub fn summarize(mut inter: Vec<f64>) -> Vec<f64> {
    sort_floats(&mut inter);
    [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&p| quantile_sorted(&inter, p).ln())
        .collect()
}

pub fn simulate<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    Ok(summarize(inter_departure_times(theta, rng)?))
}
