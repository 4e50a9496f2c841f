//! Predator-prey Markov jump process simulated with Gillespie's direct method.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

pub const INITIAL_PREDATORS: i64 = 50;
pub const INITIAL_PREY: i64 = 100;
pub const DURATION: f64 = 30.0;
pub const INTERVAL: f64 = 0.2;
pub const POINTS: usize = 151;
pub const MAX_EVENTS: u64 = 1_000_000;
pub const MAX_RATE: f64 = 1e6;
pub const LOG_VAR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub predators: Vec<i64>,
    pub prey: Vec<i64>,
    /// Firing counts of predator birth, predator death, prey birth, predation.
    pub reaction_counts: [u64; 4],
    pub events: u64,
}

pub fn trajectory<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<Trajectory> {
    if theta.len() != 4 {
        return Err(Error::ShapeMismatch { expected: 4, got: theta.len() });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("Lotka-Volterra parameters must be finite".into()));
    }
    let k: Vec<f64> = theta.iter().map(|t| t.exp()).collect();

    let mut x = INITIAL_PREDATORS;
    let mut y = INITIAL_PREY;
    let mut predators = Vec::with_capacity(POINTS);
    let mut prey = Vec::with_capacity(POINTS);
    let mut counts = [0u64; 4];
    let mut events = 0u64;
    let mut t = 0.0;

    loop {
        let xy = (x * y) as f64;
        let rates = [
            (k[0] * xy).min(MAX_RATE),
            (k[1] * x as f64).min(MAX_RATE),
            (k[2] * y as f64).min(MAX_RATE),
            (k[3] * xy).min(MAX_RATE),
        ];
        let total: f64 = rates.iter().sum();
        let next_t = if total > 0.0 {
            let e: f64 = Exp1.sample(rng);
            t + e / total
        } else {
            f64::INFINITY
        };

        // Record every grid point passed before the next event.
        while predators.len() < POINTS && (predators.len() as f64) * INTERVAL < next_t {
            predators.push(x);
            prey.push(y);
        }
        if predators.len() == POINTS {
            break;
        }

        events += 1;
        if events > MAX_EVENTS {
            return Err(Error::SimulationOverflow { cap: MAX_EVENTS });
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut which = 3;
        for (i, r) in rates.iter().enumerate() {
            acc += r;
            if u < acc {
                which = i;
                break;
            }
        }
        match which {
            0 => x += 1,
            1 => x -= 1,
            2 => y += 1,
            _ => y -= 1,
        }
        counts[which] += 1;
        t = next_t;
    }

    Ok(Trajectory { predators, prey, reaction_counts: counts, events: events.min(MAX_EVENTS) })
}

fn moments(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn standardized(series: &[f64]) -> Option<Vec<f64>> {
    let (mean, var) = moments(series);
    if var <= 0.0 {
        return None;
    }
    let sd = var.sqrt();
    Some(series.iter().map(|v| (v - mean) / sd).collect())
}

fn autocorrelation(z: &Option<Vec<f64>>, lag: usize) -> f64 {
    match z {
        Some(z) => {
            let n = z.len();
            z[..n - lag].iter().zip(&z[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n - 1) as f64
        }
        None => 0.0,
    }
}

/// Log means, log variances, lag-1 and lag-2 autocorrelations of each series
/// and their cross-correlation.
pub fn summarize(traj: &Trajectory) -> Vec<f64> {
    let xs: Vec<f64> = traj.predators.iter().map(|&v| v as f64).collect();
    let ys: Vec<f64> = traj.prey.iter().map(|&v| v as f64).collect();
    let (mx, vx) = moments(&xs);
    let (my, vy) = moments(&ys);
    let zx = standardized(&xs);
    let zy = standardized(&ys);
    let cross = match (&zx, &zy) {
        (Some(a), Some(b)) => a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / (a.len() - 1) as f64,
        _ => 0.0,
    };
    vec![
        mx.ln(),
        my.ln(),
        (vx + LOG_VAR_FLOOR).ln(),
        (vy + LOG_VAR_FLOOR).ln(),
        autocorrelation(&zx, 1),
        autocorrelation(&zx, 2),
        autocorrelation(&zy, 1),
        autocorrelation(&zy, 2),
        cross,
    ]
}

pub fn simulate<R: Rng + ?Sized>(theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    Ok(summarize(&trajectory(theta, rng)?))
}
