//! Posterior quality metrics (all "lower is better" except C2ST, where 0.5
//! means indistinguishable) and the metric CSV record.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AdamState, Mdn, Mlp};
use crate::parallel::{map_indexed, try_map_indexed};
use crate::rng::{stream, Domain};
use crate::simulators::ModelSpec;
use crate::stats::{median, sigmoid};
use crate::transform::BoxTransform;

/// Returned by [`lmd`] when the median distance is exactly zero.
pub const LMD_SENTINEL: f64 = -1000.0;

pub const C2ST_FOLDS: usize = 5;
pub const C2ST_HIDDEN: usize = 20;
pub const C2ST_EPOCHS: usize = 100;
pub const C2ST_BATCH: usize = 64;
pub const C2ST_LR: f64 = 1e-3;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    let d = a.first().map(|v| v.len()).unwrap_or(0);
    if d == 0 {
        return Err(Error::InvalidArgument("samples must be non-empty vectors".into()));
    }
    if let Some(bad) = a.iter().chain(b).find(|v| v.len() != d) {
        return Err(Error::ShapeMismatch { expected: d, got: bad.len() });
    }
    Ok(d)
}

/// Median of all pairwise Euclidean distances within `points`.
pub fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    median(&mut d)
}

/// Unbiased MMD^2 with the Gaussian kernel `exp(-|a - b|^2 / (2 h^2))`.
pub fn mmd_squared_with_bandwidth(a: &[Vec<f64>], b: &[Vec<f64>], h: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| (-sq_dist(x, y) / (2.0 * h * h)).exp();
    let within = |s: &[Vec<f64>]| {
        let n = s.len() as f64;
        let sum: f64 = map_indexed(s.len(), |i| (0..s.len()).filter(|&j| j != i).map(|j| k(&s[i], &s[j])).sum::<f64>())
            .iter()
            .sum();
        sum / (n * (n - 1.0))
    };
    let cross: f64 = map_indexed(a.len(), |i| b.iter().map(|y| k(&a[i], y)).sum::<f64>()).iter().sum();
    within(a) + within(b) - 2.0 * cross / (a.len() * b.len()) as f64
}

/// `sqrt(max(0, MMD^2_u))` with the median-heuristic bandwidth over `A u B`.
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::NotEnoughSamples { need: 2, got: a.len().min(b.len()) });
    }
    check_dims(a, b)?;
    let pooled: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let h = median_pairwise_distance(&pooled);
    if !(h > 0.0) {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    Ok(mmd_squared_with_bandwidth(a, b, h).max(0.0).sqrt())
}

fn standardize(points: &mut [Vec<f64>]) {
    let n = points.len() as f64;
    let d = points[0].len();
    for j in 0..d {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for p in points.iter_mut() {
            p[j] = (p[j] - mean) / sd;
        }
    }
}

fn c2st_fold(inputs: &[Vec<f64>], labels: &[f64], test: &[usize], train: &[usize], seed: u64, fold: usize) -> f64 {
    let d = inputs[0].len();
    let mlp = Mlp::new(vec![d, C2ST_HIDDEN, C2ST_HIDDEN, 1]);
    let mut params = mlp.init(&mut stream(seed, Domain::C2st, fold as u64 + 1, 0), 1.0);
    let mut adam = AdamState::new(params.len(), C2ST_LR, 0.0);
    let mut ws = mlp.workspace();
    let mut grad = vec![0.0; params.len()];
    let mut order = train.to_vec();
    for epoch in 0..C2ST_EPOCHS {
        order.shuffle(&mut stream(seed, Domain::C2st, fold as u64 + 1, epoch as u64 + 1));
        for batch in order.chunks(C2ST_BATCH) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let logit = mlp.forward(&params, &inputs[i], &mut ws)[0];
                // d(BCE)/d(logit) = sigmoid(logit) - y
                mlp.backward(&params, &mut ws, &[(sigmoid(logit) - labels[i]) * inv], &mut grad);
            }
            adam.step(&mut params, &grad).expect("matching shapes");
        }
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let logit = mlp.forward(&params, &inputs[i], &mut ws)[0];
            (logit > 0.0) == (labels[i] > 0.5)
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Classifier two-sample test: mean held-out accuracy of a small tanh MLP
/// (two hidden layers of 20) over 5 cross-validation folds.
pub fn c2st(a: &[Vec<f64>], b: &[Vec<f64>], seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 100 {
        return Err(Error::NotEnoughSamples { need: 100, got: a.len() });
    }
    check_dims(a, b)?;
    let mut inputs: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    standardize(&mut inputs);
    let labels: Vec<f64> = (0..inputs.len()).map(|i| if i < a.len() { 0.0 } else { 1.0 }).collect();
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    idx.shuffle(&mut stream(seed, Domain::C2st, 0, 0));
    let accs = map_indexed(C2ST_FOLDS, |f| {
        let lo = f * idx.len() / C2ST_FOLDS;
        let hi = (f + 1) * idx.len() / C2ST_FOLDS;
        let test = &idx[lo..hi];
        let train: Vec<usize> = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
        c2st_fold(&inputs, &labels, test, &train, seed, f)
    });
    Ok(accs.iter().sum::<f64>() / C2ST_FOLDS as f64)
}

/// Log of the median normalized distance between the observation and one
/// simulation per parameter draw. `(seed, stream)` select the random streams.
pub fn lmd(thetas: &[Vec<f64>], model: &ModelSpec, seed: u64, stream_id: u64) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::NotEnoughSamples { need: 1, got: 0 });
    }
    let mut dists = try_map_indexed(thetas.len(), |i| {
        let mut rng = stream(seed, Domain::Lmd, stream_id, i as u64);
        model.simulate(&thetas[i], &mut rng).map(|s| model.normalized_distance(&s))
    })?;
    let m = median(&mut dists);
    if m == 0.0 {
        log::warn!("median distance is zero; reporting {LMD_SENTINEL}");
        return Ok(LMD_SENTINEL);
    }
    Ok(m.ln())
}

/// Negative log posterior density of `theta_star` in the original space.
pub fn nlog(mdn: &Mdn, params: &[f64], transform: &BoxTransform, x_o: &[f64], theta_star: &[f64]) -> Result<f64> {
    let th = transform.to_unconstrained(theta_star)?;
    let lp = mdn.log_prob(params, x_o, &th)?;
    Ok(-(lp + transform.log_abs_det_jacobian_forward(theta_star)?))
}

/// One row of the metric CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub round: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

pub const METRIC_HEADER: &str = "round,metric,value,seed";

pub fn write_metric_csv<W: Write>(mut w: W, records: &[MetricRecord]) -> Result<()> {
    writeln!(w, "{METRIC_HEADER}")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.round, r.metric, r.value, r.seed)?;
    }
    Ok(())
}

pub fn read_metric_csv(text: &str) -> Result<Vec<MetricRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRIC_HEADER) {
        return Err(Error::Config(format!("metric CSV must start with `{METRIC_HEADER}`")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Config(format!("malformed metric row `{l}`"));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(MetricRecord {
                round: f[0].parse().map_err(|_| bad())?,
                metric: f[1].to_string(),
                value: f[2].parse().map_err(|_| bad())?,
                seed: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
