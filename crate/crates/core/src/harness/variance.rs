use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::rng::{stream, Domain};
use crate::stats::{ols_slope, LN_2PI};

pub const DEFAULT_TAUS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
const CHUNKS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub tau: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub dim: usize,
    pub draws: usize,
    pub rows: Vec<VarianceRow>,
    /// OLS slope of `log variance` against `log tau`.
    pub slope: f64,
    /// `(mu(t0) - mu(t2)) / (mu(t1) - mu(t3))` for four halving bandwidths.
    pub bias_ratio: Option<f64>,
    /// Delta-method standard error of `bias_ratio`.
    pub bias_ratio_se: Option<f64>,
}

#[derive(Clone)]
struct Sums {
    k: Vec<f64>,
    k2: Vec<f64>,
    a: f64,
    b: f64,
    aa: f64,
    bb: f64,
    ab: f64,
}

impl Sums {
    fn new(m: usize) -> Self {
        Sums { k: vec![0.0; m], k2: vec![0.0; m], a: 0.0, b: 0.0, aa: 0.0, bb: 0.0, ab: 0.0 }
    }
}

/// Monte Carlo mean and variance of the Gaussian calibration kernel
/// `K_tau(x, 0)` on the toy `theta ~ N(0, I_d)`, `x | theta ~ N(theta, I_d)`
/// with `Sigma = I`. Every bandwidth reuses the same draws.
pub fn variance_study(dim: usize, taus: &[f64], draws: usize, seed: u64) -> Result<VarianceReport> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidArgument("dimension must be 1 or 2".into()));
    }
    if taus.len() < 2 || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("need at least two positive bandwidths".into()));
    }
    if draws < 2 {
        return Err(Error::NotEnoughSamples { need: 2, got: draws });
    }
    let m = taus.len();
    let ratio = m == 4;
    let parts = map_indexed(CHUNKS, |c| {
        let lo = c * draws / CHUNKS;
        let hi = (c + 1) * draws / CHUNKS;
        let mut rng = stream(seed, Domain::Variance, dim as u64, c as u64);
        let mut s = Sums::new(m);
        let mut k = vec![0.0; m];
        for _ in lo..hi {
            let mut r2 = 0.0;
            for _ in 0..dim {
                let theta: f64 = StandardNormal.sample(&mut rng);
                let noise: f64 = StandardNormal.sample(&mut rng);
                let x = theta + noise;
                r2 += x * x;
            }
            for (j, &t) in taus.iter().enumerate() {
                k[j] = (-0.5 * dim as f64 * (LN_2PI + 2.0 * t.ln()) - r2 / (2.0 * t * t)).exp();
                s.k[j] += k[j];
                s.k2[j] += k[j] * k[j];
            }
            if ratio {
                let (a, b) = (k[0] - k[2], k[1] - k[3]);
                s.a += a;
                s.b += b;
                s.aa += a * a;
                s.bb += b * b;
                s.ab += a * b;
            }
        }
        s
    });
    let mut tot = Sums::new(m);
    for p in parts {
        for j in 0..m {
            tot.k[j] += p.k[j];
            tot.k2[j] += p.k2[j];
        }
        tot.a += p.a;
        tot.b += p.b;
        tot.aa += p.aa;
        tot.bb += p.bb;
        tot.ab += p.ab;
    }
    let n = draws as f64;
    let rows: Vec<VarianceRow> = taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| {
            let mean = tot.k[j] / n;
            VarianceRow { tau, mean, variance: (tot.k2[j] - n * mean * mean) / (n - 1.0) }
        })
        .collect();
    let lx: Vec<f64> = rows.iter().map(|r| r.tau.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let slope = ols_slope(&lx, &ly);
    let (bias_ratio, bias_ratio_se) = if ratio {
        let (ma, mb) = (tot.a / n, tot.b / n);
        let va = (tot.aa - n * ma * ma) / (n - 1.0);
        let vb = (tot.bb - n * mb * mb) / (n - 1.0);
        let cab = (tot.ab - n * ma * mb) / (n - 1.0);
        let r = ma / mb;
        let var_r = (va - 2.0 * r * cab + r * r * vb) / (n * mb * mb);
        (Some(r), Some(var_r.max(0.0).sqrt()))
    } else {
        (None, None)
    };
    Ok(VarianceReport { dim, draws, rows, slope, bias_ratio, bias_ratio_se })
}

/// Runs [`variance_study`] and, if `out` is given, writes `tau,mean,variance`.
pub fn cmd_variance_check(dim: usize, taus: &[f64], draws: usize, seed: u64, out: Option<&Path>) -> Result<VarianceReport> {
    if draws < 100_000 {
        return Err(Error::InvalidArgument(format!("variance check needs at least 1e5 draws, got {draws}")));
    }
    let report = variance_study(dim, taus, draws, seed)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut text = String::from("tau,mean,variance\n");
        for r in &report.rows {
            text.push_str(&format!("{},{},{}\n", r.tau, r.mean, r.variance));
        }
        fs::write(path, text)?;
    }
    Ok(report)
}
