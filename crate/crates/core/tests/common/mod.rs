#![allow(dead_code)]

use rand::Rng;
use snpe_core::nn::{Mdn, MdnArchitecture};
use snpe_core::rng::{stream, Domain};

/// Two-sided one-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic critical value at level 0.01.
pub fn ks_critical_01(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// A small density network with perturbed parameters so that every head
/// output depends on the input.
pub fn random_mdn(d: usize, n: usize, components: usize, seed: u64) -> (Mdn, Vec<f64>) {
    let mdn = Mdn::new(MdnArchitecture::with_capacity(d, n, vec![8, 8], components)).unwrap();
    let mut rng = stream(seed, Domain::Misc, 0, 0);
    let p = mdn.init(&mut rng).into_iter().map(|v| v + 0.4 * (rng.random::<f64>() - 0.5)).collect();
    (mdn, p)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}
