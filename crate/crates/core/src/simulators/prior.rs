use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::LN_2PI;

/// Prior over the model parameters: either a product of uniforms on a box
/// or an axis-aligned Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: Vec<f64>, variance: Vec<f64> },
}

impl PriorSpec {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("box prior needs a_j < b_j".into()));
        }
        Ok(PriorSpec::Box { lower, upper })
    }

    pub fn gaussian(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::ShapeMismatch { expected: mean.len(), got: variance.len() });
        }
        if variance.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("gaussian prior variances must be > 0".into()));
        }
        Ok(PriorSpec::Gaussian { mean, variance })
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorSpec::Box { lower, .. } => lower.len(),
            PriorSpec::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        match self {
            PriorSpec::Box { lower, upper } => theta
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(t, (a, b))| *a <= *t && *t <= *b),
            PriorSpec::Gaussian { .. } => theta.iter().all(|t| t.is_finite()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            PriorSpec::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect(),
            PriorSpec::Gaussian { mean, variance } => mean
                .iter()
                .zip(variance)
                .map(|(m, v)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + v.sqrt() * z
                })
                .collect(),
        }
    }

    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.dim());
        match self {
            PriorSpec::Box { lower, upper } => {
                if !self.contains(theta) {
                    return f64::NEG_INFINITY;
                }
                -lower.iter().zip(upper).map(|(a, b)| (b - a).ln()).sum::<f64>()
            }
            PriorSpec::Gaussian { mean, variance } => theta
                .iter()
                .zip(mean.iter().zip(variance))
                .map(|(t, (m, v))| -0.5 * (LN_2PI + v.ln() + (t - m) * (t - m) / v))
                .sum(),
        }
    }
}

/// Draws `count` independent prior samples.
pub fn prior_sample<R: Rng + ?Sized>(prior: &PriorSpec, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidArgument("prior_sample needs count >= 1".into()));
    }
    Ok((0..count).map(|_| prior.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn box3() -> PriorSpec {
        PriorSpec::uniform_box(vec![0.0; 3], vec![10.0; 3]).unwrap()
    }

    fn gauss4() -> PriorSpec {
        PriorSpec::gaussian(vec![0.0; 4], vec![4.0; 4]).unwrap()
    }

    #[test]
    fn uniform_box_mean_is_midpoint() {
        let mut rng = stream(1, Domain::Misc, 0, 0);
        let xs = prior_sample(&box3(), 10_000, &mut rng).unwrap();
        let se = 10.0 / 12f64.sqrt() / 100.0;
        for j in 0..3 {
            let m = xs.iter().map(|x| x[j]).sum::<f64>() / 1e4;
            assert!((m - 5.0).abs() < 3.0 * se, "dim {j}: {m}");
        }
        assert!(xs.iter().all(|x| box3().contains(x)));
    }

    #[test]
    fn gaussian_variance_matches() {
        let mut rng = stream(2, Domain::Misc, 0, 0);
        let xs = prior_sample(&gauss4(), 10_000, &mut rng).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
            let v = crate::stats::sample_variance(&col);
            assert!((v / 4.0 - 1.0).abs() < 0.05, "dim {j}: {v}");
        }
    }

    #[test]
    fn single_sample_inside_support() {
        let mut rng = stream(3, Domain::Misc, 0, 0);
        let xs = prior_sample(&box3(), 1, &mut rng).unwrap();
        assert_eq!(xs.len(), 1);
        assert!(box3().contains(&xs[0]));
        assert!(prior_sample(&box3(), 0, &mut rng).is_err());
    }

    #[test]
    fn logpdf_values() {
        assert!((box3().logpdf(&[1.0, 4.0, 0.2]) - 3.0 * 0.1f64.ln()).abs() < 1e-12);
        assert!((box3().logpdf(&[1.0, 4.0, 0.2]) - (-6.9078)).abs() < 1e-4);
        assert_eq!(box3().logpdf(&[11.0, 0.0, 0.0]), f64::NEG_INFINITY);
        // -4/2 * log(2 pi 4)
        let expected = -2.0 * (2.0 * std::f64::consts::PI * 4.0).ln();
        assert!((gauss4().logpdf(&[0.0; 4]) - expected).abs() < 1e-12);
        assert!((expected - (-6.4484)).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PriorSpec::uniform_box(vec![1.0], vec![1.0]).is_err());
        assert!(PriorSpec::gaussian(vec![0.0], vec![0.0]).is_err());
    }
}
