//! Parameter-space transformation between a box prior support and R^n.
//!
//! Box dimensions use `h(t) = ln((t - a) / (b - t))`; other dimensions pass
//! through unchanged. Densities move between spaces with the exact Jacobian.

use rand::Rng;
use rand_distr::{Distribution, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulators::PriorSpec;
use crate::stats::{log_sigmoid, sigmoid};

/// Inputs closer than this to a bound are rejected.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DimTransform {
    Logit { lower: f64, upper: f64 },
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxTransform {
    pub dims: Vec<DimTransform>,
}

impl BoxTransform {
    pub fn identity(n: usize) -> Self {
        BoxTransform { dims: vec![DimTransform::Identity; n] }
    }

    pub fn logit(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch { expected: lower.len(), got: upper.len() });
        }
        let dims = lower
            .iter()
            .zip(upper)
            .map(|(&a, &b)| {
                if a < b {
                    Ok(DimTransform::Logit { lower: a, upper: b })
                } else {
                    Err(Error::InvalidArgument(format!("box bounds need a < b, got [{a}, {b}]")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(BoxTransform { dims })
    }

    /// Logit transform for box priors, identity for Gaussian ones.
    pub fn for_prior(prior: &PriorSpec) -> Result<Self> {
        match prior {
            PriorSpec::Box { lower, upper } => Self::logit(lower, upper),
            PriorSpec::Gaussian { mean, .. } => Ok(Self::identity(mean.len())),
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn is_identity(&self) -> bool {
        self.dims.iter().all(|d| matches!(d, DimTransform::Identity))
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dims.len() {
            return Err(Error::ShapeMismatch { expected: self.dims.len(), got: v.len() });
        }
        Ok(())
    }

    fn check_interior(a: f64, b: f64, t: f64) -> Result<()> {
        if !(t - a > BOUNDARY_TOL && b - t > BOUNDARY_TOL) {
            return Err(Error::OutsideSupport(format!(
                "{t} is not strictly inside ({a}, {b})"
            )));
        }
        Ok(())
    }

    pub fn to_unconstrained(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        self.dims
            .iter()
            .zip(theta)
            .map(|(d, &t)| match *d {
                DimTransform::Logit { lower, upper } => {
                    Self::check_interior(lower, upper, t)?;
                    Ok(((t - lower) / (upper - t)).ln())
                }
                DimTransform::Identity => Ok(t),
            })
            .collect()
    }

    /// Inverse map. Box dimensions always land strictly inside the bounds.
    pub fn from_unconstrained(&self, theta_hat: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta_hat.len(), self.dims.len());
        self.dims
            .iter()
            .zip(theta_hat)
            .map(|(d, &u)| match *d {
                DimTransform::Logit { lower, upper } => {
                    let w = upper - lower;
                    let t = if u <= 0.0 {
                        lower + w * sigmoid(u)
                    } else {
                        upper - w * sigmoid(-u)
                    };
                    t.clamp(lower.next_up(), upper.next_down())
                }
                DimTransform::Identity => u,
            })
            .collect()
    }

    /// `log |det dh/dtheta|` at `theta`.
    pub fn log_abs_det_jacobian_forward(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        let mut acc = 0.0;
        for (d, &t) in self.dims.iter().zip(theta) {
            if let DimTransform::Logit { lower, upper } = *d {
                Self::check_interior(lower, upper, t)?;
                acc += ((upper - lower) / ((t - lower) * (upper - t))).ln();
            }
        }
        Ok(acc)
    }

    /// `log |det dh^{-1}/dtheta_hat|` at `theta_hat`.
    pub fn log_abs_det_jacobian_inverse(&self, theta_hat: &[f64]) -> f64 {
        debug_assert_eq!(theta_hat.len(), self.dims.len());
        self.dims
            .iter()
            .zip(theta_hat)
            .map(|(d, &u)| match *d {
                DimTransform::Logit { lower, upper } => {
                    (upper - lower).ln() + log_sigmoid(u) + log_sigmoid(-u)
                }
                DimTransform::Identity => 0.0,
            })
            .sum()
    }
}

/// The prior seen from the space the density estimator works in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub prior: PriorSpec,
    pub transform: BoxTransform,
}

impl ParamSpace {
    /// With `pst` the box dimensions are mapped to R^n; otherwise the working
    /// space is the original parameter space.
    pub fn new(prior: PriorSpec, pst: bool) -> Result<Self> {
        let transform = if pst {
            BoxTransform::for_prior(&prior)?
        } else {
            BoxTransform::identity(prior.dim())
        };
        Ok(ParamSpace { prior, transform })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn to_original(&self, theta_hat: &[f64]) -> Vec<f64> {
        self.transform.from_unconstrained(theta_hat)
    }

    pub fn to_working(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.transform.to_unconstrained(theta)
    }

    /// Prior log-density in the working space.
    pub fn log_prior(&self, theta_hat: &[f64]) -> f64 {
        if self.transform.is_identity() {
            return self.prior.logpdf(theta_hat);
        }
        if let PriorSpec::Box { .. } = self.prior {
            // Uniform pushed through the logit is a product of standard logistics.
            let mut acc = 0.0;
            for (d, &u) in self.transform.dims.iter().zip(theta_hat) {
                acc += match d {
                    DimTransform::Logit { .. } => log_sigmoid(u) + log_sigmoid(-u),
                    DimTransform::Identity => unreachable!("box prior with identity dim"),
                };
            }
            return acc;
        }
        let theta = self.to_original(theta_hat);
        self.prior.logpdf(&theta) + self.transform.log_abs_det_jacobian_inverse(theta_hat)
    }

    /// Draws from the prior expressed in the working space.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.transform.is_identity() {
            return self.prior.sample(rng);
        }
        self.transform
            .dims
            .iter()
            .map(|d| match d {
                DimTransform::Logit { .. } => {
                    let u: f64 = Open01.sample(rng);
                    (u / (1.0 - u)).ln()
                }
                DimTransform::Identity => unreachable!("box prior with identity dim"),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn unit() -> BoxTransform {
        BoxTransform::logit(&[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn midpoint_maps_to_zero() {
        let t = BoxTransform::logit(&[2.0, -3.0], &[6.0, 3.0]).unwrap();
        let u = t.to_unconstrained(&[4.0, 0.0]).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(t.from_unconstrained(&[0.0, 0.0]), vec![4.0, 0.0]);
    }

    #[test]
    fn saturates_strictly_inside() {
        let t = BoxTransform::logit(&[0.0], &[10.0]).unwrap();
        for &u in &[-800.0, -50.0, 50.0, 800.0] {
            let th = t.from_unconstrained(&[u])[0];
            assert!(th > 0.0 && th < 10.0, "{u} -> {th}");
        }
    }

    #[test]
    fn boundary_inputs_are_rejected() {
        let t = unit();
        assert!(t.to_unconstrained(&[0.0]).is_err());
        assert!(t.to_unconstrained(&[1.0]).is_err());
        assert!(t.to_unconstrained(&[1.0 - 1e-13]).is_err());
        assert!(t.log_abs_det_jacobian_forward(&[1.5]).is_err());
    }

    #[test]
    fn jacobian_at_half() {
        let j = unit().log_abs_det_jacobian_forward(&[0.5]).unwrap();
        assert!((j - 4f64.ln()).abs() < 1e-15);
        assert!((j - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn roundtrip_and_jacobian_cancellation() {
        let t = BoxTransform::logit(&[0.0, 0.0, 0.0], &[10.0, 10.0, 1.0 / 3.0]).unwrap();
        let mut rng = stream(1, Domain::Misc, 0, 0);
        for _ in 0..1000 {
            let th: Vec<f64> = vec![
                0.01 + 9.98 * rng.random::<f64>(),
                0.01 + 9.98 * rng.random::<f64>(),
                0.001 + 0.33 * rng.random::<f64>(),
            ];
            let u = t.to_unconstrained(&th).unwrap();
            let back = t.from_unconstrained(&u);
            for k in 0..3 {
                assert!((back[k] - th[k]).abs() < 1e-12);
            }
            let s = t.log_abs_det_jacobian_forward(&th).unwrap() + t.log_abs_det_jacobian_inverse(&u);
            assert!(s.abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn transformed_uniform_is_standard_logistic() {
        let space = ParamSpace::new(PriorSpec::Box { lower: vec![0.0], upper: vec![1.0] }, true).unwrap();
        assert!((space.log_prior(&[0.0]).exp() - 0.25).abs() < 1e-15);
        // mass by trapezoid on a wide grid
        let (lo, hi, m) = (-40.0, 40.0, 200_000);
        let h = (hi - lo) / m as f64;
        let mass: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * space.log_prior(&[lo + i as f64 * h]).exp()
            })
            .sum::<f64>()
            * h;
        assert!((mass - 1.0).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn gaussian_prior_uses_identity() {
        let space = ParamSpace::new(PriorSpec::Gaussian { mean: vec![0.0; 2], variance: vec![4.0; 2] }, true).unwrap();
        assert!(space.transform.is_identity());
        assert_eq!(space.to_original(&[1.0, -2.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn ratio_is_same_in_both_spaces() {
        // p / p_tilde with p = U(0,1) and p_tilde = Beta(2,2), in theta and theta_hat.
        let t = unit();
        let space = ParamSpace::new(PriorSpec::Box { lower: vec![0.0], upper: vec![1.0] }, true).unwrap();
        for &th in &[0.1f64, 0.37, 0.5, 0.93] {
            let beta = (6.0 * th * (1.0 - th)).ln();
            let direct = 0.0 - beta;
            let u = t.to_unconstrained(&[th]).unwrap();
            let jac = t.log_abs_det_jacobian_inverse(&u);
            let via = space.log_prior(&u) - (beta + jac);
            assert!((direct - via).abs() < 1e-12);
        }
    }
}
