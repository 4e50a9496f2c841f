//! Benchmark generative models. Every simulator returns summary statistics
//! directly; "x" elsewhere in the crate always means a summary vector.

pub mod gandk;
pub mod lotka_volterra;
pub mod mg1;
pub mod prior;
pub mod slcp;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use prior::{prior_sample, PriorSpec};

/// Which generative process a model runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimulatorKind {
    Mg1,
    LotkaVolterra,
    Slcp,
    Gandk { draws: usize },
    /// `x = theta + noise_std * z` in one dimension; conjugate with a
    /// Gaussian prior, used for end-to-end checks.
    GaussianToy { noise_std: f64 },
}

/// A benchmark problem: prior, simulator, ground truth and observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub prior: PriorSpec,
    pub simulator: SimulatorKind,
    /// Ground-truth parameters, in the same parameterization as the prior.
    pub theta_star: Vec<f64>,
    pub s_obs: Vec<f64>,
    pub ref_std: Vec<f64>,
}

pub const MODEL_NAMES: [&str; 5] = ["mg1", "lotka_volterra", "slcp", "gandk", "gaussian_toy"];

impl ModelSpec {
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "mg1" => Ok(Self::mg1()),
            "lotka_volterra" => Ok(Self::lotka_volterra()),
            "slcp" => Ok(Self::slcp()),
            "gandk" => Ok(Self::gandk(gandk::DEFAULT_DRAWS)),
            "gaussian_toy" => Ok(Self::gaussian_toy(1.0)),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?}; expected one of {}",
                MODEL_NAMES.join(", ")
            ))),
        }
    }

    pub fn mg1() -> Self {
        ModelSpec {
            name: "mg1".into(),
            prior: PriorSpec::Box { lower: vec![0.0, 0.0, 0.0], upper: vec![10.0, 10.0, 1.0 / 3.0] },
            simulator: SimulatorKind::Mg1,
            theta_star: vec![1.0, 4.0, 0.2],
            s_obs: vec![0.0929, 0.8333, 1.4484, 1.9773, 3.1510],
            ref_std: vec![0.1049, 0.1336, 0.1006, 0.1893, 0.2918],
        }
    }

    pub fn lotka_volterra() -> Self {
        ModelSpec {
            name: "lotka_volterra".into(),
            prior: PriorSpec::Box { lower: vec![-5.0; 4], upper: vec![2.0; 4] },
            simulator: SimulatorKind::LotkaVolterra,
            theta_star: vec![0.01f64.ln(), 0.5f64.ln(), 0.0, 0.01f64.ln()],
            s_obs: vec![4.6431, 4.0170, 7.1992, 6.6024, 0.9765, 0.9237, 0.9712, 0.9078, 0.0476],
            ref_std: vec![0.3294, 0.5483, 0.6285, 0.9639, 0.0091, 0.0222, 0.0107, 0.0224, 0.1823],
        }
    }

    pub fn slcp() -> Self {
        ModelSpec {
            name: "slcp".into(),
            prior: PriorSpec::Box { lower: vec![-3.0; 5], upper: vec![3.0; 5] },
            simulator: SimulatorKind::Slcp,
            theta_star: vec![0.7, -2.9, -1.0, -0.9, 0.6],
            s_obs: vec![1.4097, -1.8396, 0.8758, -4.4767, -0.1753, -3.1562, -0.6638, -2.7063],
            ref_std: vec![1.0, 0.81, 1.0, 0.81, 1.0, 0.81, 1.0, 0.81],
        }
    }

    /// g-and-k with `draws` raw observations per dataset. Parameters live in
    /// the unconstrained space `(A, log B, g, log(k + 1/2))`.
    pub fn gandk(draws: usize) -> Self {
        ModelSpec {
            name: "gandk".into(),
            prior: PriorSpec::Gaussian { mean: vec![0.0; 4], variance: vec![4.0; 4] },
            simulator: SimulatorKind::Gandk { draws },
            theta_star: gandk::unconstrained_params(&[3.0, 1.0, 2.0, 0.5]).to_vec(),
            s_obs: vec![2.9679, 1.5339, 0.4691, 1.7889],
            ref_std: vec![0.0395, 0.1129, 0.0384, 0.1219],
        }
    }

    /// Conjugate normal-normal toy: prior N(0, 1), `x ~ N(theta, noise_std^2)`,
    /// observation `x_o = 1`.
    pub fn gaussian_toy(noise_std: f64) -> Self {
        ModelSpec {
            name: "gaussian_toy".into(),
            prior: PriorSpec::Gaussian { mean: vec![0.0], variance: vec![1.0] },
            simulator: SimulatorKind::GaussianToy { noise_std },
            theta_star: vec![0.5],
            s_obs: vec![1.0],
            ref_std: vec![noise_std],
        }
    }

    pub fn n(&self) -> usize {
        self.prior.dim()
    }

    pub fn d(&self) -> usize {
        self.s_obs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_obs.len() != self.ref_std.len() {
            return Err(Error::ShapeMismatch { expected: self.s_obs.len(), got: self.ref_std.len() });
        }
        if self.ref_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("ref_std components must be > 0".into()));
        }
        if self.theta_star.len() != self.n() || !self.prior.contains(&self.theta_star) {
            return Err(Error::InvalidArgument("theta_star must lie in the prior support".into()));
        }
        Ok(())
    }

    pub fn simulate<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match &self.simulator {
            SimulatorKind::Mg1 => mg1::simulate(theta, rng),
            SimulatorKind::LotkaVolterra => lotka_volterra::simulate(theta, rng),
            SimulatorKind::Slcp => slcp::simulate(theta, rng),
            SimulatorKind::Gandk { draws } => gandk::simulate(theta, *draws, rng),
            SimulatorKind::GaussianToy { noise_std } => {
                if theta.len() != 1 {
                    return Err(Error::ShapeMismatch { expected: 1, got: theta.len() });
                }
                let z: f64 = StandardNormal.sample(rng);
                Ok(vec![theta[0] + noise_std * z])
            }
        }
    }

    /// Normalized distance `|| (s - s_obs) / ref_std ||`.
    pub fn normalized_distance(&self, s: &[f64]) -> f64 {
        s.iter()
            .zip(self.s_obs.iter().zip(&self.ref_std))
            .map(|(v, (o, sd))| ((v - o) / sd).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
