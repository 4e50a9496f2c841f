use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mdn, MogOutput};
use crate::stats::log_add_exp;
use crate::transform::ParamSpace;

/// A round's proposal over the working space. Learned proposals are stored as
/// the mixture the density network produced at the observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    Prior,
    Learned { mog: MogOutput },
    /// `(1 - alpha) q + alpha p_def` with `p_def` the working-space prior.
    Defensive { mog: MogOutput, alpha: f64 },
}

impl Proposal {
    pub fn log_pdf(&self, space: &ParamSpace, theta_hat: &[f64]) -> f64 {
        match self {
            Proposal::Prior => space.log_prior(theta_hat),
            Proposal::Learned { mog } => mog.log_prob(theta_hat),
            Proposal::Defensive { mog, alpha } => mixture_log_pdf(mog.log_prob(theta_hat), space.log_prior(theta_hat), *alpha),
        }
    }

    /// Draws one point and reports whether it came from the defensive part.
    pub fn sample_tagged<R: Rng + ?Sized>(&self, space: &ParamSpace, rng: &mut R) -> (Vec<f64>, bool) {
        match self {
            Proposal::Prior => (space.sample_prior(rng), true),
            Proposal::Learned { mog } => (mog.sample(rng), false),
            Proposal::Defensive { mog, alpha } => {
                if rng.random::<f64>() < *alpha {
                    (space.sample_prior(rng), true)
                } else {
                    (mog.sample(rng), false)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, space: &ParamSpace, rng: &mut R) -> Vec<f64> {
        self.sample_tagged(space, rng).0
    }

    pub fn is_defensive(&self) -> bool {
        matches!(self, Proposal::Defensive { .. })
    }
}

fn mixture_log_pdf(log_q: f64, log_def: f64, alpha: f64) -> f64 {
    log_add_exp((1.0 - alpha).ln() + log_q, alpha.ln() + log_def)
}

fn check_alpha(alpha: f64) -> Result<()> {
    // alpha = 1 is accepted here so callers can check the pure-prior limit.
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `log((1 - alpha) q(theta_hat | x_o) + alpha p_def(theta_hat))`.
pub fn defensive_proposal_logpdf(
    mdn: &Mdn,
    params: &[f64],
    alpha: f64,
    x_o: &[f64],
    space: &ParamSpace,
    theta_hat: &[f64],
) -> Result<f64> {
    check_alpha(alpha)?;
    let log_q = mdn.log_prob(params, x_o, theta_hat)?;
    Ok(mixture_log_pdf(log_q, space.log_prior(theta_hat), alpha))
}

pub fn defensive_proposal_sample<R: Rng + ?Sized>(
    mdn: &Mdn,
    params: &[f64],
    alpha: f64,
    x_o: &[f64],
    space: &ParamSpace,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    check_alpha(alpha)?;
    if count == 0 {
        return Err(Error::InvalidArgument("sample needs count >= 1".into()));
    }
    let proposal = Proposal::Defensive { mog: mdn.forward(params, x_o)?, alpha };
    Ok((0..count).map(|_| proposal.sample(space, rng)).collect())
}
