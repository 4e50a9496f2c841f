use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{validation_loss, weighted_loss, Example};
use super::proposal::Proposal;
use super::store::{RoundRecord, RoundStore};
use crate::error::{Error, Result};
use crate::kernel::{default_ridge, ess_log, estimate_covariance, solve_tau_log, EssSchedule, ScheduleKind, TauStatus};
use crate::nn::{AdamState, Mdn, MdnArchitecture, MogOutput};
use crate::parallel::try_map_indexed;
use crate::rng::{stream, Domain};
use crate::simulators::ModelSpec;
use crate::stats::log_sum_exp;
use crate::transform::ParamSpace;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Cumulative work counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Costs {
    /// Density network forward passes, including those inside gradients.
    pub forward_passes: u64,
    pub simulator_calls: u64,
    /// Simulator calls repeated after an overflow (included in `simulator_calls`).
    pub resimulations: u64,
    pub proposal_draws: u64,
    /// Draws that fell outside the prior support and were never simulated.
    pub out_of_support: u64,
    pub defensive_mixtures: u64,
    pub learned_proposals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    pub round: usize,
    pub pool_size: usize,
    pub validation_size: usize,
    pub tau: Option<f64>,
    pub tau_status: Option<TauStatus>,
    pub ess_target: Option<f64>,
    /// ESS of the final training weights.
    pub ess: f64,
    pub epochs: usize,
    pub best_validation_loss: f64,
    /// Largest `p / p~` among this round's fresh samples.
    pub max_importance_ratio: f64,
    pub resimulations: usize,
    pub out_of_support: usize,
    /// Training stopped early on a non-finite loss.
    pub aborted: bool,
}

/// Everything needed to resume a run except the per-round sample records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnpeCheckpoint {
    pub version: u32,
    pub seed: u64,
    pub model: ModelSpec,
    pub config: TrainConfig,
    pub architecture: MdnArchitecture,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub next_proposal: Option<Proposal>,
    pub diagnostics: Vec<RoundDiagnostics>,
    pub costs: Costs,
}

enum Draw {
    Inside { theta_hat: Vec<f64>, x: Vec<f64>, log_prior: f64, resimulations: usize },
    Outside,
}

/// One seeded SNPE run.
#[derive(Debug, Clone)]
pub struct Snpe {
    model: ModelSpec,
    config: TrainConfig,
    seed: u64,
    space: ParamSpace,
    mdn: Mdn,
    params: Vec<f64>,
    adam: AdamState,
    store: RoundStore,
    next_proposal: Option<Proposal>,
    diagnostics: Vec<RoundDiagnostics>,
    costs: Costs,
}

impl Snpe {
    pub fn new(model: ModelSpec, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let space = ParamSpace::new(model.prior.clone(), config.pst)?;
        let arch = MdnArchitecture::with_capacity(model.d(), model.n(), config.hidden.clone(), config.components);
        let mdn = Mdn::new(arch)?;
        let params = mdn.init(&mut stream(seed, Domain::Init, 0, 0));
        let adam = AdamState::new(params.len(), config.learning_rate, config.weight_decay);
        Ok(Snpe {
            model,
            config,
            seed,
            space,
            mdn,
            params,
            adam,
            store: RoundStore::new(),
            next_proposal: None,
            diagnostics: Vec::new(),
            costs: Costs::default(),
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn mdn(&self) -> &Mdn {
        &self.mdn
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn store(&self) -> &RoundStore {
        &self.store
    }

    pub fn diagnostics(&self) -> &[RoundDiagnostics] {
        &self.diagnostics
    }

    pub fn costs(&self) -> &Costs {
        &self.costs
    }

    pub fn rounds_done(&self) -> usize {
        self.store.len()
    }

    pub fn is_finished(&self) -> bool {
        self.rounds_done() >= self.config.rounds
    }

    /// Runs every remaining round.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.run_round()?;
        }
        Ok(())
    }

    fn draw_one(&self, round: usize, index: usize, proposal: &Proposal) -> Result<Draw> {
        let mut prng = stream(self.seed, Domain::Proposal, round as u64, index as u64);
        let mut srng = stream(self.seed, Domain::Simulation, round as u64, index as u64);
        let mut resimulations = 0;
        loop {
            let theta_hat = proposal.sample(&self.space, &mut prng);
            let log_prior = self.space.log_prior(&theta_hat);
            if log_prior == f64::NEG_INFINITY {
                return Ok(Draw::Outside);
            }
            let theta = self.space.to_original(&theta_hat);
            let wrap = |e: Error| Error::Simulation { round, index, source: Box::new(e) };
            match self.model.simulate(&theta, &mut srng) {
                Ok(x) if x.iter().all(|v| v.is_finite()) => {
                    return Ok(Draw::Inside { theta_hat, x, log_prior, resimulations })
                }
                Ok(_) => return Err(wrap(Error::NumericalOverflow("non-finite summary statistics".into()))),
                Err(Error::SimulationOverflow { .. }) if resimulations < self.config.max_resimulations => {
                    debug!("round {round} sample {index}: simulator overflow, redrawing");
                    resimulations += 1;
                }
                Err(e) => return Err(wrap(e)),
            }
        }
    }

    fn draw_round(&self, round: usize, proposal: Proposal) -> Result<RoundRecord> {
        let n = self.config.simulations;
        let draws = try_map_indexed(n, |i| self.draw_one(round, i, &proposal))?;
        let mut rec = RoundRecord {
            round,
            proposal,
            drawn: n,
            theta_hat: Vec::new(),
            x: Vec::new(),
            validation: Vec::new(),
            log_prior: Vec::new(),
            resimulations: 0,
            out_of_support: 0,
        };
        for d in draws {
            match d {
                Draw::Inside { theta_hat, x, log_prior, resimulations } => {
                    rec.theta_hat.push(theta_hat);
                    rec.x.push(x);
                    rec.log_prior.push(log_prior);
                    rec.resimulations += resimulations;
                }
                Draw::Outside => rec.out_of_support += 1,
            }
        }
        let m = rec.len();
        if m < 2 {
            return Err(Error::NotEnoughSamples { need: 2, got: m });
        }
        let n_val = ((self.config.validation_fraction * m as f64).round() as usize).clamp(1, m - 1);
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut stream(self.seed, Domain::Split, round as u64, 0));
        rec.validation = vec![false; m];
        for &i in &idx[..n_val] {
            rec.validation[i] = true;
        }
        Ok(rec)
    }

    /// Draws, simulates and trains one round, then builds the next proposal.
    pub fn run_round(&mut self) -> Result<&RoundDiagnostics> {
        let r = self.store.len() + 1;
        if r > self.config.rounds {
            return Err(Error::InvalidArgument(format!("all {} rounds already done", self.config.rounds)));
        }
        let proposal = if r == 1 {
            Proposal::Prior
        } else {
            self.next_proposal.clone().ok_or_else(|| Error::InvalidArgument("missing proposal".into()))?
        };
        let record = self.draw_round(r, proposal)?;
        let (resims, outside) = (record.resimulations, record.out_of_support);
        self.costs.proposal_draws += record.drawn as u64;
        self.costs.simulator_calls += (record.len() + resims) as u64;
        self.costs.resimulations += resims as u64;
        self.costs.out_of_support += outside as u64;
        if outside > 0 {
            debug!("round {r}: {outside} draws outside the prior support");
        }
        if resims > 0 {
            info!("round {r}: {resims} resimulations after simulator overflow");
        }
        if r == 1 {
            self.mdn.set_standardization(&record.x);
        }
        self.store.push(record, &self.space)?;

        let (train, val, tau, tau_status, ess_target) = self.build_examples(r)?;
        let train_logw: Vec<f64> = train.iter().map(|e| e.weight.ln()).collect();
        let ess = ess_log(&train_logw)?;

        let (epochs, best, aborted) = self.train(r, &train, &val)?;

        let mog = self.mdn.forward(&self.params, &self.model.s_obs)?;
        self.costs.forward_passes += 1;
        self.next_proposal = Some(if self.config.ds {
            self.costs.defensive_mixtures += 1;
            Proposal::Defensive { mog, alpha: self.config.alpha }
        } else {
            self.costs.learned_proposals += 1;
            Proposal::Learned { mog }
        });

        let diag = RoundDiagnostics {
            round: r,
            pool_size: train.len(),
            validation_size: val.len(),
            tau,
            tau_status,
            ess_target,
            ess,
            epochs,
            best_validation_loss: best,
            max_importance_ratio: self.store.max_importance_ratio(r)?,
            resimulations: resims,
            out_of_support: outside,
            aborted,
        };
        info!(
            "round {r}: pool {} ess {:.1} tau {:?} epochs {} val {:.4}",
            diag.pool_size, diag.ess, diag.tau, diag.epochs, diag.best_validation_loss
        );
        self.diagnostics.push(diag);
        Ok(self.diagnostics.last().expect("just pushed"))
    }

    #[allow(clippy::type_complexity)]
    fn build_examples(
        &self,
        r: usize,
    ) -> Result<(Vec<Example>, Vec<Example>, Option<f64>, Option<TauStatus>, Option<f64>)> {
        let rounds: Vec<usize> = if self.config.misr { (1..=r).collect() } else { vec![r] };
        let base: Vec<Vec<f64>> = if self.config.misr {
            self.store.misr_log_weights(r)?
        } else {
            vec![self.store.single_round_log_weights(r)?]
        };
        let recs = self.store.rounds();

        // (record index, sample index, log base weight) split by role
        let mut train_ids = Vec::new();
        let mut val_ids = Vec::new();
        for (slot, &k) in rounds.iter().enumerate() {
            let rec = &recs[k - 1];
            for i in 0..rec.len() {
                let item = (k - 1, i, base[slot][i]);
                if rec.validation[i] {
                    val_ids.push(item);
                } else {
                    train_ids.push(item);
                }
            }
        }

        let mut log_k_train = vec![0.0; train_ids.len()];
        let mut log_k_val = vec![0.0; val_ids.len()];
        let (mut tau, mut status, mut target_out) = (None, None, None);
        if self.config.ack {
            let fresh = &recs[r - 1].x;
            let cov = estimate_covariance(fresh, default_ridge(fresh)?, self.config.shrinkage)?;
            let dist = |ids: &[(usize, usize, f64)]| -> Vec<f64> {
                ids.iter().map(|&(k, i, _)| cov.mahalanobis_sq(&recs[k].x[i], &self.model.s_obs)).collect()
            };
            let d_train = dist(&train_ids);
            let d_val = dist(&val_ids);
            let kind = if self.config.misr { self.config.schedule } else { ScheduleKind::Constant };
            let schedule = EssSchedule { beta: self.config.beta, kind, per_round: self.config.simulations };
            let target = schedule.target(r).min(train_ids.len() as f64);
            let lb: Vec<f64> = train_ids.iter().map(|t| t.2).collect();
            let sol = solve_tau_log(&lb, &d_train, target)?;
            if sol.status != TauStatus::Solved {
                warn!("round {r}: ESS target {target:.1} unreachable ({:?}), tau = {}", sol.status, sol.tau);
            }
            let inv = 1.0 / (2.0 * sol.tau * sol.tau);
            log_k_train = d_train.iter().map(|d| -d * inv).collect();
            log_k_val = d_val.iter().map(|d| -d * inv).collect();
            tau = Some(sol.tau);
            status = Some(sol.status);
            target_out = Some(target);
        }

        let train_logw: Vec<f64> = train_ids.iter().zip(&log_k_train).map(|(t, k)| t.2 + k).collect();
        let lse = log_sum_exp(&train_logw);
        if lse == f64::NEG_INFINITY {
            return Err(Error::ZeroWeights);
        }
        // Rescale so training weights average 1; validation shares the constant.
        let shift = lse - (train_logw.len() as f64).ln();
        let make = |ids: &[(usize, usize, f64)], log_k: &[f64]| -> Vec<Example> {
            ids.iter()
                .zip(log_k)
                .map(|(&(k, i, b), lk)| Example {
                    x: recs[k].x[i].clone(),
                    theta_hat: recs[k].theta_hat[i].clone(),
                    weight: (b + lk - shift).exp(),
                })
                .collect()
        };
        Ok((make(&train_ids, &log_k_train), make(&val_ids, &log_k_val), tau, status, target_out))
    }

    fn train(&mut self, r: usize, train: &[Example], val: &[Example]) -> Result<(usize, f64, bool)> {
        self.adam.reset();
        let active_train = train.iter().filter(|e| e.weight > 0.0).count() as u64;
        let active_val = val.iter().filter(|e| e.weight > 0.0).count() as u64;
        let mut best = validation_loss(&self.mdn, &self.params, val)?;
        self.costs.forward_passes += active_val;
        let mut best_params = self.params.clone();
        let mut since = 0;
        let mut epochs = 0;
        let mut aborted = false;
        let mut order: Vec<usize> = (0..train.len()).collect();
        'epochs: for epoch in 1..=self.config.max_epochs {
            order.shuffle(&mut stream(self.seed, Domain::Shuffle, r as u64, epoch as u64));
            for batch in order.chunks(self.config.batch_size) {
                match weighted_loss(&self.mdn, &self.params, train, batch) {
                    Ok((_, grad)) => self.adam.step(&mut self.params, &grad)?,
                    Err(e @ Error::NumericalOverflow(_)) => {
                        warn!("round {r} epoch {epoch}: {e}; keeping the best parameters so far");
                        aborted = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            self.costs.forward_passes += active_train + active_val;
            epochs = epoch;
            let v = match validation_loss(&self.mdn, &self.params, val) {
                Ok(v) => v,
                Err(e @ Error::NumericalOverflow(_)) => {
                    warn!("round {r} epoch {epoch}: {e}; keeping the best parameters so far");
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if v < best {
                best = v;
                best_params.copy_from_slice(&self.params);
                since = 0;
            } else {
                since += 1;
                if since >= self.config.patience {
                    break;
                }
            }
        }
        self.params = best_params;
        Ok((epochs, best, aborted))
    }

    /// The learned posterior at the observation, over the working space.
    pub fn posterior_mog(&self) -> Result<MogOutput> {
        self.mdn.forward(&self.params, &self.model.s_obs)
    }

    /// Posterior draws in the original parameter space.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        posterior_samples(&self.mdn, &self.params, &self.space, &self.model.s_obs, count, rng)
    }

    /// `log q(theta | x_o)` in the original parameter space.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        let th = self.space.to_working(theta)?;
        let lp = self.mdn.log_prob(&self.params, &self.model.s_obs, &th)?;
        Ok(lp + self.space.transform.log_abs_det_jacobian_forward(theta)?)
    }

    pub fn checkpoint(&self) -> SnpeCheckpoint {
        SnpeCheckpoint {
            version: CHECKPOINT_VERSION,
            seed: self.seed,
            model: self.model.clone(),
            config: self.config.clone(),
            architecture: self.mdn.architecture().clone(),
            params: self.params.clone(),
            adam: self.adam.clone(),
            next_proposal: self.next_proposal.clone(),
            diagnostics: self.diagnostics.clone(),
            costs: self.costs.clone(),
        }
    }

    /// Rebuilds a run from a checkpoint and the records of its finished rounds.
    pub fn restore(ck: SnpeCheckpoint, records: Vec<RoundRecord>) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        if records.len() != ck.diagnostics.len() {
            return Err(Error::Config(format!(
                "checkpoint covers {} rounds but {} records were given",
                ck.diagnostics.len(),
                records.len()
            )));
        }
        let space = ParamSpace::new(ck.model.prior.clone(), ck.config.pst)?;
        let mdn = Mdn::new(ck.architecture)?;
        if ck.params.len() != mdn.param_count() {
            return Err(Error::ShapeMismatch { expected: mdn.param_count(), got: ck.params.len() });
        }
        let mut store = RoundStore::new();
        for rec in records {
            store.push(rec, &space)?;
        }
        Ok(Snpe {
            model: ck.model,
            config: ck.config,
            seed: ck.seed,
            space,
            mdn,
            params: ck.params,
            adam: ck.adam,
            store,
            next_proposal: ck.next_proposal,
            diagnostics: ck.diagnostics,
            costs: ck.costs,
        })
    }
}

/// Draws from `q(. | x_o)` mapped to the original space. Draws outside the
/// prior support (possible only without the transform) are rejected.
pub fn posterior_samples<R: Rng + ?Sized>(
    mdn: &Mdn,
    params: &[f64],
    space: &ParamSpace,
    x_o: &[f64],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mog = mdn.forward(params, x_o)?;
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count.max(1) {
            return Err(Error::Degenerate("posterior has almost no mass inside the prior support".into()));
        }
        let th = mog.sample(rng);
        if space.log_prior(&th) == f64::NEG_INFINITY {
            continue;
        }
        out.push(space.to_original(&th));
    }
    Ok(out)
}
