//! Population Monte Carlo ABC for reference posteriors.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ess, Covariance};
use crate::parallel::map_indexed;
use crate::rng::{stream, Domain};
use crate::simulators::ModelSpec;
use crate::stats::{log_sum_exp, median, LN_2PI};

pub const DEFAULT_POPULATION: usize = 1000;
pub const REFERENCE_BUDGET: usize = 500_000;
pub const DESK_BUDGET: usize = 50_000;
pub const REFERENCE_VERSION: u32 = 1;

/// Simulations attempted per parallel batch inside a generation.
const BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcPopulation {
    pub generation: usize,
    /// Original parameter space.
    pub particles: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    pub epsilon: f64,
    /// Cumulative simulator calls when this population completed.
    pub simulations: usize,
    /// Weight ESS before any resampling.
    pub ess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SmcTrace {
    pub populations: Vec<SmcPopulation>,
    pub simulations: usize,
}

impl SmcTrace {
    pub fn last(&self) -> Option<&SmcPopulation> {
        self.populations.last()
    }
}

struct Perturbation {
    chol: DMatrix<f64>,
    cov: Covariance,
}

impl Perturbation {
    /// `N(0, 2 * weighted covariance)`, with a small ridge if needed.
    fn fit(particles: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let n = particles[0].len();
        let mut mean = vec![0.0; n];
        for (p, w) in particles.iter().zip(weights) {
            for j in 0..n {
                mean[j] += w * p[j];
            }
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for (p, w) in particles.iter().zip(weights) {
            for a in 0..n {
                for b in 0..n {
                    m[(a, b)] += 2.0 * w * (p[a] - mean[a]) * (p[b] - mean[b]);
                }
            }
        }
        let mut ridge = 0.0;
        let scale = (m.trace() / n as f64).max(1e-300);
        for _ in 0..20 {
            let mut s = m.clone();
            for j in 0..n {
                s[(j, j)] += ridge;
            }
            if let Some(ch) = s.clone().cholesky() {
                return Ok(Perturbation { chol: ch.l(), cov: Covariance::from_matrix(s, ridge, 0.0)? });
            }
            ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 10.0 };
        }
        Err(Error::Degenerate("particle covariance is singular".into()))
    }

    fn sample<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let n = center.len();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        (0..n).map(|i| center[i] + (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum::<f64>()).collect()
    }

    fn log_pdf(&self, x: &[f64], center: &[f64]) -> f64 {
        -0.5 * (x.len() as f64 * LN_2PI + self.cov.log_det + self.cov.mahalanobis_sq(x, center))
    }
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

enum Attempt {
    /// Perturbed outside the prior support; no simulation spent.
    Outside,
    Simulated(Option<(Vec<f64>, f64)>),
}

fn attempt(model: &ModelSpec, theta: Vec<f64>, rng: &mut impl Rng) -> Result<Attempt> {
    match model.simulate(&theta, rng) {
        Ok(s) => {
            let d = model.normalized_distance(&s);
            Ok(Attempt::Simulated(if d.is_finite() { Some((theta, d)) } else { None }))
        }
        Err(Error::SimulationOverflow { .. }) => Ok(Attempt::Simulated(None)),
        Err(e) => Err(e),
    }
}

/// PMC-ABC: the first generation is a prior sample (`epsilon = inf`); each
/// later generation uses the median accepted distance of the previous one as
/// its tolerance, perturbs resampled particles with `N(0, 2 Cov_w)`, and
/// reweights by prior over the perturbation mixture. Multinomial resampling
/// when the weight ESS drops below half the population. Stops when the
/// simulation budget is spent; the incomplete last generation is dropped.
pub fn smc_abc(model: &ModelSpec, population: usize, budget: usize, seed: u64) -> Result<SmcTrace> {
    if population < 2 {
        return Err(Error::InvalidArgument("population must be >= 2".into()));
    }
    model.validate()?;
    let mut trace = SmcTrace::default();
    let mut sims = 0usize;

    // generation 0: prior sample
    let mut accepted: Vec<(Vec<f64>, f64)> = Vec::with_capacity(population);
    let mut next = 0u64;
    while accepted.len() < population && sims < budget {
        let take = BATCH.min(budget - sims);
        let results = map_indexed(take, |i| {
            let mut rng = stream(seed, Domain::Smc, 0, next + i as u64);
            let theta = model.prior.sample(&mut rng);
            attempt(model, theta, &mut rng)
        });
        next += take as u64;
        for r in results {
            if accepted.len() == population {
                break;
            }
            sims += 1;
            if let Attempt::Simulated(Some(p)) = r? {
                accepted.push(p);
            }
        }
    }
    if accepted.len() < population {
        return Err(Error::BudgetExhausted { budget, partial: Box::new(SmcTrace { populations: vec![], simulations: sims }) });
    }
    let (particles, distances): (Vec<_>, Vec<_>) = accepted.into_iter().unzip();
    trace.populations.push(SmcPopulation {
        generation: 0,
        particles,
        weights: vec![1.0 / population as f64; population],
        distances,
        epsilon: f64::INFINITY,
        simulations: sims,
        ess: population as f64,
    });
    trace.simulations = sims;

    for generation in 1.. {
        let prev = trace.populations.last().expect("non-empty");
        let epsilon = median(&mut prev.distances.clone());
        if !(epsilon < prev.epsilon) {
            log::info!("tolerance stopped decreasing at generation {generation}");
            break;
        }
        let kernel = Perturbation::fit(&prev.particles, &prev.weights)?;
        let mut accepted: Vec<(Vec<f64>, f64)> = Vec::with_capacity(population);
        let mut next = 0u64;
        while accepted.len() < population && sims < budget {
            let results = map_indexed(BATCH, |i| {
                let mut rng = stream(seed, Domain::Smc, generation as u64, next + i as u64);
                let j = pick(&prev.weights, &mut rng);
                let theta = kernel.sample(&prev.particles[j], &mut rng);
                if !model.prior.contains(&theta) {
                    return Ok(Attempt::Outside);
                }
                attempt(model, theta, &mut rng)
            });
            next += BATCH as u64;
            for r in results {
                if accepted.len() == population || sims == budget {
                    break;
                }
                if let Attempt::Simulated(res) = r? {
                    sims += 1;
                    if let Some((theta, d)) = res {
                        if d <= epsilon {
                            accepted.push((theta, d));
                        }
                    }
                }
            }
        }
        if accepted.len() < population {
            trace.simulations = sims;
            log::info!("budget of {budget} spent during generation {generation}");
            break;
        }
        let (particles, distances): (Vec<_>, Vec<_>) = accepted.into_iter().unzip();
        let log_w: Vec<f64> = map_indexed(population, |i| {
            let terms: Vec<f64> = prev
                .particles
                .iter()
                .zip(&prev.weights)
                .map(|(c, w)| w.ln() + kernel.log_pdf(&particles[i], c))
                .collect();
            model.prior.logpdf(&particles[i]) - log_sum_exp(&terms)
        });
        let lse = log_sum_exp(&log_w);
        let mut weights: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
        let w_ess = ess(&weights)?;
        let (mut particles, mut distances) = (particles, distances);
        if w_ess < population as f64 / 2.0 {
            let mut rng = stream(seed, Domain::Smc, generation as u64, u64::MAX);
            let idx: Vec<usize> = (0..population).map(|_| pick(&weights, &mut rng)).collect();
            particles = idx.iter().map(|&i| particles[i].clone()).collect();
            distances = idx.iter().map(|&i| distances[i]).collect();
            weights = vec![1.0 / population as f64; population];
        }
        trace.populations.push(SmcPopulation {
            generation,
            particles,
            weights,
            distances,
            epsilon,
            simulations: sims,
            ess: w_ess,
        });
        trace.simulations = sims;
        if sims >= budget {
            break;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub budget: usize,
    pub population: usize,
    pub generations: usize,
    pub simulations: usize,
    pub final_epsilon: f64,
    pub count: usize,
}

/// Equally weighted reference draws with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePosterior {
    pub meta: ReferenceMeta,
    pub samples: Vec<Vec<f64>>,
}

/// Runs [`smc_abc`] and resamples the final population to `count` draws.
pub fn reference_posterior(
    model: &ModelSpec,
    count: usize,
    population: usize,
    budget: usize,
    seed: u64,
) -> Result<ReferencePosterior> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let trace = smc_abc(model, population, budget, seed)?;
    let last = trace.last().expect("smc_abc returns at least one population");
    let mut rng = stream(seed, Domain::Reference, 0, 0);
    let samples = (0..count).map(|_| last.particles[pick(&last.weights, &mut rng)].clone()).collect();
    Ok(ReferencePosterior {
        meta: ReferenceMeta {
            version: REFERENCE_VERSION,
            model: model.name.clone(),
            seed,
            budget,
            population,
            generations: trace.populations.len(),
            simulations: trace.simulations,
            final_epsilon: last.epsilon,
            count,
        },
        samples,
    })
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

impl ReferencePosterior {
    /// Writes `path` (CSV, one draw per row) and `path.json` (metadata).
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.samples.first().map(|s| s.len()).unwrap_or(0);
        let mut text = (1..=n).map(|j| format!("theta_{j}")).collect::<Vec<_>>().join(",");
        text.push('\n');
        for s in &self.samples {
            text.push_str(&s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            text.push('\n');
        }
        std::fs::write(path, text)?;
        // serde_json cannot encode inf, so an infinite tolerance is stored as null
        let mut meta = serde_json::to_value(&self.meta)?;
        if !self.meta.final_epsilon.is_finite() {
            meta["final_epsilon"] = serde_json::Value::Null;
        }
        std::fs::write(sidecar(path), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut meta: serde_json::Value = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
        if meta["final_epsilon"].is_null() {
            meta["final_epsilon"] = serde_json::json!(f64::MAX);
        }
        let mut meta: ReferenceMeta = serde_json::from_value(meta)?;
        if meta.final_epsilon == f64::MAX {
            meta.final_epsilon = f64::INFINITY;
        }
        if meta.version != REFERENCE_VERSION {
            return Err(Error::Config(format!("unsupported reference version {}", meta.version)));
        }
        let text = std::fs::read_to_string(path)?;
        let samples = text
            .lines()
            .skip(1)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("bad number `{v}` in {}", path.display()))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.len() != meta.count {
            return Err(Error::Config(format!("expected {} rows, found {}", meta.count, samples.len())));
        }
        Ok(ReferencePosterior { meta, samples })
    }
}
