use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, MetricKind};
use super::train::cmd_train;
use crate::error::{Error, Result};
use crate::metrics::{c2st, lmd, mmd};
use crate::rng::{stream, Domain};
use crate::smcabc::{smc_abc, ReferencePosterior};

pub const COMPARE_HEADER: &str = "method,simulations,round,metric,value,seed,config_hash";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    /// Cumulative simulator calls (SNPE) or the matched budget (SMC-ABC).
    pub simulations: u64,
    pub round: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Runs each SNPE configuration (reusing finished runs), then SMC-ABC with
/// the budgets the first configuration spent after each round, and merges
/// all metric rows into `out/compare-<hash>/compare.csv`.
pub fn cmd_compare(configs: &[ExperimentConfig], out: &Path) -> Result<Vec<CompareRow>> {
    let first = configs.first().ok_or_else(|| Error::Config("no configurations to compare".into()))?;
    if let Some(c) = configs.iter().find(|c| c.model != first.model) {
        return Err(Error::Config(format!("mismatched models: {} vs {}", first.model, c.model)));
    }
    let model = first.model_spec()?;
    let mut rows = Vec::new();
    let mut budgets: Vec<(u64, Vec<u64>)> = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let outcome = cmd_train(cfg, out, true)?;
        let hash = cfg.hash();
        let label = cfg.label();
        for rec in &outcome.records {
            let costs = &outcome.costs.iter().find(|(s, _)| *s == rec.seed).expect("seed has costs").1;
            rows.push(CompareRow {
                method: label.clone(),
                simulations: costs[rec.round - 1].simulator_calls,
                round: rec.round,
                metric: rec.metric.clone(),
                value: rec.value,
                seed: rec.seed,
                config_hash: hash.clone(),
            });
        }
        if ci == 0 {
            budgets = outcome.costs.iter().map(|(s, c)| (*s, c.iter().map(|c| c.simulator_calls).collect())).collect();
        }
    }

    let reference = first.reference.as_ref().and_then(|p| ReferencePosterior::load(p).ok());
    let smc_hash = format!("smc-{}", first.hash());
    for (seed, budget_list) in &budgets {
        let max_budget = *budget_list.iter().max().expect("at least one round") as usize;
        // Streams are keyed by (generation, attempt), so a run with the largest
        // budget passes through every smaller budget's state.
        let trace = match smc_abc(&model, first.smc_population, max_budget, *seed) {
            Ok(t) => t,
            Err(Error::BudgetExhausted { .. }) => Default::default(),
            Err(e) => return Err(e),
        };
        for (r, &budget) in budget_list.iter().enumerate() {
            let round = r + 1;
            let row = |metric: String, value: f64| CompareRow {
                method: "smc-abc".into(),
                simulations: budget,
                round,
                metric,
                value,
                seed: *seed,
                config_hash: smc_hash.clone(),
            };
            let pop = trace.populations.iter().rev().find(|p| p.simulations as u64 <= budget);
            let Some(pop) = pop else {
                for m in &first.metrics {
                    rows.push(row(format!("{m}_skipped"), f64::NAN));
                }
                continue;
            };
            let mut rng = stream(*seed, Domain::Reference, round as u64, 1);
            let samples: Vec<Vec<f64>> = (0..first.posterior_samples)
                .map(|_| pop.particles[pick(&pop.weights, rand::Rng::random(&mut rng))].clone())
                .collect();
            for &m in &first.metrics {
                let value = match m {
                    MetricKind::Lmd => lmd(&samples, &model, *seed, round as u64)?,
                    // no density for a particle population
                    MetricKind::Nlog => continue,
                    MetricKind::C2st | MetricKind::Mmd => {
                        let Some(refp) = &reference else {
                            rows.push(row(format!("{m}_skipped"), f64::NAN));
                            continue;
                        };
                        let k = samples.len().min(refp.samples.len());
                        if m == MetricKind::C2st {
                            if k < 100 {
                                rows.push(row(format!("{m}_skipped"), f64::NAN));
                                continue;
                            }
                            c2st(&samples[..k], &refp.samples[..k], *seed)?
                        } else {
                            mmd(&samples[..k], &refp.samples[..k])?
                        }
                    }
                };
                rows.push(row(m.name().to_string(), value));
            }
        }
    }

    let joined: Vec<String> = configs.iter().map(|c| c.hash()).collect();
    let dir = out.join(format!("compare-{}", hex::encode(&Sha256::digest(joined.join(",").as_bytes())[..8])));
    fs::create_dir_all(&dir)?;
    let mut text = format!("{COMPARE_HEADER}\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method, r.simulations, r.round, r.metric, r.value, r.seed, r.config_hash
        ));
    }
    fs::write(dir.join("compare.csv"), text)?;
    Ok(rows)
}
