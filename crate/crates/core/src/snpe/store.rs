use serde::{Deserialize, Serialize};

use super::proposal::Proposal;
use crate::error::{Error, Result};
use crate::stats::log_sum_exp;
use crate::transform::ParamSpace;

/// Everything drawn in one round. Only in-support samples are kept; `drawn`
/// counts every proposal draw and is the `N_k` used by the balance heuristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub proposal: Proposal,
    pub drawn: usize,
    pub theta_hat: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub validation: Vec<bool>,
    pub log_prior: Vec<f64>,
    pub resimulations: usize,
    pub out_of_support: usize,
}

impl RoundRecord {
    pub fn len(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_hat.is_empty()
    }
}

/// Pooled samples of all rounds with cached proposal log-densities:
/// `cache[k][i][j] = log p~_j(theta_hat_i^(k))` for every proposal `j` so far.
#[derive(Debug, Clone, Default)]
pub struct RoundStore {
    rounds: Vec<RoundRecord>,
    cache: Vec<Vec<Vec<f64>>>,
}

impl RoundStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Appends a round and extends the caches: the new proposal is evaluated
    /// at every stored sample, and the new samples under every proposal.
    pub fn push(&mut self, record: RoundRecord, space: &ParamSpace) -> Result<()> {
        if record.round != self.rounds.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "expected round {}, got {}",
                self.rounds.len() + 1,
                record.round
            )));
        }
        if record.drawn == 0 || record.x.len() != record.len() || record.validation.len() != record.len() {
            return Err(Error::InvalidArgument("inconsistent round record".into()));
        }
        for (k, rows) in self.cache.iter_mut().enumerate() {
            for (i, row) in rows.iter_mut().enumerate() {
                row.push(record.proposal.log_pdf(space, &self.rounds[k].theta_hat[i]));
            }
        }
        let fresh: Vec<Vec<f64>> = record
            .theta_hat
            .iter()
            .map(|th| {
                self.rounds
                    .iter()
                    .map(|r| &r.proposal)
                    .chain(std::iter::once(&record.proposal))
                    .map(|p| p.log_pdf(space, th))
                    .collect()
            })
            .collect();
        self.cache.push(fresh);
        self.rounds.push(record);
        Ok(())
    }

    /// `log p~_j(theta_hat_i^(k))`, all indices 0-based.
    pub fn cached(&self, k: usize, i: usize, j: usize) -> Result<f64> {
        self.cache
            .get(k)
            .and_then(|rows| rows.get(i))
            .and_then(|row| row.get(j))
            .copied()
            .ok_or(Error::MissingCache { round: k + 1, sample: i })
    }

    /// Log base weights for every stored sample of rounds `1..=r`: the
    /// balance-heuristic combined weight `N_k p(theta) / sum_j N_j p~_j(theta)`.
    pub fn misr_log_weights(&self, r: usize) -> Result<Vec<Vec<f64>>> {
        if r == 0 || r > self.rounds.len() {
            return Err(Error::InvalidArgument(format!("round {r} not in store")));
        }
        let log_n: Vec<f64> = self.rounds[..r].iter().map(|rec| (rec.drawn as f64).ln()).collect();
        let mut out = Vec::with_capacity(r);
        for k in 0..r {
            let rec = &self.rounds[k];
            let mut ws = Vec::with_capacity(rec.len());
            for i in 0..rec.len() {
                let row = &self.cache[k][i];
                if row.len() < r {
                    return Err(Error::MissingCache { round: k + 1, sample: i });
                }
                ws.push(balance_heuristic_log_weight(rec.log_prior[i], &row[..r], &log_n, k));
            }
            out.push(ws);
        }
        Ok(out)
    }

    /// Plain importance log weights `log p - log p~_r` for the samples of round `r`.
    pub fn single_round_log_weights(&self, r: usize) -> Result<Vec<f64>> {
        if r == 0 || r > self.rounds.len() {
            return Err(Error::InvalidArgument(format!("round {r} not in store")));
        }
        let rec = &self.rounds[r - 1];
        (0..rec.len()).map(|i| Ok(rec.log_prior[i] - self.cached(r - 1, i, r - 1)?)).collect()
    }

    /// Largest `p / p~_k` over the samples of round `k` (1-based) under their own proposal.
    pub fn max_importance_ratio(&self, k: usize) -> Result<f64> {
        let w = self.single_round_log_weights(k)?;
        Ok(w.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp())
    }
}

/// `log(N_k p / sum_j N_j p~_j)` given `log p`, `log p~_j` and `log N_j`.
pub fn balance_heuristic_log_weight(log_prior: f64, log_props: &[f64], log_n: &[f64], k: usize) -> f64 {
    let terms: Vec<f64> = log_props.iter().zip(log_n).map(|(p, n)| p + n).collect();
    log_n[k] + log_prior - log_sum_exp(&terms)
}

/// Balance-heuristic weights `omega_k = N_k p~_k / sum_j N_j p~_j` for one point.
pub fn balance_heuristic_omegas(log_props: &[f64], counts: &[usize]) -> Vec<f64> {
    let terms: Vec<f64> = log_props.iter().zip(counts).map(|(p, &n)| p + (n as f64).ln()).collect();
    let lse = log_sum_exp(&terms);
    terms.iter().map(|t| (t - lse).exp()).collect()
}
