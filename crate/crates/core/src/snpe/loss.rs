use crate::error::{Error, Result};
use crate::nn::Mdn;
use crate::parallel::try_map_indexed;

/// Minibatch gradients are computed in this many fixed chunks and summed in
/// chunk order, so the result does not depend on the thread pool.
pub const GRAD_CHUNKS: usize = 4;

/// One weighted training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub weight: f64,
}

/// `-(1/B) sum_i w_i log q(theta_i | x_i)` over `data[batch]` and its exact
/// gradient. Zero-weight examples are skipped.
pub fn weighted_loss(mdn: &Mdn, params: &[f64], data: &[Example], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let chunk = batch.len().div_ceil(GRAD_CHUNKS);
    let parts = try_map_indexed(GRAD_CHUNKS, |c| -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let lo = (c * chunk).min(batch.len());
        let hi = ((c + 1) * chunk).min(batch.len());
        let mut ws = mdn.workspace();
        for &i in &batch[lo..hi] {
            let ex = &data[i];
            if ex.weight == 0.0 {
                continue;
            }
            let lp = mdn.accumulate_grad(params, &ex.x, &ex.theta_hat, -ex.weight * inv_b, &mut grad, &mut ws)?;
            loss -= ex.weight * lp * inv_b;
        }
        Ok((loss, grad))
    })?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NumericalOverflow(format!("training loss {loss}")));
    }
    Ok((loss, grad))
}

/// Same weighting as [`weighted_loss`] over the whole set, without gradient.
pub fn validation_loss(mdn: &Mdn, params: &[f64], data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::NotEnoughSamples { need: 1, got: 0 });
    }
    let chunk = data.len().div_ceil(GRAD_CHUNKS);
    let parts = try_map_indexed(GRAD_CHUNKS, |c| -> Result<f64> {
        let lo = (c * chunk).min(data.len());
        let hi = ((c + 1) * chunk).min(data.len());
        let mut ws = mdn.workspace();
        let mut acc = 0.0;
        for ex in &data[lo..hi] {
            if ex.weight == 0.0 {
                continue;
            }
            acc -= ex.weight * mdn.log_prob_ws(params, &ex.x, &ex.theta_hat, &mut ws)?;
        }
        Ok(acc)
    })?;
    let loss = parts.iter().sum::<f64>() / data.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NumericalOverflow(format!("validation loss {loss}")));
    }
    Ok(loss)
}
