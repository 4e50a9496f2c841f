use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpWorkspace};
use super::mog::{MogOutput, MogScratch};
use crate::error::{Error, Result};
use crate::stats::{log_sum_exp, sigmoid, softplus, softplus_inv};

/// Lower bound added to every Cholesky diagonal entry.
pub const CHOL_FLOOR: f64 = 1e-6;
/// Glorot scale multiplier for the output layer at initialization. Non-zero so
/// that mixture components are not exact copies of each other.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnArchitecture {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub components: usize,
    /// Fixed input standardization `(x - shift) / scale`.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
}

impl MdnArchitecture {
    /// Two tanh layers of 50 units and 8 components.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self::with_capacity(input_dim, output_dim, vec![50, 50], 8)
    }

    pub fn with_capacity(input_dim: usize, output_dim: usize, hidden: Vec<usize>, components: usize) -> Self {
        MdnArchitecture {
            input_dim,
            output_dim,
            hidden,
            components,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
        }
    }

    /// Raw head layout: `C` logits, `C x n` means, `C x n x n` Cholesky slots.
    pub fn head_size(&self) -> usize {
        let (c, n) = (self.components, self.output_dim);
        c + c * n + c * n * n
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(&self.hidden);
        sizes.push(self.head_size());
        sizes
    }

    pub fn param_count(&self) -> usize {
        Mlp::new(self.layer_sizes()).param_count()
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.components == 0 {
            return Err(Error::InvalidArgument("MDN dimensions must be positive".into()));
        }
        if self.input_shift.len() != self.input_dim || self.input_scale.len() != self.input_dim {
            return Err(Error::ShapeMismatch { expected: self.input_dim, got: self.input_shift.len() });
        }
        if self.input_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("input scales must be > 0".into()));
        }
        Ok(())
    }

    /// Sets the input standardization from a batch of inputs.
    pub fn fit_standardization(&mut self, xs: &[Vec<f64>]) {
        let n = xs.len() as f64;
        for j in 0..self.input_dim {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            self.input_shift[j] = mean;
            self.input_scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }
}

#[derive(Debug, Clone)]
pub struct MdnWorkspace {
    mlp: MlpWorkspace,
    input: Vec<f64>,
    scratch: MogScratch,
    mog: MogOutput,
    d_head: Vec<f64>,
}

/// Conditional density `q(theta | x)`: an MLP maps the (standardized) summary
/// to the parameters of a Gaussian mixture over `theta`.
#[derive(Debug, Clone)]
pub struct Mdn {
    arch: MdnArchitecture,
    mlp: Mlp,
}

impl Mdn {
    pub fn new(arch: MdnArchitecture) -> Result<Self> {
        arch.validate()?;
        let mlp = Mlp::new(arch.layer_sizes());
        Ok(Mdn { arch, mlp })
    }

    pub fn architecture(&self) -> &MdnArchitecture {
        &self.arch
    }

    pub fn set_standardization(&mut self, xs: &[Vec<f64>]) {
        self.arch.fit_standardization(xs);
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn workspace(&self) -> MdnWorkspace {
        let (c, n) = (self.arch.components, self.arch.output_dim);
        MdnWorkspace {
            mlp: self.mlp.workspace(),
            input: vec![0.0; self.arch.input_dim],
            scratch: MogScratch::default(),
            mog: MogOutput { n, log_weights: vec![0.0; c], means: vec![0.0; c * n], chol: vec![0.0; c * n * n] },
            d_head: vec![0.0; self.arch.head_size()],
        }
    }

    fn head_offsets(&self) -> (usize, usize) {
        let (c, n) = (self.arch.components, self.arch.output_dim);
        (c, c + c * n)
    }

    fn cholesky_diag_bias(&self) -> f64 {
        softplus_inv(1.0 - CHOL_FLOOR)
    }

    fn set_head_bias(&self, params: &mut [f64]) {
        let (c, n) = (self.arch.components, self.arch.output_dim);
        let layer = self.mlp.layers() - 1;
        let b = self.mlp.bias_offset(layer);
        let (_, chol_off) = self.head_offsets();
        let bias = self.cholesky_diag_bias();
        for k in 0..c {
            for i in 0..n {
                params[b + chol_off + k * n * n + i * n + i] = bias;
            }
        }
    }

    /// Glorot-initialized trunk, a small random output layer, and head biases
    /// giving unit-scale components at the origin.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = self.mlp.init(rng, OUTPUT_INIT_SCALE);
        self.set_head_bias(&mut p);
        p
    }

    /// Like [`Mdn::init`] but with an exactly zero output weight matrix:
    /// uniform mixture weights and identical components for every input.
    pub fn init_zero_output<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = self.mlp.init(rng, 0.0);
        self.set_head_bias(&mut p);
        p
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch { expected: self.param_count(), got: params.len() });
        }
        Ok(())
    }

    fn run_trunk(&self, params: &[f64], x: &[f64], ws: &mut MdnWorkspace) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::ShapeMismatch { expected: self.arch.input_dim, got: x.len() });
        }
        for j in 0..x.len() {
            ws.input[j] = (x[j] - self.arch.input_shift[j]) / self.arch.input_scale[j];
        }
        let out = self.mlp.forward(params, &ws.input, &mut ws.mlp);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow("non-finite density network output".into()));
        }
        self.decode(ws);
        Ok(())
    }

    fn decode(&self, ws: &mut MdnWorkspace) {
        let (c, n) = (self.arch.components, self.arch.output_dim);
        let (mean_off, chol_off) = self.head_offsets();
        let raw = ws.mlp.output();
        let mog = &mut ws.mog;
        let lse = log_sum_exp(&raw[..c]);
        for k in 0..c {
            mog.log_weights[k] = raw[k] - lse;
        }
        mog.means.copy_from_slice(&raw[mean_off..mean_off + c * n]);
        for k in 0..c {
            for i in 0..n {
                for j in 0..n {
                    let idx = k * n * n + i * n + j;
                    let r = raw[chol_off + idx];
                    mog.chol[idx] = if j < i {
                        r
                    } else if j == i {
                        softplus(r) + CHOL_FLOOR
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<MogOutput> {
        self.check_params(params)?;
        let mut ws = self.workspace();
        self.run_trunk(params, x, &mut ws)?;
        Ok(ws.mog)
    }

    pub fn forward_ws(&self, params: &[f64], x: &[f64], ws: &mut MdnWorkspace) -> Result<MogOutput> {
        self.run_trunk(params, x, ws)?;
        Ok(ws.mog.clone())
    }

    pub fn log_prob(&self, params: &[f64], x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        let mut ws = self.workspace();
        self.log_prob_ws(params, x, theta, &mut ws)
    }

    pub fn log_prob_ws(&self, params: &[f64], x: &[f64], theta: &[f64], ws: &mut MdnWorkspace) -> Result<f64> {
        self.run_trunk(params, x, ws)?;
        Ok(ws.mog.evaluate(theta, &mut ws.scratch, false))
    }

    /// Exact gradient of `log q(theta | x)` with respect to every parameter.
    pub fn grad_log_prob(&self, params: &[f64], x: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let mut ws = self.workspace();
        let mut grad = vec![0.0; params.len()];
        self.accumulate_grad(params, x, theta, 1.0, &mut grad, &mut ws)?;
        Ok(grad)
    }

    /// Adds `scale * grad log q(theta | x)` to `grad` and returns `log q`.
    pub fn accumulate_grad(
        &self,
        params: &[f64],
        x: &[f64],
        theta: &[f64],
        scale: f64,
        grad: &mut [f64],
        ws: &mut MdnWorkspace,
    ) -> Result<f64> {
        self.run_trunk(params, x, ws)?;
        let lp = ws.mog.evaluate(theta, &mut ws.scratch, true);
        if !lp.is_finite() {
            return Err(Error::NumericalOverflow(format!("log density {lp} at sample")));
        }
        let (c, n) = (self.arch.components, self.arch.output_dim);
        let (mean_off, chol_off) = self.head_offsets();
        let raw = ws.mlp.output();
        let d = &mut ws.d_head;
        for k in 0..c {
            let resp = (ws.scratch.joint[k] - lp).exp();
            let w = ws.mog.log_weights[k].exp();
            d[k] = scale * (resp - w);
            let z = &ws.scratch.z[k * n..(k + 1) * n];
            let v = &ws.scratch.v[k * n..(k + 1) * n];
            for i in 0..n {
                d[mean_off + k * n + i] = scale * resp * v[i];
                for j in 0..n {
                    let idx = k * n * n + i * n + j;
                    d[chol_off + idx] = if j < i {
                        scale * resp * v[i] * z[j]
                    } else if j == i {
                        let lii = ws.mog.chol[idx];
                        scale * resp * (v[i] * z[i] - 1.0 / lii) * sigmoid(raw[chol_off + idx])
                    } else {
                        0.0
                    };
                }
            }
        }
        self.mlp.backward(params, &mut ws.mlp, &ws.d_head, grad);
        Ok(lp)
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &[f64], x: &[f64], count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample needs count >= 1".into()));
        }
        let mog = self.forward(params, x)?;
        Ok((0..count).map(|_| mog.sample(rng)).collect())
    }

    /// Indices of parameters that never influence the output (the
    /// above-diagonal Cholesky slots of the output layer).
    pub fn masked_params(&self) -> Vec<usize> {
        let (c, n) = (self.arch.components, self.arch.output_dim);
        let (_, chol_off) = self.head_offsets();
        let layer = self.mlp.layers() - 1;
        let fan_in = self.mlp.sizes()[layer];
        let w = self.mlp.weight_offset(layer);
        let b = self.mlp.bias_offset(layer);
        let mut out = Vec::new();
        for k in 0..c {
            for i in 0..n {
                for j in i + 1..n {
                    let row = chol_off + k * n * n + i * n + j;
                    out.extend((0..fan_in).map(|h| w + row * fan_in + h));
                    out.push(b + row);
                }
            }
        }
        out
    }

    /// Flat index of the output-layer bias for the mean of component `c`,
    /// dimension `i`.
    pub fn mean_bias_index(&self, c: usize, i: usize) -> usize {
        let layer = self.mlp.layers() - 1;
        self.mlp.bias_offset(layer) + self.head_offsets().0 + c * self.arch.output_dim + i
    }

    /// Flat index range of the output-layer weights feeding head entry `row`.
    pub fn head_weight_range(&self, row: usize) -> std::ops::Range<usize> {
        let layer = self.mlp.layers() - 1;
        let fan_in = self.mlp.sizes()[layer];
        let w = self.mlp.weight_offset(layer);
        w + row * fan_in..w + (row + 1) * fan_in
    }
}

/// Architecture descriptor plus flat parameters, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdnCheckpoint {
    pub version: u32,
    pub architecture: MdnArchitecture,
    pub params: Vec<f64>,
}

impl MdnCheckpoint {
    pub fn new(architecture: MdnArchitecture, params: Vec<f64>) -> Self {
        MdnCheckpoint { version: CHECKPOINT_VERSION, architecture, params }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: MdnCheckpoint = serde_json::from_slice(&std::fs::read(path)?)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
        }
        if ck.params.len() != ck.architecture.param_count() {
            return Err(Error::ShapeMismatch { expected: ck.architecture.param_count(), got: ck.params.len() });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn small(d: usize, n: usize, c: usize) -> Mdn {
        Mdn::new(MdnArchitecture::with_capacity(d, n, vec![7, 6], c)).unwrap()
    }

    #[test]
    fn zero_output_layer_gives_uniform_identical_components() {
        let m = small(3, 2, 4);
        let mut rng = stream(1, Domain::Misc, 0, 0);
        let p = m.init_zero_output(&mut rng);
        let out = m.forward(&p, &[0.5, -1.0, 2.0]).unwrap();
        for w in out.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        for c in 1..4 {
            assert_eq!(out.mean(c), out.mean(0));
            assert_eq!(out.chol_factor(c), out.chol_factor(0));
        }
        assert!((out.chol_factor(0)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic_and_normalized() {
        let m = small(4, 3, 5);
        let mut rng = stream(2, Domain::Misc, 0, 0);
        let p: Vec<f64> = m.init(&mut rng).iter().map(|v| v + 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let x = [0.1, 0.2, -0.3, 1.0];
        let a = m.forward(&p, &x).unwrap();
        let b = m.forward(&p, &x).unwrap();
        assert_eq!(a, b);
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in 0..5 {
            let l = a.chol_factor(c);
            for i in 0..3 {
                assert!(l[i * 3 + i] > 0.0);
            }
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let m = small(2, 1, 2);
        let mut rng = stream(3, Domain::Misc, 0, 0);
        let p = m.init(&mut rng);
        assert!(matches!(m.forward(&p, &[f64::NAN, 0.0]), Err(Error::NumericalOverflow(_))));
    }

    #[test]
    fn masked_slots_have_zero_gradient() {
        let m = small(3, 3, 2);
        let mut rng = stream(4, Domain::Misc, 0, 0);
        let p = m.init(&mut rng);
        let g = m.grad_log_prob(&p, &[0.2, 0.1, -0.4], &[0.3, 0.9, -1.0]).unwrap();
        let masked = m.masked_params();
        // three upper slots per component, each fed by 6 weights and a bias
        assert_eq!(masked.len(), 2 * 3 * 7);
        assert!(masked.iter().all(|&i| g[i] == 0.0));
    }

    #[test]
    fn mean_gradient_vanishes_at_the_mode() {
        let m = small(2, 2, 1);
        let mut rng = stream(5, Domain::Misc, 0, 0);
        let mut p = m.init_zero_output(&mut rng);
        let theta = [0.7, -1.3];
        p[m.mean_bias_index(0, 0)] = theta[0];
        p[m.mean_bias_index(0, 1)] = theta[1];
        let g = m.grad_log_prob(&p, &[0.4, 0.4], &theta).unwrap();
        for i in 0..2 {
            assert!(g[m.mean_bias_index(0, i)].abs() < 1e-14);
            // and the weights feeding that mean
            let row = 1 + i; // after one logit
            for k in m.head_weight_range(row) {
                assert!(g[k].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = small(3, 2, 3);
        let mut rng = stream(6, Domain::Misc, 0, 0);
        let p: Vec<f64> = m.init(&mut rng).iter().map(|v| v + rng.random::<f64>() * 1e-7).collect();
        let ck = MdnCheckpoint::new(m.architecture().clone(), p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mdn.json");
        ck.save(&path).unwrap();
        let back = MdnCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert!(back.params.iter().zip(&ck.params).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
