use rand::Rng;

/// Fully connected network: tanh hidden layers, linear output layer.
/// Parameters are one flat slice laid out per layer as `W` (row-major,
/// `out x in`) followed by `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MlpWorkspace {
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl MlpWorkspace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets.push(off);
        Mlp { sizes, offsets }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s weight matrix in the flat parameter vector.
    pub fn weight_offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    pub fn bias_offset(&self, l: usize) -> usize {
        self.offsets[l] + self.sizes[l] * self.sizes[l + 1]
    }

    pub fn workspace(&self) -> MlpWorkspace {
        MlpWorkspace {
            acts: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
            deltas: self.sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// Glorot-uniform weights and zero biases; the output layer's weights are
    /// scaled by `output_scale` (0 gives an exactly zero output layer).
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, output_scale: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l + 1 == self.layers() { output_scale } else { 1.0 };
            let w = self.weight_offset(l);
            for v in &mut p[w..w + fan_in * fan_out] {
                *v = scale * limit * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        p
    }

    pub fn forward<'a>(&self, params: &[f64], input: &[f64], ws: &'a mut MlpWorkspace) -> &'a [f64] {
        debug_assert_eq!(params.len(), self.param_count());
        ws.acts[0].copy_from_slice(input);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[self.weight_offset(l)..self.weight_offset(l) + n_in * n_out];
            let b = &params[self.bias_offset(l)..self.bias_offset(l) + n_out];
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let inp = &head[l];
            let out = &mut tail[0];
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = b[o];
                for (wi, xi) in row.iter().zip(inp.iter()) {
                    s += wi * xi;
                }
                out[o] = if l == last { s } else { s.tanh() };
            }
        }
        ws.output()
    }

    /// Accumulates `d(out)/d(params)^T d_out` into `grad`. Must follow a
    /// `forward` call on the same workspace.
    pub fn backward(&self, params: &[f64], ws: &mut MlpWorkspace, d_out: &[f64], grad: &mut [f64]) {
        let layers = self.layers();
        ws.deltas[layers].copy_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w_off = self.weight_offset(l);
            let b_off = self.bias_offset(l);
            {
                let delta = &ws.deltas[l + 1];
                let inp = &ws.acts[l];
                let gw = &mut grad[w_off..w_off + n_in * n_out];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(inp.iter()) {
                        *g += d * xi;
                    }
                }
                for (g, d) in grad[b_off..b_off + n_out].iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            if l > 0 {
                let w = &params[w_off..w_off + n_in * n_out];
                let (lo, hi) = ws.deltas.split_at_mut(l + 1);
                let prev = &mut lo[l];
                let delta = &hi[0];
                prev.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                for (p, a) in prev.iter_mut().zip(ws.acts[l].iter()) {
                    *p *= 1.0 - a * a;
                }
            }
        }
    }
}
