use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense;
use crate::error::{Error, Result};

/// Affine layer, weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn uniform(inputs: usize, outputs: usize, limit: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs)
                .map(|_| rng.random_range(-limit..limit))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                dense::dot(&self.weights[o * self.inputs..(o + 1) * self.inputs], x) + self.bias[o]
            })
            .collect()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.weights);
        out.extend_from_slice(&self.bias);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let w = self.weights.len();
        let b = self.bias.len();
        self.weights.copy_from_slice(&src[..w]);
        self.bias.copy_from_slice(&src[w..w + b]);
        w + b
    }
}

/// Shared ReLU trunk with one logit head per binary task.
///
/// Heads start from a single shared draw, so at initialization the tasks
/// differ only through their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlNetwork {
    shared: Vec<Dense>,
    heads: Vec<Dense>,
}

/// Losses and gradients for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    /// Mean binary cross-entropy per task.
    pub losses: Vec<f64>,
    /// ∇ of task i's loss w.r.t. the flattened shared parameters.
    pub shared: Vec<Vec<f64>>,
    /// ∇ of task i's loss w.r.t. head i's parameters.
    pub heads: Vec<Vec<f64>>,
}

struct Cache {
    /// Per sample: activations of every layer, starting with the input.
    activations: Vec<Vec<Vec<f64>>>,
    /// Per sample: pre-activations of every shared layer.
    pre: Vec<Vec<Vec<f64>>>,
    /// Per sample: one logit per task.
    logits: Vec<Vec<f64>>,
}

/// Numerically stable `BCE(σ(z), y)`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MtlNetwork {
    pub fn new(input_dim: usize, hidden: &[usize], num_tasks: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_tasks == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid(
                "network needs positive input width, task count and hidden sizes",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shared = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &h in hidden {
            shared.push(Dense::uniform(
                fan_in,
                h,
                (6.0 / fan_in as f64).sqrt(),
                &mut rng,
            ));
            fan_in = h;
        }
        let head = Dense::uniform(fan_in, 1, (6.0 / (fan_in as f64 + 1.0)).sqrt(), &mut rng);
        Ok(Self {
            shared,
            heads: vec![head; num_tasks],
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self) -> usize {
        self.shared[0].inputs
    }

    pub fn num_shared_params(&self) -> usize {
        self.shared.iter().map(Dense::num_params).sum()
    }

    pub fn num_head_params(&self) -> usize {
        self.heads[0].num_params()
    }

    /// Layer by layer: weights then bias.
    pub fn shared_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_shared_params());
        for l in &self.shared {
            l.write_params(&mut out);
        }
        out
    }

    pub fn set_shared_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_shared_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_shared_params(),
                found: params.len(),
            });
        }
        let mut offset = 0;
        for l in self.shared.iter_mut() {
            offset += l.read_params(&params[offset..]);
        }
        Ok(())
    }

    pub fn head_params(&self, task: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_head_params());
        self.heads[task].write_params(&mut out);
        out
    }

    pub fn set_head_params(&mut self, task: usize, params: &[f64]) -> Result<()> {
        if task >= self.heads.len() {
            return Err(Error::IndexOutOfRange {
                index: task,
                len: self.heads.len(),
            });
        }
        if params.len() != self.num_head_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_head_params(),
                found: params.len(),
            });
        }
        self.heads[task].read_params(params);
        Ok(())
    }

    /// One logit per task.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in &self.shared {
            a = l.forward(&a).into_iter().map(|v| v.max(0.0)).collect();
        }
        self.heads.iter().map(|h| h.forward(&a)[0]).collect()
    }

    fn forward_cached(&self, xs: &[&[f64]]) -> Cache {
        let mut cache = Cache {
            activations: Vec::with_capacity(xs.len()),
            pre: Vec::with_capacity(xs.len()),
            logits: Vec::with_capacity(xs.len()),
        };
        for x in xs {
            let mut acts = vec![x.to_vec()];
            let mut pres = Vec::with_capacity(self.shared.len());
            for l in &self.shared {
                let z = l.forward(acts.last().unwrap());
                acts.push(z.iter().map(|v| v.max(0.0)).collect());
                pres.push(z);
            }
            let top = acts.last().unwrap();
            cache
                .logits
                .push(self.heads.iter().map(|h| h.forward(top)[0]).collect());
            cache.activations.push(acts);
            cache.pre.push(pres);
        }
        cache
    }

    fn validate_batch(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: ys.len(),
            });
        }
        for (x, y) in xs.iter().zip(ys) {
            if x.len() != self.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.input_dim(),
                    found: x.len(),
                });
            }
            if y.len() != self.num_tasks() {
                return Err(Error::DimensionMismatch {
                    expected: self.num_tasks(),
                    found: y.len(),
                });
            }
        }
        Ok(())
    }

    /// Mean BCE per task.
    pub fn losses(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<Vec<f64>> {
        self.validate_batch(xs, ys)?;
        let n = xs.len() as f64;
        let mut out = vec![0.0; self.num_tasks()];
        for (x, y) in xs.iter().zip(ys) {
            for (t, z) in self.forward(x).into_iter().enumerate() {
                out[t] += bce_with_logits(z, y[t]);
            }
        }
        Ok(out.into_iter().map(|s| s / n).collect())
    }

    /// Backpropagates `upstream[n]` (∂loss/∂top-activation for sample n) into
    /// the shared layers.
    fn backprop_shared(&self, cache: &Cache, upstream: &[Vec<f64>]) -> Vec<f64> {
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .shared
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.outputs]))
            .collect();
        for (s, up) in upstream.iter().enumerate() {
            let mut delta_act = up.clone();
            for (k, l) in self.shared.iter().enumerate().rev() {
                let pre = &cache.pre[s][k];
                let input = &cache.activations[s][k];
                let delta: Vec<f64> = delta_act
                    .iter()
                    .zip(pre)
                    .map(|(d, &z)| if z > 0.0 { *d } else { 0.0 })
                    .collect();
                let (gw, gb) = &mut grads[k];
                for o in 0..l.outputs {
                    if delta[o] != 0.0 {
                        dense::axpy(delta[o], input, &mut gw[o * l.inputs..(o + 1) * l.inputs]);
                    }
                    gb[o] += delta[o];
                }
                if k > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (&d, row) in delta.iter().zip(l.weights.chunks(l.inputs)) {
                        if d != 0.0 {
                            dense::axpy(d, row, &mut prev);
                        }
                    }
                    delta_act = prev;
                }
            }
        }
        let mut flat = Vec::with_capacity(self.num_shared_params());
        for (gw, gb) in grads {
            flat.extend(gw);
            flat.extend(gb);
        }
        flat
    }

    /// Per-task losses with exact gradients w.r.t. the shared trunk and each
    /// task's own head.
    pub fn forward_backward(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<BatchGradients> {
        self.validate_batch(xs, ys)?;
        let cache = self.forward_cached(xs);
        let n = xs.len() as f64;
        let t = self.num_tasks();
        let mut losses = vec![0.0; t];
        let mut shared = Vec::with_capacity(t);
        let mut heads = Vec::with_capacity(t);
        for task in 0..t {
            let head = &self.heads[task];
            let mut gw = vec![0.0; head.inputs];
            let mut gb = 0.0;
            let mut upstream = Vec::with_capacity(xs.len());
            for (s, y) in ys.iter().enumerate() {
                let z = cache.logits[s][task];
                losses[task] += bce_with_logits(z, y[task]);
                let dz = (sigmoid(z) - y[task]) / n;
                let top = cache.activations[s].last().unwrap();
                dense::axpy(dz, top, &mut gw);
                gb += dz;
                upstream.push(dense::scaled(dz, &head.weights));
            }
            losses[task] /= n;
            gw.push(gb);
            heads.push(gw);
            shared.push(self.backprop_shared(&cache, &upstream));
        }
        Ok(BatchGradients {
            losses,
            shared,
            heads,
        })
    }

    /// Gradient of `Σ_i loss_i` w.r.t. the shared trunk in a single backward pass.
    pub fn summed_shared_gradient(&self, xs: &[&[f64]], ys: &[&[f64]]) -> Result<Vec<f64>> {
        self.validate_batch(xs, ys)?;
        let cache = self.forward_cached(xs);
        let n = xs.len() as f64;
        let width = self.heads[0].inputs;
        let upstream: Vec<Vec<f64>> = ys
            .iter()
            .enumerate()
            .map(|(s, y)| {
                let mut up = vec![0.0; width];
                for (task, head) in self.heads.iter().enumerate() {
                    let dz = (sigmoid(cache.logits[s][task]) - y[task]) / n;
                    dense::axpy(dz, &head.weights, &mut up);
                }
                up
            })
            .collect();
        Ok(self.backprop_shared(&cache, &upstream))
    }
}
