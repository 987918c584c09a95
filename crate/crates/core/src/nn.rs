//! Fully-connected network with hand-written backpropagation and Adam.
//!
//! Used both by the driving-condition classifier (softmax head) and by the
//! Q-networks (identity head).
//!
//! # Checkpoint format
//!
//! A checkpoint is an ASCII header followed by raw parameters:
//!
//! ```text
//! item-mlp v1
//! layers 2 16 16 3
//! hidden relu
//! output softmax
//! params 355
//! data
//! <params * 8 bytes>
//! ```
//!
//! Every header line ends in `\n`. After `data\n` come the parameters as
//! little-endian IEEE-754 `f64`, layer by layer: first the weight matrix in
//! row-major order (one row per output unit, `outputs x inputs`), then the
//! bias vector. Trailing or missing bytes are a format error.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const FORMAT_TAG: &str = "item-mlp";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Softmax,
}

impl OutputActivation {
    fn tag(self) -> &'static str {
        match self {
            OutputActivation::Identity => "identity",
            OutputActivation::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

/// Loss selector for [`Mlp::backward`].
#[derive(Debug, Clone, Copy)]
pub enum Loss<'a> {
    /// `sum (y[i] - t)^2` over the listed `(output index, target)` pairs.
    SquaredError(&'a [(usize, f64)]),
    /// `-sum t_i ln p_i`; requires a softmax head.
    CrossEntropy(&'a [f64]),
    /// Caller-supplied gradient of the loss with respect to the outputs.
    OutputGrad(&'a [f64]),
}

/// Parameter-shaped container used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn scale(&mut self, f: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= f);
            l.biases.iter_mut().for_each(|b| *b *= f);
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .all(|g| g.is_finite())
    }
}

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Gradients,
    pub v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }
}

pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.lr, state.eps);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    };
    for (((layer, g), m), v) in net
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut())
        .zip(state.v.layers.iter_mut())
    {
        update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases);
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Mlp {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
    pub fn new(layer_sizes: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output_activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let limit = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output_activation: OutputActivation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Argument(format!(
                "network needs at least two non-empty layers, got {layer_sizes:?}"
            )));
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            layers: layer_sizes
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
            hidden_activation: Activation::Relu,
            output_activation,
        })
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::Argument(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry is the raw output logits.
    fn forward_cache(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&act, &mut z);
            if i < last {
                act.clear();
                act.extend(z.iter().map(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        pre
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut act = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&act, &mut z);
            if i < last {
                act.clear();
                act.extend(z.iter().map(|v| v.max(0.0)));
            }
        }
        Ok(match self.output_activation {
            OutputActivation::Identity => z,
            OutputActivation::Softmax => softmax(&z),
        })
    }

    /// Loss value and its exact gradient with respect to every parameter.
    pub fn backward(&self, input: &[f64], loss: Loss<'_>) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let value = self.accumulate_backward(input, loss, &mut grads)?;
        Ok((value, grads))
    }

    /// Like [`Mlp::backward`] but adds into an existing gradient buffer.
    pub fn accumulate_backward(
        &self,
        input: &[f64],
        loss: Loss<'_>,
        grads: &mut Gradients,
    ) -> Result<f64> {
        self.check_input(input)?;
        let pre = self.forward_cache(input);
        let logits = pre.last().unwrap();
        let n_out = self.output_size();
        let output = match self.output_activation {
            OutputActivation::Identity => logits.clone(),
            OutputActivation::Softmax => softmax(logits),
        };

        // gradient with respect to the final pre-activation
        let (value, mut delta) = match loss {
            Loss::SquaredError(targets) => {
                let mut g_out = vec![0.0; n_out];
                let mut value = 0.0;
                for &(idx, t) in targets {
                    if idx >= n_out {
                        return Err(Error::Argument(format!(
                            "target index {idx} out of range for {n_out} outputs"
                        )));
                    }
                    let r = output[idx] - t;
                    value += r * r;
                    g_out[idx] += 2.0 * r;
                }
                (value, self.output_jacobian_t(&output, g_out))
            }
            Loss::CrossEntropy(target) => {
                if self.output_activation != OutputActivation::Softmax {
                    return Err(Error::Argument(
                        "cross-entropy loss requires a softmax output".into(),
                    ));
                }
                if target.len() != n_out {
                    return Err(Error::Argument(format!(
                        "target has {} entries, network has {n_out} outputs",
                        target.len()
                    )));
                }
                let value = -target
                    .iter()
                    .zip(&output)
                    .filter(|(t, _)| **t != 0.0)
                    .map(|(t, p)| t * p.max(1e-300).ln())
                    .sum::<f64>();
                let t_sum: f64 = target.iter().sum();
                let delta = output
                    .iter()
                    .zip(target)
                    .map(|(p, t)| p * t_sum - t)
                    .collect();
                (value, delta)
            }
            Loss::OutputGrad(g) => {
                if g.len() != n_out {
                    return Err(Error::Argument(format!(
                        "output gradient has {} entries, network has {n_out} outputs",
                        g.len()
                    )));
                }
                (0.0, self.output_jacobian_t(&output, g.to_vec()))
            }
        };

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let g = &mut grads.layers[li];
            let prev_act: Vec<f64> = if li == 0 {
                input.to_vec()
            } else {
                pre[li - 1].iter().map(|v| v.max(0.0)).collect()
            };
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, a) in row.iter_mut().zip(&prev_act) {
                    *gw += d * a;
                }
            }
            if li > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, z) in next.iter_mut().zip(&pre[li - 1]) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(value)
    }

    /// Maps dL/d(output) to dL/d(logits).
    fn output_jacobian_t(&self, output: &[f64], g_out: Vec<f64>) -> Vec<f64> {
        match self.output_activation {
            OutputActivation::Identity => g_out,
            OutputActivation::Softmax => {
                let dot: f64 = g_out.iter().zip(output).map(|(g, p)| g * p).sum();
                output.iter().zip(&g_out).map(|(p, g)| p * (g - dot)).collect()
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        let header = format!(
            "{FORMAT_TAG} v{FORMAT_VERSION}\nlayers {}\nhidden relu\noutput {}\nparams {}\ndata\n",
            sizes.join(" "),
            self.output_activation.tag(),
            self.param_count()
        );
        let mut out = header.into_bytes();
        for p in self.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |m: String| Error::Format(format!("mlp checkpoint: {m}"));
        let mut pos = 0;
        let mut next_line = || -> Result<String> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| fmt("truncated header".into()))?;
            pos += end + 1;
            String::from_utf8(rest[..end].to_vec()).map_err(|_| fmt("header is not UTF-8".into()))
        };
        let tag = next_line()?;
        if tag != format!("{FORMAT_TAG} v{FORMAT_VERSION}") {
            return Err(fmt(format!("unsupported version tag `{tag}`")));
        }
        let keyed = |line: String, key: &str| -> Result<Vec<String>> {
            let mut parts = line.split_whitespace().map(str::to_string);
            if parts.next().as_deref() != Some(key) {
                return Err(fmt(format!("expected `{key}`, found `{line}`")));
            }
            Ok(parts.collect())
        };
        let sizes = keyed(next_line()?, "layers")?
            .iter()
            .map(|s| s.parse::<usize>().map_err(|e| fmt(format!("layers: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let hidden = keyed(next_line()?, "hidden")?;
        if hidden != ["relu"] {
            return Err(fmt(format!("unknown hidden activation {hidden:?}")));
        }
        let output = match keyed(next_line()?, "output")?.as_slice() {
            [s] if s == "identity" => OutputActivation::Identity,
            [s] if s == "softmax" => OutputActivation::Softmax,
            other => return Err(fmt(format!("unknown output activation {other:?}"))),
        };
        let count = match keyed(next_line()?, "params")?.as_slice() {
            [n] => n.parse::<usize>().map_err(|e| fmt(format!("params: {e}")))?,
            _ => return Err(fmt("malformed params line".into())),
        };
        if next_line()? != "data" {
            return Err(fmt("missing data marker".into()));
        }
        let mut net = Mlp::zeros(&sizes, output).map_err(|e| fmt(e.to_string()))?;
        if net.param_count() != count {
            return Err(fmt(format!(
                "layer sizes imply {} parameters, header says {count}",
                net.param_count()
            )));
        }
        let data = &bytes[pos..];
        if data.len() != count * 8 {
            return Err(fmt(format!(
                "expected {} parameter bytes, found {}",
                count * 8,
                data.len()
            )));
        }
        for (p, chunk) in net.params_mut().zip(data.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if !net.is_finite() {
            return Err(fmt("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], OutputActivation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        net.layers[0].weights[0] = 2.0;
        net.layers[0].biases[0] = 1.0;
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Mlp::zeros(&[2, 3], OutputActivation::Softmax).unwrap();
        let p = net.forward(&[0.5, 0.5]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let net = Mlp::zeros(&[2, 3], OutputActivation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Argument(_))));
        assert!(matches!(
            net.backward(&[1.0, 2.0], Loss::OutputGrad(&[1.0])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_gradients() {
        let net = Mlp::new(&[3, 5, 2], OutputActivation::Identity, 4).unwrap();
        let (_, g) = net.backward(&[0.3, -0.1, 0.8], Loss::OutputGrad(&[0.0, 0.0])).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn cross_entropy_at_optimum_has_no_gradient() {
        // zero weights give a uniform softmax; a uniform target is then optimal
        let net = Mlp::zeros(&[2, 4, 3], OutputActivation::Softmax).unwrap();
        let p = net.forward(&[0.2, 0.7]).unwrap();
        let (_, g) = net.backward(&[0.2, 0.7], Loss::CrossEntropy(&p)).unwrap();
        assert!(g.norm() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point() {
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, 1).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net, 1e-3);
        let g = Gradients::zeros_like(&net);
        adam_step(&mut net, &g, &mut st);
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap();
        let mut st = AdamState::new(&net, 0.1);
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights[0] = 1.0;
        adam_step(&mut net, &g, &mut st);
        // m_hat = 1, v_hat = 1  =>  step = -0.1 / (1 + 1e-8)
        assert!((net.layers[0].weights[0] + 0.1).abs() < 1e-8);
        assert_eq!(net.layers[0].biases[0], 0.0);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut net = Mlp::new(&[2, 4, 2], OutputActivation::Identity, 9).unwrap();
            let mut st = AdamState::new(&net, 0.01);
            for _ in 0..2 {
                let (_, g) = net.backward(&[0.5, -1.0], Loss::SquaredError(&[(1, 3.0)])).unwrap();
                adam_step(&mut net, &g, &mut st);
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let net = Mlp::new(&[2, 16, 16, 3], OutputActivation::Softmax, 3).unwrap();
        let bytes = net.to_bytes();
        assert_eq!(Mlp::from_bytes(&bytes).unwrap(), net);
        assert!(matches!(Mlp::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let text = String::from_utf8_lossy(&bytes[..20]).replace("v1", "v2");
        let mut wrong = text.into_bytes();
        wrong.extend_from_slice(&bytes[20..]);
        assert!(matches!(Mlp::from_bytes(&wrong), Err(Error::Format(_))));
    }
}
