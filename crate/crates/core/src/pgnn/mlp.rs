//! Small fully connected network with scalar input and three outputs.
//!
//! Hidden layers use `tanh`, the output layer is affine, so the output is
//! linear in the last layer's weights given the final hidden activation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output dimension of every network (one per force axis).
pub const OUTPUTS: usize = 3;

/// Dense layer, weights stored row-major (`outputs x inputs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(z + self.biases[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer activations kept for back-propagation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    input: f64,
    /// `tanh` outputs of each hidden layer.
    hidden: Vec<Vec<f64>>,
    output: [f64; OUTPUTS],
    scratch: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> [f64; OUTPUTS] {
        self.output
    }

    /// Activation of the last hidden layer.
    pub fn last_hidden(&self) -> &[f64] {
        self.hidden.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpParams {
    /// Network with the given hidden widths and all parameters zero.
    pub fn zeros(hidden: &[usize]) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::invalid(
                "networks need at least one hidden layer of non-zero width",
            ));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = 1;
        for &w in hidden {
            layers.push(Layer::zeros(prev, w));
            prev = w;
        }
        layers.push(Layer::zeros(prev, OUTPUTS));
        Ok(Self { layers })
    }

    /// Initialisation for a scalar input normalised to `[-1, 1]`.
    ///
    /// First-layer units are steep `tanh` steps with centres evenly spaced
    /// over the input range (random orientation), deeper hidden layers get
    /// scaled uniform weights, and the output layer starts at zero.
    pub fn spread_init<R: Rng>(hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(hidden)?;
        let n_out = net.layers.len() - 1;
        for (li, layer) in net.layers.iter_mut().enumerate().take(n_out) {
            if li == 0 {
                let n = layer.outputs;
                let slope = n.max(1) as f64;
                for j in 0..n {
                    let centre = if n == 1 {
                        0.0
                    } else {
                        -1.0 + 2.0 * j as f64 / (n - 1) as f64
                    };
                    let w = if rng.random::<bool>() { slope } else { -slope };
                    layer.weights[j] = w;
                    layer.biases[j] = -w * centre;
                }
            } else {
                let bound = (3.0 / layer.inputs as f64).sqrt();
                for w in &mut layer.weights {
                    *w = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(net)
    }

    /// Every parameter uniform in `[-scale, scale]`.
    pub fn random<R: Rng>(hidden: &[usize], scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(hidden)?;
        for layer in &mut net.layers {
            for v in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *v = rng.random_range(-scale..scale);
            }
        }
        Ok(net)
    }

    /// Layer widths `n_0 = 1, n_1, ..., n_I, n_{I+1} = 3`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.layers.is_empty()
            && self.layers.len() >= 2
            && self.layers[0].inputs == 1
            && self.layers.last().map(|l| l.outputs) == Some(OUTPUTS)
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs);
        if !ok {
            return Err(Error::invalid("inconsistent network layer shapes"));
        }
        if self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(())
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("network has an output layer")
    }

    pub fn output_layer_mut(&mut self) -> &mut Layer {
        self.layers.last_mut().expect("network has an output layer")
    }

    /// Width of the last hidden layer.
    pub fn last_hidden_width(&self) -> usize {
        self.output_layer().inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Copies all parameters, layer by layer (weights row-major, then biases).
    pub fn write_params(&self, out: &mut [f64]) {
        let mut k = 0;
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                out[k] = *v;
                k += 1;
            }
        }
    }

    pub fn read_params(&mut self, src: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = src[k];
                k += 1;
            }
        }
    }

    /// Offset of the output layer inside the flat parameter vector.
    pub fn output_param_offset(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::param_count)
            .sum()
    }

    pub fn forward(&self, x: f64) -> [f64; OUTPUTS] {
        let mut cache = MlpCache::default();
        self.forward_cached(x, &mut cache);
        cache.output
    }

    /// Final hidden activation `alpha_I(...)`.
    pub fn hidden(&self, x: f64) -> Vec<f64> {
        let mut cache = MlpCache::default();
        self.forward_cached(x, &mut cache);
        cache.last_hidden().to_vec()
    }

    pub fn forward_cached(&self, x: f64, cache: &mut MlpCache) {
        let n_hidden = self.layers.len() - 1;
        cache.input = x;
        cache.hidden.resize_with(n_hidden, Vec::new);
        let input = [x];
        for li in 0..n_hidden {
            let (done, rest) = cache.hidden.split_at_mut(li);
            let src: &[f64] = if li == 0 { &input } else { &done[li - 1] };
            let dst = &mut rest[0];
            self.layers[li].apply(src, dst);
            for v in dst.iter_mut() {
                *v = v.tanh();
            }
        }
        let last: &[f64] = if n_hidden == 0 {
            &input
        } else {
            &cache.hidden[n_hidden - 1]
        };
        self.layers[n_hidden].apply(last, &mut cache.scratch);
        cache.output.copy_from_slice(&cache.scratch[..OUTPUTS]);
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`
    /// for the input last passed to [`forward_cached`](Self::forward_cached).
    pub fn backward(&self, cache: &MlpCache, d_out: [f64; OUTPUTS], grad: &mut [f64]) {
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.param_count();
                Some(o)
            })
            .collect();
        let input = [cache.input];
        let mut delta: Vec<f64> = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let src: &[f64] = if li == 0 {
                &input
            } else {
                &cache.hidden[li - 1]
            };
            let g = &mut grad[offsets[li]..offsets[li] + layer.param_count()];
            let (gw, gb) = g.split_at_mut(layer.weights.len());
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (gwi, s) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter_mut()
                    .zip(src)
                {
                    *gwi += d * s;
                }
            }
            if li == 0 {
                break;
            }
            // propagate through weights and the tanh of the layer below
            let below = &cache.hidden[li - 1];
            let mut next = vec![0.0; layer.inputs];
            for o in 0..layer.outputs {
                let d = delta[o];
                for (n, w) in next
                    .iter_mut()
                    .zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs])
                {
                    *n += d * w;
                }
            }
            for (n, a) in next.iter_mut().zip(below) {
                *n *= 1.0 - a * a;
            }
            delta = next;
        }
    }
}
