//! Fully connected encoder/decoder pair with tanh hidden layers.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, TAG_INIT};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub latent_dim: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, latent_dim: usize) -> Result<Self> {
        if input_dim == 0 || latent_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(Architecture {
            input_dim,
            hidden_dims,
            latent_dim,
        })
    }

    /// Widths from input to latent.
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden_dims);
        w.push(self.latent_dim);
        w
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = self.encoder_widths();
        w.reverse();
        w
    }
}

/// Affine map `out = W in + b` with `W` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// Stack of layers; tanh follows every layer except the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn zeros(widths: &[usize]) -> Self {
        Mlp {
            layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.pop().expect("input is always recorded"))
    }

    /// Returns every activation, starting with the input itself.
    pub fn trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let last = self.layers.len().saturating_sub(1);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(acts.last().expect("nonempty"));
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Back-propagates `grad_out` (gradient w.r.t. the final output) through
    /// a recorded trace, accumulating parameter gradients into `grads` and
    /// returning the gradient w.r.t. the input.
    pub fn backward(&self, acts: &[Vec<f64>], grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let last = self.layers.len().saturating_sub(1);
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l < last {
                for (d, a) in delta.iter_mut().zip(&acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &acts[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter_mut().zip(input) {
                        *w += d * a;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            delta = prev;
        }
        delta
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Encoder `f` and decoder `g`. The decoder mirrors the encoder's widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub architecture: Architecture,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    pub fn zeros(architecture: Architecture) -> Self {
        let encoder = Mlp::zeros(&architecture.encoder_widths());
        let decoder = Mlp::zeros(&architecture.decoder_widths());
        Autoencoder {
            architecture,
            encoder,
            decoder,
        }
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(architecture: Architecture, seed: u64) -> Self {
        let mut net = Autoencoder::zeros(architecture);
        let mut rng = rng_for(seed, &[TAG_INIT]);
        for layer in net.encoder.layers.iter_mut().chain(net.decoder.layers.iter_mut()) {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn zeros_like(&self) -> Self {
        Autoencoder::zeros(self.architecture.clone())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(h)
    }

    pub fn param_count(&self) -> usize {
        self.values().count()
    }

    /// All parameters in a fixed order: encoder then decoder, per layer
    /// weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.encoder.values().chain(self.decoder.values())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.encoder.values_mut().chain(self.decoder.values_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.layers.iter().chain(&self.decoder.layers)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SSAE";
const CHECKPOINT_VERSION: u32 = 1;

/// Serializes to the checkpoint format: magic, version, layer count, per
/// layer `(inputs, outputs)`, then per layer weights followed by biases as
/// little-endian `f32`. Encoder layers come first; the decoder is the
/// second half of the layer list.
pub fn checkpoint_bytes(net: &Autoencoder) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let layers: Vec<&Layer> = net.layers().collect();
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in &layers {
        out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
    }
    for l in &layers {
        for v in l.weights.iter().chain(&l.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Autoencoder> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Truncated(format!("checkpoint {what}")))?;
        pos += n;
        Ok(s)
    };
    if take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::UnsupportedFormat("checkpoint magic".into()));
    }
    let read_u32 = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize;
    let version = read_u32(take(4, "version")?);
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::UnsupportedFormat(format!("checkpoint version {version}")));
    }
    let count = read_u32(take(4, "layer count")?);
    if count == 0 || count % 2 != 0 {
        return Err(Error::UnsupportedFormat(format!(
            "checkpoint layer count {count} is not a mirrored pair"
        )));
    }
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        let i = read_u32(take(4, "layer dims")?);
        let o = read_u32(take(4, "layer dims")?);
        dims.push((i, o));
    }
    let mut widths = vec![dims[0].0];
    widths.extend(dims[..count / 2].iter().map(|d| d.1));
    let architecture = Architecture::new(
        widths[0],
        widths[1..widths.len() - 1].to_vec(),
        *widths.last().expect("nonempty"),
    )?;
    let mut net = Autoencoder::zeros(architecture);
    let found: Vec<(usize, usize)> = net.layers().map(|l| (l.inputs, l.outputs)).collect();
    if found != dims {
        return Err(Error::UnsupportedFormat(
            "checkpoint decoder does not mirror encoder".into(),
        ));
    }
    for v in net.values_mut() {
        let s = take(4, "parameters")?;
        *v = f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64;
    }
    if pos != bytes.len() {
        return Err(Error::UnsupportedFormat("trailing checkpoint bytes".into()));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Autoencoder, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Autoencoder> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
