//! Time-conditioned MLP denoiser with hand-rolled reverse-mode gradients.
//!
//! Input is the diffused point with a sinusoidal embedding of the timestep
//! appended; hidden layers use SiLU; the output width equals the data
//! dimension. Prediction target is either the noise (epsilon) or the flow
//! velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredTarget {
    Epsilon,
    Velocity,
}

impl std::fmt::Display for PredTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PredTarget::Epsilon => f.write_str("epsilon"),
            PredTarget::Velocity => f.write_str("velocity"),
        }
    }
}

/// Sinusoidal features of t: half sines, half cosines over a geometric
/// frequency ladder from 1 to 1000. t is the normalized time in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeEmbedding {
    width: usize,
    freqs: Vec<f64>,
}

impl TimeEmbedding {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 || width % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "time embedding width must be a positive even number, got {width}"
            )));
        }
        let half = width / 2;
        let freqs = (0..half)
            .map(|j| {
                if half == 1 {
                    1.0
                } else {
                    (1000.0f64).powf(j as f64 / (half - 1) as f64)
                }
            })
            .collect();
        Ok(Self { width, freqs })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn write(&self, t: f64, out: &mut [f64]) {
        let half = self.width / 2;
        for (j, &f) in self.freqs.iter().enumerate() {
            let ang = t * f;
            out[j] = ang.sin();
            out[half + j] = ang.cos();
        }
    }
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Parameter gradients matching a model's weights and biases.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Per-batch activation cache for the backward pass.
pub struct ForwardCache {
    /// activations[l]: input to layer l (n x width_l); activations[L] is the output.
    activations: Vec<Tensor>,
    /// pre-activations of hidden layers (n x width), aligned with layers 0..L-1.
    preacts: Vec<Tensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenoiserModel {
    /// Layer widths from augmented input (d + embedding) to output (d).
    widths: Vec<usize>,
    /// weights[l] has shape (widths[l], widths[l+1]), row-major.
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    time_embed: TimeEmbedding,
    data_dim: usize,
    pub target: PredTarget,
}

impl DenoiserModel {
    /// He-style initialization scaled by sqrt(2 / fan_in), biases zero.
    pub fn new(
        data_dim: usize,
        hidden: &[usize],
        time_embed_width: usize,
        target: PredTarget,
        rng: &mut RngState,
    ) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::InvalidArgument("data_dim must be >= 1".into()));
        }
        if hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        let time_embed = TimeEmbedding::new(time_embed_width)?;
        let mut widths = vec![data_dim + time_embed_width];
        widths.extend_from_slice(hidden);
        widths.push(data_dim);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let mut w = Tensor::zeros(vec![fan_in, fan_out])?;
            for v in w.data_mut() {
                *v = rng.normal() * scale;
            }
            weights.push(w);
            biases.push(Tensor::zeros(vec![fan_out])?);
        }
        Ok(Self { widths, weights, biases, time_embed, data_dim, target })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    pub fn time_embed_width(&self) -> usize {
        self.time_embed.width()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.weights
    }

    pub(crate) fn biases_mut(&mut self) -> &mut [Tensor] {
        &mut self.biases
    }

    /// Total parameter count; also the flattened checkpoint length.
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum::<usize>()
            + self.biases.iter().map(Tensor::numel).sum::<usize>()
    }

    /// Flatten parameters (weights then biases, layer order) into one vector.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for w in &self.weights {
            out.extend_from_slice(w.data());
        }
        for b in &self.biases {
            out.extend_from_slice(b.data());
        }
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} params, model needs {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for w in &mut self.weights {
            let n = w.numel();
            w.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        for b in &mut self.biases {
            let n = b.numel();
            b.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn augment_input(&self, x_t: &Tensor, t_values: &[f64]) -> Result<Tensor> {
        let n = x_t.nrows();
        let d = x_t.ncols();
        if d != self.data_dim {
            return Err(Error::ShapeMismatch(format!(
                "input dim {d} but model expects {}",
                self.data_dim
            )));
        }
        if t_values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} rows but {} time values",
                t_values.len()
            )));
        }
        let e = self.time_embed.width();
        let width = d + e;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            let row = &mut data[i * width..(i + 1) * width];
            row[..d].copy_from_slice(x_t.row(i));
            self.time_embed.write(t_values[i], &mut row[d..]);
        }
        Ok(Tensor::from_vec_unchecked(vec![n, width], data))
    }

    /// MLP output per row; deterministic given parameters.
    pub fn forward(&self, x_t: &Tensor, t_values: &[f64]) -> Result<Tensor> {
        Ok(self.forward_cached(x_t, t_values)?.0)
    }

    pub fn forward_cached(&self, x_t: &Tensor, t_values: &[f64]) -> Result<(Tensor, ForwardCache)> {
        let input = self.augment_input(x_t, t_values)?;
        let n = input.nrows();
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut preacts = Vec::with_capacity(n_layers);
        activations.push(input);
        for l in 0..n_layers {
            let a = activations.last().unwrap();
            let mut z = matmul(a, &self.weights[l]);
            add_bias(&mut z, self.biases[l].data());
            if l + 1 < n_layers {
                let act = z.map(silu);
                preacts.push(z);
                activations.push(act);
            } else {
                activations.push(z);
            }
        }
        let out = activations.last().unwrap().clone();
        debug_assert_eq!(out.shape(), &[n, self.data_dim]);
        Ok((out, ForwardCache { activations, preacts }))
    }

    /// Exact reverse-mode gradients of the forward map for the given output
    /// cotangent. `grad_out` must match the forward output shape.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        let n_layers = self.weights.len();
        let out_shape = cache.activations.last().unwrap().shape();
        if grad_out.shape() != out_shape {
            return Err(Error::ShapeMismatch(format!(
                "grad_out {:?} vs forward output {:?}",
                grad_out.shape(),
                out_shape
            )));
        }
        let mut g = grad_out.clone();
        let mut gw = vec![Tensor::zeros(vec![1]).unwrap(); n_layers];
        let mut gb = vec![Tensor::zeros(vec![1]).unwrap(); n_layers];
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                // through SiLU of the hidden pre-activation
                g = g.zip_with(&cache.preacts[l], |gv, zv| gv * silu_grad(zv))?;
            }
            gw[l] = matmul_at_b(&cache.activations[l], &g);
            gb[l] = column_sums(&g);
            if l > 0 {
                g = matmul_b_wt(&g, &self.weights[l]);
            }
        }
        Ok(Gradients { weights: gw, biases: gb })
    }
}

/// out = a (m x k) @ w (k x n), row-major ikj loops so the inner loop runs
/// over contiguous rows of w and out.
pub(crate) fn matmul(a: &Tensor, w: &Tensor) -> Tensor {
    let (m, k) = (a.nrows(), a.ncols());
    let n = w.ncols();
    debug_assert_eq!(w.nrows(), k);
    let mut out = vec![0.0; m * n];
    let wd = w.data();
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let wrow = &wd[l * n..(l + 1) * n];
            for (o, &wv) in orow.iter_mut().zip(wrow) {
                *o += av * wv;
            }
        }
    }
    Tensor::from_vec_unchecked(vec![m, n], out)
}

/// gw = a^T (k x m) @ g (m x n): weight gradient accumulation.
fn matmul_at_b(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = (a.nrows(), a.ncols());
    let n = g.ncols();
    debug_assert_eq!(g.nrows(), m);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = a.row(i);
        let grow = g.row(i);
        for (l, &av) in arow.iter().enumerate() {
            let orow = &mut out[l * n..(l + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::from_vec_unchecked(vec![k, n], out)
}

/// gin = g (m x n) @ w^T (n x k): input gradient; inner loop is a
/// contiguous dot product against rows of w.
fn matmul_b_wt(g: &Tensor, w: &Tensor) -> Tensor {
    let (m, n) = (g.nrows(), g.ncols());
    let k = w.nrows();
    debug_assert_eq!(w.ncols(), n);
    let mut out = vec![0.0; m * k];
    let wd = w.data();
    for i in 0..m {
        let grow = g.row(i);
        let orow = &mut out[i * k..(i + 1) * k];
        for (l, o) in orow.iter_mut().enumerate() {
            let wrow = &wd[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for (&gv, &wv) in grow.iter().zip(wrow) {
                acc += gv * wv;
            }
            *o = acc;
        }
    }
    Tensor::from_vec_unchecked(vec![m, k], out)
}

fn add_bias(z: &mut Tensor, bias: &[f64]) {
    let n = z.ncols();
    debug_assert_eq!(bias.len(), n);
    for i in 0..z.nrows() {
        for (zv, &bv) in z.row_mut(i).iter_mut().zip(bias) {
            *zv += bv;
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let n = g.ncols();
    let mut out = vec![0.0; n];
    for i in 0..g.nrows() {
        for (o, &gv) in out.iter_mut().zip(g.row(i)) {
            *o += gv;
        }
    }
    Tensor::from_vec_unchecked(vec![n], out)
}
