//! Feed-forward regressor: `[affine → layer norm → ReLU → dropout]* → affine`.
//!
//! All parameters live in one flat buffer. For every hidden layer the buffer
//! holds, in order, the weight matrix (`out × in`, column-major), the bias,
//! the layer-norm gain and the layer-norm offset; the output layer contributes
//! its `1 × in` weight row and scalar bias last.

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;

pub const HIDDEN_DIMS: [usize; 3] = [256, 128, 64];
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlots {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Offsets of the layer-norm gain and offset; absent on the output layer.
    norm: Option<(usize, usize)>,
}

fn layout(layer_dims: &[usize]) -> (Vec<LayerSlots>, usize) {
    let mut slots = Vec::with_capacity(layer_dims.len() - 1);
    let mut cursor = 0;
    let last = layer_dims.len() - 2;
    for (i, pair) in layer_dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let weight = cursor;
        let bias = weight + fan_in * fan_out;
        cursor = bias + fan_out;
        let norm = if i < last {
            let gain = cursor;
            cursor += 2 * fan_out;
            Some((gain, gain + fan_out))
        } else {
            None
        };
        slots.push(LayerSlots {
            fan_in,
            fan_out,
            weight,
            bias,
            norm,
        });
    }
    (slots, cursor)
}

/// Network parameters (or a gradient with the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    data: Vec<f64>,
}

impl MlpParams {
    /// All-zero parameters for `[input, hidden..., 1]`.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) || *layer_dims.last().unwrap() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "layer dims {layer_dims:?} must be positive and end in 1"
            )));
        }
        let (_, len) = layout(layer_dims);
        Ok(MlpParams {
            layer_dims: layer_dims.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn from_parts(layer_dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(&layer_dims)?;
        if data.len() != p.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for dims {layer_dims:?}, expected {}",
                data.len(),
                p.data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        p.data = data;
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layer_dims: self.layer_dims.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check_same_shape(&self, other: &MlpParams) -> Result<()> {
        if self.layer_dims != other.layer_dims {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.layer_dims, other.layer_dims
            )));
        }
        Ok(())
    }

    /// Euclidean distance between two parameter vectors of the same shape.
    pub fn distance(&self, other: &MlpParams) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    fn slots(&self) -> Vec<LayerSlots> {
        layout(&self.layer_dims).0
    }

    fn weight(&self, s: &LayerSlots) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(
            &self.data[s.weight..s.weight + s.fan_in * s.fan_out],
            s.fan_out,
            s.fan_in,
        )
    }

    /// Bias vectors of every affine layer, in order.
    pub fn biases(&self) -> Vec<&[f64]> {
        self.slots()
            .iter()
            .map(|s| &self.data[s.bias..s.bias + s.fan_out])
            .collect()
    }
}

/// Parameters for `[input_dim, 256, 128, 64, 1]`.
pub fn init_mlp(input_dim: usize, seed: u64) -> Result<MlpParams> {
    init_mlp_with(input_dim, &HIDDEN_DIMS, seed)
}

/// Fan-in scaled uniform weights `U(−1/√in, 1/√in)`, zero biases, unit
/// layer-norm gains and zero offsets.
pub fn init_mlp_with(input_dim: usize, hidden: &[usize], seed: u64) -> Result<MlpParams> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(1);
    let mut p = MlpParams::zeros(&dims)?;
    let mut rng = seed::rng(seed);
    for s in p.slots() {
        let bound = 1.0 / (s.fan_in as f64).sqrt();
        for w in &mut p.data[s.weight..s.weight + s.fan_in * s.fan_out] {
            *w = rng.random_range(-bound..bound);
        }
        if let Some((gain, _)) = s.norm {
            p.data[gain..gain + s.fan_out].fill(1.0);
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardMode {
    Inference,
    /// Inverted dropout with keep-scaling `1 / (1 − rate)`; masks are drawn
    /// from a stream seeded by `seed`.
    Train { dropout: f64, seed: u64 },
}

struct HiddenCache {
    input: DMatrix<f64>,
    xhat: DMatrix<f64>,
    inv_std: Vec<f64>,
    normed: DMatrix<f64>,
    mask: Option<DMatrix<f64>>,
}

struct ForwardPass {
    hidden: Vec<HiddenCache>,
    last_input: DMatrix<f64>,
    output: Vec<f64>,
}

/// Runs a batch whose columns are samples (`input_dim × batch`).
fn forward_batch(params: &MlpParams, x: DMatrix<f64>, mode: ForwardMode) -> ForwardPass {
    let slots = params.slots();
    let mut rng: Option<(ChaCha8Rng, f64)> = match mode {
        ForwardMode::Inference => None,
        ForwardMode::Train { dropout, seed } if dropout > 0.0 => Some((seed::rng(seed), dropout)),
        ForwardMode::Train { .. } => None,
    };
    let batch = x.ncols();
    let mut hidden = Vec::with_capacity(slots.len() - 1);
    let mut a = x;
    for s in &slots[..slots.len() - 1] {
        let mut z = params.weight(s) * &a;
        let bias = &params.data[s.bias..s.bias + s.fan_out];
        let (gain_at, offset_at) = s.norm.expect("hidden layers carry a norm");
        let gain = &params.data[gain_at..gain_at + s.fan_out];
        let offset = &params.data[offset_at..offset_at + s.fan_out];

        let mut xhat = DMatrix::zeros(s.fan_out, batch);
        let mut normed = DMatrix::zeros(s.fan_out, batch);
        let mut inv_std = Vec::with_capacity(batch);
        for j in 0..batch {
            let mut col = z.column_mut(j);
            for (v, b) in col.iter_mut().zip(bias) {
                *v += b;
            }
            let n = s.fan_out as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for i in 0..s.fan_out {
                let h = (col[i] - mean) * inv;
                xhat[(i, j)] = h;
                normed[(i, j)] = gain[i] * h + offset[i];
            }
        }
        let mut out = normed.map(|v| v.max(0.0));
        let mask = rng.as_mut().map(|(r, rate)| {
            let keep = 1.0 / (1.0 - *rate);
            let m = DMatrix::from_fn(s.fan_out, batch, |_, _| {
                if r.random::<f64>() < *rate {
                    0.0
                } else {
                    keep
                }
            });
            out.component_mul_assign(&m);
            m
        });
        hidden.push(HiddenCache {
            input: std::mem::replace(&mut a, out),
            xhat,
            inv_std,
            normed,
            mask,
        });
    }
    let head = slots.last().unwrap();
    let w = &params.data[head.weight..head.weight + head.fan_in];
    let b = params.data[head.bias];
    let output = (0..batch)
        .map(|j| b + a.column(j).iter().zip(w).map(|(x, w)| x * w).sum::<f64>())
        .collect();
    ForwardPass {
        hidden,
        last_input: a,
        output,
    }
}

fn batch_matrix(params: &MlpParams, xs: &[&[f64]]) -> Result<DMatrix<f64>> {
    let d = params.input_dim();
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::ShapeMismatch(format!(
            "feature vector of length {} for input dim {d}",
            bad.len()
        )));
    }
    Ok(DMatrix::from_fn(d, xs.len(), |i, j| xs[j][i]))
}

/// Scalar output for one (already normalized) feature vector.
pub fn forward(params: &MlpParams, x: &[f64], mode: ForwardMode) -> Result<f64> {
    let m = batch_matrix(params, &[x])?;
    Ok(forward_batch(params, m, mode).output[0])
}

/// Outputs for many feature vectors in inference mode.
pub fn forward_many(params: &MlpParams, xs: &[&[f64]]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Ok(Vec::new());
    }
    let m = batch_matrix(params, xs)?;
    Ok(forward_batch(params, m, ForwardMode::Inference).output)
}

/// Smallest absolute ReLU input over the batch. A parameter perturbation
/// that moves no ReLU input by more than this stays on one linear piece.
pub fn relu_margin(params: &MlpParams, xs: &[&[f64]], mode: ForwardMode) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let m = batch_matrix(params, xs)?;
    Ok(forward_batch(params, m, mode)
        .hidden
        .iter()
        .flat_map(|h| h.normed.iter())
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs())))
}

/// Mean squared error over the batch and its exact gradient.
///
/// In train mode the dropout masks for the whole batch come from one stream
/// seeded by the mode's seed.
pub fn loss_and_grad(
    params: &MlpParams,
    batch: &[(&[f64], f64)],
    mode: ForwardMode,
) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let xs: Vec<&[f64]> = batch.iter().map(|(x, _)| *x).collect();
    let pass = forward_batch(params, batch_matrix(params, &xs)?, mode);
    let count = batch.len() as f64;
    let residuals: Vec<f64> = pass
        .output
        .iter()
        .zip(batch)
        .map(|(f, (_, y))| f - y)
        .collect();
    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / count;

    let slots = params.slots();
    let mut grads = params.zeros_like();
    let g = &mut grads.data;

    let head = slots.last().unwrap();
    let w_head = &params.data[head.weight..head.weight + head.fan_in];
    let d_out: Vec<f64> = residuals.iter().map(|r| 2.0 * r / count).collect();
    g[head.bias] = d_out.iter().sum();
    let mut d_a = DMatrix::zeros(head.fan_in, batch.len());
    for (j, &d) in d_out.iter().enumerate() {
        let a = pass.last_input.column(j);
        for i in 0..head.fan_in {
            g[head.weight + i] += d * a[i];
            d_a[(i, j)] = d * w_head[i];
        }
    }

    for (s, cache) in slots[..slots.len() - 1].iter().zip(&pass.hidden).rev() {
        if let Some(mask) = &cache.mask {
            d_a.component_mul_assign(mask);
        }
        let (gain_at, offset_at) = s.norm.unwrap();
        let n = s.fan_out as f64;
        let mut d_z = DMatrix::zeros(s.fan_out, batch.len());
        for j in 0..batch.len() {
            let mut d_xhat = vec![0.0; s.fan_out];
            for i in 0..s.fan_out {
                let d_y = if cache.normed[(i, j)] > 0.0 { d_a[(i, j)] } else { 0.0 };
                g[gain_at + i] += d_y * cache.xhat[(i, j)];
                g[offset_at + i] += d_y;
                d_xhat[i] = d_y * params.data[gain_at + i];
            }
            let mean_d = d_xhat.iter().sum::<f64>() / n;
            let mean_dx = (0..s.fan_out)
                .map(|i| d_xhat[i] * cache.xhat[(i, j)])
                .sum::<f64>()
                / n;
            let inv = cache.inv_std[j];
            for i in 0..s.fan_out {
                d_z[(i, j)] = inv * (d_xhat[i] - mean_d - cache.xhat[(i, j)] * mean_dx);
            }
        }
        for i in 0..s.fan_out {
            g[s.bias + i] += d_z.row(i).sum();
        }
        let d_w = &d_z * cache.input.transpose();
        let mut gw = DMatrixViewMut::from_slice(
            &mut g[s.weight..s.weight + s.fan_in * s.fan_out],
            s.fan_out,
            s.fan_in,
        );
        gw += d_w;
        d_a = params.weight(s).tr_mul(&d_z);
    }
    Ok((mse, grads))
}
