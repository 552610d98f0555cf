//! Stacked denoising autoencoder in the deterministic-layer limit.
//!
//! Layer `l` (1-based) maps `X_{l-1}` to `X_l = σ(X_{l-1} W_l + b_l)`. The first
//! `L/2` layers encode and the rest decode: the encoder output `f_e` is
//! `X_{L/2}` and the reconstruction `f_r` is `X_L`, both functions of the
//! corrupted input `X_0`. Inputs are sparse, so the first layer (which dominates
//! cost) only touches stored entries.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::dataio::ContentMatrix;
use crate::linalg::sigmoid;
use crate::par;
use crate::rng::{rng_for, stream};
use crate::{CdlError, Result};

/// Upper bound on row chunks used for parallel passes. Fixed so reductions are
/// summed in the same order regardless of thread count.
const ROW_CHUNKS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SdaeNetwork {
    widths: Vec<usize>,
    /// `weights[l-1]` is `W_l` with shape `K_{l-1} × K_l`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Standard deviation policy for [`SdaeNetwork::init`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScale {
    /// `min(λw^{-1/2}, fan_in^{-1/2})` per layer.
    PriorOrFanIn { lambda_w: f64 },
    Fixed(f64),
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 3 || (widths.len() - 1) % 2 != 0 {
        return Err(CdlError::Argument(format!(
            "layer widths {widths:?} must describe an even number L >= 2 of layers"
        )));
    }
    if widths.contains(&0) {
        return Err(CdlError::Argument(format!("layer widths {widths:?} contain a zero")));
    }
    if widths[0] != widths[widths.len() - 1] {
        return Err(CdlError::Argument(format!(
            "input width {} differs from output width {}",
            widths[0],
            widths[widths.len() - 1]
        )));
    }
    Ok(())
}

impl SdaeNetwork {
    pub fn new(widths: Vec<usize>, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        validate_widths(&widths)?;
        let layers = widths.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(CdlError::Shape(format!(
                "{layers} layers need {layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            if weights[l].dim() != (widths[l], widths[l + 1]) || biases[l].len() != widths[l + 1] {
                return Err(CdlError::Shape(format!(
                    "layer {}: expected W {}x{} and b {}, got W {:?} and b {}",
                    l + 1,
                    widths[l],
                    widths[l + 1],
                    widths[l + 1],
                    weights[l].dim(),
                    biases[l].len()
                )));
            }
            if weights[l].iter().chain(biases[l].iter()).any(|v| !v.is_finite()) {
                return Err(CdlError::Numeric(format!("layer {}: non-finite parameter", l + 1)));
            }
        }
        Ok(Self {
            widths,
            weights,
            biases,
        })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let weights = widths.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect();
        let biases = widths[1..].iter().map(|&k| Array1::zeros(k)).collect();
        Self::new(widths.to_vec(), weights, biases)
    }

    /// Gaussian weights, zero biases.
    pub fn init(widths: &[usize], seed: u64, scale: InitScale) -> Result<Self> {
        let mut net = Self::zeros(widths)?;
        let mut rng = rng_for(seed, stream::INIT_WEIGHTS, 0);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let sd = match scale {
                InitScale::PriorOrFanIn { lambda_w } => {
                    lambda_w.powf(-0.5).min((1.0 / widths[l] as f64).sqrt())
                }
                InitScale::Fixed(sd) => sd,
            };
            w.mapv_inplace(|_| sd * rng.sample::<f64, _>(StandardNormal));
        }
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of layers `L`.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// Index `L/2` of the encoding layer.
    pub fn code_layer(&self) -> usize {
        self.num_layers() / 2
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn code_width(&self) -> usize {
        self.widths[self.code_layer()]
    }

    /// `W_l` for `l` in `1..=L`.
    pub fn weight(&self, l: usize) -> &Array2<f64> {
        &self.weights[l - 1]
    }

    pub fn bias(&self, l: usize) -> &Array1<f64> {
        &self.biases[l - 1]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.weights[l - 1]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut Array1<f64> {
        &mut self.biases[l - 1]
    }

    /// `Σ_l ‖W_l‖²_F + ‖b_l‖²`.
    pub fn squared_norm(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>())
            .chain(self.biases.iter().map(|b| b.dot(b)))
            .sum()
    }

    /// `self += step * dir`, layer by layer.
    pub fn add_scaled(&mut self, step: f64, dir: &Gradients) {
        for (w, g) in self.weights.iter_mut().zip(&dir.weights) {
            w.scaled_add(step, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&dir.biases) {
            b.scaled_add(step, g);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .all(|v| v.is_finite())
    }
}

/// Inverted-dropout scale factors (0 or `1/(1-rate)`) per item and unit for
/// hidden layers other than the code layer. Layers `0`, `L/2` and `L` are never masked.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    rate: f64,
    /// Indexed by layer `l` in `0..=L`; `None` where no mask applies.
    scales: Vec<Option<Array2<f64>>>,
}

impl DropoutMask {
    pub fn sample(net: &SdaeNetwork, num_items: usize, rate: f64, seed: u64, index: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(CdlError::Argument(format!("dropout rate {rate} outside [0, 1)")));
        }
        let l_total = net.num_layers();
        let keep = 1.0 - rate;
        let mut rng = rng_for(seed, stream::DROPOUT, index);
        let scales = (0..=l_total)
            .map(|l| {
                if rate == 0.0 || l == 0 || l == l_total || l == l_total / 2 {
                    return None;
                }
                Some(Array2::from_shape_simple_fn((num_items, net.widths[l]), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                }))
            })
            .collect();
        Ok(Self { rate, scales })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Mask for layer `l`, or `None` when the layer is not masked.
    pub fn layer(&self, l: usize) -> Option<&Array2<f64>> {
        self.scales.get(l).and_then(Option::as_ref)
    }
}

/// Layer outputs `X_1..X_L` for a set of items (the input `X_0` is the sparse
/// content the trace was computed from).
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    rows: Vec<usize>,
    /// `outputs[l-1]` = `X_l` after any dropout scaling.
    outputs: Vec<Array2<f64>>,
    /// Pre-dropout sigmoid outputs for masked layers.
    activations: Vec<Option<Array2<f64>>>,
}

impl ForwardTrace {
    /// `X_l` for `l` in `1..=L`, one row per traced item.
    pub fn layer_output(&self, l: usize) -> &Array2<f64> {
        &self.outputs[l - 1]
    }

    /// Item ids in row order.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    fn activation(&self, l: usize) -> &Array2<f64> {
        self.activations[l - 1].as_ref().unwrap_or(&self.outputs[l - 1])
    }
}

fn check_input(net: &SdaeNetwork, x0: &ContentMatrix) -> Result<()> {
    if x0.vocab_size() != net.input_width() {
        return Err(CdlError::Shape(format!(
            "input has {} columns but the network expects {}",
            x0.vocab_size(),
            net.input_width()
        )));
    }
    Ok(())
}

fn forward_rows(net: &SdaeNetwork, x0: &ContentMatrix, rows: &[usize], mask: Option<&DropoutMask>) -> Result<ForwardTrace> {
    let l_total = net.num_layers();
    let mut outputs = Vec::with_capacity(l_total);
    let mut activations = Vec::with_capacity(l_total);
    for l in 1..=l_total {
        let w = net.weight(l);
        let b = net.bias(l);
        let mut a = Array2::<f64>::zeros((rows.len(), net.widths[l]));
        if l == 1 {
            for (r, &j) in rows.iter().enumerate() {
                let mut out = a.row_mut(r);
                out.assign(b);
                let (idx, vals) = x0.row(j);
                for (&s, &v) in idx.iter().zip(vals) {
                    out.scaled_add(v, &w.row(s));
                }
            }
        } else {
            let prev: &Array2<f64> = &outputs[l - 2];
            ndarray::linalg::general_mat_mul(1.0, prev, w, 0.0, &mut a);
            a += b;
        }
        a.mapv_inplace(sigmoid);
        if a.iter().any(|v| !v.is_finite()) {
            return Err(CdlError::Numeric(format!("non-finite activation in layer {l}")));
        }
        match mask.and_then(|m| m.layer(l)) {
            Some(scale) => {
                let mut x = a.clone();
                for (r, &j) in rows.iter().enumerate() {
                    x.row_mut(r).zip_mut_with(&scale.row(j), |xv, &s| *xv *= s);
                }
                outputs.push(x);
                activations.push(Some(a));
            }
            None => {
                outputs.push(a);
                activations.push(None);
            }
        }
    }
    Ok(ForwardTrace {
        rows: rows.to_vec(),
        outputs,
        activations,
    })
}

/// Full forward pass over every item of `x0`. Dropout is applied only when a
/// mask is given.
pub fn forward(net: &SdaeNetwork, x0: &ContentMatrix, mask: Option<&DropoutMask>) -> Result<ForwardTrace> {
    check_input(net, x0)?;
    let n = x0.num_items();
    let parts = par::map_chunks(n, ROW_CHUNKS, |range| {
        let rows: Vec<usize> = range.collect();
        forward_rows(net, x0, &rows, mask)
    });
    let parts: Vec<ForwardTrace> = parts.into_iter().collect::<Result<_>>()?;
    let l_total = net.num_layers();
    let concat = |get: &dyn Fn(&ForwardTrace) -> ArrayView2<'_, f64>, width: usize| {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(get).collect();
        if views.is_empty() {
            Array2::zeros((0, width))
        } else {
            ndarray::concatenate(Axis(0), &views).expect("chunk widths agree")
        }
    };
    let outputs = (1..=l_total)
        .map(|l| concat(&|t| t.outputs[l - 1].view(), net.widths[l]))
        .collect();
    let activations = (1..=l_total)
        .map(|l| {
            mask.and_then(|m| m.layer(l))
                .map(|_| concat(&|t| t.activations[l - 1].as_ref().unwrap().view(), net.widths[l]))
        })
        .collect();
    Ok(ForwardTrace {
        rows: (0..n).collect(),
        outputs,
        activations,
    })
}

/// Encoder output `f_e` for every item (`J × K`), no dropout.
pub fn encode_all(net: &SdaeNetwork, x0: &ContentMatrix) -> Result<Array2<f64>> {
    let mut trace = forward(net, x0, None)?;
    Ok(trace.outputs.swap_remove(net.code_layer() - 1))
}

/// Reconstruction `f_r` for every item (`J × S`), no dropout.
pub fn reconstruct_all(net: &SdaeNetwork, x0: &ContentMatrix) -> Result<Array2<f64>> {
    let mut trace = forward(net, x0, None)?;
    Ok(trace.outputs.pop().expect("at least two layers"))
}

/// Dense single-row forward, used for one-off items such as cold-start content.
fn forward_dense_row(net: &SdaeNetwork, x: ArrayView1<f64>, upto: usize) -> Result<Array1<f64>> {
    if x.len() != net.input_width() {
        return Err(CdlError::Shape(format!(
            "input row has length {} but the network expects {}",
            x.len(),
            net.input_width()
        )));
    }
    let mut h = x.to_owned();
    for l in 1..=upto {
        h = (h.dot(net.weight(l)) + net.bias(l)).mapv(sigmoid);
    }
    Ok(h)
}

/// `f_e(x)` for one dense content row.
pub fn encode(net: &SdaeNetwork, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    forward_dense_row(net, x, net.code_layer())
}

/// `f_r(x)` for one dense content row.
pub fn reconstruct(net: &SdaeNetwork, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    forward_dense_row(net, x, net.num_layers())
}

/// Per-layer gradients (or any direction in parameter space).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &SdaeNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// `self += s * other`.
    pub fn scaled_add(&mut self, s: f64, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(s, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(s, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            *w *= s;
        }
        for b in &mut self.biases {
            *b *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Precisions of the network-dependent terms of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkWeights {
    pub lambda_v: f64,
    pub lambda_n: f64,
    pub lambda_w: f64,
}

/// Data part of the objective for a set of rows: `(-λv/2 Σ‖v_j − f_e‖², -λn/2 Σ‖f_r − x_c‖²)`.
fn row_terms(trace: &ForwardTrace, net: &SdaeNetwork, xc: &ContentMatrix, v: ArrayView2<f64>, w: &NetworkWeights) -> (f64, f64) {
    let mut offset = 0.0;
    let mut recon = 0.0;
    let code = trace.layer_output(net.code_layer());
    let out = trace.layer_output(net.num_layers());
    for (r, &j) in trace.rows.iter().enumerate() {
        if w.lambda_v != 0.0 {
            offset += code
                .row(r)
                .iter()
                .zip(v.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        if w.lambda_n != 0.0 {
            recon += squared_residual(out.row(r), xc, j);
        }
    }
    (-0.5 * w.lambda_v * offset, -0.5 * w.lambda_n * recon)
}

/// `‖out − x_c,j‖²` with a sparse target.
fn squared_residual(out: ArrayView1<f64>, xc: &ContentMatrix, j: usize) -> f64 {
    let mut total: f64 = out.iter().map(|o| o * o).sum();
    let (idx, vals) = xc.row(j);
    for (&s, &t) in idx.iter().zip(vals) {
        let o = out[s];
        total += (o - t) * (o - t) - o * o;
    }
    total
}

fn check_targets(net: &SdaeNetwork, x0: &ContentMatrix, xc: &ContentMatrix, v: ArrayView2<f64>, w: &NetworkWeights) -> Result<()> {
    check_input(net, x0)?;
    if xc.vocab_size() != net.input_width() || xc.num_items() != x0.num_items() {
        return Err(CdlError::Shape(format!(
            "clean content is {}x{} but corrupted input is {}x{}",
            xc.num_items(),
            xc.vocab_size(),
            x0.num_items(),
            x0.vocab_size()
        )));
    }
    if w.lambda_v != 0.0 && v.dim() != (x0.num_items(), net.code_width()) {
        return Err(CdlError::Shape(format!(
            "item factors are {:?} but {} items with code width {} were expected",
            v.dim(),
            x0.num_items(),
            net.code_width()
        )));
    }
    Ok(())
}

/// `(item-offset term, reconstruction term)` of the joint objective, no dropout.
pub fn network_terms(net: &SdaeNetwork, x0: &ContentMatrix, xc: &ContentMatrix, v: ArrayView2<f64>, w: &NetworkWeights) -> Result<(f64, f64)> {
    check_targets(net, x0, xc, v, w)?;
    let parts = par::map_chunks(x0.num_items(), ROW_CHUNKS, |range| {
        let rows: Vec<usize> = range.collect();
        let trace = forward_rows(net, x0, &rows, None)?;
        Ok(row_terms(&trace, net, xc, v, w))
    });
    let mut total = (0.0, 0.0);
    for p in parts {
        let (a, b) = p?;
        total.0 += a;
        total.1 += b;
    }
    Ok(total)
}

/// Data-term gradient for a set of rows (no weight decay).
fn backprop_rows(
    net: &SdaeNetwork,
    x0: &ContentMatrix,
    xc: &ContentMatrix,
    v: ArrayView2<f64>,
    rows: &[usize],
    w: &NetworkWeights,
    mask: Option<&DropoutMask>,
) -> Result<Gradients> {
    let trace = forward_rows(net, x0, rows, mask)?;
    let l_total = net.num_layers();
    let code = net.code_layer();
    let mut grads = Gradients::zeros_like(net);

    // dℒ/dX_l for the current layer; decoder layers carry nothing when λn = 0.
    let mut upstream: Option<Array2<f64>> = None;
    if w.lambda_n != 0.0 {
        let out = trace.layer_output(l_total);
        let mut g = out.mapv(|o| -w.lambda_n * o);
        for (r, &j) in rows.iter().enumerate() {
            let (idx, vals) = xc.row(j);
            for (&s, &t) in idx.iter().zip(vals) {
                g[[r, s]] += w.lambda_n * t;
            }
        }
        upstream = Some(g);
    }
    for l in (1..=l_total).rev() {
        if l == code && w.lambda_v != 0.0 {
            let x = trace.layer_output(l);
            let g = upstream.get_or_insert_with(|| Array2::zeros(x.raw_dim()));
            for (r, &j) in rows.iter().enumerate() {
                g.row_mut(r)
                    .zip_mut_with(&x.row(r), |gv, &xv| *gv -= w.lambda_v * xv);
                g.row_mut(r).scaled_add(w.lambda_v, &v.row(j));
            }
        }
        let Some(mut delta) = upstream.take() else {
            continue;
        };
        if let Some(scale) = mask.and_then(|m| m.layer(l)) {
            for (r, &j) in rows.iter().enumerate() {
                delta.row_mut(r).zip_mut_with(&scale.row(j), |d, &s| *d *= s);
            }
        }
        delta.zip_mut_with(trace.activation(l), |d, &h| *d *= h * (1.0 - h));
        grads.biases[l - 1] = delta.sum_axis(Axis(0));
        if l == 1 {
            let gw = &mut grads.weights[0];
            for (r, &j) in rows.iter().enumerate() {
                let (idx, vals) = x0.row(j);
                for (&s, &xv) in idx.iter().zip(vals) {
                    gw.row_mut(s).scaled_add(xv, &delta.row(r));
                }
            }
        } else {
            let prev = trace.layer_output(l - 1);
            ndarray::linalg::general_mat_mul(1.0, &prev.t(), &delta, 0.0, &mut grads.weights[l - 1]);
            upstream = Some(delta.dot(&net.weight(l).t()));
        }
    }
    Ok(grads)
}

/// Gradient of the joint objective with respect to every `W_l`, `b_l`, summed
/// over `rows`, with weight decay scaled by `decay_scale` (1 for the full objective).
pub(crate) fn gradients_rows(
    net: &SdaeNetwork,
    x0: &ContentMatrix,
    xc: &ContentMatrix,
    v: ArrayView2<f64>,
    rows: &[usize],
    w: &NetworkWeights,
    mask: Option<&DropoutMask>,
    decay_scale: f64,
) -> Result<Gradients> {
    check_targets(net, x0, xc, v, w)?;
    let parts = par::map_chunks(rows.len(), ROW_CHUNKS, |range| {
        backprop_rows(net, x0, xc, v, &rows[range], w, mask)
    });
    let mut total = Gradients::zeros_like(net);
    for p in parts {
        total.add_assign(&p?);
    }
    let decay = -w.lambda_w * decay_scale;
    for (g, p) in total.weights.iter_mut().zip(&net.weights) {
        g.scaled_add(decay, p);
    }
    for (g, p) in total.biases.iter_mut().zip(&net.biases) {
        g.scaled_add(decay, p);
    }
    Ok(total)
}

/// Exact gradient of the joint objective with respect to all weights and biases:
/// `-λw W_l - λv Σ_j J_e,jᵀ(f_e − v_j) - λn Σ_j J_r,jᵀ(f_r − x_c,j)`.
pub fn gradients(
    net: &SdaeNetwork,
    x0: &ContentMatrix,
    xc: &ContentMatrix,
    v: ArrayView2<f64>,
    weights: &NetworkWeights,
    mask: Option<&DropoutMask>,
) -> Result<Gradients> {
    let rows: Vec<usize> = (0..x0.num_items()).collect();
    gradients_rows(net, x0, xc, v, &rows, weights, mask, 1.0)
}

/// Writes a text checkpoint. Floats use shortest round-trip formatting, so a
/// reload is bit-exact. `meta` is stored verbatim (typically the run config).
pub fn save_network(path: impl AsRef<Path>, net: &SdaeNetwork, meta: &str) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "cdl-sdae 1");
    let widths: Vec<String> = net.widths.iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "widths {}", widths.join(" "));
    let meta_lines: Vec<&str> = meta.lines().collect();
    let _ = writeln!(out, "meta {}", meta_lines.len());
    for line in &meta_lines {
        let _ = writeln!(out, "{line}");
    }
    let fmt_row = |row: ArrayView1<f64>| {
        row.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
    };
    for l in 1..=net.num_layers() {
        let _ = writeln!(out, "layer {l}");
        for row in net.weight(l).rows() {
            let _ = writeln!(out, "{}", fmt_row(row));
        }
        let _ = writeln!(out, "{}", fmt_row(net.bias(l).view()));
    }
    std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
}

/// Reads a checkpoint written by [`save_network`]; returns the network and metadata.
pub fn load_network(path: impl AsRef<Path>) -> Result<(SdaeNetwork, String)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
    let mut lines = text.lines().enumerate().peekable();
    let mut next = |what: &str| {
        lines.next().ok_or_else(|| CdlError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };
    let err = |line: usize, msg: String| CdlError::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        msg,
    };
    let (i, magic) = next("header")?;
    if magic.trim() != "cdl-sdae 1" {
        return Err(err(i, format!("not a network checkpoint: {magic:?}")));
    }
    let (i, wline) = next("widths")?;
    let widths: Vec<usize> = wline
        .strip_prefix("widths")
        .ok_or_else(|| err(i, "expected `widths`".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(i, format!("bad width {t:?}"))))
        .collect::<Result<_>>()?;
    validate_widths(&widths)?;
    let (i, mline) = next("meta")?;
    let n_meta: usize = mline
        .strip_prefix("meta")
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(|| err(i, "expected `meta <lines>`".into()))?;
    let mut meta = String::new();
    for _ in 0..n_meta {
        let (_, l) = next("meta line")?;
        meta.push_str(l);
        meta.push('\n');
    }
    let parse_row = |i: usize, line: &str, len: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(i, format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != len {
            return Err(err(i, format!("expected {len} values, got {}", vals.len())));
        }
        Ok(vals)
    };
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 1..widths.len() {
        let (i, h) = next("layer header")?;
        if h.trim() != format!("layer {l}") {
            return Err(err(i, format!("expected `layer {l}`")));
        }
        let (rows, cols) = (widths[l - 1], widths[l]);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (i, line) = next("weight row")?;
            data.extend(parse_row(i, line, cols)?);
        }
        weights.push(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"));
        let (i, line) = next("bias row")?;
        biases.push(Array1::from(parse_row(i, line, cols)?));
    }
    Ok((SdaeNetwork::new(widths, weights, biases)?, meta))
}
