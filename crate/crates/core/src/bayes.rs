//! Sampling-based inference with finite layer precision `λs`.
//!
//! Every hidden layer output `X_l` (`l = 1..L`) is a latent Gaussian around
//! `σ(X_{l-1} W_l + b_l)` with precision `λs`; the last layer emits `X_c` with
//! precision `λn` and the middle layer emits `v_j` with precision `λv`. One
//! scan of the chain updates:
//!
//! 1. every column of every `W⁺_l = [W_l; b_l]` by a Metropolis step,
//! 2. every row of every `X_l` by a Metropolis step,
//! 3. every `u_i`, then every `v_j`, by exact Gaussian draws.
//!
//! Metropolis steps use Langevin proposals `y = x + (ε²/2)∇log p(x) + ε z`
//! with the matching asymmetric correction. `ε` is kept per block (one for the
//! columns of `W⁺_l`, one for the rows of `X_l`), adapted during burn-in towards
//! a target acceptance rate and frozen afterwards.
//!
//! The corrupted input `X_0` and every `X_l` are held densely, so this path is
//! meant for small and medium problems; the MAP trainer is the scalable path.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::cf::{self, ConfidenceParams};
use crate::dataio::content::corrupt_indexed;
use crate::dataio::RatingsMatrix;
use crate::linalg::{sigmoid, SpdFactor};
use crate::rng::{rng_for, stream, Rng};
use crate::sdae::{self, InitScale, SdaeNetwork};
use crate::trainer::{HyperParams, TrainData};
use crate::{CdlError, Result};

/// Acceptance rates outside `[PINNED, 1 − PINNED]` after burn-in are flagged.
const PINNED: f64 = 0.01;

fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(CdlError::Numeric(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

fn gaussian_draw(factor: &SpdFactor, mean: Array1<f64>, rng: &mut Rng) -> Array1<f64> {
    let z = Array1::from_shape_simple_fn(mean.len(), || rng.sample::<f64, _>(StandardNormal));
    mean + factor.solve_upper(z.view())
}

/// Conditional of one row given the other side: `N(Λ⁻¹h, Λ⁻¹)`.
fn row_conditional(
    gram_b: &Array2<f64>,
    others: ArrayView2<f64>,
    observed: &[usize],
    conf: &ConfidenceParams,
    lambda: f64,
    prior_mean: Option<ArrayView1<f64>>,
) -> Result<(Array1<f64>, SpdFactor)> {
    let (a, h) = cf::normal_equations(others, observed, conf, lambda, prior_mean, gram_b);
    let factor = SpdFactor::new(&a)?;
    Ok((factor.solve(h.view()), factor))
}

fn check_precision(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(CdlError::Argument(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Mean and precision factor of `p(u_i | R_i, V)`. The mean is computed exactly
/// as [`cf::update_user`] computes the MAP update.
pub fn user_conditional(
    user: usize,
    items: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_u: f64,
) -> Result<Array1<f64>> {
    check_precision("lambda_u", lambda_u)?;
    let gram_b = cf::gram(items) * conf.b;
    Ok(row_conditional(&gram_b, items, ratings.user_items(user), conf, lambda_u, None)?.0)
}

/// Draw from `N(μ, Λ⁻¹)` with `Λ = λu I + V C_i Vᵀ`, `μ = Λ⁻¹ V C_i R_i`.
pub fn sample_u(
    user: usize,
    items: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_u: f64,
    rng: &mut Rng,
) -> Result<Array1<f64>> {
    check_precision("lambda_u", lambda_u)?;
    let gram_b = cf::gram(items) * conf.b;
    let (mean, factor) = row_conditional(&gram_b, items, ratings.user_items(user), conf, lambda_u, None)?;
    Ok(gaussian_draw(&factor, mean, rng))
}

/// Draw from `N(μ, Λ⁻¹)` with `Λ = λv I + U C_j Uᵀ`, `μ = Λ⁻¹(U C_j R_j + λv x)`
/// where `x` is the item's middle-layer row.
pub fn sample_v(
    item: usize,
    users: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_v: f64,
    code: ArrayView1<f64>,
    rng: &mut Rng,
) -> Result<Array1<f64>> {
    check_precision("lambda_v", lambda_v)?;
    if code.len() != users.ncols() {
        return Err(CdlError::Shape(format!(
            "code row has length {} but factors have width {}",
            code.len(),
            users.ncols()
        )));
    }
    let gram_b = cf::gram(users) * conf.b;
    let (mean, factor) = row_conditional(&gram_b, users, ratings.item_users(item), conf, lambda_v, Some(code))?;
    Ok(gaussian_draw(&factor, mean, rng))
}

/// `log p(W⁺_{l,*n} | X_{l-1}, X_{l,*n})` up to a constant, with `w` holding
/// the weight column followed by the bias.
pub fn logpost_w_col(w: ArrayView1<f64>, prev: ArrayView2<f64>, target: ArrayView1<f64>, lambda_w: f64, lambda_s: f64) -> Result<f64> {
    Ok(w_col_terms(w, prev, target, lambda_w, lambda_s, false)?.0)
}

/// Gradient of [`logpost_w_col`] with respect to `w`.
pub fn grad_w_col(w: ArrayView1<f64>, prev: ArrayView2<f64>, target: ArrayView1<f64>, lambda_w: f64, lambda_s: f64) -> Result<Array1<f64>> {
    Ok(w_col_terms(w, prev, target, lambda_w, lambda_s, true)?.1.expect("gradient requested"))
}

fn w_col_terms(
    w: ArrayView1<f64>,
    prev: ArrayView2<f64>,
    target: ArrayView1<f64>,
    lambda_w: f64,
    lambda_s: f64,
    want_grad: bool,
) -> Result<(f64, Option<Array1<f64>>)> {
    let k = prev.ncols();
    if w.len() != k + 1 || target.len() != prev.nrows() {
        return Err(CdlError::Shape(format!(
            "column of length {} against inputs {:?} and targets of length {}",
            w.len(),
            prev.dim(),
            target.len()
        )));
    }
    check_finite("weight column", w.iter().copied())?;
    check_finite("layer input", prev.iter().copied())?;
    check_finite("layer target", target.iter().copied())?;
    let weights = w.slice(s![..k]);
    let bias = w[k];
    let mut value = -0.5 * lambda_w * w.dot(&w);
    let mut grad = want_grad.then(|| w.mapv(|x| -lambda_w * x));
    for (row, &t) in prev.outer_iter().zip(target) {
        let h = sigmoid(row.dot(&weights) + bias);
        let r = t - h;
        value -= 0.5 * lambda_s * r * r;
        if let Some(g) = grad.as_mut() {
            let c = lambda_s * r * h * (1.0 - h);
            g.slice_mut(s![..k]).scaled_add(c, &row);
            g[k] += c;
        }
    }
    Ok((value, grad))
}

/// Rows adjacent to `X_{l,j*}` in the layer chain.
#[derive(Debug, Clone, Copy, Default)]
pub struct RowNeighbors<'a> {
    /// `X_{l-1,j*}`.
    pub prev: Option<ArrayView1<'a, f64>>,
    /// `X_{l+1,j*}`, or the clean content row when `l = L`.
    pub next: Option<ArrayView1<'a, f64>>,
    /// `v_j`; required iff `l = L/2`.
    pub item: Option<ArrayView1<'a, f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPrecisions {
    pub lambda_s: f64,
    pub lambda_n: f64,
    pub lambda_v: f64,
}

/// `log p(X_{l,j*} | neighbours)` up to a constant: the Gaussian from layer
/// `l−1`, the Gaussian into layer `l+1` (or into `X_c` with precision `λn` when
/// `l = L`), and at `l = L/2` the coupling `N(v_j | X_{l,j*}, λv⁻¹ I)`.
pub fn logpost_x_row(net: &SdaeNetwork, l: usize, x: ArrayView1<f64>, nb: &RowNeighbors, p: &RowPrecisions) -> Result<f64> {
    Ok(x_row_terms(net, l, x, nb, p, false)?.0)
}

/// Gradient of [`logpost_x_row`] with respect to `x`.
pub fn grad_x_row(net: &SdaeNetwork, l: usize, x: ArrayView1<f64>, nb: &RowNeighbors, p: &RowPrecisions) -> Result<Array1<f64>> {
    Ok(x_row_terms(net, l, x, nb, p, true)?.1.expect("gradient requested"))
}

fn x_row_terms(
    net: &SdaeNetwork,
    l: usize,
    x: ArrayView1<f64>,
    nb: &RowNeighbors,
    p: &RowPrecisions,
    want_grad: bool,
) -> Result<(f64, Option<Array1<f64>>)> {
    let top = net.num_layers();
    if l == 0 || l > top {
        return Err(CdlError::Argument(format!("layer {l} outside 1..={top}")));
    }
    let width = net.widths()[l];
    if x.len() != width {
        return Err(CdlError::Shape(format!("row of length {} for layer {l} of width {width}", x.len())));
    }
    let missing = |what: &str| CdlError::Argument(format!("layer {l} row needs its {what}"));
    let prev = nb.prev.ok_or_else(|| missing("previous-layer row"))?;
    let next = nb.next.ok_or_else(|| missing("next-layer row"))?;
    let item = if l == net.code_layer() {
        Some(nb.item.ok_or_else(|| missing("item factor"))?)
    } else {
        None
    };
    let next_width = if l == top { width } else { net.widths()[l + 1] };
    if prev.len() != net.widths()[l - 1] || next.len() != next_width || item.is_some_and(|v| v.len() != width) {
        return Err(CdlError::Shape(format!("neighbour rows of layer {l} have the wrong length")));
    }
    check_finite("layer row", x.iter().copied())?;

    // Incoming: -λs/2 ‖x − σ(prev·W_l + b_l)‖²
    let mean_in = (prev.dot(net.weight(l)) + net.bias(l)).mapv(sigmoid);
    let diff_in = &mean_in - &x;
    let mut value = -0.5 * p.lambda_s * diff_in.dot(&diff_in);
    let mut grad = want_grad.then(|| diff_in.mapv(|d| p.lambda_s * d));

    if l == top {
        let d = &next - &x;
        value -= 0.5 * p.lambda_n * d.dot(&d);
        if let Some(g) = grad.as_mut() {
            g.scaled_add(p.lambda_n, &d);
        }
    } else {
        let h = (x.dot(net.weight(l + 1)) + net.bias(l + 1)).mapv(sigmoid);
        let r = &next - &h;
        value -= 0.5 * p.lambda_s * r.dot(&r);
        if let Some(g) = grad.as_mut() {
            let delta = &r * &h.mapv(|h| h * (1.0 - h)) * p.lambda_s;
            g.scaled_add(1.0, &net.weight(l + 1).dot(&delta));
        }
    }
    if let Some(v) = item {
        let d = &v - &x;
        value -= 0.5 * p.lambda_v * d.dot(&d);
        if let Some(g) = grad.as_mut() {
            g.scaled_add(p.lambda_v, &d);
        }
    }
    if !value.is_finite() {
        return Err(CdlError::Numeric(format!("layer {l} row log-density is not finite")));
    }
    Ok((value, grad))
}

/// Log acceptance ratio of a Langevin move `x → y` with step `ε`, given the
/// target's value and gradient at both points.
pub fn mala_log_ratio(
    x: ArrayView1<f64>,
    fx: f64,
    gx: ArrayView1<f64>,
    y: ArrayView1<f64>,
    fy: f64,
    gy: ArrayView1<f64>,
    step: f64,
) -> f64 {
    let half = 0.5 * step * step;
    let log_q = |to: ArrayView1<f64>, from: ArrayView1<f64>, g: ArrayView1<f64>| {
        let mut ss = 0.0;
        for ((t, f), gi) in to.iter().zip(from).zip(g) {
            let d = t - f - half * gi;
            ss += d * d;
        }
        -ss / (4.0 * half)
    };
    fy - fx + log_q(x, y, gy) - log_q(y, x, gx)
}

/// One Langevin Metropolis step on `x` in place. A zero step proposes the
/// current point, which is always accepted.
fn mala_step<F>(x: &mut Array1<f64>, step: f64, target: F, rng: &mut Rng) -> Result<bool>
where
    F: Fn(ArrayView1<f64>) -> Result<(f64, Array1<f64>)>,
{
    if step == 0.0 {
        return Ok(true);
    }
    let (fx, gx) = target(x.view())?;
    let mut y = x.clone();
    y.scaled_add(0.5 * step * step, &gx);
    for yi in y.iter_mut() {
        *yi += step * rng.sample::<f64, _>(StandardNormal);
    }
    let (fy, gy) = match target(y.view()) {
        Ok(t) => t,
        // A proposal the density cannot evaluate is a rejection.
        Err(CdlError::Numeric(_)) => return Ok(false),
        Err(e) => return Err(e),
    };
    let log_alpha = mala_log_ratio(x.view(), fx, gx.view(), y.view(), fy, gy.view(), step);
    let u: f64 = rng.random();
    if u.ln() < log_alpha {
        *x = y;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Which blocks a scan updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub network: bool,
    pub layers: bool,
    pub users: bool,
    pub items: bool,
}

impl Default for Blocks {
    fn default() -> Self {
        Self {
            network: true,
            layers: true,
            users: true,
            items: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub initial_step: f64,
    pub target_accept: f64,
    pub blocks: Blocks,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iters: 1000,
            burn_in: 500,
            thin: 10,
            initial_step: 0.1,
            target_accept: 0.3,
            blocks: Blocks::default(),
        }
    }
}

impl ChainConfig {
    fn validate(&self) -> Result<()> {
        if self.iters <= self.burn_in {
            return Err(CdlError::Argument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(CdlError::Argument("thinning interval must be at least 1".into()));
        }
        if !(self.initial_step >= 0.0 && self.initial_step.is_finite()) {
            return Err(CdlError::Argument(format!("initial step {} must be >= 0", self.initial_step)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(CdlError::Argument(format!("target acceptance {} outside (0, 1)", self.target_accept)));
        }
        Ok(())
    }
}

/// Proposal scale and acceptance counts of one Metropolis block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStats {
    pub name: String,
    pub step: f64,
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockStats {
    fn new(name: String, step: f64) -> Self {
        Self {
            name,
            step,
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Full chain state.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub network: SdaeNetwork,
    /// `layers[l]` is `X_l` for `l = 0..=L`; `X_0` is the fixed corrupted input.
    pub layers: Vec<Array2<f64>>,
    /// Clean content `X_c`, densified.
    pub clean: Array2<f64>,
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    /// `W⁺_l` blocks for `l = 1..=L`, then `X_l` blocks for `l = 1..=L`.
    pub blocks: Vec<BlockStats>,
    pub iteration: usize,
    rng: Rng,
}

impl SamplerState {
    /// Starts from a freshly initialized network with every `X_l` at its
    /// deterministic value, `U = 0` and `V = X_{L/2}`.
    pub fn new(data: &TrainData, hyper: &HyperParams, initial_step: f64) -> Result<Self> {
        let xc = data
            .content
            .as_ref()
            .ok_or_else(|| CdlError::Validation("the sampler needs item content".into()))?;
        let widths = hyper.widths_for(xc.vocab_size())?;
        let net = SdaeNetwork::init(&widths, hyper.seed, InitScale::PriorOrFanIn { lambda_w: hyper.lambda_w })?;
        let users = Array2::zeros((data.num_users(), hyper.k));
        Self::with_start(data, hyper, net, users, None, initial_step)
    }

    /// Starts from given parameters (e.g. a MAP fit). `items = None` sets `V = X_{L/2}`.
    pub fn with_start(
        data: &TrainData,
        hyper: &HyperParams,
        network: SdaeNetwork,
        users: Array2<f64>,
        items: Option<Array2<f64>>,
        initial_step: f64,
    ) -> Result<Self> {
        let xc = data
            .content
            .as_ref()
            .ok_or_else(|| CdlError::Validation("the sampler needs item content".into()))?;
        if !(hyper.lambda_s > 0.0 && hyper.lambda_s.is_finite()) {
            return Err(CdlError::Argument(format!("the sampler needs a finite lambda_s, got {}", hyper.lambda_s)));
        }
        let x0 = corrupt_indexed(xc, hyper.noise_level, hyper.seed, 0)?;
        let trace = sdae::forward(&network, &x0, None)?;
        let mut layers = vec![x0.to_dense()];
        for l in 1..=network.num_layers() {
            layers.push(trace.layer_output(l).clone());
        }
        let code = layers[network.code_layer()].clone();
        let items = items.unwrap_or(code);
        if users.dim() != (data.num_users(), network.code_width()) || items.dim() != (data.num_items(), network.code_width()) {
            return Err(CdlError::Shape(format!(
                "starting factors {:?} / {:?} do not match {} users, {} items, K={}",
                users.dim(),
                items.dim(),
                data.num_users(),
                data.num_items(),
                network.code_width()
            )));
        }
        let top = network.num_layers();
        let blocks = (1..=top)
            .map(|l| BlockStats::new(format!("W{l}"), initial_step))
            .chain((1..=top).map(|l| BlockStats::new(format!("X{l}"), initial_step)))
            .collect();
        Ok(Self {
            network,
            layers,
            clean: xc.to_dense(),
            users,
            items,
            blocks,
            iteration: 0,
            rng: rng_for(hyper.seed, stream::SAMPLER, 0),
        })
    }

    fn precisions(hyper: &HyperParams) -> RowPrecisions {
        RowPrecisions {
            lambda_s: hyper.lambda_s,
            lambda_n: hyper.lambda_n,
            lambda_v: hyper.lambda_v,
        }
    }
}

/// Per-block acceptance counts of one scan.
pub type ScanCounts = Vec<(u64, u64)>;

/// One full scan over the selected blocks. Returns `(proposed, accepted)` per
/// Metropolis block, in the order of [`SamplerState::blocks`].
pub fn mwg_step(state: &mut SamplerState, data: &TrainData, hyper: &HyperParams, blocks: Blocks) -> Result<ScanCounts> {
    let top = state.network.num_layers();
    let mut counts = vec![(0u64, 0u64); 2 * top];
    if blocks.network {
        for l in 1..=top {
            let step = state.blocks[l - 1].step;
            for n in 0..state.network.widths()[l] {
                let mut w = Array1::zeros(state.network.widths()[l - 1] + 1);
                let k = w.len() - 1;
                w.slice_mut(s![..k]).assign(&state.network.weight(l).column(n));
                w[k] = state.network.bias(l)[n];
                let prev = state.layers[l - 1].view();
                let target = state.layers[l].column(n);
                let accepted = mala_step(
                    &mut w,
                    step,
                    |w| w_col_terms(w, prev, target, hyper.lambda_w, hyper.lambda_s, true).map(|(f, g)| (f, g.expect("requested"))),
                    &mut state.rng,
                )?;
                state.network.weight_mut(l).column_mut(n).assign(&w.slice(s![..k]));
                state.network.bias_mut(l)[n] = w[k];
                counts[l - 1].0 += 1;
                counts[l - 1].1 += accepted as u64;
            }
        }
    }
    if blocks.layers {
        let p = SamplerState::precisions(hyper);
        for l in 1..=top {
            let step = state.blocks[top + l - 1].step;
            for j in 0..data.num_items() {
                let mut x = state.layers[l].row(j).to_owned();
                let nb = RowNeighbors {
                    prev: Some(state.layers[l - 1].row(j)),
                    next: Some(if l == top { state.clean.row(j) } else { state.layers[l + 1].row(j) }),
                    item: (l == state.network.code_layer()).then(|| state.items.row(j)),
                };
                let net = &state.network;
                let accepted = mala_step(
                    &mut x,
                    step,
                    |x| x_row_terms(net, l, x, &nb, &p, true).map(|(f, g)| (f, g.expect("requested"))),
                    &mut state.rng,
                )?;
                state.layers[l].row_mut(j).assign(&x);
                counts[top + l - 1].0 += 1;
                counts[top + l - 1].1 += accepted as u64;
            }
        }
    }
    if blocks.users {
        let gram_b = cf::gram(state.items.view()) * hyper.conf.b;
        for i in 0..data.num_users() {
            let (mean, f) = row_conditional(
                &gram_b,
                state.items.view(),
                data.ratings.user_items(i),
                &hyper.conf,
                hyper.lambda_u,
                None,
            )?;
            let draw = gaussian_draw(&f, mean, &mut state.rng);
            state.users.row_mut(i).assign(&draw);
        }
    }
    if blocks.items {
        let gram_b = cf::gram(state.users.view()) * hyper.conf.b;
        let code = state.network.code_layer();
        for j in 0..data.num_items() {
            let (mean, f) = row_conditional(
                &gram_b,
                state.users.view(),
                data.ratings.item_users(j),
                &hyper.conf,
                hyper.lambda_v,
                Some(state.layers[code].row(j)),
            )?;
            let draw = gaussian_draw(&f, mean, &mut state.rng);
            state.items.row_mut(j).assign(&draw);
        }
    }
    state.iteration += 1;
    Ok(counts)
}

/// Thinned record of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRow {
    pub iteration: usize,
    /// Acceptance rate of each Metropolis block in this scan.
    pub acceptance: Vec<f64>,
    pub tracked: Vec<f64>,
}

/// Names of the scalars recorded in every [`ChainRow`].
pub const TRACKED: [&str; 4] = ["u[0,0]", "v[0,0]", "W1[0,0]", "Xcode[0,0]"];

fn tracked(state: &SamplerState) -> Vec<f64> {
    let code = state.network.code_layer();
    let first = |a: &Array2<f64>| a.first().copied().unwrap_or(f64::NAN);
    vec![
        first(&state.users),
        first(&state.items),
        state.network.weight(1)[[0, 0]],
        first(&state.layers[code]),
    ]
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    mean: Array2<f64>,
    m2: Array2<f64>,
}

impl Moments {
    fn new(dim: (usize, usize)) -> Self {
        Self {
            n: 0,
            mean: Array2::zeros(dim),
            m2: Array2::zeros(dim),
        }
    }

    fn push(&mut self, x: &Array2<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean.scaled_add(1.0 / self.n as f64, &delta);
        let delta2 = x - &self.mean;
        self.m2 += &(&delta * &delta2);
    }

    fn variance(&self) -> Array2<f64> {
        if self.n < 2 {
            Array2::zeros(self.mean.raw_dim())
        } else {
            &self.m2 / (self.n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub rows: Vec<ChainRow>,
    /// Step sizes and post-burn-in acceptance counts per Metropolis block.
    pub blocks: Vec<BlockStats>,
    pub samples: usize,
    pub user_mean: Array2<f64>,
    pub user_var: Array2<f64>,
    pub item_mean: Array2<f64>,
    pub item_var: Array2<f64>,
    pub warnings: Vec<String>,
}

impl ChainSummary {
    /// Chain trace: iteration, per-block acceptance, tracked scalars.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "iteration")?;
        for b in &self.blocks {
            write!(out, "\taccept_{}", b.name)?;
        }
        for t in TRACKED {
            write!(out, "\t{t}")?;
        }
        writeln!(out)?;
        for r in &self.rows {
            write!(out, "{}", r.iteration)?;
            for v in r.acceptance.iter().chain(&r.tracked) {
                write!(out, "\t{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Block table plus posterior means and variances of `U` and `V`.
    pub fn write_report<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "samples\t{}", self.samples)?;
        writeln!(out, "block\tstep\taccept_rate")?;
        for b in &self.blocks {
            writeln!(out, "{}\t{}\t{}", b.name, b.step, b.rate())?;
        }
        for w in &self.warnings {
            writeln!(out, "warning\t{w}")?;
        }
        for (name, mean, var) in [("u", &self.user_mean, &self.user_var), ("v", &self.item_mean, &self.item_var)] {
            for ((r, c), m) in mean.indexed_iter() {
                writeln!(out, "{name}[{r},{c}]\t{m}\t{}", var[[r, c]])?;
            }
        }
        Ok(())
    }
}

/// Runs `config.iters` scans from `state`. During burn-in each block's log
/// step moves by `(rate − target)/(t+1)^0.6` after every scan.
pub fn run(state: &mut SamplerState, data: &TrainData, hyper: &HyperParams, config: &ChainConfig) -> Result<ChainSummary> {
    config.validate()?;
    let mut users = Moments::new(state.users.dim());
    let mut items = Moments::new(state.items.dim());
    let mut rows = Vec::new();
    for b in state.blocks.iter_mut() {
        b.proposed = 0;
        b.accepted = 0;
    }
    for t in 0..config.iters {
        let counts = mwg_step(state, data, hyper, config.blocks)?;
        let burning = t < config.burn_in;
        let gain = ((t + 1) as f64).powf(-0.6);
        for (b, &(p, a)) in state.blocks.iter_mut().zip(&counts) {
            if p == 0 {
                continue;
            }
            if burning {
                if b.step > 0.0 {
                    let rate = a as f64 / p as f64;
                    b.step *= (gain * (rate - config.target_accept)).exp();
                }
            } else {
                b.proposed += p;
                b.accepted += a;
            }
        }
        if !burning && (t - config.burn_in) % config.thin == 0 {
            users.push(&state.users);
            items.push(&state.items);
            rows.push(ChainRow {
                iteration: t,
                acceptance: counts
                    .iter()
                    .map(|&(p, a)| if p == 0 { f64::NAN } else { a as f64 / p as f64 })
                    .collect(),
                tracked: tracked(state),
            });
        }
    }
    let mut warnings = Vec::new();
    for b in &state.blocks {
        if b.proposed > 0 && b.step > 0.0 && !(PINNED..=1.0 - PINNED).contains(&b.rate()) {
            let msg = format!("block {} acceptance {:.3} is pinned after adaptation (step {:e})", b.name, b.rate(), b.step);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(ChainSummary {
        rows,
        blocks: state.blocks.clone(),
        samples: users.n,
        user_var: users.variance(),
        user_mean: users.mean,
        item_var: items.variance(),
        item_mean: items.mean,
        warnings,
    })
}

/// Fresh state plus [`run`].
pub fn run_chain(data: &TrainData, hyper: &HyperParams, config: &ChainConfig) -> Result<ChainSummary> {
    let mut state = SamplerState::new(data, hyper, config.initial_step)?;
    run(&mut state, data, hyper, config)
}
