//! Alternating MAP optimization.
//!
//! One sweep is: closed-form update of every `u_i`, closed-form update of every
//! `v_j` towards the current encodings, then `epochs_per_block` momentum
//! gradient epochs on the network with a fresh corruption of the content per
//! epoch. The degenerate variants reuse the same loop:
//!
//! | variant        | network trained                          | item prior mean |
//! |----------------|------------------------------------------|-----------------|
//! | `cdl`          | jointly, inside every sweep              | `f_e(X_0)`      |
//! | `two-step`     | first, on reconstruction only, then frozen | frozen `f_e`  |
//! | `encoder-only` | jointly with `λn = 0`                    | `f_e(X_0)`      |
//! | `mf`           | none                                     | 0               |

mod config;
mod report;

pub use config::{expand_grid, HyperParams};
pub use report::{ObjectiveTerms, SweepRecord, TrainReport};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::cf::{self, LatentFactors};
use crate::dataio::content::corrupt_indexed;
use crate::dataio::{ContentMatrix, RatingsMatrix};
use crate::rng::{rng_for, stream};
use crate::sdae::{self, DropoutMask, Gradients, InitScale, NetworkWeights, SdaeNetwork};
use crate::{CdlError, Result};

/// Standard deviation of the random perturbation added to the initial item factors.
const INIT_FACTOR_SD: f64 = 0.1;
/// Learning-rate halvings allowed before a run is declared diverged.
const MAX_LR_HALVINGS: usize = 5;

/// Training inputs with consistent item counts.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub ratings: RatingsMatrix,
    /// Clean content `X_c`; required by every variant except `mf`.
    pub content: Option<ContentMatrix>,
}

impl TrainData {
    /// Pads whichever side has fewer items so both describe the same `J`.
    pub fn new(ratings: RatingsMatrix, content: Option<ContentMatrix>) -> Result<Self> {
        let j = ratings
            .num_items()
            .max(content.as_ref().map_or(0, |c| c.num_items()));
        let ratings = ratings.with_dims(ratings.num_users(), j)?;
        let content = content.map(|c| c.with_num_items(j));
        Ok(Self { ratings, content })
    }

    pub fn num_users(&self) -> usize {
        self.ratings.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.ratings.num_items()
    }

    fn content(&self) -> Result<&ContentMatrix> {
        self.content
            .as_ref()
            .ok_or_else(|| CdlError::Validation("this variant needs item content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Cdl,
    TwoStep,
    EncoderOnly,
    Mf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cdl, Variant::TwoStep, Variant::EncoderOnly, Variant::Mf];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Cdl => "cdl",
            Variant::TwoStep => "two-step",
            Variant::EncoderOnly => "encoder-only",
            Variant::Mf => "mf",
        }
    }

    pub fn uses_content(self) -> bool {
        self != Variant::Mf
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                CdlError::Argument(format!(
                    "unknown variant {s:?} (expected cdl, two-step, encoder-only or mf)"
                ))
            })
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub variant: Variant,
    /// `None` for the content-free baseline.
    pub network: Option<SdaeNetwork>,
    pub factors: LatentFactors,
    /// Item prior means used by the last V sweep (`f_e(X_0)`, or zero for `mf`).
    pub encodings: Array2<f64>,
    pub report: TrainReport,
}

/// Evaluates the joint log-likelihood and its five terms. With `network =
/// None` the item prior mean is zero and the network terms vanish.
pub fn objective(
    network: Option<(&SdaeNetwork, &ContentMatrix)>,
    factors: &LatentFactors,
    data: &TrainData,
    hyper: &HyperParams,
) -> Result<ObjectiveTerms> {
    let u = &factors.users;
    let v = &factors.items;
    let mut terms = ObjectiveTerms {
        user_prior: -0.5 * hyper.lambda_u * u.iter().map(|x| x * x).sum::<f64>(),
        rating: cf::rating_objective(u.view(), v.view(), &data.ratings, &hyper.conf),
        ..Default::default()
    };
    match network {
        Some((net, x0)) => {
            let xc = data.content()?;
            terms.weight_prior = -0.5 * hyper.lambda_w * net.squared_norm();
            let (offset, recon) = sdae::network_terms(net, x0, xc, v.view(), &network_weights(hyper))?;
            terms.item_offset = offset;
            terms.reconstruction = recon;
        }
        None => {
            terms.item_offset = -0.5 * hyper.lambda_v * v.iter().map(|x| x * x).sum::<f64>();
        }
    }
    if let Some(name) = terms.first_non_finite() {
        return Err(CdlError::Numeric(format!("objective term {name} is not finite")));
    }
    Ok(terms)
}

fn network_weights(hyper: &HyperParams) -> NetworkWeights {
    NetworkWeights {
        lambda_v: hyper.lambda_v,
        lambda_n: hyper.lambda_n,
        lambda_w: hyper.lambda_w,
    }
}

fn init_network(xc: &ContentMatrix, hyper: &HyperParams) -> Result<SdaeNetwork> {
    let widths = hyper.widths_for(xc.vocab_size())?;
    let scale = match hyper.init_sd {
        Some(sd) => InitScale::Fixed(sd),
        None => InitScale::PriorOrFanIn {
            lambda_w: hyper.lambda_w,
        },
    };
    SdaeNetwork::init(&widths, hyper.seed, scale)
}

/// One pass over all items in shuffled mini-batches with heavy-ball momentum.
/// Steps follow the gradient of `ℒ / J`, so the learning rate does not scale
/// with the number of items. Returns the corrupted input used.
#[allow(clippy::too_many_arguments)]
fn sdae_epoch(
    net: &mut SdaeNetwork,
    velocity: &mut Gradients,
    xc: &ContentMatrix,
    v: ArrayView2<f64>,
    weights: &NetworkWeights,
    hyper: &HyperParams,
    learning_rate: f64,
    epoch: u64,
) -> Result<ContentMatrix> {
    let j = xc.num_items();
    let x0 = corrupt_indexed(xc, hyper.noise_level, hyper.seed, epoch)?;
    let mask = if hyper.dropout_rate > 0.0 {
        Some(DropoutMask::sample(net, j, hyper.dropout_rate, hyper.seed, epoch)?)
    } else {
        None
    };
    let mut order: Vec<usize> = (0..j).collect();
    order.shuffle(&mut rng_for(hyper.seed, stream::BATCHES, epoch));
    let batch = if hyper.batch_size == 0 { j } else { hyper.batch_size.min(j) };
    if batch == 0 {
        return Ok(x0);
    }
    for rows in order.chunks(batch) {
        let scale = rows.len() as f64 / j as f64;
        let g = sdae::gradients_rows(net, &x0, xc, v, rows, weights, mask.as_ref(), scale)?;
        velocity.scale(hyper.momentum);
        velocity.scaled_add(learning_rate / rows.len() as f64, &g);
        net.add_scaled(1.0, velocity);
    }
    if !net.is_finite() {
        return Err(CdlError::Numeric(format!("network weights non-finite after epoch {epoch}")));
    }
    Ok(x0)
}

/// Trains the autoencoder on reconstruction alone (`λv = 0`) for `epochs`
/// epochs. Ratings play no part. Returns the network and the last corrupted input.
pub fn pretrain_sdae(xc: &ContentMatrix, hyper: &HyperParams, epochs: usize) -> Result<(SdaeNetwork, ContentMatrix)> {
    let mut net = init_network(xc, hyper)?;
    let (x0, _) = pretrain_from(&mut net, xc, hyper, epochs, 0)?;
    Ok((net, x0))
}

fn pretrain_from(
    net: &mut SdaeNetwork,
    xc: &ContentMatrix,
    hyper: &HyperParams,
    epochs: usize,
    first_epoch: u64,
) -> Result<(ContentMatrix, u64)> {
    let weights = NetworkWeights {
        lambda_v: 0.0,
        ..network_weights(hyper)
    };
    let mut velocity = Gradients::zeros_like(net);
    let mut x0 = corrupt_indexed(xc, hyper.noise_level, hyper.seed, first_epoch)?;
    let no_targets = Array2::<f64>::zeros((0, 0));
    let mut epoch = first_epoch;
    for _ in 0..epochs {
        epoch += 1;
        x0 = sdae_epoch(net, &mut velocity, xc, no_targets.view(), &weights, hyper, hyper.learning_rate, epoch)?;
    }
    Ok((x0, epoch))
}

/// Mutable state of a run; cloned as the rollback checkpoint for each sweep.
#[derive(Clone)]
struct State {
    net: Option<SdaeNetwork>,
    velocity: Option<Gradients>,
    x0: Option<ContentMatrix>,
    /// Item prior means; `None` for the zero-mean baseline.
    encodings: Option<Array2<f64>>,
    users: Array2<f64>,
    items: Array2<f64>,
    epoch: u64,
}

impl State {
    fn new(data: &TrainData, hyper: &HyperParams, net: Option<(SdaeNetwork, ContentMatrix)>, epoch: u64) -> Result<Self> {
        let (i, j, k) = (data.num_users(), data.num_items(), hyper.k);
        let normal = Normal::new(0.0, INIT_FACTOR_SD).expect("valid sd");
        let mut rng = rng_for(hyper.seed, stream::INIT_FACTORS, 0);
        let noise = Array2::from_shape_simple_fn((j, k), || normal.sample(&mut rng));
        let (net, x0, encodings) = match net {
            Some((net, x0)) => {
                let enc = sdae::encode_all(&net, &x0)?;
                (Some(net), Some(x0), Some(enc))
            }
            None => (None, None, None),
        };
        let items = match &encodings {
            Some(e) => e + &noise,
            None => noise,
        };
        Ok(Self {
            velocity: net.as_ref().map(Gradients::zeros_like),
            net,
            x0,
            encodings,
            users: Array2::zeros((i, k)),
            items,
            epoch,
        })
    }

    fn factors(&self) -> Result<LatentFactors> {
        LatentFactors::new(self.users.clone(), self.items.clone())
    }

    fn objective(&self, data: &TrainData, hyper: &HyperParams) -> Result<ObjectiveTerms> {
        let factors = LatentFactors {
            users: self.users.clone(),
            items: self.items.clone(),
        };
        let net = match (&self.net, &self.x0) {
            (Some(n), Some(x)) => Some((n, x)),
            _ => None,
        };
        objective(net, &factors, data, hyper)
    }
}

/// Runs the sweep loop. `train_network` controls whether gradient epochs run
/// inside each sweep.
fn run_sweeps(
    variant: Variant,
    data: &TrainData,
    hyper: &HyperParams,
    mut state: State,
    train_network: bool,
) -> Result<TrainedModel> {
    let weights = network_weights(hyper);
    let start = Instant::now();
    let mut report = TrainReport::default();
    report.records.push(SweepRecord {
        sweep: 0,
        terms: state.objective(data, hyper)?,
        seconds: start.elapsed().as_secs_f64(),
    });
    let mut learning_rate = hyper.learning_rate;
    let mut quiet_sweeps = 0usize;
    let mut sweep = 1;
    while sweep <= hyper.max_sweeps {
        let t0 = Instant::now();
        let checkpoint = state.clone();
        let attempt = (|| -> Result<ObjectiveTerms> {
            state.users = cf::sweep_users(state.items.view(), &data.ratings, &hyper.conf, hyper.lambda_u)?;
            state.items = cf::sweep_items(
                state.users.view(),
                &data.ratings,
                &hyper.conf,
                hyper.lambda_v,
                state.encodings.as_ref().map(|e| e.view()),
            )?;
            if train_network && hyper.epochs_per_block > 0 {
                let xc = data.content()?;
                let net = state.net.as_mut().expect("network present when training it");
                let velocity = state.velocity.as_mut().expect("velocity tracks network");
                for _ in 0..hyper.epochs_per_block {
                    state.epoch += 1;
                    let x0 = sdae_epoch(
                        net,
                        velocity,
                        xc,
                        state.items.view(),
                        &weights,
                        hyper,
                        learning_rate,
                        state.epoch,
                    )?;
                    state.x0 = Some(x0);
                }
                state.encodings = Some(sdae::encode_all(net, state.x0.as_ref().expect("set above"))?);
            }
            state.objective(data, hyper)
        })();
        let terms = match attempt {
            Ok(t) => t,
            Err(CdlError::Numeric(msg)) => {
                state = checkpoint;
                report.lr_halvings += 1;
                if report.lr_halvings > MAX_LR_HALVINGS {
                    return Err(CdlError::Diverged {
                        sweep,
                        retries: MAX_LR_HALVINGS,
                        last_good: Box::new(crate::error::Checkpoint {
                            network: state.net,
                            factors: LatentFactors {
                                users: state.users,
                                items: state.items,
                            },
                        }),
                    });
                }
                learning_rate *= 0.5;
                log::warn!("sweep {sweep}: {msg}; restoring and halving learning rate to {learning_rate}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let prev = report.final_objective().expect("initial record present");
        report.records.push(SweepRecord {
            sweep,
            terms,
            seconds: t0.elapsed().as_secs_f64(),
        });
        let total = terms.total();
        log::debug!("{variant} sweep {sweep}: objective {total:e}");
        let rel = (total - prev).abs() / total.abs().max(f64::MIN_POSITIVE);
        quiet_sweeps = if rel < hyper.early_stop_tol { quiet_sweeps + 1 } else { 0 };
        if hyper.early_stop_patience > 0 && quiet_sweeps >= hyper.early_stop_patience {
            report.stopped_early = true;
            break;
        }
        sweep += 1;
    }
    let encodings = state
        .encodings
        .clone()
        .unwrap_or_else(|| Array2::zeros(state.items.raw_dim()));
    Ok(TrainedModel {
        variant,
        factors: state.factors()?,
        network: state.net,
        encodings,
        report,
    })
}

fn check_hyper(data: &TrainData, hyper: &HyperParams) -> Result<()> {
    hyper.validate()?;
    if let Some(c) = &data.content {
        hyper.widths_for(c.vocab_size())?;
    }
    Ok(())
}

/// Joint training of network and factors.
pub fn fit(data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    fit_joint(Variant::Cdl, data, hyper)
}

fn fit_joint(variant: Variant, data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    check_hyper(data, hyper)?;
    let xc = data.content()?;
    let mut net = init_network(xc, hyper)?;
    let (x0, epoch) = pretrain_from(&mut net, xc, hyper, hyper.pretrain_epochs, 0)?;
    let state = State::new(data, hyper, Some((net, x0)), epoch)?;
    run_sweeps(variant, data, hyper, state, true)
}

/// The `λn/λv → ∞` extreme: the autoencoder is trained on reconstruction
/// alone for `pretrain_epochs + max_sweeps · epochs_per_block` epochs, its
/// encodings are frozen, and U/V sweeps run against them.
pub fn fit_two_step(data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    check_hyper(data, hyper)?;
    let xc = data.content()?;
    let epochs = hyper.pretrain_epochs + hyper.max_sweeps * hyper.epochs_per_block;
    let (net, x0) = pretrain_sdae(xc, hyper, epochs)?;
    let state = State::new(data, hyper, Some((net, x0)), epochs as u64)?;
    run_sweeps(Variant::TwoStep, data, hyper, state, false)
}

/// The `λn/λv → 0` extreme: joint training with the reconstruction term
/// removed, so the decoder only feels weight decay.
pub fn fit_encoder_only(data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    let hyper = HyperParams {
        lambda_n: 0.0,
        ..hyper.clone()
    };
    fit_joint(Variant::EncoderOnly, data, &hyper)
}

/// Content-free weighted matrix factorization with a zero-mean item prior.
pub fn fit_mf_baseline(data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    hyper.validate()?;
    if data.content.is_some() {
        log::debug!("mf baseline ignores item content");
    }
    let data = TrainData {
        ratings: data.ratings.clone(),
        content: None,
    };
    let state = State::new(&data, hyper, None, 0)?;
    run_sweeps(Variant::Mf, &data, hyper, state, false)
}

pub fn train(variant: Variant, data: &TrainData, hyper: &HyperParams) -> Result<TrainedModel> {
    match variant {
        Variant::Cdl => fit(data, hyper),
        Variant::TwoStep => fit_two_step(data, hyper),
        Variant::EncoderOnly => fit_encoder_only(data, hyper),
        Variant::Mf => fit_mf_baseline(data, hyper),
    }
}
