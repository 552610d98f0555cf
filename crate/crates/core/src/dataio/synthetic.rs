//! Datasets drawn from the generative model, used for directional checks.
//!
//! The uncorrupted-input side of the model is not itself generative, so the
//! network input `X_0` is drawn as a sparse binary matrix with a given
//! density. Everything downstream follows the model with deterministic layers:
//! `X_c` is the network output plus `N(0, λn⁻¹)` noise, clamped to `[0, 1]`,
//! `v_j = f_e(x_j) + N(0, λv⁻¹ I)`, `u_i ~ N(0, λu⁻¹ I)`, and `R_ij = 1` when a
//! draw from `N(u_iᵀv_j, a⁻¹)` exceeds 0.5.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataio::{ContentMatrix, RatingsMatrix};
use crate::rng::{rng_for, stream};
use crate::sdae::{self, SdaeNetwork};
use crate::trainer::HyperParams;
use crate::{CdlError, Result};

/// Sub-streams of [`stream::SYNTHETIC`].
const SUB_WEIGHTS: u64 = 0;
const SUB_INPUT: u64 = 1;
const SUB_CONTENT: u64 = 2;
const SUB_ITEMS: u64 = 3;
const SUB_USERS: u64 = 4;
const SUB_RATINGS: u64 = 5;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub vocab_size: usize,
    /// Precisions, code width `k`, optional deeper `widths`, and `conf.a` as
    /// the precision of the rating draws. `lambda_v = inf` gives zero offsets.
    pub hyper: HyperParams,
    /// Fraction of ones in the binary network input.
    pub input_density: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(num_users: usize, num_items: usize, vocab_size: usize, hyper: HyperParams, seed: u64) -> Self {
        Self {
            num_users,
            num_items,
            vocab_size,
            hyper,
            input_density: 0.1,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub ratings: RatingsMatrix,
    /// Clean content `X_c`.
    pub content: ContentMatrix,
    pub users: Array2<f64>,
    pub items: Array2<f64>,
    pub network: SdaeNetwork,
    /// `f_e(X_0)` under the true network.
    pub encodings: Array2<f64>,
}

fn gaussian_sd(precision: f64, name: &str) -> Result<f64> {
    if !(precision > 0.0) {
        return Err(CdlError::Argument(format!("{name} must be positive, got {precision}")));
    }
    Ok(precision.recip().sqrt())
}

fn normal_matrix(rows: usize, cols: usize, sd: f64, rng: &mut impl rand::Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        sd * z
    })
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    let SyntheticConfig {
        num_users: i,
        num_items: j,
        vocab_size: s,
        ref hyper,
        input_density,
        seed,
    } = *config;
    if i == 0 || j == 0 || s == 0 || hyper.k == 0 {
        return Err(CdlError::Argument(format!(
            "synthetic dimensions must be positive, got I={i} J={j} S={s} K={}",
            hyper.k
        )));
    }
    if !(0.0..=1.0).contains(&input_density) {
        return Err(CdlError::Argument(format!("input density {input_density} outside [0, 1]")));
    }
    let w_sd = gaussian_sd(hyper.lambda_w, "lambda_w")?;
    let n_sd = gaussian_sd(hyper.lambda_n, "lambda_n")?;
    let v_sd = gaussian_sd(hyper.lambda_v, "lambda_v")?;
    let u_sd = gaussian_sd(hyper.lambda_u, "lambda_u")?;
    let r_sd = gaussian_sd(hyper.conf.a, "a")?;
    let widths = hyper.widths_for(s)?;

    let mut network = SdaeNetwork::zeros(&widths)?;
    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_WEIGHTS);
    for l in 1..=network.num_layers() {
        network
            .weight_mut(l)
            .mapv_inplace(|_| w_sd * rng.sample::<f64, _>(StandardNormal));
        network
            .bias_mut(l)
            .mapv_inplace(|_| w_sd * rng.sample::<f64, _>(StandardNormal));
    }

    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_INPUT);
    let x0 = Array2::from_shape_simple_fn((j, s), || {
        if rng.random_bool(input_density) {
            1.0
        } else {
            0.0
        }
    });
    let x0 = ContentMatrix::from_dense(&x0)?;
    let encodings = sdae::encode_all(&network, &x0)?;
    let mut xc = sdae::reconstruct_all(&network, &x0)?;
    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_CONTENT);
    xc.mapv_inplace(|x| (x + n_sd * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0));
    let content = ContentMatrix::from_dense(&xc)?;

    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_ITEMS);
    let items = &encodings + &normal_matrix(j, hyper.k, v_sd, &mut rng);
    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_USERS);
    let users = normal_matrix(i, hyper.k, u_sd, &mut rng);

    let mut rng = rng_for(seed, stream::SYNTHETIC, SUB_RATINGS);
    let noise = Normal::new(0.0, r_sd).map_err(|e| CdlError::Argument(e.to_string()))?;
    let scores = users.dot(&items.t());
    let entries = scores
        .indexed_iter()
        .filter(|&(_, &m)| m + noise.sample(&mut rng) > 0.5)
        .map(|(ij, _)| ij)
        .collect();
    let ratings = RatingsMatrix::new(i, j, entries)?;

    Ok(SyntheticData {
        ratings,
        content,
        users,
        items,
        network,
        encodings,
    })
}
