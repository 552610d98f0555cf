//! Independent reference implementations used as test oracles. Everything here
//! is written with plain loops over dense data so it shares no code path with
//! the library beyond the public types.

#![allow(dead_code)]

use cdl::cf::ConfidenceParams;
use cdl::dataio::{ContentMatrix, RatingsMatrix};
use cdl::sdae::{DropoutMask, SdaeNetwork};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sig(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller keeps the oracle independent of the library's sampler.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| sd * gaussian(rng))
}

pub fn random_unit_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < density {
            rng.random::<f64>()
        } else {
            0.0
        }
    })
}

pub fn random_ratings(rng: &mut ChaCha8Rng, i: usize, j: usize, density: f64) -> RatingsMatrix {
    let mut entries = Vec::new();
    for u in 0..i {
        for v in 0..j {
            if rng.random::<f64>() < density {
                entries.push((u, v));
            }
        }
    }
    RatingsMatrix::new(i, j, entries).unwrap()
}

pub fn random_network(rng: &mut ChaCha8Rng, widths: &[usize], sd: f64) -> SdaeNetwork {
    let mut net = SdaeNetwork::zeros(widths).unwrap();
    for l in 1..=net.num_layers() {
        let (r, c) = net.weight(l).dim();
        net.weight_mut(l).assign(&random_matrix(rng, r, c, sd));
        for b in net.bias_mut(l).iter_mut() {
            *b = sd * gaussian(rng);
        }
    }
    net
}

/// Layer outputs `X_1..X_L` of a dense forward pass, with optional dropout scaling.
pub fn dense_forward(net: &SdaeNetwork, x0: &Array2<f64>, mask: Option<&DropoutMask>) -> Vec<Array2<f64>> {
    let mut outputs: Vec<Array2<f64>> = Vec::new();
    for l in 1..=net.num_layers() {
        let prev = if l == 1 { x0 } else { &outputs[l - 2] };
        let w = net.weight(l);
        let b = net.bias(l);
        let mut out = Array2::zeros((prev.nrows(), w.ncols()));
        for j in 0..prev.nrows() {
            for n in 0..w.ncols() {
                let mut a = b[n];
                for k in 0..w.nrows() {
                    a += prev[[j, k]] * w[[k, n]];
                }
                let mut h = sig(a);
                if let Some(scale) = mask.and_then(|m| m.layer(l)) {
                    h *= scale[[j, n]];
                }
                out[[j, n]] = h;
            }
        }
        outputs.push(out);
    }
    outputs
}

/// Network part of the joint objective: weight prior, item offset and reconstruction.
pub fn network_objective(
    net: &SdaeNetwork,
    x0: &Array2<f64>,
    xc: &Array2<f64>,
    v: &Array2<f64>,
    lambdas: (f64, f64, f64),
    mask: Option<&DropoutMask>,
) -> f64 {
    let (lambda_v, lambda_n, lambda_w) = lambdas;
    let outs = dense_forward(net, x0, mask);
    let mut prior = 0.0;
    for l in 1..=net.num_layers() {
        prior += net.weight(l).iter().map(|w| w * w).sum::<f64>();
        prior += net.bias(l).iter().map(|b| b * b).sum::<f64>();
    }
    let code = &outs[net.code_layer() - 1];
    let out = &outs[net.num_layers() - 1];
    let mut offset = 0.0;
    let mut recon = 0.0;
    for j in 0..x0.nrows() {
        for k in 0..code.ncols() {
            offset += (code[[j, k]] - v[[j, k]]).powi(2);
        }
        for s in 0..out.ncols() {
            recon += (out[[j, s]] - xc[[j, s]]).powi(2);
        }
    }
    -0.5 * lambda_w * prior - 0.5 * lambda_v * offset - 0.5 * lambda_n * recon
}

/// `−Σ_ij (C_ij/2)(R_ij − u_iᵀv_j)²` over every cell.
pub fn naive_rating_objective(u: &Array2<f64>, v: &Array2<f64>, r: &RatingsMatrix, conf: &ConfidenceParams) -> f64 {
    let mut total = 0.0;
    for i in 0..u.nrows() {
        for j in 0..v.nrows() {
            let s: f64 = (0..u.ncols()).map(|k| u[[i, k]] * v[[j, k]]).sum();
            let (rij, c) = if r.contains(i, j) { (1.0, conf.a) } else { (0.0, conf.b) };
            total -= 0.5 * c * (rij - s).powi(2);
        }
    }
    total
}

/// Gradient of the objective in one row `x` of one side, with the other side
/// fixed: `−λ(x − prior) − Σ_o C_o (xᵀf_o − R_o) f_o` over every counterpart `o`.
pub fn naive_row_gradient(
    x: &Array1<f64>,
    others: &Array2<f64>,
    liked: &[usize],
    conf: &ConfidenceParams,
    lambda: f64,
    prior: Option<&Array1<f64>>,
) -> Array1<f64> {
    let k = x.len();
    let mut g = Array1::zeros(k);
    for d in 0..k {
        g[d] = -lambda * (x[d] - prior.map_or(0.0, |p| p[d]));
    }
    for o in 0..others.nrows() {
        let s: f64 = (0..k).map(|d| x[d] * others[[o, d]]).sum();
        let (r, c) = if liked.contains(&o) { (1.0, conf.a) } else { (0.0, conf.b) };
        for d in 0..k {
            g[d] -= c * (s - r) * others[[o, d]];
        }
    }
    g
}

/// Dense system `(λI + Σ_o C_o f_o f_oᵀ) x = Σ_o C_o R_o f_o + λ·prior`.
pub fn naive_system(
    others: &Array2<f64>,
    liked: &[usize],
    conf: &ConfidenceParams,
    lambda: f64,
    prior: Option<&Array1<f64>>,
) -> (Array2<f64>, Array1<f64>) {
    let k = others.ncols();
    let mut a = Array2::zeros((k, k));
    let mut rhs = Array1::zeros(k);
    for d in 0..k {
        a[[d, d]] = lambda;
        rhs[d] = lambda * prior.map_or(0.0, |p| p[d]);
    }
    for o in 0..others.nrows() {
        let (r, c) = if liked.contains(&o) { (1.0, conf.a) } else { (0.0, conf.b) };
        for p in 0..k {
            rhs[p] += c * r * others[[o, p]];
            for q in 0..k {
                a[[p, q]] += c * others[[o, p]] * others[[o, q]];
            }
        }
    }
    (a, rhs)
}

/// Conjugate gradients run to machine precision.
pub fn conjugate_gradient(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let matvec = |x: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(n, |r| (0..n).map(|c| a[[r, c]] * x[c]).sum())
    };
    let dot = |x: &Array1<f64>, y: &Array1<f64>| -> f64 { x.iter().zip(y).map(|(p, q)| p * q).sum() };
    let mut x = Array1::zeros(n);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..(10 * n + 50) {
        if rr.sqrt() <= 1e-15 * (1.0 + dot(b, b).sqrt()) {
            break;
        }
        let ap = matvec(&p);
        let alpha = rr / dot(&p, &ap);
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rr_new = dot(&r, &r);
        p = &r + &(&p * (rr_new / rr));
        rr = rr_new;
    }
    x
}

/// Brute-force ranking: candidate ids sorted by selection, highest score
/// first, lower id on ties.
pub fn brute_rank(scores: &[f64], exclude: &[usize]) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).filter(|j| !exclude.contains(j)).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for (p, &j) in remaining.iter().enumerate() {
            let b = remaining[best];
            if scores[j] > scores[b] || (scores[j] == scores[b] && j < b) {
                best = p;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

pub fn brute_recall(list: &[usize], liked: &[usize], m: usize) -> f64 {
    let hits = list.iter().take(m).filter(|j| liked.contains(j)).count();
    hits as f64 / liked.len() as f64
}

pub fn brute_ap(list: &[usize], liked: &[usize], cutoff: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..list.len().min(cutoff) {
        if liked.contains(&list[r]) {
            let hits = list[..=r].iter().filter(|j| liked.contains(j)).count();
            total += hits as f64 / (r + 1) as f64;
        }
    }
    total / liked.len() as f64
}

pub fn content(dense: &Array2<f64>) -> ContentMatrix {
    ContentMatrix::from_dense(dense).unwrap()
}
