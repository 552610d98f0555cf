//! Confidence-weighted matrix factorization coupled to the encoder.
//!
//! With every unobserved entry weighted by `b` and every observed one by `a`,
//! the normal equations for one user split into a shared `b·VᵀV` term plus a
//! rank-`n_i` correction over the user's rated items, so a full sweep costs
//! `O(K²·nnz + K³·(I+J))` rather than `O(K²·I·J)`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::dataio::RatingsMatrix;
use crate::linalg::SpdFactor;
use crate::par;
use crate::{CdlError, Result};

/// `C_ij = a` for observed entries and `b` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    pub a: f64,
    pub b: f64,
}

impl ConfidenceParams {
    /// Requires `a > b >= 0`.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > b && b >= 0.0 && a.is_finite()) {
            return Err(CdlError::Argument(format!(
                "confidence parameters need a > b >= 0, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        Self { a: 1.0, b: 0.01 }
    }
}

/// User factors `U` (`I × K`) and item factors `V` (`J × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFactors {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl LatentFactors {
    pub fn new(users: Array2<f64>, items: Array2<f64>) -> Result<Self> {
        if users.ncols() != items.ncols() {
            return Err(CdlError::Shape(format!(
                "user factors have width {} but item factors {}",
                users.ncols(),
                items.ncols()
            )));
        }
        if users.iter().chain(items.iter()).any(|v| !v.is_finite()) {
            return Err(CdlError::Numeric("non-finite latent factor".into()));
        }
        Ok(Self { users, items })
    }

    pub fn k(&self) -> usize {
        self.users.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.users.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.items.nrows()
    }

    /// Item offsets `ε_j = v_j − f_e(x_j)`.
    pub fn offsets(&self, encodings: ArrayView2<f64>) -> Result<Array2<f64>> {
        if encodings.dim() != self.items.dim() {
            return Err(CdlError::Shape(format!(
                "encodings {:?} vs item factors {:?}",
                encodings.dim(),
                self.items.dim()
            )));
        }
        Ok(&self.items - &encodings)
    }
}

/// `Fᵀ F` for a factor matrix.
pub fn gram(factors: ArrayView2<f64>) -> Array2<f64> {
    factors.t().dot(&factors)
}

/// Solves `(b·G + (a−b)·Σ_obs f fᵀ + λI) x = a·Σ_obs f + λ·prior` where `G`
/// is the Gram matrix of `others`.
fn solve_block(
    gram_b: &Array2<f64>,
    others: ArrayView2<f64>,
    observed: &[usize],
    conf: &ConfidenceParams,
    lambda: f64,
    prior_mean: Option<ArrayView1<f64>>,
) -> Result<Array1<f64>> {
    let (a, rhs) = normal_equations(others, observed, conf, lambda, prior_mean, gram_b);
    Ok(SpdFactor::new(&a)?.solve(rhs.view()))
}

/// Precision matrix and right-hand side of the Gaussian conditional for one
/// row, shared with the sampler: `Λ = λI + F C Fᵀ`, `h = F C R + λ·prior`.
pub(crate) fn normal_equations(
    others: ArrayView2<f64>,
    observed: &[usize],
    conf: &ConfidenceParams,
    lambda: f64,
    prior_mean: Option<ArrayView1<f64>>,
    gram_b: &Array2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let k = others.ncols();
    let mut a = gram_b.clone();
    let mut rhs = Array1::<f64>::zeros(k);
    let extra = conf.a - conf.b;
    for &o in observed {
        let f = others.row(o);
        for r in 0..k {
            let fr = extra * f[r];
            for c in 0..k {
                a[[r, c]] += fr * f[c];
            }
        }
        rhs.scaled_add(conf.a, &f);
    }
    for d in 0..k {
        a[[d, d]] += lambda;
    }
    if let Some(m) = prior_mean {
        rhs.scaled_add(lambda, &m);
    }
    (a, rhs)
}

fn check_lambda(name: &str, lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(CdlError::Argument(format!("{name} must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// Exact maximizer of the objective in `u_i`: `(V C_i Vᵀ + λu I)⁻¹ V C_i R_i`.
pub fn update_user(
    user: usize,
    items: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_u: f64,
) -> Result<Array1<f64>> {
    check_lambda("lambda_u", lambda_u)?;
    let gram_b = gram(items) * conf.b;
    solve_block(&gram_b, items, ratings.user_items(user), conf, lambda_u, None)
}

/// Exact maximizer in `v_j`: `(U C_j Uᵀ + λv I)⁻¹ (U C_j R_j + λv f_e(x_j))`.
pub fn update_item(
    item: usize,
    users: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_v: f64,
    encoding: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_lambda("lambda_v", lambda_v)?;
    if encoding.len() != users.ncols() {
        return Err(CdlError::Shape(format!(
            "encoding has length {} but factors have width {}",
            encoding.len(),
            users.ncols()
        )));
    }
    let gram_b = gram(users) * conf.b;
    solve_block(&gram_b, users, ratings.item_users(item), conf, lambda_v, Some(encoding))
}

fn stack_rows(rows: Vec<Array1<f64>>, k: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), k));
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&src);
    }
    out
}

/// Updates every `u_i` given `V`. Users are independent; `b·VᵀV` is shared.
pub fn sweep_users(
    items: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_u: f64,
) -> Result<Array2<f64>> {
    check_lambda("lambda_u", lambda_u)?;
    check_dims(ratings.num_items(), items.nrows(), "items")?;
    let gram_b = gram(items) * conf.b;
    let rows = par::map_indexed(ratings.num_users(), |i| {
        solve_block(&gram_b, items, ratings.user_items(i), conf, lambda_u, None)
    });
    Ok(stack_rows(rows.into_iter().collect::<Result<_>>()?, items.ncols()))
}

/// Updates every `v_j` given `U`, shrinking towards `encodings` (or zero when `None`).
pub fn sweep_items(
    users: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
    lambda_v: f64,
    encodings: Option<ArrayView2<f64>>,
) -> Result<Array2<f64>> {
    check_lambda("lambda_v", lambda_v)?;
    check_dims(ratings.num_users(), users.nrows(), "users")?;
    if let Some(e) = encodings {
        if e.dim() != (ratings.num_items(), users.ncols()) {
            return Err(CdlError::Shape(format!(
                "encodings are {:?}, expected ({}, {})",
                e.dim(),
                ratings.num_items(),
                users.ncols()
            )));
        }
    }
    let gram_b = gram(users) * conf.b;
    let rows = par::map_indexed(ratings.num_items(), |j| {
        solve_block(
            &gram_b,
            users,
            ratings.item_users(j),
            conf,
            lambda_v,
            encodings.as_ref().map(|e| e.row(j)),
        )
    });
    Ok(stack_rows(rows.into_iter().collect::<Result<_>>()?, users.ncols()))
}

fn check_dims(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(CdlError::Shape(format!(
            "ratings have {expected} {what} but factors have {got} rows"
        )));
    }
    Ok(())
}

/// Predicted rating `u_iᵀ v_j`.
pub fn predict(user: ArrayView1<f64>, item: ArrayView1<f64>) -> Result<f64> {
    if user.len() != item.len() {
        return Err(CdlError::Shape(format!(
            "user vector has length {} but item vector {}",
            user.len(),
            item.len()
        )));
    }
    Ok(user.dot(&item))
}

/// Cold-start score: the offset of an unrated item is zero, so the item
/// vector is the encoding itself.
pub fn predict_new_item(user: ArrayView1<f64>, encoding: ArrayView1<f64>) -> Result<f64> {
    predict(user, encoding)
}

/// Rating term `−Σ_ij (C_ij/2)(R_ij − u_iᵀv_j)²` without forming the dense sum:
/// `b·Σ_ij s_ij² = b·⟨UᵀU, VᵀV⟩` plus corrections on observed entries.
pub fn rating_objective(
    users: ArrayView2<f64>,
    items: ArrayView2<f64>,
    ratings: &RatingsMatrix,
    conf: &ConfidenceParams,
) -> f64 {
    let all_sq = if conf.b != 0.0 {
        let gu = gram(users);
        let gv = gram(items);
        (&gu * &gv).sum()
    } else {
        0.0
    };
    let mut observed = 0.0;
    for &(i, j) in ratings.entries() {
        let s = users.row(i).dot(&items.row(j));
        observed += conf.a * (1.0 - s) * (1.0 - s) - conf.b * s * s;
    }
    -0.5 * (conf.b * all_sq + observed)
}

/// Text checkpoint for `U` and `V` with dimension headers; round-trips bit-exactly.
pub fn save_factors(path: impl AsRef<Path>, factors: &LatentFactors) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "cdl-factors 1");
    for (name, m) in [("users", &factors.users), ("items", &factors.items)] {
        let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
        for row in m.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<LatentFactors> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
    let err = |line: usize, msg: String| CdlError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "cdl-factors 1" => {}
        _ => return Err(err(1, "not a factor checkpoint".into())),
    }
    let mut read_matrix = |name: &str| -> Result<Array2<f64>> {
        let (i, h) = lines
            .next()
            .ok_or_else(|| err(0, format!("missing `{name}` block")))?;
        let dims: Vec<usize> = h
            .strip_prefix(name)
            .map(|r| r.split_whitespace().filter_map(|t| t.parse().ok()).collect())
            .unwrap_or_default();
        if dims.len() != 2 {
            return Err(err(i + 1, format!("expected `{name} <rows> <cols>`")));
        }
        let mut data = Vec::with_capacity(dims[0] * dims[1]);
        for _ in 0..dims[0] {
            let (i, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("truncated `{name}` block")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(i + 1, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if row.len() != dims[1] {
                return Err(err(i + 1, format!("expected {} values", dims[1])));
            }
            data.extend(row);
        }
        Ok(Array2::from_shape_vec((dims[0], dims[1]), data).expect("checked"))
    };
    let users = read_matrix("users")?;
    let items = read_matrix("items")?;
    LatentFactors::new(users, items)
}
