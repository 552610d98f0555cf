mod common;

use cdl::bayes::{self, Blocks, ChainConfig, RowNeighbors, RowPrecisions, SamplerState};
use cdl::cf::ConfidenceParams;
use cdl::rng::rng_for;
use cdl::trainer::{HyperParams, TrainData};
use ndarray::{Array1, Array2};

fn fd_check(f: impl Fn(&Array1<f64>) -> f64, grad: &Array1<f64>, x: &Array1<f64>) -> f64 {
    let h = 1e-6;
    let mut fd = Array1::zeros(x.len());
    for d in 0..x.len() {
        let mut up = x.clone();
        up[d] += h;
        let mut down = x.clone();
        down[d] -= h;
        fd[d] = (f(&up) - f(&down)) / (2.0 * h);
    }
    let diff = &fd - grad;
    diff.dot(&diff).sqrt() / fd.dot(&fd).sqrt().max(grad.dot(grad).sqrt()).max(1e-12)
}

#[test]
fn row_gradients_match_finite_differences() {
    let mut rng = common::rng(1);
    let net = common::random_network(&mut rng, &[6, 4, 3, 4, 6], 1.0);
    let p = RowPrecisions {
        lambda_s: 50.0,
        lambda_n: 8.0,
        lambda_v: 3.0,
    };
    for l in 1..=4 {
        let w = net.widths();
        let prev = common::random_unit_matrix(&mut rng, 1, w[l - 1], 1.0).row(0).to_owned();
        let next_w = if l == 4 { 6 } else { w[l + 1] };
        let next = common::random_unit_matrix(&mut rng, 1, next_w, 1.0).row(0).to_owned();
        let item = common::random_matrix(&mut rng, 1, w[l], 1.0).row(0).to_owned();
        let nb = RowNeighbors {
            prev: Some(prev.view()),
            next: Some(next.view()),
            item: Some(item.view()),
        };
        let x = common::random_unit_matrix(&mut rng, 1, w[l], 1.0).row(0).to_owned();
        let g = bayes::grad_x_row(&net, l, x.view(), &nb, &p).unwrap();
        let err = fd_check(|y| bayes::logpost_x_row(&net, l, y.view(), &nb, &p).unwrap(), &g, &x);
        assert!(err < 1e-5, "layer {l}: {err:e}");
    }
}

#[test]
fn column_gradient_matches_finite_differences() {
    let mut rng = common::rng(2);
    let prev = common::random_unit_matrix(&mut rng, 9, 4, 1.0);
    let target = common::random_unit_matrix(&mut rng, 1, 9, 1.0).row(0).to_owned();
    let w = common::random_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
    let g = bayes::grad_w_col(w.view(), prev.view(), target.view(), 0.5, 100.0).unwrap();
    let err = fd_check(
        |y| bayes::logpost_w_col(y.view(), prev.view(), target.view(), 0.5, 100.0).unwrap(),
        &g,
        &w,
    );
    assert!(err < 1e-5, "{err:e}");
}

#[test]
fn huge_prior_precision_pulls_column_mode_to_zero() {
    let mut rng = common::rng(3);
    let prev = common::random_unit_matrix(&mut rng, 5, 3, 1.0);
    let target = common::random_unit_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
    let zero = Array1::zeros(4);
    let g = bayes::grad_w_col(zero.view(), prev.view(), target.view(), 1e12, 1.0).unwrap();
    // The likelihood gradient at 0 is bounded, so the mode sits within |g|/λw of 0.
    assert!(g.iter().all(|v| v.abs() < 10.0));
    let away = Array1::from_elem(4, 1e-3);
    assert!(
        bayes::logpost_w_col(zero.view(), prev.view(), target.view(), 1e12, 1.0).unwrap()
            > bayes::logpost_w_col(away.view(), prev.view(), target.view(), 1e12, 1.0).unwrap()
    );
}

#[test]
fn code_row_mode_tracks_item_factor_for_large_precision() {
    let mut rng = common::rng(4);
    let net = common::random_network(&mut rng, &[5, 2, 5], 1.0);
    let prev = common::random_unit_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
    let next = common::random_unit_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
    let v = ndarray::array![0.2, 0.7];
    let p = RowPrecisions {
        lambda_s: 1.0,
        lambda_n: 1.0,
        lambda_v: 1e9,
    };
    let nb = RowNeighbors {
        prev: Some(prev.view()),
        next: Some(next.view()),
        item: Some(v.view()),
    };
    let g = bayes::grad_x_row(&net, 1, v.view(), &nb, &p).unwrap();
    // At x = v the coupling term contributes nothing; the rest is O(1).
    assert!(g.iter().all(|d| d.abs() < 100.0));
    let nudged = &v + 1e-3;
    assert!(
        bayes::logpost_x_row(&net, 1, v.view(), &nb, &p).unwrap()
            > bayes::logpost_x_row(&net, 1, nudged.view(), &nb, &p).unwrap()
    );
}

#[test]
fn user_draw_covariance_matches_inverse_precision() {
    let mut rng = common::rng(5);
    let (i, j, k) = (4, 6, 3);
    let r = common::random_ratings(&mut rng, i, j, 0.5);
    let v = common::random_matrix(&mut rng, j, k, 1.0);
    let conf = ConfidenceParams::default();
    let (a, _) = common::naive_system(&v, r.user_items(1), &conf, 0.8, None);
    // Columns of A⁻¹ by conjugate gradients.
    let mut cov = Array2::zeros((k, k));
    for c in 0..k {
        let mut e = Array1::zeros(k);
        e[c] = 1.0;
        cov.column_mut(c).assign(&common::conjugate_gradient(&a, &e));
    }
    let n = 100_000;
    let mut draws = Array2::zeros((n, k));
    let mut sampler = rng_for(5, 42, 0);
    for t in 0..n {
        draws
            .row_mut(t)
            .assign(&bayes::sample_u(1, v.view(), &r, &conf, 0.8, &mut sampler).unwrap());
    }
    let mean = draws.mean_axis(ndarray::Axis(0)).unwrap();
    let centred = &draws - &mean;
    let emp = centred.t().dot(&centred) / (n - 1) as f64;
    for p in 0..k {
        for q in 0..k {
            let scale = (cov[[p, p]] * cov[[q, q]]).sqrt();
            assert!(
                (emp[[p, q]] - cov[[p, q]]).abs() < 0.05 * scale,
                "entry ({p},{q}): {} vs {}",
                emp[[p, q]],
                cov[[p, q]]
            );
        }
    }
}

#[test]
fn large_user_precision_concentrates_draws() {
    let mut rng = common::rng(6);
    let r = common::random_ratings(&mut rng, 2, 5, 0.5);
    let v = common::random_matrix(&mut rng, 5, 2, 1.0);
    let lambda = 1e6;
    let mut sampler = rng_for(6, 42, 0);
    let n = 2000;
    let mut sq = 0.0;
    for _ in 0..n {
        let u = bayes::sample_u(0, v.view(), &r, &ConfidenceParams::default(), lambda, &mut sampler).unwrap();
        sq += u.dot(&u) / 2.0;
    }
    assert!(sq / (n as f64) < 2.0 / lambda);
}

#[test]
fn no_ratings_item_mean_is_code_row() {
    let u = ndarray::array![[1.0, 0.5], [0.2, -0.3]];
    let r = cdl::dataio::RatingsMatrix::new(2, 1, vec![]).unwrap();
    let code = ndarray::array![0.4, 0.6];
    let conf = ConfidenceParams::new(1.0, 0.0).unwrap();
    let mut sampler = rng_for(7, 42, 0);
    let n = 50_000;
    let mut sum = Array1::zeros(2);
    for _ in 0..n {
        sum += &bayes::sample_v(0, u.view(), &r, &conf, 3.0, code.view(), &mut sampler).unwrap();
    }
    let mean = sum / n as f64;
    // Standard error is sqrt(1/(3n)).
    let se = (1.0 / (3.0 * n as f64)).sqrt();
    assert!((&mean - &code).iter().all(|d| d.abs() < 4.0 * se));
}

fn tiny_model() -> (TrainData, HyperParams) {
    let mut rng = common::rng(8);
    let ratings = common::random_ratings(&mut rng, 5, 5, 0.4);
    let xc = common::random_unit_matrix(&mut rng, 5, 6, 0.5);
    let hyper = HyperParams {
        k: 2,
        lambda_s: 100.0,
        seed: 3,
        ..HyperParams::with_lambdas(1.0, 10.0, 10.0, 1.0)
    };
    (TrainData::new(ratings, Some(common::content(&xc))).unwrap(), hyper)
}

#[test]
fn conjugate_only_chain_recovers_user_mean() {
    let (data, hyper) = tiny_model();
    let mut state = SamplerState::new(&data, &hyper, 0.1).unwrap();
    state.items = common::random_matrix(&mut common::rng(9), 5, 2, 1.0);
    let config = ChainConfig {
        iters: 20_001,
        burn_in: 1,
        thin: 1,
        blocks: Blocks {
            network: false,
            layers: false,
            users: true,
            items: false,
        },
        ..ChainConfig::default()
    };
    let summary = bayes::run(&mut state, &data, &hyper, &config).unwrap();
    for i in 0..5 {
        let exact = bayes::user_conditional(i, state.items.view(), &data.ratings, &hyper.conf, hyper.lambda_u).unwrap();
        for d in 0..2 {
            let se = (summary.user_var[[i, d]] / summary.samples as f64).sqrt();
            assert!(
                (summary.user_mean[[i, d]] - exact[d]).abs() < 4.0 * se,
                "user {i} dim {d}: {} vs {}",
                summary.user_mean[[i, d]],
                exact[d]
            );
        }
    }
}

#[test]
fn full_chain_is_finite_and_reproducible() {
    let (data, hyper) = tiny_model();
    let config = ChainConfig {
        iters: 400,
        burn_in: 200,
        thin: 5,
        ..ChainConfig::default()
    };
    let a = bayes::run_chain(&data, &hyper, &config).unwrap();
    let b = bayes::run_chain(&data, &hyper, &config).unwrap();
    assert_eq!(a, b);
    assert!(a.user_mean.iter().chain(a.item_mean.iter()).all(|v| v.is_finite()));
    assert!(a.blocks.iter().all(|b| (0.0..=1.0).contains(&b.rate())));
    let mut tsv = Vec::new();
    a.write_tsv(&mut tsv).unwrap();
    assert_eq!(String::from_utf8(tsv).unwrap().lines().count(), 1 + a.rows.len());
}

#[test]
fn pinned_acceptance_is_flagged() {
    let (data, hyper) = tiny_model();
    let config = ChainConfig {
        iters: 20,
        burn_in: 0,
        thin: 1,
        initial_step: 50.0,
        ..ChainConfig::default()
    };
    let summary = bayes::run_chain(&data, &hyper, &config).unwrap();
    assert!(!summary.warnings.is_empty());
}
