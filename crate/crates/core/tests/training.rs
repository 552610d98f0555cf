mod common;

use std::time::Instant;

use cdl::cf::{self, ConfidenceParams};
use cdl::dataio::{self, generate_synthetic, RatingsMatrix, SyntheticConfig};
use cdl::par;
use cdl::sdae::{self, NetworkWeights};
use cdl::trainer::{self, HyperParams, TrainData, Variant};
use ndarray::Array2;

fn synthetic(seed: u64, users: usize, items: usize, vocab: usize) -> TrainData {
    let gen = HyperParams {
        k: 5,
        conf: ConfidenceParams { a: 25.0, b: 0.0 },
        ..HyperParams::with_lambdas(1.0, 100.0, 100.0, 0.5)
    };
    let d = generate_synthetic(&SyntheticConfig::new(users, items, vocab, gen, seed)).unwrap();
    TrainData::new(d.ratings, Some(d.content)).unwrap()
}

fn hyper(seed: u64) -> HyperParams {
    HyperParams {
        k: 5,
        max_sweeps: 8,
        epochs_per_block: 2,
        batch_size: 16,
        early_stop_patience: 0,
        seed,
        ..HyperParams::with_lambdas(0.1, 10.0, 10.0, 1e-3)
    }
}

#[test]
fn fit_improves_on_initialization() {
    let data = synthetic(1, 50, 80, 40);
    let model = trainer::fit(&data, &hyper(1)).unwrap();
    let obj = model.report.objectives();
    assert!(obj.last().unwrap() > obj.first().unwrap(), "{obj:?}");
}

#[test]
fn every_variant_reports_finite_reproducible_objectives() {
    let data = synthetic(2, 30, 40, 20);
    for variant in Variant::ALL {
        let a = trainer::train(variant, &data, &hyper(3)).unwrap();
        let b = trainer::train(variant, &data, &hyper(3)).unwrap();
        assert!(a.report.objectives().iter().all(|v| v.is_finite()), "{variant}");
        assert_eq!(a.report.objectives(), b.report.objectives(), "{variant}");
        assert_eq!(a.factors, b.factors, "{variant}");
    }
}

#[test]
fn parallel_and_sequential_runs_agree_bitwise() {
    let data = synthetic(4, 40, 60, 30);
    let par_run = trainer::fit(&data, &hyper(4)).unwrap();
    let seq_run = par::with_sequential(|| trainer::fit(&data, &hyper(4)).unwrap());
    assert_eq!(par_run.report.objectives(), seq_run.report.objectives());
    assert_eq!(par_run.factors, seq_run.factors);
    assert_eq!(par_run.network, seq_run.network);
}

#[test]
fn two_step_network_ignores_ratings() {
    let data = synthetic(5, 30, 40, 20);
    let other = TrainData::new(
        RatingsMatrix::new(data.num_users(), data.num_items(), vec![(0, 0)]).unwrap(),
        data.content.clone(),
    )
    .unwrap();
    let a = trainer::fit_two_step(&data, &hyper(5)).unwrap();
    let b = trainer::fit_two_step(&other, &hyper(5)).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.encodings, b.encodings);
    assert_ne!(a.factors, b.factors);
}

#[test]
fn encoder_only_trajectory_differs_from_full_model() {
    let data = synthetic(6, 30, 40, 20);
    let full = trainer::fit(&data, &hyper(6)).unwrap();
    let enc = trainer::fit_encoder_only(&data, &hyper(6)).unwrap();
    assert_ne!(full.report.objectives(), enc.report.objectives());
    assert!(enc.report.records.iter().all(|r| r.terms.reconstruction == 0.0));
}

#[test]
fn mf_baseline_is_monotone() {
    let data = synthetic(7, 40, 50, 20);
    let m = trainer::fit_mf_baseline(&data, &hyper(7)).unwrap();
    assert!(m.network.is_none());
    assert!(m.encodings.iter().all(|&x| x == 0.0));
    for w in m.report.objectives().windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
    }
}

#[test]
fn small_gradient_step_does_not_decrease_objective() {
    let mut rng = common::rng(11);
    let data = synthetic(8, 20, 30, 15);
    let xc = data.content.clone().unwrap();
    let x0 = dataio::corrupt(&xc, 0.3, 1).unwrap();
    let mut net = common::random_network(&mut rng, &[15, 5, 15], 0.5);
    let v = common::random_matrix(&mut rng, 30, 5, 0.5);
    let w = NetworkWeights {
        lambda_v: 10.0,
        lambda_n: 10.0,
        lambda_w: 0.01,
    };
    let value = |net: &sdae::SdaeNetwork| {
        let (a, b) = sdae::network_terms(net, &x0, &xc, v.view(), &w).unwrap();
        a + b - 0.5 * w.lambda_w * net.squared_norm()
    };
    let before = value(&net);
    let g = sdae::gradients(&net, &x0, &xc, v.view(), &w, None).unwrap();
    net.add_scaled(1e-4, &g);
    assert!(value(&net) >= before);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let data = synthetic(9, 20, 30, 15);
    let model = trainer::fit(&data, &hyper(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let net_path = dir.path().join("network.txt");
    let fac_path = dir.path().join("factors.txt");
    sdae::save_network(&net_path, model.network.as_ref().unwrap(), "seed=9").unwrap();
    cf::save_factors(&fac_path, &model.factors).unwrap();
    let (net, meta) = sdae::load_network(&net_path).unwrap();
    assert_eq!(&net, model.network.as_ref().unwrap());
    assert!(meta.contains("seed=9"));
    assert_eq!(cf::load_factors(&fac_path).unwrap(), model.factors);
}

#[test]
fn missing_content_is_a_validation_error() {
    let data = TrainData::new(RatingsMatrix::new(3, 3, vec![(0, 0)]).unwrap(), None).unwrap();
    assert!(matches!(trainer::fit(&data, &hyper(0)), Err(cdl::CdlError::Validation(_))));
}

fn min_sweep_seconds(items: usize) -> f64 {
    let users = 2000;
    let k = 10;
    let mut rng = common::rng(items as u64);
    // About 20 ratings per user regardless of J keeps the regime sparse.
    let r = common::random_ratings(&mut rng, users, items, 20.0 / items as f64);
    let v = common::random_matrix(&mut rng, items, k, 0.3);
    let u = common::random_matrix(&mut rng, users, k, 0.3);
    let enc = Array2::zeros((items, k));
    let conf = ConfidenceParams::default();
    (0..5)
        .map(|_| {
            let t = Instant::now();
            let nu = cf::sweep_users(v.view(), &r, &conf, 0.1).unwrap();
            let nv = cf::sweep_items(u.view(), &r, &conf, 10.0, Some(enc.view())).unwrap();
            std::hint::black_box((nu, nv));
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Doubling `J` at fixed `K` in the sparse regime must cost well under 4×.
#[test]
fn sweep_time_scales_linearly_in_items() {
    let small = min_sweep_seconds(2000);
    let large = min_sweep_seconds(4000);
    let ratio = large / small;
    assert!(ratio < 3.0, "doubling J multiplied sweep time by {ratio:.2}");
}
