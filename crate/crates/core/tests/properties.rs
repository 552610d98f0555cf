mod common;

use cdl::bayes::{self, RowNeighbors, RowPrecisions};
use cdl::cf::{self, ConfidenceParams};
use cdl::dataio::{self, ContentMatrix, RatingsMatrix};
use cdl::eval::{self, CandidatePolicy, MAP_CUTOFF};
use cdl::sdae::SdaeNetwork;
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn ratings_strategy(max_users: usize, max_items: usize) -> impl Strategy<Value = RatingsMatrix> {
    (1..=max_users, 1..=max_items).prop_flat_map(|(i, j)| {
        proptest::collection::vec(proptest::bool::weighted(0.3), i * j).prop_map(move |cells| {
            let entries = cells
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(|(c, _)| (c / j, c % j))
                .collect();
            RatingsMatrix::new(i, j, entries).unwrap()
        })
    })
}

fn content_strategy() -> impl Strategy<Value = ContentMatrix> {
    (1usize..8, 1usize..10).prop_flat_map(|(j, s)| {
        proptest::collection::vec(prop_oneof![Just(0.0), 0.0..=1.0f64], j * s).prop_map(move |vals| {
            ContentMatrix::from_dense(&Array2::from_shape_vec((j, s), vals).unwrap()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corruption_only_zeroes(content in content_strategy(), noise in 0.0..=1.0f64, seed in any::<u64>()) {
        let out = dataio::corrupt(&content, noise, seed).unwrap();
        let (a, b) = (content.to_dense(), out.to_dense());
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!(*y == 0.0 || y == x);
            prop_assert!(*y <= *x);
        }
    }

    #[test]
    fn split_partitions_entries(r in ratings_strategy(12, 12), p in 1usize..4, seed in any::<u64>()) {
        let s = dataio::split(&r, p, seed).unwrap();
        let mut union: Vec<_> = s.train.entries().iter().chain(s.test.entries()).copied().collect();
        union.sort_unstable();
        prop_assert_eq!(union.as_slice(), r.entries());
        for &e in s.train.entries() {
            prop_assert!(!s.test.contains(e.0, e.1));
        }
        for u in 0..r.num_users() {
            let n = r.user_items(u).len();
            prop_assert_eq!(s.train.user_items(u).len(), n.min(p));
            prop_assert_eq!(s.eval_users.contains(&u), n > p);
        }
    }

    #[test]
    fn rank_lists_are_sets_of_candidates(
        r in ratings_strategy(6, 10),
        seed in any::<u64>(),
        exclude in any::<bool>(),
    ) {
        let mut rng = common::rng(seed);
        let u = common::random_matrix(&mut rng, r.num_users(), 2, 1.0);
        let v = common::random_matrix(&mut rng, r.num_items(), 2, 1.0);
        let policy = if exclude { CandidatePolicy::ExcludeTrain } else { CandidatePolicy::AllItems };
        let ranked = eval::rank(u.view(), v.view(), &r, policy).unwrap();
        for i in 0..r.num_users() {
            let mut list = ranked.user(i).to_vec();
            list.sort_unstable();
            list.dedup();
            prop_assert_eq!(list.len(), ranked.user(i).len());
            let expected = if exclude { r.num_items() - r.user_items(i).len() } else { r.num_items() };
            prop_assert_eq!(list.len(), expected);
            if exclude {
                for j in r.user_items(i) {
                    prop_assert!(!ranked.user(i).contains(j));
                }
            }
        }
    }

    #[test]
    fn metrics_bounded_and_recall_monotone(r in ratings_strategy(8, 14), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let u = common::random_matrix(&mut rng, r.num_users(), 3, 1.0);
        let v = common::random_matrix(&mut rng, r.num_items(), 3, 1.0);
        let ranked = eval::rank(u.view(), v.view(), &RatingsMatrix::new(r.num_users(), r.num_items(), vec![]).unwrap(), CandidatePolicy::AllItems).unwrap();
        let mut prev = vec![0.0; r.num_users()];
        for m in 1..=r.num_items() + 2 {
            let (per_user, _) = eval::recall_at_m(&ranked, &r, m).unwrap();
            for (i, rec) in per_user {
                prop_assert!((0.0..=1.0).contains(&rec));
                prop_assert!(rec >= prev[i]);
                prev[i] = rec;
            }
        }
        for i in 0..r.num_users() {
            let liked = r.user_items(i);
            if liked.is_empty() {
                continue;
            }
            prop_assert_eq!(prev[i], 1.0);
            let ap = eval::average_precision(ranked.user(i), liked, MAP_CUTOFF);
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }

    #[test]
    fn single_liked_item_ap_is_reciprocal_rank(n in 1usize..50, pos in 0usize..50) {
        let pos = pos % n;
        let list: Vec<usize> = (0..n).collect();
        let ap = eval::average_precision(&list, &[pos], usize::MAX);
        prop_assert_eq!(ap, 1.0 / (pos + 1) as f64);
    }

    #[test]
    fn rating_objective_never_positive(r in ratings_strategy(8, 8), seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let u = common::random_matrix(&mut rng, r.num_users(), 2, 1.0);
        let v = common::random_matrix(&mut rng, r.num_items(), 2, 1.0);
        prop_assert!(cf::rating_objective(u.view(), v.view(), &r, &ConfidenceParams::default()) <= 0.0);
    }

    /// At the last layer the row density is Gaussian in `x`, so a move along
    /// `d` changes it by exactly `t·∇ᵀd − (t²/2)(λs + λn)‖d‖²`.
    #[test]
    fn last_layer_row_is_exactly_quadratic(seed in any::<u64>(), t in -2.0..2.0f64) {
        let mut rng = common::rng(seed);
        let net = common::random_network(&mut rng, &[5, 3, 5], 1.0);
        let prev = common::random_matrix(&mut rng, 1, 3, 1.0).row(0).to_owned();
        let clean = common::random_unit_matrix(&mut rng, 1, 5, 0.7).row(0).to_owned();
        let x = common::random_unit_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
        let d = common::random_matrix(&mut rng, 1, 5, 1.0).row(0).to_owned();
        let p = RowPrecisions { lambda_s: 30.0, lambda_n: 7.0, lambda_v: 2.0 };
        let nb = RowNeighbors { prev: Some(prev.view()), next: Some(clean.view()), item: None };
        let f0 = bayes::logpost_x_row(&net, 2, x.view(), &nb, &p).unwrap();
        let g = bayes::grad_x_row(&net, 2, x.view(), &nb, &p).unwrap();
        let y = &x + &(&d * t);
        let f1 = bayes::logpost_x_row(&net, 2, y.view(), &nb, &p).unwrap();
        let predicted = t * g.dot(&d) - 0.5 * t * t * (p.lambda_s + p.lambda_n) * d.dot(&d);
        prop_assert!((f1 - f0 - predicted).abs() <= 1e-9 * (1.0 + f0.abs()));
    }

    /// With `λs = 0` the column density is the Gaussian prior alone.
    #[test]
    fn weight_column_prior_is_exactly_quadratic(seed in any::<u64>(), t in -2.0..2.0f64) {
        let mut rng = common::rng(seed);
        let prev = common::random_matrix(&mut rng, 6, 3, 1.0);
        let target = common::random_unit_matrix(&mut rng, 1, 6, 1.0).row(0).to_owned();
        let w = common::random_matrix(&mut rng, 1, 4, 1.0).row(0).to_owned();
        let d = common::random_matrix(&mut rng, 1, 4, 1.0).row(0).to_owned();
        let lw = 1.7;
        let f0 = bayes::logpost_w_col(w.view(), prev.view(), target.view(), lw, 0.0).unwrap();
        let f1 = bayes::logpost_w_col((&w + &(&d * t)).view(), prev.view(), target.view(), lw, 0.0).unwrap();
        let predicted = -lw * t * w.dot(&d) - 0.5 * lw * t * t * d.dot(&d);
        prop_assert!((f1 - f0 - predicted).abs() <= 1e-12 * (1.0 + f0.abs()));
    }

    #[test]
    fn content_normalization_stays_in_unit_interval(
        counts in proptest::collection::vec((0usize..5, 0usize..6, 1u32..20), 1..30),
    ) {
        let mut seen = std::collections::BTreeMap::new();
        for (j, s, c) in counts {
            seen.insert((j, s), c as f64);
        }
        let triples = dataio::ContentTriples {
            num_items: 5,
            vocab_size: 6,
            triples: seen.into_iter().map(|((j, s), c)| (j, s, c)).collect(),
        };
        for mode in [dataio::NormalizationMode::BinaryPresence, dataio::NormalizationMode::CountMaxnorm] {
            let m = ContentMatrix::from_triples(&triples, mode).unwrap();
            prop_assert!(m.to_dense().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn code_row_ignores_item_elsewhere() {
    let mut rng = common::rng(9);
    let net: SdaeNetwork = common::random_network(&mut rng, &[6, 4, 2, 4, 6], 1.0);
    let p = RowPrecisions { lambda_s: 10.0, lambda_n: 3.0, lambda_v: 5.0 };
    let prev = Array1::from_elem(6, 0.5);
    let next = Array1::from_elem(2, 0.3);
    let x = Array1::from_elem(4, 0.4);
    let v1 = Array1::from_elem(4, 0.1);
    let v2 = Array1::from_elem(4, 0.9);
    let a = RowNeighbors { prev: Some(prev.view()), next: Some(next.view()), item: Some(v1.view()) };
    let b = RowNeighbors { item: Some(v2.view()), ..a };
    assert_eq!(
        bayes::logpost_x_row(&net, 1, x.view(), &a, &p).unwrap(),
        bayes::logpost_x_row(&net, 1, x.view(), &b, &p).unwrap()
    );
}
