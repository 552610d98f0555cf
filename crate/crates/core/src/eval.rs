//! Top-M ranking and the recall / mAP metrics.

use std::cmp::Ordering;
use std::io::Write;
use std::str::FromStr;

use ndarray::ArrayView2;

use crate::dataio::RatingsMatrix;
use crate::par;
use crate::{CdlError, Result};

/// Rank cutoff of the average-precision metric.
pub const MAP_CUTOFF: usize = 500;

/// Default recall grid `50, 100, …, 300`.
pub fn default_m_grid() -> Vec<usize> {
    (1..=6).map(|m| m * 50).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidatePolicy {
    /// Training items never appear in a user's list.
    #[default]
    ExcludeTrain,
    AllItems,
}

impl FromStr for CandidatePolicy {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude-train" => Ok(Self::ExcludeTrain),
            "all-items" => Ok(Self::AllItems),
            _ => Err(CdlError::Argument(format!(
                "unknown candidate policy {s:?} (expected exclude-train or all-items)"
            ))),
        }
    }
}

/// Per-user item lists in descending score order, possibly truncated.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub policy: CandidatePolicy,
    lists: Vec<Vec<usize>>,
}

impl RankedList {
    pub fn user(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn num_users(&self) -> usize {
        self.lists.len()
    }
}

/// Descending score, ascending id on ties. NaN scores sort last.
fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&x, &y| {
        scores[y]
            .partial_cmp(&scores[x])
            .unwrap_or_else(|| scores[x].is_nan().cmp(&scores[y].is_nan()))
            .then(x.cmp(&y))
    }
}

fn check_factors(users: ArrayView2<f64>, items: ArrayView2<f64>, train: &RatingsMatrix) -> Result<()> {
    if users.ncols() != items.ncols() {
        return Err(CdlError::Shape(format!(
            "user factors have width {} but item factors {}",
            users.ncols(),
            items.ncols()
        )));
    }
    if train.num_users() > users.nrows() || train.num_items() > items.nrows() {
        return Err(CdlError::Shape(format!(
            "ratings are {}x{} but the model covers {} users and {} items",
            train.num_users(),
            train.num_items(),
            users.nrows(),
            items.nrows()
        )));
    }
    Ok(())
}

/// Full ranking of all candidate items for every user.
pub fn rank(users: ArrayView2<f64>, items: ArrayView2<f64>, train: &RatingsMatrix, policy: CandidatePolicy) -> Result<RankedList> {
    rank_top(users, items, train, policy, usize::MAX)
}

/// Like [`rank`] but keeps only the first `depth` items per user, using
/// partial selection so the cost is `O(J + depth·log depth)` per user.
pub fn rank_top(
    users: ArrayView2<f64>,
    items: ArrayView2<f64>,
    train: &RatingsMatrix,
    policy: CandidatePolicy,
    depth: usize,
) -> Result<RankedList> {
    check_factors(users, items, train)?;
    let lists = par::map_indexed(users.nrows(), |i| {
        let scores: Vec<f64> = items.dot(&users.row(i)).to_vec();
        let seen: &[usize] = match policy {
            CandidatePolicy::ExcludeTrain if i < train.num_users() => train.user_items(i),
            _ => &[],
        };
        let mut cand: Vec<usize> = (0..items.nrows())
            .filter(|j| seen.binary_search(j).is_err())
            .collect();
        let cmp = by_score(&scores);
        if depth < cand.len() {
            if depth == 0 {
                cand.clear();
            } else {
                cand.select_nth_unstable_by(depth - 1, &cmp);
                cand.truncate(depth);
            }
        }
        cand.sort_unstable_by(&cmp);
        cand
    });
    Ok(RankedList { policy, lists })
}

fn hits_in(list: &[usize], m: usize, liked: &[usize]) -> usize {
    list.iter().take(m).filter(|j| liked.binary_search(j).is_ok()).count()
}

fn evaluated_users(test: &RatingsMatrix, ranked: &RankedList) -> Vec<usize> {
    (0..test.num_users().min(ranked.num_users()))
        .filter(|&i| !test.user_items(i).is_empty())
        .collect()
}

/// Per-user recall at `m` for users with a non-empty test set, plus their mean
/// (`None` when no user has test items).
pub fn recall_at_m(ranked: &RankedList, test: &RatingsMatrix, m: usize) -> Result<(Vec<(usize, f64)>, Option<f64>)> {
    if m == 0 {
        return Err(CdlError::Argument("M must be at least 1".into()));
    }
    let per_user: Vec<(usize, f64)> = evaluated_users(test, ranked)
        .into_iter()
        .map(|i| {
            let liked = test.user_items(i);
            (i, hits_in(ranked.user(i), m, liked) as f64 / liked.len() as f64)
        })
        .collect();
    let mean = mean(per_user.iter().map(|&(_, r)| r));
    Ok((per_user, mean))
}

/// Average precision of one list truncated at `cutoff`, normalized by the number of liked items.
pub fn average_precision(list: &[usize], liked: &[usize], cutoff: usize) -> f64 {
    if liked.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, j) in list.iter().take(cutoff).enumerate() {
        if liked.binary_search(j).is_ok() {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / liked.len() as f64
}

/// Mean AP with cutoff 500 over users with a non-empty test set.
pub fn map_at_500(ranked: &RankedList, test: &RatingsMatrix) -> Option<f64> {
    mean(
        evaluated_users(test, ranked)
            .into_iter()
            .map(|i| average_precision(ranked.user(i), test.user_items(i), MAP_CUTOFF)),
    )
}

/// Mean precision at `m`; for debugging only.
pub fn precision_at_m(ranked: &RankedList, test: &RatingsMatrix, m: usize) -> Option<f64> {
    mean(
        evaluated_users(test, ranked)
            .into_iter()
            .map(|i| hits_in(ranked.user(i), m, test.user_items(i)) as f64 / m as f64),
    )
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

/// Metrics of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionMetrics {
    pub m_grid: Vec<usize>,
    pub recall: Vec<f64>,
    pub map: f64,
    pub num_users: usize,
}

/// Ranks and scores one repetition. Returns `None` when the test set is empty.
pub fn evaluate(
    users: ArrayView2<f64>,
    items: ArrayView2<f64>,
    train: &RatingsMatrix,
    test: &RatingsMatrix,
    m_grid: &[usize],
    policy: CandidatePolicy,
) -> Result<Option<RepetitionMetrics>> {
    if m_grid.is_empty() || m_grid.contains(&0) {
        return Err(CdlError::Argument(format!("M grid {m_grid:?} must be non-empty and positive")));
    }
    if test.num_items() > items.nrows() {
        return Err(CdlError::Shape(format!(
            "test set has {} items but the model covers {}",
            test.num_items(),
            items.nrows()
        )));
    }
    let depth = m_grid.iter().copied().max().unwrap_or(0).max(MAP_CUTOFF);
    let ranked = rank_top(users, items, train, policy, depth)?;
    let Some(map) = map_at_500(&ranked, test) else {
        return Ok(None);
    };
    let mut recall = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        recall.push(recall_at_m(&ranked, test, m)?.1.unwrap_or(0.0));
    }
    Ok(Some(RepetitionMetrics {
        m_grid: m_grid.to_vec(),
        recall,
        map,
        num_users: evaluated_users(test, &ranked).len(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repetition.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

/// Metrics over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub m_grid: Vec<usize>,
    pub repetitions: Vec<RepetitionMetrics>,
    pub recall: Vec<MeanStd>,
    pub map: MeanStd,
}

pub fn aggregate(reps: Vec<RepetitionMetrics>) -> Result<MetricReport> {
    let Some(first) = reps.first() else {
        return Err(CdlError::Argument("aggregation needs at least one repetition".into()));
    };
    let m_grid = first.m_grid.clone();
    if reps.iter().any(|r| r.m_grid != m_grid) {
        return Err(CdlError::Argument("repetitions use different M grids".into()));
    }
    let recall = (0..m_grid.len())
        .map(|k| mean_std(&reps.iter().map(|r| r.recall[k]).collect::<Vec<_>>()))
        .collect();
    let map = mean_std(&reps.iter().map(|r| r.map).collect::<Vec<_>>());
    Ok(MetricReport {
        m_grid,
        repetitions: reps,
        recall,
        map,
    })
}

impl MetricReport {
    /// One row per repetition, then `mean` and `std` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "row")?;
        for m in &self.m_grid {
            write!(out, "\trecall@{m}")?;
        }
        writeln!(out, "\tmap@{MAP_CUTOFF}\tusers")?;
        for (r, rep) in self.repetitions.iter().enumerate() {
            write!(out, "{r}")?;
            for v in &rep.recall {
                write!(out, "\t{v}")?;
            }
            writeln!(out, "\t{}\t{}", rep.map, rep.num_users)?;
        }
        for (label, pick) in [("mean", true), ("std", false)] {
            write!(out, "{label}")?;
            for v in &self.recall {
                write!(out, "\t{}", if pick { v.mean } else { v.std })?;
            }
            let m = if pick { self.map.mean } else { self.map.std };
            writeln!(out, "\t{m}\t")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn no_train(i: usize, j: usize) -> RatingsMatrix {
        RatingsMatrix::new(i, j, vec![]).unwrap()
    }

    #[test]
    fn three_scalar_order() {
        let u = array![[1.0]];
        let v = array![[0.9], [0.1], [0.5]];
        let r = rank(u.view(), v.view(), &no_train(1, 3), CandidatePolicy::AllItems).unwrap();
        assert_eq!(r.user(0), &[0, 2, 1]);
    }

    #[test]
    fn ties_prefer_lower_id() {
        let u = array![[1.0]];
        let v = array![[0.3], [0.7], [0.3], [0.7]];
        let r = rank(u.view(), v.view(), &no_train(1, 4), CandidatePolicy::AllItems).unwrap();
        assert_eq!(r.user(0), &[1, 3, 0, 2]);
        let top = rank_top(u.view(), v.view(), &no_train(1, 4), CandidatePolicy::AllItems, 3).unwrap();
        assert_eq!(top.user(0), &[1, 3, 0]);
    }

    #[test]
    fn exclude_train_drops_training_items() {
        let u = array![[1.0], [1.0]];
        let v = array![[0.9], [0.1], [0.5]];
        let train = RatingsMatrix::new(2, 3, vec![(0, 0), (1, 2)]).unwrap();
        let r = rank(u.view(), v.view(), &train, CandidatePolicy::ExcludeTrain).unwrap();
        assert_eq!(r.user(0), &[2, 1]);
        assert_eq!(r.user(1), &[0, 1]);
    }

    #[test]
    fn recall_counts_hits() {
        let ranked = RankedList {
            policy: CandidatePolicy::AllItems,
            lists: vec![vec![0, 3, 1, 2]],
        };
        let test = RatingsMatrix::new(1, 4, vec![(0, 0), (0, 1), (0, 2)]).unwrap();
        let (per_user, m) = recall_at_m(&ranked, &test, 2).unwrap();
        assert_eq!(per_user, vec![(0, 1.0 / 3.0)]);
        assert_eq!(m, Some(1.0 / 3.0));
        assert_eq!(recall_at_m(&ranked, &test, 4).unwrap().1, Some(1.0));
        assert!(recall_at_m(&ranked, &test, 0).is_err());
    }

    #[test]
    fn empty_test_users_are_skipped() {
        let ranked = RankedList {
            policy: CandidatePolicy::AllItems,
            lists: vec![vec![0, 1], vec![1, 0]],
        };
        let test = RatingsMatrix::new(2, 2, vec![(1, 1)]).unwrap();
        let (per_user, m) = recall_at_m(&ranked, &test, 1).unwrap();
        assert_eq!(per_user, vec![(1, 1.0)]);
        assert_eq!(m, Some(1.0));
        assert_eq!(recall_at_m(&ranked, &no_train(2, 2), 1).unwrap().1, None);
    }

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&[4, 1, 2], &[4], 500), 1.0);
        let ap = average_precision(&[0, 5, 1], &[0, 1], 500);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        let long: Vec<usize> = (0..600).collect();
        assert_eq!(average_precision(&long, &[500], MAP_CUTOFF), 0.0);
        assert_eq!(average_precision(&long, &[499], MAP_CUTOFF), 1.0 / 500.0);
    }

    #[test]
    fn aggregate_two_points() {
        let rep = |r: f64| RepetitionMetrics {
            m_grid: vec![50],
            recall: vec![r],
            map: r,
            num_users: 1,
        };
        let a = aggregate(vec![rep(0.2), rep(0.4)]).unwrap();
        assert!((a.recall[0].mean - 0.3).abs() < 1e-15);
        assert!((a.map.std - 0.141_421_356_237_309_5).abs() < 1e-12);
        let same = aggregate(vec![rep(0.5); 5]).unwrap();
        assert_eq!(same.map.std, 0.0);
        assert_eq!(same.repetitions.len(), 5);
        assert!(aggregate(vec![]).is_err());
    }

    #[test]
    fn tsv_has_rep_and_summary_rows() {
        let rep = RepetitionMetrics {
            m_grid: vec![50, 100],
            recall: vec![0.1, 0.2],
            map: 0.05,
            num_users: 3,
        };
        let report = aggregate(vec![rep.clone(), rep]).unwrap();
        let mut buf = Vec::new();
        report.write_tsv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row\trecall@50\trecall@100\tmap@500\tusers");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("mean\t0.1\t0.2\t0.05"));
    }
}
