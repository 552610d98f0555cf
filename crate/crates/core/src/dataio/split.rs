use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::{read_to_string, RatingsMatrix};
use crate::rng::{rng_for, stream};
use crate::{CdlError, Result};

/// `P` training items per user, repeated with seeds `seed, seed+1, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub p: usize,
    pub seed: u64,
    pub repetitions: usize,
}

impl SplitSpec {
    pub fn splits(&self, ratings: &RatingsMatrix) -> Result<Vec<Split>> {
        (0..self.repetitions as u64)
            .map(|r| split(ratings, self.p, self.seed + r))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: RatingsMatrix,
    pub test: RatingsMatrix,
    /// Users with more than `P` ratings, ascending.
    pub eval_users: Vec<usize>,
    pub p: usize,
    pub seed: u64,
}

/// For every user with more than `p` items, `p` uniformly chosen items go to
/// training and the rest to test. Users with `p` or fewer items keep all of
/// them in training and are not evaluated.
pub fn split(ratings: &RatingsMatrix, p: usize, seed: u64) -> Result<Split> {
    if p == 0 {
        return Err(CdlError::Argument("P must be at least 1".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut eval_users = Vec::new();
    for u in 0..ratings.num_users() {
        let items = ratings.user_items(u);
        if items.len() <= p {
            train.extend(items.iter().map(|&i| (u, i)));
            continue;
        }
        let mut rng = rng_for(seed, stream::SPLIT, u as u64);
        let mut shuffled = items.to_vec();
        shuffled.shuffle(&mut rng);
        train.extend(shuffled[..p].iter().map(|&i| (u, i)));
        test.extend(shuffled[p..].iter().map(|&i| (u, i)));
        eval_users.push(u);
    }
    let (nu, ni) = (ratings.num_users(), ratings.num_items());
    Ok(Split {
        train: RatingsMatrix::new(nu, ni, train)?,
        test: RatingsMatrix::new(nu, ni, test)?,
        eval_users,
        p,
        seed,
    })
}

/// One cross-validation fold: the held-out entries and the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: RatingsMatrix,
    pub test: RatingsMatrix,
}

/// Partitions every user's items into `folds` parts: the items are shuffled,
/// then dealt round-robin starting at fold `user mod folds`, so users with
/// few items do not all land in the first folds.
pub fn kfold(ratings: &RatingsMatrix, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(CdlError::Argument(format!("need at least 2 folds, got {folds}")));
    }
    let mut parts: Vec<Vec<(usize, usize)>> = vec![Vec::new(); folds];
    for u in 0..ratings.num_users() {
        let mut items = ratings.user_items(u).to_vec();
        items.shuffle(&mut rng_for(seed, stream::FOLDS, u as u64));
        for (pos, &i) in items.iter().enumerate() {
            parts[(pos + u) % folds].push((u, i));
        }
    }
    let (nu, ni) = (ratings.num_users(), ratings.num_items());
    (0..folds)
        .map(|f| {
            let train = parts
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            Ok(Fold {
                train: RatingsMatrix::new(nu, ni, train)?,
                test: RatingsMatrix::new(nu, ni, parts[f].clone())?,
            })
        })
        .collect()
}

/// Everything needed to reproduce a split exactly: seed, `P` and the training entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub p: usize,
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(usize, usize)>,
}

impl SplitManifest {
    pub fn from_split(split: &Split) -> Self {
        Self {
            seed: split.seed,
            p: split.p,
            num_users: split.train.num_users(),
            num_items: split.train.num_items(),
            train: split.train.entries().to_vec(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(out, "P\t{}", self.p);
        let _ = writeln!(out, "users\t{}", self.num_users);
        let _ = writeln!(out, "items\t{}", self.num_items);
        let _ = writeln!(out, "train\t{}", self.train.len());
        for (u, i) in &self.train {
            let _ = writeln!(out, "{u}\t{i}");
        }
        std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let mut field = |name: &str| -> Result<u64> {
            let (idx, line) = lines.next().ok_or_else(|| CdlError::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("missing `{name}` line"),
            })?;
            let value = line
                .strip_prefix(name)
                .and_then(|rest| rest.trim().parse().ok());
            value.ok_or_else(|| CdlError::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected `{name}<TAB>value`"),
            })
        };
        let seed = field("seed")?;
        let p = field("P")? as usize;
        let num_users = field("users")? as usize;
        let num_items = field("items")? as usize;
        let n = field("train")? as usize;
        let mut train = Vec::with_capacity(n);
        for (idx, line) in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(u)), Some(Ok(i)), None) => train.push((u, i)),
                _ => {
                    return Err(CdlError::Parse {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        msg: format!("bad train entry {line:?}"),
                    })
                }
            }
        }
        if train.len() != n {
            return Err(CdlError::Validation(format!(
                "manifest declares {n} train entries but lists {}",
                train.len()
            )));
        }
        Ok(Self {
            seed,
            p,
            num_users,
            num_items,
            train,
        })
    }

    /// Rebuilds the split from the full ratings without re-drawing randomness.
    pub fn apply(&self, ratings: &RatingsMatrix) -> Result<Split> {
        let train = RatingsMatrix::new(self.num_users, self.num_items, self.train.clone())?;
        let mut test = Vec::new();
        for &(u, i) in ratings.entries() {
            if !train.contains(u, i) {
                test.push((u, i));
            }
        }
        for &(u, i) in train.entries() {
            if !ratings.contains(u, i) {
                return Err(CdlError::Validation(format!(
                    "manifest train entry ({u}, {i}) is not in the ratings"
                )));
            }
        }
        let eval_users = (0..self.num_users)
            .filter(|&u| ratings.user_items(u).len() > self.p)
            .collect();
        Ok(Split {
            train,
            test: RatingsMatrix::new(self.num_users, self.num_items, test)?,
            eval_users,
            p: self.p,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratings() -> RatingsMatrix {
        let mut e = Vec::new();
        for i in 0..5 {
            e.push((0, i));
        }
        e.push((1, 3));
        e.push((1, 4));
        RatingsMatrix::new(2, 6, e).unwrap()
    }

    #[test]
    fn sparse_setting_one_train_item() {
        let s = split(&ratings(), 1, 3).unwrap();
        assert_eq!(s.train.user_items(0).len(), 1);
        assert_eq!(s.test.user_items(0).len(), 4);
        assert_eq!(s.eval_users, vec![0, 1]);
    }

    #[test]
    fn small_users_stay_in_training() {
        let s = split(&ratings(), 10, 3).unwrap();
        assert_eq!(s.train.user_items(1), &[3, 4]);
        assert!(s.test.user_items(1).is_empty());
        assert!(s.eval_users.is_empty());
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let r = ratings();
        let a = split(&r, 2, 9).unwrap();
        assert_eq!(a, split(&r, 2, 9).unwrap());
        assert_eq!(a.train.nnz() + a.test.nnz(), r.nnz());
        for &(u, i) in a.train.entries() {
            assert!(!a.test.contains(u, i));
        }
    }

    #[test]
    fn manifest_round_trip_reproduces_split() {
        let r = ratings();
        let s = split(&r, 2, 4).unwrap();
        let m = SplitManifest::from_split(&s);
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        let back = SplitManifest::load(f.path()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.apply(&r).unwrap(), s);
    }

    #[test]
    fn repetitions_use_consecutive_seeds() {
        let spec = SplitSpec { p: 1, seed: 5, repetitions: 3 };
        let reps = spec.splits(&ratings()).unwrap();
        assert_eq!(reps.len(), 3);
        assert_eq!(reps[2].seed, 7);
    }

    #[test]
    fn folds_partition_each_user() {
        let r = ratings();
        let folds = kfold(&r, 3, 1).unwrap();
        assert_eq!(folds.len(), 3);
        let mut held: Vec<_> = folds.iter().flat_map(|f| f.test.entries().to_vec()).collect();
        held.sort_unstable();
        assert_eq!(held.as_slice(), r.entries());
        for f in &folds {
            assert_eq!(f.train.nnz() + f.test.nnz(), r.nnz());
            // Five items over three folds: sizes differ by at most one.
            let n = f.test.user_items(0).len();
            assert!(n == 1 || n == 2);
        }
        assert_eq!(folds, kfold(&r, 3, 1).unwrap());
        assert!(kfold(&r, 1, 1).is_err());
    }
}
