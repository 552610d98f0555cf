use std::fmt::Write as _;
use std::path::Path;

use super::{header_usize, parse_header, read_to_string};
use crate::{CdlError, Result};

/// Sparse binary implicit-feedback matrix. Stored entries are the `R_ij = 1`
/// pairs; everything else is an unobserved zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingsMatrix {
    num_users: usize,
    num_items: usize,
    /// Sorted by (user, item).
    entries: Vec<(usize, usize)>,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl RatingsMatrix {
    pub fn new(num_users: usize, num_items: usize, mut entries: Vec<(usize, usize)>) -> Result<Self> {
        entries.sort_unstable();
        for w in entries.windows(2) {
            if w[0] == w[1] {
                return Err(CdlError::Validation(format!(
                    "duplicate rating (user {}, item {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut by_user = vec![Vec::new(); num_users];
        let mut by_item = vec![Vec::new(); num_items];
        for &(u, i) in &entries {
            if u >= num_users || i >= num_items {
                return Err(CdlError::Validation(format!(
                    "rating (user {u}, item {i}) outside {num_users}x{num_items}"
                )));
            }
            by_user[u].push(i);
            by_item[i].push(u);
        }
        Ok(Self {
            num_users,
            num_items,
            entries,
            by_user,
            by_item,
        })
    }

    /// Infers dimensions as max id + 1.
    pub fn from_pairs(entries: Vec<(usize, usize)>) -> Result<Self> {
        let i = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let j = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        Self::new(i, j, entries)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    /// Items rated by `user`, ascending.
    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.by_user[user]
    }

    /// Users who rated `item`, ascending.
    pub fn item_users(&self, item: usize) -> &[usize] {
        &self.by_item[item]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        user < self.num_users && self.by_user[user].binary_search(&item).is_ok()
    }

    /// Same entries with the dimensions grown to at least `(num_users, num_items)`.
    pub fn with_dims(&self, num_users: usize, num_items: usize) -> Result<Self> {
        Self::new(
            num_users.max(self.num_users),
            num_items.max(self.num_items),
            self.entries.clone(),
        )
    }
}

/// Reads `user<TAB>item` lines. An optional `# users=I items=J` header fixes
/// the dimensions; otherwise they are inferred from the largest ids.
pub fn load_ratings(path: impl AsRef<Path>) -> Result<RatingsMatrix> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut dims = (None, None);
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let header = parse_header(line);
            if let Some(u) = header_usize(&header, "users", path, line_no)? {
                dims.0 = Some(u);
            }
            if let Some(i) = header_usize(&header, "items", path, line_no)? {
                dims.1 = Some(i);
            }
            continue;
        }
        let parse_err = |msg: String| CdlError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let mut fields = line.split_whitespace();
        let (Some(u), Some(i), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(format!("expected `user<TAB>item`, got {line:?}")));
        };
        let u: usize = u
            .parse()
            .map_err(|_| parse_err(format!("user id {u:?} is not a non-negative integer")))?;
        let i: usize = i
            .parse()
            .map_err(|_| parse_err(format!("item id {i:?} is not a non-negative integer")))?;
        entries.push((u, i));
    }
    let users = dims
        .0
        .unwrap_or_else(|| entries.iter().map(|e| e.0 + 1).max().unwrap_or(0));
    let items = dims
        .1
        .unwrap_or_else(|| entries.iter().map(|e| e.1 + 1).max().unwrap_or(0));
    RatingsMatrix::new(users, items, entries)
}

/// Writes the header and one `user<TAB>item` line per entry, sorted.
pub fn save_ratings(path: impl AsRef<Path>, ratings: &RatingsMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(ratings.nnz() * 12 + 32);
    let _ = writeln!(out, "# users={} items={}", ratings.num_users, ratings.num_items);
    for (u, i) in &ratings.entries {
        let _ = writeln!(out, "{u}\t{i}");
    }
    std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
}
