use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng as _;

use super::{header_usize, parse_header, read_to_string};
use crate::rng::{rng_for, stream};
use crate::{CdlError, Result};

/// How raw word counts are mapped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// `count > 0` becomes 1.
    #[default]
    BinaryPresence,
    /// Each row divided by its maximum count.
    CountMaxnorm,
    /// Values are taken as given and must already lie in `[0, 1]`.
    None,
}

impl NormalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationMode::BinaryPresence => "binary",
            NormalizationMode::CountMaxnorm => "maxnorm",
            NormalizationMode::None => "none",
        }
    }
}

impl FromStr for NormalizationMode {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "binary-presence" => Ok(NormalizationMode::BinaryPresence),
            "maxnorm" | "count-maxnorm" => Ok(NormalizationMode::CountMaxnorm),
            "none" => Ok(NormalizationMode::None),
            other => Err(CdlError::Argument(format!(
                "unknown normalization mode {other:?} (expected binary, maxnorm or none)"
            ))),
        }
    }
}

/// Raw `(item, word, count)` triples as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentTriples {
    pub num_items: usize,
    pub vocab_size: usize,
    pub triples: Vec<(usize, usize, f64)>,
}

/// Item content `X_c` (or a corrupted copy `X_0`) as a CSR matrix with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentMatrix {
    num_items: usize,
    vocab_size: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    mode: NormalizationMode,
}

impl ContentMatrix {
    /// Builds a normalized matrix from raw triples.
    pub fn from_triples(raw: &ContentTriples, mode: NormalizationMode) -> Result<Self> {
        let (j_count, s_count) = (raw.num_items, raw.vocab_size);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); j_count];
        for &(item, word, count) in &raw.triples {
            if item >= j_count {
                return Err(CdlError::Validation(format!(
                    "item id {item} >= number of items {j_count}"
                )));
            }
            if word >= s_count {
                return Err(CdlError::Validation(format!(
                    "word id {word} >= vocabulary size {s_count}"
                )));
            }
            if !(count >= 0.0) || !count.is_finite() {
                return Err(CdlError::Validation(format!(
                    "item {item} word {word}: count {count} must be a non-negative number"
                )));
            }
            if count > 0.0 {
                rows[item].push((word, count));
            }
        }
        let mut indptr = Vec::with_capacity(j_count + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut empty = 0usize;
        for (item, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|e| e.0);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(CdlError::Validation(format!(
                    "item {item} lists the same word twice"
                )));
            }
            let max = row.iter().map(|e| e.1).fold(0.0f64, f64::max);
            if row.is_empty() {
                empty += 1;
            }
            for &(word, count) in row.iter() {
                let v = match mode {
                    NormalizationMode::BinaryPresence => 1.0,
                    NormalizationMode::CountMaxnorm => count / max,
                    NormalizationMode::None => {
                        if count > 1.0 {
                            return Err(CdlError::Validation(format!(
                                "item {item} word {word}: value {count} outside [0, 1]"
                            )));
                        }
                        count
                    }
                };
                indices.push(word);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        if empty > 0 {
            log::warn!("{empty} of {j_count} items have an all-zero content row");
        }
        Ok(Self {
            num_items: j_count,
            vocab_size: s_count,
            indptr,
            indices,
            values,
            mode,
        })
    }

    /// Builds from a dense matrix whose entries must lie in `[0, 1]`; zeros are not stored.
    pub fn from_dense(dense: &Array2<f64>) -> Result<Self> {
        let triples = dense
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((j, s), &v)| (j, s, v))
            .collect();
        Self::from_triples(
            &ContentTriples {
                num_items: dense.nrows(),
                vocab_size: dense.ncols(),
                triples,
            },
            NormalizationMode::None,
        )
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    /// Sorted word ids and values of row `j`.
    pub fn row(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[j]..self.indptr[j + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn get(&self, j: usize, s: usize) -> f64 {
        let (idx, vals) = self.row(j);
        idx.binary_search(&s).map_or(0.0, |p| vals[p])
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_items, self.vocab_size));
        for j in 0..self.num_items {
            let (idx, vals) = self.row(j);
            for (&s, &v) in idx.iter().zip(vals) {
                out[[j, s]] = v;
            }
        }
        out
    }

    /// Pads with empty rows so the matrix has at least `num_items` rows.
    pub fn with_num_items(&self, num_items: usize) -> Self {
        let mut out = self.clone();
        while out.num_items < num_items {
            out.indptr.push(out.indices.len());
            out.num_items += 1;
        }
        out
    }
}

/// Masking noise: every stored nonzero is dropped independently with
/// probability `noise_level`. Zeros stay zero and kept entries are unchanged.
pub fn corrupt(content: &ContentMatrix, noise_level: f64, seed: u64) -> Result<ContentMatrix> {
    corrupt_indexed(content, noise_level, seed, 0)
}

pub(crate) fn corrupt_indexed(
    content: &ContentMatrix,
    noise_level: f64,
    seed: u64,
    index: u64,
) -> Result<ContentMatrix> {
    if !(0.0..=1.0).contains(&noise_level) {
        return Err(CdlError::Argument(format!(
            "noise level {noise_level} outside [0, 1]"
        )));
    }
    if noise_level == 0.0 {
        return Ok(content.clone());
    }
    let mut rng = rng_for(seed, stream::CORRUPT, index);
    let mut indptr = Vec::with_capacity(content.indptr.len());
    let mut indices = Vec::with_capacity(content.nnz());
    let mut values = Vec::with_capacity(content.nnz());
    indptr.push(0);
    for j in 0..content.num_items {
        let (idx, vals) = content.row(j);
        for (&s, &v) in idx.iter().zip(vals) {
            if rng.random::<f64>() >= noise_level {
                indices.push(s);
                values.push(v);
            }
        }
        indptr.push(indices.len());
    }
    Ok(ContentMatrix {
        num_items: content.num_items,
        vocab_size: content.vocab_size,
        indptr,
        indices,
        values,
        mode: content.mode,
    })
}

/// Reads `item<TAB>word<TAB>count` triples with an optional `# items=J words=S` header.
pub fn load_content_triples(path: impl AsRef<Path>) -> Result<ContentTriples> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut dims = (None, None);
    let mut triples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let header = parse_header(line);
            if let Some(v) = header_usize(&header, "items", path, line_no)? {
                dims.0 = Some(v);
            }
            if let Some(v) = header_usize(&header, "words", path, line_no)? {
                dims.1 = Some(v);
            }
            continue;
        }
        let parse_err = |msg: String| CdlError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected `item<TAB>word<TAB>count`, got {line:?}"
            )));
        }
        let item: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("item id {:?} is not an integer", fields[0])))?;
        let word: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("word id {:?} is not an integer", fields[1])))?;
        let count: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("count {:?} is not a number", fields[2])))?;
        if count < 0.0 {
            return Err(CdlError::Validation(format!(
                "{}:{line_no}: negative count {count}",
                path.display()
            )));
        }
        triples.push((item, word, count));
    }
    let num_items = dims
        .0
        .unwrap_or_else(|| triples.iter().map(|t| t.0 + 1).max().unwrap_or(0));
    let vocab_size = dims
        .1
        .unwrap_or_else(|| triples.iter().map(|t| t.1 + 1).max().unwrap_or(0));
    Ok(ContentTriples {
        num_items,
        vocab_size,
        triples,
    })
}

pub fn load_content(path: impl AsRef<Path>, mode: NormalizationMode) -> Result<ContentMatrix> {
    ContentMatrix::from_triples(&load_content_triples(path)?, mode)
}

/// Writes the stored (normalized) values as triples with a dimension header.
pub fn save_content(path: impl AsRef<Path>, content: &ContentMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# items={} words={}",
        content.num_items, content.vocab_size
    );
    for j in 0..content.num_items {
        let (idx, vals) = content.row(j);
        for (&s, &v) in idx.iter().zip(vals) {
            let _ = writeln!(out, "{j}\t{s}\t{v}");
        }
    }
    std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
}
