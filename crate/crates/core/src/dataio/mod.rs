//! Data loading, normalization, corruption, train/test splitting and synthetic
//! data generation.

pub(crate) mod content;
mod ratings;
mod split;
mod synthetic;
mod vocab;

pub use content::{
    corrupt, load_content, load_content_triples, save_content, ContentMatrix, ContentTriples,
    NormalizationMode,
};
pub use ratings::{load_ratings, save_ratings, RatingsMatrix};
pub use split::{kfold, split, Fold, Split, SplitManifest, SplitSpec};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData};
pub use vocab::{load_vocab_file, save_vocab_file, Term, Vocabulary};

use std::path::Path;

use crate::{CdlError, Result};

/// Parses an optional `# key=value key=value` header line.
pub(crate) fn parse_header(line: &str) -> Vec<(String, String)> {
    line.trim_start_matches('#')
        .split_whitespace()
        .filter_map(|kv| {
            let (k, v) = kv.split_once('=')?;
            Some((k.to_string(), v.to_string()))
        })
        .collect()
}

pub(crate) fn header_usize(
    header: &[(String, String)],
    key: &str,
    path: &Path,
    line: usize,
) -> Result<Option<usize>> {
    match header.iter().find(|(k, _)| k == key) {
        None => Ok(None),
        Some((_, v)) => v.parse().map(Some).map_err(|_| CdlError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("header value {key}={v} is not a count"),
        }),
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CdlError::io(path, e))
}
