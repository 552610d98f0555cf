use std::fmt::Write as _;
use std::path::Path;

use super::{read_to_string, ContentTriples};
use crate::{CdlError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub token: String,
    /// Original word id.
    pub word_id: usize,
    pub doc_freq: usize,
    pub score: f64,
}

/// Terms ranked by corpus tf-idf, `score = Σ_j count_jt · ln(J / df_t)`.
/// The first `selected_size` terms form the working vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub terms: Vec<Term>,
    pub selected_size: usize,
}

impl Vocabulary {
    /// Ranks every word id in `tokens` and selects the top `size`; equal scores
    /// are ordered by token, ascending.
    pub fn select(tokens: &[String], content: &ContentTriples, size: usize) -> Result<Self> {
        let n_words = tokens.len();
        let mut tf = vec![0.0f64; n_words];
        let mut df = vec![0usize; n_words];
        for &(_, word, count) in &content.triples {
            if word >= n_words {
                return Err(CdlError::Validation(format!(
                    "word id {word} has no token in the vocabulary file"
                )));
            }
            if count > 0.0 {
                tf[word] += count;
                df[word] += 1;
            }
        }
        let j = content.num_items.max(1) as f64;
        let mut terms: Vec<Term> = tokens
            .iter()
            .enumerate()
            .map(|(w, t)| Term {
                token: t.clone(),
                word_id: w,
                doc_freq: df[w],
                score: if df[w] == 0 {
                    0.0
                } else {
                    tf[w] * (j / df[w] as f64).ln()
                },
            })
            .collect();
        terms.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.token.cmp(&b.token))
        });
        Ok(Self {
            selected_size: size.min(terms.len()),
            terms,
        })
    }

    pub fn selected(&self) -> &[Term] {
        &self.terms[..self.selected_size]
    }

    /// Keeps only selected words and renumbers them by rank.
    pub fn remap(&self, content: &ContentTriples) -> ContentTriples {
        let max_id = self.terms.iter().map(|t| t.word_id + 1).max().unwrap_or(0);
        let mut new_id = vec![usize::MAX; max_id];
        for (rank, t) in self.selected().iter().enumerate() {
            new_id[t.word_id] = rank;
        }
        let triples = content
            .triples
            .iter()
            .filter_map(|&(j, w, c)| {
                let id = *new_id.get(w)?;
                (id != usize::MAX).then_some((j, id, c))
            })
            .collect();
        ContentTriples {
            num_items: content.num_items,
            vocab_size: self.selected_size,
            triples,
        }
    }

    /// Selected tokens indexed by their new word id.
    pub fn selected_tokens(&self) -> Vec<String> {
        self.selected().iter().map(|t| t.token.clone()).collect()
    }
}

/// Reads `token<TAB>word_id` lines into a table indexed by word id.
pub fn load_vocab_file(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| CdlError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        let (token, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| err(format!("expected `token<TAB>word_id`, got {line:?}")))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| err(format!("word id {id:?} is not an integer")))?;
        pairs.push((id, token.to_string()));
    }
    let n = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
    let mut tokens = vec![None; n];
    for (id, token) in pairs {
        if tokens[id].replace(token).is_some() {
            return Err(CdlError::Validation(format!("word id {id} listed twice")));
        }
    }
    tokens
        .into_iter()
        .enumerate()
        .map(|(id, t)| t.ok_or_else(|| CdlError::Validation(format!("word id {id} missing"))))
        .collect()
}

pub fn save_vocab_file(path: impl AsRef<Path>, tokens: &[String]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (id, t) in tokens.iter().enumerate() {
        let _ = writeln!(out, "{t}\t{id}");
    }
    std::fs::write(path, out).map_err(|e| CdlError::io(path, e))
}
