//! Word vectors loaded from a flat text table, with exact nearest-neighbour
//! search by cosine similarity.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::text::{normalize_word, Lexicon};

/// Default neighbour count per keyword.
pub const DEFAULT_NEIGHBOR_K: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum VectorError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Cosine similarity of two vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, VectorError> {
    if a.len() != b.len() {
        return Err(VectorError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Anything that can answer "which words are close to this one".
pub trait EmbeddingProvider: Lexicon + Send + Sync {
    /// Up to `k` words ordered by descending similarity, never including
    /// `word` itself. Unknown words give an empty list.
    fn neighbors(&self, word: &str, k: usize) -> Vec<String>;
}

#[derive(Debug, Clone)]
struct Entry {
    word: String,
    vector: Vec<f64>,
    norm: f64,
}

/// Immutable in-memory vector table.
#[derive(Debug, Clone, Default)]
pub struct VectorTable {
    dim: usize,
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    max_chars: usize,
}

impl VectorTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses `word<TAB>f1 f2 ... fD` lines. `#` lines and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, TableError> {
        let mut table = VectorTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let malformed = |reason: String| TableError::Malformed { line: line_no, reason };
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (word, floats) = raw
                .split_once('\t')
                .ok_or_else(|| malformed("expected word<TAB>vector".into()))?;
            let word = normalize_word(word.trim());
            if word.is_empty() {
                return Err(malformed("empty word".into()));
            }
            let vector = floats
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| malformed(format!("bad number {f:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if table.entries.is_empty() {
                if vector.len() < 2 {
                    return Err(malformed(format!("dimension {} is below 2", vector.len())));
                }
                table.dim = vector.len();
            } else if vector.len() != table.dim {
                return Err(malformed(format!(
                    "expected {} components, found {}",
                    table.dim,
                    vector.len()
                )));
            }
            let n = norm(&vector);
            if n == 0.0 {
                return Err(malformed(format!("zero vector for {word:?}")));
            }
            if table.index.contains_key(&word) {
                return Err(malformed(format!("duplicate word {word:?}")));
            }
            table.max_chars = table.max_chars.max(word.chars().count());
            table.index.insert(word.clone(), table.entries.len());
            table.entries.push(Entry { word, vector, norm: n });
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.entries[i].vector.as_slice())
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.word.as_str())
    }
}

impl EmbeddingProvider for VectorTable {
    fn neighbors(&self, word: &str, k: usize) -> Vec<String> {
        let Some(&qi) = self.index.get(word) else {
            return Vec::new();
        };
        let query = &self.entries[qi];
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != qi)
            .map(|(_, e)| {
                let sim = (dot(&query.vector, &e.vector) / (query.norm * e.norm)).clamp(-1.0, 1.0);
                (sim, e.word.as_str())
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        });
        scored.into_iter().take(k).map(|(_, w)| w.to_string()).collect()
    }
}

impl Lexicon for VectorTable {
    fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn max_word_chars(&self) -> usize {
        self.max_chars
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_vectors() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_vectors() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    // 32 / sqrt(14 * 77), evaluated with mpmath at 50 digits.
    #[test]
    fn known_value() {
        let expected = 0.974_631_846_197_076_2_f64;
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got}");
    }

    #[test]
    fn errors() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(VectorError::ZeroNorm));
        assert_eq!(
            cosine_similarity(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(VectorError::DimensionMismatch { left: 2, right: 3 })
        );
    }

    const TOY: &str = "# five words\n\
        apple\t1 0\n\
        pear\t0.9 0.1\n\
        plum\t0.8 0.6\n\
        kiwi\t0 1\n\
        lime\t-1 0\n";

    // Hand-run pairwise cosines against "apple" = (1, 0):
    //   pear  0.9/sqrt(0.82)  = 0.99388
    //   plum  0.8/1.0         = 0.8
    //   kiwi  0
    //   lime  -1
    #[test]
    fn toy_table_neighbors() {
        let t = VectorTable::parse(TOY).unwrap();
        assert_eq!(t.neighbors("apple", 3), vec!["pear", "plum", "kiwi"]);
        assert_eq!(t.neighbors("apple", 40), vec!["pear", "plum", "kiwi", "lime"]);
        assert!(t.neighbors("banana", 3).is_empty());
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = VectorTable::parse("q\t1 0\nzeta\t0 1\nalpha\t0 -1\nmid\t0 2\n").unwrap();
        assert_eq!(t.neighbors("q", 3), vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        let e = VectorTable::parse("a\t1 2\nb\t1 2 3\n").unwrap_err();
        assert!(matches!(e, TableError::Malformed { line: 2, .. }), "{e}");
        let e = VectorTable::parse("a 1 2\n").unwrap_err();
        assert!(matches!(e, TableError::Malformed { line: 1, .. }));
        let e = VectorTable::parse("a\t0 0\n").unwrap_err();
        assert!(e.to_string().contains("zero vector"));
        let e = VectorTable::parse("a\t1\n").unwrap_err();
        assert!(e.to_string().contains("below 2"));
        let e = VectorTable::parse("a\t1 x\n").unwrap_err();
        assert!(e.to_string().contains("bad number"));
        let e = VectorTable::parse("Park\t1 0\npark\t0 1\n").unwrap_err();
        assert!(e.to_string().contains("duplicate"));
    }

    #[test]
    fn words_are_normalized_on_load() {
        let t = VectorTable::parse("Park\t1 0\n").unwrap();
        assert!(t.contains("park"));
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn symmetric(a in vec_strategy(6), b in vec_strategy(6)) {
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn scale_invariant(a in vec_strategy(5), b in vec_strategy(5), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            let lhs = cosine_similarity(&scaled, &b).unwrap();
            let rhs = cosine_similarity(&a, &b).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
