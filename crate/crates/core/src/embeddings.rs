//! Named vector sources for verbs.
//!
//! Three kinds exist: a word lexicon read from the usual GloVe/word2vec text
//! format, a per-token table keyed by annotation token id (contextual
//! embeddings computed outside this crate), and a seeded random baseline.
//!
//! The baseline draws each component uniformly from [-1, 1) using SplitMix64
//! seeded with `splitmix64_mix(seed) ^ fnv1a64(word)`. Both algorithms are
//! implemented here rather than taken from a crate so that golden vectors
//! stay stable across dependency upgrades and platforms.

use std::borrow::Cow;
use std::collections::HashMap;
use std::io::{self, BufRead};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{TokenId, VerbEvent};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("read error: {0}")]
    Io(#[from] io::Error),
    #[error("no vectors found")]
    Empty,
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: component {value:?} is not a finite number")]
    NonNumeric { line: usize, value: String },
    #[error("line {line}: invalid token id {value:?}")]
    InvalidTokenId { line: usize, value: String },
    #[error("line {line}: duplicate token id {token_id}")]
    DuplicateToken { line: usize, token_id: TokenId },
    #[error("line {line}: malformed entry")]
    Malformed { line: usize },
    #[error("vector dimension must be positive")]
    ZeroDimension,
    #[error("vector has non-finite components")]
    NonFinite,
    #[error("cosine of vectors with dimensions {0} and {1}")]
    DimensionDiffers(usize, usize),
    #[error("cosine of a zero-norm vector")]
    ZeroNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        if components.is_empty() {
            return Err(EmbeddingError::ZeroDimension);
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Vector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Vector, EmbeddingError> {
        Vector::new(self.0.iter().map(|c| c * factor).collect())
    }
}

/// Cosine similarity. Zero-norm inputs are an error rather than a silent 0.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionDiffers(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Lexicon,
    PerToken,
    Baseline,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Lexicon => "lexicon",
            SourceKind::PerToken => "per_token",
            SourceKind::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone)]
enum Payload {
    Lexicon(HashMap<String, Vector>),
    PerToken(HashMap<TokenId, Vector>),
    Baseline { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct EmbeddingSource {
    name: String,
    dim: usize,
    payload: Payload,
    duplicate_words: usize,
}

impl EmbeddingSource {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SourceKind {
        match self.payload {
            Payload::Lexicon(_) => SourceKind::Lexicon,
            Payload::PerToken(_) => SourceKind::PerToken,
            Payload::Baseline { .. } => SourceKind::Baseline,
        }
    }

    /// Stored entries; `None` for the baseline, which covers every word.
    pub fn len(&self) -> Option<usize> {
        match &self.payload {
            Payload::Lexicon(m) => Some(m.len()),
            Payload::PerToken(m) => Some(m.len()),
            Payload::Baseline { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Lexicon lines skipped because their word had already been seen.
    pub fn duplicate_words(&self) -> usize {
        self.duplicate_words
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Vector for a surface word. Per-token sources never answer this.
    pub fn word_vector(&self, word: &str) -> Option<Cow<'_, Vector>> {
        match &self.payload {
            Payload::Lexicon(m) => m.get(word).map(Cow::Borrowed),
            Payload::PerToken(_) => None,
            Payload::Baseline { seed } => Some(Cow::Owned(baseline_vector(*seed, word, self.dim))),
        }
    }

    pub fn token_vector(&self, token_id: TokenId) -> Option<&Vector> {
        match &self.payload {
            Payload::PerToken(m) => m.get(&token_id),
            _ => None,
        }
    }

    /// Vector for a verb event, or `None` when the source does not cover it.
    pub fn vector_for(&self, event: &VerbEvent) -> Option<Cow<'_, Vector>> {
        match &self.payload {
            Payload::PerToken(m) => m.get(&event.verb_token_id).map(Cow::Borrowed),
            _ => self.word_vector(&event.surface),
        }
    }

    /// Per-token coverage, sorted.
    pub fn token_ids(&self) -> Vec<TokenId> {
        match &self.payload {
            Payload::PerToken(m) => {
                let mut ids: Vec<_> = m.keys().copied().collect();
                ids.sort_unstable();
                ids
            }
            _ => Vec::new(),
        }
    }
}

fn parse_components(fields: &[&str], line: usize) -> Result<Vec<f64>, EmbeddingError> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| EmbeddingError::NonNumeric {
                    line,
                    value: f.to_string(),
                })
        })
        .collect()
}

fn check_dim(dim: &mut Option<usize>, found: usize, line: usize) -> Result<(), EmbeddingError> {
    match *dim {
        Some(expected) if expected != found => Err(EmbeddingError::DimensionMismatch {
            line,
            expected,
            found,
        }),
        Some(_) => Ok(()),
        None if found == 0 => Err(EmbeddingError::Malformed { line }),
        None => {
            *dim = Some(found);
            Ok(())
        }
    }
}

/// Reads a word-vector text file: an optional `<vocab_size> <dim>` header,
/// then `word c1 ... cD` per line. Later duplicates of a word are ignored
/// and counted.
pub fn load_lexicon<R: BufRead>(reader: R, name: &str) -> Result<EmbeddingSource, EmbeddingError> {
    let mut dim: Option<usize> = None;
    let mut map = HashMap::new();
    let mut duplicates = 0;
    let mut first = true;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && fields.len() == 2 {
            if let (Ok(_vocab), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if d == 0 {
                    return Err(EmbeddingError::ZeroDimension);
                }
                dim = Some(d);
                continue;
            }
        }
        let (word, rest) = fields.split_first().expect("non-empty");
        check_dim(&mut dim, rest.len(), line_no)?;
        let components = parse_components(rest, line_no)?;
        if map.contains_key(*word) {
            duplicates += 1;
            continue;
        }
        map.insert(word.to_string(), Vector(components));
    }
    let dim = match dim {
        Some(d) if !map.is_empty() => d,
        _ => return Err(EmbeddingError::Empty),
    };
    Ok(EmbeddingSource {
        name: name.to_string(),
        dim,
        payload: Payload::Lexicon(map),
        duplicate_words: duplicates,
    })
}

/// Reads a per-token table: `token_id<TAB>c1 c2 ... cD` per line.
pub fn load_token_table<R: BufRead>(reader: R, name: &str) -> Result<EmbeddingSource, EmbeddingError> {
    let mut dim: Option<usize> = None;
    let mut map = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or(EmbeddingError::Malformed { line: line_no })?;
        let token_id: TokenId = id
            .trim()
            .parse()
            .map_err(|_| EmbeddingError::InvalidTokenId {
                line: line_no,
                value: id.to_string(),
            })?;
        let fields: Vec<&str> = rest.split_whitespace().collect();
        check_dim(&mut dim, fields.len(), line_no)?;
        let components = parse_components(&fields, line_no)?;
        if map.insert(token_id, Vector(components)).is_some() {
            return Err(EmbeddingError::DuplicateToken {
                line: line_no,
                token_id,
            });
        }
    }
    let dim = dim.ok_or(EmbeddingError::Empty)?;
    Ok(EmbeddingSource {
        name: name.to_string(),
        dim,
        payload: Payload::PerToken(map),
        duplicate_words: 0,
    })
}

/// Random baseline: one vector per word type, components uniform in [-1, 1).
pub fn baseline_source(seed: u64, dim: usize) -> Result<EmbeddingSource, EmbeddingError> {
    if dim == 0 {
        return Err(EmbeddingError::ZeroDimension);
    }
    Ok(EmbeddingSource {
        name: "baseline".to_string(),
        dim,
        payload: Payload::Baseline { seed },
        duplicate_words: 0,
    })
}

pub fn baseline_vector(seed: u64, word: &str, dim: usize) -> Vector {
    let mut rng = SplitMix64::new(splitmix64_mix(seed) ^ fnv1a64(word.as_bytes()));
    Vector((0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect())
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The SplitMix64 finalizer.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        splitmix64_mix(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> Vector {
        Vector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn cosine_identities() {
        assert_eq!(cosine(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap(), 1.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), -1.0);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::ZeroNorm)
        ));
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionDiffers(1, 2))
        ));
    }

    #[test]
    fn lexicon_plain() {
        let src = load_lexicon("a 1 0\nb 0 1\n".as_bytes(), "glove").unwrap();
        assert_eq!(src.dim(), 2);
        assert_eq!(src.len(), Some(2));
        assert_eq!(src.kind(), SourceKind::Lexicon);
        assert_eq!(src.word_vector("b").unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn lexicon_with_header() {
        let src = load_lexicon("2 3\na 1 2 3\nb 4 5 6\n".as_bytes(), "w2v").unwrap();
        assert_eq!(src.dim(), 3);
        assert_eq!(src.len(), Some(2));
    }

    #[test]
    fn lexicon_dimension_error_names_line() {
        let err = load_lexicon("a 1 2 3\nb 1 2\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn lexicon_rejects_garbage() {
        assert!(matches!(
            load_lexicon("a 1 x\n".as_bytes(), "x"),
            Err(EmbeddingError::NonNumeric { line: 1, .. })
        ));
        assert!(matches!(load_lexicon("".as_bytes(), "x"), Err(EmbeddingError::Empty)));
        assert!(matches!(load_lexicon("3 2\n".as_bytes(), "x"), Err(EmbeddingError::Empty)));
    }

    #[test]
    fn lexicon_duplicates_keep_first() {
        let src = load_lexicon("a 1 0\na 0 1\n".as_bytes(), "x").unwrap();
        assert_eq!(src.duplicate_words(), 1);
        assert_eq!(src.word_vector("a").unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn lexicon_values_are_bit_exact() {
        let text = "w 0.1 -3.0000000000000004 1e-300\n";
        let src = load_lexicon(text.as_bytes(), "x").unwrap();
        let got = src.word_vector("w").unwrap();
        assert_eq!(got.as_slice(), &[0.1, -3.0000000000000004, 1e-300]);
    }

    #[test]
    fn token_table() {
        let src = load_token_table("64\t0.1 0.2\n67\t0.3 0.4\n".as_bytes(), "bert").unwrap();
        assert_eq!(src.dim(), 2);
        assert_eq!(src.len(), Some(2));
        assert_eq!(src.token_vector(64).unwrap().as_slice(), &[0.1, 0.2]);
        assert_eq!(src.token_ids(), vec![64, 67]);
    }

    #[test]
    fn token_table_errors() {
        assert!(matches!(
            load_token_table("64\t0.1 0.2\n64\t0.3 0.4\n".as_bytes(), "x"),
            Err(EmbeddingError::DuplicateToken { line: 2, token_id: 64 })
        ));
        assert!(matches!(load_token_table("".as_bytes(), "x"), Err(EmbeddingError::Empty)));
        assert!(matches!(
            load_token_table("64\t0.1 0.2\n65\t0.3\n".as_bytes(), "x"),
            Err(EmbeddingError::DimensionMismatch { line: 2, .. })
        ));
    }

    fn event(id: TokenId, surface: &str) -> VerbEvent {
        VerbEvent {
            verb_token_id: id,
            clause_id: 1,
            surface: surface.into(),
            agent: None,
            patient: None,
            agent_dropped: false,
            patient_dropped: false,
            agent_token: None,
            patient_token: None,
        }
    }

    #[test]
    fn vector_for_by_kind() {
        let lex = load_lexicon("走 1 0\n".as_bytes(), "glove").unwrap();
        assert!(lex.vector_for(&event(1, "跑")).is_none());
        assert!(lex.vector_for(&event(1, "走")).is_some());

        let tab = load_token_table("64\t0.5 0.25\n".as_bytes(), "bert").unwrap();
        assert_eq!(tab.vector_for(&event(64, "x")).unwrap().as_slice(), &[0.5, 0.25]);
        assert!(tab.vector_for(&event(65, "x")).is_none());

        let base = baseline_source(7, 16).unwrap();
        assert_eq!(base.vector_for(&event(1, "跑")).unwrap().dim(), 16);
    }

    #[test]
    fn baseline_is_deterministic_per_word() {
        let a = baseline_vector(42, "吞", 300);
        let b = baseline_vector(42, "吞", 300);
        assert_eq!(a, b);
        assert_ne!(a, baseline_vector(42, "咀嚼", 300));
        assert_ne!(a, baseline_vector(43, "吞", 300));
    }

    #[test]
    fn baseline_range() {
        for i in 0..10_000 {
            let v = baseline_vector(9, &format!("w{i}"), 4);
            assert!(v.as_slice().iter().all(|c| (-1.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn primitives_match_published_vectors() {
        // FNV-1a reference values.
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
        // SplitMix64 with seed 0.
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(r.next_u64(), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn baseline_vector_is_frozen() {
        let v = baseline_vector(42, "walk", 4);
        assert_eq!(
            v.as_slice(),
            &[0.731184733405108, -0.5587800282589372, -0.6864670521191929, 0.3008509606841909]
        );
        assert_eq!(baseline_vector(42, "walk", 2).as_slice(), &v.as_slice()[..2]);
        assert_ne!(baseline_vector(43, "walk", 4), v);
    }
}
