//! History-verb to current-verb relevance per character.
//!
//! Each history verb contributes its cosine similarity with the current
//! verb, scaled by `1 / (d + 1)` where `d` is the clause distance. The
//! unweighted variant drops the scaling. Sums are raw, not averaged.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::chains::UsageTable;
use crate::corpus::{CharacterId, ClauseId, Discourse};
use crate::embeddings::{cosine, EmbeddingError, EmbeddingSource, Vector};

/// Clause-distance weight, `1 / (|j - k| + 1)`.
pub fn clause_weight(j: ClauseId, k: ClauseId) -> f64 {
    1.0 / (f64::from(j.abs_diff(k)) + 1.0)
}

/// Neumaier's compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

fn relevance_sum(
    history: &[(&Vector, ClauseId)],
    current: (&Vector, ClauseId),
    weighted: bool,
) -> Result<f64, EmbeddingError> {
    let mut sum = CompensatedSum::default();
    for (v, clause) in history {
        let w = if weighted { clause_weight(*clause, current.1) } else { 1.0 };
        sum.add(w * cosine(v, current.0)?);
    }
    Ok(sum.value())
}

pub fn weighted_relevance(
    history: &[(&Vector, ClauseId)],
    current: (&Vector, ClauseId),
) -> Result<f64, EmbeddingError> {
    relevance_sum(history, current, true)
}

pub fn unweighted_relevance(
    history: &[(&Vector, ClauseId)],
    current: (&Vector, ClauseId),
) -> Result<f64, EmbeddingError> {
    relevance_sum(history, current, false)
}

/// What to do with history verbs the source does not cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Leave them out of the sum and count them.
    #[default]
    Skip,
}

impl std::str::FromStr for OovPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skip" => Ok(OovPolicy::Skip),
            other => Err(format!("unknown OOV policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterRelevance {
    pub weighted: f64,
    pub unweighted: f64,
    pub used_history_count: usize,
    pub skipped_oov_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceProfile {
    pub position: usize,
    /// When false the profile holds no characters.
    pub current_verb_covered: bool,
    pub characters: BTreeMap<CharacterId, CharacterRelevance>,
}

/// Vectors of every event under one source, resolved once.
///
/// Zero-norm vectors cannot take part in a cosine and are treated as
/// uncovered.
#[derive(Debug, Clone)]
pub struct EventVectors {
    vectors: Vec<Option<Vector>>,
    zero_norm: usize,
}

impl EventVectors {
    pub fn new(d: &Discourse, source: &EmbeddingSource) -> Self {
        let mut zero_norm = 0;
        let vectors = d
            .events
            .iter()
            .map(|e| {
                let v = source.vector_for(e)?.into_owned();
                if v.norm() == 0.0 {
                    zero_norm += 1;
                    None
                } else {
                    Some(v)
                }
            })
            .collect();
        EventVectors { vectors, zero_norm }
    }

    pub fn get(&self, position: usize) -> Option<&Vector> {
        self.vectors.get(position).and_then(Option::as_ref)
    }

    pub fn covered(&self, position: usize) -> bool {
        self.get(position).is_some()
    }

    pub fn uncovered_count(&self) -> usize {
        self.vectors.iter().filter(|v| v.is_none()).count()
    }

    pub fn zero_norm_count(&self) -> usize {
        self.zero_norm
    }

    /// Relevance of every character with history at `t`. History verbs in
    /// clauses below `min_clause` are ignored entirely.
    pub fn profile(&self, table: &UsageTable, t: usize, min_clause: Option<ClauseId>) -> RelevanceProfile {
        let mut profile = RelevanceProfile {
            position: t,
            current_verb_covered: false,
            characters: BTreeMap::new(),
        };
        let (Some(current), Some(clause)) = (self.get(t), table.clause_at(t)) else {
            return profile;
        };
        profile.current_verb_covered = true;
        let floor = min_clause.unwrap_or(0);
        for c in table.characters() {
            let history = table.history(c, t);
            let start = history.partition_point(|h| h.clause_id < floor);
            let history = &history[start..];
            if history.is_empty() {
                continue;
            }
            let mut weighted = CompensatedSum::default();
            let mut unweighted = CompensatedSum::default();
            let mut used = 0;
            for h in history {
                let Some(v) = self.get(h.event_index) else {
                    continue;
                };
                let cos = cosine(v, current).expect("event vectors share dimension and are nonzero");
                weighted.add(clause_weight(h.clause_id, clause) * cos);
                unweighted.add(cos);
                used += 1;
            }
            profile.characters.insert(
                c,
                CharacterRelevance {
                    weighted: weighted.value(),
                    unweighted: unweighted.value(),
                    used_history_count: used,
                    skipped_oov_count: history.len() - used,
                },
            );
        }
        profile
    }
}

/// Relevance profile at one event position under a single source.
pub fn relevance_profile(
    d: &Discourse,
    table: &UsageTable,
    source: &EmbeddingSource,
    t: usize,
    _policy: OovPolicy,
) -> RelevanceProfile {
    EventVectors::new(d, source).profile(table, t, None)
}

/// Writes `verb_id, character, weighted, unweighted, used, skipped` rows.
pub fn write_relevance_tsv<W: Write>(
    d: &Discourse,
    profiles: &[RelevanceProfile],
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "verb_id\tcharacter\tweighted\tunweighted\tused\tskipped")?;
    for p in profiles {
        let verb_id = d.events[p.position].verb_token_id;
        for (c, r) in &p.characters {
            writeln!(
                out,
                "{verb_id}\t{}\t{}\t{}\t{}\t{}",
                d.character_name(*c),
                r.weighted,
                r.unweighted,
                r.used_history_count,
                r.skipped_oov_count
            )?;
        }
    }
    Ok(())
}
