//! Salience of the correct character among competing candidates.
//!
//! For correct character `k` and candidates `i = 1..n` (including `k`):
//!
//! ```text
//! S(k) = sum_i (R(k) + 1) / (R(i) + 1)  /  (n + 1)
//! ```
//!
//! so the self term contributes exactly 1 and equal relevance gives
//! `n / (n + 1)`. With `exclude_self` the sum runs over the other
//! candidates only and the divisor is their count plus one.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chains::UsageTable;
use crate::corpus::{CharacterId, Discourse, TokenId};
use crate::embeddings::EmbeddingSource;
use crate::relevance::{CharacterRelevance, CompensatedSum, EventVectors, RelevanceProfile};

/// Guard on `R(i) + 1`.
pub const DEGENERATE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Weighted,
    Unweighted,
}

impl Weighting {
    pub const ALL: [Weighting; 2] = [Weighting::Weighted, Weighting::Unweighted];

    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Weighted => "weighted",
            Weighting::Unweighted => "unweighted",
        }
    }

    pub fn pick(self, r: &CharacterRelevance) -> f64 {
        match self {
            Weighting::Weighted => r.weighted,
            Weighting::Unweighted => r.unweighted,
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "weighted" => Ok(Weighting::Weighted),
            "unweighted" => Ok(Weighting::Unweighted),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

/// Candidate range: every character with history, or only those active
/// within the last `n` clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RangeSpec {
    All,
    Clauses(u32),
}

impl RangeSpec {
    pub fn limit(self) -> Option<u32> {
        match self {
            RangeSpec::All => None,
            RangeSpec::Clauses(n) => Some(n),
        }
    }
}

impl fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RangeSpec::All => f.write_str("all"),
            RangeSpec::Clauses(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(RangeSpec::All);
        }
        match s.parse::<u32>() {
            Ok(n) if n > 0 => Ok(RangeSpec::Clauses(n)),
            _ => Err(format!("range must be `all` or a positive integer, got {s:?}")),
        }
    }
}

impl Serialize for RangeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SalienceError {
    #[error("character {0} is not a candidate")]
    NotACandidate(CharacterId),
    #[error("relevance of {character} is {relevance}, too close to -1")]
    Degenerate { character: CharacterId, relevance: f64 },
}

/// Salience of `k` among `candidates`, each given with its relevance.
pub fn salience(
    candidates: &[(CharacterId, f64)],
    k: CharacterId,
    exclude_self: bool,
) -> Result<f64, SalienceError> {
    let rk = candidates
        .iter()
        .find(|(c, _)| *c == k)
        .map(|(_, r)| *r)
        .ok_or(SalienceError::NotACandidate(k))?;
    if let Some(&(character, relevance)) = candidates.iter().find(|(_, r)| r + 1.0 <= DEGENERATE_EPSILON) {
        return Err(SalienceError::Degenerate { character, relevance });
    }
    let mut sum = CompensatedSum::default();
    let mut terms = 0usize;
    for &(c, r) in candidates {
        if c == k {
            if exclude_self {
                continue;
            }
            sum.add(1.0);
        } else {
            sum.add((rk + 1.0) / (r + 1.0));
        }
        terms += 1;
    }
    Ok(sum.value() / (terms as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentReason {
    CurrentVerbUncovered,
    NotACandidate,
    NoCoveredHistory,
    Degenerate,
}

impl AbsentReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbsentReason::CurrentVerbUncovered => "current_verb_uncovered",
            AbsentReason::NotACandidate => "not_a_candidate",
            AbsentReason::NoCoveredHistory => "no_covered_history",
            AbsentReason::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for AbsentReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SalienceOptions {
    /// Sum over the other candidates only.
    pub eq4_exclude_self: bool,
    /// Ranged cells also drop history verbs outside the range from the sums.
    pub range_truncates_history: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CellKey {
    pub source: String,
    pub weighting: Weighting,
    pub range: RangeSpec,
}

impl CellKey {
    pub fn column(&self) -> String {
        format!("{}_{}_{}", self.source, self.weighting, self.range)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalienceCell {
    pub salience: Result<f64, AbsentReason>,
    pub candidate_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalienceRecord {
    pub event_index: usize,
    pub verb_token_id: TokenId,
    pub correct_character: CharacterId,
    pub pro_drop: bool,
    /// Parallel to `SalienceDataset::cells`.
    pub cells: Vec<SalienceCell>,
}

impl SalienceRecord {
    pub fn has_value(&self) -> bool {
        self.cells.iter().any(|c| c.salience.is_ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SalienceDataset {
    pub cells: Vec<CellKey>,
    pub records: Vec<SalienceRecord>,
}

impl SalienceDataset {
    /// `(salience, pro_drop)` pairs of one cell, absent values left out.
    pub fn column(&self, cell: usize) -> Vec<(f64, bool)> {
        self.records
            .iter()
            .filter_map(|r| r.cells[cell].salience.ok().map(|s| (s, r.pro_drop)))
            .collect()
    }

    pub fn absent_count(&self, cell: usize, reason: Option<AbsentReason>) -> usize {
        self.records
            .iter()
            .filter(|r| match r.cells[cell].salience {
                Ok(_) => false,
                Err(why) => reason.is_none_or(|want| want == why),
            })
            .count()
    }

    /// Writes records that carry at least one salience value. Absent cells
    /// are left empty and their `_reason` column filled.
    pub fn write_csv<W: Write>(&self, d: &Discourse, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "verb_id".to_string(),
            "correct_character".to_string(),
            "pro_drop".to_string(),
        ];
        for key in &self.cells {
            header.push(key.column());
            header.push(format!("{}_reason", key.column()));
        }
        w.write_record(&header)?;
        for r in self.records.iter().filter(|r| r.has_value()) {
            let mut row = vec![
                r.verb_token_id.to_string(),
                d.character_name(r.correct_character),
                r.pro_drop.to_string(),
            ];
            for cell in &r.cells {
                match cell.salience {
                    Ok(s) => {
                        row.push(s.to_string());
                        row.push(String::new());
                    }
                    Err(why) => {
                        row.push(String::new());
                        row.push(why.to_string());
                    }
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Grid of cells to compute.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub weightings: Vec<Weighting>,
    pub ranges: Vec<RangeSpec>,
    pub options: SalienceOptions,
}

fn cell_for(
    profile: &RelevanceProfile,
    candidates: &[CharacterId],
    k: CharacterId,
    weighting: Weighting,
    exclude_self: bool,
) -> SalienceCell {
    let candidate_count = candidates.len();
    let absent = |why| SalienceCell {
        salience: Err(why),
        candidate_count,
    };
    if !candidates.contains(&k) {
        return absent(AbsentReason::NotACandidate);
    }
    match profile.characters.get(&k) {
        Some(r) if r.used_history_count > 0 => {}
        _ => return absent(AbsentReason::NoCoveredHistory),
    }
    let values: Vec<(CharacterId, f64)> = candidates
        .iter()
        .map(|c| (*c, profile.characters.get(c).map_or(0.0, |r| weighting.pick(r))))
        .collect();
    match salience(&values, k, exclude_self) {
        Ok(s) => SalienceCell {
            salience: Ok(s),
            candidate_count,
        },
        Err(SalienceError::NotACandidate(_)) => absent(AbsentReason::NotACandidate),
        Err(SalienceError::Degenerate { .. }) => absent(AbsentReason::Degenerate),
    }
}

/// One record per verb event with a resolved agent; one cell per
/// (source, weighting, range), in that nesting order.
pub fn salience_dataset(
    d: &Discourse,
    table: &UsageTable,
    sources: &[EmbeddingSource],
    spec: &DatasetSpec,
) -> SalienceDataset {
    let mut cells = Vec::new();
    for s in sources {
        for &weighting in &spec.weightings {
            for &range in &spec.ranges {
                cells.push(CellKey {
                    source: s.name().to_string(),
                    weighting,
                    range,
                });
            }
        }
    }

    let vectors: Vec<EventVectors> = sources.iter().map(|s| EventVectors::new(d, s)).collect();
    let mut records = Vec::new();
    for (t, e) in d.events.iter().enumerate() {
        let Some(k) = e.agent else {
            continue;
        };
        let clause = e.clause_id;
        let candidate_sets: Vec<Vec<CharacterId>> = spec
            .ranges
            .iter()
            .map(|r| table.candidates(t, r.limit()).expect("valid position and positive range"))
            .collect();
        let mut row = Vec::with_capacity(cells.len());
        for ev in &vectors {
            let full = ev.profile(table, t, None);
            for &weighting in &spec.weightings {
                for (range, candidates) in spec.ranges.iter().zip(&candidate_sets) {
                    if !full.current_verb_covered {
                        row.push(SalienceCell {
                            salience: Err(AbsentReason::CurrentVerbUncovered),
                            candidate_count: candidates.len(),
                        });
                        continue;
                    }
                    let truncated;
                    let profile = match range.limit() {
                        Some(n) if spec.options.range_truncates_history => {
                            truncated = ev.profile(table, t, Some(clause.saturating_sub(n)));
                            &truncated
                        }
                        _ => &full,
                    };
                    row.push(cell_for(
                        profile,
                        candidates,
                        k,
                        weighting,
                        spec.options.eq4_exclude_self,
                    ));
                }
            }
        }
        records.push(SalienceRecord {
            event_index: t,
            verb_token_id: e.verb_token_id,
            correct_character: k,
            pro_drop: e.agent_dropped,
            cells: row,
        });
    }
    SalienceDataset { cells, records }
}
