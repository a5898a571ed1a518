//! The dynamic character-verb usage table.
//!
//! For every character the table keeps the ordered list of verbs predicated
//! of it. The history of a character at event position `t` is the prefix of
//! that list made of events strictly before `t`.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharacterId, ClauseId, Discourse, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleFilter {
    #[default]
    AgentOnly,
    AgentAndPatient,
}

impl std::str::FromStr for RoleFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agent_only" | "agent" => Ok(RoleFilter::AgentOnly),
            "agent_and_patient" | "both" => Ok(RoleFilter::AgentAndPatient),
            other => Err(format!("unknown role filter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryEntry {
    /// Position of the event in `Discourse::events`.
    pub event_index: usize,
    pub verb_token_id: TokenId,
    pub clause_id: ClauseId,
    pub surface: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("candidate range must be positive")]
    NonPositiveRange,
    #[error("event position {position} out of bounds ({len} events)")]
    PositionOutOfBounds { position: usize, len: usize },
}

#[derive(Debug, Clone)]
pub struct UsageTable {
    role_filter: RoleFilter,
    event_clauses: Vec<ClauseId>,
    chains: BTreeMap<CharacterId, Vec<HistoryEntry>>,
}

pub fn build_usage_table(d: &Discourse, role_filter: RoleFilter) -> UsageTable {
    let mut chains: BTreeMap<CharacterId, Vec<HistoryEntry>> = BTreeMap::new();
    for (i, e) in d.events.iter().enumerate() {
        let mut push = |c: CharacterId| {
            let chain = chains.entry(c).or_default();
            if chain.last().map(|h| h.event_index) != Some(i) {
                chain.push(HistoryEntry {
                    event_index: i,
                    verb_token_id: e.verb_token_id,
                    clause_id: e.clause_id,
                    surface: e.surface.clone(),
                });
            }
        };
        if let Some(c) = e.agent {
            push(c);
        }
        if role_filter == RoleFilter::AgentAndPatient {
            if let Some(c) = e.patient {
                push(c);
            }
        }
    }
    UsageTable {
        role_filter,
        event_clauses: d.events.iter().map(|e| e.clause_id).collect(),
        chains,
    }
}

impl UsageTable {
    pub fn role_filter(&self) -> RoleFilter {
        self.role_filter
    }

    pub fn event_count(&self) -> usize {
        self.event_clauses.len()
    }

    pub fn clause_at(&self, position: usize) -> Option<ClauseId> {
        self.event_clauses.get(position).copied()
    }

    /// Characters with at least one verb anywhere in the discourse.
    pub fn characters(&self) -> impl Iterator<Item = CharacterId> + '_ {
        self.chains.keys().copied()
    }

    /// Verbs of `c` strictly before event position `t`. `t` may equal the
    /// event count, giving the full chain.
    pub fn history(&self, c: CharacterId, t: usize) -> &[HistoryEntry] {
        match self.chains.get(&c) {
            Some(chain) => {
                let end = chain.partition_point(|h| h.event_index < t);
                &chain[..end]
            }
            None => &[],
        }
    }

    /// Characters eligible to compete at `t`.
    ///
    /// Without a range every character with a non-empty history qualifies.
    /// With range `n` a character qualifies only if one of its history verbs
    /// lies in a clause no more than `n` clauses before the current one.
    pub fn candidates(&self, t: usize, range: Option<u32>) -> Result<Vec<CharacterId>, ChainError> {
        let clause = self.clause_at(t).ok_or(ChainError::PositionOutOfBounds {
            position: t,
            len: self.event_count(),
        })?;
        let floor = match range {
            Some(0) => return Err(ChainError::NonPositiveRange),
            Some(n) => clause.saturating_sub(n),
            None => 0,
        };
        Ok(self
            .chains
            .keys()
            .copied()
            .filter(|&c| self.history(c, t).last().is_some_and(|h| h.clause_id >= floor))
            .collect())
    }

    /// Dumps every character's full chain as TSV.
    pub fn write_tsv<W: Write>(&self, d: &Discourse, mut out: W) -> io::Result<()> {
        writeln!(out, "character\tverb_count\tprev_verbs")?;
        for (c, chain) in &self.chains {
            let verbs: Vec<String> = chain
                .iter()
                .map(|h| format!("{}({})", h.surface, h.verb_token_id))
                .collect();
            writeln!(out, "{}\t{}\t{}", d.character_name(*c), chain.len(), verbs.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_annotations;

    const THREE: &str = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                         1\t1\tv1\tV\tch1\t-\n\
                         2\t2\tv2\tV\tch2\tch1\n\
                         3\t3\tv3\tV\tch1!\t-\n";

    #[test]
    fn history_excludes_current_verb() {
        let d = parse_annotations(THREE.as_bytes()).unwrap();
        let t = build_usage_table(&d, RoleFilter::AgentOnly);
        let a = t.history(CharacterId(1), 2);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].surface, "v1");
        assert!(t.history(CharacterId(2), 0).is_empty());
        assert_eq!(t.history(CharacterId(1), 3).len(), 2);
    }

    #[test]
    fn patients_only_with_filter() {
        let d = parse_annotations(THREE.as_bytes()).unwrap();
        let agent = build_usage_table(&d, RoleFilter::AgentOnly);
        let both = build_usage_table(&d, RoleFilter::AgentAndPatient);
        assert_eq!(agent.history(CharacterId(1), 3).len(), 2);
        assert_eq!(both.history(CharacterId(1), 3).len(), 3);
    }

    #[test]
    fn same_event_counted_once() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\twash\tV\tch1\tch1\n";
        let d = parse_annotations(text.as_bytes()).unwrap();
        let t = build_usage_table(&d, RoleFilter::AgentAndPatient);
        assert_eq!(t.history(CharacterId(1), 1).len(), 1);
    }

    #[test]
    fn candidates_without_range() {
        let d = parse_annotations(THREE.as_bytes()).unwrap();
        let t = build_usage_table(&d, RoleFilter::AgentOnly);
        assert_eq!(t.candidates(1, None).unwrap(), vec![CharacterId(1)]);
        assert_eq!(t.candidates(0, None).unwrap(), vec![]);
        assert_eq!(t.candidates(2, None).unwrap(), vec![CharacterId(1), CharacterId(2)]);
    }

    #[test]
    fn range_threshold() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t5\tv1\tV\tch1\t-\n\
                    2\t20\tv2\tV\tch2\t-\n";
        let d = parse_annotations(text.as_bytes()).unwrap();
        let t = build_usage_table(&d, RoleFilter::AgentOnly);
        assert_eq!(t.candidates(1, Some(10)).unwrap(), vec![]);
        assert_eq!(t.candidates(1, Some(15)).unwrap(), vec![CharacterId(1)]);
        assert_eq!(t.candidates(1, Some(20)).unwrap(), vec![CharacterId(1)]);
        assert_eq!(t.candidates(1, Some(0)), Err(ChainError::NonPositiveRange));
        assert!(matches!(
            t.candidates(5, None),
            Err(ChainError::PositionOutOfBounds { position: 5, len: 2 })
        ));
    }

    #[test]
    fn tsv_dump() {
        let d = parse_annotations(THREE.as_bytes()).unwrap();
        let t = build_usage_table(&d, RoleFilter::AgentOnly);
        let mut buf = Vec::new();
        t.write_tsv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "character\tverb_count\tprev_verbs\nch1\t2\tv1(1) v3(3)\nch2\t1\tv2(2)\n"
        );
    }
}
