//! Annotated discourse: tokens with clause ids, verb events and character labels.
//!
//! The on-disk form is a per-token TSV with the header
//!
//! ```text
//! token_id  clause_id  surface  role  agent  patient
//! ```
//!
//! with tab-separated columns.
//!
//! `role` is one of `S`, `V`, `O` or `-`. On verb rows the `agent` and
//! `patient` columns hold a token id (overt argument), `chNN` (a character
//! labelled directly), `chNN!` (a dropped argument resolved to character NN)
//! or `-`. On all other rows a `chNN` label in either column marks the token
//! itself as a mention of that character. Lines starting with `#` are
//! comments. A label may carry a name suffix, e.g. `ch4_prince`.
//!
//! A token fills at most one grammatical role.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::Serialize;
use thiserror::Error;

pub type TokenId = u32;
pub type ClauseId = u32;

pub const HEADER: [&str; 6] = ["token_id", "clause_id", "surface", "role", "agent", "patient"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CharacterId(pub u16);

impl fmt::Display for CharacterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Subject,
    Verb,
    Object,
    None,
}

impl Role {
    fn from_code(code: &str) -> Option<Role> {
        match code {
            "S" => Some(Role::Subject),
            "V" => Some(Role::Verb),
            "O" => Some(Role::Object),
            "-" => Some(Role::None),
            _ => None,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Role::Subject => "S",
            Role::Verb => "V",
            Role::Object => "O",
            Role::None => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub token_id: TokenId,
    pub clause_id: ClauseId,
    pub surface: String,
    pub role: Role,
    /// The character this token itself denotes, if any.
    pub character: Option<CharacterId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CharacterLabel {
    pub id: CharacterId,
    /// Full tag, e.g. `ch4_prince`; bare `ch4` when no name was ever given.
    pub name: String,
}

/// One main-verb occurrence together with its resolved arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbEvent {
    pub verb_token_id: TokenId,
    pub clause_id: ClauseId,
    pub surface: String,
    pub agent: Option<CharacterId>,
    pub patient: Option<CharacterId>,
    pub agent_dropped: bool,
    pub patient_dropped: bool,
    /// Overt argument token, when the annotation points at one.
    pub agent_token: Option<TokenId>,
    pub patient_token: Option<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discourse {
    pub tokens: Vec<Token>,
    /// Sorted by id.
    pub characters: Vec<CharacterLabel>,
    /// Sorted by `verb_token_id`.
    pub events: Vec<VerbEvent>,
    pub clause_count: usize,
    pub word_count: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("read error: {0}")]
    Io(#[from] io::Error),
    #[error("missing header row")]
    MissingHeader,
    #[error("line {line}: expected header `{}`, found {found:?}", HEADER.join("\\t"))]
    BadHeader { line: usize, found: String },
    #[error("line {line}: expected 6 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: invalid {field} {value:?}")]
    InvalidField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate token_id {token_id}")]
    DuplicateToken { line: usize, token_id: TokenId },
    #[error("line {line}: token_id {token_id} is not greater than previous {previous}")]
    NonIncreasingToken {
        line: usize,
        token_id: TokenId,
        previous: TokenId,
    },
    #[error("line {line}: clause_id {clause_id} of token {token_id} decreases from {previous}")]
    NonMonotoneClause {
        line: usize,
        token_id: TokenId,
        clause_id: ClauseId,
        previous: ClauseId,
    },
    #[error("line {line}: {column} refers to token {target}, which does not exist")]
    DanglingReference {
        line: usize,
        column: &'static str,
        target: TokenId,
    },
    #[error("line {line}: undeclared character label {label:?}")]
    UndeclaredCharacter { line: usize, label: String },
    #[error("line {line}: character {id} carries conflicting names {first:?} and {second:?}")]
    ConflictingCharacterName {
        line: usize,
        id: CharacterId,
        first: String,
        second: String,
    },
    #[error("line {line}: drop marker {label:?} on a non-verb row")]
    DropOnNonVerb { line: usize, label: String },
    #[error("line {line}: token carries two different character labels")]
    ConflictingTokenCharacter { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Empty,
    Token(TokenId),
    Character { id: CharacterId, name: Option<String>, dropped: bool },
}

fn parse_label(text: &str) -> Option<(CharacterId, Option<String>, bool)> {
    let (body, dropped) = match text.strip_suffix('!') {
        Some(b) => (b, true),
        None => (text, false),
    };
    let rest = body.strip_prefix("ch")?;
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let (digits, suffix) = rest.split_at(digits_end);
    if digits.is_empty() {
        return None;
    }
    let id: u16 = digits.parse().ok().filter(|&n| n > 0)?;
    let name = match suffix {
        "" => None,
        s if s.len() > 1 && s.starts_with('_') && !s.contains(char::is_whitespace) => {
            Some(body.to_string())
        }
        _ => return None,
    };
    Some((CharacterId(id), name, dropped))
}

fn parse_cell(text: &str, line: usize) -> Result<Cell, CorpusError> {
    if text == "-" {
        return Ok(Cell::Empty);
    }
    if text.bytes().all(|b| b.is_ascii_digit()) && !text.is_empty() {
        let id = text.parse().map_err(|_| CorpusError::InvalidField {
            line,
            field: "token reference",
            value: text.to_string(),
        })?;
        return Ok(Cell::Token(id));
    }
    match parse_label(text) {
        Some((id, name, dropped)) => Ok(Cell::Character { id, name, dropped }),
        None => Err(CorpusError::UndeclaredCharacter {
            line,
            label: text.to_string(),
        }),
    }
}

struct RawRow {
    line: usize,
    token: Token,
    agent: Cell,
    patient: Cell,
}

#[derive(Default)]
struct CharacterRegistry {
    names: BTreeMap<CharacterId, Option<String>>,
}

impl CharacterRegistry {
    fn declare(&mut self, id: CharacterId, name: Option<&String>, line: usize) -> Result<(), CorpusError> {
        let slot = self.names.entry(id).or_insert(None);
        match (slot.as_ref(), name) {
            (Some(first), Some(second)) if first != second => Err(CorpusError::ConflictingCharacterName {
                line,
                id,
                first: first.clone(),
                second: second.clone(),
            }),
            (None, Some(n)) => {
                *slot = Some(n.clone());
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn into_labels(self) -> Vec<CharacterLabel> {
        self.names
            .into_iter()
            .map(|(id, name)| CharacterLabel {
                id,
                name: name.unwrap_or_else(|| id.to_string()),
            })
            .collect()
    }
}

/// Parses an annotation TSV stream into a [`Discourse`].
pub fn parse_annotations<R: BufRead>(reader: R) -> Result<Discourse, CorpusError> {
    let mut rows: Vec<RawRow> = Vec::new();
    let mut seen_header = false;
    let mut seen_ids = HashSet::new();
    let mut registry = CharacterRegistry::default();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if !seen_header {
            if cols != HEADER {
                return Err(CorpusError::BadHeader {
                    line: line_no,
                    found: line.to_string(),
                });
            }
            seen_header = true;
            continue;
        }
        if cols.len() != HEADER.len() {
            return Err(CorpusError::ColumnCount {
                line: line_no,
                found: cols.len(),
            });
        }

        let token_id: TokenId = cols[0]
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CorpusError::InvalidField {
                line: line_no,
                field: "token_id",
                value: cols[0].to_string(),
            })?;
        let clause_id: ClauseId = cols[1]
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CorpusError::InvalidField {
                line: line_no,
                field: "clause_id",
                value: cols[1].to_string(),
            })?;
        let role = Role::from_code(cols[3]).ok_or_else(|| CorpusError::InvalidField {
            line: line_no,
            field: "role",
            value: cols[3].to_string(),
        })?;

        if !seen_ids.insert(token_id) {
            return Err(CorpusError::DuplicateToken {
                line: line_no,
                token_id,
            });
        }
        if let Some(prev) = rows.last() {
            if token_id <= prev.token.token_id {
                return Err(CorpusError::NonIncreasingToken {
                    line: line_no,
                    token_id,
                    previous: prev.token.token_id,
                });
            }
            if clause_id < prev.token.clause_id {
                return Err(CorpusError::NonMonotoneClause {
                    line: line_no,
                    token_id,
                    clause_id,
                    previous: prev.token.clause_id,
                });
            }
        }

        let agent = parse_cell(cols[4], line_no)?;
        let patient = parse_cell(cols[5], line_no)?;
        for cell in [&agent, &patient] {
            if let Cell::Character { id, name, dropped } = cell {
                if *dropped && role != Role::Verb {
                    return Err(CorpusError::DropOnNonVerb {
                        line: line_no,
                        label: cols[4].to_string(),
                    });
                }
                registry.declare(*id, name.as_ref(), line_no)?;
            }
        }

        let mut token = Token {
            token_id,
            clause_id,
            surface: cols[2].to_string(),
            role,
            character: None,
        };
        if role != Role::Verb {
            let mut own = None;
            for cell in [&agent, &patient] {
                match cell {
                    Cell::Empty => {}
                    Cell::Character { id, .. } => {
                        if own.is_some_and(|o| o != *id) {
                            return Err(CorpusError::ConflictingTokenCharacter { line: line_no });
                        }
                        own = Some(*id);
                    }
                    Cell::Token(_) => {
                        return Err(CorpusError::InvalidField {
                            line: line_no,
                            field: "token reference on a non-verb row",
                            value: line.to_string(),
                        })
                    }
                }
            }
            token.character = own;
        }
        rows.push(RawRow {
            line: line_no,
            token,
            agent,
            patient,
        });
    }
    if !seen_header {
        return Err(CorpusError::MissingHeader);
    }

    let index: HashMap<TokenId, usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.token.token_id, i))
        .collect();

    let resolve = |cell: &Cell, line: usize, column: &'static str| -> Result<(Option<CharacterId>, bool, Option<TokenId>), CorpusError> {
        Ok(match cell {
            Cell::Empty => (None, false, None),
            Cell::Character { id, dropped, .. } => (Some(*id), *dropped, None),
            Cell::Token(target) => {
                let pos = index.get(target).ok_or(CorpusError::DanglingReference {
                    line,
                    column,
                    target: *target,
                })?;
                (rows[*pos].token.character, false, Some(*target))
            }
        })
    };

    let mut events = Vec::new();
    for row in rows.iter().filter(|r| r.token.role == Role::Verb) {
        let (agent, agent_dropped, agent_token) = resolve(&row.agent, row.line, "agent")?;
        let (patient, patient_dropped, patient_token) = resolve(&row.patient, row.line, "patient")?;
        events.push(VerbEvent {
            verb_token_id: row.token.token_id,
            clause_id: row.token.clause_id,
            surface: row.token.surface.clone(),
            agent,
            patient,
            agent_dropped,
            patient_dropped,
            agent_token,
            patient_token,
        });
    }

    let tokens: Vec<Token> = rows.into_iter().map(|r| r.token).collect();
    let clause_count = count_clauses(&tokens);
    let word_count = tokens.len();
    Ok(Discourse {
        tokens,
        characters: registry.into_labels(),
        events,
        clause_count,
        word_count,
    })
}

fn count_clauses(tokens: &[Token]) -> usize {
    tokens.iter().map(|t| t.clause_id).collect::<HashSet<_>>().len()
}

impl Discourse {
    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.tokens
            .binary_search_by_key(&id, |t| t.token_id)
            .ok()
            .map(|i| &self.tokens[i])
    }

    pub fn character(&self, id: CharacterId) -> Option<&CharacterLabel> {
        self.characters
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.characters[i])
    }

    /// Name of a character for reports; falls back to `chNN`.
    pub fn character_name(&self, id: CharacterId) -> String {
        self.character(id)
            .map(|c| c.name.clone())
            .unwrap_or_else(|| id.to_string())
    }

    /// Writes the discourse back in annotation TSV form.
    pub fn write_annotations<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", HEADER.join("\t"))?;
        let events: HashMap<TokenId, &VerbEvent> =
            self.events.iter().map(|e| (e.verb_token_id, e)).collect();
        let label = |id: CharacterId, dropped: bool| {
            let mut s = self.character_name(id);
            if dropped {
                s.push('!');
            }
            s
        };
        let arg = |who: Option<CharacterId>, dropped: bool, tok: Option<TokenId>| match (who, dropped, tok) {
            (Some(c), true, _) => label(c, true),
            (_, _, Some(t)) => t.to_string(),
            (Some(c), false, None) => label(c, false),
            (None, _, None) => "-".to_string(),
        };
        for t in &self.tokens {
            let (agent, patient) = match events.get(&t.token_id) {
                Some(e) if t.role == Role::Verb => (
                    arg(e.agent, e.agent_dropped, e.agent_token),
                    arg(e.patient, e.patient_dropped, e.patient_token),
                ),
                _ => (
                    t.character.map_or_else(|| "-".to_string(), |c| label(c, false)),
                    "-".to_string(),
                ),
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                t.token_id,
                t.clause_id,
                t.surface,
                t.role.code(),
                agent,
                patient
            )?;
        }
        Ok(())
    }

    pub fn to_annotation_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_annotations(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("annotation output is UTF-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "at", rename_all = "lowercase")]
pub enum Location {
    Token(TokenId),
    Event(usize),
    Character(CharacterId),
    Discourse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn error_count(&self) -> usize {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .count()
    }

    fn error(&mut self, location: Location, message: String) {
        self.findings.push(Finding {
            severity: Severity::Error,
            location,
            message,
        });
    }
}

/// Checks every structural invariant of a discourse. Violations are reported,
/// never raised.
pub fn validate(d: &Discourse) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut prev: Option<&Token> = None;
    for t in &d.tokens {
        if t.token_id == 0 || t.clause_id == 0 {
            report.error(
                Location::Token(t.token_id),
                "token_id and clause_id must be positive".into(),
            );
        }
        if let Some(p) = prev {
            if t.token_id <= p.token_id {
                report.error(
                    Location::Token(t.token_id),
                    format!("token_id {} does not follow {}", t.token_id, p.token_id),
                );
            }
            if t.clause_id < p.clause_id {
                report.error(
                    Location::Token(t.token_id),
                    format!(
                        "clause_id {} of token {} decreases from {}",
                        t.clause_id, t.token_id, p.clause_id
                    ),
                );
            }
        }
        if let Some(c) = t.character {
            if d.character(c).is_none() {
                report.error(
                    Location::Token(t.token_id),
                    format!("token {} refers to undeclared character {c}", t.token_id),
                );
            }
        }
        prev = Some(t);
    }

    for pair in d.characters.windows(2) {
        if pair[0].id >= pair[1].id {
            report.error(
                Location::Character(pair[1].id),
                format!("character {} declared twice or out of order", pair[1].id),
            );
        }
    }

    for (i, e) in d.events.iter().enumerate() {
        let at = Location::Event(i);
        if i > 0 && e.verb_token_id <= d.events[i - 1].verb_token_id {
            report.error(at.clone(), format!("event for token {} is out of order", e.verb_token_id));
        }
        match d.token(e.verb_token_id) {
            None => report.error(
                at.clone(),
                format!("verb_token_id {} does not exist", e.verb_token_id),
            ),
            Some(t) => {
                if t.role != Role::Verb {
                    report.error(at.clone(), format!("token {} is not a verb", t.token_id));
                }
                if t.clause_id != e.clause_id {
                    report.error(
                        at.clone(),
                        format!(
                            "event clause {} differs from token clause {}",
                            e.clause_id, t.clause_id
                        ),
                    );
                }
            }
        }
        for (role, who, dropped, tok) in [
            ("agent", e.agent, e.agent_dropped, e.agent_token),
            ("patient", e.patient, e.patient_dropped, e.patient_token),
        ] {
            if dropped && who.is_none() {
                report.error(at.clone(), format!("dropped {role} is not resolved to a character"));
            }
            if let Some(c) = who {
                if d.character(c).is_none() {
                    report.error(at.clone(), format!("{role} {c} is undeclared"));
                }
            }
            if let Some(t) = tok {
                match d.token(t) {
                    None => report.error(at.clone(), format!("{role} token {t} does not exist")),
                    Some(target) if !dropped && target.character != who => report.error(
                        at.clone(),
                        format!("{role} disagrees with the character of token {t}"),
                    ),
                    _ => {}
                }
            }
        }
    }

    let verb_tokens = d.tokens.iter().filter(|t| t.role == Role::Verb).count();
    if verb_tokens != d.events.len() {
        report.error(
            Location::Discourse,
            format!("{verb_tokens} verb tokens but {} events", d.events.len()),
        );
    }
    let clauses = count_clauses(&d.tokens);
    if clauses != d.clause_count {
        report.error(
            Location::Discourse,
            format!("clause_count {} but {clauses} distinct clause ids", d.clause_count),
        );
    }
    if d.word_count != d.tokens.len() {
        report.error(
            Location::Discourse,
            format!("word_count {} but {} tokens", d.word_count, d.tokens.len()),
        );
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CharacterCount {
    pub id: CharacterId,
    pub name: String,
    pub occurrences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusSummary {
    pub clauses: usize,
    pub words: usize,
    pub verb_events: usize,
    pub agents: usize,
    pub dropped_agents: usize,
    pub patients: usize,
    pub dropped_patients: usize,
    /// Verb events without a resolved agent character.
    pub unresolved_agents: usize,
    /// Descending by occurrences, ties by id.
    pub character_occurrences: Vec<CharacterCount>,
}

/// Counts roles, drops and character mentions.
///
/// A character occurrence is a token labelled with that character, a verb
/// argument labelled directly, or a dropped argument resolved to it. Overt
/// token references are not counted again.
pub fn summarize(d: &Discourse) -> CorpusSummary {
    let mut occurrences: BTreeMap<CharacterId, usize> = BTreeMap::new();
    for t in &d.tokens {
        if let Some(c) = t.character {
            *occurrences.entry(c).or_default() += 1;
        }
    }
    let mut s = CorpusSummary {
        clauses: d.clause_count,
        words: d.word_count,
        verb_events: d.events.len(),
        agents: 0,
        dropped_agents: 0,
        patients: 0,
        dropped_patients: 0,
        unresolved_agents: 0,
        character_occurrences: Vec::new(),
    };
    for e in &d.events {
        match e.agent {
            Some(c) => {
                s.agents += 1;
                if e.agent_dropped {
                    s.dropped_agents += 1;
                }
                if e.agent_token.is_none() {
                    *occurrences.entry(c).or_default() += 1;
                }
            }
            None => s.unresolved_agents += 1,
        }
        if let Some(c) = e.patient {
            s.patients += 1;
            if e.patient_dropped {
                s.dropped_patients += 1;
            }
            if e.patient_token.is_none() {
                *occurrences.entry(c).or_default() += 1;
            }
        }
    }
    let mut counts: Vec<CharacterCount> = occurrences
        .into_iter()
        .map(|(id, occurrences)| CharacterCount {
            id,
            name: d.character_name(id),
            occurrences,
        })
        .collect();
    counts.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.id.cmp(&b.id)));
    s.character_occurrences = counts;
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Discourse, CorpusError> {
        parse_annotations(text.as_bytes())
    }

    const MINIMAL: &str = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                           1\t1\tfox\tS\tch1\t-\n\
                           2\t1\truns\tV\t1\t3\n\
                           3\t1\tstone\tO\t-\t-\n";

    #[test]
    fn minimal_overt_agent() {
        let d = parse(MINIMAL).unwrap();
        assert_eq!(d.events.len(), 1);
        let e = &d.events[0];
        assert_eq!(e.agent, Some(CharacterId(1)));
        assert!(!e.agent_dropped);
        assert_eq!(e.agent_token, Some(1));
        assert_eq!(e.patient, None);
        assert_eq!(d.clause_count, 1);
        assert_eq!(d.word_count, 3);
        assert!(validate(&d).is_clean());
    }

    #[test]
    fn minimal_dropped_agent() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    # subject omitted\n\
                    2\t1\truns\tV\tch1!\t3\n\
                    3\t1\tstone\tO\t-\t-\n";
        let d = parse(text).unwrap();
        assert_eq!(d.events.len(), 1);
        assert_eq!(d.events[0].agent, Some(CharacterId(1)));
        assert!(d.events[0].agent_dropped);
        assert_eq!(d.characters.len(), 1);
    }

    #[test]
    fn named_labels_are_kept() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\the\tS\tch4_prince\t-\n\
                    2\t1\tsmiles\tV\t1\t-\n\
                    3\t2\tlaughs\tV\tch4!\t-\n";
        let d = parse(text).unwrap();
        assert_eq!(d.characters[0].name, "ch4_prince");
        assert_eq!(d.events[1].agent, Some(CharacterId(4)));
        let again = parse(&d.to_annotation_string()).unwrap();
        assert_eq!(again, d);
    }

    #[test]
    fn conflicting_names_rejected() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\the\tS\tch4_prince\t-\n\
                    2\t1\tshe\tS\tch4_rose\t-\n";
        assert!(matches!(
            parse(text),
            Err(CorpusError::ConflictingCharacterName { line: 3, .. })
        ));
    }

    type Case = (String, fn(&CorpusError) -> bool);

    #[test]
    fn errors_carry_line_numbers() {
        let h = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n";
        let cases: Vec<Case> = vec![
            (format!("{h}1\t1\tfox\tS\tch1\n"), |e| {
                matches!(e, CorpusError::ColumnCount { line: 2, found: 5 })
            }),
            (format!("{h}1\t2\ta\t-\t-\t-\n2\t1\tb\t-\t-\t-\n"), |e| {
                matches!(e, CorpusError::NonMonotoneClause { line: 3, token_id: 2, .. })
            }),
            (format!("{h}1\t1\truns\tV\t9\t-\n"), |e| {
                matches!(e, CorpusError::DanglingReference { line: 2, target: 9, .. })
            }),
            (format!("{h}1\t1\tfox\tS\tprince\t-\n"), |e| {
                matches!(e, CorpusError::UndeclaredCharacter { line: 2, .. })
            }),
            (format!("{h}1\t1\ta\t-\t-\t-\n1\t1\tb\t-\t-\t-\n"), |e| {
                matches!(e, CorpusError::DuplicateToken { line: 3, token_id: 1 })
            }),
            (format!("{h}2\t1\ta\t-\t-\t-\n1\t1\tb\t-\t-\t-\n"), |e| {
                matches!(e, CorpusError::NonIncreasingToken { line: 3, .. })
            }),
            (format!("{h}1\t1\tfox\tS\tch1!\t-\n"), |e| {
                matches!(e, CorpusError::DropOnNonVerb { line: 2, .. })
            }),
            (format!("{h}1\t1\tfox\tX\t-\t-\n"), |e| {
                matches!(e, CorpusError::InvalidField { line: 2, field: "role", .. })
            }),
            ("1\t1\tfox\tS\t-\t-\n".to_string(), |e| {
                matches!(e, CorpusError::BadHeader { line: 1, .. })
            }),
            (String::new(), |e| matches!(e, CorpusError::MissingHeader)),
        ];
        for (text, check) in cases {
            let err = parse(&text).unwrap_err();
            assert!(check(&err), "unexpected error {err:?} for {text:?}");
        }
    }

    #[test]
    fn verb_without_agent_is_parsed() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\trains\tV\t-\t-\n";
        let d = parse(text).unwrap();
        assert_eq!(d.events[0].agent, None);
        assert!(validate(&d).is_clean());
        assert_eq!(summarize(&d).unresolved_agents, 1);
    }

    #[test]
    fn validate_flags_unresolved_drop() {
        let mut d = parse(MINIMAL).unwrap();
        d.events[0].agent = None;
        d.events[0].agent_token = None;
        d.events[0].agent_dropped = true;
        let report = validate(&d);
        assert_eq!(report.findings.len(), 1, "{report:?}");
        assert_eq!(report.findings[0].severity, Severity::Error);
        assert_eq!(report.findings[0].location, Location::Event(0));
    }

    #[test]
    fn validate_flags_clause_regression() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\ta\t-\t-\t-\n\
                    2\t2\tb\t-\t-\t-\n\
                    3\t2\tc\t-\t-\t-\n";
        let mut d = parse(text).unwrap();
        d.tokens[2].clause_id = 1;
        let report = validate(&d);
        assert_eq!(report.findings.len(), 1, "{report:?}");
        assert_eq!(report.findings[0].location, Location::Token(3));
    }

    #[test]
    fn summary_counts() {
        let text = "token_id\tclause_id\tsurface\trole\tagent\tpatient\n\
                    1\t1\tfox\tS\tch1\t-\n\
                    2\t1\truns\tV\t1\tch2\n\
                    3\t2\tsleeps\tV\tch1!\t-\n";
        let d = parse(text).unwrap();
        let s = summarize(&d);
        assert_eq!(s.agents, 2);
        assert_eq!(s.dropped_agents, 1);
        assert_eq!(s.patients, 1);
        assert_eq!(s.dropped_patients, 0);
        assert_eq!(s.character_occurrences[0].id, CharacterId(1));
        assert_eq!(s.character_occurrences[0].occurrences, 2);
        assert_eq!(s.character_occurrences[1].occurrences, 1);
    }

    #[test]
    fn empty_discourse_summary_is_zero() {
        let d = parse("token_id\tclause_id\tsurface\trole\tagent\tpatient\n").unwrap();
        let s = summarize(&d);
        assert_eq!((s.agents, s.dropped_agents, s.patients, s.dropped_patients), (0, 0, 0, 0));
        assert!(s.character_occurrences.is_empty());
    }

    #[test]
    fn label_grammar() {
        assert_eq!(parse_label("ch12"), Some((CharacterId(12), None, false)));
        assert_eq!(
            parse_label("ch3_rose!"),
            Some((CharacterId(3), Some("ch3_rose".into()), true))
        );
        assert_eq!(parse_label("ch0"), None);
        assert_eq!(parse_label("ch"), None);
        assert_eq!(parse_label("ch3_"), None);
        assert_eq!(parse_label("ch3x"), None);
    }
}
