//! Random annotated discourses with their ground truth, and brute-force
//! reference implementations that work from that truth only.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DIM: usize = 8;
const VOCAB: usize = 15;
const LEXICON_COVERED: usize = 12;

#[derive(Debug, Clone)]
pub struct TruthEvent {
    pub clause: u32,
    pub agent: Option<u16>,
    pub patient: Option<u16>,
    pub agent_dropped: bool,
    /// `None` when the source has no (or a zero) vector for the verb.
    pub vector: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub annotations: String,
    /// Lexicon text when `per_token` is false, token table otherwise.
    pub vectors: String,
    pub per_token: bool,
    pub events: Vec<TruthEvent>,
}

pub struct FixtureShape {
    pub max_characters: u16,
    pub max_verbs: usize,
}

impl Default for FixtureShape {
    fn default() -> Self {
        FixtureShape {
            max_characters: 10,
            max_verbs: 60,
        }
    }
}

fn random_vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn join(v: &[f64], sep: &str) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

pub fn random_fixture(seed: u64, shape: &FixtureShape) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_chars = rng.gen_range(1..=shape.max_characters);
    let n_verbs = rng.gen_range(1..=shape.max_verbs);
    let per_token = rng.gen_bool(0.5);
    let named = rng.gen_bool(0.5);
    let label = |c: u16| if named { format!("ch{c}_n{c}") } else { format!("ch{c}") };

    let lexicon: Vec<Vec<f64>> = (0..VOCAB)
        .map(|i| {
            if i == 0 {
                vec![0.0; DIM]
            } else {
                random_vector(&mut rng)
            }
        })
        .collect();

    let mut text = String::from("# generated\ntoken_id\tclause_id\tsurface\trole\tagent\tpatient\n");
    let mut vectors = String::new();
    let mut events = Vec::new();
    let mut token = 0u32;
    let mut clause = 1u32;
    for i in 0..n_verbs {
        if i > 0 && rng.gen_bool(0.7) {
            clause += rng.gen_range(1..=3);
        }
        let agent = rng.gen_bool(0.9).then(|| rng.gen_range(1..=n_chars));
        let mode = rng.gen_range(0..10);
        let agent_dropped = agent.is_some() && (3..6).contains(&mode);
        let agent_cell = match agent {
            None => "-".to_string(),
            Some(c) if mode < 3 => {
                token += 1;
                let _ = writeln!(text, "{token}\t{clause}\tn{c}\tS\t{}\t-", label(c));
                token.to_string()
            }
            Some(c) if agent_dropped => format!("{}!", label(c)),
            Some(c) => label(c),
        };
        token += 1;
        let verb_token = token;
        let word = rng.gen_range(0..VOCAB);
        let vector = if per_token {
            if rng.gen_bool(0.85) {
                let v = if rng.gen_bool(0.03) {
                    vec![0.0; DIM]
                } else {
                    random_vector(&mut rng)
                };
                let _ = writeln!(vectors, "{verb_token}\t{}", join(&v, " "));
                Some(v)
            } else {
                None
            }
        } else if word < LEXICON_COVERED {
            Some(lexicon[word].clone())
        } else {
            None
        };
        let vector = vector.filter(|v| v.iter().any(|x| *x != 0.0));

        let patient = rng.gen_bool(0.3).then(|| rng.gen_range(1..=n_chars));
        let (patient_cell, object_row) = match patient {
            None => ("-".to_string(), None),
            Some(c) if rng.gen_bool(0.5) => ((verb_token + 1).to_string(), Some(c)),
            Some(c) if rng.gen_bool(0.2) => (format!("{}!", label(c)), None),
            Some(c) => (label(c), None),
        };
        let _ = writeln!(text, "{verb_token}\t{clause}\tw{word}\tV\t{agent_cell}\t{patient_cell}");
        if let Some(c) = object_row {
            token += 1;
            let _ = writeln!(text, "{token}\t{clause}\tn{c}\tO\t{}\t-", label(c));
        }
        if rng.gen_bool(0.2) {
            token += 1;
            let _ = writeln!(text, "{token}\t{clause}\tand\t-\t-\t-");
        }
        events.push(TruthEvent {
            clause,
            agent,
            patient,
            agent_dropped,
            vector,
        });
    }
    if !per_token {
        for (i, v) in lexicon.iter().enumerate().take(LEXICON_COVERED) {
            let _ = writeln!(vectors, "w{i} {}", join(v, " "));
        }
    }
    Fixture {
        annotations: text,
        vectors,
        per_token,
        events,
    }
}

pub fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteRelevance {
    pub weighted: f64,
    pub unweighted: f64,
    pub used: usize,
}

fn involves(e: &TruthEvent, c: u16, with_patient: bool) -> bool {
    e.agent == Some(c) || (with_patient && e.patient == Some(c))
}

fn characters_of(events: &[TruthEvent]) -> Vec<u16> {
    let mut all: Vec<u16> = events.iter().flat_map(|e| e.agent.into_iter().chain(e.patient)).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// Relevance of every character with any earlier verb at event `t`, summing
/// only history verbs in clauses at or above `floor`. `None` when the
/// current verb has no vector.
pub fn brute_relevance(
    events: &[TruthEvent],
    t: usize,
    with_patient: bool,
    floor: u32,
) -> Option<BTreeMap<u16, BruteRelevance>> {
    let current = events[t].vector.as_ref()?;
    let k = events[t].clause;
    let mut out = BTreeMap::new();
    for c in characters_of(events) {
        let history: Vec<&TruthEvent> = events[..t]
            .iter()
            .filter(|e| involves(e, c, with_patient) && e.clause >= floor)
            .collect();
        if history.is_empty() {
            continue;
        }
        let mut r = BruteRelevance {
            weighted: 0.0,
            unweighted: 0.0,
            used: 0,
        };
        for e in history {
            if let Some(v) = &e.vector {
                let cos = brute_cosine(v, current);
                r.weighted += cos / (f64::from(e.clause.abs_diff(k)) + 1.0);
                r.unweighted += cos;
                r.used += 1;
            }
        }
        out.insert(c, r);
    }
    Some(out)
}

/// Characters with an earlier verb no more than `range` clauses back.
pub fn brute_candidates(events: &[TruthEvent], t: usize, with_patient: bool, range: Option<u32>) -> Vec<u16> {
    let k = events[t].clause;
    characters_of(events)
        .into_iter()
        .filter(|&c| {
            events[..t]
                .iter()
                .any(|e| involves(e, c, with_patient) && range.is_none_or(|n| e.clause + n >= k))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BruteCell {
    Value(f64),
    Absent(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct BruteOptions {
    pub weighted: bool,
    pub range: Option<u32>,
    pub exclude_self: bool,
    pub truncate: bool,
    pub with_patient: bool,
}

pub fn brute_salience(events: &[TruthEvent], t: usize, o: BruteOptions) -> Option<BruteCell> {
    let k = events[t].agent?;
    let floor = match (o.truncate, o.range) {
        (true, Some(n)) => events[t].clause.saturating_sub(n),
        _ => 0,
    };
    let Some(rel) = brute_relevance(events, t, o.with_patient, floor) else {
        return Some(BruteCell::Absent("current_verb_uncovered"));
    };
    let candidates = brute_candidates(events, t, o.with_patient, o.range);
    if !candidates.contains(&k) {
        return Some(BruteCell::Absent("not_a_candidate"));
    }
    if rel.get(&k).is_none_or(|r| r.used == 0) {
        return Some(BruteCell::Absent("no_covered_history"));
    }
    let value = |c: u16| {
        rel.get(&c)
            .map_or(0.0, |r| if o.weighted { r.weighted } else { r.unweighted })
    };
    if candidates.iter().any(|&c| value(c) + 1.0 <= 1e-9) {
        return Some(BruteCell::Absent("degenerate"));
    }
    let rk = value(k);
    let mut sum = 0.0;
    let mut terms = 0.0;
    for &c in &candidates {
        if c == k && o.exclude_self {
            continue;
        }
        sum += (rk + 1.0) / (value(c) + 1.0);
        terms += 1.0;
    }
    Some(BruteCell::Value(sum / (terms + 1.0)))
}

/// Upper-tail p of the rank sum of `a` by listing every way to choose
/// `a.len()` of the pooled ranks. Values must be distinct.
pub fn enumerate_rank_sum_p(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let rank = |x: f64| pooled.iter().position(|&y| y == x).unwrap() + 1;
    let observed: usize = a.iter().map(|&x| rank(x)).sum();
    let n = pooled.len();
    let k = a.len();
    let mut hits = 0u64;
    let mut total = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let s: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
        total += 1;
        if s >= observed {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}
