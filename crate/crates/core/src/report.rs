//! End-to-end runs: configuration, orchestration and the output bundle.
//!
//! A run reads one annotation file and any number of embedding sources,
//! computes salience for every (source, weighting, range) cell and runs the
//! group test and the prediction protocol on each cell. All outputs are a
//! pure function of the configuration and the input files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chains::{build_usage_table, RoleFilter, UsageTable};
use crate::corpus::{self, CorpusError, CorpusSummary, Discourse, ValidationReport};
use crate::embeddings::{self, EmbeddingError, EmbeddingSource, SourceKind};
use crate::relevance::{EventVectors, OovPolicy};
use crate::salience::{
    salience_dataset, AbsentReason, DatasetSpec, RangeSpec, SalienceDataset, SalienceOptions, Weighting,
};
use crate::stats::{self, derive_seed, StatsError};

pub const DEFAULT_TEST_REPEATS: usize = 1000;
pub const DEFAULT_PREDICT_REPEATS: usize = 100;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;
pub const DEFAULT_BASELINE_DIM: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceLocation {
    File(PathBuf),
    Generated { seed: Option<u64>, dim: usize },
}

/// `NAME=KIND:PATH` or `NAME=baseline:seed:N,dim:D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub name: String,
    pub kind: SourceKind,
    pub location: SourceLocation,
}

impl FromStr for SourceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, rest) = s
            .split_once('=')
            .ok_or_else(|| format!("source {s:?} is not NAME=KIND:..."))?;
        if name.is_empty() || name.contains(|c: char| c == ',' || c.is_whitespace()) {
            return Err(format!("invalid source name {name:?}"));
        }
        let (kind, arg) = rest.split_once(':').unwrap_or((rest, ""));
        let (kind, location) = match kind {
            "lexicon" | "per_token" if arg.is_empty() => {
                return Err(format!("source {name}: missing path"));
            }
            "lexicon" => (SourceKind::Lexicon, SourceLocation::File(arg.into())),
            "per_token" => (SourceKind::PerToken, SourceLocation::File(arg.into())),
            "baseline" => {
                let mut seed = None;
                let mut dim = DEFAULT_BASELINE_DIM;
                for part in arg.split(',').filter(|p| !p.is_empty()) {
                    let (key, value) = part
                        .split_once(':')
                        .ok_or_else(|| format!("source {name}: expected key:value, got {part:?}"))?;
                    let bad = || format!("source {name}: invalid {key} {value:?}");
                    match key {
                        "seed" => seed = Some(value.parse().map_err(|_| bad())?),
                        "dim" => dim = value.parse().ok().filter(|&d| d > 0).ok_or_else(bad)?,
                        _ => return Err(format!("source {name}: unknown key {key:?}")),
                    }
                }
                (SourceKind::Baseline, SourceLocation::Generated { seed, dim })
            }
            other => return Err(format!("source {name}: unknown kind {other:?}")),
        };
        Ok(SourceSpec {
            name: name.to_string(),
            kind,
            location,
        })
    }
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name, self.kind.as_str())?;
        match &self.location {
            SourceLocation::File(p) => write!(f, ":{}", p.display()),
            SourceLocation::Generated { seed: Some(s), dim } => write!(f, ":seed:{s},dim:{dim}"),
            SourceLocation::Generated { seed: None, dim } => write!(f, ":dim:{dim}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub annotations: Option<PathBuf>,
    pub sources: Vec<SourceSpec>,
    pub weightings: Vec<Weighting>,
    pub ranges: Vec<RangeSpec>,
    pub test_repeats: usize,
    pub predict_repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub role_filter: RoleFilter,
    pub range_truncates_history: bool,
    pub eq4_exclude_self: bool,
    pub oov_policy: OovPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            annotations: None,
            sources: Vec::new(),
            weightings: Weighting::ALL.to_vec(),
            ranges: vec![
                RangeSpec::All,
                RangeSpec::Clauses(10),
                RangeSpec::Clauses(20),
                RangeSpec::Clauses(30),
            ],
            test_repeats: DEFAULT_TEST_REPEATS,
            predict_repeats: DEFAULT_PREDICT_REPEATS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
            out: None,
            role_filter: RoleFilter::AgentOnly,
            range_truncates_history: false,
            eq4_exclude_self: false,
            oov_policy: OovPolicy::Skip,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("no annotation file configured")]
    MissingAnnotations,
    #[error("no embedding source configured")]
    NoSources,
    #[error("duplicate source name {0:?}")]
    DuplicateSource(String),
    #[error("at least one weighting and one range are required")]
    EmptyGrid,
}

fn parse_list<T: FromStr<Err = String>>(value: &str) -> Result<Vec<T>, String> {
    let mut items: Vec<T> = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        items.push(part.parse()?);
    }
    Ok(items)
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("expected a boolean, got {other:?}")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys mirror the CLI flag names.
    /// `source` appends; everything else replaces.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError::Value {
            key: key.to_string(),
            message,
        };
        let number = |v: &str| v.parse::<u64>().map_err(|e| err(e.to_string()));
        match key {
            "annotations" => self.annotations = Some(value.into()),
            "source" => self.sources.push(value.parse().map_err(err)?),
            "ranges" => self.ranges = parse_list(value).map_err(err)?,
            "weighting" | "weightings" if value == "both" => self.weightings = Weighting::ALL.to_vec(),
            "weighting" | "weightings" => self.weightings = parse_list(value).map_err(err)?,
            "test-repeats" => self.test_repeats = number(value)? as usize,
            "predict-repeats" => self.predict_repeats = number(value)? as usize,
            "train-fraction" => {
                self.train_fraction = value
                    .parse::<f64>()
                    .ok()
                    .filter(|f| *f > 0.0 && *f < 1.0)
                    .ok_or_else(|| err(format!("expected a fraction in (0, 1), got {value:?}")))?
            }
            "seed" => self.seed = number(value)?,
            "out" => self.out = Some(value.into()),
            "role-filter" => self.role_filter = value.parse().map_err(err)?,
            "range-truncates-history" => self.range_truncates_history = parse_bool(value).map_err(err)?,
            "eq4-exclude-self" => self.eq4_exclude_self = parse_bool(value).map_err(err)?,
            "oov-policy" => self.oov_policy = value.parse().map_err(err)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Reads flat `key = value` text. Blank lines and `#` comments are
    /// ignored. Relative paths are resolved against `base`.
    pub fn from_kv_text(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: idx + 1 })?;
            cfg.set(key.trim(), value.trim())?;
        }
        if let Some(base) = base {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.annotations.as_mut() {
            fix(p);
        }
        if let Some(p) = self.out.as_mut() {
            fix(p);
        }
        for s in &mut self.sources {
            if let SourceLocation::File(p) = &mut s.location {
                fix(p);
            }
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.annotations.is_none() {
            return Err(ConfigError::MissingAnnotations);
        }
        if self.sources.is_empty() {
            return Err(ConfigError::NoSources);
        }
        let mut names = HashSet::new();
        for s in &self.sources {
            if !names.insert(&s.name) {
                return Err(ConfigError::DuplicateSource(s.name.clone()));
            }
        }
        if self.weightings.is_empty() || self.ranges.is_empty() {
            return Err(ConfigError::EmptyGrid);
        }
        Ok(())
    }

    /// Canonical `key = value` text of every setting that affects results.
    /// The output directory is left out.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let join = |items: Vec<String>| items.join(",");
        if let Some(p) = &self.annotations {
            let _ = writeln!(s, "annotations = {}", p.display());
        }
        for src in &self.sources {
            let _ = writeln!(s, "source = {src}");
        }
        let _ = writeln!(s, "weighting = {}", join(self.weightings.iter().map(|w| w.to_string()).collect()));
        let _ = writeln!(s, "ranges = {}", join(self.ranges.iter().map(|r| r.to_string()).collect()));
        let _ = writeln!(s, "test-repeats = {}", self.test_repeats);
        let _ = writeln!(s, "predict-repeats = {}", self.predict_repeats);
        let _ = writeln!(s, "train-fraction = {}", self.train_fraction);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(
            s,
            "role-filter = {}",
            match self.role_filter {
                RoleFilter::AgentOnly => "agent_only",
                RoleFilter::AgentAndPatient => "agent_and_patient",
            }
        );
        let _ = writeln!(s, "range-truncates-history = {}", self.range_truncates_history);
        let _ = writeln!(s, "eq4-exclude-self = {}", self.eq4_exclude_self);
        let _ = writeln!(s, "oov-policy = skip");
        s
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            weightings: self.weightings.clone(),
            ranges: self.ranges.clone(),
            options: SalienceOptions {
                eq4_exclude_self: self.eq4_exclude_self,
                range_truncates_history: self.range_truncates_history,
            },
        }
    }

    pub fn resample_seed(&self) -> u64 {
        derive_seed(self.seed, "resample", 0)
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, "split", 0)
    }

    pub fn baseline_seed(&self, source_index: usize) -> u64 {
        derive_seed(self.seed, "baseline", source_index as u64)
    }
}

/// Pipeline stage that raised an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Annotations,
    Validation,
    Embeddings,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Annotations => "annotations",
            Stage::Validation => "validation",
            Stage::Embeddings => "embeddings",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(#[from] ConfigError),
    #[error("[annotations] {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("[annotations] {path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("[validation] {} invariant violation(s), first: {}", .0.error_count(), .0.findings.first().map_or("", |f| f.message.as_str()))]
    Validation(ValidationReport),
    #[error("[embeddings] source {name} ({path}): {source}")]
    Embeddings {
        name: String,
        path: PathBuf,
        source: EmbeddingError,
    },
    #[error("[output] {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Config(_) => Stage::Config,
            PipelineError::Read { .. } | PipelineError::Corpus { .. } => Stage::Annotations,
            PipelineError::Validation(_) => Stage::Validation,
            PipelineError::Embeddings { .. } => Stage::Embeddings,
            PipelineError::Output { .. } => Stage::Output,
        }
    }
}

/// Reads and validates the configured annotation file.
pub fn load_discourse(cfg: &RunConfig) -> Result<(Discourse, ValidationReport), PipelineError> {
    let path = cfg.annotations.clone().ok_or(ConfigError::MissingAnnotations)?;
    let file = File::open(&path).map_err(|source| PipelineError::Read {
        path: path.clone(),
        source,
    })?;
    let d = corpus::parse_annotations(BufReader::new(file))
        .map_err(|source| PipelineError::Corpus { path, source })?;
    let report = corpus::validate(&d);
    Ok((d, report))
}

/// Loads every configured source, in configuration order.
pub fn load_sources(cfg: &RunConfig) -> Result<Vec<EmbeddingSource>, PipelineError> {
    cfg.sources
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let fail = |path: &Path, source| PipelineError::Embeddings {
                name: spec.name.clone(),
                path: path.to_path_buf(),
                source,
            };
            match &spec.location {
                SourceLocation::File(path) => {
                    let file = File::open(path).map_err(|e| fail(path, EmbeddingError::Io(e)))?;
                    let reader = BufReader::new(file);
                    match spec.kind {
                        SourceKind::PerToken => embeddings::load_token_table(reader, &spec.name),
                        _ => embeddings::load_lexicon(reader, &spec.name),
                    }
                    .map_err(|e| fail(path, e))
                }
                SourceLocation::Generated { seed, dim } => {
                    let seed = seed.unwrap_or_else(|| cfg.baseline_seed(i));
                    embeddings::baseline_source(seed, *dim)
                        .map(|s| s.with_name(spec.name.clone()))
                        .map_err(|e| fail(Path::new("-"), e))
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub source: String,
    pub weighting: Weighting,
    pub range: RangeSpec,
    pub n_pro_drop: usize,
    pub n_non_pro_drop: usize,
    pub rank_sum_statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub test_reason: Option<String>,
    pub mean_accuracy: Option<f64>,
    pub accuracy_reason: Option<String>,
    pub test_repeats: usize,
    pub predict_repeats: usize,
    pub seed: u64,
    pub resample_seed: u64,
    pub split_seed: u64,
    pub degenerate_cells: usize,
    /// Records without a salience value in this cell.
    pub excluded_records: usize,
}

fn reason_code(e: &StatsError) -> &'static str {
    match e {
        StatsError::EmptySample(_) => "no_pro_drop_records",
        StatsError::NonFinite => "non_finite",
        StatsError::InsufficientComparison { .. } => "too_few_non_pro_drop",
        StatsError::NoRepeats => "no_repeats",
        StatsError::LengthMismatch(..) => "length_mismatch",
        StatsError::SingleClass => "single_class",
        StatsError::ZeroVariance => "zero_variance",
        StatsError::ClassTooSmall(_) => "class_too_small",
        StatsError::BadTrainFraction(_) => "bad_train_fraction",
    }
}

fn evaluate_cell(ds: &SalienceDataset, j: usize, cfg: &RunConfig) -> CellResult {
    let key = &ds.cells[j];
    let column = ds.column(j);
    let drop: Vec<f64> = column.iter().filter(|r| r.1).map(|r| r.0).collect();
    let other: Vec<f64> = column.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let (resample_seed, split_seed) = (cfg.resample_seed(), cfg.split_seed());
    let test = stats::resampled_group_test(&drop, &other, cfg.test_repeats, resample_seed);
    let acc = stats::repeated_split_accuracy(&column, cfg.predict_repeats, cfg.train_fraction, split_seed);
    CellResult {
        source: key.source.clone(),
        weighting: key.weighting,
        range: key.range,
        n_pro_drop: drop.len(),
        n_non_pro_drop: other.len(),
        rank_sum_statistic: test.as_ref().ok().map(|t| t.mean_statistic),
        p_value: test.as_ref().ok().map(|t| t.mean_p),
        test_reason: test.as_ref().err().map(|e| reason_code(e).to_string()),
        mean_accuracy: acc.as_ref().ok().map(|a| a.mean_accuracy),
        accuracy_reason: acc.as_ref().err().map(|e| reason_code(e).to_string()),
        test_repeats: cfg.test_repeats,
        predict_repeats: cfg.predict_repeats,
        seed: cfg.seed,
        resample_seed,
        split_seed,
        degenerate_cells: ds.absent_count(j, Some(AbsentReason::Degenerate)),
        excluded_records: ds.absent_count(j, None),
    }
}

/// A value cell of a result grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridCell {
    Values(Vec<f64>),
    Absent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub weighting: String,
    pub source: String,
    pub cells: Vec<GridCell>,
}

/// Rows are weighting x source, columns are ranges; each cell holds one
/// value per field.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub fields: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<GridRow>,
}

#[derive(Debug, Error)]
pub enum GridParseError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header")]
    Header,
    #[error("row {0}: malformed cell {1:?}")]
    Cell(usize, String),
}

impl Grid {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["weighting".to_string(), "source".to_string()];
        for c in &self.columns {
            for f in &self.fields {
                h.push(format!("{c}:{f}"));
            }
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.weighting.clone(), row.source.clone()];
            for cell in &row.cells {
                match cell {
                    GridCell::Values(v) => rec.extend(v.iter().map(|x| x.to_string())),
                    GridCell::Absent(why) => {
                        rec.extend(std::iter::repeat_n(format!("NA({why})"), self.fields.len()))
                    }
                }
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8")
    }

    pub fn from_csv(text: &str) -> Result<Grid, GridParseError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[0] != "weighting" || header[1] != "source" {
            return Err(GridParseError::Header);
        }
        let mut columns: Vec<String> = Vec::new();
        let mut fields: Vec<String> = Vec::new();
        for h in &header[2..] {
            let (c, f) = h.split_once(':').ok_or(GridParseError::Header)?;
            if columns.last().map(String::as_str) != Some(c) {
                columns.push(c.to_string());
            }
            if columns.len() == 1 {
                fields.push(f.to_string());
            }
        }
        if fields.is_empty() || columns.len() * fields.len() != header.len() - 2 {
            return Err(GridParseError::Header);
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let values: Vec<&str> = rec.iter().collect();
            let mut cells = Vec::new();
            for chunk in values[2..].chunks(fields.len()) {
                let first = chunk[0];
                if let Some(why) = first.strip_prefix("NA(").and_then(|s| s.strip_suffix(')')) {
                    cells.push(GridCell::Absent(why.to_string()));
                } else {
                    let parsed: Result<Vec<f64>, _> = chunk.iter().map(|v| v.parse::<f64>()).collect();
                    cells.push(GridCell::Values(
                        parsed.map_err(|_| GridParseError::Cell(i + 1, first.to_string()))?,
                    ));
                }
            }
            rows.push(GridRow {
                weighting: values[0].to_string(),
                source: values[1].to_string(),
                cells,
            });
        }
        Ok(Grid { fields, columns, rows })
    }

    /// Aligned plain-text rendering with three decimals.
    pub fn to_text(&self, title: &str) -> String {
        let mut table: Vec<Vec<String>> = Vec::new();
        let mut head = vec!["weighting".to_string(), "source".to_string()];
        head.extend(self.columns.iter().map(|c| format!("range={c}")));
        table.push(head);
        for row in &self.rows {
            let mut line = vec![row.weighting.clone(), row.source.clone()];
            for cell in &row.cells {
                line.push(match cell {
                    GridCell::Values(v) => v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" / "),
                    GridCell::Absent(why) => format!("NA({why})"),
                });
            }
            table.push(line);
        }
        let widths: Vec<usize> = (0..table[0].len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{title}\ncells: {}\n", self.fields.join(" / "));
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<width$}", width = *w))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

fn build_grid(cfg: &RunConfig, results: &[CellResult], fields: &[&str], pick: impl Fn(&CellResult) -> GridCell) -> Grid {
    let mut rows = Vec::new();
    for w in &cfg.weightings {
        for s in &cfg.sources {
            let cells = cfg
                .ranges
                .iter()
                .map(|r| {
                    results
                        .iter()
                        .find(|c| c.weighting == *w && c.source == s.name && c.range == *r)
                        .map_or_else(|| GridCell::Absent("missing".into()), &pick)
                })
                .collect();
            rows.push(GridRow {
                weighting: w.to_string(),
                source: s.name.clone(),
                cells,
            });
        }
    }
    Grid {
        fields: fields.iter().map(|f| f.to_string()).collect(),
        columns: cfg.ranges.iter().map(|r| r.to_string()).collect(),
        rows,
    }
}

pub fn group_test_grid(cfg: &RunConfig, results: &[CellResult]) -> Grid {
    build_grid(cfg, results, &["rank_sum_statistic", "p_value"], |c| {
        match (c.rank_sum_statistic, c.p_value, &c.test_reason) {
            (Some(s), Some(p), _) => GridCell::Values(vec![s, p]),
            (_, _, Some(why)) => GridCell::Absent(why.clone()),
            _ => GridCell::Absent("missing".into()),
        }
    })
}

pub fn accuracy_grid(cfg: &RunConfig, results: &[CellResult]) -> Grid {
    build_grid(cfg, results, &["mean_accuracy"], |c| match (c.mean_accuracy, &c.accuracy_reason) {
        (Some(a), _) => GridCell::Values(vec![a]),
        (_, Some(why)) => GridCell::Absent(why.clone()),
        _ => GridCell::Absent("missing".into()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceDiagnostics {
    pub name: String,
    pub kind: SourceKind,
    pub dim: usize,
    pub entries: Option<usize>,
    pub duplicate_words: usize,
    pub uncovered_verbs: usize,
    pub zero_norm_vectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDiagnostics {
    pub column: String,
    pub present: usize,
    pub absent: BTreeMap<&'static str, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub agent_resolved_events: usize,
    pub salience_rows: usize,
    /// Records with no salience value in any cell; not written to the CSV.
    pub excluded_records: usize,
    pub degenerate_cells: usize,
    pub validation: ValidationReport,
    pub sources: Vec<SourceDiagnostics>,
    pub cells: Vec<CellDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Everything a run produces, held in memory until written.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub summary: CorpusSummary,
    pub dataset: SalienceDataset,
    pub results: Vec<CellResult>,
    pub group_tests: Grid,
    pub accuracy: Grid,
    pub diagnostics: Diagnostics,
    pub manifest: Manifest,
    files: Vec<(String, Vec<u8>)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn input_digest(path: &Path) -> Result<FileDigest, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(FileDigest {
        name: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Salience dataset for an already loaded discourse.
pub fn compute_dataset(
    cfg: &RunConfig,
    d: &Discourse,
    sources: &[EmbeddingSource],
) -> (UsageTable, SalienceDataset) {
    let table = build_usage_table(d, cfg.role_filter);
    let ds = salience_dataset(d, &table, sources, &cfg.dataset_spec());
    (table, ds)
}

/// Runs every stage and assembles the bundle without touching the output
/// directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ReportBundle, PipelineError> {
    cfg.check()?;
    let (d, validation) = load_discourse(cfg)?;
    if validation.error_count() > 0 {
        return Err(PipelineError::Validation(validation));
    }
    let summary = corpus::summarize(&d);
    let sources = load_sources(cfg)?;
    let (_table, dataset) = compute_dataset(cfg, &d, &sources);

    let results: Vec<CellResult> = (0..dataset.cells.len())
        .into_par_iter()
        .map(|j| evaluate_cell(&dataset, j, cfg))
        .collect();

    let group_tests = group_test_grid(cfg, &results);
    let accuracy = accuracy_grid(cfg, &results);

    let source_diag = sources
        .iter()
        .map(|s| {
            let ev = EventVectors::new(&d, s);
            SourceDiagnostics {
                name: s.name().to_string(),
                kind: s.kind(),
                dim: s.dim(),
                entries: s.len(),
                duplicate_words: s.duplicate_words(),
                uncovered_verbs: ev.uncovered_count(),
                zero_norm_vectors: ev.zero_norm_count(),
            }
        })
        .collect();
    let cell_diag = dataset
        .cells
        .iter()
        .enumerate()
        .map(|(j, key)| {
            let mut absent = BTreeMap::new();
            for reason in [
                AbsentReason::CurrentVerbUncovered,
                AbsentReason::NotACandidate,
                AbsentReason::NoCoveredHistory,
                AbsentReason::Degenerate,
            ] {
                let n = dataset.absent_count(j, Some(reason));
                if n > 0 {
                    absent.insert(reason.as_str(), n);
                }
            }
            CellDiagnostics {
                column: key.column(),
                present: dataset.records.len() - dataset.absent_count(j, None),
                absent,
            }
        })
        .collect();
    let salience_rows = dataset.records.iter().filter(|r| r.has_value()).count();
    let diagnostics = Diagnostics {
        agent_resolved_events: dataset.records.len(),
        salience_rows,
        excluded_records: dataset.records.len() - salience_rows,
        degenerate_cells: results.iter().map(|r| r.degenerate_cells).sum(),
        validation,
        sources: source_diag,
        cells: cell_diag,
    };

    let mut salience_csv = Vec::new();
    dataset
        .write_csv(&d, &mut salience_csv)
        .expect("writing CSV to memory cannot fail");

    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("summary.json".into(), json(&summary)),
        ("salience.csv".into(), salience_csv),
        ("group_tests.csv".into(), group_tests.to_csv().into_bytes()),
        (
            "group_tests.txt".into(),
            group_tests
                .to_text(
                    "Pro-drop vs non-pro-drop salience: one-sided Wilcoxon rank-sum test (mean statistic / mean p)\n\
                     rank_sum_statistic is the rank sum of the pro-drop group, averaged over resamples",
                )
                .into_bytes(),
        ),
        ("accuracy.csv".into(), accuracy.to_csv().into_bytes()),
        (
            "accuracy.txt".into(),
            accuracy
                .to_text("Pro-drop prediction from salience: logistic regression mean held-out accuracy")
                .into_bytes(),
        ),
        ("results.json".into(), json(&results)),
        ("diagnostics.json".into(), json(&diagnostics)),
    ];

    let mut inputs = vec![input_digest(cfg.annotations.as_deref().expect("checked"))?];
    for s in &cfg.sources {
        if let SourceLocation::File(p) = &s.location {
            inputs.push(input_digest(p)?);
        }
    }
    let config = cfg.canonical();
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(config.as_bytes()),
        config,
        seed: cfg.seed,
        inputs,
        outputs: files
            .iter()
            .map(|(name, bytes)| FileDigest {
                name: name.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    files.push(("manifest.json".into(), json(&manifest)));

    Ok(ReportBundle {
        summary,
        dataset,
        results,
        group_tests,
        accuracy,
        diagnostics,
        manifest,
        files,
    })
}

impl ReportBundle {
    /// File names and contents, in write order.
    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    /// Writes every file into `dir`. On failure, files already written by
    /// this call are removed.
    pub fn write_to(&self, dir: &Path) -> Result<(), PipelineError> {
        let fail = |path: PathBuf, source| PipelineError::Output { path, source };
        fs::create_dir_all(dir).map_err(|e| fail(dir.to_path_buf(), e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(fail(path, e));
            }
            written.push(path);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_spec_forms() {
        let s: SourceSpec = "glove=lexicon:/data/glove.txt".parse().unwrap();
        assert_eq!(s.kind, SourceKind::Lexicon);
        assert_eq!(s.location, SourceLocation::File("/data/glove.txt".into()));
        let b: SourceSpec = "base=baseline:seed:7,dim:50".parse().unwrap();
        assert_eq!(
            b.location,
            SourceLocation::Generated {
                seed: Some(7),
                dim: 50
            }
        );
        assert_eq!(b.to_string(), "base=baseline:seed:7,dim:50");
        let d: SourceSpec = "base=baseline".parse().unwrap();
        assert_eq!(
            d.location,
            SourceLocation::Generated {
                seed: None,
                dim: DEFAULT_BASELINE_DIM
            }
        );
        assert!("glove".parse::<SourceSpec>().is_err());
        assert!("glove=lexicon".parse::<SourceSpec>().is_err());
        assert!("x=fasttext:/a".parse::<SourceSpec>().is_err());
        assert!("x=baseline:dim:0".parse::<SourceSpec>().is_err());
    }

    #[test]
    fn kv_config() {
        let text = "# run\nannotations = story.tsv\nsource = base=baseline:seed:1,dim:8\n\
                    source = w2v=lexicon:vec.txt\nranges = all,10\nweighting = weighted\n\
                    test-repeats = 50\nseed = 9\neq4-exclude-self = true\n";
        let cfg = RunConfig::from_kv_text(text, Some(Path::new("/data"))).unwrap();
        assert_eq!(cfg.annotations, Some(PathBuf::from("/data/story.tsv")));
        assert_eq!(cfg.sources.len(), 2);
        assert_eq!(cfg.sources[1].location, SourceLocation::File("/data/vec.txt".into()));
        assert_eq!(cfg.ranges, vec![RangeSpec::All, RangeSpec::Clauses(10)]);
        assert_eq!(cfg.weightings, vec![Weighting::Weighted]);
        assert_eq!(cfg.test_repeats, 50);
        assert_eq!(cfg.predict_repeats, DEFAULT_PREDICT_REPEATS);
        assert!(cfg.eq4_exclude_self);
        assert!(cfg.check().is_ok());

        let again = RunConfig::from_kv_text(&cfg.canonical(), None).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn kv_errors() {
        assert!(matches!(
            RunConfig::from_kv_text("nonsense\n", None),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            RunConfig::from_kv_text("colour = red\n", None),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_kv_text("ranges = all,0\n", None),
            Err(ConfigError::Value { .. })
        ));
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.check(), Err(ConfigError::MissingAnnotations)));
        cfg.annotations = Some("a.tsv".into());
        assert!(matches!(cfg.check(), Err(ConfigError::NoSources)));
        cfg.set("source", "a=baseline").unwrap();
        cfg.set("source", "a=baseline").unwrap();
        assert!(matches!(cfg.check(), Err(ConfigError::DuplicateSource(_))));
    }

    fn sample_grid() -> Grid {
        Grid {
            fields: vec!["rank_sum_statistic".into(), "p_value".into()],
            columns: vec!["all".into(), "10".into()],
            rows: vec![
                GridRow {
                    weighting: "weighted".into(),
                    source: "glove".into(),
                    cells: vec![
                        GridCell::Values(vec![49090.319, 0.063]),
                        GridCell::Absent("too_few_non_pro_drop".into()),
                    ],
                },
                GridRow {
                    weighting: "unweighted".into(),
                    source: "glove".into(),
                    cells: vec![
                        GridCell::Values(vec![1.0 / 3.0, 1e-300]),
                        GridCell::Values(vec![2.0, 0.5]),
                    ],
                },
            ],
        }
    }

    #[test]
    fn grid_csv_round_trip() {
        let g = sample_grid();
        let text = g.to_csv();
        assert!(text.starts_with("weighting,source,all:rank_sum_statistic,all:p_value,10:rank_sum_statistic,10:p_value\n"));
        assert!(text.contains("NA(too_few_non_pro_drop)"));
        assert_eq!(Grid::from_csv(&text).unwrap(), g);
    }

    #[test]
    fn grid_text_rendering() {
        let text = sample_grid().to_text("T");
        assert!(text.contains("49090.319 / 0.063"));
        assert!(text.contains("NA(too_few_non_pro_drop)"));
        assert_eq!(text.lines().count(), 5);
    }
}
