//! Character-verb continuity analysis for pro-drop in narrative discourse.
//!
//! The pipeline runs bottom-up: [`corpus`] parses the annotation table,
//! [`chains`] builds each character's verb history, [`relevance`] scores
//! history verbs against the current verb, [`salience`] compares the correct
//! character with its competitors and [`stats`] tests whether dropped
//! agents stand out more than overt ones. [`report`] wires the stages
//! together and renders the result grids.

pub mod chains;
pub mod corpus;
pub mod embeddings;
pub mod relevance;
pub mod report;
pub mod salience;
pub mod stats;
pub mod synth;

pub use chains::{build_usage_table, RoleFilter, UsageTable};
pub use corpus::{parse_annotations, summarize, validate, CharacterId, Discourse, VerbEvent};
pub use embeddings::{baseline_source, cosine, load_lexicon, load_token_table, EmbeddingSource, Vector};
pub use relevance::{clause_weight, unweighted_relevance, weighted_relevance, OovPolicy, RelevanceProfile};
pub use salience::{salience, salience_dataset, RangeSpec, SalienceDataset, SalienceOptions, Weighting};
pub use stats::{rank_sum_test, rank_sum_test_with, repeated_split_accuracy, resampled_group_test, train_logreg};
pub use report::{run_pipeline, ReportBundle, RunConfig, SourceSpec};
