use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use topic_chain::chains::build_usage_table;
use topic_chain::corpus::{summarize, Severity};
use topic_chain::relevance::{write_relevance_tsv, EventVectors};
use topic_chain::report::{self, compute_dataset, load_discourse, load_sources, PipelineError, RunConfig};
use topic_chain::synth::{self, SyntheticConfig};

#[derive(Parser)]
#[command(name = "topic-chain", version, about = "Character-verb continuity analysis of pro-drop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an annotation file and list every finding.
    Validate(RunArgs),
    /// Print corpus counts as JSON.
    Summarize(RunArgs),
    /// Print each character's verb history.
    Table(RunArgs),
    /// Write the salience table (salience.csv).
    Salience {
        #[command(flatten)]
        run: RunArgs,
        /// Also write per-event relevance rows for every source.
        #[arg(long)]
        relevance_dump: bool,
    },
    /// Run the whole pipeline and write the result bundle.
    Analyze(RunArgs),
    /// Generate a synthetic annotated corpus with a matching lexicon.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct RunArgs {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// NAME=lexicon:PATH, NAME=per_token:PATH or NAME=baseline[:seed:N,dim:D]. Repeatable.
    #[arg(long = "source")]
    sources: Vec<String>,
    /// Comma-separated, e.g. `all,10,20,30`.
    #[arg(long)]
    ranges: Option<String>,
    /// weighted, unweighted or both (comma-separated).
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long)]
    test_repeats: Option<usize>,
    #[arg(long)]
    predict_repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// agent_only or agent_and_patient.
    #[arg(long)]
    role_filter: Option<String>,
    #[arg(long)]
    range_truncates_history: bool,
    #[arg(long)]
    eq4_exclude_self: bool,
    #[arg(long)]
    oov_policy: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    verbs: usize,
    #[arg(long, default_value_t = 6)]
    characters: u16,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 2023)]
    seed: u64,
    /// Output directory for annotations.tsv, lexicon.txt and run.conf.
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_kv_text(&text, path.parent())
                    .with_context(|| format!("config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if !self.sources.is_empty() {
            cfg.sources.clear();
        }
        let mut set = |key: &str, value: String| cfg.set(key, &value).map_err(anyhow::Error::from);
        if let Some(p) = &self.annotations {
            set("annotations", p.display().to_string())?;
        }
        for s in &self.sources {
            set("source", s.clone())?;
        }
        if let Some(v) = &self.ranges {
            set("ranges", v.clone())?;
        }
        if let Some(v) = &self.weighting {
            set("weighting", v.clone())?;
        }
        if let Some(v) = self.test_repeats {
            set("test-repeats", v.to_string())?;
        }
        if let Some(v) = self.predict_repeats {
            set("predict-repeats", v.to_string())?;
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if let Some(p) = &self.out {
            set("out", p.display().to_string())?;
        }
        if let Some(v) = &self.role_filter {
            set("role-filter", v.clone())?;
        }
        if self.range_truncates_history {
            set("range-truncates-history", "true".into())?;
        }
        if self.eq4_exclude_self {
            set("eq4-exclude-self", "true".into())?;
        }
        if let Some(v) = &self.oov_policy {
            set("oov-policy", v.clone())?;
        }
        Ok(cfg)
    }
}

fn output(path: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let file = dir.join(name);
            Box::new(BufWriter::new(
                File::create(&file).with_context(|| format!("creating {}", file.display()))?,
            ))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn validate(args: &RunArgs) -> Result<ExitCode> {
    let cfg = args.config()?;
    let (_, report) = load_discourse(&cfg)?;
    for f in &report.findings {
        let level = match f.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        println!("{level}: {:?}: {}", f.location, f.message);
    }
    let errors = report.error_count();
    println!(
        "{} finding(s), {errors} error(s)",
        report.findings.len()
    );
    Ok(if errors > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn load_valid(cfg: &RunConfig) -> Result<topic_chain::Discourse> {
    let (d, report) = load_discourse(cfg)?;
    if report.error_count() > 0 {
        return Err(PipelineError::Validation(report).into());
    }
    Ok(d)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(args) => return validate(&args),
        Command::Summarize(args) => {
            let d = load_valid(&args.config()?)?;
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, &summarize(&d))?;
            writeln!(out)?;
        }
        Command::Table(args) => {
            let cfg = args.config()?;
            let d = load_valid(&cfg)?;
            let table = build_usage_table(&d, cfg.role_filter);
            let mut out = output(cfg.out.as_deref(), "usage_table.tsv")?;
            table.write_tsv(&d, &mut out)?;
            out.flush()?;
        }
        Command::Salience { run, relevance_dump } => {
            let cfg = run.config()?;
            cfg.check()?;
            let d = load_valid(&cfg)?;
            let sources = load_sources(&cfg)?;
            let (table, ds) = compute_dataset(&cfg, &d, &sources);
            let mut out = output(cfg.out.as_deref(), "salience.csv")?;
            ds.write_csv(&d, &mut out)?;
            out.flush()?;
            if relevance_dump {
                let Some(dir) = cfg.out.as_deref() else {
                    bail!("--relevance-dump needs --out");
                };
                for s in &sources {
                    let ev = EventVectors::new(&d, s);
                    let profiles: Vec<_> = (0..d.events.len()).map(|t| ev.profile(&table, t, None)).collect();
                    let mut w = output(Some(dir), &format!("relevance_{}.tsv", s.name()))?;
                    write_relevance_tsv(&d, &profiles, &mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Analyze(args) => {
            let cfg = args.config()?;
            let Some(out) = cfg.out.clone() else {
                bail!("analyze needs --out (or `out` in the config file)");
            };
            let bundle = report::run_pipeline(&cfg)?;
            bundle.write_to(&out)?;
            print!("{}", bundle.group_tests.to_text("group tests (mean statistic / mean p)"));
            print!("{}", bundle.accuracy.to_text("prediction accuracy"));
            println!("wrote {} files to {}", bundle.files().len(), out.display());
        }
        Command::Synth(args) => {
            let corpus = synth::generate(&SyntheticConfig {
                verbs: args.verbs,
                characters: args.characters,
                dim: args.dim,
                seed: args.seed,
                ..SyntheticConfig::default()
            });
            fs::create_dir_all(&args.out)?;
            fs::write(args.out.join("annotations.tsv"), corpus.discourse.to_annotation_string())?;
            fs::write(args.out.join("lexicon.txt"), &corpus.lexicon)?;
            fs::write(
                args.out.join("run.conf"),
                "annotations = annotations.tsv\n\
                 source = synthetic=lexicon:lexicon.txt\n\
                 source = random=baseline:dim:32\n\
                 ranges = all,10,20,30\n\
                 seed = 2023\n\
                 out = results\n",
            )?;
            println!("wrote {} verbs to {}", args.verbs, args.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            // Causes already spelled out by their parent are skipped.
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.contains(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
