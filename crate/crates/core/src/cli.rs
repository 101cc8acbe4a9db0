//! The `lmpsych` command line. Exit codes: 0 success, 2 input error, 1 internal error.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::alignment::SurprisalTable;
use crate::backend::{load_external, ExternalOptions, NGramBackend, SurprisalBackend, DEFAULT_CONTINUATION_MARKER};
use crate::completions::{self, CompletionError};
use crate::experiment::{self, Experiment, Mode};
use crate::ngram::{self, NGramModel, TrainConfig};
use crate::pipeline::{self, Injection, PipelineError, RunFlags, RunManifest, SynthConfig};
use crate::presets::{self, PresetOptions};
use crate::{corpus, stats};

#[derive(Debug, Parser)]
#[command(name = "lmpsych", version, about = "Psycholinguistic experiments on language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an interpolated modified Kneser-Ney model and write it as ARPA.
    Train(TrainArgs),
    /// Score every cell of an experiment and write region surprisals.
    Score(ScoreArgs),
    /// Run an experiment's analyses on a surprisal table and write a report.
    Analyze(AnalyzeArgs),
    /// Sample continuations of every prefix into a pending judgment file.
    Sample(SampleArgs),
    /// Merge hand-judged copies of a completion file.
    JudgeMerge(JudgeMergeArgs),
    /// Fit the mixed logit to judged completions.
    AnalyzeCompletions(AnalyzeCompletionsArgs),
    /// List or emit the bundled experiment designs.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
    /// Write a synthetic surprisal file with known effects.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[group(skip)]
pub struct ExperimentSource {
    /// Experiment document (JSON).
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub experiment: Option<PathBuf>,
    /// Bundled design to use instead of a document.
    #[arg(long)]
    pub preset: Option<String>,
    /// Number of items when generating a preset.
    #[arg(long, requires = "preset")]
    pub items: Option<usize>,
    /// Generator seed when generating a preset.
    #[arg(long, default_value_t = presets::DEFAULT_SEED, requires = "preset")]
    pub preset_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training text, one sentence per line.
    #[arg(long, required_unless_present = "bundled", conflicts_with = "bundled")]
    pub corpus: Option<PathBuf>,
    /// Train on the bundled English corpus.
    #[arg(long)]
    pub bundled: bool,
    /// Model order.
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Symbol unit: word or character.
    #[arg(long, default_value = "word", value_parser = parse_mode)]
    pub mode: Mode,
    /// Output ARPA path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// ARPA model to score with.
    #[arg(long, conflicts_with = "external", required_unless_present = "external")]
    pub ngram: Option<PathBuf>,
    /// Precomputed token surprisal TSV.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Backend identifier recorded in outputs; defaults to the file stem.
    #[arg(long)]
    pub backend_id: Option<String>,
    /// Subword continuation marker in external files.
    #[arg(long, default_value = DEFAULT_CONTINUATION_MARKER)]
    pub continuation_marker: String,
    /// Also score the end-of-sentence symbol, added to the last region.
    #[arg(long)]
    pub score_eos: bool,
    /// Scoring threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Seed recorded in the manifest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record the wall-clock time in the manifest.
    #[arg(long)]
    pub timestamp: bool,
    /// Also run the analyses and write the full report.
    #[arg(long)]
    pub analyze: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// Region surprisal table written by `score`.
    #[arg(long)]
    pub surprisals: PathBuf,
    /// Run manifest to copy into the report; defaults to manifest.json beside the table.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// ARPA model to sample from, as PATH or ID=PATH; repeatable.
    #[arg(long, required = true)]
    pub ngram: Vec<String>,
    /// Samples per prefix, condition and model.
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    /// Maximum continuation length in tokens.
    #[arg(long, default_value_t = 20)]
    pub max_len: usize,
    /// Sampling seed.
    #[arg(long)]
    pub seed: u64,
    /// Output completion TSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct JudgeMergeArgs {
    /// Completion file written by `sample`.
    #[arg(long)]
    pub pending: PathBuf,
    /// Judged copy of the completion file; repeatable.
    #[arg(long, required = true)]
    pub judged: Vec<PathBuf>,
    /// Merged output TSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeCompletionsArgs {
    /// Fully judged completion TSV.
    #[arg(long)]
    pub judged: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum PresetsAction {
    /// Print the preset names with their item counts.
    List,
    /// Print a preset as an experiment document.
    Emit {
        /// Preset name.
        name: String,
        /// Number of items.
        #[arg(long)]
        items: Option<usize>,
        /// Generator seed.
        #[arg(long, default_value_t = presets::DEFAULT_SEED)]
        seed: u64,
        /// Write to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// Base bits per region.
    #[arg(long, default_value_t = 20.0)]
    pub base: f64,
    /// Standard deviation of the per-item offset.
    #[arg(long, default_value_t = 0.0)]
    pub item_sd: f64,
    /// Standard deviation of per-token noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
    /// Effect as REGION:FACTOR=LEVEL,...:DELTA; repeatable.
    #[arg(long)]
    pub inject: Vec<String>,
    /// Noise seed.
    #[arg(long)]
    pub seed: u64,
    /// Output surprisal TSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit 2.
    Input(String),
    /// Anything else: exit 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Internal(m) => m,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Io { .. } => CliError::Internal(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<CompletionError> for CliError {
    fn from(e: CompletionError) -> Self {
        input(e)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_out(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn load_experiment(source: &ExperimentSource) -> Result<Experiment, CliError> {
    match (&source.experiment, &source.preset) {
        (Some(path), _) => experiment::parse_experiment(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        (None, Some(name)) => presets::build(name, &PresetOptions { seed: source.preset_seed, items: source.items }).map_err(input),
        (None, None) => Err(CliError::Input("one of --experiment or --preset is required".into())),
    }
}

fn load_model(path: &Path) -> Result<NGramModel, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    NGramModel::load_arpa(BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

fn ngram_backend(path: &Path, id: Option<String>, exp: &Experiment) -> Result<NGramBackend, CliError> {
    let model = load_model(path)?;
    if model.mode() != exp.mode {
        return Err(CliError::Input(format!(
            "{} is a {} model but experiment {} is in {} mode",
            path.display(),
            model.mode(),
            exp.name,
            exp.mode
        )));
    }
    Ok(NGramBackend::new(model, id.unwrap_or_else(|| stem(path))))
}

fn parse_injection(spec: &str) -> Result<Injection, CliError> {
    let bad = || CliError::Input(format!("bad --inject {spec:?}: expected REGION:FACTOR=LEVEL,...:DELTA"));
    let (region, rest) = spec.split_once(':').ok_or_else(bad)?;
    let (predicate, delta) = rest.rsplit_once(':').ok_or_else(bad)?;
    let delta: f64 = delta.trim().parse().map_err(|_| bad())?;
    let mut when = Vec::new();
    for clause in predicate.split(',').filter(|c| !c.trim().is_empty()) {
        let (f, l) = clause.split_once('=').ok_or_else(bad)?;
        when.push((f.trim().to_string(), l.trim().to_string()));
    }
    Ok(Injection { region: region.to_string(), when, delta })
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = match &args.corpus {
        Some(path) => read(path)?,
        None => corpus::BUNDLED_ENGLISH.to_string(),
    };
    let sentences = ngram::read_corpus(&text, args.mode);
    let model = ngram::train(&sentences, &TrainConfig::new(args.order, args.mode)).map_err(input)?;
    write_out(&args.out, &model.to_arpa())?;
    let _ = writeln!(
        out,
        "trained order-{} {} model on {} sentences: {:?} n-grams -> {}",
        model.order(),
        model.mode(),
        sentences.len(),
        model.ngram_counts(),
        args.out.display()
    );
    Ok(())
}

fn timestamp(on: bool) -> Option<String> {
    on.then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = load_experiment(&args.source)?;
    if args.jobs == 0 {
        return Err(CliError::Input("--jobs must be at least 1".into()));
    }
    let backend: Box<dyn SurprisalBackend> = match (&args.ngram, &args.external) {
        (Some(path), None) => Box::new(ngram_backend(path, args.backend_id.clone(), &exp)?.with_score_eos(args.score_eos)),
        (None, Some(path)) => {
            if args.score_eos {
                return Err(CliError::Input("--score-eos applies only to --ngram backends".into()));
            }
            let file = fs::File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            let mut options = ExternalOptions::new(args.backend_id.clone().unwrap_or_else(|| stem(path)), exp.mode);
            options.continuation_marker = args.continuation_marker.clone();
            Box::new(load_external(BufReader::new(file), &options).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?)
        }
        _ => return Err(CliError::Input("exactly one of --ngram or --external is required".into())),
    };
    let flags = RunFlags { score_eos: args.score_eos };
    let ts = timestamp(args.timestamp);
    if args.analyze {
        let run = pipeline::run_experiment(&exp, backend.as_ref(), &flags, args.seed, args.jobs, ts, &args.out)?;
        let _ = writeln!(out, "scored {} rows, ran {} analyses -> {}", run.table.rows().len(), run.outcomes.len(), args.out.display());
    } else {
        let run = pipeline::run_scoring(&exp, backend.as_ref(), &flags, args.seed, args.jobs, ts, &args.out)?;
        let _ = writeln!(out, "scored {} rows -> {}", run.table.rows().len(), args.out.join("surprisals.csv").display());
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = load_experiment(&args.source)?;
    let table = SurprisalTable::from_csv(&read(&args.surprisals)?).map_err(|e| CliError::Input(format!("{}: {e}", args.surprisals.display())))?;
    let regions: Vec<String> = exp.analyses.iter().flat_map(|a| a.regions.clone()).collect();
    table.check_against(&exp, &regions).map_err(input)?;
    let manifest_path = match &args.manifest {
        Some(p) => Some(p.clone()),
        None => args.surprisals.parent().map(|d| d.join("manifest.json")).filter(|p| p.is_file()),
    };
    let manifest: Option<RunManifest> = match manifest_path {
        Some(p) => Some(serde_json::from_str(&read(&p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let outcomes = pipeline::analyze_table(&exp, &table, manifest.as_ref(), &args.out)?;
    let _ = writeln!(out, "ran {} analyses -> {}", outcomes.len(), args.out.join("report.md").display());
    Ok(())
}

fn cmd_sample(args: &SampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = load_experiment(&args.source)?;
    if args.k == 0 {
        return Err(CliError::Input("--k must be at least 1".into()));
    }
    let mut backends = Vec::new();
    for spec in &args.ngram {
        let (id, path) = match spec.split_once('=') {
            Some((id, path)) => (Some(id.to_string()), PathBuf::from(path)),
            None => (None, PathBuf::from(spec)),
        };
        backends.push(ngram_backend(&path, id, &exp)?);
    }
    let refs: Vec<&dyn SurprisalBackend> = backends.iter().map(|b| b as &dyn SurprisalBackend).collect();
    let records = completions::run_completions(&exp, &refs, args.k, args.max_len, args.seed)?;
    write_out(&args.out, &completions::to_tsv(&records))?;
    let unk = records.iter().filter(|r| r.has_unk).count();
    let _ = writeln!(out, "sampled {} completions ({unk} with unknown tokens) -> {}", records.len(), args.out.display());
    Ok(())
}

fn read_completions(path: &Path) -> Result<Vec<completions::CompletionRecord>, CliError> {
    completions::parse_tsv(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_judge_merge(args: &JudgeMergeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pending = read_completions(&args.pending)?;
    let judged = args.judged.iter().map(|p| read_completions(p)).collect::<Result<Vec<_>, _>>()?;
    let merged = completions::merge_judgments(&pending, &judged)?;
    write_out(&args.out, &completions::to_tsv(&merged))?;
    let left = merged.iter().filter(|r| r.judgment == completions::Judgment::Pending).count();
    let _ = writeln!(out, "merged {} records, {left} still pending -> {}", merged.len(), args.out.display());
    Ok(())
}

fn cmd_analyze_completions(args: &AnalyzeCompletionsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let records = read_completions(&args.judged)?;
    let analysis = completions::analyze_completions(&records)?;
    pipeline::write_atomic_dir(&args.out, |dir| {
        fs::write(dir.join("results.csv"), stats::results_csv(&analysis.rows())).map_err(|e| PipelineError::Io { path: dir.join("results.csv"), source: e })?;
        fs::write(dir.join("proportions.csv"), analysis.proportions_csv()).map_err(|e| PipelineError::Io { path: dir.join("proportions.csv"), source: e })?;
        fs::write(dir.join("summary.txt"), analysis.summary()).map_err(|e| PipelineError::Io { path: dir.join("summary.txt"), source: e })
    })?;
    let _ = write!(out, "{}", analysis.summary());
    Ok(())
}

fn cmd_presets(action: &PresetsAction, out: &mut dyn Write) -> Result<(), CliError> {
    match action {
        PresetsAction::List => {
            for p in presets::PRESETS.iter() {
                let _ = writeln!(out, "{}\t{}\t{}\t{}", p.name, p.items, p.mode, p.description);
            }
        }
        PresetsAction::Emit { name, items, seed, out: path } => {
            let exp = presets::build(name, &PresetOptions { seed: *seed, items: *items }).map_err(input)?;
            let json = experiment::to_json(&exp);
            match path {
                Some(p) => write_out(p, &json)?,
                None => {
                    let _ = out.write_all(json.as_bytes());
                }
            }
        }
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let exp = load_experiment(&args.source)?;
    let mut config = SynthConfig::new(args.base, args.item_sd, args.noise_sd, args.seed);
    for spec in &args.inject {
        config = config.inject(parse_injection(spec)?);
    }
    let backend = pipeline::synth_backend(&exp, &config)?;
    write_out(&args.out, &backend.to_tsv())?;
    let _ = writeln!(out, "wrote {} sentences -> {}", backend.len(), args.out.display());
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Sample(a) => cmd_sample(a, out),
        Command::JudgeMerge(a) => cmd_judge_merge(a, out),
        Command::AnalyzeCompletions(a) => cmd_analyze_completions(a, out),
        Command::Presets { action } => cmd_presets(action, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn command() -> clap::Command {
    Cli::command()
}
