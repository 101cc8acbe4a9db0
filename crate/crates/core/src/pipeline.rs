//! Scoring runs, the synthetic-effect backend, analysis dispatch and
//! atomic report output.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::{self, AlignError, ScoreSet, SurprisalTable};
use crate::backend::{
    token_spans, BackendError, ExternalBackend, ScoringRequest, SentenceId, SurprisalBackend, TokenSurprisal,
};
use crate::experiment::{to_json, AnalysisKind, AnalysisSpec, Experiment, ExperimentError};
use crate::report;
use crate::stats::{self, CiSet, ResultRow, StatsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Scores every cell of `exp`, spreading requests over `jobs` threads.
pub fn score_experiment(exp: &Experiment, backend: &dyn SurprisalBackend, jobs: usize) -> Result<ScoreSet, PipelineError> {
    let requests = ScoringRequest::for_experiment(exp);
    backend.check_coverage(&requests)?;
    let jobs = jobs.max(1).min(requests.len().max(1));
    let chunk = requests.len().div_ceil(jobs).max(1);
    let results: Vec<Result<Vec<(String, Vec<TokenSurprisal>)>, BackendError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = requests
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|r| backend.score_request(r).map(|rows| (r.id.to_string(), rows)))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring worker panicked")).collect()
    });
    let mut scores = ScoreSet::new();
    for part in results {
        scores.extend(part?);
    }
    Ok(scores)
}

pub fn score_table(exp: &Experiment, backend: &dyn SurprisalBackend, jobs: usize) -> Result<SurprisalTable, PipelineError> {
    let scores = score_experiment(exp, backend, jobs)?;
    Ok(alignment::aggregate(exp, &scores)?)
}

/// An effect added to a region's total when every `(factor, level)` holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub region: String,
    pub when: Vec<(String, String)>,
    pub delta: f64,
}

impl Injection {
    pub fn new(region: &str, when: &[(&str, &str)], delta: f64) -> Self {
        Injection {
            region: region.into(),
            when: when.iter().map(|(f, l)| (f.to_string(), l.to_string())).collect(),
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub base_bits: f64,
    pub item_sd: f64,
    pub noise_sd: f64,
    pub injections: Vec<Injection>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(base_bits: f64, item_sd: f64, noise_sd: f64, seed: u64) -> Self {
        SynthConfig { base_bits, item_sd, noise_sd, injections: Vec::new(), seed }
    }

    pub fn inject(mut self, injection: Injection) -> Self {
        self.injections.push(injection);
        self
    }
}

/// A backend whose region totals are `base + item offset + injected deltas`,
/// spread evenly over the region's tokens, plus iid noise per token.
pub fn synth_backend(exp: &Experiment, config: &SynthConfig) -> Result<ExternalBackend, PipelineError> {
    for inj in &config.injections {
        if exp.region_index(&inj.region).is_none() {
            return Err(PipelineError::Invalid(format!("injection names unknown region \"{}\"", inj.region)));
        }
        for (f, l) in &inj.when {
            let ok = exp.factor(f).is_some_and(|factor| factor.level_index(l).is_some());
            if !ok {
                return Err(PipelineError::Invalid(format!("injection names unknown condition {f}={l}")));
            }
        }
    }
    let bad_sd = |v: f64| !(v.is_finite() && v >= 0.0);
    if bad_sd(config.item_sd) || bad_sd(config.noise_sd) || !config.base_bits.is_finite() {
        return Err(PipelineError::Invalid("synthetic backend needs finite base and non-negative sds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let item_dist = Normal::new(0.0, config.item_sd).expect("checked sd");
    let noise = Normal::new(0.0, config.noise_sd).expect("checked sd");
    let offsets: Vec<f64> = exp.items.iter().map(|_| item_dist.sample(&mut rng)).collect();
    let names = exp.region_names();
    let mut rows = Vec::new();
    for (item, offset) in exp.items.iter().zip(&offsets) {
        for key in exp.enumerate_cells() {
            let id = SentenceId::new(&exp.name, item.id, key.canonical());
            let texts = item.regions(&key).expect("full factorial");
            let text = crate::experiment::join_regions(texts);
            let spans = alignment::spans_for_texts(&names, texts);
            let mut tokens: Vec<TokenSurprisal> = token_spans(&text, exp.mode)
                .into_iter()
                .map(|(token, start, end)| TokenSurprisal { token, start, end, surprisal: 0.0 })
                .collect();
            let groups = alignment::assign_tokens(&id.to_string(), &spans, &tokens)?;
            for (r, group) in groups.iter().enumerate() {
                if group.is_empty() {
                    continue;
                }
                let delta: f64 = config
                    .injections
                    .iter()
                    .filter(|inj| inj.region == names[r] && inj.when.iter().all(|(f, l)| key.level_of(f) == Some(l)))
                    .map(|inj| inj.delta)
                    .sum();
                let per_token = (config.base_bits + offset + delta) / group.len() as f64;
                for &t in group {
                    tokens[t].surprisal = per_token + noise.sample(&mut rng);
                }
            }
            if let Some(bad) = tokens.iter().find(|t| !(t.surprisal >= 0.0)) {
                return Err(PipelineError::Invalid(format!(
                    "{id}: synthetic surprisal {} for \"{}\" is negative; raise the base bits",
                    bad.surprisal, bad.token
                )));
            }
            rows.push((id, tokens));
        }
    }
    Ok(ExternalBackend::from_rows(format!("synth-{}", config.seed), exp.mode, rows))
}

/// Per-region difference `a - b` between two conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub region: String,
    pub difference: f64,
    /// Masson–Loftus half-width over the two-condition subtable.
    pub ci_half_width: f64,
    pub se: f64,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceProfile {
    pub pair: (String, String),
    pub points: Vec<ProfilePoint>,
}

pub fn difference_profile(
    table: &SurprisalTable,
    exp: &Experiment,
    pair: (&str, &str),
    regions: &[String],
) -> Result<DifferenceProfile, PipelineError> {
    for c in [pair.0, pair.1] {
        if exp.condition_key(c).is_none() {
            return Err(PipelineError::Invalid(format!("unknown condition \"{c}\"")));
        }
    }
    let regions = if regions.is_empty() { exp.region_names() } else { regions.to_vec() };
    let conds = vec![pair.0.to_string(), pair.1.to_string()];
    let m = exp.items.len();
    let mut points = Vec::with_capacity(regions.len());
    for region in &regions {
        let values = stats::item_condition_matrix(table, exp, &conds, std::slice::from_ref(region))?;
        let diffs: Vec<f64> = values.iter().map(|r| r[0] - r[1]).collect();
        let mean = diffs.iter().sum::<f64>() / m as f64;
        let ci = stats::masson_loftus_ci(&conds, &values)?;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let se = (var / m as f64).sqrt();
        let df = m as f64 - 1.0;
        let t = mean / se;
        let p = if se > 0.0 { stats::t_p_value(t, df) } else { f64::NAN };
        points.push(ProfilePoint {
            region: region.clone(),
            difference: mean,
            ci_half_width: ci.half_widths[0],
            se,
            t: if se > 0.0 { t } else { f64::NAN },
            df,
            p,
        });
    }
    Ok(DifferenceProfile { pair: (pair.0.to_string(), pair.1.to_string()), points })
}

impl DifferenceProfile {
    pub fn rows(&self, analysis: &str) -> Vec<ResultRow> {
        self.points
            .iter()
            .map(|pt| ResultRow {
                analysis: analysis.to_string(),
                term: pt.region.clone(),
                estimate: pt.difference,
                se: pt.se,
                stat: pt.t,
                df: pt.df,
                p: pt.p,
                sigma_item: f64::NAN,
                sigma_resid: f64::NAN,
                method: "paired_difference".into(),
                flags: Vec::new(),
            })
            .collect()
    }
}

/// Everything one analysis produces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutcome {
    pub spec: AnalysisSpec,
    pub rows: Vec<ResultRow>,
    /// Condition means and within-item intervals over the target regions.
    pub means: Option<CiSet>,
    pub profile: Option<DifferenceProfile>,
}

pub fn run_analysis(table: &SurprisalTable, exp: &Experiment, spec: &AnalysisSpec) -> Result<AnalysisOutcome, PipelineError> {
    table.check_against(exp, &spec.regions)?;
    if let AnalysisKind::DifferenceProfile { pair } = &spec.kind {
        let profile = difference_profile(table, exp, (&pair.0, &pair.1), &spec.regions)?;
        return Ok(AnalysisOutcome { spec: spec.clone(), rows: profile.rows(&spec.name), means: None, profile: Some(profile) });
    }
    let design = stats::build_design(table, exp, spec)?;
    let fit = stats::fit_lmm_reml(&design)?;
    let conditions = stats::analysis_conditions(exp, spec);
    let values = stats::item_condition_matrix(table, exp, &conditions, &spec.regions)?;
    let means = stats::masson_loftus_ci(&conditions, &values)?;
    Ok(AnalysisOutcome { spec: spec.clone(), rows: fit.rows(&spec.name), means: Some(means), profile: None })
}

pub fn run_analyses(table: &SurprisalTable, exp: &Experiment) -> Result<Vec<AnalysisOutcome>, PipelineError> {
    exp.analyses.iter().map(|spec| run_analysis(table, exp, spec)).collect()
}

/// Per-(item, moderator level) licensing interaction in bits:
/// `((y[+,-] - y[+,+]) - (y[-,-] - y[-,+])) / 4` with `+` the first level of
/// each factor, so a positive value means the licensor facilitates the
/// licensee and penalises its absence. Written as a difference of
/// differences, swapping the labels of either factor negates it exactly.
pub fn licensing_scores(
    table: &SurprisalTable,
    exp: &Experiment,
    regions: &[String],
    licensor: &str,
    licensee: &str,
    moderator: &str,
) -> Result<Vec<(u32, String, f64)>, PipelineError> {
    let level_list = |f: &str| {
        exp.factor(f)
            .map(|f| f.levels.clone())
            .ok_or_else(|| PipelineError::Invalid(format!("unknown factor \"{f}\"")))
    };
    let (la, lb, lm) = (level_list(licensor)?, level_list(licensee)?, level_list(moderator)?);
    if la.len() != 2 || lb.len() != 2 {
        return Err(PipelineError::Invalid("licensor and licensee need two levels each".into()));
    }
    let cell = |a: &str, b: &str, m: &str| -> String {
        exp.factors
            .iter()
            .map(|f| {
                if f.name == licensor {
                    a
                } else if f.name == licensee {
                    b
                } else if f.name == moderator {
                    m
                } else {
                    f.levels[0].as_str()
                }
            })
            .collect::<Vec<_>>()
            .join("|")
    };
    let mut out = Vec::new();
    for item in &exp.items {
        for m in &lm {
            let y = |a: &str, b: &str| {
                table.region_total(item.id, &cell(a, b, m), regions).ok_or_else(|| {
                    PipelineError::Invalid(format!("item {} lacks {} in {regions:?}", item.id, cell(a, b, m)))
                })
            };
            let with = y(&la[0], &lb[1])? - y(&la[0], &lb[0])?;
            let without = y(&la[1], &lb[1])? - y(&la[1], &lb[0])?;
            let score = (with - without) / 4.0;
            out.push((item.id, m.clone(), score));
        }
    }
    Ok(out)
}

/// OLS of licensing scores on treatment-coded moderator levels
/// (the first level is the baseline).
pub fn licensing_regression(
    scores: &[(u32, String, f64)],
    levels: &[String],
) -> Result<(stats::OlsFit, Vec<String>), PipelineError> {
    let n = scores.len();
    let p = levels.len();
    let mut x = nalgebra::DMatrix::zeros(n, p);
    let mut y = nalgebra::DVector::zeros(n);
    for (row, (_, level, score)) in scores.iter().enumerate() {
        x[(row, 0)] = 1.0;
        let j = levels
            .iter()
            .position(|l| l == level)
            .ok_or_else(|| PipelineError::Invalid(format!("unknown moderator level \"{level}\"")))?;
        if j > 0 {
            x[(row, j)] = 1.0;
        }
        y[row] = *score;
    }
    let mut columns = vec!["(Intercept)".to_string()];
    columns.extend(levels.iter().skip(1).cloned());
    Ok((stats::fit_ols(&y, &x)?, columns))
}

/// Inputs and provenance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub backend_kind: String,
    pub backend_id: String,
    pub mode: String,
    pub seed: u64,
    pub flags: Vec<String>,
    pub timestamp: Option<String>,
    pub input_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunFlags {
    pub score_eos: bool,
}

impl RunFlags {
    pub fn labels(&self) -> Vec<String> {
        vec![format!("score-eos={}", self.score_eos)]
    }
}

pub fn input_hash(exp: &Experiment, fingerprint: &[u8], flags: &[String], seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(to_json(exp).as_bytes());
    h.update([0u8]);
    h.update(fingerprint);
    h.update([0u8]);
    h.update(flags.join(",").as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(
        exp: &Experiment,
        backend: &dyn SurprisalBackend,
        flags: &RunFlags,
        seed: u64,
        timestamp: Option<String>,
    ) -> Self {
        let d = backend.descriptor();
        let labels = flags.labels();
        RunManifest {
            experiment: exp.name.clone(),
            backend_kind: d.kind.to_string(),
            backend_id: d.identifier,
            mode: d.mode.to_string(),
            seed,
            input_hash: input_hash(exp, &backend.fingerprint(), &labels, seed),
            flags: labels,
            timestamp,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// Writes a directory atomically: files go to a sibling temp directory
/// which replaces `out` only if `fill` succeeds. An existing `out` is
/// replaced only when it is empty or holds a previous run's manifest.
pub fn write_atomic_dir(
    out: &Path,
    fill: impl FnOnce(&Path) -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    if out.exists() {
        let is_run = out.join("manifest.json").is_file();
        let empty = out.is_dir() && fs::read_dir(out).map_err(io_err(out))?.next().is_none();
        if !(is_run || empty) {
            return Err(PipelineError::Invalid(format!(
                "{} exists and is not an empty directory or a previous run; refusing to replace it",
                out.display()
            )));
        }
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(io_err(out))?;
    }
    fs::rename(&tmp, out).map_err(io_err(out))?;
    Ok(())
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), PipelineError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&path, contents).map_err(io_err(&path))
}

/// Result of a scoring run.
#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub table: SurprisalTable,
    pub manifest: RunManifest,
}

/// Scores an experiment and writes `surprisals.csv`, `surprisal_tokens.tsv`
/// and `manifest.json` to `out`.
pub fn run_scoring(
    exp: &Experiment,
    backend: &dyn SurprisalBackend,
    flags: &RunFlags,
    seed: u64,
    jobs: usize,
    timestamp: Option<String>,
    out: &Path,
) -> Result<ScoreRun, PipelineError> {
    let table = score_table(exp, backend, jobs)?;
    let manifest = RunManifest::new(exp, backend, flags, seed, timestamp);
    write_atomic_dir(out, |dir| {
        write_file(dir, "surprisals.csv", &table.to_csv())?;
        write_file(dir, "surprisal_tokens.tsv", &table.details_tsv())?;
        write_file(dir, "manifest.json", &manifest.to_json())
    })?;
    Ok(ScoreRun { table, manifest })
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub table: SurprisalTable,
    pub outcomes: Vec<AnalysisOutcome>,
    pub manifest: RunManifest,
}

/// Scores, analyses and writes a full report directory to `out`.
/// Nothing is left behind if any step fails.
pub fn run_experiment(
    exp: &Experiment,
    backend: &dyn SurprisalBackend,
    flags: &RunFlags,
    seed: u64,
    jobs: usize,
    timestamp: Option<String>,
    out: &Path,
) -> Result<ExperimentRun, PipelineError> {
    let table = score_table(exp, backend, jobs)?;
    let outcomes = run_analyses(&table, exp)?;
    let manifest = RunManifest::new(exp, backend, flags, seed, timestamp);
    write_atomic_dir(out, |dir| report::write_report(dir, exp, &table, &outcomes, Some(&manifest)))?;
    Ok(ExperimentRun { table, outcomes, manifest })
}

/// Analyses a previously scored table and writes the report to `out`.
pub fn analyze_table(
    exp: &Experiment,
    table: &SurprisalTable,
    manifest: Option<&RunManifest>,
    out: &Path,
) -> Result<Vec<AnalysisOutcome>, PipelineError> {
    let outcomes = run_analyses(table, exp)?;
    write_atomic_dir(out, |dir| report::write_report(dir, exp, table, &outcomes, manifest))?;
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{self, PresetOptions};

    fn mvrr(items: usize) -> Experiment {
        presets::build("mvrr", &PresetOptions { items: Some(items), ..Default::default() }).unwrap()
    }

    #[test]
    fn synth_without_noise_or_injection_gives_flat_regions() {
        let exp = mvrr(4);
        let backend = synth_backend(&exp, &SynthConfig::new(8.0, 0.0, 0.0, 3)).unwrap();
        let table = score_table(&exp, &backend, 2).unwrap();
        for row in table.rows() {
            let expected = if row.n_tokens == 0 { 0.0 } else { 8.0 };
            assert!((row.sum_bits - expected).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn synth_injection_lands_in_its_cell() {
        let exp = mvrr(3);
        let cfg = SynthConfig::new(8.0, 0.0, 0.0, 3).inject(Injection::new(
            "Disambiguator",
            &[("reduction", "reduced"), ("ambiguity", "ambig")],
            5.0,
        ));
        let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
        assert_eq!(table.get(1, "reduced|ambig", "Disambiguator").unwrap().sum_bits, 13.0);
        assert_eq!(table.get(1, "reduced|unambig", "Disambiguator").unwrap().sum_bits, 8.0);
    }

    #[test]
    fn synth_rejects_unknown_region_and_negative_surprisal() {
        let exp = mvrr(2);
        let cfg = SynthConfig::new(8.0, 0.0, 0.0, 1).inject(Injection::new("Nope", &[], 1.0));
        assert!(synth_backend(&exp, &cfg).is_err());
        assert!(synth_backend(&exp, &SynthConfig::new(-1.0, 0.0, 0.0, 1)).is_err());
    }

    #[test]
    fn parallel_scoring_matches_serial() {
        let exp = mvrr(5);
        let backend = synth_backend(&exp, &SynthConfig::new(8.0, 1.0, 0.3, 9)).unwrap();
        assert_eq!(score_table(&exp, &backend, 1).unwrap(), score_table(&exp, &backend, 4).unwrap());
    }

    #[test]
    fn atomic_dir_refuses_foreign_directories() {
        let root = tempfile::tempdir().unwrap();
        let foreign = root.path().join("foreign");
        fs::create_dir(&foreign).unwrap();
        fs::write(foreign.join("keep.txt"), "x").unwrap();
        assert!(write_atomic_dir(&foreign, |_| Ok(())).is_err());
        assert!(foreign.join("keep.txt").exists());

        let out = root.path().join("run");
        write_atomic_dir(&out, |d| write_file(d, "manifest.json", "{}")).unwrap();
        write_atomic_dir(&out, |d| write_file(d, "manifest.json", "{\"v\":2}")).unwrap();
        assert_eq!(fs::read_to_string(out.join("manifest.json")).unwrap(), "{\"v\":2}");
        let failed = write_atomic_dir(&out, |d| {
            write_file(d, "partial.csv", "x")?;
            Err(PipelineError::Invalid("boom".into()))
        });
        assert!(failed.is_err());
        assert!(!out.join("partial.csv").exists());
        let leftovers: Vec<_> = fs::read_dir(root.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(leftovers.len(), 2, "{leftovers:?}");
    }
}
