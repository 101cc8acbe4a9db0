//! Completion sampling, file-mediated grammaticality judgments and the
//! mixed-logit analysis of judged completions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::backend::{escape_field, unescape_field, BackendError, SurprisalBackend};
use crate::experiment::Experiment;
use crate::stats::{self, LogitFit, RandomEffects, ResultRow, StatsError};

pub const COMPLETIONS_HEADER: &str = "prefix_id\tcondition\tbackend\tsample_idx\ttext\thas_unk\tjudgment";
pub const PROPORTIONS_HEADER: &str = "condition,depth,backend,proportion,ci_half_width,n_items,n_records";

#[derive(Debug, thiserror::Error)]
pub enum CompletionError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown judgment {value:?} (expected grammatical, ungrammatical, unjudgeable or pending)")]
    UnknownJudgment { line: usize, value: String },
    #[error("conflicting judgments for {0}")]
    Conflict(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{} record(s) still pending: {}", .0.len(), .0.join(", "))]
    Pending(Vec<String>),
    #[error("no data after exclusions ({dropped} of {sampled} records unjudgeable)")]
    NoData { sampled: usize, dropped: usize },
    #[error("condition {0:?} does not name an embedding depth")]
    Depth(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Judgment {
    Grammatical,
    Ungrammatical,
    Unjudgeable,
    Pending,
}

impl fmt::Display for Judgment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Judgment::Grammatical => "grammatical",
            Judgment::Ungrammatical => "ungrammatical",
            Judgment::Unjudgeable => "unjudgeable",
            Judgment::Pending => "pending",
        })
    }
}

impl FromStr for Judgment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "grammatical" => Ok(Judgment::Grammatical),
            "ungrammatical" => Ok(Judgment::Ungrammatical),
            "unjudgeable" => Ok(Judgment::Unjudgeable),
            "pending" => Ok(Judgment::Pending),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRecord {
    pub prefix_id: u32,
    pub condition: String,
    pub backend: String,
    pub sample_idx: usize,
    pub text: String,
    pub has_unk: bool,
    pub judgment: Judgment,
}

impl CompletionRecord {
    pub fn id(&self) -> String {
        format!("{}/{}/{}/{}", self.prefix_id, self.condition, self.backend, self.sample_idx)
    }

    fn key(&self) -> (u32, String, String, usize) {
        (self.prefix_id, self.condition.clone(), self.backend.clone(), self.sample_idx)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one (prefix, condition) cell. Backends share it, so every
/// model sees the same random stream for the same prefix.
pub fn cell_seed(seed: u64, prefix_id: u32, condition_index: usize) -> u64 {
    splitmix64(splitmix64(seed ^ u64::from(prefix_id)).wrapping_add(condition_index as u64))
}

/// `k` pending records per item, condition and backend. Prefixes are the
/// experiment's full cell texts.
pub fn run_completions(
    exp: &Experiment,
    backends: &[&dyn SurprisalBackend],
    k: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<CompletionRecord>, CompletionError> {
    let cells = exp.enumerate_cells();
    let mut out = Vec::with_capacity(exp.items.len() * cells.len() * backends.len() * k);
    for item in &exp.items {
        for (ci, key) in cells.iter().enumerate() {
            let prefix = item.cell_text(key).unwrap_or_default();
            let condition = key.canonical();
            let cseed = cell_seed(seed, item.id, ci);
            for backend in backends {
                let id = backend.descriptor().identifier;
                let samples = backend.sample_request(&prefix, k, max_len, cseed)?;
                if samples.len() != k {
                    return Err(CompletionError::Mismatch(format!("backend {id} returned {} samples, expected {k}", samples.len())));
                }
                for (i, s) in samples.into_iter().enumerate() {
                    out.push(CompletionRecord {
                        prefix_id: item.id,
                        condition: condition.clone(),
                        backend: id.clone(),
                        sample_idx: i,
                        text: s.text,
                        has_unk: s.has_unk,
                        judgment: Judgment::Pending,
                    });
                }
            }
        }
    }
    Ok(out)
}

pub fn to_tsv(records: &[CompletionRecord]) -> String {
    let mut out = format!("{COMPLETIONS_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.prefix_id,
            escape_field(&r.condition),
            escape_field(&r.backend),
            r.sample_idx,
            escape_field(&r.text),
            r.has_unk,
            r.judgment
        );
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<CompletionRecord>, CompletionError> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| CompletionError::Parse { line, message };
    match lines.find(|(_, l)| !l.trim().is_empty()) {
        Some((_, header)) if header.trim_end_matches('\r') == COMPLETIONS_HEADER => {}
        Some((i, header)) => return Err(parse_err(i + 1, format!("expected header {COMPLETIONS_HEADER:?}, found {header:?}"))),
        None => return Err(parse_err(1, "empty completions file".into())),
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in lines {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 7 {
            return Err(parse_err(line, format!("expected 7 fields, found {}", f.len())));
        }
        let record = CompletionRecord {
            prefix_id: f[0].parse().map_err(|_| parse_err(line, format!("bad prefix_id {:?}", f[0])))?,
            condition: unescape_field(f[1]).map_err(|e| parse_err(line, e))?,
            backend: unescape_field(f[2]).map_err(|e| parse_err(line, e))?,
            sample_idx: f[3].parse().map_err(|_| parse_err(line, format!("bad sample_idx {:?}", f[3])))?,
            text: unescape_field(f[4]).map_err(|e| parse_err(line, e))?,
            has_unk: match f[5] {
                "true" => true,
                "false" => false,
                other => return Err(parse_err(line, format!("has_unk must be true or false, found {other:?}"))),
            },
            judgment: f[6].trim().parse().map_err(|value| CompletionError::UnknownJudgment { line, value })?,
        };
        if !seen.insert(record.key()) {
            return Err(parse_err(line, format!("duplicate record {}", record.id())));
        }
        out.push(record);
    }
    Ok(out)
}

/// Folds judged copies of a pending file into it. Records containing an
/// unknown token are always unjudgeable; two files that disagree on a
/// record are an error.
pub fn merge_judgments(
    pending: &[CompletionRecord],
    judged: &[Vec<CompletionRecord>],
) -> Result<Vec<CompletionRecord>, CompletionError> {
    let mut merged: Vec<CompletionRecord> = pending.to_vec();
    let index: BTreeMap<_, usize> = merged.iter().enumerate().map(|(i, r)| (r.key(), i)).collect();
    for file in judged {
        for r in file {
            let &i = index
                .get(&r.key())
                .ok_or_else(|| CompletionError::Mismatch(format!("record {} is not in the sampled file", r.id())))?;
            let base = &mut merged[i];
            if base.text != r.text || base.has_unk != r.has_unk {
                return Err(CompletionError::Mismatch(format!("record {} was edited beyond its judgment", r.id())));
            }
            match (base.judgment, r.judgment) {
                (_, Judgment::Pending) => {}
                (Judgment::Pending, j) => base.judgment = j,
                (a, b) if a == b => {}
                _ => return Err(CompletionError::Conflict(r.id())),
            }
        }
    }
    for r in &mut merged {
        if r.has_unk {
            r.judgment = Judgment::Unjudgeable;
        }
    }
    Ok(merged)
}

/// Embedding depth named by a condition: a number or an English number word.
pub fn depth_value(condition: &str) -> Result<f64, CompletionError> {
    const WORDS: [&str; 10] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
    if let Ok(d) = condition.parse::<f64>() {
        if d.is_finite() {
            return Ok(d);
        }
    }
    WORDS
        .iter()
        .position(|w| *w == condition)
        .map(|d| d as f64)
        .ok_or_else(|| CompletionError::Depth(condition.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proportion {
    pub condition: String,
    pub depth: f64,
    pub backend: String,
    /// Mean over items of each item's grammatical proportion.
    pub proportion: f64,
    pub ci_half_width: f64,
    pub n_items: usize,
    pub n_records: usize,
}

#[derive(Debug, Clone)]
pub struct CompletionAnalysis {
    pub columns: Vec<String>,
    pub fit: LogitFit,
    pub proportions: Vec<Proportion>,
    pub sampled: usize,
    pub dropped: usize,
    pub analyzed: usize,
}

impl CompletionAnalysis {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.fit.rows("completions", &self.columns)
    }

    pub fn proportions_csv(&self) -> String {
        let mut out = format!("{PROPORTIONS_HEADER}\n");
        for p in &self.proportions {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{}",
                p.condition,
                p.depth,
                p.backend,
                p.proportion,
                if p.ci_half_width.is_nan() { "NA".into() } else { format!("{:.6}", p.ci_half_width) },
                p.n_items,
                p.n_records
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "sampled {}, dropped {} unjudgeable, analyzed {}; logit {} (sigma_item {:.6}){}\n",
            self.sampled,
            self.dropped,
            self.analyzed,
            self.fit.method,
            self.fit.sigma_item,
            if self.fit.separation { "; separation" } else { "" }
        )
    }
}

/// Mixed logit of grammaticality on numeric depth, plus sum-coded backend
/// terms and their interaction with depth when several backends are present.
pub fn analyze_completions(records: &[CompletionRecord]) -> Result<CompletionAnalysis, CompletionError> {
    let pending: Vec<String> = records.iter().filter(|r| r.judgment == Judgment::Pending).map(CompletionRecord::id).collect();
    if !pending.is_empty() {
        return Err(CompletionError::Pending(pending));
    }
    let sampled = records.len();
    let kept: Vec<&CompletionRecord> =
        records.iter().filter(|r| !r.has_unk && r.judgment != Judgment::Unjudgeable).collect();
    let dropped = sampled - kept.len();
    if kept.is_empty() {
        return Err(CompletionError::NoData { sampled, dropped });
    }

    let mut backends: Vec<String> = Vec::new();
    for r in records {
        if !backends.contains(&r.backend) {
            backends.push(r.backend.clone());
        }
    }
    let nb = backends.len();
    let mut columns = vec!["(Intercept)".to_string(), "depth".to_string()];
    let label = |b: &str| if nb == 2 { "backend".to_string() } else { format!("backend={b}") };
    for b in &backends[..nb - 1] {
        columns.push(label(b));
    }
    for b in &backends[..nb - 1] {
        columns.push(format!("depth:{}", label(b)));
    }

    let items: BTreeSet<u32> = kept.iter().map(|r| r.prefix_id).collect();
    let group_of: BTreeMap<u32, usize> = items.iter().enumerate().map(|(g, &id)| (id, g)).collect();
    let mut x = DMatrix::zeros(kept.len(), columns.len());
    let mut y = Vec::with_capacity(kept.len());
    let mut groups = Vec::with_capacity(kept.len());
    for (row, r) in kept.iter().enumerate() {
        let depth = depth_value(&r.condition)?;
        let bi = backends.iter().position(|b| *b == r.backend).expect("backend listed");
        x[(row, 0)] = 1.0;
        x[(row, 1)] = depth;
        for j in 0..nb - 1 {
            let code = if bi == j { 1.0 } else if bi == nb - 1 { -1.0 } else { 0.0 };
            x[(row, 2 + j)] = code;
            x[(row, 2 + nb - 1 + j)] = depth * code;
        }
        y.push(r.judgment == Judgment::Grammatical);
        groups.push(group_of[&r.prefix_id]);
    }
    let random = if items.len() >= 2 { RandomEffects::Intercept } else { RandomEffects::None };
    let fit = stats::fit_logit(&y, &x, &groups, random)?;

    let mut cells: BTreeMap<(String, String), BTreeMap<u32, (usize, usize)>> = BTreeMap::new();
    for r in &kept {
        let e = cells.entry((r.condition.clone(), r.backend.clone())).or_default().entry(r.prefix_id).or_default();
        e.0 += usize::from(r.judgment == Judgment::Grammatical);
        e.1 += 1;
    }
    let mut proportions = Vec::new();
    for ((condition, backend), per_item) in cells {
        let props: Vec<f64> = per_item.values().map(|&(g, n)| g as f64 / n as f64).collect();
        let n = props.len() as f64;
        let mean = props.iter().sum::<f64>() / n;
        let ci_half_width = if props.len() < 2 {
            f64::NAN
        } else {
            let var = props.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
            stats::t_quantile(0.975, n - 1.0) * (var / n).sqrt()
        };
        proportions.push(Proportion {
            depth: depth_value(&condition)?,
            condition,
            backend,
            proportion: mean,
            ci_half_width,
            n_items: props.len(),
            n_records: per_item.values().map(|v| v.1).sum(),
        });
    }
    proportions.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.backend.cmp(&b.backend)));
    Ok(CompletionAnalysis { columns, fit, proportions, sampled, dropped, analyzed: kept.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(prefix_id: u32, condition: &str, idx: usize, has_unk: bool, judgment: Judgment) -> CompletionRecord {
        CompletionRecord {
            prefix_id,
            condition: condition.into(),
            backend: "m".into(),
            sample_idx: idx,
            text: format!("went\thome {idx}"),
            has_unk,
            judgment,
        }
    }

    #[test]
    fn tsv_round_trip_escapes_text() {
        let records = vec![rec(1, "one", 0, false, Judgment::Pending), rec(1, "two", 1, true, Judgment::Unjudgeable)];
        let text = to_tsv(&records);
        assert!(text.starts_with(COMPLETIONS_HEADER));
        assert_eq!(parse_tsv(&text).unwrap(), records);
    }

    #[test]
    fn unknown_judgment_is_rejected_with_line() {
        let text = format!("{COMPLETIONS_HEADER}\n1\tone\tm\t0\tx\tfalse\tmaybe\n");
        match parse_tsv(&text) {
            Err(CompletionError::UnknownJudgment { line: 2, value }) => assert_eq!(value, "maybe"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn merge_forces_unk_and_detects_conflicts() {
        let pending = vec![rec(1, "one", 0, false, Judgment::Pending), rec(1, "one", 1, true, Judgment::Pending)];
        let mut a = pending.clone();
        a[0].judgment = Judgment::Grammatical;
        a[1].judgment = Judgment::Grammatical;
        let merged = merge_judgments(&pending, &[a.clone()]).unwrap();
        assert_eq!(merged[0].judgment, Judgment::Grammatical);
        assert_eq!(merged[1].judgment, Judgment::Unjudgeable);
        let mut b = pending.clone();
        b[0].judgment = Judgment::Ungrammatical;
        assert!(matches!(merge_judgments(&pending, &[a, b]), Err(CompletionError::Conflict(_))));
    }

    #[test]
    fn pending_rows_are_listed() {
        let records = vec![rec(1, "one", 0, false, Judgment::Grammatical), rec(2, "two", 3, false, Judgment::Pending)];
        match analyze_completions(&records) {
            Err(CompletionError::Pending(ids)) => assert_eq!(ids, vec!["2/two/m/3".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_unjudgeable_is_no_data() {
        let records = vec![rec(1, "one", 0, true, Judgment::Unjudgeable), rec(2, "two", 0, false, Judgment::Unjudgeable)];
        assert!(matches!(analyze_completions(&records), Err(CompletionError::NoData { sampled: 2, dropped: 2 })));
    }

    #[test]
    fn all_grammatical_flags_separation() {
        let records: Vec<_> = (1..=4)
            .flat_map(|i| ["one", "two"].map(|c| rec(i, c, 0, false, Judgment::Grammatical)))
            .collect();
        let a = analyze_completions(&records).unwrap();
        assert!(a.fit.separation);
        assert!(a.proportions.iter().all(|p| p.proportion == 1.0 && p.ci_half_width == 0.0));
    }

    #[test]
    fn depth_words_and_numbers() {
        assert_eq!(depth_value("two").unwrap(), 2.0);
        assert_eq!(depth_value("3").unwrap(), 3.0);
        assert!(depth_value("deep").is_err());
    }
}
