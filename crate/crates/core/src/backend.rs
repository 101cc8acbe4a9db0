//! Scoring contract over surprisal sources.
//!
//! Two backends implement [`SurprisalBackend`]: [`NGramBackend`] wraps a
//! built-in model, [`ExternalBackend`] serves per-token surprisals read from a
//! TSV file produced elsewhere (a neural model bridge, or a synthetic oracle).
//! Character offsets are counted in Unicode scalar values, not bytes.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::experiment::{ConditionKey, Experiment, Mode};
use crate::ngram::{self, NGramError, NGramModel};

pub const TSV_HEADER: &str = "sentence_id\ttoken_index\ttoken\tstart\tend\tsurprisal_bits";
pub const DEFAULT_CONTINUATION_MARKER: &str = "##";

pub fn default_unk_tokens() -> Vec<String> {
    vec!["<unk>".to_string(), "<UNK>".to_string()]
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend has no surprisals for: {}", .0.join(", "))]
    MissingIds(Vec<String>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate token index {index} for {id}")]
    DuplicateToken { line: usize, id: String, index: usize },
    #[error("line {line}: token index {index} for {id} is out of order (expected {expected})")]
    NonMonotone { line: usize, id: String, index: usize, expected: usize },
    #[error("line {line}: surprisal {value} is negative or not finite")]
    BadSurprisal { line: usize, value: String },
    #[error("{id}: {message}")]
    Misaligned { id: String, message: String },
    #[error("backend {0} cannot sample continuations")]
    Capability(String),
    #[error(transparent)]
    NGram(#[from] NGramError),
}

/// `experiment/item/condition`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SentenceId {
    pub experiment: String,
    pub item: u32,
    pub condition: String,
}

impl SentenceId {
    pub fn new(experiment: impl Into<String>, item: u32, condition: impl Into<String>) -> Self {
        SentenceId { experiment: experiment.into(), item, condition: condition.into() }
    }
}

impl fmt::Display for SentenceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.experiment, self.item, self.condition)
    }
}

impl std::str::FromStr for SentenceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '/');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(e), Some(i), Some(c)) if !e.is_empty() && !c.is_empty() => {
                let item = i.parse().map_err(|_| format!("bad item id \"{i}\" in sentence id \"{s}\""))?;
                Ok(SentenceId::new(e, item, c))
            }
            _ => Err(format!("sentence id \"{s}\" is not experiment/item/condition")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRequest {
    pub id: SentenceId,
    pub text: String,
    /// Mode hint carried from the experiment; backends tokenize in their own mode.
    pub mode: Mode,
}

impl ScoringRequest {
    /// One request per (item, condition), in item then condition order.
    pub fn for_experiment(exp: &Experiment) -> Vec<ScoringRequest> {
        let cells = exp.enumerate_cells();
        let mut out = Vec::with_capacity(exp.items.len() * cells.len());
        for item in &exp.items {
            for key in &cells {
                out.push(Self::for_cell(exp, item.id, key));
            }
        }
        out
    }

    pub fn for_cell(exp: &Experiment, item: u32, key: &ConditionKey) -> ScoringRequest {
        let text = exp.item(item).and_then(|i| i.cell_text(key)).unwrap_or_default();
        ScoringRequest { id: SentenceId::new(&exp.name, item, key.canonical()), text, mode: exp.mode }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenSurprisal {
    pub token: String,
    /// Character span `[start, end)` within the sentence text.
    pub start: usize,
    pub end: usize,
    pub surprisal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    NGram,
    ExternalFile,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::NGram => "ngram",
            BackendKind::ExternalFile => "external-file",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub identifier: String,
    pub mode: Mode,
}

/// A sampled continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<String>,
    pub text: String,
    pub has_unk: bool,
}

pub trait SurprisalBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn score_request(&self, request: &ScoringRequest) -> Result<Vec<TokenSurprisal>, BackendError>;

    /// Fails with every request id the backend cannot serve.
    fn check_coverage(&self, _requests: &[ScoringRequest]) -> Result<(), BackendError> {
        Ok(())
    }

    /// `k` continuations of `prefix`, reproducible from `seed`.
    fn sample_request(&self, _prefix: &str, _k: usize, _max_len: usize, _seed: u64) -> Result<Vec<Sample>, BackendError> {
        Err(BackendError::Capability(self.descriptor().identifier))
    }

    /// Bytes identifying the backend's artifact, hashed into run manifests.
    fn fingerprint(&self) -> Vec<u8>;
}

/// Token spans of `text` in a mode: words split on single spaces, or every character.
pub fn token_spans(text: &str, mode: Mode) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    match mode {
        Mode::Character => {
            for (i, c) in text.chars().enumerate() {
                out.push((c.to_string(), i, i + 1));
            }
        }
        Mode::Word => {
            let mut start = None;
            let mut current = String::new();
            let mut pos = 0;
            for c in text.chars() {
                if c.is_whitespace() {
                    if let Some(s) = start.take() {
                        out.push((std::mem::take(&mut current), s, pos));
                    }
                } else {
                    start.get_or_insert(pos);
                    current.push(c);
                }
                pos += 1;
            }
            if let Some(s) = start {
                out.push((current, s, pos));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// n-gram backend

pub struct NGramBackend {
    model: NGramModel,
    identifier: String,
    score_eos: bool,
    unk_tokens: Vec<String>,
    fingerprint: std::sync::OnceLock<Vec<u8>>,
}

impl NGramBackend {
    pub fn new(model: NGramModel, identifier: impl Into<String>) -> Self {
        NGramBackend {
            model,
            identifier: identifier.into(),
            score_eos: false,
            unk_tokens: default_unk_tokens(),
            fingerprint: std::sync::OnceLock::new(),
        }
    }

    /// Appends a zero-width `</s>` token at the end of every scored sentence.
    pub fn with_score_eos(mut self, on: bool) -> Self {
        self.score_eos = on;
        self
    }

    pub fn with_unk_tokens(mut self, tokens: Vec<String>) -> Self {
        self.unk_tokens = tokens;
        self
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }
}

impl SurprisalBackend for NGramBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { kind: BackendKind::NGram, identifier: self.identifier.clone(), mode: self.model.mode() }
    }

    fn score_request(&self, request: &ScoringRequest) -> Result<Vec<TokenSurprisal>, BackendError> {
        let spans = token_spans(&request.text, self.model.mode());
        let tokens: Vec<&str> = spans.iter().map(|(t, _, _)| t.as_str()).collect();
        let scores = self.model.score(&tokens, self.score_eos);
        let len = request.text.chars().count();
        let mut out: Vec<TokenSurprisal> = spans
            .into_iter()
            .zip(&scores)
            .map(|((token, start, end), &s)| TokenSurprisal { token, start, end, surprisal: s.max(0.0) })
            .collect();
        if self.score_eos {
            let s = *scores.last().expect("eos score present");
            out.push(TokenSurprisal { token: ngram::EOS.to_string(), start: len, end: len, surprisal: s.max(0.0) });
        }
        if let Some(bad) = out.iter().find(|t| !t.surprisal.is_finite()) {
            return Err(BackendError::Misaligned {
                id: request.id.to_string(),
                message: format!("token \"{}\" has infinite surprisal", bad.token),
            });
        }
        Ok(out)
    }

    fn sample_request(&self, prefix: &str, k: usize, max_len: usize, seed: u64) -> Result<Vec<Sample>, BackendError> {
        let prefix_tokens = ngram::tokenize(prefix, self.model.mode());
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let tokens = self.model.sample(&prefix_tokens, max_len, &mut rng)?;
            let has_unk = tokens.iter().any(|t| self.unk_tokens.contains(t));
            let text = match self.model.mode() {
                Mode::Word => tokens.join(" "),
                Mode::Character => tokens.concat(),
            };
            out.push(Sample { tokens, text, has_unk });
        }
        Ok(out)
    }

    fn fingerprint(&self) -> Vec<u8> {
        self.fingerprint.get_or_init(|| self.model.to_arpa().into_bytes()).clone()
    }
}

// ---------------------------------------------------------------------------
// external-file backend

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalBackend {
    identifier: String,
    mode: Mode,
    continuation_marker: String,
    order: Vec<String>,
    rows: HashMap<String, Vec<TokenSurprisal>>,
}

impl ExternalBackend {
    /// Builds a backend from in-memory rows (kept in the given order).
    pub fn from_rows(
        identifier: impl Into<String>,
        mode: Mode,
        rows: impl IntoIterator<Item = (SentenceId, Vec<TokenSurprisal>)>,
    ) -> Self {
        let mut b = ExternalBackend {
            identifier: identifier.into(),
            mode,
            continuation_marker: DEFAULT_CONTINUATION_MARKER.to_string(),
            order: Vec::new(),
            rows: HashMap::new(),
        };
        for (id, tokens) in rows {
            let key = id.to_string();
            if b.rows.insert(key.clone(), tokens).is_none() {
                b.order.push(key);
            }
        }
        b
    }

    pub fn with_continuation_marker(mut self, marker: impl Into<String>) -> Self {
        self.continuation_marker = marker.into();
        self
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(String::as_str)
    }

    pub fn rows(&self, id: &str) -> Option<&[TokenSurprisal]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    /// Serializes to the surprisal TSV (ids in load/insertion order).
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(64 * self.order.len());
        out.push_str(TSV_HEADER);
        out.push('\n');
        for id in &self.order {
            for (i, t) in self.rows[id].iter().enumerate() {
                out.push_str(&format!(
                    "{id}\t{i}\t{}\t{}\t{}\t{}\n",
                    escape_field(&t.token),
                    t.start,
                    t.end,
                    format_bits(t.surprisal)
                ));
            }
        }
        out
    }

    fn check_alignment(&self, request: &ScoringRequest, rows: &[TokenSurprisal]) -> Result<(), BackendError> {
        let id = request.id.to_string();
        let misaligned = |message: String| BackendError::Misaligned { id: id.clone(), message };
        let chars: Vec<char> = request.text.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0;
        for (i, t) in rows.iter().enumerate() {
            if t.end > chars.len() || t.start > t.end {
                return Err(misaligned(format!("token {i} span [{}, {}) outside sentence of {} characters", t.start, t.end, chars.len())));
            }
            if t.start < prev_end {
                return Err(misaligned(format!("token {i} overlaps the previous token")));
            }
            if t.start == t.end {
                continue;
            }
            let surface: String = chars[t.start..t.end].iter().collect();
            let stripped = t.token.strip_prefix(self.continuation_marker.as_str()).filter(|_| !self.continuation_marker.is_empty());
            let stripped = stripped.unwrap_or(&t.token);
            if stripped != surface {
                return Err(misaligned(format!("token {i} \"{}\" does not match text \"{surface}\"", t.token)));
            }
            covered[t.start..t.end].iter_mut().for_each(|c| *c = true);
            prev_end = t.end;
        }
        let uncovered = chars.iter().zip(&covered).position(|(c, &cov)| !cov && (self.mode == Mode::Character || !c.is_whitespace()));
        if let Some(pos) = uncovered {
            return Err(misaligned(format!("character {pos} ('{}') is not covered by any token", chars[pos])));
        }
        Ok(())
    }
}

impl SurprisalBackend for ExternalBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { kind: BackendKind::ExternalFile, identifier: self.identifier.clone(), mode: self.mode }
    }

    fn score_request(&self, request: &ScoringRequest) -> Result<Vec<TokenSurprisal>, BackendError> {
        let id = request.id.to_string();
        // A sentence with no text has no rows to list.
        if request.text.is_empty() && !self.rows.contains_key(&id) {
            return Ok(Vec::new());
        }
        let rows = self.rows.get(&id).ok_or_else(|| BackendError::MissingIds(vec![id.clone()]))?;
        self.check_alignment(request, rows)?;
        Ok(rows.clone())
    }

    fn check_coverage(&self, requests: &[ScoringRequest]) -> Result<(), BackendError> {
        let missing: Vec<String> =
            requests
            .iter()
            .filter(|r| !r.text.is_empty())
            .map(|r| r.id.to_string())
            .filter(|id| !self.rows.contains_key(id))
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(BackendError::MissingIds(missing))
        }
    }

    fn fingerprint(&self) -> Vec<u8> {
        self.to_tsv().into_bytes()
    }
}

/// Options for reading a surprisal TSV.
#[derive(Debug, Clone)]
pub struct ExternalOptions {
    pub identifier: String,
    pub mode: Mode,
    pub continuation_marker: String,
}

impl ExternalOptions {
    pub fn new(identifier: impl Into<String>, mode: Mode) -> Self {
        ExternalOptions { identifier: identifier.into(), mode, continuation_marker: DEFAULT_CONTINUATION_MARKER.to_string() }
    }
}

/// Reads a surprisal TSV. Lines starting with `#` (e.g. `# meta:`) are ignored.
pub fn load_external<R: BufRead>(source: R, options: &ExternalOptions) -> Result<ExternalBackend, BackendError> {
    let mut backend = ExternalBackend::from_rows(&options.identifier, options.mode, Vec::new())
        .with_continuation_marker(options.continuation_marker.clone());
    let mut seen_header = false;
    let mut indices: HashMap<String, HashSet<usize>> = HashMap::new();
    let parse_err = |line: usize, message: String| BackendError::Parse { line, message };

    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.starts_with('#') || (line.is_empty() && seen_header) {
            continue;
        }
        if !seen_header {
            if line != TSV_HEADER {
                return Err(parse_err(lineno, format!("expected header \"{}\"", TSV_HEADER.replace('\t', "\\t"))));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(parse_err(lineno, format!("expected 6 tab-separated fields, found {}", fields.len())));
        }
        let id: SentenceId = fields[0].parse().map_err(|e| parse_err(lineno, e))?;
        let id = id.to_string();
        let index: usize = fields[1].parse().map_err(|_| parse_err(lineno, format!("bad token_index \"{}\"", fields[1])))?;
        let token = unescape_field(fields[2]).map_err(|e| parse_err(lineno, e))?;
        let start: usize = fields[3].parse().map_err(|_| parse_err(lineno, format!("bad start \"{}\"", fields[3])))?;
        let end: usize = fields[4].parse().map_err(|_| parse_err(lineno, format!("bad end \"{}\"", fields[4])))?;
        let surprisal: f64 = fields[5].parse().map_err(|_| parse_err(lineno, format!("bad surprisal_bits \"{}\"", fields[5])))?;
        if !surprisal.is_finite() || surprisal < 0.0 {
            return Err(BackendError::BadSurprisal { line: lineno, value: fields[5].to_string() });
        }
        if start > end {
            return Err(parse_err(lineno, format!("start {start} exceeds end {end}")));
        }

        let seen = indices.entry(id.clone()).or_default();
        if !seen.insert(index) {
            return Err(BackendError::DuplicateToken { line: lineno, id, index });
        }
        let rows = match backend.rows.get_mut(&id) {
            Some(rows) => rows,
            None => {
                backend.order.push(id.clone());
                backend.rows.entry(id.clone()).or_default()
            }
        };
        if index != rows.len() {
            return Err(BackendError::NonMonotone { line: lineno, id, index, expected: rows.len() });
        }
        if let Some(prev) = rows.last() {
            if start < prev.end {
                return Err(parse_err(lineno, format!("token span [{start}, {end}) overlaps the previous token of {id}")));
            }
        }
        rows.push(TokenSurprisal { token, start, end, surprisal });
    }
    if !seen_header {
        return Err(parse_err(1, "missing header".into()));
    }
    Ok(backend)
}

/// Shortest round-trip decimal, padded to at least six decimal places.
pub fn format_bits(v: f64) -> String {
    let s = format!("{v}");
    let decimals = s.split_once('.').map_or(0, |(_, d)| d.len());
    if decimals >= 6 {
        s
    } else {
        format!("{v:.6}")
    }
}

pub(crate) fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{} in \"{s}\"", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}
