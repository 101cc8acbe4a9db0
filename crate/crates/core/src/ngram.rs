//! Interpolated modified Kneser–Ney n-gram language model.
//!
//! The trained model is held in backoff form: for every observed n-gram the
//! interpolated probability, and for every observed context its backoff
//! weight. That is exactly what an ARPA file stores, so save/load is lossless
//! up to decimal printing. Everything inside is log2; ARPA files are log10.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;
use thiserror::Error;

use crate::experiment::Mode;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

pub const MIN_ORDER: usize = 1;
pub const MAX_ORDER: usize = 7;

/// Discount used when count-of-counts cannot support modified KN estimates.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

/// Space character stand-in inside ARPA files written in character mode.
const ARPA_SPACE: &str = "<sp>";
/// log10 probability KenLM and SRILM write for symbols that are never predicted.
const ARPA_NEVER: f64 = -99.0;
/// log10 probability substituted for `<unk>` when a loaded file lacks it.
const ARPA_MISSING_UNK: f64 = -100.0;

const LOG2_10: f64 = std::f64::consts::LOG2_10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NGramError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order {0} out of range ({MIN_ORDER}..={MAX_ORDER})")]
    OrderOutOfRange(usize),
    #[error("invalid discount {0}: must lie in (0, 1]")]
    BadDiscount(f64),
    #[error("max length must be positive")]
    BadMaxLength,
    #[error("ARPA line {line}: {message}")]
    Arpa { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Symbol table with the reserved symbols at ids 0..3.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let mut v = Vocabulary { symbols: Vec::new(), ids: HashMap::new() };
        for s in [BOS, EOS, UNK] {
            v.insert(s);
        }
        v
    }

    pub fn insert(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.ids.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_string());
        self.ids.insert(symbol.to_string(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.ids.get(symbol).copied()
    }

    /// Id of `symbol`, or `<unk>`.
    pub fn lookup(&self, symbol: &str) -> u32 {
        self.id(symbol).unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// Splits one line of text into model tokens.
pub fn tokenize(line: &str, mode: Mode) -> Vec<String> {
    match mode {
        Mode::Word => line.split_whitespace().map(str::to_string).collect(),
        Mode::Character => line.chars().map(|c| c.to_string()).collect(),
    }
}

/// How discounts are chosen at each order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discounting {
    /// Three count-bucketed discounts from count-of-counts, falling back to
    /// absolute discounting with [`FALLBACK_DISCOUNT`] when they are degenerate.
    ModifiedKneserNey,
    /// One fixed discount for every count at every order.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub order: usize,
    pub mode: Mode,
    /// Word mode only: symbols seen fewer times than this become `<unk>`.
    pub unk_threshold: usize,
    pub discounting: Discounting,
}

impl TrainConfig {
    pub fn new(order: usize, mode: Mode) -> Self {
        TrainConfig { order, mode, unk_threshold: 2, discounting: Discounting::ModifiedKneserNey }
    }
}

/// Per-order discounts for counts 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    /// True when count-of-counts were degenerate and the fallback was used.
    pub fallback: bool,
}

impl Discounts {
    fn flat(d: f64, fallback: bool) -> Self {
        Discounts { d1: d, d2: d, d3: d, fallback }
    }

    fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }

    /// Chen & Goodman estimates from the number of n-grams with count 1..=4.
    pub fn estimate(count_of_counts: [u64; 4]) -> Self {
        let [t1, t2, t3, t4] = count_of_counts.map(|t| t as f64);
        if t1 == 0.0 || t2 == 0.0 || t3 == 0.0 || t4 == 0.0 {
            return Self::flat(FALLBACK_DISCOUNT, true);
        }
        let y = t1 / (t1 + 2.0 * t2);
        let d1 = 1.0 - 2.0 * y * t2 / t1;
        let d2 = 2.0 - 3.0 * y * t3 / t2;
        let d3 = 3.0 - 4.0 * y * t4 / t3;
        let ok = d1 > 0.0 && d1 < 1.0 && d2 > 0.0 && d2 < 2.0 && d3 > 0.0 && d3 < 3.0;
        if ok {
            Discounts { d1, d2, d3, fallback: false }
        } else {
            Self::flat(FALLBACK_DISCOUNT, true)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    log2_prob: f64,
    log2_backoff: f64,
}

/// A trained (or loaded) backoff n-gram model.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    mode: Mode,
    vocab: Vocabulary,
    /// `tables[n - 1]` holds n-grams of length n.
    tables: Vec<HashMap<Vec<u32>, Entry>>,
    /// `children[n - 1]`: context of length n - 1 -> words with a stored n-gram.
    children: Vec<HashMap<Vec<u32>, Vec<u32>>>,
    discounts: Vec<Discounts>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Discounts used at each order during training (empty for loaded models).
    pub fn discounts(&self) -> &[Discounts] {
        &self.discounts
    }

    /// Number of stored n-grams of each length.
    pub fn ngram_counts(&self) -> Vec<usize> {
        self.tables.iter().map(HashMap::len).collect()
    }

    /// Ids of the symbols the model can predict (everything but `<s>`).
    pub fn predictable(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.vocab.len() as u32).filter(|&id| id != BOS_ID)
    }

    /// log2 p(word | context) by backoff; only the last `order - 1` context ids are used.
    pub fn log2_prob(&self, context: &[u32], word: u32) -> f64 {
        if word == BOS_ID {
            return f64::NEG_INFINITY;
        }
        let keep = context.len().min(self.order - 1);
        let context = &context[context.len() - keep..];
        let mut key: Vec<u32> = Vec::with_capacity(self.order);
        let mut backoff = 0.0;
        for start in 0..=context.len() {
            let history = &context[start..];
            key.clear();
            key.extend_from_slice(history);
            key.push(word);
            if let Some(e) = self.tables[history.len()].get(key.as_slice()) {
                return backoff + e.log2_prob;
            }
            if !history.is_empty() {
                if let Some(h) = self.tables[history.len() - 1].get(history) {
                    backoff += h.log2_backoff;
                }
            }
        }
        // Every vocabulary symbol has a unigram entry, so this is reached only
        // for ids outside the vocabulary.
        f64::NEG_INFINITY
    }

    /// Probability of every vocabulary id given `context` (index = id).
    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        let keep = context.len().min(self.order - 1);
        let context = &context[context.len() - keep..];
        let mut dist = vec![0.0; self.vocab.len()];
        for (ngram, e) in &self.tables[0] {
            dist[ngram[0] as usize] = e.log2_prob.exp2();
        }
        // Shortest history first; each longer history rescales the lower-order
        // mass by its backoff and overwrites its own stored continuations.
        for start in (0..context.len()).rev() {
            let history = &context[start..];
            let n = history.len() + 1;
            let Some(h) = self.tables[n - 2].get(history) else { continue };
            let scale = h.log2_backoff.exp2();
            let stored = self.children[n - 1].get(history);
            let mut overrides: Vec<(u32, f64)> = Vec::new();
            if let Some(words) = stored {
                let mut key = history.to_vec();
                key.push(0);
                for &w in words {
                    *key.last_mut().unwrap() = w;
                    overrides.push((w, self.tables[n - 1][key.as_slice()].log2_prob.exp2()));
                }
            }
            for p in dist.iter_mut() {
                *p *= scale;
            }
            for (w, p) in overrides {
                dist[w as usize] = p;
            }
        }
        dist[BOS_ID as usize] = 0.0;
        dist
    }

    /// Maps tokens to ids (unknowns to `<unk>`).
    pub fn ids(&self, tokens: &[impl AsRef<str>]) -> Vec<u32> {
        tokens.iter().map(|t| self.vocab.lookup(t.as_ref())).collect()
    }

    /// Per-token surprisal in bits, history starting at `<s>`. With `score_eos`,
    /// one extra value for `</s>` is appended.
    pub fn score(&self, tokens: &[impl AsRef<str>], score_eos: bool) -> Vec<f64> {
        let ids = self.ids(tokens);
        let mut history = Vec::with_capacity(ids.len() + 1);
        history.push(BOS_ID);
        let mut out = Vec::with_capacity(ids.len() + 1);
        for &id in &ids {
            out.push(-self.log2_prob(&history, id));
            history.push(id);
        }
        if score_eos {
            out.push(-self.log2_prob(&history, EOS_ID));
        }
        out
    }

    /// log2 of the joint probability of a sentence, computed from the chain rule
    /// in one pass (`</s>` included when `with_eos`).
    pub fn log2_joint(&self, tokens: &[impl AsRef<str>], with_eos: bool) -> f64 {
        let mut ids = vec![BOS_ID];
        ids.extend(self.ids(tokens));
        if with_eos {
            ids.push(EOS_ID);
        }
        (1..ids.len()).map(|i| self.log2_prob(&ids[..i], ids[i])).sum()
    }

    /// Perplexity over sentences (each scored with `</s>`).
    pub fn perplexity<'a>(&self, sentences: impl IntoIterator<Item = &'a [String]>) -> f64 {
        let (mut bits, mut n) = (0.0, 0usize);
        for s in sentences {
            let scores = self.score(s, true);
            n += scores.len();
            bits += scores.iter().sum::<f64>();
        }
        (bits / n as f64).exp2()
    }

    /// Draws a continuation of `prefix` until `</s>` or `max_len` tokens.
    /// The returned tokens never include `</s>`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prefix: &[impl AsRef<str>],
        max_len: usize,
        rng: &mut R,
    ) -> Result<Vec<String>, NGramError> {
        if max_len == 0 {
            return Err(NGramError::BadMaxLength);
        }
        let mut history = vec![BOS_ID];
        history.extend(self.ids(prefix));
        let mut out = Vec::new();
        while out.len() < max_len {
            let dist = self.distribution(&history);
            let next = draw(&dist, rng);
            if next == EOS_ID {
                break;
            }
            out.push(self.vocab.symbol(next).to_string());
            history.push(next);
        }
        Ok(out)
    }
}

fn draw<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> u32 {
    let total: f64 = dist.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = EOS_ID;
    for (id, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = id as u32;
        if u < p {
            return id as u32;
        }
        u -= p;
    }
    last
}

// ---------------------------------------------------------------------------
// Training

/// Trains a model on tokenized sentences.
pub fn train<S: AsRef<str>>(sentences: &[Vec<S>], config: &TrainConfig) -> Result<NGramModel, NGramError> {
    let order = config.order;
    if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(NGramError::OrderOutOfRange(order));
    }
    if let Discounting::Absolute(d) = config.discounting {
        if !(d > 0.0 && d <= 1.0) {
            return Err(NGramError::BadDiscount(d));
        }
    }
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(NGramError::EmptyCorpus);
    }

    let mut vocab = Vocabulary::new();
    let threshold = match config.mode {
        Mode::Word => config.unk_threshold.max(1),
        Mode::Character => 1,
    };
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for s in sentences {
        for t in s {
            *freq.entry(t.as_ref()).or_default() += 1;
        }
    }
    // First-occurrence order keeps ids deterministic.
    for s in sentences {
        for t in s {
            let t = t.as_ref();
            if freq[t] >= threshold && vocab.id(t).is_none() {
                vocab.insert(t);
            }
        }
    }

    // raw[n - 1]: raw counts of n-grams ending at a predicted position.
    let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    for s in sentences {
        let mut seq = Vec::with_capacity(s.len() + 2);
        seq.push(BOS_ID);
        seq.extend(s.iter().map(|t| vocab.lookup(t.as_ref())));
        seq.push(EOS_ID);
        for j in 1..seq.len() {
            for n in 1..=order.min(j + 1) {
                *raw[n - 1].entry(seq[j + 1 - n..=j].to_vec()).or_default() += 1;
            }
        }
    }

    // Adjusted counts: raw at the top order and for n-grams starting with <s>,
    // continuation counts (distinct left extensions) otherwise.
    let mut adjusted: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
    adjusted[order - 1] = raw[order - 1].clone();
    for n in (1..order).rev() {
        let mut cont: HashMap<Vec<u32>, u64> = HashMap::new();
        for ngram in raw[n].keys() {
            *cont.entry(ngram[1..].to_vec()).or_default() += 1;
        }
        let table = &mut adjusted[n - 1];
        for (ngram, &count) in &raw[n - 1] {
            let a = if ngram[0] == BOS_ID { count } else { cont.get(ngram).copied().unwrap_or(0) };
            table.insert(ngram.clone(), a);
        }
    }

    let discounts: Vec<Discounts> = adjusted
        .iter()
        .map(|table| match config.discounting {
            Discounting::Absolute(d) => Discounts::flat(d, false),
            Discounting::ModifiedKneserNey => {
                let mut coc = [0u64; 4];
                for &a in table.values() {
                    if (1..=4).contains(&a) {
                        coc[a as usize - 1] += 1;
                    }
                }
                Discounts::estimate(coc)
            }
        })
        .collect();

    let mut tables: Vec<HashMap<Vec<u32>, Entry>> = Vec::with_capacity(order);
    let predictable = (vocab.len() - 1) as f64;
    for n in 1..=order {
        let disc = discounts[n - 1];
        // Per context: total adjusted count and discounted mass.
        let mut ctx_stats: HashMap<&[u32], (u64, f64)> = HashMap::new();
        for (ngram, &a) in &adjusted[n - 1] {
            let e = ctx_stats.entry(&ngram[..n - 1]).or_default();
            e.0 += a;
            e.1 += disc.for_count(a);
        }
        let mut table: HashMap<Vec<u32>, Entry> = HashMap::with_capacity(adjusted[n - 1].len());
        if n == 1 {
            let (total, mass) = ctx_stats.get([].as_slice()).copied().unwrap_or((0, 0.0));
            let gamma = if total > 0 { mass / total as f64 } else { 1.0 };
            for id in 1..vocab.len() as u32 {
                let a = adjusted[0].get([id].as_slice()).copied().unwrap_or(0);
                let mut p = gamma / predictable;
                if total > 0 {
                    p += (a as f64 - disc.for_count(a)).max(0.0) / total as f64;
                }
                table.insert(vec![id], Entry { log2_prob: p.log2(), log2_backoff: 0.0 });
            }
            table.insert(vec![BOS_ID], Entry { log2_prob: f64::NEG_INFINITY, log2_backoff: 0.0 });
        } else {
            let lower = &tables[n - 2];
            for (ngram, &a) in &adjusted[n - 1] {
                let (total, mass) = ctx_stats[&ngram[..n - 1]];
                let gamma = mass / total as f64;
                let lower_p = lower[&ngram[1..]].log2_prob.exp2();
                let p = (a as f64 - disc.for_count(a)).max(0.0) / total as f64 + gamma * lower_p;
                table.insert(ngram.clone(), Entry { log2_prob: p.log2(), log2_backoff: 0.0 });
            }
            // Backoff weights live on the context's own entry one order down.
            let lower = &mut tables[n - 2];
            for (ctx, (total, mass)) in ctx_stats {
                let gamma = mass / total as f64;
                lower.get_mut(ctx).expect("context is a stored n-gram").log2_backoff = gamma.log2();
            }
        }
        tables.push(table);
    }

    Ok(NGramModel::assemble(order, config.mode, vocab, tables, discounts))
}

/// Reads a corpus (one sentence per line) and tokenizes it; blank lines are skipped.
pub fn read_corpus(text: &str, mode: Mode) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.trim().is_empty())
        .map(|l| tokenize(l, mode))
        .collect()
}

impl NGramModel {
    fn assemble(
        order: usize,
        mode: Mode,
        vocab: Vocabulary,
        tables: Vec<HashMap<Vec<u32>, Entry>>,
        discounts: Vec<Discounts>,
    ) -> Self {
        let mut children: Vec<HashMap<Vec<u32>, Vec<u32>>> = vec![HashMap::new(); order];
        for (i, table) in tables.iter().enumerate().skip(1) {
            for ngram in table.keys() {
                children[i].entry(ngram[..i].to_vec()).or_default().push(ngram[i]);
            }
        }
        for map in &mut children {
            for words in map.values_mut() {
                words.sort_unstable();
            }
        }
        NGramModel { order, mode, vocab, tables, children, discounts }
    }

    // -----------------------------------------------------------------------
    // ARPA

    fn arpa_symbol(&self, id: u32) -> String {
        let s = self.vocab.symbol(id);
        if self.mode == Mode::Character && s == " " {
            ARPA_SPACE.to_string()
        } else {
            s.to_string()
        }
    }

    /// Serializes to ARPA text. Entries are sorted so output is deterministic.
    pub fn to_arpa(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# lm-psych n-gram model");
        let _ = writeln!(out, "# mode: {}", self.mode);
        let _ = writeln!(out);
        let _ = writeln!(out, "\\data\\");
        for (i, table) in self.tables.iter().enumerate() {
            let _ = writeln!(out, "ngram {}={}", i + 1, table.len());
        }
        for (i, table) in self.tables.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(out);
            let _ = writeln!(out, "\\{n}-grams:");
            let mut keys: Vec<&Vec<u32>> = table.keys().collect();
            keys.sort();
            for key in keys {
                let e = table[key];
                let prob = if e.log2_prob == f64::NEG_INFINITY { ARPA_NEVER } else { e.log2_prob / LOG2_10 };
                let words: Vec<String> = key.iter().map(|&id| self.arpa_symbol(id)).collect();
                let _ = write!(out, "{prob}\t{}", words.join(" "));
                if n < self.order {
                    let _ = write!(out, "\t{}", e.log2_backoff / LOG2_10);
                }
                let _ = writeln!(out);
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "\\end\\");
        out
    }

    pub fn save_arpa<W: std::io::Write>(&self, mut sink: W) -> Result<(), NGramError> {
        sink.write_all(self.to_arpa().as_bytes()).map_err(|e| NGramError::Io(e.to_string()))
    }

    /// Loads an ARPA file. A `# mode: character` comment before `\data\`
    /// selects character mode (and maps `<sp>` back to the space character).
    pub fn load_arpa<R: BufRead>(source: R) -> Result<NGramModel, NGramError> {
        let mut mode = Mode::Word;
        let mut declared: Vec<usize> = Vec::new();
        let mut raw_tables: Vec<Vec<(Vec<String>, f64, f64)>> = Vec::new();
        let mut state = ArpaState::Preamble;
        let mut current = 0usize;
        let err = |line: usize, message: String| NGramError::Arpa { line, message };

        for (idx, line) in source.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| NGramError::Io(e.to_string()))?;
            let line = line.trim_end_matches('\r');
            let trimmed = line.trim();
            match state {
                ArpaState::Preamble => {
                    if let Some(m) = trimmed.strip_prefix("# mode:") {
                        mode = m.trim().parse().map_err(|e: String| err(lineno, e))?;
                    } else if trimmed == "\\data\\" {
                        state = ArpaState::Data;
                    }
                }
                ArpaState::Data => {
                    if trimmed.is_empty() {
                        continue;
                    }
                    if let Some(rest) = trimmed.strip_prefix("ngram ") {
                        let (n, count) = rest
                            .split_once('=')
                            .ok_or_else(|| err(lineno, format!("malformed count line \"{trimmed}\"")))?;
                        let n: usize = n.trim().parse().map_err(|_| err(lineno, format!("bad order \"{n}\"")))?;
                        let count: usize =
                            count.trim().parse().map_err(|_| err(lineno, format!("bad count \"{count}\"")))?;
                        if n != declared.len() + 1 {
                            return Err(err(lineno, format!("expected ngram {}=, found ngram {n}=", declared.len() + 1)));
                        }
                        declared.push(count);
                    } else if let Some(n) = parse_section_header(trimmed) {
                        if declared.is_empty() {
                            return Err(err(lineno, "no ngram counts in \\data\\ section".into()));
                        }
                        if n != 1 {
                            return Err(err(lineno, format!("expected \\1-grams:, found \\{n}-grams:")));
                        }
                        raw_tables.push(Vec::new());
                        current = 1;
                        state = ArpaState::Grams;
                    } else {
                        return Err(err(lineno, format!("unexpected line in \\data\\ section: \"{trimmed}\"")));
                    }
                }
                ArpaState::Grams => {
                    if trimmed.is_empty() {
                        continue;
                    }
                    if trimmed == "\\end\\" {
                        state = ArpaState::End;
                        continue;
                    }
                    if let Some(n) = parse_section_header(trimmed) {
                        if n != current + 1 || n > declared.len() {
                            return Err(err(lineno, format!("unexpected section \\{n}-grams:")));
                        }
                        raw_tables.push(Vec::new());
                        current = n;
                        continue;
                    }
                    if trimmed.starts_with('\\') {
                        return Err(err(lineno, format!("malformed section header \"{trimmed}\"")));
                    }
                    let fields: Vec<&str> = line.split('\t').collect();
                    let (prob, words, backoff) = match fields.as_slice() {
                        [p, w] => (*p, *w, None),
                        [p, w, b] => (*p, *w, Some(*b)),
                        _ => {
                            let parts: Vec<&str> = trimmed.split_whitespace().collect();
                            if parts.len() == current + 1 {
                                (parts[0], "", None)
                            } else if parts.len() == current + 2 {
                                (parts[0], "", Some(parts[current + 1]))
                            } else {
                                return Err(err(lineno, format!("malformed {current}-gram entry")));
                            }
                        }
                    };
                    let words: Vec<String> = if words.is_empty() {
                        trimmed.split_whitespace().skip(1).take(current).map(str::to_string).collect()
                    } else {
                        words.split(' ').map(str::to_string).collect()
                    };
                    if words.len() != current {
                        return Err(err(lineno, format!("expected {current} words, found {}", words.len())));
                    }
                    let prob: f64 = prob.trim().parse().map_err(|_| err(lineno, format!("bad probability \"{prob}\"")))?;
                    let backoff: f64 = match backoff {
                        Some(b) => b.trim().parse().map_err(|_| err(lineno, format!("bad backoff \"{b}\"")))?,
                        None => 0.0,
                    };
                    if prob > 0.0 || prob.is_nan() {
                        return Err(err(lineno, format!("log10 probability {prob} is positive")));
                    }
                    raw_tables[current - 1].push((words, prob, backoff));
                }
                ArpaState::End => {
                    if !trimmed.is_empty() {
                        return Err(err(lineno, "content after \\end\\".into()));
                    }
                }
            }
        }
        if state != ArpaState::End {
            return Err(err(0, "missing \\end\\".into()));
        }
        if raw_tables.len() != declared.len() {
            return Err(err(0, format!("declared {} orders but found {} sections", declared.len(), raw_tables.len())));
        }
        for (i, (entries, &count)) in raw_tables.iter().zip(&declared).enumerate() {
            if entries.len() != count {
                return Err(err(0, format!("\\{}-grams: declared {count} entries, found {}", i + 1, entries.len())));
            }
        }
        let order = declared.len();
        if order > MAX_ORDER {
            return Err(NGramError::OrderOutOfRange(order));
        }

        let decode = |s: &str| -> String {
            if mode == Mode::Character && s == ARPA_SPACE {
                " ".to_string()
            } else {
                s.to_string()
            }
        };
        let mut vocab = Vocabulary::new();
        for (words, _, _) in &raw_tables[0] {
            vocab.insert(&decode(&words[0]));
        }
        let mut tables: Vec<HashMap<Vec<u32>, Entry>> = vec![HashMap::new(); order];
        for (i, entries) in raw_tables.iter().enumerate() {
            for (words, prob, backoff) in entries {
                let mut key = Vec::with_capacity(words.len());
                for w in words {
                    let id = vocab.id(&decode(w)).ok_or_else(|| err(0, format!("{}-gram uses \"{w}\" which has no unigram", i + 1)))?;
                    key.push(id);
                }
                let log2_prob = if *prob <= ARPA_NEVER { f64::NEG_INFINITY } else { prob * LOG2_10 };
                if tables[i].insert(key, Entry { log2_prob, log2_backoff: backoff * LOG2_10 }).is_some() {
                    return Err(err(0, format!("duplicate {}-gram \"{}\"", i + 1, words.join(" "))));
                }
            }
        }
        let unigrams = &mut tables[0];
        unigrams
            .entry(vec![UNK_ID])
            .or_insert(Entry { log2_prob: ARPA_MISSING_UNK * LOG2_10, log2_backoff: 0.0 });
        unigrams.entry(vec![EOS_ID]).or_insert(Entry { log2_prob: f64::NEG_INFINITY, log2_backoff: 0.0 });
        unigrams.entry(vec![BOS_ID]).or_insert(Entry { log2_prob: f64::NEG_INFINITY, log2_backoff: 0.0 });
        if let Some(e) = unigrams.get_mut([BOS_ID].as_slice()) {
            e.log2_prob = f64::NEG_INFINITY;
        }
        Ok(NGramModel::assemble(order, mode, vocab, tables, Vec::new()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArpaState {
    Preamble,
    Data,
    Grams,
    End,
}

fn parse_section_header(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?.strip_suffix("-grams:")?.parse().ok()
}
