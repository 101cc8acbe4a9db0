//! Region spans, token-to-region assignment and per-region surprisal sums.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::backend::{escape_field, format_bits, SentenceId, TokenSurprisal};
use crate::experiment::{ConditionKey, Experiment, Item};

pub const TABLE_HEADER: &str = "experiment,item,condition,region,sum_bits,n_tokens";
pub const DETAIL_HEADER: &str = "sentence_id\ttoken_index\ttoken\tstart\tend\tsurprisal_bits\tregion";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("{id}: token {index} at [{start}, {end}) lies outside every region")]
    OutsideRegions { id: String, index: usize, start: usize, end: usize },
    #[error("no scores for {}", .0.join(", "))]
    MissingScores(Vec<String>),
    #[error("surprisal table line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("surprisal table does not match experiment: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionSpan {
    pub region: String,
    pub start: usize,
    pub end: usize,
}

impl RegionSpan {
    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Character spans of each region under the single-space joining rule.
/// An empty region gets a zero-width span at the end of the preceding text.
pub fn spans_for_texts(names: &[String], texts: &[String]) -> Vec<RegionSpan> {
    let mut spans = Vec::with_capacity(texts.len());
    let mut cursor = 0;
    let mut any = false;
    for (name, text) in names.iter().zip(texts) {
        if text.is_empty() {
            spans.push(RegionSpan { region: name.clone(), start: cursor, end: cursor });
            continue;
        }
        if any {
            cursor += 1;
        }
        let len = text.chars().count();
        spans.push(RegionSpan { region: name.clone(), start: cursor, end: cursor + len });
        cursor += len;
        any = true;
    }
    spans
}

pub fn region_spans(exp: &Experiment, item: &Item, key: &ConditionKey) -> Option<Vec<RegionSpan>> {
    item.regions(key).map(|texts| spans_for_texts(&exp.region_names(), texts))
}

/// Token indices per region. A token belongs to the region holding its first
/// character; a token starting on a joining space goes to the next region,
/// and a zero-width token at the very end (an end-of-sentence score) goes to
/// the last region.
pub fn assign_tokens(id: &str, spans: &[RegionSpan], tokens: &[TokenSurprisal]) -> Result<Vec<Vec<usize>>, AlignError> {
    let text_len = spans.iter().map(|s| s.end).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); spans.len()];
    for (index, t) in tokens.iter().enumerate() {
        let outside = || AlignError::OutsideRegions { id: id.to_string(), index, start: t.start, end: t.end };
        if t.end > text_len {
            return Err(outside());
        }
        let region = if t.start < text_len {
            spans.iter().position(|s| !s.is_empty() && s.end > t.start).ok_or_else(outside)?
        } else if t.start == t.end && !spans.is_empty() {
            spans.len() - 1
        } else {
            return Err(outside());
        };
        groups[region].push(index);
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub experiment: String,
    pub item: u32,
    pub condition: String,
    pub region: String,
    pub sum_bits: f64,
    pub n_tokens: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenRow {
    pub sentence: SentenceId,
    pub token_index: usize,
    pub token: TokenSurprisal,
    pub region: String,
}

/// Per (item, condition, region) summed surprisal, with optional token detail.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurprisalTable {
    rows: Vec<RegionRow>,
    details: Vec<TokenRow>,
    index: HashMap<(u32, String, String), usize>,
}

impl SurprisalTable {
    pub fn from_rows(rows: Vec<RegionRow>, details: Vec<TokenRow>) -> Self {
        let index = rows
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.item, r.condition.clone(), r.region.clone()), i))
            .collect();
        SurprisalTable { rows, details, index }
    }

    pub fn rows(&self) -> &[RegionRow] {
        &self.rows
    }

    pub fn details(&self) -> &[TokenRow] {
        &self.details
    }

    pub fn get(&self, item: u32, condition: &str, region: &str) -> Option<&RegionRow> {
        self.index.get(&(item, condition.to_string(), region.to_string())).map(|&i| &self.rows[i])
    }

    /// Sum over several regions of one (item, condition).
    pub fn region_total(&self, item: u32, condition: &str, regions: &[String]) -> Option<f64> {
        regions.iter().map(|r| self.get(item, condition, r).map(|row| row.sum_bits)).sum()
    }

    /// Sum over every region of one (item, condition).
    pub fn sentence_total(&self, item: u32, condition: &str) -> f64 {
        self.rows.iter().filter(|r| r.item == item && r.condition == condition).map(|r| r.sum_bits).sum()
    }

    /// Copy with condition labels rewritten through `relabel` (details dropped).
    pub fn relabeled(&self, relabel: impl Fn(&str) -> String) -> SurprisalTable {
        let rows = self
            .rows
            .iter()
            .map(|r| RegionRow { condition: relabel(&r.condition), ..r.clone() })
            .collect();
        SurprisalTable::from_rows(rows, Vec::new())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(TABLE_HEADER.split(',')).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.experiment.as_str(),
                &r.item.to_string(),
                &r.condition,
                &r.region,
                &format!("{}", r.sum_bits),
                &r.n_tokens.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Token detail export: the backend TSV columns plus the assigned region.
    pub fn details_tsv(&self) -> String {
        let mut out = String::from(DETAIL_HEADER);
        out.push('\n');
        for d in &self.details {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                d.sentence,
                d.token_index,
                escape_field(&d.token.token),
                d.token.start,
                d.token.end,
                format_bits(d.token.surprisal),
                d.region
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SurprisalTable, AlignError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| AlignError::Csv { line: 1, message: e.to_string() })?;
        if headers.iter().collect::<Vec<_>>().join(",") != TABLE_HEADER {
            return Err(AlignError::Csv { line: 1, message: format!("expected header \"{TABLE_HEADER}\"") });
        }
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let bad = |message: String| AlignError::Csv { line, message };
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 6 {
                return Err(bad(format!("expected 6 fields, found {}", record.len())));
            }
            let item = record[1].parse().map_err(|_| bad(format!("bad item \"{}\"", &record[1])))?;
            let sum_bits: f64 = record[4].parse().map_err(|_| bad(format!("bad sum_bits \"{}\"", &record[4])))?;
            let n_tokens = record[5].parse().map_err(|_| bad(format!("bad n_tokens \"{}\"", &record[5])))?;
            if !sum_bits.is_finite() {
                return Err(bad("sum_bits is not finite".into()));
            }
            rows.push(RegionRow {
                experiment: record[0].to_string(),
                item,
                condition: record[2].to_string(),
                region: record[3].to_string(),
                sum_bits,
                n_tokens,
            });
        }
        let table = SurprisalTable::from_rows(rows, Vec::new());
        if table.index.len() != table.rows.len() {
            return Err(AlignError::Csv { line: 0, message: "duplicate (item, condition, region) rows".into() });
        }
        Ok(table)
    }

    /// Checks the table holds every (item, condition) for the given regions.
    pub fn check_against(&self, exp: &Experiment, regions: &[String]) -> Result<(), AlignError> {
        if let Some(r) = self.rows.iter().find(|r| r.experiment != exp.name) {
            return Err(AlignError::Mismatch(format!("row for experiment \"{}\" (expected \"{}\")", r.experiment, exp.name)));
        }
        for region in regions {
            if exp.region_index(region).is_none() {
                return Err(AlignError::Mismatch(format!("unknown region \"{region}\"")));
            }
        }
        let mut missing = Vec::new();
        for item in &exp.items {
            for key in exp.enumerate_cells() {
                for region in regions {
                    if self.get(item.id, &key.canonical(), region).is_none() {
                        missing.push(format!("{}/{}/{}", item.id, key, region));
                    }
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            let shown = missing.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
            Err(AlignError::Mismatch(format!("{} missing rows, e.g. {shown}", missing.len())))
        }
    }
}

/// Scores keyed by `SentenceId` display string.
pub type ScoreSet = HashMap<String, Vec<TokenSurprisal>>;

/// Builds the full table in (item, condition, region) order.
pub fn aggregate(exp: &Experiment, scores: &ScoreSet) -> Result<SurprisalTable, AlignError> {
    let cells = exp.enumerate_cells();
    let names = exp.region_names();
    let missing: Vec<String> = exp
        .items
        .iter()
        .flat_map(|item| cells.iter().map(move |k| SentenceId::new(&exp.name, item.id, k.canonical()).to_string()))
        .filter(|id| !scores.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(AlignError::MissingScores(missing));
    }

    let mut rows = Vec::with_capacity(exp.items.len() * cells.len() * names.len());
    let mut details = Vec::new();
    for item in &exp.items {
        for key in &cells {
            let sentence = SentenceId::new(&exp.name, item.id, key.canonical());
            let id = sentence.to_string();
            let tokens = &scores[&id];
            let spans = spans_for_texts(&names, item.regions(key).expect("validated full factorial"));
            let groups = assign_tokens(&id, &spans, tokens)?;
            let mut region_of = vec![0usize; tokens.len()];
            for (r, group) in groups.iter().enumerate() {
                let sum = group.iter().map(|&t| tokens[t].surprisal).sum();
                for &t in group {
                    region_of[t] = r;
                }
                rows.push(RegionRow {
                    experiment: exp.name.clone(),
                    item: item.id,
                    condition: key.canonical(),
                    region: names[r].clone(),
                    sum_bits: sum,
                    n_tokens: group.len(),
                });
            }
            for (i, t) in tokens.iter().enumerate() {
                details.push(TokenRow {
                    sentence: sentence.clone(),
                    token_index: i,
                    token: t.clone(),
                    region: names[region_of[i]].clone(),
                });
            }
        }
    }
    Ok(SurprisalTable::from_rows(rows, details))
}
