//! Factorial experiment data model and the JSON experiment format.
//!
//! An [`Experiment`] is a full-factorial design: every item carries one cell
//! per condition, and every cell lists one text per region. Region texts are
//! pre-tokenized (tokens separated by single spaces) and may be empty.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for contrast weights summing to zero.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error("item {item} is missing cell \"{cell}\"")]
    MissingCell { item: u32, cell: String },
    #[error("item {item} has unknown cell \"{cell}\"")]
    UnknownCell { item: u32, cell: String },
    #[error("item {item}, cell \"{cell}\": expected {expected} region texts, found {found}")]
    RegionCountMismatch { item: u32, cell: String, expected: usize, found: usize },
    #[error("duplicate {kind} name \"{name}\"")]
    Duplicate { kind: &'static str, name: String },
    #[error("factor \"{0}\" needs at least 2 levels")]
    TooFewLevels(String),
    #[error("invalid {kind} \"{name}\": {reason}")]
    InvalidName { kind: &'static str, name: String, reason: &'static str },
    #[error("item {item}, cell \"{cell}\", region {region}: {reason}")]
    BadRegionText { item: u32, cell: String, region: usize, reason: &'static str },
    #[error("analysis \"{analysis}\": {reason}")]
    BadAnalysis { analysis: String, reason: String },
    #[error("experiment has no {0}")]
    Empty(&'static str),
}

/// Language mode: whitespace-separated words or raw characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Word,
    Character,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Word => "word",
            Mode::Character => "character",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(Mode::Word),
            "character" | "char" => Ok(Mode::Character),
            other => Err(format!("unknown mode \"{other}\" (expected word or character)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, levels: &[&str]) -> Self {
        Factor { name: name.into(), levels: levels.iter().map(|l| l.to_string()).collect() }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

/// One level per factor, in factor declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConditionKey(Vec<(String, String)>);

impl ConditionKey {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        ConditionKey(pairs)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.0
    }

    pub fn level_of(&self, factor: &str) -> Option<&str> {
        self.0.iter().find(|(f, _)| f == factor).map(|(_, l)| l.as_str())
    }

    /// Canonical `level|level|...` form.
    pub fn canonical(&self) -> String {
        self.0.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join("|")
    }
}

impl fmt::Display for ConditionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub index: usize,
}

/// A stimulus item: region texts for every condition, keyed by canonical condition string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Item {
    pub id: u32,
    pub cells: BTreeMap<String, Vec<String>>,
}

impl Item {
    pub fn regions(&self, key: &ConditionKey) -> Option<&[String]> {
        self.cells.get(&key.canonical()).map(Vec::as_slice)
    }

    /// Full sentence for a condition: non-empty region texts joined by single spaces.
    pub fn cell_text(&self, key: &ConditionKey) -> Option<String> {
        self.regions(key).map(join_regions)
    }
}

/// Joins region texts with single spaces, skipping empty regions.
pub fn join_regions(regions: &[String]) -> String {
    let mut out = String::new();
    for text in regions.iter().filter(|t| !t.is_empty()) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(text);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKindTag {
    MainEffect,
    Interaction,
    Contrast,
    DifferenceProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisKind {
    MainEffect { factor: String },
    Interaction { factors: [String; 2] },
    /// Weights keyed by canonical condition string; conditions not listed weigh 0.
    Contrast { weights: BTreeMap<String, f64> },
    /// `(a, b)`: per-region differences `a - b`.
    DifferenceProfile { pair: (String, String) },
}

impl AnalysisKind {
    pub fn tag(&self) -> &'static str {
        match self {
            AnalysisKind::MainEffect { .. } => "main_effect",
            AnalysisKind::Interaction { .. } => "interaction",
            AnalysisKind::Contrast { .. } => "contrast",
            AnalysisKind::DifferenceProfile { .. } => "difference_profile",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSpec {
    pub name: String,
    /// Target regions; their sums are added. For difference profiles, the
    /// regions to profile (empty means every region).
    pub regions: Vec<String>,
    pub kind: AnalysisKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub name: String,
    pub mode: Mode,
    pub factors: Vec<Factor>,
    pub regions: Vec<Region>,
    pub items: Vec<Item>,
    pub analyses: Vec<AnalysisSpec>,
}

impl Experiment {
    /// Validates and assembles an experiment from its parts.
    pub fn new(
        name: impl Into<String>,
        mode: Mode,
        factors: Vec<Factor>,
        region_names: Vec<String>,
        items: Vec<Item>,
        analyses: Vec<AnalysisSpec>,
    ) -> Result<Self, ExperimentError> {
        let regions = region_names
            .into_iter()
            .enumerate()
            .map(|(index, name)| Region { name, index })
            .collect();
        let exp = Experiment { name: name.into(), mode, factors, regions, items, analyses };
        exp.validate()?;
        Ok(exp)
    }

    /// Cartesian product of factor levels in declaration order.
    pub fn enumerate_cells(&self) -> Vec<ConditionKey> {
        let mut keys: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for factor in &self.factors {
            keys = keys
                .into_iter()
                .flat_map(|prefix| {
                    factor.levels.iter().map(move |level| {
                        let mut k = prefix.clone();
                        k.push((factor.name.clone(), level.clone()));
                        k
                    })
                })
                .collect();
        }
        keys.into_iter().map(ConditionKey).collect()
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.name == name)
    }

    pub fn region_names(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.name.clone()).collect()
    }

    /// Parses a canonical `a|b` string back into a key.
    pub fn condition_key(&self, canonical: &str) -> Option<ConditionKey> {
        let levels: Vec<&str> = canonical.split('|').collect();
        if levels.len() != self.factors.len() {
            return None;
        }
        let mut pairs = Vec::with_capacity(levels.len());
        for (factor, level) in self.factors.iter().zip(levels) {
            factor.level_index(level)?;
            pairs.push((factor.name.clone(), level.to_string()));
        }
        Some(ConditionKey(pairs))
    }

    pub fn item(&self, id: u32) -> Option<&Item> {
        self.items.iter().find(|i| i.id == id)
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        check_name("experiment", &self.name, false)?;
        if self.factors.is_empty() {
            return Err(ExperimentError::Empty("factors"));
        }
        if self.regions.is_empty() {
            return Err(ExperimentError::Empty("regions"));
        }
        if self.items.is_empty() {
            return Err(ExperimentError::Empty("items"));
        }

        let mut factor_names = HashSet::new();
        for factor in &self.factors {
            check_name("factor", &factor.name, true)?;
            if !factor_names.insert(factor.name.as_str()) {
                return Err(ExperimentError::Duplicate { kind: "factor", name: factor.name.clone() });
            }
            if factor.levels.len() < 2 {
                return Err(ExperimentError::TooFewLevels(factor.name.clone()));
            }
            let mut seen = HashSet::new();
            for level in &factor.levels {
                check_name("level", level, true)?;
                if !seen.insert(level.as_str()) {
                    return Err(ExperimentError::Duplicate { kind: "level", name: level.clone() });
                }
            }
        }

        let mut region_names = HashSet::new();
        for region in &self.regions {
            check_name("region", &region.name, false)?;
            if !region_names.insert(region.name.as_str()) {
                return Err(ExperimentError::Duplicate { kind: "region", name: region.name.clone() });
            }
        }

        let cells: Vec<String> = self.enumerate_cells().iter().map(ConditionKey::canonical).collect();
        let cell_set: BTreeSet<&str> = cells.iter().map(String::as_str).collect();
        let mut item_ids = HashSet::new();
        for item in &self.items {
            if !item_ids.insert(item.id) {
                return Err(ExperimentError::Duplicate { kind: "item", name: item.id.to_string() });
            }
            for cell in &cells {
                if !item.cells.contains_key(cell) {
                    return Err(ExperimentError::MissingCell { item: item.id, cell: cell.clone() });
                }
            }
            for (cell, texts) in &item.cells {
                if !cell_set.contains(cell.as_str()) {
                    return Err(ExperimentError::UnknownCell { item: item.id, cell: cell.clone() });
                }
                if texts.len() != self.regions.len() {
                    return Err(ExperimentError::RegionCountMismatch {
                        item: item.id,
                        cell: cell.clone(),
                        expected: self.regions.len(),
                        found: texts.len(),
                    });
                }
                for (region, text) in texts.iter().enumerate() {
                    if let Some(reason) = region_text_problem(text) {
                        return Err(ExperimentError::BadRegionText {
                            item: item.id,
                            cell: cell.clone(),
                            region,
                            reason,
                        });
                    }
                }
            }
        }

        let mut analysis_names = HashSet::new();
        for analysis in &self.analyses {
            if !analysis_names.insert(analysis.name.as_str()) {
                return Err(ExperimentError::Duplicate { kind: "analysis", name: analysis.name.clone() });
            }
            self.validate_analysis(analysis, &cell_set)?;
        }
        Ok(())
    }

    fn validate_analysis(&self, a: &AnalysisSpec, cells: &BTreeSet<&str>) -> Result<(), ExperimentError> {
        let bad = |reason: String| ExperimentError::BadAnalysis { analysis: a.name.clone(), reason };
        check_name("analysis", &a.name, false)?;
        let mut seen = HashSet::new();
        for region in &a.regions {
            if self.region_index(region).is_none() {
                return Err(bad(format!("unknown region \"{region}\"")));
            }
            if !seen.insert(region) {
                return Err(bad(format!("region \"{region}\" listed twice")));
            }
        }
        let needs_regions = !matches!(a.kind, AnalysisKind::DifferenceProfile { .. });
        if needs_regions && a.regions.is_empty() {
            return Err(bad("at least one target region is required".into()));
        }
        match &a.kind {
            AnalysisKind::MainEffect { factor } => {
                if self.factor(factor).is_none() {
                    return Err(bad(format!("unknown factor \"{factor}\"")));
                }
            }
            AnalysisKind::Interaction { factors } => {
                for f in factors {
                    if self.factor(f).is_none() {
                        return Err(bad(format!("unknown factor \"{f}\"")));
                    }
                }
                if factors[0] == factors[1] {
                    return Err(bad("interaction needs two distinct factors".into()));
                }
            }
            AnalysisKind::Contrast { weights } => {
                for cond in weights.keys() {
                    if !cells.contains(cond.as_str()) {
                        return Err(bad(format!("unknown condition \"{cond}\"")));
                    }
                }
                if weights.values().any(|w| !w.is_finite()) {
                    return Err(bad("contrast weights must be finite".into()));
                }
                if weights.values().all(|w| *w == 0.0) {
                    return Err(bad("contrast weights are all zero".into()));
                }
                let sum: f64 = weights.values().sum();
                if sum.abs() > WEIGHT_SUM_TOLERANCE {
                    return Err(bad(format!("contrast weights sum to {sum}, not 0")));
                }
            }
            AnalysisKind::DifferenceProfile { pair } => {
                for cond in [&pair.0, &pair.1] {
                    if !cells.contains(cond.as_str()) {
                        return Err(bad(format!("unknown condition \"{cond}\"")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_name(kind: &'static str, name: &str, level_like: bool) -> Result<(), ExperimentError> {
    let invalid = |reason| ExperimentError::InvalidName { kind, name: name.to_string(), reason };
    if name.is_empty() {
        return Err(invalid("must not be empty"));
    }
    if name.trim() != name {
        return Err(invalid("must not have leading or trailing whitespace"));
    }
    if name.contains(['\t', '\n', '\r', ',', '"']) {
        return Err(invalid("must not contain tabs, newlines, commas or quotes"));
    }
    if level_like && (name.contains('|') || name.contains('/')) {
        return Err(invalid("must not contain '|' or '/'"));
    }
    if kind == "experiment" && name.contains('/') {
        return Err(invalid("must not contain '/'"));
    }
    Ok(())
}

fn region_text_problem(text: &str) -> Option<&'static str> {
    if text.trim() != text {
        return Some("leading or trailing whitespace");
    }
    if text.contains("  ") {
        return Some("consecutive spaces");
    }
    if text.chars().any(|c| c.is_whitespace() && c != ' ') {
        return Some("whitespace other than single spaces");
    }
    None
}

// ---------------------------------------------------------------------------
// JSON document format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    mode: Mode,
    factors: Vec<RawFactor>,
    regions: Vec<String>,
    items: Vec<RawItem>,
    analyses: Vec<RawAnalysis>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactor {
    name: String,
    levels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: u32,
    cells: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    name: String,
    kind: AnalysisKindTag,
    regions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    factors: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<[String; 2]>,
}

/// Parses and validates an experiment document.
pub fn parse_experiment(document: &str) -> Result<Experiment, ExperimentError> {
    let raw: RawExperiment = serde_json::from_str(document).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => ExperimentError::Schema { line, column, message },
            _ => ExperimentError::Syntax { line, column, message },
        }
    })?;
    let RawExperiment { name, mode, factors, regions, items, analyses } = raw;

    let factors: Vec<Factor> = factors.into_iter().map(|f| Factor { name: f.name, levels: f.levels }).collect();
    let analyses = analyses.into_iter().map(convert_analysis).collect::<Result<Vec<_>, _>>()?;
    let items = items.into_iter().map(|i| Item { id: i.id, cells: i.cells }).collect();
    Experiment::new(name, mode, factors, regions, items, analyses)
}

fn convert_analysis(raw: RawAnalysis) -> Result<AnalysisSpec, ExperimentError> {
    let bad = |reason: &str| ExperimentError::BadAnalysis { analysis: raw.name.clone(), reason: reason.to_string() };
    let extra = |present: bool, key: &str| -> Result<(), ExperimentError> {
        if present {
            Err(bad(&format!("key \"{key}\" is not allowed for kind {:?}", raw.kind)))
        } else {
            Ok(())
        }
    };
    let kind = match raw.kind {
        AnalysisKindTag::MainEffect => {
            extra(raw.weights.is_some(), "weights")?;
            extra(raw.pair.is_some(), "pair")?;
            match raw.factors.as_deref() {
                Some([f]) => AnalysisKind::MainEffect { factor: f.clone() },
                _ => return Err(bad("main_effect needs exactly one factor in \"factors\"")),
            }
        }
        AnalysisKindTag::Interaction => {
            extra(raw.weights.is_some(), "weights")?;
            extra(raw.pair.is_some(), "pair")?;
            match raw.factors.as_deref() {
                Some([a, b]) => AnalysisKind::Interaction { factors: [a.clone(), b.clone()] },
                _ => return Err(bad("interaction needs exactly two factors in \"factors\"")),
            }
        }
        AnalysisKindTag::Contrast => {
            extra(raw.factors.is_some(), "factors")?;
            extra(raw.pair.is_some(), "pair")?;
            match &raw.weights {
                Some(w) => AnalysisKind::Contrast { weights: w.clone() },
                None => return Err(bad("contrast needs \"weights\"")),
            }
        }
        AnalysisKindTag::DifferenceProfile => {
            extra(raw.factors.is_some(), "factors")?;
            extra(raw.weights.is_some(), "weights")?;
            match &raw.pair {
                Some([a, b]) => AnalysisKind::DifferenceProfile { pair: (a.clone(), b.clone()) },
                None => return Err(bad("difference_profile needs \"pair\"")),
            }
        }
    };
    Ok(AnalysisSpec { name: raw.name, regions: raw.regions, kind })
}

/// Serializes an experiment to its (pretty-printed) JSON document.
pub fn to_json(exp: &Experiment) -> String {
    let raw = RawExperiment {
        name: exp.name.clone(),
        mode: exp.mode,
        factors: exp.factors.iter().map(|f| RawFactor { name: f.name.clone(), levels: f.levels.clone() }).collect(),
        regions: exp.region_names(),
        items: exp.items.iter().map(|i| RawItem { id: i.id, cells: i.cells.clone() }).collect(),
        analyses: exp
            .analyses
            .iter()
            .map(|a| {
                let mut raw = RawAnalysis {
                    name: a.name.clone(),
                    kind: AnalysisKindTag::MainEffect,
                    regions: a.regions.clone(),
                    factors: None,
                    weights: None,
                    pair: None,
                };
                match &a.kind {
                    AnalysisKind::MainEffect { factor } => raw.factors = Some(vec![factor.clone()]),
                    AnalysisKind::Interaction { factors } => {
                        raw.kind = AnalysisKindTag::Interaction;
                        raw.factors = Some(factors.to_vec());
                    }
                    AnalysisKind::Contrast { weights } => {
                        raw.kind = AnalysisKindTag::Contrast;
                        raw.weights = Some(weights.clone());
                    }
                    AnalysisKind::DifferenceProfile { pair } => {
                        raw.kind = AnalysisKindTag::DifferenceProfile;
                        raw.pair = Some([pair.0.clone(), pair.1.clone()]);
                    }
                }
                raw
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("experiment serializes");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn mvrr_document(drop_cell: Option<&str>) -> String {
        let mut cells = vec![
            ("reduced|ambig", ["The woman", "", "brought", "the sandwich from the kitchen", "tripped", "on the carpet ."]),
            ("reduced|unambig", ["The woman", "", "given", "the sandwich from the kitchen", "tripped", "on the carpet ."]),
            ("unreduced|ambig", ["The woman", "who was", "brought", "the sandwich from the kitchen", "tripped", "on the carpet ."]),
            ("unreduced|unambig", ["The woman", "who was", "given", "the sandwich from the kitchen", "tripped", "on the carpet ."]),
        ];
        if let Some(drop) = drop_cell {
            cells.retain(|(k, _)| *k != drop);
        }
        let cells_json: Vec<String> = cells
            .iter()
            .map(|(k, r)| format!("\"{k}\": {}", serde_json::to_string(&r).unwrap()))
            .collect();
        format!(
            r#"{{
  "name": "mvrr",
  "mode": "word",
  "factors": [{{"name": "reduction", "levels": ["reduced", "unreduced"]}},
              {{"name": "ambiguity", "levels": ["ambig", "unambig"]}}],
  "regions": ["Start", "Unreduced content", "RC Verb", "RC contents", "Disambiguator", "End"],
  "items": [{{"id": 1, "cells": {{ {} }}}}],
  "analyses": [{{"name": "garden_path", "kind": "interaction", "regions": ["Disambiguator"],
                 "factors": ["reduction", "ambiguity"]}}]
}}"#,
            cells_json.join(", ")
        )
    }

    #[test]
    fn parses_mvrr_item() {
        let exp = parse_experiment(&mvrr_document(None)).unwrap();
        assert_eq!(exp.items.len(), 1);
        assert_eq!(exp.items[0].cells.len(), 4);
        assert_eq!(exp.factors[0].name, "reduction");
        assert_eq!(exp.factors[1].name, "ambiguity");
        let key = exp.condition_key("reduced|ambig").unwrap();
        assert_eq!(
            exp.items[0].cell_text(&key).unwrap(),
            "The woman brought the sandwich from the kitchen tripped on the carpet ."
        );
        let key = exp.condition_key("unreduced|ambig").unwrap();
        assert_eq!(
            exp.items[0].cell_text(&key).unwrap(),
            "The woman who was brought the sandwich from the kitchen tripped on the carpet ."
        );
    }

    #[test]
    fn missing_cell_names_item_and_cell() {
        let err = parse_experiment(&mvrr_document(Some("unreduced|ambig"))).unwrap_err();
        assert_eq!(err, ExperimentError::MissingCell { item: 1, cell: "unreduced|ambig".into() });
        assert!(err.to_string().contains("item 1") && err.to_string().contains("unreduced|ambig"));
    }

    #[test]
    fn single_level_factor_rejected() {
        let doc = r#"{"name":"x","mode":"word","factors":[{"name":"a","levels":["only"]}],
            "regions":["R"],"items":[{"id":1,"cells":{"only":["w"]}}],"analyses":[]}"#;
        assert_eq!(parse_experiment(doc).unwrap_err(), ExperimentError::TooFewLevels("a".into()));
    }

    #[test]
    fn syntax_errors_report_position() {
        let err = parse_experiment("{\n  \"name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ExperimentError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let doc = mvrr_document(None).replacen("\"mode\": \"word\",", "\"mode\": \"word\", \"colour\": 3,", 1);
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::Schema { .. })));
    }

    #[test]
    fn region_count_and_duplicates_are_distinguished() {
        let doc = mvrr_document(None).replacen("\"on the carpet .\"]", "\"on the\", \"carpet .\"]", 1);
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::RegionCountMismatch { found: 7, .. })));

        let doc = mvrr_document(None).replacen("\"RC Verb\"", "\"Start\"", 1);
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::Duplicate { kind: "region", .. })));

        let doc = mvrr_document(None).replacen("\"unambig\"]", "\"ambig\"]", 1);
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::Duplicate { kind: "level", .. })));
    }

    #[test]
    fn region_text_whitespace_rejected() {
        let doc = mvrr_document(None).replacen("\"tripped\"", "\"tripped \"", 1);
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::BadRegionText { .. })));
    }

    #[test]
    fn contrast_weights_must_sum_to_zero() {
        let doc = mvrr_document(None).replacen(
            r#""kind": "interaction", "regions": ["Disambiguator"],
                 "factors": ["reduction", "ambiguity"]"#,
            r#""kind": "contrast", "regions": ["Disambiguator"], "weights": {"reduced|ambig": 1, "reduced|unambig": -0.5}"#,
            1,
        );
        assert!(matches!(parse_experiment(&doc), Err(ExperimentError::BadAnalysis { .. })));
    }

    #[test]
    fn enumerates_in_declaration_order() {
        let exp = Experiment::new(
            "e",
            Mode::Word,
            vec![Factor::new("A", &["a1", "a2"]), Factor::new("B", &["b1", "b2"])],
            vec!["R".into()],
            vec![Item {
                id: 1,
                cells: ["a1|b1", "a1|b2", "a2|b1", "a2|b2"].iter().map(|k| (k.to_string(), vec!["x".into()])).collect(),
            }],
            vec![],
        )
        .unwrap();
        let keys: Vec<String> = exp.enumerate_cells().iter().map(|k| k.canonical()).collect();
        assert_eq!(keys, ["a1|b1", "a1|b2", "a2|b1", "a2|b2"]);

        let single = Experiment::new(
            "s",
            Mode::Word,
            vec![Factor::new("F", &["x", "y"])],
            vec!["R".into()],
            vec![Item { id: 1, cells: [("x", ""), ("y", "")].iter().map(|(k, _)| (k.to_string(), vec![String::new()])).collect() }],
            vec![],
        )
        .unwrap();
        let keys: Vec<String> = single.enumerate_cells().iter().map(|k| k.canonical()).collect();
        assert_eq!(keys, ["x", "y"]);
    }

    #[test]
    fn cell_text_skips_empty_regions() {
        let texts = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(join_regions(&texts(&["The woman", "", "tripped"])), "The woman tripped");
        assert_eq!(join_regions(&texts(&["", "", ""])), "");
    }
}
