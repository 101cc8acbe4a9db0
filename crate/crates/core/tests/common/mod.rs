#![allow(dead_code)]

use std::collections::BTreeMap;

use lm_psych::corpus;
use lm_psych::experiment::{AnalysisKind, AnalysisSpec, Experiment, Factor, Item, Mode};
use lm_psych::ngram::{self, NGramModel, TrainConfig};
use proptest::prelude::*;

/// Bundled corpus split 9:1 into training and held-out sentences.
pub fn bundled_split() -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let all = ngram::read_corpus(corpus::BUNDLED_ENGLISH, Mode::Word);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, s) in all.into_iter().enumerate() {
        if i % 10 == 9 {
            held.push(s);
        } else {
            train.push(s);
        }
    }
    (train, held)
}

pub fn bundled_model(order: usize) -> NGramModel {
    let sentences = ngram::read_corpus(corpus::BUNDLED_ENGLISH, Mode::Word);
    ngram::train(&sentences, &TrainConfig::new(order, Mode::Word)).unwrap()
}

pub fn japanese_model(order: usize) -> NGramModel {
    let text = corpus::japanese(corpus::CORPUS_SEED, 4000).join("\n");
    ngram::train(&ngram::read_corpus(&text, Mode::Character), &TrainConfig::new(order, Mode::Character)).unwrap()
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,6}",
        Just("très".to_string()),
        Just("——".to_string()),
        Just("今日".to_string()),
        Just(",".to_string()),
    ]
}

/// A region text: empty, or 1-4 words separated by single spaces.
pub fn region_text() -> impl Strategy<Value = String> {
    prop_oneof![1 => Just(String::new()), 4 => prop::collection::vec(word(), 1..4).prop_map(|w| w.join(" "))]
}

/// Valid experiments with 1-2 factors, 1-4 regions and 1-4 items.
pub fn experiment() -> impl Strategy<Value = Experiment> {
    (1usize..=2, 2usize..=3, 1usize..=4, 1usize..=4, prop::bool::ANY)
        .prop_flat_map(|(nf, nl, nr, ni, character)| {
            let cells = nl.pow(nf as u32);
            let texts = prop::collection::vec(prop::collection::vec(region_text(), nr), cells * ni);
            (Just((nf, nl, nr, ni, character)), texts)
        })
        .prop_map(|((nf, nl, nr, ni, character), texts)| {
            let factors: Vec<Factor> = (0..nf)
                .map(|f| {
                    let levels: Vec<String> = (0..nl).map(|l| format!("f{f}l{l}")).collect();
                    Factor { name: format!("f{f}"), levels }
                })
                .collect();
            let regions: Vec<String> = (0..nr).map(|r| format!("Region {r}")).collect();
            let mut keys: Vec<String> = vec![String::new()];
            for f in &factors {
                keys = keys
                    .iter()
                    .flat_map(|k| f.levels.iter().map(move |l| if k.is_empty() { l.clone() } else { format!("{k}|{l}") }))
                    .collect();
            }
            let mut texts = texts.into_iter();
            let items: Vec<Item> = (1..=ni as u32)
                .map(|id| {
                    let cells: BTreeMap<String, Vec<String>> = keys.iter().map(|k| (k.clone(), texts.next().unwrap())).collect();
                    Item { id, cells }
                })
                .collect();
            let mut analyses = Vec::new();
            if nl == 2 {
                analyses.push(AnalysisSpec {
                    name: "main".into(),
                    regions: vec![regions[0].clone()],
                    kind: AnalysisKind::MainEffect { factor: "f0".into() },
                });
            }
            analyses.push(AnalysisSpec {
                name: "profile".into(),
                regions: Vec::new(),
                kind: AnalysisKind::DifferenceProfile { pair: (keys[0].clone(), keys[1].clone()) },
            });
            let mode = if character { Mode::Character } else { Mode::Word };
            Experiment::new("generated", mode, factors, regions, items, analyses).expect("strategy builds valid experiments")
        })
}
