//! Score every bundled design with a trigram model and print the
//! headline estimate of each analysis.
//!
//! A trigram sees two words of history, so contrasts whose critical word is
//! further from the manipulation come out at exactly zero.

use lm_psych::backend::NGramBackend;
use lm_psych::corpus;
use lm_psych::experiment::Mode;
use lm_psych::ngram::{self, TrainConfig};
use lm_psych::pipeline::{self, score_table};
use lm_psych::presets::{self, PresetOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let english = ngram::read_corpus(corpus::BUNDLED_ENGLISH, Mode::Word);
    let english = NGramBackend::new(ngram::train(&english, &TrainConfig::new(3, Mode::Word))?, "bundled-3gram");
    let japanese = corpus::japanese(corpus::CORPUS_SEED, 4000).join("\n");
    let japanese = ngram::read_corpus(&japanese, Mode::Character);
    let japanese = NGramBackend::new(ngram::train(&japanese, &TrainConfig::new(5, Mode::Character))?, "ja-5gram");

    for info in presets::PRESETS.iter().filter(|p| p.name != "orc-completions") {
        // The clausemate design is large; a subset keeps the example quick.
        let items = (info.items > 200).then_some(200);
        let exp = presets::build(info.name, &PresetOptions { items, ..Default::default() })?;
        let backend = if exp.mode == Mode::Character { &japanese } else { &english };
        let table = score_table(&exp, backend, 4)?;
        println!("{} ({} items)", exp.name, exp.items.len());
        for outcome in pipeline::run_analyses(&table, &exp)? {
            for row in outcome.rows.iter().filter(|r| r.term != "(Intercept)").take(3) {
                println!("  {:<32} {:<24} {:>9.3} bits  p = {:.3e}", outcome.spec.name, row.term, row.estimate, row.p);
            }
        }
    }
    Ok(())
}
