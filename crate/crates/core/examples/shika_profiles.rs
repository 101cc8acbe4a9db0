//! Region-by-region surprisal differences for the Japanese shika designs,
//! scored by a character-level model.

use lm_psych::backend::NGramBackend;
use lm_psych::corpus;
use lm_psych::experiment::Mode;
use lm_psych::ngram::{self, TrainConfig};
use lm_psych::pipeline::{self, score_table};
use lm_psych::presets::{self, PresetOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = corpus::japanese(corpus::CORPUS_SEED, 4000).join("\n");
    let model = ngram::train(&ngram::read_corpus(&text, Mode::Character), &TrainConfig::new(5, Mode::Character))?;
    let backend = NGramBackend::new(model, "ja-char-5gram");

    for (name, items) in [("shika-single", None), ("shika-clausemate", Some(120))] {
        let exp = presets::build(name, &PresetOptions { items, ..Default::default() })?;
        let table = score_table(&exp, &backend, 4)?;
        for outcome in pipeline::run_analyses(&table, &exp)? {
            let Some(profile) = &outcome.profile else { continue };
            println!("{name}: {}  ({} - {})", outcome.spec.name, profile.pair.0, profile.pair.1);
            for p in &profile.points {
                println!("  {:<14} {:>8.3} +/- {:.3}", p.region, p.difference, p.ci_half_width);
            }
        }
    }
    Ok(())
}
