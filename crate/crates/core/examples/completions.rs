//! Completion workflow: sample continuations of relative-clause prefixes,
//! judge them with a simulated rater, merge, and fit the judgment model.

use lm_psych::backend::NGramBackend;
use lm_psych::completions::{self, Judgment};
use lm_psych::corpus;
use lm_psych::experiment::Mode;
use lm_psych::ngram::{self, TrainConfig};
use lm_psych::presets::{self, PresetOptions};
use lm_psych::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = presets::build("orc-completions", &PresetOptions::default())?;
    let sentences = ngram::read_corpus(corpus::BUNDLED_ENGLISH, Mode::Word);
    let trigram = NGramBackend::new(ngram::train(&sentences, &TrainConfig::new(3, Mode::Word))?, "trigram");
    let bigram = NGramBackend::new(ngram::train(&sentences, &TrainConfig::new(2, Mode::Word))?, "bigram");

    let pending = completions::run_completions(&exp, &[&trigram, &bigram], 9, 12, 2024)?;
    for r in pending.iter().take(4) {
        println!("{:>3} {:<4} {:<8} {}", r.prefix_id, r.condition, r.backend, r.text);
    }

    // Stand-in for human judges: deeper embeddings are judged worse.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut judged = pending.clone();
    for r in &mut judged {
        let depth = completions::depth_value(&r.condition)?;
        let p = 1.0 / (1.0 + (-(2.0 - 2.0 * depth)).exp());
        r.judgment = if rng.random_bool(p) { Judgment::Grammatical } else { Judgment::Ungrammatical };
    }
    let file = completions::to_tsv(&judged);
    let merged = completions::merge_judgments(&pending, &[completions::parse_tsv(&file)?])?;

    let analysis = completions::analyze_completions(&merged)?;
    println!("\n{}", analysis.summary());
    println!("{}", stats::results_markdown(&analysis.rows()));
    print!("{}", analysis.proportions_csv());
    Ok(())
}
