//! Train Kneser-Ney models of increasing order on the bundled corpus,
//! compare held-out perplexity, and round-trip one through ARPA.

use lm_psych::corpus;
use lm_psych::experiment::Mode;
use lm_psych::ngram::{self, NGramModel, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sentences = ngram::read_corpus(corpus::BUNDLED_ENGLISH, Mode::Word);
    let (held, train): (Vec<_>, Vec<_>) = sentences.into_iter().enumerate().partition(|(i, _)| i % 10 == 9);
    let train: Vec<Vec<String>> = train.into_iter().map(|(_, s)| s).collect();
    let held: Vec<Vec<String>> = held.into_iter().map(|(_, s)| s).collect();
    println!("{} training sentences, {} held out", train.len(), held.len());

    let mut best = None;
    for order in 1..=5 {
        let model = ngram::train(&train, &TrainConfig::new(order, Mode::Word))?;
        let ppl = model.perplexity(held.iter().map(Vec::as_slice));
        println!("order {order}: {:>7} n-grams, held-out perplexity {ppl:.3}", model.ngram_counts().iter().sum::<usize>());
        best = Some(model);
    }
    let model = best.unwrap();

    let mut arpa = Vec::new();
    model.save_arpa(&mut arpa)?;
    let reloaded = NGramModel::load_arpa(arpa.as_slice())?;
    let probe = ngram::tokenize("the lawyer examined the evidence .", Mode::Word);
    println!(
        "ARPA: {} bytes; log2 p(probe) {:.6} before, {:.6} after reload",
        arpa.len(),
        model.log2_joint(&probe, true),
        reloaded.log2_joint(&probe, true)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        println!("sample: {}", reloaded.sample(&["the"], 20, &mut rng)?.join(" "));
    }
    Ok(())
}
