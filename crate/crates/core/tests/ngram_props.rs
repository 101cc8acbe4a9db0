mod common;

use lm_psych::ngram::{self, NGramModel, TrainConfig, BOS_ID, EOS_ID};
use lm_psych::experiment::Mode;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_corpus() -> Vec<Vec<String>> {
    ["a b c", "a b d", "b c a", "c a b d", "d d a", "a c"]
        .iter()
        .map(|s| ngram::tokenize(s, Mode::Word))
        .collect()
}

fn total_mass(model: &NGramModel, context: &[u32]) -> f64 {
    model.predictable().map(|w| model.log2_prob(context, w).exp2()).sum()
}

fn random_context(model: &NGramModel, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let n = rng.random_range(0..model.order());
    let mut ctx = vec![BOS_ID];
    for _ in 0..n {
        // Ids 1 (</s>) never occur inside a history.
        let mut id = rng.random_range(0..model.vocabulary().len() as u32);
        while id == EOS_ID || id == BOS_ID {
            id = rng.random_range(0..model.vocabulary().len() as u32);
        }
        ctx.push(id);
    }
    if rng.random_bool(0.3) {
        ctx.remove(0);
    }
    ctx
}

#[test]
fn mass_sums_to_one_for_sampled_contexts_in_both_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for model in [common::bundled_model(4), common::japanese_model(5)] {
        for _ in 0..200 {
            let ctx = random_context(&model, &mut rng);
            let mass = total_mass(&model, &ctx);
            assert!((mass - 1.0).abs() < 1e-9, "context {ctx:?}: {mass}");
        }
    }
}

#[test]
fn arpa_round_trip_preserves_probabilities() {
    let model = common::bundled_model(3);
    let back = NGramModel::load_arpa(model.to_arpa().as_bytes()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let ctx = random_context(&model, &mut rng);
        let w = rng.random_range(1..model.vocabulary().len() as u32);
        let (a, b) = (model.log2_prob(&ctx, w), back.log2_prob(&ctx, w));
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn sample_frequencies_match_probabilities() {
    let model = ngram::train(&small_corpus(), &TrainConfig { unk_threshold: 1, ..TrainConfig::new(3, Mode::Word) }).unwrap();
    let prefix = ["a", "b"];
    let mut history = vec![BOS_ID];
    history.extend(model.ids(&prefix));
    let probs = model.distribution(&history);
    let n = 10_000usize;
    let mut counts = vec![0usize; probs.len()];
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        rng.set_stream(i as u64);
        let mut out = model.sample(&prefix, 1, &mut rng).unwrap();
        let id = match out.pop() {
            Some(tok) => model.vocabulary().id(&tok).unwrap(),
            None => EOS_ID,
        };
        counts[id as usize] += 1;
    }
    for (id, &p) in probs.iter().enumerate() {
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let freq = counts[id] as f64 / n as f64;
        assert!((freq - p).abs() <= 3.0 * se + 1e-12, "id {id}: {freq} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_trained_model_normalizes(
        corpus in prop::collection::vec(prop::collection::vec("[a-e]", 1..7), 1..12),
        order in 1usize..=4,
        threshold in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let sentences: Vec<Vec<String>> = corpus;
        let config = TrainConfig { unk_threshold: threshold, ..TrainConfig::new(order, Mode::Word) };
        let model = ngram::train(&sentences, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let ctx = random_context(&model, &mut rng);
            let mass = total_mass(&model, &ctx);
            prop_assert!((mass - 1.0).abs() < 1e-9, "{:?}: {}", ctx, mass);
            let dist: f64 = model.distribution(&ctx).iter().sum();
            prop_assert!((dist - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scores_follow_the_chain_rule(tokens in prop::collection::vec("[a-e]", 0..10), eos in any::<bool>()) {
        let model = ngram::train(&small_corpus(), &TrainConfig::new(3, Mode::Word)).unwrap();
        let scores = model.score(&tokens, eos);
        prop_assert_eq!(scores.len(), tokens.len() + usize::from(eos));
        prop_assert!(scores.iter().all(|s| s.is_finite() && *s >= 0.0));
        let total: f64 = scores.iter().sum();
        let joint = -model.log2_joint(&tokens, eos);
        prop_assert!((total - joint).abs() <= 1e-9 * joint.abs().max(1.0));
        prop_assert_eq!(model.score(&tokens, eos), scores);
    }
}
