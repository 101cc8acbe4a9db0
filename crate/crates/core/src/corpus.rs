//! Toy grammars producing training text that covers the preset lexicons.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::presets::lex::*;
use crate::presets::Case;

pub const CORPUS_SEED: u64 = 7;
pub const BUNDLED_SENTENCES: usize = 9000;

/// The bundled English corpus: `english(CORPUS_SEED, BUNDLED_SENTENCES)`, one sentence per line.
pub const BUNDLED_ENGLISH: &str = include_str!("../data/english.txt");

const TRANSITIVES: &[&str] = &["disliked", "liked", "praised", "hired", "met", "called", "saw", "helped", "visited", "trusted"];
const FINISHERS: &[&str] = &[
    "sent in the manuscript", "left the room", "won the prize", "was of low quality", "lost the letter",
    "wrote a report", "was very long", "went home early",
];
const ADJECTIVES: &[&str] = &["unreliable", "important", "strange", "long", "old", "new", "useful"];
const DETS: &[&str] = &["the", "the", "the", "a", "every", "some"];

fn one<'a>(rng: &mut ChaCha8Rng, list: &'a [&'a str]) -> &'a str {
    list.choose(rng).expect("non-empty list")
}

fn cap(s: String) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => s,
    }
}

fn np(rng: &mut ChaCha8Rng) -> String {
    let det = one(rng, DETS);
    let noun = match rng.random_range(0..4) {
        0 => one(rng, PEOPLE),
        1 => one(rng, ANIMATE),
        2 => one(rng, INANIMATE),
        _ => one(rng, ORC_ANIMATE),
    };
    format!("{det} {noun}")
}

fn english_sentence(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..14) {
        // Main-verb uses of the MV/RR verbs.
        0 | 1 => {
            let (past, _) = *MVRR_VERBS.choose(rng).unwrap();
            format!("The {} {past} {} {} .", one(rng, PEOPLE), one(rng, THINGS), one(rng, PLACES))
        }
        // Relative clauses, reduced or not, followed by the main verb.
        2 => {
            let (ambig, unambig) = *MVRR_VERBS.choose(rng).unwrap();
            let verb = if rng.random_bool(0.5) { ambig } else { unambig };
            let rc = if rng.random_bool(0.6) { "who was " } else { "" };
            format!(
                "The {} {rc}{verb} {} {} {} {}",
                one(rng, PEOPLE),
                one(rng, THINGS),
                one(rng, PLACES),
                one(rng, INTRANSITIVES),
                one(rng, ENDINGS)
            )
        }
        3 => {
            let animate = rng.random_bool(0.5);
            let noun = if animate { one(rng, ANIMATE) } else { one(rng, INANIMATE) };
            let verb = one(rng, ANIMACY_VERBS);
            let (main, end) = *ANIMACY_ENDINGS.choose(rng).unwrap();
            if animate && rng.random_bool(0.6) {
                format!("The {noun} {verb} {} .", np(rng))
            } else {
                let rc = if rng.random_bool(0.6) { "that was " } else { "" };
                format!("The {noun} {rc}{verb} {} {main} {end}", one(rng, AGENTS))
            }
        }
        // Object relatives, singly or doubly nested.
        4 => format!(
            "The {} who the {} {} {} .",
            one(rng, ORC_ANIMATE),
            one(rng, ORC_ANIMATE),
            one(rng, TRANSITIVES),
            one(rng, FINISHERS)
        ),
        5 => format!(
            "The {} that the {} who the {} {} {} was {} .",
            one(rng, ORC_INANIMATE),
            one(rng, ORC_ANIMATE),
            one(rng, ORC_ANIMATE),
            one(rng, TRANSITIVES),
            one(rng, TRANSITIVES),
            one(rng, ADJECTIVES)
        ),
        // Subordinate clauses are followed by a matrix clause.
        6 | 7 => {
            let (verb, object) = *SUB_VERBS.choose(rng).unwrap();
            let mut subject = format!("the {}", one(rng, PEOPLE));
            if rng.random_bool(0.3) {
                subject = format!("{subject} {}", one(rng, SUBJECT_MODIFIERS));
            }
            let mut obj = object.to_string();
            if rng.random_bool(0.3) {
                obj = format!("{obj} {}", one(rng, OBJECT_MODIFIERS));
            }
            if rng.random_bool(0.6) {
                format!("{} {subject} {verb} {obj} , {} .", one(rng, SUBORDINATORS), one(rng, MATRIX_CLAUSES))
            } else {
                format!("{} {verb} {obj} .", cap(subject))
            }
        }
        // Reflexives agree with the stereotyped gender of the local subject.
        8 | 9 => {
            let feminine = rng.random_bool(0.5);
            let noun = if feminine { one(rng, FEMININE) } else { one(rng, MASCULINE) };
            let agree = rng.random_bool(0.9);
            let pronoun = if feminine == agree { "herself" } else { "himself" };
            let intervener = if rng.random_bool(0.4) {
                let other = if rng.random_bool(0.5) { one(rng, FEMININE) } else { one(rng, MASCULINE) };
                format!(" who is related to the {other}")
            } else {
                String::new()
            };
            format!("The {noun}{intervener} {} {pronoun} .", one(rng, REFLEXIVE_VERBS))
        }
        // NPIs mostly appear under a matrix "no".
        10 | 11 => {
            let (noun, person, likes, verb, object) = *NPI_FRAMES.choose(rng).unwrap();
            let matrix_no = rng.random_bool(0.5);
            let embedded_no = rng.random_bool(0.3);
            let det = if matrix_no { "No" } else { "The" };
            let edet = if embedded_no { "no" } else { "the" };
            let (ever, any) = if matrix_no {
                (rng.random_bool(0.5), rng.random_bool(0.4))
            } else {
                (rng.random_bool(0.03), rng.random_bool(0.03))
            };
            let ever = if ever { " ever" } else { "" };
            let any = if any { "any " } else { "" };
            format!("{det} {noun} that {edet} {person} {likes} has{ever} {verb} {any}{object} .")
        }
        12 => format!("No one has ever {} {} .", one(rng, TRANSITIVES), np(rng)),
        _ => format!("{} {} {} .", cap(np(rng)), one(rng, INTRANSITIVES), one(rng, ENDINGS).trim_end_matches(" .")),
    }
}

pub fn english(seed: u64, sentences: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences).map(|_| english_sentence(&mut rng)).collect()
}

fn ja_clause(rng: &mut ChaCha8Rng, case: Case, shika: bool, neg: bool) -> (String, String, String) {
    let (nps, verbs) = case.frames();
    let np = *nps.choose(rng).unwrap();
    let (aff, negative) = *verbs.choose(rng).unwrap();
    let place = if rng.random_bool(0.5) { format!(" {}", one(rng, JA_PLACES)) } else { String::new() };
    (np.to_string(), format!("{}{place}", case.particle(shika)), if neg { negative } else { aff }.to_string())
}

fn japanese_sentence(rng: &mut ChaCha8Rng) -> String {
    let cases = [Case::Nom, Case::Acc, Case::Dat, Case::Topic];
    if rng.random_bool(0.6) {
        let case = cases[rng.random_range(0..4)];
        let shika = rng.random_bool(0.3);
        // Shika is almost always followed by negation.
        let neg = if shika { rng.random_bool(0.95) } else { rng.random_bool(0.3) };
        let (np, particle, verb) = ja_clause(rng, case, shika, neg);
        return format!("{} {np} {particle} {verb} 。", one(rng, JA_TIMES));
    }
    let matrix_case = if rng.random_bool(0.5) { Case::Dat } else { Case::Topic };
    let case = cases[rng.random_range(0..3)];
    let position = rng.random_range(0..3); // 0: none, 1: matrix, 2: embedded
    let emb_neg = if position == 2 { rng.random_bool(0.95) } else { rng.random_bool(0.3) };
    let mat_neg = if position == 1 { rng.random_bool(0.95) } else { rng.random_bool(0.3) };
    let (np, particle, verb) = ja_clause(rng, case, position == 2, emb_neg);
    let (mv_aff, mv_neg) = *JA_MATRIX_VERBS.choose(rng).unwrap();
    format!(
        "{} {} {np} {particle} {verb} と {} 。",
        one(rng, JA_MATRIX_NP),
        matrix_case.particle(position == 1),
        if mat_neg { mv_neg } else { mv_aff }
    )
}

/// Japanese sentences with region-style spacing, for character-mode models.
pub fn japanese(seed: u64, sentences: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sentences).map(|_| japanese_sentence(&mut rng)).collect()
}
