//! Reconstructed stimulus sets for the eight built-in designs.
//!
//! Item 1 of each English design is the published example sentence set;
//! the remaining items are seeded recombinations of the lexical slot lists
//! below. The Japanese designs are generated entirely from slot lists.

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::experiment::{AnalysisKind, AnalysisSpec, ConditionKey, Experiment, ExperimentError, Factor, Item, Mode};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset \"{0}\" (try `presets list`)")]
    Unknown(String),
    #[error("preset {name}: only {available} distinct items can be generated, {requested} requested")]
    TooManyItems { name: String, requested: usize, available: usize },
    #[error(transparent)]
    Invalid(#[from] ExperimentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub items: usize,
    pub mode: Mode,
    pub description: &'static str,
}

pub const PRESETS: [PresetInfo; 8] = [
    PresetInfo {
        name: "mvrr",
        items: 29,
        mode: Mode::Word,
        description: "MV/RR garden path: RC reduction x verb-form ambiguity (reconstruction)",
    },
    PresetInfo {
        name: "mvrr-animacy",
        items: 30,
        mode: Mode::Word,
        description: "MV/RR garden path: RC reduction x subject animacy (reconstruction)",
    },
    PresetInfo {
        name: "orc-completions",
        items: 20,
        mode: Mode::Word,
        description: "object relative clause prefixes at embedding depth one and two, for completion sampling (reconstruction)",
    },
    PresetInfo {
        name: "subordination",
        items: 23,
        mode: Mode::Word,
        description: "subordinator x matrix clause x subordinate-clause intervener (reconstruction)",
    },
    PresetInfo {
        name: "reflexive",
        items: 30,
        mode: Mode::Word,
        description: "reflexive gender agreement with stereotyped antecedents and interveners (reconstruction)",
    },
    PresetInfo {
        name: "npi-english",
        items: 26,
        mode: Mode::Word,
        description: "English NPIs ever/any: matrix vs embedded 'no' licensor (reconstruction)",
    },
    PresetInfo {
        name: "shika-single",
        items: 83,
        mode: Mode::Character,
        description: "Japanese NPI shika in single clauses: shika x verb polarity (generated)",
    },
    PresetInfo {
        name: "shika-clausemate",
        items: 2218,
        mode: Mode::Character,
        description: "Japanese shika clausemate condition: shika x position x embedded verb x matrix verb (generated)",
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetOptions {
    pub seed: u64,
    /// Number of items; `None` uses the design's default count.
    pub items: Option<usize>,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { seed: DEFAULT_SEED, items: None }
    }
}

pub fn info(name: &str) -> Option<&'static PresetInfo> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn build(name: &str, options: &PresetOptions) -> Result<Experiment, PresetError> {
    let info = info(name).ok_or_else(|| PresetError::Unknown(name.to_string()))?;
    let count = options.items.unwrap_or(info.items);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    match name {
        "mvrr" => mvrr(count, &mut rng),
        "mvrr-animacy" => animacy(count, &mut rng),
        "orc-completions" => orc(count, &mut rng),
        "subordination" => subordination(count, &mut rng),
        "reflexive" => reflexive(count, &mut rng),
        "npi-english" => npi(count, &mut rng),
        "shika-single" => shika_single(count, &mut rng),
        "shika-clausemate" => shika_clausemate(count, &mut rng),
        _ => unreachable!("listed preset"),
    }
}

// Lexical slot lists. Shared with the corpus generator so that n-gram
// models trained on generated text cover the stimuli.
pub(crate) mod lex {
    pub const PEOPLE: &[&str] = &[
        "woman", "man", "girl", "boy", "teacher", "doctor", "nurse", "student", "child", "waiter", "farmer", "soldier",
        "author", "lawyer", "senator", "clerk", "customer", "passenger", "tourist", "driver", "editor", "critic",
        "reporter", "banker", "judge", "patient", "artist", "manager",
    ];
    /// Ambiguous past/participle form paired with an unambiguous participle.
    pub const MVRR_VERBS: &[(&str, &str)] = &[
        ("brought", "given"),
        ("handed", "given"),
        ("sent", "shown"),
        ("offered", "shown"),
        ("passed", "thrown"),
        ("served", "given"),
        ("mailed", "written"),
        ("paid", "given"),
        ("sold", "shown"),
        ("told", "shown"),
        ("read", "written"),
        ("fed", "given"),
    ];
    pub const THINGS: &[&str] = &[
        "the sandwich", "the letter", "the book", "the package", "the ticket", "the money", "the flowers", "the map",
        "the note", "the coffee", "the story", "the photograph",
    ];
    pub const PLACES: &[&str] = &[
        "from the kitchen", "at the station", "in the morning", "near the door", "by the window", "after lunch",
        "on the train", "in the garden", "at the office",
    ];
    pub const INTRANSITIVES: &[&str] = &[
        "tripped", "fell", "smiled", "laughed", "cried", "left", "waited", "sneezed", "shouted", "stumbled",
    ];
    pub const ENDINGS: &[&str] = &[
        "on the carpet .", "in the hallway .", "near the door .", "after the meeting .", "at the party .",
        "in the park .", "on the stairs .",
    ];

    pub const ANIMATE: &[&str] = &[
        "witness", "defendant", "suspect", "patient", "student", "child", "driver", "prisoner", "artist", "victim",
        "teacher", "worker",
    ];
    pub const INANIMATE: &[&str] = &[
        "evidence", "document", "car", "letter", "painting", "report", "package", "photograph", "contract", "engine",
        "building", "sample",
    ];
    pub const ANIMACY_VERBS: &[&str] = &[
        "examined", "studied", "described", "photographed", "recorded", "checked", "inspected", "watched",
        "mentioned", "moved", "carried", "found",
    ];
    pub const AGENTS: &[&str] = &[
        "by the lawyer", "by the police", "by the doctor", "by the reporter", "by the teacher", "by the judge",
        "by the expert",
    ];
    pub const ANIMACY_ENDINGS: &[(&str, &str)] = &[
        ("turned out", "to be unreliable ."),
        ("seemed", "to be unreliable ."),
        ("turned out", "to be important ."),
        ("was", "very important ."),
        ("seemed", "quite strange ."),
        ("was", "never seen again ."),
    ];

    pub const ORC_INANIMATE: &[&str] = &[
        "manuscript", "report", "letter", "book", "article", "painting", "song", "proposal", "story", "speech",
    ];
    pub const ORC_ANIMATE: &[&str] = &[
        "author", "editor", "critic", "reporter", "senator", "lawyer", "banker", "doctor", "teacher", "student",
        "artist", "judge",
    ];

    pub const SUBORDINATORS: &[&str] = &["As", "When", "Because", "While", "Although", "After", "Before", "If"];
    pub const SUB_VERBS: &[(&str, &str)] = &[
        ("studied", "the textbook"),
        ("read", "the letter"),
        ("cleaned", "the room"),
        ("opened", "the window"),
        ("checked", "the report"),
        ("cooked", "the dinner"),
        ("watched", "the game"),
        ("signed", "the contract"),
    ];
    pub const SUBJECT_MODIFIERS: &[&str] = &[
        "from the hospital", "who was tired", "that the patient liked", "with the red coat", "who arrived late",
    ];
    pub const OBJECT_MODIFIERS: &[&str] = &[
        "on the shelf", "that was open", "that the student wrote", "near the door", "which was old",
    ];
    pub const MATRIX_CLAUSES: &[&str] = &[
        "the nurse walked into the office", "the phone rang", "the students left the room", "the lights went out",
        "the manager smiled", "the dog started barking", "the guests arrived",
    ];

    pub const FEMININE: &[&str] = &[
        "hairdresser", "nurse", "secretary", "receptionist", "librarian", "nanny", "housekeeper", "dietitian",
        "manicurist", "stylist", "florist", "maid", "babysitter", "dancer", "midwife",
    ];
    pub const MASCULINE: &[&str] = &[
        "lumberjack", "soldier", "firefighter", "plumber", "carpenter", "mechanic", "electrician", "pilot", "surgeon",
        "engineer", "roofer", "miner", "butcher", "janitor", "sailor",
    ];
    pub const REFLEXIVE_VERBS: &[&str] = &[
        "cut", "washed", "hurt", "blamed", "introduced", "praised", "dressed", "defended", "injured", "saw",
    ];

    /// (matrix noun, embedded noun, embedded verb, main verb, object)
    pub const NPI_FRAMES: &[(&str, &str, &str, &str, &str)] = &[
        ("bill", "senator", "likes", "found", "support in the senate"),
        ("law", "judge", "supports", "received", "praise from the press"),
        ("book", "critic", "admires", "won", "prizes in the contest"),
        ("film", "director", "likes", "earned", "money in the theaters"),
        ("plan", "mayor", "supports", "gained", "votes in the city"),
        ("song", "singer", "admires", "reached", "fans in the country"),
        ("policy", "minister", "likes", "had", "effects on the market"),
        ("report", "scientist", "trusts", "changed", "minds in the field"),
        ("project", "manager", "supports", "made", "progress in the lab"),
        ("story", "reporter", "likes", "caused", "trouble in the town"),
    ];

    // Japanese. Verb pairs are (affirmative, negative) past forms.
    pub const JA_TIMES: &[&str] = &["今日", "昨日", "今朝", "先週", "夜", "朝"];
    pub const JA_PLACES: &[&str] = &["駅で", "家で", "学校で", "公園で", "店で", "図書館で"];
    pub const JA_NOM_NP: &[&str] = &["バス", "電車", "手紙", "荷物", "学生", "先生", "子供", "友達", "客", "雨"];
    pub const JA_NOM_VERBS: &[(&str, &str)] = &[
        ("来た", "来なかった"),
        ("着いた", "着かなかった"),
        ("残った", "残らなかった"),
        ("見えた", "見えなかった"),
        ("届いた", "届かなかった"),
    ];
    pub const JA_ACC_NP: &[&str] = &["本", "新聞", "手紙", "パン", "映画", "写真", "漢字", "野菜"];
    pub const JA_ACC_VERBS: &[(&str, &str)] = &[
        ("読んだ", "読まなかった"),
        ("買った", "買わなかった"),
        ("食べた", "食べなかった"),
        ("見た", "見なかった"),
        ("書いた", "書かなかった"),
    ];
    pub const JA_DAT_NP: &[&str] = &["先生", "友達", "医者", "母", "父", "社長"];
    pub const JA_DAT_VERBS: &[(&str, &str)] = &[
        ("会った", "会わなかった"),
        ("話した", "話さなかった"),
        ("頼んだ", "頼まなかった"),
        ("電話した", "電話しなかった"),
    ];
    pub const JA_TOPIC_NP: &[&str] = &["太郎", "花子", "先生", "学生", "子供", "社長"];
    pub const JA_TOPIC_VERBS: &[(&str, &str)] = &[
        ("笑った", "笑わなかった"),
        ("来た", "来なかった"),
        ("休んだ", "休まなかった"),
        ("答えた", "答えなかった"),
    ];
    pub const JA_MATRIX_NP: &[&str] = &["太郎", "花子", "先生", "母", "社長", "医者", "次郎", "友達"];
    /// Matrix verbs taking a と-complement.
    pub const JA_MATRIX_VERBS: &[(&str, &str)] = &[("言った", "言わなかった"), ("思った", "思わなかった"), ("書いた", "書かなかった")];
    pub const JA_SHIKA: &str = "しか";
}

/// Grammatical role of the NP that hosts (or would host) the particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Case {
    Nom,
    Acc,
    Dat,
    Topic,
}

impl Case {
    pub(crate) fn particle(self, shika: bool) -> &'static str {
        match (self, shika) {
            (Case::Nom, false) => "が",
            (Case::Acc, false) => "を",
            (Case::Dat, false) => "に",
            (Case::Topic, false) => "は",
            (Case::Dat, true) => "にしか",
            (_, true) => lex::JA_SHIKA,
        }
    }

    pub(crate) fn frames(self) -> (&'static [&'static str], &'static [(&'static str, &'static str)]) {
        match self {
            Case::Nom => (lex::JA_NOM_NP, lex::JA_NOM_VERBS),
            Case::Acc => (lex::JA_ACC_NP, lex::JA_ACC_VERBS),
            Case::Dat => (lex::JA_DAT_NP, lex::JA_DAT_VERBS),
            Case::Topic => (lex::JA_TOPIC_NP, lex::JA_TOPIC_VERBS),
        }
    }
}

fn factor(name: &str, levels: &[&str]) -> Factor {
    Factor::new(name, levels)
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn interaction(name: &str, region: &str, a: &str, b: &str) -> AnalysisSpec {
    AnalysisSpec {
        name: name.into(),
        regions: vec![region.into()],
        kind: AnalysisKind::Interaction { factors: [a.into(), b.into()] },
    }
}

fn contrast(name: &str, regions: &[&str], weights: &[(&str, f64)]) -> AnalysisSpec {
    AnalysisSpec {
        name: name.into(),
        regions: strings(regions),
        kind: AnalysisKind::Contrast { weights: weights.iter().map(|(k, w)| (k.to_string(), *w)).collect() },
    }
}

fn profile(name: &str, a: &str, b: &str) -> AnalysisSpec {
    AnalysisSpec {
        name: name.into(),
        regions: Vec::new(),
        kind: AnalysisKind::DifferenceProfile { pair: (a.into(), b.into()) },
    }
}

fn cells_of(factors: &[Factor]) -> Vec<ConditionKey> {
    let mut keys: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for f in factors {
        keys = keys
            .into_iter()
            .flat_map(|prefix| {
                f.levels.iter().map(move |l| {
                    let mut k = prefix.clone();
                    k.push((f.name.clone(), l.clone()));
                    k
                })
            })
            .collect();
    }
    keys.into_iter().map(ConditionKey::new).collect()
}

/// Collects `count` distinct items: `first` (if any) then draws from `draw`.
/// `draw` returns a signature used for de-duplication and a cell builder.
fn collect_items<S, F>(
    name: &str,
    count: usize,
    factors: &[Factor],
    first: Option<S>,
    mut draw: impl FnMut() -> S,
    render: F,
) -> Result<Vec<Item>, PresetError>
where
    S: Clone + Eq + std::hash::Hash,
    F: Fn(&S, &ConditionKey) -> Vec<String>,
{
    let keys = cells_of(factors);
    let mut seen = HashSet::new();
    let mut sigs = Vec::with_capacity(count);
    if let Some(f) = first {
        if count > 0 {
            seen.insert(f.clone());
            sigs.push(f);
        }
    }
    let mut misses = 0;
    while sigs.len() < count {
        let s = draw();
        if seen.insert(s.clone()) {
            sigs.push(s);
            misses = 0;
        } else {
            misses += 1;
            if misses > 10_000 {
                return Err(PresetError::TooManyItems { name: name.into(), requested: count, available: sigs.len() });
            }
        }
    }
    Ok(sigs
        .iter()
        .enumerate()
        .map(|(i, sig)| {
            let cells: BTreeMap<String, Vec<String>> =
                keys.iter().map(|k| (k.canonical(), render(sig, k))).collect();
            Item { id: i as u32 + 1, cells }
        })
        .collect())
}

fn idx(rng: &mut ChaCha8Rng, len: usize) -> usize {
    rng.random_range(0..len)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn mvrr(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![factor("reduction", &["reduced", "unreduced"]), factor("ambiguity", &["ambig", "unambig"])];
    let regions = strings(&["Start", "Unreduced content", "RC Verb", "RC contents", "Disambiguator", "End"]);
    // (person, verb pair, thing, place, disambiguator, ending)
    let first = (0, 0, 0, 0, 0, 0);
    let items = collect_items(
        "mvrr",
        count,
        &factors,
        Some(first),
        || {
            (
                idx(rng, PEOPLE.len()),
                idx(rng, MVRR_VERBS.len()),
                idx(rng, THINGS.len()),
                idx(rng, PLACES.len()),
                idx(rng, INTRANSITIVES.len()),
                idx(rng, ENDINGS.len()),
            )
        },
        |&(p, v, t, pl, d, e), key| {
            let reduced = key.level_of("reduction") == Some("reduced");
            let ambig = key.level_of("ambiguity") == Some("ambig");
            let verb = if ambig { MVRR_VERBS[v].0 } else { MVRR_VERBS[v].1 };
            vec![
                format!("The {}", PEOPLE[p]),
                if reduced { String::new() } else { "who was".into() },
                verb.into(),
                format!("{} {}", THINGS[t], PLACES[pl]),
                INTRANSITIVES[d].into(),
                ENDINGS[e].into(),
            ]
        },
    )?;
    let analyses = vec![
        interaction("garden_path", "Disambiguator", "reduction", "ambiguity"),
        interaction("recovery", "End", "reduction", "ambiguity"),
    ];
    Ok(Experiment::new("mvrr", Mode::Word, factors, regions, items, analyses)?)
}

fn animacy(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![factor("reduction", &["reduced", "unreduced"]), factor("animacy", &["animate", "inanimate"])];
    let regions = strings(&["Start", "Unreduced content", "RC Verb", "By phrase", "Main verb", "End"]);
    let items = collect_items(
        "mvrr-animacy",
        count,
        &factors,
        Some((0, 0, 0, 0, 0)),
        || {
            (
                idx(rng, ANIMATE.len()),
                idx(rng, INANIMATE.len()),
                idx(rng, ANIMACY_VERBS.len()),
                idx(rng, AGENTS.len()),
                idx(rng, ANIMACY_ENDINGS.len()),
            )
        },
        |&(a, i, v, ag, e), key| {
            let reduced = key.level_of("reduction") == Some("reduced");
            let noun = if key.level_of("animacy") == Some("animate") { ANIMATE[a] } else { INANIMATE[i] };
            vec![
                format!("The {noun}"),
                if reduced { String::new() } else { "that was".into() },
                ANIMACY_VERBS[v].into(),
                AGENTS[ag].into(),
                ANIMACY_ENDINGS[e].0.into(),
                ANIMACY_ENDINGS[e].1.into(),
            ]
        },
    )?;
    let analyses = vec![
        interaction("by_phrase", "By phrase", "reduction", "animacy"),
        interaction("main_verb", "Main verb", "reduction", "animacy"),
        AnalysisSpec {
            name: "reduction_at_end".into(),
            regions: vec!["End".into()],
            kind: AnalysisKind::MainEffect { factor: "reduction".into() },
        },
    ];
    Ok(Experiment::new("mvrr-animacy", Mode::Word, factors, regions, items, analyses)?)
}

fn orc(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![factor("depth", &["one", "two"])];
    let regions = strings(&["Prefix"]);
    let items = collect_items(
        "orc-completions",
        count,
        &factors,
        Some((0, 0, 1)),
        || loop {
            let (t, a, b) = (idx(rng, ORC_INANIMATE.len()), idx(rng, ORC_ANIMATE.len()), idx(rng, ORC_ANIMATE.len()));
            if a != b {
                break (t, a, b);
            }
        },
        |&(t, a, b), key| {
            let inner = format!("{} who the {}", ORC_ANIMATE[a], ORC_ANIMATE[b]);
            let text = if key.level_of("depth") == Some("one") {
                format!("The {inner}")
            } else {
                format!("The {} that the {inner}", ORC_INANIMATE[t])
            };
            vec![text]
        },
    )?;
    Ok(Experiment::new("orc-completions", Mode::Word, factors, regions, items, Vec::new())?)
}

fn subordination(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![
        factor("subordinator", &["present", "absent"]),
        factor("matrix", &["present", "absent"]),
        factor("intervener", &["none", "subject", "object"]),
    ];
    let regions = strings(&["Subordinator", "Subject", "Subject modifier", "Verb", "Object", "Object modifier", "Continuation"]);
    // (subordinator, subject, verb frame, subject modifier, object modifier, matrix clause)
    let first = (0, 5, 0, 0, 0, 0);
    let items = collect_items(
        "subordination",
        count,
        &factors,
        Some(first),
        || {
            (
                idx(rng, SUBORDINATORS.len()),
                idx(rng, PEOPLE.len()),
                idx(rng, SUB_VERBS.len()),
                idx(rng, SUBJECT_MODIFIERS.len()),
                idx(rng, OBJECT_MODIFIERS.len()),
                idx(rng, MATRIX_CLAUSES.len()),
            )
        },
        |&(s, p, v, sm, om, m), key| {
            let sub = key.level_of("subordinator") == Some("present");
            let matrix = key.level_of("matrix") == Some("present");
            let intervener = key.level_of("intervener").unwrap_or("none");
            let subject = format!("the {}", PEOPLE[p]);
            vec![
                if sub { SUBORDINATORS[s].into() } else { String::new() },
                if sub { subject } else { capitalize(&subject) },
                if intervener == "subject" { SUBJECT_MODIFIERS[sm].into() } else { String::new() },
                SUB_VERBS[v].0.into(),
                SUB_VERBS[v].1.into(),
                if intervener == "object" { OBJECT_MODIFIERS[om].into() } else { String::new() },
                if matrix { format!(", {} .", MATRIX_CLAUSES[m]) } else { ".".into() },
            ]
        },
    )?;
    let licensing = |name: &str, interveners: &[&str]| {
        let mut w = Vec::new();
        for i in interveners {
            w.push((format!("present|present|{i}"), -1.0));
            w.push((format!("present|absent|{i}"), 1.0));
            w.push((format!("absent|present|{i}"), 1.0));
            w.push((format!("absent|absent|{i}"), -1.0));
        }
        let refs: Vec<(&str, f64)> = w.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        contrast(name, &["Continuation"], &refs)
    };
    let analyses = vec![
        interaction("subordinator_x_matrix", "Continuation", "subordinator", "matrix"),
        licensing("licensing", &["none", "subject", "object"]),
        licensing("licensing_no_intervener", &["none"]),
        licensing("licensing_subject_intervener", &["subject"]),
        licensing("licensing_object_intervener", &["object"]),
    ];
    Ok(Experiment::new("subordination", Mode::Word, factors, regions, items, analyses)?)
}

fn reflexive(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![factor("antecedent", &["match", "mismatch"]), factor("intervener", &["none", "match", "mismatch"])];
    let regions = strings(&["Start", "Antecedent", "Intervener", "Verb", "Reflexive", "End"]);
    let nouns: Vec<(&str, bool)> = FEMININE
        .iter()
        .map(|n| (*n, true))
        .chain(MASCULINE.iter().map(|n| (*n, false)))
        .collect();
    // Item 1 is the lumberjack/soldier/hairdresser set; the rest walk the noun list.
    let mut order: Vec<usize> = (0..nouns.len()).collect();
    let lumberjack = FEMININE.len();
    order.retain(|&i| i != lumberjack);
    order.insert(0, lumberjack);
    let mut next = 0usize;
    let first = (lumberjack, 0usize, 0usize, 1usize);
    let items = collect_items(
        "reflexive",
        count,
        &factors,
        Some(first),
        || {
            next += 1;
            let n = order[next.min(order.len() - 1)];
            let (fi, mi) = loop {
                let (fi, mi) = (idx(rng, FEMININE.len()), idx(rng, MASCULINE.len()));
                if nouns[n].0 != FEMININE[fi] && nouns[n].0 != MASCULINE[mi] {
                    break (fi, mi);
                }
            };
            (n, next % REFLEXIVE_VERBS.len(), fi, mi)
        },
        |&(n, v, fi, mi), key| {
            let (noun, feminine) = nouns[n];
            let reflexive_feminine = if key.level_of("antecedent") == Some("match") { feminine } else { !feminine };
            let pronoun = if reflexive_feminine { "herself" } else { "himself" };
            let intervener = match key.level_of("intervener") {
                Some("match") => Some(reflexive_feminine),
                Some("mismatch") => Some(!reflexive_feminine),
                _ => None,
            };
            let intervener = match intervener {
                Some(true) => format!("who is related to the {}", FEMININE[fi]),
                Some(false) => format!("who is related to the {}", MASCULINE[mi]),
                None => String::new(),
            };
            vec!["The".into(), noun.into(), intervener, REFLEXIVE_VERBS[v].into(), pronoun.into(), ".".into()]
        },
    )?;
    let analyses = vec![
        contrast("gender_no_intervener", &["Reflexive"], &[("mismatch|none", 1.0), ("match|none", -1.0)]),
        contrast(
            "antecedent_given_intervener_mismatch",
            &["Reflexive"],
            &[("mismatch|mismatch", 1.0), ("match|mismatch", -1.0)],
        ),
        contrast(
            "intervener_given_antecedent_mismatch",
            &["Reflexive"],
            &[("mismatch|mismatch", 1.0), ("mismatch|match", -1.0)],
        ),
        AnalysisSpec {
            name: "antecedent".into(),
            regions: vec!["Reflexive".into()],
            kind: AnalysisKind::MainEffect { factor: "antecedent".into() },
        },
    ];
    Ok(Experiment::new("reflexive", Mode::Word, factors, regions, items, analyses)?)
}

fn npi(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![
        factor("matrix_det", &["no", "the"]),
        factor("embedded_det", &["no", "the"]),
        factor("npi", &["ever", "any", "none"]),
    ];
    let regions = strings(&["Matrix det", "Subject", "Relative clause", "Aux", "Ever", "Verb", "Any", "Object", "End"]);
    let items = collect_items(
        "npi-english",
        count,
        &factors,
        Some((0, 0, 0)),
        || (idx(rng, NPI_FRAMES.len()), idx(rng, NPI_FRAMES.len()), idx(rng, NPI_FRAMES.len())),
        |&(subject, embedded, predicate), key| {
            let matrix_no = key.level_of("matrix_det") == Some("no");
            let embedded_no = key.level_of("embedded_det") == Some("no");
            let npi = key.level_of("npi").unwrap_or("none");
            let (noun, ..) = NPI_FRAMES[subject];
            let (_, person, likes, ..) = NPI_FRAMES[embedded];
            let (.., verb, object) = NPI_FRAMES[predicate];
            vec![
                if matrix_no { "No".into() } else { "The".into() },
                noun.into(),
                format!("that {} {person} {likes}", if embedded_no { "no" } else { "the" }),
                "has".into(),
                if npi == "ever" { "ever".into() } else { String::new() },
                verb.into(),
                if npi == "any" { "any".into() } else { String::new() },
                object.into(),
                ".".into(),
            ]
        },
    )?;
    let licensing = |name: &str, region: &str, npi: &str| {
        let w = [
            (format!("the|the|{npi}"), 1.0),
            (format!("the|no|{npi}"), 1.0),
            (format!("no|the|{npi}"), -1.0),
            (format!("no|no|{npi}"), -1.0),
        ];
        let refs: Vec<(&str, f64)> = w.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        contrast(name, &[region], &refs)
    };
    let distractor = |name: &str, region: &str, npi: &str| {
        let w = [(format!("the|the|{npi}"), 1.0), (format!("the|no|{npi}"), -1.0)];
        let refs: Vec<(&str, f64)> = w.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        contrast(name, &[region], &refs)
    };
    let analyses = vec![
        licensing("ever_licensing", "Ever", "ever"),
        distractor("ever_distractor", "Ever", "ever"),
        licensing("any_licensing", "Any", "any"),
        distractor("any_distractor", "Any", "any"),
    ];
    Ok(Experiment::new("npi-english", Mode::Word, factors, regions, items, analyses)?)
}

fn case_of(i: usize) -> Case {
    [Case::Nom, Case::Acc, Case::Dat, Case::Topic][i]
}

fn shika_single(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![factor("shika", &["present", "absent"]), factor("verb", &["neg", "aff"])];
    let regions = strings(&["Pre", "NP", "Particle", "Post", "Verb", "End"]);
    // (time, case, np, verb, place or none); item 1 is bus-shika came-NEG.
    let first = (0usize, 0usize, 0usize, 0usize, None);
    let items = collect_items(
        "shika-single",
        count,
        &factors,
        Some(first),
        || {
            let c = idx(rng, 4);
            let (nps, verbs) = case_of(c).frames();
            let place = if rng.random_bool(0.5) { Some(idx(rng, JA_PLACES.len())) } else { None };
            (idx(rng, JA_TIMES.len()), c, idx(rng, nps.len()), idx(rng, verbs.len()), place)
        },
        |&(t, c, n, v, place), key| {
            let case = case_of(c);
            let (nps, verbs) = case.frames();
            let shika = key.level_of("shika") == Some("present");
            let verb = if key.level_of("verb") == Some("neg") { verbs[v].1 } else { verbs[v].0 };
            vec![
                JA_TIMES[t].into(),
                nps[n].into(),
                case.particle(shika).into(),
                place.map(|p| JA_PLACES[p].to_string()).unwrap_or_default(),
                verb.into(),
                "。".into(),
            ]
        },
    )?;
    let analyses = vec![
        profile("shika_neg_verb", "present|neg", "absent|neg"),
        profile("shika_aff_verb", "present|aff", "absent|aff"),
        interaction("licensing_at_verb", "Verb", "shika", "verb"),
    ];
    Ok(Experiment::new("shika-single", Mode::Character, factors, regions, items, analyses)?)
}

fn shika_clausemate(count: usize, rng: &mut ChaCha8Rng) -> Result<Experiment, PresetError> {
    use lex::*;
    let factors = vec![
        factor("shika", &["present", "absent"]),
        factor("position", &["matrix", "embedded"]),
        factor("emb_verb", &["neg", "aff"]),
        factor("mat_verb", &["neg", "aff"]),
    ];
    let regions = strings(&[
        "Matrix NP",
        "Matrix particle",
        "Embedded NP",
        "Embedded particle",
        "Embedded rest",
        "Embedded verb",
        "Complementizer",
        "Matrix verb",
        "End",
    ]);
    // (matrix np, matrix role dat?, matrix verb, embedded case, embedded np, embedded verb, place)
    let items = collect_items(
        "shika-clausemate",
        count,
        &factors,
        None,
        || {
            let c = idx(rng, 3);
            let (nps, verbs) = case_of(c).frames();
            let place = if rng.random_bool(0.5) { Some(idx(rng, JA_PLACES.len())) } else { None };
            (
                idx(rng, JA_MATRIX_NP.len()),
                rng.random_bool(0.5),
                idx(rng, JA_MATRIX_VERBS.len()),
                c,
                idx(rng, nps.len()),
                idx(rng, verbs.len()),
                place,
            )
        },
        |&(mn, dative, mv, c, en, ev, place), key| {
            let shika = key.level_of("shika") == Some("present");
            let embedded = key.level_of("position") == Some("embedded");
            let matrix_case = if dative { Case::Dat } else { Case::Topic };
            let case = case_of(c);
            let (nps, verbs) = case.frames();
            let ev_form = if key.level_of("emb_verb") == Some("neg") { verbs[ev].1 } else { verbs[ev].0 };
            let mv_form =
                if key.level_of("mat_verb") == Some("neg") { JA_MATRIX_VERBS[mv].1 } else { JA_MATRIX_VERBS[mv].0 };
            vec![
                JA_MATRIX_NP[mn].into(),
                matrix_case.particle(shika && !embedded).into(),
                nps[en].into(),
                case.particle(shika && embedded).into(),
                place.map(|p| JA_PLACES[p].to_string()).unwrap_or_default(),
                ev_form.into(),
                "と".into(),
                mv_form.into(),
                "。".into(),
            ]
        },
    )?;
    let mut analyses = Vec::new();
    for pos in ["matrix", "embedded"] {
        for ev in ["neg", "aff"] {
            for mv in ["neg", "aff"] {
                analyses.push(profile(
                    &format!("shika_{pos}_emb{ev}_mat{mv}"),
                    &format!("present|{pos}|{ev}|{mv}"),
                    &format!("absent|{pos}|{ev}|{mv}"),
                ));
            }
        }
    }
    Ok(Experiment::new("shika-clausemate", Mode::Character, factors, regions, items, analyses)?)
}
