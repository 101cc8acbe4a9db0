//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness; exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use lm_psych::alignment::ScoreSet;
use lm_psych::backend::{BackendDescriptor, BackendError, BackendKind, NGramBackend, Sample, ScoringRequest, SentenceId, SurprisalBackend, TokenSurprisal};
use lm_psych::completions::{self, Judgment};
use lm_psych::experiment::{AnalysisKind, Experiment, Factor, Item, Mode};
use lm_psych::ngram::{self, TrainConfig};
use lm_psych::pipeline::{self, difference_profile, score_experiment, score_table, synth_backend, Injection, SynthConfig};
use lm_psych::presets::{self, PresetOptions};
use lm_psych::stats::{self, DesignMatrix, ResultRow};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn preset(name: &str, items: Option<usize>) -> Experiment {
    presets::build(name, &PresetOptions { items, ..Default::default() }).unwrap()
}

fn term<'a>(rows: &'a [ResultRow], name: &str) -> &'a ResultRow {
    rows.iter().find(|r| r.term == name).unwrap_or_else(|| panic!("no term {name}"))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------

fn chain_rule_partition() -> Outcome {
    let start = Instant::now();
    let model = common::bundled_model(5);
    let bos = model.vocabulary().id("<s>").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut sentences = Vec::new();
    while sentences.len() < 100 {
        let s = model.sample(&[] as &[&str], 30, &mut rng).unwrap();
        if !s.is_empty() {
            sentences.push(s);
        }
    }
    // Each sentence appears twice, cut into four regions at different points.
    let regions: Vec<String> = (1..=4).map(|r| format!("R{r}")).collect();
    let mut items = Vec::new();
    for (i, tokens) in sentences.iter().enumerate() {
        let mut cells = BTreeMap::new();
        for level in ["a", "b"] {
            let mut cuts: Vec<usize> = (0..3).map(|_| rng.random_range(0..=tokens.len())).collect();
            cuts.sort();
            let bounds: Vec<usize> = std::iter::once(0).chain(cuts).chain(std::iter::once(tokens.len())).collect();
            let texts: Vec<String> = bounds.windows(2).map(|w| tokens[w[0]..w[1]].join(" ")).collect();
            cells.insert(level.to_string(), texts);
        }
        items.push(Item { id: i as u32 + 1, cells });
    }
    let exp = Experiment::new("chain", Mode::Word, vec![Factor::new("cut", &["a", "b"])], regions, items, Vec::new()).unwrap();
    let backend = NGramBackend::new(model, "order5");
    let scores: ScoreSet = score_experiment(&exp, &backend, 1).unwrap();
    let table = lm_psych::alignment::aggregate(&exp, &scores).unwrap();
    let model = backend.model();
    let mut worst_token = 0.0f64;
    let mut worst_region = 0.0f64;
    for (i, tokens) in sentences.iter().enumerate() {
        // Oracle: product of the full next-token distributions.
        let mut history = vec![bos];
        let mut log2_joint = 0.0;
        for id in model.ids(tokens) {
            log2_joint += model.distribution(&history)[id as usize].log2();
            history.push(id);
        }
        for level in ["a", "b"] {
            let id = SentenceId::new("chain", i as u32 + 1, level).to_string();
            let per_token: f64 = scores[&id].iter().map(|t| t.surprisal).sum();
            worst_token = worst_token.max((per_token + log2_joint).abs() / log2_joint.abs());
            check(rel_close(per_token, -log2_joint, 1e-9), || format!("sentence {i}: {per_token} vs {}", -log2_joint))?;
            let regions = table.sentence_total(i as u32 + 1, level);
            worst_region = worst_region.max((regions - per_token).abs() / per_token.abs());
            check(rel_close(regions, per_token, 1e-9), || format!("sentence {i}: regions {regions} vs {per_token}"))?;
        }
    }
    let took = within_time(start, Duration::from_secs(5))?;
    Ok(format!("100 sentences, max rel err token {worst_token:.1e} region {worst_region:.1e}, {took:.2?}"))
}

fn kn_normalization() -> Outcome {
    let start = Instant::now();
    let (train, held) = common::bundled_split();
    let tokens: usize = train.iter().chain(&held).map(Vec::len).sum();
    let order5 = ngram::train(&train, &TrainConfig::new(5, Mode::Word)).unwrap();
    let order1 = ngram::train(&train, &TrainConfig::new(1, Mode::Word)).unwrap();
    let bos = order5.vocabulary().id("<s>").unwrap();
    let predictable: Vec<u32> = order5.predictable().collect();
    let vocab = order5.vocabulary().len() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for c in 0..1000 {
        // Half the contexts are prefixes of model samples, half random id strings.
        let context: Vec<u32> = if c % 2 == 0 {
            let s = order5.sample(&[] as &[&str], 20, &mut rng).unwrap();
            let cut = rng.random_range(0..=s.len());
            std::iter::once(bos).chain(order5.ids(&s[..cut])).collect()
        } else {
            let len = rng.random_range(0..5);
            (0..len).map(|_| rng.random_range(1..vocab)).collect()
        };
        let total: f64 = predictable.iter().map(|&w| order5.log2_prob(&context, w).exp2()).sum();
        worst = worst.max((total - 1.0).abs());
        check((total - 1.0).abs() <= 1e-6, || format!("context {context:?} sums to {total}"))?;
    }
    let ppl5 = order5.perplexity(held.iter().map(Vec::as_slice));
    let ppl1 = order1.perplexity(held.iter().map(Vec::as_slice));
    check(ppl5 <= ppl1, || format!("held-out perplexity order 5 {ppl5:.2} > order 1 {ppl1:.2}"))?;
    let took = within_time(start, Duration::from_secs(60))?;
    Ok(format!("1000 contexts max |sum-1| {worst:.1e}; {tokens} tokens, ppl order5 {ppl5:.2} <= order1 {ppl1:.2}; {took:.2?}"))
}

fn lmm_oracle() -> Outcome {
    let start = Instant::now();
    let (items, beta) = (30, [5.0, 1.0, 0.0, 0.0]);
    let (mut var_ok, mut b_ok, mut e_ok, mut realized_ok) = (0, 0, 0, 0);
    let mut false_pos = [0; 2];
    let mut worst_beta = 0.0f64;
    let (mut sum_b, mut sum_e) = (0.0, 0.0);
    for run in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
        let (nb, ne) = (Normal::new(0.0, 2.0).unwrap(), Normal::new(0.0, 1.0).unwrap());
        let n = items * 4;
        let mut x = DMatrix::zeros(n, 4);
        let mut y = DVector::zeros(n);
        let mut groups = Vec::with_capacity(n);
        let (mut bs, mut es) = (Vec::new(), Vec::new());
        for i in 0..items {
            let b = nb.sample(&mut rng);
            bs.push(b);
            for (j, (a, c)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].into_iter().enumerate() {
                let r = i * 4 + j;
                let row = [1.0, a, c, a * c];
                for k in 0..4 {
                    x[(r, k)] = row[k];
                }
                let e = ne.sample(&mut rng);
                es.push(e);
                y[r] = (0..4).map(|k| beta[k] * row[k]).sum::<f64>() + b + e;
                groups.push(i);
            }
        }
        // Oracle: OLS by QR, independent of the library's solvers.
        let qr = x.clone().qr();
        let ols = qr.r().solve_upper_triangular(&(qr.q().transpose() * &y)).unwrap();
        let design = DesignMatrix {
            y,
            x,
            columns: ["(Intercept)", "a", "b", "a:b"].map(String::from).to_vec(),
            groups,
            group_ids: (1..=items as u32).collect(),
            conditions: vec![String::new(); n],
        };
        let fit = stats::fit_lmm_reml(&design).unwrap();
        for k in 0..4 {
            worst_beta = worst_beta.max((fit.beta[k] - ols[k]).abs());
            check((fit.beta[k] - ols[k]).abs() <= 1e-6, || format!("run {run} beta[{k}] {} vs OLS {}", fit.beta[k], ols[k]))?;
        }
        sum_b += fit.sigma_item2;
        sum_e += fit.sigma_resid2;
        let bo = (fit.sigma_item2 - 4.0).abs() <= 0.15 * 4.0;
        let eo = (fit.sigma_resid2 - 1.0).abs() <= 0.15;
        b_ok += bo as usize;
        e_ok += eo as usize;
        var_ok += (bo && eo) as usize;
        // Against the variances actually drawn in this dataset.
        let mb = bs.iter().sum::<f64>() / items as f64;
        let vb = bs.iter().map(|b| (b - mb).powi(2)).sum::<f64>() / (items as f64 - 1.0);
        let ve = es.iter().map(|e| e * e).sum::<f64>() / n as f64;
        realized_ok += (rel_close(fit.sigma_item2, vb, 0.15) && rel_close(fit.sigma_resid2, ve, 0.15)) as usize;
        for (slot, k) in [2, 3].into_iter().enumerate() {
            if fit.p[k] < 0.05 {
                false_pos[slot] += 1;
            }
        }
    }
    let took = within_time(start, Duration::from_secs(30))?;
    let detail = format!(
        "beta max |lmm-ols| {worst_beta:.1e}; variances within 15% of truth {var_ok}/50 (sigma_b2 {b_ok}, sigma_e2 {e_ok}; \
         mean estimates {:.3}, {:.3}); within 15% of realized {realized_ok}/50; zero terms significant {false_pos:?}/50; {took:.2?}",
        sum_b / 50.0,
        sum_e / 50.0
    );
    check(false_pos.iter().all(|&c| c <= 6), || detail.clone())?;
    check(var_ok >= 45, || detail.clone())?;
    Ok(detail)
}

fn garden_path() -> Outcome {
    let start = Instant::now();
    let exp = preset("mvrr", None);
    check(exp.items.len() == 29, || format!("{} items", exp.items.len()))?;
    let spec = exp.analyses.iter().find(|a| a.name == "garden_path").unwrap().clone();
    let run = |seed: u64, delta: f64| {
        let mut cfg = SynthConfig::new(30.0, 2.0, 0.5, seed);
        if delta != 0.0 {
            cfg = cfg.inject(Injection::new("Disambiguator", &[("reduction", "reduced"), ("ambiguity", "ambig")], delta));
        }
        let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
        term(&pipeline::run_analysis(&table, &exp, &spec).unwrap().rows, "reduction:ambiguity").clone()
    };
    let hit = run(0, 5.0);
    let z = (hit.estimate - 1.25) / hit.se;
    check(z.abs() <= 3.0 && hit.p < 0.001, || format!("estimate {:.4} se {:.4} p {:.2e}", hit.estimate, hit.se, hit.p))?;
    let significant = (1..=20).filter(|&s| run(s, 0.0).p < 0.05).count();
    check(significant <= 2, || format!("{significant}/20 null seeds significant"))?;
    let took = within_time(start, Duration::from_secs(20))?;
    Ok(format!(
        "29 items, interaction {:.4} (se {:.4}, {z:+.2} se from 1.25, p {:.1e}); null significant {significant}/20; {took:.2?}",
        hit.estimate, hit.se, hit.p
    ))
}

fn licensing() -> Outcome {
    let exp = preset("subordination", None);
    check(exp.items.len() == 23, || format!("{} items", exp.items.len()))?;
    // Violations (subordinator without matrix clause, and the reverse) cost 4 bits.
    let cfg = SynthConfig::new(30.0, 2.0, 0.5, 11)
        .inject(Injection::new("Continuation", &[("subordinator", "present"), ("matrix", "absent")], 4.0))
        .inject(Injection::new("Continuation", &[("subordinator", "absent"), ("matrix", "present")], 4.0));
    let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
    let regions = vec!["Continuation".to_string()];
    let scores = pipeline::licensing_scores(&table, &exp, &regions, "subordinator", "matrix", "intervener").unwrap();
    let mean = scores.iter().map(|s| s.2).sum::<f64>() / scores.len() as f64;
    let spec = exp.analyses.iter().find(|a| a.name == "licensing").unwrap().clone();
    let contrast = pipeline::run_analysis(&table, &exp, &spec).unwrap();
    let est = contrast.rows.iter().find(|r| r.term != "(Intercept)").unwrap().clone();
    check(mean > 0.0 && est.estimate > 0.0 && est.p < 0.05, || format!("mean score {mean}, contrast {} p {}", est.estimate, est.p))?;

    let swap = |c: &str| {
        let mut parts: Vec<String> = c.split('|').map(String::from).collect();
        parts[0] = if parts[0] == "present" { "absent".into() } else { "present".into() };
        parts.join("|")
    };
    let swapped_table = table.relabeled(swap);
    let swapped = pipeline::licensing_scores(&swapped_table, &exp, &regions, "subordinator", "matrix", "intervener").unwrap();
    for (a, b) in scores.iter().zip(&swapped) {
        check(a.2.to_bits() == (-b.2).to_bits(), || format!("item {} intervener {}: {} vs {}", a.0, a.1, a.2, b.2))?;
    }
    let flipped = pipeline::run_analysis(&swapped_table, &exp, &spec).unwrap();
    let fe = flipped.rows.iter().find(|r| r.term != "(Intercept)").unwrap();
    check(rel_close(fe.estimate, -est.estimate, 1e-12), || format!("contrast {} vs swapped {}", est.estimate, fe.estimate))?;
    Ok(format!(
        "23 items, mean licensing score {mean:.4} bits, contrast {:.4} (p {:.1e}); swap negates all {} scores bit-exactly",
        est.estimate,
        est.p,
        scores.len()
    ))
}

fn masson_loftus() -> Outcome {
    let conds = vec!["a".to_string(), "b".to_string()];
    let y = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![2.0, 6.0]];
    let ci = stats::masson_loftus_ci(&conds, &y).unwrap();
    // Differences 1, 2, 4: MS = var(d) / 2 = 7/6; half = t(.975, 2) * sqrt(MS / 3).
    let ms = 7.0 / 6.0;
    let half = 4.302652729749464 * (7.0f64 / 18.0).sqrt();
    check((ci.ms_interaction - ms).abs() <= 1e-10, || format!("MS {} vs {ms}", ci.ms_interaction))?;
    for h in &ci.half_widths {
        check((h - half).abs() <= 1e-10, || format!("half-width {h} vs {half}"))?;
    }
    check(ci.means == [2.0, 13.0 / 3.0], || format!("means {:?}", ci.means))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let shifted: Vec<Vec<f64>> = y
            .iter()
            .map(|r| {
                let k: f64 = rng.random_range(-1e3..1e3);
                r.iter().map(|v| v + k).collect()
            })
            .collect();
        let s = stats::masson_loftus_ci(&conds, &shifted).unwrap();
        let same = s.half_widths.iter().zip(&ci.half_widths).all(|(a, b)| a.to_bits() == b.to_bits());
        check(same, || format!("shifted {shifted:?}: {:?} vs {:?}", s.half_widths, ci.half_widths))?;
    }
    let flat = vec![vec![4.0, 7.0, 1.0], vec![-2.0, 1.0, -5.0], vec![10.5, 13.5, 7.5]];
    let three = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let z = stats::masson_loftus_ci(&three, &flat).unwrap();
    check(z.half_widths.iter().all(|&h| h == 0.0), || format!("zero-variation widths {:?}", z.half_widths))?;
    Ok(format!("MS {:.12}, half-width {:.12}; 1000 random shifts bit-identical; zero variation gives zero width", ci.ms_interaction, ci.half_widths[0]))
}

/// Emits words from a fixed list chosen by a seeded generator.
struct Scripted(&'static str);

impl SurprisalBackend for Scripted {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor { kind: BackendKind::ExternalFile, identifier: self.0.into(), mode: Mode::Word }
    }
    fn score_request(&self, r: &ScoringRequest) -> Result<Vec<TokenSurprisal>, BackendError> {
        Err(BackendError::Capability(r.id.to_string()))
    }
    fn sample_request(&self, prefix: &str, k: usize, max_len: usize, seed: u64) -> Result<Vec<Sample>, BackendError> {
        const WORDS: [&str; 7] = ["wrote", "the", "report", "left", "<unk>", "quickly", "."];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ prefix.len() as u64);
        Ok((0..k)
            .map(|_| {
                let n = rng.random_range(1..=max_len);
                let tokens: Vec<String> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect();
                Sample { has_unk: tokens.iter().any(|t| t == "<unk>"), text: tokens.join(" "), tokens }
            })
            .collect())
    }
    fn fingerprint(&self) -> Vec<u8> {
        self.0.as_bytes().to_vec()
    }
}

fn completion_workflow() -> Outcome {
    let exp = preset("orc-completions", None);
    check(exp.items.len() == 20, || format!("{} prefixes", exp.items.len()))?;
    let backends: [&dyn SurprisalBackend; 2] = [&Scripted("first"), &Scripted("second")];
    let records = completions::run_completions(&exp, &backends, 9, 3, 17).unwrap();
    let again = completions::run_completions(&exp, &backends, 9, 3, 17).unwrap();
    check(records == again && completions::to_tsv(&records) == completions::to_tsv(&again), || "records differ between runs".into())?;
    let expected = 20 * exp.enumerate_cells().len() * 9 * 2;
    check(records.len() == expected, || format!("{} records, expected {expected}", records.len()))?;

    // Judge: logit p(grammatical) = 2 - 2 depth + item offset; 5% marked unjudgeable.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let offsets: Vec<f64> = (0..=20).map(|_| Normal::new(0.0, 0.5).unwrap().sample(&mut rng)).collect();
    let mut judged = records.clone();
    for r in judged.iter_mut() {
        let depth = completions::depth_value(&r.condition).unwrap();
        let eta: f64 = 2.0 - 2.0 * depth + offsets[r.prefix_id as usize];
        r.judgment = if rng.random_bool(0.05) {
            Judgment::Unjudgeable
        } else if rng.random_bool(1.0 / (1.0 + (-eta).exp())) {
            Judgment::Grammatical
        } else {
            Judgment::Ungrammatical
        };
    }
    let merged = completions::merge_judgments(&records, &[completions::parse_tsv(&completions::to_tsv(&judged)).unwrap()]).unwrap();
    let a = completions::analyze_completions(&merged).unwrap();
    let unk = merged.iter().filter(|r| r.has_unk).count();
    let unjudgeable = merged.iter().filter(|r| !r.has_unk && r.judgment == Judgment::Unjudgeable).count();
    check(a.sampled == records.len() && a.dropped == unk + unjudgeable && a.analyzed == a.sampled - a.dropped, || {
        format!("sampled {} dropped {} analyzed {} (unk {unk}, unjudgeable {unjudgeable})", a.sampled, a.dropped, a.analyzed)
    })?;
    let n_props: usize = a.proportions.iter().map(|p| p.n_records).sum();
    check(n_props == a.analyzed, || format!("proportion cells hold {n_props} records, analyzed {}", a.analyzed))?;
    let depth = a.columns.iter().position(|c| c == "depth").unwrap();
    let (b, se) = (a.fit.beta[depth], a.fit.se[depth]);
    check((b + 2.0).abs() <= 3.0 * se, || format!("depth coefficient {b:.3} se {se:.3}"))?;
    Ok(format!(
        "{} records reproducible; depth coefficient {b:.3} (se {se:.3}, truth -2); dropped {} = {unk} unk + {unjudgeable} unjudgeable",
        records.len(),
        a.dropped
    ))
}

fn japanese_profiles() -> Outcome {
    let model = common::japanese_model(5);
    let backend = NGramBackend::new(model, "ja-char");
    let mut checked = Vec::new();
    for (name, items, expected) in [("shika-single", None, 83), ("shika-clausemate", Some(200), 200)] {
        let exp = preset(name, items);
        check(exp.mode == Mode::Character && exp.items.len() == expected, || format!("{name}: {} items", exp.items.len()))?;
        let table = score_table(&exp, &backend, 4).unwrap();
        check(table.rows().iter().all(|r| r.sum_bits.is_finite()), || format!("{name}: non-finite surprisal"))?;
        let outcomes = pipeline::run_analyses(&table, &exp).unwrap();
        let mut pairs = 0;
        for o in &outcomes {
            let AnalysisKind::DifferenceProfile { pair } = &o.spec.kind else { continue };
            let ab = o.profile.as_ref().unwrap();
            let ba = difference_profile(&table, &exp, (&pair.1, &pair.0), &o.spec.regions).unwrap();
            let same = difference_profile(&table, &exp, (&pair.0, &pair.0), &o.spec.regions).unwrap();
            for ((x, y), z) in ab.points.iter().zip(&ba.points).zip(&same.points) {
                check(x.difference == -y.difference && x.ci_half_width == y.ci_half_width, || {
                    format!("{name} {}: {} vs {}", x.region, x.difference, y.difference)
                })?;
                check(z.difference == 0.0 && z.ci_half_width == 0.0, || format!("{name} {}: identical pair gives {}", z.region, z.difference))?;
            }
            pairs += 1;
        }
        check(pairs > 0, || format!("{name}: no profile analyses"))?;
        checked.push(format!("{name} {} items / {pairs} profiles", exp.items.len()));
    }
    Ok(format!("{}; antisymmetric and zero on identical pairs", checked.join(", ")))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = lm_psych::cli::run(std::iter::once("lmpsych").chain(args.iter().copied()), &mut out, &mut err);
    check(code == 0, || format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)))
}

fn listing(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let model = d.join("model.arpa");
    cli(&["train", "--bundled", "--order", "3", "--out", &p(&model)])?;
    let mut runs = Vec::new();
    for k in 0..2 {
        let score = d.join(format!("score-{k}"));
        let report = d.join(format!("report-{k}"));
        let jobs = if k == 0 { "1" } else { "4" };
        cli(&["score", "--preset", "mvrr", "--ngram", &p(&model), "--jobs", jobs, "--out", &p(&score)])?;
        cli(&["analyze", "--preset", "mvrr", "--surprisals", &p(&score.join("surprisals.csv")), "--out", &p(&report)])?;
        runs.push((listing(&score), listing(&report)));
    }
    let mut compared = 0;
    for (a, b) in [(&runs[0].0, &runs[1].0), (&runs[0].1, &runs[1].1)] {
        check(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()))?;
        for (name, bytes) in a {
            check(&b[name] == bytes, || format!("{name} differs"))?;
            compared += (name.ends_with(".csv") || name.ends_with(".svg")) as usize;
        }
    }
    check(compared >= 5, || format!("only {compared} CSV/SVG files"))?;
    Ok(format!("{compared} CSV/SVG files byte-identical across two runs (jobs 1 vs 4)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("chain-rule partition", chain_rule_partition),
        ("KN normalization", kn_normalization),
        ("LMM oracle equivalence", lmm_oracle),
        ("garden-path detection", garden_path),
        ("licensing interaction", licensing),
        ("Masson-Loftus intervals", masson_loftus),
        ("completion workflow", completion_workflow),
        ("Japanese character mode", japanese_profiles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
