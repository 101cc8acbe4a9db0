use std::fs;

use lm_psych::backend::{ExternalBackend, SentenceId, SurprisalBackend};
use lm_psych::experiment::{AnalysisKind, Experiment, Mode};
use lm_psych::pipeline::{self, difference_profile, run_experiment, score_table, synth_backend, Injection, RunFlags, SynthConfig};
use lm_psych::presets::{self, PresetOptions};
use lm_psych::report;

fn preset(name: &str, items: Option<usize>) -> Experiment {
    presets::build(name, &PresetOptions { items, ..Default::default() }).unwrap()
}

fn term<'a>(rows: &'a [lm_psych::stats::ResultRow], name: &str) -> &'a lm_psych::stats::ResultRow {
    rows.iter().find(|r| r.term == name).unwrap_or_else(|| panic!("no term {name}"))
}

#[test]
fn injected_interactions_land_within_three_se_in_most_runs() {
    let exp = preset("mvrr", None);
    let spec = exp.analyses.iter().find(|a| a.name == "garden_path").unwrap().clone();
    let mut covered = 0;
    for seed in 0..100 {
        let cfg = SynthConfig::new(30.0, 2.0, 0.5, seed)
            .inject(Injection::new("Disambiguator", &[("reduction", "reduced"), ("ambiguity", "ambig")], 5.0));
        let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
        let out = pipeline::run_analysis(&table, &exp, &spec).unwrap();
        let r = term(&out.rows, "reduction:ambiguity");
        if (r.estimate - 1.25).abs() <= 3.0 * r.se {
            covered += 1;
        }
    }
    assert!(covered >= 95, "{covered}/100");
}

#[test]
fn injected_main_effect_is_half_the_delta() {
    let exp = preset("mvrr-animacy", None);
    let spec = exp.analyses.iter().find(|a| matches!(a.kind, AnalysisKind::MainEffect { .. })).unwrap().clone();
    let region = spec.regions[0].clone();
    let AnalysisKind::MainEffect { factor } = &spec.kind else { unreachable!() };
    let level = exp.factor(factor).unwrap().levels[0].clone();
    let mut covered = 0;
    for seed in 0..100 {
        let cfg = SynthConfig::new(30.0, 1.0, 0.5, seed).inject(Injection::new(&region, &[(factor, &level)], 3.0));
        let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
        let r = term(&pipeline::run_analysis(&table, &exp, &spec).unwrap().rows, factor).clone();
        if (r.estimate - 1.5).abs() <= 3.0 * r.se {
            covered += 1;
        }
    }
    assert!(covered >= 95, "{covered}/100");
}

#[test]
fn noiseless_synth_gives_exact_zero_contrasts() {
    let exp = preset("reflexive", Some(12));
    let table = score_table(&exp, &synth_backend(&exp, &SynthConfig::new(25.0, 0.0, 0.0, 4)).unwrap(), 1).unwrap();
    for out in pipeline::run_analyses(&table, &exp).unwrap() {
        for r in out.rows.iter().filter(|r| r.term != "(Intercept)") {
            assert_eq!(r.estimate, 0.0, "{} {}", out.spec.name, r.term);
        }
    }
}

#[test]
fn item_variance_does_not_move_contrasts_or_intervals() {
    let exp = preset("mvrr", None);
    let small = score_table(&exp, &synth_backend(&exp, &SynthConfig::new(60.0, 1.0, 0.5, 9)).unwrap(), 1).unwrap();
    let large = score_table(&exp, &synth_backend(&exp, &SynthConfig::new(60.0, 10.0, 0.5, 9)).unwrap(), 1).unwrap();
    let a = pipeline::run_analyses(&small, &exp).unwrap();
    let b = pipeline::run_analyses(&large, &exp).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let (cx, cy) = (x.means.as_ref().unwrap(), y.means.as_ref().unwrap());
        for j in 0..cx.half_widths.len() {
            assert!((cx.half_widths[j] - cy.half_widths[j]).abs() < 1e-9);
        }
        for (rx, ry) in x.rows.iter().zip(&y.rows).filter(|(r, _)| r.term != "(Intercept)") {
            assert!((rx.estimate - ry.estimate).abs() < 1e-9);
            assert!(ry.estimate.abs() <= 3.0 * ry.se);
        }
    }
}

#[test]
fn profiles_show_injections_and_are_antisymmetric() {
    let exp = preset("shika-single", Some(20));
    let cfg = SynthConfig::new(20.0, 2.0, 0.0, 1).inject(Injection::new("Verb", &[("shika", "present")], 3.0));
    let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
    let ab = difference_profile(&table, &exp, ("present|neg", "absent|neg"), &[]).unwrap();
    let ba = difference_profile(&table, &exp, ("absent|neg", "present|neg"), &[]).unwrap();
    let same = difference_profile(&table, &exp, ("present|neg", "present|neg"), &[]).unwrap();
    assert_eq!(ab.points.iter().map(|p| p.region.clone()).collect::<Vec<_>>(), exp.region_names());
    for ((p, q), z) in ab.points.iter().zip(&ba.points).zip(&same.points) {
        let expected = if p.region == "Verb" { 3.0 } else { 0.0 };
        assert!((p.difference - expected).abs() < 1e-9, "{}: {}", p.region, p.difference);
        assert_eq!(p.difference, -q.difference);
        assert_eq!(z.difference, 0.0);
        assert_eq!(z.ci_half_width, 0.0);
    }
}

#[test]
fn missing_cell_fails_without_output() {
    let exp = preset("mvrr", Some(4));
    let full = synth_backend(&exp, &SynthConfig::new(20.0, 0.0, 0.0, 1)).unwrap();
    let dropped = SentenceId::new("mvrr", 2, "unreduced|unambig").to_string();
    let rows = full.ids().filter(|id| *id != dropped).map(|id| (id.parse().unwrap(), full.rows(id).unwrap().to_vec())).collect::<Vec<_>>();
    let partial = ExternalBackend::from_rows("partial", Mode::Word, rows);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let err = run_experiment(&exp, &partial, &RunFlags::default(), 0, 1, None, &out).unwrap_err();
    assert!(err.to_string().contains(&dropped), "{err}");
    assert!(!out.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn report_figures_agree_with_csvs() {
    let exp = preset("mvrr", Some(10));
    let cfg = SynthConfig::new(30.0, 1.0, 0.5, 2).inject(Injection::new("Disambiguator", &[("reduction", "reduced")], 2.0));
    let backend = synth_backend(&exp, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = run_experiment(&exp, &backend, &RunFlags::default(), 0, 2, None, &out).unwrap();
    let svg = fs::read_to_string(out.join("figures/garden_path.svg")).unwrap();
    assert_eq!(svg.matches("class=\"bar\"").count(), 4);
    assert_eq!(svg.matches("class=\"whisker\"").count(), 4);
    let means = fs::read_to_string(out.join("condition_means.csv")).unwrap();
    for line in means.lines().skip(1).filter(|l| l.starts_with("garden_path,")) {
        let mean = line.split(',').nth(2).unwrap();
        assert!(svg.contains(&format!(">{mean}</text>")), "{mean}");
    }
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results, lm_psych::stats::results_csv(&run.outcomes.iter().flat_map(|o| o.rows.clone()).collect::<Vec<_>>()));
    for name in ["report.md", "surprisals.csv", "surprisal_tokens.tsv", "manifest.json", "region_means.csv", "profiles.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn profile_chart_matches_profile_csv() {
    let exp = preset("shika-single", Some(10));
    let backend = synth_backend(&exp, &SynthConfig::new(20.0, 1.0, 0.3, 5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = run_experiment(&exp, &backend, &RunFlags::default(), 0, 1, None, &out).unwrap();
    let profiles = fs::read_to_string(out.join("profiles.csv")).unwrap();
    for o in run.outcomes.iter().filter(|o| o.profile.is_some()) {
        let svg = fs::read_to_string(out.join(report::figure_name(&o.spec.name))).unwrap();
        let points = &o.profile.as_ref().unwrap().points;
        assert_eq!(svg.matches("class=\"point\"").count(), points.len());
        for p in points {
            let value = report::fmt6(p.difference);
            assert!(profiles.contains(&format!("{},{},{value},", o.spec.name, p.region)));
            assert!(svg.contains(&format!(">{value}</text>")));
        }
    }
}

#[test]
fn designs_without_analyses_still_get_a_report() {
    let exp = preset("orc-completions", Some(5));
    let backend = synth_backend(&exp, &SynthConfig::new(20.0, 0.0, 0.0, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = run_experiment(&exp, &backend, &RunFlags::default(), 0, 1, None, &out).unwrap();
    assert!(run.outcomes.is_empty());
    let md = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("No analyses"));
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap().lines().count(), 1);
}

#[test]
fn licensing_scores_flip_exactly_under_label_swap() {
    let exp = preset("subordination", None);
    let cfg = SynthConfig::new(30.0, 2.0, 0.5, 3)
        .inject(Injection::new("Continuation", &[("subordinator", "present"), ("matrix", "absent")], 4.0))
        .inject(Injection::new("Continuation", &[("subordinator", "absent"), ("matrix", "present")], 4.0));
    let table = score_table(&exp, &synth_backend(&exp, &cfg).unwrap(), 1).unwrap();
    let regions = vec!["Continuation".to_string()];
    let scores = pipeline::licensing_scores(&table, &exp, &regions, "subordinator", "matrix", "intervener").unwrap();
    let mean = scores.iter().map(|s| s.2).sum::<f64>() / scores.len() as f64;
    assert!(mean > 0.0 && (mean - 2.0).abs() < 0.5, "{mean}");
    let swap = |c: &str| {
        let mut parts: Vec<String> = c.split('|').map(String::from).collect();
        parts[0] = if parts[0] == "present" { "absent".into() } else { "present".into() };
        parts.join("|")
    };
    let swapped = pipeline::licensing_scores(&table.relabeled(swap), &exp, &regions, "subordinator", "matrix", "intervener").unwrap();
    for (a, b) in scores.iter().zip(&swapped) {
        assert_eq!(a.2.to_bits(), (-b.2).to_bits());
    }
    let levels = exp.factor("intervener").unwrap().levels.clone();
    let (fit, columns) = pipeline::licensing_regression(&scores, &levels).unwrap();
    let (flip, _) = pipeline::licensing_regression(&swapped, &levels).unwrap();
    assert_eq!(columns.len(), 3);
    for j in 0..3 {
        assert_eq!(fit.beta[j].to_bits(), (-flip.beta[j]).to_bits());
    }
}

#[test]
fn synth_files_reload_through_the_adapter() {
    for name in presets::names() {
        let exp = preset(name, Some(3));
        let backend = synth_backend(&exp, &SynthConfig::new(20.0, 1.0, 0.2, 1)).unwrap();
        let back = lm_psych::backend::load_external(backend.to_tsv().as_bytes(), &lm_psych::backend::ExternalOptions::new("s", exp.mode)).unwrap();
        back.check_coverage(&lm_psych::backend::ScoringRequest::for_experiment(&exp)).unwrap();
        assert_eq!(score_table(&exp, &back, 1).unwrap().to_csv(), score_table(&exp, &backend, 1).unwrap().to_csv(), "{name}");
    }
}
