//! Licensing interaction on the subordination design, and how it changes
//! with intervening material.

use lm_psych::pipeline::{self, score_table, synth_backend, Injection, SynthConfig};
use lm_psych::presets::{self, PresetOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = presets::build("subordination", &PresetOptions::default())?;
    // A subordinate clause without a matrix clause costs 4 bits, and so does
    // a matrix clause without a subordinator; an object intervener halves both.
    let mut config = SynthConfig::new(30.0, 2.0, 0.5, 3);
    for (sub, matrix) in [("present", "absent"), ("absent", "present")] {
        for (intervener, delta) in [("none", 4.0), ("subject", 4.0), ("object", 2.0)] {
            config = config.inject(Injection::new(
                "Continuation",
                &[("subordinator", sub), ("matrix", matrix), ("intervener", intervener)],
                delta,
            ));
        }
    }
    let table = score_table(&exp, &synth_backend(&exp, &config)?, 1)?;

    let regions = vec!["Continuation".to_string()];
    let scores = pipeline::licensing_scores(&table, &exp, &regions, "subordinator", "matrix", "intervener")?;
    let levels = exp.factor("intervener").unwrap().levels.clone();
    for level in &levels {
        let own: Vec<f64> = scores.iter().filter(|s| &s.1 == level).map(|s| s.2).collect();
        println!("{level:<8} mean licensing {:.3} bits over {} items", own.iter().sum::<f64>() / own.len() as f64, own.len());
    }

    let (fit, columns) = pipeline::licensing_regression(&scores, &levels)?;
    println!("\nlicensing ~ intervener (baseline {})", levels[0]);
    for (j, name) in columns.iter().enumerate() {
        println!("  {name:<12} {:>8.3}  se {:.3}  p {:.2e}", fit.beta[j], fit.se[j], fit.p[j]);
    }
    Ok(())
}
