//! Garden-path effect on the MV/RR design with a synthetic backend.
//!
//! The reduced, ambiguous cell gets +5 bits at the disambiguating word, so
//! the reduction x ambiguity interaction should come out near 5/4.

use lm_psych::pipeline::{self, score_table, synth_backend, Injection, SynthConfig};
use lm_psych::presets::{self, PresetOptions};
use lm_psych::stats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = presets::build("mvrr", &PresetOptions::default())?;
    let config = SynthConfig::new(30.0, 2.0, 0.5, 7)
        .inject(Injection::new("Disambiguator", &[("reduction", "reduced"), ("ambiguity", "ambig")], 5.0));
    let table = score_table(&exp, &synth_backend(&exp, &config)?, 1)?;

    for outcome in pipeline::run_analyses(&table, &exp)? {
        println!("## {}\n", outcome.spec.name);
        if let Some(ci) = &outcome.means {
            for ((c, m), h) in ci.conditions.iter().zip(&ci.means).zip(&ci.half_widths) {
                println!("  {c:<20} {m:8.3} +/- {h:.3}");
            }
            println!();
        }
        println!("{}", stats::results_markdown(&outcome.rows));
    }
    Ok(())
}
