//! Within-item confidence intervals on a three-item example.

use lm_psych::stats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let conditions = vec!["grammatical".to_string(), "ungrammatical".to_string()];
    let values = vec![vec![1.0, 2.0], vec![3.0, 5.0], vec![2.0, 6.0]];
    let ci = stats::masson_loftus_ci(&conditions, &values)?;
    println!("MS(item x condition) = {:.6} on {} df", ci.ms_interaction, ci.df);
    for ((c, m), h) in ci.conditions.iter().zip(&ci.means).zip(&ci.half_widths) {
        println!("{c:<14} {m:.4} +/- {h:.4}");
    }

    // Item baselines drop out: only within-item differences matter.
    let shifted: Vec<Vec<f64>> = values.iter().zip([100.0, -7.5, 0.25]).map(|(r, k)| r.iter().map(|v| v + k).collect()).collect();
    let again = stats::masson_loftus_ci(&conditions, &shifted)?;
    println!("after shifting items: half-widths {:?}", again.half_widths);

    let parallel = vec![vec![4.0, 6.0], vec![10.0, 12.0], vec![-1.0, 1.0]];
    println!("parallel items: half-widths {:?}", stats::masson_loftus_ci(&conditions, &parallel)?.half_widths);
    Ok(())
}
