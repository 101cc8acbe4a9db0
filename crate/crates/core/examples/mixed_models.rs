//! Fit the two model families directly: a linear mixed model with by-item
//! intercepts and a mixed logit, both on simulated data.

use lm_psych::stats::{self, DesignMatrix, RandomEffects};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (items, cells) = (30, [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]);
    let n = items * cells.len();
    let mut x = DMatrix::zeros(n, 4);
    let mut y = DVector::zeros(n);
    let mut groups = Vec::new();
    let (item_sd, noise) = (Normal::new(0.0, 2.0)?, Normal::new(0.0, 1.0)?);
    for i in 0..items {
        let b = item_sd.sample(&mut rng);
        for (j, &(a, c)) in cells.iter().enumerate() {
            let r = i * cells.len() + j;
            for (k, v) in [1.0, a, c, a * c].into_iter().enumerate() {
                x[(r, k)] = v;
            }
            y[r] = 10.0 + 0.8 * a + 0.3 * a * c + b + noise.sample(&mut rng);
            groups.push(i);
        }
    }
    let columns: Vec<String> = ["(Intercept)", "a", "b", "a:b"].map(String::from).to_vec();
    let design = DesignMatrix {
        y,
        x: x.clone(),
        columns: columns.clone(),
        groups: groups.clone(),
        group_ids: (1..=items as u32).collect(),
        conditions: vec![String::new(); n],
    };
    let lmm = stats::fit_lmm_reml(&design)?;
    println!("LMM (REML): sigma_item^2 {:.3}, sigma_resid^2 {:.3}", lmm.sigma_item2, lmm.sigma_resid2);
    for (j, c) in columns.iter().enumerate() {
        println!("  {c:<12} {:>8.4}  se {:.4}  t({:.0}) {:>7.2}  p {:.2e}", lmm.beta[j], lmm.se[j], lmm.df, lmm.t[j], lmm.p[j]);
    }

    let offsets: Vec<f64> = (0..items).map(|_| Normal::new(0.0, 0.7).unwrap().sample(&mut rng)).collect();
    let outcomes: Vec<bool> = (0..n)
        .map(|r| {
            let eta: f64 = 0.5 - 1.0 * x[(r, 1)] + offsets[groups[r]];
            rng.random_bool(1.0 / (1.0 + (-eta).exp()))
        })
        .collect();
    let logit = stats::fit_logit(&outcomes, &x, &groups, RandomEffects::Intercept)?;
    println!("\nmixed logit ({}): sigma_item {:.3}", logit.method, logit.sigma_item);
    for (j, c) in columns.iter().enumerate() {
        println!("  {c:<12} {:>8.4}  se {:.4}  p {:.2e}", logit.beta[j], logit.se[j], logit.p[j]);
    }
    Ok(())
}
