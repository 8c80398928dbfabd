use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::scm::model::{ExogenousDist, InterventionPlan, StructuralModel, Unit};

/// RNG for unit `index` under `master_seed`.
///
/// Each unit gets its own ChaCha stream, so draws for unit i never depend on
/// how many units were sampled before it or on which thread produced it; a
/// parallel sampler reproduces the serial stream exactly.
pub fn unit_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

fn sample_exogenous(dist: &ExogenousDist, rng: &mut ChaCha8Rng) -> f64 {
    match *dist {
        ExogenousDist::Bernoulli { p } => {
            if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        ExogenousDist::Uniform { lo, hi } => lo + (hi - lo) * rng.gen::<f64>(),
        ExogenousDist::Normal { mean, sd } => {
            // Box-Muller keeps the draw count per unit fixed.
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            mean + sd * ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
        }
        ExogenousDist::PointMass { v } => v,
    }
}

/// Draw `n` i.i.d. units from the model's exogenous distributions.
pub fn sample_units(model: &StructuralModel, n: usize, seed: u64) -> Vec<Unit> {
    (0..n)
        .map(|i| {
            let mut rng = unit_rng(seed, i as u64);
            let assignment: BTreeMap<String, f64> = model
                .exogenous()
                .iter()
                .map(|e| (e.name.clone(), sample_exogenous(&e.dist, &mut rng)))
                .collect();
            Unit { assignment }
        })
        .collect()
}

/// Sample `n` rows from the observational distribution (empty plan).
pub fn sample_observational(model: &StructuralModel, n: usize, seed: u64) -> Result<Dataset> {
    let columns = model.endogenous_names();
    let plan = InterventionPlan::empty();
    let mut rows = Vec::with_capacity(n);
    for unit in sample_units(model, n, seed) {
        let values = model.evaluate_unchecked(&unit, &plan)?;
        rows.push(columns.iter().map(|c| values[c]).collect());
    }
    Dataset::new(columns, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{builtin_scenario, ScenarioId};

    fn berkeley() -> StructuralModel {
        builtin_scenario(&ScenarioId::Berkeley {
            alpha: 0.0,
            beta: 0.7,
            lambda: 0.2,
        })
        .unwrap()
    }

    #[test]
    fn zero_units_is_empty() {
        assert!(sample_units(&berkeley(), 0, 1).is_empty());
        let ds = sample_observational(&berkeley(), 0, 1).unwrap();
        assert_eq!(ds.n_rows(), 0);
        assert_eq!(ds.columns(), &["x", "d", "y"]);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_units(&berkeley(), 500, 7);
        let b = sample_units(&berkeley(), 500, 7);
        assert_eq!(a, b);
        let c = sample_units(&berkeley(), 500, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_stability_of_unit_streams() {
        // Unit i's draw does not depend on n.
        let a = sample_units(&berkeley(), 10, 3);
        let b = sample_units(&berkeley(), 1000, 3);
        assert_eq!(a[..], b[..10]);
    }

    #[test]
    fn uniform_law_of_large_numbers() {
        let units = sample_units(&berkeley(), 1_000_000, 7);
        let mean: f64 =
            units.iter().map(|u| u.assignment["u_x"]).sum::<f64>() / units.len() as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean(u_x) = {mean}");
    }

    #[test]
    fn observational_tv_matches_alpha_plus_lambda_beta() {
        let ds = sample_observational(&berkeley(), 1_000_000, 11).unwrap();
        let x = ds.column("x").unwrap();
        let y = ds.column("y").unwrap();
        let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0.0, 0.0, 0.0);
        for (xi, yi) in x.iter().zip(y) {
            if *xi == 1.0 {
                s1 += yi;
                n1 += 1.0;
            } else {
                s0 += yi;
                n0 += 1.0;
            }
        }
        let tv = s1 / n1 - s0 / n0;
        assert!((tv - 0.14).abs() < 0.003, "tv = {tv}");
    }

    #[test]
    fn nde_fail_w_marginal() {
        let model = builtin_scenario(&ScenarioId::NdeFail).unwrap();
        let ds = sample_observational(&model, 1_000_000, 5).unwrap();
        let w = ds.column("w").unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        assert!((mean - 0.3).abs() < 0.002, "P(W=1) = {mean}");
    }
}
