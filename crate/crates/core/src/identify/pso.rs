//! Global-best particle swarm minimisation inside a box.
//!
//! Every particle owns a ChaCha stream split off the configured seed, so the
//! random draws do not depend on evaluation order. Objective values of one
//! iteration are computed in parallel and reduced in particle order: the
//! run is reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::InvalidInput;

#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    /// Iterations including the initial evaluation of the swarm.
    pub max_iters: usize,
    /// Inertia weight.
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of each bound range.
    pub v_max: f64,
    pub seed: u64,
    /// Stop after this many iterations without improvement.
    pub stall_iters: usize,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 50,
            max_iters: 300,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            v_max: 0.2,
            seed: 42,
            stall_iters: 50,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), InvalidInput> {
        let fail = |field: &str, reason: &str| Err(InvalidInput::new(field, reason));
        if self.swarm_size < 2 {
            return fail("swarm_size", "must be at least 2");
        }
        if self.max_iters < 1 {
            return fail("max_iters", "must be at least 1");
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return fail("inertia", "must be in (0, 1)");
        }
        if !(self.cognitive > 0.0 && self.social > 0.0) {
            return fail("cognitive/social", "must be positive");
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return fail("v_max", "must be positive");
        }
        if self.stall_iters < 1 {
            return fail("stall_iters", "must be at least 1");
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// The evaluation took the penalty path.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value after each iteration; non-increasing.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub failed_evaluations: usize,
}

/// Folds `x` back into `[lo, hi]` by reflection, flipping `v` on each bounce.
fn reflect(x: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    for _ in 0..4 {
        if *x < lo {
            *x = 2.0 * lo - *x;
            *v = -*v;
        } else if *x > hi {
            *x = 2.0 * hi - *x;
            *v = -*v;
        } else {
            return;
        }
    }
    *x = x.clamp(lo, hi);
}

/// Minimises `objective` over the box `[lower, upper]`.
///
/// Bounds must be finite with `lower < upper`; the caller validates them.
pub fn minimize<F>(objective: F, lower: &[f64], upper: &[f64], config: &PsoConfig) -> Minimum
where
    F: Fn(&[f64]) -> Score + Sync,
{
    let dim = lower.len();
    let range: Vec<f64> = lower.iter().zip(upper).map(|(lo, hi)| hi - lo).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..config.swarm_size)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(k as u64);
            rng
        })
        .collect();
    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(config.swarm_size);
    let mut velocities: Vec<Vec<f64>> = Vec::with_capacity(config.swarm_size);
    for rng in &mut rngs {
        positions.push((0..dim).map(|d| lower[d] + rng.random::<f64>() * range[d]).collect());
        velocities.push((0..dim).map(|d| (2.0 * rng.random::<f64>() - 1.0) * config.v_max * range[d]).collect());
    }

    let evaluate = |xs: &[Vec<f64>]| -> Vec<Score> { xs.par_iter().map(|x| objective(x)).collect() };
    let scores = evaluate(&positions);
    let mut evaluations = scores.len();
    let mut failed_evaluations = scores.iter().filter(|s| s.failed).count();
    let mut best_own: Vec<(Vec<f64>, f64)> = positions.iter().cloned().zip(scores.iter().map(|s| s.value)).collect();
    let mut best = best_own
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("swarm is not empty");
    let mut history = vec![best.1];
    let mut stalled = 0;

    for _ in 1..config.max_iters {
        for (k, rng) in rngs.iter_mut().enumerate() {
            for d in 0..dim {
                let limit = config.v_max * range[d];
                let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                let x = positions[k][d];
                let v = config.inertia * velocities[k][d]
                    + config.cognitive * r1 * (best_own[k].0[d] - x)
                    + config.social * r2 * (best.0[d] - x);
                let mut v = v.clamp(-limit, limit);
                let mut x = x + v;
                reflect(&mut x, &mut v, lower[d], upper[d]);
                positions[k][d] = x;
                velocities[k][d] = v;
            }
        }
        let scores = evaluate(&positions);
        evaluations += scores.len();
        failed_evaluations += scores.iter().filter(|s| s.failed).count();
        let previous = best.1;
        for (k, s) in scores.iter().enumerate() {
            if s.value < best_own[k].1 {
                best_own[k] = (positions[k].clone(), s.value);
            }
            if s.value < best.1 {
                best = (positions[k].clone(), s.value);
            }
        }
        history.push(best.1);
        stalled = if best.1 < previous { 0 } else { stalled + 1 };
        if stalled >= config.stall_iters {
            break;
        }
    }
    Minimum { x: best.0, value: best.1, history, evaluations, failed_evaluations }
}
