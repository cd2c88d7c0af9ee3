//! Shared test oracles: derivative-free trajectory optimization for
//! per-environment optimal returns, and small helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use trajstitch::env::{replay_actions, Environment};

/// Best return found by the cross-entropy method over open-loop action
/// sequences from a fixed start state. The result is an achievable return,
/// hence a lower bound on the true optimum that is close to it in these
/// small environments.
pub fn cem_best_return(
    env: &dyn Environment<f64>,
    start: &[f64],
    seed: u64,
    iters: usize,
    pop: usize,
    elites: usize,
) -> f64 {
    let h = env.horizon();
    let da = env.action_dim();
    let dim = h * da;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = vec![0.0f64; dim];
    let mut std = vec![0.7f64; dim];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..iters {
        let mut scored: Vec<(f64, Vec<f64>)> = (0..pop)
            .map(|_| {
                let cand: Vec<f64> = (0..dim)
                    .map(|i| {
                        let eps: f64 = rng.sample(StandardNormal);
                        mean[i] + std[i] * eps
                    })
                    .collect();
                let actions: Vec<Vec<f64>> =
                    cand.chunks(da).map(|c| c.to_vec()).collect();
                (replay_actions(env, start, &actions), cand)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        best = best.max(scored[0].0);
        for i in 0..dim {
            let m: f64 = scored[..elites].iter().map(|(_, c)| c[i]).sum::<f64>() / elites as f64;
            let v: f64 = scored[..elites]
                .iter()
                .map(|(_, c)| (c[i] - m).powi(2))
                .sum::<f64>()
                / elites as f64;
            mean[i] = m;
            std[i] = v.sqrt().max(0.02);
        }
    }
    best
}

/// Runs a feedback policy from a fixed start state, returning the
/// undiscounted return.
pub fn run_policy_from(
    env: &dyn Environment<f64>,
    start: &[f64],
    mut policy: impl FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let mut state = start.to_vec();
    let mut total = 0.0;
    for _ in 0..env.horizon() {
        let a = policy(&state);
        let (next, r, done) = env.step(&state, &a);
        total += r;
        if done {
            break;
        }
        state = next;
    }
    total
}

/// `ret` achieves at least `frac` of the optimal return `opt`, handling
/// negative returns (cost-style rewards) correctly.
pub fn meets_fraction(ret: f64, opt: f64, frac: f64) -> bool {
    if opt >= 0.0 {
        ret >= frac * opt
    } else {
        ret >= opt / frac
    }
}
