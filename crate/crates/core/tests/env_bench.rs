//! Environment-level properties: expert quality against the trajectory
//! optimization oracle, wall reachability, mixed dataset structure, and
//! divergence diagnostics.

mod common;

use common::{cem_best_return, meets_fraction, run_policy_from};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajstitch::env::{
    evaluate_policy, generate_mixed_dataset, kl_to_expert, Chain, Environment, PointMass,
    WallWorld,
};
use trajstitch::nn::diag_gaussian_log_density;

#[test]
fn pointmass_expert_achieves_95_percent_of_cem_optimum() {
    let env = PointMass::default();
    for k in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + k);
        let start = Environment::<f64>::initial_state(&env, &mut rng);
        let opt = cem_best_return(&env, &start, 37 + k, 30, 120, 12);
        let expert = run_policy_from(&env, &start, |s| env.expert_action(s));
        assert!(
            meets_fraction(expert, opt, 0.95),
            "start {k}: expert {expert:.4} vs cem {opt:.4}"
        );
    }
}

#[test]
fn wallworld_expert_achieves_95_percent_of_cem_optimum() {
    let env = WallWorld::default();
    for k in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + k);
        let start = Environment::<f64>::initial_state(&env, &mut rng);
        let opt = cem_best_return(&env, &start, 53 + k, 30, 120, 12);
        let expert = run_policy_from(&env, &start, |s| env.expert_action(s));
        assert!(
            meets_fraction(expert, opt, 0.95),
            "start {k}: expert {expert:.4} vs cem {opt:.4}"
        );
    }
}

#[test]
fn chain_expert_is_exactly_optimal() {
    let env = Chain::default();
    for i in 0..4 {
        let ret = run_policy_from(&env, &Chain::state_of(i), |s| env.expert_action(s));
        assert_eq!(ret, 1.0);
    }
}

#[test]
fn wallworld_has_close_but_unreachable_state_pairs() {
    let env = WallWorld::default();
    // rightward motion just left of the wall
    let s1 = [-0.01f64, 0.5, 0.5, 0.0];
    // where the unwalled double integrator would land
    let free = PointMass::default();
    let (target, _, _) = Environment::<f64>::step(&free, &s1, &[0.0, 0.0]);
    assert!(target[0] > 0.0, "landing must be across the wall");
    let gap: f64 = s1
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    assert!(gap < 0.1, "the pair must be close in Euclidean distance");

    // exhaustive action grid: no single wallworld action reaches across
    let mut best = f64::INFINITY;
    let mut free_best = f64::INFINITY;
    for ai in -10..=10 {
        for aj in -10..=10 {
            let a = [ai as f64 / 10.0, aj as f64 / 10.0];
            let (next, _, _) = Environment::<f64>::step(&env, &s1, &a);
            assert!(next[0] <= 0.0, "wall crossed with action {a:?}");
            let d: f64 = next
                .iter()
                .zip(&target)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
            let (fnext, _, _) = Environment::<f64>::step(&free, &s1, &a);
            let fd: f64 = fnext
                .iter()
                .zip(&target)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            free_best = free_best.min(fd);
        }
    }
    assert!(best > 0.01, "wallworld should not reach the far side ({best})");
    assert!(free_best < 1e-12, "without the wall the grid reaches it");
}

#[test]
fn all_expert_dataset_is_near_optimal() {
    let env = PointMass::default();
    let ds = generate_mixed_dataset::<f64>(&env, 100.0, 12, 0.5, 5);
    for traj in ds.trajectories().iter().take(6) {
        let start = &traj.steps[0].state;
        let opt = cem_best_return(&env, start, 91, 30, 120, 12);
        assert!(
            meets_fraction(traj.ret(), opt, 0.95),
            "traj {}: {} vs {}",
            traj.id,
            traj.ret(),
            opt
        );
    }
}

#[test]
fn expert_slice_beats_noisy_slice() {
    let env = PointMass::default();
    let ds = generate_mixed_dataset::<f64>(&env, 10.0, 100, 0.5, 6);
    let experts: Vec<f64> = ds.trajectories()[..10].iter().map(|t| t.ret()).collect();
    let noisy: Vec<f64> = ds.trajectories()[10..].iter().map(|t| t.ret()).collect();
    let em = experts.iter().sum::<f64>() / experts.len() as f64;
    let nm = noisy.iter().sum::<f64>() / noisy.len() as f64;
    assert!(em > nm, "expert mean {em} vs noisy mean {nm}");
}

#[test]
fn expert_evaluation_beats_random_policy() {
    let env = PointMass::default();
    let (expert_mean, _) = evaluate_policy(&env, |s: &[f64]| env.expert_action(s), 10, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (random_mean, _) = evaluate_policy(
        &env,
        |_s: &[f64]| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
        10,
        21,
    );
    assert!(expert_mean > random_mean + 0.3 * (expert_mean - random_mean).abs());
}

#[test]
fn kl_estimate_matches_closed_form_for_shifted_gaussian() {
    let env = PointMass::default();
    let expert_std = 0.01;
    // policy = expert mean shifted by one std in the first coordinate
    let log_density = |s: &[f64], a: &[f64]| {
        let mut mean = env.expert_action(s);
        mean[0] += 0.01;
        diag_gaussian_log_density(&mean, &[expert_std; 2], a)
    };
    let est = kl_to_expert(&env, &log_density, expert_std, 10, 33);
    assert!(
        (est.mean - 0.5).abs() <= 3.0 * est.std_err + 0.05,
        "estimate {est:?}"
    );
}

#[test]
fn kl_estimate_is_nonnegative() {
    let env = PointMass::default();
    let log_density = |s: &[f64], a: &[f64]| {
        let mut mean = env.expert_action(s);
        mean[0] -= 0.25;
        mean[1] += 0.4;
        diag_gaussian_log_density(&mean, &[0.05; 2], a)
    };
    let est = kl_to_expert(&env, &log_density, 0.01, 10, 34);
    assert!(est.mean >= -3.0 * est.std_err, "{est:?}");
}
