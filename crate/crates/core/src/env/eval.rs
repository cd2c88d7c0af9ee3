//! Rollout evaluation and divergence diagnostics against the expert.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::diag_gaussian_log_density;
use crate::scalar::Scalar;

use super::{rollout, Environment};

/// Mean and standard deviation of undiscounted returns over `n_eval`
/// rollouts from seeded initial states.
pub fn evaluate_policy<S: Scalar>(
    env: &dyn Environment<S>,
    mut policy: impl FnMut(&[S]) -> Vec<S>,
    n_eval: usize,
    seed: u64,
) -> (S, S) {
    let mut returns = Vec::with_capacity(n_eval);
    for k in 0..n_eval {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let traj = rollout(env, &mut policy, k as u64, &mut rng);
        returns.push(traj.ret());
    }
    mean_std(&returns)
}

fn mean_std<S: Scalar>(values: &[S]) -> (S, S) {
    let n = S::of_f64(values.len() as f64);
    let mut mean = S::zero();
    for v in values {
        mean = mean + *v;
    }
    mean = mean / n;
    let mut var = S::zero();
    for v in values {
        let d = *v - mean;
        var = var + d * d;
    }
    (mean, (var / n).sqrt())
}

/// Monte-Carlo KL estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct KlEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Estimated `KL(expert || policy)` over expert rollout states:
/// `E_{s ~ expert rollouts, a ~ N(expert(s), expert_std^2)}
///   [log expert(a|s) - log policy(a|s)]`.
/// The deterministic expert is wrapped in a Gaussian with the given std.
pub fn kl_to_expert<S: Scalar>(
    env: &dyn Environment<S>,
    policy_log_density: &dyn Fn(&[S], &[S]) -> S,
    expert_std: f64,
    n_rollouts: usize,
    seed: u64,
) -> KlEstimate {
    let mut terms: Vec<f64> = Vec::new();
    for k in 0..n_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd_ef01u64.wrapping_add(k as u64));
        // roll the Gaussian expert so states follow its own distribution
        let traj = rollout(
            env,
            |s: &[S]| {
                let mut a = env.expert_action(s);
                for v in &mut a {
                    let eps: f64 = StandardNormal.sample(&mut noise);
                    *v = *v + S::of_f64(eps * expert_std);
                }
                a
            },
            k as u64,
            &mut rng,
        );
        let std = vec![S::of_f64(expert_std); env.action_dim()];
        for step in &traj.steps {
            let mean = env.expert_action(&step.state);
            // the logged action is the expert sample itself
            let lp_expert = diag_gaussian_log_density(&mean, &std, &step.action);
            let lp_policy = policy_log_density(&step.state, &step.action);
            terms.push((lp_expert - lp_policy).into_f64());
        }
    }
    let n = terms.len().max(1) as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    KlEstimate {
        mean,
        std_err: (var / n).sqrt(),
        samples: terms.len(),
    }
}

/// Mean squared action difference from the expert over states gathered
/// from deterministic expert rollouts.
pub fn action_mse<S: Scalar>(
    env: &dyn Environment<S>,
    policy: &dyn Fn(&[S]) -> Vec<S>,
    n_rollouts: usize,
    seed: u64,
) -> S {
    let mut acc = S::zero();
    let mut count = 0usize;
    for k in 0..n_rollouts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let traj = rollout(env, |s: &[S]| env.expert_action(s), k as u64, &mut rng);
        for step in &traj.steps {
            let pi = policy(&step.state);
            let ex = env.expert_action(&step.state);
            for (p, e) in pi.iter().zip(&ex) {
                let d = *p - *e;
                acc = acc + d * d;
            }
            count += 1;
        }
    }
    acc / S::of_f64(count.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PointMass;

    #[test]
    fn evaluation_is_deterministic_given_seed() {
        let env = PointMass::default();
        let f = |s: &[f64]| env.expert_action(s);
        let a = evaluate_policy(&env, f, 10, 7);
        let b = evaluate_policy(&env, f, 10, 7);
        assert_eq!(a, b);
    }

    #[test]
    fn action_mse_zero_for_expert_and_offset_squared_for_shifted() {
        let env = PointMass::default();
        let exact = action_mse(&env, &|s: &[f64]| env.expert_action(s), 5, 3);
        assert_eq!(exact, 0.0);
        let offset = action_mse(
            &env,
            &|s: &[f64]| {
                let mut a = env.expert_action(s);
                a[0] += 0.1;
                a[1] -= 0.2;
                a
            },
            5,
            3,
        );
        assert!((offset - 0.05).abs() < 1e-12, "got {offset}");
    }

    #[test]
    fn self_kl_is_near_zero() {
        let env = PointMass::default();
        let expert_std = 0.01;
        let log_density = |s: &[f64], a: &[f64]| {
            let mean = env.expert_action(s);
            let std = vec![expert_std; 2];
            crate::nn::diag_gaussian_log_density(&mean, &std, a)
        };
        let est = kl_to_expert(&env, &log_density, expert_std, 10, 5);
        assert!(est.mean.abs() <= 3.0 * est.std_err + 1e-9, "{est:?}");
    }
}
