//! Mixed-quality dataset generation: a fraction of noise-free expert
//! trajectories plus noisy-expert trajectories, all from the same
//! initial-state distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::scalar::Scalar;

use super::{rollout, Environment};

/// Generates `n_traj` trajectories of which `round(n_traj * x_percent /
/// 100)` are noise-free expert rollouts and the rest follow
/// `a = expert(s) + eps`, `eps ~ N(0, noise_std^2)` per coordinate.
/// Deterministic given the seed; the recipe is recorded in the metadata.
pub fn generate_mixed_dataset<S: Scalar>(
    env: &dyn Environment<S>,
    x_percent: f64,
    n_traj: usize,
    noise_std: f64,
    seed: u64,
) -> Dataset<S> {
    assert!((0.0..=100.0).contains(&x_percent), "x_percent out of range");
    let n_expert = ((n_traj as f64) * x_percent / 100.0).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajectories = Vec::with_capacity(n_traj);
    for id in 0..n_traj {
        let expert = id < n_expert;
        let traj = rollout(
            env,
            |s: &[S]| {
                let mut a = env.expert_action(s);
                if !expert {
                    for v in &mut a {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        *v = *v + S::of_f64(eps * noise_std);
                    }
                }
                a
            },
            id as u64,
            &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15 ^ (id as u64)),
        );
        trajectories.push(traj);
    }
    let mut ds = Dataset::new(
        (env.state_dim(), env.action_dim()),
        trajectories,
        Default::default(),
    );
    let meta = ds.meta_mut();
    meta.insert("env".into(), env.name().into());
    meta.insert("generator".into(), "mixed-v1".into());
    meta.insert("x_percent".into(), format!("{x_percent}"));
    meta.insert("n_traj".into(), format!("{n_traj}"));
    meta.insert("n_expert".into(), format!("{n_expert}"));
    meta.insert("noise_std".into(), format!("{noise_std}"));
    meta.insert("seed".into(), format!("{seed}"));
    ds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::PointMass;

    #[test]
    fn expert_fraction_is_exact() {
        let env = PointMass::default();
        let ds = generate_mixed_dataset::<f64>(&env, 10.0, 100, 0.5, 3);
        assert_eq!(ds.meta()["n_expert"], "10");
        assert_eq!(ds.trajectories().len(), 100);
        assert!(ds.validate().is_valid());
    }

    #[test]
    fn zero_percent_has_no_expert_trajectories() {
        let env = PointMass::default();
        let ds = generate_mixed_dataset::<f64>(&env, 0.0, 20, 0.5, 3);
        assert_eq!(ds.meta()["n_expert"], "0");
    }

    #[test]
    fn generation_is_deterministic() {
        let env = PointMass::default();
        let a = generate_mixed_dataset::<f64>(&env, 25.0, 30, 0.5, 11);
        let b = generate_mixed_dataset::<f64>(&env, 25.0, 30, 0.5, 11);
        assert_eq!(a.trajectories(), b.trajectories());
    }
}
