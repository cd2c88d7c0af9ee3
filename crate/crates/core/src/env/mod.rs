//! Synthetic benchmark environments with exact dynamics and closed-form
//! expert controllers, plus dataset generation and policy diagnostics.
//!
//! Three environments are built in:
//!
//! - `pointmass`: a 2-d double integrator steered toward a goal,
//! - `wallworld`: the same with a wall segment that blocks motion,
//! - `chain`: a 5-state tabular MDP embedded as one-hot states.
//!
//! All dynamics are pure functions; rollouts are bit-reproducible given
//! seeds.

use rand::Rng;

use crate::data::{Trajectory, Transition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod chain;
mod datagen;
mod eval;
mod oracle;
mod pointmass;
mod wallworld;

pub use chain::Chain;
pub use datagen::generate_mixed_dataset;
pub use eval::{action_mse, evaluate_policy, kl_to_expert, KlEstimate};
pub use oracle::{dp_value_oracle, solve_linear};
pub use pointmass::PointMass;
pub use wallworld::WallWorld;

/// A synthetic environment: exact step function, seeded initial states
/// and a closed-form expert controller.
pub trait Environment<S: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Infinity-norm bound actions are clipped to.
    fn action_bound(&self) -> f64;
    fn horizon(&self) -> usize;
    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> Vec<S>;
    /// One step: `(next_state, reward, done)`. Actions are clipped to the
    /// bound before use. `done` marks a true terminal, not the horizon.
    fn step(&self, state: &[S], action: &[S]) -> (Vec<S>, S, bool);
    fn expert_action(&self, state: &[S]) -> Vec<S>;
}

/// Looks an environment up by name with its default parameters.
pub fn make_env<S: Scalar>(name: &str) -> Result<Box<dyn Environment<S>>> {
    match name {
        "pointmass" => Ok(Box::new(PointMass::default())),
        "wallworld" => Ok(Box::new(WallWorld::default())),
        "chain" => Ok(Box::new(Chain::default())),
        other => Err(Error::UnknownEnv(other.into())),
    }
}

pub(crate) fn clip_action<S: Scalar>(action: &[S], bound: f64) -> Vec<S> {
    let b = S::of_f64(bound);
    action
        .iter()
        .map(|a| {
            if *a > b {
                b
            } else if *a < -b {
                -b
            } else {
                *a
            }
        })
        .collect()
}

/// Rolls a policy out from a seeded initial state until the environment
/// terminates or the horizon is hit. The terminal flag is stored only for
/// true environment terminations, never for horizon truncation.
pub fn rollout<S: Scalar>(
    env: &dyn Environment<S>,
    mut policy: impl FnMut(&[S]) -> Vec<S>,
    id: u64,
    rng: &mut dyn rand::RngCore,
) -> Trajectory<S> {
    let mut state = env.initial_state(rng);
    let mut steps = Vec::new();
    for _ in 0..env.horizon() {
        let action = clip_action(&policy(&state), env.action_bound());
        let (next, reward, done) = env.step(&state, &action);
        steps.push(Transition {
            state: state.clone(),
            action,
            reward,
            next_state: next.clone(),
            terminal: done,
        });
        if done {
            break;
        }
        state = next;
    }
    Trajectory { id, steps }
}

/// Undiscounted return of one rollout.
pub fn rollout_return<S: Scalar>(
    env: &dyn Environment<S>,
    policy: impl FnMut(&[S]) -> Vec<S>,
    rng: &mut dyn rand::RngCore,
) -> S {
    rollout(env, policy, 0, rng).ret()
}

/// Replays a stored action sequence from a given start state through the
/// true dynamics, returning the realized return. Used to audit stitched
/// trajectories against the environment.
pub fn replay_actions<S: Scalar>(env: &dyn Environment<S>, start: &[S], actions: &[Vec<S>]) -> S {
    let mut state = start.to_vec();
    let mut total = S::zero();
    for (t, action) in actions.iter().enumerate() {
        if t >= env.horizon() {
            break;
        }
        let a = clip_action(action, env.action_bound());
        let (next, reward, done) = env.step(&state, &a);
        total = total + reward;
        if done {
            break;
        }
        state = next;
    }
    total
}

pub(crate) fn uniform_in<S: Scalar, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> S {
    S::of_f64(rng.gen_range(lo..hi))
}
