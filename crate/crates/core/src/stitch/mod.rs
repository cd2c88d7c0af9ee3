//! The trajectory-stitching engine: candidate search over the state
//! index, gated target selection, trajectory rebuild, the margin-based
//! replacement decision, and the iterated outer loop that retrains the
//! value function between passes.
//!
//! The engine works against small traits for the four model roles, so the
//! learned models and exact tabular stand-ins are interchangeable.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{ForwardEnsemble, InverseModel, RewardModel, ValueFunction, ZMode};
use crate::scalar::Scalar;

mod candidates;
mod engine;
mod log;

pub use candidates::{candidate_next_states, select_stitch_target, Candidate, StitchTarget};
pub use engine::{
    replace_decision, run_ts, run_ts_with_models, stitch_trajectory, ts_iteration, ModelConfigs,
};
pub use log::{IterationLog, StitchEvent, StitchLog};

/// Stitching parameters. `max_len` defaults to twice the longest input
/// trajectory; `max_changes` caps stitches per trajectory when set.
#[derive(Debug, Clone)]
pub struct StitchConfig {
    /// Euclidean pre-filter radius for candidate next states.
    pub epsilon: f64,
    /// Replacement margin: a rebuilt trajectory replaces the original iff
    /// `(1 + p_tilde) * sum(old rewards) < sum(new rewards)`.
    pub p_tilde: f64,
    /// Outer-loop iterations.
    pub iterations: usize,
    pub max_len: Option<usize>,
    pub max_changes: Option<usize>,
    pub z_mode: ZMode,
    /// When more candidates than this pass the radius filter, only the
    /// highest-valued ones are gated.
    pub candidate_cap: usize,
    pub seed: u64,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            epsilon: 0.2,
            p_tilde: 0.1,
            iterations: 5,
            max_len: None,
            max_changes: None,
            z_mode: ZMode::PriorMean,
            candidate_cap: 512,
            seed: 0,
        }
    }
}

/// Reachability judgment for candidate next states.
pub trait ReachabilityGate<S: Scalar>: Sync {
    /// For each candidate, whether it is plausible enough to replace the
    /// original next state, conditional on `state`.
    fn gate_many(&self, state: &[S], orig_next: &[S], cands: &[&[S]]) -> Result<Vec<bool>>;

    fn gate(&self, state: &[S], orig_next: &[S], cand: &[S]) -> Result<bool> {
        Ok(self.gate_many(state, orig_next, &[cand])?[0])
    }
}

/// State-value estimates under the data's behaviour policy.
pub trait StateValue<S: Scalar>: Sync {
    fn values(&self, states: &[&[S]]) -> Result<Vec<S>>;

    fn value(&self, state: &[S]) -> Result<S> {
        Ok(self.values(&[state])?[0])
    }
}

/// Synthesises the action connecting two states.
pub trait ActionGenerator<S: Scalar>: Sync {
    fn generate(
        &self,
        state: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<S>>;
}

/// Predicts the reward of a synthetic transition.
pub trait RewardPredictor<S: Scalar>: Sync {
    fn predict(
        &self,
        state: &[S],
        action: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<S>;
}

/// The three models trained once on the original data and held frozen
/// across iterations.
#[derive(Clone, Copy)]
pub struct FrozenModels<'a, S: Scalar> {
    pub gate: &'a dyn ReachabilityGate<S>,
    pub actions: &'a dyn ActionGenerator<S>,
    pub rewards: &'a dyn RewardPredictor<S>,
}

/// Everything one stitching pass needs: the frozen models plus the value
/// function of the current iteration.
#[derive(Clone, Copy)]
pub struct StitchModels<'a, S: Scalar> {
    pub gate: &'a dyn ReachabilityGate<S>,
    pub value: &'a dyn StateValue<S>,
    pub actions: &'a dyn ActionGenerator<S>,
    pub rewards: &'a dyn RewardPredictor<S>,
}

impl<S: Scalar> ReachabilityGate<S> for ForwardEnsemble<S> {
    fn gate_many(&self, state: &[S], orig_next: &[S], cands: &[&[S]]) -> Result<Vec<bool>> {
        ForwardEnsemble::gate_many(self, state, orig_next, cands)
    }
}

impl<S: Scalar> StateValue<S> for ValueFunction<S> {
    fn values(&self, states: &[&[S]]) -> Result<Vec<S>> {
        let mat = crate::mat::Mat::from_rows(states);
        self.values_of(&mat)
    }
}

impl<S: Scalar> ActionGenerator<S> for InverseModel<S> {
    fn generate(
        &self,
        state: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<S>> {
        self.generate_action(state, s_next, z_mode, rng)
    }
}

impl<S: Scalar> RewardPredictor<S> for RewardModel<S> {
    fn predict(
        &self,
        state: &[S],
        action: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<S> {
        RewardModel::predict(self, state, action, s_next, z_mode, rng)
    }
}

/// Exact tabular stand-ins for the learned models, keyed on state bit
/// patterns. Usable from unit tests here and from integration suites.
pub mod tabular {
    use std::collections::{HashMap, HashSet};

    use rand_chacha::ChaCha8Rng;

    use crate::error::Result;
    use crate::models::ZMode;
    use crate::scalar::Scalar;

    use super::{ActionGenerator, ReachabilityGate, RewardPredictor, StateValue};

    fn key<S: Scalar>(state: &[S]) -> Vec<u64> {
        state.iter().map(|v| v.into_f64().to_bits()).collect()
    }

    /// Gate that passes exactly the listed candidate states.
    pub struct TableGate {
        allowed: HashSet<Vec<u64>>,
    }

    impl TableGate {
        pub fn passing<S: Scalar>(states: &[Vec<S>]) -> Self {
            TableGate {
                allowed: states.iter().map(|s| key(s)).collect(),
            }
        }
    }

    impl<S: Scalar> ReachabilityGate<S> for TableGate {
        fn gate_many(&self, _state: &[S], _orig: &[S], cands: &[&[S]]) -> Result<Vec<bool>> {
            Ok(cands.iter().map(|c| self.allowed.contains(&key(c))).collect())
        }
    }

    /// Value table over exact state vectors; unknown states value zero.
    pub struct TableValue {
        values: HashMap<Vec<u64>, f64>,
    }

    impl TableValue {
        pub fn new<S: Scalar>(entries: &[(Vec<S>, f64)]) -> Self {
            TableValue {
                values: entries.iter().map(|(s, v)| (key(s), *v)).collect(),
            }
        }
    }

    impl<S: Scalar> StateValue<S> for TableValue {
        fn values(&self, states: &[&[S]]) -> Result<Vec<S>> {
            Ok(states
                .iter()
                .map(|s| S::of_f64(*self.values.get(&key(s)).unwrap_or(&0.0)))
                .collect())
        }
    }

    /// Emits the same action everywhere.
    pub struct ConstAction(pub Vec<f64>);

    impl<S: Scalar> ActionGenerator<S> for ConstAction {
        fn generate(
            &self,
            _state: &[S],
            _s_next: &[S],
            _z: ZMode,
            _rng: &mut ChaCha8Rng,
        ) -> Result<Vec<S>> {
            Ok(self.0.iter().map(|v| S::of_f64(*v)).collect())
        }
    }

    /// Predicts a constant reward.
    pub struct ConstReward(pub f64);

    impl<S: Scalar> RewardPredictor<S> for ConstReward {
        fn predict(
            &self,
            _state: &[S],
            _action: &[S],
            _s_next: &[S],
            _z: ZMode,
            _rng: &mut ChaCha8Rng,
        ) -> Result<S> {
            Ok(S::of_f64(self.0))
        }
    }

    /// Gate that never passes (forces pure copies).
    pub struct NeverGate;

    impl<S: Scalar> ReachabilityGate<S> for NeverGate {
        fn gate_many(&self, _state: &[S], _orig: &[S], cands: &[&[S]]) -> Result<Vec<bool>> {
            Ok(vec![false; cands.len()])
        }
    }
}
