//! Five-state chain MDP embedded as one-hot states.
//!
//! A scalar action moves right when positive, left otherwise. Entering the
//! last state pays reward 1 and terminates; every other step pays 0. The
//! exact tabular representation is exposed for oracle tests.

use crate::scalar::Scalar;

use super::{uniform_in, Environment};

pub const CHAIN_LEN: usize = 5;

#[derive(Debug, Clone)]
pub struct Chain {
    pub horizon: usize,
    /// Magnitude of the expert's action.
    pub expert_gain: f64,
}

impl Default for Chain {
    fn default() -> Self {
        Chain {
            horizon: 12,
            expert_gain: 0.8,
        }
    }
}

impl Chain {
    pub fn state_of<S: Scalar>(i: usize) -> Vec<S> {
        let mut v = vec![S::zero(); CHAIN_LEN];
        v[i] = S::one();
        v
    }

    pub fn index_of<S: Scalar>(state: &[S]) -> usize {
        state
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }

    /// Deterministic successor index for a move right (`true`) or left.
    pub fn next_index(i: usize, right: bool) -> usize {
        if right {
            (i + 1).min(CHAIN_LEN - 1)
        } else {
            i.saturating_sub(1)
        }
    }

    /// Reward on the transition `i -> j`.
    pub fn reward_of(i: usize, j: usize) -> f64 {
        if j == CHAIN_LEN - 1 && i != CHAIN_LEN - 1 {
            1.0
        } else {
            0.0
        }
    }

    /// Exact transition matrix of one abstract action.
    pub fn transition_matrix(right: bool) -> [[f64; CHAIN_LEN]; CHAIN_LEN] {
        let mut p = [[0.0; CHAIN_LEN]; CHAIN_LEN];
        for (i, row) in p.iter_mut().enumerate() {
            row[Self::next_index(i, right)] = 1.0;
        }
        p
    }
}

impl<S: Scalar> Environment<S> for Chain {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn state_dim(&self) -> usize {
        CHAIN_LEN
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        1.0
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> Vec<S> {
        let u: S = uniform_in(rng, 0.0, 4.0);
        Self::state_of(u.into_f64() as usize)
    }

    fn step(&self, state: &[S], action: &[S]) -> (Vec<S>, S, bool) {
        assert_eq!(state.len(), CHAIN_LEN);
        assert_eq!(action.len(), 1);
        let i = Self::index_of(state);
        let right = action[0] > S::zero();
        let j = Self::next_index(i, right);
        let reward = S::of_f64(Self::reward_of(i, j));
        let done = j == CHAIN_LEN - 1;
        (Self::state_of(j), reward, done)
    }

    fn expert_action(&self, _state: &[S]) -> Vec<S> {
        vec![S::of_f64(self.expert_gain)]
    }
}
