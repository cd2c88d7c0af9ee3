//! Planar double integrator steered toward a goal.
//!
//! State `(px, py, vx, vy)`, action = acceleration `(ax, ay)` clipped to
//! the bound. With `dt = 0.1`:
//!
//! ```text
//! pos' = pos + vel * dt
//! vel' = vel + a * dt
//! r    = -||pos - goal|| * dt
//! done when ||pos' - goal|| < goal_radius
//! ```

use crate::scalar::{l2_dist, Scalar};

use super::{clip_action, uniform_in, Environment};

#[derive(Debug, Clone)]
pub struct PointMass {
    pub dt: f64,
    pub horizon: usize,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub action_bound: f64,
    /// Start positions are drawn uniformly from this box, re-drawn while
    /// closer than `min_start_dist` to the goal.
    pub start_box: [f64; 2],
    pub min_start_dist: f64,
    /// PD gains of the expert controller.
    pub kp: f64,
    pub kd: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        PointMass {
            dt: 0.1,
            horizon: 60,
            goal: [0.0, 0.0],
            goal_radius: 0.1,
            action_bound: 1.0,
            start_box: [1.0, 1.0],
            min_start_dist: 0.4,
            kp: 12.0,
            kd: 4.0,
        }
    }
}

impl PointMass {
    pub fn goal_vec<S: Scalar>(&self) -> Vec<S> {
        vec![S::of_f64(self.goal[0]), S::of_f64(self.goal[1])]
    }
}

impl<S: Scalar> Environment<S> for PointMass {
    fn name(&self) -> &'static str {
        "pointmass"
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_bound(&self) -> f64 {
        self.action_bound
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn initial_state(&self, rng: &mut dyn rand::RngCore) -> Vec<S> {
        loop {
            let px: S = uniform_in(rng, -self.start_box[0], self.start_box[0]);
            let py: S = uniform_in(rng, -self.start_box[1], self.start_box[1]);
            let d = ((px.into_f64() - self.goal[0]).powi(2)
                + (py.into_f64() - self.goal[1]).powi(2))
            .sqrt();
            if d >= self.min_start_dist {
                return vec![px, py, S::zero(), S::zero()];
            }
        }
    }

    fn step(&self, state: &[S], action: &[S]) -> (Vec<S>, S, bool) {
        assert_eq!(state.len(), 4, "pointmass state is (px, py, vx, vy)");
        assert_eq!(action.len(), 2, "pointmass action is (ax, ay)");
        let a = clip_action(action, self.action_bound);
        let dt = S::of_f64(self.dt);
        let goal = self.goal_vec::<S>();
        let reward = -l2_dist(&state[..2], &goal) * dt;
        let next = vec![
            state[0] + state[2] * dt,
            state[1] + state[3] * dt,
            state[2] + a[0] * dt,
            state[3] + a[1] * dt,
        ];
        let done = l2_dist(&next[..2], &goal) < S::of_f64(self.goal_radius);
        (next, reward, done)
    }

    fn expert_action(&self, state: &[S]) -> Vec<S> {
        // saturate preserving direction so the commanded path stays
        // straight from rest
        let e = [
            self.kp * (self.goal[0] - state[0].into_f64()) - self.kd * state[2].into_f64(),
            self.kp * (self.goal[1] - state[1].into_f64()) - self.kd * state[3].into_f64(),
        ];
        let m = e[0].abs().max(e[1].abs());
        let s = if m <= self.action_bound {
            1.0
        } else {
            self.action_bound / m
        };
        vec![S::of_f64(e[0] * s), S::of_f64(e[1] * s)]
    }
}
