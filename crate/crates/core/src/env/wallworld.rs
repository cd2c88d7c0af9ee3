//! Pointmass dynamics with a wall segment that blocks motion. States on
//! opposite sides of the wall can be close in Euclidean distance while no
//! single action connects them.
//!
//! A motion step whose segment crosses the wall is projected back to the
//! pre-contact point (the wall is sticky for position; velocity is still
//! integrated). The expert therefore plans with an inflated wall: grazing
//! the true wall can pin the particle.

use crate::scalar::{l2_dist, Scalar};

use super::{clip_action, uniform_in, Environment};

#[derive(Debug, Clone)]
pub struct WallWorld {
    pub dt: f64,
    pub horizon: usize,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub action_bound: f64,
    /// Wall segment endpoints.
    pub wall: [[f64; 2]; 2],
    /// Start box on the far side of the wall: `[x lo, x hi, y lo, y hi]`.
    pub start_rect: [f64; 4],
    /// Clearance the expert keeps from the wall when testing goal
    /// visibility.
    pub plan_margin: f64,
    /// Radius of the disc around the wall's lower corner the detour
    /// rounds; the carrot is the tangent point of this disc.
    pub corner_radius: f64,
    pub kp: f64,
    pub kd: f64,
    /// Velocity-tracking gain and cruise speed of the detour pursuit.
    pub kv_turn: f64,
    pub v_turn: f64,
}

impl Default for WallWorld {
    fn default() -> Self {
        WallWorld {
            dt: 0.1,
            horizon: 60,
            goal: [0.7, 0.0],
            goal_radius: 0.1,
            action_bound: 1.0,
            wall: [[0.0, -0.3], [0.0, 1.4]],
            start_rect: [-1.2, -0.4, 0.05, 1.0],
            plan_margin: 0.08,
            corner_radius: 0.175,
            kp: 12.0,
            kd: 4.0,
            kv_turn: 4.0,
            v_turn: 1.0,
        }
    }
}

/// Intersection parameter `t` along `p -> p + d` at which the motion hits
/// the segment `[q1, q2]`, if any.
fn segment_hit(p: [f64; 2], d: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> Option<f64> {
    let r = d;
    let s = [q2[0] - q1[0], q2[1] - q1[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-15 {
        return None; // parallel motion never crosses
    }
    let qp = [q1[0] - p[0], q1[1] - p[1]];
    let t = (qp[0] * s[1] - qp[1] * s[0]) / denom;
    let u = (qp[0] * r[1] - qp[1] * r[0]) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

fn point_segment_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let c = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt()
}

fn segment_segment_dist(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> f64 {
    if segment_hit(p1, [p2[0] - p1[0], p2[1] - p1[1]], q1, q2).is_some() {
        return 0.0;
    }
    point_segment_dist(p1, q1, q2)
        .min(point_segment_dist(p2, q1, q2))
        .min(point_segment_dist(q1, p1, p2))
        .min(point_segment_dist(q2, p1, p2))
}

/// Scales a 2-d command down to the bound preserving its direction, so
/// saturation does not bend the commanded path.
fn clip_preserving(a: [f64; 2], bound: f64) -> [f64; 2] {
    let m = a[0].abs().max(a[1].abs());
    if m <= bound {
        a
    } else {
        [a[0] * bound / m, a[1] * bound / m]
    }
}

impl WallWorld {
    fn pointmass_like<S: Scalar>(&self, state: &[S], action: &[S]) -> (Vec<S>, S, bool) {
        let a = clip_action(action, self.action_bound);
        let dt = S::of_f64(self.dt);
        let goal = [S::of_f64(self.goal[0]), S::of_f64(self.goal[1])];
        let reward = -l2_dist(&state[..2], &goal) * dt;

        let p = [state[0].into_f64(), state[1].into_f64()];
        let motion = [
            state[2].into_f64() * self.dt,
            state[3].into_f64() * self.dt,
        ];
        let new_pos = match segment_hit(p, motion, self.wall[0], self.wall[1]) {
            // projected to the pre-contact point
            Some(t) => {
                let t = (t - 1e-9).max(0.0);
                [p[0] + motion[0] * t, p[1] + motion[1] * t]
            }
            None => [p[0] + motion[0], p[1] + motion[1]],
        };
        let next = vec![
            S::of_f64(new_pos[0]),
            S::of_f64(new_pos[1]),
            state[2] + a[0] * dt,
            state[3] + a[1] * dt,
        ];
        let done = l2_dist(&next[..2], &goal) < S::of_f64(self.goal_radius);
        (next, reward, done)
    }

    /// Whether the straight line from `p` to `q` passes within `margin`
    /// of the wall.
    pub fn line_blocked_by(&self, p: [f64; 2], q: [f64; 2], margin: f64) -> bool {
        segment_segment_dist(p, q, self.wall[0], self.wall[1]) < margin
    }

    /// Whether the straight line from `p` to `q` passes within the
    /// planning margin of the wall.
    pub fn line_blocked(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        self.line_blocked_by(p, q, self.plan_margin)
    }

    /// Whether the straight line from `p` to the goal is considered
    /// blocked for planning: near the wall itself or cutting through the
    /// corner disc the detour rounds.
    pub fn blocked(&self, p: [f64; 2]) -> bool {
        if self.line_blocked(p, self.goal) {
            return true;
        }
        // keep clear of the corner disc while still west of the wall
        p[0] < 0.0
            && point_segment_dist(self.wall[0], p, self.goal) < self.corner_radius * 0.7
    }
}

impl<S: Scalar> Environment<S> for WallWorld {
    fn name(&self) -> &'static str {
        "wallworld"
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
        let px: S = uniform_in(rng, self.start_rect[0], self.start_rect[1]);
        let py: S = uniform_in(rng, self.start_rect[2], self.start_rect[3]);
        vec![px, py, S::zero(), S::zero()]
    }

    fn step(&self, state: &[S], action: &[S]) -> (Vec<S>, S, bool) {
        assert_eq!(state.len(), 4);
        assert_eq!(action.len(), 2);
        self.pointmass_like(state, action)
    }

    fn expert_action(&self, state: &[S]) -> Vec<S> {
        let p = [state[0].into_f64(), state[1].into_f64()];
        let v = [state[2].into_f64(), state[3].into_f64()];
        if !self.blocked(p) {
            // plain PD capture once the goal is in (inflated) line of sight
            let a = clip_preserving(
                [
                    self.kp * (self.goal[0] - p[0]) - self.kd * v[0],
                    self.kp * (self.goal[1] - p[1]) - self.kd * v[1],
                ],
                self.action_bound,
            );
            return vec![S::of_f64(a[0]), S::of_f64(a[1])];
        }
        // round the lower corner: pursue the tangent point of the
        // inflated corner disc, tracking a cruise velocity toward it
        let c = self.wall[0];
        let r = self.corner_radius;
        let d = [p[0] - c[0], p[1] - c[1]];
        let dist = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-9);
        let target = if dist <= r * 1.05 {
            // inside the disc: push straight out
            [c[0] + d[0] / dist * 2.0 * r, c[1] + d[1] / dist * 2.0 * r]
        } else {
            let alpha = (r / dist).min(1.0).acos();
            let u = [d[0] / dist, d[1] / dist];
            let rot = |a: f64| -> [f64; 2] {
                [
                    c[0] + r * (u[0] * a.cos() - u[1] * a.sin()),
                    c[1] + r * (u[0] * a.sin() + u[1] * a.cos()),
                ]
            };
            let (t1, t2) = (rot(alpha), rot(-alpha));
            // go around the bottom: prefer the southern tangent point
            if t1[1] < t2[1] {
                t1
            } else {
                t2
            }
        };
        let to = [target[0] - p[0], target[1] - p[1]];
        let len = (to[0] * to[0] + to[1] * to[1]).sqrt().max(1e-9);
        let v_des = [to[0] / len * self.v_turn, to[1] / len * self.v_turn];
        let a = clip_preserving(
            [
                self.kv_turn * (v_des[0] - v[0]),
                self.kv_turn * (v_des[1] - v[1]),
            ],
            self.action_bound,
        );
        vec![S::of_f64(a[0]), S::of_f64(a[1])]
    }
}
