//! Dataset model: transitions grouped into trajectories, validation,
//! trajectory-level quantities, file codecs and the spatial state index.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub mod codec;
pub mod index;

pub use index::{IndexEntry, StateIndex};

/// One environment step: `(state, action, reward, next_state)` plus a
/// terminal flag. Terminal marks a true episode end, not a timeout.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: Vec<S>,
    pub action: Vec<S>,
    pub reward: S,
    pub next_state: Vec<S>,
    pub terminal: bool,
}

/// An ordered sequence of transitions. Consecutive steps must chain
/// bit-exactly: `steps[t].next_state == steps[t+1].state`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub id: u64,
    pub steps: Vec<Transition<S>>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted return: the exact in-order sum of the reward fields.
    pub fn ret(&self) -> S {
        let mut acc = S::zero();
        for step in &self.steps {
            acc = acc + step.reward;
        }
        acc
    }
}

/// An offline dataset: trajectories with shared state/action dimensions
/// and a provenance map. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    dims: (usize, usize),
    trajectories: Vec<Trajectory<S>>,
    meta: BTreeMap<String, String>,
    id_to_idx: HashMap<u64, usize>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        dims: (usize, usize),
        trajectories: Vec<Trajectory<S>>,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let id_to_idx = trajectories
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id, i))
            .collect();
        Dataset {
            dims,
            trajectories,
            meta,
            id_to_idx,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn state_dim(&self) -> usize {
        self.dims.0
    }

    pub fn action_dim(&self) -> usize {
        self.dims.1
    }

    pub fn trajectories(&self) -> &[Trajectory<S>] {
        &self.trajectories
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.meta
    }

    pub fn trajectory(&self, id: u64) -> Option<&Trajectory<S>> {
        self.id_to_idx.get(&id).map(|&i| &self.trajectories[i])
    }

    /// Transition at `(trajectory id, step)`, if the step exists.
    pub fn transition(&self, id: u64, step: usize) -> Option<&Transition<S>> {
        self.trajectory(id).and_then(|t| t.steps.get(step))
    }

    /// State vector occupying position `(id, step)` in the index sense:
    /// `step == len` addresses the final transition's `next_state`.
    pub fn state_at(&self, id: u64, step: usize) -> Option<&[S]> {
        let traj = self.trajectory(id)?;
        if step < traj.len() {
            Some(&traj.steps[step].state)
        } else if step == traj.len() && !traj.is_empty() {
            Some(&traj.steps[traj.len() - 1].next_state)
        } else {
            None
        }
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn max_trajectory_len(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).max().unwrap_or(0)
    }

    /// Mean undiscounted stored return over trajectories.
    pub fn mean_return(&self) -> S {
        if self.trajectories.is_empty() {
            return S::zero();
        }
        let mut acc = S::zero();
        for t in &self.trajectories {
            acc = acc + t.ret();
        }
        acc / S::of_f64(self.trajectories.len() as f64)
    }

    /// Every transition as `(trajectory id, step, &transition)`.
    pub fn iter_transitions(&self) -> impl Iterator<Item = (u64, usize, &Transition<S>)> {
        self.trajectories
            .iter()
            .flat_map(|t| t.steps.iter().enumerate().map(move |(i, s)| (t.id, i, s)))
    }

    /// Checks every dataset invariant and reports each violation with its
    /// location. An empty report means the dataset is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let (ds, da) = self.dims;
        let mut seen_ids = HashMap::new();
        for traj in &self.trajectories {
            if let Some(_prev) = seen_ids.insert(traj.id, ()) {
                report.push(Violation {
                    traj: traj.id,
                    step: None,
                    kind: ViolationKind::DuplicateId,
                });
            }
            if traj.is_empty() {
                report.push(Violation {
                    traj: traj.id,
                    step: None,
                    kind: ViolationKind::EmptyTrajectory,
                });
                continue;
            }
            for (i, step) in traj.steps.iter().enumerate() {
                if step.state.len() != ds || step.next_state.len() != ds {
                    report.push(Violation {
                        traj: traj.id,
                        step: Some(i),
                        kind: ViolationKind::StateDim,
                    });
                }
                if step.action.len() != da {
                    report.push(Violation {
                        traj: traj.id,
                        step: Some(i),
                        kind: ViolationKind::ActionDim,
                    });
                }
                let finite = step.state.iter().all(|v| v.is_finite())
                    && step.action.iter().all(|v| v.is_finite())
                    && step.next_state.iter().all(|v| v.is_finite())
                    && step.reward.is_finite();
                if !finite {
                    report.push(Violation {
                        traj: traj.id,
                        step: Some(i),
                        kind: ViolationKind::NonFinite,
                    });
                }
                if step.terminal && i + 1 != traj.len() {
                    report.push(Violation {
                        traj: traj.id,
                        step: Some(i),
                        kind: ViolationKind::EarlyTerminal,
                    });
                }
                if i + 1 < traj.len() {
                    // Contiguity is bit-equality: stitched trajectories are
                    // constructed, not measured.
                    let next = &traj.steps[i + 1].state;
                    let equal = step.next_state.len() == next.len()
                        && step
                            .next_state
                            .iter()
                            .zip(next)
                            .all(|(a, b)| a.into_f64().to_bits() == b.into_f64().to_bits());
                    if !equal {
                        report.push(Violation {
                            traj: traj.id,
                            step: Some(i),
                            kind: ViolationKind::Contiguity,
                        });
                    }
                }
            }
        }
        report
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonFinite,
    StateDim,
    ActionDim,
    Contiguity,
    EarlyTerminal,
    DuplicateId,
    EmptyTrajectory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub traj: u64,
    /// Step index, when the violation is tied to a single transition.
    pub step: Option<usize>,
    pub kind: ViolationKind,
}

#[derive(Debug, Default, Clone)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Which factorization of the trajectory density to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorizationMode {
    /// Initial state, then per step: policy times transition dynamics.
    PolicyTransition,
    /// Initial state, then per step: action-free forward dynamics times
    /// inverse dynamics.
    ForwardInverse,
}

/// Exact conditional log-density callables for each trajectory factor.
pub struct FactorDensities<'a, S> {
    /// `log p(s0)`
    pub initial: &'a dyn Fn(&[S]) -> S,
    /// `log p(a | s)`
    pub policy: &'a dyn Fn(&[S], &[S]) -> S,
    /// `log p(s' | s, a)`
    pub transition: &'a dyn Fn(&[S], &[S], &[S]) -> S,
    /// `log p(s' | s)`
    pub forward: &'a dyn Fn(&[S], &[S]) -> S,
    /// `log p(a | s, s')`
    pub inverse: &'a dyn Fn(&[S], &[S], &[S]) -> S,
}

/// Log-probability of a trajectory under one of the two equivalent
/// factorizations. Both share the initial-state factor; per step, one uses
/// policy x transition, the other forward x inverse.
pub fn trajectory_log_prob<S: Scalar>(
    traj: &Trajectory<S>,
    mode: FactorizationMode,
    densities: &FactorDensities<'_, S>,
) -> Result<S> {
    let check = |v: S, step: usize, factor: &'static str| -> Result<S> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteFactor {
                traj: traj.id,
                step,
                factor,
            })
        }
    };
    let first = traj
        .steps
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let mut acc = check((densities.initial)(&first.state), 0, "initial")?;
    for (t, step) in traj.steps.iter().enumerate() {
        match mode {
            FactorizationMode::PolicyTransition => {
                acc = acc + check((densities.policy)(&step.state, &step.action), t, "policy")?;
                acc = acc
                    + check(
                        (densities.transition)(&step.state, &step.action, &step.next_state),
                        t,
                        "transition",
                    )?;
            }
            FactorizationMode::ForwardInverse => {
                acc = acc + check((densities.forward)(&step.state, &step.next_state), t, "forward")?;
                acc = acc
                    + check(
                        (densities.inverse)(&step.state, &step.next_state, &step.action),
                        t,
                        "inverse",
                    )?;
            }
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(state: f64, action: f64, reward: f64, next: f64, terminal: bool) -> Transition<f64> {
        Transition {
            state: vec![state],
            action: vec![action],
            reward,
            next_state: vec![next],
            terminal,
        }
    }

    fn chain_traj(id: u64, rewards: &[f64]) -> Trajectory<f64> {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(i, &r)| tr(i as f64, 0.0, r, (i + 1) as f64, i + 1 == rewards.len()))
            .collect();
        Trajectory { id, steps }
    }

    #[test]
    fn returns_sum_in_order() {
        let t = chain_traj(0, &[1.0, 2.0, 3.0]);
        assert_eq!(t.ret(), 6.0);
        let z = chain_traj(1, &[0.0]);
        assert_eq!(z.ret(), 0.0);
    }

    #[test]
    fn validate_clean_dataset() {
        let ds = Dataset::new((1, 1), vec![chain_traj(0, &[1.0, -1.0])], BTreeMap::new());
        assert!(ds.validate().is_valid());
    }

    #[test]
    fn validate_reports_contiguity_break() {
        let mut traj = chain_traj(0, &[1.0, 1.0]);
        traj.steps[0].next_state = vec![42.0];
        let ds = Dataset::new((1, 1), vec![traj], BTreeMap::new());
        let report = ds.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::Contiguity);
        assert_eq!(report.violations[0].traj, 0);
        assert_eq!(report.violations[0].step, Some(0));
    }

    #[test]
    fn validate_reports_nan_reward() {
        let mut traj = chain_traj(0, &[1.0, 1.0, 1.0, 1.0]);
        traj.steps[3].reward = f64::NAN;
        let ds = Dataset::new((1, 1), vec![traj], BTreeMap::new());
        let report = ds.validate();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::NonFinite);
        assert_eq!(report.violations[0].step, Some(3));
    }

    #[test]
    fn validate_reports_early_terminal_and_dup_ids() {
        let mut traj = chain_traj(0, &[1.0, 1.0]);
        traj.steps[0].terminal = true;
        let dup = chain_traj(0, &[1.0]);
        let ds = Dataset::new((1, 1), vec![traj, dup], BTreeMap::new());
        let kinds: Vec<_> = ds.validate().violations.iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::EarlyTerminal));
        assert!(kinds.contains(&ViolationKind::DuplicateId));
    }

    #[test]
    fn log_prob_deterministic_factors() {
        let traj = chain_traj(0, &[0.0, 0.0]);
        let one = |_: &[f64]| 0.0;
        let densities = FactorDensities {
            initial: &one,
            policy: &|_, _| 0.0,
            transition: &|_, _, _| 0.0,
            forward: &|_, _| 0.0,
            inverse: &|_, _, _| 0.0,
        };
        let lp = trajectory_log_prob(&traj, FactorizationMode::PolicyTransition, &densities)
            .unwrap();
        assert_eq!(lp, 0.0);
    }

    #[test]
    fn log_prob_single_half_factor() {
        let traj = chain_traj(0, &[0.0]);
        let densities = FactorDensities {
            initial: &|_| 0.0,
            policy: &|_, _| 0.5f64.ln(),
            transition: &|_, _, _| 0.0,
            forward: &|_, _| 0.0,
            inverse: &|_, _, _| 0.0,
        };
        let lp = trajectory_log_prob(&traj, FactorizationMode::PolicyTransition, &densities)
            .unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_prob_propagates_non_finite_with_location() {
        let traj = chain_traj(7, &[0.0, 0.0, 0.0]);
        let densities = FactorDensities {
            initial: &|_| 0.0,
            policy: &|_, _| 0.0,
            transition: &|s: &[f64], _: &[f64], _: &[f64]| {
                if s[0] == 1.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0
                }
            },
            forward: &|_, _| 0.0,
            inverse: &|_, _, _| 0.0,
        };
        let err = trajectory_log_prob(&traj, FactorizationMode::PolicyTransition, &densities)
            .unwrap_err();
        match err {
            Error::NonFiniteFactor { traj, step, factor } => {
                assert_eq!((traj, step, factor), (7, 1, "transition"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
