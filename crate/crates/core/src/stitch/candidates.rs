//! Candidate next-state search and gated target selection.

use std::collections::BTreeMap;

use crate::data::{Dataset, StateIndex};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::StitchModels;

/// A candidate next state, addressed by its occurrence in the dataset.
/// `step == trajectory length` addresses the final transition's
/// `next_state` (an episode end).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<S> {
    pub traj: u64,
    pub step: usize,
    pub state: Vec<S>,
}

/// The selected stitch target with its value estimate.
#[derive(Debug, Clone)]
pub struct StitchTarget<S> {
    pub candidate: Candidate<S>,
    pub value: S,
}

/// Candidate next states for the transition at `(traj_id, step)`: the
/// successors of states within `epsilon` of the current state, plus all
/// states within `epsilon` of the current next state. The original next
/// state occurrence is excluded. Deterministic `(traj, step)` order.
pub fn candidate_next_states<S: Scalar>(
    index: &StateIndex<S>,
    dataset: &Dataset<S>,
    traj_id: u64,
    step: usize,
    epsilon: f64,
) -> Result<Vec<Candidate<S>>> {
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let cur = dataset
        .transition(traj_id, step)
        .ok_or_else(|| Error::InvalidArgument(format!("no transition ({traj_id}, {step})")))?;
    let eps = S::of_f64(epsilon);
    let mut found: BTreeMap<(u64, usize), Vec<S>> = BTreeMap::new();

    // successors of neighbours of the current state
    for entry in index.radius_query(&cur.state, eps) {
        let traj = dataset.trajectory(entry.traj).expect("indexed trajectory");
        if entry.step < traj.len() {
            let ptr = (entry.traj, entry.step + 1);
            if let Some(state) = dataset.state_at(ptr.0, ptr.1) {
                found.entry(ptr).or_insert_with(|| state.to_vec());
            }
        }
    }
    // neighbours of the current next state
    for entry in index.radius_query(&cur.next_state, eps) {
        found
            .entry((entry.traj, entry.step))
            .or_insert_with(|| entry.state.clone());
    }
    // the original next-state occurrence would be a no-op stitch
    found.remove(&(traj_id, step + 1));

    Ok(found
        .into_iter()
        .map(|((traj, step), state)| Candidate { traj, step, state })
        .collect())
}

/// Among candidates passing the reachability gate, picks the one with the
/// highest value estimate provided it strictly beats the original next
/// state's value. Ties break toward the lowest `(traj, step)`. When more
/// than `cap` candidates exist, only the highest-valued `cap` are gated.
pub fn select_stitch_target<S: Scalar>(
    candidates: &[Candidate<S>],
    models: &StitchModels<'_, S>,
    state: &[S],
    orig_next: &[S],
    cap: usize,
) -> Result<Option<StitchTarget<S>>> {
    if candidates.is_empty() {
        return Ok(None);
    }
    let states: Vec<&[S]> = candidates.iter().map(|c| c.state.as_slice()).collect();
    let values = models.value.values(&states)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    if candidates.len() > cap.max(1) {
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap()
                .then_with(|| (candidates[a].traj, candidates[a].step).cmp(&(candidates[b].traj, candidates[b].step)))
        });
        order.truncate(cap.max(1));
        order.sort_by_key(|&i| (candidates[i].traj, candidates[i].step));
    }
    let gated_states: Vec<&[S]> = order.iter().map(|&i| candidates[i].state.as_slice()).collect();
    let passes = models.gate.gate_many(state, orig_next, &gated_states)?;
    let v_orig = models.value.value(orig_next)?;
    let mut best: Option<(S, usize)> = None;
    for (slot, &i) in order.iter().enumerate() {
        if !passes[slot] {
            continue;
        }
        let v = values[i];
        if !(v > v_orig) {
            continue;
        }
        // candidates are in (traj, step) order, so strict improvement
        // keeps the earliest of equals
        let better = match &best {
            None => true,
            Some((bv, _)) => v > *bv,
        };
        if better {
            best = Some((v, i));
        }
    }
    Ok(best.map(|(v, i)| StitchTarget {
        candidate: candidates[i].clone(),
        value: v,
    }))
}
