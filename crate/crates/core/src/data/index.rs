//! Spatial index over dataset state occurrences supporting radius queries.
//!
//! One entry exists per occurrence of a state as the `state` field of a
//! transition, plus one per terminal `next_state` (so episode end states
//! remain addressable). Entries are keyed by `(trajectory id, step)`, where
//! `step == trajectory length` addresses the terminal `next_state`.
//!
//! Buckets hash a projection onto the first few coordinates; queries
//! enumerate the bucket range covering the ball and filter by exact
//! Euclidean distance, so results are identical to a linear scan.

use std::collections::HashMap;

use crate::data::Dataset;
use crate::scalar::{sq_dist, Scalar};

/// Dimensions above which the grid is skipped in favour of a plain scan.
const LINEAR_SCAN_DIM: usize = 16;
/// How many leading coordinates the grid buckets on.
const GRID_DIMS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry<S> {
    pub traj: u64,
    pub step: usize,
    pub state: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct StateIndex<S> {
    entries: Vec<IndexEntry<S>>,
    cell: f64,
    grid_dims: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl<S: Scalar> StateIndex<S> {
    /// Builds the index with the default bucket side.
    pub fn build(dataset: &Dataset<S>) -> Self {
        Self::build_with_cell(dataset, 0.25)
    }

    /// Builds the index with an explicit bucket side (usually the radius
    /// the caller expects to query with).
    pub fn build_with_cell(dataset: &Dataset<S>, cell: f64) -> Self {
        assert!(cell > 0.0, "cell side must be positive");
        let mut entries = Vec::new();
        for traj in dataset.trajectories() {
            for (step, t) in traj.steps.iter().enumerate() {
                entries.push(IndexEntry {
                    traj: traj.id,
                    step,
                    state: t.state.clone(),
                });
                if t.terminal {
                    entries.push(IndexEntry {
                        traj: traj.id,
                        step: step + 1,
                        state: t.next_state.clone(),
                    });
                }
            }
        }
        let grid_dims = if dataset.state_dim() > LINEAR_SCAN_DIM {
            0
        } else {
            dataset.state_dim().min(GRID_DIMS)
        };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        if grid_dims > 0 {
            for (i, e) in entries.iter().enumerate() {
                buckets.entry(cell_key(&e.state, cell, grid_dims)).or_default().push(i);
            }
        }
        StateIndex {
            entries,
            cell,
            grid_dims,
            buckets,
        }
    }

    pub fn entries(&self) -> &[IndexEntry<S>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries with `‖state − center‖₂ ≤ radius`, ordered by
    /// `(trajectory id, step)`. An infinite radius returns every entry.
    pub fn radius_query(&self, center: &[S], radius: S) -> Vec<&IndexEntry<S>> {
        let mut hits: Vec<&IndexEntry<S>> = Vec::new();
        if radius.is_infinite() && radius > S::zero() {
            hits.extend(self.entries.iter());
        } else {
            let r2 = radius * radius;
            if self.grid_dims == 0 {
                for e in &self.entries {
                    if sq_dist(&e.state, center) <= r2 {
                        hits.push(e);
                    }
                }
            } else {
                let r = radius.into_f64();
                let span = (r / self.cell).ceil() as i64;
                let base = cell_key(center, self.cell, self.grid_dims);
                let mut key = vec![0i64; self.grid_dims];
                let mut offsets = vec![-span; self.grid_dims];
                loop {
                    for d in 0..self.grid_dims {
                        key[d] = base[d] + offsets[d];
                    }
                    if let Some(ids) = self.buckets.get(&key) {
                        for &i in ids {
                            let e = &self.entries[i];
                            if sq_dist(&e.state, center) <= r2 {
                                hits.push(e);
                            }
                        }
                    }
                    // odometer over the offset cube
                    let mut d = 0;
                    loop {
                        if d == self.grid_dims {
                            break;
                        }
                        offsets[d] += 1;
                        if offsets[d] <= span {
                            break;
                        }
                        offsets[d] = -span;
                        d += 1;
                    }
                    if d == self.grid_dims {
                        break;
                    }
                }
            }
        }
        hits.sort_by_key(|e| (e.traj, e.step));
        hits
    }
}

fn cell_key<S: Scalar>(state: &[S], cell: f64, dims: usize) -> Vec<i64> {
    state[..dims]
        .iter()
        .map(|v| (v.into_f64() / cell).floor() as i64)
        .collect()
}
