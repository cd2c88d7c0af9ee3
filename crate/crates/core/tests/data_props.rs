//! Property tests for the dataset layer against independent oracles:
//! compensated summation for returns, a linear scan for radius queries,
//! exact tabular factor tables for the two trajectory factorizations, and
//! seeded random round trips for the codecs.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajstitch::data::{
    codec, trajectory_log_prob, Dataset, FactorDensities, FactorizationMode, StateIndex,
    Trajectory, Transition,
};

fn random_dataset(rng: &mut ChaCha8Rng, n_traj: usize, d_s: usize, d_a: usize) -> Dataset<f64> {
    let mut trajectories = Vec::with_capacity(n_traj);
    for id in 0..n_traj {
        let len = rng.gen_range(1..=8);
        let mut state: Vec<f64> = (0..d_s).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut steps = Vec::with_capacity(len);
        for t in 0..len {
            let next: Vec<f64> = (0..d_s).map(|_| rng.gen_range(-2.0..2.0)).collect();
            steps.push(Transition {
                state: state.clone(),
                action: (0..d_a).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                reward: rng.gen_range(-5.0..5.0),
                next_state: next.clone(),
                terminal: t + 1 == len && rng.gen_bool(0.5),
            });
            state = next;
        }
        trajectories.push(Trajectory {
            id: id as u64,
            steps,
        });
    }
    Dataset::new((d_s, d_a), trajectories, Default::default())
}

#[test]
fn binary_round_trip_is_bit_exact_on_100_random_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let ds = random_dataset(&mut rng, 100, 4, 2);
    assert!(ds.validate().is_valid());
    let bytes = codec::to_binary(&ds);
    let back: Dataset<f64> = codec::from_binary(&bytes).unwrap();
    assert_eq!(back.dims(), ds.dims());
    assert_eq!(back.trajectories().len(), ds.trajectories().len());
    let mut max_bit_diff = 0u64;
    for (a, b) in ds.trajectories().iter().zip(back.trajectories()) {
        assert_eq!(a.id, b.id);
        for (x, y) in a.steps.iter().zip(&b.steps) {
            assert_eq!(x.terminal, y.terminal);
            for (u, v) in x
                .state
                .iter()
                .chain(&x.action)
                .chain(std::iter::once(&x.reward))
                .chain(&x.next_state)
                .zip(
                    y.state
                        .iter()
                        .chain(&y.action)
                        .chain(std::iter::once(&y.reward))
                        .chain(&y.next_state),
                )
            {
                max_bit_diff = max_bit_diff.max(u.to_bits().abs_diff(v.to_bits()));
            }
        }
    }
    assert_eq!(max_bit_diff, 0);
}

#[test]
fn text_round_trip_is_value_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let ds = random_dataset(&mut rng, 20, 3, 1);
    let back: Dataset<f64> = codec::from_text(&codec::to_text(&ds)).unwrap();
    assert_eq!(back.trajectories(), ds.trajectories());
}

/// Kahan compensated summation, the independent oracle for returns.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[test]
fn trajectory_return_matches_compensated_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let rewards: Vec<f64> = (0..1000).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let steps = rewards
        .iter()
        .map(|&r| Transition {
            state: vec![0.0],
            action: vec![0.0],
            reward: r,
            next_state: vec![0.0],
            terminal: false,
        })
        .collect();
    let traj = Trajectory { id: 0, steps };
    let oracle = kahan_sum(&rewards);
    let abs_sum: f64 = rewards.iter().map(|r| r.abs()).sum();
    assert!((traj.ret() - oracle).abs() < 1e-12 * abs_sum);
}

#[test]
fn radius_query_equals_linear_scan_on_500_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let ds = random_dataset(&mut rng, 100, 3, 1);
    let index = StateIndex::build_with_cell(&ds, 0.3);
    assert!(index.len() >= 100);
    for _ in 0..100 {
        let center: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let eps = rng.gen_range(0.0..1.5);
        let got: BTreeSet<(u64, usize)> = index
            .radius_query(&center, eps)
            .iter()
            .map(|e| (e.traj, e.step))
            .collect();
        let want: BTreeSet<(u64, usize)> = index
            .entries()
            .iter()
            .filter(|e| {
                let d2: f64 = e
                    .state
                    .iter()
                    .zip(&center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() <= eps
            })
            .map(|e| (e.traj, e.step))
            .collect();
        assert_eq!(got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn radius_query_scan_equivalence_prop(seed in 0u64..5_000, eps in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = random_dataset(&mut rng, 10, 2, 1);
        let index = StateIndex::build_with_cell(&ds, 0.25);
        let center: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let got: Vec<(u64, usize)> = index
            .radius_query(&center, eps)
            .iter()
            .map(|e| (e.traj, e.step))
            .collect();
        let mut want: Vec<(u64, usize)> = index
            .entries()
            .iter()
            .filter(|e| {
                let d2: f64 = e.state.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= eps
            })
            .map(|e| (e.traj, e.step))
            .collect();
        want.sort();
        prop_assert_eq!(got, want);
    }
}

/// A random tabular MDP with exact factor tables. States and actions are
/// encoded as 1-element vectors holding their index.
struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    initial: Vec<f64>,
    policy: Vec<Vec<f64>>,          // [s][a]
    transition: Vec<Vec<Vec<f64>>>, // [s][a][s']
}

impl TabularMdp {
    fn random(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> Self {
        let dist = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / sum).collect()
        };
        TabularMdp {
            n_states,
            n_actions,
            initial: dist(rng, n_states),
            policy: (0..n_states).map(|_| dist(rng, n_actions)).collect(),
            transition: (0..n_states)
                .map(|_| (0..n_actions).map(|_| dist(rng, n_states)).collect())
                .collect(),
        }
    }

    /// Behaviour-marginal forward dynamics `p(s'|s) = sum_a pi(a|s) P(s'|s,a)`.
    fn forward(&self, s: usize, s2: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| self.policy[s][a] * self.transition[s][a][s2])
            .sum()
    }

    /// Bayes-inverted `p(a|s,s') = pi(a|s) P(s'|s,a) / p(s'|s)`.
    fn inverse(&self, s: usize, s2: usize, a: usize) -> f64 {
        self.policy[s][a] * self.transition[s][a][s2] / self.forward(s, s2)
    }
}

fn idx(v: &[f64]) -> usize {
    v[0].round() as usize
}

fn enumerate_trajectories(mdp: &TabularMdp, len: usize) -> Vec<Trajectory<f64>> {
    // every (s0, a0, s1, a1, ..., s_len) sequence
    let mut seqs: Vec<Vec<(usize, usize, usize)>> = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::new();
        for seq in &seqs {
            let s = seq.last().map_or(0, |&(_, _, s2)| s2);
            let starts: Vec<usize> = if seq.is_empty() {
                (0..mdp.n_states).collect()
            } else {
                vec![s]
            };
            for s0 in starts {
                for a in 0..mdp.n_actions {
                    for s2 in 0..mdp.n_states {
                        let mut new_seq = seq.clone();
                        new_seq.push((s0, a, s2));
                        next.push(new_seq);
                    }
                }
            }
        }
        seqs = next;
    }
    seqs.into_iter()
        .enumerate()
        .map(|(id, seq)| Trajectory {
            id: id as u64,
            steps: seq
                .into_iter()
                .map(|(s, a, s2)| Transition {
                    state: vec![s as f64],
                    action: vec![a as f64],
                    reward: 0.0,
                    next_state: vec![s2 as f64],
                    terminal: false,
                })
                .collect(),
        })
        .collect()
}

#[test]
fn factorizations_agree_on_random_tabular_mdps() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    for trial in 0..20 {
        let n_states = 3 + (trial % 3); // 3..5 states
        let mdp = TabularMdp::random(&mut rng, n_states, 2);
        let densities = FactorDensities {
            initial: &|s: &[f64]| mdp.initial[idx(s)].ln(),
            policy: &|s: &[f64], a: &[f64]| mdp.policy[idx(s)][idx(a)].ln(),
            transition: &|s: &[f64], a: &[f64], s2: &[f64]| {
                mdp.transition[idx(s)][idx(a)][idx(s2)].ln()
            },
            forward: &|s: &[f64], s2: &[f64]| mdp.forward(idx(s), idx(s2)).ln(),
            inverse: &|s: &[f64], s2: &[f64], a: &[f64]| {
                mdp.inverse(idx(s), idx(s2), idx(a)).ln()
            },
        };
        for len in 1..=4 {
            for traj in enumerate_trajectories(&mdp, len) {
                let a =
                    trajectory_log_prob(&traj, FactorizationMode::PolicyTransition, &densities)
                        .unwrap();
                let b = trajectory_log_prob(&traj, FactorizationMode::ForwardInverse, &densities)
                    .unwrap();
                assert!(
                    (a - b).abs() < 1e-9,
                    "trial {trial} len {len}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn factorizations_agree_up_to_length_5_on_3_state_mdps() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..5 {
        let mdp = TabularMdp::random(&mut rng, 3, 2);
        let densities = FactorDensities {
            initial: &|s: &[f64]| mdp.initial[idx(s)].ln(),
            policy: &|s: &[f64], a: &[f64]| mdp.policy[idx(s)][idx(a)].ln(),
            transition: &|s: &[f64], a: &[f64], s2: &[f64]| {
                mdp.transition[idx(s)][idx(a)][idx(s2)].ln()
            },
            forward: &|s: &[f64], s2: &[f64]| mdp.forward(idx(s), idx(s2)).ln(),
            inverse: &|s: &[f64], s2: &[f64], a: &[f64]| {
                mdp.inverse(idx(s), idx(s2), idx(a)).ln()
            },
        };
        for traj in enumerate_trajectories(&mdp, 5) {
            let a = trajectory_log_prob(&traj, FactorizationMode::PolicyTransition, &densities)
                .unwrap();
            let b =
                trajectory_log_prob(&traj, FactorizationMode::ForwardInverse, &densities).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn state_index_counts_state_and_terminal_entries() {
    let mut rng = ChaCha8Rng::seed_from_u64(48);
    let ds = random_dataset(&mut rng, 50, 2, 1);
    let index = StateIndex::build(&ds);
    let expected: usize = ds
        .trajectories()
        .iter()
        .map(|t| t.len() + usize::from(t.steps.last().is_some_and(|s| s.terminal)))
        .sum();
    assert_eq!(index.len(), expected);
}
