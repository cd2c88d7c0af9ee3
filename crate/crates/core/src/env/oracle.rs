//! Exact policy evaluation on the chain environment by linear solve,
//! used as the oracle for learned value functions.

use crate::env::chain::{Chain, CHAIN_LEN};
use crate::error::{Error, Result};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let (pivot, max) = (col..n)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if max < 1e-12 {
            return Err(Error::SingularSystem(format!("pivot {max:.3e} at column {col}")));
        }
        m.swap(col, pivot);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Exact evaluation `V = (I - gamma * P_pi)^{-1} r_pi` of a behaviour
/// policy on the chain, given the per-state probability of moving right.
/// The absorbing terminal state has value zero; entering it pays its
/// transition reward with no bootstrap.
pub fn dp_value_oracle(policy_right: &[f64; CHAIN_LEN], gamma: f64) -> Result<[f64; CHAIN_LEN]> {
    let terminal = CHAIN_LEN - 1;
    let mut p = vec![vec![0.0; CHAIN_LEN]; CHAIN_LEN];
    let mut r = vec![0.0; CHAIN_LEN];
    for i in 0..CHAIN_LEN {
        if i == terminal {
            continue; // absorbing, V = 0
        }
        for (dir_prob, right) in [(policy_right[i], true), (1.0 - policy_right[i], false)] {
            if dir_prob == 0.0 {
                continue;
            }
            let j = Chain::next_index(i, right);
            r[i] += dir_prob * Chain::reward_of(i, j);
            if j != terminal {
                p[i][j] += dir_prob;
            }
        }
    }
    let mut a = vec![vec![0.0; CHAIN_LEN]; CHAIN_LEN];
    for i in 0..CHAIN_LEN {
        for j in 0..CHAIN_LEN {
            a[i][j] = f64::from(i == j) - gamma * p[i][j];
        }
    }
    let v = solve_linear(&a, &r)?;
    Ok(v.try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_reward_policy_has_zero_value() {
        // always-left policy never reaches the rewarding state
        let v = dp_value_oracle(&[0.0; CHAIN_LEN], 0.9).unwrap();
        assert_eq!(v, [0.0; CHAIN_LEN]);
    }

    #[test]
    fn always_right_gives_geometric_values() {
        let v = dp_value_oracle(&[1.0; CHAIN_LEN], 0.9).unwrap();
        // V(s) = gamma^(steps to goal - 1): V(3)=1, V(2)=0.9, ...
        for i in 0..CHAIN_LEN - 1 {
            let k = CHAIN_LEN - 2 - i;
            assert!((v[i] - 0.9f64.powi(k as i32)).abs() < 1e-12, "{v:?}");
        }
        assert_eq!(v[CHAIN_LEN - 1], 0.0);
    }

    #[test]
    fn matches_fixed_point_iteration() {
        let pol = [0.8, 0.7, 0.9, 0.6, 0.5];
        let gamma = 0.9;
        let v = dp_value_oracle(&pol, gamma).unwrap();
        // iterative policy evaluation oracle
        let mut w = [0.0f64; CHAIN_LEN];
        for _ in 0..2000 {
            let mut next = [0.0f64; CHAIN_LEN];
            for i in 0..CHAIN_LEN - 1 {
                for (prob, right) in [(pol[i], true), (1.0 - pol[i], false)] {
                    let j = Chain::next_index(i, right);
                    let bootstrap = if j == CHAIN_LEN - 1 { 0.0 } else { w[j] };
                    next[i] += prob * (Chain::reward_of(i, j) + gamma * bootstrap);
                }
            }
            w = next;
        }
        for i in 0..CHAIN_LEN {
            assert!((v[i] - w[i]).abs() < 1e-10, "{v:?} vs {w:?}");
        }
    }

    #[test]
    fn recurrent_class_at_gamma_one_is_singular() {
        assert!(dp_value_oracle(&[0.0; CHAIN_LEN], 1.0).is_err());
    }
}
