//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::mat::Mat;
use crate::scalar::Scalar;

use super::loss::{loss_and_grad, Batch, LossKind};
use super::{forward_trace, MlpSpec, MlpState, OutputHead, LOG_STD_MAX, LOG_STD_MIN};

/// Parameters checked exhaustively below this count; above it a seeded
/// random subset of at least this many coordinates is used.
const EXHAUSTIVE_LIMIT: usize = 200;

/// Maximum relative error between the analytic gradient and central
/// finite differences with step `h` (f64 recommended). For nets above
/// [`EXHAUSTIVE_LIMIT`] parameters a seeded subset of coordinates is
/// checked.
pub fn grad_check<S: Scalar, R: Rng>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    batch: &Batch<'_, S>,
    kind: &LossKind<'_, S>,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    let (_, grad) = loss_and_grad(spec, state, batch, kind)?;
    let n = state.params.len();
    let coords: Vec<usize> = if n <= EXHAUSTIVE_LIMIT {
        (0..n).collect()
    } else {
        sample(rng, n, EXHAUSTIVE_LIMIT).into_vec()
    };
    let hs = S::of_f64(h);
    let mut worst = 0.0f64;
    let mut probe = state.clone();
    for &i in &coords {
        let orig = state.params[i];
        probe.params[i] = orig + hs;
        let (lp, _) = loss_and_grad(spec, &probe, batch, kind)?;
        probe.params[i] = orig - hs;
        let (lm, _) = loss_and_grad(spec, &probe, batch, kind)?;
        probe.params[i] = orig;
        let fd = (lp.into_f64() - lm.into_f64()) / (2.0 * h);
        let ga = grad[i].into_f64();
        let diff = (ga - fd).abs();
        // near-zero gradients are compared absolutely
        let err = if diff < 1e-8 {
            0.0
        } else {
            diff / ga.abs().max(fd.abs())
        };
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

/// True when any hidden pre-activation sits within `margin` of a relu kink
/// or any Gaussian-head log-std within `margin` of its clamp bounds.
/// Finite differences straddle the non-smooth point there, so such draws
/// should be resampled rather than counted as failures.
pub fn has_kink_risk<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    inputs: &Mat<S>,
    margin: f64,
) -> Result<bool> {
    let trace = forward_trace(spec, state, inputs)?;
    if matches!(spec.hidden, super::Activation::Relu) {
        // acts[l] for l >= 1 hold relu outputs; an output within margin of
        // zero means the pre-activation was near the kink (or exactly
        // clipped from just below it, which FD also straddles).
        for a in &trace.acts[1..] {
            for v in a.as_slice() {
                if v.into_f64().abs() < margin {
                    return Ok(true);
                }
            }
        }
    }
    if spec.head == OutputHead::Gaussian {
        let d = spec.output_dim();
        for b in 0..trace.raw.rows() {
            for v in &trace.raw.row(b)[d..] {
                let v = v.into_f64();
                if (v - LOG_STD_MIN).abs() < margin || (v - LOG_STD_MAX).abs() < margin {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_loss_coordinate_has_zero_grad() {
        // output ignores the second input weight entirely when the input
        // coordinate is zero
        let spec = MlpSpec::new(vec![2, 1], Activation::Identity, OutputHead::Linear).unwrap();
        let mut state = MlpState::<f64>::zeros(&spec);
        state.params = vec![0.5, 0.9, 0.1];
        let inputs = Mat::from_row(&[1.0, 0.0]);
        let targets = Mat::from_row(&[2.0]);
        let (_, grad) = loss_and_grad(
            &spec,
            &state,
            &Batch {
                inputs: &inputs,
                targets: &targets,
            },
            &LossKind::Mse,
        )
        .unwrap();
        assert!(grad[1].abs() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = grad_check(
            &spec,
            &state,
            &Batch {
                inputs: &inputs,
                targets: &targets,
            },
            &LossKind::Mse,
            1e-5,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-6, "err {err}");
    }
}
