//! Bias-corrected Adam with optional decoupled L2 regularisation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::MlpState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled L2 coefficient; 0 disables it.
    pub l2: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0,
        }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.l2 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad Adam hyper {self:?}")))
        }
    }
}

/// One Adam step in place. With `lr == 0` the parameters are unchanged
/// (moments still advance).
pub fn adam_update<S: Scalar>(state: &mut MlpState<S>, grad: &[S], hyper: &AdamHyper) -> Result<()> {
    if grad.len() != state.params.len() {
        return Err(Error::Shape(format!(
            "grad length {} vs params {}",
            grad.len(),
            state.params.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged("non-finite gradient".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let b1 = S::of_f64(hyper.beta1);
    let b2 = S::of_f64(hyper.beta2);
    let lr = S::of_f64(hyper.lr);
    let eps = S::of_f64(hyper.eps);
    let one = S::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let decay = S::of_f64(1.0 - hyper.lr * hyper.l2);
    for i in 0..state.params.len() {
        let g = grad[i];
        state.adam_m[i] = b1 * state.adam_m[i] + (one - b1) * g;
        state.adam_v[i] = b2 * state.adam_v[i] + (one - b2) * g * g;
        let m_hat = state.adam_m[i] / bc1;
        let v_hat = state.adam_v[i] / bc2;
        if hyper.l2 > 0.0 {
            state.params[i] *= decay;
        }
        state.params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec, OutputHead};

    fn small_state() -> MlpState<f64> {
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity, OutputHead::Linear).unwrap();
        let mut s = MlpState::zeros(&spec);
        s.params = vec![0.7, -0.3];
        s.adam_m = vec![0.0; 2];
        s.adam_v = vec![0.0; 2];
        s
    }

    #[test]
    fn zero_grad_no_l2_is_identity() {
        let mut s = small_state();
        let before = s.params.clone();
        adam_update(&mut s, &[0.0, 0.0], &AdamHyper::with_lr(0.01)).unwrap();
        assert_eq!(s.params, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_lr_is_identity_on_params() {
        let mut s = small_state();
        let before = s.params.clone();
        let hyper = AdamHyper {
            lr: 0.0,
            l2: 1e-4,
            ..Default::default()
        };
        adam_update(&mut s, &[1.0, -2.0], &hyper).unwrap();
        assert_eq!(s.params, before);
    }

    #[test]
    fn first_step_matches_textbook_formula() {
        let mut s = small_state();
        let hyper = AdamHyper {
            lr: 0.05,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            l2: 0.0,
        };
        let g = [0.3f64, -1.7];
        adam_update(&mut s, &g, &hyper).unwrap();
        // bias-corrected first step: m_hat = g, v_hat = g^2
        for (i, gi) in g.iter().enumerate() {
            let expect = [0.7, -0.3][i] - hyper.lr * gi / (gi.abs() + hyper.eps);
            assert!((s.params[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // minimize (x - 3)^2 from x = 0 in 100 steps at lr 0.1
        let mut s = small_state();
        s.params = vec![0.0, 0.0];
        let hyper = AdamHyper {
            lr: 0.1,
            ..Default::default()
        };
        for _ in 0..100 {
            let x = s.params[0];
            let g = vec![2.0 * (x - 3.0), 0.0];
            adam_update(&mut s, &g, &hyper).unwrap();
        }
        assert!((s.params[0] - 3.0).abs() < 0.1, "got {}", s.params[0]);
        // untouched coordinate stays put
        assert_eq!(s.params[1], 0.0);
    }
}
