//! Feedforward-network substrate: forward pass, analytic gradients for the
//! loss suite, Adam updates and finite-difference verification.
//!
//! Networks are plain MLPs with a flat parameter vector. The parameter
//! layout is, per weight layer `l`, the row-major weight matrix
//! `W_l (out x in)` followed by the bias `b_l (out)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scalar::Scalar;

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;

pub use adam::{adam_update, AdamHyper};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, has_kink_risk};
pub use loss::{
    cvae_loss_and_grads, diag_gaussian_log_density, gaussian_kl_to_standard, gaussian_nll,
    loss_and_grad, Batch, CvaeRole, LossKind, NetRef,
};

/// Clamp bounds for Gaussian-head log standard deviations.
pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputHead {
    Linear,
    /// `bound * tanh(raw)`, keeping outputs inside `[-bound, bound]`.
    TanhScaled { bound: f64 },
    /// Mean and diagonal standard deviation of a Gaussian. Doubles the
    /// final layer width; the std half is `exp(clamp(raw, -10, 2))`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden: Activation,
    pub head: OutputHead,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, hidden: Activation, head: OutputHead) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Shape(
                "an MLP needs at least one weight layer (two sizes)".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        if let OutputHead::TanhScaled { bound } = head {
            if !(bound > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "tanh head bound must be positive, got {bound}"
                )));
            }
        }
        Ok(MlpSpec {
            layer_sizes,
            hidden,
            head,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    /// Semantic output width (the Gaussian head reports mean and std of
    /// this many coordinates).
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Width of the final linear layer (doubled for the Gaussian head).
    pub fn raw_output_dim(&self) -> usize {
        match self.head {
            OutputHead::Gaussian => 2 * self.output_dim(),
            _ => self.output_dim(),
        }
    }

    /// Layer widths including the raw output width.
    pub(crate) fn widths(&self) -> Vec<usize> {
        let mut w = self.layer_sizes.clone();
        let last = w.len() - 1;
        w[last] = self.raw_output_dim();
        w
    }

    pub fn param_count(&self) -> usize {
        let w = self.widths();
        w.windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    pub(crate) fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpState<S> {
    pub params: Vec<S>,
    pub adam_m: Vec<S>,
    pub adam_v: Vec<S>,
    pub step_count: u64,
}

impl<S: Scalar> MlpState<S> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let n = spec.param_count();
        MlpState {
            params: vec![S::zero(); n],
            adam_m: vec![S::zero(); n],
            adam_v: vec![S::zero(); n],
            step_count: 0,
        }
    }

    /// Glorot-uniform initialization; the final layer is scaled by
    /// `final_scale` (small values stabilize early targets for policy and
    /// value heads).
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R, final_scale: f64) -> Self {
        let widths = spec.widths();
        let mut params = Vec::with_capacity(spec.param_count());
        for l in 0..spec.n_layers() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l + 1 == spec.n_layers() {
                final_scale
            } else {
                1.0
            };
            for _ in 0..fan_in * fan_out {
                params.push(S::of_f64(rng.gen_range(-lim..lim) * scale));
            }
            for _ in 0..fan_out {
                params.push(S::zero());
            }
        }
        let n = params.len();
        MlpState {
            params,
            adam_m: vec![S::zero(); n],
            adam_v: vec![S::zero(); n],
            step_count: 0,
        }
    }
}

/// Cached activations from a forward pass, for the backward pass.
/// `acts[l]` is the input to weight layer `l`; `raw` is the pre-head
/// output of the final layer.
pub struct Trace<S> {
    pub acts: Vec<Mat<S>>,
    pub raw: Mat<S>,
}

/// Forward pass keeping the per-layer activations.
pub fn forward_trace<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    input: &Mat<S>,
) -> Result<Trace<S>> {
    if input.cols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "input width {} does not match spec input {}",
            input.cols(),
            spec.input_dim()
        )));
    }
    if state.params.len() != spec.param_count() {
        return Err(Error::Shape(format!(
            "state has {} params, spec wants {}",
            state.params.len(),
            spec.param_count()
        )));
    }
    let widths = spec.widths();
    let n_layers = spec.n_layers();
    let batch = input.rows();
    let mut acts = Vec::with_capacity(n_layers);
    acts.push(input.clone());
    let mut offset = 0usize;
    let mut raw = Mat::zeros(0, 0);
    for l in 0..n_layers {
        let (w_in, w_out) = (widths[l], widths[l + 1]);
        let w = &state.params[offset..offset + w_in * w_out];
        let b = &state.params[offset + w_in * w_out..offset + w_in * w_out + w_out];
        offset += w_out * (w_in + 1);
        let x = &acts[l];
        let mut z = Mat::zeros(batch, w_out);
        for bi in 0..batch {
            let xr = x.row(bi);
            let zr = z.row_mut(bi);
            for (o, zo) in zr.iter_mut().enumerate() {
                let wrow = &w[o * w_in..(o + 1) * w_in];
                let mut acc = b[o];
                for (wi, xi) in wrow.iter().zip(xr) {
                    acc = acc + *wi * *xi;
                }
                *zo = acc;
            }
        }
        if l + 1 == n_layers {
            raw = z;
        } else {
            let mut a = z;
            for v in a.as_mut_slice() {
                *v = match spec.hidden {
                    Activation::Relu => {
                        if *v > S::zero() {
                            *v
                        } else {
                            S::zero()
                        }
                    }
                    Activation::Tanh => v.tanh(),
                    Activation::Identity => *v,
                };
            }
            acts.push(a);
        }
    }
    Ok(Trace { acts, raw })
}

/// Applies the output head to the raw final-layer output. The Gaussian
/// head returns `[mean | std]` with std in `[exp(-10), exp(2)]`.
pub fn head_apply<S: Scalar>(spec: &MlpSpec, raw: &Mat<S>) -> Mat<S> {
    match spec.head {
        OutputHead::Linear => raw.clone(),
        OutputHead::TanhScaled { bound } => {
            let b = S::of_f64(bound);
            let mut out = raw.clone();
            for v in out.as_mut_slice() {
                *v = b * v.tanh();
            }
            out
        }
        OutputHead::Gaussian => {
            let d = spec.output_dim();
            let mut out = raw.clone();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                for v in &mut row[d..] {
                    *v = clamp_log_std(*v).exp();
                }
            }
            out
        }
    }
}

#[inline]
pub(crate) fn clamp_log_std<S: Scalar>(v: S) -> S {
    let lo = S::of_f64(LOG_STD_MIN);
    let hi = S::of_f64(LOG_STD_MAX);
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Plain forward pass. Deterministic; a Gaussian head yields
/// `[mean | std]`.
pub fn forward<S: Scalar>(spec: &MlpSpec, state: &MlpState<S>, input: &Mat<S>) -> Result<Mat<S>> {
    let trace = forward_trace(spec, state, input)?;
    Ok(head_apply(spec, &trace.raw))
}

/// Forward pass on a single input vector.
pub fn forward_single<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    input: &[S],
) -> Result<Vec<S>> {
    let out = forward(spec, state, &Mat::from_row(input))?;
    Ok(out.row(0).to_vec())
}

/// Backpropagates `d_raw` (the loss gradient at the raw output) through
/// the network, returning the flat parameter gradient and the gradient
/// with respect to the input batch.
pub fn backward<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    trace: &Trace<S>,
    d_raw: &Mat<S>,
) -> (Vec<S>, Mat<S>) {
    let widths = spec.widths();
    let n_layers = spec.n_layers();
    let batch = d_raw.rows();
    let mut grad = vec![S::zero(); state.params.len()];
    // offsets of each layer's parameter block
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0usize;
    for l in 0..n_layers {
        offsets.push(off);
        off += widths[l + 1] * (widths[l] + 1);
    }
    let mut delta = d_raw.clone();
    let mut d_input = Mat::zeros(0, 0);
    for l in (0..n_layers).rev() {
        let (w_in, w_out) = (widths[l], widths[l + 1]);
        let w = &state.params[offsets[l]..offsets[l] + w_in * w_out];
        let x = &trace.acts[l];
        {
            let gw = &mut grad[offsets[l]..offsets[l] + w_out * (w_in + 1)];
            for bi in 0..batch {
                let dr = delta.row(bi);
                let xr = x.row(bi);
                for o in 0..w_out {
                    let d = dr[o];
                    if d == S::zero() {
                        continue;
                    }
                    let gw_row = &mut gw[o * w_in..(o + 1) * w_in];
                    for (g, xi) in gw_row.iter_mut().zip(xr) {
                        *g += d * *xi;
                    }
                }
                for o in 0..w_out {
                    gw[w_in * w_out + o] += dr[o];
                }
            }
        }
        let mut d_prev = Mat::zeros(batch, w_in);
        for bi in 0..batch {
            let dr = delta.row(bi);
            let dp = d_prev.row_mut(bi);
            for o in 0..w_out {
                let d = dr[o];
                if d == S::zero() {
                    continue;
                }
                let wrow = &w[o * w_in..(o + 1) * w_in];
                for (p, wi) in dp.iter_mut().zip(wrow) {
                    *p += d * *wi;
                }
            }
        }
        if l > 0 {
            // chain through the hidden activation that produced acts[l]
            let a = &trace.acts[l];
            for bi in 0..batch {
                let dp = d_prev.row_mut(bi);
                let ar = a.row(bi);
                for (pv, av) in dp.iter_mut().zip(ar) {
                    let deriv = match spec.hidden {
                        Activation::Relu => {
                            if *av > S::zero() {
                                S::one()
                            } else {
                                S::zero()
                            }
                        }
                        Activation::Tanh => S::one() - *av * *av,
                        Activation::Identity => S::one(),
                    };
                    *pv = *pv * deriv;
                }
            }
            delta = d_prev;
        } else {
            d_input = d_prev;
        }
    }
    (grad, d_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_linear_head_outputs_zero() {
        let spec = MlpSpec::new(vec![3, 4, 2], Activation::Relu, OutputHead::Linear).unwrap();
        let state = MlpState::<f64>::zeros(&spec);
        let out = forward(&spec, &state, &Mat::from_row(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Identity, OutputHead::Linear).unwrap();
        let mut state = MlpState::<f64>::zeros(&spec);
        // W = I, b = 0
        state.params[0] = 1.0;
        state.params[3] = 1.0;
        let out = forward(&spec, &state, &Mat::from_row(&[0.25, -4.0])).unwrap();
        assert_eq!(out.row(0), &[0.25, -4.0]);
    }

    #[test]
    fn hand_evaluated_forward_matches() {
        // 2-3-1 net, tanh hidden, hand-set weights.
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Tanh, OutputHead::Linear).unwrap();
        let mut state = MlpState::<f64>::zeros(&spec);
        let w1 = [[0.1, -0.2], [0.3, 0.4], [-0.5, 0.6]];
        let b1 = [0.01, -0.02, 0.03];
        let w2 = [0.7, -0.8, 0.9];
        let b2 = 0.05;
        let mut k = 0;
        for row in &w1 {
            for v in row {
                state.params[k] = *v;
                k += 1;
            }
        }
        for v in &b1 {
            state.params[k] = *v;
            k += 1;
        }
        for v in &w2 {
            state.params[k] = *v;
            k += 1;
        }
        state.params[k] = b2;

        let x = [0.4, -0.9];
        let h: Vec<f64> = (0..3)
            .map(|i| (w1[i][0] * x[0] + w1[i][1] * x[1] + b1[i]).tanh())
            .collect();
        let expect = w2[0] * h[0] + w2[1] * h[1] + w2[2] * h[2] + b2;
        let out = forward(&spec, &state, &Mat::from_row(&x)).unwrap();
        assert!((out.get(0, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn gaussian_head_std_is_clamped() {
        let spec = MlpSpec::new(vec![1, 2], Activation::Identity, OutputHead::Gaussian).unwrap();
        let mut state = MlpState::<f64>::zeros(&spec);
        // raw output = W x + b with huge biases on the log-std halves
        // widths: [1, 4]; params: W (4x1) then b (4)
        state.params[4 + 2] = 100.0; // log-std of dim 0
        state.params[4 + 3] = -100.0; // log-std of dim 1
        let out = forward(&spec, &state, &Mat::from_row(&[0.0])).unwrap();
        assert!((out.get(0, 2) - LOG_STD_MAX.exp()).abs() < 1e-12);
        assert!((out.get(0, 3) - LOG_STD_MIN.exp()).abs() < 1e-15);
    }

    #[test]
    fn forward_is_pure() {
        let spec = MlpSpec::new(vec![3, 8, 2], Activation::Relu, OutputHead::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let state = MlpState::<f64>::init(&spec, &mut rng, 1.0);
        let x = Mat::from_row(&[0.3, -0.7, 1.1]);
        let a = forward(&spec, &state, &x).unwrap();
        let b = forward(&spec, &state, &x).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn f32_instantiation_works() {
        let spec = MlpSpec::new(vec![2, 4, 1], Activation::Tanh, OutputHead::Linear).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = MlpState::<f32>::init(&spec, &mut rng, 1.0);
        let out = forward(&spec, &state, &Mat::from_row(&[0.5f32, -0.5])).unwrap();
        assert!(out.get(0, 0).is_finite());
    }
}
