//! The loss suite and its analytic gradients.
//!
//! Every loss is a deterministic function of the trainable network's
//! parameters given the batch (noise for generative losses is drawn by the
//! caller and passed in), so each one can be checked against central
//! finite differences.

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::scalar::Scalar;

use super::{
    backward, clamp_log_std, forward_trace, head_apply, MlpSpec, MlpState, OutputHead,
    LOG_STD_MAX, LOG_STD_MIN,
};

/// Borrowed companion network for losses that evaluate a second, frozen
/// net (the WGAN critic or the other half of a CVAE).
#[derive(Clone, Copy)]
pub struct NetRef<'a, S> {
    pub spec: &'a MlpSpec,
    pub state: &'a MlpState<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvaeRole {
    Encoder,
    Decoder,
}

/// Input/target batch. Loss kinds that need no regression target accept an
/// empty `targets` matrix.
pub struct Batch<'a, S> {
    pub inputs: &'a Mat<S>,
    pub targets: &'a Mat<S>,
}

/// Which loss to evaluate. The batch-mean convention is
/// `sum over output dims, mean over the batch`, with no 1/2 factor.
pub enum LossKind<'a, S: Scalar> {
    /// `mean_b ||f(x_b) - y_b||^2`
    Mse,
    /// Behavioural-cloning regression; same form as `Mse` with the policy
    /// head applied.
    BcMse,
    /// Per-sample nonnegative weights on the BC objective.
    WeightedBcMse { weights: &'a [S] },
    /// Gaussian-head negative log-likelihood without additive constants:
    /// `mean_b [ (mu-y)^T Sigma^{-1} (mu-y) + log|Sigma| ]`.
    GaussianNll,
    /// Squared Bellman error against precomputed frozen targets
    /// (`targets` holds `r + gamma * V_target(s') * (1 - terminal)`).
    BellmanMse,
    /// WGAN generator loss `mean_b D(x_b, G(z_b, x_b))` with a frozen
    /// critic. The trainable net is the generator; `noise` is one z row
    /// per sample.
    WganGen {
        critic: NetRef<'a, S>,
        noise: &'a Mat<S>,
    },
    /// WGAN critic loss `mean_b D(real_b) - mean_b D(fake_b)`. The
    /// trainable net is the critic; `fakes` holds pre-generated rows.
    WganDisc { fakes: &'a Mat<S> },
    /// Conditional-VAE bound: reconstruction plus `beta` times the KL of
    /// the encoder posterior from the standard normal prior. `inputs` is
    /// the conditioning block, `targets` the reconstruction target,
    /// `noise` the reparameterization draws. `role` names which half the
    /// trainable net is; `partner` is the other half.
    CvaeElbo {
        partner: NetRef<'a, S>,
        role: CvaeRole,
        noise: &'a Mat<S>,
        beta: f64,
    },
}

impl<S: Scalar> LossKind<'_, S> {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::BcMse => "bc_mse",
            LossKind::WeightedBcMse { .. } => "weighted_bc_mse",
            LossKind::GaussianNll => "gaussian_nll",
            LossKind::BellmanMse => "bellman_mse",
            LossKind::WganGen { .. } => "wgan_gen",
            LossKind::WganDisc { .. } => "wgan_disc",
            LossKind::CvaeElbo { .. } => "cvae_elbo",
        }
    }
}

/// Loss value (batch mean) and flat gradient with respect to the passed
/// state's parameters.
pub fn loss_and_grad<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    batch: &Batch<'_, S>,
    kind: &LossKind<'_, S>,
) -> Result<(S, Vec<S>)> {
    match kind {
        LossKind::Mse | LossKind::BcMse | LossKind::BellmanMse => {
            regression_loss(spec, state, batch, None)
        }
        LossKind::WeightedBcMse { weights } => regression_loss(spec, state, batch, Some(weights)),
        LossKind::GaussianNll => gaussian_nll_loss(spec, state, batch),
        LossKind::WganGen { critic, noise } => wgan_gen_loss(spec, state, batch, *critic, noise),
        LossKind::WganDisc { fakes } => wgan_disc_loss(spec, state, batch, fakes),
        LossKind::CvaeElbo {
            partner,
            role,
            noise,
            beta,
        } => {
            let (enc, dec) = match role {
                CvaeRole::Encoder => (NetRef { spec, state }, *partner),
                CvaeRole::Decoder => (*partner, NetRef { spec, state }),
            };
            let (loss, enc_grad, dec_grad) = cvae_elbo_loss(enc, dec, batch, noise, *beta)?;
            let grad = match role {
                CvaeRole::Encoder => enc_grad,
                CvaeRole::Decoder => dec_grad,
            };
            Ok((loss, grad))
        }
    }
}

/// CVAE bound with gradients for both halves in one pass.
pub fn cvae_loss_and_grads<S: Scalar>(
    encoder: NetRef<'_, S>,
    decoder: NetRef<'_, S>,
    batch: &Batch<'_, S>,
    noise: &Mat<S>,
    beta: f64,
) -> Result<(S, Vec<S>, Vec<S>)> {
    cvae_elbo_loss(encoder, decoder, batch, noise, beta)
}

fn check_rows<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!(
            "batch row mismatch: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

/// Chains a gradient at the public output back to the raw output.
fn head_chain<S: Scalar>(spec: &MlpSpec, out: &Mat<S>, d_out: &Mat<S>) -> Result<Mat<S>> {
    match spec.head {
        OutputHead::Linear => Ok(d_out.clone()),
        OutputHead::TanhScaled { bound } => {
            let b = S::of_f64(bound);
            let mut d_raw = d_out.clone();
            for i in 0..d_raw.rows() {
                let o = out.row(i);
                let dr = d_raw.row_mut(i);
                for (d, ov) in dr.iter_mut().zip(o) {
                    // d tanh-scaled / d raw = bound - out^2 / bound
                    *d = *d * (b - *ov * *ov / b);
                }
            }
            Ok(d_raw)
        }
        OutputHead::Gaussian => Err(Error::Shape(
            "regression losses need a linear or tanh-scaled head".into(),
        )),
    }
}

fn regression_loss<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    batch: &Batch<'_, S>,
    weights: Option<&[S]>,
) -> Result<(S, Vec<S>)> {
    check_rows(batch.inputs, batch.targets)?;
    if batch.targets.cols() != spec.output_dim() {
        return Err(Error::Shape(format!(
            "target width {} vs output {}",
            batch.targets.cols(),
            spec.output_dim()
        )));
    }
    if let Some(w) = weights {
        if w.len() != batch.inputs.rows() {
            return Err(Error::Shape("one weight per sample required".into()));
        }
    }
    let n = batch.inputs.rows();
    let inv_n = S::one() / S::of_f64(n as f64);
    let trace = forward_trace(spec, state, batch.inputs)?;
    let out = head_apply(spec, &trace.raw);
    let mut loss = S::zero();
    let mut d_out = Mat::zeros(n, out.cols());
    let two = S::of_f64(2.0);
    for b in 0..n {
        let w = weights.map_or(S::one(), |w| w[b]);
        let o = out.row(b);
        let y = batch.targets.row(b);
        let d = d_out.row_mut(b);
        for j in 0..o.len() {
            let e = o[j] - y[j];
            loss = loss + w * e * e * inv_n;
            d[j] = two * w * e * inv_n;
        }
    }
    let d_raw = head_chain(spec, &out, &d_out)?;
    let (grad, _) = backward(spec, state, &trace, &d_raw);
    Ok((loss, grad))
}

fn gaussian_nll_loss<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    batch: &Batch<'_, S>,
) -> Result<(S, Vec<S>)> {
    check_rows(batch.inputs, batch.targets)?;
    if spec.head != OutputHead::Gaussian {
        return Err(Error::Shape("gaussian_nll needs a gaussian head".into()));
    }
    let d = spec.output_dim();
    if batch.targets.cols() != d {
        return Err(Error::Shape(format!(
            "target width {} vs gaussian dim {}",
            batch.targets.cols(),
            d
        )));
    }
    let n = batch.inputs.rows();
    let inv_n = S::one() / S::of_f64(n as f64);
    let two = S::of_f64(2.0);
    let lo = S::of_f64(LOG_STD_MIN);
    let hi = S::of_f64(LOG_STD_MAX);
    let trace = forward_trace(spec, state, batch.inputs)?;
    let mut loss = S::zero();
    let mut d_raw = Mat::zeros(n, 2 * d);
    for b in 0..n {
        let raw = trace.raw.row(b);
        let y = batch.targets.row(b);
        let dr = d_raw.row_mut(b);
        for j in 0..d {
            let mu = raw[j];
            let s_raw = raw[d + j];
            let s_bar = clamp_log_std(s_raw);
            let var = (two * s_bar).exp();
            let e = mu - y[j];
            loss = loss + (e * e / var + two * s_bar) * inv_n;
            dr[j] = two * e / var * inv_n;
            let in_range = s_raw > lo && s_raw < hi;
            dr[d + j] = if in_range {
                (two - two * e * e / var) * inv_n
            } else {
                S::zero()
            };
        }
    }
    let (grad, _) = backward(spec, state, &trace, &d_raw);
    Ok((loss, grad))
}

fn wgan_gen_loss<S: Scalar>(
    gen_spec: &MlpSpec,
    gen_state: &MlpState<S>,
    batch: &Batch<'_, S>,
    critic: NetRef<'_, S>,
    noise: &Mat<S>,
) -> Result<(S, Vec<S>)> {
    check_rows(batch.inputs, noise)?;
    let n = batch.inputs.rows();
    let inv_n = S::one() / S::of_f64(n as f64);
    // generator consumes [z | cond]
    let g_in = noise.hcat(batch.inputs);
    let g_trace = forward_trace(gen_spec, gen_state, &g_in)?;
    let g_out = head_apply(gen_spec, &g_trace.raw);
    // critic consumes [cond | generated]
    let d_in = batch.inputs.hcat(&g_out);
    let d_trace = forward_trace(critic.spec, critic.state, &d_in)?;
    let d_out = head_apply(critic.spec, &d_trace.raw);
    if d_out.cols() != 1 {
        return Err(Error::Shape("critic must output a single score".into()));
    }
    let mut loss = S::zero();
    for b in 0..n {
        loss = loss + d_out.get(b, 0) * inv_n;
    }
    let mut d_score = Mat::zeros(n, 1);
    for b in 0..n {
        d_score.set(b, 0, inv_n);
    }
    let (_, d_critic_in) = backward(critic.spec, critic.state, &d_trace, &d_score);
    // slice off the gradient w.r.t. the generated columns
    let cond = batch.inputs.cols();
    let d_gen_out = d_critic_in.col_range(cond, cond + g_out.cols());
    let d_g_raw = head_chain(gen_spec, &g_out, &d_gen_out)?;
    let (grad, _) = backward(gen_spec, gen_state, &g_trace, &d_g_raw);
    Ok((loss, grad))
}

fn wgan_disc_loss<S: Scalar>(
    spec: &MlpSpec,
    state: &MlpState<S>,
    batch: &Batch<'_, S>,
    fakes: &Mat<S>,
) -> Result<(S, Vec<S>)> {
    if batch.inputs.rows() == 0 || fakes.rows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let real_trace = forward_trace(spec, state, batch.inputs)?;
    let fake_trace = forward_trace(spec, state, fakes)?;
    let real_out = head_apply(spec, &real_trace.raw);
    let fake_out = head_apply(spec, &fake_trace.raw);
    if real_out.cols() != 1 {
        return Err(Error::Shape("critic must output a single score".into()));
    }
    let nr = S::of_f64(batch.inputs.rows() as f64);
    let nf = S::of_f64(fakes.rows() as f64);
    let mut loss = S::zero();
    for b in 0..batch.inputs.rows() {
        loss = loss + real_out.get(b, 0) / nr;
    }
    for b in 0..fakes.rows() {
        loss = loss - fake_out.get(b, 0) / nf;
    }
    let mut d_real = Mat::zeros(batch.inputs.rows(), 1);
    for b in 0..batch.inputs.rows() {
        d_real.set(b, 0, S::one() / nr);
    }
    let mut d_fake = Mat::zeros(fakes.rows(), 1);
    for b in 0..fakes.rows() {
        d_fake.set(b, 0, -S::one() / nf);
    }
    let (g_real, _) = backward(spec, state, &real_trace, &d_real);
    let (g_fake, _) = backward(spec, state, &fake_trace, &d_fake);
    let grad = g_real
        .into_iter()
        .zip(g_fake)
        .map(|(a, b)| a + b)
        .collect();
    Ok((loss, grad))
}

fn cvae_elbo_loss<S: Scalar>(
    encoder: NetRef<'_, S>,
    decoder: NetRef<'_, S>,
    batch: &Batch<'_, S>,
    noise: &Mat<S>,
    beta: f64,
) -> Result<(S, Vec<S>, Vec<S>)> {
    check_rows(batch.inputs, batch.targets)?;
    check_rows(batch.inputs, noise)?;
    let (enc_spec, enc_state) = (encoder.spec, encoder.state);
    let (dec_spec, dec_state) = (decoder.spec, decoder.state);
    if enc_spec.head != OutputHead::Gaussian {
        return Err(Error::Shape("cvae encoder needs a gaussian head".into()));
    }
    let latent = enc_spec.output_dim();
    if noise.cols() != latent {
        return Err(Error::Shape(format!(
            "noise width {} vs latent dim {}",
            noise.cols(),
            latent
        )));
    }
    let n = batch.inputs.rows();
    let inv_n = S::one() / S::of_f64(n as f64);
    let two = S::of_f64(2.0);
    let half = S::of_f64(0.5);
    let beta_s = S::of_f64(beta);
    let lo = S::of_f64(LOG_STD_MIN);
    let hi = S::of_f64(LOG_STD_MAX);

    // encoder: [cond | target] -> (mu_q, sigma_q)
    let enc_in = batch.inputs.hcat(batch.targets);
    let enc_trace = forward_trace(enc_spec, enc_state, &enc_in)?;
    let mut mu_q = Mat::zeros(n, latent);
    let mut sig_q = Mat::zeros(n, latent);
    let mut in_range = vec![true; n * latent];
    for b in 0..n {
        let raw = enc_trace.raw.row(b);
        for j in 0..latent {
            mu_q.set(b, j, raw[j]);
            let s_raw = raw[latent + j];
            in_range[b * latent + j] = s_raw > lo && s_raw < hi;
            sig_q.set(b, j, clamp_log_std(s_raw).exp());
        }
    }
    // reparameterized latent z = mu + sigma * eps
    let mut z = Mat::zeros(n, latent);
    for b in 0..n {
        for j in 0..latent {
            z.set(b, j, mu_q.get(b, j) + sig_q.get(b, j) * noise.get(b, j));
        }
    }
    // decoder: [cond | z] -> reconstruction
    let dec_in = batch.inputs.hcat(&z);
    let dec_trace = forward_trace(dec_spec, dec_state, &dec_in)?;
    let dec_out = head_apply(dec_spec, &dec_trace.raw);
    if dec_out.cols() != batch.targets.cols() {
        return Err(Error::Shape(format!(
            "decoder output {} vs target {}",
            dec_out.cols(),
            batch.targets.cols()
        )));
    }

    // loss = recon + beta * KL(q || N(0, I))
    let mut loss = S::zero();
    let mut d_dec_out = Mat::zeros(n, dec_out.cols());
    for b in 0..n {
        let o = dec_out.row(b);
        let y = batch.targets.row(b);
        let dr = d_dec_out.row_mut(b);
        for j in 0..o.len() {
            let e = o[j] - y[j];
            loss = loss + e * e * inv_n;
            dr[j] = two * e * inv_n;
        }
        for j in 0..latent {
            let mu = mu_q.get(b, j);
            let sig = sig_q.get(b, j);
            let kl = half * (mu * mu + sig * sig - S::one() - two * sig.ln());
            loss = loss + beta_s * kl * inv_n;
        }
    }

    let d_dec_raw = head_chain(dec_spec, &dec_out, &d_dec_out)?;
    let (grad_dec, d_dec_in) = backward(dec_spec, dec_state, &dec_trace, &d_dec_raw);

    // chain into the encoder: dz from the decoder input gradient, plus the
    // KL terms acting directly on (mu, sigma)
    let cond = batch.inputs.cols();
    let d_z = d_dec_in.col_range(cond, cond + latent);
    let mut d_enc_raw = Mat::zeros(n, 2 * latent);
    for b in 0..n {
        for j in 0..latent {
            let mu = mu_q.get(b, j);
            let sig = sig_q.get(b, j);
            let dz = d_z.get(b, j);
            let d_mu = dz + beta_s * inv_n * mu;
            // d/d s_bar of [z path + beta/2 (sigma^2 - 2 s_bar)]
            let d_sbar = dz * sig * noise.get(b, j) + beta_s * inv_n * (sig * sig - S::one());
            d_enc_raw.set(b, j, d_mu);
            let d = if in_range[b * latent + j] {
                d_sbar
            } else {
                S::zero()
            };
            d_enc_raw.set(b, latent + j, d);
        }
    }
    let (grad_enc, _) = backward(enc_spec, enc_state, &enc_trace, &d_enc_raw);
    Ok((loss, grad_enc, grad_dec))
}

/// Per-sample Gaussian negative log-likelihood without additive constants:
/// `(mu - target)^T Sigma^{-1} (mu - target) + log |Sigma|` for a diagonal
/// covariance given as per-coordinate variances.
pub fn gaussian_nll<S: Scalar>(mean: &[S], var_diag: &[S], target: &[S]) -> Result<S> {
    if mean.len() != var_diag.len() || mean.len() != target.len() {
        return Err(Error::Shape("gaussian_nll length mismatch".into()));
    }
    let mut acc = S::zero();
    for ((m, v), t) in mean.iter().zip(var_diag).zip(target) {
        if !(*v > S::zero()) {
            return Err(Error::InvalidArgument(format!(
                "nonpositive variance {v}"
            )));
        }
        let e = *m - *t;
        acc = acc + e * e / *v + v.ln();
    }
    Ok(acc)
}

/// Exact log density of a diagonal Gaussian, `std` given per coordinate.
pub fn diag_gaussian_log_density<S: Scalar>(mean: &[S], std: &[S], x: &[S]) -> S {
    let half = S::of_f64(0.5);
    let ln_2pi = S::of_f64((2.0 * std::f64::consts::PI).ln());
    let mut acc = S::zero();
    for ((m, s), v) in mean.iter().zip(std).zip(x) {
        let e = (*v - *m) / *s;
        acc = acc - half * (e * e + ln_2pi) - s.ln();
    }
    acc
}

/// Closed-form KL of a diagonal Gaussian from the standard normal:
/// `1/2 sum (mu^2 + sigma^2 - 1 - ln sigma^2)`.
pub fn gaussian_kl_to_standard<S: Scalar>(mean: &[S], std: &[S]) -> S {
    let half = S::of_f64(0.5);
    let two = S::of_f64(2.0);
    let mut acc = S::zero();
    for (m, s) in mean.iter().zip(std) {
        acc = acc + half * (*m * *m + *s * *s - S::one() - two * s.ln());
    }
    acc
}
