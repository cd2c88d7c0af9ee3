//! Inverse dynamics `p(a | s, s')` as a conditional VAE. The encoder maps
//! `(s, a, s')` to a latent Gaussian; the decoder maps `(s, s', z)` to an
//! action through the bounded policy head. Actions are generated by
//! decoding at the prior mean (the mode proxy) or at a sampled latent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    adam_update, cvae_loss_and_grads, forward, AdamHyper, Activation, Batch, MlpSpec, MlpState,
    NetRef, OutputHead,
};
use crate::scalar::Scalar;

use super::{derive_seed, epoch_batches, gather_rows, standard_normal_mat, TrainReport, ZMode};

#[derive(Debug, Clone)]
pub struct CvaeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Weight on the KL term of the bound.
    pub beta: f64,
    /// Defaults to twice the action dimension when absent.
    pub latent_dim: Option<usize>,
    pub action_bound: f64,
    /// Linear learning-rate anneal; zero keeps the rate constant.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        CvaeConfig {
            hidden: vec![64, 64],
            epochs: 40,
            batch_size: 100,
            adam: AdamHyper::with_lr(1e-4),
            beta: 0.5,
            latent_dim: None,
            action_bound: 1.0,
            lr_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseModel<S> {
    pub enc_spec: MlpSpec,
    pub encoder: MlpState<S>,
    pub dec_spec: MlpSpec,
    pub decoder: MlpState<S>,
    pub latent_dim: usize,
    pub action_bound: f64,
}

impl<S: Scalar> InverseModel<S> {
    /// Trains the CVAE on every `(s, a, s')` triple in the dataset by
    /// maximising the variational bound (reconstruction plus beta-weighted
    /// KL from the standard-normal prior).
    pub fn train(dataset: &Dataset<S>, cfg: &CvaeConfig) -> Result<(Self, TrainReport)> {
        let (ds, da) = dataset.dims();
        let latent = cfg.latent_dim.unwrap_or(2 * da);
        let n = dataset.transition_count();
        if n == 0 {
            return Err(Error::DatasetTooSmall("no transitions".into()));
        }
        let mut cond = Mat::zeros(n, 2 * ds);
        let mut actions = Mat::zeros(n, da);
        for (i, (_, _, t)) in dataset.iter_transitions().enumerate() {
            cond.row_mut(i)[..ds].copy_from_slice(&t.state);
            cond.row_mut(i)[ds..].copy_from_slice(&t.next_state);
            actions.row_mut(i).copy_from_slice(&t.action);
        }

        let mut enc_sizes = vec![2 * ds + da];
        enc_sizes.extend_from_slice(&cfg.hidden);
        enc_sizes.push(latent);
        let enc_spec = MlpSpec::new(enc_sizes, Activation::Relu, OutputHead::Gaussian)?;
        let mut dec_sizes = vec![2 * ds + latent];
        dec_sizes.extend_from_slice(&cfg.hidden);
        dec_sizes.push(da);
        let dec_spec = MlpSpec::new(
            dec_sizes,
            Activation::Relu,
            OutputHead::TanhScaled {
                bound: cfg.action_bound,
            },
        )?;

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xcafe));
        let mut encoder = MlpState::init(&enc_spec, &mut rng, 1.0);
        let mut decoder = MlpState::init(&dec_spec, &mut rng, 1.0);
        let mut report = TrainReport::default();
        let schedule = super::lr_schedule(&cfg.adam, cfg.lr_decay, cfg.epochs);
        for epoch in 0..cfg.epochs {
            let adam = schedule(epoch);
            let mut epoch_loss = 0.0;
            let mut batches = 0usize;
            for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
                let bc = gather_rows(&cond, &batch);
                let ba = gather_rows(&actions, &batch);
                let eps = standard_normal_mat(batch.len(), latent, &mut rng);
                let (loss, enc_grad, dec_grad) = cvae_loss_and_grads(
                    NetRef {
                        spec: &enc_spec,
                        state: &encoder,
                    },
                    NetRef {
                        spec: &dec_spec,
                        state: &decoder,
                    },
                    &Batch {
                        inputs: &bc,
                        targets: &ba,
                    },
                    &eps,
                    cfg.beta,
                )?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged("CVAE loss went non-finite".into()));
                }
                adam_update(&mut encoder, &enc_grad, &adam)?;
                adam_update(&mut decoder, &dec_grad, &adam)?;
                epoch_loss += loss.into_f64();
                batches += 1;
            }
            report.epoch_losses.push(epoch_loss / batches.max(1) as f64);
        }
        Ok((
            InverseModel {
                enc_spec,
                encoder,
                dec_spec,
                decoder,
                latent_dim: latent,
                action_bound: cfg.action_bound,
            },
            report,
        ))
    }

    /// Decodes an action connecting `s` to `s_next`. Deterministic at the
    /// prior mean; the bounded head keeps it inside the action box.
    pub fn generate_action(
        &self,
        state: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<S>> {
        let z = z_mode.draw::<S>(self.latent_dim, rng);
        let mut input = Vec::with_capacity(state.len() + s_next.len() + z.len());
        input.extend_from_slice(state);
        input.extend_from_slice(s_next);
        input.extend_from_slice(&z);
        let out = forward(&self.dec_spec, &self.decoder, &Mat::from_row(&input))?;
        Ok(out.row(0).to_vec())
    }
}
