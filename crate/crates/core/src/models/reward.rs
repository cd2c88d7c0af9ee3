//! Reward models `r(s, a, s')` in four flavours: a plain regression MLP,
//! a Gaussian-head network trained by NLL, a conditional WGAN with weight
//! clipping, and a conditional VAE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    adam_update, cvae_loss_and_grads, forward, loss_and_grad, AdamHyper, Activation, Batch,
    LossKind, MlpSpec, MlpState, NetRef, OutputHead,
};
use crate::scalar::Scalar;

use super::{derive_seed, epoch_batches, gather_rows, standard_normal_mat, TrainReport, ZMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Wgan,
    Mlp,
    Gaussian,
    Vae,
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wgan" => Ok(RewardKind::Wgan),
            "mlp" => Ok(RewardKind::Mlp),
            "gaussian" => Ok(RewardKind::Gaussian),
            "vae" => Ok(RewardKind::Vae),
            other => Err(Error::UnknownKind(other.into())),
        }
    }
}

impl RewardKind {
    pub fn name(&self) -> &'static str {
        match self {
            RewardKind::Wgan => "wgan",
            RewardKind::Mlp => "mlp",
            RewardKind::Gaussian => "gaussian",
            RewardKind::Vae => "vae",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RewardConfig {
    pub kind: RewardKind,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Latent width of the generative kinds (2 for the WGAN).
    pub z_dim: usize,
    /// Critic updates per generator update.
    pub n_critic: usize,
    /// Critic weights are clamped to `[-clip, clip]` after each update.
    pub clip: f64,
    /// KL weight of the VAE kind.
    pub beta: f64,
    /// Linear learning-rate anneal: the final epoch runs at
    /// `lr * (1 - lr_decay)`. Zero keeps the rate constant.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            kind: RewardKind::Mlp,
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 256,
            adam: AdamHyper {
                lr: 1e-4,
                beta1: 0.5,
                beta2: 0.999,
                eps: 1e-8,
                l2: 1e-4,
            },
            z_dim: 2,
            n_critic: 5,
            clip: 0.01,
            beta: 0.5,
            lr_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
enum RewardNets<S> {
    Single {
        spec: MlpSpec,
        state: MlpState<S>,
    },
    GenCritic {
        gen_spec: MlpSpec,
        gen: MlpState<S>,
        critic_spec: MlpSpec,
        critic: MlpState<S>,
    },
    Cvae {
        enc_spec: MlpSpec,
        enc: MlpState<S>,
        dec_spec: MlpSpec,
        dec: MlpState<S>,
    },
}

#[derive(Debug, Clone)]
pub struct RewardModel<S> {
    pub kind: RewardKind,
    pub z_dim: usize,
    nets: RewardNets<S>,
}

fn cond_rows<S: Scalar>(dataset: &Dataset<S>) -> (Mat<S>, Mat<S>) {
    let (ds, da) = dataset.dims();
    let n = dataset.transition_count();
    let mut cond = Mat::zeros(n, ds + da + ds);
    let mut rewards = Mat::zeros(n, 1);
    for (i, (_, _, t)) in dataset.iter_transitions().enumerate() {
        let row = cond.row_mut(i);
        row[..ds].copy_from_slice(&t.state);
        row[ds..ds + da].copy_from_slice(&t.action);
        row[ds + da..].copy_from_slice(&t.next_state);
        rewards.set(i, 0, t.reward);
    }
    (cond, rewards)
}

fn mlp_spec(input: usize, hidden: &[usize], out: usize, head: OutputHead) -> Result<MlpSpec> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(out);
    MlpSpec::new(sizes, Activation::Relu, head)
}

impl<S: Scalar> RewardModel<S> {
    pub fn train(dataset: &Dataset<S>, cfg: &RewardConfig) -> Result<(Self, TrainReport)> {
        let n = dataset.transition_count();
        if n == 0 {
            return Err(Error::DatasetTooSmall("no transitions".into()));
        }
        let (cond, rewards) = cond_rows(dataset);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xbeef));
        let mut report = TrainReport::default();
        let schedule = super::lr_schedule(&cfg.adam, cfg.lr_decay, cfg.epochs);
        let nets = match cfg.kind {
            RewardKind::Mlp | RewardKind::Gaussian => {
                let head = if cfg.kind == RewardKind::Mlp {
                    OutputHead::Linear
                } else {
                    OutputHead::Gaussian
                };
                let spec = mlp_spec(cond.cols(), &cfg.hidden, 1, head)?;
                let mut state = MlpState::init(&spec, &mut rng, 1.0);
                for epoch in 0..cfg.epochs {
                    let adam = schedule(epoch);
                    let mut acc = 0.0;
                    let mut batches = 0usize;
                    for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
                        let bc = gather_rows(&cond, &batch);
                        let br = gather_rows(&rewards, &batch);
                        let kind = if cfg.kind == RewardKind::Mlp {
                            LossKind::Mse
                        } else {
                            LossKind::GaussianNll
                        };
                        let (loss, grad) = loss_and_grad(
                            &spec,
                            &state,
                            &Batch {
                                inputs: &bc,
                                targets: &br,
                            },
                            &kind,
                        )?;
                        if !loss.is_finite() {
                            return Err(Error::TrainingDiverged("reward loss non-finite".into()));
                        }
                        adam_update(&mut state, &grad, &adam)?;
                        acc += loss.into_f64();
                        batches += 1;
                    }
                    report.epoch_losses.push(acc / batches.max(1) as f64);
                }
                RewardNets::Single { spec, state }
            }
            RewardKind::Wgan => {
                let gen_spec = mlp_spec(
                    cfg.z_dim + cond.cols(),
                    &cfg.hidden,
                    1,
                    OutputHead::Linear,
                )?;
                let critic_spec =
                    mlp_spec(cond.cols() + 1, &cfg.hidden, 1, OutputHead::Linear)?;
                let mut gen = MlpState::init(&gen_spec, &mut rng, 1.0);
                let mut critic = MlpState::init(&critic_spec, &mut rng, 1.0);
                let clip = S::of_f64(cfg.clip);
                for epoch in 0..cfg.epochs {
                    let adam = schedule(epoch);
                    let mut acc = 0.0;
                    let mut batches = 0usize;
                    for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
                        let bc = gather_rows(&cond, &batch);
                        let br = gather_rows(&rewards, &batch);
                        // critic steps with weight clipping
                        for _ in 0..cfg.n_critic {
                            let z = standard_normal_mat(batch.len(), cfg.z_dim, &mut rng);
                            let g_in = z.hcat(&bc);
                            let fake_r = forward(&gen_spec, &gen, &g_in)?;
                            let real = bc.hcat(&br);
                            let fakes = bc.hcat(&fake_r);
                            let (loss, grad) = loss_and_grad(
                                &critic_spec,
                                &critic,
                                &Batch {
                                    inputs: &real,
                                    targets: &Mat::zeros(batch.len(), 0),
                                },
                                &LossKind::WganDisc { fakes: &fakes },
                            )?;
                            if !loss.is_finite() {
                                return Err(Error::TrainingDiverged(
                                    "critic loss non-finite".into(),
                                ));
                            }
                            adam_update(&mut critic, &grad, &adam)?;
                            for w in &mut critic.params {
                                if *w > clip {
                                    *w = clip;
                                } else if *w < -clip {
                                    *w = -clip;
                                }
                            }
                        }
                        // generator step
                        let z = standard_normal_mat(batch.len(), cfg.z_dim, &mut rng);
                        let (loss, grad) = loss_and_grad(
                            &gen_spec,
                            &gen,
                            &Batch {
                                inputs: &bc,
                                targets: &Mat::zeros(batch.len(), 0),
                            },
                            &LossKind::WganGen {
                                critic: NetRef {
                                    spec: &critic_spec,
                                    state: &critic,
                                },
                                noise: &z,
                            },
                        )?;
                        if !loss.is_finite() {
                            return Err(Error::TrainingDiverged(
                                "generator loss non-finite".into(),
                            ));
                        }
                        adam_update(&mut gen, &grad, &adam)?;
                        acc += loss.into_f64();
                        batches += 1;
                    }
                    report.epoch_losses.push(acc / batches.max(1) as f64);
                }
                RewardNets::GenCritic {
                    gen_spec,
                    gen,
                    critic_spec,
                    critic,
                }
            }
            RewardKind::Vae => {
                let enc_spec =
                    mlp_spec(cond.cols() + 1, &cfg.hidden, cfg.z_dim, OutputHead::Gaussian)?;
                let dec_spec = mlp_spec(
                    cond.cols() + cfg.z_dim,
                    &cfg.hidden,
                    1,
                    OutputHead::Linear,
                )?;
                let mut enc = MlpState::init(&enc_spec, &mut rng, 1.0);
                let mut dec = MlpState::init(&dec_spec, &mut rng, 1.0);
                for epoch in 0..cfg.epochs {
                    let adam = schedule(epoch);
                    let mut acc = 0.0;
                    let mut batches = 0usize;
                    for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
                        let bc = gather_rows(&cond, &batch);
                        let br = gather_rows(&rewards, &batch);
                        let eps = standard_normal_mat(batch.len(), cfg.z_dim, &mut rng);
                        let (loss, enc_grad, dec_grad) = cvae_loss_and_grads(
                            NetRef {
                                spec: &enc_spec,
                                state: &enc,
                            },
                            NetRef {
                                spec: &dec_spec,
                                state: &dec,
                            },
                            &Batch {
                                inputs: &bc,
                                targets: &br,
                            },
                            &eps,
                            cfg.beta,
                        )?;
                        if !loss.is_finite() {
                            return Err(Error::TrainingDiverged(
                                "reward VAE loss non-finite".into(),
                            ));
                        }
                        adam_update(&mut enc, &enc_grad, &adam)?;
                        adam_update(&mut dec, &dec_grad, &adam)?;
                        acc += loss.into_f64();
                        batches += 1;
                    }
                    report.epoch_losses.push(acc / batches.max(1) as f64);
                }
                RewardNets::Cvae {
                    enc_spec,
                    enc,
                    dec_spec,
                    dec,
                }
            }
        };
        Ok((
            RewardModel {
                kind: cfg.kind,
                z_dim: cfg.z_dim,
                nets,
            },
            report,
        ))
    }

    /// Predicted reward for a (possibly unseen) transition. Deterministic
    /// at the prior mean; the Gaussian kind returns its predicted mean.
    pub fn predict(
        &self,
        state: &[S],
        action: &[S],
        s_next: &[S],
        z_mode: ZMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<S> {
        let mut cond = Vec::with_capacity(state.len() + action.len() + s_next.len());
        cond.extend_from_slice(state);
        cond.extend_from_slice(action);
        cond.extend_from_slice(s_next);
        match &self.nets {
            RewardNets::Single { spec, state } => {
                let out = forward(spec, state, &Mat::from_row(&cond))?;
                Ok(out.get(0, 0))
            }
            RewardNets::GenCritic { gen_spec, gen, .. } => {
                let z = z_mode.draw::<S>(self.z_dim, rng);
                let mut input = z;
                input.extend_from_slice(&cond);
                let out = forward(gen_spec, gen, &Mat::from_row(&input))?;
                Ok(out.get(0, 0))
            }
            RewardNets::Cvae { dec_spec, dec, .. } => {
                let z = z_mode.draw::<S>(self.z_dim, rng);
                let mut input = cond;
                input.extend_from_slice(&z);
                let out = forward(dec_spec, dec, &Mat::from_row(&input))?;
                Ok(out.get(0, 0))
            }
        }
    }

    /// Largest critic weight magnitude (WGAN kind only).
    pub fn critic_weight_max(&self) -> Option<f64> {
        match &self.nets {
            RewardNets::GenCritic { critic, .. } => Some(
                critic
                    .params
                    .iter()
                    .fold(0.0f64, |a, w| a.max(w.into_f64().abs())),
            ),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Trajectory, Transition};

    fn constant_reward_dataset(r: f64) -> Dataset<f64> {
        let mut trajs = Vec::new();
        for id in 0..4u64 {
            let steps = (0..25)
                .map(|k| Transition {
                    state: vec![k as f64 * 0.1, id as f64 * 0.1],
                    action: vec![0.1],
                    reward: r,
                    next_state: vec![(k + 1) as f64 * 0.1, id as f64 * 0.1],
                    terminal: k == 24,
                })
                .collect();
            trajs.push(Trajectory { id, steps });
        }
        Dataset::new((2, 1), trajs, Default::default())
    }

    #[test]
    fn mlp_kind_fits_constant_reward() {
        let ds = constant_reward_dataset(1.0);
        let cfg = RewardConfig {
            kind: RewardKind::Mlp,
            epochs: 4000,
            adam: AdamHyper {
                lr: 1e-2,
                l2: 0.0,
                ..Default::default()
            },
            lr_decay: 0.9999,
            ..Default::default()
        };
        let (model, _) = RewardModel::train(&ds, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (_, _, t) in ds.iter_transitions() {
            let r = model
                .predict(&t.state, &t.action, &t.next_state, ZMode::PriorMean, &mut rng)
                .unwrap();
            assert!((r - 1.0).abs() < 1e-3, "got {r}");
        }
    }

    #[test]
    fn wgan_critic_weights_stay_clipped() {
        let ds = constant_reward_dataset(0.5);
        let cfg = RewardConfig {
            kind: RewardKind::Wgan,
            epochs: 2,
            ..Default::default()
        };
        let (model, _) = RewardModel::train(&ds, &cfg).unwrap();
        assert!(model.critic_weight_max().unwrap() <= cfg.clip + 1e-12);
    }

    #[test]
    fn prediction_kinds_are_deterministic_at_prior_mean() {
        let ds = constant_reward_dataset(0.25);
        for kind in [RewardKind::Mlp, RewardKind::Gaussian, RewardKind::Wgan, RewardKind::Vae] {
            let cfg = RewardConfig {
                kind,
                epochs: 1,
                ..Default::default()
            };
            let (model, _) = RewardModel::train(&ds, &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let a = model
                .predict(&[0.1, 0.2], &[0.0], &[0.2, 0.2], ZMode::PriorMean, &mut rng)
                .unwrap();
            let b = model
                .predict(&[0.1, 0.2], &[0.0], &[0.2, 0.2], ZMode::PriorMean, &mut rng)
                .unwrap();
            assert_eq!(a, b, "{kind:?}");
        }
    }

    #[test]
    fn unknown_kind_string_is_rejected() {
        assert!("diffusion".parse::<RewardKind>().is_err());
        assert_eq!("wgan".parse::<RewardKind>().unwrap(), RewardKind::Wgan);
    }
}
