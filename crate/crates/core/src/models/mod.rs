//! The learned environment models: a Gaussian forward-dynamics ensemble
//! with a conservative likelihood gate, a conditional-VAE inverse-dynamics
//! model, a family of reward models, and a twin state-value function.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::mat::Mat;
use crate::scalar::Scalar;

mod forward_ensemble;
mod inverse;
mod reward;
mod value;

pub use forward_ensemble::{EnsembleConfig, ForwardEnsemble};
pub use inverse::{CvaeConfig, InverseModel};
pub use reward::{RewardConfig, RewardKind, RewardModel};
pub use value::{ValueConfig, ValueFunction};

/// How the latent of a generative model is chosen at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZMode {
    /// The prior mean, `z = 0`: deterministic output.
    #[default]
    PriorMean,
    /// A draw from the standard normal prior using the caller's stream.
    Sample,
}

impl ZMode {
    pub(crate) fn draw<S: Scalar>(self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<S> {
        match self {
            ZMode::PriorMean => vec![S::zero(); dim],
            ZMode::Sample => (0..dim)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(rng);
                    S::of_f64(v)
                })
                .collect(),
        }
    }
}

/// Per-epoch loss trail of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Shuffled minibatch index blocks for one epoch.
pub(crate) fn epoch_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

pub(crate) fn gather_rows<S: Scalar>(src: &Mat<S>, rows: &[usize]) -> Mat<S> {
    let mut out = Mat::zeros(rows.len(), src.cols());
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(src.row(r));
    }
    out
}

pub(crate) fn standard_normal_mat<S: Scalar>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Mat<S> {
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            S::of_f64(v)
        })
        .collect();
    Mat::from_vec(rows, cols, data)
}

/// Linear learning-rate schedule: epoch `e` of `n` runs at
/// `lr * (1 - decay * e / n)`.
pub(crate) fn lr_schedule(
    base: &crate::nn::AdamHyper,
    decay: f64,
    epochs: usize,
) -> impl Fn(usize) -> crate::nn::AdamHyper + '_ {
    let base = *base;
    move |epoch: usize| {
        let frac = if epochs == 0 {
            0.0
        } else {
            epoch as f64 / epochs as f64
        };
        crate::nn::AdamHyper {
            lr: base.lr * (1.0 - decay * frac),
            ..base
        }
    }
}

/// Splitmix-style stream derivation so every trainee gets an independent
/// seed from one master seed.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
