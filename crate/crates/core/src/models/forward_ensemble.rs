//! Action-free forward dynamics `p(s' | s)` as an ensemble of diagonal
//! Gaussian networks, and the conservative likelihood gate used to judge
//! candidate next states.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    adam_update, diag_gaussian_log_density, forward, loss_and_grad, AdamHyper, Activation, Batch,
    LossKind, MlpSpec, MlpState, OutputHead,
};
use crate::scalar::Scalar;

use super::{derive_seed, epoch_batches, gather_rows};

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    /// Members trained / retained (best by held-out NLL).
    pub n_train: usize,
    pub n_keep: usize,
    pub holdout_frac: f64,
    /// Linear learning-rate anneal; zero keeps the rate constant.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 256,
            adam: AdamHyper::with_lr(3e-4),
            n_train: 7,
            n_keep: 5,
            holdout_frac: 0.05,
            lr_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardEnsemble<S> {
    pub spec: MlpSpec,
    /// Retained members in their original training order.
    pub members: Vec<MlpState<S>>,
    /// Held-out NLL of each retained member.
    pub val_nlls: Vec<f64>,
}

impl<S: Scalar> ForwardEnsemble<S> {
    /// Trains `n_train` members on `(s -> s')` pairs with distinct seeds
    /// and keeps the best `n_keep` by held-out NLL.
    pub fn train(dataset: &Dataset<S>, cfg: &EnsembleConfig) -> Result<Self> {
        let n = dataset.transition_count();
        if n < 20 {
            return Err(Error::DatasetTooSmall(format!(
                "forward ensemble needs at least 20 transitions, got {n}"
            )));
        }
        if cfg.n_keep > cfg.n_train || cfg.n_keep == 0 {
            return Err(Error::InvalidArgument(format!(
                "retained count {} must be in 1..={}",
                cfg.n_keep, cfg.n_train
            )));
        }
        let ds = dataset.state_dim();
        let mut states = Mat::zeros(n, ds);
        let mut nexts = Mat::zeros(n, ds);
        for (i, (_, _, t)) in dataset.iter_transitions().enumerate() {
            states.row_mut(i).copy_from_slice(&t.state);
            nexts.row_mut(i).copy_from_slice(&t.next_state);
        }
        // one shared split, so member selection compares like with like
        let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xf0f0));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut split_rng);
        let n_val = ((n as f64) * cfg.holdout_frac).round().max(1.0) as usize;
        let (val_idx, train_idx) = idx.split_at(n_val.min(n / 2));

        let mut sizes = vec![ds];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(ds);
        let spec = MlpSpec::new(sizes, Activation::Relu, OutputHead::Gaussian)?;

        let train_in = gather_rows(&states, train_idx);
        let train_out = gather_rows(&nexts, train_idx);
        let val_in = gather_rows(&states, val_idx);
        let val_out = gather_rows(&nexts, val_idx);

        let results: Result<Vec<(MlpState<S>, f64)>> = (0..cfg.n_train)
            .into_par_iter()
            .map(|m| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xe0e0 + m as u64));
                let mut state = MlpState::init(&spec, &mut rng, 1.0);
                let schedule = super::lr_schedule(&cfg.adam, cfg.lr_decay, cfg.epochs);
                for epoch in 0..cfg.epochs {
                    let adam = schedule(epoch);
                    for batch in epoch_batches(train_in.rows(), cfg.batch_size, &mut rng) {
                        let bi = gather_rows(&train_in, &batch);
                        let bo = gather_rows(&train_out, &batch);
                        let (loss, grad) = loss_and_grad(
                            &spec,
                            &state,
                            &Batch {
                                inputs: &bi,
                                targets: &bo,
                            },
                            &LossKind::GaussianNll,
                        )?;
                        if !loss.is_finite() {
                            return Err(Error::TrainingDiverged(
                                "forward member NLL went non-finite".into(),
                            ));
                        }
                        adam_update(&mut state, &grad, &adam)?;
                    }
                }
                let (val_nll, _) = loss_and_grad(
                    &spec,
                    &state,
                    &Batch {
                        inputs: &val_in,
                        targets: &val_out,
                    },
                    &LossKind::GaussianNll,
                )?;
                Ok((state, val_nll.into_f64()))
            })
            .collect();
        let results = results?;

        // drop the worst (n_train - n_keep) members, keep original order
        let mut order: Vec<usize> = (0..results.len()).collect();
        order.sort_by(|&a, &b| results[a].1.partial_cmp(&results[b].1).unwrap());
        let mut keep: Vec<usize> = order[..cfg.n_keep].to_vec();
        keep.sort_unstable();
        let mut members = Vec::with_capacity(cfg.n_keep);
        let mut val_nlls = Vec::with_capacity(cfg.n_keep);
        let mut results = results;
        for &k in keep.iter().rev() {
            let (state, nll) = results.swap_remove(k);
            members.push(state);
            val_nlls.push(nll);
        }
        members.reverse();
        val_nlls.reverse();
        Ok(ForwardEnsemble {
            spec,
            members,
            val_nlls,
        })
    }

    pub fn from_parts(spec: MlpSpec, members: Vec<MlpState<S>>, val_nlls: Vec<f64>) -> Self {
        ForwardEnsemble {
            spec,
            members,
            val_nlls,
        }
    }

    /// Per-member `(mean, std)` of `p(. | s)`.
    pub fn member_params(&self, state: &[S]) -> Result<Vec<(Vec<S>, Vec<S>)>> {
        let input = Mat::from_row(state);
        let d = self.spec.output_dim();
        self.members
            .iter()
            .map(|m| {
                let out = forward(&self.spec, m, &input)?;
                Ok((out.row(0)[..d].to_vec(), out.row(0)[d..].to_vec()))
            })
            .collect()
    }

    /// Exact diagonal-Gaussian log density of `s_next` under each retained
    /// member, conditional on `state`.
    pub fn member_log_densities(&self, state: &[S], s_next: &[S]) -> Result<Vec<S>> {
        Ok(self
            .member_params(state)?
            .iter()
            .map(|(mean, std)| diag_gaussian_log_density(mean, std, s_next))
            .collect())
    }

    /// The conservative gate: true iff the minimum candidate density over
    /// members strictly exceeds the mean original density over members.
    /// Computed in the log domain with log-sum-exp for the mean.
    pub fn likelihood_gate(
        &self,
        state: &[S],
        orig_next: &[S],
        cand_next: &[S],
    ) -> Result<bool> {
        Ok(self.gate_many(state, orig_next, &[cand_next])?[0])
    }

    /// Gate evaluation for many candidates sharing one conditioning state;
    /// the member forward passes run once.
    pub fn gate_many(
        &self,
        state: &[S],
        orig_next: &[S],
        cands: &[&[S]],
    ) -> Result<Vec<bool>> {
        let params = self.member_params(state)?;
        let orig: Vec<S> = params
            .iter()
            .map(|(mean, std)| diag_gaussian_log_density(mean, std, orig_next))
            .collect();
        let threshold = log_mean_exp(&orig);
        Ok(cands
            .iter()
            .map(|cand| {
                let min = params
                    .iter()
                    .map(|(mean, std)| diag_gaussian_log_density(mean, std, cand))
                    .fold(S::infinity(), |a, b| if b < a { b } else { a });
                min > threshold
            })
            .collect())
    }
}

/// `ln(mean(exp(x)))`, stable against underflow at high dimension.
fn log_mean_exp<S: Scalar>(xs: &[S]) -> S {
    let m = xs.iter().fold(S::neg_infinity(), |a, b| if *b > a { *b } else { a });
    if !m.is_finite() {
        return m;
    }
    let mut acc = S::zero();
    for x in xs {
        acc = acc + (*x - m).exp();
    }
    m + (acc / S::of_f64(xs.len() as f64)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_member(spec: &MlpSpec, mean_bias: &[f64], log_std: f64) -> MlpState<f64> {
        // zero weights; biases set the constant (mean, log-std) output
        let mut state = MlpState::zeros(spec);
        let d = spec.output_dim();
        let n = state.params.len();
        let bias_at = n - 2 * d;
        for (j, b) in mean_bias.iter().enumerate() {
            state.params[bias_at + j] = *b;
        }
        for j in 0..d {
            state.params[bias_at + d + j] = log_std;
        }
        state
    }

    fn const_spec(d: usize) -> MlpSpec {
        MlpSpec::new(vec![d, d], Activation::Identity, OutputHead::Gaussian).unwrap()
    }

    #[test]
    fn member_density_matches_closed_form() {
        let spec = const_spec(2);
        let member = gaussian_member(&spec, &[0.3, -0.7], 0.0);
        let ens = ForwardEnsemble::from_parts(spec, vec![member], vec![0.0]);
        let lp = ens.member_log_densities(&[0.0, 0.0], &[0.3, -0.7]).unwrap();
        assert!((lp[0] - -(2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn density_decreases_away_from_mean() {
        let spec = const_spec(1);
        let member = gaussian_member(&spec, &[0.0], 0.0);
        let ens = ForwardEnsemble::from_parts(spec, vec![member], vec![0.0]);
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let lp = ens.member_log_densities(&[0.0], &[k as f64 * 0.5]).unwrap()[0];
            assert!(lp < last);
            last = lp;
        }
    }

    #[test]
    fn gate_rejects_identical_candidate() {
        let spec = const_spec(1);
        let members = vec![
            gaussian_member(&spec, &[0.0], 0.0),
            gaussian_member(&spec, &[0.5], 0.0),
        ];
        let ens = ForwardEnsemble::from_parts(spec, members, vec![0.0, 0.0]);
        // min over members <= mean over members, strict inequality fails
        assert!(!ens.likelihood_gate(&[0.0], &[0.25], &[0.25]).unwrap());
    }

    #[test]
    fn single_member_gate_accepts_denser_candidate() {
        let spec = const_spec(1);
        let member = gaussian_member(&spec, &[0.0], 0.0);
        let ens = ForwardEnsemble::from_parts(spec, vec![member], vec![0.0]);
        assert!(ens.likelihood_gate(&[0.0], &[1.0], &[0.1]).unwrap());
        assert!(!ens.likelihood_gate(&[0.0], &[0.1], &[1.0]).unwrap());
    }

    #[test]
    fn gate_hand_arithmetic_two_members() {
        // candidate densities {0.3, 0.5} vs original {0.1, 0.9}:
        // min cand 0.3 is not greater than mean orig 0.5
        let cand = [0.3f64.ln(), 0.5f64.ln()];
        let orig = [0.1f64.ln(), 0.9f64.ln()];
        let min_cand = cand[0].min(cand[1]);
        let mean_orig = log_mean_exp(&orig);
        assert!((mean_orig - 0.5f64.ln()).abs() < 1e-12);
        assert!(min_cand <= mean_orig);
    }

    #[test]
    fn gate_is_invariant_to_common_density_rescale() {
        let orig = [-3.0f64, -1.0];
        let cand = [-0.5f64, -0.9];
        let gate = |orig: &[f64], cand: &[f64]| {
            let min = cand.iter().cloned().fold(f64::INFINITY, f64::min);
            min > log_mean_exp(orig)
        };
        let base = gate(&orig, &cand);
        for shift in [-50.0, -5.0, 5.0, 700.0] {
            let o: Vec<f64> = orig.iter().map(|v| v + shift).collect();
            let c: Vec<f64> = cand.iter().map(|v| v + shift).collect();
            assert_eq!(gate(&o, &c), base);
        }
    }
}
