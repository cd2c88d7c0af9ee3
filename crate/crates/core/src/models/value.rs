//! Behaviour-policy state value `V(s)` trained by minimising the squared
//! Bellman error, with twin networks (the reported value is their
//! pointwise minimum) and periodically refreshed frozen target copies.
//! Terminal next states contribute the reward alone to the target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::{
    adam_update, forward, loss_and_grad, AdamHyper, Activation, Batch, LossKind, MlpSpec,
    MlpState, OutputHead,
};
use crate::scalar::Scalar;

use super::{derive_seed, epoch_batches, gather_rows, TrainReport};

#[derive(Debug, Clone)]
pub struct ValueConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub gamma: f64,
    /// Updates between target-network refreshes.
    pub target_refresh: usize,
    /// Linear learning-rate anneal; zero keeps the rate constant.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for ValueConfig {
    fn default() -> Self {
        ValueConfig {
            hidden: vec![64, 64],
            epochs: 30,
            batch_size: 256,
            adam: AdamHyper::with_lr(3e-4),
            gamma: 0.99,
            target_refresh: 100,
            lr_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueFunction<S> {
    pub spec: MlpSpec,
    pub twins: [MlpState<S>; 2],
    pub targets: [MlpState<S>; 2],
    pub gamma: f64,
}

impl<S: Scalar> ValueFunction<S> {
    pub fn train(dataset: &Dataset<S>, cfg: &ValueConfig) -> Result<(Self, TrainReport)> {
        if !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1), got {}",
                cfg.gamma
            )));
        }
        let n = dataset.transition_count();
        if n == 0 {
            return Err(Error::DatasetTooSmall("no transitions".into()));
        }
        let ds = dataset.state_dim();
        let mut states = Mat::zeros(n, ds);
        let mut nexts = Mat::zeros(n, ds);
        let mut rewards = vec![S::zero(); n];
        let mut terminal = vec![false; n];
        for (i, (_, _, t)) in dataset.iter_transitions().enumerate() {
            states.row_mut(i).copy_from_slice(&t.state);
            nexts.row_mut(i).copy_from_slice(&t.next_state);
            rewards[i] = t.reward;
            terminal[i] = t.terminal;
        }
        let mut sizes = vec![ds];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(1);
        let spec = MlpSpec::new(sizes, Activation::Relu, OutputHead::Linear)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7a1e));
        // small final layers stabilise the first bootstrapped targets
        let twin0 = MlpState::init(&spec, &mut rng, 0.01);
        let twin1 = MlpState::init(&spec, &mut rng, 0.01);
        let mut vf = ValueFunction {
            spec,
            targets: [twin0.clone(), twin1.clone()],
            twins: [twin0, twin1],
            gamma: cfg.gamma,
        };
        let gamma = S::of_f64(cfg.gamma);
        let mut report = TrainReport::default();
        let mut updates = 0usize;
        let schedule = super::lr_schedule(&cfg.adam, cfg.lr_decay, cfg.epochs);
        for epoch in 0..cfg.epochs {
            let adam = schedule(epoch);
            let mut acc = 0.0;
            let mut batches = 0usize;
            for batch in epoch_batches(n, cfg.batch_size, &mut rng) {
                let bs = gather_rows(&states, &batch);
                let bn = gather_rows(&nexts, &batch);
                // bootstrap from the frozen targets, min over the twins
                let t0 = forward(&vf.spec, &vf.targets[0], &bn)?;
                let t1 = forward(&vf.spec, &vf.targets[1], &bn)?;
                let mut y = Mat::zeros(batch.len(), 1);
                for (row, &i) in batch.iter().enumerate() {
                    let boot = if terminal[i] {
                        S::zero()
                    } else {
                        let a = t0.get(row, 0);
                        let b = t1.get(row, 0);
                        gamma * if a < b { a } else { b }
                    };
                    y.set(row, 0, rewards[i] + boot);
                }
                let mut step_loss = 0.0;
                for twin in &mut vf.twins {
                    let (loss, grad) = loss_and_grad(
                        &vf.spec,
                        twin,
                        &Batch {
                            inputs: &bs,
                            targets: &y,
                        },
                        &LossKind::BellmanMse,
                    )?;
                    if !loss.is_finite() {
                        return Err(Error::TrainingDiverged("Bellman loss non-finite".into()));
                    }
                    adam_update(twin, &grad, &adam)?;
                    step_loss += loss.into_f64();
                }
                updates += 1;
                if updates % cfg.target_refresh == 0 {
                    vf.targets = vf.twins.clone();
                }
                acc += step_loss / 2.0;
                batches += 1;
            }
            report.epoch_losses.push(acc / batches.max(1) as f64);
        }
        vf.targets = vf.twins.clone();
        Ok((vf, report))
    }

    pub fn from_parts(spec: MlpSpec, twins: [MlpState<S>; 2], gamma: f64) -> Self {
        ValueFunction {
            spec,
            targets: twins.clone(),
            twins,
            gamma,
        }
    }

    /// `min(twin1(s), twin2(s))`.
    pub fn value(&self, state: &[S]) -> Result<S> {
        Ok(self.values_of(&Mat::from_row(state))?[0])
    }

    /// Batched values, min over the twins.
    pub fn values_of(&self, states: &Mat<S>) -> Result<Vec<S>> {
        let a = forward(&self.spec, &self.twins[0], states)?;
        let b = forward(&self.spec, &self.twins[1], states)?;
        Ok((0..states.rows())
            .map(|i| {
                let (x, y) = (a.get(i, 0), b.get(i, 0));
                if x < y {
                    x
                } else {
                    y
                }
            })
            .collect())
    }

    /// One twin's value, for min-property checks.
    pub fn twin_value(&self, which: usize, state: &[S]) -> Result<S> {
        let out = forward(&self.spec, &self.twins[which], &Mat::from_row(state))?;
        Ok(out.get(0, 0))
    }
}
