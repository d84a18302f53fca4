//! Outcome reward: a frozen linear classifier scores synthesized features by
//! the log-probability of their intended class, an EMA baseline centres the
//! rewards, and the resulting stop-gradient advantages weight a
//! policy-gradient loss on the generator.

use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{self, CheckpointKind};
use crate::nn::softmax::{argmax_rows, log_softmax_rows, train_linear_softmax, SoftmaxTrainConfig};
use crate::nn::{DenseNet, Tape, Tensor, Var};
use crate::rng::Rng;

/// R(x) = Wx + b over the seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    net: DenseNet,
    frozen: bool,
}

impl RewardModel {
    /// Wrap a single affine layer (classes × features).
    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.layer_dims().len() != 2 {
            return Err(Error::Config("reward model must be a single linear layer".into()));
        }
        Ok(Self { net, frozen: false })
    }

    pub fn zeros(num_classes: usize, feature_dim: usize) -> Result<Self> {
        Self::from_net(DenseNet::zeros(&[feature_dim, num_classes], crate::nn::LEAKY_SLOPE)?)
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// Mutable access for training; refused once frozen.
    pub fn net_mut(&mut self) -> Result<&mut DenseNet> {
        if self.frozen {
            return Err(Error::Frozen("reward model parameters are immutable after freezing"));
        }
        Ok(&mut self.net)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.net.forward(x)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    pub fn accuracy(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / labels.len().max(1) as f64)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.net, CheckpointKind::RewardModel, path)
    }

    /// Loaded models come back frozen.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::from_net(checkpoint::load(path, CheckpointKind::RewardModel)?)?;
        m.freeze();
        Ok(m)
    }

    /// Per-row log p(y_i | x_i) as a B×1 tape node. The model's parameters
    /// enter as constants, so no gradient can reach them.
    pub fn log_prob_on_tape(&self, tape: &mut Tape, x: Var, labels: &[usize]) -> Result<Var> {
        let (rows, cols) = tape.value(x).dim();
        if cols != self.feature_dim() || rows != labels.len() {
            return Err(Error::Config(format!(
                "reward input {:?} with {} labels, model expects d = {}",
                (rows, cols),
                labels.len(),
                self.feature_dim()
            )));
        }
        check_labels(labels, self.num_classes())?;
        let bound = self.net.bind(tape, false);
        let logits = bound.forward(tape, x);
        let lp = tape.log_softmax_rows(logits);
        let mut onehot = Array2::zeros((rows, self.num_classes()));
        for (i, &y) in labels.iter().enumerate() {
            onehot[[i, y]] = 1.0;
        }
        let mask = tape.constant(onehot);
        let picked = tape.mul(lp, mask);
        Ok(tape.sum_cols(picked))
    }
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&y| y >= num_classes) {
        Some(y) => Err(Error::Usage(format!("class {y} outside [0, {num_classes})"))),
        None => Ok(()),
    }
}

/// Fit R by softmax cross-entropy (zero init, Adam) and freeze it.
pub fn pretrain_reward(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    config: SoftmaxTrainConfig,
    rng: &mut Rng,
) -> Result<RewardModel> {
    let net = train_linear_softmax(features, labels, num_classes, config, rng)?;
    let mut model = RewardModel::from_net(net)?;
    model.freeze();
    Ok(model)
}

/// r = log softmax(Wx + b)_y.
pub fn reward(model: &RewardModel, x: &[f64], y: usize) -> Result<f64> {
    check_labels(&[y], model.num_classes())?;
    let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let lp = log_softmax_rows(&model.logits(&row)?);
    Ok(lp[[0, y]])
}

/// Batched rewards for rows of `x`.
pub fn rewards(model: &RewardModel, x: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    check_labels(labels, model.num_classes())?;
    let lp = log_softmax_rows(&model.logits(x)?);
    Ok(lp
        .axis_iter(Axis(0))
        .zip(labels)
        .map(|(row, &y)| row[y])
        .collect())
}

/// b ← α·b + (1 − α)·mean(r).
#[derive(Debug, Clone, PartialEq)]
pub struct EmaBaseline {
    value: f64,
    alpha: f64,
    initialized: bool,
    writes: u64,
}

impl EmaBaseline {
    /// Uninitialized baseline; the first update adopts that batch's mean.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Config(format!("EMA alpha must be in [0, 1), got {alpha}")));
        }
        Ok(Self {
            value: 0.0,
            alpha,
            initialized: false,
            writes: 0,
        })
    }

    /// Baseline already holding `value`.
    pub fn with_value(value: f64, alpha: f64) -> Result<Self> {
        let mut b = Self::new(alpha)?;
        b.value = value;
        b.initialized = true;
        Ok(b)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Number of updates applied so far.
    pub fn writes(&self) -> u64 {
        self.writes
    }

    pub fn update(&mut self, batch_rewards: &[f64]) -> Result<()> {
        if batch_rewards.is_empty() {
            return Err(Error::Usage("EMA update with an empty batch".into()));
        }
        let mean = batch_rewards.iter().sum::<f64>() / batch_rewards.len() as f64;
        let next = if self.initialized {
            self.alpha * self.value + (1.0 - self.alpha) * mean
        } else {
            mean
        };
        if !next.is_finite() {
            return Err(Error::Numeric(format!("EMA baseline became {next}")));
        }
        self.value = next;
        self.initialized = true;
        self.writes += 1;
        Ok(())
    }
}

/// Rewards and their stop-gradient advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    rewards: Vec<f64>,
    advantages: Vec<f64>,
    gradient_barrier: bool,
}

impl AdvantageBatch {
    /// Explicit construction; `rl_loss` refuses batches without the barrier.
    pub fn new(rewards: Vec<f64>, advantages: Vec<f64>, gradient_barrier: bool) -> Self {
        Self {
            rewards,
            advantages,
            gradient_barrier,
        }
    }

    /// Raw rewards used directly as advantages (no baseline).
    pub fn raw(rewards: Vec<f64>) -> Self {
        let advantages = rewards.clone();
        Self::new(rewards, advantages, true)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn advantages(&self) -> &[f64] {
        &self.advantages
    }

    pub fn has_barrier(&self) -> bool {
        self.gradient_barrier
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }

    pub fn mean_advantage(&self) -> f64 {
        mean(&self.advantages)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Â_i = sg[r_i − b], with `baseline` already updated for this batch.
pub fn advantage(batch_rewards: &[f64], baseline: &EmaBaseline) -> AdvantageBatch {
    let b = baseline.value();
    AdvantageBatch::new(
        batch_rewards.to_vec(),
        batch_rewards.iter().map(|r| r - b).collect(),
        true,
    )
}

/// −(1/B)·Σ Â_i·log p_i on the tape; `log_probs` is B×1.
pub fn rl_loss_on_tape(tape: &mut Tape, advantages: &AdvantageBatch, log_probs: Var) -> Result<Var> {
    if !advantages.has_barrier() {
        return Err(Error::Usage(
            "advantages lack the stop-gradient barrier; refusing to build the RL loss".into(),
        ));
    }
    let (rows, cols) = tape.value(log_probs).dim();
    let b = advantages.advantages().len();
    if cols != 1 || rows != b || b == 0 {
        return Err(Error::Usage(format!(
            "log-probs {:?} do not match {b} advantages",
            (rows, cols)
        )));
    }
    let a = tape.constant(Array2::from_shape_vec((b, 1), advantages.advantages().to_vec()).expect("column"));
    let weighted = tape.mul(a, log_probs);
    let m = tape.mean_all(weighted);
    Ok(tape.neg(m))
}
