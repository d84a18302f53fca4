//! Linear softmax classifiers trained with cross-entropy and Adam.
//!
//! Shared by the reward model and the evaluation heads. The gradient is the
//! closed form `(P − Y)ᵀX / B`; the tape-based cross-check lives in the tests.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;

use super::adam::{AdamConfig, AdamState};
use super::dense::{DenseNet, LEAKY_SLOPE};
use super::tape::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
        row.mapv_inplace(|x| x - lse);
    }
    out
}

/// Mean cross-entropy of a one-layer net over (features, labels).
pub fn mean_cross_entropy(net: &DenseNet, features: &Tensor, labels: &[usize]) -> Result<f64> {
    let lp = log_softmax_rows(&net.forward(features)?);
    Ok(-labels.iter().enumerate().map(|(i, &y)| lp[[i, y]]).sum::<f64>() / labels.len() as f64)
}

/// Closed-form cross-entropy gradient for a single affine layer, flattened
/// as (W, b).
pub fn cross_entropy_grad(net: &DenseNet, features: &Tensor, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let b = labels.len() as f64;
    let lp = log_softmax_rows(&net.forward(features)?);
    let loss = -labels.iter().enumerate().map(|(i, &y)| lp[[i, y]]).sum::<f64>() / b;
    let mut delta = lp.mapv(f64::exp);
    for (i, &y) in labels.iter().enumerate() {
        delta[[i, y]] -= 1.0;
    }
    delta /= b;
    let gw = delta.t().dot(features);
    let gb = delta.sum_axis(Axis(0));
    let mut flat = gw.into_raw_vec_and_offset().0;
    flat.extend(gb.iter());
    Ok((loss, flat))
}

pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Train a zero-initialized linear softmax classifier over `num_classes`
/// classes. Every class needs at least one sample.
pub fn train_linear_softmax(
    features: &Tensor,
    labels: &[usize],
    num_classes: usize,
    config: SoftmaxTrainConfig,
    rng: &mut Rng,
) -> Result<DenseNet> {
    if features.nrows() != labels.len() {
        return Err(Error::Config(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if num_classes == 0 || config.batch_size == 0 {
        return Err(Error::Config("need at least one class and a positive batch size".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::Config(format!("label {y} outside [0, {num_classes})")));
    }
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("class {c} has no training samples")));
    }

    let d = features.ncols();
    let mut net = DenseNet::from_layers(
        vec![Array2::zeros((num_classes, d))],
        vec![Array1::zeros(num_classes)],
        LEAKY_SLOPE,
    )?;
    let mut adam = AdamState::for_net(AdamConfig::standard(config.learning_rate), &net)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let x = features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, grad) = cross_entropy_grad(&net, &x, &y)?;
            adam.step_net(&mut net, &grad)?;
        }
    }
    Ok(net)
}
