//! Inference: iterative unseen-class synthesis, CZSL/GZSL softmax heads and
//! macro-averaged accuracy metrics.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use crate::adversarial::Generator;
use crate::data::{SampleSplit, ZslDataset};
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::nn::softmax::{argmax_rows, train_linear_softmax, SoftmaxTrainConfig};
use crate::nn::{DenseNet, Tensor};
use crate::rng::{normal_vec, stream, sub_stream, Rng, Stream};

/// Classifier training knobs shared by both heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 128,
        }
    }
}

impl From<HeadConfig> for SoftmaxTrainConfig {
    fn from(c: HeadConfig) -> Self {
        SoftmaxTrainConfig {
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
        }
    }
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Array2::from_shape_vec((rows, cols), normal_vec(rng, rows * cols)).expect("sized")
}

/// Run the full reverse chain for `n` samples of one class.
///
/// Starts at x_T ~ N(0, I); at each t = T−1 … 0 predicts x̃_0 from x_{t+1}
/// with fresh ε and draws x_t from the posterior. Returns the last x̃_0.
pub fn sample_class(
    gen: &Generator,
    sched: &DiffusionSchedule,
    z: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let d = gen.feature_dim();
    if z.len() != gen.proto_dim() {
        return Err(Error::Config(format!(
            "prototype has {} entries, generator expects {}",
            z.len(),
            gen.proto_dim()
        )));
    }
    let zs = Array2::from_shape_fn((n, z.len()), |(_, j)| z[j]);
    let mut x_next = gaussian(rng, n, d);
    let mut x0 = Array2::zeros((n, d));
    for t in (0..sched.steps()).rev() {
        let eps = gaussian(rng, n, d);
        x0 = gen.synthesize_batch(&eps, &zs, &x_next, &vec![t + 1; n])?;
        if t > 0 {
            let (c1, c2, sd) = sched.coefficient_rows(&vec![t; n], d)?;
            let noise = gaussian(rng, n, d);
            x_next = c1 * &x0 + c2 * &x_next + sd * &noise;
        }
    }
    Ok(x0)
}

/// Synthesize `per_class` features for each class in `classes`, in class
/// order. Each class draws from its own stream, so the output does not
/// depend on thread scheduling.
pub fn synthesize_classes(
    gen: &Generator,
    sched: &DiffusionSchedule,
    semantic: &Tensor,
    classes: &[usize],
    per_class: usize,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    if let Some(&c) = classes.iter().find(|&&c| c >= semantic.nrows()) {
        return Err(Error::Config(format!("no semantic prototype for class {c}")));
    }
    let blocks: Vec<Tensor> = classes
        .par_iter()
        .map(|&c| {
            let mut rng = sub_stream(seed, Stream::Eval, c as u64 + 1);
            let z = semantic.row(c).to_vec();
            sample_class(gen, sched, &z, per_class, &mut rng)
        })
        .collect::<Result<_>>()?;
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let x = if views.is_empty() {
        Array2::zeros((0, gen.feature_dim()))
    } else {
        concatenate(Axis(0), &views).expect("equal widths")
    };
    let labels = classes
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, per_class))
        .collect();
    Ok((x, labels))
}

/// Unseen-class synthesis for a dataset.
pub fn synthesize_unseen(
    gen: &Generator,
    sched: &DiffusionSchedule,
    dataset: &ZslDataset,
    per_class: usize,
    seed: u64,
) -> Result<(Tensor, Vec<usize>)> {
    synthesize_classes(
        gen,
        sched,
        dataset.semantic_prototypes(),
        &dataset.unseen_classes(),
        per_class,
        seed,
    )
}

/// Linear softmax head over an explicit, ordered set of class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    net: DenseNet,
    classes: Vec<usize>,
    index: BTreeMap<usize, usize>,
}

impl ClassifierHead {
    /// Train over `classes` (row order of the head follows this list).
    pub fn train(
        features: &Tensor,
        labels: &[usize],
        classes: &[usize],
        config: HeadConfig,
        rng: &mut Rng,
    ) -> Result<Self> {
        let index: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if index.len() != classes.len() {
            return Err(Error::Config("duplicate class ids in head".into()));
        }
        let local = labels
            .iter()
            .map(|y| {
                index
                    .get(y)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("label {y} outside the head's classes")))
            })
            .collect::<Result<Vec<_>>>()?;
        let net = train_linear_softmax(features, &local, classes.len(), config.into(), rng)?;
        Ok(Self {
            net,
            classes: classes.to_vec(),
            index,
        })
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    /// Row of the head that scores `class`.
    pub fn row_of(&self, class: usize) -> Option<usize> {
        self.index.get(&class).copied()
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// Predicted class ids.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.net.forward(x)?)
            .into_iter()
            .map(|i| self.classes[i])
            .collect())
    }

    /// Macro accuracy on `(x, labels)`; every label must be a head class.
    pub fn evaluate(&self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        if let Some(y) = labels.iter().find(|y| !self.index.contains_key(y)) {
            return Err(Error::Config(format!("test label {y} is not scored by this head")));
        }
        Ok(macro_accuracy(&self.predict(x)?, labels))
    }
}

/// CZSL head: unseen classes only, trained on synthesized features.
pub fn train_czsl(
    synth: &Tensor,
    synth_labels: &[usize],
    unseen: &[usize],
    config: HeadConfig,
    rng: &mut Rng,
) -> Result<ClassifierHead> {
    ClassifierHead::train(synth, synth_labels, unseen, config, rng)
}

/// GZSL head over seen ∪ unseen, on real seen plus synthesized unseen rows.
pub fn train_gzsl(
    seen_x: &Tensor,
    seen_labels: &[usize],
    synth: &Tensor,
    synth_labels: &[usize],
    classes: &[usize],
    config: HeadConfig,
    rng: &mut Rng,
) -> Result<ClassifierHead> {
    if seen_labels.is_empty() {
        return Err(Error::Config("GZSL head needs seen training features".into()));
    }
    if synth_labels.is_empty() {
        return Err(Error::Config("GZSL head needs synthesized unseen features".into()));
    }
    let x = concatenate(Axis(0), &[seen_x.view(), synth.view()])
        .map_err(|_| Error::Config("seen and synthesized features differ in width".into()))?;
    let mut labels = seen_labels.to_vec();
    labels.extend_from_slice(synth_labels);
    ClassifierHead::train(&x, &labels, classes, config, rng)
}

/// Mean over classes present in `truth` of that class's accuracy.
pub fn macro_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let mut per: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (p, t) in pred.iter().zip(truth) {
        let e = per.entry(*t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    if per.is_empty() {
        return 0.0;
    }
    per.values().map(|&(hit, n)| hit as f64 / n as f64).sum::<f64>() / per.len() as f64
}

pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s > 0.0 {
        2.0 * s * u / (s + u)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub acc: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
}

impl EvalReport {
    pub fn new(acc: f64, u: f64, s: f64) -> Self {
        Self {
            acc,
            u,
            s,
            h: harmonic_mean(u, s),
        }
    }

    /// Parse a line in the [`Display`](fmt::Display) format.
    pub fn parse(line: &str) -> Result<Self> {
        let mut vals = BTreeMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("malformed report field '{part}'")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::Usage(format!("malformed report value '{part}'")))?;
            vals.insert(k.to_string(), v);
        }
        let get = |k: &str| {
            vals.get(k)
                .copied()
                .ok_or_else(|| Error::Usage(format!("report lacks '{k}'")))
        };
        Ok(Self {
            acc: get("acc")?,
            u: get("u")?,
            s: get("s")?,
            h: get("h")?,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acc={:.6} u={:.6} s={:.6} h={:.6}", self.acc, self.u, self.s, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub synth_per_class: usize,
    pub head: HeadConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            synth_per_class: 400,
            head: HeadConfig::default(),
        }
    }
}

/// Synthesize unseen features, train both heads and score the test splits.
pub fn evaluate_generator(
    gen: &Generator,
    sched: &DiffusionSchedule,
    dataset: &ZslDataset,
    config: &EvalConfig,
    seed: u64,
) -> Result<EvalReport> {
    let unseen = dataset.unseen_classes();
    if unseen.is_empty() {
        return Err(Error::Config("dataset has no unseen classes".into()));
    }
    let (synth, synth_labels) = synthesize_unseen(gen, sched, dataset, config.synth_per_class, seed)?;
    if !crate::nn::tape::all_finite(&synth) {
        return Err(Error::Numeric("synthesized features are not finite".into()));
    }
    let (xu, yu) = dataset.split(SampleSplit::TestUnseen);
    let (xs, ys) = dataset.split(SampleSplit::TestSeen);
    let (xtr, ytr) = dataset.split(SampleSplit::Train);

    let mut rng = stream(seed, Stream::Eval);
    let czsl = train_czsl(&synth, &synth_labels, &unseen, config.head, &mut rng)?;
    let acc = czsl.evaluate(&xu, &yu)?;

    let all: Vec<usize> = (0..dataset.num_classes()).collect();
    let gzsl = train_gzsl(&xtr, &ytr, &synth, &synth_labels, &all, config.head, &mut rng)?;
    let u = gzsl.evaluate(&xu, &yu)?;
    let s = gzsl.evaluate(&xs, &ys)?;
    Ok(EvalReport::new(acc, u, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LEAKY_SLOPE;
    use ndarray::array;
    use rand::seq::SliceRandom;

    #[test]
    fn harmonic_mean_cases() {
        assert!((harmonic_mean(0.809, 0.814) * 100.0 - 81.15).abs() < 0.01);
        assert_eq!(harmonic_mean(0.0, 0.7), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert!((harmonic_mean(0.3, 0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn macro_differs_from_micro() {
        let truth: Vec<usize> = std::iter::repeat_n(0, 90).chain(std::iter::repeat_n(1, 10)).collect();
        let pred = vec![0; 100];
        assert_eq!(macro_accuracy(&pred, &truth), 0.5);
    }

    #[test]
    fn report_line_round_trips() {
        let r = EvalReport::new(0.5, 0.25, 0.75);
        let line = r.to_string();
        assert!(line.starts_with("acc=0.500000 u=0.250000"));
        let back = EvalReport::parse(&line).unwrap();
        assert!((harmonic_mean(back.u, back.s) - back.h).abs() < 1e-6);
    }

    #[test]
    fn separable_classes_reach_full_accuracy() {
        let x = array![[5.0, 0.0], [6.0, 0.5], [-5.0, 0.0], [-6.0, -0.5]];
        let y = vec![3, 3, 8, 8];
        let mut rng = stream(1, Stream::Eval);
        let cfg = HeadConfig { epochs: 200, learning_rate: 0.05, batch_size: 4 };
        let head = train_czsl(&x, &y, &[3, 8], cfg, &mut rng).unwrap();
        assert_eq!(head.evaluate(&x, &y).unwrap(), 1.0);
        assert_eq!(head.row_of(8), Some(1));
    }

    #[test]
    fn head_row_order_follows_class_list() {
        let x = array![[1.0], [-1.0]];
        let mut rng = stream(1, Stream::Eval);
        let head = ClassifierHead::train(&x, &[7, 2], &[7, 2], HeadConfig::default(), &mut rng).unwrap();
        assert_eq!(head.classes(), &[7, 2]);
        assert_eq!(head.row_of(7), Some(0));
    }

    #[test]
    fn unknown_test_label_is_rejected() {
        let x = array![[1.0], [-1.0]];
        let mut rng = stream(1, Stream::Eval);
        let head = ClassifierHead::train(&x, &[0, 1], &[0, 1], HeadConfig::default(), &mut rng).unwrap();
        assert!(head.evaluate(&x, &[0, 5]).is_err());
    }

    #[test]
    fn empty_unseen_pool_is_config_error() {
        let x = array![[1.0]];
        let mut rng = stream(1, Stream::Eval);
        let r = train_gzsl(&x, &[0], &Array2::zeros((0, 1)), &[], &[0, 1], HeadConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut total = 0.0;
        for seed in 0..10 {
            let mut rng = stream(seed, Stream::Eval);
            let x = gaussian(&mut rng, 200, 4);
            let mut y: Vec<usize> = (0..200).map(|i| i % 5).collect();
            let test_y: Vec<usize> = (0..200).map(|i| i % 5).collect();
            y.shuffle(&mut rng);
            let test_x = gaussian(&mut rng, 200, 4);
            let head = train_czsl(&x, &y, &[0, 1, 2, 3, 4], HeadConfig::default(), &mut rng).unwrap();
            total += head.evaluate(&test_x, &test_y).unwrap();
        }
        let mean = total / 10.0;
        assert!((mean - 0.2).abs() < 0.1, "{mean}");
    }

    #[test]
    fn synthesis_is_deterministic_and_counted() {
        let mut rng = stream(4, Stream::Init);
        let gen = Generator::new(3, 2, &mut rng).unwrap();
        let sched = DiffusionSchedule::linear(4, 0.1, 0.4).unwrap();
        let z = array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]];
        let (a, la) = synthesize_classes(&gen, &sched, &z, &[0, 2], 7, 9).unwrap();
        let (b, _) = synthesize_classes(&gen, &sched, &z, &[0, 2], 7, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (14, 3));
        assert_eq!(la[7], 2);
        assert!(crate::nn::tape::all_finite(&a));
        assert!(synthesize_classes(&gen, &sched, &z, &[5], 1, 0).is_err());
    }

    #[test]
    fn final_step_returns_generator_output() {
        // With a zero generator every x̃_0 is zero, whatever the chain state.
        let zero = Generator::from_net(DenseNet::zeros(&[2 + 2 + 1 + 16, 4, 2], LEAKY_SLOPE).unwrap(), 2, 1).unwrap();
        let sched = DiffusionSchedule::linear(4, 0.1, 0.4).unwrap();
        let mut rng = stream(0, Stream::Eval);
        let x = sample_class(&zero, &sched, &[1.0], 5, &mut rng).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
