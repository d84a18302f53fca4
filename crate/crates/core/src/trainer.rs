//! The cold-start training schedule.
//!
//! Each epoch runs ⌈N_tr/B⌉ minibatches. A minibatch performs K critic
//! updates, one adversarial generator update (with the visual-cue term), and,
//! from epoch `rl_start_epoch` on, one policy-gradient generator update with
//! its own optimizer. The two generator updates are separate optimizer steps.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng as _;

use crate::adversarial::{
    generator_adv_terms, synthesize_on_tape, total_critic_loss, AdversarialBatch, CriticX0, CriticXt, GpConfig,
    Generator,
};
use crate::cues::{cue_loss_on_tape, generator_total_on_tape, CueConfig, CueVariant, VisualPrototypeTable};
use crate::data::{format_real, ZslDataset};
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::eval::{evaluate_generator, EvalConfig, EvalReport, HeadConfig};
use crate::nn::checkpoint::{self, CheckpointKind};
use crate::nn::{flatten_grads, AdamConfig, AdamState, Tape, Tensor};
use crate::reward::{advantage, rl_loss_on_tape, AdvantageBatch, EmaBaseline, RewardModel};
use crate::rng::{normal_vec, stream, sub_stream, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// First epoch (0-based) at which RL updates run.
    pub rl_start_epoch: usize,
    pub critic_steps: usize,
    pub batch_size: usize,
    pub lr_adv: f64,
    pub lr_rl: f64,
    pub lambda_pd: f64,
    pub lambda_gp: f64,
    pub ema_alpha: f64,
    pub diffusion_steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Unseen features synthesized per class for evaluation.
    pub synth_per_class: usize,
    pub seed: u64,
    pub use_rl: bool,
    pub use_cues: bool,
    /// Use r_i directly as the advantage (no EMA baseline).
    pub raw_reward: bool,
    pub cue_variant: CueVariant,
    /// Evaluate every n epochs and at the last epoch; 0 disables.
    pub eval_interval: usize,
    /// Checkpoint every n epochs; the final checkpoint is always written.
    pub checkpoint_interval: usize,
    pub head: HeadConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            rl_start_epoch: 5,
            critic_steps: 1,
            batch_size: 64,
            lr_adv: 5e-4,
            lr_rl: 5e-5,
            lambda_pd: 5.0,
            lambda_gp: 10.0,
            ema_alpha: 0.9,
            diffusion_steps: 4,
            beta_min: 0.1,
            beta_max: 0.4,
            synth_per_class: 400,
            seed: 0,
            use_rl: true,
            use_cues: true,
            raw_reward: false,
            cue_variant: CueVariant::CosinePd,
            eval_interval: 0,
            checkpoint_interval: 0,
            head: HeadConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        let problems = [
            (self.epochs == 0, "epochs must be positive"),
            (self.critic_steps == 0, "critic_steps must be positive"),
            (self.batch_size == 0, "batch_size must be positive"),
            (!positive(self.lr_adv), "lr_adv must be positive"),
            (!positive(self.lr_rl), "lr_rl must be positive"),
            (!nonneg(self.lambda_pd), "lambda_pd must be >= 0"),
            (!nonneg(self.lambda_gp), "lambda_gp must be >= 0"),
            (!(0.0..1.0).contains(&self.ema_alpha), "ema_alpha must be in [0, 1)"),
            (self.diffusion_steps == 0, "diffusion_steps must be positive"),
            (self.synth_per_class == 0, "synth_per_class must be positive"),
            (self.head.epochs == 0 || self.head.batch_size == 0, "classifier epochs and batch size must be positive"),
            (!positive(self.head.learning_rate), "classifier learning rate must be positive"),
        ];
        if let Some((_, msg)) = problems.iter().find(|(bad, _)| *bad) {
            return Err(Error::Config((*msg).into()));
        }
        self.schedule().map(|_| ())
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        DiffusionSchedule::linear(self.diffusion_steps, self.beta_min, self.beta_max)
    }

    pub fn cue_config(&self) -> CueConfig {
        CueConfig {
            lambda_pd: self.lambda_pd,
            variant: self.cue_variant,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            synth_per_class: self.synth_per_class,
            head: self.head,
        }
    }

    fn rl_active(&self, epoch: usize) -> bool {
        self.use_rl && epoch >= self.rl_start_epoch
    }
}

/// Update counts for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpochCounters {
    pub critic: u64,
    pub gen_adv: u64,
    pub rl: u64,
    pub ema_writes: u64,
}

/// One metrics-log row. NaN marks "not measured" and is written as `nan`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub raw_reward_mean: f64,
    pub ema_baseline: f64,
    pub advantage_mean: f64,
    pub critic_loss: f64,
    pub gen_adv_loss: f64,
    pub pd_loss: f64,
    pub czsl_acc: f64,
    pub gzsl_u: f64,
    pub gzsl_s: f64,
    pub gzsl_h: f64,
}

pub const METRICS_HEADER: &str =
    "epoch,raw_reward_mean,ema_baseline,advantage_mean,critic_loss,gen_adv_loss,pd_loss,czsl_acc,gzsl_u,gzsl_s,gzsl_h";

fn cell(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format_real(x)
    }
}

impl fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cells = [
            self.raw_reward_mean,
            self.ema_baseline,
            self.advantage_mean,
            self.critic_loss,
            self.gen_adv_loss,
            self.pd_loss,
            self.czsl_acc,
            self.gzsl_u,
            self.gzsl_s,
            self.gzsl_h,
        ];
        write!(f, "{}", self.epoch)?;
        for c in cells {
            write!(f, ",{}", cell(c))?;
        }
        Ok(())
    }
}

impl MetricsRow {
    pub fn parse(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != 11 {
            return Err(Error::Usage(format!("metrics row has {} fields, expected 11", parts.len())));
        }
        let epoch = parts[0]
            .parse()
            .map_err(|_| Error::Usage(format!("bad epoch '{}'", parts[0])))?;
        let mut v = [0.0; 10];
        for (slot, p) in v.iter_mut().zip(&parts[1..]) {
            *slot = p.parse().map_err(|_| Error::Usage(format!("bad metrics value '{p}'")))?;
        }
        Ok(Self {
            epoch,
            raw_reward_mean: v[0],
            ema_baseline: v[1],
            advantage_mean: v[2],
            critic_loss: v[3],
            gen_adv_loss: v[4],
            pd_loss: v[5],
            czsl_acc: v[6],
            gzsl_u: v[7],
            gzsl_s: v[8],
            gzsl_h: v[9],
        })
    }

    pub fn report(&self) -> Option<EvalReport> {
        (!self.czsl_acc.is_nan()).then_some(EvalReport {
            acc: self.czsl_acc,
            u: self.gzsl_u,
            s: self.gzsl_s,
            h: self.gzsl_h,
        })
    }
}

pub fn metrics_text(rows: &[MetricsRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::invalid(path, "missing metrics header"));
    }
    lines.map(MetricsRow::parse).collect()
}

/// Everything `train` produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub critic_x0: CriticX0,
    pub critic_xt: CriticXt,
    pub metrics: Vec<MetricsRow>,
    pub counters: Vec<EpochCounters>,
    pub baseline: EmaBaseline,
}

impl TrainOutcome {
    /// The last evaluation report in the log, if any epoch was evaluated.
    pub fn final_report(&self) -> Option<EvalReport> {
        self.metrics.iter().rev().find_map(MetricsRow::report)
    }
}

/// Step statistics of one adversarial generator update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStep {
    pub adv: f64,
    pub cue: f64,
}

/// Step statistics of one RL update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlStep {
    pub reward_mean: f64,
    pub advantage_mean: f64,
}

/// Optimizer and network state of a run, steppable one update at a time.
pub struct Trainer<'a> {
    dataset: &'a ZslDataset,
    reward: &'a RewardModel,
    prototypes: &'a VisualPrototypeTable,
    config: TrainConfig,
    sched: DiffusionSchedule,
    generator: Generator,
    critic_x0: CriticX0,
    critic_xt: CriticXt,
    opt_cx0: AdamState,
    opt_cxt: AdamState,
    opt_adv: AdamState,
    opt_rl: AdamState,
    baseline: EmaBaseline,
    train_rows: Vec<usize>,
    counters: Vec<EpochCounters>,
    metrics: Vec<MetricsRow>,
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_shape_vec((rows, cols), normal_vec(rng, rows * cols)).expect("sized")
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl<'a> Trainer<'a> {
    pub fn new(
        dataset: &'a ZslDataset,
        reward: &'a RewardModel,
        prototypes: &'a VisualPrototypeTable,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if !reward.is_frozen() {
            return Err(Error::Config("reward model must be frozen before training".into()));
        }
        let seen = dataset.seen_classes();
        let d = dataset.feature_dim();
        if reward.num_classes() != seen.len() || reward.feature_dim() != d {
            return Err(Error::Config(format!(
                "reward model scores {} classes of width {}, dataset has {} seen classes of width {d}",
                reward.num_classes(),
                reward.feature_dim(),
                seen.len()
            )));
        }
        if prototypes.dim() != d {
            return Err(Error::Config(format!(
                "visual prototypes have width {}, features have width {d}",
                prototypes.dim()
            )));
        }
        if let Some(c) = seen.iter().find(|&&c| prototypes.get(c).is_none()) {
            return Err(Error::Config(format!("seen class {c} has no visual prototype")));
        }
        let train_rows = dataset.rows_in(crate::data::SampleSplit::Train);
        if train_rows.is_empty() {
            return Err(Error::Config("dataset has no training rows".into()));
        }
        let sched = config.schedule()?;
        let mut init = stream(config.seed, Stream::Init);
        let dz = dataset.proto_dim();
        let generator = Generator::new(d, dz, &mut init)?;
        let critic_x0 = CriticX0::new(d, dz, &mut init)?;
        let critic_xt = CriticXt::new(d, dz, &mut init)?;
        let gan = AdamConfig::gan(config.lr_adv);
        Ok(Self {
            opt_cx0: AdamState::for_net(gan, critic_x0.net())?,
            opt_cxt: AdamState::for_net(gan, critic_xt.net())?,
            opt_adv: AdamState::for_net(gan, generator.net())?,
            opt_rl: AdamState::for_net(AdamConfig::gan(config.lr_rl), generator.net())?,
            baseline: EmaBaseline::new(config.ema_alpha)?,
            dataset,
            reward,
            prototypes,
            config,
            sched,
            generator,
            critic_x0,
            critic_xt,
            train_rows,
            counters: vec![],
            metrics: vec![],
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.sched
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn critic_x0(&self) -> &CriticX0 {
        &self.critic_x0
    }

    pub fn critic_xt(&self) -> &CriticXt {
        &self.critic_xt
    }

    pub fn baseline(&self) -> &EmaBaseline {
        &self.baseline
    }

    pub fn counters(&self) -> &[EpochCounters] {
        &self.counters
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    /// Minibatches per epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.train_rows.len().div_ceil(self.config.batch_size)
    }

    /// Uniform draw with replacement over the training rows.
    pub fn sample_rows(&self, rng: &mut Rng) -> Vec<usize> {
        (0..self.config.batch_size)
            .map(|_| self.train_rows[rng.random_range(0..self.train_rows.len())])
            .collect()
    }

    /// Fix every random quantity of one update for the given dataset rows.
    pub fn draw_batch(&self, rows: &[usize], rng: &mut Rng) -> Result<AdversarialBatch> {
        let b = rows.len();
        let d = self.dataset.feature_dim();
        let x = self.dataset.features();
        let labels: Vec<usize> = rows.iter().map(|&i| self.dataset.labels()[i]).collect();
        let mut real_xt = Tensor::zeros((b, d));
        let mut x_next = Tensor::zeros((b, d));
        let mut ts = Vec::with_capacity(b);
        for (i, &r) in rows.iter().enumerate() {
            let t = rng.random_range(0..self.sched.steps());
            let tr = self.sched.sample_transition(x.row(r), t, rng)?;
            real_xt.row_mut(i).assign(&ndarray::ArrayView1::from(&tr.x_t));
            x_next.row_mut(i).assign(&ndarray::ArrayView1::from(&tr.x_next));
            ts.push(t);
        }
        Ok(AdversarialBatch {
            real_x0: x.select(ndarray::Axis(0), rows),
            z: self.dataset.semantic_rows(&labels),
            labels,
            real_xt,
            x_next,
            ts,
            gen_noise: gaussian(rng, b, d),
            post_noise: gaussian(rng, b, d),
            interp_x0: (0..b).map(|_| rng.random::<f64>()).collect(),
            interp_xt: (0..b).map(|_| rng.random::<f64>()).collect(),
        })
    }

    /// One update of both critics; returns L_D.
    pub fn critic_step(&mut self, batch: &AdversarialBatch) -> Result<f64> {
        let gp = GpConfig {
            lambda_gp: self.config.lambda_gp,
        };
        let loss = total_critic_loss(&self.critic_x0, &self.critic_xt, &self.generator, &self.sched, batch, gp)?;
        if !loss.total.is_finite() {
            return Err(Error::Numeric(format!("critic loss is {}", loss.total)));
        }
        self.opt_cx0.step_net(self.critic_x0.net_mut(), &loss.x0.grads)?;
        self.opt_cxt.step_net(self.critic_xt.net_mut(), &loss.xt.grads)?;
        Ok(loss.total)
    }

    /// Value and θ-gradient of L_adv (+ λ·L_cue when cues are on).
    pub fn generator_objective(&self, batch: &AdversarialBatch) -> Result<(GenStep, Vec<f64>)> {
        let mut tape = Tape::new();
        let bound = self.generator.net().bind(&mut tape, true);
        let (x0, xt) = synthesize_on_tape(&mut tape, &self.generator, &bound, &self.sched, batch)?;
        let adv = generator_adv_terms(&mut tape, x0, xt, &self.critic_x0, &self.critic_xt, batch)?;
        let cue = cue_loss_on_tape(&mut tape, self.config.cue_variant, x0, &batch.labels, self.prototypes)?;
        let total = if self.config.use_cues {
            generator_total_on_tape(&mut tape, adv, cue, &self.config.cue_config())
        } else {
            adv
        };
        let grads = tape.grad(total, &bound.params())?;
        let step = GenStep {
            adv: tape.scalar(adv),
            cue: tape.scalar(cue),
        };
        if !tape.scalar(total).is_finite() {
            return Err(Error::Numeric(format!("generator loss is {}", tape.scalar(total))));
        }
        Ok((step, flatten_grads(&tape, &grads)))
    }

    /// One adversarial generator update.
    pub fn generator_step(&mut self, batch: &AdversarialBatch) -> Result<GenStep> {
        let (step, grads) = self.generator_objective(batch)?;
        self.opt_adv.step_net(self.generator.net_mut(), &grads)?;
        Ok(step)
    }

    /// Rewards on x̃_0 of `batch`, the advantages the current baseline
    /// assigns to them (updating the baseline unless raw rewards are used),
    /// and the θ-gradient of the RL loss.
    pub fn rl_objective(&mut self, batch: &AdversarialBatch) -> Result<(AdvantageBatch, Vec<f64>)> {
        let local = self.dataset.seen_local_labels(&batch.labels)?;
        let mut tape = Tape::new();
        let bound = self.generator.net().bind(&mut tape, true);
        let x0 = self.generator.forward_tape(
            &mut tape,
            &bound,
            &batch.gen_noise,
            &batch.z,
            &batch.x_next,
            &batch.next_steps(),
        )?;
        let log_probs = self.reward.log_prob_on_tape(&mut tape, x0, &local)?;
        let rewards: Vec<f64> = tape.value(log_probs).iter().copied().collect();
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numeric("non-finite reward".into()));
        }
        let adv = if self.config.raw_reward {
            AdvantageBatch::raw(rewards)
        } else {
            self.baseline.update(&rewards)?;
            advantage(&rewards, &self.baseline)
        };
        let loss = rl_loss_on_tape(&mut tape, &adv, log_probs)?;
        let grads = tape.grad(loss, &bound.params())?;
        Ok((adv, flatten_grads(&tape, &grads)))
    }

    /// One RL generator update with the separate optimizer.
    pub fn rl_step(&mut self, batch: &AdversarialBatch) -> Result<RlStep> {
        let (adv, grads) = self.rl_objective(batch)?;
        self.opt_rl.step_net(self.generator.net_mut(), &grads)?;
        Ok(RlStep {
            reward_mean: adv.mean_reward(),
            advantage_mean: adv.mean_advantage(),
        })
    }

    /// Run epoch `epoch` (0-based) and append its counters and metrics row.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<&MetricsRow> {
        let seed = self.config.seed;
        let mut rng = sub_stream(seed, Stream::Train, epoch as u64);
        let mut rl_rng = sub_stream(seed, Stream::Rl, epoch as u64);
        let rl_on = self.config.rl_active(epoch);
        let mut counters = EpochCounters::default();
        let writes_before = self.baseline.writes();
        let (mut critic, mut adv, mut cue, mut rewards, mut advs) = (vec![], vec![], vec![], vec![], vec![]);

        for batch_index in 0..self.batches_per_epoch() {
            let at = |e: Error| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {batch_index}: {m}")),
                other => other,
            };
            let rows = self.sample_rows(&mut rng);
            for _ in 0..self.config.critic_steps {
                let batch = self.draw_batch(&rows, &mut rng)?;
                critic.push(self.critic_step(&batch).map_err(at)?);
                counters.critic += 1;
            }
            let batch = self.draw_batch(&rows, &mut rng)?;
            let g = self.generator_step(&batch).map_err(at)?;
            adv.push(g.adv);
            cue.push(g.cue);
            counters.gen_adv += 1;
            if rl_on {
                let batch = self.draw_batch(&rows, &mut rl_rng)?;
                let r = self.rl_step(&batch).map_err(at)?;
                rewards.push(r.reward_mean);
                advs.push(r.advantage_mean);
                counters.rl += 1;
            }
        }
        counters.ema_writes = self.baseline.writes() - writes_before;
        self.generator.net().check_finite().map_err(|_| {
            Error::Numeric(format!("epoch {epoch}: generator parameters became non-finite"))
        })?;

        let report = self.report_due(epoch).then(|| self.evaluate()).transpose()?;
        let ema = if rl_on && !self.config.raw_reward {
            self.baseline.value()
        } else {
            f64::NAN
        };
        self.counters.push(counters);
        self.metrics.push(MetricsRow {
            epoch,
            raw_reward_mean: mean(&rewards),
            ema_baseline: ema,
            advantage_mean: mean(&advs),
            critic_loss: mean(&critic),
            gen_adv_loss: mean(&adv),
            pd_loss: mean(&cue),
            czsl_acc: report.map_or(f64::NAN, |r| r.acc),
            gzsl_u: report.map_or(f64::NAN, |r| r.u),
            gzsl_s: report.map_or(f64::NAN, |r| r.s),
            gzsl_h: report.map_or(f64::NAN, |r| r.h),
        });
        Ok(self.metrics.last().expect("just pushed"))
    }

    fn report_due(&self, epoch: usize) -> bool {
        let n = self.config.eval_interval;
        n > 0 && ((epoch + 1).is_multiple_of(n) || epoch + 1 == self.config.epochs)
    }

    /// Evaluate the current generator on the dataset's test splits.
    pub fn evaluate(&self) -> Result<EvalReport> {
        evaluate_generator(
            &self.generator,
            &self.sched,
            self.dataset,
            &self.config.eval_config(),
            self.config.seed,
        )
    }

    /// Write generator and critic checkpoints plus the metrics log to `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(self.generator.net(), CheckpointKind::Generator, &dir.join(GENERATOR_FILE))?;
        checkpoint::save(self.critic_x0.net(), CheckpointKind::CriticX0, &dir.join(CRITIC_X0_FILE))?;
        checkpoint::save(self.critic_xt.net(), CheckpointKind::CriticXt, &dir.join(CRITIC_XT_FILE))?;
        write_metrics(&self.metrics, &dir.join(METRICS_FILE))
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            generator: self.generator,
            critic_x0: self.critic_x0,
            critic_xt: self.critic_xt,
            metrics: self.metrics,
            counters: self.counters,
            baseline: self.baseline,
        }
    }
}

pub const GENERATOR_FILE: &str = "generator.ckpt";
pub const CRITIC_X0_FILE: &str = "critic_x0.ckpt";
pub const CRITIC_XT_FILE: &str = "critic_xt.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn write_metrics(rows: &[MetricsRow], path: &Path) -> Result<()> {
    fs::write(path, metrics_text(rows)).map_err(|e| Error::io(path, e))
}

/// Train from scratch. With `out` set, artifacts are written every
/// `checkpoint_interval` epochs and at completion; on a numeric failure the
/// last written artifacts are left untouched.
pub fn train(
    dataset: &ZslDataset,
    reward: &RewardModel,
    prototypes: &VisualPrototypeTable,
    config: TrainConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, reward, prototypes, config)?;
    let epochs = trainer.config().epochs;
    let interval = trainer.config().checkpoint_interval;
    for epoch in 0..epochs {
        let row = trainer.run_epoch(epoch)?;
        log::info!(
            "epoch {epoch}: critic {:.4} adv {:.4} cue {:.4} reward {:.4}",
            row.critic_loss,
            row.gen_adv_loss,
            row.pd_loss,
            row.raw_reward_mean
        );
        if let Some(dir) = out {
            let last = epoch + 1 == epochs;
            if last || (interval > 0 && (epoch + 1) % interval == 0) {
                trainer.write_artifacts(dir)?;
            }
        }
    }
    Ok(trainer.into_outcome())
}

/// Load a generator checkpoint for features of width `feature_dim`.
pub fn load_generator(path: &Path, feature_dim: usize) -> Result<Generator> {
    let net = checkpoint::load(path, CheckpointKind::Generator)?;
    Generator::from_checkpoint_net(net, feature_dim).map_err(|e| match e {
        Error::Config(m) => Error::invalid(path, m),
        other => other,
    })
}

pub fn save_generator(gen: &Generator, path: &Path) -> Result<()> {
    checkpoint::save(gen.net(), CheckpointKind::Generator, path)
}
