//! Resolved run configuration: built-in defaults, a named preset, an
//! optional `key = value` file, then command-line overrides, in that order.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cues::CueVariant;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::HeadConfig;
use crate::nn::softmax::SoftmaxTrainConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    Cub,
    Sun,
    Awa2,
    #[default]
    Synthetic,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cub" => Ok(Preset::Cub),
            "sun" => Ok(Preset::Sun),
            "awa2" => Ok(Preset::Awa2),
            "synthetic" => Ok(Preset::Synthetic),
            _ => Err(Error::Config(format!(
                "unknown preset '{s}' (expected cub, sun, awa2 or synthetic)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Cub => "cub",
            Preset::Sun => "sun",
            Preset::Awa2 => "awa2",
            Preset::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub standardize: bool,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    pub reward: SoftmaxTrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            preset: Preset::Synthetic,
            seed: 0,
            data_dir: None,
            out_dir: None,
            standardize: false,
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::default(),
            reward: SoftmaxTrainConfig {
                epochs: 30,
                learning_rate: 1e-2,
                batch_size: 64,
            },
        };
        c.apply_preset(Preset::Synthetic);
        c
    }
}

/// One documented configuration key.
pub struct KeyDoc {
    pub key: &'static str,
    pub help: &'static str,
}

macro_rules! keys {
    ($($k:literal => $h:literal),* $(,)?) => {
        &[$(KeyDoc { key: $k, help: $h }),*]
    };
}

/// Every key accepted in config files and `--set`.
pub const KEYS: &[KeyDoc] = keys![
    "preset" => "hyperparameter preset: cub, sun, awa2, synthetic",
    "seed" => "root seed for every random stream",
    "data_dir" => "dataset directory (four-file format)",
    "out_dir" => "output directory",
    "standardize" => "standardize features with train-row statistics",
    "n_seen" => "synthetic: seen classes",
    "n_unseen" => "synthetic: unseen classes",
    "d" => "synthetic: visual feature width",
    "d_z" => "synthetic: semantic prototype width",
    "samples_per_class" => "synthetic: samples drawn per class",
    "semantic_cluster_size" => "synthetic: classes sharing a semantic cluster",
    "semantic_jitter" => "synthetic: within-cluster prototype spread",
    "visual_separation" => "synthetic: minimum distance between class means",
    "visual_sigma" => "synthetic: per-class isotropic noise",
    "test_fraction" => "synthetic: share of seen samples held out",
    "epochs" => "training epochs",
    "rl_start_epoch" => "first epoch with RL updates (cold start)",
    "critic_steps" => "critic updates per minibatch",
    "batch_size" => "training minibatch size",
    "lr_adv" => "adversarial learning rate (critics and generator)",
    "lr_rl" => "RL learning rate (separate optimizer)",
    "lambda_pd" => "visual-cue loss weight",
    "lambda_gp" => "gradient-penalty weight",
    "ema_alpha" => "EMA baseline smoothing",
    "diffusion_steps" => "diffusion steps T",
    "beta_min" => "first noise variance",
    "beta_max" => "last noise variance",
    "synth_per_class" => "synthesized features per unseen class",
    "use_rl" => "enable the RL update",
    "use_cues" => "enable the visual-cue loss",
    "raw_reward" => "use raw rewards instead of EMA advantages",
    "cue_loss" => "cue loss variant: pd, kl, l1",
    "eval_interval" => "evaluate every n epochs (0 = never during training)",
    "checkpoint_interval" => "checkpoint every n epochs (0 = at the end only)",
    "reward_epochs" => "reward-model training epochs",
    "reward_lr" => "reward-model learning rate",
    "reward_batch_size" => "reward-model minibatch size",
    "classifier_epochs" => "CZSL/GZSL head epochs",
    "classifier_lr" => "CZSL/GZSL head learning rate",
    "classifier_batch_size" => "CZSL/GZSL head minibatch size",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

fn entries<'t>(text: &'t str, origin: &Path) -> Result<Vec<(usize, &'t str, &'t str)>> {
    let mut out = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", origin.display(), i + 1)))?;
        out.push((i + 1, k.trim(), v.trim()));
    }
    Ok(out)
}

fn path_value(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let mut c = Self::default();
        c.apply_preset(preset);
        c
    }

    /// Overwrite the preset-pinned keys.
    pub fn apply_preset(&mut self, preset: Preset) {
        self.preset = preset;
        let t = &mut self.train;
        match preset {
            Preset::Cub => {
                t.rl_start_epoch = 30;
                t.lambda_pd = 20.0;
                t.synth_per_class = 400;
                t.epochs = 500;
            }
            Preset::Sun => {
                t.rl_start_epoch = 30;
                t.lambda_pd = 1.0;
                t.synth_per_class = 400;
                t.epochs = 300;
            }
            Preset::Awa2 => {
                t.rl_start_epoch = 7;
                t.lambda_pd = 5.0;
                t.synth_per_class = 4000;
                t.epochs = 30;
            }
            Preset::Synthetic => {
                t.rl_start_epoch = 5;
                t.lambda_pd = 5.0;
                t.synth_per_class = 200;
                t.epochs = 80;
                t.eval_interval = 20;
            }
        }
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synthetic;
        let t = &mut self.train;
        match key {
            "preset" => self.apply_preset(value.trim().parse()?),
            "seed" => {
                self.seed = parse(key, value)?;
            }
            "data_dir" => self.data_dir = path_value(value),
            "out_dir" => self.out_dir = path_value(value),
            "standardize" => self.standardize = parse_bool(key, value)?,
            "n_seen" => s.n_seen = parse(key, value)?,
            "n_unseen" => s.n_unseen = parse(key, value)?,
            "d" => s.d = parse(key, value)?,
            "d_z" => s.d_z = parse(key, value)?,
            "samples_per_class" => s.samples_per_class = parse(key, value)?,
            "semantic_cluster_size" => s.semantic_cluster_size = parse(key, value)?,
            "semantic_jitter" => s.semantic_jitter = parse(key, value)?,
            "visual_separation" => s.visual_separation = parse(key, value)?,
            "visual_sigma" => s.visual_sigma = parse(key, value)?,
            "test_fraction" => s.test_fraction = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "rl_start_epoch" => t.rl_start_epoch = parse(key, value)?,
            "critic_steps" => t.critic_steps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr_adv" => t.lr_adv = parse(key, value)?,
            "lr_rl" => t.lr_rl = parse(key, value)?,
            "lambda_pd" => t.lambda_pd = parse(key, value)?,
            "lambda_gp" => t.lambda_gp = parse(key, value)?,
            "ema_alpha" => t.ema_alpha = parse(key, value)?,
            "diffusion_steps" => t.diffusion_steps = parse(key, value)?,
            "beta_min" => t.beta_min = parse(key, value)?,
            "beta_max" => t.beta_max = parse(key, value)?,
            "synth_per_class" => t.synth_per_class = parse(key, value)?,
            "use_rl" => t.use_rl = parse_bool(key, value)?,
            "use_cues" => t.use_cues = parse_bool(key, value)?,
            "raw_reward" => t.raw_reward = parse_bool(key, value)?,
            "cue_loss" => {
                t.cue_variant = value
                    .trim()
                    .parse::<CueVariant>()
                    .map_err(|e| Error::Config(format!("cue_loss: {e}")))?
            }
            "eval_interval" => t.eval_interval = parse(key, value)?,
            "checkpoint_interval" => t.checkpoint_interval = parse(key, value)?,
            "reward_epochs" => self.reward.epochs = parse(key, value)?,
            "reward_lr" => self.reward.learning_rate = parse(key, value)?,
            "reward_batch_size" => self.reward.batch_size = parse(key, value)?,
            "classifier_epochs" => t.head.epochs = parse(key, value)?,
            "classifier_lr" => t.head.learning_rate = parse(key, value)?,
            "classifier_batch_size" => t.head.batch_size = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Current value of `key` in the textual form accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.synthetic;
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "preset" => self.preset.to_string(),
            "seed" => self.seed.to_string(),
            "data_dir" => path(&self.data_dir),
            "out_dir" => path(&self.out_dir),
            "standardize" => self.standardize.to_string(),
            "n_seen" => s.n_seen.to_string(),
            "n_unseen" => s.n_unseen.to_string(),
            "d" => s.d.to_string(),
            "d_z" => s.d_z.to_string(),
            "samples_per_class" => s.samples_per_class.to_string(),
            "semantic_cluster_size" => s.semantic_cluster_size.to_string(),
            "semantic_jitter" => format!("{:?}", s.semantic_jitter),
            "visual_separation" => format!("{:?}", s.visual_separation),
            "visual_sigma" => format!("{:?}", s.visual_sigma),
            "test_fraction" => format!("{:?}", s.test_fraction),
            "epochs" => t.epochs.to_string(),
            "rl_start_epoch" => t.rl_start_epoch.to_string(),
            "critic_steps" => t.critic_steps.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr_adv" => format!("{:?}", t.lr_adv),
            "lr_rl" => format!("{:?}", t.lr_rl),
            "lambda_pd" => format!("{:?}", t.lambda_pd),
            "lambda_gp" => format!("{:?}", t.lambda_gp),
            "ema_alpha" => format!("{:?}", t.ema_alpha),
            "diffusion_steps" => t.diffusion_steps.to_string(),
            "beta_min" => format!("{:?}", t.beta_min),
            "beta_max" => format!("{:?}", t.beta_max),
            "synth_per_class" => t.synth_per_class.to_string(),
            "use_rl" => t.use_rl.to_string(),
            "use_cues" => t.use_cues.to_string(),
            "raw_reward" => t.raw_reward.to_string(),
            "cue_loss" => t.cue_variant.to_string(),
            "eval_interval" => t.eval_interval.to_string(),
            "checkpoint_interval" => t.checkpoint_interval.to_string(),
            "reward_epochs" => self.reward.epochs.to_string(),
            "reward_lr" => format!("{:?}", self.reward.learning_rate),
            "reward_batch_size" => self.reward.batch_size.to_string(),
            "classifier_epochs" => t.head.epochs.to_string(),
            "classifier_lr" => format!("{:?}", t.head.learning_rate),
            "classifier_batch_size" => t.head.batch_size.to_string(),
            _ => return None,
        })
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (line_no, k, v) in entries(text, origin)? {
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{}:{line_no}: {e}", origin.display())))?;
        }
        Ok(())
    }

    /// Resolve defaults < preset < file < overrides. The preset comes from
    /// the command line if given, else from the file's `preset` entry.
    pub fn resolve(
        preset: Option<Preset>,
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let text = match file {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        let mut file_entries = vec![];
        if let (Some(p), Some(text)) = (file, text.as_deref()) {
            file_entries = entries(text, p)?;
        }
        let file_preset = file_entries
            .iter()
            .rev()
            .find(|(_, k, _)| *k == "preset")
            .map(|(_, _, v)| v.trim().parse::<Preset>())
            .transpose()?;
        let mut c = Self::for_preset(preset.or(file_preset).unwrap_or_default());
        if let Some(p) = file {
            for (line_no, k, v) in file_entries.iter().filter(|(_, k, _)| *k != "preset") {
                c.set(k, v)
                    .map_err(|e| Error::Config(format!("{}:{line_no}: {e}", p.display())))?;
            }
        }
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        c.train.seed = c.seed;
        c.synthetic.seed = c.seed;
        Ok(c)
    }

    /// The fully resolved configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{} = {}\n", k.key, self.get(k.key).unwrap_or_default()))
            .collect()
    }

    pub fn head(&self) -> HeadConfig {
        self.train.head
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        if self.reward.epochs == 0 || self.reward.batch_size == 0 || self.reward.learning_rate.is_nan() || self.reward.learning_rate <= 0.0 {
            return Err(Error::Config("reward-model epochs, batch size and learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Documentation table for `--help`: key, default, description.
pub fn key_help() -> String {
    let defaults = RunConfig::default();
    let width = KEYS.iter().map(|k| k.key.len()).max().unwrap_or(0);
    let mut s = String::new();
    for k in KEYS {
        let dflt = defaults.get(k.key).unwrap_or_default();
        let dflt = if dflt.is_empty() { "(unset)".into() } else { dflt };
        s.push_str(&format!("  {:width$}  {} [default: {}]\n", k.key, k.help, dflt));
    }
    s
}
