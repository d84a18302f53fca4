//! Feature-level generative zero-shot learning.
//!
//! A few-step diffusion generator is trained adversarially against two
//! WGAN-GP critics, then refined with policy-gradient updates driven by a
//! frozen classifier's log-probability reward and pulled toward class-wise
//! visual prototypes. Synthesized unseen-class features train the CZSL and
//! GZSL classifiers.
//!
//! Everything runs at `f64` on the CPU. Gradients come from the small
//! reverse-mode tape in [`nn::tape`], which supports differentiating through
//! its own backward pass (needed for the gradient penalty).

pub mod adversarial;
pub mod config;
pub mod cues;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod nn;
pub mod reward;
pub mod rng;
pub mod trainer;

pub use adversarial::{CriticX0, CriticXt, GpConfig, Generator};
pub use config::{Preset, RunConfig};
pub use cues::{CueConfig, CueVariant, VisualPrototypeTable};
pub use data::{SampleSplit, SyntheticSpec, ZslDataset};
pub use diffusion::DiffusionSchedule;
pub use error::{Error, Result};
pub use eval::{ClassifierHead, EvalReport};
pub use nn::{AdamConfig, AdamState, DenseNet, Tape, Tensor, Var};
pub use reward::{AdvantageBatch, EmaBaseline, RewardModel};
pub use trainer::{MetricsRow, TrainConfig, TrainOutcome};
