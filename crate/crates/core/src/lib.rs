//! Fairness-aware adversarial training at desk scale.
//!
//! The crate bundles a small reverse-mode autodiff engine, an MLP
//! classifier, L∞ PGD adversaries, the class-similarity weighting and
//! attack-policy machinery of TRIX, TRADES-family training loops, and the
//! class-wise fairness metrics used to compare them.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! pin the `f64` instantiation used by experiments.

pub mod attacks;
pub mod autodiff;
pub mod data;
pub mod epsilon;
pub mod error;
pub mod eval;
pub mod fairness;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use attacks::{pgd_attack, project_linf, sample_targets, AttackConfig, AttackMode};
pub use autodiff::{cross_entropy, kl_divergence, Gradients, Tape, Var};
pub use data::{synth_gaussian_mixture, Dataset, SynthConfig};
pub use epsilon::Epsilon;
pub use error::{Error, Result};
pub use eval::{evaluate, Evaluation};
pub use fairness::{ClassWeights, PolicyAverage, SimilarityMatrix};
pub use models::{Checkpoint, MlpClassifier};
pub use scalar::Scalar;
pub use tensor::{Tensor, TensorError};
pub use training::{train, train_with, EpochRecord, Method, RobustStats, TrainConfig, TrainOutcome};

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Mlp64 = MlpClassifier<f64>;
pub type Mlp32 = MlpClassifier<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
