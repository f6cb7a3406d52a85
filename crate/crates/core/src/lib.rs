//! Training-data augmentation for next-item recommendation.
//!
//! Every training pair is an input window `[i_j, .., i_{k-1}]` of one user's
//! history together with the item `i_k` that follows it. A sampling strategy is
//! described by three exponents `(alpha, beta, gamma)` that bias, in turn, which
//! user is drawn, which target position is drawn and where the input window
//! starts. The classical Last-Target, Multi-Target and Slide-Window constructions
//! are special cases of this family.
//!
//! The crate is organised as:
//!
//! * [`corpus`]: interaction logs, per-user sequences and leave-one-out splits.
//! * [`sampler`]: the three step distributions, their joint, enumeration of the
//!   classical strategies and seeded pair generation.
//! * [`seqaug`]: input-level baselines (insert, delete, replace, reorder, sample).
//! * [`diagnostics`]: target histograms, KL divergence, edit-distance similarity,
//!   alignment, discrimination and nearest-neighbour recall.
//! * [`search`]: the two-stage configuration filter.
//! * [`theorylab`]: synthetic position models and total-variation experiments.
//! * [`evaluator`]: closed-form reference recommenders and ranking metrics.

pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod evaluator;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod seqaug;
pub mod stats;
pub mod theorylab;

pub use corpus::{Corpus, Interaction, SplitCorpus, StatsReport, UserSequence, Vocabulary};
pub use diagnostics::{DiagOptions, DiagReport, EvalPair, Stage, TargetHistogram, TrainRepresentation};
pub use error::{Error, Result};
pub use evaluator::{EvalResult, ModelKind, ReferenceModel};
pub use sampler::{AugConfig, ExtExponent, PairSampler, ProbVector, Strategy, TrainingPair};
pub use search::{SearchOptions, SearchReport, SearchRow};
pub use seqaug::{AugKind, SeqAugSpec};
pub use theorylab::{BiasProfile, PositionModel, ProfileKind, TargetWeighting, TvSummary};

/// Dense item index.
pub type ItemId = u32;
