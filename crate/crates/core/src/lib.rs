//! Bayesian open-population mark-recapture with two unlinkable photo marks.
//!
//! Individuals are photographed on the left or right side, and the two sides
//! cannot be linked directly, so one animal may appear as several encounter
//! histories. This crate models the observed histories as deterministic
//! functions of latent true histories: a left-only and a right-only history
//! may be two views of one individual, and the latent counts of such merged
//! histories are sampled jointly with the demographic parameters of an
//! open-population survival/recruitment model conditioned on first capture.
//!
//! The pieces, bottom to top:
//!
//! - [`histories`]: encounter-history algebra: parsing, classification,
//!   splitting unobservable histories into observed parents, combining
//!   parents into children, and the latent constraint structure.
//! - [`model`]: cell probabilities, multinomial likelihood over latent
//!   counts, and the prior stack.
//! - [`sampler`]: Metropolis-within-Gibbs over latent counts and
//!   parameters, with a constraint-preserving pairwise latent kernel and a
//!   null-space alternative.
//! - [`simulator`]: synthetic datasets from known parameters.
//! - [`baselines`]: one-sided collapsed fits and pooled combined inference.
//! - [`diagnostics`]: posterior summaries, convergence diagnostics, and
//!   simulation-study scoring.
//! - [`io`]: plain-text file formats for histories, chains, summaries,
//!   truths, scores, and scenario configs.
//!
//! Numerics are generic over the scalar type through [`scalar::Real`]
//! (implemented for `f32` and `f64`); the crate root exports `f64` aliases
//! of the generic types, which is what the command-line tools use.

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod histories;
pub mod io;
pub mod model;
pub mod sampler;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use histories::{
    classify, combine, count_history_spaces, parse_history, split_unobservable, EncounterHistory,
    Event, LatentStructure, ObservedClass, ObservedData,
};
pub use model::{EventLayer, LatentCounts};
pub use sampler::{run_chain, run_chains, LatentKernel, SamplerConfig};
pub use baselines::{BinaryData, Side};

/// `f64` instantiations of the generic model and inference types.
pub type Theta = model::Theta<f64>;
pub type Hyper = model::Hyper<f64>;
pub type PriorConfig = model::PriorConfig<f64>;
pub type Model = model::Model<f64>;
pub type CellTables = model::CellTables<f64>;
pub type Chain = sampler::Chain<f64>;
pub type SimScenario = simulator::SimScenario<f64>;
pub type SimResult = simulator::SimResult<f64>;
pub type ParamSummary = diagnostics::ParamSummary<f64>;
pub type PosteriorSummary = diagnostics::PosteriorSummary<f64>;
pub type ReplicateTruth = diagnostics::ReplicateTruth<f64>;
pub type FamilyScore = diagnostics::FamilyScore<f64>;
pub type StudyScore = diagnostics::StudyScore<f64>;
pub type PriorPredictiveConfig = diagnostics::PriorPredictiveConfig<f64>;
