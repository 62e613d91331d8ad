//! Core library for the glimpse lab: continuous 2D token scenes, saccade
//! episodes, a GRU next-label predictor with a from-scratch reverse-mode
//! tape, symbolic dictionary/cache baselines, linear decoding probes, and
//! in-context interventions.

pub mod interventions;
pub mod par;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod probes;
pub mod stats;
pub mod worldgen;

pub use model::{ModelConfig, ModelParams};
pub use worldgen::{Episode, Scene, Step, Token, TrainConstraint, Vec2};
