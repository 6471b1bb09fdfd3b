//! Multi-task sequence labeling with a hierarchical bi-LSTM.
//!
//! The crate covers the whole experimental loop: reading CoNLL corpora
//! ([`corpus`]), deriving frequency-bin auxiliary tasks ([`auxgen`]),
//! describing label distributions ([`diagnostics`]), a small reverse-mode
//! autodiff engine ([`tensor`]), the tagger itself ([`model`]), SGD
//! training and its protocols ([`training`]), metrics and significance
//! testing ([`evaluation`]) and config-driven experiment runs
//! ([`experiment`]).

pub mod auxgen;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
