//! Combining the probability outputs of several binary classifiers.
//!
//! Three families of combiners are provided:
//!
//! * [`nn`]: a single dense layer with non-negative weights, a trainable
//!   shift and a sigmoid, trained with projected Adam;
//! * [`rules`]: the fixed sum / average / max / majority-vote rules;
//! * [`hybrid`]: a confident base model with a rule-based fallback.
//!
//! [`bound`] checks the weight-sum interval of a trained combiner, [`synth`]
//! produces calibrated synthetic classifier suites, [`eval`] runs the
//! repeated k-fold protocol and [`text`] is a toy bag-of-words classifier for
//! end-to-end runs. File formats live in [`io`], the command line in [`cli`].

pub mod bound;
pub mod cli;
pub mod error;
pub mod eval;
pub mod hybrid;
pub mod io;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rules;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
pub use model::{LabelVector, PredictionMatrix, SampleId, Series, Threshold};
