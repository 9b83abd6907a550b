//! Trajectory optimization of repeated arm motions with actuator fatigue.
//!
//! Each torque actuator of a planar two-link arm carries a three-compartment
//! fatigue model (resting, active and fatigued capacity). The optional
//! invariant stabilizer keeps the compartment sum at one under numerical
//! drift. The coupled system is transcribed by direct multiple shooting and
//! solved with a sparse SQP method, either as one problem over all
//! repetitions or as a sliding 3-cycle window.
//!
//! | module | contents |
//! |---|---|
//! | [`fatigue`] | compartment model, controller, stabilized rates |
//! | [`integrate`] | adaptive Dormand–Prince and fixed-step RK4 |
//! | [`arm`] | two-link rigid-body dynamics |
//! | [`studies`] | constant-load forward simulations |
//! | [`transcription`] | multiple-shooting NLP and cost evaluation |
//! | [`nlp`] | SQP solver |
//! | [`horizon`] | full- and sliding-horizon protocols, run analysis |
//! | [`config`], [`report`], [`plot`], [`cli`] | run configuration and artifacts |

// Negated comparisons deliberately reject NaN in parameter validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arm;
pub mod cli;
pub mod config;
pub mod error;
pub mod fatigue;
pub mod horizon;
pub mod integrate;
pub mod nlp;
pub mod plot;
pub mod report;
pub mod studies;
pub mod transcription;

pub use error::{Error, Result};
