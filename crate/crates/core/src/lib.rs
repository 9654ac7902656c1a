//! Tempo analysis of recorded performances.
//!
//! A performance is a sequence of note-by-note tempos. Each note is played in
//! one of four behaviors (constant, slowing down, speeding up, stressed) and
//! the tempo evolves as a switching linear-Gaussian state space model. The
//! crate filters and smooths that model, searches the discrete behavior path
//! with a beam of Kalman filters, fits the parameters by penalized maximum
//! likelihood, and compares performers by clustering their fitted parameters.
//!
//! | module | contents |
//! |---|---|
//! | [`lgssm`] | Kalman filter, likelihood, smoother |
//! | [`tempo_model`] | behaviors, dynamics, priors, simulation |
//! | [`dpf`] | discrete particle filter over behavior paths |
//! | [`estimate`] | parameter fitting and inference |
//! | [`cluster`] | parameter distances, outlier screen, hierarchical clustering |
//! | [`io`] | file formats |

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cluster;
pub mod dpf;
pub mod error;
pub mod estimate;
pub mod io;
pub mod lgssm;
pub mod linalg;
pub mod optim;
pub mod tempo_model;

pub use error::{Error, Result};
pub use estimate::{fit, infer, FitConfig, FittedPerformance, Inference};
pub use tempo_model::{BehaviorState, ExpandedNode, InitBelief, ScoreEvent, ThetaTempo};
