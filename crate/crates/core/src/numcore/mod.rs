//! Dense `f64` numerics, a small gradient tape, seeded random streams and a
//! finite-difference gradient checker.

pub mod gradcheck;
pub mod matrix;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tape;

pub use gradcheck::{grad_check, FnObjective, GradCheckReport, Objective};
pub use matrix::Matrix;
pub use params::{Grads, Param, ParamId, ParamStore};
pub use rng::{Prng, Stream};
pub use tape::{NodeGrads, NodeId, Tape};
