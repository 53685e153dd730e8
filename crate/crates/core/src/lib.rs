//! Learning and adapting orientation trajectories on SO(3).
//!
//! Demonstrations are projected into the Angle-Axis Space around an auxiliary
//! frame, encoded with a Gaussian mixture, reproduced by kernelized regression
//! and adapted to full or incomplete orientation via-points. Trajectories
//! learned around different frames are fused with a memory-based weighted
//! rotation average that stays continuous across the π boundary.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fusion;
pub mod gmm;
pub mod io;
pub mod kmp;
pub mod pipeline;
pub mod rotavg;
pub mod so3;
pub mod synth;

pub use error::{Error, Result};
pub use so3::{exp_map, geodesic_distance, log_map, AngleAxis, Rotation};
