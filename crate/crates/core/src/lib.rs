//! Multi-user MIMO detection laboratory.
//!
//! An uplink with `K` single-antenna users and `N_R` receive antennas is
//! detected by an adaptive decision-feedback receiver whose per-user
//! filters are trained with recursive least squares (RLS). Unreliable
//! soft estimates trigger a constellation-constrained candidate search
//! (`ccdet`), which picks the candidate whose rolled-out decision vector
//! best explains the received signal. Reference detectors (V-BLAST,
//! exhaustive ML, sphere decoding) bound its performance, and the `idd`
//! module closes a turbo loop with a (7,5) convolutional code.
//!
//! The `harness` module drives all of it in reproducible Monte-Carlo
//! experiments and writes CSV records.

pub mod ccdet;
pub mod channel;
pub mod dfdet;
mod error;
pub mod flops;
pub mod harness;
pub mod idd;
pub mod linalg;
pub mod modem;
pub mod refdet;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
