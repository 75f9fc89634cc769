#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod born;
pub mod classical;
pub mod discrete;
pub mod ensemble;
pub mod error;
pub mod grid;
pub mod hilbert;
pub mod io;
pub mod lindblad;
pub mod models;
pub mod phase;
pub mod qbm;
pub mod stats;
