//! Low-rank and hierarchical Tucker solvers for linear advection and
//! Vlasov-Poisson problems on uniform periodic grids.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dense;
pub mod error;
pub mod fields;
pub mod ht;
pub mod integrator;
pub mod io;
pub mod lowrank;
pub mod par;
pub mod reference;
pub mod scenarios;
pub mod stencil;

pub use error::{Error, Result};
