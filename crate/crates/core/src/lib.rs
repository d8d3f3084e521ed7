//! Instrumented BGV homomorphic encryption with an average-case noise model.
//!
//! The crate is organised bottom-up:
//!
//! * [`ring`]: exact arithmetic in `Z_q[x]/(x^n+1)` and samplers
//! * [`bgv`]: the scheme, GHS key switching and modulus switching, with
//!   extraction of the critical quantity `ν = [c0 + c1·s]_q`
//! * [`noise`]: closed-form variance estimates and canonical-norm bounds
//! * [`circuit`]: product-tree and custom circuits, predicted and executed
//! * [`stats`]: normality battery, moment oracles and comparison tables
//! * [`params`]: modulus-chain planning and prime search

pub mod arith;
pub mod bgv;
pub mod circuit;
pub mod error;
pub mod noise;
pub mod params;
pub mod ring;
pub mod stats;

pub use error::{Error, Result};
