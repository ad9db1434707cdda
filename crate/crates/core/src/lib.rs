//! Lifetimes, coherence times and quantum beats of Rydberg excitons from
//! time-resolved emission: simulation, fitting and state assignment.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beats;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod io;
pub mod reproduce;
pub mod states;
pub mod units;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/states.md")]
    mod states {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/beats.md")]
    mod beats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
