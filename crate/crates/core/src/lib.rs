//! Compiler and analysis toolkit for binarized neural networks implemented
//! as purely combinational gate netlists.
//!
//! The pipeline is [`model`] (source IR) → [`lower`] → [`netlist`] →
//! [`opt`], with [`reference`] as the bit-exact oracle, [`sim`] for
//! simulation and equivalence checking and [`cost`] for area models.

pub mod cost;
pub mod fixtures;
pub mod lower;
pub mod model;
pub mod netlist;
pub mod opt;
pub mod reference;
pub mod report;
pub mod sim;

#[cfg(test)]
pub(crate) mod testutil;
