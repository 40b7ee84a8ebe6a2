//! Network design for autonomous mobility-on-demand: choose which road edges
//! to instrument and how to route passenger flow, solved by column generation
//! with exact resource-constrained shortest-path pricing.

pub mod lp;
pub mod network;
pub mod master;
pub mod pricing;
pub mod colgen;
pub mod mip;
pub mod oracle;
pub mod random;
