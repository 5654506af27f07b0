//! Approximate diagnosability of incrementally stable control systems via
//! finite symbolic abstractions.

pub mod expr;
pub mod kfun;
pub mod lattice;
pub mod regions;
pub mod fixtures;
pub mod system;
pub mod finsys;
pub mod abstraction;
pub mod diagnosis;
pub mod bridge;
pub mod report;
pub mod bench;
pub mod cli;
