//! Transient-stability simulation of multi-machine power systems and
//! individual-machine equal-area assessment of the resulting swings.

pub mod assessment;
pub mod case;
pub mod dynamics;
pub mod format;
pub mod imeac;
pub mod network;
pub mod testcases;

pub use case::{load_case, load_case_file, ts1, PowerSystemCase};
pub use network::StagedNetwork;
