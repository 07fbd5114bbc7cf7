//! Budget- and ROI-constrained bidding: market simulator, episodic
//! environment, hindsight oracle, regime belief filter, bidding agents and an
//! evaluation harness.

pub mod agents;
pub mod belief;
pub mod env;
pub mod error;
pub mod harness;
pub mod market;
pub mod math;
pub mod oracle;
pub mod rewards;

pub use error::{Error, Result};
