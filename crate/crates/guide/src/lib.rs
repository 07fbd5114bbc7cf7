//! Doc-tests the code blocks of the mdBook guide in `book/src`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/market.md")]
pub mod market {}

#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}

#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}

#[doc = include_str!("../../../book/src/agent.md")]
pub mod agent {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
