//! Reference oracles and property checks for the popsan crates.
//!
//! Every check panics on failure so it can be wrapped in a `#[test]` or run
//! from a custom harness. Oracle and finite-difference checks return the
//! largest relative error they observed.

pub mod fd;
pub mod hand_trace;
pub mod oracle;
pub mod properties;
pub mod tape;
