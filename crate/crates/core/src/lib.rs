//! Detection and characterization of DNS reflection attacks in sampled
//! packet traces.

pub mod amplifiers;
pub mod cli;
pub mod detect;
pub mod dnsname;
pub mod error;
pub mod estimate;
pub mod fingerprint;
pub mod honeypot;
pub mod prefix;
pub mod selectors;
pub mod snoop;
pub mod stats;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
