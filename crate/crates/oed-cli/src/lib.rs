//! Command-line front end for the `oed` toolkit.
//!
//! The binary wires TOML run configurations to the library pipeline:
//! expected-information-gain scans, stochastic design optimization,
//! polynomial chaos surrogate construction, DRAM posterior sampling,
//! estimator bias studies, and the acceptance validation suite. Every
//! artifact embeds the resolved configuration and master seed, so each
//! output file can be reproduced bit-for-bit from its own header.

pub mod artifact;
pub mod config;
pub mod run;
pub mod validate;
