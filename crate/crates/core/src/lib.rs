//! Simulation and verification toolkit for Oppenheim-type digit expansions.
//!
//! The crate covers the model itself ([`model`]), the classical digit
//! algorithms ([`expansion`]), chain sampling ([`sampler`]), closed-form and
//! quadrature oracles for the dominating law ([`analytic`]), weighted-sum
//! statistics with their diagnostics ([`law`]) and Monte-Carlo inequality
//! checks ([`verify`]).

pub mod analytic;
pub mod digit;
pub mod error;
pub mod expansion;
pub mod law;
pub mod model;
pub mod quadrature;
pub mod rational;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use digit::Digit;
pub use error::{Error, Result};
pub use expansion::{expand, reconstruct, to_framework_digits, DigitSequence, Scheme};
pub use law::{StatSpec, StatisticSeries, TheoremId, TriangularArray, WeightScheme};
pub use model::{delta, r_from_digits, DistributionFamily, ModelSpec, Phi, QSpec};
pub use rational::Rational;
pub use rng::RngStreamKey;
pub use sampler::{sample_digit, sample_trajectory, sample_x_expansion, Mode, SamplerOptions, Trajectory};
pub use verify::{LemmaReport, McConfig, Verdict};
