//! Nonparametric inference from bivariate samples whose within-pair order is
//! not observed ("colour-blind" pairs).
//!
//! Only the pair minimum and maximum are recorded. From those the crate
//! estimates the pointwise minimum and maximum of the two marginal CDFs
//! ([`estimator`]), tests equality of the marginals with a symmetrized
//! empirical-process statistic ([`kstest`]) calibrated against a simulated
//! symmetrized Brownian pillow ([`pillow`]), and provides the simulation
//! studies used to validate all of the above ([`sim`]).

pub mod error;
pub mod estimator;
pub mod kstest;
pub mod pillow;
pub mod sample;
pub mod seed;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
pub use estimator::{HWeights, MarginalEstimate};
pub use kstest::TestReport;
pub use pillow::{PillowConfig, PillowSample, QuantileTable};
pub use sample::{Ecdf, EvalGrid, UnorderedPairSample};
pub use sim::{GeneratorSpec, StudyResult, StudySpec};

/// Version tag written into every JSON document this crate produces.
pub const SCHEMA_VERSION: u32 = 1;
