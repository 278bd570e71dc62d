//! Optimal consumption, investment and mutual insurance against systematic
//! longevity risk for a finite collective pension fund trading with an
//! infinitely large counterparty fund.
//!
//! The crate is organised bottom-up:
//!
//! - [`mortality`]: stylised and continuous-time CBD force-of-mortality models.
//! - [`preferences`]: Epstein–Zin preferences with mortality.
//! - [`stylized`]: closed-form solutions under the stylised model.
//! - [`hjb`]: Crank–Nicolson solver for the reduced HJB equations.
//! - [`pricing`]: endogenous insurance price, optimal controls, clearing.
//! - [`sim`]: Euler–Maruyama decumulation simulation and annuity benchmark.
//! - [`report`]: CSV/SVG writers shared by the command line driver.

pub mod error;
pub mod hjb;
pub mod mortality;
pub mod preferences;
pub mod pricing;
pub mod report;
pub mod sim;
pub mod stylized;

pub use error::{Error, Result};
pub use hjb::{PdeSolution, PowerLawFit, SolverConfig};
pub use mortality::{CbdParams, MortalityModel, StylizedParams};
pub use preferences::{Classification, Preferences};
pub use pricing::{ControlSet, MarketParams};
pub use sim::{PathEnsemble, SimConfig};
pub use stylized::{StylizedSolution, StylizedStatus};
