//! User-centric cell-free massive MIMO downlink simulator.
//!
//! The crate covers the whole pipeline of one coherence interval:
//!
//! - [`netmodel`]: AP grid, user drops, correlated shadowing, Gaussian local
//!   scattering correlation matrices and correlated Rayleigh channels.
//! - [`topology`]: serving clusters, CSI sharing sets, served-user sets and
//!   master APs.
//! - [`precoding`]: aggregated shared-CSI channels, their null spaces,
//!   partial zero-forcing precoder assembly and the pseudo-inverse baseline.
//! - [`dualopt`]: joint precoding and power control by dual decomposition,
//!   with a simulated CPU/AP scalar exchange.
//! - [`metrics`]: SINR, spectral efficiency and fronthaul overhead.
//! - [`harness`]: Monte Carlo experiments, sweeps, CSV output and SVG plots.

pub mod dualopt;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod netmodel;
pub mod precoding;
pub mod topology;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
