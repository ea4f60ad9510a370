//! Performance model for entanglement-based QKD over two satellite links.
//!
//! A source emits photon pairs towards Alice and Bob. Each link is reduced
//! to a [`channel::DerivedChannel`]; two channels give a sifted key rate in
//! closed form and an average QBER by quadrature. The [`oracle`] module
//! re-derives both by sampling and exact enumeration, and [`experiment`]
//! drives configurations, sweeps and CSV output.
//!
//! ```
//! use satqkd::experiment::{run_point, ScenarioConfig};
//!
//! let report = run_point(&ScenarioConfig::default()).unwrap();
//! println!("{:.3} bit/s at QBER {:.2e}", report.key_rate_per_second, report.qber);
//! ```

pub mod channel;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod performance;
pub mod photon;
pub mod power_law;
pub mod quadrature;

pub use channel::{derive_channel, DerivedChannel, LinkGeometry, ReceiverParams, SourceParams};
pub use error::{ModelError, Result};
pub use performance::{analytic_report, PerformanceReport, QuadConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/link-geometry.md")]
    pub mod link_geometry {}
    #[doc = include_str!("../../../book/src/photon-statistics.md")]
    pub mod photon_statistics {}
    #[doc = include_str!("../../../book/src/key-rate-and-qber.md")]
    pub mod key_rate_and_qber {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    pub mod oracles {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
