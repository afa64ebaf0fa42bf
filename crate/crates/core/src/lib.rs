//! Measurement backaction on donor nuclear spins during spin readout.
//!
//! A donor cluster of `m` phosphorus nuclei shares one electron that tunnels
//! to and from a charge sensor (SET). Each tunnelling event projects the
//! electron and leaves the nuclei in a slightly rotated state, so repeated
//! readout slowly flips them. This crate models that process three ways:
//!
//! * [`lindblad`] propagates the density matrix under the tunnelling master
//!   equation,
//! * [`trajectory`] unravels the same dynamics into quantum jumps,
//! * [`analytics`] gives the closed-form flip and flip-flop probabilities.
//!
//! ```
//! use donor_backaction::{simulate, PulseSchedule, SpinSystemSpec};
//!
//! let spec = SpinSystemSpec::single_donor(117.0)?;
//! let sim = simulate(&spec, &PulseSchedule::standard_readout(), &"e4".parse()?)?;
//! let p = sim.flip(0);
//! assert!(p > 1e-6 && p < 1e-5);
//! # Ok::<(), donor_backaction::Error>(())
//! ```
//!
//! Frequencies at the API boundary are in MHz and times in microseconds.
//! Hamiltonians are stored in rad/us.

pub mod analytics;
pub mod eigen;
pub mod error;
pub mod expm;
mod linalg;
pub mod lindblad;
pub mod pulse;
pub mod scenario;
pub mod spin;
pub mod state;
pub mod trajectory;

pub use analytics::{backaction_budget_2p, flip_probability, flipflop_probability, schrieffer_wolff_2p};
pub use eigen::{eigendecompose, EigenSystem};
pub use error::{Error, Result};
pub use lindblad::{build_liouvillian, propagate, Liouvillian, TimeSeries};
pub use pulse::{build_lindblads, LindbladSet, PulseKind, PulseSchedule};
pub use scenario::{simulate, PreparedSystem, Simulation};
pub use spin::{NuclearConfig, SpinSystemSpec};
pub use state::{DensityMatrix, StateLabel};
pub use trajectory::{run_trajectories, TrajectoryConfig, TrajectoryEstimate};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/master-equation.md")]
    mod master_equation {}
    #[doc = include_str!("../../../book/src/closed-forms.md")]
    mod closed_forms {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/sweeps.md")]
    mod sweeps {}
}
