//! Two-channel scattering of a two-level atom crossing two separated laser
//! barriers, solved exactly with 4x4 transfer matrices and compared against
//! the semiclassical, direct-scattering and ultracold approximations.
//!
//! See the `book/` directory for a guided tour; the chapters' code blocks
//! run as doc-tests of this crate.

pub mod approx;
pub mod barrier;
pub mod double_barrier;
pub mod kinematics;
pub mod slicing;
pub mod sweep;

mod error;

pub use error::Error;
pub use kinematics::{ChannelKinematics, PhysicalParams};

/// Ready-made parameter sets used throughout the docs and tests.
pub mod presets {
    use crate::kinematics::PhysicalParams;
    use std::f64::consts::PI;

    /// Fast-atom interference demo: kinetic energy about 3.2 times the Rabi
    /// energy, fringes dominated by the two direct scattering paths.
    pub fn direct_regime(delta: f64) -> PhysicalParams {
        PhysicalParams { k: 1.0, omega: PI / 20.0, delta, width: 1.0, gap: 25.0 }
    }

    /// Ultracold resonance demo: kinetic energy about 1e-4 of the Rabi
    /// energy, transmission dominated by inter-barrier resonances.
    pub fn ultracold_regime(delta: f64) -> PhysicalParams {
        PhysicalParams { k: 0.1, omega: 15.0 * PI, delta, width: 1.2, gap: 25.0 }
    }
}
