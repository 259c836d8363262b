//! Simulator and analysis library for a device-independent quantum private
//! query (DI-QPQ) protocol.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmath`]: exact 2×2 complex linear algebra, trace norm, fidelity and
//!   the Helstrom optimum for two-state discrimination.
//! * [`bases`]: the protocol's measurement bases and three-outcome POVMs, and
//!   Born-rule sampling on EPR pairs.
//! * [`chsh`]: the CHSH self-test used to certify the shared pairs.
//! * [`protocol`]: the honest-party state machine (verification, key
//!   establishment, POVM device tests, post-processing, private query).
//! * [`adversary`]: dishonest client and server strategies measured against
//!   their analytic bounds.
//! * [`bounds`]: closed-form leakage quantities and the θ sweep.
//! * [`rng`]: seedable, splittable random streams.

pub mod adversary;
pub mod bases;
pub mod bounds;
pub mod chsh;
mod error;
pub mod protocol;
pub mod qmath;
pub mod rng;

pub use adversary::{AttackKind, AttackReport};
pub use bases::{MeasBasis, Povm3, Theta};
pub use bounds::{SecuritySummary, SweepRow};
pub use chsh::{ChshReport, ChshRound, Referee};
pub use error::{AbortReason, ConfigError, QpqError, Result};
pub use protocol::{
    Database, DeviceModel, KeyMaterial, ProtocolConfig, QueryOutcome, Transcript, Trit,
};
pub use qmath::{Complex64, Operator2, PureState};
pub use rng::{SimRng, StreamSeed};
