//! Monitored two-qubit entanglement under local Hamiltonian noise.
//!
//! Stochastic trajectories (Kraus and Itô backends), optimal-path machinery,
//! weak-coupling analytics and ensemble statistics.

pub mod diagram;
pub mod ensemble;
pub mod error;
pub mod extremal;
pub mod kraus;
pub mod ode;
pub mod rng;
pub mod rotation;
pub mod sde;
pub mod state;

pub use error::{Error, Result};
pub use kraus::{ReadoutPair, SimParams, TrajectoryRecord, UnitaryNoisePair};
pub use state::{concurrence, concurrence_sq, normalize, Concurrence, ErgodicAngles, PureStateReal4};
