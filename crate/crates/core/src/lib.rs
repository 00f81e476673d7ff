//! Fragmented quantum imaginary-time evolution: primitives, pulse synthesis,
//! schedules and complexity accounting.

pub mod bounds;
pub mod error;
pub mod funcapprox;
pub mod hamiltonians;
pub mod kinds;
pub mod master;
pub mod parity;
pub mod poly;
pub mod qsp;
pub mod schedules;
pub mod simulator;

pub use error::{Error, Result};
pub use hamiltonians::{HamiltonianClass, HamiltonianSpec, InputState, Spectrum};
pub use kinds::{Mode, Primitive, Strategy};
