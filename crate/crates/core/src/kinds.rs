use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How the master algorithm boosts a probabilistic primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Repeat until success.
    Prob,
    /// Amplitude amplification.
    Coh,
}

impl Strategy {
    /// Exponent of the inverse success probability in the query cost.
    pub fn mu(self) -> f64 {
        match self {
            Strategy::Prob => 1.0,
            Strategy::Coh => 0.5,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Prob => "prob",
            Strategy::Coh => "coh",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(Strategy::Prob),
            "coh" => Ok(Strategy::Coh),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        }
    }
}

/// Which imaginary-time primitive is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    /// Qubitized block-encoding oracle plus Chebyshev QSP.
    P1,
    /// Controlled real-time evolution plus Fourier QSP.
    P2,
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Primitive::P1 => "p1",
            Primitive::P2 => "p2",
        })
    }
}

impl FromStr for Primitive {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Primitive::P1),
            "p2" => Ok(Primitive::P2),
            _ => Err(Error::InvalidArgument(format!("unknown primitive `{s}`"))),
        }
    }
}

/// Whether a schedule targets a pure state at β or a Gibbs state (QITE at β/2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pure,
    Gibbs,
}

impl Mode {
    pub fn total_beta(self, beta: f64) -> f64 {
        match self {
            Mode::Pure => beta,
            Mode::Gibbs => 0.5 * beta,
        }
    }
}

/// Rounds a continuous query estimate up to the next even integer.
pub fn even_ceil(x: f64) -> u64 {
    if !(x > 0.0) {
        return 0;
    }
    2 * (x / 2.0).ceil() as u64
}
