//! Count-valued marginal transforms for simulated data.

use alloc::format;

use crate::error::{Error, Result};
use crate::special::{gamma_quantile, poisson_quantile};

/// Marginal family of a simulated column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarginType {
    /// Zero with probability `pi0`, otherwise Poisson(`r`).
    ZeroInflatedPoisson,
    /// Rounded Gamma with shape 2 and scale `r`.
    DiscretizedGamma,
    Poisson,
}

impl MarginType {
    pub const ALL: [MarginType; 3] =
        [MarginType::ZeroInflatedPoisson, MarginType::DiscretizedGamma, MarginType::Poisson];

    /// Type assigned to 0-based column `j` by the cyclic plan.
    pub fn cyclic(j: usize) -> Self {
        Self::ALL[j % 3]
    }

    /// 1-based numeric code.
    pub fn code(self) -> u8 {
        match self {
            MarginType::ZeroInflatedPoisson => 1,
            MarginType::DiscretizedGamma => 2,
            MarginType::Poisson => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(MarginType::ZeroInflatedPoisson),
            2 => Ok(MarginType::DiscretizedGamma),
            3 => Ok(MarginType::Poisson),
            other => Err(Error::Invalid(format!("unknown margin type {other}, expected 1, 2 or 3"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MarginType::ZeroInflatedPoisson => "zip",
            MarginType::DiscretizedGamma => "gamma",
            MarginType::Poisson => "poisson",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == name)
            .ok_or_else(|| Error::Invalid(format!("unknown margin type {name:?}, expected zip, gamma or poisson")))
    }
}

/// Maps a probability `q` to a count under the given margin.
pub fn marginal_transform(q: f64, kind: MarginType, rate: f64, pi0: f64) -> Result<u64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("probability {q} outside [0, 1]")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("rate {rate} must be positive")));
    }
    Ok(match kind {
        MarginType::ZeroInflatedPoisson => {
            if !(0.0..1.0).contains(&pi0) {
                return Err(Error::Domain(format!("zero-inflation mass {pi0} outside [0, 1)")));
            }
            if q < pi0 {
                0
            } else {
                poisson_quantile(rate, (q - pi0) / (1.0 - pi0))
            }
        }
        MarginType::DiscretizedGamma => libm::round(gamma_quantile(2.0, rate, q)) as u64,
        MarginType::Poisson => poisson_quantile(rate, q),
    })
}
