use alloc::string::String;
use core::fmt;

use crate::decimal::MathError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EngineError {
    Math(MathError),
    /// NAV requested for a fund with no tokens outstanding.
    ZeroSupply,
    InvalidConfig(String),
    /// A ledger identity or tracker bound was broken.
    Integrity(String),
    /// Net amount of zero paired with nonzero trading proceeds.
    DegenerateSlippage,
    /// Raising the liability ratio above zero mid-run is refused.
    ModeSwitchRejected,
}

impl From<MathError> for EngineError {
    fn from(e: MathError) -> Self {
        EngineError::Math(e)
    }
}

impl fmt::Display for EngineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EngineError::Math(e) => write!(f, "math error: {e}"),
            EngineError::ZeroSupply => f.write_str("token supply is zero"),
            EngineError::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            EngineError::Integrity(m) => write!(f, "integrity violation: {m}"),
            EngineError::DegenerateSlippage => {
                f.write_str("net amount event is zero but rebalance proceeds are not")
            }
            EngineError::ModeSwitchRejected => {
                f.write_str("liability ratio cannot be raised above zero mid-run")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for EngineError {}

pub type Result<T> = core::result::Result<T, EngineError>;

pub(crate) fn integrity(msg: impl Into<String>) -> EngineError {
    EngineError::Integrity(msg.into())
}
