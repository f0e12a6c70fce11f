//! Deterministic engine for a tokenized investment fund.
//!
//! Each rebalance event prices the fund, levies management and
//! high-water-mark performance fees by minting fund tokens, nets queued
//! deposits and withdrawals against flow caps, and settles trading
//! slippage through the treasury. Three aggregated performance-fee schemes
//! are provided, together with a lot-level calculator used to check them.
//!
//! All protocol math is scale-18 fixed point; nothing here touches floats
//! or performs IO, so the crate builds without `std`.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// Arithmetic is checked and returns Result, so the operator traits do not fit.
#![allow(clippy::should_implement_trait)]

extern crate alloc;

pub mod decimal;
pub mod diff;
pub mod engine;
pub mod error;
pub mod fees;
pub mod netting;
pub mod oracle;
pub mod quantity;
pub mod slippage;
pub mod state;

pub use decimal::{Decimal, MathError, Rounding};
pub use error::{EngineError, Result};
pub use quantity::{Price, Tokens, Usd};
