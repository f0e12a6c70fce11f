//! Withdrawal slippage: tolerance halt, treasury-mediated settlement and
//! the alternative redemption price.

use core::cmp::Ordering;
use core::fmt;

use crate::decimal::{cmp_products, Decimal, MathError, Rounding};
use crate::error::{EngineError, Result};
use crate::quantity::{Price, Tokens, Usd};
use crate::state::FundState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HaltReason {
    /// Proceeds fell short of the net amount by more than the tolerance.
    SlippageTolerance { net_amount_event: Usd, proceeds: Usd, tolerance: Decimal },
    /// Negative slippage larger than the treasury's free stable coins.
    TreasuryStablesInsufficient { needed: Usd, available: Usd },
}

impl HaltReason {
    /// Stable machine-readable code for reports and exit messages.
    pub fn code(&self) -> &'static str {
        match self {
            HaltReason::SlippageTolerance { .. } => "slippage-tolerance",
            HaltReason::TreasuryStablesInsufficient { .. } => "treasury-stables-insufficient",
        }
    }
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HaltReason::SlippageTolerance { net_amount_event, proceeds, tolerance } => write!(
                f,
                "manual intervention required: proceeds {proceeds} against net amount {net_amount_event} exceed slippage tolerance {tolerance}"
            ),
            HaltReason::TreasuryStablesInsufficient { needed, available } => write!(
                f,
                "manual intervention required: treasury holds {available} stable coins, {needed} needed"
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Settlement {
    /// Zero slippage; nothing moved.
    None,
    BurnedFromTreasury { tokens: Tokens },
    MintedToTreasury { tokens: Tokens },
    /// The treasury ran out of tokens to burn; `carry` is reinvested next event.
    PartialBurnWithCarry { tokens: Tokens, carry: Usd },
    Halted(HaltReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlippageOutcome {
    pub proceeds: Usd,
    pub slippage: Usd,
    pub settlement: Settlement,
}

/// `None` when within tolerance. Halts iff
/// `(|proceeds| − |net|) / |net| < −tolerance`, evaluated without rounding.
pub fn check_slippage_tolerance(
    net_amount_event: Usd,
    proceeds: Usd,
    tolerance: Decimal,
) -> Result<Option<HaltReason>> {
    let net = net_amount_event.abs()?;
    let got = proceeds.abs()?;
    if net.is_zero() {
        if got.is_zero() {
            return Ok(None);
        }
        return Err(EngineError::DegenerateSlippage);
    }
    // (got − net) < −tol · net   ⇔   (got − net)·1 < (−tol)·net
    let diff = got.sub(net)?;
    let halt = cmp_products(diff.0, Decimal::ONE, tolerance.neg()?, net.0) == Ordering::Less;
    Ok(halt.then_some(HaltReason::SlippageTolerance { net_amount_event, proceeds, tolerance }))
}

pub fn compute_slippage(net_amount_event: Usd, proceeds: Usd) -> Result<Usd> {
    Ok(proceeds.abs()?.sub(net_amount_event.abs()?)?)
}

/// Settle `slippage` against the treasury at `nav_ref`, the fee-adjusted
/// NAV of the event. Positive slippage is paid to the treasury, which burns
/// the matching tokens; negative slippage is covered from treasury stable
/// coins in exchange for newly minted tokens. A halt leaves `state` as-is.
pub fn settle_slippage(
    state: &mut FundState,
    slippage: Usd,
    nav_ref: Price,
    r: Rounding,
) -> Result<Settlement> {
    if slippage.is_zero() {
        return Ok(Settlement::None);
    }
    if !nav_ref.is_positive() {
        return Err(EngineError::Math(MathError::DivisionByZero));
    }
    let treasury = &mut state.treasury;
    if slippage.is_positive() {
        let wanted = slippage.tokens_at(nav_ref, r)?;
        // All of the cash lands in the treasury; whatever the burn cannot
        // match is earmarked for reinvestment.
        treasury.stable_balance = treasury.stable_balance.add(slippage)?;
        if wanted <= treasury.alpha_tokens {
            treasury.alpha_tokens = treasury.alpha_tokens.sub(wanted)?;
            state.token_supply = state.token_supply.sub(wanted)?;
            Ok(Settlement::BurnedFromTreasury { tokens: wanted })
        } else {
            let burned = treasury.alpha_tokens;
            let covered = burned.value_at(nav_ref, r)?;
            let carry = slippage.sub(covered)?;
            treasury.alpha_tokens = Tokens::ZERO;
            treasury.pending_reinvest = treasury.pending_reinvest.add(carry)?;
            state.token_supply = state.token_supply.sub(burned)?;
            Ok(Settlement::PartialBurnWithCarry { tokens: burned, carry })
        }
    } else {
        let needed = slippage.abs()?;
        let available = treasury.stable_balance.sub(treasury.pending_reinvest)?;
        if needed > available {
            return Ok(Settlement::Halted(HaltReason::TreasuryStablesInsufficient { needed, available }));
        }
        let minted = needed.tokens_at(nav_ref, r)?;
        treasury.stable_balance = treasury.stable_balance.sub(needed)?;
        treasury.alpha_tokens = treasury.alpha_tokens.add(minted)?;
        state.token_supply = state.token_supply.add(minted)?;
        Ok(Settlement::MintedToTreasury { tokens: minted })
    }
}

/// Alternative withdrawal price: `(|proceeds| + total_dpst) / Σ accepted tokens`.
pub fn redemption_price(
    proceeds: Usd,
    total_dpst: Usd,
    accepted_wdrw_tokens: Tokens,
    r: Rounding,
) -> Result<Price> {
    if !accepted_wdrw_tokens.is_positive() {
        return Err(EngineError::Math(MathError::DivisionByZero));
    }
    Ok(proceeds.abs()?.add(total_dpst.abs()?)?.per(accepted_wdrw_tokens, r)?)
}
