//! On-ledger fund state shared by every stage of a rebalance.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::fmt;

use crate::decimal::{Decimal, Rounding};
use crate::error::{integrity, EngineError, Result};
use crate::quantity::{Price, Tokens, Usd};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InvestorId(pub String);

impl InvestorId {
    pub fn new(s: impl Into<String>) -> Self {
        InvestorId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InvestorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Account id the treasury uses when it reinvests carried slippage.
pub const TREASURY_ID: &str = "@treasury";

/// A token-weighted average price kept as its two sums, so the average is
/// only divided out when it is read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WeightedNav {
    /// Σ price · tokens.
    pub basis: Usd,
    pub tokens: Tokens,
}

impl WeightedNav {
    pub fn at(price: Price, tokens: Tokens, r: Rounding) -> Result<Self> {
        Ok(WeightedNav { basis: tokens.value_at(price, r)?, tokens })
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_zero()
    }

    pub fn price(&self, r: Rounding) -> Result<Option<Price>> {
        if self.tokens.is_zero() {
            return Ok(None);
        }
        Ok(Some(self.basis.per(self.tokens, r)?))
    }

    /// Add `tokens` bought at `price`.
    pub fn blend(&mut self, price: Price, tokens: Tokens, r: Rounding) -> Result<()> {
        self.basis = self.basis.add(tokens.value_at(price, r)?)?;
        self.tokens = self.tokens.add(tokens)?;
        Ok(())
    }

    /// Remove `tokens` at the current average; the average is unchanged.
    pub fn remove(&mut self, tokens: Tokens, r: Rounding) -> Result<()> {
        if tokens > self.tokens {
            return Err(integrity("weighted-average tracker driven negative"));
        }
        if tokens == self.tokens {
            *self = WeightedNav::default();
            return Ok(());
        }
        let remaining = self.tokens.sub(tokens)?;
        self.basis = self.basis.scale_frac(remaining.0, self.tokens.0, r)?;
        self.tokens = remaining;
        Ok(())
    }

    /// Reset the average to `price`, keeping the token count.
    pub fn mark_to(&mut self, price: Price, r: Rounding) -> Result<()> {
        self.basis = self.tokens.value_at(price, r)?;
        Ok(())
    }

    /// `price · tokens − basis`, the aggregate gain over the average.
    pub fn gain_at(&self, price: Price, r: Rounding) -> Result<Usd> {
        Ok(self.tokens.value_at(price, r)?.sub(self.basis)?)
    }
}

/// Per-investor holdings and below-high-water-mark trackers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InvestorTracker {
    pub total_tokens: Tokens,
    /// Tokens that entered at or below the current HWM, with their
    /// weighted-average entry price.
    pub below_hwm: WeightedNav,
}

impl InvestorTracker {
    pub fn tokens_below_hwm(&self) -> Tokens {
        self.below_hwm.tokens
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Treasury {
    pub stable_balance: Usd,
    pub alpha_tokens: Tokens,
    /// Positive slippage that could not be matched by a token burn; it sits
    /// in `stable_balance` until reinvested at the next event.
    pub pending_reinvest: Usd,
}

/// The distinguished account that receives fee tokens.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeeCollector {
    pub tokens: Tokens,
    /// Flat deposit and redemption fees, collected in USD.
    pub usd: Usd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FeeSchedule {
    pub mgmt_fee_annual: Decimal,
    pub perf_fee: Decimal,
    pub deposit_fee: Decimal,
    pub redemption_fee: Decimal,
    /// Share of the entry-to-HWM gap charged up front by the lot-level
    /// calculator. Zero selects the free-ride option.
    pub hwm_liability_ratio: Decimal,
}

impl FeeSchedule {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("management fee", self.mgmt_fee_annual),
            ("performance fee", self.perf_fee),
            ("deposit fee", self.deposit_fee),
            ("redemption fee", self.redemption_fee),
            ("hwm liability ratio", self.hwm_liability_ratio),
        ];
        for (name, v) in fields {
            if v.is_negative() || v > Decimal::ONE {
                return Err(EngineError::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FundState {
    pub fund_value: Usd,
    pub token_supply: Tokens,
    pub nav: Price,
    pub hwm: Price,
    pub last_hwm_rebalance: u64,
    pub rebalance_count: u64,
    /// Scenario time of the last completed event, in days.
    pub last_event_time: Decimal,
    /// Fund-level weighted-average NAV over investor tokens.
    pub nav_wavg: WeightedNav,
    /// Pre-fee NAV at the last completed event.
    pub nav_prev: Price,
    /// Plough-back mark set at the last completed event, if any.
    pub nav_wavg_pb: Option<Price>,
    /// Performance fees levied since the last crystallization that a
    /// plough-back may still return.
    pub refundable_perf_fees: Usd,
    pub investors: BTreeMap<InvestorId, InvestorTracker>,
    pub fee_collector: FeeCollector,
    pub treasury: Treasury,
    pub fees: FeeSchedule,
}

impl FundState {
    /// A fund launched at `initial_nav` with each investor buying in for
    /// the given USD amount. Seed tokens start at the high-water mark.
    pub fn seed(
        initial_nav: Price,
        holdings: &[(InvestorId, Usd)],
        fees: FeeSchedule,
        treasury: Treasury,
        r: Rounding,
    ) -> Result<Self> {
        fees.validate()?;
        if !initial_nav.is_positive() {
            return Err(EngineError::InvalidConfig("initial NAV must be positive".into()));
        }
        let mut investors: BTreeMap<InvestorId, InvestorTracker> = BTreeMap::new();
        let mut fund_value = Usd::ZERO;
        let mut supply = Tokens::ZERO;
        for (id, usd) in holdings {
            if usd.is_negative() {
                return Err(EngineError::InvalidConfig(format!("negative seed for {id}")));
            }
            let tokens = usd.tokens_at(initial_nav, r)?;
            let entry = investors.entry(id.clone()).or_default();
            entry.total_tokens = entry.total_tokens.add(tokens)?;
            fund_value = fund_value.add(tokens.value_at(initial_nav, r)?)?;
            supply = supply.add(tokens)?;
        }
        if treasury.stable_balance.is_negative() || treasury.alpha_tokens.is_negative() {
            return Err(EngineError::InvalidConfig("negative treasury balance".into()));
        }
        // Treasury tokens are bought at launch like any other holding.
        fund_value = fund_value.add(treasury.alpha_tokens.value_at(initial_nav, r)?)?;
        supply = supply.add(treasury.alpha_tokens)?;
        let investor_tokens = Tokens::sum(investors.values().map(|t| t.total_tokens))?;
        Ok(FundState {
            fund_value,
            token_supply: supply,
            nav: initial_nav,
            hwm: initial_nav,
            last_hwm_rebalance: 0,
            rebalance_count: 0,
            last_event_time: Decimal::ZERO,
            nav_wavg: WeightedNav::at(initial_nav, investor_tokens, r)?,
            nav_prev: initial_nav,
            nav_wavg_pb: None,
            refundable_perf_fees: Usd::ZERO,
            investors,
            fee_collector: FeeCollector::default(),
            treasury,
            fees,
        })
    }

    /// Tokens held by investors; the base every performance fee is charged on.
    pub fn investor_tokens(&self) -> Result<Tokens> {
        Ok(Tokens::sum(self.investors.values().map(|t| t.total_tokens))?)
    }

    pub fn holding(&self, id: &InvestorId) -> Tokens {
        self.investors.get(id).map(|t| t.total_tokens).unwrap_or_default()
    }

    /// Checks the supply ledger, tracker bounds and non-negative balances.
    pub fn check_integrity(&self) -> Result<()> {
        let investors = self.investor_tokens()?;
        let accounted = investors.add(self.fee_collector.tokens)?.add(self.treasury.alpha_tokens)?;
        if accounted != self.token_supply {
            return Err(integrity(format!(
                "supply {} != holdings {}",
                self.token_supply, accounted
            )));
        }
        for (id, t) in &self.investors {
            if t.total_tokens.is_negative() {
                return Err(integrity(format!("{id} holds negative tokens")));
            }
            if t.below_hwm.tokens.is_negative() || t.below_hwm.tokens > t.total_tokens {
                return Err(integrity(format!("{id} below-HWM tracker out of bounds")));
            }
        }
        if self.nav_wavg.tokens != investors {
            return Err(integrity("fund weighted-average tracker does not cover investor tokens"));
        }
        if self.treasury.stable_balance.is_negative() || self.treasury.alpha_tokens.is_negative() {
            return Err(integrity("treasury balance negative"));
        }
        if self.fee_collector.tokens.is_negative() {
            return Err(integrity("fee collector balance negative"));
        }
        Ok(())
    }
}

/// Price a fund: `fund_value / token_supply`.
pub fn compute_nav(fund_value: Usd, supply: Tokens, r: Rounding) -> Result<Price> {
    if !supply.is_positive() {
        return Err(EngineError::ZeroSupply);
    }
    Ok(fund_value.per(supply, r)?)
}
