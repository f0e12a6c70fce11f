//! The rebalance state machine: price, levy fees, mint fee tokens, net and
//! allocate flows, settle slippage, fill, reprice.
//!
//! A halted event never touches the committed state. The caller gets the
//! pre-event state, the provisional state with fees applied, and the
//! partial report, and may resume with an amended input.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::decimal::{Decimal, Rounding};
use crate::error::{integrity, EngineError, Result};
use crate::fees::{self, FeeAssessment, MintMode, Scheme};
use crate::netting::{self, DepositRequest, FlowCaps, NettingResult, WithdrawRequest};
use crate::quantity::{Price, Tokens, Usd};
use crate::slippage::{self, HaltReason, Settlement, SlippageOutcome};
use crate::state::{compute_nav, FundState, InvestorId, TREASURY_ID};

/// How net-withdraw events pay redeeming investors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pricing {
    /// Fill at the post-fee NAV; the treasury absorbs slippage.
    #[default]
    Default,
    /// Fill at `(proceeds + deposits) / accepted tokens`; no treasury leg.
    RedemptionPrice,
}

impl Pricing {
    pub fn name(self) -> &'static str {
        match self {
            Pricing::Default => "default",
            Pricing::RedemptionPrice => "redemption-price",
        }
    }

    pub fn from_name(s: &str) -> Option<Pricing> {
        match s {
            "default" => Some(Pricing::Default),
            "redemption-price" => Some(Pricing::RedemptionPrice),
            _ => None,
        }
    }
}

/// What happens to the unfilled part of a request.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CarryOver {
    /// Requeue it for the next event with its original sequence number.
    #[default]
    Carry,
    Reject,
}

impl CarryOver {
    pub fn name(self) -> &'static str {
        match self {
            CarryOver::Carry => "carry",
            CarryOver::Reject => "reject",
        }
    }

    pub fn from_name(s: &str) -> Option<CarryOver> {
        match s {
            "carry" => Some(CarryOver::Carry),
            "reject" => Some(CarryOver::Reject),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    pub scheme: Scheme,
    pub rounding: Rounding,
    pub mint_mode: MintMode,
    pub pricing: Pricing,
    pub carry_over: CarryOver,
    pub caps: FlowCaps,
    pub tolerance: Decimal,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            scheme: Scheme::default(),
            rounding: Rounding::Down,
            mint_mode: MintMode::default(),
            pricing: Pricing::default(),
            carry_over: CarryOver::default(),
            caps: FlowCaps::UNLIMITED,
            tolerance: Decimal::ZERO,
        }
    }
}

/// Exogenous market input for Step 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarketInput {
    FundValue(Usd),
    /// Scenario shorthand: the value that prices the fund at exactly this
    /// pre-fee NAV, `ceil(nav · supply)`.
    TargetNav(Price),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RebalanceEventInput {
    /// Scenario time in days.
    pub time: Decimal,
    pub market: MarketInput,
    /// Trading result of a net-withdraw event; `None` means no slippage.
    pub proceeds: Option<Usd>,
    pub deposits: Vec<DepositRequest>,
    pub withdrawals: Vec<WithdrawRequest>,
    pub caps: Option<FlowCaps>,
    pub tolerance: Option<Decimal>,
}

impl RebalanceEventInput {
    pub fn at(time: Decimal, market: MarketInput) -> Self {
        RebalanceEventInput {
            time,
            market,
            proceeds: None,
            deposits: Vec::new(),
            withdrawals: Vec::new(),
            caps: None,
            tolerance: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NavSteps {
    /// Step 3, before fees. Drives every fee and the HWM.
    pub pre_fee: Price,
    /// Step 6, after fee tokens are minted. Every fill uses it.
    pub post_fee: Price,
    /// After slippage settlement; informational only.
    pub reference: Option<Price>,
    pub final_nav: Price,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepositFill {
    pub investor: InvestorId,
    pub seq: u64,
    pub requested: Usd,
    pub accepted: Usd,
    pub fee: Usd,
    pub tokens: Tokens,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WithdrawFill {
    pub investor: InvestorId,
    pub seq: u64,
    pub requested: Tokens,
    pub accepted: Tokens,
    pub gross: Usd,
    pub fee: Usd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectReason {
    ExceedsHoldings,
    Unfilled,
}

impl RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            RejectReason::ExceedsHoldings => "exceeds-holdings",
            RejectReason::Unfilled => "unfilled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    Deposit(DepositRequest, RejectReason),
    Withdraw(WithdrawRequest, RejectReason),
}

/// Requests still waiting for capacity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RequestQueue {
    pub deposits: Vec<DepositRequest>,
    pub withdrawals: Vec<WithdrawRequest>,
}

impl RequestQueue {
    pub fn is_empty(&self) -> bool {
        self.deposits.is_empty() && self.withdrawals.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SupplyLedger {
    pub before: Tokens,
    pub fee_mint: Tokens,
    pub deposit_mint: Tokens,
    pub treasury_mint: Tokens,
    pub withdraw_burn: Tokens,
    pub treasury_burn: Tokens,
    pub plough_back_burn: Tokens,
    pub after: Tokens,
}

impl SupplyLedger {
    pub fn expected_after(&self) -> Result<Tokens> {
        Ok(self
            .before
            .add(self.fee_mint)?
            .add(self.deposit_mint)?
            .add(self.treasury_mint)?
            .sub(self.withdraw_burn)?
            .sub(self.treasury_burn)?
            .sub(self.plough_back_burn)?)
    }
}

/// `after = market + deposits_invested − withdrawals_paid_gross + trade_leg + treasury_leg`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValueLedger {
    pub market: Usd,
    pub deposits_invested: Usd,
    pub withdrawals_paid_gross: Usd,
    /// `|proceeds| − |net amount|` on a net-withdraw event.
    pub trade_leg: Usd,
    /// Slippage moved to or from the treasury, with the fund's sign.
    pub treasury_leg: Usd,
    pub after: Usd,
}

impl ValueLedger {
    pub fn expected_after(&self) -> Result<Usd> {
        Ok(self
            .market
            .add(self.deposits_invested)?
            .sub(self.withdrawals_paid_gross)?
            .add(self.trade_leg)?
            .add(self.treasury_leg)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Halted(HaltReason),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RebalanceReport {
    /// 1-based event number.
    pub index: u64,
    pub time: Decimal,
    pub elapsed_days: Decimal,
    pub scheme: Scheme,
    pub nav: NavSteps,
    pub hwm_before: Price,
    pub hwm_after: Price,
    pub new_hwm: bool,
    pub fees: FeeAssessment,
    /// Plough-back mark, scheme C only.
    pub nav_wavg_pb: Option<Price>,
    pub nav_wavg_after: Option<Price>,
    /// Investor-held tokens after the event.
    pub investor_tokens_after: Tokens,
    /// Tokens inside below-HWM trackers after the event.
    pub below_hwm_tokens_after: Tokens,
    pub netting: Option<NettingResult>,
    pub deposit_fills: Vec<DepositFill>,
    pub withdraw_fills: Vec<WithdrawFill>,
    pub rejected: Vec<Rejection>,
    pub carried: RequestQueue,
    pub treasury_reinvest: Usd,
    pub slippage: Option<SlippageOutcome>,
    pub redemption_price: Option<Price>,
    pub supply: SupplyLedger,
    pub value: ValueLedger,
    pub outcome: Outcome,
}

impl RebalanceReport {
    pub fn is_halted(&self) -> bool {
        matches!(self.outcome, Outcome::Halted(_))
    }

    /// Investor token entries at the fill NAV, the oracle's lot feed.
    pub fn investor_entries(&self) -> Vec<(InvestorId, Tokens)> {
        self.deposit_fills
            .iter()
            .filter(|f| f.investor.as_str() != TREASURY_ID && f.tokens.is_positive())
            .map(|f| (f.investor.clone(), f.tokens))
            .collect()
    }

    pub fn investor_exits(&self) -> Vec<(InvestorId, Tokens)> {
        self.withdraw_fills
            .iter()
            .filter(|f| f.accepted.is_positive())
            .map(|f| (f.investor.clone(), f.accepted))
            .collect()
    }
}

/// A halted event. `pre_state` is still the committed state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HaltedEvent {
    pub pre_state: FundState,
    pub pre_queue: RequestQueue,
    /// Steps 1–6 applied: market value, fees levied, fee tokens minted.
    pub provisional_state: FundState,
    pub input: RebalanceEventInput,
    pub report: RebalanceReport,
}

impl HaltedEvent {
    pub fn reason(&self) -> Option<HaltReason> {
        match self.report.outcome {
            Outcome::Halted(r) => Some(r),
            Outcome::Completed => None,
        }
    }

    /// Undo the event's fee levy on the provisional state by burning the
    /// fee tokens it minted and restoring the pre-levy trackers. The
    /// market move stays.
    pub fn revert_fees(&self, r: Rounding) -> Result<FundState> {
        let mut s = self.provisional_state.clone();
        let minted = self.report.fees.fee_tokens_minted;
        if minted > s.fee_collector.tokens {
            return Err(integrity("fee collector lacks the tokens minted this event"));
        }
        s.fee_collector.tokens = s.fee_collector.tokens.sub(minted)?;
        s.token_supply = s.token_supply.sub(minted)?;
        if s.token_supply != self.pre_state.token_supply {
            return Err(integrity("compensating burn does not restore the supply"));
        }
        s.nav = compute_nav(s.fund_value, s.token_supply, r)?;
        s.investors = self.pre_state.investors.clone();
        s.nav_wavg = self.pre_state.nav_wavg;
        s.refundable_perf_fees = self.pre_state.refundable_perf_fees;
        s.check_integrity()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Completed(Box<RebalanceReport>),
    Halted(Box<HaltedEvent>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Executed {
    Completed { state: FundState, queue: RequestQueue, report: RebalanceReport },
    Halted(HaltedEvent),
}

fn invalid(msg: impl Into<alloc::string::String>) -> EngineError {
    EngineError::InvalidConfig(msg.into())
}

fn validate_requests(input: &RebalanceEventInput) -> Result<()> {
    for d in &input.deposits {
        if d.investor.as_str() == TREASURY_ID {
            return Err(invalid("investor id reserved for the treasury"));
        }
        if !d.amount.is_positive() {
            return Err(invalid(format!("deposit by {} must be positive", d.investor)));
        }
    }
    for w in &input.withdrawals {
        if w.investor.as_str() == TREASURY_ID {
            return Err(invalid("investor id reserved for the treasury"));
        }
        if !w.tokens.is_positive() {
            return Err(invalid(format!("withdrawal by {} must be positive", w.investor)));
        }
    }
    if let Some(c) = input.caps {
        if c.max_deposit.is_negative() || c.max_withdraw.is_negative() {
            return Err(invalid("flow caps must be non-negative"));
        }
    }
    if let Some(t) = input.tolerance {
        if t.is_negative() {
            return Err(invalid("slippage tolerance must be non-negative"));
        }
    }
    Ok(())
}

/// One full rebalance against `state` and the pending `queue`. Neither is
/// modified; the caller commits the returned state on completion.
pub fn run_rebalance(
    config: &EngineConfig,
    state: &FundState,
    queue: &RequestQueue,
    input: &RebalanceEventInput,
) -> Result<Executed> {
    let r = config.rounding;
    validate_requests(input)?;
    let pre = state.clone();
    let mut s = state.clone();
    let index = s.rebalance_count + 1;

    if input.time < s.last_event_time || (s.rebalance_count > 0 && input.time == s.last_event_time) {
        return Err(invalid(format!("event time {} does not follow {}", input.time, s.last_event_time)));
    }
    let elapsed = input.time.sub(s.last_event_time)?;

    // Steps 1-3: price the fund.
    let supply0 = s.token_supply;
    if !supply0.is_positive() {
        return Err(EngineError::ZeroSupply);
    }
    let market = match input.market {
        MarketInput::FundValue(v) => v,
        MarketInput::TargetNav(p) => supply0.value_at(p, Rounding::Up)?,
    };
    if market.is_negative() {
        return Err(invalid("market fund value must be non-negative"));
    }
    s.fund_value = market;
    let p3 = compute_nav(market, supply0, r)?;
    s.nav = p3;
    let hwm_before = s.hwm;

    // Step 4: fees on the pre-flow NAV.
    let pfp = s.fees.perf_fee;
    let pre_levy_wavg = s.nav_wavg;
    let mut fees = FeeAssessment { nav_before: p3, ..Default::default() };
    fees.mgmt_fee = fees::management_fee(market, s.fees.mgmt_fee_annual, elapsed, r)?;
    match config.scheme {
        Scheme::A => fees::levy_scheme_a(&mut s, p3, r, &mut fees)?,
        Scheme::B | Scheme::C => {
            let (levy, next) = fees::perf_fee_scheme_b(&s.nav_wavg, p3, pfp, r)?;
            s.nav_wavg = next;
            fees.perf_fee_fund = levy;
            if levy.is_positive() {
                s.refundable_perf_fees = levy;
            }
        }
    }

    // Steps 5-6: mint fee tokens, adjust NAV.
    let (minted, p6) = fees::mint_fee_tokens(&mut s, fees.total_levied()?, config.mint_mode, r)?;
    fees.fee_tokens_minted = minted;
    fees.nav_after = p6;

    let mut report = RebalanceReport {
        index,
        time: input.time,
        elapsed_days: elapsed,
        scheme: config.scheme,
        nav: NavSteps { pre_fee: p3, post_fee: p6, reference: None, final_nav: p6 },
        hwm_before,
        hwm_after: hwm_before,
        new_hwm: false,
        fees,
        nav_wavg_pb: None,
        nav_wavg_after: None,
        investor_tokens_after: Tokens::ZERO,
        below_hwm_tokens_after: Tokens::ZERO,
        netting: None,
        deposit_fills: Vec::new(),
        withdraw_fills: Vec::new(),
        rejected: Vec::new(),
        carried: RequestQueue::default(),
        treasury_reinvest: Usd::ZERO,
        slippage: None,
        redemption_price: None,
        supply: SupplyLedger { before: supply0, fee_mint: minted, ..Default::default() },
        value: ValueLedger { market, ..Default::default() },
        outcome: Outcome::Completed,
    };

    // Step 7: gather, validate, net per investor, cap and allocate.
    let caps = input.caps.unwrap_or(config.caps);
    let tolerance = input.tolerance.unwrap_or(config.tolerance);
    let mut deposits: Vec<DepositRequest> = queue.deposits.clone();
    deposits.extend(input.deposits.iter().cloned());
    let reinvest = s.treasury.pending_reinvest;
    if reinvest.is_positive() {
        deposits.insert(0, DepositRequest { investor: InvestorId::new(TREASURY_ID), amount: reinvest, seq: 0 });
    }
    let mut requested: BTreeMap<InvestorId, Tokens> = BTreeMap::new();
    for w in queue.withdrawals.iter().chain(input.withdrawals.iter()) {
        let e = requested.entry(w.investor.clone()).or_default();
        *e = e.add(w.tokens)?;
    }
    let mut withdrawals = Vec::new();
    for w in queue.withdrawals.iter().chain(input.withdrawals.iter()) {
        if requested[&w.investor] > s.holding(&w.investor) {
            report.rejected.push(Rejection::Withdraw(w.clone(), RejectReason::ExceedsHoldings));
        } else {
            withdrawals.push(w.clone());
        }
    }
    let (net_d, net_w) = netting::net_per_investor(&deposits, &withdrawals, p6, r)?;
    let netting = netting::run_netting(&net_d, &net_w, p6, caps, r)?;
    let redeemed = Tokens::sum(netting.accepted_withdrawals.iter().copied())?;

    let mut nav_wavg_pb = None;
    let mut plough_back = Usd::ZERO;
    if config.scheme == Scheme::C {
        let c = fees::perf_fee_scheme_c(&pre_levy_wavg, p3, s.nav_prev, redeemed, pfp, s.refundable_perf_fees, r)?;
        report.fees.perf_fee_fund = c.fund_fee;
        report.fees.perf_fee_redemption = c.redemption_fee;
        nav_wavg_pb = c.nav_wavg_pb;
        plough_back = c.plough_back;
    }
    report.nav_wavg_pb = nav_wavg_pb;

    // Net-withdraw branch: tolerance, then slippage settlement.
    let nae = netting.net_amount_event;
    let mut payout_price = p6;
    let is_net_withdraw = netting.direction.is_net_withdraw();
    report.netting = Some(netting.clone());
    if is_net_withdraw {
        let proceeds = match input.proceeds {
            Some(p) => p,
            None => nae.abs()?,
        };
        if let Some(h) = slippage::check_slippage_tolerance(nae, proceeds, tolerance)? {
            return Ok(halt(pre, queue, s, input, report, h));
        }
        let slip = slippage::compute_slippage(nae, proceeds)?;
        report.value.trade_leg = slip;
        let settlement = match config.pricing {
            Pricing::Default => {
                let settlement = slippage::settle_slippage(&mut s, slip, p6, r)?;
                match settlement {
                    Settlement::Halted(h) => return Ok(halt(pre, queue, s, input, report, h)),
                    Settlement::BurnedFromTreasury { tokens } | Settlement::PartialBurnWithCarry { tokens, .. } => {
                        report.supply.treasury_burn = tokens;
                    }
                    Settlement::MintedToTreasury { tokens } => report.supply.treasury_mint = tokens,
                    Settlement::None => {}
                }
                report.value.treasury_leg = slip.neg()?;
                settlement
            }
            Pricing::RedemptionPrice => {
                if redeemed.is_positive() {
                    let mut invested = Usd::ZERO;
                    for (req, acc) in net_d.iter().zip(&netting.accepted_deposits) {
                        invested = invested.add(deposit_split(req, *acc, s.fees.deposit_fee, r)?.1)?;
                    }
                    payout_price = slippage::redemption_price(proceeds, invested, redeemed, r)?;
                    report.redemption_price = Some(payout_price);
                }
                Settlement::None
            }
        };
        report.slippage = Some(SlippageOutcome { proceeds, slippage: slip, settlement });
    }

    // The HWM moves on the pre-fee NAV before this event's inflows are
    // classified against it.
    let new_hwm = fees::post_rebalance_hwm_update(&mut s, p3, index);
    report.new_hwm = new_hwm;
    report.hwm_after = s.hwm;

    apply_withdrawals(config, &mut s, &net_w, &netting.accepted_withdrawals, payout_price, &mut report)?;

    if nav_wavg_pb.is_some() {
        s.nav_wavg.mark_to(p3, r)?;
        let (tokens, covered) = fees::burn_fee_tokens(&mut s, plough_back, p6, r)?;
        report.fees.plough_back = covered;
        report.fees.fee_tokens_burned = tokens;
        report.supply.plough_back_burn = tokens;
        s.refundable_perf_fees = s.refundable_perf_fees.sub(covered)?.clamp_non_negative();
    }

    apply_deposits(config, &mut s, &net_d, &netting.accepted_deposits, p6, &mut report)?;

    // Reprice on the post-flow book.
    s.fund_value = report.value.expected_after()?;
    report.value.after = s.fund_value;
    if s.fund_value.is_negative() {
        return Err(integrity("fund value driven negative"));
    }
    s.investors.retain(|_, t| t.total_tokens.is_positive());
    s.nav = if s.token_supply.is_positive() { compute_nav(s.fund_value, s.token_supply, r)? } else { p6 };
    report.nav.final_nav = s.nav;
    if is_net_withdraw {
        report.nav.reference = Some(s.nav);
    }

    s.nav_prev = p3;
    s.nav_wavg_pb = nav_wavg_pb;
    s.last_event_time = input.time;
    s.rebalance_count = index;
    report.nav_wavg_after = s.nav_wavg.price(r)?;
    report.investor_tokens_after = s.investor_tokens()?;
    report.below_hwm_tokens_after = Tokens::sum(s.investors.values().map(|t| t.below_hwm.tokens))?;
    report.supply.after = s.token_supply;

    if report.supply.expected_after()? != s.token_supply {
        return Err(integrity(format!(
            "supply ledger expects {} but supply is {}",
            report.supply.expected_after()?,
            s.token_supply
        )));
    }
    s.check_integrity()?;
    let queue = report.carried.clone();
    Ok(Executed::Completed { state: s, queue, report })
}

fn halt(
    pre: FundState,
    queue: &RequestQueue,
    provisional: FundState,
    input: &RebalanceEventInput,
    mut report: RebalanceReport,
    reason: HaltReason,
) -> Executed {
    report.outcome = Outcome::Halted(reason);
    report.supply.after = provisional.token_supply;
    report.value.after = provisional.fund_value;
    Executed::Halted(HaltedEvent {
        pre_state: pre,
        pre_queue: queue.clone(),
        provisional_state: provisional,
        input: input.clone(),
        report,
    })
}

/// `(fee, invested)` for an accepted deposit; the treasury pays no fee.
fn deposit_split(req: &DepositRequest, accepted: Usd, pct: Decimal, r: Rounding) -> Result<(Usd, Usd)> {
    if req.investor.as_str() == TREASURY_ID {
        return Ok((Usd::ZERO, accepted));
    }
    let fee = accepted.scale(pct, r)?;
    Ok((fee, accepted.sub(fee)?))
}

fn apply_withdrawals(
    config: &EngineConfig,
    s: &mut FundState,
    requests: &[WithdrawRequest],
    accepted: &[Tokens],
    price: Price,
    report: &mut RebalanceReport,
) -> Result<()> {
    let r = config.rounding;
    for (req, &acc) in requests.iter().zip(accepted) {
        if acc.is_positive() {
            let gross = acc.value_at(price, r)?;
            let fee = gross.scale(s.fees.redemption_fee, r)?;
            let tracker = s
                .investors
                .get_mut(&req.investor)
                .ok_or_else(|| integrity(format!("withdrawal by unknown investor {}", req.investor)))?;
            let below = acc.min(tracker.below_hwm.tokens);
            fees::update_below_hwm_trackers(tracker, Tokens::ZERO, below, price, r)?;
            tracker.total_tokens = tracker.total_tokens.sub(acc)?;
            s.nav_wavg.remove(acc, r)?;
            s.token_supply = s.token_supply.sub(acc)?;
            s.fee_collector.usd = s.fee_collector.usd.add(fee)?;
            report.supply.withdraw_burn = report.supply.withdraw_burn.add(acc)?;
            report.value.withdrawals_paid_gross = report.value.withdrawals_paid_gross.add(gross)?;
            report.withdraw_fills.push(WithdrawFill {
                investor: req.investor.clone(),
                seq: req.seq,
                requested: req.tokens,
                accepted: acc,
                gross,
                fee,
            });
        }
        let rest = req.tokens.sub(acc)?;
        if rest.is_positive() {
            let left = WithdrawRequest { tokens: rest, ..req.clone() };
            match config.carry_over {
                CarryOver::Carry => report.carried.withdrawals.push(left),
                CarryOver::Reject => report.rejected.push(Rejection::Withdraw(left, RejectReason::Unfilled)),
            }
        }
    }
    Ok(())
}

fn apply_deposits(
    config: &EngineConfig,
    s: &mut FundState,
    requests: &[DepositRequest],
    accepted: &[Usd],
    price: Price,
    report: &mut RebalanceReport,
) -> Result<()> {
    let r = config.rounding;
    for (req, &acc) in requests.iter().zip(accepted) {
        let is_treasury = req.investor.as_str() == TREASURY_ID;
        if acc.is_positive() {
            let (fee, invested) = deposit_split(req, acc, s.fees.deposit_fee, r)?;
            let tokens = invested.tokens_at(price, r)?;
            if is_treasury {
                s.treasury.alpha_tokens = s.treasury.alpha_tokens.add(tokens)?;
                s.treasury.stable_balance = s.treasury.stable_balance.sub(acc)?;
                s.treasury.pending_reinvest = s.treasury.pending_reinvest.sub(acc)?;
                report.supply.treasury_mint = report.supply.treasury_mint.add(tokens)?;
                report.treasury_reinvest = acc;
            } else {
                let tracker = s.investors.entry(req.investor.clone()).or_default();
                let below = if price <= s.hwm { tokens } else { Tokens::ZERO };
                fees::update_below_hwm_trackers(tracker, below, Tokens::ZERO, price, r)?;
                tracker.total_tokens = tracker.total_tokens.add(tokens)?;
                s.nav_wavg.blend(price, tokens, r)?;
                s.fee_collector.usd = s.fee_collector.usd.add(fee)?;
                report.supply.deposit_mint = report.supply.deposit_mint.add(tokens)?;
            }
            s.token_supply = s.token_supply.add(tokens)?;
            report.value.deposits_invested = report.value.deposits_invested.add(invested)?;
            report.deposit_fills.push(DepositFill {
                investor: req.investor.clone(),
                seq: req.seq,
                requested: req.amount,
                accepted: acc,
                fee,
                tokens,
            });
        }
        let rest = req.amount.sub(acc)?;
        // Unfilled treasury cash simply stays pending.
        if rest.is_positive() && !is_treasury {
            let left = DepositRequest { amount: rest, ..req.clone() };
            match config.carry_over {
                CarryOver::Carry => report.carried.deposits.push(left),
                CarryOver::Reject => report.rejected.push(Rejection::Deposit(left, RejectReason::Unfilled)),
            }
        }
    }
    Ok(())
}

/// A fund under management: committed state, pending requests, config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fund {
    pub config: EngineConfig,
    pub state: FundState,
    pub queue: RequestQueue,
}

impl Fund {
    pub fn new(config: EngineConfig, state: FundState) -> Result<Self> {
        state.check_integrity()?;
        Ok(Fund { config, state, queue: RequestQueue::default() })
    }

    /// Run one event, committing only if it completes.
    pub fn step(&mut self, input: &RebalanceEventInput) -> Result<StepOutcome> {
        match run_rebalance(&self.config, &self.state, &self.queue, input)? {
            Executed::Completed { state, queue, report } => {
                self.state = state;
                self.queue = queue;
                Ok(StepOutcome::Completed(Box::new(report)))
            }
            Executed::Halted(h) => Ok(StepOutcome::Halted(Box::new(h))),
        }
    }

    /// Rerun a halted event with amended input from its pre-event state.
    pub fn resume(&mut self, halted: &HaltedEvent, amended: &RebalanceEventInput) -> Result<StepOutcome> {
        if halted.pre_state != self.state || halted.pre_queue != self.queue {
            return Err(integrity("halted event does not belong to this fund state"));
        }
        self.step(amended)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    pub reports: Vec<RebalanceReport>,
    pub fund: Fund,
    pub halted: Option<HaltedEvent>,
}

/// Fold events over `fund`, stopping at the first halt. The halted event's
/// report is the last one returned.
pub fn replay(mut fund: Fund, events: &[RebalanceEventInput]) -> Result<Replay> {
    let mut reports = Vec::with_capacity(events.len());
    for ev in events {
        match fund.step(ev)? {
            StepOutcome::Completed(rep) => reports.push(*rep),
            StepOutcome::Halted(h) => {
                reports.push(h.report.clone());
                return Ok(Replay { reports, fund, halted: Some(*h) });
            }
        }
    }
    Ok(Replay { reports, fund, halted: None })
}

impl RebalanceReport {
    pub fn oracle_event(&self) -> crate::oracle::OracleEvent {
        crate::oracle::OracleEvent {
            nav: self.nav.pre_fee,
            fill_nav: self.nav.post_fee,
            entries: self.investor_entries(),
            exits: self.investor_exits(),
        }
    }
}

/// Seed-time investor holdings for an oracle shadowing `state`.
pub fn oracle_seeds(state: &FundState) -> Vec<(InvestorId, Tokens)> {
    state.investors.iter().map(|(id, t)| (id.clone(), t.total_tokens)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{FeeSchedule, Treasury};

    const R: Rounding = Rounding::Down;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Price {
        Price(d(s))
    }

    fn fund(scheme: Scheme, fees: FeeSchedule, treasury: Treasury) -> Fund {
        let state = FundState::seed(p("1"), &[(InvestorId::new("alice"), Usd::from_int(10_000))], fees, treasury, R).unwrap();
        Fund::new(EngineConfig { scheme, ..Default::default() }, state).unwrap()
    }

    fn completed(o: StepOutcome) -> RebalanceReport {
        match o {
            StepOutcome::Completed(r) => *r,
            StepOutcome::Halted(h) => panic!("unexpected halt: {:?}", h.reason()),
        }
    }

    #[test]
    fn flat_event_only_counts() {
        let mut f = fund(Scheme::B, FeeSchedule::default(), Treasury::default());
        let before = f.state.clone();
        completed(f.step(&RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)))).unwrap());
        let mut expect = before;
        expect.rebalance_count = 1;
        expect.last_event_time = d("1");
        assert_eq!(f.state, expect);
    }

    #[test]
    fn first_profit_chain() {
        let fees = FeeSchedule { perf_fee: d("0.2"), ..Default::default() };
        let mut f = fund(Scheme::B, fees, Treasury::default());
        let rep = completed(f.step(&RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(14_000)))).unwrap());
        assert_eq!(rep.nav.pre_fee, p("1.4"));
        assert_eq!(rep.fees.perf_fee_total().unwrap(), Usd::from_int(800));
        assert_eq!(rep.fees.fee_tokens_minted, Tokens(d("571.428571428571428571")));
        assert_eq!(rep.nav.post_fee, p("1.324324324324324324"));
        assert_eq!(f.state.hwm, p("1.4"));
        assert_eq!(f.state.last_hwm_rebalance, 1);
    }

    #[test]
    fn shortfall_halts_without_commit() {
        let fees = FeeSchedule { perf_fee: d("0.2"), ..Default::default() };
        let mut f = fund(Scheme::C, fees, Treasury::default());
        let before = f.clone();
        let mut ev = RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(11_000)));
        ev.withdrawals.push(WithdrawRequest { investor: InvestorId::new("alice"), tokens: Tokens::from_int(400), seq: 1 });
        ev.proceeds = Some(Usd::from_int(300));
        ev.tolerance = Some(d("0.02"));
        let h = match f.step(&ev).unwrap() {
            StepOutcome::Halted(h) => h,
            StepOutcome::Completed(_) => panic!("expected halt"),
        };
        assert!(matches!(h.reason(), Some(HaltReason::SlippageTolerance { .. })));
        assert_eq!(f, before);
        assert_eq!(h.provisional_state.rebalance_count, 0);
        assert!(h.report.fees.fee_tokens_minted.is_positive());

        let reverted = h.revert_fees(R).unwrap();
        assert_eq!(reverted.token_supply, before.state.token_supply);
        assert_eq!(reverted.nav_wavg, before.state.nav_wavg);

        let mut amended = ev.clone();
        amended.proceeds = None;
        let rep = completed(f.resume(&h, &amended).unwrap());
        assert_eq!(rep.index, 1);
        assert_eq!(f.state.holding(&InvestorId::new("alice")), Tokens::from_int(9_600));
    }

    #[test]
    fn treasury_covers_negative_slippage() {
        let t = Treasury { stable_balance: Usd::from_int(100), ..Default::default() };
        let mut f = fund(Scheme::B, FeeSchedule::default(), t);
        let mut ev = RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)));
        ev.withdrawals.push(WithdrawRequest { investor: InvestorId::new("alice"), tokens: Tokens::from_int(400), seq: 1 });
        ev.proceeds = Some(Usd::from_int(390));
        ev.tolerance = Some(d("0.05"));
        let rep = completed(f.step(&ev).unwrap());
        assert_eq!(rep.supply.treasury_mint, Tokens::from_int(10));
        assert_eq!(f.state.treasury.stable_balance, Usd::from_int(90));
        assert_eq!(rep.value.expected_after().unwrap(), f.state.fund_value);
        assert_eq!(f.state.fund_value, Usd::from_int(9_600));
    }

    #[test]
    fn insufficient_treasury_halts() {
        let mut f = fund(Scheme::A, FeeSchedule::default(), Treasury::default());
        let mut ev = RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)));
        ev.withdrawals.push(WithdrawRequest { investor: InvestorId::new("alice"), tokens: Tokens::from_int(400), seq: 1 });
        ev.proceeds = Some(Usd::from_int(390));
        ev.tolerance = Some(d("0.05"));
        match f.step(&ev).unwrap() {
            StepOutcome::Halted(h) => {
                assert!(matches!(h.reason(), Some(HaltReason::TreasuryStablesInsufficient { .. })))
            }
            StepOutcome::Completed(_) => panic!("expected halt"),
        }
    }

    #[test]
    fn capped_deposits_carry_over() {
        let mut f = fund(Scheme::B, FeeSchedule::default(), Treasury::default());
        let mut ev = RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)));
        ev.deposits.push(DepositRequest { investor: InvestorId::new("bob"), amount: Usd::from_int(500), seq: 1 });
        ev.caps = Some(FlowCaps { max_deposit: Usd::from_int(200), max_withdraw: Usd(Decimal::MAX) });
        let rep = completed(f.step(&ev).unwrap());
        assert_eq!(rep.deposit_fills[0].accepted, Usd::from_int(200));
        assert_eq!(f.queue.deposits[0].amount, Usd::from_int(300));
        assert_eq!(f.queue.deposits[0].seq, 1);
        let rep = completed(f.step(&RebalanceEventInput::at(d("2"), MarketInput::FundValue(Usd::from_int(10_200)))).unwrap());
        assert_eq!(rep.deposit_fills[0].accepted, Usd::from_int(300));
        assert!(f.queue.is_empty());
    }

    #[test]
    fn overdrawn_withdrawal_is_rejected() {
        let mut f = fund(Scheme::B, FeeSchedule::default(), Treasury::default());
        let mut ev = RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)));
        ev.withdrawals.push(WithdrawRequest { investor: InvestorId::new("alice"), tokens: Tokens::from_int(10_001), seq: 1 });
        let rep = completed(f.step(&ev).unwrap());
        assert!(matches!(rep.rejected[0], Rejection::Withdraw(_, RejectReason::ExceedsHoldings)));
        assert_eq!(f.state.holding(&InvestorId::new("alice")), Tokens::from_int(10_000));
    }

    #[test]
    fn times_must_increase() {
        let mut f = fund(Scheme::B, FeeSchedule::default(), Treasury::default());
        f.step(&RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)))).unwrap();
        assert!(f.step(&RebalanceEventInput::at(d("1"), MarketInput::FundValue(Usd::from_int(10_000)))).is_err());
    }
}
