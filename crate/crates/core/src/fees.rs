//! Management fees, the three aggregated performance-fee schemes and fee
//! token mint/burn.
//!
//! Every performance fee is charged on investor-held tokens only; fee
//! collector and treasury holdings never pay performance fees.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::decimal::{Decimal, Rounding};
use crate::error::{integrity, EngineError, Result};
use crate::quantity::{Price, Tokens, Usd};
use crate::state::{compute_nav, FundState, InvestorId, InvestorTracker, WeightedNav};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Investor-level clubbing against the fund HWM.
    A,
    /// Fund-level clubbing against one weighted-average NAV.
    #[default]
    B,
    /// Scheme B plus redemption fees and plough-back.
    C,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::A, Scheme::B, Scheme::C];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::A => "A",
            Scheme::B => "B",
            Scheme::C => "C",
        }
    }

    pub fn from_name(s: &str) -> Option<Scheme> {
        match s {
            "A" | "a" => Some(Scheme::A),
            "B" | "b" => Some(Scheme::B),
            "C" | "c" => Some(Scheme::C),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How many tokens a USD fee is worth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MintMode {
    /// `fee / nav` at the pre-mint NAV; the new tokens dilute themselves.
    #[default]
    PreMintNav,
    /// `fee · supply / (fund_value − fee)`, so the minted tokens are worth
    /// exactly `fee` at the post-mint NAV.
    ExactDilution,
}

impl MintMode {
    pub fn name(self) -> &'static str {
        match self {
            MintMode::PreMintNav => "pre-mint-nav",
            MintMode::ExactDilution => "exact-dilution",
        }
    }

    pub fn from_name(s: &str) -> Option<MintMode> {
        match s {
            "pre-mint-nav" => Some(MintMode::PreMintNav),
            "exact-dilution" => Some(MintMode::ExactDilution),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeeAssessment {
    pub mgmt_fee: Usd,
    /// Fund-level performance fee (scheme A first term, B/C levy net of
    /// the redemption part).
    pub perf_fee_fund: Usd,
    /// Scheme A second term, summed over investors.
    pub perf_fee_investor: Usd,
    /// Scheme C part of the levy attributable to redeemed tokens.
    pub perf_fee_redemption: Usd,
    /// Scheme C refund, paid by burning fee collector tokens.
    pub plough_back: Usd,
    pub fee_tokens_minted: Tokens,
    pub fee_tokens_burned: Tokens,
    pub nav_before: Price,
    pub nav_after: Price,
    /// Scheme A per-investor (fund term, investor term).
    pub per_investor: BTreeMap<InvestorId, (Usd, Usd)>,
}

impl FeeAssessment {
    pub fn perf_fee_total(&self) -> Result<Usd> {
        Ok(self.perf_fee_fund.add(self.perf_fee_investor)?.add(self.perf_fee_redemption)?)
    }

    /// Performance fees net of plough-back.
    pub fn perf_fee_net(&self) -> Result<Usd> {
        Ok(self.perf_fee_total()?.sub(self.plough_back)?)
    }

    pub fn total_levied(&self) -> Result<Usd> {
        Ok(self.mgmt_fee.add(self.perf_fee_total()?)?)
    }
}

/// `fund_value · annual_pct · elapsed_days / 365`.
pub fn management_fee(
    fund_value: Usd,
    annual_pct: Decimal,
    elapsed_days: Decimal,
    r: Rounding,
) -> Result<Usd> {
    if elapsed_days.is_negative() {
        return Err(EngineError::InvalidConfig("negative elapsed time".into()));
    }
    if annual_pct.is_zero() || elapsed_days.is_zero() || !fund_value.is_positive() {
        return Ok(Usd::ZERO);
    }
    let accrued = fund_value.scale(elapsed_days, r)?;
    Ok(accrued.scale_frac(annual_pct, Decimal::from_int(365), r)?)
}

fn positive_part_fee(gain: Usd, pfp: Decimal, r: Rounding) -> Result<Usd> {
    if gain.is_positive() {
        Ok(gain.scale(pfp, r)?)
    } else {
        Ok(Usd::ZERO)
    }
}

/// Scheme A for one investor: `(fund term, investor term)`.
pub fn scheme_a_terms(
    tracker: &InvestorTracker,
    nav: Price,
    hwm: Price,
    pfp: Decimal,
    r: Rounding,
) -> Result<(Usd, Usd)> {
    let above = tracker.total_tokens.sub(tracker.below_hwm.tokens)?;
    let fund_term = if nav > hwm {
        above.value_at(nav.sub(hwm)?, r)?.scale(pfp, r)?
    } else {
        Usd::ZERO
    };
    let investor_term = if tracker.below_hwm.is_empty() {
        Usd::ZERO
    } else {
        positive_part_fee(tracker.below_hwm.gain_at(nav, r)?, pfp, r)?
    };
    Ok((fund_term, investor_term))
}

pub fn perf_fee_scheme_a(state: &FundState, investor: &InvestorId, nav: Price, r: Rounding) -> Result<Usd> {
    match state.investors.get(investor) {
        None => Ok(Usd::ZERO),
        Some(t) => {
            let (a, b) = scheme_a_terms(t, nav, state.hwm, state.fees.perf_fee, r)?;
            Ok(a.add(b)?)
        }
    }
}

/// Levy scheme A across all investors and crystallize the below-HWM
/// averages that were charged.
pub fn levy_scheme_a(state: &mut FundState, nav: Price, r: Rounding, out: &mut FeeAssessment) -> Result<()> {
    let pfp = state.fees.perf_fee;
    let hwm = state.hwm;
    for (id, t) in state.investors.iter_mut() {
        let (fund_term, investor_term) = scheme_a_terms(t, nav, hwm, pfp, r)?;
        if investor_term.is_positive() {
            t.below_hwm.mark_to(nav, r)?;
        }
        out.perf_fee_fund = out.perf_fee_fund.add(fund_term)?;
        out.perf_fee_investor = out.perf_fee_investor.add(investor_term)?;
        if !fund_term.is_zero() || !investor_term.is_zero() {
            out.per_investor.insert(id.clone(), (fund_term, investor_term));
        }
    }
    Ok(())
}

/// Adjust an investor's below-HWM tracker: `invest` tokens enter at `nav`,
/// `withdraw` below-HWM tokens leave at the running average.
pub fn update_below_hwm_trackers(
    tracker: &mut InvestorTracker,
    invest: Tokens,
    withdraw: Tokens,
    nav: Price,
    r: Rounding,
) -> Result<()> {
    if invest.is_negative() || withdraw.is_negative() {
        return Err(integrity("negative tracker adjustment"));
    }
    if !withdraw.is_zero() {
        tracker.below_hwm.remove(withdraw, r)?;
    }
    if !invest.is_zero() {
        tracker.below_hwm.blend(nav, invest, r)?;
    }
    Ok(())
}

/// Raise the HWM when `nav` strictly exceeds it, stamping `event_index`.
/// Returns whether it moved.
pub fn post_rebalance_hwm_update(state: &mut FundState, nav: Price, event_index: u64) -> bool {
    if nav <= state.hwm {
        return false;
    }
    state.hwm = nav;
    state.last_hwm_rebalance = event_index;
    for t in state.investors.values_mut() {
        t.below_hwm = WeightedNav::default();
    }
    true
}

/// Scheme B: `max(0, nav − navWavg)·PFP·tokens`, with the average
/// crystallized to `nav` after a levy.
pub fn perf_fee_scheme_b(nav_wavg: &WeightedNav, nav: Price, pfp: Decimal, r: Rounding) -> Result<(Usd, WeightedNav)> {
    let gain = nav_wavg.gain_at(nav, r)?;
    let mut next = *nav_wavg;
    if !gain.is_positive() {
        return Ok((Usd::ZERO, next));
    }
    next.mark_to(nav, r)?;
    Ok((gain.scale(pfp, r)?, next))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SchemeCComponents {
    pub levy: Usd,
    pub redemption_fee: Usd,
    pub fund_fee: Usd,
    pub nav_wavg_pb: Option<Price>,
    pub plough_back: Usd,
}

/// Plough-back applies when NAV recovered since the last event but is
/// still under the weighted average.
pub fn plough_back_mark(nav_wavg: &WeightedNav, nav: Price, nav_prev: Price, r: Rounding) -> Result<Option<Price>> {
    if nav <= nav_prev {
        return Ok(None);
    }
    match nav_wavg.price(r)? {
        Some(_) if nav_wavg.gain_at(nav, r)?.is_negative() => Ok(Some(nav)),
        _ => Ok(None),
    }
}

/// Scheme C over the pre-flow tracker. The levy is the scheme-B levy,
/// split into the part falling on `redeemed` tokens and the rest. With a
/// plough-back mark, the gap between the average and `nav` on tokens that
/// stay is returned, capped by `refundable`.
pub fn perf_fee_scheme_c(
    nav_wavg: &WeightedNav,
    nav: Price,
    nav_prev: Price,
    redeemed: Tokens,
    pfp: Decimal,
    refundable: Usd,
    r: Rounding,
) -> Result<SchemeCComponents> {
    let (levy, _) = perf_fee_scheme_b(nav_wavg, nav, pfp, r)?;
    let nav_wavg_pb = plough_back_mark(nav_wavg, nav, nav_prev, r)?;
    let total = nav_wavg.tokens;
    if redeemed > total || redeemed.is_negative() {
        return Err(integrity("redeemed tokens outside tracker"));
    }
    let mut out = SchemeCComponents { levy, nav_wavg_pb, ..Default::default() };
    if total.is_zero() {
        return Ok(out);
    }
    out.redemption_fee = if nav_wavg_pb.is_some() || levy.is_zero() {
        Usd::ZERO
    } else {
        levy.scale_frac(redeemed.0, total.0, r)?
    };
    out.fund_fee = levy.sub(out.redemption_fee)?;
    if nav_wavg_pb.is_some() {
        let gap = nav_wavg.gain_at(nav, r)?.neg()?;
        let staying = total.sub(redeemed)?;
        let pb = gap.scale(pfp, r)?.scale_frac(staying.0, total.0, r)?;
        out.plough_back = pb.min(refundable.clamp_non_negative());
    }
    Ok(out)
}

/// Tokens minted for `fee` against a fund of `fund_value` over `supply`.
pub fn fee_tokens_for(fee: Usd, fund_value: Usd, supply: Tokens, mode: MintMode, r: Rounding) -> Result<Tokens> {
    if fee.is_negative() {
        return Err(integrity("negative fee"));
    }
    if fee.is_zero() {
        return Ok(Tokens::ZERO);
    }
    match mode {
        MintMode::PreMintNav => {
            let nav = compute_nav(fund_value, supply, r)?;
            Ok(fee.tokens_at(nav, r)?)
        }
        MintMode::ExactDilution => {
            let rest = fund_value.sub(fee)?;
            if !rest.is_positive() {
                return Err(EngineError::InvalidConfig("fee consumes the whole fund".into()));
            }
            Ok(Tokens(fee.0.mul_div(supply.0, rest.0, r)?))
        }
    }
}

/// Mint `fee` worth of tokens to the fee collector. Returns the tokens and
/// the NAV after minting.
pub fn mint_fee_tokens(state: &mut FundState, fee: Usd, mode: MintMode, r: Rounding) -> Result<(Tokens, Price)> {
    let tokens = fee_tokens_for(fee, state.fund_value, state.token_supply, mode, r)?;
    state.token_supply = state.token_supply.add(tokens)?;
    state.fee_collector.tokens = state.fee_collector.tokens.add(tokens)?;
    let nav = compute_nav(state.fund_value, state.token_supply, r)?;
    state.nav = nav;
    Ok((tokens, nav))
}

/// Burn fee collector tokens worth `usd` at `nav`, never more than it holds.
/// Returns the tokens burned and the USD they cover.
pub fn burn_fee_tokens(state: &mut FundState, usd: Usd, nav: Price, r: Rounding) -> Result<(Tokens, Usd)> {
    if !usd.is_positive() {
        return Ok((Tokens::ZERO, Usd::ZERO));
    }
    let wanted = usd.tokens_at(nav, r)?;
    let held = state.fee_collector.tokens;
    let (tokens, covered) = if wanted <= held { (wanted, usd) } else { (held, held.value_at(nav, r)?) };
    state.fee_collector.tokens = held.sub(tokens)?;
    state.token_supply = state.token_supply.sub(tokens)?;
    Ok((tokens, covered))
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

    fn t(n: i64) -> Tokens {
        Tokens::from_int(n)
    }

    #[test]
    fn management_fee_examples() {
        let m = Usd::from_int(1_000_000);
        assert_eq!(management_fee(m, d("0.02"), d("1"), R).unwrap(), Usd(d("54.794520547945205479")));
        assert_eq!(management_fee(m, Decimal::ZERO, d("17"), R).unwrap(), Usd::ZERO);
        assert_eq!(management_fee(m, d("0.02"), d("365"), R).unwrap(), Usd::from_int(20_000));
        assert!(management_fee(m, d("0.02"), d("-1"), R).is_err());
    }

    #[test]
    fn scheme_a_examples() {
        let pfp = d("0.2");
        let mut tr = InvestorTracker { total_tokens: t(200), ..Default::default() };
        tr.below_hwm = WeightedNav::at(p("1.00"), t(100), R).unwrap();
        assert_eq!(scheme_a_terms(&tr, p("1.10"), p("1.20"), pfp, R).unwrap(), (Usd::ZERO, Usd::from_int(2)));

        let flat = InvestorTracker { total_tokens: t(200), below_hwm: WeightedNav::at(p("1.2"), t(50), R).unwrap() };
        assert_eq!(scheme_a_terms(&flat, p("1.2"), p("1.2"), pfp, R).unwrap(), (Usd::ZERO, Usd::ZERO));

        let above = InvestorTracker { total_tokens: t(200), ..Default::default() };
        assert_eq!(scheme_a_terms(&above, p("1.30"), p("1.20"), pfp, R).unwrap(), (Usd::from_int(4), Usd::ZERO));
    }

    #[test]
    fn below_hwm_tracker_examples() {
        let mut tr = InvestorTracker { total_tokens: t(150), below_hwm: WeightedNav::at(p("1.00"), t(100), R).unwrap() };
        update_below_hwm_trackers(&mut tr, t(50), Tokens::ZERO, p("1.10"), R).unwrap();
        assert_eq!(tr.below_hwm.price(R).unwrap(), Some(p("1.033333333333333333")));

        let before = tr.clone();
        update_below_hwm_trackers(&mut tr, Tokens::ZERO, Tokens::ZERO, p("5"), R).unwrap();
        assert_eq!(tr, before);

        let mut fresh = InvestorTracker::default();
        update_below_hwm_trackers(&mut fresh, t(100), Tokens::ZERO, p("0.90"), R).unwrap();
        assert_eq!(fresh.below_hwm.price(R).unwrap(), Some(p("0.90")));
        assert_eq!(fresh.tokens_below_hwm(), t(100));

        assert!(update_below_hwm_trackers(&mut fresh, Tokens::ZERO, t(101), p("1"), R).is_err());
    }

    fn seeded() -> FundState {
        let mut s = FundState::seed(
            p("1.20"),
            &[(InvestorId::new("a"), Usd::from_int(120))],
            FeeSchedule { perf_fee: d("0.2"), ..Default::default() },
            Treasury::default(),
            R,
        )
        .unwrap();
        s.investors.get_mut(&InvestorId::new("a")).unwrap().below_hwm = WeightedNav::at(p("1.1"), t(40), R).unwrap();
        s
    }

    #[test]
    fn hwm_update_rules() {
        let mut s = seeded();
        assert!(!post_rebalance_hwm_update(&mut s, p("1.15"), 7));
        assert!(!post_rebalance_hwm_update(&mut s, p("1.20"), 7));
        assert_eq!(s.investors[&InvestorId::new("a")].tokens_below_hwm(), t(40));
        assert!(post_rebalance_hwm_update(&mut s, p("1.25"), 7));
        assert_eq!(s.hwm, p("1.25"));
        assert_eq!(s.last_hwm_rebalance, 7);
        assert_eq!(s.investors[&InvestorId::new("a")].tokens_below_hwm(), Tokens::ZERO);
    }

    #[test]
    fn scheme_a_crystallizes_below_hwm_gain() {
        let mut s = seeded();
        let mut first = FeeAssessment::default();
        levy_scheme_a(&mut s, p("1.15"), R, &mut first).unwrap();
        assert_eq!(first.perf_fee_investor, Usd(d("0.4")));
        let mut second = FeeAssessment::default();
        levy_scheme_a(&mut s, p("1.15"), R, &mut second).unwrap();
        assert_eq!(second.perf_fee_total().unwrap(), Usd::ZERO);
    }

    #[test]
    fn scheme_b_examples() {
        let pfp = d("0.2");
        let w = WeightedNav::at(p("1.00"), t(1000), R).unwrap();
        let (fee, next) = perf_fee_scheme_b(&w, p("1.10"), pfp, R).unwrap();
        assert_eq!(fee, Usd::from_int(20));
        assert_eq!(next.price(R).unwrap(), Some(p("1.10")));

        let (again, same) = perf_fee_scheme_b(&next, p("1.10"), pfp, R).unwrap();
        assert_eq!(again, Usd::ZERO);
        assert_eq!(same, next);

        // Fall to 0.90 and buy 500 there: 1100 + 450 over 1500 tokens.
        let mut after = next;
        let (fee, _) = perf_fee_scheme_b(&after, p("0.90"), pfp, R).unwrap();
        assert_eq!(fee, Usd::ZERO);
        after.blend(p("0.90"), t(500), R).unwrap();
        assert_eq!(after.basis, Usd::from_int(1550));
        assert_eq!(after.price(R).unwrap(), Some(p("1.033333333333333333")));
    }

    #[test]
    fn scheme_c_plough_back_example() {
        let pfp = d("0.2");
        let w = WeightedNav { basis: Usd::from_int(1550), tokens: t(1500) };
        let c = perf_fee_scheme_c(&w, p("1.00"), p("0.90"), t(300), pfp, Usd::from_int(20), R).unwrap();
        assert_eq!(c.nav_wavg_pb, Some(p("1.00")));
        assert_eq!(c.levy, Usd::ZERO);
        assert_eq!(c.redemption_fee, Usd::ZERO);
        assert_eq!(c.plough_back, Usd::from_int(8));

        // Falling NAV: no mark, no refund.
        let fall = perf_fee_scheme_c(&w, p("0.85"), p("0.90"), t(300), pfp, Usd::from_int(20), R).unwrap();
        assert_eq!(fall.nav_wavg_pb, None);
        assert_eq!(fall.plough_back, Usd::ZERO);

        // Above the average: plain levy, a fifth of it on redeemed tokens.
        let up = perf_fee_scheme_c(&w, p("1.10"), p("0.90"), t(300), pfp, Usd::from_int(20), R).unwrap();
        assert_eq!(up.nav_wavg_pb, None);
        assert_eq!(up.plough_back, Usd::ZERO);
        assert_eq!(up.levy, Usd::from_int(20));
        assert_eq!(up.redemption_fee, Usd::from_int(4));
        assert_eq!(up.fund_fee, Usd::from_int(16));

        let capped = perf_fee_scheme_c(&w, p("1.00"), p("0.90"), t(300), pfp, Usd::from_int(5), R).unwrap();
        assert_eq!(capped.plough_back, Usd::from_int(5));
    }

    #[test]
    fn mint_examples() {
        let mut s = FundState::seed(p("2"), &[(InvestorId::new("a"), Usd::from_int(10_000))], FeeSchedule::default(), Treasury::default(), R).unwrap();
        let (tokens, nav) = mint_fee_tokens(&mut s, Usd::from_int(100), MintMode::PreMintNav, R).unwrap();
        assert_eq!(tokens, t(50));
        assert_eq!(nav, p("1.980198019801980198"));
        s.check_integrity().unwrap();

        let (zero, same) = mint_fee_tokens(&mut s, Usd::ZERO, MintMode::PreMintNav, R).unwrap();
        assert_eq!(zero, Tokens::ZERO);
        assert_eq!(same, nav);

        let mut b = FundState::seed(p("1"), &[(InvestorId::new("a"), Usd::from_int(1_000))], FeeSchedule::default(), Treasury::default(), R).unwrap();
        b.fee_collector.tokens = t(20);
        b.token_supply = b.token_supply.add(t(20)).unwrap();
        let (burned, covered) = burn_fee_tokens(&mut b, Usd::from_int(8), p("1.00"), R).unwrap();
        assert_eq!((burned, covered), (t(8), Usd::from_int(8)));
        b.check_integrity().unwrap();
    }

    #[test]
    fn exact_dilution_preserves_fee_value() {
        let tokens = fee_tokens_for(Usd::from_int(100), Usd::from_int(10_000), t(5000), MintMode::ExactDilution, R).unwrap();
        let nav = compute_nav(Usd::from_int(10_000), t(5000).add(tokens).unwrap(), R).unwrap();
        let value = tokens.value_at(nav, R).unwrap();
        let err = Usd::from_int(100).sub(value).unwrap().abs().unwrap();
        assert!(err <= Usd(d("0.000000000000001")));
    }
}
