//! Per-lot fee calculator used as a differential reference for the
//! aggregated schemes. Every purchase is a lot with its own subscription
//! price; nothing is averaged.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::decimal::{Decimal, Rounding};
use crate::error::{integrity, EngineError, Result};
use crate::quantity::{Price, Tokens, Usd};
use crate::state::InvestorId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Below-HWM entrants pay on their own gain when they exit; the gap up
    /// to the HWM is forgiven once the fund sets a new HWM.
    FreeRide,
    /// The entry-to-HWM gap, times `ratio`, is escrowed at entry and
    /// collected at the next new HWM.
    LiabilityUpfront { ratio: Decimal },
}

impl OracleMode {
    pub fn ratio(self) -> Decimal {
        match self {
            OracleMode::FreeRide => Decimal::ZERO,
            OracleMode::LiabilityUpfront { ratio } => ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lot {
    pub investor: InvestorId,
    pub tokens: Tokens,
    pub subscription_price: Price,
    pub entry_event: u64,
    pub entered_below_hwm: bool,
    /// Escrowed liability still attached to the remaining tokens.
    pub liability_paid: Usd,
    /// Fees charged so far, per token.
    pub charged_per_token: Price,
    /// Highest NAV at which this lot was charged.
    pub peak: Price,
}

pub fn record_lot(investor: InvestorId, tokens: Tokens, nav: Price, hwm: Price, event: u64) -> Lot {
    Lot {
        investor,
        tokens,
        subscription_price: nav,
        entry_event: event,
        entered_below_hwm: nav <= hwm,
        liability_paid: Usd::ZERO,
        charged_per_token: Price::ZERO,
        peak: nav,
    }
}

/// `max(0, HWM − SP)·PFP·tokens·ratio`.
pub fn upfront_liability(lot: &Lot, hwm: Price, pfp: Decimal, ratio: Decimal, r: Rounding) -> Result<Usd> {
    let gap = hwm.sub_clamped(lot.subscription_price)?;
    Ok(lot.tokens.value_at(gap, r)?.scale(pfp, r)?.scale(ratio, r)?)
}

/// Fee on `tokens` of `lot` leaving at `nav`. Only below-HWM lots pay on
/// exit; above-HWM gains were taken by the fund-level levy.
pub fn exit_fee(lot: &Lot, tokens: Tokens, nav: Price, pfp: Decimal, r: Rounding) -> Result<Usd> {
    if !lot.entered_below_hwm {
        return Ok(Usd::ZERO);
    }
    let gain = nav.sub_clamped(lot.subscription_price)?;
    Ok(tokens.value_at(gain, r)?.scale(pfp, r)?)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DiagnosticKind {
    /// An exit consumed lots with differing subscription prices or HWM status.
    HeterogeneousExit,
    /// Free-ride gap written off at a new HWM.
    ForgivenGap(Usd),
    /// Escrow returned on exit or on a switch to free-ride.
    EscrowRefund(Usd),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub event: u64,
    pub investor: Option<InvestorId>,
    pub kind: DiagnosticKind,
}

/// One event as seen by the oracle: the pre-fee NAV that drives levies,
/// the NAV fills happen at, and the per-investor token fills.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleEvent {
    pub nav: Price,
    pub fill_nav: Price,
    pub entries: Vec<(InvestorId, Tokens)>,
    pub exits: Vec<(InvestorId, Tokens)>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleEventResult {
    pub event: u64,
    pub fund_levy: Usd,
    pub escrow_collected: Usd,
    pub exit_fees: Usd,
    pub refunds: Usd,
    pub escrow_posted: Usd,
    /// Fees recognised at this event.
    pub fee: Usd,
    pub cumulative: Usd,
    pub new_hwm: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LotOracle {
    pub mode: OracleMode,
    pub pfp: Decimal,
    pub hwm: Price,
    pub lots: Vec<Lot>,
    pub escrow: Usd,
    pub cumulative: Usd,
    pub event: u64,
    pub rounding: Rounding,
    pub diagnostics: Vec<Diagnostic>,
}

impl LotOracle {
    pub fn new(mode: OracleMode, pfp: Decimal, seed_nav: Price, seeds: &[(InvestorId, Tokens)], r: Rounding) -> Result<Self> {
        let ratio = mode.ratio();
        if ratio.is_negative() || ratio > Decimal::ONE {
            return Err(EngineError::InvalidConfig("hwm liability ratio outside [0, 1]".into()));
        }
        if matches!(mode, OracleMode::LiabilityUpfront { ratio } if ratio.is_zero()) {
            return Err(EngineError::InvalidConfig("upfront liability needs a positive ratio".into()));
        }
        let lots = seeds
            .iter()
            .filter(|(_, t)| t.is_positive())
            .map(|(id, t)| {
                let mut lot = record_lot(id.clone(), *t, seed_nav, seed_nav, 0);
                // Launch tokens are the HWM; nothing is owed on them.
                lot.entered_below_hwm = false;
                lot
            })
            .collect();
        Ok(LotOracle {
            mode,
            pfp,
            hwm: seed_nav,
            lots,
            escrow: Usd::ZERO,
            cumulative: Usd::ZERO,
            event: 0,
            rounding: r,
            diagnostics: Vec::new(),
        })
    }

    pub fn holdings(&self) -> BTreeMap<InvestorId, Tokens> {
        let mut out: BTreeMap<InvestorId, Tokens> = BTreeMap::new();
        for lot in &self.lots {
            let e = out.entry(lot.investor.clone()).or_default();
            *e = Tokens(e.0.add(lot.tokens.0).unwrap_or(Decimal::MAX));
        }
        out
    }

    fn charge(lot: &mut Lot, per_token: Price, at: Price) -> Result<()> {
        lot.charged_per_token = lot.charged_per_token.add(per_token)?;
        if at > lot.peak {
            lot.peak = at;
        }
        Ok(())
    }

    /// Run one event: fund-level levy at a new HWM, then exits, then entries.
    pub fn step(&mut self, ev: &OracleEvent) -> Result<OracleEventResult> {
        self.event += 1;
        let r = self.rounding;
        let pfp = self.pfp;
        let mut res = OracleEventResult { event: self.event, ..Default::default() };

        if ev.nav > self.hwm {
            res.new_hwm = true;
            let rise = ev.nav.sub(self.hwm)?;
            let rise_fee = Price(rise.0.mul(pfp, r)?);
            for lot in self.lots.iter_mut() {
                res.fund_levy = res.fund_levy.add(lot.tokens.value_at(rise, r)?.scale(pfp, r)?)?;
                let mut per_token = rise_fee;
                if lot.entered_below_hwm {
                    let gap = self.hwm.sub_clamped(lot.subscription_price)?;
                    match self.mode {
                        OracleMode::LiabilityUpfront { .. } => {
                            res.escrow_collected = res.escrow_collected.add(lot.liability_paid)?;
                            self.escrow = self.escrow.sub(lot.liability_paid)?;
                            if lot.tokens.is_positive() {
                                per_token = per_token.add(lot.liability_paid.per(lot.tokens, r)?)?;
                            }
                        }
                        OracleMode::FreeRide => {
                            let forgiven = lot.tokens.value_at(gap, r)?.scale(pfp, r)?;
                            if forgiven.is_positive() {
                                self.diagnostics.push(Diagnostic {
                                    event: self.event,
                                    investor: Some(lot.investor.clone()),
                                    kind: DiagnosticKind::ForgivenGap(forgiven),
                                });
                            }
                        }
                    }
                    lot.entered_below_hwm = false;
                    lot.liability_paid = Usd::ZERO;
                }
                Self::charge(lot, per_token, ev.nav)?;
            }
            self.hwm = ev.nav;
        }

        for (id, want) in &ev.exits {
            self.consume(id, *want, ev.fill_nav, &mut res)?;
        }

        for (id, tokens) in &ev.entries {
            if !tokens.is_positive() {
                continue;
            }
            let mut lot = record_lot(id.clone(), *tokens, ev.fill_nav, self.hwm, self.event);
            if let OracleMode::LiabilityUpfront { ratio } = self.mode {
                if lot.entered_below_hwm {
                    let owed = upfront_liability(&lot, self.hwm, pfp, ratio, r)?;
                    lot.liability_paid = owed;
                    self.escrow = self.escrow.add(owed)?;
                    res.escrow_posted = res.escrow_posted.add(owed)?;
                }
            }
            self.lots.push(lot);
        }

        res.fee = res.fund_levy.add(res.escrow_collected)?.add(res.exit_fees)?;
        self.cumulative = self.cumulative.add(res.fee)?;
        res.cumulative = self.cumulative;
        Ok(res)
    }

    /// FIFO redemption of `want` tokens from `id`'s lots at `nav`.
    fn consume(&mut self, id: &InvestorId, want: Tokens, nav: Price, res: &mut OracleEventResult) -> Result<()> {
        let r = self.rounding;
        let pfp = self.pfp;
        let mut left = want;
        let mut kinds: Vec<(Price, bool)> = Vec::new();
        for lot in self.lots.iter_mut().filter(|l| &l.investor == id && l.tokens.is_positive()) {
            if !left.is_positive() {
                break;
            }
            let take = left.min(lot.tokens);
            let key = (lot.subscription_price, lot.entered_below_hwm);
            if !kinds.contains(&key) {
                kinds.push(key);
            }
            let gain_fee = exit_fee(lot, take, nav, pfp, r)?;
            let collected = match self.mode {
                OracleMode::FreeRide => gain_fee,
                OracleMode::LiabilityUpfront { .. } => {
                    let escrow_part = if take == lot.tokens {
                        lot.liability_paid
                    } else {
                        lot.liability_paid.scale_frac(take.0, lot.tokens.0, r)?
                    };
                    let kept = escrow_part.min(gain_fee);
                    let refund = escrow_part.sub(kept)?;
                    lot.liability_paid = lot.liability_paid.sub(escrow_part)?;
                    self.escrow = self.escrow.sub(escrow_part)?;
                    if refund.is_positive() {
                        res.refunds = res.refunds.add(refund)?;
                        self.diagnostics.push(Diagnostic {
                            event: self.event,
                            investor: Some(id.clone()),
                            kind: DiagnosticKind::EscrowRefund(refund),
                        });
                    }
                    kept
                }
            };
            if collected.is_positive() {
                Self::charge(lot, collected.per(take, r)?, nav)?;
            }
            res.exit_fees = res.exit_fees.add(collected)?;
            lot.tokens = lot.tokens.sub(take)?;
            left = left.sub(take)?;
        }
        if left.is_positive() {
            return Err(integrity("oracle exit exceeds the investor's lots"));
        }
        self.lots.retain(|l| l.tokens.is_positive());
        if kinds.len() > 1 {
            self.diagnostics.push(Diagnostic {
                event: self.event,
                investor: Some(id.clone()),
                kind: DiagnosticKind::HeterogeneousExit,
            });
        }
        Ok(())
    }

    /// Change the liability ratio mid-run. Dropping to zero returns every
    /// escrow; raising it is refused because earlier entrants rode free.
    pub fn set_ratio(&mut self, ratio: Decimal) -> Result<Usd> {
        if ratio.is_positive() {
            if ratio == self.mode.ratio() {
                return Ok(Usd::ZERO);
            }
            return Err(EngineError::ModeSwitchRejected);
        }
        let refunded = self.escrow;
        for lot in self.lots.iter_mut() {
            lot.liability_paid = Usd::ZERO;
        }
        self.escrow = Usd::ZERO;
        self.mode = OracleMode::FreeRide;
        if refunded.is_positive() {
            self.diagnostics.push(Diagnostic { event: self.event, investor: None, kind: DiagnosticKind::EscrowRefund(refunded) });
        }
        Ok(refunded)
    }

    /// Every lot has paid at most `max(0, peak − SP)·PFP` per token, with
    /// `slack` per token for rounding.
    pub fn check_no_double_charge(&self, slack: Price) -> Result<()> {
        for lot in &self.lots {
            let bound = Price(lot.peak.sub_clamped(lot.subscription_price)?.0.mul(self.pfp, Rounding::Up)?);
            if lot.charged_per_token > bound.add(slack)? {
                return Err(integrity(alloc::format!(
                    "lot of {} from event {} charged {} per token, bound {}",
                    lot.investor, lot.entry_event, lot.charged_per_token, bound
                )));
            }
        }
        Ok(())
    }
}

/// Why an aggregated scheme and the lot oracle disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DivergenceClass {
    FallRisePloughBack,
    HeterogeneousLotRedemption,
    FreeRideForgiveness,
    Unclassified,
}

impl DivergenceClass {
    pub fn name(self) -> &'static str {
        match self {
            DivergenceClass::FallRisePloughBack => "fall-rise-plough-back",
            DivergenceClass::HeterogeneousLotRedemption => "heterogeneous-lot-redemption",
            DivergenceClass::FreeRideForgiveness => "free-ride-forgiveness",
            DivergenceClass::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for DivergenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pick the first known mechanism present up to and including `event`.
pub fn classify_divergence(plough_back_events: &[u64], diagnostics: &[Diagnostic], event: u64) -> DivergenceClass {
    if plough_back_events.iter().any(|&e| e <= event) {
        return DivergenceClass::FallRisePloughBack;
    }
    let seen = diagnostics.iter().filter(|d| d.event <= event);
    let mut forgiven = false;
    for d in seen {
        match d.kind {
            DiagnosticKind::HeterogeneousExit | DiagnosticKind::EscrowRefund(_) => {
                return DivergenceClass::HeterogeneousLotRedemption
            }
            DiagnosticKind::ForgivenGap(_) => forgiven = true,
        }
    }
    if forgiven {
        DivergenceClass::FreeRideForgiveness
    } else {
        DivergenceClass::Unclassified
    }
}

/// `|a − b| ≤ tol·max(|a|, |b|)`, exact; two zeros agree.
pub fn within_relative(a: Usd, b: Usd, tol: Decimal) -> Result<bool> {
    let diff = a.sub(b)?.abs()?;
    let scale = a.abs()?.max(b.abs()?);
    if scale.is_zero() {
        return Ok(true);
    }
    Ok(crate::decimal::cmp_products(diff.0, Decimal::ONE, tol, scale.0) != core::cmp::Ordering::Greater)
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: Rounding = Rounding::Down;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Price {
        Price(d(s))
    }

    fn id(s: &str) -> InvestorId {
        InvestorId::new(s)
    }

    #[test]
    fn lot_entry_flags() {
        assert!(record_lot(id("a"), Tokens::from_int(1), p("1.00"), p("1.20"), 1).entered_below_hwm);
        assert!(!record_lot(id("a"), Tokens::from_int(1), p("1.25"), p("1.20"), 1).entered_below_hwm);
        assert!(record_lot(id("a"), Tokens::from_int(1), p("1.20"), p("1.20"), 1).entered_below_hwm);
    }

    #[test]
    fn liability_examples() {
        let lot = record_lot(id("a"), Tokens::from_int(100), p("1.00"), p("1.20"), 1);
        assert_eq!(upfront_liability(&lot, p("1.20"), d("0.2"), Decimal::ONE, R).unwrap(), Usd::from_int(4));
        let high = record_lot(id("a"), Tokens::from_int(100), p("1.30"), p("1.20"), 1);
        assert_eq!(upfront_liability(&high, p("1.20"), d("0.2"), Decimal::ONE, R).unwrap(), Usd::ZERO);
        assert_eq!(upfront_liability(&lot, p("1.20"), d("0.2"), Decimal::ZERO, R).unwrap(), Usd::ZERO);
    }

    #[test]
    fn exit_fee_examples() {
        let lot = record_lot(id("a"), Tokens::from_int(100), p("1.00"), p("1.20"), 1);
        let pfp = d("0.2");
        assert_eq!(exit_fee(&lot, Tokens::from_int(100), p("1.10"), pfp, R).unwrap(), Usd::from_int(2));
        assert_eq!(exit_fee(&lot, Tokens::from_int(100), p("0.90"), pfp, R).unwrap(), Usd::ZERO);
        let above = record_lot(id("a"), Tokens::from_int(100), p("1.30"), p("1.20"), 1);
        assert_eq!(exit_fee(&above, Tokens::from_int(100), p("1.50"), pfp, R).unwrap(), Usd::ZERO);
    }

    #[test]
    fn single_investor_rise_is_charged_once() {
        let mode = OracleMode::LiabilityUpfront { ratio: Decimal::ONE };
        let mut o = LotOracle::new(mode, d("0.2"), p("1"), &[(id("a"), Tokens::from_int(10_000))], R).unwrap();
        let up = OracleEvent { nav: p("1.4"), fill_nav: p("1.4"), ..Default::default() };
        assert_eq!(o.step(&up).unwrap().fee, Usd::from_int(800));
        assert_eq!(o.step(&up).unwrap().fee, Usd::ZERO);
        assert_eq!(o.cumulative, Usd::from_int(800));
        o.check_no_double_charge(Price::ZERO).unwrap();
    }

    #[test]
    fn escrow_collected_at_next_high() {
        let mode = OracleMode::LiabilityUpfront { ratio: Decimal::ONE };
        let mut o = LotOracle::new(mode, d("0.2"), p("1.2"), &[(id("a"), Tokens::from_int(100))], R).unwrap();
        let dip = OracleEvent { nav: p("1.0"), fill_nav: p("1.0"), entries: alloc::vec![(id("b"), Tokens::from_int(100))], exits: Vec::new() };
        let r1 = o.step(&dip).unwrap();
        assert_eq!((r1.fee, r1.escrow_posted), (Usd::ZERO, Usd::from_int(4)));
        let high = OracleEvent { nav: p("1.3"), fill_nav: p("1.3"), ..Default::default() };
        // 200 tokens · 0.1 · 0.2 plus the escrowed 4.
        assert_eq!(o.step(&high).unwrap().fee, Usd::from_int(8));
        assert_eq!(o.escrow, Usd::ZERO);
        o.check_no_double_charge(Price::ZERO).unwrap();
    }

    #[test]
    fn early_exit_refunds_unearned_escrow() {
        let mode = OracleMode::LiabilityUpfront { ratio: Decimal::ONE };
        let mut o = LotOracle::new(mode, d("0.2"), p("1.2"), &[], R).unwrap();
        let dip = OracleEvent { nav: p("1.0"), fill_nav: p("1.0"), entries: alloc::vec![(id("b"), Tokens::from_int(100))], exits: Vec::new() };
        o.step(&dip).unwrap();
        let out = OracleEvent { nav: p("1.1"), fill_nav: p("1.1"), entries: Vec::new(), exits: alloc::vec![(id("b"), Tokens::from_int(100))] };
        let res = o.step(&out).unwrap();
        assert_eq!(res.exit_fees, Usd::from_int(2));
        assert_eq!(res.refunds, Usd::from_int(2));
        assert!(o.lots.is_empty());
    }

    #[test]
    fn free_ride_forgives_gap() {
        let mut o = LotOracle::new(OracleMode::FreeRide, d("0.2"), p("1.2"), &[], R).unwrap();
        let dip = OracleEvent { nav: p("1.0"), fill_nav: p("1.0"), entries: alloc::vec![(id("b"), Tokens::from_int(100))], exits: Vec::new() };
        o.step(&dip).unwrap();
        let high = OracleEvent { nav: p("1.3"), fill_nav: p("1.3"), ..Default::default() };
        assert_eq!(o.step(&high).unwrap().fee, Usd::from_int(2));
        assert!(matches!(o.diagnostics[0].kind, DiagnosticKind::ForgivenGap(_)));
        assert_eq!(classify_divergence(&[], &o.diagnostics, 2), DivergenceClass::FreeRideForgiveness);
    }

    #[test]
    fn mode_switch_rules() {
        let mode = OracleMode::LiabilityUpfront { ratio: Decimal::ONE };
        let mut o = LotOracle::new(mode, d("0.2"), p("1.2"), &[], R).unwrap();
        let dip = OracleEvent { nav: p("1.0"), fill_nav: p("1.0"), entries: alloc::vec![(id("b"), Tokens::from_int(100))], exits: Vec::new() };
        o.step(&dip).unwrap();
        assert_eq!(o.set_ratio(d("0.5")), Err(EngineError::ModeSwitchRejected));
        assert_eq!(o.set_ratio(Decimal::ZERO).unwrap(), Usd::from_int(4));
        assert_eq!(o.mode, OracleMode::FreeRide);
        assert_eq!(o.set_ratio(Decimal::ONE), Err(EngineError::ModeSwitchRejected));
    }

    #[test]
    fn relative_tolerance() {
        let tol = d("0.000000001");
        assert!(within_relative(Usd::ZERO, Usd::ZERO, tol).unwrap());
        assert!(within_relative(Usd::from_int(1_000_000_000), Usd::from_int(1_000_000_001), tol).unwrap());
        assert!(!within_relative(Usd::from_int(1_000_000), Usd::from_int(1_000_001), tol).unwrap());
        assert!(!within_relative(Usd::ZERO, Usd(Decimal::ULP), tol).unwrap());
    }
}
