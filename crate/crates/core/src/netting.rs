//! Aggregation, direction flags, flow caps, FIFO deposit acceptance and
//! pro-rata withdrawal acceptance.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::decimal::{Decimal, Rounding};
use crate::error::{integrity, Result};
use crate::quantity::{Price, Tokens, Usd};
use crate::state::InvestorId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepositRequest {
    pub investor: InvestorId,
    pub amount: Usd,
    /// Arrival order; strictly increasing across the queue.
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WithdrawRequest {
    pub investor: InvestorId,
    pub tokens: Tokens,
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowCaps {
    pub max_deposit: Usd,
    pub max_withdraw: Usd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Direction {
    pub is_net_deposit: bool,
    /// Total deposits minus total withdrawals in USD, before caps.
    pub net_dpst_or_wdrw: Usd,
}

impl FlowCaps {
    pub const UNLIMITED: FlowCaps = FlowCaps { max_deposit: Usd(Decimal::MAX), max_withdraw: Usd(Decimal::MAX) };
}

impl Direction {
    pub fn is_net_withdraw(&self) -> bool {
        !self.is_net_deposit
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NettingResult {
    pub total_dpst_usd: Usd,
    pub total_wdrw_tokens: Tokens,
    pub total_wdrw_usd: Usd,
    pub direction: Direction,
    pub net_amount_event: Usd,
    pub deposit_accept_ratio: Decimal,
    pub withdraw_accept_ratio: Decimal,
    /// Aligned with the deposit list passed in.
    pub accepted_deposits: Vec<Usd>,
    /// Aligned with the withdrawal list passed in.
    pub accepted_withdrawals: Vec<Tokens>,
}

pub fn aggregate_requests(
    deposits: &[DepositRequest],
    withdrawals: &[WithdrawRequest],
) -> Result<(Usd, Tokens)> {
    let usd = Usd::sum(deposits.iter().map(|d| d.amount))?;
    let tokens = Tokens::sum(withdrawals.iter().map(|w| w.tokens))?;
    Ok((usd, tokens))
}

/// Ties (deposits exactly matching withdrawals) count as a net deposit.
pub fn net_direction(
    total_dpst: Usd,
    total_wdrw_tokens: Tokens,
    nav: Price,
    r: Rounding,
) -> Result<Direction> {
    let wdrw_usd = total_wdrw_tokens.value_at(nav, r)?;
    Ok(Direction {
        is_net_deposit: total_dpst >= wdrw_usd,
        net_dpst_or_wdrw: total_dpst.sub(wdrw_usd)?,
    })
}

pub fn net_amount_event(direction: Direction, caps: FlowCaps) -> Result<Usd> {
    if direction.is_net_deposit {
        Ok(direction.net_dpst_or_wdrw.min(caps.max_deposit))
    } else {
        Ok(direction.net_dpst_or_wdrw.abs()?.min(caps.max_withdraw).neg()?)
    }
}

/// Fill deposits in `seq` order up to `|net_amount_event| + total_wdrw_usd`.
/// The first request that would cross capacity is filled partially so the
/// cumulative acceptance lands exactly on capacity; later ones get zero.
pub fn allocate_deposits_fifo(
    deposits: &[DepositRequest],
    net_amount_event: Usd,
    total_wdrw_usd: Usd,
    r: Rounding,
) -> Result<(Vec<Usd>, Decimal)> {
    let capacity = net_amount_event.abs()?.add(total_wdrw_usd.abs()?)?;
    let total = Usd::sum(deposits.iter().map(|d| d.amount))?;

    let mut order: Vec<usize> = (0..deposits.len()).collect();
    order.sort_by_key(|&i| deposits[i].seq);

    let mut accepted = alloc::vec![Usd::ZERO; deposits.len()];
    let mut remaining = capacity;
    for i in order {
        let fill = deposits[i].amount.min(remaining).clamp_non_negative();
        accepted[i] = fill;
        remaining = remaining.sub(fill)?;
    }

    let ratio = if total.is_zero() {
        Decimal::ONE
    } else {
        capacity.ratio(total, r)?.min(Decimal::ONE)
    };
    Ok((accepted, ratio))
}

/// Every withdrawal gets the same fraction
/// `min((|net_amount_event| + total_dpst) / total_wdrw_usd, 1)` of its request.
pub fn allocate_withdrawals_prorata(
    withdrawals: &[WithdrawRequest],
    net_amount_event: Usd,
    total_dpst: Usd,
    nav: Price,
    r: Rounding,
) -> Result<(Vec<Tokens>, Decimal)> {
    let total_tokens = Tokens::sum(withdrawals.iter().map(|w| w.tokens))?;
    let total_usd = total_tokens.value_at(nav, r)?;
    if total_usd.is_zero() {
        return Ok((withdrawals.iter().map(|w| w.tokens).collect(), Decimal::ONE));
    }
    let capacity = net_amount_event.abs()?.add(total_dpst.abs()?)?;
    let ratio = capacity.ratio(total_usd, r)?.min(Decimal::ONE);
    let accepted = withdrawals
        .iter()
        .map(|w| if ratio == Decimal::ONE { Ok(w.tokens) } else { w.tokens.scale(ratio, r) })
        .collect::<core::result::Result<Vec<_>, _>>()?;
    Ok((accepted, ratio))
}

/// Collapse each investor's requests into at most one net deposit or one
/// net withdrawal, crossing the two at `nav`. The surviving request keeps
/// the investor's earliest sequence number.
pub fn net_per_investor(
    deposits: &[DepositRequest],
    withdrawals: &[WithdrawRequest],
    nav: Price,
    r: Rounding,
) -> Result<(Vec<DepositRequest>, Vec<WithdrawRequest>)> {
    struct Acc {
        usd: Usd,
        tokens: Tokens,
        seq: u64,
    }
    let mut by_investor: BTreeMap<&InvestorId, Acc> = BTreeMap::new();
    for d in deposits {
        let acc = by_investor
            .entry(&d.investor)
            .or_insert(Acc { usd: Usd::ZERO, tokens: Tokens::ZERO, seq: d.seq });
        acc.usd = acc.usd.add(d.amount)?;
        acc.seq = acc.seq.min(d.seq);
    }
    for w in withdrawals {
        let acc = by_investor
            .entry(&w.investor)
            .or_insert(Acc { usd: Usd::ZERO, tokens: Tokens::ZERO, seq: w.seq });
        acc.tokens = acc.tokens.add(w.tokens)?;
        acc.seq = acc.seq.min(w.seq);
    }

    let mut out_d = Vec::new();
    let mut out_w = Vec::new();
    for (id, acc) in by_investor {
        let w_usd = acc.tokens.value_at(nav, r)?;
        if acc.usd >= w_usd {
            let net = acc.usd.sub(w_usd)?;
            if net.is_positive() {
                out_d.push(DepositRequest { investor: id.clone(), amount: net, seq: acc.seq });
            }
        } else {
            let offset = acc.usd.tokens_at(nav, r)?;
            let net = acc.tokens.sub(offset)?;
            if net.is_positive() {
                out_w.push(WithdrawRequest { investor: id.clone(), tokens: net, seq: acc.seq });
            }
        }
    }
    out_d.sort_by_key(|d| d.seq);
    out_w.sort_by_key(|w| w.seq);
    Ok((out_d, out_w))
}

/// Aggregate, flag, cap and allocate in one pass. Requests are expected
/// to be netted per investor already.
pub fn run_netting(
    deposits: &[DepositRequest],
    withdrawals: &[WithdrawRequest],
    nav: Price,
    caps: FlowCaps,
    r: Rounding,
) -> Result<NettingResult> {
    if caps.max_deposit.is_negative() || caps.max_withdraw.is_negative() {
        return Err(integrity("flow caps must be non-negative"));
    }
    let (total_dpst_usd, total_wdrw_tokens) = aggregate_requests(deposits, withdrawals)?;
    let direction = net_direction(total_dpst_usd, total_wdrw_tokens, nav, r)?;
    let net_amount_event = net_amount_event(direction, caps)?;
    let total_wdrw_usd = total_wdrw_tokens.value_at(nav, r)?;
    let (accepted_deposits, deposit_accept_ratio) =
        allocate_deposits_fifo(deposits, net_amount_event, total_wdrw_usd, r)?;
    let (accepted_withdrawals, withdraw_accept_ratio) =
        allocate_withdrawals_prorata(withdrawals, net_amount_event, total_dpst_usd, nav, r)?;
    Ok(NettingResult {
        total_dpst_usd,
        total_wdrw_tokens,
        total_wdrw_usd,
        direction,
        net_amount_event,
        deposit_accept_ratio,
        withdraw_accept_ratio,
        accepted_deposits,
        accepted_withdrawals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: Rounding = Rounding::Down;

    fn dec(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn dep(amount: i64, seq: u64) -> DepositRequest {
        DepositRequest { investor: InvestorId::new(alloc::format!("d{seq}")), amount: Usd::from_int(amount), seq }
    }

    fn wd(tokens: i64, seq: u64) -> WithdrawRequest {
        WithdrawRequest { investor: InvestorId::new(alloc::format!("w{seq}")), tokens: Tokens::from_int(tokens), seq }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_requests(&[], &[]).unwrap(), (Usd::ZERO, Tokens::ZERO));
        assert_eq!(
            aggregate_requests(&[dep(100, 1), dep(200, 2)], &[wd(50, 3)]).unwrap(),
            (Usd::from_int(300), Tokens::from_int(50))
        );
        assert_eq!(
            aggregate_requests(&[dep(10_000, 1)], &[]).unwrap(),
            (Usd::from_int(10_000), Tokens::ZERO)
        );
    }

    #[test]
    fn direction_examples() {
        let d = net_direction(Usd::from_int(300), Tokens::from_int(50), Price::from_int(2), R).unwrap();
        assert!(d.is_net_deposit);
        assert_eq!(d.net_dpst_or_wdrw, Usd::from_int(200));

        let tie = net_direction(Usd::from_int(100), Tokens::from_int(100), Price::from_int(1), R).unwrap();
        assert!(tie.is_net_deposit && !tie.is_net_withdraw());
        assert_eq!(tie.net_dpst_or_wdrw, Usd::ZERO);

        let w = net_direction(Usd::ZERO, Tokens::from_int(10), Price::from_int(1), R).unwrap();
        assert!(w.is_net_withdraw());
        assert_eq!(w.net_dpst_or_wdrw, Usd::from_int(-10));
    }

    #[test]
    fn net_amount_caps() {
        let caps = FlowCaps { max_deposit: Usd::from_int(150), max_withdraw: Usd::from_int(400) };
        let dir = |n: i64| Direction { is_net_deposit: n >= 0, net_dpst_or_wdrw: Usd::from_int(n) };
        assert_eq!(net_amount_event(dir(200), caps).unwrap(), Usd::from_int(150));
        assert_eq!(net_amount_event(dir(-500), caps).unwrap(), Usd::from_int(-400));
        assert_eq!(net_amount_event(dir(0), caps).unwrap(), Usd::ZERO);
    }

    #[test]
    fn fifo_examples() {
        let (acc, ratio) =
            allocate_deposits_fifo(&[dep(100, 1), dep(100, 2), dep(100, 3)], Usd::from_int(250), Usd::ZERO, R)
                .unwrap();
        assert_eq!(acc, [Usd::from_int(100), Usd::from_int(100), Usd::from_int(50)]);
        // 250 / 300
        assert_eq!(ratio, dec("0.833333333333333333"));

        let (acc, ratio) = allocate_deposits_fifo(&[dep(100, 1)], Usd::from_int(500), Usd::ZERO, R).unwrap();
        assert_eq!(acc, [Usd::from_int(100)]);
        assert_eq!(ratio, Decimal::ONE);

        let (acc, ratio) =
            allocate_deposits_fifo(&[dep(100, 1), dep(100, 2)], Usd::ZERO, Usd::ZERO, R).unwrap();
        assert_eq!(acc, [Usd::ZERO, Usd::ZERO]);
        assert_eq!(ratio, Decimal::ZERO);
    }

    #[test]
    fn fifo_follows_seq_not_list_order() {
        let (acc, _) =
            allocate_deposits_fifo(&[dep(100, 9), dep(100, 2)], Usd::from_int(150), Usd::ZERO, R).unwrap();
        assert_eq!(acc, [Usd::from_int(50), Usd::from_int(100)]);
    }

    #[test]
    fn prorata_examples() {
        let (acc, ratio) =
            allocate_withdrawals_prorata(&[wd(500, 1)], Usd::from_int(-400), Usd::from_int(100), Price::from_int(1), R)
                .unwrap();
        assert_eq!(ratio, Decimal::ONE);
        assert_eq!(acc, [Tokens::from_int(500)]);

        let (acc, ratio) = allocate_withdrawals_prorata(
            &[wd(300, 1), wd(700, 2)],
            Usd::from_int(-400),
            Usd::from_int(100),
            Price::from_int(1),
            R,
        )
        .unwrap();
        assert_eq!(ratio, dec("0.5"));
        assert_eq!(acc, [Tokens::from_int(150), Tokens::from_int(350)]);

        let (acc, ratio) =
            allocate_withdrawals_prorata(&[], Usd::ZERO, Usd::ZERO, Price::from_int(1), R).unwrap();
        assert!(acc.is_empty());
        assert_eq!(ratio, Decimal::ONE);
    }

    #[test]
    fn per_investor_netting_crosses_at_nav() {
        let a = InvestorId::new("a");
        let deposits = [DepositRequest { investor: a.clone(), amount: Usd::from_int(100), seq: 4 }];
        let withdrawals = [WithdrawRequest { investor: a.clone(), tokens: Tokens::from_int(30), seq: 2 }];
        let (d, w) = net_per_investor(&deposits, &withdrawals, Price::from_int(2), R).unwrap();
        assert_eq!(d, [DepositRequest { investor: a.clone(), amount: Usd::from_int(40), seq: 2 }]);
        assert!(w.is_empty());

        let (d, w) = net_per_investor(&deposits, &withdrawals, Price::from_int(5), R).unwrap();
        assert!(d.is_empty());
        assert_eq!(w, [WithdrawRequest { investor: a, tokens: Tokens::from_int(10), seq: 2 }]);
    }
}
