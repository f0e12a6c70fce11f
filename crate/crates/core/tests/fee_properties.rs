use alphafund_core::engine::{EngineConfig, Fund, MarketInput, RebalanceEventInput, StepOutcome};
use alphafund_core::fees::{perf_fee_scheme_b, perf_fee_scheme_c, scheme_a_terms, Scheme};
use alphafund_core::netting::DepositRequest;
use alphafund_core::state::{FeeSchedule, FundState, InvestorId, InvestorTracker, Treasury, WeightedNav};
use alphafund_core::{Decimal, Price, Rounding, Tokens, Usd};
use proptest::prelude::*;

const R: Rounding = Rounding::Down;

fn price(milli: i64) -> Price {
    Price(Decimal::from_parts(milli, 3).unwrap())
}

fn pfp() -> impl Strategy<Value = Decimal> {
    (0i64..=100).prop_map(|p| Decimal::from_parts(p, 2).unwrap())
}

proptest! {
    #[test]
    fn scheme_a_fund_term_is_zero_at_or_below_hwm(
        hwm in 500i64..2000, below in 0i64..=100, nav_off in 0i64..500, total in 1i64..10_000, wavg in 100i64..2000, f in pfp(),
    ) {
        let nav = price(hwm - nav_off);
        let t = InvestorTracker {
            total_tokens: Tokens::from_int(total),
            below_hwm: WeightedNav::at(price(wavg), Tokens::from_int(total * below / 100), R).unwrap(),
        };
        let (fund_term, _) = scheme_a_terms(&t, nav, price(hwm), f, R).unwrap();
        prop_assert_eq!(fund_term, Usd::ZERO);
    }

    #[test]
    fn fees_are_nondecreasing_in_nav(
        hwm in 500i64..2000, wavg in 500i64..2000, prev in 500i64..2000, lo in 100i64..3000, step in 0i64..1000,
        total in 1i64..10_000, below in 0i64..=100, redeemed in 0i64..=100, f in pfp(),
    ) {
        let (n1, n2) = (price(lo), price(lo + step));
        let t = InvestorTracker {
            total_tokens: Tokens::from_int(total),
            below_hwm: WeightedNav::at(price(wavg), Tokens::from_int(total * below / 100), R).unwrap(),
        };
        let a = |n| { let (x, y) = scheme_a_terms(&t, n, price(hwm), f, R).unwrap(); x.add(y).unwrap() };
        prop_assert!(a(n1) <= a(n2));

        let w = WeightedNav::at(price(wavg), Tokens::from_int(total), R).unwrap();
        prop_assert!(perf_fee_scheme_b(&w, n1, f, R).unwrap().0 <= perf_fee_scheme_b(&w, n2, f, R).unwrap().0);

        let red = Tokens::from_int(total * redeemed / 100);
        let c = |n| perf_fee_scheme_c(&w, n, price(prev), red, f, Usd::from_int(1_000_000), R).unwrap();
        prop_assert!(c(n1).levy <= c(n2).levy);
        prop_assert_eq!(c(n1).fund_fee.add(c(n1).redemption_fee).unwrap(), c(n1).levy);
        prop_assert!(c(n1).plough_back.is_zero() || c(n1).levy.is_zero());
    }

    #[test]
    fn plough_back_never_exceeds_refundable(
        wavg in 500i64..2000, nav in 100i64..2000, prev in 50i64..2000, total in 1i64..10_000,
        redeemed in 0i64..=100, refundable in 0i64..500, f in pfp(),
    ) {
        let w = WeightedNav::at(price(wavg), Tokens::from_int(total), R).unwrap();
        let red = Tokens::from_int(total * redeemed / 100);
        let c = perf_fee_scheme_c(&w, price(nav), price(prev), red, f, Usd::from_int(refundable), R).unwrap();
        prop_assert!(c.plough_back <= Usd::from_int(refundable));
        prop_assert!(!c.plough_back.is_negative());
    }
}

fn nav_event(t: i64, nav: &str) -> RebalanceEventInput {
    RebalanceEventInput::at(Decimal::from_int(t), MarketInput::TargetNav(Price(nav.parse().unwrap())))
}

fn perf_fee(o: StepOutcome) -> Usd {
    match o {
        StepOutcome::Completed(r) => r.fees.perf_fee_net().unwrap(),
        StepOutcome::Halted(_) => panic!("unexpected halt"),
    }
}

#[test]
fn unchanged_nav_levies_nothing_twice() {
    for scheme in Scheme::ALL {
        for nav in ["1.3", "0.95", "1.000000000000000001"] {
            let fees = FeeSchedule { perf_fee: "0.2".parse().unwrap(), ..Default::default() };
            let holders = [(InvestorId::new("a"), Usd::from_int(700)), (InvestorId::new("b"), Usd::from_int(300))];
            let state = FundState::seed(Price::from_int(1), &holders, fees, Treasury::default(), R).unwrap();
            let mut fund = Fund::new(EngineConfig { scheme, ..Default::default() }, state).unwrap();
            // A below-HWM entrant first, so scheme A's investor term is live.
            let mut first = nav_event(1, "0.9");
            first.deposits.push(DepositRequest { investor: InvestorId::new("c"), amount: Usd::from_int(450), seq: 1 });
            fund.step(&first).unwrap();
            fund.step(&nav_event(2, nav)).unwrap();
            let second = perf_fee(fund.step(&nav_event(3, nav)).unwrap());
            assert_eq!(second, Usd::ZERO, "scheme {scheme} at {nav}");
        }
    }
}
