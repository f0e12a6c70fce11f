//! Fund snapshots: every field as a raw 18-digit mantissa, closed by a
//! sha256 over the preceding bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use alphafund_core::engine::{CarryOver, EngineConfig, Fund, Pricing, RequestQueue};
use alphafund_core::fees::{MintMode, Scheme};
use alphafund_core::netting::{DepositRequest, FlowCaps, WithdrawRequest};
use alphafund_core::state::{FeeCollector, FeeSchedule, FundState, InvestorId, InvestorTracker, Treasury, WeightedNav};
use alphafund_core::{Decimal, Price, Rounding, Tokens, Usd};
use sha2::{Digest, Sha256};

pub const HEADER: &str = "fundsnap v1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("snapshot schema: {0}")]
    Schema(String),
    #[error("snapshot integrity: {0}")]
    Integrity(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub engine_version: String,
    pub scenario_hash: String,
    /// Scenario events consumed so far, including any halted one that was
    /// resolved by resume.
    pub events_consumed: usize,
    pub fund: Fund,
}

fn m(d: Decimal) -> i128 {
    d.mantissa()
}

pub fn write(s: &Snapshot) -> String {
    let mut o = String::new();
    let c = &s.fund.config;
    let st = &s.fund.state;
    let f = &st.fees;
    let _ = writeln!(o, "{HEADER}");
    let _ = writeln!(o, "engine {}", s.engine_version);
    let _ = writeln!(o, "scenario {}", s.scenario_hash);
    let _ = writeln!(o, "consumed {}", s.events_consumed);
    let _ = writeln!(
        o,
        "config {} {} {} {} {} {} {} {}",
        c.scheme,
        c.rounding.name(),
        c.mint_mode.name(),
        c.pricing.name(),
        c.carry_over.name(),
        m(c.caps.max_deposit.0),
        m(c.caps.max_withdraw.0),
        m(c.tolerance)
    );
    let _ = writeln!(
        o,
        "fees {} {} {} {} {}",
        m(f.mgmt_fee_annual),
        m(f.perf_fee),
        m(f.deposit_fee),
        m(f.redemption_fee),
        m(f.hwm_liability_ratio)
    );
    let pb = st.nav_wavg_pb.map_or_else(|| "-".to_string(), |p| m(p.0).to_string());
    let _ = writeln!(
        o,
        "fund {} {} {} {} {} {} {} {} {} {} {} {}",
        m(st.fund_value.0),
        m(st.token_supply.0),
        m(st.nav.0),
        m(st.hwm.0),
        st.last_hwm_rebalance,
        st.rebalance_count,
        m(st.last_event_time),
        m(st.nav_wavg.basis.0),
        m(st.nav_wavg.tokens.0),
        m(st.nav_prev.0),
        pb,
        m(st.refundable_perf_fees.0)
    );
    let _ = writeln!(o, "collector {} {}", m(st.fee_collector.tokens.0), m(st.fee_collector.usd.0));
    let t = &st.treasury;
    let _ = writeln!(o, "treasury {} {} {}", m(t.stable_balance.0), m(t.alpha_tokens.0), m(t.pending_reinvest.0));
    for (id, tr) in &st.investors {
        let _ = writeln!(
            o,
            "investor {id} {} {} {}",
            m(tr.total_tokens.0),
            m(tr.below_hwm.basis.0),
            m(tr.below_hwm.tokens.0)
        );
    }
    for d in &s.fund.queue.deposits {
        let _ = writeln!(o, "queued-deposit {} {} {}", d.investor, d.seq, m(d.amount.0));
    }
    for w in &s.fund.queue.withdrawals {
        let _ = writeln!(o, "queued-withdraw {} {} {}", w.investor, w.seq, m(w.tokens.0));
    }
    let sum = hex::encode(Sha256::digest(o.as_bytes()));
    let _ = writeln!(o, "checksum {sum}");
    o
}

struct Fields<'a> {
    line: usize,
    words: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn schema(&self, msg: impl std::fmt::Display) -> SnapshotError {
        SnapshotError::Schema(format!("line {}: {msg}", self.line))
    }

    fn expect(&self, tag: &str, n: usize) -> Result<(), SnapshotError> {
        if self.words.first() != Some(&tag) || self.words.len() != n + 1 {
            return Err(self.schema(format!("expected '{tag}' with {n} field(s)")));
        }
        Ok(())
    }

    fn int<T: std::str::FromStr>(&self, i: usize) -> Result<T, SnapshotError> {
        self.words[i].parse().map_err(|_| self.schema(format!("bad integer '{}'", self.words[i])))
    }

    fn dec(&self, i: usize) -> Result<Decimal, SnapshotError> {
        self.int::<i128>(i).map(Decimal::from_mantissa)
    }

    fn named<T>(&self, i: usize, f: impl Fn(&str) -> Option<T>) -> Result<T, SnapshotError> {
        f(self.words[i]).ok_or_else(|| self.schema(format!("unknown value '{}'", self.words[i])))
    }
}

pub fn read(text: &str) -> Result<Snapshot, SnapshotError> {
    let Some(body_end) = text.rfind("checksum ") else {
        return Err(SnapshotError::Integrity("missing checksum".into()));
    };
    let (body, tail) = text.split_at(body_end);
    if !text.starts_with(HEADER) || !body.ends_with('\n') {
        return Err(SnapshotError::Schema(format!("expected '{HEADER}' header")));
    }
    let claimed = tail.trim_start_matches("checksum ").trim_end();
    if hex::encode(Sha256::digest(body.as_bytes())) != claimed {
        return Err(SnapshotError::Integrity("checksum mismatch".into()));
    }

    let mut lines = body.lines().enumerate().skip(1).map(|(i, l)| Fields { line: i + 1, words: l.split_whitespace().collect() });
    let mut next = |tag: &str, n: usize| -> Result<Fields, SnapshotError> {
        let f = lines.next().ok_or_else(|| SnapshotError::Schema(format!("missing '{tag}' line")))?;
        f.expect(tag, n)?;
        Ok(f)
    };

    let engine = next("engine", 1)?;
    let engine_version = engine.words[1].to_string();
    if engine_version != crate::ENGINE_VERSION {
        return Err(engine.schema(format!("written by {engine_version}, this is {}", crate::ENGINE_VERSION)));
    }
    let scenario_hash = next("scenario", 1)?.words[1].to_string();
    let events_consumed = next("consumed", 1)?.int(1)?;

    let c = next("config", 8)?;
    let config = EngineConfig {
        scheme: c.named(1, Scheme::from_name)?,
        rounding: c.named(2, Rounding::from_name)?,
        mint_mode: c.named(3, MintMode::from_name)?,
        pricing: c.named(4, Pricing::from_name)?,
        carry_over: c.named(5, CarryOver::from_name)?,
        caps: FlowCaps { max_deposit: Usd(c.dec(6)?), max_withdraw: Usd(c.dec(7)?) },
        tolerance: c.dec(8)?,
    };
    let f = next("fees", 5)?;
    let fees = FeeSchedule {
        mgmt_fee_annual: f.dec(1)?,
        perf_fee: f.dec(2)?,
        deposit_fee: f.dec(3)?,
        redemption_fee: f.dec(4)?,
        hwm_liability_ratio: f.dec(5)?,
    };
    let s = next("fund", 12)?;
    let nav_wavg_pb = if s.words[11] == "-" { None } else { Some(Price(s.dec(11)?)) };
    let col = next("collector", 2)?;
    let tr = next("treasury", 3)?;
    let mut state = FundState {
        fund_value: Usd(s.dec(1)?),
        token_supply: Tokens(s.dec(2)?),
        nav: Price(s.dec(3)?),
        hwm: Price(s.dec(4)?),
        last_hwm_rebalance: s.int(5)?,
        rebalance_count: s.int(6)?,
        last_event_time: s.dec(7)?,
        nav_wavg: WeightedNav { basis: Usd(s.dec(8)?), tokens: Tokens(s.dec(9)?) },
        nav_prev: Price(s.dec(10)?),
        nav_wavg_pb,
        refundable_perf_fees: Usd(s.dec(12)?),
        investors: BTreeMap::new(),
        fee_collector: FeeCollector { tokens: Tokens(col.dec(1)?), usd: Usd(col.dec(2)?) },
        treasury: Treasury {
            stable_balance: Usd(tr.dec(1)?),
            alpha_tokens: Tokens(tr.dec(2)?),
            pending_reinvest: Usd(tr.dec(3)?),
        },
        fees,
    };
    let mut queue = RequestQueue::default();
    for l in lines {
        match l.words.first().copied() {
            Some("investor") => {
                l.expect("investor", 4)?;
                let t = InvestorTracker {
                    total_tokens: Tokens(l.dec(2)?),
                    below_hwm: WeightedNav { basis: Usd(l.dec(3)?), tokens: Tokens(l.dec(4)?) },
                };
                if state.investors.insert(InvestorId::new(l.words[1]), t).is_some() {
                    return Err(l.schema("duplicate investor"));
                }
            }
            Some("queued-deposit") => {
                l.expect("queued-deposit", 3)?;
                queue.deposits.push(DepositRequest { investor: InvestorId::new(l.words[1]), seq: l.int(2)?, amount: Usd(l.dec(3)?) });
            }
            Some("queued-withdraw") => {
                l.expect("queued-withdraw", 3)?;
                queue.withdrawals.push(WithdrawRequest { investor: InvestorId::new(l.words[1]), seq: l.int(2)?, tokens: Tokens(l.dec(3)?) });
            }
            _ => return Err(l.schema("unexpected line")),
        }
    }
    state.check_integrity().map_err(|e| SnapshotError::Integrity(e.to_string()))?;
    let fund = Fund { config, state, queue };
    Ok(Snapshot { engine_version, scenario_hash, events_consumed, fund })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alphafund_core::engine::{MarketInput, RebalanceEventInput};

    fn sample() -> Snapshot {
        let fees = FeeSchedule { perf_fee: "0.2".parse().unwrap(), ..Default::default() };
        let seeds = [(InvestorId::new("a"), Usd::from_int(1000))];
        let state = FundState::seed(Price::from_int(1), &seeds, fees, Treasury::default(), Rounding::Down).unwrap();
        let mut fund = Fund::new(EngineConfig { scheme: Scheme::C, ..Default::default() }, state).unwrap();
        let mut ev = RebalanceEventInput::at(Decimal::ONE, MarketInput::TargetNav(Price("1.1".parse().unwrap())));
        ev.caps = Some(FlowCaps { max_deposit: Usd::from_int(10), max_withdraw: Usd::from_int(10) });
        ev.deposits.push(DepositRequest { investor: InvestorId::new("b"), amount: Usd::from_int(30), seq: 1 });
        fund.step(&ev).unwrap();
        Snapshot { engine_version: crate::ENGINE_VERSION.into(), scenario_hash: "00".into(), events_consumed: 1, fund }
    }

    #[test]
    fn roundtrip_is_exact() {
        let s = sample();
        assert!(!s.fund.queue.deposits.is_empty());
        let text = write(&s);
        assert_eq!(read(&text).unwrap(), s);
        assert_eq!(write(&read(&text).unwrap()), text);
    }

    #[test]
    fn tamper_and_version_are_rejected() {
        let text = write(&sample());
        let tampered = text.replacen("treasury 0 0 0", "treasury 1 0 0", 1);
        assert_ne!(tampered, text);
        assert!(matches!(read(&tampered), Err(SnapshotError::Integrity(_))));

        let old = text.replace(crate::ENGINE_VERSION, "alphafund-0.0.0");
        let body = &old[..old.rfind("checksum ").unwrap()];
        let resealed = format!("{body}checksum {}\n", hex::encode(Sha256::digest(body.as_bytes())));
        assert!(matches!(read(&resealed), Err(SnapshotError::Schema(_))));
        assert!(matches!(read("garbage\n"), Err(SnapshotError::Integrity(_))));
    }
}
