//! Line-oriented scenario files.
//!
//! ```text
//! scenario v1
//! scheme C
//! fee perf 0.2
//! seed alice 10000
//! event 1 nav 1.40
//! event 2 value 12000
//! deposit bob 500
//! withdraw alice 300
//! ```
//!
//! Config directives come before the first `event`; `deposit` and
//! `withdraw` attach to the most recent event. `#` starts a comment.

use std::fmt::Write as _;

use alphafund_core::engine::{CarryOver, EngineConfig, MarketInput, Pricing, RebalanceEventInput};
use alphafund_core::fees::{MintMode, Scheme};
use alphafund_core::netting::{DepositRequest, FlowCaps, WithdrawRequest};
use alphafund_core::oracle::OracleMode;
use alphafund_core::state::{FeeSchedule, FundState, InvestorId, Treasury, TREASURY_ID};
use alphafund_core::{Decimal, EngineError, Price, Rounding, Tokens, Usd};
use sha2::{Digest, Sha256};

pub const HEADER: &str = "scenario v1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError { line, message: message.into() })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub config: EngineConfig,
    pub fees: FeeSchedule,
    pub oracle: OracleMode,
    pub initial_nav: Price,
    pub seeds: Vec<(InvestorId, Usd)>,
    pub treasury: Treasury,
    pub events: Vec<RebalanceEventInput>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            config: EngineConfig::default(),
            fees: FeeSchedule::default(),
            oracle: OracleMode::LiabilityUpfront { ratio: Decimal::ONE },
            initial_nav: Price::from_int(1),
            seeds: Vec::new(),
            treasury: Treasury::default(),
            events: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn initial_state(&self) -> Result<FundState, EngineError> {
        let fees = FeeSchedule { hwm_liability_ratio: self.oracle.ratio(), ..self.fees };
        FundState::seed(self.initial_nav, &self.seeds, fees, self.treasury, self.config.rounding)
    }
}

/// Hex sha256 of the scenario bytes, stamped into every output.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn decimal(line: usize, s: &str) -> Result<Decimal, ScenarioError> {
    s.parse().or_else(|e| err(line, format!("malformed decimal '{s}': {e}")))
}

fn non_negative(line: usize, what: &str, s: &str) -> Result<Decimal, ScenarioError> {
    let d = decimal(line, s)?;
    if d.is_negative() {
        return err(line, format!("{what} must be non-negative"));
    }
    Ok(d)
}

fn positive(line: usize, what: &str, s: &str) -> Result<Decimal, ScenarioError> {
    let d = decimal(line, s)?;
    if !d.is_positive() {
        return err(line, format!("{what} must be positive"));
    }
    Ok(d)
}

fn investor(line: usize, s: &str) -> Result<InvestorId, ScenarioError> {
    if s == TREASURY_ID || s.starts_with('@') {
        return err(line, format!("investor id '{s}' is reserved"));
    }
    Ok(InvestorId::new(s))
}

fn cap(line: usize, s: &str) -> Result<Usd, ScenarioError> {
    if s == "unlimited" {
        return Ok(Usd(Decimal::MAX));
    }
    Ok(Usd(non_negative(line, "cap", s)?))
}

fn arity(line: usize, words: &[&str], n: usize) -> Result<(), ScenarioError> {
    if words.len() != n {
        return err(line, format!("'{}' takes {} argument(s), got {}", words[0], n - 1, words.len() - 1));
    }
    Ok(())
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut seen_header = false;
    let mut seq = 0u64;
    let mut last_time: Option<Decimal> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let w: Vec<&str> = content.split_whitespace().collect();
        if !seen_header {
            if content != HEADER {
                return err(line, format!("expected '{HEADER}' header"));
            }
            seen_header = true;
            continue;
        }
        let in_events = !sc.events.is_empty();
        match w[0] {
            "event" => {
                if w.len() < 4 {
                    return err(line, "event needs: event <time> value|nav <amount> [options]");
                }
                let time = non_negative(line, "event time", w[1])?;
                if let Some(prev) = last_time {
                    if time <= prev {
                        return err(line, format!("event time {time} does not follow {prev}"));
                    }
                }
                last_time = Some(time);
                let market = match w[2] {
                    "value" => MarketInput::FundValue(Usd(non_negative(line, "fund value", w[3])?)),
                    "nav" => MarketInput::TargetNav(Price(positive(line, "nav", w[3])?)),
                    other => return err(line, format!("unknown market input '{other}'")),
                };
                let mut ev = RebalanceEventInput::at(time, market);
                let mut k = 4;
                while k < w.len() {
                    match w[k] {
                        "proceeds" if k + 1 < w.len() => {
                            ev.proceeds = Some(Usd(non_negative(line, "proceeds", w[k + 1])?));
                            k += 2;
                        }
                        "tolerance" if k + 1 < w.len() => {
                            ev.tolerance = Some(non_negative(line, "tolerance", w[k + 1])?);
                            k += 2;
                        }
                        "caps" if k + 2 < w.len() => {
                            ev.caps = Some(FlowCaps { max_deposit: cap(line, w[k + 1])?, max_withdraw: cap(line, w[k + 2])? });
                            k += 3;
                        }
                        other => return err(line, format!("unknown or incomplete event option '{other}'")),
                    }
                }
                sc.events.push(ev);
            }
            "deposit" | "withdraw" => {
                arity(line, &w, 3)?;
                let Some(ev) = sc.events.last_mut() else {
                    return err(line, format!("'{}' before any event", w[0]));
                };
                let id = investor(line, w[1])?;
                seq += 1;
                if w[0] == "deposit" {
                    ev.deposits.push(DepositRequest { investor: id, amount: Usd(positive(line, "deposit", w[2])?), seq });
                } else {
                    ev.withdrawals.push(WithdrawRequest { investor: id, tokens: Tokens(positive(line, "withdrawal", w[2])?), seq });
                }
            }
            _ if in_events => return err(line, format!("'{}' must come before the first event", w[0])),
            "scheme" => {
                arity(line, &w, 2)?;
                sc.config.scheme = Scheme::from_name(w[1]).map_or_else(|| err(line, format!("unknown scheme '{}'", w[1])), Ok)?;
            }
            "rounding" => {
                arity(line, &w, 2)?;
                sc.config.rounding = Rounding::from_name(w[1]).map_or_else(|| err(line, format!("unknown rounding '{}'", w[1])), Ok)?;
            }
            "mint-mode" => {
                arity(line, &w, 2)?;
                sc.config.mint_mode = MintMode::from_name(w[1]).map_or_else(|| err(line, format!("unknown mint mode '{}'", w[1])), Ok)?;
            }
            "pricing" => {
                arity(line, &w, 2)?;
                sc.config.pricing = Pricing::from_name(w[1]).map_or_else(|| err(line, format!("unknown pricing '{}'", w[1])), Ok)?;
            }
            "carry-over" => {
                arity(line, &w, 2)?;
                sc.config.carry_over = CarryOver::from_name(w[1]).map_or_else(|| err(line, format!("unknown carry-over '{}'", w[1])), Ok)?;
            }
            "oracle" => match w.get(1).copied() {
                Some("free-ride") => {
                    arity(line, &w, 2)?;
                    sc.oracle = OracleMode::FreeRide;
                }
                Some("upfront") => {
                    arity(line, &w, 3)?;
                    let ratio = positive(line, "liability ratio", w[2])?;
                    if ratio > Decimal::ONE {
                        return err(line, "liability ratio must be at most 1");
                    }
                    sc.oracle = OracleMode::LiabilityUpfront { ratio };
                }
                _ => return err(line, "oracle takes 'free-ride' or 'upfront <ratio>'"),
            },
            "fee" => {
                arity(line, &w, 3)?;
                let v = non_negative(line, "fee", w[2])?;
                if v > Decimal::ONE {
                    return err(line, "fee must be at most 1");
                }
                match w[1] {
                    "mgmt" => sc.fees.mgmt_fee_annual = v,
                    "perf" => sc.fees.perf_fee = v,
                    "deposit" => sc.fees.deposit_fee = v,
                    "redemption" => sc.fees.redemption_fee = v,
                    other => return err(line, format!("unknown fee '{other}'")),
                }
            }
            "caps" => {
                arity(line, &w, 3)?;
                sc.config.caps = FlowCaps { max_deposit: cap(line, w[1])?, max_withdraw: cap(line, w[2])? };
            }
            "tolerance" => {
                arity(line, &w, 2)?;
                sc.config.tolerance = non_negative(line, "tolerance", w[1])?;
            }
            "initial-nav" => {
                arity(line, &w, 2)?;
                sc.initial_nav = Price(positive(line, "initial nav", w[1])?);
            }
            "seed" => {
                arity(line, &w, 3)?;
                sc.seeds.push((investor(line, w[1])?, Usd(positive(line, "seed", w[2])?)));
            }
            "treasury" => {
                arity(line, &w, 3)?;
                sc.treasury = Treasury {
                    stable_balance: Usd(non_negative(line, "treasury stable", w[1])?),
                    alpha_tokens: Tokens(non_negative(line, "treasury tokens", w[2])?),
                    pending_reinvest: Usd::ZERO,
                };
            }
            other => return err(line, format!("unknown directive '{other}'")),
        }
    }
    if !seen_header {
        return err(1, format!("missing '{HEADER}' header"));
    }
    if sc.seeds.is_empty() {
        return err(0, "scenario has no seed holdings");
    }
    Ok(sc)
}

fn cap_text(c: Usd) -> String {
    if c.0 == Decimal::MAX {
        "unlimited".into()
    } else {
        c.to_string()
    }
}

/// Canonical text for a scenario; `parse(&to_text(s)) == s`.
pub fn to_text(sc: &Scenario) -> String {
    let mut out = String::new();
    let c = &sc.config;
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "scheme {}", c.scheme);
    let _ = writeln!(out, "rounding {}", c.rounding.name());
    let _ = writeln!(out, "mint-mode {}", c.mint_mode.name());
    let _ = writeln!(out, "pricing {}", c.pricing.name());
    let _ = writeln!(out, "carry-over {}", c.carry_over.name());
    match sc.oracle {
        OracleMode::FreeRide => {
            let _ = writeln!(out, "oracle free-ride");
        }
        OracleMode::LiabilityUpfront { ratio } => {
            let _ = writeln!(out, "oracle upfront {ratio}");
        }
    }
    let f = &sc.fees;
    let _ = writeln!(out, "fee mgmt {}", f.mgmt_fee_annual);
    let _ = writeln!(out, "fee perf {}", f.perf_fee);
    let _ = writeln!(out, "fee deposit {}", f.deposit_fee);
    let _ = writeln!(out, "fee redemption {}", f.redemption_fee);
    let _ = writeln!(out, "caps {} {}", cap_text(c.caps.max_deposit), cap_text(c.caps.max_withdraw));
    let _ = writeln!(out, "tolerance {}", c.tolerance);
    let _ = writeln!(out, "initial-nav {}", sc.initial_nav);
    for (id, usd) in &sc.seeds {
        let _ = writeln!(out, "seed {id} {usd}");
    }
    let _ = writeln!(out, "treasury {} {}", sc.treasury.stable_balance, sc.treasury.alpha_tokens);
    for ev in &sc.events {
        let _ = write!(out, "event {} ", ev.time);
        match ev.market {
            MarketInput::FundValue(v) => {
                let _ = write!(out, "value {v}");
            }
            MarketInput::TargetNav(p) => {
                let _ = write!(out, "nav {p}");
            }
        }
        if let Some(p) = ev.proceeds {
            let _ = write!(out, " proceeds {p}");
        }
        if let Some(caps) = ev.caps {
            let _ = write!(out, " caps {} {}", cap_text(caps.max_deposit), cap_text(caps.max_withdraw));
        }
        if let Some(t) = ev.tolerance {
            let _ = write!(out, " tolerance {t}");
        }
        out.push('\n');
        // Requests are written in sequence order so reparsing restores it.
        let mut reqs: Vec<(u64, String)> = ev
            .deposits
            .iter()
            .map(|d| (d.seq, format!("deposit {} {}", d.investor, d.amount)))
            .chain(ev.withdrawals.iter().map(|w| (w.seq, format!("withdraw {} {}", w.investor, w.tokens))))
            .collect();
        reqs.sort_by_key(|r| r.0);
        for (_, line) in reqs {
            let _ = writeln!(out, "{line}");
        }
    }
    out
}
