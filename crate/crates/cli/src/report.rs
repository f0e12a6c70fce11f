//! Text and csv renderings of run results.

use std::fmt::Write as _;

use alphafund_core::diff::DiffReport;
use alphafund_core::engine::{MarketInput, Outcome, RebalanceEventInput, RebalanceReport, Rejection};
use alphafund_core::slippage::Settlement;
use alphafund_core::{Decimal, Tokens};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&str]) -> Table {
        Table { name, header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Left-aligned first column, right-aligned numbers.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "[{}]", self.name);
        let line = |out: &mut String, cells: &[String]| {
            let mut s = String::new();
            for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(s, "{c:<w$}");
                } else {
                    let _ = write!(s, "  {c:>w$}");
                }
            }
            let _ = writeln!(out, "{}", s.trim_end());
        };
        line(&mut out, &self.header);
        for row in &self.rows {
            line(&mut out, row);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writing into a Vec cannot fail.
        w.write_record(&self.header).expect("csv header");
        for row in &self.rows {
            w.write_record(row).expect("csv row");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("csv is utf-8")
    }
}

/// Provenance lines stamped on every rendered output.
pub fn stamp(scenario_hash: &str) -> String {
    format!("# engine {}\n# scenario {scenario_hash}\n", crate::ENGINE_VERSION)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".into(), |v| v.to_string())
}

fn status(o: &Outcome) -> String {
    match o {
        Outcome::Completed => "completed".into(),
        Outcome::Halted(r) => format!("halted:{}", r.code()),
    }
}

pub fn input_table(events: &[RebalanceEventInput]) -> Table {
    let mut t = Table::new("input", &["event", "time", "market", "request", "investor", "seq", "amount"]);
    for (i, ev) in events.iter().enumerate() {
        let market = match ev.market {
            MarketInput::FundValue(v) => format!("value {v}"),
            MarketInput::TargetNav(p) => format!("nav {p}"),
        };
        let idx = (i + 1).to_string();
        if ev.deposits.is_empty() && ev.withdrawals.is_empty() {
            t.push(vec![idx.clone(), ev.time.to_string(), market.clone(), "-".into(), "-".into(), "-".into(), "-".into()]);
        }
        let mut reqs: Vec<(u64, Vec<String>)> = Vec::new();
        for d in &ev.deposits {
            reqs.push((d.seq, vec!["deposit".into(), d.investor.to_string(), d.seq.to_string(), d.amount.to_string()]));
        }
        for w in &ev.withdrawals {
            reqs.push((w.seq, vec!["withdraw".into(), w.investor.to_string(), w.seq.to_string(), w.tokens.to_string()]));
        }
        reqs.sort_by_key(|r| r.0);
        for (_, rest) in reqs {
            let mut row = vec![idx.clone(), ev.time.to_string(), market.clone()];
            row.extend(rest);
            t.push(row);
        }
    }
    t
}

pub fn system_table(reports: &[RebalanceReport]) -> Table {
    let mut t = Table::new(
        "system",
        &[
            "event", "time", "nav-pre-fee", "nav-post-fee", "nav-ref", "nav-final", "hwm", "mgmt-fee", "perf-fee",
            "plough-back", "fee-tokens", "deposits", "withdrawals", "net-amount", "slippage", "settlement", "status",
        ],
    );
    for r in reports {
        let n = r.netting.as_ref();
        let settlement = match r.slippage.as_ref().map(|s| &s.settlement) {
            None | Some(Settlement::None) => "-".to_string(),
            Some(Settlement::BurnedFromTreasury { tokens }) => format!("burn {tokens}"),
            Some(Settlement::MintedToTreasury { tokens }) => format!("mint {tokens}"),
            Some(Settlement::PartialBurnWithCarry { tokens, carry }) => format!("burn {tokens} carry {carry}"),
            Some(Settlement::Halted(h)) => h.code().to_string(),
        };
        t.push(vec![
            r.index.to_string(),
            r.time.to_string(),
            r.nav.pre_fee.to_string(),
            r.nav.post_fee.to_string(),
            opt(r.nav.reference),
            r.nav.final_nav.to_string(),
            r.hwm_after.to_string(),
            r.fees.mgmt_fee.to_string(),
            opt(r.fees.perf_fee_total().ok()),
            r.fees.plough_back.to_string(),
            r.fees.fee_tokens_minted.to_string(),
            opt(n.map(|n| n.total_dpst_usd)),
            opt(n.map(|n| n.total_wdrw_usd)),
            opt(n.map(|n| n.net_amount_event)),
            opt(r.slippage.as_ref().map(|s| s.slippage)),
            settlement,
            status(&r.outcome),
        ]);
    }
    t
}

pub fn accept_table(reports: &[RebalanceReport]) -> Table {
    let mut t = Table::new("accept", &["event", "request", "investor", "seq", "requested", "accepted", "fee", "filled", "status"]);
    for r in reports {
        let mut rows: Vec<(u64, Vec<String>)> = Vec::new();
        for f in &r.deposit_fills {
            rows.push((f.seq, vec![
                r.index.to_string(), "deposit".into(), f.investor.to_string(), f.seq.to_string(),
                f.requested.to_string(), f.accepted.to_string(), f.fee.to_string(), format!("{} tok", f.tokens), "filled".into(),
            ]));
        }
        for f in &r.withdraw_fills {
            rows.push((f.seq, vec![
                r.index.to_string(), "withdraw".into(), f.investor.to_string(), f.seq.to_string(),
                f.requested.to_string(), f.accepted.to_string(), f.fee.to_string(), format!("{} usd", f.gross), "filled".into(),
            ]));
        }
        for rej in &r.rejected {
            let (kind, id, seq, amt, why) = match rej {
                Rejection::Deposit(d, why) => ("deposit", &d.investor, d.seq, d.amount.to_string(), why),
                Rejection::Withdraw(w, why) => ("withdraw", &w.investor, w.seq, w.tokens.to_string(), why),
            };
            rows.push((seq, vec![
                r.index.to_string(), kind.into(), id.to_string(), seq.to_string(), amt, "0".into(), "0".into(), "-".into(),
                format!("rejected:{}", why.name()),
            ]));
        }
        for d in &r.carried.deposits {
            rows.push((d.seq, carried(r.index, "deposit", &d.investor.to_string(), d.seq, d.amount.to_string())));
        }
        for w in &r.carried.withdrawals {
            rows.push((w.seq, carried(r.index, "withdraw", &w.investor.to_string(), w.seq, w.tokens.to_string())));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1[8].cmp(&b.1[8])));
        for (_, row) in rows {
            t.push(row);
        }
    }
    t
}

fn carried(index: u64, kind: &str, id: &str, seq: u64, amount: String) -> Vec<String> {
    vec![index.to_string(), kind.into(), id.into(), seq.to_string(), amount, "-".into(), "-".into(), "-".into(), "carried".into()]
}

/// One column per event, one row per quantity.
pub fn scheme_table(reports: &[RebalanceReport]) -> Table {
    let mut header = vec!["quantity".to_string()];
    header.extend(reports.iter().map(|r| format!("event {}", r.index)));
    let mut t = Table { name: "fee-scheme", header, rows: Vec::new() };
    let scheme = reports.first().map(|r| r.scheme);
    let mut row = |label: &str, f: &dyn Fn(&RebalanceReport) -> String| {
        let mut cells = vec![label.to_string()];
        cells.extend(reports.iter().map(f));
        t.rows.push(cells);
    };
    row("Total-Tokens", &|r| r.investor_tokens_after.to_string());
    row("Buy/Sell", &|r| {
        let buys = r.investor_entries().iter().try_fold(Tokens::ZERO, |a, e| a.add(e.1));
        let sells = r.investor_exits().iter().try_fold(Tokens::ZERO, |a, e| a.add(e.1));
        match (buys, sells) {
            (Ok(b), Ok(s)) => opt(b.sub(s).ok()),
            _ => "-".into(),
        }
    });
    row("NAV", &|r| r.nav.pre_fee.to_string());
    row("WNAV", &|r| opt(r.nav_wavg_after));
    row("HWM", &|r| r.hwm_after.to_string());
    match scheme {
        Some(alphafund_core::fees::Scheme::A) => {
            row("Amount-BHWM", &|r| r.below_hwm_tokens_after.to_string());
            row("Fee Fund", &|r| r.fees.perf_fee_fund.to_string());
            row("Fee Investor", &|r| r.fees.perf_fee_investor.to_string());
        }
        Some(alphafund_core::fees::Scheme::C) => {
            row("Fee Fund", &|r| r.fees.perf_fee_fund.to_string());
            row("Fee Redemption", &|r| r.fees.perf_fee_redemption.to_string());
        }
        _ => row("Fee", &|r| r.fees.perf_fee_fund.to_string()),
    }
    row("Fee Tokens Issued", &|r| r.fees.fee_tokens_minted.to_string());
    if scheme == Some(alphafund_core::fees::Scheme::C) {
        row("WNAV-PB", &|r| opt(r.nav_wavg_pb));
        row("Fees Plough Back", &|r| r.fees.plough_back.to_string());
    }
    t
}

pub fn diff_table(diff: &DiffReport) -> Table {
    let mut t = Table::new(
        "diff",
        &["event", "scheme-fee", "oracle-fee", "scheme-cumulative", "oracle-cumulative", "relative-deviation", "agrees", "class"],
    );
    for d in &diff.rows {
        t.push(vec![
            d.index.to_string(),
            d.scheme_fee.to_string(),
            d.oracle_fee.to_string(),
            d.scheme_cumulative.to_string(),
            d.oracle_cumulative.to_string(),
            d.relative_deviation.to_string(),
            if d.agrees { "yes" } else { "no" }.into(),
            opt(d.class.map(|c| c.name())),
        ]);
    }
    t
}

pub fn render(scenario_hash: &str, tables: &[Table]) -> String {
    let mut out = stamp(scenario_hash);
    for t in tables {
        out.push('\n');
        out.push_str(&t.to_text());
    }
    out
}

pub fn render_csv(scenario_hash: &str, table: &Table) -> String {
    format!("{}{}", stamp(scenario_hash), table.to_csv())
}

pub fn max_deviation_line(diff: &DiffReport) -> String {
    let verdict = if diff.all_agree() { "agree" } else { "diverge" };
    let max: Decimal = diff.max_relative_deviation;
    format!("max relative deviation {max} ({verdict})\n")
}
