//! Run the engine and the lot oracle side by side and compare cumulative
//! performance fees event by event.

use alloc::vec::Vec;

use crate::decimal::{Decimal, Rounding};
use crate::engine::{oracle_seeds, Fund, RebalanceEventInput, RebalanceReport, StepOutcome};
use crate::error::{integrity, Result};
use crate::oracle::{classify_divergence, within_relative, DivergenceClass, LotOracle, OracleMode};
use crate::quantity::Usd;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffRow {
    pub index: u64,
    /// Scheme performance fee net of plough-back at this event.
    pub scheme_fee: Usd,
    pub oracle_fee: Usd,
    pub scheme_cumulative: Usd,
    pub oracle_cumulative: Usd,
    /// `|scheme − oracle| / max(|scheme|, |oracle|)` on the cumulative
    /// figures, rounded up.
    pub relative_deviation: Decimal,
    pub agrees: bool,
    pub class: Option<DivergenceClass>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffReport {
    pub rows: Vec<DiffRow>,
    pub reports: Vec<RebalanceReport>,
    pub max_relative_deviation: Decimal,
    pub halted_at: Option<u64>,
    pub oracle: LotOracle,
}

impl DiffReport {
    pub fn all_agree(&self) -> bool {
        self.rows.iter().all(|r| r.agrees)
    }

    pub fn first_divergence(&self) -> Option<&DiffRow> {
        self.rows.iter().find(|r| !r.agrees)
    }
}

pub fn relative_deviation(a: Usd, b: Usd) -> Result<Decimal> {
    let scale = a.abs()?.max(b.abs()?);
    if scale.is_zero() {
        return Ok(Decimal::ZERO);
    }
    Ok(a.sub(b)?.abs()?.ratio(scale, Rounding::Up)?)
}

/// Replay `events` on `fund` with an oracle in shadow. Stops at a halt.
/// Lot holdings are checked against the engine's trackers after every event.
pub fn shadow_diff(mut fund: Fund, events: &[RebalanceEventInput], mode: OracleMode, tolerance: Decimal) -> Result<DiffReport> {
    let r = fund.config.rounding;
    let mut oracle = LotOracle::new(mode, fund.state.fees.perf_fee, fund.state.nav, &oracle_seeds(&fund.state), r)?;
    let mut rows = Vec::with_capacity(events.len());
    let mut reports = Vec::with_capacity(events.len());
    let mut scheme_cum = Usd::ZERO;
    let mut plough_back_events = Vec::new();
    let mut max_dev = Decimal::ZERO;
    let mut halted_at = None;
    for ev in events {
        let report = match fund.step(ev)? {
            StepOutcome::Completed(rep) => *rep,
            StepOutcome::Halted(h) => {
                halted_at = Some(h.report.index);
                reports.push(h.report);
                break;
            }
        };
        let scheme_fee = report.fees.perf_fee_net()?;
        scheme_cum = scheme_cum.add(scheme_fee)?;
        if report.nav_wavg_pb.is_some() {
            plough_back_events.push(report.index);
        }
        let o = oracle.step(&report.oracle_event())?;
        let holdings = oracle.holdings();
        for (id, t) in &fund.state.investors {
            if holdings.get(id).copied().unwrap_or_default() != t.total_tokens {
                return Err(integrity(alloc::format!("oracle lots for {id} disagree with tracker")));
            }
        }
        if holdings.len() != fund.state.investors.len() {
            return Err(integrity("oracle holds lots for an investor the engine does not"));
        }
        let dev = relative_deviation(scheme_cum, o.cumulative)?;
        max_dev = max_dev.max(dev);
        let agrees = within_relative(scheme_cum, o.cumulative, tolerance)?;
        let class = if agrees {
            None
        } else {
            Some(classify_divergence(&plough_back_events, &oracle.diagnostics, report.index))
        };
        rows.push(DiffRow {
            index: report.index,
            scheme_fee,
            oracle_fee: o.fee,
            scheme_cumulative: scheme_cum,
            oracle_cumulative: o.cumulative,
            relative_deviation: dev,
            agrees,
            class,
        });
        reports.push(report);
    }
    Ok(DiffReport { rows, reports, max_relative_deviation: max_dev, halted_at, oracle })
}
