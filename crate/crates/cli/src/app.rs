//! Subcommand bodies. Each returns rendered text plus an exit status so the
//! binary stays a thin shell.

use std::fs;
use std::path::{Path, PathBuf};

use alphafund_core::diff::shadow_diff;
use alphafund_core::engine::{replay, Fund, RebalanceEventInput, RebalanceReport};
use alphafund_core::fees::Scheme;
use alphafund_core::{Decimal, EngineError, Rounding, Usd};

use crate::report::{self, Table};
use crate::scenario::{self, Scenario};
use crate::snapshot::{self, Snapshot, SnapshotError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_HALTED: i32 = 2;
pub const EXIT_SCHEMA: i32 = 3;
pub const EXIT_INTEGRITY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Usage(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Snapshot(SnapshotError::Integrity(_)) => EXIT_INTEGRITY,
            AppError::Engine(EngineError::Integrity(_)) => EXIT_INTEGRITY,
            _ => EXIT_SCHEMA,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub scheme: Option<Scheme>,
    pub rounding: Option<Rounding>,
}

#[derive(Clone, Debug, Default)]
pub struct Outputs {
    pub csv_dir: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug)]
pub struct Rendered {
    pub text: String,
    pub code: i32,
}

fn read(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path).map_err(|source| AppError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<(), AppError> {
    fs::write(path, text).map_err(|source| AppError::Io { path: path.into(), source })
}

pub fn load_scenario(path: &Path, ov: &Overrides) -> Result<(Scenario, String), AppError> {
    let text = read(path)?;
    let mut sc = scenario::parse(&text)?;
    if let Some(s) = ov.scheme {
        sc.config.scheme = s;
    }
    if let Some(r) = ov.rounding {
        sc.config.rounding = r;
    }
    Ok((sc, scenario::content_hash(&text)))
}

fn run_tables(events: &[RebalanceEventInput], reports: &[RebalanceReport]) -> Vec<Table> {
    vec![
        report::input_table(events),
        report::system_table(reports),
        report::accept_table(reports),
        report::scheme_table(reports),
    ]
}

fn emit(hash: &str, tables: &[Table], out: &Outputs) -> Result<String, AppError> {
    if let Some(dir) = &out.csv_dir {
        fs::create_dir_all(dir).map_err(|source| AppError::Io { path: dir.clone(), source })?;
        for t in tables {
            write(&dir.join(format!("{}.csv", t.name)), &report::render_csv(hash, t))?;
        }
    }
    Ok(report::render(hash, tables))
}

/// Replay `events[start..]` on `fund`, render, and snapshot the result.
fn drive(
    fund: Fund,
    events: &[RebalanceEventInput],
    start: usize,
    hash: &str,
    out: &Outputs,
) -> Result<Rendered, AppError> {
    let rest = &events[start..];
    let run = replay(fund, rest)?;
    let completed = run.reports.len() - usize::from(run.halted.is_some());
    let snap = Snapshot {
        engine_version: crate::ENGINE_VERSION.into(),
        scenario_hash: hash.into(),
        events_consumed: start + completed,
        fund: run.fund,
    };
    if let Some(p) = &out.snapshot {
        write(p, &snapshot::write(&snap))?;
    }
    let shown = &rest[..run.reports.len()];
    let mut text = emit(hash, &run_tables(shown, &run.reports), out)?;
    let code = match &run.halted {
        Some(h) => {
            let reason = h.reason().map_or_else(String::new, |r| r.to_string());
            text.push_str(&format!("\nhalted at event {}: {reason}\n", h.report.index));
            EXIT_HALTED
        }
        None => EXIT_OK,
    };
    Ok(Rendered { text, code })
}

pub fn run(path: &Path, ov: &Overrides, out: &Outputs) -> Result<Rendered, AppError> {
    let (sc, hash) = load_scenario(path, ov)?;
    let fund = Fund::new(sc.config, sc.initial_state()?)?;
    drive(fund, &sc.events, 0, &hash, out)
}

pub fn validate(path: &Path) -> Result<Rendered, AppError> {
    let (sc, hash) = load_scenario(path, &Overrides::default())?;
    let state = sc.initial_state()?;
    Fund::new(sc.config, state)?;
    let text = format!(
        "{}ok: {} seed holding(s), {} event(s), scheme {}\n",
        report::stamp(&hash),
        sc.seeds.len(),
        sc.events.len(),
        sc.config.scheme
    );
    Ok(Rendered { text, code: EXIT_OK })
}

pub fn diff(path: &Path, tolerance: Decimal, ov: &Overrides, out: &Outputs) -> Result<Rendered, AppError> {
    let (sc, hash) = load_scenario(path, ov)?;
    let fund = Fund::new(sc.config, sc.initial_state()?)?;
    let d = shadow_diff(fund, &sc.events, sc.oracle, tolerance)?;
    let mut text = emit(&hash, &[report::diff_table(&d)], out)?;
    text.push('\n');
    text.push_str(&report::max_deviation_line(&d));
    if let Some(row) = d.first_divergence() {
        let class = row.class.map_or("unclassified", |c| c.name());
        text.push_str(&format!("first divergence at event {} ({class})\n", row.index));
    }
    let code = if d.halted_at.is_some() {
        EXIT_HALTED
    } else if d.all_agree() {
        EXIT_OK
    } else {
        EXIT_DIVERGED
    };
    Ok(Rendered { text, code })
}

#[derive(Clone, Debug, Default)]
pub struct Amendment {
    pub proceeds: Option<Usd>,
    pub tolerance: Option<Decimal>,
}

/// Continue a run from a snapshot. The next scenario event may be amended,
/// which is how an operator clears a halted trade.
pub fn resume(snap_path: &Path, scenario_path: &Path, amend: &Amendment, out: &Outputs) -> Result<Rendered, AppError> {
    let snap = snapshot::read(&read(snap_path)?)?;
    let (sc, hash) = load_scenario(scenario_path, &Overrides::default())?;
    if hash != snap.scenario_hash {
        return Err(SnapshotError::Integrity(format!("snapshot was taken from scenario {}", snap.scenario_hash)).into());
    }
    if snap.events_consumed > sc.events.len() {
        return Err(SnapshotError::Integrity("snapshot is ahead of its scenario".into()).into());
    }
    let mut events = sc.events.clone();
    if let Some(ev) = events.get_mut(snap.events_consumed) {
        if amend.proceeds.is_some() {
            ev.proceeds = amend.proceeds;
        }
        if amend.tolerance.is_some() {
            ev.tolerance = amend.tolerance;
        }
    } else if amend.proceeds.is_some() || amend.tolerance.is_some() {
        return Err(AppError::Usage("no event left to amend".into()));
    }
    drive(snap.fund, &events, snap.events_consumed, &hash, out)
}

pub fn generate(seed: u64) -> Result<Rendered, AppError> {
    let sc = crate::gen::equivalence_scenario(seed)?;
    Ok(Rendered { text: scenario::to_text(&sc), code: EXIT_OK })
}
