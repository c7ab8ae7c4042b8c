//! Acceptance suite: every check is a [`Check`] in a name-keyed registry,
//! run by [`verify_all`] at a budget tier.

mod checks;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::registry::Registry;

pub use checks::toy_control_problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    #[default]
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The check could not produce a verdict (a solver error).
    Indeterminate,
    /// Full-tier check skipped in the quick tier.
    Skipped,
}

/// What a check measured.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: serde_json::Value,
}

pub trait Check: Send + Sync {
    /// Stable identifier.
    fn id(&self) -> &'static str;
    /// Position in the acceptance list.
    fn criterion(&self) -> u32;
    /// The mathematical statement being checked.
    fn anchor(&self) -> &'static str;
    fn full_only(&self) -> bool {
        false
    }
    fn budget_seconds(&self) -> f64;
    fn run(&self, seed: u64) -> Result<Outcome>;
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub id: String,
    pub criterion: u32,
    pub anchor: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub tolerance: Option<f64>,
    pub budget_seconds: f64,
    pub detail: serde_json::Value,
}

/// Wall-clock times are kept out of the report so that it is
/// byte-reproducible; see [`TimedReport`].
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub tier: Tier,
    pub checks: Vec<CheckEntry>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct TimedReport {
    pub report: VerificationReport,
    pub seconds: Vec<f64>,
}

impl TimedReport {
    /// One line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (c, s) in self.report.checks.iter().zip(&self.seconds) {
            let status = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Indeterminate => "INDETERMINATE",
                Status::Skipped => "SKIP",
            };
            let measured = c.measured.map_or("-".to_string(), |m| format!("{m:.3e}"));
            let tol = c.tolerance.map_or("-".to_string(), |m| format!("{m:.3e}"));
            out.push_str(&format!(
                "{:>2} {:<28} {:<13} measured {:>10} tol {:>10} {:>8.2}s\n",
                c.criterion, c.id, status, measured, tol, s
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tier: Tier,
    /// Restrict to these check ids.
    pub only: Option<Vec<String>>,
}

pub fn registry() -> Registry<dyn Check> {
    let mut r: Registry<dyn Check> = Registry::new("check");
    for c in checks::all() {
        r.register(c.id(), c);
    }
    r
}

/// Runs one check by id.
pub fn run_check(id: &str, seed: u64, tier: Tier) -> Result<(CheckEntry, f64)> {
    let reg = registry();
    let check = reg.get(id)?;
    Ok(run_one(check, seed, tier))
}

fn run_one(check: &dyn Check, seed: u64, tier: Tier) -> (CheckEntry, f64) {
    let mut entry = CheckEntry {
        id: check.id().to_string(),
        criterion: check.criterion(),
        anchor: check.anchor().to_string(),
        status: Status::Skipped,
        measured: None,
        tolerance: None,
        budget_seconds: check.budget_seconds(),
        detail: serde_json::Value::Null,
    };
    if check.full_only() && tier == Tier::Quick {
        return (entry, 0.0);
    }
    let start = std::time::Instant::now();
    match check.run(seed) {
        Ok(o) => {
            entry.status = if o.passed { Status::Pass } else { Status::Fail };
            entry.measured = Some(o.measured);
            entry.tolerance = Some(o.tolerance);
            entry.detail = o.detail;
        }
        Err(e) => {
            entry.status = Status::Indeterminate;
            entry.detail = serde_json::Value::String(e.to_string());
        }
    }
    (entry, start.elapsed().as_secs_f64())
}

/// Runs every selected check in criterion order.
pub fn verify_all(cfg: &VerifyConfig) -> Result<TimedReport> {
    let reg = registry();
    let mut ids: Vec<&'static str> = match &cfg.only {
        Some(only) => {
            let mut v = Vec::new();
            for name in only {
                v.push(reg.get(name)?.id());
            }
            v
        }
        None => reg.names(),
    };
    ids.sort_by_key(|id| reg.get(id).map(|c| c.criterion()).unwrap_or(u32::MAX));
    ids.dedup();
    let mut checks = Vec::new();
    let mut seconds = Vec::new();
    for id in ids {
        let (entry, s) = run_one(reg.get(id)?, cfg.seed, cfg.tier);
        checks.push(entry);
        seconds.push(s);
    }
    let passed = checks
        .iter()
        .all(|c| matches!(c.status, Status::Pass | Status::Skipped));
    Ok(TimedReport {
        report: VerificationReport {
            seed: cfg.seed,
            tier: cfg.tier,
            checks,
            passed,
        },
        seconds,
    })
}

/// Deterministic JSON rendering of a report.
pub fn report_json(report: &VerificationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}
