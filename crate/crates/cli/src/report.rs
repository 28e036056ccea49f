//! Machine-readable reports and their text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Diameter, states found and distinct states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub diameter: u64,
    pub states_found: u64,
    pub distinct_states: u64,
}

impl Stats {
    pub fn l1_distance(&self, other: &Stats) -> u64 {
        self.diameter.abs_diff(other.diameter)
            + self.states_found.abs_diff(other.states_found)
            + self.distinct_states.abs_diff(other.distinct_states)
    }
}

impl std::str::FromStr for Stats {
    type Err = String;

    /// `diameter,found,distinct`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [d, f, n] = parts.as_slice() else {
            return Err(format!("expected 'diameter,found,distinct', got '{s}'"));
        };
        let num = |x: &str| {
            x.parse::<u64>()
                .map_err(|_| format!("'{x}' is not a count"))
        };
        Ok(Stats {
            diameter: num(d)?,
            states_found: num(f)?,
            distinct_states: num(n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub model: String,
    /// Path of the system file, if one was given.
    pub system: Option<String>,
    pub subjects: usize,
    pub actions: usize,
    pub objects: usize,
    pub uses: usize,
    pub policy: String,
    pub checks: Vec<String>,
    pub fairness: String,
    pub workers: usize,
    pub memory_limit: u64,
    pub fingerprint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub diameter: u64,
    pub states_found: u64,
    pub distinct_states: u64,
    pub constrained_states: u64,
    pub elapsed_seconds: f64,
    /// The state budget was exhausted; counts cover the explored part only.
    pub partial: bool,
    /// Fingerprint storage; counts may be low on hash collisions.
    pub approximate: bool,
}

impl Statistics {
    pub fn triple(&self) -> Stats {
        Stats {
            diameter: self.diameter,
            states_found: self.states_found,
            distinct_states: self.distinct_states,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub passed: bool,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockSummary {
    pub expected_terminal: usize,
    pub unexpected: usize,
    /// Rendered terminal states, at most [`DEADLOCK_SAMPLES`].
    pub samples: Vec<DeadlockSample>,
}

pub const DEADLOCK_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlockSample {
    pub class: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    /// `None` for the initial state.
    pub action: Option<String>,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: String,
    pub property: String,
    pub message: Option<String>,
    pub trace: Vec<TraceLine>,
    pub cycle_start: Option<usize>,
    /// Whether the trace replays step by step through the transition relation.
    pub replays: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub message: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub expected: Stats,
    pub actual: Stats,
    pub diameter_matches: bool,
    pub found_matches: bool,
    pub distinct_matches: bool,
}

impl Comparison {
    pub fn new(expected: Stats, actual: Stats) -> Self {
        Comparison {
            expected,
            actual,
            diameter_matches: expected.diameter == actual.diameter,
            found_matches: expected.states_found == actual.states_found,
            distinct_matches: expected.distinct_states == actual.distinct_states,
        }
    }

    pub fn all_match(&self) -> bool {
        self.diameter_matches && self.found_matches && self.distinct_matches
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub statistics: Statistics,
    pub verdicts: Vec<Verdict>,
    pub deadlocks: DeadlockSummary,
    pub violations: Vec<ViolationReport>,
    pub diagnostics: Vec<DiagnosticReport>,
    pub comparison: Option<Comparison>,
    pub exit_code: i32,
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "MISMATCH"
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> serde_json::Result<RunReport> {
        serde_json::from_str(text)
    }

    pub fn render_text(&self) -> String {
        let c = &self.config;
        let s = &self.statistics;
        let mut out = String::new();
        let source = c.system.as_deref().map_or_else(
            || format!("{}x{}x{}", c.subjects, c.actions, c.objects),
            |p| p.to_string(),
        );
        let _ = writeln!(
            out,
            "model {}  uses {} ({source})  policy {}  workers {}",
            c.model, c.uses, c.policy, c.workers
        );
        let _ = writeln!(out, "diameter         {}", s.diameter);
        let _ = writeln!(out, "states found     {}", s.states_found);
        let _ = writeln!(out, "distinct states  {}", s.distinct_states);
        if s.constrained_states > 0 {
            let _ = writeln!(out, "tick-bounded     {}", s.constrained_states);
        }
        let _ = writeln!(out, "elapsed          {:.3}s", s.elapsed_seconds);
        if s.partial {
            let _ = writeln!(
                out,
                "state budget of {} exceeded: statistics are partial",
                c.memory_limit
            );
        }
        if s.approximate {
            let _ = writeln!(out, "fingerprint storage: counts are lower bounds");
        }
        let d = &self.deadlocks;
        let _ = writeln!(
            out,
            "deadlocks        {} expected-terminal, {} unexpected",
            d.expected_terminal, d.unexpected
        );
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "check {:<16} {}",
                v.check,
                if v.passed { "PASS" } else { "FAIL" }
            );
        }
        for dg in &self.diagnostics {
            let _ = writeln!(out, "diagnostic ({}x) {}", dg.count, dg.message);
        }
        for v in &self.violations {
            let _ = writeln!(out, "violation {} {}", v.kind, v.property);
            if let Some(m) = &v.message {
                let _ = writeln!(out, "  {m}");
            }
            for (i, t) in v.trace.iter().enumerate() {
                let marker = if v.cycle_start == Some(i) {
                    "  <- cycle"
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "  {i:>3}. {:<32} {}{marker}",
                    t.action.as_deref().unwrap_or("Init"),
                    t.state
                );
            }
            if !v.replays {
                let _ = writeln!(out, "  warning: trace does not replay");
            }
        }
        if let Some(cmp) = &self.comparison {
            let _ = writeln!(
                out,
                "expected         {} / {} / {}  ({} {} {})",
                cmp.expected.diameter,
                cmp.expected.states_found,
                cmp.expected.distinct_states,
                mark(cmp.diameter_matches),
                mark(cmp.found_matches),
                mark(cmp.distinct_matches)
            );
        }
        out
    }
}

/// One model and use count of the published performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub model: String,
    pub uses: usize,
    pub published: Stats,
    pub published_deadlock_seconds: u64,
    pub published_properties_seconds: u64,
    /// Missing if exploration failed before producing statistics.
    pub actual: Option<Stats>,
    pub seconds: f64,
    pub partial: bool,
    pub error: Option<String>,
    pub diameter_matches: bool,
    pub found_matches: bool,
    pub distinct_matches: bool,
    /// Cells that must match for the run to be acceptable.
    pub hard_cells: Vec<String>,
}

impl Table2Row {
    pub fn hard_failure(&self) -> bool {
        self.hard_cells.iter().any(|c| match c.as_str() {
            "diameter" => !self.diameter_matches,
            "found" => !self.found_matches,
            "distinct" => !self.distinct_matches,
            _ => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub policy: String,
    pub rows: Vec<Table2Row>,
}

impl Table2Report {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "policy {}", self.policy);
        let _ = writeln!(
            out,
            "{:<8} {:>4}  {:<22} {:<34} {:<28} {:>9}",
            "model",
            "uses",
            "diameter (got/pub)",
            "states found (got/pub)",
            "distinct (got/pub)",
            "seconds"
        );
        for r in &self.rows {
            let cell = |got: Option<u64>, publ: u64, ok: bool| {
                let got = got.map_or("-".to_string(), |g| g.to_string());
                format!("{got}/{publ} {}", mark(ok))
            };
            let a = r.actual;
            let _ = writeln!(
                out,
                "{:<8} {:>4}  {:<22} {:<34} {:<28} {:>9.2}{}",
                r.model,
                r.uses,
                cell(
                    a.map(|s| s.diameter),
                    r.published.diameter,
                    r.diameter_matches
                ),
                cell(
                    a.map(|s| s.states_found),
                    r.published.states_found,
                    r.found_matches
                ),
                cell(
                    a.map(|s| s.distinct_states),
                    r.published.distinct_states,
                    r.distinct_matches
                ),
                r.seconds,
                match (&r.error, r.partial) {
                    (Some(e), _) => format!("  error: {e}"),
                    (None, true) => "  (partial)".to_string(),
                    _ => String::new(),
                }
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub policy: String,
    pub stats: Option<Stats>,
    pub distance: Option<u64>,
    pub exact: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub model: String,
    pub uses: usize,
    pub target: Stats,
    /// Ascending distance; failed candidates last.
    pub ranking: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let t = &self.target;
        let _ = writeln!(
            out,
            "model {}  uses {}  target {}/{}/{}",
            self.model, self.uses, t.diameter, t.states_found, t.distinct_states
        );
        for (i, e) in self.ranking.iter().enumerate() {
            match (&e.stats, e.distance) {
                (Some(s), Some(d)) => {
                    let _ = writeln!(
                        out,
                        "{:>3}. {:<20} {}/{}/{}  distance {d}{}",
                        i + 1,
                        e.policy,
                        s.diameter,
                        s.states_found,
                        s.distinct_states,
                        if e.exact { "  EXACT" } else { "" }
                    );
                }
                _ => {
                    let _ = writeln!(
                        out,
                        "{:>3}. {:<20} error: {}",
                        i + 1,
                        e.policy,
                        e.error.as_deref().unwrap_or("unknown")
                    );
                }
            }
        }
        if self.ranking.is_empty() {
            let _ = writeln!(out, "no candidates");
        }
        out
    }
}
