//! Verdicts for the acceptance run: one line per criterion.

use std::fmt;
use std::time::Duration;

#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    /// Measured quantities and the thresholds they were held to.
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>3}] {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Accumulates checks inside one criterion; the criterion passes only if
/// every check does.
#[derive(Debug)]
pub struct Checks {
    parts: Vec<String>,
    ok: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            parts: Vec::new(),
            ok: true,
        }
    }
}

impl Checks {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `cond` with a human-readable description of what was compared.
    pub fn check(&mut self, cond: bool, what: impl Into<String>) -> bool {
        let what = what.into();
        self.parts
            .push(if cond { what } else { format!("NOT {what}") });
        self.ok &= cond;
        cond
    }

    /// Context that is not itself a pass condition.
    pub fn note(&mut self, what: impl Into<String>) {
        self.parts.push(what.into());
    }

    pub fn passed(&self) -> bool {
        self.ok
    }

    pub fn detail(&self) -> String {
        self.parts.join("; ")
    }
}
