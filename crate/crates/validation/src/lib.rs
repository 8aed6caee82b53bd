//! Reporting for the acceptance suite: each criterion prints exactly one
//! `PASS`/`FAIL` line with its measured values, then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

/// One acceptance criterion in progress.
pub struct Criterion {
    id: u32,
    title: &'static str,
    started: Instant,
    budget: Option<Duration>,
}

impl Criterion {
    pub fn start(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            started: Instant::now(),
            budget: None,
        }
    }

    /// Wall-clock limit; exceeding it fails the criterion.
    pub fn within_seconds(mut self, secs: f64) -> Self {
        self.budget = Some(Duration::from_secs_f64(secs));
        self
    }

    /// Prints the verdict line (bypassing test output capture) and panics on failure.
    pub fn finish(self, pass: bool, measured: impl AsRef<str>) {
        let elapsed = self.started.elapsed();
        let mut detail = measured.as_ref().to_string();
        let mut pass = pass;
        if let Some(b) = self.budget {
            if elapsed > b {
                pass = false;
                detail.push_str(&format!("; over the {:.0} s budget", b.as_secs_f64()));
            }
        }
        let line = format!(
            "{} criterion {:>2} {}: {} [{:.2} s]\n",
            if pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            detail,
            elapsed.as_secs_f64()
        );
        let mut out = std::io::stdout().lock();
        let _ = out.write_all(line.as_bytes());
        let _ = out.flush();
        assert!(pass, "{}", line.trim_end());
    }
}

/// Largest value of an iterator, `-inf` when empty.
pub fn max_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest value of an iterator, `+inf` when empty.
pub fn min_of(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(f64::INFINITY, f64::min)
}
