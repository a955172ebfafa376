//! Reporting for the acceptance suite: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

/// Relative deviation |value − target| / |target|.
pub fn relative_error(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

/// True when `value` lies within `fraction` of `target`.
pub fn within(value: f64, target: f64, fraction: f64) -> bool {
    relative_error(value, target) <= fraction
}

#[derive(Debug, Default)]
pub struct Report {
    criteria: Vec<(String, bool)>,
    examples: Vec<(String, bool)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records and prints a numbered acceptance criterion.
    pub fn criterion(&mut self, id: &str, passed: bool, detail: impl AsRef<str>) {
        println!("{} criterion {id}: {}", verdict(passed), detail.as_ref());
        self.criteria.push((id.to_string(), passed));
    }

    /// Records and prints a per-operation reference example. These are
    /// reported alongside the criteria but do not decide the exit status.
    pub fn example(&mut self, name: &str, passed: bool, detail: impl AsRef<str>) {
        println!("{} example {name}: {}", verdict(passed), detail.as_ref());
        self.examples.push((name.to_string(), passed));
    }

    pub fn failed_criteria(&self) -> Vec<&str> {
        self.criteria.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect()
    }

    /// Prints the summary and returns the process exit code: 0 only when
    /// every criterion passed.
    pub fn finish(&self) -> i32 {
        let failed = self.failed_criteria();
        let failed_examples = self.examples.iter().filter(|e| !e.1).count();
        println!(
            "summary: {}/{} criteria passed, {}/{} examples passed",
            self.criteria.len() - failed.len(),
            self.criteria.len(),
            self.examples.len() - failed_examples,
            self.examples.len()
        );
        if failed.is_empty() {
            0
        } else {
            println!("failed criteria: {}", failed.join(", "));
            1
        }
    }
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs `f` and returns its value with the wall time taken.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}
