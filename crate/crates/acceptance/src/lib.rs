//! Scorecard used by the acceptance run: each check prints one
//! `PASS`/`FAIL` line and the run fails if any check failed.

use std::fmt::Display;

#[derive(Debug, Default)]
pub struct Scorecard {
    passed: usize,
    failed: Vec<String>,
}

impl Scorecard {
    pub fn new() -> Self {
        Scorecard::default()
    }

    /// Record one check; `detail` shows the measured values behind the verdict.
    pub fn check(&mut self, id: &str, ok: bool, detail: impl Display) -> bool {
        println!("{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
        ok
    }

    /// Informational line that carries no verdict.
    pub fn note(&self, id: &str, detail: impl Display) {
        println!("INFO [{id}] {detail}");
    }

    pub fn failed(&self) -> &[String] {
        &self.failed
    }

    /// Print the summary and return the process exit code.
    pub fn finish(&self) -> i32 {
        println!(
            "acceptance: {} passed, {} failed{}",
            self.passed,
            self.failed.len(),
            if self.failed.is_empty() {
                String::new()
            } else {
                format!(" ({})", self.failed.join(", "))
            }
        );
        i32::from(!self.failed.is_empty())
    }
}
