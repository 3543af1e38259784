use std::time::Duration;

use crate::table::{CsvTable, CsvValue};

/// One tolerance check of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Non-gating checks are reported but do not fail the run.
    pub gating: bool,
}

/// Parameters, result tables and checks of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    pub parameters: Vec<(String, String)>,
    pub tables: Vec<(String, CsvTable)>,
    pub checks: Vec<Check>,
    /// Wall-clock time; never written to CSV so output stays reproducible.
    pub duration: Duration,
}

impl ExperimentReport {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            parameters: Vec::new(),
            tables: Vec::new(),
            checks: Vec::new(),
            duration: Duration::ZERO,
        }
    }

    pub fn param(&mut self, key: impl Into<String>, value: impl ToString) {
        self.parameters.push((key.into(), value.to_string()));
    }

    pub fn table(&mut self, name: impl Into<String>, table: CsvTable) {
        self.tables.push((name.into(), table));
    }

    pub fn get_table(&self, name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Records `value ≤ threshold`. NaN fails.
    pub fn check_below(&mut self, name: impl Into<String>, value: f64, threshold: f64, gating: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
            gating,
        });
    }

    /// Records `value ≥ threshold`. NaN fails.
    pub fn check_above(&mut self, name: impl Into<String>, value: f64, threshold: f64, gating: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
            gating,
        });
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Whether every gating check passed.
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.gating).all(|c| c.passed)
    }

    /// `check, value, threshold, passed, gating`.
    pub fn summary_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["check", "value", "threshold", "passed", "gating"]);
        for c in &self.checks {
            t.push(vec![
                c.name.as_str().into(),
                c.value.into(),
                c.threshold.into(),
                c.passed.into(),
                c.gating.into(),
            ]);
        }
        t
    }

    /// `parameter, value`.
    pub fn parameters_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["parameter", "value"]);
        for (k, v) in &self.parameters {
            t.push(vec![CsvValue::Text(k.clone()), CsvValue::Text(v.clone())]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gating_controls_pass() {
        let mut r = ExperimentReport::new("x");
        r.check_below("a", 0.5, 1.0, true);
        r.check_below("b", 2.0, 1.0, false);
        assert!(r.passed());
        r.check_above("c", f64::NAN, 0.0, true);
        assert!(!r.passed());
        assert_eq!(r.summary_table().len(), 3);
        assert!(!r.check("c").unwrap().passed);
    }
}
