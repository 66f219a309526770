//! Uniform reporting rows for experiments and acceptance checks.
//!
//! Every check reduces to one row: a metric name, the measured value, an
//! optional Monte Carlo standard error, the target it was compared against,
//! the tolerance used, and the verdict. Rows serialize to CSV with full
//! `f64` precision so reruns can be diffed bit-for-bit.

/// One measured-and-judged quantity.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub target: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportRow {
    /// `|value - target| <= tolerance`.
    pub fn against(metric: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        ReportRow {
            metric: metric.into(),
            value,
            std_error: None,
            target: Some(target),
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    /// `|value - target| <= tolerance` with a Monte Carlo standard error
    /// carried along (the tolerance is usually a multiple of it).
    pub fn against_with_se(
        metric: impl Into<String>,
        value: f64,
        std_error: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        ReportRow {
            metric: metric.into(),
            value,
            std_error: Some(std_error),
            target: Some(target),
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    /// `value <= tolerance`, for residual-style metrics with no target.
    pub fn bounded(metric: impl Into<String>, value: f64, tolerance: f64) -> Self {
        ReportRow {
            metric: metric.into(),
            value,
            std_error: None,
            target: None,
            tolerance,
            pass: value <= tolerance,
        }
    }

    /// A yes/no condition reported as 1.0 or 0.0.
    pub fn condition(metric: impl Into<String>, holds: bool, expected: bool) -> Self {
        ReportRow {
            metric: metric.into(),
            value: if holds { 1.0 } else { 0.0 },
            std_error: None,
            target: Some(if expected { 1.0 } else { 0.0 }),
            tolerance: 0.0,
            pass: holds == expected,
        }
    }

    /// A value carried for the record with no check attached; never fails.
    pub fn informational(metric: impl Into<String>, value: f64, std_error: Option<f64>) -> Self {
        ReportRow {
            metric: metric.into(),
            value,
            std_error,
            target: None,
            tolerance: f64::INFINITY,
            pass: true,
        }
    }

    pub fn csv_header() -> &'static str {
        "metric,value,std_error,target,tolerance,pass"
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        format!(
            "{},{:.16e},{},{},{:.16e},{}",
            self.metric,
            self.value,
            opt(self.std_error),
            opt(self.target),
            self.tolerance,
            self.pass
        )
    }
}

/// A named group of rows; passes when every row passes.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub index: usize,
    pub name: String,
    pub rows: Vec<ReportRow>,
}

impl CriterionReport {
    pub fn new(index: usize, name: impl Into<String>, rows: Vec<ReportRow>) -> Self {
        CriterionReport { index, name: name.into(), rows }
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_verdicts() {
        assert!(ReportRow::against("a", 1.0, 1.0 + 1e-9, 1e-8).pass);
        assert!(!ReportRow::against("a", 1.0, 1.1, 1e-8).pass);
        assert!(ReportRow::bounded("r", 1e-12, 1e-9).pass);
        assert!(!ReportRow::bounded("r", 1e-6, 1e-9).pass);
        assert!(ReportRow::condition("c", true, true).pass);
        assert!(!ReportRow::condition("c", false, true).pass);
    }

    #[test]
    fn csv_round_trip_precision() {
        let row = ReportRow::against("pi", std::f64::consts::PI, 3.0, 0.5);
        let line = row.to_csv_line();
        let val: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(val, std::f64::consts::PI);
    }

    #[test]
    fn criterion_aggregates() {
        let rep = CriterionReport::new(
            1,
            "demo",
            vec![ReportRow::bounded("x", 0.0, 1.0), ReportRow::bounded("y", 2.0, 1.0)],
        );
        assert!(!rep.pass());
    }
}
