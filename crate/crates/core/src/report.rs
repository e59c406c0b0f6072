use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Outcome of checking one inequality over a set of samples.
///
/// `max_violation` is the largest observed `lhs − rhs` (in whatever units the
/// check states, usually log-space); `pass` holds iff it does not exceed
/// `tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub inequality_id: String,
    pub samples_checked: usize,
    pub max_violation: f64,
    pub violation_location: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Running maximum of `lhs − rhs` over samples.
#[derive(Debug)]
pub(crate) struct ViolationTracker {
    id: String,
    tolerance: f64,
    count: usize,
    worst: f64,
    location: Option<f64>,
}

impl ViolationTracker {
    pub fn new(id: impl Into<String>, tolerance: f64) -> Self {
        ViolationTracker {
            id: id.into(),
            tolerance,
            count: 0,
            worst: f64::NEG_INFINITY,
            location: None,
        }
    }

    /// Records one sample. NaN counts as an infinite violation.
    pub fn record(&mut self, t: f64, violation: f64) {
        self.count += 1;
        let v = if violation.is_nan() { f64::INFINITY } else { violation };
        if v > self.worst {
            self.worst = v;
            self.location = Some(t);
        }
    }

    /// Records a sample that holds trivially (e.g. both sides exactly zero).
    pub fn record_trivial(&mut self) {
        self.count += 1;
    }

    pub fn finish(self, note: Option<String>) -> CertReport {
        // No informative sample: report a zero violation with no location.
        let (worst, location) = if self.worst == f64::NEG_INFINITY {
            (0.0, None)
        } else {
            (self.worst, self.location)
        };
        let max_violation = if worst.is_finite() { worst } else { f64::MAX };
        CertReport {
            inequality_id: self.id,
            samples_checked: self.count,
            max_violation,
            violation_location: location,
            tolerance: self.tolerance,
            pass: max_violation <= self.tolerance,
            note,
        }
    }
}

/// Writes `inequality_id, pass, max_violation, location` rows, optionally
/// prefixed with a run label column.
pub fn write_summary_csv<W: Write>(out: W, rows: &[(String, CertReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "inequality_id", "pass", "max_violation", "location"])?;
    for (run, r) in rows {
        w.write_record([
            run.as_str(),
            r.inequality_id.as_str(),
            if r.pass { "true" } else { "false" },
            &format!("{:e}", r.max_violation),
            &r.violation_location.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_within_tolerance() {
        let mut t = ViolationTracker::new("x", 1e-8);
        t.record(1.0, -3.0);
        t.record(2.0, 5e-9);
        let r = t.finish(None);
        assert!(r.pass);
        assert_eq!(r.violation_location, Some(2.0));
        assert_eq!(r.samples_checked, 2);

        let mut t = ViolationTracker::new("x", 1e-8);
        t.record(1.0, 2e-8);
        assert!(!t.finish(None).pass);
    }

    #[test]
    fn nan_is_a_failure_and_empty_is_neutral() {
        let mut t = ViolationTracker::new("x", 1.0);
        t.record(0.5, f64::NAN);
        let r = t.finish(None);
        assert!(!r.pass);
        assert_eq!(r.max_violation, f64::MAX);

        let mut t = ViolationTracker::new("x", 0.0);
        t.record_trivial();
        let r = t.finish(None);
        assert!(r.pass);
        assert_eq!(r.samples_checked, 1);
        assert_eq!(r.violation_location, None);
    }
}
