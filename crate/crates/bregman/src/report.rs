//! Uniform record for a numerical check of an identity or inequality.

use crate::quadrature::QuadratureConfig;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    /// Short name of the identity or bound being checked.
    pub anchor: String,
    #[serde(with = "nonfinite")]
    pub lhs: f64,
    #[serde(with = "nonfinite")]
    pub rhs: f64,
    #[serde(with = "nonfinite")]
    pub abs_err: f64,
    #[serde(with = "nonfinite")]
    pub rel_err: f64,
    #[serde(with = "nonfinite")]
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
    pub wall_time_ms: f64,
    pub budget: Option<QuadratureConfig>,
    #[serde(default)]
    pub note: String,
}

/// Floats as JSON numbers, with `"inf"`, `"-inf"` and `"nan"` for the values
/// JSON cannot hold.
mod nonfinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a float: {other}"))),
            },
        }
    }
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish or are the same infinity.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

impl VerificationReport {
    /// Compares two sides; passes iff the relative gap is within `tolerance`.
    pub fn compare(check: impl Into<String>, anchor: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let rel_err = relative_gap(lhs, rhs);
        let abs_err = if lhs == rhs { 0.0 } else { (lhs - rhs).abs() };
        Self {
            check: check.into(),
            anchor: anchor.into(),
            lhs,
            rhs,
            abs_err,
            rel_err,
            tolerance,
            pass: rel_err <= tolerance,
            seed: None,
            wall_time_ms: 0.0,
            budget: None,
            note: String::new(),
        }
    }

    /// Overrides the pass flag for checks with a composite criterion.
    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_budget(mut self, q: &QuadratureConfig) -> Self {
        self.budget = Some(*q);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if self.note.is_empty() {
            self.note = note;
        } else if !note.is_empty() {
            self.note = format!("{}; {}", self.note, note);
        }
        self
    }

    pub fn timed(mut self, start: Instant) -> Self {
        self.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }

    /// Copy with the wall time zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_ms: 0.0, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_and_pass() {
        let r = VerificationReport::compare("x", "y", 1.0, 1.01, 2e-2);
        assert!(r.pass);
        assert!((r.rel_err - 0.01 / 1.01).abs() < 1e-15);
        assert!(!VerificationReport::compare("x", "y", 1.0, 2.0, 0.1).pass);
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert_eq!(relative_gap(f64::INFINITY, f64::INFINITY), 0.0);
    }

    #[test]
    fn nonfinite_values_round_trip() {
        let r = VerificationReport::compare("x", "y", f64::INFINITY, 1.0, f64::INFINITY);
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"lhs\":\"inf\""));
        let back: VerificationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.lhs, f64::INFINITY);
        assert!(back.rel_err.is_nan());
    }

    #[test]
    fn notes_accumulate() {
        let r = VerificationReport::compare("x", "y", 0.0, 0.0, 0.0).with_note("a").with_note("b");
        assert_eq!(r.note, "a; b");
    }
}
