use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Both ends are included when `(stop - start)` is a multiple of `step`
/// within this tolerance.
const END_TOLERANCE: f64 = 1e-12;
const MAX_POINTS: usize = 1_000_000;

/// Inclusive grid `start:stop:step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        if self.start == self.stop {
            return vec![self.start];
        }
        let span = self.stop - self.start;
        let ratio = span / self.step;
        let nearest = ratio.round();
        let n = if (span - nearest * self.step).abs() <= END_TOLERANCE { nearest as usize } else { ratio.floor() as usize };
        let mut out: Vec<f64> = (0..=n).map(|k| self.start + k as f64 * self.step).collect();
        if (span - nearest * self.step).abs() <= END_TOLERANCE {
            *out.last_mut().expect("non-empty grid") = self.stop;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepError(pub String);

impl fmt::Display for SweepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SweepError {}

impl FromStr for Sweep {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: &str| SweepError(format!("malformed sweep '{s}': {m}"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(err("expected start:stop:step"));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse::<f64>().map_err(|_| err(&format!("'{p}' is not a number")))?;
            if !slot.is_finite() {
                return Err(err("values must be finite"));
            }
        }
        let [start, stop, step] = v;
        if step <= 0.0 {
            return Err(err("step must be positive"));
        }
        if stop < start {
            return Err(err("stop must not be below start"));
        }
        if (stop - start) / step > MAX_POINTS as f64 {
            return Err(err("too many points"));
        }
        Ok(Sweep { start, stop, step })
    }
}

impl TryFrom<String> for Sweep {
    type Error = SweepError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Sweep> for String {
    fn from(s: Sweep) -> String {
        s.to_string()
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}
