use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Uniform,
    Triangular,
}

/// A named uncertain input with its sampling distribution and baseline value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub name: String,
    pub kind: DistributionKind,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<f64>,
    pub baseline: f64,
}

impl DistributionSpec {
    pub fn uniform(name: &str, min: f64, max: f64, baseline: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: DistributionKind::Uniform,
            min,
            max,
            mode: None,
            baseline,
        }
    }

    pub fn triangular(name: &str, min: f64, mode: f64, max: f64, baseline: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: DistributionKind::Triangular,
            min,
            max,
            mode: Some(mode),
            baseline,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| {
            Err(Error::Distribution {
                name: self.name.clone(),
                reason,
            })
        };
        if ![self.min, self.max, self.baseline].iter().all(|v| v.is_finite()) {
            return bad("bounds and baseline must be finite".into());
        }
        if !(self.min < self.max) {
            return bad(format!("min {} must be < max {}", self.min, self.max));
        }
        if !(self.min..=self.max).contains(&self.baseline) {
            return bad(format!("baseline {} outside [{}, {}]", self.baseline, self.min, self.max));
        }
        match (self.kind, self.mode) {
            (DistributionKind::Triangular, Some(m)) if (self.min..=self.max).contains(&m) => Ok(()),
            (DistributionKind::Triangular, Some(m)) => bad(format!("mode {m} outside [{}, {}]", self.min, self.max)),
            (DistributionKind::Triangular, None) => bad("triangular distribution needs a mode".into()),
            (DistributionKind::Uniform, Some(_)) => bad("uniform distribution takes no mode".into()),
            (DistributionKind::Uniform, None) => Ok(()),
        }
    }

    /// Inverse CDF at probability `u` in [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let (a, b) = (self.min, self.max);
        match self.kind {
            DistributionKind::Uniform => a + u * (b - a),
            DistributionKind::Triangular => {
                let c = self.mode.unwrap_or(self.baseline);
                let split = (c - a) / (b - a);
                let x = if u < split {
                    a + (u * (b - a) * (c - a)).sqrt()
                } else {
                    b - ((1.0 - u) * (b - a) * (b - c)).sqrt()
                };
                x.clamp(a, b)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = (self.min, self.max);
        if x <= a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        match self.kind {
            DistributionKind::Uniform => (x - a) / (b - a),
            DistributionKind::Triangular => {
                let c = self.mode.unwrap_or(self.baseline);
                if x <= c {
                    (x - a).powi(2) / ((b - a) * (c - a))
                } else {
                    1.0 - (b - x).powi(2) / ((b - a) * (b - c))
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            DistributionKind::Uniform => 0.5 * (self.min + self.max),
            DistributionKind::Triangular => (self.min + self.max + self.mode.unwrap_or(self.baseline)) / 3.0,
        }
    }
}

pub fn validate_specs(specs: &[DistributionSpec]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for s in specs {
        s.validate()?;
        if !seen.insert(s.name.as_str()) {
            return Err(Error::Distribution {
                name: s.name.clone(),
                reason: "duplicate parameter name".into(),
            });
        }
    }
    Ok(())
}
