use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

/// Version of the JSON/CSV report layout.
pub const SCHEMA_VERSION: u32 = 1;

pub type Config = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    /// Signed contribution to the right-hand side.
    pub value: f64,
}

/// Both sides of one identity on one path. `rhs` is the left-to-right sum
/// of `terms` and `residual = lhs - rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub identity: String,
    pub config: Config,
    pub lhs: f64,
    pub terms: Vec<Term>,
    pub rhs: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compensator: Option<Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl VerificationReport {
    pub fn new(identity: impl Into<String>, lhs: f64, terms: Vec<(&str, f64)>) -> Self {
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|(name, value)| Term { name: name.to_string(), value })
            .collect();
        let rhs = terms.iter().fold(0.0, |acc, t| acc + t.value);
        Self {
            schema_version: SCHEMA_VERSION,
            identity: identity.into(),
            config: Config::new(),
            lhs,
            terms,
            rhs,
            residual: lhs - rhs,
            compensator: None,
            metrics: BTreeMap::new(),
            passed: None,
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    pub fn with_config(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn with_metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    /// `|residual| / max(|lhs|, floor)`.
    pub fn relative_residual(&self, floor: f64) -> f64 {
        self.residual.abs() / self.lhs.abs().max(floor)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["schema_version", "identity", "quantity", "value"])?;
        let v = SCHEMA_VERSION.to_string();
        w.write_record([v.as_str(), &self.identity, "lhs", &self.lhs.to_string()])?;
        for t in &self.terms {
            w.write_record([v.as_str(), &self.identity, &format!("term:{}", t.name), &t.value.to_string()])?;
        }
        w.write_record([v.as_str(), &self.identity, "rhs", &self.rhs.to_string()])?;
        w.write_record([v.as_str(), &self.identity, "residual", &self.residual.to_string()])?;
        for (k, m) in &self.metrics {
            w.write_record([v.as_str(), &self.identity, &format!("metric:{k}"), &m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathRow {
    pub path: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Monte Carlo summary of a pathwise identity over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleReport {
    pub schema_version: u32,
    pub identity: String,
    pub config: Config,
    pub n_paths: usize,
    pub mean_residual: f64,
    pub rms_residual: f64,
    /// Standard error of the mean residual.
    pub se_residual: f64,
    pub rms_lhs: f64,
    /// `rms_residual / rms_lhs`.
    pub relative_rms: f64,
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
    pub rows: Vec<PathRow>,
}

impl EnsembleReport {
    pub fn from_rows(identity: impl Into<String>, rows: Vec<PathRow>) -> Self {
        let n = rows.len().max(1) as f64;
        let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
        let stats = MeanStats::of(&residuals);
        let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
        let rms_lhs = (rows.iter().map(|r| r.lhs * r.lhs).sum::<f64>() / n).sqrt();
        Self {
            schema_version: SCHEMA_VERSION,
            identity: identity.into(),
            config: Config::new(),
            n_paths: rows.len(),
            mean_residual: stats.mean,
            rms_residual,
            se_residual: stats.se,
            rms_lhs,
            relative_rms: if rms_lhs > 0.0 { rms_residual / rms_lhs } else { rms_residual },
            metrics: BTreeMap::new(),
            passed: None,
            rows,
        }
    }

    pub fn from_reports(identity: impl Into<String>, reports: &[VerificationReport]) -> Self {
        let rows = reports
            .iter()
            .enumerate()
            .map(|(i, r)| PathRow { path: i, lhs: r.lhs, rhs: r.rhs, residual: r.residual })
            .collect();
        Self::from_rows(identity, rows)
    }

    pub fn with_config(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn with_metric(mut self, key: &str, value: f64) -> Self {
        self.metrics.insert(key.to_string(), value);
        self
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["schema_version", "identity", "path", "lhs", "rhs", "residual"])?;
        let v = SCHEMA_VERSION.to_string();
        for r in &self.rows {
            w.write_record([
                v.clone(),
                self.identity.clone(),
                r.path.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.residual.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample mean and its standard error (`n - 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStats {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl MeanStats {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, sd: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sd = var.sqrt();
        Self { n, mean, sd, se: sd / (n as f64).sqrt() }
    }

    /// `|mean - target| / se`; infinite when `se = 0` and the mean is off.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}
