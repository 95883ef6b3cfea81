//! Per-epoch metric rows and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,schedule,seed,loss_total,loss_syntax,loss_semantics,span_f1,v_measure,homogeneity,completeness,verb_match,role_match";

/// JSON has no NaN; an undefined metric (no items to score) is stored as null.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub schedule: String,
    pub seed: u64,
    /// Per-sentence means over the epoch.
    #[serde(with = "nan_as_null")]
    pub loss_total: f64,
    #[serde(with = "nan_as_null")]
    pub loss_syntax: f64,
    #[serde(with = "nan_as_null")]
    pub loss_semantics: f64,
    #[serde(with = "nan_as_null")]
    pub span_f1: f64,
    #[serde(with = "nan_as_null")]
    pub v_measure: f64,
    #[serde(with = "nan_as_null")]
    pub homogeneity: f64,
    #[serde(with = "nan_as_null")]
    pub completeness: f64,
    #[serde(with = "nan_as_null")]
    pub verb_match: f64,
    #[serde(with = "nan_as_null")]
    pub role_match: f64,
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.schedule,
            self.seed,
            self.loss_total,
            self.loss_syntax,
            self.loss_semantics,
            self.span_f1,
            self.v_measure,
            self.homogeneity,
            self.completeness,
            self.verb_match,
            self.role_match
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 12 {
            return Err(Error::Format(format!("metrics row has {} fields, expected 12", f.len())));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|e| Error::Format(format!("metrics field {i} {:?}: {e}", f[i])))
        };
        let int = |i: usize| -> Result<u64> {
            f[i].parse::<u64>()
                .map_err(|e| Error::Format(format!("metrics field {i} {:?}: {e}", f[i])))
        };
        Ok(MetricsRecord {
            epoch: int(0)? as usize,
            schedule: f[1].to_string(),
            seed: int(2)?,
            loss_total: num(3)?,
            loss_syntax: num(4)?,
            loss_semantics: num(5)?,
            span_f1: num(6)?,
            v_measure: num(7)?,
            homogeneity: num(8)?,
            completeness: num(9)?,
            verb_match: num(10)?,
            role_match: num(11)?,
        })
    }

    /// Metric value by CSV column name.
    pub fn get(&self, column: &str) -> Option<f64> {
        Some(match column {
            "epoch" => self.epoch as f64,
            "loss_total" => self.loss_total,
            "loss_syntax" => self.loss_syntax,
            "loss_semantics" => self.loss_semantics,
            "span_f1" => self.span_f1,
            "v_measure" => self.v_measure,
            "homogeneity" => self.homogeneity,
            "completeness" => self.completeness,
            "verb_match" => self.verb_match,
            "role_match" => self.role_match,
            _ => return None,
        })
    }
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRecord]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::Format(format!("{}: missing metrics header", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRecord::from_csv_row)
        .collect()
}
