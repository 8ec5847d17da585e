//! Threshold table and its on-disk JSON form.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TABLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TableIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed threshold table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported threshold table version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid threshold table: {0}")]
    Invalid(String),
}

/// Calibrated early-exit parameters for the output layer.
///
/// `theta[i]` is class `i`'s exit threshold (`+inf` marks a class that never
/// exits early), `order` is the evaluation order, and `silhouette[i]` is the
/// separation score that produced the order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    rho: f64,
    theta: Vec<f64>,
    order: Vec<usize>,
    silhouette: Vec<f64>,
}

impl ThresholdTable {
    pub fn new(
        rho: f64,
        theta: Vec<f64>,
        order: Vec<usize>,
        silhouette: Vec<f64>,
    ) -> Result<Self, TableIoError> {
        let table = ThresholdTable {
            rho,
            theta,
            order,
            silhouette,
        };
        table.validate()?;
        Ok(table)
    }

    /// Same thresholds, identity evaluation order. This is the
    /// "thresholding without index ordering" configuration; its silhouette
    /// column is zeroed since the identity order does not derive from the
    /// scores (and arbitrary scores would break the sortedness invariant).
    pub fn with_identity_order(&self) -> ThresholdTable {
        ThresholdTable {
            rho: self.rho,
            theta: self.theta.clone(),
            order: (0..self.theta.len()).collect(),
            silhouette: vec![0.0; self.theta.len()],
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn silhouette(&self) -> &[f64] {
        &self.silhouette
    }

    pub fn class_count(&self) -> usize {
        self.theta.len()
    }

    /// Classes with a finite exit threshold.
    pub fn finite_theta_count(&self) -> usize {
        self.theta.iter().filter(|t| t.is_finite()).count()
    }

    fn validate(&self) -> Result<(), TableIoError> {
        let n = self.theta.len();
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(TableIoError::Invalid(format!(
                "rho {} outside (0, 1]",
                self.rho
            )));
        }
        if self.order.len() != n || self.silhouette.len() != n {
            return Err(TableIoError::Invalid(
                "theta, order, and silhouette must have equal length".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &i in &self.order {
            if i >= n || seen[i] {
                return Err(TableIoError::Invalid(
                    "order is not a permutation of the class indices".into(),
                ));
            }
            seen[i] = true;
        }
        for w in self.order.windows(2) {
            if self.silhouette[w[0]] < self.silhouette[w[1]] {
                return Err(TableIoError::Invalid(
                    "silhouette scores must be non-increasing along the order".into(),
                ));
            }
        }
        for (i, t) in self.theta.iter().enumerate() {
            if t.is_nan() {
                return Err(TableIoError::Invalid(format!("theta[{i}] is NaN")));
            }
        }
        for (i, s) in self.silhouette.iter().enumerate() {
            if !s.is_finite() || *s < -1.0 || *s > 1.0 {
                return Err(TableIoError::Invalid(format!(
                    "silhouette[{i}] = {s} outside [-1, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// JSON wire form. Infinite thresholds serialize as the strings "+inf" /
/// "-inf" since JSON numbers cannot carry them.
#[derive(Serialize, Deserialize)]
struct TableFile {
    version: u32,
    rho: f64,
    theta: Vec<ThetaEntry>,
    order: Vec<usize>,
    silhouette: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ThetaEntry {
    Finite(f64),
    Marker(String),
}

impl ThetaEntry {
    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            ThetaEntry::Marker("+inf".to_string())
        } else if v == f64::NEG_INFINITY {
            ThetaEntry::Marker("-inf".to_string())
        } else {
            ThetaEntry::Finite(v)
        }
    }

    fn to_value(&self) -> Result<f64, TableIoError> {
        match self {
            ThetaEntry::Finite(v) => Ok(*v),
            ThetaEntry::Marker(s) if s == "+inf" => Ok(f64::INFINITY),
            ThetaEntry::Marker(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            ThetaEntry::Marker(s) => Err(TableIoError::Invalid(format!(
                "unknown theta marker {s:?}"
            ))),
        }
    }
}

pub fn encode_table(table: &ThresholdTable) -> String {
    let file = TableFile {
        version: TABLE_FORMAT_VERSION,
        rho: table.rho,
        theta: table.theta.iter().map(|&v| ThetaEntry::from_value(v)).collect(),
        order: table.order.clone(),
        silhouette: table.silhouette.clone(),
    };
    serde_json::to_string_pretty(&file).expect("table serialization cannot fail")
}

pub fn decode_table(text: &str) -> Result<ThresholdTable, TableIoError> {
    let file: TableFile = serde_json::from_str(text)?;
    if file.version != TABLE_FORMAT_VERSION {
        return Err(TableIoError::UnsupportedVersion(file.version));
    }
    let theta = file
        .theta
        .iter()
        .map(ThetaEntry::to_value)
        .collect::<Result<Vec<f64>, _>>()?;
    ThresholdTable::new(file.rho, theta, file.order, file.silhouette)
}

pub fn save_table(path: &Path, table: &ThresholdTable) -> Result<(), TableIoError> {
    fs::write(path, encode_table(table))?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<ThresholdTable, TableIoError> {
    decode_table(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_table() -> ThresholdTable {
        ThresholdTable::new(
            0.99,
            vec![1.25, f64::INFINITY, -0.5],
            vec![2, 0, 1],
            vec![0.25, -1.0, 0.75],
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let table = sample_table();
        let text = encode_table(&table);
        let back = decode_table(&text).unwrap();
        assert_eq!(table, back);
        // And stable: encoding twice gives identical text.
        assert_eq!(text, encode_table(&back));
    }

    #[test]
    fn infinity_uses_distinguished_marker() {
        let text = encode_table(&sample_table());
        assert!(text.contains("\"+inf\""));
        assert!(!text.contains("null"));
    }

    #[test]
    fn rejects_bad_permutation() {
        let err = ThresholdTable::new(1.0, vec![0.0, 0.0], vec![0, 0], vec![0.0, 0.0]);
        assert!(matches!(err, Err(TableIoError::Invalid(_))));
    }

    #[test]
    fn rejects_rho_out_of_range() {
        assert!(ThresholdTable::new(0.0, vec![0.0], vec![0], vec![0.0]).is_err());
        assert!(ThresholdTable::new(1.5, vec![0.0], vec![0], vec![0.0]).is_err());
    }

    #[test]
    fn rejects_unsorted_silhouette_along_order() {
        let err = ThresholdTable::new(1.0, vec![0.0, 0.0], vec![0, 1], vec![0.1, 0.9]);
        assert!(matches!(err, Err(TableIoError::Invalid(_))));
    }

    #[test]
    fn rejects_wrong_version() {
        let mut text = encode_table(&sample_table());
        text = text.replace("\"version\": 1", "\"version\": 42");
        assert!(matches!(
            decode_table(&text),
            Err(TableIoError::UnsupportedVersion(42))
        ));
    }

    #[test]
    fn identity_order_keeps_thresholds() {
        let table = ThresholdTable::new(
            0.5,
            vec![1.0, 2.0, f64::INFINITY],
            vec![1, 0, 2],
            vec![0.5, 0.9, -1.0],
        )
        .unwrap();
        let identity = table.with_identity_order();
        assert_eq!(identity.order(), &[0, 1, 2]);
        assert_eq!(identity.theta(), table.theta());
        assert!(identity.validate().is_ok());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        let table = sample_table();
        save_table(&path, &table).unwrap();
        assert_eq!(load_table(&path).unwrap(), table);
    }
}
