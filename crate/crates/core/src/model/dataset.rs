//! Censored survival data with standardized covariates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw, unstandardized observations as read from disk or a simulator.
#[derive(Debug, Clone, Default)]
pub struct RawData {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// Row-major `n x p`.
    pub covariates: Vec<Vec<f64>>,
    pub names: Vec<String>,
}

/// Per-column standardization record, written to the run manifest so
/// covariate profiles can be given on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    /// Divisor applied after centring; 1 for binary columns.
    pub scale: f64,
    pub binary: bool,
}

/// Immutable dataset: positive observation times, event indicators, and
/// centred covariates. Continuous columns are also scaled to unit standard
/// deviation; columns whose raw values are all 0/1 are treated as binary and
/// centred only, keeping their effect sizes interpretable.
#[derive(Debug, Clone)]
pub struct Dataset {
    times: Vec<f64>,
    log_times: Vec<f64>,
    events: Vec<bool>,
    /// Row-major `n x p`, standardized.
    x: Vec<f64>,
    n: usize,
    p: usize,
    columns: Vec<ColumnStats>,
}

impl Dataset {
    /// Standardize and validate raw observations. The full sample (events and
    /// censored rows alike) feeds the centring statistics.
    pub fn new(raw: RawData) -> Result<Self> {
        let n = raw.times.len();
        if raw.events.len() != n || raw.covariates.len() != n {
            return Err(Error::Schema(format!(
                "ragged input: {} times, {} events, {} covariate rows",
                n,
                raw.events.len(),
                raw.covariates.len()
            )));
        }
        let p = raw.names.len();
        for (i, row) in raw.covariates.iter().enumerate() {
            if row.len() != p {
                return Err(Error::Input {
                    line: i + 1,
                    message: format!("expected {p} covariates, found {}", row.len()),
                });
            }
        }
        for (i, &t) in raw.times.iter().enumerate() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Input {
                    line: i + 1,
                    message: format!("time must be finite and positive, got {t}"),
                });
            }
        }

        let mut columns = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        for j in 0..p {
            let col: Vec<f64> = raw.covariates.iter().map(|r| r[j]).collect();
            for (i, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Input {
                        line: i + 1,
                        message: format!("covariate {} must be finite, got {v}", raw.names[j]),
                    });
                }
            }
            let mean = if n > 0 {
                col.iter().sum::<f64>() / n as f64
            } else {
                0.0
            };
            let binary = !col.is_empty() && col.iter().all(|&v| v == 0.0 || v == 1.0);
            let scale = if binary || n == 0 {
                1.0
            } else {
                let var = col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            };
            columns.push(ColumnStats {
                name: raw.names[j].clone(),
                mean,
                scale,
                binary,
            });
            scales.push((mean, scale));
        }

        let mut x = Vec::with_capacity(n * p);
        for row in &raw.covariates {
            for (j, &v) in row.iter().enumerate() {
                let (mean, scale) = scales[j];
                x.push((v - mean) / scale);
            }
        }
        let log_times = raw.times.iter().map(|&t| t.ln()).collect();
        Ok(Self {
            times: raw.times,
            log_times,
            events: raw.events,
            x,
            n,
            p,
            columns,
        })
    }

    /// Build a dataset whose covariates are used exactly as given.
    pub fn new_prestandardized(
        times: Vec<f64>,
        events: Vec<bool>,
        covariates: Vec<Vec<f64>>,
        names: Vec<String>,
    ) -> Result<Self> {
        let p = names.len();
        let columns = names
            .iter()
            .map(|n| ColumnStats {
                name: n.clone(),
                mean: 0.0,
                scale: 1.0,
                binary: false,
            })
            .collect();
        let n = times.len();
        if events.len() != n || covariates.len() != n || covariates.iter().any(|r| r.len() != p) {
            return Err(Error::Schema("ragged pre-standardized input".into()));
        }
        if let Some(&t) = times.iter().find(|&&t| !(t.is_finite() && t > 0.0)) {
            return Err(Error::Domain(format!("times must be positive, got {t}")));
        }
        let x = covariates.into_iter().flatten().collect();
        let log_times = times.iter().map(|&t| t.ln()).collect();
        Ok(Self {
            times,
            log_times,
            events,
            x,
            n,
            p,
            columns,
        })
    }

    /// Empty dataset with `p` covariate columns; prior-only sampling.
    pub fn empty(p: usize) -> Self {
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new_prestandardized(vec![], vec![], vec![], names).unwrap_or(Dataset {
            times: vec![],
            log_times: vec![],
            events: vec![],
            x: vec![],
            n: 0,
            p,
            columns: (1..=p)
                .map(|j| ColumnStats {
                    name: format!("x{j}"),
                    mean: 0.0,
                    scale: 1.0,
                    binary: false,
                })
                .collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_times(&self) -> &[f64] {
        &self.log_times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn columns(&self) -> &[ColumnStats] {
        &self.columns
    }

    /// Standardized covariate row for observation `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().cloned().fold(0.0, f64::max)
    }

    /// Map an original-scale covariate profile onto the standardized scale.
    pub fn standardize_profile(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.p {
            return Err(Error::Schema(format!(
                "profile has {} values, dataset has {} covariates",
                raw.len(),
                self.p
            )));
        }
        Ok(raw
            .iter()
            .zip(&self.columns)
            .map(|(&v, c)| (v - c.mean) / c.scale)
            .collect())
    }
}

/// Standalone standardizer matching [`Dataset::standardize_profile`], usable
/// from manifest column stats without the data in memory.
pub fn standardize_with(columns: &[ColumnStats], raw: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != columns.len() {
        return Err(Error::Schema(format!(
            "profile has {} values, expected {}",
            raw.len(),
            columns.len()
        )));
    }
    Ok(raw
        .iter()
        .zip(columns)
        .map(|(&v, c)| (v - c.mean) / c.scale)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw() -> RawData {
        RawData {
            times: vec![1.0, 2.0, 3.0, 4.0],
            events: vec![true, false, true, true],
            covariates: vec![
                vec![0.0, 10.0],
                vec![1.0, 20.0],
                vec![0.0, 30.0],
                vec![1.0, 40.0],
            ],
            names: vec!["treat".into(), "age".into()],
        }
    }

    #[test]
    fn binary_columns_are_centred_not_scaled() {
        let d = Dataset::new(raw()).unwrap();
        assert!(d.columns()[0].binary);
        assert_eq!(d.columns()[0].scale, 1.0);
        assert_eq!(d.columns()[0].mean, 0.5);
        assert_eq!(d.row(0)[0], -0.5);
        assert_eq!(d.row(1)[0], 0.5);
    }

    #[test]
    fn continuous_columns_are_unit_scaled() {
        let d = Dataset::new(raw()).unwrap();
        let col: Vec<f64> = (0..4).map(|i| d.row(i)[1]).collect();
        let mean: f64 = col.iter().sum::<f64>() / 4.0;
        let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_time_is_rejected_with_line() {
        let mut r = raw();
        r.times[2] = -0.5;
        match Dataset::new(r) {
            Err(Error::Input { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn profile_standardization_round_trips() {
        let d = Dataset::new(raw()).unwrap();
        let std = d.standardize_profile(&[1.0, 25.0]).unwrap();
        assert_eq!(std[0], 0.5);
        assert!((std[1] - (25.0 - 25.0) / d.columns()[1].scale).abs() < 1e-12);
        let via_cols = standardize_with(d.columns(), &[1.0, 25.0]).unwrap();
        assert_eq!(std, via_cols);
    }
}
