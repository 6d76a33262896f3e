//! File formats: design and parameter JSON, response CSV, study and estimation output.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::criterion::{ModelKind, ModelParams};
use crate::error::{Result, SqdError};
use crate::estimation::{EstimationResult, ObservedDataset};
use crate::mvn::MvnParams;
use crate::pattern::{enumerate_patterns, DesignDistribution, Pattern, PatternSet};
use crate::simulation::StudyResult;
use crate::zmvln::ZmvlnParams;

/// Rounds to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub m: usize,
    pub patterns: Vec<Vec<usize>>,
    pub probs: Vec<f64>,
    pub item_inclusion: Vec<f64>,
}

impl DesignFile {
    pub fn from_design(d: &DesignDistribution) -> Self {
        let ps = d.pattern_set();
        Self {
            k: ps.k(),
            m: ps.m(),
            patterns: ps.patterns().iter().map(|p| p.items().to_vec()).collect(),
            probs: d.probs().iter().map(|&p| round_sig12(p)).collect(),
            item_inclusion: d.item_inclusion().into_iter().map(round_sig12).collect(),
        }
    }

    /// Rebuilds the design, renormalizing when rounding moved the mass by at most `1e-9`.
    pub fn to_design(&self) -> Result<DesignDistribution> {
        if self.patterns.len() != self.probs.len() {
            return Err(SqdError::DimensionMismatch(format!(
                "{} patterns but {} probabilities",
                self.patterns.len(),
                self.probs.len()
            )));
        }
        let patterns = self
            .patterns
            .iter()
            .map(|items| Pattern::new(items.clone(), self.k))
            .collect::<Result<Vec<_>>>()?;
        let ps = PatternSet::from_patterns(self.k, self.m, patterns)?;
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SqdError::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let probs = self.probs.iter().map(|p| p / total).collect();
        DesignDistribution::new(Arc::new(ps), probs)
    }
}

/// The design with its pattern set replaced by the full enumeration when the file
/// lists every size-`m` subset in canonical order.
pub fn read_design(path: &Path) -> Result<DesignDistribution> {
    let file: DesignFile = serde_json::from_reader(std::fs::File::open(path)?)?;
    let d = file.to_design()?;
    let full = enumerate_patterns(file.k, file.m);
    match full {
        Ok(full) if full.patterns() == d.pattern_set().patterns() => {
            DesignDistribution::new(Arc::new(full), d.probs().to_vec())
        }
        _ => Ok(d),
    }
}

pub fn write_design(path: &Path, d: &DesignDistribution) -> Result<()> {
    write_json(path, &DesignFile::from_design(d))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(SqdError::DimensionMismatch("sigma must be a square array".into()));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ParamsFile {
    pub fn from_params(p: &ModelParams) -> Self {
        match p {
            ModelParams::Mvn(p) => Self {
                lambda: None,
                mu: p.mu().iter().copied().collect(),
                sigma: rows_of(p.sigma()),
            },
            ModelParams::Zmvln(p) => Self {
                lambda: Some(p.lambda().iter().copied().collect()),
                mu: p.mu().iter().copied().collect(),
                sigma: rows_of(p.sigma()),
            },
        }
    }

    pub fn to_params(&self, model: ModelKind) -> Result<ModelParams> {
        let mu = DVector::from_vec(self.mu.clone());
        let sigma = matrix_from_rows(&self.sigma)?;
        Ok(match model {
            ModelKind::Mvn => ModelParams::Mvn(MvnParams::new(mu, sigma)?),
            ModelKind::Zmvln => {
                let lambda = self
                    .lambda
                    .clone()
                    .ok_or_else(|| SqdError::InvalidArgument("zmvln parameters need \"lambda\"".into()))?;
                ModelParams::Zmvln(ZmvlnParams::new(DVector::from_vec(lambda), mu, sigma)?)
            }
        })
    }
}

pub fn read_params(path: &Path, model: ModelKind) -> Result<ModelParams> {
    let file: ParamsFile = serde_json::from_reader(std::fs::File::open(path)?)?;
    file.to_params(model)
}

/// Survey responses with item names from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    pub items: Vec<String>,
    pub data: ObservedDataset,
}

/// Parses comma-separated responses; an empty cell is a question not asked.
///
/// Row numbers in errors count the header as row 1.
pub fn parse_responses<R: Read>(reader: R) -> Result<ResponseTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let items: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let k = items.len();
    if k == 0 || items.iter().all(|h| h.is_empty()) {
        return Err(SqdError::Parse {
            row: 1,
            message: "missing header".into(),
        });
    }
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| SqdError::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() != k {
            return Err(SqdError::Parse {
                row,
                message: format!("expected {k} fields, found {}", rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| SqdError::Parse {
                    row,
                    message: format!("column {:?}: cannot parse {cell:?} as a number", items[j]),
                })?;
                if !v.is_finite() {
                    return Err(SqdError::Parse {
                        row,
                        message: format!("column {:?}: non-finite value", items[j]),
                    });
                }
                values.push(v);
                mask.push(true);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(SqdError::Parse {
            row: 2,
            message: "no data rows".into(),
        });
    }
    let data = ObservedDataset::new(DMatrix::from_row_slice(n, k, &values), mask)?;
    Ok(ResponseTable { items, data })
}

pub fn read_responses(path: &Path) -> Result<ResponseTable> {
    parse_responses(std::fs::File::open(path)?)
}

pub fn write_responses<W: Write>(writer: W, items: &[String], data: &ObservedDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(items)?;
    for i in 0..data.n() {
        let row: Vec<String> = (0..data.k())
            .map(|j| data.get(i, j).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Default item names `x1, .., xK`.
pub fn default_item_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationFile {
    pub items: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_literal: Option<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub undefined_items: Vec<usize>,
    pub warnings: Vec<String>,
}

impl EstimationFile {
    pub fn new(items: Vec<String>, est: &EstimationResult) -> Self {
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        Self {
            items,
            mu: vec(&est.mu_hat),
            sigma: rows_of(&est.sigma_hat),
            lambda: est.lambda_hat.as_ref().map(vec),
            eta: est.eta_hat.as_ref().map(vec),
            eta_literal: est.eta_hat_literal.as_ref().map(vec),
            loglik: est.loglik(),
            iterations: est.iterations,
            converged: est.converged,
            undefined_items: est.undefined_items.clone(),
            warnings: est.warnings.clone(),
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per design: `label, design, n, mse, mse_total, re_mse, se_re, criterion, re_a`.
pub fn write_study_csv<W: Write>(writer: W, results: &[StudyResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label", "design", "n", "mse", "mse_total", "re_mse", "se_re", "criterion", "re_a"])?;
    for r in results {
        for d in &r.designs {
            w.write_record([
                r.label.clone(),
                d.design.name().to_string(),
                d.n.to_string(),
                d.mse.to_string(),
                d.mse_total.to_string(),
                opt(d.re_mse),
                opt(d.se_re),
                opt(d.criterion),
                opt(d.re_a),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
