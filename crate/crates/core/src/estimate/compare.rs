//! Frame-combination comparison: relative efficiency and percentage
//! deviation against a reference yield.

use std::fmt::Write as _;

use itertools::Itertools;

use super::multi::{mf_estimate, VarianceForm};
use crate::design::SampleDraw;
use crate::error::{invalid, Error, Result};
use crate::frame::{FrameId, Population};
use crate::weights::{compute_weights_with, WeightForm};

/// Haryana government estimate of wheat yield for 1997-98, kg/ha.
pub const HGEWY: f64 = 3660.0;

/// `R.E._k = min(SE) / SE_k`.
pub fn relative_efficiency(se: &[f64]) -> Result<Vec<f64>> {
    if se.is_empty() {
        return Err(invalid("relative efficiency of an empty list"));
    }
    if let Some(bad) = se.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(invalid(format!("standard error {bad} is not positive")));
    }
    let min = se.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(se.iter().map(|s| min / s).collect())
}

/// `(estimate / reference) · 100 − 100`.
pub fn percentage_deviation(estimate: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(invalid(format!(
            "reference yield {reference} is not positive"
        )));
    }
    Ok(estimate / reference * 100.0 - 100.0)
}

/// All nonempty subsets of `frames`, singles first, each in ascending order.
pub fn frame_combinations(frames: &[FrameId]) -> Vec<Vec<FrameId>> {
    let mut sorted = frames.to_vec();
    sorted.sort_unstable();
    (1..=sorted.len())
        .flat_map(|k| sorted.iter().copied().combinations(k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimateOptions {
    pub weight_form: WeightForm,
    pub variance_form: VarianceForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowEstimate {
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub re: Option<f64>,
    pub pd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub frames: Vec<FrameId>,
    pub label: String,
    pub outcome: std::result::Result<RowEstimate, String>,
}

impl ComparisonRow {
    pub fn criteria(&self) -> &'static str {
        match self.frames.len() {
            1 => "Single Frame",
            2 => "Dual Frame",
            _ => "Multiple-Frame",
        }
    }

    pub fn key(&self) -> String {
        self.frames.iter().map(|f| f.to_string()).join("+")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub reference: f64,
    /// Index of the first row with the smallest standard error.
    pub best: Option<usize>,
}

impl ComparisonReport {
    pub fn row(&self, frames: &[FrameId]) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.frames == frames)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("combination,mean,se,re,pd\n");
        for row in &self.rows {
            match &row.outcome {
                Ok(e) => {
                    let re = e.re.map(|v| format!("{v:.15e}")).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{},{:.15e},{:.15e},{},{:.15e}",
                        row.key(),
                        e.mean,
                        e.se,
                        re,
                        e.pd
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "{},,,,", row.key());
                }
            }
        }
        out
    }

    /// Aligned table in the layout of the published multiple-frame comparison.
    pub fn to_text(&self) -> String {
        let header = [
            "Criteria".to_string(),
            "Frame Combinations".to_string(),
            "Average yield (kg/ha)".to_string(),
            "S.E. (kg/ha)".to_string(),
            "R.E.".to_string(),
            "Percentage Deviation".to_string(),
        ];
        let mut lines: Vec<[String; 6]> = vec![header];
        for (i, row) in self.rows.iter().enumerate() {
            let mut cells = [
                row.criteria().to_string(),
                row.label.clone(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ];
            match &row.outcome {
                Ok(e) => {
                    cells[2] = format!("{:.2}", e.mean);
                    cells[3] = format!("{:.3}", e.se);
                    cells[4] = match e.re {
                        Some(re) if self.best == Some(i) => format!("{re:.5}*"),
                        Some(re) => format!("{re:.5}"),
                        None => "-".into(),
                    };
                    cells[5] = format!("{:.5}", e.pd);
                }
                Err(msg) => cells[2] = format!("failed: {msg}"),
            }
            lines.push(cells);
        }
        let widths: Vec<usize> = (0..6)
            .map(|c| {
                lines
                    .iter()
                    .map(|l| l[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for l in &lines {
            let row: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", row.join("  ").trim_end());
        }
        let _ = writeln!(
            out,
            "\nmean and S.E. in kg/ha; percentage deviation against {} kg/ha; * marks the most efficient combination",
            self.reference
        );
        out
    }
}

fn label(population: &Population, frames: &[FrameId]) -> String {
    frames
        .iter()
        .map(|id| {
            population
                .frame(*id)
                .map_or_else(|| id.to_string(), |f| f.label())
        })
        .join(", ")
}

/// Estimates the mean under every nonempty combination of the frames in
/// `sample`. Weights are rebuilt per combination from the frames it holds.
/// A combination whose estimator fails is kept as a failed row.
pub fn compare_combinations(
    sample: &SampleDraw,
    population: &Population,
    reference: f64,
    options: EstimateOptions,
) -> Result<ComparisonReport> {
    percentage_deviation(reference, reference)?;
    let combos = frame_combinations(&sample.frame_ids());
    if combos.is_empty() {
        return Err(Error::InvalidInput("sample holds no frames".into()));
    }
    let mut rows = Vec::with_capacity(combos.len());
    for frames in combos {
        let restricted = sample.restrict(&frames);
        let outcome = compute_weights_with(&restricted, population, options.weight_form)
            .and_then(|w| mf_estimate(&restricted, &w, options.variance_form))
            .and_then(|est| {
                Ok(RowEstimate {
                    mean: est.mean,
                    variance: est.var_est,
                    se: est.se,
                    re: None,
                    pd: percentage_deviation(est.mean, reference)?,
                })
            })
            .map_err(|e| e.to_string());
        rows.push(ComparisonRow {
            label: label(population, &frames),
            frames,
            outcome,
        });
    }

    let ok: Vec<(usize, f64)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.outcome.as_ref().ok().map(|e| (i, e.se)))
        .collect();
    let ses: Vec<f64> = ok.iter().map(|(_, se)| *se).collect();
    let mut best = None;
    if let Ok(re) = relative_efficiency(&ses) {
        for ((i, _), value) in ok.iter().zip(re) {
            if let Ok(e) = rows[*i].outcome.as_mut() {
                e.re = Some(value);
            }
        }
        let min = ses.iter().copied().fold(f64::INFINITY, f64::min);
        best = ok.iter().find(|(_, se)| *se == min).map(|(i, _)| *i);
    }
    Ok(ComparisonReport {
        rows,
        reference,
        best,
    })
}
