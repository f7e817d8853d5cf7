//! Closed-form fit of the random intercept and slope model.
//!
//! Because every lab shares the same centered design vector, the overall line
//! and each lab's deviation from it have explicit forms:
//!
//! ```text
//! â0 = grand mean            b̂0 = S_xyT / S_xxT
//! α_i = Ȳ_i − â0             β_i = S_xyL(i) / S_xxL − b̂0
//! ```
//!
//! All cross products are accumulated lab-major, then in design order, with
//! compensated summation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::numeric;

/// The shared dose design and its sums of squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    x: Vec<f64>,
    m: usize,
    sxx_lab: f64,
    sxx_total: f64,
}

impl Design {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `S_xxL = Σ_j x_j²` over one lab's design vector.
    pub fn sxx_lab(&self) -> f64 {
        self.sxx_lab
    }

    /// `S_xxT = m · S_xxL`.
    pub fn sxx_total(&self) -> f64 {
        self.sxx_total
    }

    /// Distinct design points with their replication counts, ascending.
    pub fn levels(&self) -> Vec<(f64, usize)> {
        let mut sorted = self.x.clone();
        sorted.sort_by(f64::total_cmp);
        let mut levels: Vec<(f64, usize)> = Vec::new();
        for x in sorted {
            match levels.last_mut() {
                Some((v, count)) if (*v - x).abs() <= crate::ingest::DOSE_TOLERANCE => *count += 1,
                _ => levels.push((x, 1)),
            }
        }
        levels
    }
}

/// Design statistics for a centered dose vector shared by `m` labs.
pub fn design_stats(x: &[f64], m: usize) -> Result<Design> {
    if m == 0 {
        return Err(Error::InvalidParameter("lab count must be positive".into()));
    }
    let sxx_lab = numeric::sum(x.iter().map(|v| v * v));
    if !(sxx_lab > 0.0) {
        return Err(Error::DegenerateDesign);
    }
    let sum = numeric::sum(x.iter().copied());
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if sum.abs() > 1e-9 * x.len() as f64 * scale {
        return Err(Error::NotCentered { sum });
    }
    Ok(Design {
        x: x.to_vec(),
        m,
        sxx_lab,
        sxx_total: m as f64 * sxx_lab,
    })
}

/// The overall regression line across all labs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallFit {
    pub a0_hat: f64,
    pub b0_hat: f64,
    /// `S_xyT = Σ_i Σ_j x_j Y_ij`.
    pub sxy_total: f64,
}

pub fn fit_overall(data: &Dataset, design: &Design) -> OverallFit {
    let x = design.x();
    let count = (data.m() * data.n()) as f64;
    let a0_hat = numeric::sum(data.y().iter().flat_map(|row| row.iter().copied())) / count;
    let sxy_total = numeric::sum(
        data.y()
            .iter()
            .flat_map(|row| row.iter().zip(x).map(|(y, x)| x * y)),
    );
    OverallFit {
        a0_hat,
        b0_hat: sxy_total / design.sxx_total(),
        sxy_total,
    }
}

/// Per-lab deviations from the overall line with fitted values and residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEffects {
    /// Intercept deviations `α_i`.
    pub alpha: Vec<f64>,
    /// Slope deviations `β_i`.
    pub beta: Vec<f64>,
    /// `S_xyL(i) = Σ_j x_j Y_ij`.
    pub sxy_lab: Vec<f64>,
    pub fitted: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

impl LabEffects {
    /// Per-lab intercepts `â0 + α_i`.
    pub fn intercepts(&self, overall: &OverallFit) -> Vec<f64> {
        self.alpha.iter().map(|a| overall.a0_hat + a).collect()
    }

    /// Per-lab slopes `b̂0 + β_i`.
    pub fn slopes(&self, overall: &OverallFit) -> Vec<f64> {
        self.beta.iter().map(|b| overall.b0_hat + b).collect()
    }
}

pub fn lab_effects(data: &Dataset, design: &Design, overall: &OverallFit) -> LabEffects {
    let x = design.x();
    let mut alpha = Vec::with_capacity(data.m());
    let mut beta = Vec::with_capacity(data.m());
    let mut sxy_lab = Vec::with_capacity(data.m());
    let mut fitted = Vec::with_capacity(data.m());
    let mut residuals = Vec::with_capacity(data.m());

    for row in data.y() {
        let a = numeric::mean(row) - overall.a0_hat;
        let sxy = numeric::sum(row.iter().zip(x).map(|(y, x)| x * y));
        let b = sxy / design.sxx_lab() - overall.b0_hat;
        let intercept = overall.a0_hat + a;
        let slope = overall.b0_hat + b;
        let fit: Vec<f64> = x.iter().map(|xj| intercept + slope * xj).collect();
        residuals.push(row.iter().zip(&fit).map(|(y, f)| y - f).collect());
        fitted.push(fit);
        alpha.push(a);
        beta.push(b);
        sxy_lab.push(sxy);
    }

    LabEffects {
        alpha,
        beta,
        sxy_lab,
        fitted,
        residuals,
    }
}

/// Design, overall line and lab effects for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub design: Design,
    pub overall: OverallFit,
    pub effects: LabEffects,
}

pub fn fit(data: &Dataset) -> Result<Fit> {
    let design = design_stats(data.x(), data.m())?;
    let overall = fit_overall(data, &design);
    let effects = lab_effects(data, &design, &overall);
    Ok(Fit {
        design,
        overall,
        effects,
    })
}
