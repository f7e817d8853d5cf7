//! Analysis reports: full-precision JSON and rounded text tables.
//!
//! Text rounding rules, applied to the JSON values:
//!
//! - sums of squares, mean squares, F statistics, estimates and variances are
//!   shown with 4 significant figures ([`fmt_sig`]);
//! - p-values are shown with 4 decimals, or in scientific notation with 3
//!   significant figures below `1e-4` ([`fmt_p`]);
//! - doses are shown with 4 significant figures.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anova::{
    self, AnovaTable, PrecisionProfile, SumsOfSquares, TestOutcome, VarianceComponents,
};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, DoseTransform, ResponseTransform, TransformSpec};
use crate::model::{self, Design, OverallFit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub source: String,
    pub labs: Vec<String>,
    pub m: usize,
    pub n: usize,
    /// Transformed, centered design vector shared by every lab.
    pub design_x: Vec<f64>,
    pub sxx_lab: f64,
    pub transforms: TransformSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEstimate {
    pub lab: String,
    pub intercept: f64,
    pub slope: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub study: Study,
    pub overall: OverallFit,
    pub lab_estimates: Vec<LabEstimate>,
    pub sums_of_squares: SumsOfSquares,
    pub basic_table: AnovaTable,
    pub detailed_table: AnovaTable,
    pub variance_components: VarianceComponents,
    pub profile: PrecisionProfile,
    /// Replication-weighted mean of the profile over the design vector.
    pub profile_design_average: f64,
    pub warnings: Vec<String>,
}

impl Report {
    /// Runs the full analysis of a validated dataset.
    pub fn build(
        source: &str,
        data: &Dataset,
        transforms: TransformSpec,
        alpha: f64,
        profile_x: &[f64],
    ) -> Result<Self> {
        let fit = model::fit(data)?;
        let ss = anova::sums_of_squares(data, &fit.design, &fit.overall, &fit.effects);
        let basic_table = anova::basic_table(&ss);
        let detailed_table = anova::detailed_table(&ss, alpha)?;
        let vc = anova::variance_components(&ss, &fit.design);
        let profile = anova::precision_profile(&vc, &fit.design, profile_x);

        let mut warnings = Vec::new();
        for (name, c) in [
            ("sigma2_A", vc.intercept),
            ("sigma2_B", vc.slope),
            ("sigma2_L", vc.between_lab),
        ] {
            if c.negative {
                warnings.push(format!(
                    "{name} estimate is negative ({}); truncated to 0",
                    fmt_sig(c.raw)
                ));
            }
        }
        for t in &detailed_table.tests {
            if let TestOutcome::Undefined { reason, .. } = t {
                warnings.push(reason.clone());
            }
        }
        let residual = ss.identity_residual();
        if residual > anova::IDENTITY_TOLERANCE {
            warnings.push(format!(
                "sum-of-squares decomposition off by {residual:e} (relative)"
            ));
        }

        let lab_estimates = data
            .labs()
            .iter()
            .enumerate()
            .map(|(i, lab)| LabEstimate {
                lab: lab.clone(),
                intercept: fit.overall.a0_hat + fit.effects.alpha[i],
                slope: fit.overall.b0_hat + fit.effects.beta[i],
                alpha: fit.effects.alpha[i],
                beta: fit.effects.beta[i],
            })
            .collect();

        Ok(Self {
            schema: SCHEMA_VERSION,
            study: Study {
                source: source.to_string(),
                labs: data.labs().to_vec(),
                m: data.m(),
                n: data.n(),
                design_x: data.x().to_vec(),
                sxx_lab: fit.design.sxx_lab(),
                transforms,
            },
            overall: fit.overall,
            lab_estimates,
            sums_of_squares: ss,
            basic_table,
            detailed_table,
            profile_design_average: anova::design_average(&vc, &fit.design),
            variance_components: vc,
            profile,
            warnings,
        })
    }

    /// Rebuilds the design the report was computed on.
    pub fn design(&self) -> Result<Design> {
        model::design_stats(&self.study.design_x, self.study.m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let report = Self::from_json(&text).map_err(|e| Error::Report {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if report.schema != SCHEMA_VERSION {
            return Err(Error::Report {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported schema {} (expected {SCHEMA_VERSION})",
                    report.schema
                ),
            });
        }
        Ok(report)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out).expect("writing to a String cannot fail");
        out
    }

    fn write_text(&self, out: &mut String) -> std::fmt::Result {
        let s = &self.study;
        writeln!(out, "Interlaboratory dose-response precision")?;
        writeln!(out, "source: {}", s.source)?;
        writeln!(out, "laboratories (m = {}): {}", s.m, s.labs.join(", "))?;
        writeln!(out, "observations per laboratory (n = {})", s.n)?;
        let levels = self
            .design()
            .map(|d| d.levels())
            .unwrap_or_default()
            .iter()
            .map(|(x, k)| format!("{} (x{k})", fmt_sig(*x)))
            .collect::<Vec<_>>();
        writeln!(out, "design x: {}", levels.join(", "))?;
        writeln!(out, "S_xxL = {}", fmt_sig(s.sxx_lab))?;
        writeln!(out, "transforms: {}", describe_transforms(&s.transforms))?;

        writeln!(out)?;
        writeln!(out, "Per-laboratory lines")?;
        writeln!(out, "{:<12} {:>10} {:>10}", "lab", "intercept", "slope")?;
        for e in &self.lab_estimates {
            writeln!(
                out,
                "{:<12} {:>10} {:>10}",
                e.lab,
                fmt_sig(e.intercept),
                fmt_sig(e.slope)
            )?;
        }
        writeln!(
            out,
            "{:<12} {:>10} {:>10}",
            "overall",
            fmt_sig(self.overall.a0_hat),
            fmt_sig(self.overall.b0_hat)
        )?;

        writeln!(out)?;
        writeln!(out, "Basic ANOVA table")?;
        write_table(out, &self.basic_table)?;

        writeln!(out)?;
        match self.detailed_table.alpha {
            Some(alpha) => writeln!(out, "Detailed ANOVA table (alpha = {alpha})")?,
            None => writeln!(out, "Detailed ANOVA table")?,
        }
        write_table(out, &self.detailed_table)?;
        if let Some(alpha) = self.detailed_table.alpha {
            writeln!(out, "* significant at the {}% level", alpha * 100.0)?;
        }

        let vc = &self.variance_components;
        writeln!(out)?;
        writeln!(out, "Variance components")?;
        writeln!(out, "{:<28} {:>10}", "repeatability sigma2_r", fmt_sig(vc.repeatability))?;
        for (label, c) in [
            ("intercept sigma2_A", vc.intercept),
            ("slope sigma2_B", vc.slope),
            ("between-lab sigma2_L", vc.between_lab),
        ] {
            let flag = if c.negative {
                format!("  (raw {}, truncated)", fmt_sig(c.raw))
            } else {
                String::new()
            };
            writeln!(out, "{:<28} {:>10}{flag}", label, fmt_sig(c.truncated))?;
        }
        writeln!(out, "{:<28} {:>10}", "reproducibility sigma2_R", fmt_sig(vc.reproducibility))?;

        writeln!(out)?;
        writeln!(out, "Precision profile tau2_L(x) = sigma2_A + x^2 sigma2_B")?;
        writeln!(out, "{:>10} {:>10}", "x", "tau2")?;
        for p in &self.profile.points {
            writeln!(out, "{:>10} {:>10}", fmt_sig(p.x), fmt_sig(p.tau2))?;
        }
        writeln!(
            out,
            "design average {} (sigma2_L {})",
            fmt_sig(self.profile_design_average),
            fmt_sig(vc.between_lab.raw)
        )?;

        if !self.warnings.is_empty() {
            writeln!(out)?;
            writeln!(out, "Warnings")?;
            for w in &self.warnings {
                writeln!(out, "- {w}")?;
            }
        }
        Ok(())
    }
}

fn describe_transforms(t: &TransformSpec) -> String {
    let dose = match t.dose_transform {
        DoseTransform::Log10 => "log10",
        DoseTransform::Identity => "none",
    };
    let response = match t.response_transform {
        ResponseTransform::NaturalLog => "ln",
        ResponseTransform::Log10 => "log10",
        ResponseTransform::Identity => "none",
    };
    let center = if t.center_doses { ", centered" } else { "" };
    format!("dose {dose}{center}; response {response}")
}

fn write_table(out: &mut String, table: &AnovaTable) -> std::fmt::Result {
    let with_tests = !table.tests.is_empty();
    write!(out, "{:<24} {:>10} {:>5} {:>10}", "factor", "S", "phi", "V")?;
    if with_tests {
        write!(out, " {:>10} {:>10}", "F0", "p")?;
    }
    writeln!(out)?;
    for row in &table.rows {
        let name = format!("{}: {}", row.factor.label(), row.factor.symbol());
        let v = row.mean_square.map(fmt_sig).unwrap_or_default();
        write!(out, "{:<24} {:>10} {:>5} {:>10}", name, fmt_sig(row.ss), row.df, v)?;
        if with_tests {
            let outcome = table
                .tests
                .iter()
                .find(|t| t.kind().factor() == row.factor);
            let (f0, p) = match outcome {
                Some(TestOutcome::Defined(t)) => {
                    let star = if t.significant { "*" } else { "" };
                    (format!("{}{star}", fmt_sig(t.f0)), fmt_p(t.p_value))
                }
                Some(TestOutcome::Undefined { .. }) => ("undefined".to_string(), String::new()),
                None => (String::new(), String::new()),
            };
            write!(out, " {f0:>10} {p:>10}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Four significant figures; scientific notation outside `[1e-6, 1e7)`.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-6..7).contains(&magnitude) {
        return format!("{v:.3e}");
    }
    let decimals = (3 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// p-value display.
pub fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_figures() {
        assert_eq!(fmt_sig(161.18), "161.2");
        assert_eq!(fmt_sig(109.0), "109.0");
        assert_eq!(fmt_sig(0.11876), "0.1188");
        assert_eq!(fmt_sig(-0.75), "-0.7500");
        assert_eq!(fmt_sig(1234.56), "1235");
        assert_eq!(fmt_sig(5.996), "5.996");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(2.5e-9), "2.500e-9");
    }

    #[test]
    fn p_values() {
        assert_eq!(fmt_p(0.0078), "0.0078");
        assert_eq!(fmt_p(2.3e-49), "2.30e-49");
    }
}
