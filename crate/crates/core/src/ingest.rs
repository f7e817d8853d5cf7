//! Study file ingestion.
//!
//! Input is a UTF-8 CSV with the header `lab,dose,response` (column order is
//! free, names are matched case-insensitively). Doses are design values: a
//! control group must already be encoded as a positive dose if a log10 dose
//! transform is requested.
//!
//! The pipeline is [`parse_csv`] -> [`apply_transforms`] -> [`validate_balanced`],
//! producing a [`Dataset`] whose labs share one sorted, centered dose vector.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// Absolute tolerance when matching doses across labs.
pub const DOSE_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance on the mean of the design vector.
pub const CENTERING_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub lab: String,
    pub dose: f64,
    pub response: f64,
    /// 1-based line in the source file.
    pub line: u64,
}

/// Rows of a study file in file order, before any transform.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub source_name: String,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    pub fn lab_count(&self) -> usize {
        let mut seen: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !seen.contains(&row.lab.as_str()) {
                seen.push(&row.lab);
            }
        }
        seen.len()
    }

    pub fn distinct_doses(&self) -> Vec<f64> {
        let mut doses: Vec<f64> = self.rows.iter().map(|r| r.dose).collect();
        doses.sort_by(f64::total_cmp);
        doses.dedup();
        doses
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DoseTransform {
    Log10,
    #[default]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTransform {
    NaturalLog,
    Log10,
    #[default]
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub dose_transform: DoseTransform,
    pub center_doses: bool,
    pub response_transform: ResponseTransform,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            dose_transform: DoseTransform::Identity,
            center_doses: true,
            response_transform: ResponseTransform::Identity,
        }
    }
}

impl TransformSpec {
    /// No transform and no centering.
    pub fn identity() -> Self {
        Self {
            dose_transform: DoseTransform::Identity,
            center_doses: false,
            response_transform: ResponseTransform::Identity,
        }
    }
}

/// Balanced interlaboratory data: `m` labs, each measured at the same sorted
/// design vector `x` of length `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    labs: Vec<String>,
    x: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from a shared dose vector and one response row per
    /// lab (`y[i][j]` pairs with `x[j]`). Rows are reordered so that `x` is
    /// sorted ascending.
    pub fn new(labs: Vec<String>, x: Vec<f64>, y: Vec<Vec<f64>>) -> Result<Self, BalanceReport> {
        let candidate = DatasetCandidate {
            labs: labs
                .into_iter()
                .zip(y)
                .map(|(lab, responses)| LabObservations {
                    lab,
                    observations: x.iter().copied().zip(responses).collect(),
                })
                .collect(),
        };
        validate_balanced(candidate)
    }

    pub fn labs(&self) -> &[String] {
        &self.labs
    }

    /// Design vector shared by every lab.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Responses, one row per lab.
    pub fn y(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn m(&self) -> usize {
        self.labs.len()
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Returns a copy with every response mapped through `f`.
    pub fn map_responses(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            labs: self.labs.clone(),
            x: self.x.clone(),
            y: self.y.iter().map(|row| row.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    /// Returns a copy with every dose multiplied by `k`. A nonzero `k` keeps
    /// the design centered; a negative one reverses the dose order, so the
    /// rows are re-sorted.
    pub fn scale_doses(&self, k: f64) -> Result<Self, BalanceReport> {
        Self::new(
            self.labs.clone(),
            self.x.iter().map(|&v| v * k).collect(),
            self.y.clone(),
        )
    }
}

/// Observations of one lab before balance validation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabObservations {
    pub lab: String,
    /// `(x, y)` pairs.
    pub observations: Vec<(f64, f64)>,
}

/// Grouped but unvalidated data.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCandidate {
    pub labs: Vec<LabObservations>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewLabs { found: usize },
    TooFewObservations { n: usize },
    UnequalReplication { lab: String, count: usize, expected: usize },
    DoseMismatch { lab: String, missing: Vec<f64>, extra: Vec<f64> },
    NotCentered { mean: f64 },
    SingleDose,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewLabs { found } => {
                write!(f, "need at least 2 laboratories, found {found}")
            }
            Violation::TooFewObservations { n } => {
                write!(f, "need at least 3 observations per laboratory, found {n}")
            }
            Violation::UnequalReplication { lab, count, expected } => write!(
                f,
                "lab `{lab}` has {count} observations, others have {expected}"
            ),
            Violation::DoseMismatch { lab, missing, extra } => {
                write!(f, "lab `{lab}` dose levels differ from the common design")?;
                if !missing.is_empty() {
                    write!(f, "; missing {missing:?}")?;
                }
                if !extra.is_empty() {
                    write!(f, "; extra {extra:?}")?;
                }
                Ok(())
            }
            Violation::NotCentered { mean } => write!(
                f,
                "dose vector is not centered: mean {mean:e} exceeds tolerance {CENTERING_TOLERANCE:e}"
            ),
            Violation::SingleDose => write!(f, "the design has a single distinct dose"),
        }
    }
}

/// Every way a candidate fails the balanced-design requirements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unbalanced design ({} violation(s))", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for BalanceReport {}

/// Reads a study file from disk.
pub fn parse_csv(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv_reader(file, &path.display().to_string())
}

/// Reads study rows from any reader; `source_name` labels diagnostics.
pub fn parse_csv_reader<R: Read>(reader: R, source_name: &str) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| csv_error(source_name, e))?.clone();
    let column = |name: &'static str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(Error::MissingColumn {
                source_name: source_name.to_string(),
                column: name,
            })
    };
    let lab_col = column("lab")?;
    let dose_col = column("dose")?;
    let response_col = column("response")?;

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source_name, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let field = |idx: usize, name: &str| {
            record
                .get(idx)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Parse {
                    source_name: source_name.to_string(),
                    line,
                    message: format!("missing {name} value"),
                })
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let text = field(idx, name)?;
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line,
                    message: format!("{name} `{text}` is not a finite number"),
                }),
            }
        };
        let lab = field(lab_col, "lab")?.to_string();
        let dose = number(dose_col, "dose")?;
        if dose < 0.0 {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line,
                message: format!("dose {dose} is negative"),
            });
        }
        let response = number(response_col, "response")?;
        rows.push(RawRow {
            lab,
            dose,
            response,
            line,
        });
    }

    let table = RawTable {
        source_name: source_name.to_string(),
        rows,
    };
    let insufficient = |message: String| Error::InsufficientData {
        source_name: source_name.to_string(),
        message,
    };
    let labs = table.lab_count();
    if labs < 2 {
        return Err(insufficient(format!(
            "need at least 2 distinct labs, found {labs}"
        )));
    }
    let doses = table.distinct_doses().len();
    if doses < 2 {
        return Err(insufficient(format!(
            "need at least 2 distinct doses, found {doses}"
        )));
    }
    Ok(table)
}

fn csv_error(source_name: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: e.to_string(),
    }
}

/// Transforms doses and responses, groups rows by lab (order of first
/// appearance), optionally centers the design and validates balance.
pub fn apply_transforms(raw: &RawTable, spec: &TransformSpec) -> Result<Dataset> {
    let non_positive = |row: &RawRow, what: &'static str, value: f64| Error::NonPositive {
        source_name: raw.source_name.clone(),
        line: row.line,
        what,
        value,
    };

    let mut groups: Vec<LabObservations> = Vec::new();
    for row in &raw.rows {
        let x = match spec.dose_transform {
            DoseTransform::Identity => row.dose,
            DoseTransform::Log10 if row.dose > 0.0 => row.dose.log10(),
            DoseTransform::Log10 => return Err(non_positive(row, "dose", row.dose)),
        };
        let y = match spec.response_transform {
            ResponseTransform::Identity => row.response,
            ResponseTransform::NaturalLog if row.response > 0.0 => row.response.ln(),
            ResponseTransform::Log10 if row.response > 0.0 => row.response.log10(),
            _ => return Err(non_positive(row, "response", row.response)),
        };
        match groups.iter_mut().find(|g| g.lab == row.lab) {
            Some(group) => group.observations.push((x, y)),
            None => groups.push(LabObservations {
                lab: row.lab.clone(),
                observations: vec![(x, y)],
            }),
        }
    }

    if spec.center_doses {
        if let Some(reference) = groups.first() {
            let design: Vec<f64> = reference.observations.iter().map(|&(x, _)| x).collect();
            let shift = numeric::mean(&design);
            for group in &mut groups {
                for obs in &mut group.observations {
                    obs.0 -= shift;
                }
            }
        }
    }

    Ok(validate_balanced(DatasetCandidate { labs: groups })?)
}

/// Checks every balanced-design requirement and returns either a [`Dataset`]
/// or the full list of violations.
pub fn validate_balanced(candidate: DatasetCandidate) -> Result<Dataset, BalanceReport> {
    let mut labs = candidate.labs;
    let mut violations = Vec::new();

    if labs.len() < 2 {
        violations.push(Violation::TooFewLabs { found: labs.len() });
    }

    for lab in &mut labs {
        lab.observations.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    // Reference lab: the first one with the most common observation count.
    let counts: Vec<usize> = labs.iter().map(|l| l.observations.len()).collect();
    let modal = counts
        .iter()
        .copied()
        .max_by_key(|c| (counts.iter().filter(|d| *d == c).count(), *c))
        .unwrap_or(0);
    let reference_idx = counts.iter().position(|&c| c == modal).unwrap_or(0);

    if modal < 3 && !labs.is_empty() {
        violations.push(Violation::TooFewObservations { n: modal });
    }

    let reference: Vec<f64> = labs
        .get(reference_idx)
        .map(|l| l.observations.iter().map(|&(x, _)| x).collect())
        .unwrap_or_default();

    for lab in &labs {
        let xs: Vec<f64> = lab.observations.iter().map(|&(x, _)| x).collect();
        if xs.len() != reference.len() {
            violations.push(Violation::UnequalReplication {
                lab: lab.lab.clone(),
                count: xs.len(),
                expected: reference.len(),
            });
        }
        let (missing, extra) = multiset_difference(&reference, &xs);
        if !missing.is_empty() || !extra.is_empty() {
            violations.push(Violation::DoseMismatch {
                lab: lab.lab.clone(),
                missing,
                extra,
            });
        }
    }

    if !reference.is_empty() {
        let mean = numeric::mean(&reference);
        if !mean.is_finite() || mean.abs() > CENTERING_TOLERANCE {
            violations.push(Violation::NotCentered { mean });
        }
        let spread = reference
            .iter()
            .any(|&x| (x - reference[0]).abs() > DOSE_TOLERANCE);
        if !spread {
            violations.push(Violation::SingleDose);
        }
    }

    if !violations.is_empty() {
        return Err(BalanceReport { violations });
    }

    Ok(Dataset {
        labs: labs.iter().map(|l| l.lab.clone()).collect(),
        x: reference,
        y: labs
            .into_iter()
            .map(|l| l.observations.into_iter().map(|(_, y)| y).collect())
            .collect(),
    })
}

/// Sorted-multiset difference with [`DOSE_TOLERANCE`]: values of `reference`
/// not matched in `other`, and values of `other` not matched in `reference`.
fn multiset_difference(reference: &[f64], other: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (mut i, mut j) = (0, 0);
    let (mut missing, mut extra) = (Vec::new(), Vec::new());
    while i < reference.len() && j < other.len() {
        let (a, b) = (reference[i], other[j]);
        if (a - b).abs() <= DOSE_TOLERANCE {
            i += 1;
            j += 1;
        } else if a < b {
            missing.push(a);
            i += 1;
        } else {
            extra.push(b);
            j += 1;
        }
    }
    missing.extend_from_slice(&reference[i..]);
    extra.extend_from_slice(&other[j..]);
    (missing, extra)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> RawTable {
        parse_csv_reader(text.as_bytes(), "test.csv").unwrap()
    }

    fn grid_csv(labs: &[&str], doses: &[f64], reps: usize) -> String {
        let mut s = String::from("lab,dose,response\n");
        for (li, lab) in labs.iter().enumerate() {
            for (di, d) in doses.iter().enumerate() {
                for r in 0..reps {
                    s.push_str(&format!("{lab},{d},{}\n", 10.0 + li as f64 + di as f64 + r as f64 * 0.1));
                }
            }
        }
        s
    }

    #[test]
    fn parses_minimal_file() {
        let t = table("lab,dose,response\nA,1,49\nB,1,46\nA,2,50\n");
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[0], RawRow { lab: "A".into(), dose: 1.0, response: 49.0, line: 2 });
        assert_eq!(t.rows[1].lab, "B");
    }

    #[test]
    fn two_row_file_rejected_for_single_dose() {
        let err = parse_csv_reader("lab,dose,response\nA,1,49\nB,1,46\n".as_bytes(), "t.csv")
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { .. }));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_csv_reader(
            "lab,dose,response\nA,1,49\nB,1,abc\n".as_bytes(),
            "bad.csv",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, ref message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().starts_with("bad.csv:3:"));
    }

    #[test]
    fn missing_column_reported() {
        let err = parse_csv_reader("lab,dose,value\nA,1,2\n".as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, Error::MissingColumn { column: "response", .. }));
    }

    #[test]
    fn missing_field_reported() {
        let err = parse_csv_reader("lab,dose,response\nA,1\n".as_bytes(), "t.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn quoted_lab_names_and_column_order() {
        let t = table("response,Lab,dose\n1.5,\"Lab, North\",0\n2.5,South,1\n");
        assert_eq!(t.rows[0].lab, "Lab, North");
        assert_eq!(t.rows[1].dose, 1.0);
        assert_eq!(t.rows[1].response, 2.5);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = parse_csv(Path::new("/definitely/not/here.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn log_dose_grid_centers_to_quarter_steps() {
        let doses = [1.0, 1.0 / 10f64.sqrt(), 0.1, 0.1 / 10f64.sqrt()];
        let raw = table(&grid_csv(&["A", "B"], &doses, 2));
        let spec = TransformSpec {
            dose_transform: DoseTransform::Log10,
            center_doses: true,
            response_transform: ResponseTransform::Identity,
        };
        let data = apply_transforms(&raw, &spec).unwrap();
        let expected = [-0.75, -0.75, -0.25, -0.25, 0.25, 0.25, 0.75, 0.75];
        for (x, e) in data.x().iter().zip(expected) {
            assert!((x - e).abs() < 1e-12, "{x} vs {e}");
        }
    }

    #[test]
    fn identity_transform_keeps_centered_doses() {
        let raw = table("lab,dose,response\nA,0,1\nA,2,2\nA,1,3\nB,0,4\nB,2,5\nB,1,6\n");
        // Doses {0,1,2} centered → {-1,0,1}.
        let data = apply_transforms(&raw, &TransformSpec::default()).unwrap();
        assert_eq!(data.x(), &[-1.0, 0.0, 1.0]);
        assert_eq!(data.y()[0], vec![1.0, 3.0, 2.0]);
    }

    #[test]
    fn natural_log_of_powers_of_e() {
        let e = std::f64::consts::E;
        let csv = format!("lab,dose,response\nA,0,{e}\nA,1,{}\nA,2,{e}\nB,0,{e}\nB,1,{}\nB,2,{e}\n", e * e, e * e);
        let spec = TransformSpec {
            response_transform: ResponseTransform::NaturalLog,
            ..TransformSpec::default()
        };
        let data = apply_transforms(&table(&csv), &spec).unwrap();
        assert!((data.y()[0][0] - 1.0).abs() < 1e-15);
        assert!((data.y()[0][1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_under_log_is_rejected() {
        let raw = table("lab,dose,response\nA,0,1\nA,1,2\nA,2,3\nB,0,0\nB,1,2\nB,2,3\n");
        let spec = TransformSpec {
            response_transform: ResponseTransform::Log10,
            ..TransformSpec::default()
        };
        let err = apply_transforms(&raw, &spec).unwrap_err();
        assert!(matches!(err, Error::NonPositive { line: 5, what: "response", .. }));

        let spec = TransformSpec {
            dose_transform: DoseTransform::Log10,
            ..TransformSpec::default()
        };
        let err = apply_transforms(&raw, &spec).unwrap_err();
        assert!(matches!(err, Error::NonPositive { line: 2, what: "dose", .. }));
    }

    #[test]
    fn deleted_row_reports_unequal_replication() {
        let csv = grid_csv(&["A", "B", "C"], &[0.0, 1.0, 2.0], 2);
        let mut lines: Vec<&str> = csv.lines().collect();
        lines.remove(8); // a row of lab B
        let raw = table(&lines.join("\n"));
        let err = apply_transforms(&raw, &TransformSpec::default()).unwrap_err();
        let Error::Unbalanced(report) = err else { panic!("expected balance report") };
        assert!(report.violations.contains(&Violation::UnequalReplication {
            lab: "B".into(),
            count: 5,
            expected: 6
        }));
    }

    #[test]
    fn uncentered_design_without_centering_is_reported() {
        let candidate = DatasetCandidate {
            labs: ["A", "B"]
                .iter()
                .map(|lab| LabObservations {
                    lab: lab.to_string(),
                    observations: vec![(0.1, 1.0), (0.2, 2.0), (0.1, 1.5), (0.2, 2.5)],
                })
                .collect(),
        };
        let report = validate_balanced(candidate).unwrap_err();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::NotCentered { mean } if (mean - 0.15).abs() < 1e-12));
    }

    #[test]
    fn mismatched_doses_listed() {
        let candidate = DatasetCandidate {
            labs: vec![
                LabObservations { lab: "A".into(), observations: vec![(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)] },
                LabObservations { lab: "B".into(), observations: vec![(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)] },
                LabObservations { lab: "C".into(), observations: vec![(-1.0, 0.0), (0.5, 0.0), (1.0, 0.0)] },
            ],
        };
        let report = validate_balanced(candidate).unwrap_err();
        assert_eq!(
            report.violations,
            vec![Violation::DoseMismatch { lab: "C".into(), missing: vec![0.0], extra: vec![0.5] }]
        );
    }

    #[test]
    fn single_lab_and_single_dose_reported_together() {
        let candidate = DatasetCandidate {
            labs: vec![LabObservations { lab: "A".into(), observations: vec![(0.0, 1.0); 4] }],
        };
        let report = validate_balanced(candidate).unwrap_err();
        assert!(report.violations.contains(&Violation::TooFewLabs { found: 1 }));
        assert!(report.violations.contains(&Violation::SingleDose));
    }

    #[test]
    fn rows_are_sorted_by_dose_with_file_order_for_ties() {
        let raw = table("lab,dose,response\nA,2,1\nA,0,2\nA,2,3\nA,0,4\nB,0,5\nB,2,6\nB,0,7\nB,2,8\n");
        let data = apply_transforms(&raw, &TransformSpec::default()).unwrap();
        assert_eq!(data.x(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(data.y()[0], vec![2.0, 4.0, 1.0, 3.0]);
        assert_eq!(data.labs(), &["A".to_string(), "B".to_string()]);
    }
}
