//! Sum-of-squares decomposition, ANOVA tables, F-tests and variance
//! components.
//!
//! | factor | S | φ | E[V] |
//! |---|---|---|---|
//! | intercepts A | `n Σ α_i²` | m − 1 | `n σ²_A + σ²_E` |
//! | slopes B | `S_xxL Σ β_i²` | m − 1 | `S_xxL σ²_B + σ²_E` |
//! | between labs L | `S_A + S_B` | 2(m − 1) | `(n/2) σ²_L + σ²_E` |
//! | regression R | `S_xyT² / S_xxT` | 1 | `b0² S_xxT + S_xxL σ²_B + σ²_E` |
//! | residual E | `Σ Σ ε_ij²` | mn − 2m | `σ²_E` |
//! | total T | `Σ Σ (Y_ij − Ȳ)²` | mn − 1 | |
//!
//! Variance components follow by the method of moments:
//! `σ̂²_r = V_E`, `σ̂²_L = (2/n)(V_L − V_E)`, `σ̂²_A = (V_A − V_E)/n`,
//! `σ̂²_B = (V_B − V_E)/S_xxL`, and the reproducibility variance is
//! `σ̂²_L + σ̂²_r`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdist::{self, FParams};
use crate::ingest::Dataset;
use crate::model::{Design, LabEffects, OverallFit};
use crate::numeric;

/// Relative tolerance of the decomposition identities.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumsOfSquares {
    pub total: f64,
    pub error: f64,
    pub lab: f64,
    pub regression: f64,
    pub intercept: f64,
    pub slope: f64,
    pub m: usize,
    pub n: usize,
}

impl SumsOfSquares {
    pub fn df(&self, factor: Factor) -> usize {
        let (m, n) = (self.m, self.n);
        match factor {
            Factor::Intercept | Factor::Slope => m - 1,
            Factor::Lab => 2 * (m - 1),
            Factor::Regression => 1,
            Factor::Error => m * n - 2 * m,
            Factor::Total => m * n - 1,
        }
    }

    pub fn ss(&self, factor: Factor) -> f64 {
        match factor {
            Factor::Intercept => self.intercept,
            Factor::Slope => self.slope,
            Factor::Lab => self.lab,
            Factor::Regression => self.regression,
            Factor::Error => self.error,
            Factor::Total => self.total,
        }
    }

    /// `V = S / φ`; not defined for the total row.
    pub fn mean_square(&self, factor: Factor) -> Option<f64> {
        match factor {
            Factor::Total => None,
            f => Some(self.ss(f) / self.df(f) as f64),
        }
    }

    /// Largest relative violation of `S_T = S_E + S_L + S_R` and
    /// `S_L = S_A + S_B`.
    pub fn identity_residual(&self) -> f64 {
        let rel = |lhs: f64, rhs: f64| {
            let scale = lhs.abs().max(rhs.abs());
            if scale == 0.0 {
                0.0
            } else {
                (lhs - rhs).abs() / scale
            }
        };
        rel(self.total, self.error + self.lab + self.regression)
            .max(rel(self.lab, self.intercept + self.slope))
    }
}

/// Computes every sum of squares of the decomposition.
///
/// `S_T` and `S_E` are summed directly from the data, the others from the
/// fitted effects, so the identity `S_T = S_E + S_L + S_R` is a genuine check.
pub fn sums_of_squares(
    data: &Dataset,
    design: &Design,
    overall: &OverallFit,
    effects: &LabEffects,
) -> SumsOfSquares {
    let total = numeric::sum(
        data.y()
            .iter()
            .flat_map(|row| row.iter().map(|y| (y - overall.a0_hat).powi(2))),
    );
    let error = numeric::sum(effects.residuals.iter().flatten().map(|e| e * e));
    let regression = overall.sxy_total * overall.sxy_total / design.sxx_total();
    let intercept = design.n() as f64 * numeric::sum(effects.alpha.iter().map(|a| a * a));
    let slope = design.sxx_lab() * numeric::sum(effects.beta.iter().map(|b| b * b));
    SumsOfSquares {
        total,
        error,
        lab: intercept + slope,
        regression,
        intercept,
        slope,
        m: data.m(),
        n: data.n(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Intercept,
    Slope,
    Lab,
    Regression,
    Error,
    Total,
}

impl Factor {
    pub fn symbol(self) -> &'static str {
        match self {
            Factor::Intercept => "A",
            Factor::Slope => "B",
            Factor::Lab => "L",
            Factor::Regression => "R",
            Factor::Error => "E",
            Factor::Total => "T",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Factor::Intercept => "Intercept",
            Factor::Slope => "Slope",
            Factor::Lab => "Between-laboratory",
            Factor::Regression => "Regression",
            Factor::Error => "Residual",
            Factor::Total => "Total",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub factor: Factor,
    pub ss: f64,
    pub df: usize,
    pub mean_square: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// `H0: b0 = 0`, statistic `V_R / V_B ~ F(1, m − 1)`.
    Regression,
    /// `H0: σ²_A = 0`, statistic `V_A / V_E ~ F(m − 1, mn − 2m)`.
    Intercepts,
    /// `H0: σ²_B = 0`, statistic `V_B / V_E ~ F(m − 1, mn − 2m)`.
    Slopes,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Regression, TestKind::Intercepts, TestKind::Slopes];

    fn numerator(self) -> Factor {
        match self {
            TestKind::Regression => Factor::Regression,
            TestKind::Intercepts => Factor::Intercept,
            TestKind::Slopes => Factor::Slope,
        }
    }

    fn denominator(self) -> Factor {
        match self {
            TestKind::Regression => Factor::Slope,
            TestKind::Intercepts | TestKind::Slopes => Factor::Error,
        }
    }

    /// The table row the statistic is printed on.
    pub fn factor(self) -> Factor {
        self.numerator()
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Regression => "regression",
            TestKind::Intercepts => "intercepts",
            TestKind::Slopes => "slopes",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub kind: TestKind,
    pub f0: f64,
    pub df1: usize,
    pub df2: usize,
    /// Upper-tail probability `P(F > f0)`.
    pub p_value: f64,
    pub significant: bool,
}

/// A test outcome as stored in a table: degenerate data leaves a test
/// undefined instead of producing NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TestOutcome {
    Defined(FTest),
    Undefined { kind: TestKind, reason: String },
}

impl TestOutcome {
    pub fn kind(&self) -> TestKind {
        match self {
            TestOutcome::Defined(t) => t.kind,
            TestOutcome::Undefined { kind, .. } => *kind,
        }
    }

    pub fn test(&self) -> Option<&FTest> {
        match self {
            TestOutcome::Defined(t) => Some(t),
            TestOutcome::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub rows: Vec<AnovaRow>,
    pub tests: Vec<TestOutcome>,
    pub alpha: Option<f64>,
}

impl AnovaTable {
    pub fn row(&self, factor: Factor) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.factor == factor)
    }

    pub fn test(&self, kind: TestKind) -> Option<&TestOutcome> {
        self.tests.iter().find(|t| t.kind() == kind)
    }
}

fn rows(ss: &SumsOfSquares, factors: &[Factor]) -> Vec<AnovaRow> {
    factors
        .iter()
        .map(|&factor| AnovaRow {
            factor,
            ss: ss.ss(factor),
            df: ss.df(factor),
            mean_square: ss.mean_square(factor),
        })
        .collect()
}

/// Rows L, R, E, T.
pub fn basic_table(ss: &SumsOfSquares) -> AnovaTable {
    AnovaTable {
        rows: rows(
            ss,
            &[Factor::Lab, Factor::Regression, Factor::Error, Factor::Total],
        ),
        tests: Vec::new(),
        alpha: None,
    }
}

/// Rows A, B, R, E, T with the three F-tests attached.
pub fn detailed_table(ss: &SumsOfSquares, alpha: f64) -> Result<AnovaTable> {
    check_alpha(alpha)?;
    let tests = TestKind::ALL
        .iter()
        .map(|&kind| match run_f_test(ss, kind, alpha) {
            Ok(t) => TestOutcome::Defined(t),
            Err(e) => TestOutcome::Undefined {
                kind,
                reason: e.to_string(),
            },
        })
        .collect();
    Ok(AnovaTable {
        rows: rows(
            ss,
            &[
                Factor::Intercept,
                Factor::Slope,
                Factor::Regression,
                Factor::Error,
                Factor::Total,
            ],
        ),
        tests,
        alpha: Some(alpha),
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "significance level {alpha} is outside (0, 1)"
        )))
    }
}

pub fn run_f_test(ss: &SumsOfSquares, kind: TestKind, alpha: f64) -> Result<FTest> {
    check_alpha(alpha)?;
    let (num, den) = (kind.numerator(), kind.denominator());
    let v_num = ss.mean_square(num).unwrap_or(f64::NAN);
    let v_den = ss.mean_square(den).unwrap_or(f64::NAN);
    if !(v_den > 0.0) {
        return Err(Error::UndefinedTest {
            kind,
            denominator: match den {
                Factor::Slope => "V_B",
                _ => "V_E",
            },
        });
    }
    let (df1, df2) = (ss.df(num), ss.df(den));
    let f0 = v_num / v_den;
    let p_value = fdist::f_sf(f0, &FParams::new(df1 as f64, df2 as f64)?);
    Ok(FTest {
        kind,
        f0,
        df1,
        df2,
        p_value,
        significant: p_value < alpha,
    })
}

/// Regression, intercept and slope tests, in that order.
pub fn run_f_tests(ss: &SumsOfSquares, alpha: f64) -> Result<[FTest; 3]> {
    Ok([
        run_f_test(ss, TestKind::Regression, alpha)?,
        run_f_test(ss, TestKind::Intercepts, alpha)?,
        run_f_test(ss, TestKind::Slopes, alpha)?,
    ])
}

/// A moment estimate that may come out negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub raw: f64,
    /// `max(raw, 0)`.
    pub truncated: f64,
    pub negative: bool,
}

impl Component {
    pub fn new(raw: f64) -> Self {
        Self {
            raw,
            truncated: raw.max(0.0),
            negative: raw < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// Repeatability variance `σ̂²_r = V_E`.
    pub repeatability: f64,
    pub intercept: Component,
    pub slope: Component,
    /// Design-averaged between-laboratory variance `σ̂²_L`.
    pub between_lab: Component,
    /// `σ̂²_R = max(σ̂²_L, 0) + σ̂²_r`.
    pub reproducibility: f64,
}

impl VarianceComponents {
    /// Dose-specific between-laboratory variance from the truncated
    /// intercept and slope components.
    pub fn tau2(&self, x: f64) -> f64 {
        self.intercept.truncated + x * x * self.slope.truncated
    }
}

pub fn variance_components(ss: &SumsOfSquares, design: &Design) -> VarianceComponents {
    let v = |f| ss.mean_square(f).unwrap_or(f64::NAN);
    let (v_a, v_b, v_l, v_e) = (v(Factor::Intercept), v(Factor::Slope), v(Factor::Lab), v(Factor::Error));
    let n = ss.n as f64;
    let between_lab = Component::new(2.0 / n * (v_l - v_e));
    VarianceComponents {
        repeatability: v_e,
        intercept: Component::new((v_a - v_e) / n),
        slope: Component::new((v_b - v_e) / design.sxx_lab()),
        between_lab,
        reproducibility: between_lab.truncated + v_e,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub x: f64,
    pub tau2: f64,
}

/// `τ̂²_L(x) = σ̂²_A + x² σ̂²_B` evaluated at a list of doses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionProfile {
    pub points: Vec<ProfilePoint>,
}

/// Evaluates the profile at `query_x`, or at the distinct design points when
/// `query_x` is empty. Uses the zero-truncated components.
pub fn precision_profile(
    vc: &VarianceComponents,
    design: &Design,
    query_x: &[f64],
) -> PrecisionProfile {
    let xs: Vec<f64> = if query_x.is_empty() {
        design.levels().into_iter().map(|(x, _)| x).collect()
    } else {
        query_x.to_vec()
    };
    PrecisionProfile {
        points: xs
            .into_iter()
            .map(|x| ProfilePoint { x, tau2: vc.tau2(x) })
            .collect(),
    }
}

/// Replication-weighted mean of `τ̂²_L` over the design vector. Equals the
/// between-lab estimate whenever neither component was truncated.
pub fn design_average(vc: &VarianceComponents, design: &Design) -> f64 {
    numeric::mean(&design.x().iter().map(|&x| vc.tau2(x)).collect::<Vec<_>>())
}
