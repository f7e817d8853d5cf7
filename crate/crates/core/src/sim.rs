//! Seeded simulation of balanced interlaboratory studies and Monte Carlo
//! checks of the ANOVA theory.
//!
//! Every normal variate is drawn from its own counter-addressed position in a
//! ChaCha8 stream: the stream id is the replicate index, the word offset is
//! derived from the role (`A`, `B` or `E`) and the index within the role. A
//! replicate therefore depends only on `(seed, replicate)`, and replicates can
//! run in any order or in parallel. Uniforms are mapped to normals through the
//! inverse normal CDF.
//!
//! Aggregates are reduced sequentially over per-replicate results collected in
//! replicate order, so results are bit-identical regardless of thread count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::anova::{self, Factor, TestKind};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::model::{self, Design};
use crate::numeric;

/// Default replicate count for test-size and power runs.
pub const CALIBRATION_REPLICATIONS: usize = 10_000;
/// Default replicate count for mean-square and estimator checks.
pub const MEAN_SQUARE_REPLICATIONS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a0: f64,
    pub b0: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub sigma_e: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a0", self.a0), ("b0", self.b0)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("sigma_a", self.sigma_a),
            ("sigma_b", self.sigma_b),
            ("sigma_e", self.sigma_e),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a nonnegative standard deviation, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `σ²_A + (S_xxL / n) σ²_B`.
    pub fn between_lab_variance(&self, design: &Design) -> f64 {
        self.sigma_a.powi(2) + design.sxx_lab() / design.n() as f64 * self.sigma_b.powi(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub design: Design,
    pub params: ModelParams,
    pub replications: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be at least 1".into()));
        }
        if self.design.n() < 3 || self.design.m() < 2 {
            return Err(Error::InvalidParameter(format!(
                "design needs m >= 2 labs and n >= 3 doses, got m = {}, n = {}",
                self.design.m(),
                self.design.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Role {
    Intercept = 0,
    Slope = 1,
    Error = 2,
}

/// Counter-addressed standard normal draws for one replicate.
struct NormalStream {
    rng: ChaCha8Rng,
    normal: Normal,
}

impl NormalStream {
    fn new(seed: u64, replicate: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replicate);
        Self {
            rng,
            normal: Normal::standard(),
        }
    }

    fn draw(&mut self, role: Role, index: u64) -> f64 {
        // Two 32-bit words per variate; roles are 2^60 words apart.
        self.rng
            .set_word_pos(((role as u128) << 60) + 2 * index as u128);
        let bits = self.rng.next_u64() >> 11;
        let u = (bits as f64 + 0.5) / (1u64 << 53) as f64;
        self.normal.inverse_cdf(u)
    }
}

/// Draws one dataset of the model for the given replicate.
pub fn simulate_dataset(cfg: &SimConfig, replicate: u64) -> Result<Dataset> {
    cfg.params.validate()?;
    let design = &cfg.design;
    let p = &cfg.params;
    let (m, n) = (design.m(), design.n());
    let mut stream = NormalStream::new(cfg.seed, replicate);

    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        let a = p.sigma_a * stream.draw(Role::Intercept, i as u64);
        let b = p.sigma_b * stream.draw(Role::Slope, i as u64);
        let row = design
            .x()
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let e = p.sigma_e * stream.draw(Role::Error, (i * n + j) as u64);
                (p.a0 + a) + (p.b0 + b) * x + e
            })
            .collect();
        y.push(row);
    }
    let labs = (1..=m).map(|i| format!("L{i}")).collect();
    Ok(Dataset::new(labs, design.x().to_vec(), y)?)
}

/// Statistics of one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateSummary {
    pub v_a: f64,
    pub v_b: f64,
    pub v_l: f64,
    pub v_r: f64,
    pub v_e: f64,
    pub a0_hat: f64,
    pub b0_hat: f64,
    pub sigma2_r: f64,
    pub sigma2_l_raw: f64,
}

pub fn summarize_replicate(cfg: &SimConfig, replicate: u64) -> Result<ReplicateSummary> {
    let data = simulate_dataset(cfg, replicate)?;
    let fit = model::fit(&data)?;
    let ss = anova::sums_of_squares(&data, &fit.design, &fit.overall, &fit.effects);
    let vc = anova::variance_components(&ss, &fit.design);
    let v = |f| ss.mean_square(f).unwrap_or(f64::NAN);
    Ok(ReplicateSummary {
        v_a: v(Factor::Intercept),
        v_b: v(Factor::Slope),
        v_l: v(Factor::Lab),
        v_r: v(Factor::Regression),
        v_e: v(Factor::Error),
        a0_hat: fit.overall.a0_hat,
        b0_hat: fit.overall.b0_hat,
        sigma2_r: vc.repeatability,
        sigma2_l_raw: vc.between_lab.raw,
    })
}

fn summaries(cfg: &SimConfig) -> Result<Vec<ReplicateSummary>> {
    cfg.validate()?;
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| summarize_replicate(cfg, r))
        .collect()
}

/// Empirical mean of a Monte Carlo quantity against its theoretical value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub name: String,
    pub mean: f64,
    pub standard_error: f64,
    pub expected: f64,
}

impl MonteCarloEstimate {
    fn from_samples(name: &str, samples: &[f64], expected: f64) -> Self {
        let (mean, standard_error) = mean_and_se(samples);
        Self {
            name: name.to_string(),
            mean,
            standard_error,
            expected,
        }
    }

    /// Distance from the expectation in standard errors.
    pub fn z(&self) -> f64 {
        if self.standard_error == 0.0 {
            if self.mean == self.expected {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - self.expected) / self.standard_error
        }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z().abs() <= k || (self.mean - self.expected).abs() <= 1e-12 * self.expected.abs().max(1.0)
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let count = samples.len() as f64;
    let mean = numeric::mean(samples);
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = numeric::sum(samples.iter().map(|v| (v - mean).powi(2))) / (count - 1.0);
    (mean, (var / count).sqrt())
}

/// Expected mean squares of the ANOVA tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMeanSquares {
    pub v_a: f64,
    pub v_b: f64,
    pub v_l: f64,
    pub v_r: f64,
    pub v_e: f64,
}

impl ExpectedMeanSquares {
    pub fn new(design: &Design, p: &ModelParams) -> Self {
        let n = design.n() as f64;
        let s2_a = p.sigma_a.powi(2);
        let s2_b = p.sigma_b.powi(2);
        let s2_e = p.sigma_e.powi(2);
        Self {
            v_a: n * s2_a + s2_e,
            v_b: design.sxx_lab() * s2_b + s2_e,
            v_l: n / 2.0 * p.between_lab_variance(design) + s2_e,
            v_r: p.b0.powi(2) * design.sxx_total() + s2_b * design.sxx_lab() + s2_e,
            v_e: s2_e,
        }
    }
}

/// Empirical mean squares `V_A, V_B, V_L, V_R, V_E` against their expectations.
pub fn monte_carlo_mean_squares(cfg: &SimConfig) -> Result<Vec<MonteCarloEstimate>> {
    if cfg.replications < 100 {
        return Err(Error::InvalidParameter(format!(
            "mean-square validation needs at least 100 replications, got {}",
            cfg.replications
        )));
    }
    let runs = summaries(cfg)?;
    let e = ExpectedMeanSquares::new(&cfg.design, &cfg.params);
    let column = |f: fn(&ReplicateSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Ok(vec![
        MonteCarloEstimate::from_samples("V_A", &column(|s| s.v_a), e.v_a),
        MonteCarloEstimate::from_samples("V_B", &column(|s| s.v_b), e.v_b),
        MonteCarloEstimate::from_samples("V_L", &column(|s| s.v_l), e.v_l),
        MonteCarloEstimate::from_samples("V_R", &column(|s| s.v_r), e.v_r),
        MonteCarloEstimate::from_samples("V_E", &column(|s| s.v_e), e.v_e),
    ])
}

/// Empirical means of `â0`, `b̂0`, `σ̂²_r` and raw `σ̂²_L` against their targets.
pub fn monte_carlo_estimators(cfg: &SimConfig) -> Result<Vec<MonteCarloEstimate>> {
    let runs = summaries(cfg)?;
    let p = &cfg.params;
    let column = |f: fn(&ReplicateSummary) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Ok(vec![
        MonteCarloEstimate::from_samples("a0_hat", &column(|s| s.a0_hat), p.a0),
        MonteCarloEstimate::from_samples("b0_hat", &column(|s| s.b0_hat), p.b0),
        MonteCarloEstimate::from_samples("sigma2_r", &column(|s| s.sigma2_r), p.sigma_e.powi(2)),
        MonteCarloEstimate::from_samples(
            "sigma2_L",
            &column(|s| s.sigma2_l_raw),
            p.between_lab_variance(&cfg.design),
        ),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub kind: TestKind,
    pub alpha: f64,
    pub replications: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Binomial standard error under the null, `√(α(1 − α)/R)`.
    pub standard_error: f64,
}

impl RejectionRate {
    /// Whether the rate lies within `k` null standard errors of `alpha`.
    pub fn calibrated(&self, k: f64) -> bool {
        (self.rate - self.alpha).abs() <= k * self.standard_error
    }
}

/// Fraction of replicates in which `kind` rejects at `alpha`. A replicate
/// whose statistic is undefined counts as not rejecting.
pub fn rejection_rate(cfg: &SimConfig, kind: TestKind, alpha: f64) -> Result<RejectionRate> {
    cfg.validate()?;
    let rejected: Vec<bool> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| -> Result<bool> {
            let data = simulate_dataset(cfg, r)?;
            let fit = model::fit(&data)?;
            let ss = anova::sums_of_squares(&data, &fit.design, &fit.overall, &fit.effects);
            match anova::run_f_test(&ss, kind, alpha) {
                Ok(t) => Ok(t.significant),
                Err(Error::UndefinedTest { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let rejections = rejected.iter().filter(|&&r| r).count();
    let reps = cfg.replications as f64;
    Ok(RejectionRate {
        kind,
        alpha,
        replications: cfg.replications,
        rejections,
        rate: rejections as f64 / reps,
        standard_error: (alpha * (1.0 - alpha) / reps).sqrt(),
    })
}

/// [`rejection_rate`] after checking that the parameters satisfy the null
/// hypothesis of `kind`.
pub fn null_rejection_rate(cfg: &SimConfig, kind: TestKind, alpha: f64) -> Result<RejectionRate> {
    let p = &cfg.params;
    let violation = match kind {
        TestKind::Regression if p.b0 != 0.0 => Some(format!("b0 = {} (must be 0)", p.b0)),
        TestKind::Intercepts if p.sigma_a != 0.0 => {
            Some(format!("sigma_a = {} (must be 0)", p.sigma_a))
        }
        TestKind::Slopes if p.sigma_b != 0.0 => Some(format!("sigma_b = {} (must be 0)", p.sigma_b)),
        _ => None,
    };
    if let Some(reason) = violation {
        return Err(Error::NullViolation { kind, reason });
    }
    rejection_rate(cfg, kind, alpha)
}

/// Rejection rates of `kind` with `sigma_b` set to each grid value in turn.
pub fn slope_power_curve(
    cfg: &SimConfig,
    kind: TestKind,
    alpha: f64,
    sigma_b_grid: &[f64],
) -> Result<Vec<(f64, RejectionRate)>> {
    sigma_b_grid
        .iter()
        .map(|&sigma_b| {
            let mut c = cfg.clone();
            c.params.sigma_b = sigma_b;
            rejection_rate(&c, kind, alpha).map(|r| (sigma_b, r))
        })
        .collect()
}
