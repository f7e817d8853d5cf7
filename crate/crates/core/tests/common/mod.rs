//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the estimators under test: the per-lab fits are
//! textbook least squares, the sums of squares are summed from their
//! definitions, and the F CDF is a quadrature of the beta density.
#![allow(dead_code)]

use dose_precision::ingest::Dataset;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ordinary least squares line `(intercept at x = 0, slope)` for one lab,
/// without assuming the doses are centered.
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}

/// Residual sum of squares of one lab's own OLS line.
pub fn ols_rss(x: &[f64], y: &[f64]) -> f64 {
    let (a, b) = ols_line(x, y);
    x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum()
}

/// Sums of squares straight from their definitions: pooled line `Ŷ'`,
/// per-lab OLS lines `Ŷ`, grand mean.
#[derive(Debug, Clone, Copy)]
pub struct DirectSums {
    pub total: f64,
    pub error: f64,
    pub lab: f64,
    pub regression: f64,
}

pub fn direct_sums(data: &Dataset) -> DirectSums {
    let x = data.x();
    let all_x: Vec<f64> = data.y().iter().flat_map(|_| x.iter().copied()).collect();
    let all_y: Vec<f64> = data.y().iter().flatten().copied().collect();
    let (a0, b0) = ols_line(&all_x, &all_y);
    let grand = all_y.iter().sum::<f64>() / all_y.len() as f64;

    let mut s = DirectSums { total: 0.0, error: 0.0, lab: 0.0, regression: 0.0 };
    for row in data.y() {
        let (a, b) = ols_line(x, row);
        for (xj, yj) in x.iter().zip(row) {
            let lab_fit = a + b * xj;
            let pooled_fit = a0 + b0 * xj;
            s.total += (yj - grand).powi(2);
            s.error += (yj - lab_fit).powi(2);
            s.lab += (lab_fit - pooled_fit).powi(2);
            s.regression += (pooled_fit - grand).powi(2);
        }
    }
    s
}

/// Adaptive Gauss–Kronrod (7, 15) quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    const XGK: [f64; 8] = [
        0.991_455_371_120_812_6,
        0.949_107_912_342_758_5,
        0.864_864_423_359_769_1,
        0.741_531_185_599_394_4,
        0.586_087_235_467_691_1,
        0.405_845_151_377_397_2,
        0.207_784_955_007_898_5,
        0.0,
    ];
    const WGK: [f64; 8] = [
        0.022_935_322_010_529_22,
        0.063_092_092_629_978_55,
        0.104_790_010_322_250_2,
        0.140_653_259_715_525_9,
        0.169_004_726_639_267_9,
        0.190_350_578_064_785_4,
        0.204_432_940_075_298_9,
        0.209_482_141_084_727_8,
    ];
    const WG: [f64; 4] = [
        0.129_484_966_168_869_7,
        0.279_705_391_489_276_7,
        0.381_830_050_505_118_9,
        0.417_959_183_673_469_4,
    ];

    fn panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kronrod = WGK[7] * fc;
        let mut gauss = WG[3] * fc;
        for k in 0..7 {
            let dx = h * XGK[k];
            let pair = f(c - dx) + f(c + dx);
            kronrod += WGK[k] * pair;
            if k % 2 == 1 {
                gauss += WG[k / 2] * pair;
            }
        }
        (kronrod * h, ((kronrod - gauss) * h).abs())
    }

    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = panel(f, a, b);
        if err <= tol || depth >= 30 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }

    recurse(f, a, b, abs_tol, 0)
}

/// F CDF by quadrature of the beta density after the substitution
/// `u = sin²θ`, which removes the endpoint singularities for half-integer
/// shape parameters. The normalizing constant is integrated the same way,
/// so no gamma function is involved.
pub fn f_cdf_oracle(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let t = d1 * x / (d1 * x + d2);
    let g = move |theta: f64| {
        2.0 * theta.sin().powf(2.0 * a - 1.0) * theta.cos().powf(2.0 * b - 1.0)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta_t = t.sqrt().asin();
    let rough = integrate(&g, 0.0, half_pi, f64::INFINITY);
    let tol = 1e-14 * rough;
    let lower = integrate(&g, 0.0, theta_t, tol);
    let upper = integrate(&g, theta_t, half_pi, tol);
    // Build the result from the smaller side to keep tail precision.
    if lower <= upper {
        lower / (lower + upper)
    } else {
        1.0 - upper / (lower + upper)
    }
}

/// Random balanced dataset with `m` labs and `n` observations per lab.
pub fn random_dataset(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Dataset {
    let levels = (2 + (uniform(rng) * (n as f64 / 2.0 - 1.0)).round() as usize).clamp(2, n);
    let mut positions = vec![0.0];
    for _ in 1..levels {
        let last = *positions.last().unwrap();
        positions.push(last + 0.2 + uniform(rng));
    }
    let mut x: Vec<f64> = (0..n).map(|j| positions[j % levels]).collect();
    let scale = 0.1 + 3.0 * uniform(rng);
    let mean = x.iter().sum::<f64>() / n as f64;
    for v in &mut x {
        *v = (*v - mean) * scale;
    }
    let a0 = 10.0 * (uniform(rng) - 0.5);
    let b0 = 4.0 * (uniform(rng) - 0.5);
    let y = (0..m)
        .map(|_| {
            let a = uniform(rng) - 0.5;
            let b = 0.5 * (uniform(rng) - 0.5);
            x.iter()
                .map(|xj| a0 + a + (b0 + b) * xj + 0.3 * (uniform(rng) - 0.5))
                .collect()
        })
        .collect();
    let labs = (0..m).map(|i| format!("lab{i}")).collect();
    Dataset::new(labs, x, y).expect("generated dataset is balanced")
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs()
}
