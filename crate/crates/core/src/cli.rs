//! Command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 validation error,
//! 3 failed simulation check (`simulate --check`).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::anova::{self, TestKind};
use crate::error::{Error, Result};
use crate::ingest::{self, DoseTransform, ResponseTransform, TransformSpec};
use crate::model;
use crate::report::{fmt_sig, Report};
use crate::sim::{self, ModelParams, SimConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_CHECK_FAILED: u8 = 3;

/// Standard errors allowed by `simulate --check`.
const CHECK_SE: f64 = 3.0;

#[derive(Debug, Parser)]
#[command(
    name = "dose-precision",
    version,
    about = "Interlaboratory precision of linear dose-response measurement methods"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze a balanced interlaboratory study file.
    Analyze(AnalyzeArgs),
    /// Run Monte Carlo checks of the ANOVA theory.
    Simulate(SimulateArgs),
    /// Emit the dose-specific between-laboratory variance from a JSON report.
    Profile(ProfileArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResponseArg {
    Ln,
    Log10,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DoseArg {
    Log10,
    None,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV file with header `lab,dose,response`.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub response_transform: ResponseArg,
    #[arg(long, value_enum, default_value = "none")]
    pub dose_transform: DoseArg,
    /// Center the transformed doses (default).
    #[arg(long, overrides_with = "no_center")]
    pub center: bool,
    /// Keep the doses as given; they must already be centered.
    #[arg(long)]
    pub no_center: bool,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Write the full-precision report to this file.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    /// Extra doses (transformed scale) at which to evaluate the precision profile.
    #[arg(long = "profile-x", value_delimiter = ',', allow_hyphen_values = true)]
    pub profile_x: Vec<f64>,
}

impl AnalyzeArgs {
    pub fn transform_spec(&self) -> TransformSpec {
        TransformSpec {
            dose_transform: match self.dose_transform {
                DoseArg::Log10 => DoseTransform::Log10,
                DoseArg::None => DoseTransform::Identity,
            },
            center_doses: !self.no_center,
            response_transform: match self.response_transform {
                ResponseArg::Ln => ResponseTransform::NaturalLog,
                ResponseArg::Log10 => ResponseTransform::Log10,
                ResponseArg::None => ResponseTransform::Identity,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    MeanSquares,
    Size,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestArg {
    Regression,
    Intercepts,
    Slopes,
}

impl From<TestArg> for TestKind {
    fn from(t: TestArg) -> Self {
        match t {
            TestArg::Regression => TestKind::Regression,
            TestArg::Intercepts => TestKind::Intercepts,
            TestArg::Slopes => TestKind::Slopes,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "mean-squares")]
    pub mode: Mode,
    /// Number of laboratories.
    #[arg(long)]
    pub m: usize,
    /// Per-lab design doses (repeatable or comma-separated). Centered before use.
    #[arg(long = "x", value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
    /// File of design doses separated by commas, whitespace or newlines.
    #[arg(long, conflicts_with = "x")]
    pub design_file: Option<PathBuf>,
    /// Repeat each design dose this many times.
    #[arg(long, default_value_t = 1)]
    pub replicate: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub b0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub sigma_a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub sigma_b: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub sigma_e: f64,
    /// Replications (default 20000 for mean-squares, 10000 otherwise).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test for size and power modes.
    #[arg(long, value_enum, default_value = "slopes")]
    pub test: TestArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// sigma_b values for power mode.
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.8")]
    pub sigma_b_grid: Vec<f64>,
    /// Exit with status 3 when a 3-SE check fails.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// JSON report written by `analyze --json`.
    pub report: PathBuf,
    /// Doses at which to evaluate; defaults to the design points.
    #[arg(long = "x", value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Vec<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, out, err),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Profile(a) => cmd_profile(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Parse { .. } | Error::MissingColumn { .. } | Error::Report { .. } => {
            EXIT_IO
        }
        _ => EXIT_VALIDATION,
    }
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: PathBuf::from(path),
        source,
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let spec = args.transform_spec();
    let raw = ingest::parse_csv(&args.input)?;
    let data = ingest::apply_transforms(&raw, &spec)?;
    let report = Report::build(&raw.source_name, &data, spec, args.alpha, &args.profile_x)?;

    write!(out, "{}", report.render_text()).map_err(io_err("<stdout>"))?;
    for w in &report.warnings {
        writeln!(err, "warning: {w}").map_err(io_err("<stderr>"))?;
    }
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json() + "\n").map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(EXIT_OK)
}

fn design_from_args(args: &SimulateArgs) -> Result<Vec<f64>> {
    let base = match &args.design_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            text.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        source_name: path.display().to_string(),
                        line: 0,
                        message: format!("design value `{t}` is not a number"),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => args.x.clone(),
    };
    if base.is_empty() {
        return Err(Error::InvalidParameter(
            "no design doses given (use --x or --design-file)".into(),
        ));
    }
    if args.replicate == 0 {
        return Err(Error::InvalidParameter("--replicate must be at least 1".into()));
    }
    let x: Vec<f64> = base
        .iter()
        .flat_map(|&v| std::iter::repeat_n(v, args.replicate))
        .collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Ok(x.into_iter().map(|v| v - mean).collect())
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<u8> {
    let x = design_from_args(args)?;
    if x.len() < 3 || args.m < 2 {
        return Err(Error::InvalidParameter(format!(
            "need m >= 2 labs and n >= 3 doses per lab, got m = {}, n = {}",
            args.m,
            x.len()
        )));
    }
    let design = model::design_stats(&x, args.m)?;
    let params = ModelParams {
        a0: args.a0,
        b0: args.b0,
        sigma_a: args.sigma_a,
        sigma_b: args.sigma_b,
        sigma_e: args.sigma_e,
    };
    params.validate()?;
    let default_reps = match args.mode {
        Mode::MeanSquares => sim::MEAN_SQUARE_REPLICATIONS,
        Mode::Size | Mode::Power => sim::CALIBRATION_REPLICATIONS,
    };
    let cfg = SimConfig {
        design,
        params,
        replications: args.reps.unwrap_or(default_reps),
        seed: args.seed,
    };
    let w = |e| io_err("<stdout>")(e);

    writeln!(
        out,
        "m = {}, n = {}, S_xxL = {}, replications = {}, seed = {}",
        cfg.design.m(),
        cfg.design.n(),
        fmt_sig(cfg.design.sxx_lab()),
        cfg.replications,
        cfg.seed
    )
    .map_err(w)?;

    let passed = match args.mode {
        Mode::MeanSquares => {
            let mut rows = sim::monte_carlo_mean_squares(&cfg)?;
            rows.extend(
                sim::monte_carlo_estimators(&cfg)?
                    .into_iter()
                    .filter(|e| e.name.starts_with("sigma2")),
            );
            writeln!(
                out,
                "{:<10} {:>12} {:>10} {:>12} {:>8}",
                "quantity", "empirical", "SE", "expected", "z"
            )
            .map_err(w)?;
            let mut ok = true;
            for r in &rows {
                let within = r.within(CHECK_SE);
                ok &= within;
                writeln!(
                    out,
                    "{:<10} {:>12} {:>10} {:>12} {:>8.2}{}",
                    r.name,
                    fmt_sig(r.mean),
                    fmt_sig(r.standard_error),
                    fmt_sig(r.expected),
                    r.z(),
                    if within { "" } else { "  outside 3 SE" }
                )
                .map_err(w)?;
            }
            ok
        }
        Mode::Size => {
            let kind = TestKind::from(args.test);
            let r = sim::null_rejection_rate(&cfg, kind, args.alpha)?;
            let ok = r.calibrated(CHECK_SE);
            writeln!(
                out,
                "{kind} test size: rate {} ({} / {}), alpha {}, band ±{}{}",
                fmt_sig(r.rate),
                r.rejections,
                r.replications,
                r.alpha,
                fmt_sig(CHECK_SE * r.standard_error),
                if ok { "" } else { "  outside band" }
            )
            .map_err(w)?;
            ok
        }
        Mode::Power => {
            let kind = TestKind::from(args.test);
            let curve = sim::slope_power_curve(&cfg, kind, args.alpha, &args.sigma_b_grid)?;
            writeln!(out, "{:>10} {:>10} {:>10}", "sigma_b", "rate", "SE").map_err(w)?;
            let mut ok = true;
            let mut prev: Option<(f64, f64)> = None;
            for (sigma_b, r) in &curve {
                let se = (r.rate * (1.0 - r.rate) / r.replications as f64).sqrt();
                if let Some((prev_rate, prev_se)) = prev {
                    ok &= r.rate + se.max(prev_se) >= prev_rate;
                }
                prev = Some((r.rate, se));
                writeln!(out, "{:>10} {:>10} {:>10}", sigma_b, fmt_sig(r.rate), fmt_sig(se))
                    .map_err(w)?;
            }
            if !ok {
                writeln!(out, "rejection rate is not monotone in sigma_b").map_err(w)?;
            }
            ok
        }
    };

    Ok(if args.check && !passed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    })
}

pub fn cmd_profile(args: &ProfileArgs, out: &mut dyn Write) -> Result<u8> {
    let report = Report::read(&args.report)?;
    let design = report.design()?;
    let vc = &report.variance_components;
    let profile = anova::precision_profile(vc, &design, &args.x);
    let w = |e| io_err("<stdout>")(e);
    writeln!(out, "x,tau2").map_err(w)?;
    for p in &profile.points {
        writeln!(out, "{},{}", p.x, p.tau2).map_err(w)?;
    }
    writeln!(
        out,
        "# design average {} vs sigma2_L {}",
        anova::design_average(vc, &design),
        vc.between_lab.raw
    )
    .map_err(w)?;
    Ok(EXIT_OK)
}
