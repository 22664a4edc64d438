//! Command-line front end: scale-function tables, valuation sweeps,
//! Monte Carlo estimates and the verification suite, all as CSV.

pub mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use refracta::simulate::{
    estimate_bankruptcy_transform, estimate_dividend_transform, estimate_passage_transform,
    estimate_two_sided_exit, estimate_two_sided_passage, estimate_value, trace_paths, LowerRestart,
    McEstimate, SimConfig, StopRule, TRACE_HEADER,
};
use refracta::verify::{render_csv, CHECK_GROUPS};
use refracta::{analytics, ClaimMixture, LevyModel, ScaleContext, SuiteParams, TaxRate, Theta};
use thiserror::Error;

use config::{ConfigFile, Resolver};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

pub const DEFAULT_DRIFTS: [f64; 7] = [0.5, 0.4, 0.3, 0.2, 0.1, 0.0, -0.1];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] refracta::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(
    name = "refracta",
    version,
    about = "Refracted-reflected Levy risk models"
)]
pub struct Cli {
    /// `key = value` file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate W, Z and lambda on an x-grid.
    #[command(allow_negative_numbers = true)]
    Scale(ScaleArgs),
    /// Sweep V(gamma) over a gamma-grid and a list of drifts.
    #[command(allow_negative_numbers = true)]
    Value(ValueArgs),
    /// Monte Carlo estimates, or event traces with --trace.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Run the identity suite; exits 1 if any check fails.
    #[command(allow_negative_numbers = true)]
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Premium rate.
    #[arg(long)]
    pub c: Option<f64>,
    /// Claim arrival intensity.
    #[arg(long)]
    pub jump_rate: Option<f64>,
    /// Mean of exponential claims.
    #[arg(long)]
    pub claim_mean: Option<f64>,
    /// Exponential mixture `w1:r1,w2:r2,...` (weights, rates); overrides --claim-mean.
    #[arg(long)]
    pub claim_mix: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct ProblemArgs {
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub y: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Number or `inf`.
    #[arg(long)]
    pub theta: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct SimArgs {
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only `csv` is supported.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `lo:hi:step` or a comma list.
    #[arg(long)]
    pub x_grid: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// `lo:hi:step` or a comma list.
    #[arg(long)]
    pub gamma_grid: Option<String>,
    /// Comma list of drifts; claims are rescaled to hit each one.
    #[arg(long)]
    pub drifts: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// passage, exit, dividend, value, bankruptcy or two-sided.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma_grid: Option<String>,
    /// Level-dependent rate `level:rate,level:rate,...`.
    #[arg(long)]
    pub gamma_pieces: Option<String>,
    /// Lower refraction rate for the two-sided estimator.
    #[arg(long)]
    pub gamma_l: Option<f64>,
    /// Lower level for the two-sided estimator.
    #[arg(long)]
    pub a: Option<f64>,
    /// running-minimum, fixed-level or fixed-distance.
    #[arg(long)]
    pub restart: Option<String>,
    /// Append the closed-form value where one exists.
    #[arg(long)]
    pub analytic: bool,
    /// Emit the event list of every path instead of estimates.
    #[arg(long)]
    pub trace: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub k_sigma: Option<f64>,
    /// Comma list of check groups.
    #[arg(long)]
    pub checks: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Rendered output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    /// False when a verification check failed.
    pub success: bool,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// `lo:hi:step` (inclusive) or `v1,v2,...`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("bad number {s:?} in grid {spec:?}")))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0 && hi >= lo) {
                return Err(bad(format!("grid {spec:?} needs hi >= lo and step > 0")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            (0..=n)
                .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [_] => spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => {
            return Err(bad(format!(
                "grid {spec:?} is neither lo:hi:step nor a list"
            )))
        }
    };
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(bad(format!("grid {spec:?} is empty or not finite")));
    }
    Ok(grid)
}

fn parse_pairs(spec: &str, what: &str) -> Result<Vec<(f64, f64)>, CliError> {
    spec.split(',')
        .map(|p| {
            let (a, b) = p
                .split_once(':')
                .ok_or_else(|| bad(format!("{what}: expected a:b pairs, got {p:?}")))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| bad(format!("{what}: bad number {a:?}")))?;
            let b = b
                .trim()
                .parse()
                .map_err(|_| bad(format!("{what}: bad number {b:?}")))?;
            Ok((a, b))
        })
        .collect()
}

fn resolve_model(r: &mut Resolver<'_>, m: &ModelArgs) -> Result<LevyModel, CliError> {
    let c = r.value("c", m.c, 1.0)?;
    let rate = r.value("jump-rate", m.jump_rate, 1.0)?;
    let claims = match r.optional("claim-mix", m.claim_mix.clone())? {
        Some(mix) => ClaimMixture::new(parse_pairs(&mix, "claim-mix")?)?,
        None => ClaimMixture::exponential(r.value("claim-mean", m.claim_mean, 0.7)?)?,
    };
    Ok(LevyModel::new(c, rate, claims)?)
}

fn resolve_theta(r: &mut Resolver<'_>, p: &ProblemArgs) -> Result<Theta, CliError> {
    let flag = p.theta.as_deref().map(str::parse::<Theta>).transpose()?;
    r.value("theta", flag, Theta::Finite(1.0))
}

fn resolve_format(r: &mut Resolver<'_>, o: &OutputArgs) -> Result<(), CliError> {
    let f = r.value("format", o.format.clone(), "csv".to_string())?;
    if f != "csv" {
        return Err(bad(format!(
            "unsupported format {f:?}; only csv is available"
        )));
    }
    Ok(())
}

fn resolve_sim(
    r: &mut Resolver<'_>,
    s: &SimArgs,
    default_paths: u64,
) -> Result<SimConfig, CliError> {
    let n = r.value("paths", s.paths, default_paths)?;
    let seed = r.value("seed", s.seed, 1)?;
    let mut cfg = SimConfig::new(seed, n);
    cfg.t_max = r.optional("t-max", s.t_max)?;
    // Worker count is deliberately left out of the config line: output
    // must not depend on it.
    cfg.workers = s.workers.or(r.silent("workers")?);
    cfg.validate()?;
    Ok(cfg)
}

fn finish(r: &Resolver<'_>, body: String) -> String {
    format!("{}\n{body}", r.comment_line())
}

pub fn cmd_scale(file: &ConfigFile, a: &ScaleArgs) -> Result<Report, CliError> {
    let mut r = Resolver::new(file);
    r.note("command", "scale");
    let model = resolve_model(&mut r, &a.model)?;
    let q = r.value("q", a.problem.q, 0.01)?;
    let theta = resolve_theta(&mut r, &a.problem)?;
    let grid = parse_grid(&r.value("x-grid", a.x_grid.clone(), "0:5:0.5".to_string())?)?;
    resolve_format(&mut r, &a.output)?;
    if grid.iter().any(|&x| x < 0.0) {
        return Err(bad("x-grid must be nonnegative"));
    }
    let ctx = ScaleContext::new(&model, q)?;
    let mut body = String::new();
    let z_col = if theta.is_infinite() { "Z_inf" } else { "Z" };
    writeln!(body, "x,W,{z_col},lambda").unwrap();
    for x in grid {
        let e = ctx.eval(theta, x);
        writeln!(body, "{x},{},{},{}", e.w, e.z, e.lambda).unwrap();
    }
    Ok(Report {
        text: finish(&r, body),
        success: true,
    })
}

fn value_at(ctx: &ScaleContext, theta: Theta, x: f64, gamma: f64) -> refracta::Result<f64> {
    if gamma == 1.0 {
        analytics::value_v1(ctx, theta, x)
    } else {
        analytics::value_v(ctx, theta, x, gamma)
    }
}

pub fn cmd_value(file: &ConfigFile, a: &ValueArgs) -> Result<Report, CliError> {
    let mut r = Resolver::new(file);
    r.note("command", "value");
    let base = resolve_model(&mut r, &a.model)?;
    let x = r.value("x0", a.problem.x0, 1.0)?;
    let q = r.value("q", a.problem.q, 0.01)?;
    let theta = resolve_theta(&mut r, &a.problem)?;
    let gammas =
        parse_grid(&r.value("gamma-grid", a.gamma_grid.clone(), "0:1:0.05".to_string())?)?;
    let default_drifts = DEFAULT_DRIFTS.map(|d| d.to_string()).join(",");
    let drifts = parse_grid(&r.value("drifts", a.drifts.clone(), default_drifts)?)?;
    resolve_format(&mut r, &a.output)?;
    if let Some(g) = gammas.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(bad(format!("gamma {g} outside [0, 1]")));
    }

    let mut body = String::from("gamma,drift,v,v_inf,v_diff\n");
    for &drift in &drifts {
        let model = base.with_drift(drift)?;
        let ctx = ScaleContext::new(&model, q)?;
        for &g in &gammas {
            let v = value_at(&ctx, theta, x, g)?;
            let v_inf = value_at(&ctx, Theta::Infinite, x, g)?;
            writeln!(body, "{g},{drift},{v},{v_inf},{}", v - v_inf).unwrap();
        }
    }
    Ok(Report {
        text: finish(&r, body),
        success: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Estimator {
    Passage,
    Exit,
    Dividend,
    Value,
    Bankruptcy,
    TwoSided,
}

impl std::str::FromStr for Estimator {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "passage" => Estimator::Passage,
            "exit" => Estimator::Exit,
            "dividend" => Estimator::Dividend,
            "value" => Estimator::Value,
            "bankruptcy" => Estimator::Bankruptcy,
            "two-sided" => Estimator::TwoSided,
            _ => return Err(bad(format!("unknown estimator {s:?}"))),
        })
    }
}

fn parse_restart(s: &str) -> Result<LowerRestart, CliError> {
    match s {
        "running-minimum" => Ok(LowerRestart::RunningMinimum),
        "fixed-level" => Ok(LowerRestart::FixedLevel),
        "fixed-distance" => Ok(LowerRestart::FixedDistance),
        _ => Err(bad(format!("unknown restart rule {s:?}"))),
    }
}

pub fn cmd_simulate(file: &ConfigFile, a: &SimulateArgs) -> Result<Report, CliError> {
    let mut r = Resolver::new(file);
    r.note("command", "simulate");
    let model = resolve_model(&mut r, &a.model)?;
    let est: Estimator = r
        .value("estimator", a.estimator.clone(), "passage".to_string())?
        .parse()?;
    let x = r.value("x0", a.problem.x0, 1.0)?;
    let y = r.value("y", a.problem.y, 2.0)?;
    let q = r.value("q", a.problem.q, 0.01)?;
    let theta = resolve_theta(&mut r, &a.problem)?;
    let pieces = r.optional("gamma-pieces", a.gamma_pieces.clone())?;
    let rates: Vec<TaxRate> = match (&pieces, r.optional("gamma-grid", a.gamma_grid.clone())?) {
        (Some(p), _) => vec![TaxRate::piecewise(parse_pairs(p, "gamma-pieces")?)?],
        (None, Some(grid)) => parse_grid(&grid)?
            .into_iter()
            .map(TaxRate::Constant)
            .collect(),
        (None, None) => vec![TaxRate::Constant(r.value("gamma", a.gamma, 0.5)?)],
    };
    let (gamma_l, lower_a, restart) = if est == Estimator::TwoSided {
        (
            r.value("gamma-l", a.gamma_l, 0.5)?,
            r.value("a", a.a, 0.0)?,
            parse_restart(&r.value(
                "restart",
                a.restart.clone(),
                "running-minimum".to_string(),
            )?)?,
        )
    } else {
        (1.0, 0.0, LowerRestart::RunningMinimum)
    };
    let cfg = resolve_sim(&mut r, &a.sim, 10_000)?;
    resolve_format(&mut r, &a.output)?;
    if a.trace {
        r.note("trace", true);
    }
    if a.analytic {
        r.note("analytic", true);
    }

    if a.trace {
        let stop = match est {
            Estimator::Passage | Estimator::Exit => StopRule::PassageAbove(y),
            Estimator::Dividend => StopRule::DividendsExceed(y),
            Estimator::Value => StopRule::Horizon,
            _ => {
                return Err(bad(
                    "traces are available for passage, exit, dividend and value",
                ))
            }
        };
        let gamma = match est {
            Estimator::Dividend => TaxRate::Constant(1.0),
            Estimator::Exit => TaxRate::Constant(0.0),
            _ => rates[0].clone(),
        };
        let theta = if est == Estimator::Exit {
            Theta::Infinite
        } else {
            theta
        };
        let mut body = format!("{TRACE_HEADER}\n").into_bytes();
        for (i, path) in trace_paths(&model, &gamma, theta, x, stop, &cfg)?
            .iter()
            .enumerate()
        {
            path.write_csv_rows(&mut body, i as u64)?;
        }
        let body = String::from_utf8(body).expect("csv is ascii");
        return Ok(Report {
            text: finish(&r, body),
            success: true,
        });
    }

    let ctx = ScaleContext::new(&model, q)?;
    let mut body =
        String::from("estimator,gamma,x0,y,q,theta,mean,stderr,n,capped_fraction,bias_bound");
    body.push_str(if a.analytic { ",analytic\n" } else { "\n" });
    for rate in &rates {
        let g = rate.sup();
        let (m, truth): (McEstimate, Option<f64>) = match est {
            Estimator::Passage => {
                let truth = match rate {
                    TaxRate::Constant(g) => {
                        analytics::taxed_passage_transform(&ctx, theta, x, y, *g)?
                    }
                    _ => analytics::survival_level_dependent(&ctx, theta, x, y, rate)?,
                };
                (
                    estimate_passage_transform(&model, rate, q, theta, x, y, &cfg)?,
                    Some(truth),
                )
            }
            Estimator::Exit => (
                estimate_two_sided_exit(&model, q, x, y, &cfg)?,
                Some(analytics::two_sided_exit(&ctx, x, y)?),
            ),
            Estimator::Dividend => (
                estimate_dividend_transform(&model, q, theta, x, y, &cfg)?,
                Some(analytics::dividend_time_transform(&ctx, theta, x, y)?),
            ),
            Estimator::Value => (
                estimate_value(&model, g, q, theta, x, &cfg)?,
                Some(value_at(&ctx, theta, x, g)?),
            ),
            Estimator::Bankruptcy => {
                let th = theta.value();
                if !th.is_finite() {
                    return Err(bad("the bankruptcy estimator needs a finite theta"));
                }
                (
                    estimate_bankruptcy_transform(&model, rate, q, th, x, y, &cfg)?,
                    None,
                )
            }
            Estimator::TwoSided => {
                let th = theta.value();
                if !th.is_finite() {
                    return Err(bad("the two-sided estimator needs a finite theta"));
                }
                let truth = if gamma_l == 1.0 && lower_a == 0.0 {
                    Some(analytics::taxed_passage_transform(&ctx, theta, x, y, g)?)
                } else {
                    None
                };
                let m = estimate_two_sided_passage(
                    &model, gamma_l, g, restart, q, th, lower_a, x, y, &cfg,
                )?;
                (m, truth)
            }
        };
        let label = match est {
            Estimator::Dividend => "1".to_string(),
            Estimator::Exit => "0".to_string(),
            _ if pieces.is_some() => "piecewise".to_string(),
            _ => g.to_string(),
        };
        write!(
            body,
            "{},{label},{x},{y},{q},{theta},{},{},{},{},{}",
            match est {
                Estimator::Passage => "passage",
                Estimator::Exit => "exit",
                Estimator::Dividend => "dividend",
                Estimator::Value => "value",
                Estimator::Bankruptcy => "bankruptcy",
                Estimator::TwoSided => "two-sided",
            },
            m.mean,
            m.stderr,
            m.n,
            m.capped_fraction,
            m.bias_bound
        )
        .unwrap();
        if a.analytic {
            write!(
                body,
                ",{}",
                truth.map(|t| t.to_string()).unwrap_or_default()
            )
            .unwrap();
        }
        body.push('\n');
    }
    Ok(Report {
        text: finish(&r, body),
        success: true,
    })
}

pub fn cmd_verify(file: &ConfigFile, a: &VerifyArgs) -> Result<Report, CliError> {
    let mut r = Resolver::new(file);
    r.note("command", "verify");
    let model = resolve_model(&mut r, &a.model)?;
    let defaults = SuiteParams::default();
    let theta = resolve_theta(&mut r, &a.problem)?;
    let theta = match theta {
        Theta::Finite(t) => t,
        Theta::Infinite => return Err(bad("verify needs a finite theta")),
    };
    let params = SuiteParams {
        x: r.value("x0", a.problem.x0, defaults.x)?,
        y: r.value("y", a.problem.y, defaults.y)?,
        q: r.value("q", a.problem.q, defaults.q)?,
        theta,
        k_sigma: r.value("k-sigma", a.k_sigma, defaults.k_sigma)?,
        groups: r
            .optional("checks", a.checks.clone())?
            .map(|s| {
                s.split(',')
                    .map(|g| {
                        let g = g.trim();
                        if CHECK_GROUPS.contains(&g) {
                            Ok(g.to_string())
                        } else {
                            Err(bad(format!(
                                "unknown check group {g:?}; known: {}",
                                CHECK_GROUPS.join(",")
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?,
        ..defaults
    };
    if params.k_sigma.is_nan() || params.k_sigma < 0.0 {
        return Err(bad("k-sigma must be nonnegative"));
    }
    let cfg = resolve_sim(&mut r, &a.sim, 100_000)?;
    resolve_format(&mut r, &a.output)?;
    let reports = refracta::run_identity_suite(&model, &params, &cfg)?;
    for rep in reports.iter().filter(|r| r.error.is_some()) {
        log::error!("{}: {}", rep.check_name, rep.error.as_deref().unwrap_or(""));
    }
    Ok(Report {
        text: finish(&r, render_csv(&reports)),
        success: reports.iter().all(|r| r.pass),
    })
}

/// Run a parsed command and return its output without writing it anywhere.
pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Scale(a) => cmd_scale(&file, a),
        Command::Value(a) => cmd_value(&file, a),
        Command::Simulate(a) => cmd_simulate(&file, a),
        Command::Verify(a) => cmd_verify(&file, a),
    }
}

fn output_path(cli: &Cli) -> Option<&PathBuf> {
    match &cli.command {
        Command::Scale(a) => a.output.out.as_ref(),
        Command::Value(a) => a.output.out.as_ref(),
        Command::Simulate(a) => a.output.out.as_ref(),
        Command::Verify(a) => a.output.out.as_ref(),
    }
}

/// Parse `args`, run, write the output and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let written = match output_path(&cli) {
        Some(path) => std::fs::write(path, &report.text),
        None => std::io::stdout().lock().write_all(report.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_INVALID;
    }
    if report.success {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    }
}
