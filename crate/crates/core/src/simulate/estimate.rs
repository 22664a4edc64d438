//! Monte Carlo estimators. The exponential clocks are never sampled: each
//! path pays its exact conditional weight `exp(-q T - theta L_T)`.
//!
//! Paths are simulated in fixed chunks whose partial statistics are merged
//! in chunk order, so results are bit-identical for any number of workers.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{LevyModel, TaxRate};
use crate::scale::Theta;
use crate::simulate::engine::{
    run_one_sided, EngineParams, LowerRule, Outcome, StopRule, Termination,
};
use crate::simulate::path::{RefractedPath, SampledClaims};
use crate::simulate::rng::path_rng;
use crate::simulate::two_sided::{run_two_sided, LowerRestart, TwoSidedParams};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-12;
const CHUNK: u64 = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: u64,
    /// Time cap; `None` selects `5000 / q`, or `1e5` when `q = 0`.
    pub t_max: Option<f64>,
    /// Paths stop once their remaining contribution is bounded by this.
    pub weight_floor: f64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(seed: u64, n_paths: u64) -> Self {
        Self {
            seed,
            n_paths,
            t_max: None,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            workers: None,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return invalid("n_paths must be at least 1");
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return invalid(format!("t_max must be positive, got {t}"));
            }
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0) {
            return invalid(format!(
                "weight floor must lie in [0, 1), got {}",
                self.weight_floor
            ));
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1");
        }
        Ok(())
    }

    pub fn resolved_t_max(&self, q: f64) -> f64 {
        self.t_max.unwrap_or(if q > 0.0 { 5000.0 / q } else { 1e5 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    /// Fraction of paths stopped by the time cap.
    pub capped_fraction: f64,
    /// Bound on the payoff dropped by capping or by the weight floor.
    pub bias_bound: f64,
}

/// One path's contribution.
#[derive(Debug, Clone, Copy)]
struct Sample {
    value: f64,
    capped: bool,
    /// Upper bound on what truncation removed from `value`.
    residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    capped: u64,
    residual: f64,
}

impl Moments {
    fn push(&mut self, s: Sample) {
        self.n += 1;
        let d = s.value - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (s.value - self.mean);
        self.capped += u64::from(s.capped);
        self.residual += s.residual;
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
            capped: self.capped + o.capped,
            residual: self.residual + o.residual,
        }
    }

    fn estimate(&self) -> McEstimate {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2 / (n - 1.0) } else { 0.0 };
        McEstimate {
            mean: self.mean,
            stderr: (var.max(0.0) / n).sqrt(),
            n: self.n,
            capped_fraction: self.capped as f64 / n,
            bias_bound: self.residual / n,
        }
    }
}

fn run_paths<F>(cfg: &SimConfig, path: F) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<Sample> + Sync,
{
    cfg.validate()?;
    let chunks = cfg.n_paths.div_ceil(CHUNK);
    let work = || -> Result<Vec<Moments>> {
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let mut m = Moments::default();
                for i in k * CHUNK..((k + 1) * CHUNK).min(cfg.n_paths) {
                    m.push(path(i)?);
                }
                Ok(m)
            })
            .collect()
    };
    let parts = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    Ok(total.estimate())
}

fn check_levels(x: f64, y: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    if !(y >= x && y.is_finite()) {
        return invalid(format!("target level {y} must be at least the start {x}"));
    }
    Ok(())
}

fn check_rates(q: f64, theta: Theta) -> Result<()> {
    if !(q >= 0.0 && q.is_finite()) {
        return invalid(format!("q must be nonnegative, got {q}"));
    }
    if let Theta::Finite(t) = theta {
        if !(t >= 0.0 && t.is_finite()) {
            return invalid(format!("theta must be nonnegative, got {t}"));
        }
    }
    Ok(())
}

fn lower_rule(theta: Theta) -> (LowerRule, f64) {
    match theta {
        Theta::Infinite => (LowerRule::Absorb, 0.0),
        Theta::Finite(t) => (LowerRule::Reflect, t),
    }
}

/// Transform payoff: the weight at a successful stop, zero otherwise.
fn transform_sample(out: &Outcome) -> Sample {
    match out.termination {
        Termination::Stopped => Sample {
            value: out.weight,
            capped: false,
            residual: 0.0,
        },
        Termination::Absorbed => Sample {
            value: 0.0,
            capped: false,
            residual: 0.0,
        },
        Termination::Capped | Termination::Negligible => Sample {
            value: 0.0,
            capped: out.termination == Termination::Capped,
            residual: out.weight,
        },
    }
}

fn one_sided(model: &LevyModel, params: &EngineParams<'_>, x0: f64, seed: u64, i: u64) -> Outcome {
    let mut source = SampledClaims::new(model, path_rng(seed, i));
    run_one_sided(params.clone(), x0, &mut source)
}

/// `E_x[exp(-q T_y - theta L_{T_y})]` under refraction from above at the
/// running maximum and reflection at zero; `Theta::Infinite` kills at ruin.
pub fn estimate_passage_transform(
    model: &LevyModel,
    gamma: &TaxRate,
    q: f64,
    theta: Theta,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    check_levels(x, y)?;
    check_rates(q, theta)?;
    if gamma.sup() >= 1.0 {
        return invalid("passage transforms need a tax rate below 1");
    }
    if q == 0.0 && theta == Theta::Finite(0.0) && model.drift() <= 0.0 {
        return invalid("q = theta = 0 with nonpositive drift: passage time may be heavy-tailed");
    }
    let (lower, theta) = lower_rule(theta);
    let params = EngineParams {
        premium_rate: model.premium_rate(),
        gamma,
        lower,
        stop: StopRule::PassageAbove(y),
        q,
        theta,
        t_max: cfg.resolved_t_max(q),
        weight_floor: cfg.weight_floor,
        accrue_tax: false,
        record: false,
    };
    run_paths(cfg, |i| {
        Ok(transform_sample(&one_sided(model, &params, x, cfg.seed, i)))
    })
}

/// `E_x[exp(-q tau_y^+); tau_y^+ < tau_0^-]` for the free process.
pub fn estimate_two_sided_exit(
    model: &LevyModel,
    q: f64,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    estimate_passage_transform(
        model,
        &TaxRate::Constant(0.0),
        q,
        Theta::Infinite,
        x,
        y,
        cfg,
    )
}

/// `E_x[exp(-q rho_y - theta L_{rho_y})]` with a dividend barrier at the
/// starting level, `rho_y` the first time dividends exceed `y`.
pub fn estimate_dividend_transform(
    model: &LevyModel,
    q: f64,
    theta: Theta,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(x > 0.0) || !(y >= 0.0) {
        return invalid(format!("need x > 0 and y >= 0, got x = {x}, y = {y}"));
    }
    check_rates(q, theta)?;
    if q == 0.0 && theta == Theta::Finite(0.0) && model.drift() <= 0.0 {
        return invalid("q = theta = 0 with nonpositive drift: dividend time may be heavy-tailed");
    }
    let gamma = TaxRate::Constant(1.0);
    let (lower, theta) = lower_rule(theta);
    let params = EngineParams {
        premium_rate: model.premium_rate(),
        gamma: &gamma,
        lower,
        stop: StopRule::DividendsExceed(y),
        q,
        theta,
        t_max: cfg.resolved_t_max(q),
        weight_floor: cfg.weight_floor,
        accrue_tax: false,
        record: false,
    };
    run_paths(cfg, |i| {
        Ok(transform_sample(&one_sided(model, &params, x, cfg.seed, i)))
    })
}

/// Expected discounted tax `E_x[int exp(-q t - theta L_t) gamma dU_t]`;
/// with `gamma = 1` this is the expected discounted dividend stream.
pub fn estimate_value(
    model: &LevyModel,
    gamma: f64,
    q: f64,
    theta: Theta,
    x: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    if !(x > 0.0) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return invalid(format!(
            "value estimation needs gamma in (0, 1], got {gamma}"
        ));
    }
    check_rates(q, theta)?;
    if !(q > 0.0) {
        return invalid("value estimation needs q > 0");
    }
    let rate = TaxRate::Constant(gamma);
    let (lower, theta) = lower_rule(theta);
    // Remaining tax after stopping is at most weight * gamma c / q.
    let tail = gamma * model.premium_rate() / q;
    let params = EngineParams {
        premium_rate: model.premium_rate(),
        gamma: &rate,
        lower,
        stop: StopRule::Horizon,
        q,
        theta,
        t_max: cfg.resolved_t_max(q),
        weight_floor: cfg.weight_floor / tail,
        accrue_tax: true,
        record: false,
    };
    run_paths(cfg, |i| {
        let out = one_sided(model, &params, x, cfg.seed, i);
        Ok(Sample {
            value: out.tax,
            capped: out.termination == Termination::Capped,
            residual: match out.termination {
                Termination::Absorbed => 0.0,
                _ => out.weight * tail,
            },
        })
    })
}

/// `E_x[exp(-q tau_y^+ - theta M(tau_y^+))]` for the taxed process without
/// any barrier below, `M` the time spent below zero.
pub fn estimate_bankruptcy_transform(
    model: &LevyModel,
    gamma: &TaxRate,
    q: f64,
    theta: f64,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    check_levels(x, y)?;
    check_rates(q, Theta::Finite(theta))?;
    if gamma.sup() >= 1.0 {
        return invalid("bankruptcy transforms need a tax rate below 1");
    }
    if q == 0.0 && model.drift() <= 0.0 {
        return invalid("q = 0 with nonpositive drift: passage time may be heavy-tailed");
    }
    let params = EngineParams {
        premium_rate: model.premium_rate(),
        gamma,
        lower: LowerRule::Occupation,
        stop: StopRule::PassageAbove(y),
        q,
        theta,
        t_max: cfg.resolved_t_max(q),
        weight_floor: cfg.weight_floor,
        accrue_tax: false,
        record: false,
    };
    run_paths(cfg, |i| {
        Ok(transform_sample(&one_sided(model, &params, x, cfg.seed, i)))
    })
}

/// Passage transform under two-sided refraction on `[a, b]` with `b = x`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_two_sided_passage(
    model: &LevyModel,
    gamma_l: f64,
    gamma_u: f64,
    restart: LowerRestart,
    q: f64,
    theta: f64,
    a: f64,
    x: f64,
    y: f64,
    cfg: &SimConfig,
) -> Result<McEstimate> {
    check_levels(x, y)?;
    check_rates(q, Theta::Finite(theta))?;
    if !(a <= x) {
        return invalid(format!("lower level {a} above start {x}"));
    }
    if !(gamma_u < 1.0 && gamma_l <= 1.0) {
        return invalid("two-sided passage needs gamma_u < 1 and gamma_l <= 1");
    }
    if q == 0.0 && theta == 0.0 && model.drift() <= 0.0 {
        return invalid("q = theta = 0 with nonpositive drift: passage time may be heavy-tailed");
    }
    let params = TwoSidedParams {
        premium_rate: model.premium_rate(),
        gamma_l,
        gamma_u,
        a,
        b: x,
        restart,
        stop: StopRule::PassageAbove(y),
        q,
        theta,
        t_max: cfg.resolved_t_max(q),
        weight_floor: cfg.weight_floor,
        record: false,
    };
    run_paths(cfg, |i| {
        let mut source = SampledClaims::new(model, path_rng(cfg.seed, i));
        Ok(transform_sample(&run_two_sided(&params, x, &mut source)?))
    })
}

/// Recorded paths `0..n_paths` of the refraction/reflection engine, drawn
/// from the same streams as the estimators.
pub fn trace_paths(
    model: &LevyModel,
    gamma: &TaxRate,
    theta: Theta,
    x: f64,
    stop: StopRule,
    cfg: &SimConfig,
) -> Result<Vec<RefractedPath>> {
    cfg.validate()?;
    if !(x > 0.0) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    let (lower, _) = lower_rule(theta);
    let params = EngineParams {
        premium_rate: model.premium_rate(),
        gamma,
        lower,
        stop,
        q: 0.0,
        theta: 0.0,
        t_max: cfg.t_max.unwrap_or(100.0),
        weight_floor: 0.0,
        accrue_tax: false,
        record: true,
    };
    Ok((0..cfg.n_paths)
        .map(|i| {
            one_sided(model, &params, x, cfg.seed, i)
                .path
                .expect("recording was requested")
        })
        .collect())
}
