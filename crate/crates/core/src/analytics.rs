//! Closed-form transforms of the refracted-reflected surplus and the
//! expected discounted tax `V(gamma)`.
//!
//! All ratios are formed in log-space; the power `1 / (1 - gamma)` is applied
//! to a log-ratio, never to a ratio that may already have under- or
//! overflowed.

use crate::error::{invalid, Error, Result};
use crate::model::TaxRate;
use crate::quad::{integrate, QuadOptions};
use crate::scale::{ScaleContext, Theta};

/// Largest exponent `1 / (1 - gamma)` used by [`value_v`].
pub const MAX_TAX_EXPONENT: f64 = 1e4;

/// Value of the integrand, relative to its value at `x`, at which the
/// quadrature range of [`value_v`] is cut and the exponential tail added.
pub const VALUE_TRUNCATION: f64 = 1e-12;

/// A first-passage question: start at `x`, reach `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageProblem {
    pub x: f64,
    pub y: f64,
    pub q: f64,
    pub theta: Theta,
    pub gamma: TaxRate,
}

impl PassageProblem {
    pub fn validate(&self) -> Result<()> {
        check_levels(self.x, self.y)?;
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return invalid(format!("q must be nonnegative, got {}", self.q));
        }
        Ok(())
    }
}

fn check_levels(x: f64, y: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    if !(y >= x && y.is_finite()) {
        return invalid(format!(
            "target level {y} must not be below start level {x}"
        ));
    }
    Ok(())
}

/// `E_x[exp(-q tau_y^+); tau_y^+ < tau_0^-] = W^q(x) / W^q(y)`.
pub fn two_sided_exit(ctx: &ScaleContext, x: f64, y: f64) -> Result<f64> {
    if !(x >= 0.0 && y >= x && y > 0.0) {
        return invalid(format!("need 0 <= x <= y and y > 0, got x={x} y={y}"));
    }
    if x == y {
        return Ok(1.0);
    }
    Ok((ctx.log_w(x) - ctx.log_w(y)).exp())
}

/// `E^0_x exp(-q T_y - theta L_{T_y}) = Z(x) / Z(y)`; the `W` ratio for
/// infinite theta.
pub fn reflected_passage_transform(
    ctx: &ScaleContext,
    theta: Theta,
    x: f64,
    y: f64,
) -> Result<f64> {
    check_levels(x, y)?;
    Ok(log_z_ratio(ctx, theta, x, y).exp())
}

fn log_z_ratio(ctx: &ScaleContext, theta: Theta, x: f64, y: f64) -> f64 {
    if x == y {
        0.0
    } else {
        ctx.log_z(theta, x) - ctx.log_z(theta, y)
    }
}

/// The taxed transform `E^gamma_x exp(-q T_y - theta L_{T_y})`, equal to the
/// untaxed one raised to `1 / (1 - gamma)`.
pub fn taxed_passage_transform(
    ctx: &ScaleContext,
    theta: Theta,
    x: f64,
    y: f64,
    gamma: f64,
) -> Result<f64> {
    check_levels(x, y)?;
    if !(gamma < 1.0 && gamma.is_finite()) {
        return invalid(format!("tax rate must be below 1, got {gamma}"));
    }
    Ok((log_z_ratio(ctx, theta, x, y) / (1.0 - gamma)).exp())
}

/// `E^1_x exp(-q rho_y - theta L_{rho_y}) = exp(-lambda(x) y)` for the
/// dividend barrier at `x`.
pub fn dividend_time_transform(ctx: &ScaleContext, theta: Theta, x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0 && y >= 0.0) {
        return invalid(format!("need x > 0 and y >= 0, got x={x} y={y}"));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    Ok((-ctx.lambda(theta, x) * y).exp())
}

/// Passage transform under a level-dependent tax rate:
/// `exp(-int_x^y lambda(u) / (1 - gamma(u)) du)`, integrated exactly on each
/// constant piece as a log-`Z` difference.
pub fn survival_level_dependent(
    ctx: &ScaleContext,
    theta: Theta,
    x: f64,
    y: f64,
    gamma: &TaxRate,
) -> Result<f64> {
    check_levels(x, y)?;
    let mut exponent = 0.0;
    for (from, to, rate) in gamma.pieces_between(x, y) {
        if !(rate < 1.0) {
            return invalid(format!("tax rate on [{from}, {to}) must be below 1"));
        }
        exponent += (ctx.log_z(theta, to) - ctx.log_z(theta, from)) / (1.0 - rate);
    }
    Ok((-exponent).exp())
}

/// Expected discounted tax
/// `V(gamma) = gamma / (1 - gamma) * int_x^inf (Z(x)/Z(y))^{1/(1-gamma)} dy`.
///
/// The integrand is integrated adaptively up to the level where it falls
/// below [`VALUE_TRUNCATION`]; beyond that `log Z` is linear to working
/// precision and the remaining geometric tail is added in closed form.
pub fn value_v(ctx: &ScaleContext, theta: Theta, x: f64, gamma: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return invalid(format!("tax rate must lie in [0, 1), got {gamma}"));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let mut power = 1.0 / (1.0 - gamma);
    if power > MAX_TAX_EXPONENT {
        log::warn!(
            "tax rate {gamma} too close to 1 for quadrature; exponent capped at {MAX_TAX_EXPONENT}, use value_v1 instead"
        );
        power = MAX_TAX_EXPONENT;
    }
    let decay = ctx.asymptotic_log_slope(theta) * power;
    if !(decay > 1e-12) {
        return Err(Error::DivergentIntegral(format!(
            "Z^(q={},theta={theta}) does not grow, so V(gamma) is infinite",
            ctx.q()
        )));
    }

    let log_zx = ctx.log_z(theta, x);
    let log_drop = |y: f64| power * (ctx.log_z(theta, y) - log_zx);
    let cut = -VALUE_TRUNCATION.ln();
    let mut step = (1.0 / (power * ctx.lambda(theta, x).max(decay))).min(1.0);
    let mut upper = x + step;
    while log_drop(upper) < cut {
        step *= 2.0;
        upper = x + step;
    }
    let body = integrate(
        |y| (-log_drop(y)).exp(),
        x,
        upper,
        QuadOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            max_intervals: 4000,
        },
    )?;
    let tail = (-log_drop(upper)).exp() / (power * ctx.lambda(theta, upper));
    Ok(gamma * power * (body.value + tail))
}

/// Expected discounted dividends under a barrier at `x`: `Z(x) / Z'(x)`,
/// or `W(x) / W'(x)` for infinite theta.
pub fn value_v1(ctx: &ScaleContext, theta: Theta, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return invalid(format!("start level must be positive, got {x}"));
    }
    let lambda = ctx.lambda(theta, x);
    if !(lambda > 0.0) {
        return Err(Error::InfiniteValue(format!(
            "lambda^(q={},theta={theta})({x}) = {lambda}",
            ctx.q()
        )));
    }
    Ok(1.0 / lambda)
}
