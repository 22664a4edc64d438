//! Scale functions `W^q` and `Z^{q,theta}` as finite exponential sums.
//!
//! Partial fractions give `1 / (psi(alpha) - q) = sum_j c_j / (alpha - r_j)`
//! over the roots `r_j` of `psi = q`, with `c_j = 1 / psi'(r_j)`, hence
//! `W^q(x) = sum_j c_j exp(r_j x)`. Integrating the defining expression of the
//! second scale function term by term and using the same partial fractions at
//! `alpha = theta` collapses it to
//!
//! ```text
//! Z^{q,theta}(x) = sum_j c_j D_j(theta) exp(r_j x),
//! D_j(theta) = (psi(theta) - q) / (theta - r_j) = (psi(theta) - psi(r_j)) / (theta - r_j),
//! ```
//!
//! and `D_j` is evaluated as an exact divided difference, so there is no
//! cancellation when `theta` approaches a root. Sums are carried relative to
//! `exp(Phi(q) x)` so that log-values stay finite for large `x`.

use std::fmt;

use crate::error::{invalid, Result};
use crate::model::LevyModel;

/// Rate at which injected capital is penalised. `Infinite` selects the
/// classical-ruin limit, where `Z^{q,theta}` is replaced by `c W^q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta {
    Finite(f64),
    Infinite,
}

impl Theta {
    pub fn finite(theta: f64) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return invalid(format!("theta must be a nonnegative number, got {theta}"));
        }
        Ok(Theta::Finite(theta))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Theta::Infinite)
    }

    /// Numeric value, `f64::INFINITY` for the sentinel.
    pub fn value(&self) -> f64 {
        match self {
            Theta::Finite(t) => *t,
            Theta::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta::Finite(t) => write!(f, "{t}"),
            Theta::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Theta {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Theta::Infinite);
        }
        match s.parse::<f64>() {
            Ok(v) => Theta::finite(v),
            Err(_) => invalid(format!("theta must be a number or \"inf\", got {s:?}")),
        }
    }
}

/// `W`, `Z`, `Z'` and `lambda = Z'/Z` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEval {
    pub w: f64,
    pub z: f64,
    pub z_prime: f64,
    pub lambda: f64,
}

/// Precomputed roots and partial-fraction coefficients for one `(model, q)`.
#[derive(Debug, Clone)]
pub struct ScaleContext {
    model: LevyModel,
    q: f64,
    roots: Vec<f64>,
    coeffs: Vec<f64>,
}

impl ScaleContext {
    pub fn new(model: &LevyModel, q: f64) -> Result<Self> {
        let roots = model.psi_roots(q)?;
        let coeffs = if model.jump_intensity() == 0.0 {
            vec![1.0 / model.premium_rate()]
        } else {
            roots.iter().map(|&r| 1.0 / model.psi_prime(r)).collect()
        };
        Ok(Self {
            model: model.clone(),
            q,
            roots,
            coeffs,
        })
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Phi(q)`.
    pub fn phi(&self) -> f64 {
        self.roots[0]
    }

    /// `sum_j a_j exp((r_j - Phi) x)` and the same sum weighted by `r_j`.
    fn scaled_sums(&self, weights: impl Iterator<Item = f64>, x: f64) -> (f64, f64) {
        let phi = self.phi();
        let mut s = 0.0;
        let mut ds = 0.0;
        for ((&r, &c), a) in self.roots.iter().zip(&self.coeffs).zip(weights) {
            let term = c * a * ((r - phi) * x).exp();
            s += term;
            ds += r * term;
        }
        (s, ds)
    }

    pub fn w(&self, x: f64) -> f64 {
        self.log_w(x).exp()
    }

    /// `ln W^q(x)`, finite for any `x >= 0`.
    pub fn log_w(&self, x: f64) -> f64 {
        let (s, _) = self.scaled_sums(std::iter::repeat(1.0), x);
        self.phi() * x + s.ln()
    }

    pub fn w_prime(&self, x: f64) -> f64 {
        let (_, ds) = self.scaled_sums(std::iter::repeat(1.0), x);
        ds * (self.phi() * x).exp()
    }

    /// Multipliers `D_j(theta)` turning the `W` coefficients into those of `Z`.
    fn z_weights(&self, theta: Theta) -> Vec<f64> {
        let c = self.model.premium_rate();
        match theta {
            Theta::Infinite => vec![c; self.roots.len()],
            Theta::Finite(t) => {
                if self.model.jump_intensity() == 0.0 {
                    // psi(alpha) = c alpha: divided difference is exactly c.
                    vec![c]
                } else {
                    self.roots
                        .iter()
                        .map(|&r| self.model.psi_slope(t, r))
                        .collect()
                }
            }
        }
    }

    /// `theta` is itself a root: then `Z^{q,theta}(x) = exp(theta x)` exactly.
    fn theta_is_root(&self, theta: Theta) -> Option<f64> {
        match theta {
            Theta::Finite(t) if self.model.psi(t) - self.q == 0.0 => Some(t),
            _ => None,
        }
    }

    /// `ln Z^{q,theta}(x)`.
    pub fn log_z(&self, theta: Theta, x: f64) -> f64 {
        if let Some(t) = self.theta_is_root(theta) {
            return t * x;
        }
        if x == 0.0 && !theta.is_infinite() {
            // The defining integral is empty; skip the roundoff of the sum.
            return 0.0;
        }
        let (s, _) = self.scaled_sums(self.z_weights(theta).into_iter(), x);
        self.phi() * x + s.ln()
    }

    pub fn z(&self, theta: Theta, x: f64) -> f64 {
        self.log_z(theta, x).exp()
    }

    pub fn z_prime(&self, theta: Theta, x: f64) -> f64 {
        self.z(theta, x) * self.lambda(theta, x)
    }

    /// `lambda^{q,theta}(x) = Z'(x) / Z(x)`; `W'(x) / W(x)` for infinite theta.
    pub fn lambda(&self, theta: Theta, x: f64) -> f64 {
        if let Some(t) = self.theta_is_root(theta) {
            return t;
        }
        let (s, ds) = self.scaled_sums(self.z_weights(theta).into_iter(), x);
        ds / s
    }

    pub fn eval(&self, theta: Theta, x: f64) -> ScaleEval {
        let z = self.z(theta, x);
        let lambda = self.lambda(theta, x);
        ScaleEval {
            w: self.w(x),
            z,
            z_prime: z * lambda,
            lambda,
        }
    }

    /// Limit of `lambda^{q,theta}(x)` as `x -> inf`: the exponential growth
    /// rate of `Z` (of `W` for infinite theta).
    pub fn asymptotic_log_slope(&self, theta: Theta) -> f64 {
        match self.theta_is_root(theta) {
            Some(t) => t,
            None => self.phi(),
        }
    }
}

/// `W^q(x)`.
pub fn w_scale(ctx: &ScaleContext, x: f64) -> f64 {
    ctx.w(x)
}

/// `Z^{q,theta}(x)`.
pub fn z_scale(ctx: &ScaleContext, theta: Theta, x: f64) -> f64 {
    ctx.z(theta, x)
}

/// `lambda^{q,theta}(x)`.
pub fn lambda_exponent(ctx: &ScaleContext, theta: Theta, x: f64) -> f64 {
    ctx.lambda(theta, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClaimMixture;
    use crate::quad::{integrate, integrate_to_infinity, QuadOptions};

    fn cm() -> LevyModel {
        LevyModel::cramer_lundberg(0.7).unwrap()
    }

    fn mix() -> LevyModel {
        LevyModel::new(
            1.2,
            1.0,
            ClaimMixture::new(vec![(0.4, 0.8), (0.6, 3.0)]).unwrap(),
        )
        .unwrap()
    }

    /// `Z` straight from its defining integral.
    fn z_by_quadrature(ctx: &ScaleContext, theta: f64, x: f64) -> f64 {
        let m = ctx.model();
        let integral = integrate(
            |y| (-theta * y).exp() * ctx.w(y),
            0.0,
            x,
            QuadOptions {
                rel_tol: 1e-13,
                ..QuadOptions::default()
            },
        )
        .unwrap()
        .value;
        (theta * x).exp() * (1.0 - (m.psi(theta) - ctx.q()) * integral)
    }

    #[test]
    fn w_at_zero_is_inverse_premium() {
        for model in [cm(), mix()] {
            for q in [0.0, 0.01, 1.0] {
                let ctx = ScaleContext::new(&model, q).unwrap();
                let sum: f64 = ctx.coefficients().iter().sum();
                assert!((sum - 1.0 / model.premium_rate()).abs() < 1e-9);
                assert!((ctx.w(0.0) - 1.0 / model.premium_rate()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn w_at_zero_matches_laplace_limit() {
        // alpha / (psi(alpha) - q) -> W(0) as alpha -> inf.
        let m = cm();
        let ctx = ScaleContext::new(&m, 0.01).unwrap();
        let limit = 1e8 / (m.psi(1e8) - 0.01);
        assert!((ctx.w(0.0) - limit).abs() < 1e-6);
        assert!((ctx.w(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_transform_of_w() {
        for model in [cm(), mix()] {
            for q in [0.0, 0.01, 1.0] {
                let ctx = ScaleContext::new(&model, q).unwrap();
                let phi = ctx.phi();
                for alpha in [phi + 0.5, phi + 1.0, phi + 2.0, phi + 5.0, phi + 10.0] {
                    let lt = integrate_to_infinity(
                        |y| (ctx.log_w(y) - alpha * y).exp(),
                        0.0,
                        QuadOptions {
                            rel_tol: 1e-12,
                            ..QuadOptions::default()
                        },
                    )
                    .unwrap()
                    .value;
                    let exact = 1.0 / (model.psi(alpha) - q);
                    assert!(
                        (lt / exact - 1.0).abs() < 1e-7,
                        "q={q} alpha={alpha} lt={lt} exact={exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn w_positive_and_nondecreasing() {
        let ctx = ScaleContext::new(&cm(), 0.01).unwrap();
        let mut prev = 0.0;
        for i in 0..=400 {
            let x = i as f64 * 0.05;
            let w = ctx.w(x);
            assert!(w > 0.0 && w >= prev);
            prev = w;
        }
    }

    #[test]
    fn w_limit_for_positive_drift() {
        let ctx = ScaleContext::new(&cm(), 0.0).unwrap();
        assert!((ctx.w(200.0) - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn w_log_space_large_x() {
        let ctx = ScaleContext::new(&cm(), 1.0).unwrap();
        let lw = ctx.log_w(2000.0);
        assert!(lw.is_finite());
        let slope = (ctx.log_w(2001.0) - lw) / 1.0;
        assert!((slope - ctx.phi()).abs() < 1e-9);
    }

    #[test]
    fn z_at_zero_is_one() {
        let ctx = ScaleContext::new(&mix(), 0.3).unwrap();
        for theta in [0.0, 0.2, 1.0, 50.0] {
            assert_eq!(ctx.z(Theta::Finite(theta), 0.0), 1.0);
        }
        assert!((ctx.z(Theta::Infinite, 0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn z_theta_zero_is_one_plus_q_integral_of_w() {
        let ctx = ScaleContext::new(&cm(), 0.01).unwrap();
        let mut prev = 1.0;
        for x in [0.5, 1.0, 2.0, 4.0] {
            let int = integrate(|y| ctx.w(y), 0.0, x, QuadOptions::default())
                .unwrap()
                .value;
            let z = ctx.z(Theta::Finite(0.0), x);
            assert!((z - (1.0 + 0.01 * int)).abs() < 1e-12);
            assert!(z > prev);
            prev = z;
        }
    }

    #[test]
    fn z_matches_defining_integral_on_grid() {
        for model in [cm(), mix()] {
            let ctx = ScaleContext::new(&model, 0.01).unwrap();
            let phi = ctx.phi();
            let thetas = [0.0, 0.5, 1.0, phi, phi + 1e-6, phi - 1e-6, 3.0];
            for &theta in &thetas {
                for x in [0.3, 1.0, 2.5] {
                    let closed = ctx.z(Theta::Finite(theta), x);
                    let quad = z_by_quadrature(&ctx, theta, x);
                    assert!(
                        (closed / quad - 1.0).abs() < 1e-8,
                        "theta={theta} x={x} closed={closed} quad={quad}"
                    );
                }
            }
        }
    }

    #[test]
    fn z_derivative_identity() {
        let model = mix();
        for q in [0.0, 0.01, 1.0] {
            let ctx = ScaleContext::new(&model, q).unwrap();
            for theta in [0.0, 0.01, 1.0, 4.0] {
                let t = Theta::Finite(theta);
                for x in [0.2, 1.0, 3.0] {
                    let h = 1e-5;
                    let fd = (ctx.z(t, x + h) - ctx.z(t, x - h)) / (2.0 * h);
                    let ev = ctx.eval(t, x);
                    let closed = theta * ev.z - (model.psi(theta) - q) * ev.w;
                    assert!((fd / closed - 1.0).abs() < 1e-5 || (fd - closed).abs() < 1e-9);
                    assert!((ev.z_prime - closed).abs() < 1e-9 * ev.z.max(1.0));
                    assert!((ev.lambda - ev.z_prime / ev.z).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn lambda_examples() {
        let cm = cm();
        let ctx0 = ScaleContext::new(&cm, 0.0).unwrap();
        assert_eq!(lambda_exponent(&ctx0, Theta::Finite(0.0), 1.0), 0.0);

        let ctx = ScaleContext::new(&cm, 0.01).unwrap();
        let t = Theta::Finite(1.0);
        let h = 1e-5;
        let fd = (ctx.log_z(t, 1.0 + h) - ctx.log_z(t, 1.0 - h)) / (2.0 * h);
        assert!((lambda_exponent(&ctx, t, 1.0) - fd).abs() < 1e-6);

        for q in [0.0, 0.01, 1.0] {
            let ctx = ScaleContext::new(&cm, q).unwrap();
            for theta in [0.0, 0.01, 1.0] {
                for i in 1..=100 {
                    let x = i as f64 * 0.1;
                    assert!(ctx.lambda(Theta::Finite(theta), x) >= -1e-15);
                }
            }
        }
    }

    #[test]
    fn large_theta_recovers_w_ratio() {
        let ctx = ScaleContext::new(&cm(), 0.01).unwrap();
        let w_ratio = ctx.w(1.0) / ctx.w(2.0);
        let gaps: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&t| {
                let th = Theta::Finite(t);
                (ctx.z(th, 1.0) / ctx.z(th, 2.0) - w_ratio).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        assert!(gaps[2] < 1e-3);
        let inf = ctx.z(Theta::Infinite, 1.0) / ctx.z(Theta::Infinite, 2.0);
        assert!((inf - w_ratio).abs() < 1e-14);
    }

    #[test]
    fn theta_at_root_is_pure_exponential() {
        let m = LevyModel::cramer_lundberg(1.1).unwrap();
        let ctx = ScaleContext::new(&m, 0.0).unwrap();
        assert_eq!(ctx.z(Theta::Finite(0.0), 50.0), 1.0);
        assert_eq!(ctx.lambda(Theta::Finite(0.0), 5.0), 0.0);
        assert_eq!(ctx.asymptotic_log_slope(Theta::Finite(0.0)), 0.0);
        assert!(ctx.asymptotic_log_slope(Theta::Finite(1.0)) > 0.0);
    }

    #[test]
    fn theta_parsing() {
        assert_eq!("inf".parse::<Theta>().unwrap(), Theta::Infinite);
        assert_eq!("1.5".parse::<Theta>().unwrap(), Theta::Finite(1.5));
        assert!("-1".parse::<Theta>().is_err());
        assert!("abc".parse::<Theta>().is_err());
    }
}
