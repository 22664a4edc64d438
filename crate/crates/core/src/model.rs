//! The driving Cramér–Lundberg process and its Laplace exponent.
//!
//! Surplus moves as `X_t = x + c t - sum of claims`, claims arriving at
//! Poisson rate `jump_intensity` with sizes drawn from a finite mixture of
//! exponentials. With that claim class `1 / (psi(alpha) - q)` is a proper
//! rational function, so the scale function is a finite exponential sum.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Error, Result};

/// Separation below which two roots of `psi(alpha) = q` count as equal.
pub const ROOT_COINCIDENCE_TOL: f64 = 1e-9;

/// Finite mixture of exponential claim-size distributions.
///
/// Components are stored sorted by ascending rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimMixture {
    weights: Vec<f64>,
    rates: Vec<f64>,
}

impl ClaimMixture {
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return invalid("claim mixture needs at least one component");
        }
        let mut comps = components;
        for &(w, r) in &comps {
            if !(w > 0.0 && w.is_finite()) {
                return invalid(format!("mixture weight must be positive, got {w}"));
            }
            if !(r > 0.0 && r.is_finite()) {
                return invalid(format!("mixture rate must be positive, got {r}"));
            }
        }
        let total: f64 = comps.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("mixture weights sum to {total}, expected 1"));
        }
        comps.sort_by(|a, b| a.1.total_cmp(&b.1));
        for pair in comps.windows(2) {
            if (pair[1].1 - pair[0].1).abs() <= 1e-12 * pair[1].1 {
                return invalid(format!(
                    "mixture rates must be distinct, {} repeats",
                    pair[0].1
                ));
            }
        }
        Ok(Self {
            weights: comps.iter().map(|c| c.0).collect(),
            rates: comps.iter().map(|c| c.1).collect(),
        })
    }

    /// Single exponential claim distribution with the given mean.
    pub fn exponential(mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return invalid(format!("claim mean must be positive, got {mean}"));
        }
        Self::new(vec![(1.0, 1.0 / mean)])
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// `(weight, rate)` pairs sorted by ascending rate.
    pub fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().copied().zip(self.rates.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.components().map(|(w, r)| w / r).sum()
    }

    /// Same mixture shape with every claim size multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return invalid(format!("scale factor must be positive, got {factor}"));
        }
        Self::new(self.components().map(|(w, r)| (w, r / factor)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = Exp1.sample(rng);
        if self.rates.len() == 1 {
            return e / self.rates[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (w, r) in self.components() {
            acc += w;
            if u < acc {
                return e / r;
            }
        }
        e / self.rates[self.rates.len() - 1]
    }
}

/// Compound Poisson risk process with linear premium income.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyModel {
    premium_rate: f64,
    jump_intensity: f64,
    claims: ClaimMixture,
}

impl LevyModel {
    pub fn new(premium_rate: f64, jump_intensity: f64, claims: ClaimMixture) -> Result<Self> {
        if !(premium_rate > 0.0 && premium_rate.is_finite()) {
            return invalid(format!("premium rate must be positive, got {premium_rate}"));
        }
        if !(jump_intensity >= 0.0 && jump_intensity.is_finite()) {
            return invalid(format!(
                "jump intensity must be nonnegative, got {jump_intensity}"
            ));
        }
        Ok(Self {
            premium_rate,
            jump_intensity,
            claims,
        })
    }

    /// Unit premium and unit claim intensity with exponential claims of mean
    /// `claim_mean`, so that the drift is `1 - claim_mean`.
    pub fn cramer_lundberg(claim_mean: f64) -> Result<Self> {
        Self::new(1.0, 1.0, ClaimMixture::exponential(claim_mean)?)
    }

    pub fn premium_rate(&self) -> f64 {
        self.premium_rate
    }

    pub fn jump_intensity(&self) -> f64 {
        self.jump_intensity
    }

    pub fn claims(&self) -> &ClaimMixture {
        &self.claims
    }

    /// `E X_1 - X_0`, equal to `psi'(0+)`.
    pub fn drift(&self) -> f64 {
        self.premium_rate - self.jump_intensity * self.claims.mean()
    }

    /// The same model with claim sizes rescaled so that the drift equals `drift`.
    pub fn with_drift(&self, drift: f64) -> Result<Self> {
        if self.jump_intensity == 0.0 {
            return invalid("cannot change the drift of a model without jumps");
        }
        let target_mean = (self.premium_rate - drift) / self.jump_intensity;
        if !(target_mean > 0.0) {
            return invalid(format!(
                "drift {drift} requires nonpositive claim mean {target_mean}"
            ));
        }
        let claims = self.claims.scaled(target_mean / self.claims.mean())?;
        Self::new(self.premium_rate, self.jump_intensity, claims)
    }

    /// Laplace exponent `psi(alpha) = log E exp(alpha X_1)`.
    ///
    /// Defined for `alpha >= 0`; the rational expression is also evaluated
    /// for negative `alpha` away from the poles `-rate_i`, which root
    /// finding relies on.
    pub fn psi(&self, alpha: f64) -> f64 {
        let jumps: f64 = self
            .claims
            .components()
            .map(|(w, r)| w * alpha / (r + alpha))
            .sum();
        self.premium_rate * alpha - self.jump_intensity * jumps
    }

    pub fn psi_prime(&self, alpha: f64) -> f64 {
        let jumps: f64 = self
            .claims
            .components()
            .map(|(w, r)| w * r / ((r + alpha) * (r + alpha)))
            .sum();
        self.premium_rate - self.jump_intensity * jumps
    }

    pub fn psi_second(&self, alpha: f64) -> f64 {
        let jumps: f64 = self
            .claims
            .components()
            .map(|(w, r)| {
                let d = r + alpha;
                2.0 * w * r / (d * d * d)
            })
            .sum();
        self.jump_intensity * jumps
    }

    /// Divided difference `(psi(a) - psi(b)) / (a - b)`, free of cancellation.
    /// Equals `psi'(a)` when `a == b`.
    pub fn psi_slope(&self, a: f64, b: f64) -> f64 {
        let jumps: f64 = self
            .claims
            .components()
            .map(|(w, r)| w * r / ((r + a) * (r + b)))
            .sum();
        self.premium_rate - self.jump_intensity * jumps
    }

    /// All real roots of `psi(alpha) = q`, in descending order.
    ///
    /// The first entry is `Phi(q)`, the rightmost root. With `k` mixture
    /// components and jumps present there are `k + 1` roots: two on
    /// `(-rate_min, inf)`, where `psi` is convex, and one between each pair of
    /// consecutive poles.
    pub fn psi_roots(&self, q: f64) -> Result<Vec<f64>> {
        if !(q >= 0.0 && q.is_finite()) {
            return invalid(format!("q must be nonnegative, got {q}"));
        }
        let c = self.premium_rate;
        if self.jump_intensity == 0.0 {
            return Ok(vec![q / c]);
        }
        let f = |a: f64| self.psi(a) - q;
        let df = |a: f64| self.psi_prime(a);
        let poles: Vec<f64> = self.claims.components().map(|(_, r)| -r).collect();
        let mut roots = Vec::with_capacity(poles.len() + 1);

        // Rightmost pole: psi is convex on (poles[0], inf) and blows up at both ends.
        let left = poles[0];
        let mut hi = 1.0f64;
        while df(hi) <= 0.0 {
            hi *= 2.0;
        }
        let argmin = bisect_increasing(&df, left, hi);
        let fmin = f(argmin);
        if fmin >= 0.0 {
            return Err(Error::NumericalDegeneracy(format!(
                "psi(alpha) = {q} has a double root near {argmin}"
            )));
        }
        let mut right_hi = argmin.max(0.0) + 1.0;
        while f(right_hi) <= 0.0 {
            right_hi = argmin.max(0.0) + 2.0 * (right_hi - argmin.max(0.0));
        }
        let upper = polish(&f, &df, argmin, right_hi, false);
        let lower = polish(&f, &df, left, argmin, true);
        if upper - lower < ROOT_COINCIDENCE_TOL {
            return Err(Error::NumericalDegeneracy(format!(
                "roots {lower} and {upper} of psi(alpha) = {q} coincide"
            )));
        }
        let (upper, lower) = if q == 0.0 {
            // psi(0) = 0 exactly; pin whichever root sits at the origin.
            if upper.abs() < lower.abs() {
                (0.0, lower)
            } else {
                (upper, 0.0)
            }
        } else {
            (upper, lower)
        };
        roots.push(upper);
        roots.push(lower);

        for pair in poles.windows(2) {
            // f -> -inf just left of pair[0], +inf just right of pair[1].
            roots.push(polish(&f, &df, pair[1], pair[0], true));
        }
        Ok(roots)
    }

    /// `Phi(q)`, the rightmost root of `psi(alpha) = q`.
    pub fn phi(&self, q: f64) -> Result<f64> {
        Ok(self.psi_roots(q)?[0])
    }
}

/// Zero of an increasing function on `(lo, hi)`, by bisection.
fn bisect_increasing(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Safeguarded Newton iteration for the unique sign change of `f` on the open
/// interval `(lo, hi)`. `decreasing` states the sign pattern: `f > 0` near
/// `lo` and `f < 0` near `hi` when true, the reverse otherwise. Endpoints are
/// never evaluated, so they may be poles.
fn polish(
    f: &impl Fn(f64) -> f64,
    df: &impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    decreasing: bool,
) -> f64 {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        let left_side = (fx > 0.0) == decreasing;
        if left_side {
            lo = x;
        } else {
            hi = x;
        }
        let step = fx / df(x);
        let newton = x - step;
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) || next == lo || next == hi
        {
            return next;
        }
        x = next;
    }
    x
}

/// Tax (refraction) rate applied while the surplus sits at its running maximum.
#[derive(Debug, Clone, PartialEq)]
pub enum TaxRate {
    Constant(f64),
    /// `rates[k]` applies on `[levels[k], levels[k + 1])`; `rates[0]` also
    /// applies below `levels[0]`.
    Piecewise {
        levels: Vec<f64>,
        rates: Vec<f64>,
    },
}

/// How far from one a level-dependent rate must stay.
pub const PIECEWISE_RATE_MARGIN: f64 = 1e-9;

impl TaxRate {
    pub fn constant(gamma: f64) -> Result<Self> {
        if !(gamma <= 1.0 && gamma.is_finite()) {
            return invalid(format!("tax rate must be at most 1, got {gamma}"));
        }
        Ok(TaxRate::Constant(gamma))
    }

    /// Rates keyed by the level from which they apply.
    pub fn piecewise(pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.is_empty() {
            return invalid("piecewise tax rate needs at least one piece");
        }
        for pair in pieces.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return invalid("tax rate levels must be strictly increasing");
            }
        }
        for &(level, rate) in &pieces {
            if !level.is_finite() {
                return invalid("tax rate levels must be finite");
            }
            if !(rate.is_finite() && rate <= 1.0 - PIECEWISE_RATE_MARGIN) {
                return invalid(format!(
                    "level-dependent tax rate must stay below 1, got {rate}"
                ));
            }
        }
        Ok(TaxRate::Piecewise {
            levels: pieces.iter().map(|p| p.0).collect(),
            rates: pieces.iter().map(|p| p.1).collect(),
        })
    }

    pub fn rate_at(&self, level: f64) -> f64 {
        match self {
            TaxRate::Constant(g) => *g,
            TaxRate::Piecewise { levels, rates } => {
                let k = levels.partition_point(|&l| l <= level);
                rates[k.saturating_sub(1)]
            }
        }
    }

    /// Smallest breakpoint strictly above `level`.
    pub fn next_level_above(&self, level: f64) -> Option<f64> {
        match self {
            TaxRate::Constant(_) => None,
            TaxRate::Piecewise { levels, .. } => {
                let k = levels.partition_point(|&l| l <= level);
                levels.get(k).copied()
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            TaxRate::Constant(g) => *g,
            TaxRate::Piecewise { rates, .. } => rates.iter().copied().fold(f64::MIN, f64::max),
        }
    }

    /// Pieces `(from, to, rate)` covering `[lo, hi]`.
    pub fn pieces_between(&self, lo: f64, hi: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        let mut from = lo;
        while from < hi {
            let rate = self.rate_at(from);
            let to = self.next_level_above(from).map_or(hi, |l| l.min(hi));
            out.push((from, to, rate));
            from = to;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm() -> LevyModel {
        LevyModel::cramer_lundberg(0.7).unwrap()
    }

    fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn psi_values() {
        let m = cm();
        assert_eq!(m.psi(0.0), 0.0);
        // c a - lambda a m / (1 + a m) at a = 1, m = 0.7
        let direct = 1.0 - 0.7 / 1.7;
        assert!((m.psi(1.0) - 10.0 / 17.0).abs() < 1e-15);
        assert!((m.psi(1.0) - direct).abs() < 1e-15);
        assert!((m.drift() - 0.3).abs() < 1e-15);
        assert!((m.psi_prime(0.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn drift_matches_finite_difference() {
        let m = LevyModel::new(
            1.3,
            0.8,
            ClaimMixture::new(vec![(0.3, 0.5), (0.7, 4.0)]).unwrap(),
        )
        .unwrap();
        let h = 1e-6;
        let fd = (m.psi(h) - m.psi(0.0)) / h;
        assert!((fd - m.drift()).abs() < 1e-5);
    }

    #[test]
    fn psi_prime_and_convexity_on_grid() {
        let m = LevyModel::new(
            1.0,
            2.0,
            ClaimMixture::new(vec![(0.5, 1.0), (0.5, 3.0)]).unwrap(),
        )
        .unwrap();
        let h = 1e-5;
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.1).collect();
        for &a in &grid {
            let fd = (m.psi(a + h) - m.psi(a - h)) / (2.0 * h);
            assert!((m.psi_prime(a) - fd).abs() < 1e-6, "alpha = {a}");
        }
        for w in grid.windows(3) {
            let second = m.psi(w[0]) - 2.0 * m.psi(w[1]) + m.psi(w[2]);
            assert!(second >= -1e-9);
        }
    }

    #[test]
    fn roots_at_zero_with_positive_drift() {
        let roots = cm().psi_roots(0.0).unwrap();
        assert_eq!(roots.len(), 2);
        assert_eq!(roots[0], 0.0);
        assert!(roots[1] < 0.0);
    }

    #[test]
    fn roots_match_bisection_oracle() {
        let m = cm();
        let q = 0.01;
        let f = |a: f64| m.psi(a) - q;
        // Brackets: (0, 10) for Phi(q), (-rate + tiny, 0) for the negative root.
        let phi = bisect_root(f, 1e-12, 10.0);
        let neg = bisect_root(f, -1.0 / 0.7 + 1e-12, -1e-12);
        let roots = m.psi_roots(q).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - phi).abs() < 1e-12);
        assert!((roots[1] - neg).abs() < 1e-12);
        for r in roots {
            assert!((m.psi(r) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_drift_is_degenerate() {
        let m = LevyModel::cramer_lundberg(1.0).unwrap();
        assert!(matches!(
            m.psi_roots(0.0),
            Err(Error::NumericalDegeneracy(_))
        ));
        // Away from q = 0 the double root splits.
        assert_eq!(m.psi_roots(0.01).unwrap().len(), 2);
    }

    #[test]
    fn negative_drift_has_positive_phi_zero() {
        let m = LevyModel::cramer_lundberg(1.1).unwrap();
        let roots = m.psi_roots(0.0).unwrap();
        assert!(roots[0] > 0.0);
        assert_eq!(roots[1], 0.0);
    }

    #[test]
    fn mixture_roots_interlace_poles() {
        let m = LevyModel::new(
            1.0,
            1.5,
            ClaimMixture::new(vec![(0.2, 0.6), (0.5, 2.0), (0.3, 7.0)]).unwrap(),
        )
        .unwrap();
        for q in [0.0, 0.01, 0.1, 1.0, 5.0] {
            let roots = m.psi_roots(q).unwrap();
            assert_eq!(roots.len(), 4);
            for r in &roots {
                assert!((m.psi(*r) - q).abs() < 1e-9, "q={q} root={r}");
            }
            assert!(roots.windows(2).all(|w| w[0] > w[1]));
            assert!(roots[1] > -0.6);
            assert!(roots[2] < -0.6 && roots[2] > -2.0);
            assert!(roots[3] < -2.0 && roots[3] > -7.0);
        }
    }

    #[test]
    fn phi_is_nondecreasing() {
        let m = cm();
        let phis: Vec<f64> = [0.0, 0.01, 0.1, 1.0]
            .iter()
            .map(|&q| m.phi(q).unwrap())
            .collect();
        assert!(phis.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn no_jumps_single_root() {
        let m = LevyModel::new(2.0, 0.0, ClaimMixture::exponential(1.0).unwrap()).unwrap();
        assert_eq!(m.psi_roots(0.5).unwrap(), vec![0.25]);
    }

    #[test]
    fn with_drift_rescales_claims() {
        let m = cm().with_drift(-0.1).unwrap();
        assert!((m.drift() + 0.1).abs() < 1e-14);
        assert!((m.claims().mean() - 1.1).abs() < 1e-14);
        assert!(cm().with_drift(1.0).is_err());
    }

    #[test]
    fn mixture_validation() {
        assert!(ClaimMixture::new(vec![(0.5, 1.0), (0.4, 2.0)]).is_err());
        assert!(ClaimMixture::new(vec![(0.5, 1.0), (0.5, 1.0)]).is_err());
        assert!(ClaimMixture::new(vec![(1.0, -1.0)]).is_err());
        let mix = ClaimMixture::new(vec![(0.25, 4.0), (0.75, 0.5)]).unwrap();
        assert!((mix.mean() - (0.25 / 4.0 + 0.75 / 0.5)).abs() < 1e-15);
        assert_eq!(mix.components().next(), Some((0.75, 0.5)));
    }

    #[test]
    fn piecewise_rate_lookup() {
        let g = TaxRate::piecewise(vec![(1.0, 0.2), (1.5, 0.6)]).unwrap();
        assert_eq!(g.rate_at(0.5), 0.2);
        assert_eq!(g.rate_at(1.2), 0.2);
        assert_eq!(g.rate_at(1.5), 0.6);
        assert_eq!(g.next_level_above(1.2), Some(1.5));
        assert_eq!(g.next_level_above(1.5), None);
        assert_eq!(
            g.pieces_between(1.0, 2.0),
            vec![(1.0, 1.5, 0.2), (1.5, 2.0, 0.6)]
        );
        assert!(TaxRate::piecewise(vec![(0.0, 1.0)]).is_err());
        assert!(TaxRate::constant(1.0).is_ok());
        assert!(TaxRate::constant(1.1).is_err());
    }
}
