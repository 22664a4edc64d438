//! Pairs closed-form values with Monte Carlo estimates and renders verdicts.

use std::fmt::Write as _;

use crate::analytics;
use crate::error::Result;
use crate::model::{LevyModel, TaxRate};
use crate::scale::{ScaleContext, Theta};
use crate::simulate::{
    derive_seed, estimate_bankruptcy_transform, estimate_dividend_transform,
    estimate_passage_transform, estimate_two_sided_exit, estimate_two_sided_passage,
    estimate_value, LowerRestart, McEstimate, SimConfig,
};

pub const DEFAULT_K_SIGMA: f64 = 3.0;
/// An expected violation counts as detected beyond this many standard errors.
pub const DETECTION_SIGMA: f64 = 5.0;

pub const REPORT_HEADER: &str = "check_name,analytic,mc_mean,mc_stderr,z,pass";

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub check_name: String,
    /// Closed-form target; `None` when both sides are simulated.
    pub analytic: Option<f64>,
    pub mc: Vec<McEstimate>,
    /// Standard error the z-score was divided by (pooled for two samples).
    pub stderr: f64,
    pub z_score: f64,
    pub pass: bool,
    pub k_sigma: f64,
    /// Detection of a violation (`|z| > DETECTION_SIGMA`) is the pass condition.
    pub expected_fail: bool,
    /// Set when the check could not be run.
    pub error: Option<String>,
}

impl VerifyReport {
    fn verdict(
        name: &str,
        analytic: Option<f64>,
        mc: Vec<McEstimate>,
        diff: f64,
        stderr: f64,
        k_sigma: f64,
        expected_fail: bool,
    ) -> Self {
        let z = if stderr > 0.0 {
            diff / stderr
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        let pass = if expected_fail {
            z.abs() > DETECTION_SIGMA
        } else {
            z.abs() <= k_sigma
        };
        VerifyReport {
            check_name: name.to_string(),
            analytic,
            mc,
            stderr,
            z_score: z,
            pass,
            k_sigma,
            expected_fail,
            error: None,
        }
    }

    fn errored(name: &str, k_sigma: f64, err: &crate::Error) -> Self {
        VerifyReport {
            check_name: name.to_string(),
            analytic: None,
            mc: Vec::new(),
            stderr: f64::NAN,
            z_score: f64::NAN,
            pass: false,
            k_sigma,
            expected_fail: false,
            error: Some(err.to_string()),
        }
    }

    /// One-sample check: `(mc.mean - analytic) / mc.stderr`.
    pub fn against_analytic(name: &str, analytic: f64, mc: McEstimate, k_sigma: f64) -> Self {
        Self::verdict(
            name,
            Some(analytic),
            vec![mc],
            mc.mean - analytic,
            mc.stderr,
            k_sigma,
            false,
        )
    }

    /// `lhs` against `base^power`, both simulated independently. The stderr
    /// of the transformed side comes from the delta method and is pooled
    /// with that of `lhs`.
    pub fn power_relation(
        name: &str,
        lhs: McEstimate,
        base: McEstimate,
        power: f64,
        k_sigma: f64,
        expected_fail: bool,
    ) -> Self {
        let predicted = base.mean.powf(power);
        let se_pred = power * base.mean.powf(power - 1.0) * base.stderr;
        Self::verdict(
            name,
            None,
            vec![lhs, base],
            lhs.mean - predicted,
            lhs.stderr.hypot(se_pred),
            k_sigma,
            expected_fail,
        )
    }

    /// `log m(2y) = 2 log m(y)` for independent estimates `m(y)`, `m(2y)`.
    pub fn log_linearity(name: &str, single: McEstimate, double: McEstimate, k_sigma: f64) -> Self {
        let diff = double.mean.ln() - 2.0 * single.mean.ln();
        let se = (double.stderr / double.mean).hypot(2.0 * single.stderr / single.mean);
        Self::verdict(name, None, vec![double, single], diff, se, k_sigma, false)
    }

    /// The compared Monte Carlo mean (the left-hand side for two-sample checks).
    pub fn mc_mean(&self) -> f64 {
        self.mc.first().map_or(f64::NAN, |m| m.mean)
    }

    pub fn csv_row(&self) -> String {
        let analytic = self.analytic.map(|a| a.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.check_name,
            analytic,
            self.mc_mean(),
            self.stderr,
            self.z_score,
            self.pass
        )
    }
}

pub fn render_csv(reports: &[VerifyReport]) -> String {
    let mut out = String::new();
    writeln!(out, "{REPORT_HEADER}").unwrap();
    for r in reports {
        writeln!(out, "{}", r.csv_row()).unwrap();
    }
    out
}

/// The pinned two-sided configuration at which the power relation visibly
/// breaks when refraction from below restarts at the running minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedFixture {
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub x: f64,
    pub y: f64,
}

impl Default for TwoSidedFixture {
    fn default() -> Self {
        // Located by sweeping x in {0.2, 0.5, 1}, y - x in {0.5, 1, 2, 4} and
        // gamma_u in {0.5, 0.8} at 1e5 paths; here |z| is about 16.
        TwoSidedFixture {
            gamma_l: 0.5,
            gamma_u: 0.8,
            x: 0.2,
            y: 2.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteParams {
    pub q: f64,
    pub theta: f64,
    pub x: f64,
    pub y: f64,
    pub power_gammas: Vec<f64>,
    pub dividend_levels: Vec<f64>,
    pub value_gamma: f64,
    /// Rates `(from_level, gamma)` for the level-dependent check.
    pub level_pieces: Vec<(f64, f64)>,
    pub bankruptcy_gamma: f64,
    pub two_sided: TwoSidedFixture,
    pub k_sigma: f64,
    /// Check groups to run; `None` runs all of [`CHECK_GROUPS`].
    pub groups: Option<Vec<String>>,
}

pub const CHECK_GROUPS: [&str; 7] = [
    "bankruptcy",
    "dividend",
    "exit",
    "level",
    "power",
    "two-sided",
    "value",
];

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            q: 0.01,
            theta: 1.0,
            x: 1.0,
            y: 2.0,
            power_gammas: vec![0.0, 0.3, 0.5, 0.8],
            dividend_levels: vec![0.5, 1.0, 2.0],
            value_gamma: 0.5,
            level_pieces: vec![(1.0, 0.2), (1.5, 0.6)],
            bankruptcy_gamma: 0.5,
            two_sided: TwoSidedFixture::default(),
            k_sigma: DEFAULT_K_SIGMA,
            groups: None,
        }
    }
}

impl SuiteParams {
    fn wants(&self, group: &str) -> bool {
        self.groups
            .as_ref()
            .is_none_or(|g| g.iter().any(|s| s == group))
    }
}

fn seeded(cfg: &SimConfig, label: &str) -> SimConfig {
    cfg.with_seed(derive_seed(cfg.seed, label))
}

fn push(out: &mut Vec<VerifyReport>, name: &str, k: f64, r: Result<VerifyReport>) {
    out.push(r.unwrap_or_else(|e| VerifyReport::errored(name, k, &e)));
}

/// Two-sided passage transform at `gamma_u` against the `gamma_u = 0`
/// transform raised to `1 / (1 - gamma_u)`. With restarts at the running
/// minimum and `gamma_l < 1` the relation is expected to fail.
#[allow(clippy::too_many_arguments)]
pub fn falsify_two_sided_identity(
    model: &LevyModel,
    gamma_l: f64,
    gamma_u: f64,
    restart: LowerRestart,
    q: f64,
    theta: f64,
    x: f64,
    y: f64,
    k_sigma: f64,
    cfg: &SimConfig,
) -> Result<VerifyReport> {
    let lhs =
        estimate_two_sided_passage(model, gamma_l, gamma_u, restart, q, theta, 0.0, x, y, cfg)?;
    let base = estimate_two_sided_passage(
        model,
        gamma_l,
        0.0,
        restart,
        q,
        theta,
        0.0,
        x,
        y,
        &seeded(cfg, "base"),
    )?;
    let name = match restart {
        LowerRestart::RunningMinimum => "two-sided-running-minimum",
        LowerRestart::FixedLevel => "two-sided-fixed-level",
        LowerRestart::FixedDistance => "two-sided-fixed-distance",
    };
    let expected_fail = restart == LowerRestart::RunningMinimum && gamma_l < 1.0;
    Ok(VerifyReport::power_relation(
        name,
        lhs,
        base,
        1.0 / (1.0 - gamma_u),
        k_sigma,
        expected_fail,
    ))
}

/// Run every selected check; failures to run a check are reported in place.
/// Reports come back sorted by check name.
pub fn run_identity_suite(
    model: &LevyModel,
    p: &SuiteParams,
    cfg: &SimConfig,
) -> Result<Vec<VerifyReport>> {
    cfg.validate()?;
    let ctx = ScaleContext::new(model, p.q)?;
    let theta = Theta::finite(p.theta)?;
    let k = p.k_sigma;
    let mut out = Vec::new();

    if p.wants("power") {
        for &g in &p.power_gammas {
            let name = format!("power-g{g}");
            push(
                &mut out,
                &name,
                k,
                (|| {
                    let truth = analytics::taxed_passage_transform(&ctx, theta, p.x, p.y, g)?;
                    let mc = estimate_passage_transform(
                        model,
                        &TaxRate::constant(g)?,
                        p.q,
                        theta,
                        p.x,
                        p.y,
                        &seeded(cfg, &name),
                    )?;
                    Ok(VerifyReport::against_analytic(&name, truth, mc, k))
                })(),
            );
        }
    }

    if p.wants("exit") {
        push(
            &mut out,
            "exit",
            k,
            (|| {
                let truth = analytics::two_sided_exit(&ctx, p.x, p.y)?;
                let mc = estimate_two_sided_exit(model, p.q, p.x, p.y, &seeded(cfg, "exit"))?;
                Ok(VerifyReport::against_analytic("exit", truth, mc, k))
            })(),
        );
    }

    if p.wants("dividend") {
        let mut estimates = Vec::new();
        for &level in &p.dividend_levels {
            let name = format!("dividend-y{level}");
            let run = (|| {
                let truth = analytics::dividend_time_transform(&ctx, theta, p.x, level)?;
                let mc = estimate_dividend_transform(
                    model,
                    p.q,
                    theta,
                    p.x,
                    level,
                    &seeded(cfg, &name),
                )?;
                Ok((truth, mc))
            })();
            if let Ok((_, mc)) = &run {
                estimates.push((level, *mc));
            }
            push(
                &mut out,
                &name,
                k,
                run.map(|(t, mc)| VerifyReport::against_analytic(&name, t, mc, k)),
            );
        }
        for &(level, single) in &estimates {
            if let Some(&(_, double)) = estimates.iter().find(|(l, _)| *l == 2.0 * level) {
                let name = format!("dividend-loglinear-y{level}");
                out.push(VerifyReport::log_linearity(&name, single, double, k));
            }
        }
    }

    if p.wants("value") {
        let name = format!("value-g{}", p.value_gamma);
        push(
            &mut out,
            &name,
            k,
            (|| {
                let truth = analytics::value_v(&ctx, theta, p.x, p.value_gamma)?;
                let mc =
                    estimate_value(model, p.value_gamma, p.q, theta, p.x, &seeded(cfg, &name))?;
                Ok(VerifyReport::against_analytic(&name, truth, mc, k))
            })(),
        );
        push(
            &mut out,
            "value-g1",
            k,
            (|| {
                let truth = analytics::value_v1(&ctx, theta, p.x)?;
                let mc = estimate_value(model, 1.0, p.q, theta, p.x, &seeded(cfg, "value-g1"))?;
                Ok(VerifyReport::against_analytic("value-g1", truth, mc, k))
            })(),
        );
    }

    if p.wants("level") {
        push(
            &mut out,
            "level-dependent",
            k,
            (|| {
                let rate = TaxRate::piecewise(p.level_pieces.clone())?;
                let truth = analytics::survival_level_dependent(&ctx, theta, p.x, p.y, &rate)?;
                let mc = estimate_passage_transform(
                    model,
                    &rate,
                    p.q,
                    theta,
                    p.x,
                    p.y,
                    &seeded(cfg, "level-dependent"),
                )?;
                Ok(VerifyReport::against_analytic(
                    "level-dependent",
                    truth,
                    mc,
                    k,
                ))
            })(),
        );
    }

    if p.wants("bankruptcy") {
        let name = format!("bankruptcy-g{}", p.bankruptcy_gamma);
        push(
            &mut out,
            &name,
            k,
            (|| {
                let g = p.bankruptcy_gamma;
                let lhs = estimate_bankruptcy_transform(
                    model,
                    &TaxRate::constant(g)?,
                    p.q,
                    p.theta,
                    p.x,
                    p.y,
                    &seeded(cfg, &name),
                )?;
                let base = estimate_bankruptcy_transform(
                    model,
                    &TaxRate::Constant(0.0),
                    p.q,
                    p.theta,
                    p.x,
                    p.y,
                    &seeded(cfg, "bankruptcy-base"),
                )?;
                Ok(VerifyReport::power_relation(
                    &name,
                    lhs,
                    base,
                    1.0 / (1.0 - g),
                    k,
                    false,
                ))
            })(),
        );
    }

    if p.wants("two-sided") {
        let f = p.two_sided;
        for (restart, gamma_l) in [
            (LowerRestart::RunningMinimum, f.gamma_l),
            (LowerRestart::FixedLevel, f.gamma_l),
            (LowerRestart::FixedDistance, f.gamma_l),
            (LowerRestart::RunningMinimum, 1.0),
        ] {
            let label = format!("two-sided/{restart:?}/{gamma_l}");
            let run = falsify_two_sided_identity(
                model,
                gamma_l,
                f.gamma_u,
                restart,
                p.q,
                p.theta,
                f.x,
                f.y,
                k,
                &seeded(cfg, &label),
            );
            let name = match (restart, gamma_l == 1.0) {
                (_, true) => "two-sided-reflection",
                (LowerRestart::RunningMinimum, _) => "two-sided-running-minimum",
                (LowerRestart::FixedLevel, _) => "two-sided-fixed-level",
                (LowerRestart::FixedDistance, _) => "two-sided-fixed-distance",
            };
            let run = run.map(|mut r| {
                r.check_name = name.to_string();
                r
            });
            push(&mut out, name, k, run);
        }
    }

    out.sort_by(|a, b| a.check_name.cmp(&b.check_name));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, stderr: f64) -> McEstimate {
        McEstimate {
            mean,
            stderr,
            n: 100,
            capped_fraction: 0.0,
            bias_bound: 0.0,
        }
    }

    #[test]
    fn z_scores() {
        let r = VerifyReport::against_analytic("a", 0.5, est(0.53, 0.01), 3.0);
        assert!((r.z_score - 3.0).abs() < 1e-9);
        let r =
            VerifyReport::power_relation("b", est(0.25, 0.003), est(0.5, 0.002), 2.0, 3.0, false);
        // Delta method: 2 * 0.5 * 0.002 = 0.002, pooled with 0.003.
        assert!((r.stderr - 0.003f64.hypot(0.002)).abs() < 1e-15);
        assert_eq!(r.z_score, 0.0);
        assert!(r.pass);
        let r = VerifyReport::power_relation("c", est(0.3, 0.001), est(0.5, 0.001), 2.0, 3.0, true);
        assert!(r.z_score > DETECTION_SIGMA && r.pass);
    }

    #[test]
    fn zero_threshold_fails_stochastic_checks() {
        let r = VerifyReport::against_analytic("a", 0.5, est(0.5001, 0.01), 0.0);
        assert!(!r.pass);
    }

    #[test]
    fn csv_layout() {
        let r = VerifyReport::against_analytic("a", 0.5, est(0.5, 0.01), 3.0);
        let csv = render_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        assert_eq!(lines.next(), Some("a,0.5,0.5,0.01,0,true"));
    }

    #[test]
    fn tiny_suite_completes_and_is_sorted() {
        let m = LevyModel::cramer_lundberg(0.7).unwrap();
        let reports =
            run_identity_suite(&m, &SuiteParams::default(), &SimConfig::new(1, 100)).unwrap();
        assert_eq!(reports.len(), 18);
        assert!(reports.iter().all(|r| r.error.is_none()));
        assert!(reports
            .windows(2)
            .all(|w| w[0].check_name <= w[1].check_name));
    }

    #[test]
    fn group_selection() {
        let m = LevyModel::cramer_lundberg(0.7).unwrap();
        let p = SuiteParams {
            groups: Some(vec!["power".into(), "dividend".into()]),
            ..SuiteParams::default()
        };
        let reports = run_identity_suite(&m, &p, &SimConfig::new(1, 50)).unwrap();
        assert!(reports
            .iter()
            .all(|r| r.check_name.starts_with("power") || r.check_name.starts_with("dividend")));
        assert_eq!(reports.len(), 9);
    }

    /// With true identities and k = 3, false alarms must stay rare: across
    /// 20 independent seeds each expected-pass check may fail at most twice.
    #[test]
    fn false_alarm_rate_across_seeds() {
        let m = LevyModel::cramer_lundberg(0.7).unwrap();
        let params = SuiteParams::default();
        let mut failures: std::collections::BTreeMap<String, usize> = Default::default();
        let mut detected = 0;
        for seed in 0..20u64 {
            for r in run_identity_suite(&m, &params, &SimConfig::new(1000 + seed, 10_000)).unwrap()
            {
                assert!(r.error.is_none(), "{}: {:?}", r.check_name, r.error);
                if r.expected_fail {
                    detected += usize::from(r.pass);
                } else if !r.pass {
                    *failures.entry(r.check_name).or_default() += 1;
                }
            }
        }
        for (name, count) in &failures {
            assert!(*count <= 2, "{name} failed in {count} of 20 seeds");
        }
        // At 1e4 paths the violation is about 5 sigma, so detection is not
        // guaranteed per seed, but it must dominate.
        assert!(
            detected >= 10,
            "violation detected in only {detected} of 20 seeds"
        );
    }
}
