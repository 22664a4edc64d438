//! Two-sided refraction by gluing one-sided pieces.
//!
//! The path alternates between an upper phase (refraction from above at the
//! current upper level, free below it) and a lower phase (refraction from
//! below at the current lower level). An upper phase ends when a claim takes
//! `Y` below the lower level; a lower phase ends when `Y` creeps back up to the
//! upper level. Levels are updated between phases, so the glued intervals only
//! ever widen.
//!
//! This is written separately from [`crate::simulate::engine`] on purpose:
//! with `gamma_l = 1` and `a = 0` both must produce the same event list.

use crate::error::{Error, Result};
use crate::simulate::engine::{Outcome, StopRule, Termination};
use crate::simulate::path::{ClaimSource, EventKind, FreePath, PathEvent, RefractedPath};

/// Phases allowed before giving up; a finite horizon never needs this many.
pub const MAX_SEGMENTS: usize = 1_000_000;

/// Where refraction from below starts in each lower phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowerRestart {
    /// At the running minimum of the previous lower phase.
    RunningMinimum,
    /// Always at the initial lower level.
    FixedLevel,
    /// At a fixed distance below the running maximum; the distance is `b - a`.
    FixedDistance,
}

#[derive(Debug, Clone)]
pub struct TwoSidedParams {
    pub premium_rate: f64,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub a: f64,
    pub b: f64,
    pub restart: LowerRestart,
    /// `PassageAbove` or `Horizon`.
    pub stop: StopRule,
    pub q: f64,
    pub theta: f64,
    pub t_max: f64,
    pub weight_floor: f64,
    pub record: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Upper,
    Lower,
}

struct State<'p> {
    p: &'p TwoSidedParams,
    t: f64,
    y: f64,
    top: f64,
    a_cur: f64,
    b_cur: f64,
    /// Push from below accumulated in the current lower phase.
    ln: f64,
    l: f64,
    u: f64,
    phase: Phase,
    phases: usize,
    events: Vec<PathEvent>,
}

impl State<'_> {
    fn push(&mut self, kind: EventKind, pre: f64) {
        if self.p.record {
            self.events.push(PathEvent {
                time: self.t,
                kind,
                pre_value: pre,
                post_value: self.y,
                l_total: self.l,
                u_total: self.u,
            });
        }
    }

    fn weight(&self) -> f64 {
        (-self.p.q * self.t - self.p.theta * self.l).exp()
    }

    fn passage_level(&self) -> Option<f64> {
        match self.p.stop {
            StopRule::PassageAbove(level) => Some(level),
            _ => None,
        }
    }

    fn enter(&mut self, phase: Phase) -> Result<()> {
        self.phases += 1;
        if self.phases > MAX_SEGMENTS {
            return Err(Error::NonTermination(MAX_SEGMENTS));
        }
        self.phase = phase;
        Ok(())
    }

    /// Move linearly to `until`; returns true once the passage level is hit.
    fn drift_to(&mut self, until: f64) -> Result<bool> {
        let c = self.p.premium_rate;
        while self.t < until {
            let remaining = until - self.t;
            let ceiling = match self.phase {
                Phase::Upper => self.top,
                Phase::Lower => self.b_cur,
            };
            if self.y < ceiling {
                let to_ceiling = (ceiling - self.y) / c;
                if to_ceiling <= remaining {
                    self.t += to_ceiling;
                    self.y = ceiling;
                    if self.phase == Phase::Lower {
                        self.a_cur = match self.p.restart {
                            LowerRestart::RunningMinimum => {
                                self.a_cur - (1.0 - self.p.gamma_l) * self.ln
                            }
                            LowerRestart::FixedLevel => self.p.a,
                            LowerRestart::FixedDistance => self.b_cur - (self.p.b - self.p.a),
                        };
                        self.ln = 0.0;
                        self.top = self.b_cur;
                        self.enter(Phase::Upper)?;
                    }
                    self.push(EventKind::BarrierTouch, ceiling);
                } else {
                    self.t = until;
                    self.y += c * remaining;
                }
                continue;
            }

            // At the running maximum of an upper phase.
            let slope = c * (1.0 - self.p.gamma_u);
            if let Some(level) = self.passage_level() {
                if slope > 0.0 {
                    let dt = (level - self.y) / slope;
                    if dt <= remaining {
                        self.t += dt.max(0.0);
                        self.u += c * dt.max(0.0);
                        self.y = level;
                        self.top = level;
                        self.push(EventKind::Passage, level);
                        return Ok(true);
                    }
                }
            }
            self.t = until;
            self.u += c * remaining;
            self.y += slope * remaining;
            self.top = self.y;
            if self.p.restart == LowerRestart::FixedDistance {
                self.a_cur = self.top - (self.p.b - self.p.a);
            }
        }
        Ok(false)
    }

    fn jump(&mut self, size: f64) -> Result<()> {
        let pre = self.y;
        match self.phase {
            Phase::Upper => {
                self.y -= size;
                if self.y < self.a_cur {
                    self.b_cur = self.top;
                    self.enter(Phase::Lower)?;
                    self.ln = self.a_cur - self.y;
                    self.l += self.ln;
                    self.y += self.p.gamma_l * self.ln;
                    self.push(EventKind::Injection, pre);
                } else {
                    self.push(EventKind::Jump, pre);
                }
            }
            Phase::Lower => {
                let free = self.y - self.p.gamma_l * self.ln - size;
                let deficit = self.a_cur - free;
                if deficit > self.ln {
                    self.l += deficit - self.ln;
                    self.ln = deficit;
                    self.y = free + self.p.gamma_l * self.ln;
                    self.push(EventKind::Injection, pre);
                } else {
                    self.y -= size;
                    self.push(EventKind::Jump, pre);
                }
            }
        }
        Ok(())
    }

    fn finish(self, termination: Termination) -> Outcome {
        let weight = self.weight();
        let path = self.p.record.then_some(RefractedPath {
            events: self.events,
            gamma_l: self.p.gamma_l,
            gamma_u: self.p.gamma_u,
            a: self.p.a,
            b: self.p.b,
        });
        Outcome {
            termination,
            time: self.t,
            y: self.y,
            l_total: self.l,
            u_total: self.u,
            occupation: 0.0,
            tax: 0.0,
            weight,
            path,
        }
    }
}

/// Run a two-sided refraction of the claim stream started at `x0 ∈ [a, b]`.
pub fn run_two_sided<S: ClaimSource>(
    p: &TwoSidedParams,
    x0: f64,
    source: &mut S,
) -> Result<Outcome> {
    if !(p.a <= x0 && x0 <= p.b) {
        return crate::error::invalid(format!("start {x0} outside [{}, {}]", p.a, p.b));
    }
    if p.gamma_l > 1.0 || p.gamma_u > 1.0 {
        return crate::error::invalid("refraction rates must be at most 1");
    }
    // The free stretch until the first exit is an upper phase whose running
    // maximum is pinned at `b`.
    let mut s = State {
        p,
        t: 0.0,
        y: x0,
        top: p.b,
        a_cur: p.a,
        b_cur: p.b,
        ln: 0.0,
        l: 0.0,
        u: 0.0,
        phase: Phase::Upper,
        phases: 0,
        events: Vec::new(),
    };
    s.push(EventKind::Start, x0);
    if let Some(level) = s.passage_level() {
        if level <= x0 {
            s.push(EventKind::Passage, x0);
            return Ok(s.finish(Termination::Stopped));
        }
    }
    loop {
        let claim = source.next_claim();
        let arrival = claim.map_or(f64::INFINITY, |c| c.time);
        if s.drift_to(arrival.min(p.t_max))? {
            return Ok(s.finish(Termination::Stopped));
        }
        let claim = match claim {
            Some(c) if c.time < p.t_max => c,
            _ => {
                let y = s.y;
                s.push(EventKind::Horizon, y);
                return Ok(s.finish(Termination::Capped));
            }
        };
        s.jump(claim.size)?;
        if s.weight() < p.weight_floor {
            let y = s.y;
            s.push(EventKind::Horizon, y);
            return Ok(s.finish(Termination::Negligible));
        }
    }
}

/// Two-sided refraction of a recorded free path over its whole horizon.
pub fn two_sided_refract(
    free: &FreePath,
    gamma_l: f64,
    gamma_u: f64,
    a: f64,
    b: f64,
) -> Result<RefractedPath> {
    let p = TwoSidedParams {
        premium_rate: free.premium_rate,
        gamma_l,
        gamma_u,
        a,
        b,
        restart: LowerRestart::RunningMinimum,
        stop: StopRule::Horizon,
        q: 0.0,
        theta: 0.0,
        t_max: free.horizon,
        weight_floor: 0.0,
        record: true,
    };
    let out = run_two_sided(&p, free.x0, &mut free.replay())?;
    Ok(out.path.expect("recording was requested"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyModel, TaxRate};
    use crate::simulate::engine::{run_one_sided, EngineParams, LowerRule};
    use crate::simulate::path::simulate_free_segment;
    use crate::simulate::rng::path_rng;

    fn cm() -> LevyModel {
        LevyModel::cramer_lundberg(0.7).unwrap()
    }

    #[test]
    fn zero_rates_give_the_free_path() {
        let m = cm();
        for i in 0..300 {
            let fp = simulate_free_segment(&m, path_rng(20, i), 1.0, 40.0);
            let p = two_sided_refract(&fp, 0.0, 0.0, 0.0, 1.0).unwrap();
            for e in &p.events {
                let x = fp.value_at(e.time);
                assert!((e.post_value - x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reflection_below_matches_one_sided_engine() {
        let m = cm();
        let g = TaxRate::Constant(0.5);
        for i in 0..1000 {
            let fp = simulate_free_segment(&m, path_rng(21, i), 1.0, 60.0);
            let two = two_sided_refract(&fp, 1.0, 0.5, 0.0, 1.0).unwrap();
            let one = run_one_sided(
                EngineParams {
                    premium_rate: 1.0,
                    gamma: &g,
                    lower: LowerRule::Reflect,
                    stop: StopRule::Horizon,
                    q: 0.0,
                    theta: 0.0,
                    t_max: 60.0,
                    weight_floor: 0.0,
                    accrue_tax: false,
                    record: true,
                },
                1.0,
                &mut fp.replay(),
            )
            .path
            .unwrap();
            assert_eq!(one.events.len(), two.events.len(), "path {i}");
            for (e1, e2) in one.events.iter().zip(&two.events) {
                assert_eq!(e1.kind, e2.kind, "path {i}");
                assert!((e1.time - e2.time).abs() < 1e-12);
                assert!((e1.pre_value - e2.pre_value).abs() < 1e-12);
                assert!((e1.post_value - e2.post_value).abs() < 1e-12);
                assert!((e1.l_total - e2.l_total).abs() < 1e-12);
                assert!((e1.u_total - e2.u_total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_sided_reflection_stays_in_band() {
        let m = cm();
        for i in 0..500 {
            let fp = simulate_free_segment(&m, path_rng(22, i), 0.5, 50.0);
            let p = two_sided_refract(&fp, 1.0, 1.0, 0.0, 1.0).unwrap();
            for e in &p.events {
                assert!((-1e-12..=1.0 + 1e-12).contains(&e.post_value));
            }
        }
    }

    #[test]
    fn reconstruction_with_partial_rates() {
        let m = cm();
        for i in 0..2000 {
            let fp = simulate_free_segment(&m, path_rng(23, i), 1.0, 50.0);
            let p = two_sided_refract(&fp, 0.5, 0.3, 0.0, 1.0).unwrap();
            let mut prev = (0.0, 0.0, 0.0);
            for e in &p.events {
                let x = fp.value_at(e.time);
                let rebuilt = x + 0.5 * e.l_total - 0.3 * e.u_total;
                assert!((rebuilt - e.post_value).abs() < 1e-10, "path {i}");
                assert!(e.time >= prev.0 && e.l_total >= prev.1 && e.u_total >= prev.2);
                prev = (e.time, e.l_total, e.u_total);
            }
        }
    }

    #[test]
    fn lower_level_moves_down_with_running_minimum() {
        // A single large claim followed by a long climb: the second lower
        // phase must start at the first phase's minimum.
        let fp = FreePath {
            x0: 1.0,
            premium_rate: 1.0,
            claims: vec![
                crate::simulate::path::Claim {
                    time: 0.5,
                    size: 3.5,
                },
                crate::simulate::path::Claim {
                    time: 6.0,
                    size: 5.0,
                },
            ],
            horizon: 8.0,
        };
        let p = two_sided_refract(&fp, 0.5, 0.0, 0.0, 1.0).unwrap();
        // First push: free value -2, L = 2, Y = -1, so the new lower level is -1.
        let first = p.events[1];
        assert_eq!(first.kind, EventKind::Injection);
        assert!((first.post_value + 1.0).abs() < 1e-12);
        // Y climbs to b = 1.5 (the running max) at t = 3, then to 4.5 at t = 6;
        // the claim leaves -0.5: below a = 0 but above the new lower level.
        let last_jump = p.events.iter().rfind(|e| e.time == 6.0).unwrap();
        assert_eq!(last_jump.kind, EventKind::Jump);
        assert!((last_jump.post_value + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fixed_level_restarts_at_a() {
        let fp = FreePath {
            x0: 1.0,
            premium_rate: 1.0,
            claims: vec![
                crate::simulate::path::Claim {
                    time: 0.5,
                    size: 3.5,
                },
                crate::simulate::path::Claim {
                    time: 4.0,
                    size: 4.0,
                },
            ],
            horizon: 6.0,
        };
        let p = TwoSidedParams {
            premium_rate: 1.0,
            gamma_l: 0.5,
            gamma_u: 0.0,
            a: 0.0,
            b: 1.0,
            restart: LowerRestart::FixedLevel,
            stop: StopRule::Horizon,
            q: 0.0,
            theta: 0.0,
            t_max: 6.0,
            weight_floor: 0.0,
            record: true,
        };
        let out = run_two_sided(&p, 1.0, &mut fp.replay()).unwrap();
        let ev = out.path.unwrap().events;
        // Climb from -1 reaches b = 1.5 at t = 3; at t = 4 Y = 2.5, the claim
        // takes it to -1.5, below a = 0, so L grows by 1.5.
        let second = ev.iter().rfind(|e| e.kind == EventKind::Injection).unwrap();
        assert!((second.time - 4.0).abs() < 1e-12);
        assert!((second.l_total - 3.5).abs() < 1e-12);
        assert!((second.post_value + 0.75).abs() < 1e-12);
    }
}
