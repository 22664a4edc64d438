//! Event-driven refraction at the running maximum, with reflection,
//! absorption or an occupation clock at zero.
//!
//! Between claims the free path rises at the premium rate `c`. Strictly below
//! its running maximum the controlled surplus `Y` rises at `c` as well; at the
//! maximum it rises at `c (1 - gamma(level))` while `U` grows at `c`. A claim
//! that pushes `Y` below zero is either repaired by an injection lump
//! (`L += deficit`), ends the path (classical ruin), or is left alone while the
//! time spent below zero is accumulated. Every functional is computed from
//! segment geometry, so the only error is Monte Carlo error.

use crate::model::TaxRate;
use crate::simulate::path::{ClaimSource, EventKind, PathEvent, RefractedPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerRule {
    /// Capital injections: reflect at zero.
    Reflect,
    /// Classical ruin: the path ends when a claim takes it below zero.
    Absorb,
    /// No barrier; time spent below zero is recorded instead.
    Occupation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// `T_y`: first passage of the surplus above `y`.
    PassageAbove(f64),
    /// `rho_y`: first time the cumulative refraction `U` exceeds `y`.
    DividendsExceed(f64),
    /// Run until the time cap or until the path weight is negligible.
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Stopped,
    Absorbed,
    /// The time cap was reached first.
    Capped,
    /// `exp(-q t - theta K)` fell below the weight floor.
    Negligible,
}

#[derive(Debug, Clone)]
pub struct EngineParams<'a> {
    pub premium_rate: f64,
    pub gamma: &'a TaxRate,
    pub lower: LowerRule,
    pub stop: StopRule,
    pub q: f64,
    /// Penalty rate on `L` (reflection) or on time below zero (occupation).
    pub theta: f64,
    pub t_max: f64,
    pub weight_floor: f64,
    /// Accumulate `int exp(-q t - theta K) gamma dU`.
    pub accrue_tax: bool,
    pub record: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub termination: Termination,
    pub time: f64,
    pub y: f64,
    pub l_total: f64,
    pub u_total: f64,
    pub occupation: f64,
    /// Discounted tax collected, when requested.
    pub tax: f64,
    /// `exp(-q t - theta K)` at `time`, with `K` the injected total or the
    /// occupation time.
    pub weight: f64,
    pub path: Option<RefractedPath>,
}

struct Engine<'a> {
    p: EngineParams<'a>,
    t: f64,
    y: f64,
    top: f64,
    l: f64,
    u: f64,
    occ: f64,
    tax: f64,
    events: Vec<PathEvent>,
}

enum Drift {
    Continue,
    Stop,
}

impl<'a> Engine<'a> {
    fn record(&mut self, kind: EventKind, pre: f64) {
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

    fn penalised(&self) -> f64 {
        match self.p.lower {
            LowerRule::Occupation => self.occ,
            _ => self.l,
        }
    }

    fn weight(&self) -> f64 {
        (-self.p.q * self.t - self.p.theta * self.penalised()).exp()
    }

    /// `int_{t}^{t + dt} exp(-q s) ds`.
    fn discount_integral(&self, dt: f64) -> f64 {
        let q = self.p.q;
        if q == 0.0 {
            dt
        } else {
            (-q * self.t).exp() * -(-q * dt).exp_m1() / q
        }
    }

    /// Linear motion up to absolute time `until`.
    fn drift_to(&mut self, until: f64) -> Drift {
        let c = self.p.premium_rate;
        while self.t < until {
            let remaining = until - self.t;
            if self.y < self.top {
                let to_top = (self.top - self.y) / c;
                let seg = remaining.min(to_top);
                if self.p.lower == LowerRule::Occupation && self.y < 0.0 {
                    self.occ += seg.min(-self.y / c);
                }
                if to_top <= remaining {
                    self.t += to_top;
                    self.y = self.top;
                    self.record(EventKind::BarrierTouch, self.y);
                } else {
                    self.t = until;
                    self.y += c * seg;
                }
                continue;
            }

            let gamma = self.p.gamma.rate_at(self.y);
            let slope = c * (1.0 - gamma);
            let mut seg = remaining;
            let mut hit = None;
            match self.p.stop {
                StopRule::PassageAbove(level) if slope > 0.0 => {
                    let dt = (level - self.y) / slope;
                    if dt <= seg {
                        seg = dt;
                        hit = Some(EventKind::Passage);
                    }
                }
                StopRule::DividendsExceed(level) => {
                    let dt = (level - self.u) / c;
                    if dt <= seg {
                        seg = dt;
                        hit = Some(EventKind::Passage);
                    }
                }
                _ => {}
            }
            if slope > 0.0 {
                if let Some(level) = self.p.gamma.next_level_above(self.y) {
                    let dt = (level - self.y) / slope;
                    if dt < seg {
                        seg = dt;
                        hit = Some(EventKind::RateChange);
                    }
                }
            }
            let seg = seg.max(0.0);

            if self.p.accrue_tax {
                let k = self.p.theta * self.penalised();
                self.tax += gamma * c * (-k).exp() * self.discount_integral(seg);
            }
            match hit {
                Some(EventKind::Passage) => {
                    self.t += seg;
                    match self.p.stop {
                        StopRule::PassageAbove(level) => {
                            self.u += c * seg;
                            self.y = level;
                        }
                        StopRule::DividendsExceed(level) => {
                            self.u = level;
                            self.y += slope * seg;
                        }
                        StopRule::Horizon => unreachable!(),
                    }
                    self.top = self.y;
                    self.record(EventKind::Passage, self.y);
                    return Drift::Stop;
                }
                Some(_) => {
                    self.t += seg;
                    self.u += c * seg;
                    self.y = self.p.gamma.next_level_above(self.y).unwrap_or(self.y);
                    self.top = self.y;
                    self.record(EventKind::RateChange, self.y);
                }
                None => {
                    self.t = until;
                    self.u += c * seg;
                    self.y += slope * seg;
                    self.top = self.y;
                }
            }
        }
        Drift::Continue
    }

    fn finish(self, termination: Termination) -> Outcome {
        let weight = self.weight();
        let path = if self.p.record {
            let (gamma_u, a) = match (self.p.gamma, self.p.lower) {
                (TaxRate::Constant(g), LowerRule::Reflect) => (*g, 0.0),
                (TaxRate::Constant(g), _) => (*g, f64::NEG_INFINITY),
                (_, LowerRule::Reflect) => (f64::NAN, 0.0),
                _ => (f64::NAN, f64::NEG_INFINITY),
            };
            let gamma_l = if self.p.lower == LowerRule::Reflect {
                1.0
            } else {
                0.0
            };
            let b = self.events.first().map_or(self.y, |e| e.post_value);
            Some(RefractedPath {
                events: self.events,
                gamma_l,
                gamma_u,
                a,
                b,
            })
        } else {
            None
        };
        Outcome {
            termination,
            time: self.t,
            y: self.y,
            l_total: self.l,
            u_total: self.u,
            occupation: self.occ,
            tax: self.tax,
            weight,
            path,
        }
    }
}

/// Run one path started at `x0` with the refraction applied immediately.
pub fn run_one_sided<S: ClaimSource>(params: EngineParams<'_>, x0: f64, source: &mut S) -> Outcome {
    let mut e = Engine {
        p: params,
        t: 0.0,
        y: x0,
        top: x0,
        l: 0.0,
        u: 0.0,
        occ: 0.0,
        tax: 0.0,
        events: Vec::new(),
    };
    e.record(EventKind::Start, x0);
    let immediate = match e.p.stop {
        StopRule::PassageAbove(level) => level <= x0,
        StopRule::DividendsExceed(level) => level <= 0.0 && e.p.gamma.rate_at(x0) <= 1.0,
        StopRule::Horizon => false,
    };
    if immediate {
        e.record(EventKind::Passage, x0);
        return e.finish(Termination::Stopped);
    }
    loop {
        let claim = source.next_claim();
        let arrival = claim.map_or(f64::INFINITY, |c| c.time);
        let until = arrival.min(e.p.t_max);
        if let Drift::Stop = e.drift_to(until) {
            return e.finish(Termination::Stopped);
        }
        let claim = match claim {
            Some(c) if c.time < e.p.t_max => c,
            _ => {
                let y = e.y;
                e.record(EventKind::Horizon, y);
                return e.finish(Termination::Capped);
            }
        };
        let pre = e.y;
        e.y -= claim.size;
        if e.y < 0.0 {
            match e.p.lower {
                LowerRule::Reflect => {
                    e.l -= e.y;
                    e.y = 0.0;
                    e.record(EventKind::Injection, pre);
                }
                LowerRule::Absorb => {
                    e.record(EventKind::Jump, pre);
                    return e.finish(Termination::Absorbed);
                }
                LowerRule::Occupation => e.record(EventKind::Jump, pre),
            }
        } else {
            e.record(EventKind::Jump, pre);
        }
        if e.weight() < e.p.weight_floor {
            let y = e.y;
            e.record(EventKind::Horizon, y);
            return e.finish(Termination::Negligible);
        }
    }
}
