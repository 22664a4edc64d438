//! Event-list representation of sample paths.
//!
//! Between consecutive events a path is linear: it moves from the earlier
//! event's `post_value` to the later event's `pre_value`.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::model::LevyModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Start,
    /// A claim that leaves the surplus above the lower barrier.
    Jump,
    /// A claim that triggers reflection or refraction from below; `post_value`
    /// is the value after the push.
    Injection,
    /// The surplus reaches its running maximum and refraction from above resumes.
    BarrierTouch,
    /// The running maximum crosses a breakpoint of a level-dependent tax rate.
    RateChange,
    /// The stopping level (for the surplus or for cumulative tax) is reached.
    Passage,
    /// The path is cut at the time cap or once its weight is negligible.
    Horizon,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Jump => "jump",
            EventKind::Injection => "injection",
            EventKind::BarrierTouch => "barrier-touch",
            EventKind::RateChange => "rate-change",
            EventKind::Passage => "passage",
            EventKind::Horizon => "horizon",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub time: f64,
    pub kind: EventKind,
    pub pre_value: f64,
    pub post_value: f64,
    /// Running total of the push from below.
    pub l_total: f64,
    /// Running total of the refraction from above.
    pub u_total: f64,
}

/// The triplet `(Y, L, U)` as an event list, together with the rates and
/// barriers that produced it. `Y = X + gamma_l L - gamma_u U` holds at every
/// event when the upper rate is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct RefractedPath {
    pub events: Vec<PathEvent>,
    pub gamma_l: f64,
    pub gamma_u: f64,
    pub a: f64,
    pub b: f64,
}

impl RefractedPath {
    pub fn start_time(&self) -> f64 {
        self.events.first().map_or(0.0, |e| e.time)
    }

    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.time)
    }

    /// Linear pieces `(t0, y0, t1, y1)` between consecutive events.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        self.events
            .windows(2)
            .map(|w| (w[0].time, w[0].post_value, w[1].time, w[1].pre_value))
    }

    /// Write one CSV row per event: `path_id,time,kind,pre_value,post_value,L_total,U_total`.
    pub fn write_csv_rows<W: Write>(&self, out: &mut W, path_id: u64) -> io::Result<()> {
        for e in &self.events {
            writeln!(
                out,
                "{path_id},{},{},{},{},{},{}",
                e.time, e.kind, e.pre_value, e.post_value, e.l_total, e.u_total
            )?;
        }
        Ok(())
    }
}

pub const TRACE_HEADER: &str = "path_id,time,kind,pre_value,post_value,L_total,U_total";

/// Time in `[from, to]` that the piecewise-linear `path` spends strictly below `level`.
pub fn occupation_below(path: &RefractedPath, level: f64, from: f64, to: f64) -> f64 {
    let mut total = 0.0;
    for (t0, y0, t1, y1) in path.segments() {
        let lo = t0.max(from);
        let hi = t1.min(to);
        if hi <= lo {
            continue;
        }
        let dt = t1 - t0;
        let at = |t: f64| {
            if dt == 0.0 {
                y0
            } else {
                y0 + (y1 - y0) * (t - t0) / dt
            }
        };
        let (va, vb) = (at(lo), at(hi));
        total += if va < level && vb < level {
            hi - lo
        } else if va >= level && vb >= level {
            0.0
        } else {
            // Exactly one crossing inside [lo, hi].
            let cross = lo + (level - va) * (hi - lo) / (vb - va);
            if va < level {
                cross - lo
            } else {
                hi - cross
            }
        };
    }
    total
}

/// Exact time the path spends below zero during `[0, t]`.
pub fn occupation_below_zero(path: &RefractedPath, t: f64) -> f64 {
    occupation_below(path, 0.0, 0.0, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claim {
    pub time: f64,
    pub size: f64,
}

/// A recorded sample of the free (unrefracted) process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreePath {
    pub x0: f64,
    pub premium_rate: f64,
    pub claims: Vec<Claim>,
    pub horizon: f64,
}

impl FreePath {
    /// `X_t`, right-continuous at claim times.
    pub fn value_at(&self, t: f64) -> f64 {
        let lost: f64 = self
            .claims
            .iter()
            .take_while(|c| c.time <= t)
            .map(|c| c.size)
            .sum();
        self.x0 + self.premium_rate * t - lost
    }

    pub fn to_path(&self) -> RefractedPath {
        let mut events = Vec::with_capacity(self.claims.len() + 2);
        events.push(PathEvent {
            time: 0.0,
            kind: EventKind::Start,
            pre_value: self.x0,
            post_value: self.x0,
            l_total: 0.0,
            u_total: 0.0,
        });
        let mut lost = 0.0;
        for c in &self.claims {
            let pre = self.x0 + self.premium_rate * c.time - lost;
            lost += c.size;
            events.push(PathEvent {
                time: c.time,
                kind: EventKind::Jump,
                pre_value: pre,
                post_value: pre - c.size,
                l_total: 0.0,
                u_total: 0.0,
            });
        }
        let end = self.value_at(self.horizon);
        events.push(PathEvent {
            time: self.horizon,
            kind: EventKind::Horizon,
            pre_value: end,
            post_value: end,
            l_total: 0.0,
            u_total: 0.0,
        });
        RefractedPath {
            events,
            gamma_l: 0.0,
            gamma_u: 0.0,
            a: f64::NEG_INFINITY,
            b: f64::INFINITY,
        }
    }

    pub fn replay(&self) -> ReplaySource<'_> {
        ReplaySource {
            claims: &self.claims,
            next: 0,
        }
    }
}

/// Supplies claim arrivals to the path engines.
pub trait ClaimSource {
    /// Absolute time and size of the next claim; `None` if no claim follows.
    fn next_claim(&mut self) -> Option<Claim>;
}

/// Fresh claims drawn from the model.
pub struct SampledClaims<'a, R> {
    model: &'a LevyModel,
    rng: R,
    clock: f64,
}

impl<'a, R: Rng> SampledClaims<'a, R> {
    pub fn new(model: &'a LevyModel, rng: R) -> Self {
        Self {
            model,
            rng,
            clock: 0.0,
        }
    }
}

impl<R: Rng> ClaimSource for SampledClaims<'_, R> {
    fn next_claim(&mut self) -> Option<Claim> {
        let rate = self.model.jump_intensity();
        if rate == 0.0 {
            return None;
        }
        let gap: f64 = Exp1.sample(&mut self.rng);
        self.clock += gap / rate;
        let size = self.model.claims().sample(&mut self.rng);
        Some(Claim {
            time: self.clock,
            size,
        })
    }
}

/// Claims replayed from a recorded [`FreePath`].
pub struct ReplaySource<'a> {
    claims: &'a [Claim],
    next: usize,
}

impl ClaimSource for ReplaySource<'_> {
    fn next_claim(&mut self) -> Option<Claim> {
        let c = self.claims.get(self.next).copied();
        self.next += 1;
        c
    }
}

/// Exact sample of the free Cramér–Lundberg path on `[0, t_max]`.
pub fn simulate_free_segment<R: Rng>(model: &LevyModel, rng: R, x0: f64, t_max: f64) -> FreePath {
    let mut source = SampledClaims::new(model, rng);
    let mut claims = Vec::new();
    while let Some(c) = source.next_claim() {
        if c.time > t_max {
            break;
        }
        claims.push(c);
    }
    FreePath {
        x0,
        premium_rate: model.premium_rate(),
        claims,
        horizon: t_max,
    }
}
