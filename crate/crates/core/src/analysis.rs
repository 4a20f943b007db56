//! Metrics computed from a finished trace, and the reference-model optimizer.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{Config, RefKind};
use crate::sim::{run_to_end, Mode};
use crate::trace::{Sample, Trace};

/// Threshold, as a multiple of `v_dc`, above which terminal maxima count as
/// ringing peaks.
pub const RING_THRESHOLD: f64 = 1.2;

/// Fraction of the peak `|e|` that defines settling.
pub const SETTLE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub peak_ratio: f64,
    pub ring_freq_hz: Option<f64>,
    pub branch_loss_w: f64,
    pub settle_time_s: f64,
    pub clamp_count: u64,
}

impl Metrics {
    /// `key = value` lines. An undetected ringing frequency prints `absent`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "peak_ratio = {:?}", self.peak_ratio);
        match self.ring_freq_hz {
            Some(f) => {
                let _ = writeln!(s, "ring_freq_hz = {f:?}");
            }
            None => s.push_str("ring_freq_hz = absent\n"),
        }
        let _ = writeln!(s, "branch_loss_w = {:?}", self.branch_loss_w);
        let _ = writeln!(s, "settle_time_s = {:?}", self.settle_time_s);
        let _ = writeln!(s, "clamp_count = {}", self.clamp_count);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}

/// `max |v_mot| / v_dc`; zero for an empty trace.
pub fn peak_ratio(trace: &Trace, v_dc: f64) -> f64 {
    trace.samples.iter().map(|s| s.v_mot.abs()).fold(0.0, f64::max) / v_dc
}

fn crossing(a: &Sample, b: &Sample, level: f64) -> f64 {
    let f = (level - a.v_mot) / (b.v_mot - a.v_mot);
    a.t + f * (b.t - a.t)
}

/// Ringing frequency of `v_mot` inside `[t0, t1]`.
///
/// Each excursion above `threshold` counts as one peak, located halfway
/// between its up and down crossings so that flat tops are handled. The
/// result is the median of the reciprocal peak-to-peak intervals, or `None`
/// with fewer than three complete peaks.
pub fn ringing_frequency(trace: &Trace, threshold: f64, t0: f64, t1: f64) -> Option<f64> {
    let s: Vec<&Sample> = trace.samples.iter().filter(|s| s.t >= t0 && s.t <= t1).collect();
    let mut peaks = Vec::new();
    let mut rise = None;
    for w in s.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.v_mot <= threshold && b.v_mot > threshold {
            rise = Some(crossing(a, b, threshold));
        } else if a.v_mot > threshold && b.v_mot <= threshold {
            if let Some(up) = rise.take() {
                peaks.push(0.5 * (up + crossing(a, b, threshold)));
            }
        }
    }
    if peaks.len() < 3 {
        return None;
    }
    let mut f: Vec<f64> = peaks.windows(2).map(|p| 1.0 / (p[1] - p[0])).collect();
    f.sort_by(f64::total_cmp);
    let n = f.len();
    Some(if n % 2 == 1 {
        f[n / 2]
    } else {
        0.5 * (f[n / 2 - 1] + f[n / 2])
    })
}

/// From the first edge reaching the motor to the next one.
pub fn first_post_edge_window(config: &Config) -> (f64, f64) {
    let tau = config.cable.delay();
    let half = 0.5 / config.pwm.f_sw;
    (tau, tau + half)
}

/// Mean power in the branch over the whole run, `sum(v_coil * i_branch) / T`.
pub fn branch_loss(trace: &Trace) -> f64 {
    let (Some(h), Some(first), Some(last)) = (trace.dt(), trace.samples.first(), trace.samples.last()) else {
        return 0.0;
    };
    let span = last.t - first.t;
    if span <= 0.0 {
        return 0.0;
    }
    let energy: f64 = trace.samples[1..].iter().map(|s| s.v_coil * s.i_branch * h).sum();
    energy / span
}

/// `|e|` recovered from the recorded Lyapunov value.
pub fn abs_error(s: &Sample) -> f64 {
    (2.0 * s.lyap - s.zeq * s.i_hf * s.i_hf).max(0.0).sqrt()
}

/// First time after which `|e|` stays below a tenth of its global peak.
pub fn settle_time(trace: &Trace) -> f64 {
    let Some(first) = trace.samples.first() else {
        return 0.0;
    };
    let errs: Vec<f64> = trace.samples.iter().map(abs_error).collect();
    let peak = errs.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return first.t;
    }
    match errs.iter().rposition(|&e| e >= SETTLE_FRACTION * peak) {
        Some(k) if k + 1 < errs.len() => trace.samples[k + 1].t,
        Some(k) => trace.samples[k].t,
        None => first.t,
    }
}

/// Arrivals of the recorded duty at either bound.
pub fn clamp_count(trace: &Trace, d_min: f64, d_max: f64) -> u64 {
    let mut count = 0;
    let mut prev = None;
    for s in &trace.samples {
        let at = if s.duty == d_min {
            Some(d_min)
        } else if s.duty == d_max {
            Some(d_max)
        } else {
            None
        };
        if at.is_some() && at != prev {
            count += 1;
        }
        prev = at;
    }
    count
}

pub fn metrics(trace: &Trace, config: &Config) -> Metrics {
    let v_dc = config.pwm.v_dc;
    let (t0, t1) = first_post_edge_window(config);
    Metrics {
        peak_ratio: peak_ratio(trace, v_dc),
        ring_freq_hz: ringing_frequency(trace, RING_THRESHOLD * v_dc, t0, t1),
        branch_loss_w: branch_loss(trace),
        settle_time_s: settle_time(trace),
        clamp_count: clamp_count(trace, config.branch.d_min, config.branch.d_max),
    }
}

/// Statistics of the samples between two consecutive inverter edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Burst {
    pub t_start: f64,
    pub t_end: f64,
    pub mean_lyap: f64,
    pub peak_abs_e: f64,
    pub peak_ratio: f64,
    pub final_duty: f64,
}

/// Splits a trace at the inverter edge times `k / (2 f_sw)`. Every burst
/// holds the full ring of its own edge, which arrives `tau` later.
pub fn bursts(trace: &Trace, config: &Config) -> Vec<Burst> {
    let half = 0.5 / config.pwm.f_sw;
    let Some(last) = trace.samples.last() else {
        return Vec::new();
    };
    // Guard against the end time landing a rounding error past an edge.
    let n = ((last.t / half) - 1e-9).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n);
    let mut it = trace.samples.iter().peekable();
    for k in 0..n {
        let (t_start, t_end) = (k as f64 * half, (k + 1) as f64 * half);
        let (mut sum, mut count, mut pe, mut pv, mut d) = (0.0, 0usize, 0.0f64, 0.0f64, f64::NAN);
        while let Some(s) = it.next_if(|s| s.t < t_end || k + 1 == n) {
            sum += s.lyap;
            count += 1;
            pe = pe.max(abs_error(s));
            pv = pv.max(s.v_mot.abs());
            d = s.duty;
        }
        out.push(Burst {
            t_start,
            t_end,
            mean_lyap: if count > 0 { sum / count as f64 } else { 0.0 },
            peak_abs_e: pe,
            peak_ratio: pv / config.pwm.v_dc,
            final_duty: d,
        });
    }
    out
}

// ----------------------------------------------------------------------------
// Optimizer

/// Closed ranges searched for each reference-model parameter. Ranges with
/// equal ends pin the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchSpace {
    pub alpha: (f64, f64),
    pub omega: (f64, f64),
    pub gamma: (f64, f64),
}

impl SearchSpace {
    /// A factor `span` either side of the config's own values.
    pub fn around(config: &Config, span: f64) -> Self {
        let m = &config.mrac;
        Self {
            alpha: (m.alpha / span, m.alpha * span),
            omega: (m.omega / span, m.omega * span),
            gamma: (m.gamma / span, m.gamma * span),
        }
    }

    fn ranges(&self) -> [(f64, f64); 3] {
        [self.alpha, self.omega, self.gamma]
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.ranges()
            .iter()
            .zip(p)
            .all(|(&(lo, hi), x)| x >= lo && x <= hi)
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in ["alpha", "omega", "gamma"].iter().zip(self.ranges()) {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::argument(
                    "search space",
                    format!("{name} range must satisfy 0 < lo <= hi < inf, got [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    // Unit-cube coordinates are logarithmic; the ranges span decades.
    fn point_at(&self, u: [f64; 3]) -> [f64; 3] {
        let r = self.ranges();
        std::array::from_fn(|k| {
            let (lo, hi) = r[k];
            if hi == lo {
                lo
            } else {
                (lo.ln() + u[k].clamp(0.0, 1.0) * (hi.ln() - lo.ln()))
                    .exp()
                    .clamp(lo, hi)
            }
        })
    }

    fn unit_of(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.ranges();
        std::array::from_fn(|k| {
            let (lo, hi) = r[k];
            if hi == lo {
                0.0
            } else {
                ((p[k].clamp(lo, hi).ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub seed: u64,
    /// Maximum number of simulations.
    pub budget: usize,
    /// Random restarts after the one seeded at the config's own point.
    pub restarts: usize,
    pub peak_limit: f64,
    pub mode: Mode,
    /// Worker cap; zero reads `REFLECTWAVE_THREADS` or uses every core.
    pub threads: usize,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 60,
            restarts: 2,
            peak_limit: 1.25,
            mode: Mode::Adaptive,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub index: usize,
    pub restart: usize,
    pub alpha: f64,
    pub omega: f64,
    pub gamma: f64,
    pub metrics: Option<Metrics>,
    pub feasible: bool,
    pub error: Option<String>,
}

impl Evaluation {
    pub fn point(&self) -> [f64; 3] {
        [self.alpha, self.omega, self.gamma]
    }

    /// Feasible points rank by loss and beat every infeasible point, which
    /// rank by how far they overshoot.
    fn rank(&self, limit: f64) -> (u8, f64) {
        match (&self.metrics, self.feasible) {
            (Some(m), true) => (0, m.branch_loss_w),
            (Some(m), false) => (1, m.peak_ratio - limit),
            (None, _) => (2, 0.0),
        }
    }
}

fn better(a: &Evaluation, b: &Evaluation, limit: f64) -> bool {
    let (ra, rb) = (a.rank(limit), b.rank(limit));
    ra.0 < rb.0 || (ra.0 == rb.0 && ra.1 < rb.1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeResult {
    /// Best point meeting the overshoot limit.
    pub best: Option<Evaluation>,
    /// Best point overall when none met it.
    pub best_infeasible: Option<Evaluation>,
    pub log: Vec<Evaluation>,
}

impl OptimizeResult {
    pub fn feasible(&self) -> bool {
        self.best.is_some()
    }

    pub fn log_csv(&self) -> String {
        let mut s = String::from("index,restart,alpha,omega,gamma,peak_ratio,branch_loss_w,feasible,error\n");
        for e in &self.log {
            let (p, l) = e
                .metrics
                .map(|m| (format!("{:?}", m.peak_ratio), format!("{:?}", m.branch_loss_w)))
                .unwrap_or_default();
            let err = e.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{p},{l},{},{err}",
                e.index, e.restart, e.alpha, e.omega, e.gamma, e.feasible
            );
        }
        s
    }
}

pub fn worker_count(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::env::var("REFLECTWAVE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a pool capped at `worker_count(threads)`.
pub fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(threads))
        .build()
        .map_err(|e| Error::argument("threads", e.to_string()))?;
    Ok(pool.install(f))
}

fn evaluate(config: &Config, p: [f64; 3], mode: Mode, limit: f64) -> (Option<Metrics>, bool, Option<String>) {
    let mut c = *config;
    c.mrac.alpha = p[0];
    c.mrac.omega = p[1];
    c.mrac.gamma = p[2];
    match run_to_end(&c, mode) {
        Ok(tr) => {
            let m = metrics(&tr, &c);
            (Some(m), m.peak_ratio <= limit, None)
        }
        Err(e) => (None, false, Some(e.to_string())),
    }
}

const GRID: f64 = (1u64 << 30) as f64;

struct Search<'a> {
    config: &'a Config,
    space: SearchSpace,
    opts: OptimizeOptions,
    log: Vec<Evaluation>,
    seen: HashMap<[u64; 3], usize>,
}

impl Search<'_> {
    fn left(&self) -> usize {
        self.opts.budget.saturating_sub(self.log.len())
    }

    /// Evaluates the unseen points in parallel and returns log indices for
    /// all of them, in order. Points past the budget are dropped.
    fn batch(&mut self, restart: usize, units: &[[f64; 3]]) -> Vec<usize> {
        let mut fresh = Vec::new();
        let mut order = Vec::new();
        for u in units {
            let p = self.space.point_at(*u);
            let key = p.map(f64::to_bits);
            if let Some(&i) = self.seen.get(&key) {
                order.push(Some(i));
            } else if fresh.len() < self.left() && !fresh.iter().any(|(k, _)| *k == key) {
                fresh.push((key, p));
                order.push(None);
            }
        }
        let (config, mode, limit) = (self.config, self.opts.mode, self.opts.peak_limit);
        let results: Vec<_> = fresh
            .par_iter()
            .map(|(_, p)| evaluate(config, *p, mode, limit))
            .collect();
        let mut new_idx = Vec::new();
        for ((key, p), (metrics, feasible, error)) in fresh.into_iter().zip(results) {
            let index = self.log.len();
            self.log.push(Evaluation {
                index,
                restart,
                alpha: p[0],
                omega: p[1],
                gamma: p[2],
                metrics,
                feasible,
                error,
            });
            self.seen.insert(key, index);
            new_idx.push(index);
        }
        let mut it = new_idx.into_iter();
        order
            .into_iter()
            .filter_map(|o| o.or_else(|| it.next()))
            .collect()
    }

    fn compass(&mut self, restart: usize, start: [f64; 3]) {
        // On a dyadic grid every move by a power-of-two step is exact, so
        // revisited points hit the cache.
        let start = start.map(|u| (u * GRID).round() / GRID);
        let Some(&first) = self.batch(restart, &[start]).first() else {
            return;
        };
        let (mut here, mut at) = (start, first);
        let mut step = 0.25;
        let limit = self.opts.peak_limit;
        while step >= 1.0 / 64.0 && self.left() > 0 {
            let mut polls = Vec::new();
            for k in 0..3 {
                if self.space.ranges()[k].0 == self.space.ranges()[k].1 {
                    continue;
                }
                if k == 1 && self.config.mrac.kind == RefKind::CriticallyDamped {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let mut u = here;
                    u[k] = (u[k] + sign * step).clamp(0.0, 1.0);
                    if u != here {
                        polls.push(u);
                    }
                }
            }
            let idx = self.batch(restart, &polls);
            let mut best = None;
            for (u, i) in polls.iter().zip(&idx) {
                let cur = best.map_or(at, |(_, j)| j);
                if better(&self.log[*i], &self.log[cur], limit) {
                    best = Some((*u, *i));
                }
            }
            match best {
                Some((u, i)) => {
                    here = u;
                    at = i;
                }
                None => step /= 2.0,
            }
        }
    }
}

/// Pattern search over the reference-model parameters minimizing
/// `branch_loss_w` subject to `peak_ratio <= peak_limit`.
///
/// The first start is the config's own point (clamped into the space), so
/// a space containing it can only improve on it. Later starts are drawn
/// from a `ChaCha8` stream seeded with `opts.seed`. `omega` is not searched
/// for a critically damped model, which ignores it.
pub fn optimize_refmodel(
    config: &Config,
    space: &SearchSpace,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    space.validate()?;
    if opts.budget == 0 {
        return Err(Error::argument("budget", "must be at least 1"));
    }
    let mut search = Search {
        config,
        space: *space,
        opts: *opts,
        log: Vec::new(),
        seen: HashMap::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<[f64; 3]> =
        std::iter::once(space.unit_of([config.mrac.alpha, config.mrac.omega, config.mrac.gamma]))
            .chain((0..opts.restarts).map(|_| [rng.gen(), rng.gen(), rng.gen()]))
            .collect();
    with_pool(opts.threads, || {
        for (r, s) in starts.into_iter().enumerate() {
            if search.left() == 0 {
                break;
            }
            search.compass(r, s);
        }
    })?;
    let limit = opts.peak_limit;
    let pick = |feasible: bool| {
        search
            .log
            .iter()
            .filter(|e| e.metrics.is_some() && e.feasible == feasible)
            .fold(None::<&Evaluation>, |b, e| match b {
                Some(b) if !better(e, b, limit) => Some(b),
                _ => Some(e),
            })
            .cloned()
    };
    let best = pick(true);
    let best_infeasible = if best.is_none() { pick(false) } else { None };
    Ok(OptimizeResult {
        best,
        best_infeasible,
        log: search.log,
    })
}
