//! Brownian motion and BES(3) paths, hitting times, Williams time reversal,
//! the BES(3) path decomposition and the BES(3) change of measure.
//!
//! Paths carry explicit sample times. Samplers that run to a hitting time use
//! the base step `h` near the level of interest and geometrically larger steps
//! far from it (see [`StepRule`]). Level crossings between two grid points are
//! detected with the Brownian-bridge crossing probability.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::special::erf;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Bm,
    Bes3,
}

impl PathKind {
    pub fn swap(self) -> Self {
        match self {
            PathKind::Bm => PathKind::Bes3,
            PathKind::Bes3 => PathKind::Bm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Base step.
    pub h: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: PathKind,
    pub start: f64,
    /// Hitting level when the path is stopped at a first or last hit.
    pub level: Option<f64>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap_or(&self.start)
    }

    /// Linear interpolation of the path at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.values[0],
            k if k >= self.len() => self.last(),
            k => {
                let (t0, t1) = (self.times[k - 1], self.times[k]);
                let w = (t - t0) / (t1 - t0);
                self.values[k - 1] * (1.0 - w) + self.values[k] * w
            }
        }
    }

    /// Trapezoidal `∫ e^{−c·path(t)} dt` over the whole path.
    pub fn exp_functional(&self, c: f64) -> f64 {
        let mut s = 0.0;
        for k in 1..self.len() {
            let dt = self.times[k] - self.times[k - 1];
            s += 0.5 * dt * ((-c * self.values[k - 1]).exp() + (-c * self.values[k]).exp());
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() || self.times.len() != self.values.len() {
            return Err(Error::Contract("path needs matching, nonempty times and values".into()));
        }
        if self.values[0] != self.start {
            return Err(Error::Contract("path does not begin at its start value".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Contract("path times must increase".into()));
        }
        if self.kind == PathKind::Bes3 && self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract("BES(3) path takes a negative value".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub level: f64,
    pub first_hit: Option<usize>,
    pub last_hit: Option<usize>,
    pub first_time: Option<f64>,
    pub last_time: Option<f64>,
    pub ptol: f64,
}

/// Step sizes `max(h, min(h·e^{θ·c·dist}, κ·dist²))`, where `dist ≥ 0` is
/// the distance into the region where `e^{−c·dist}` weights are negligible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub h: f64,
    pub c: f64,
    pub theta: f64,
    pub kappa: f64,
}

impl StepRule {
    pub fn new(h: f64, c: f64) -> Self {
        Self { h, c, theta: 2.0 / 3.0, kappa: 0.04 }
    }

    /// Fixed step `h` everywhere.
    pub fn fixed(h: f64) -> Self {
        Self { h, c: 0.0, theta: 0.0, kappa: 0.0 }
    }

    pub fn step(&self, dist: f64) -> f64 {
        if !(dist > 0.0) || self.kappa == 0.0 {
            return self.h;
        }
        let grow = self.h * (self.theta * self.c * dist).min(700.0).exp();
        self.h.max(grow.min(self.kappa * dist * dist))
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::Domain(format!("step must be positive, got {}", self.h)));
        }
        Ok(())
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Probability that a Brownian bridge between `a` and `b` over time `dt`
/// touches a level at distances `da, db ≥ 0` from its endpoints.
pub fn bridge_cross_prob(da: f64, db: f64, dt: f64) -> f64 {
    if da <= 0.0 || db <= 0.0 {
        return 1.0;
    }
    (-2.0 * da * db / dt).exp()
}

/// Standard Brownian motion on `[0, T]` started at `start`.
pub fn sample_bm(t_end: f64, h: f64, start: f64, rng: &mut StreamRng) -> Result<Path> {
    check_horizon(t_end, h)?;
    let n = steps_for(t_end, h);
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let (mut t, mut b) = (0.0, start);
    times.push(t);
    values.push(b);
    for k in 0..n {
        let next = if k + 1 == n { t_end } else { (k + 1) as f64 * h };
        b += (next - t).sqrt() * normal(rng);
        t = next;
        times.push(t);
        values.push(b);
    }
    Ok(Path { h, times, values, kind: PathKind::Bm, start, level: None })
}

/// BES(3) on `[0, T]` from `start`, as the norm of a 3-d Brownian motion.
pub fn sample_bes3(start: f64, t_end: f64, h: f64, rng: &mut StreamRng) -> Result<Path> {
    if !(start >= 0.0) {
        return Err(Error::Domain(format!("BES(3) start must be nonnegative, got {start}")));
    }
    check_horizon(t_end, h)?;
    let n = steps_for(t_end, h);
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut w = Walker3::new(start);
    times.push(0.0);
    values.push(start);
    for k in 0..n {
        let next = if k + 1 == n { t_end } else { (k + 1) as f64 * h };
        w.advance(next - w.t, rng);
        times.push(w.t);
        values.push(w.norm());
    }
    Ok(Path { h, times, values, kind: PathKind::Bes3, start, level: None })
}

fn check_horizon(t_end: f64, h: f64) -> Result<()> {
    if !(t_end > 0.0) || !(h > 0.0) || !t_end.is_finite() {
        return Err(Error::Domain(format!("need T > 0 and h > 0, got T = {t_end}, h = {h}")));
    }
    Ok(())
}

fn steps_for(t_end: f64, h: f64) -> usize {
    ((t_end / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// 3-d Brownian position.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Walker3 {
    pub t: f64,
    pos: [f64; 3],
}

impl Walker3 {
    pub fn new(start: f64) -> Self {
        Self { t: 0.0, pos: [start, 0.0, 0.0] }
    }

    pub fn norm(&self) -> f64 {
        (self.pos[0] * self.pos[0] + self.pos[1] * self.pos[1] + self.pos[2] * self.pos[2]).sqrt()
    }

    pub fn advance(&mut self, dt: f64, rng: &mut StreamRng) {
        let s = dt.sqrt();
        for p in &mut self.pos {
            *p += s * normal(rng);
        }
        self.t += dt;
    }
}

/// Brownian motion from 0 stopped at its first hit of `x`, with the default
/// step rule (`c = 2`).
pub fn run_to_first_hit(x: f64, h: f64, rng: &mut StreamRng, max_t: f64) -> Result<(Path, HittingRecord)> {
    run_to_first_hit_with(x, 0.0, &StepRule::new(h, 2.0), rng, max_t)
}

/// Brownian motion from `start` stopped at its first hit of `x` (either side).
pub fn run_to_first_hit_with(x: f64, start: f64, rule: &StepRule, rng: &mut StreamRng, max_t: f64) -> Result<(Path, HittingRecord)> {
    rule.validate()?;
    let gap = x - start;
    if !(gap.abs() > 0.0) || !gap.is_finite() {
        return Err(Error::Domain(format!("level {x} must differ from the start {start}")));
    }
    let dir = gap.signum();
    let mut times = vec![0.0];
    let mut values = vec![start];
    let (mut t, mut b) = (0.0, start);
    loop {
        let dist = dir * (x - b);
        let dt = rule.step(dist);
        if t + dt > max_t {
            let p = erf(gap.abs() / (2.0 * max_t).sqrt());
            return Err(Error::Truncation {
                message: format!("no hit of level {x} before time {max_t}"),
                probability: p,
            });
        }
        let nb = b + dt.sqrt() * normal(rng);
        let nd = dir * (x - nb);
        if nd <= 0.0 {
            let frac = dist / (dist - nd);
            t += frac * dt;
            push_hit(&mut times, &mut values, t, x);
            break;
        }
        if rng.random::<f64>() < bridge_cross_prob(dist, nd, dt) {
            t += 0.5 * dt;
            push_hit(&mut times, &mut values, t, x);
            break;
        }
        t += dt;
        b = nb;
        times.push(t);
        values.push(b);
    }
    let idx = values.len() - 1;
    let rec = HittingRecord { level: x, first_hit: Some(idx), last_hit: None, first_time: Some(t), last_time: None, ptol: 0.0 };
    Ok((Path { h: rule.h, times, values, kind: PathKind::Bm, start, level: Some(x) }, rec))
}

fn push_hit(times: &mut Vec<f64>, values: &mut Vec<f64>, t: f64, x: f64) {
    if t > *times.last().unwrap() {
        times.push(t);
        values.push(x);
    } else {
        *values.last_mut().unwrap() = x;
    }
}

/// `t ↦ x − B_{T_x − t}` for a path stopped at level `x`. Applied to a BES(3)
/// path stopped at its last hit of `x` it gives the Brownian path back.
pub fn williams_reverse(p: &Path) -> Result<Path> {
    let x = p.level.ok_or_else(|| Error::Contract("path is not stopped at a hitting level".into()))?;
    if p.is_empty() || (p.last() - x).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(Error::Contract(format!("path ends at {} instead of its level {x}", p.last())));
    }
    let end = p.end_time();
    let times: Vec<f64> = p.times.iter().rev().map(|&s| end - s).collect();
    let mut values: Vec<f64> = p.values.iter().rev().map(|&v| x - v).collect();
    values[0] = 0.0;
    if let Some(v) = values.last_mut() {
        *v = x - p.start;
    }
    let kind = p.kind.swap();
    if kind == PathKind::Bes3 {
        for v in &mut values {
            *v = v.max(0.0);
        }
    }
    Ok(Path { h: p.h, times, values, kind, start: 0.0, level: Some(x) })
}

/// BES(3) from 0 until it exceeds `x/ptol`; the path is returned up to its
/// last hit of `x`. Uses the default step rule (`c = 2`).
pub fn last_hit_bes3(x: f64, h: f64, ptol: f64, rng: &mut StreamRng) -> Result<(Path, HittingRecord)> {
    last_hit_bes3_with(x, &StepRule::new(h, 2.0), ptol, rng)
}

pub fn last_hit_bes3_with(x: f64, rule: &StepRule, ptol: f64, rng: &mut StreamRng) -> Result<(Path, HittingRecord)> {
    rule.validate()?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("level must be positive, got {x}")));
    }
    if !(ptol > 0.0 && ptol <= 0.01) {
        return Err(Error::Domain(format!("ptol must lie in (0, 0.01], got {ptol}")));
    }
    let escape = x / ptol;
    let mut w = Walker3::new(0.0);
    let mut times = vec![0.0];
    let mut values = vec![0.0];
    let mut first: Option<(usize, f64)> = None;
    // (index of the step start, crossing time)
    let mut last = (0usize, 0.0f64);
    let mut a = 0.0;
    while a < escape {
        let dt = rule.step(a - x);
        w.advance(dt, rng);
        let b = w.norm();
        let k = values.len() - 1;
        let t0 = w.t - dt;
        if a <= x && b > x {
            let tc = t0 + dt * (x - a) / (b - a);
            last = (k, tc);
            first.get_or_insert((k + 1, tc));
        } else if a > x && b > x && rng.random::<f64>() < bridge_cross_prob(a - x, b - x, dt) {
            last = (k, t0 + 0.5 * dt);
        }
        times.push(w.t);
        values.push(b);
        a = b;
    }
    let (k, tc) = last;
    times.truncate(k + 1);
    values.truncate(k + 1);
    push_hit(&mut times, &mut values, tc, x);
    let idx = values.len() - 1;
    let rec = HittingRecord {
        level: x,
        first_hit: first.map(|f| f.0.min(idx)),
        last_hit: Some(idx),
        first_time: first.map(|f| f.1.min(tc)),
        last_time: Some(tc),
        ptol,
    };
    Ok((Path { h: rule.h, times, values, kind: PathKind::Bes3, start: 0.0, level: Some(x) }, rec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub path: Path,
    pub u: f64,
    /// First hit of `x·u` by the Brownian segment, if before `T`.
    pub switch_time: Option<f64>,
}

/// BES(3) from `x > 0` built as Brownian motion from `x` until it hits `xU`,
/// followed by `xU + β⁰` with `β⁰` a BES(3) from 0 and `U` uniform.
pub fn path_decomposition_sample(x: f64, h: f64, t_end: f64, rng: &mut StreamRng) -> Result<Decomposition> {
    let u: f64 = rng.random();
    path_decomposition_with_u(x, u, h, t_end, rng)
}

pub fn path_decomposition_with_u(x: f64, u: f64, h: f64, t_end: f64, rng: &mut StreamRng) -> Result<Decomposition> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("start must be positive, got {x}")));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("U must lie in [0, 1], got {u}")));
    }
    check_horizon(t_end, h)?;
    let floor = x * u;
    let mut times = vec![0.0];
    let mut values = vec![x];
    let mut t = 0.0;
    let mut switch = if u >= 1.0 { Some(0.0) } else { None };
    let mut b = x;
    while switch.is_none() && t < t_end {
        let dt = h.min(t_end - t);
        let nb = b + dt.sqrt() * normal(rng);
        if nb <= floor {
            let tc = t + dt * (b - floor) / (b - nb);
            push_hit(&mut times, &mut values, tc, floor);
            switch = Some(tc);
            t = tc;
            break;
        }
        if rng.random::<f64>() < bridge_cross_prob(b - floor, nb - floor, dt) {
            let tc = t + 0.5 * dt;
            push_hit(&mut times, &mut values, tc, floor);
            switch = Some(tc);
            t = tc;
            break;
        }
        t += dt;
        b = nb;
        times.push(t);
        values.push(b);
    }
    if switch.is_some() {
        let mut w = Walker3::new(0.0);
        while t < t_end {
            let dt = h.min(t_end - t);
            w.advance(dt, rng);
            t = if t_end - t - dt <= 1e-12 * t_end { t_end } else { t + dt };
            times.push(t);
            values.push(floor + w.norm());
        }
    }
    Ok(Decomposition {
        path: Path { h, times, values, kind: PathKind::Bes3, start: x, level: None },
        u,
        switch_time: switch,
    })
}

/// Change-of-measure weight `(1/x)·1{max_{s≤t} B_s ≤ x}·(x − B_t)` evaluated
/// on the grid path, with the indicator replaced by its conditional
/// expectation given the grid values (the Brownian-bridge no-crossing
/// probability of every step).
pub fn radnik_weight(p: &Path, x: f64, t_index: usize) -> Result<f64> {
    check_radnik(p, x, t_index)?;
    let mut keep = 1.0;
    for k in 0..t_index {
        let (a, b) = (x - p.values[k], x - p.values[k + 1]);
        if a <= 0.0 || b <= 0.0 {
            return Ok(0.0);
        }
        keep *= 1.0 - bridge_cross_prob(a, b, p.times[k + 1] - p.times[k]);
    }
    Ok(keep * (x - p.values[t_index]) / x)
}

/// Weight with the running maximum taken over grid points only.
pub fn radnik_weight_discrete(p: &Path, x: f64, t_index: usize) -> Result<f64> {
    check_radnik(p, x, t_index)?;
    if p.values[..=t_index].iter().any(|&v| v > x) {
        return Ok(0.0);
    }
    Ok((x - p.values[t_index]) / x)
}

fn check_radnik(p: &Path, x: f64, t_index: usize) -> Result<()> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("level must be positive, got {x}")));
    }
    if p.kind != PathKind::Bm || p.start != 0.0 {
        return Err(Error::Contract("weight needs a Brownian path started at 0".into()));
    }
    if t_index >= p.len() {
        return Err(Error::Domain(format!("time index {t_index} beyond path length {}", p.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngPolicy, Stream};
    use crate::special::{bes3_cdf, chi3_cdf, normal_sf};
    use crate::stats::{ks_one_sample, ks_two_sample, ks_weighted_one_sample, Estimate};
    use approx::assert_relative_eq;

    fn rng(i: u64) -> StreamRng {
        RngPolicy::new(2024).stream(Stream::Custom, i)
    }

    #[test]
    fn bm_basics() {
        let p = sample_bm(1.0, 0.01, 0.0, &mut rng(0)).unwrap();
        assert_eq!(p.len(), 101);
        p.validate().unwrap();
        let q = sample_bm(1.0, 0.01, 2.5, &mut rng(0)).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            assert_relative_eq!(b - a, 2.5, epsilon = 1e-12);
        }
        assert_eq!(p, sample_bm(1.0, 0.01, 0.0, &mut rng(0)).unwrap());
        let one = sample_bes3(0.3, 0.1, 0.1, &mut rng(1)).unwrap();
        assert_eq!(one.len(), 2);
        assert!(sample_bm(0.0, 0.1, 0.0, &mut rng(0)).is_err());
    }

    #[test]
    fn bm_terminal_variance() {
        let xs: Vec<f64> = (0..20_000).map(|i| sample_bm(2.0, 0.5, 0.0, &mut rng(i)).unwrap().last()).collect();
        let v: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let e = Estimate::from_samples(&v).unwrap();
        assert!((e.mean - 2.0).abs() < 3.0 * e.stderr);
    }

    #[test]
    fn bes3_marginal_is_chi3() {
        let xs: Vec<f64> = (0..20_000).map(|i| sample_bes3(0.0, 0.7, 0.1, &mut rng(i)).unwrap().last() / 0.7f64.sqrt()).collect();
        assert!(ks_one_sample(&xs, chi3_cdf).unwrap().p_value > 0.01);
    }

    #[test]
    fn first_hit_reflection_law() {
        let max_t = 1e14;
        let mut hits = Vec::new();
        for i in 0..4000 {
            let (p, r) = run_to_first_hit(1.0, 0.01, &mut rng(i), max_t).unwrap();
            assert_eq!(p.last(), 1.0);
            assert_eq!(r.first_time, Some(p.end_time()));
            p.validate().unwrap();
            hits.push(r.first_time.unwrap());
        }
        let ks = ks_one_sample(&hits, |t| 2.0 * normal_sf(1.0 / t.sqrt())).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn first_hit_truncation() {
        match run_to_first_hit(1e6, 0.01, &mut rng(0), 10.0) {
            Err(Error::Truncation { probability, .. }) => assert!(probability > 0.99),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reversal_is_an_involution() {
        let (p, _) = run_to_first_hit(0.8, 0.01, &mut rng(5), 1e12).unwrap();
        let r = williams_reverse(&p).unwrap();
        assert_eq!(r.kind, PathKind::Bes3);
        assert_eq!(r.values[0], 0.0);
        assert_relative_eq!(r.last(), 0.8);
        let back = williams_reverse(&r).unwrap();
        assert_eq!(back.kind, PathKind::Bm);
        for (a, b) in back.values.iter().zip(&p.values) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in back.times.iter().zip(&p.times) {
            assert_relative_eq!(a, b, epsilon = 1e-9 * p.end_time().max(1.0));
        }
        let free = sample_bm(1.0, 0.1, 0.0, &mut rng(1)).unwrap();
        assert!(matches!(williams_reverse(&free), Err(Error::Contract(_))));
    }

    #[test]
    fn last_hit_basics() {
        let (p, r) = last_hit_bes3(0.5, 0.01, 1e-3, &mut rng(3)).unwrap();
        p.validate().unwrap();
        assert_eq!(p.last(), 0.5);
        assert!(r.first_hit.unwrap() <= r.last_hit.unwrap());
        let (tiny, _) = last_hit_bes3(1e-9, 0.01, 1e-3, &mut rng(3)).unwrap();
        assert!(tiny.end_time() <= 0.01);
        assert!(last_hit_bes3(1.0, 0.01, 0.5, &mut rng(3)).is_err());
    }

    #[test]
    fn reversal_matches_last_hit_sampler() {
        let c = 2f64.sqrt();
        let n = 3000;
        let a: Vec<f64> = (0..n)
            .map(|i| williams_reverse(&run_to_first_hit(1.0, 0.005, &mut rng(i), 1e15).unwrap().0).unwrap().exp_functional(c))
            .collect();
        let b: Vec<f64> = (0..n).map(|i| last_hit_bes3(1.0, 0.005, 1e-4, &mut rng(100_000 + i)).unwrap().0.exp_functional(c)).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
    }

    #[test]
    fn bes3_return_probability() {
        // From a, BES(3) hits x before R with probability (1/a − 1/R)/(1/x − 1/R).
        let (x, a, big) = (1.0, 2.0, 40.0);
        let n = 4000;
        let mut back = 0usize;
        for i in 0..n {
            let mut r = rng(i);
            let mut w = Walker3::new(a);
            let mut prev = a;
            while prev < big {
                let dt = (0.01 * (prev - x) * (prev - x)).max(1e-4);
                w.advance(dt, &mut r);
                let b = w.norm();
                if b <= x || r.random::<f64>() < bridge_cross_prob(prev - x, b - x, dt) {
                    back += 1;
                    break;
                }
                prev = b;
            }
        }
        let p = back as f64 / n as f64;
        let target = (1.0 / a - 1.0 / big) / (1.0 / x - 1.0 / big);
        let se = (target * (1.0 - target) / n as f64).sqrt();
        assert!((p - target).abs() < 3.0 * se, "{p} vs {target}");
    }

    #[test]
    fn decomposition_properties() {
        let d = path_decomposition_with_u(1.0, 1.0, 0.01, 0.5, &mut rng(0)).unwrap();
        assert_eq!(d.switch_time, Some(0.0));
        assert!(d.path.values.iter().all(|&v| v >= 1.0));
        let d = path_decomposition_with_u(1.0, 0.6, 0.01, 50.0, &mut rng(1)).unwrap();
        let ts = d.switch_time.unwrap();
        let k = d.path.times.iter().position(|&t| t == ts).unwrap();
        assert_relative_eq!(d.path.values[k], 0.6);
        let seg_min = d.path.values[..=k].iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(seg_min, 0.6);
        assert_relative_eq!(d.path.end_time(), 50.0);
    }

    #[test]
    fn decomposition_marginal() {
        let (x, t) = (1.0, 0.5);
        let xs: Vec<f64> = (0..6000).map(|i| path_decomposition_sample(x, 0.005, t, &mut rng(i)).unwrap().path.last()).collect();
        assert!(ks_one_sample(&xs, |y| bes3_cdf(x, y, t)).unwrap().p_value > 0.01);
    }

    #[test]
    fn radnik_mean_and_law() {
        let (x, n) = (0.7, 20_000u64);
        let mut ws = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let p = sample_bm(1.0, 0.02, 0.0, &mut rng(i)).unwrap();
            let k = p.len() - 1;
            let w = radnik_weight(&p, x, k).unwrap();
            assert!(w <= radnik_weight_discrete(&p, x, k).unwrap() + 1e-15);
            ws.push(w);
            ys.push(x - p.last());
        }
        let e = Estimate::from_samples(&ws).unwrap();
        assert!((e.mean - 1.0).abs() < 3.0 * e.stderr, "{e:?}");
        let ks = ks_weighted_one_sample(&ys, &ws, |y| bes3_cdf(x, y, 1.0)).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn radnik_compatibility() {
        // E[w_t ; B_s ≤ 0] = E[w_s ; B_s ≤ 0] for s < t.
        let x = 0.5;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..20_000 {
            let p = sample_bm(1.0, 0.05, 0.0, &mut rng(i)).unwrap();
            let s = 10;
            let ind = (p.values[s] <= 0.0) as u8 as f64;
            a.push(ind * radnik_weight(&p, x, p.len() - 1).unwrap());
            b.push(ind * radnik_weight(&p, x, s).unwrap());
        }
        let diff: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
        let e = Estimate::from_samples(&diff).unwrap();
        assert!(e.mean.abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn radnik_zero_after_exceeding() {
        let mut p = sample_bm(1.0, 0.1, 0.0, &mut rng(2)).unwrap();
        p.values[3] = 5.0;
        assert_eq!(radnik_weight(&p, 1.0, 5).unwrap(), 0.0);
        assert_eq!(radnik_weight_discrete(&p, 1.0, 5).unwrap(), 0.0);
        assert!(radnik_weight(&p, 1.0, 99).is_err());
    }
}
