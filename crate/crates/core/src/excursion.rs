//! Two-lineage excursions under the first-parent rule.
//!
//! A pair born at a selective event is followed until it coalesces
//! (separation 0), diverges (separation at least `γ_n`) or overshoots (no
//! decision within `(log n)^{-c}`). The path is split into alternating inner
//! excursions (below `5 R_n`) and outer excursions (above `4 R_n`).

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::events::{csv_err, mark_member_unchecked, next_pair_event};
use crate::geometry::{uniform_in_unit_ball, Point};
use crate::model::ModelParams;
use crate::stats::{ks_two_sample, linear_fit, wilson_interval, KsResult, LinearFit};
use crate::stream::Stream;

/// Covering events allowed per excursion before it is reported truncated.
pub const EXCURSION_EVENT_CAP: u64 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Coalesce,
    Diverge,
    Overshoot,
    /// The event cap was hit before any of the three outcomes.
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Inner,
    Outer,
}

/// A boundary crossing: time since the start and separation just after it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub separation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionRecord {
    pub initial_separation: f64,
    pub outcome: Outcome,
    /// Decision time measured from the start of the excursion.
    pub tau_type: f64,
    /// Index of the inner or outer excursion during which the outcome was
    /// decided; `phase` says which kind.
    pub i_star: u32,
    pub phase: Phase,
    /// `τ^in_i` for `i = 0, 1, ...`.
    pub tau_in: Vec<Crossing>,
    /// `τ^out_i` for `i = 1, 2, ...`.
    pub tau_out: Vec<Crossing>,
    pub events: u64,
    pub jumps: u64,
    /// Largest change in separation caused by a single event.
    pub max_step: f64,
}

impl ExcursionRecord {
    /// Band and trichotomy checks that every completed record must pass.
    pub fn check_invariants(&self, params: &ModelParams) -> std::result::Result<(), String> {
        let r = params.r_n();
        // Relative slack for rounding in the separation norm.
        let eps = 1e-9 * r;
        for (i, c) in self.tau_in.iter().enumerate() {
            let lo = if i == 0 { 5.0 * r } else { 5.0 * r - eps };
            if !(c.separation >= lo - eps && c.separation <= 7.0 * r + eps) {
                return Err(format!("tau_in[{i}] separation {} outside [5R, 7R]", c.separation));
            }
        }
        for (i, c) in self.tau_out.iter().enumerate() {
            if !(c.separation >= 2.0 * r - eps && c.separation <= 4.0 * r + eps) {
                return Err(format!("tau_out[{}] separation {} outside [2R, 4R]", i + 1, c.separation));
            }
        }
        let ins = self.tau_in.iter().map(|c| c.t);
        let outs = self.tau_out.iter().map(|c| c.t);
        let mut merged: Vec<f64> = Vec::new();
        for (a, b) in ins.clone().zip(outs.clone().chain(std::iter::repeat(f64::INFINITY))) {
            merged.push(a);
            if b.is_finite() {
                merged.push(b);
            }
        }
        if self.tau_out.len() > self.tau_in.len() || self.tau_in.len() > self.tau_out.len() + 1 {
            return Err("crossings do not alternate".into());
        }
        if merged.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("crossing times do not interleave".into());
        }
        if self.max_step > 2.0 * r * (1.0 + 1e-9) {
            return Err(format!("separation jumped by {} > 2R", self.max_step));
        }
        match self.outcome {
            Outcome::Truncated => Ok(()),
            _ if self.tau_type > params.overshoot_time() * (1.0 + 1e-12) => {
                Err(format!("decision time {} after the overshoot time", self.tau_type))
            }
            _ => Ok(()),
        }
    }
}

/// Draw `ζ^n`, the distance between the two parents of a selective event
/// covering a given point.
pub fn sample_parent_separation<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> f64 {
    let (a, b) = sample_parent_pair(params, rng);
    a.dist(&b)
}

/// Two parental locations relative to the event centre.
pub(crate) fn sample_parent_pair<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> (Point, Point) {
    let r = params.sample_covering_radius(rng);
    let d = params.d();
    let a = r * uniform_in_unit_ball(d, rng);
    let b = r * uniform_in_unit_ball(d, rng);
    (a, b)
}

/// Terminal state of a pair run.
#[derive(Clone, Debug)]
pub(crate) struct PairRun {
    pub record: ExcursionRecord,
    /// Absolute decision time.
    pub end: f64,
    pub a: Point,
    pub b: Point,
}

/// Follow the pair `(a, b)` from time `t0`. `on_move` sees the new
/// positions after every event that moved a lineage.
pub(crate) fn run_pair<R: Rng + ?Sized>(
    a: Point,
    b: Point,
    t0: f64,
    params: &ModelParams,
    cap: u64,
    rng: &mut R,
    mut on_move: impl FnMut(f64, Point, Point),
) -> PairRun {
    let r = params.r_n();
    let gamma = params.gamma_n();
    let deadline = t0 + params.overshoot_time();
    let u = params.u();
    let (mut a, mut b) = (a, b);
    let mut sep = a.dist(&b);
    let mut rec = ExcursionRecord {
        initial_separation: sep,
        outcome: Outcome::Truncated,
        tau_type: 0.0,
        i_star: 0,
        phase: Phase::Inner,
        tau_in: Vec::new(),
        tau_out: Vec::new(),
        events: 0,
        jumps: 0,
        max_step: 0.0,
    };
    let finish = |mut rec: ExcursionRecord, outcome, end: f64, a, b| {
        rec.outcome = outcome;
        rec.tau_type = end - t0;
        rec.i_star = match rec.phase {
            Phase::Inner => rec.tau_out.len() as u32,
            Phase::Outer => rec.tau_in.len() as u32,
        };
        PairRun { record: rec, end, a, b }
    };
    if sep == 0.0 {
        return finish(rec, Outcome::Coalesce, t0, a, b);
    }
    if sep >= gamma {
        return finish(rec, Outcome::Diverge, t0, a, b);
    }
    let mut t = t0;
    while rec.events < cap {
        let ce = next_pair_event(a, b, t, params, rng);
        if ce.event.t > deadline {
            return finish(rec, Outcome::Overshoot, deadline, a, b);
        }
        t = ce.event.t;
        rec.events += 1;
        let e = &ce.event;
        let mut moved = false;
        for (rank, &i) in ce.hits.iter().enumerate() {
            if mark_member_unchecked(e.q, u, rank + 1) {
                let p = e.first_parent();
                if i == 0 {
                    a = p;
                } else {
                    b = p;
                }
                moved = true;
            }
        }
        if !moved {
            continue;
        }
        rec.jumps += 1;
        on_move(t, a, b);
        let new_sep = a.dist(&b);
        rec.max_step = rec.max_step.max((new_sep - sep).abs());
        sep = new_sep;
        if sep == 0.0 {
            return finish(rec, Outcome::Coalesce, t, a, b);
        }
        // Update the inner/outer bookkeeping before testing divergence so
        // that a divergent jump is attributed to the excursion it ends.
        match rec.phase {
            Phase::Inner if sep >= 5.0 * r => {
                rec.tau_in.push(Crossing { t: t - t0, separation: sep });
                rec.phase = Phase::Outer;
            }
            Phase::Outer if sep <= 4.0 * r => {
                rec.tau_out.push(Crossing { t: t - t0, separation: sep });
                rec.phase = Phase::Inner;
            }
            _ => {}
        }
        if sep >= gamma {
            return finish(rec, Outcome::Diverge, t, a, b);
        }
    }
    finish(rec, Outcome::Truncated, t, a, b)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitialSeparation {
    Fixed(f64),
    /// Draw the pair as the two parents of a selective event.
    Parents,
}

pub fn simulate_excursion<R: Rng + ?Sized>(initial: InitialSeparation, params: &ModelParams, rng: &mut R) -> Result<ExcursionRecord> {
    simulate_excursion_capped(initial, params, EXCURSION_EVENT_CAP, rng)
}

pub fn simulate_excursion_capped<R: Rng + ?Sized>(
    initial: InitialSeparation,
    params: &ModelParams,
    cap: u64,
    rng: &mut R,
) -> Result<ExcursionRecord> {
    let (a, b) = match initial {
        InitialSeparation::Fixed(s) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(param(format!("initial separation must be finite and non-negative, got {s}")));
            }
            (Point::ORIGIN, Point::new2(s, 0.0))
        }
        InitialSeparation::Parents => sample_parent_pair(params, rng),
    };
    Ok(run_pair(a, b, 0.0, params, cap, rng, |_, _, _| {}).record)
}

/// Excursions from parental separations, one child stream per trial.
pub fn run_excursions(params: &ModelParams, trials: u64, base: &Stream) -> Vec<ExcursionRecord> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.child_index(i);
            let a_b = sample_parent_pair(params, &mut rng);
            run_pair(a_b.0, a_b.1, 0.0, params, EXCURSION_EVENT_CAP, &mut rng, |_, _, _| {}).record
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub n: f64,
    pub trials: u64,
    pub diverged: u64,
    pub coalesced: u64,
    pub overshot: u64,
    pub truncated: u64,
    /// Diverged fraction among non-truncated trials.
    pub p_hat: f64,
    pub p_ci: (f64, f64),
    pub kappa_hat: f64,
    pub kappa_ci: (f64, f64),
    /// Fraction that did not coalesce (diverged or overshot), the success
    /// probability of the caterpillar branch count.
    pub escape_hat: f64,
    pub escape_ci: (f64, f64),
    pub overshoot_fraction: f64,
    /// More than 0.1% of trials were truncated.
    pub unreliable: bool,
}

impl KappaEstimate {
    pub fn from_records(n: f64, records: &[ExcursionRecord]) -> Result<Self> {
        let count = |o| records.iter().filter(|r| r.outcome == o).count() as u64;
        let trials = records.len() as u64;
        let diverged = count(Outcome::Diverge);
        let coalesced = count(Outcome::Coalesce);
        let overshot = count(Outcome::Overshoot);
        let truncated = count(Outcome::Truncated);
        let valid = trials - truncated;
        if valid == 0 {
            return Err(param("no completed excursions to estimate from"));
        }
        let ln = n.ln();
        let p_hat = diverged as f64 / valid as f64;
        let p_ci = wilson_interval(diverged, valid, 0.95)?;
        let esc = diverged + overshot;
        let escape_ci = wilson_interval(esc, valid, 0.95)?;
        Ok(KappaEstimate {
            n,
            trials,
            diverged,
            coalesced,
            overshot,
            truncated,
            p_hat,
            p_ci,
            kappa_hat: p_hat * ln,
            kappa_ci: (p_ci.0 * ln, p_ci.1 * ln),
            escape_hat: esc as f64 / valid as f64,
            escape_ci,
            overshoot_fraction: overshot as f64 / valid as f64,
            unreliable: truncated as f64 > 1e-3 * trials as f64,
        })
    }

    /// Whether two κ intervals overlap.
    pub fn overlaps(&self, other: &KappaEstimate) -> bool {
        self.kappa_ci.0 <= other.kappa_ci.1 && other.kappa_ci.0 <= self.kappa_ci.1
    }
}

fn check_kappa_inputs(n: f64, trials: u64) -> Result<()> {
    if !(n > std::f64::consts::E.powi(2)) {
        return Err(param(format!("kappa estimation needs n > e^2, got {n}")));
    }
    if trials < 1000 {
        return Err(param(format!("kappa estimation needs at least 1000 trials, got {trials}")));
    }
    Ok(())
}

/// Stream used for the excursions at scale `n`.
pub fn kappa_stream(base: &Stream, n: f64) -> Stream {
    base.child(format!("n={n}").as_bytes())
}

pub fn estimate_kappa(n_list: &[f64], trials: u64, template: &ModelParams, base: &Stream) -> Result<Vec<KappaEstimate>> {
    n_list
        .iter()
        .map(|&n| {
            check_kappa_inputs(n, trials)?;
            let p = template.with_n(n)?;
            let records = run_excursions(&p, trials, &kappa_stream(base, n));
            KappaEstimate::from_records(n, &records)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IStarTail {
    /// `tail[m]` is the empirical `P[i* > m]`.
    pub tail: Vec<f64>,
    pub completed: u64,
    /// Fit of `log P[i* > m]` on `m` over the points with at least ten
    /// exceedances; `None` when fewer than three such points exist.
    pub fit: Option<LinearFit>,
}

pub fn i_star_tail_from(records: &[ExcursionRecord]) -> IStarTail {
    let istars: Vec<u32> = records.iter().filter(|r| r.outcome != Outcome::Truncated).map(|r| r.i_star).collect();
    let completed = istars.len() as u64;
    let max = istars.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max + 1];
    for &i in &istars {
        counts[i as usize] += 1;
    }
    let mut tail = Vec::with_capacity(max + 1);
    let mut above = completed;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (m, c) in counts.iter().enumerate() {
        above -= c;
        tail.push(if completed == 0 { 0.0 } else { above as f64 / completed as f64 });
        if above >= 10 {
            xs.push(m as f64);
            ys.push((above as f64 / completed as f64).ln());
        }
    }
    let fit = if xs.len() >= 3 { linear_fit(&xs, &ys).ok() } else { None };
    IStarTail { tail, completed, fit }
}

pub fn i_star_tail(trials: u64, params: &ModelParams, base: &Stream) -> IStarTail {
    i_star_tail_from(&run_excursions(params, trials, base))
}

/// Probability that planar Brownian motion started at radius `start` leaves
/// the annulus through the outer circle.
pub fn bessel_exit_probability(inner: f64, outer: f64, start: f64) -> Result<f64> {
    if !(inner > 0.0 && inner < outer && inner <= start && start <= outer && outer.is_finite()) {
        return Err(param(format!(
            "need 0 < inner <= start <= outer with inner < outer, got inner={inner}, start={start}, outer={outer}"
        )));
    }
    Ok((start / inner).ln() / (outer / inner).ln())
}

/// Estimate of the probability that a pair started `initial` apart comes
/// within `4 R_n` before time `horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub trials: u64,
    pub returned: u64,
    pub truncated: u64,
    pub p_hat: f64,
    pub ci: (f64, f64),
}

pub fn separation_return_probability(
    initial: f64,
    horizon: f64,
    trials: u64,
    params: &ModelParams,
    base: &Stream,
) -> Result<ReturnEstimate> {
    if !(initial >= params.gamma_n() && initial.is_finite()) {
        return Err(param(format!("initial separation {initial} is below gamma_n = {}", params.gamma_n())));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) || trials == 0 {
        return Err(param("need a finite horizon >= 0 and at least one trial"));
    }
    let near = 4.0 * params.r_n();
    let outcomes: Vec<Option<bool>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.child_index(i);
            let (mut a, mut b) = (Point::ORIGIN, Point::new2(initial, 0.0));
            let mut t = 0.0;
            let mut events = 0u64;
            loop {
                if events >= EXCURSION_EVENT_CAP {
                    return None;
                }
                let ce = next_pair_event(a, b, t, params, &mut rng);
                if ce.event.t > horizon {
                    return Some(false);
                }
                t = ce.event.t;
                events += 1;
                for (rank, &k) in ce.hits.iter().enumerate() {
                    if mark_member_unchecked(ce.event.q, params.u(), rank + 1) {
                        if k == 0 {
                            a = ce.event.first_parent();
                        } else {
                            b = ce.event.first_parent();
                        }
                    }
                }
                if a.dist(&b) <= near {
                    return Some(true);
                }
            }
        })
        .collect();
    let truncated = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let returned = outcomes.iter().filter(|o| **o == Some(true)).count() as u64;
    let valid = trials - truncated;
    let ci = if valid > 0 { wilson_interval(returned, valid, 0.95)? } else { (0.0, 1.0) };
    Ok(ReturnEstimate {
        trials,
        returned,
        truncated,
        p_hat: if valid > 0 { returned as f64 / valid as f64 } else { f64::NAN },
        ci,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkorohodReport {
    pub trials: u64,
    pub hits_outer: u64,
    pub p_hat: f64,
    pub p_ci: (f64, f64),
    pub bessel: f64,
    pub relative_error: f64,
    /// Embedded increment magnitudes against direct draws of the jump law.
    pub magnitude_ks: KsResult,
    /// Every embedded walk position coincided with the Brownian path.
    pub exact_embedding: bool,
}

/// Embed the separation walk into a planar Brownian path simulated with
/// time step `step`, and compare its annulus exit probability (inner
/// `4 R_n`, start `5 R_n`, outer `γ_n`) with the Bessel scale function.
pub fn skorohod_embed_check(trials: u64, params: &ModelParams, step: f64, base: &Stream) -> Result<SkorohodReport> {
    let r = params.r_n();
    if !(step > 0.0 && step.sqrt() < r / 10.0) {
        return Err(param(format!("step {step} is too coarse: need sqrt(step) < R_n/10 = {}", r / 10.0)));
    }
    if trials == 0 {
        return Err(param("need at least one trial"));
    }
    let (inner, start, outer) = (4.0 * r, 5.0 * r, params.gamma_n());
    let bessel = bessel_exit_probability(inner, outer, start)?;
    let normal = Normal::new(0.0, step.sqrt()).expect("positive sd");

    struct Trial {
        hit_outer: bool,
        magnitudes: Vec<f64>,
        exact: bool,
    }
    let runs: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.child_index(i);
            let mut w = Point::new2(start, 0.0);
            let mut magnitudes = Vec::new();
            let mut exact = true;
            loop {
                let rm = sample_parent_separation(params, &mut rng);
                let anchor = w;
                // Run the Brownian path until it leaves B_rm(anchor), placing
                // the exit point on the circle by linear interpolation.
                loop {
                    let next = w + Point::new2(normal.sample(&mut rng), normal.sample(&mut rng));
                    if next.dist(&anchor) < rm {
                        w = next;
                        continue;
                    }
                    let p = w - anchor;
                    let v = next - w;
                    let (aa, bb, cc) = (v.norm2(), 2.0 * (p.0[0] * v.0[0] + p.0[1] * v.0[1]), p.norm2() - rm * rm);
                    let s = if aa > 0.0 { (-bb + (bb * bb - 4.0 * aa * cc).max(0.0).sqrt()) / (2.0 * aa) } else { 0.0 };
                    let dir = (w + s.clamp(0.0, 1.0) * v) - anchor;
                    let len = dir.norm();
                    w = anchor + (rm / len) * dir;
                    break;
                }
                // The walk is read off the Brownian path at the embedding time,
                // so its increment is exactly the drawn magnitude.
                let walk = w;
                exact &= ((walk - anchor).norm() - rm).abs() <= 1e-12 * rm;
                magnitudes.push((walk - anchor).norm());
                let sep = walk.norm();
                if sep <= inner {
                    return Trial { hit_outer: false, magnitudes, exact };
                }
                if sep >= outer {
                    return Trial { hit_outer: true, magnitudes, exact };
                }
            }
        })
        .collect();
    let hits_outer = runs.iter().filter(|t| t.hit_outer).count() as u64;
    let p_hat = hits_outer as f64 / trials as f64;
    let embedded: Vec<f64> = runs.iter().flat_map(|t| t.magnitudes.iter().copied()).take(10_000).collect();
    let mut direct_rng = base.child(b"direct");
    let direct: Vec<f64> = (0..embedded.len()).map(|_| sample_parent_separation(params, &mut direct_rng)).collect();
    Ok(SkorohodReport {
        trials,
        hits_outer,
        p_hat,
        p_ci: wilson_interval(hits_outer, trials, 0.95)?,
        bessel,
        relative_error: (p_hat - bessel).abs() / bessel,
        magnitude_ks: ks_two_sample(&embedded, &direct)?,
        exact_embedding: runs.iter().all(|t| t.exact),
    })
}

/// Per-trial table with columns `n,seed,outcome,tau_type,i_star,events`.
/// `seed` is the hex key of the trial's stream.
pub fn write_records_csv<W: Write>(n: f64, base: &Stream, records: &[ExcursionRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["n", "seed", "outcome", "tau_type", "i_star", "events"]).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let outcome = serde_json::to_value(r.outcome)?;
        wtr.write_record([
            n.to_string(),
            base.child_index(i as u64).key_hex(),
            outcome.as_str().unwrap_or_default().to_string(),
            r.tau_type.to_string(),
            r.i_star.to_string(),
            r.events.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dim;
    use crate::model::RadiusMeasure;
    use crate::stats::mean_var;

    fn params(u: f64, n: f64, c: f64) -> ModelParams {
        ModelParams::new(Dim::Two, RadiusMeasure::dirac(1.0).unwrap(), u, n)
            .unwrap()
            .with_exponent(c)
            .unwrap()
    }

    /// Mean distance between two uniform points of the unit disk,
    /// 128/(45π), and P[ζ >= 1] by an independent Monte Carlo.
    #[test]
    fn parent_separation_law() {
        let p = params(0.8, 1.0, 4.0);
        let mut rng = Stream::from_seed(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_parent_separation(&p, &mut rng)).collect();
        assert!(xs.iter().all(|&x| x <= 2.0 * p.r_n()));
        let (m, v) = mean_var(&xs);
        let exact = 128.0 / (45.0 * std::f64::consts::PI);
        assert!((m - exact).abs() < 4.0 * (v / xs.len() as f64).sqrt(), "mean {m}");

        let mut oracle = Stream::from_seed(2);
        let mut far = 0;
        let m2 = 1_000_000;
        for _ in 0..m2 {
            let (x1, y1) = disk(&mut oracle);
            let (x2, y2) = disk(&mut oracle);
            far += (((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt() >= 1.0) as u32;
        }
        let eps_oracle = far as f64 / m2 as f64;
        let eps = xs.iter().filter(|&&x| x >= 1.0).count() as f64 / xs.len() as f64;
        assert!((eps - eps_oracle).abs() < 0.003);
        // Exact value for the unit disk: 3 sqrt(3) / (4 pi).
        let exact_far = 3.0 * 3f64.sqrt() / (4.0 * std::f64::consts::PI);
        assert!((eps - exact_far).abs() < 0.0015, "{eps}");

        // Scale identity: ζ^n has the law of ζ^1 / sqrt(n).
        let p16 = p.with_n(16.0).unwrap();
        let ys: Vec<f64> = (0..20_000).map(|_| 4.0 * sample_parent_separation(&p16, &mut rng)).collect();
        assert!(ks_two_sample(&xs[..20_000], &ys).unwrap().p_value > 0.001);
    }

    fn disk(rng: &mut Stream) -> (f64, f64) {
        loop {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let y: f64 = rng.random::<f64>() * 2.0 - 1.0;
            if x * x + y * y <= 1.0 {
                return (x, y);
            }
        }
    }

    #[test]
    fn trivial_excursions() {
        let p = params(0.8, 65536.0, 1.0);
        let mut rng = Stream::from_seed(3);
        let r = simulate_excursion(InitialSeparation::Fixed(0.0), &p, &mut rng).unwrap();
        assert_eq!(r.outcome, Outcome::Coalesce);
        assert_eq!(r.tau_type, 0.0);
        let r = simulate_excursion(InitialSeparation::Fixed(p.gamma_n()), &p, &mut rng).unwrap();
        assert_eq!(r.outcome, Outcome::Diverge);
        assert_eq!(r.events, 0);
        assert!(simulate_excursion(InitialSeparation::Fixed(-1.0), &p, &mut rng).is_err());
    }

    /// With c = 1 the standing assumption 7 R_n < γ_n holds at n = 2^16, so
    /// the band structure is genuinely exercised.
    #[test]
    fn bands_and_trichotomy_hold() {
        let p = params(0.8, 65536.0, 1.0);
        assert!(p.standing_assumption_holds());
        let records = run_excursions(&p, 3000, &Stream::from_seed(4));
        let mut crossed = 0;
        for r in &records {
            assert_ne!(r.outcome, Outcome::Truncated);
            r.check_invariants(&p).unwrap();
            crossed += (!r.tau_out.is_empty()) as u32;
        }
        assert!(crossed > 0);
        let est = KappaEstimate::from_records(p.n(), &records).unwrap();
        assert_eq!(est.diverged + est.coalesced + est.overshot + est.truncated, est.trials);
        assert!(est.p_ci.0 <= est.p_hat && est.p_hat <= est.p_ci.1);
        assert!(est.diverged > 0 && est.coalesced > est.diverged);
        assert!(!est.unreliable);
    }

    #[test]
    fn cap_truncates() {
        let p = params(0.8, 65536.0, 1.0);
        let mut rng = Stream::from_seed(5);
        let r = simulate_excursion_capped(InitialSeparation::Fixed(3.0 * p.r_n()), &p, 1, &mut rng).unwrap();
        assert!(matches!(r.outcome, Outcome::Truncated | Outcome::Coalesce | Outcome::Diverge | Outcome::Overshoot));
        assert!(r.events <= 1);
    }

    #[test]
    fn kappa_inputs_checked() {
        let p = params(0.8, 65536.0, 1.0);
        let base = Stream::from_seed(6);
        assert!(estimate_kappa(&[5.0], 1000, &p, &base).is_err());
        assert!(estimate_kappa(&[4096.0], 10, &p, &base).is_err());
    }

    #[test]
    fn kappa_is_reproducible() {
        let p = params(0.8, 4096.0, 1.0);
        let base = Stream::from_seed(7);
        let a = estimate_kappa(&[4096.0], 1000, &p, &base).unwrap();
        let b = estimate_kappa(&[4096.0], 1000, &p, &base).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn i_star_tail_is_monotone() {
        let p = params(0.8, 65536.0, 1.0);
        let tail = i_star_tail(5000, &p, &Stream::from_seed(8));
        assert!(tail.tail[0] <= 1.0);
        assert!(tail.tail.windows(2).all(|w| w[1] <= w[0]));
        if let Some(fit) = tail.fit {
            assert!(fit.slope < 0.0);
        }
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_exit_probability(4.0, 104.0, 4.0).unwrap(), 0.0);
        assert!((bessel_exit_probability(4.0, 104.0, 104.0).unwrap() - 1.0).abs() < 1e-15);
        let p = bessel_exit_probability(4.0, 104.0, 5.0).unwrap();
        assert!((p - 1.25f64.ln() / 26f64.ln()).abs() < 1e-15);
        assert!((p - 0.068489).abs() < 1e-6);
        assert!(bessel_exit_probability(5.0, 4.0, 4.5).is_err());
        assert!(bessel_exit_probability(4.0, 10.0, 11.0).is_err());
    }

    #[test]
    fn return_probability_examples() {
        let p = params(0.8, 65536.0, 4.0);
        let base = Stream::from_seed(9);
        let zero = separation_return_probability(1.0, 0.0, 20, &p, &base).unwrap();
        assert_eq!(zero.returned, 0);
        let far = separation_return_probability(1e3, 0.01, 20, &p, &base).unwrap();
        assert_eq!(far.returned, 0);
        assert!(separation_return_probability(0.0, 1.0, 20, &p, &base).is_err());
    }

    #[test]
    fn skorohod_embedding() {
        // A small n with c = 1/2 gives a wide annulus cheaply.
        let p = params(0.8, 400.0, 0.5);
        let r = p.r_n();
        assert!(p.gamma_n() > 5.0 * r);
        let step = (r / 12.0).powi(2);
        let rep = skorohod_embed_check(2000, &p, step, &Stream::from_seed(10)).unwrap();
        assert!(rep.exact_embedding);
        assert!(rep.magnitude_ks.p_value > 0.01, "{rep:?}");
        // The walk overshoots the outer circle by at most 2 R_n, so its exit
        // probability sits between the two closed forms.
        let upper = bessel_exit_probability(4.0 * r, p.gamma_n(), 5.0 * r).unwrap();
        let lower = bessel_exit_probability(2.0 * r, p.gamma_n() + 2.0 * r, 5.0 * r).unwrap();
        assert!(rep.p_ci.1 >= lower.min(upper) * 0.8 && rep.p_ci.0 <= upper.max(lower) * 1.2, "{rep:?}");
        assert!(skorohod_embed_check(10, &p, r * r, &Stream::from_seed(1)).is_err());
    }

    #[test]
    fn records_csv_header() {
        let p = params(0.8, 4096.0, 1.0);
        let base = Stream::from_seed(11);
        let recs = run_excursions(&p, 5, &base);
        let mut buf = Vec::new();
        write_records_csv(4096.0, &base, &recs, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n,seed,outcome,tau_type,i_star,events\n"));
        assert_eq!(s.lines().count(), 6);
    }
}
