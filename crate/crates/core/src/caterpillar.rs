//! Caterpillars and branching caterpillars.
//!
//! A caterpillar follows one lineage `c¹`. The first selective event that
//! marks it more than `ω = (log n)^{-c}` after the previous branching opens
//! a window in which the second parent `c²` is followed as an excursion.
//! A coalescing window closes and the walk continues; a diverging or
//! overshooting window ends the caterpillar. Selective events inside the
//! suppression period move `c¹` to its first parent without branching.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::Path;
use crate::error::{param, Result};
use crate::events::{csv_err, mark_member_unchecked, next_covering_event};
use crate::excursion::{run_pair, Outcome, EXCURSION_EVENT_CAP};
use crate::geometry::{Point, Space};
use crate::model::ModelParams;
use crate::stats::{chi_square_gof, ks_statistic, logistic_fit, mean_var, ChiSquareResult, KsResult, LogisticFit};
use crate::stream::Stream;

/// Default path sampling interval (10^3 points per unit time).
pub const DEFAULT_GRID: f64 = 1e-3;

/// A path sampled at `k * dt`, `k = 0, 1, ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub dt: f64,
    pub points: Vec<Point>,
}

impl SampledPath {
    pub fn new(dt: f64) -> Self {
        SampledPath { dt, points: Vec::new() }
    }

    /// Record `pos` at every grid time strictly before `t` not yet filled.
    fn fill_before(&mut self, t: f64, pos: Point) {
        while (self.points.len() as f64) * self.dt < t {
            self.points.push(pos);
        }
    }

    fn fill_through(&mut self, t: f64, pos: Point) {
        while (self.points.len() as f64) * self.dt <= t {
            self.points.push(pos);
        }
    }

    /// As a piecewise-constant path starting at `offset`.
    pub fn to_path(&self, offset: f64) -> Path {
        self.points
            .iter()
            .enumerate()
            .map(|(k, &p)| (offset + k as f64 * self.dt, p))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Terminal {
    Diverge,
    Overshoot,
    /// Still alive at the requested horizon.
    Censored,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caterpillar {
    pub start: Point,
    /// `τ^br_1, ..., τ^br_{k*}` relative to the start.
    pub branch_times: Vec<f64>,
    /// `τ^type_k` for each branching window.
    pub decision_times: Vec<f64>,
    pub branch_outcomes: Vec<Outcome>,
    /// Lifetime `h`; the stopping time when censored or truncated.
    pub lifetime: f64,
    pub terminal: Terminal,
    /// `(c¹_h, c²_h)`.
    pub terminal_points: [Point; 2],
    pub c1: Option<SampledPath>,
    pub c2: Option<SampledPath>,
    pub events: u64,
    /// Largest `|c¹ - c²|` seen inside any window.
    pub max_window_separation: f64,
}

impl Caterpillar {
    pub fn k_star(&self) -> usize {
        self.branch_times.len()
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.terminal, Terminal::Diverge | Terminal::Overshoot)
    }

    /// Branch gaps `E_k = τ^br_k - (τ^br_{k-1} + ω)` with `τ^br_0 = 0`.
    pub fn gaps(&self, params: &ModelParams) -> Vec<f64> {
        let w = params.overshoot_time();
        let mut prev = 0.0;
        self.branch_times
            .iter()
            .map(|&t| {
                let g = t - (prev + w);
                prev = t;
                g
            })
            .collect()
    }

    pub fn check_invariants(&self, params: &ModelParams) -> std::result::Result<(), String> {
        let w = params.overshoot_time();
        if self.gaps(params).iter().any(|&g| !(g > 0.0)) {
            return Err("a branch opened inside the suppression window".into());
        }
        let k = self.k_star();
        if self.is_complete() {
            if k == 0 {
                return Err("complete caterpillar without a branch".into());
            }
            if self.branch_outcomes[..k - 1].iter().any(|o| *o != Outcome::Coalesce) {
                return Err("a non-terminal branch did not coalesce".into());
            }
            if self.lifetime > self.branch_times[k - 1] + w * (1.0 + 1e-12) {
                return Err("lifetime beyond the last window".into());
            }
        }
        if self.max_window_separation >= params.gamma_n() + 4.0 * params.r_n() {
            return Err(format!("window separation {} too large", self.max_window_separation));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaterpillarOptions {
    /// Path sampling interval; `None` keeps no paths.
    pub grid: Option<f64>,
    /// Stop, censored, once this time (relative to the start) is reached.
    pub horizon: Option<f64>,
    pub max_events: u64,
}

impl Default for CaterpillarOptions {
    fn default() -> Self {
        CaterpillarOptions {
            grid: Some(DEFAULT_GRID),
            horizon: None,
            max_events: EXCURSION_EVENT_CAP,
        }
    }
}

pub fn simulate_caterpillar<R: Rng + ?Sized>(
    p: Point,
    params: &ModelParams,
    opts: &CaterpillarOptions,
    rng: &mut R,
) -> Result<Caterpillar> {
    if !(params.s_n() > 0.0) {
        return Err(param("caterpillars need selective events (s_n > 0)"));
    }
    if let Some(h) = opts.horizon {
        if !(h >= 0.0) {
            return Err(param(format!("horizon must be non-negative, got {h}")));
        }
    }
    if let Some(dt) = opts.grid {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(param(format!("grid step must be positive, got {dt}")));
        }
    }
    let omega = params.overshoot_time();
    let horizon = opts.horizon.unwrap_or(f64::INFINITY);
    let u = params.u();
    let mut c1 = opts.grid.map(SampledPath::new);
    let mut c2 = opts.grid.map(SampledPath::new);
    let mut cat = Caterpillar {
        start: p,
        branch_times: Vec::new(),
        decision_times: Vec::new(),
        branch_outcomes: Vec::new(),
        lifetime: 0.0,
        terminal: Terminal::Truncated,
        terminal_points: [p, p],
        c1: None,
        c2: None,
        events: 0,
        max_window_separation: 0.0,
    };
    let mut x = p;
    let mut t = 0.0;
    let mut last_branch = 0.0;

    let done = |mut cat: Caterpillar, terminal, end: f64, a: Point, b: Point, mut c1: Option<SampledPath>, mut c2: Option<SampledPath>| {
        if let Some(g) = c1.as_mut() {
            g.fill_through(end, a);
        }
        if let Some(g) = c2.as_mut() {
            g.fill_through(end, b);
        }
        cat.terminal = terminal;
        cat.lifetime = end;
        cat.terminal_points = [a, b];
        cat.c1 = c1;
        cat.c2 = c2;
        cat
    };

    loop {
        if cat.events >= opts.max_events {
            return Ok(done(cat, Terminal::Truncated, t, x, x, c1, c2));
        }
        let ce = next_covering_event(&[x], t, params, &Space::Plane, rng)?;
        let e = ce.event;
        if e.t > horizon {
            return Ok(done(cat, Terminal::Censored, horizon, x, x, c1, c2));
        }
        cat.events += 1;
        if !mark_member_unchecked(e.q, u, 1) {
            t = e.t;
            continue;
        }
        for g in [c1.as_mut(), c2.as_mut()].into_iter().flatten() {
            g.fill_before(e.t, x);
        }
        t = e.t;
        if !(e.selective && e.t > last_branch + omega) {
            x = e.first_parent();
            continue;
        }

        // Branching window.
        last_branch = t;
        cat.branch_times.push(t);
        let (a0, b0) = (e.first_parent(), e.second_parent());
        let mut prev = (a0, b0);
        let mut at_horizon: Option<(Point, Point)> = None;
        let mut max_sep = a0.dist(&b0);
        let budget = opts.max_events - cat.events;
        let run = run_pair(a0, b0, t, params, budget, rng, |s, a, b| {
            if s > horizon && at_horizon.is_none() {
                at_horizon = Some(prev);
            }
            if at_horizon.is_none() {
                if let Some(g) = c1.as_mut() {
                    g.fill_before(s, prev.0);
                }
                if let Some(g) = c2.as_mut() {
                    g.fill_before(s, prev.1);
                }
                max_sep = max_sep.max(a.dist(&b));
            }
            prev = (a, b);
        });
        cat.events += run.record.events;
        cat.max_window_separation = cat.max_window_separation.max(max_sep);
        if run.end > horizon {
            // Without a move after the horizon the final positions are the
            // positions at the horizon.
            let (a, b) = at_horizon.unwrap_or((run.a, run.b));
            return Ok(done(cat, Terminal::Censored, horizon, a, b, c1, c2));
        }
        cat.decision_times.push(run.end);
        cat.branch_outcomes.push(run.record.outcome);
        match run.record.outcome {
            Outcome::Coalesce => {
                x = run.a;
                t = run.end;
            }
            Outcome::Diverge => return Ok(done(cat, Terminal::Diverge, run.end, run.a, run.b, c1, c2)),
            Outcome::Overshoot => return Ok(done(cat, Terminal::Overshoot, run.end, run.a, run.b, c1, c2)),
            Outcome::Truncated => {
                cat.events = cat.events.max(opts.max_events);
                return Ok(done(cat, Terminal::Truncated, run.end, run.a, run.b, c1, c2));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeReport {
    pub runs: usize,
    pub mean_lifetime: f64,
    pub var_lifetime: f64,
    /// `1 / (κ λ)`.
    pub expected_lifetime: f64,
    pub lifetime_ks: KsResult,
    pub gaps: usize,
    pub mean_gap: f64,
    /// `1 / (λ n s_n)`, which is `1 / (λ log n)` in two dimensions.
    pub expected_gap: f64,
    pub gap_ks: KsResult,
}

/// Rate of selective events that mark a single lineage.
pub fn branch_rate(params: &ModelParams) -> f64 {
    params.lambda() * params.n() * params.s_n()
}

/// Lifetime and gap laws of completed caterpillars, compared with
/// `Exp(κ λ)` and `Exp(λ n s_n)`.
pub fn lifetime_statistics(runs: &[Caterpillar], params: &ModelParams, kappa: f64) -> Result<LifetimeReport> {
    let done: Vec<&Caterpillar> = runs.iter().filter(|c| c.is_complete()).collect();
    if done.len() < 2 {
        return Err(param("need at least two completed caterpillars"));
    }
    if !(kappa > 0.0) {
        return Err(param(format!("kappa must be positive, got {kappa}")));
    }
    let h: Vec<f64> = done.iter().map(|c| c.lifetime).collect();
    let gaps: Vec<f64> = done.iter().flat_map(|c| c.gaps(params)).collect();
    let rate_h = kappa * params.lambda();
    let rate_g = branch_rate(params);
    let (mean_lifetime, var_lifetime) = mean_var(&h);
    Ok(LifetimeReport {
        runs: done.len(),
        mean_lifetime,
        var_lifetime,
        expected_lifetime: 1.0 / rate_h,
        lifetime_ks: ks_statistic(&h, |x| 1.0 - (-rate_h * x).exp())?,
        gaps: gaps.len(),
        mean_gap: mean_var(&gaps).0,
        expected_gap: 1.0 / rate_g,
        gap_ks: ks_statistic(&gaps, |x| 1.0 - (-rate_g * x).exp())?,
    })
}

/// Chi-square test of `k*` against Geometric(`success`) on `{1, 2, ...}`.
pub fn k_star_test(runs: &[Caterpillar], success: f64) -> Result<ChiSquareResult> {
    if !(success > 0.0 && success <= 1.0) {
        return Err(param(format!("geometric success probability must lie in (0,1], got {success}")));
    }
    let ks: Vec<usize> = runs.iter().filter(|c| c.is_complete()).map(|c| c.k_star()).collect();
    if ks.is_empty() {
        return Err(param("no completed caterpillars"));
    }
    let max = ks.iter().copied().max().unwrap_or(1);
    let mut observed = vec![0u64; max];
    for k in ks {
        observed[k - 1] += 1;
    }
    let mut probs: Vec<f64> = (1..max).map(|k| success * (1.0 - success).powi(k as i32 - 1)).collect();
    probs.push((1.0 - success).powi(max as i32 - 1));
    chi_square_gof(&observed, &probs, 0)
}

/// Logistic regression of "branch did not coalesce" on the branch index,
/// over all branches of all completed caterpillars. Under i.i.d. branch
/// outcomes the slope is zero.
pub fn branch_outcome_trend(runs: &[Caterpillar]) -> Option<LogisticFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for c in runs.iter().filter(|c| c.is_complete()) {
        for (k, o) in c.branch_outcomes.iter().enumerate() {
            x.push((k + 1) as f64);
            y.push(*o != Outcome::Coalesce);
        }
    }
    logistic_fit(&x, &y)
}

/// Independent caterpillars from `p`, one child stream per run.
pub fn run_caterpillars(p: Point, runs: u64, params: &ModelParams, opts: &CaterpillarOptions, base: &Stream) -> Result<Vec<Caterpillar>> {
    (0..runs)
        .into_par_iter()
        .map(|i| simulate_caterpillar(p, params, opts, &mut base.child_index(i)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestNode {
    /// `{1,2}`-string; empty for the root.
    pub label: String,
    pub birth: f64,
    pub start: Point,
    pub caterpillar: Caterpillar,
}

impl ForestNode {
    /// Absolute death time, `None` if still alive at the horizon.
    pub fn death(&self) -> Option<f64> {
        match self.caterpillar.terminal {
            Terminal::Diverge | Terminal::Overshoot => Some(self.birth + self.caterpillar.lifetime),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaterpillarForest {
    pub root: Point,
    pub horizon: f64,
    /// Nodes in breadth-first order.
    pub nodes: Vec<ForestNode>,
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestCaps {
    pub max_nodes: usize,
    pub max_events_per_node: u64,
}

impl Default for ForestCaps {
    fn default() -> Self {
        ForestCaps {
            max_nodes: 100_000,
            max_events_per_node: EXCURSION_EVENT_CAP,
        }
    }
}

fn node_stream(base: &Stream, label: &str) -> Stream {
    base.child(format!("node:{label}").as_bytes())
}

/// Forest of independent caterpillars: each node starts where and when its
/// parent's caterpillar ended, its driver keyed by the node label.
pub fn simulate_branching_caterpillar(
    p: Point,
    horizon: f64,
    params: &ModelParams,
    grid: Option<f64>,
    caps: ForestCaps,
    base: &Stream,
) -> Result<CaterpillarForest> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param(format!("horizon must be positive and finite, got {horizon}")));
    }
    let mut nodes = Vec::new();
    let mut truncated = false;
    let mut frontier = vec![(String::new(), 0.0, p)];
    while !frontier.is_empty() {
        let batch: Vec<Result<ForestNode>> = frontier
            .par_iter()
            .map(|(label, birth, start)| {
                let opts = CaterpillarOptions {
                    grid,
                    horizon: Some(horizon - birth),
                    max_events: caps.max_events_per_node,
                };
                let cat = simulate_caterpillar(*start, params, &opts, &mut node_stream(base, label))?;
                Ok(ForestNode {
                    label: label.clone(),
                    birth: *birth,
                    start: *start,
                    caterpillar: cat,
                })
            })
            .collect();
        let mut next = Vec::new();
        for node in batch {
            let node = node?;
            truncated |= node.caterpillar.terminal == Terminal::Truncated;
            if let Some(death) = node.death() {
                if death < horizon {
                    for (digit, at) in ["1", "2"].iter().zip(node.caterpillar.terminal_points) {
                        next.push((format!("{}{digit}", node.label), death, at));
                    }
                }
            }
            nodes.push(node);
        }
        if nodes.len() + next.len() > caps.max_nodes {
            truncated = true;
            break;
        }
        frontier = next;
    }
    Ok(CaterpillarForest {
        root: p,
        horizon,
        nodes,
        truncated,
    })
}

impl CaterpillarForest {
    /// Nodes alive at the horizon, `U(T)`.
    pub fn alive(&self) -> impl Iterator<Item = &ForestNode> {
        self.nodes.iter().filter(|n| n.caterpillar.terminal == Terminal::Censored)
    }

    pub fn alive_count(&self) -> usize {
        self.alive().count()
    }

    /// Positions of `c¹` at the horizon for the alive nodes.
    pub fn leaf_positions(&self) -> Vec<Point> {
        self.alive().map(|n| n.caterpillar.terminal_points[0]).collect()
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.label.len()).max().unwrap_or(0)
    }

    /// Root-to-leaf paths of the alive nodes: inside an ancestor the path
    /// follows `c¹` or `c²` according to the next label digit.
    pub fn leaf_paths(&self) -> Result<Vec<Path>> {
        let by_label: std::collections::HashMap<&str, &ForestNode> = self.nodes.iter().map(|n| (n.label.as_str(), n)).collect();
        self.alive()
            .map(|leaf| {
                let mut path = Path::new();
                for depth in 0..=leaf.label.len() {
                    let node = by_label[&leaf.label[..depth]];
                    let c = &node.caterpillar;
                    let second = leaf.label.as_bytes().get(depth) == Some(&b'2');
                    let sampled = if second { c.c2.as_ref() } else { c.c1.as_ref() };
                    let sampled = sampled.ok_or_else(|| param("forest was simulated without paths"))?;
                    let end = node.birth + c.lifetime;
                    path.extend(sampled.to_path(node.birth).into_iter().filter(|(t, _)| *t < end));
                    if depth < leaf.label.len() {
                        path.push((end, c.terminal_points[second as usize]));
                    }
                }
                Ok(path)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            node: &'a str,
            t: f64,
            h: Option<f64>,
            p: Point,
            k_star: usize,
            terminal: Terminal,
        }
        let rows: Vec<Row> = self
            .nodes
            .iter()
            .map(|n| Row {
                node: &n.label,
                t: n.birth,
                h: n.death(),
                p: n.start,
                k_star: n.caterpillar.k_star(),
                terminal: n.caterpillar.terminal,
            })
            .collect();
        Ok(serde_json::to_string(&serde_json::json!({
            "root": self.root,
            "horizon": self.horizon,
            "truncated": self.truncated,
            "nodes": rows,
        }))?)
    }

    /// Sampled `c¹` paths with columns `node,t,x,y`.
    pub fn write_paths_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["node", "t", "x", "y"]).map_err(csv_err)?;
        for n in &self.nodes {
            if let Some(path) = &n.caterpillar.c1 {
                for (t, p) in path.to_path(n.birth) {
                    wtr.write_record([n.label.clone(), t.to_string(), p.x().to_string(), p.y().to_string()])
                        .map_err(csv_err)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn value_at(path: &Path, t: f64) -> Point {
    let k = path.partition_point(|(s, _)| *s <= t);
    path[k.saturating_sub(1)].1
}

/// Two-sided Hausdorff distance between path sets under the sup norm on
/// `[0, horizon]`, the sup taken over a time grid.
pub fn path_set_distance(a: &[Path], b: &[Path], horizon: f64, grid: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() || a.iter().chain(b).any(|p| p.is_empty()) {
        return Err(param("path sets and paths must be nonempty"));
    }
    if !(grid > 0.0 && horizon >= 0.0) {
        return Err(param("need grid > 0 and horizon >= 0"));
    }
    let steps = (horizon / grid).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * grid).collect();
    let sample = |p: &Path| times.iter().map(|&t| value_at(p, t)).collect::<Vec<_>>();
    let sa: Vec<Vec<Point>> = a.iter().map(sample).collect();
    let sb: Vec<Vec<Point>> = b.iter().map(sample).collect();
    let sup = |x: &[Point], y: &[Point]| x.iter().zip(y).map(|(p, q)| p.dist(q)).fold(0.0, f64::max);
    let directed = |from: &[Vec<Point>], to: &[Vec<Point>]| {
        from.iter()
            .map(|x| to.iter().map(|y| sup(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Ok(directed(&sa, &sb).max(directed(&sb, &sa)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dim;
    use crate::model::{RadiusMeasure, Selection};

    /// c = 1 makes the standing assumption hold at n = 2^16, so windows
    /// have a real chance of coalescing.
    fn params(n: f64) -> ModelParams {
        ModelParams::new(Dim::Two, RadiusMeasure::dirac(1.0).unwrap(), 0.8, n)
            .unwrap()
            .with_exponent(1.0)
            .unwrap()
    }

    #[test]
    fn rejects_neutral_model() {
        let p = params(4096.0).with_selection(Selection::Fixed(0.0)).unwrap();
        let err = simulate_caterpillar(Point::ORIGIN, &p, &CaterpillarOptions::default(), &mut Stream::from_seed(1));
        assert!(err.is_err());
    }

    #[test]
    fn invariants_and_gap_law() {
        let p = params(65536.0);
        let opts = CaterpillarOptions {
            grid: Some(0.01),
            ..Default::default()
        };
        let runs = run_caterpillars(Point::ORIGIN, 300, &p, &opts, &Stream::from_seed(2)).unwrap();
        for c in &runs {
            assert!(c.is_complete());
            c.check_invariants(&p).unwrap();
            let c1 = c.c1.as_ref().unwrap();
            assert_eq!(c1.points[0], Point::ORIGIN);
            assert_eq!(c1.points.len(), (c.lifetime / 0.01).floor() as usize + 1);
        }
        let diverged = runs.iter().filter(|c| c.terminal == Terminal::Diverge).count();
        let overshot = runs.iter().filter(|c| c.terminal == Terminal::Overshoot).count();
        assert!(overshot < diverged);
        let gaps: Vec<f64> = runs.iter().flat_map(|c| c.gaps(&p)).collect();
        let rate = branch_rate(&p);
        assert!((rate - p.lambda() * 65536f64.ln()).abs() < 1e-9);
        let ks = ks_statistic(&gaps, |x| 1.0 - (-rate * x).exp()).unwrap();
        assert!(ks.p_value > 0.001, "{ks:?}");
    }

    #[test]
    fn deterministic_and_censored() {
        let p = params(4096.0);
        let opts = CaterpillarOptions {
            horizon: Some(0.05),
            ..Default::default()
        };
        let a = simulate_caterpillar(Point::ORIGIN, &p, &opts, &mut Stream::from_seed(3)).unwrap();
        let b = simulate_caterpillar(Point::ORIGIN, &p, &opts, &mut Stream::from_seed(3)).unwrap();
        assert_eq!(a, b);
        if a.terminal == Terminal::Censored {
            assert_eq!(a.lifetime, 0.05);
        }
    }

    #[test]
    fn short_forest_is_root_only() {
        let p = params(65536.0);
        let f = simulate_branching_caterpillar(Point::ORIGIN, 0.5 * p.overshoot_time(), &p, Some(0.01), ForestCaps::default(), &Stream::from_seed(4)).unwrap();
        assert_eq!(f.nodes.len(), 1);
        assert_eq!(f.alive_count(), 1);
    }

    #[test]
    fn forest_consistency() {
        let p = params(4096.0);
        let base = Stream::from_seed(5);
        let f = simulate_branching_caterpillar(Point::ORIGIN, 1.5, &p, Some(0.01), ForestCaps::default(), &base).unwrap();
        let g = simulate_branching_caterpillar(Point::ORIGIN, 1.5, &p, Some(0.01), ForestCaps::default(), &base).unwrap();
        assert_eq!(f, g);
        let by: std::collections::HashMap<&str, &ForestNode> = f.nodes.iter().map(|n| (n.label.as_str(), n)).collect();
        for n in &f.nodes {
            if n.label.is_empty() {
                assert_eq!(n.birth, 0.0);
                continue;
            }
            let (parent, digit) = n.label.split_at(n.label.len() - 1);
            let par = by[parent];
            assert_eq!(Some(n.birth), par.death());
            let i = if digit == "1" { 0 } else { 1 };
            assert_eq!(n.start, par.caterpillar.terminal_points[i]);
            assert!(n.birth - par.birth >= p.overshoot_time());
        }
        let paths = f.leaf_paths().unwrap();
        assert_eq!(paths.len(), f.alive_count());
        for path in &paths {
            assert_eq!(path[0], (0.0, Point::ORIGIN));
            assert!(path.windows(2).all(|w| w[0].0 <= w[1].0));
        }
        assert!(f.to_json().unwrap().contains("\"nodes\""));
    }

    #[test]
    fn path_distance_examples() {
        let zero: Path = vec![(0.0, Point::ORIGIN)];
        let three: Path = vec![(0.0, Point::new2(3.0, 0.0))];
        let a = vec![zero.clone()];
        let b = vec![three.clone()];
        assert_eq!(path_set_distance(&a, &a, 1.0, 0.1).unwrap(), 0.0);
        assert_eq!(path_set_distance(&a, &b, 1.0, 0.1).unwrap(), 3.0);
        let c = vec![zero.clone(), vec![(0.0, Point::ORIGIN), (0.5, Point::new2(0.0, 1.0))]];
        assert_eq!(path_set_distance(&a, &c, 1.0, 0.1).unwrap(), path_set_distance(&c, &a, 1.0, 0.1).unwrap());
        assert_eq!(path_set_distance(&a, &c, 1.0, 0.1).unwrap(), 1.0);
        assert!(path_set_distance(&[], &a, 1.0, 0.1).is_err());
    }

    #[test]
    fn k_star_geometric_test_shape() {
        let p = params(4096.0);
        let opts = CaterpillarOptions {
            grid: None,
            ..Default::default()
        };
        let runs = run_caterpillars(Point::ORIGIN, 200, &p, &opts, &Stream::from_seed(6)).unwrap();
        let esc = runs.len() as f64 / runs.iter().map(|c| c.k_star()).sum::<usize>() as f64;
        let res = k_star_test(&runs, esc).unwrap();
        assert!(res.p_value > 0.001, "{res:?}");
    }
}
