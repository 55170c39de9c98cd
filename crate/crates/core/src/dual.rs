//! The branching-coalescing dual.
//!
//! Lineages carry permanent indices. Coalescence never deletes a lineage: the
//! absorbed index gains a pointer to the lowest marked index, which is the
//! representative that keeps moving. Selective events append a new lineage at
//! the second parent.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::events::{csv_err, mark_member_unchecked, next_covering_event, next_pair_event, Event};
use crate::geometry::{Point, Space};
use crate::model::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub positions: Vec<Point>,
    pub coalesced_to: Vec<Option<usize>>,
    pub t: f64,
    pub event_count: u64,
    pub branch_count: u64,
}

/// What an event did to the state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Applied {
    /// Marked active lineages in increasing index order.
    pub marked: Vec<usize>,
    /// Index of the lineage created at the second parent.
    pub child: Option<usize>,
}

impl DualState {
    pub fn new(initial: &[Point]) -> Self {
        DualState {
            positions: initial.to_vec(),
            coalesced_to: vec![None; initial.len()],
            t: 0.0,
            event_count: 0,
            branch_count: 0,
        }
    }

    /// Total number of indices ever created.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.coalesced_to[i].is_none()
    }

    /// Active lineage that index `i` has merged into.
    pub fn representative(&self, mut i: usize) -> usize {
        while let Some(j) = self.coalesced_to[i] {
            i = j;
        }
        i
    }

    /// Current location of lineage `i` (its representative's location).
    pub fn position(&self, i: usize) -> Point {
        self.positions[self.representative(i)]
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_active(i)).collect()
    }

    pub fn active_count(&self) -> usize {
        self.coalesced_to.iter().filter(|c| c.is_none()).count()
    }
}

/// Apply `event` to `state`. `hits` lists the lineage indices whose
/// locations lie in the event ball; inactive indices are ignored.
pub fn apply_event(
    state: &mut DualState,
    event: &Event,
    hits: &[usize],
    params: &ModelParams,
    space: &Space,
) -> Result<Applied> {
    if !(event.t > state.t) {
        return Err(Error::Sequencing {
            event: event.t,
            current: state.t,
        });
    }
    state.t = event.t;
    state.event_count += 1;
    let mut covered: Vec<usize> = hits.iter().copied().filter(|&i| i < state.len() && state.is_active(i)).collect();
    covered.sort_unstable();
    covered.dedup();
    let u = params.u();
    let marked: Vec<usize> = covered
        .iter()
        .enumerate()
        .filter(|(rank, _)| mark_member_unchecked(event.q, u, rank + 1))
        .map(|(_, &i)| i)
        .collect();
    let Some(&rep) = marked.first() else {
        return Ok(Applied::default());
    };
    let parent = space.place(event.first_parent());
    for &i in &marked {
        state.positions[i] = parent;
        if i != rep {
            state.coalesced_to[i] = Some(rep);
        }
    }
    let child = if event.selective {
        state.positions.push(space.place(event.second_parent()));
        state.coalesced_to.push(None);
        state.branch_count += 1;
        Some(state.len() - 1)
    } else {
        None
    };
    Ok(Applied { marked, child })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub max_lineages: usize,
    pub max_events: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_lineages: 10_000,
            max_events: 50_000_000,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct DualOptions {
    pub caps: Caps,
    /// Increasing observation times at which snapshots are taken.
    pub observe: Vec<f64>,
    /// Log every lineage move, not only branchings and coalescences. Needed
    /// by [`potential_lineage_paths`].
    pub record_moves: bool,
    /// Keep the covering-event trace for replay.
    pub record_trace: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    Lineages,
    Events,
}

/// One logged event that changed the state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub marked: Vec<usize>,
    /// New location of all marked lineages.
    pub to: Point,
    pub child: Option<(usize, Point)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub state: DualState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualTrajectory {
    pub initial: Vec<Point>,
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub log: Vec<LogEntry>,
    pub moves_logged: bool,
    pub final_state: DualState,
    pub truncated: Option<Truncation>,
    #[serde(skip)]
    pub trace: Option<Vec<Event>>,
}

/// Run the dual from a single lineage at `p` up to time `horizon`.
pub fn simulate_dual<R: Rng + ?Sized>(
    p: Point,
    horizon: f64,
    params: &ModelParams,
    space: &Space,
    opts: &DualOptions,
    rng: &mut R,
) -> Result<DualTrajectory> {
    simulate_dual_from(&[p], horizon, params, space, opts, rng)
}

pub fn simulate_dual_from<R: Rng + ?Sized>(
    initial: &[Point],
    horizon: f64,
    params: &ModelParams,
    space: &Space,
    opts: &DualOptions,
    rng: &mut R,
) -> Result<DualTrajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param(format!("horizon must be positive and finite, got {horizon}")));
    }
    if initial.is_empty() {
        return Err(param("the dual needs at least one initial lineage"));
    }
    if opts.observe.windows(2).any(|w| !(w[0] < w[1])) || opts.observe.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(param("observation times must increase strictly within [0, horizon]"));
    }
    let initial: Vec<Point> = initial.iter().map(|&p| space.place(p)).collect();
    let mut state = DualState::new(&initial);
    let mut snapshots = Vec::with_capacity(opts.observe.len());
    let mut pending = opts.observe.iter().copied().peekable();
    let mut log = Vec::new();
    let mut trace = opts.record_trace.then(Vec::new);
    let mut truncated = None;
    let mut active = state.active_indices();
    let mut active_pos: Vec<Point> = active.iter().map(|&i| state.positions[i]).collect();
    let plane = matches!(space, Space::Plane);

    loop {
        if state.event_count >= opts.caps.max_events {
            truncated = Some(Truncation::Events);
            break;
        }
        let ce = if plane && active_pos.len() == 2 {
            next_pair_event(active_pos[0], active_pos[1], state.t, params, rng)
        } else {
            next_covering_event(&active_pos, state.t, params, space, rng)?
        };
        // The state is constant until the next event.
        while let Some(&t) = pending.peek() {
            if t >= ce.event.t {
                break;
            }
            snapshots.push(Snapshot { t, state: state.clone() });
            pending.next();
        }
        if ce.event.t > horizon {
            break;
        }
        if let Some(tr) = trace.as_mut() {
            tr.push(ce.event);
        }
        let hits: Vec<usize> = ce.hits.iter().map(|&k| active[k]).collect();
        let applied = apply_event(&mut state, &ce.event, &hits, params, space)?;
        if applied.marked.is_empty() {
            continue;
        }
        let significant = applied.marked.len() > 1 || applied.child.is_some();
        if opts.record_moves || significant {
            let rep = applied.marked[0];
            log.push(LogEntry {
                t: ce.event.t,
                to: state.positions[rep],
                child: applied.child.map(|c| (c, state.positions[c])),
                marked: applied.marked,
            });
        }
        active = state.active_indices();
        active_pos = active.iter().map(|&i| state.positions[i]).collect();
        if active.len() > opts.caps.max_lineages {
            truncated = Some(Truncation::Lineages);
            break;
        }
    }
    // Observation times the loop did not reach see the final state, unless
    // the run was cut short.
    if truncated.is_none() {
        for t in pending {
            snapshots.push(Snapshot { t, state: state.clone() });
        }
    }
    Ok(DualTrajectory {
        initial,
        horizon,
        snapshots,
        log,
        moves_logged: opts.record_moves,
        final_state: state,
        truncated,
        trace,
    })
}

/// Position at `horizon` of the first lineage of a dual started from `p`.
///
/// Lineage 0 always has the lowest index in any ball, so it is marked with
/// probability `u` at every covering event and always moves to the first
/// parent; other lineages never influence it. Following it alone is
/// therefore exact and much cheaper than running the whole dual.
pub fn single_lineage_position<R: Rng + ?Sized>(p: Point, horizon: f64, params: &ModelParams, rng: &mut R) -> Result<(Point, u64)> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param(format!("horizon must be finite and non-negative, got {horizon}")));
    }
    let u = params.u();
    let mut x = p;
    let mut t = 0.0;
    let mut jumps = 0;
    loop {
        let ce = next_covering_event(&[x], t, params, &Space::Plane, rng)?;
        if ce.event.t > horizon {
            return Ok((x, jumps));
        }
        t = ce.event.t;
        if mark_member_unchecked(ce.event.q, u, 1) {
            x = ce.event.first_parent();
            jumps += 1;
        }
    }
}

/// Rebuild the final state from a move log (positions, pointers and the
/// branch count; event counts and times are not part of the log).
pub fn replay_log(initial: &[Point], log: &[LogEntry]) -> DualState {
    let mut state = DualState::new(initial);
    for e in log {
        let rep = e.marked[0];
        for &i in &e.marked {
            state.positions[i] = e.to;
            if i != rep {
                state.coalesced_to[i] = Some(rep);
            }
        }
        if let Some((c, at)) = e.child {
            debug_assert_eq!(c, state.len());
            state.positions.push(at);
            state.coalesced_to.push(None);
            state.branch_count += 1;
        }
        state.t = e.t;
    }
    state
}

/// Re-run the dual over a recorded event trace, recomputing which lineages
/// each event covers.
pub fn replay_trace(initial: &[Point], events: &[Event], params: &ModelParams, space: &Space) -> Result<DualState> {
    let mut state = DualState::new(initial);
    for e in events {
        let hits: Vec<usize> = (0..state.len())
            .filter(|&i| state.is_active(i) && space.dist(&state.positions[i], &e.x) <= e.r)
            .collect();
        apply_event(&mut state, e, &hits, params, space)?;
    }
    Ok(state)
}

/// A piecewise-constant path: `(t, x)` means the path sits at `x` from `t`
/// until the next entry.
pub type Path = Vec<(f64, Point)>;

#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    pub truncated: bool,
}

/// Every potential ancestral lineage of the initial lineage 0: at each
/// branching along a route the route splits into the first-parent and the
/// second-parent continuation.
pub fn potential_lineage_paths(traj: &DualTrajectory, cap: usize) -> Result<PathSet> {
    if !traj.moves_logged {
        return Err(param("trajectory was recorded without moves"));
    }
    if cap == 0 {
        return Err(param("path cap must be positive"));
    }
    let log = &traj.log;
    let mut paths = Vec::new();
    // Stack of (next log entry, followed lineage, path so far).
    let mut stack: Vec<(usize, usize, Path)> = vec![(0, 0, vec![(0.0, traj.initial[0])])];
    let mut truncated = false;
    'route: while let Some((mut k, mut idx, mut path)) = stack.pop() {
        while k < log.len() {
            let e = &log[k];
            k += 1;
            if !e.marked.contains(&idx) {
                continue;
            }
            idx = e.marked[0];
            if let Some((c, at)) = e.child {
                if paths.len() + stack.len() + 1 >= cap {
                    truncated = true;
                } else {
                    let mut other = path.clone();
                    other.push((e.t, at));
                    stack.push((k, c, other));
                }
            }
            path.push((e.t, e.to));
        }
        paths.push(path);
        if paths.len() >= cap {
            truncated |= !stack.is_empty();
            break 'route;
        }
    }
    Ok(PathSet { paths, truncated })
}

impl DualTrajectory {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Per-snapshot lineage table with columns
/// `replicate,time,lineage,x,y,active`.
pub fn write_snapshot_csv<'a, W: Write>(
    trajectories: impl IntoIterator<Item = (u64, &'a DualTrajectory)>,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["replicate", "time", "lineage", "x", "y", "active"]).map_err(csv_err)?;
    for (rep, traj) in trajectories {
        for s in &traj.snapshots {
            for i in 0..s.state.len() {
                let p = s.state.position(i);
                wtr.write_record([
                    rep.to_string(),
                    s.t.to_string(),
                    i.to_string(),
                    p.x().to_string(),
                    p.y().to_string(),
                    s.state.is_active(i).to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
