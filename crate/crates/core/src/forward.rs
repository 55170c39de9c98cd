//! The forward allele-frequency field on a square torus, discretised on a
//! grid of cells, and the moment-duality check against the dual.
//!
//! Cell values are the proportion of type `a` at the cell centre. Parents
//! take the type of the cell containing them, and dual lineages are snapped
//! to cell centres, so the discrete forward and dual processes are exactly
//! dual to each other.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{simulate_dual_from, Caps, DualOptions};
use crate::error::{param, Result};
use crate::events::{exp_sample, Event};
use crate::geometry::{uniform_in_unit_ball, Dim, Point, Space};
use crate::model::ModelParams;
use crate::stats::{mean_var, normal_quantile};
use crate::stream::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlleleField {
    pub side: f64,
    pub h: f64,
    /// Cells per side.
    pub m: usize,
    /// Row-major values, row index along y.
    pub cells: Vec<f64>,
    pub t: f64,
}

/// Initial fields that can be written in a config.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialField {
    Constant { value: f64 },
    /// 1 for `x < threshold`, 0 otherwise.
    HalfPlane { threshold: f64 },
}

impl InitialField {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            InitialField::Constant { value } => value,
            InitialField::HalfPlane { threshold } => (p.x() < threshold) as u8 as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        if let InitialField::Constant { value } = *self {
            if !(0.0..=1.0).contains(&value) {
                return Err(param(format!("constant field value must lie in [0,1], got {value}")));
            }
        }
        Ok(())
    }
}

impl AlleleField {
    pub fn new(side: f64, h: f64, w0: impl Fn(Point) -> f64) -> Result<Self> {
        if !(side > 0.0 && h > 0.0 && side.is_finite()) {
            return Err(param("torus side and cell size must be positive"));
        }
        let m = (side / h).round();
        if (m * h - side).abs() > 1e-9 * side || m < 1.0 {
            return Err(param(format!("cell size {h} does not divide the torus side {side}")));
        }
        let m = m as usize;
        let mut cells = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                let v = w0(Self::centre_of(h, i, j));
                if !(0.0..=1.0).contains(&v) {
                    return Err(param(format!("initial value {v} outside [0,1]")));
                }
                cells.push(v);
            }
        }
        Ok(AlleleField { side, h, m, cells, t: 0.0 })
    }

    fn centre_of(h: f64, i: usize, j: usize) -> Point {
        Point::new2((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    pub fn centre(&self, i: usize, j: usize) -> Point {
        Self::centre_of(self.h, i, j)
    }

    pub fn space(&self) -> Space {
        Space::Torus {
            side: self.side,
            cell: Some(self.h),
        }
    }

    /// Value of the cell containing `p`.
    pub fn value_at(&self, p: Point) -> f64 {
        let c = self.space().place(p);
        let i = ((c.x() / self.h).floor() as usize).min(self.m - 1);
        let j = ((c.y() / self.h).floor() as usize).min(self.m - 1);
        self.cells[j * self.m + i]
    }

    pub fn mean(&self) -> f64 {
        self.cells.iter().sum::<f64>() / self.cells.len() as f64
    }

    /// Dense CSV raster: a `# side=..,h=..,t=..` header line, then one row
    /// per y index.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# side={},h={},t={}", self.side, self.h, self.t)?;
        for row in self.cells.chunks(self.m) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Apply one reproduction event, drawing parental types from `rng`.
pub fn apply_forward_event<R: Rng + ?Sized>(field: &mut AlleleField, event: &Event, params: &ModelParams, rng: &mut R) {
    let u = params.u();
    let wa = field.value_at(event.first_parent());
    let alpha = rng.random::<f64>() < wa;
    let offspring_a = if event.selective {
        let wb = field.value_at(event.second_parent());
        alpha && rng.random::<f64>() < wb
    } else {
        alpha
    };
    let target = if offspring_a { u } else { 0.0 };
    let space = field.space();
    let (h, m) = (field.h, field.m as i64);
    let span = (event.r / h).ceil() as i64 + 1;
    let ci = (event.x.x() / h).floor() as i64;
    let cj = (event.x.y() / h).floor() as i64;
    // Each cell at most once, even if the box wraps past itself.
    let mut seen = Vec::new();
    for dj in -span..=span {
        for di in -span..=span {
            let i = (ci + di).rem_euclid(m) as usize;
            let j = (cj + dj).rem_euclid(m) as usize;
            let idx = j * field.m + i;
            if 2 * span + 1 > m {
                if seen.contains(&idx) {
                    continue;
                }
                seen.push(idx);
            }
            if space.dist(&field.centre(i, j), &event.x) <= event.r {
                let w = &mut field.cells[idx];
                *w = (1.0 - u) * *w + target;
                debug_assert!((0.0..=1.0).contains(w));
            }
        }
    }
}

/// Draw an event uniformly over the torus.
fn torus_event<R: Rng + ?Sized>(t: f64, side: f64, params: &ModelParams, rng: &mut R) -> Event {
    let x = Point::new2(rng.random::<f64>() * side, rng.random::<f64>() * side);
    let r = params.sample_radius(rng);
    let q = rng.random::<f64>();
    let v = rng.random::<f64>();
    let z1 = uniform_in_unit_ball(Dim::Two, rng);
    let z2 = uniform_in_unit_ball(Dim::Two, rng);
    Event {
        t,
        x,
        r,
        selective: v < params.s_n(),
        z1,
        z2,
        q,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardRun {
    pub field: AlleleField,
    pub events: u64,
    /// Spatial mean at each observation time.
    pub means: Vec<(f64, f64)>,
}

fn check_forward(params: &ModelParams, side: f64) -> Result<()> {
    if params.d() != Dim::Two {
        return Err(param("the forward field is two-dimensional"));
    }
    if !(side > 4.0 * params.r_n()) {
        return Err(param(format!("torus side {side} must exceed 4 R_n = {}", 4.0 * params.r_n())));
    }
    Ok(())
}

pub fn simulate_forward<R: Rng + ?Sized>(
    mut field: AlleleField,
    horizon: f64,
    params: &ModelParams,
    observe: &[f64],
    rng: &mut R,
) -> Result<ForwardRun> {
    check_forward(params, field.side)?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(param("horizon must be finite and non-negative"));
    }
    let rate = params.event_rate_on(field.side * field.side);
    let mut t = field.t;
    let end = field.t + horizon;
    let mut events = 0;
    let mut means = Vec::new();
    let mut pending = observe.iter().copied().peekable();
    loop {
        let next = t + exp_sample(rate, rng);
        while let Some(&o) = pending.peek() {
            if o >= next.min(end + f64::MIN_POSITIVE) {
                break;
            }
            means.push((o, field.mean()));
            pending.next();
        }
        if next > end {
            break;
        }
        t = next;
        let e = torus_event(t, field.side, params, rng);
        apply_forward_event(&mut field, &e, params, rng);
        events += 1;
    }
    for o in pending.filter(|&o| o <= end) {
        means.push((o, field.mean()));
    }
    field.t = end;
    Ok(ForwardRun { field, events, means })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

fn moment(values: &[f64]) -> MomentEstimate {
    let (mean, var) = mean_var(values);
    let se = (var.max(0.0) / values.len() as f64).sqrt();
    let z = normal_quantile(0.95);
    MomentEstimate {
        mean,
        se,
        ci: (mean - z * se, mean + z * se),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub points: Vec<Point>,
    pub horizon: f64,
    pub replicates: u64,
    pub forward: MomentEstimate,
    pub dual: MomentEstimate,
    pub z: f64,
    /// `|forward - dual|` within the joint 95% interval.
    pub agree: bool,
    pub dual_truncated: u64,
}

/// Compare `E[∏ w_T(x_j)]` from forward runs with `E[∏ w_0(ξ^j_T)]` from
/// dual runs on the same torus.
#[allow(clippy::too_many_arguments)]
pub fn duality_check(
    points: &[Point],
    w0: InitialField,
    horizon: f64,
    replicates: u64,
    side: f64,
    h: f64,
    params: &ModelParams,
    base: &Stream,
) -> Result<DualityReport> {
    if points.is_empty() || points.len() > 3 {
        return Err(param("duality check takes one to three points"));
    }
    if replicates < 2 {
        return Err(param("need at least two replicates per side"));
    }
    if !(horizon > 0.0) {
        return Err(param("horizon must be positive"));
    }
    w0.validate()?;
    check_forward(params, side)?;
    let field0 = AlleleField::new(side, h, |p| w0.eval(p))?;
    let space = field0.space();
    let snapped: Vec<Point> = points.iter().map(|&p| space.place(p)).collect();

    let fwd_base = base.child(b"forward");
    let lhs: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let run = simulate_forward(field0.clone(), horizon, params, &[], &mut fwd_base.child_index(i))?;
            Ok(snapped.iter().map(|&p| run.field.value_at(p)).product())
        })
        .collect::<Result<_>>()?;

    let dual_base = base.child(b"dual");
    let opts = DualOptions {
        caps: Caps::default(),
        ..Default::default()
    };
    let rhs: Vec<(f64, bool)> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let traj = simulate_dual_from(&snapped, horizon, params, &space, &opts, &mut dual_base.child_index(i))?;
            let s = &traj.final_state;
            let prod = s.active_indices().iter().map(|&k| field0.value_at(s.positions[k])).product();
            Ok((prod, traj.truncated.is_some()))
        })
        .collect::<Result<_>>()?;
    let dual_truncated = rhs.iter().filter(|r| r.1).count() as u64;
    let rhs: Vec<f64> = rhs.into_iter().map(|r| r.0).collect();

    let forward = moment(&lhs);
    let dual = moment(&rhs);
    let diff = forward.mean - dual.mean;
    let se = (forward.se.powi(2) + dual.se.powi(2)).sqrt();
    let z = if diff == 0.0 { 0.0 } else { diff / se };
    Ok(DualityReport {
        points: snapped,
        horizon,
        replicates,
        forward,
        dual,
        z,
        agree: z.abs() <= normal_quantile(0.95),
        dual_truncated,
    })
}
