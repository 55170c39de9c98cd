//! Reproduction events that cover tracked lineages.
//!
//! Only events whose ball contains at least one lineage are generated. The
//! general sampler superposes one proposal stream per lineage and thins a
//! proposal by the number of lineages its ball covers; the result has
//! exactly the law of the Poisson point process restricted to covering
//! events. Two-lineage runs use the inclusion-exclusion union rate directly.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::geometry::{uniform_in_unit_ball, Point, Space};
use crate::model::{lens_volume_unchecked, ModelParams};

/// One reproduction event in rescaled coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// Centre of the event ball.
    pub x: Point,
    pub r: f64,
    pub selective: bool,
    /// Offsets of the two potential parents within the unit ball.
    pub z1: Point,
    pub z2: Point,
    /// Mark value deciding which covered lineages are affected.
    pub q: f64,
}

impl Event {
    pub fn first_parent(&self) -> Point {
        self.x + self.r * self.z1
    }

    pub fn second_parent(&self) -> Point {
        self.x + self.r * self.z2
    }
}

/// Whether `q` lies in the `i`-th mark set `A_u^i`, so that the lineage
/// with in-ball rank `i` (1-based) is affected.
pub fn mark_member(q: f64, u: f64, i: usize) -> Result<bool> {
    if !(0.0..=1.0).contains(&q) {
        return Err(param(format!("mark value must lie in [0,1], got {q}")));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(param(format!("impact must lie in (0,1], got {u}")));
    }
    if i == 0 {
        return Err(param("mark index is 1-based"));
    }
    Ok(mark_member_unchecked(q, u, i))
}

#[inline]
pub(crate) fn mark_member_unchecked(mut q: f64, u: f64, i: usize) -> bool {
    for _ in 1..i {
        if q <= u {
            q /= u;
        } else {
            q = (q - u) / (1.0 - u);
        }
    }
    q <= u
}

/// Superposed proposal rate for `positions`: `k n λ / u`.
pub fn covering_rate(positions: &[Point], params: &ModelParams) -> Result<f64> {
    if positions.is_empty() {
        return Err(param("covering rate needs at least one position"));
    }
    Ok(positions.len() as f64 * params.proposal_rate())
}

/// A covering event together with the indices of the positions its ball
/// contains, in increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct CoveringEvent {
    pub event: Event,
    pub hits: Vec<usize>,
    /// Proposals drawn to produce this event (at least one).
    pub proposals: u64,
}

#[inline]
pub(crate) fn exp_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Draw the marks of an accepted event: mark value, selectivity and the two
/// parental offsets, in that order.
fn finish_event<R: Rng + ?Sized>(t: f64, x: Point, r: f64, params: &ModelParams, rng: &mut R) -> Event {
    let d = params.d();
    let q = rng.random::<f64>();
    let v = rng.random::<f64>();
    let z1 = uniform_in_unit_ball(d, rng);
    let z2 = uniform_in_unit_ball(d, rng);
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

fn covered(positions: &[Point], x: &Point, r: f64, space: &Space, out: &mut Vec<usize>) {
    out.clear();
    for (i, p) in positions.iter().enumerate() {
        if space.dist(p, x) <= r {
            out.push(i);
        }
    }
}

/// First event after `t0` whose ball covers at least one of `positions`.
pub fn next_covering_event<R: Rng + ?Sized>(
    positions: &[Point],
    t0: f64,
    params: &ModelParams,
    space: &Space,
    rng: &mut R,
) -> Result<CoveringEvent> {
    let rate = covering_rate(positions, params)?;
    let d = params.d();
    let mut t = t0;
    let mut hits = Vec::with_capacity(4);
    let mut proposals = 0u64;
    loop {
        proposals += 1;
        t += exp_sample(rate, rng);
        let anchor = positions[rng.random_range(0..positions.len())];
        let r = params.sample_covering_radius(rng);
        let x = space.wrap(anchor + r * uniform_in_unit_ball(d, rng));
        covered(positions, &x, r, space, &mut hits);
        let accept = hits.len() <= 1 || rng.random::<f64>() * (hits.len() as f64) < 1.0;
        if accept {
            let event = finish_event(t, x, r, params, rng);
            return Ok(CoveringEvent {
                event,
                hits,
                proposals,
            });
        }
    }
}

/// Per-atom rates of events covering at least one of two points `rho`
/// apart: `n n^{d/2} w (2 V_r - V_r(0, rho))`.
pub fn pair_union_rates(rho: f64, params: &ModelParams) -> Vec<f64> {
    let d = params.d();
    let scale = params.n() * params.n().powf(d.get() as f64 / 2.0);
    let v1 = d.unit_ball_volume();
    params
        .mu()
        .atoms()
        .iter()
        .zip(params.scaled_radii())
        .map(|(a, &r)| scale * a.weight * (2.0 * v1 * r.powi(d.get() as i32) - lens_volume_unchecked(r, rho, d)))
        .collect()
}

/// Two-lineage fast path: the first event after `t0` covering `a` or `b`,
/// with the waiting time drawn from the exact union rate.
pub fn next_pair_event<R: Rng + ?Sized>(
    a: Point,
    b: Point,
    t0: f64,
    params: &ModelParams,
    rng: &mut R,
) -> CoveringEvent {
    let rho = a.dist(&b);
    let d = params.d();
    let radii = params.scaled_radii();
    let far = rho >= 2.0 * params.r_n();
    let (t, r) = if far {
        (t0 + exp_sample(2.0 * params.proposal_rate(), rng), params.sample_covering_radius(rng))
    } else {
        let rates = pair_union_rates(rho, params);
        let total: f64 = rates.iter().sum();
        let t = t0 + exp_sample(total, rng);
        let mut x = rng.random::<f64>() * total;
        let mut idx = rates.len() - 1;
        for (i, w) in rates.iter().enumerate() {
            if x < *w {
                idx = i;
                break;
            }
            x -= w;
        }
        (t, radii[idx])
    };
    // Uniform centre on the union of the two balls.
    let mut proposals = 0;
    loop {
        proposals += 1;
        let anchor = if rng.random::<bool>() { a } else { b };
        let x = anchor + r * uniform_in_unit_ball(d, rng);
        let ha = a.dist(&x) <= r;
        let hb = b.dist(&x) <= r;
        if ha && hb && rng.random::<bool>() {
            continue;
        }
        let mut hits = Vec::with_capacity(2);
        if ha {
            hits.push(0);
        }
        if hb {
            hits.push(1);
        }
        let event = finish_event(t, x, r, params, rng);
        return CoveringEvent {
            event,
            hits,
            proposals,
        };
    }
}

/// Flat CSV row for event traces.
#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    r: f64,
    selective: bool,
    q: f64,
    z1x: f64,
    z1y: f64,
    z1z: f64,
    z2x: f64,
    z2y: f64,
    z2z: f64,
}

/// Write events as CSV with columns
/// `t,x,y,z,r,selective,q,z1x,z1y,z1z,z2x,z2y,z2z`. Floats use the shortest
/// round-trip representation, so a trace replays bit-for-bit.
pub fn write_trace<W: Write>(events: &[Event], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for e in events {
        wtr.serialize(TraceRow {
            t: e.t,
            x: e.x.0[0],
            y: e.x.0[1],
            z: e.x.0[2],
            r: e.r,
            selective: e.selective,
            q: e.q,
            z1x: e.z1.0[0],
            z1y: e.z1.0[1],
            z1z: e.z1.0[2],
            z2x: e.z2.0[0],
            z2y: e.z2.0[1],
            z2z: e.z2.0[2],
        })
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<TraceRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(Event {
                t: row.t,
                x: Point([row.x, row.y, row.z]),
                r: row.r,
                selective: row.selective,
                q: row.q,
                z1: Point([row.z1x, row.z1y, row.z1z]),
                z2: Point([row.z2x, row.z2y, row.z2z]),
            })
        })
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dim;
    use crate::model::RadiusMeasure;
    use crate::stream::Stream;
    use std::f64::consts::PI;

    fn params(u: f64, n: f64) -> ModelParams {
        ModelParams::new(Dim::Two, RadiusMeasure::dirac(1.0).unwrap(), u, n).unwrap()
    }

    #[test]
    fn mark_member_examples() {
        assert!(mark_member(0.3, 0.5, 1).unwrap());
        assert!(!mark_member(0.3, 0.5, 2).unwrap());
        assert!(mark_member(0.3, 0.5, 3).unwrap());
        // Closed interval at the boundary.
        assert!(mark_member(0.5, 0.5, 1).unwrap());
        assert!(mark_member(1.0, 1.0, 7).unwrap());
        assert!(mark_member(1.2, 0.5, 1).is_err());
        assert!(mark_member(0.2, 0.0, 1).is_err());
        assert!(mark_member(0.2, 0.5, 0).is_err());
    }

    #[test]
    fn mark_digits_are_iid_bernoulli() {
        let mut rng = Stream::from_seed(8);
        let u = 0.3;
        let trials = 100_000;
        let mut counts = [0u32; 4];
        let mut both12 = 0u32;
        for _ in 0..trials {
            let q: f64 = rng.random();
            let m: Vec<bool> = (1..=4).map(|i| mark_member_unchecked(q, u, i)).collect();
            for (c, b) in counts.iter_mut().zip(&m) {
                *c += *b as u32;
            }
            both12 += (m[0] && m[1]) as u32;
        }
        let se = (u * (1.0 - u) / trials as f64).sqrt();
        for c in counts {
            assert!((c as f64 / trials as f64 - u).abs() < 4.0 * se);
        }
        let p12 = both12 as f64 / trials as f64;
        assert!((p12 - u * u).abs() < 0.004);
    }

    #[test]
    fn covering_rate_examples() {
        let p = params(1.0, 1.0);
        let one = [Point::ORIGIN];
        let two = [Point::ORIGIN, Point::ORIGIN];
        assert!((covering_rate(&one, &p).unwrap() - PI).abs() < 1e-14);
        assert!((covering_rate(&two, &p).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!(covering_rate(&[], &p).is_err());
    }

    /// Two lineages at one point: the union rate is π against a proposal
    /// rate of 2π, so half of all proposals are accepted.
    #[test]
    fn coincident_pair_acceptance_is_one_half() {
        let p = params(1.0, 1.0);
        let pos = [Point::ORIGIN, Point::ORIGIN];
        let mut rng = Stream::from_seed(2);
        let mut events = 0u64;
        let mut proposals = 0u64;
        let mut t = 0.0;
        while proposals < 100_000 {
            let ce = next_covering_event(&pos, t, &p, &Space::Plane, &mut rng).unwrap();
            t = ce.event.t;
            assert_eq!(ce.hits, vec![0, 1]);
            proposals += ce.proposals;
            events += 1;
        }
        let frac = events as f64 / proposals as f64;
        assert!((frac - 0.5).abs() < 4.0 * (0.25 / proposals as f64).sqrt());
        // Time runs at the union rate π.
        assert!((events as f64 / t - PI).abs() / PI < 0.02);
    }

    #[test]
    fn single_lineage_event_rate() {
        for (u, n) in [(1.0, 1.0), (0.5, 10.0)] {
            let p = params(u, n);
            let mut rng = Stream::from_seed(17);
            let pos = [Point::new2(0.3, -0.2)];
            let mut t = 0.0;
            let m = 100_000;
            for _ in 0..m {
                let ce = next_covering_event(&pos, t, &p, &Space::Plane, &mut rng).unwrap();
                assert!(ce.event.x.dist(&pos[0]) <= ce.event.r);
                t = ce.event.t;
            }
            let rate = m as f64 / t;
            assert!((rate / p.proposal_rate() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn separated_pair_is_never_jointly_covered() {
        let p = params(1.0, 16.0);
        let pos = [Point::ORIGIN, Point::new2(2.0 * p.r_n() + 1e-6, 0.0)];
        let mut rng = Stream::from_seed(4);
        let mut t = 0.0;
        for _ in 0..20_000 {
            let ce = next_covering_event(&pos, t, &p, &Space::Plane, &mut rng).unwrap();
            assert_eq!(ce.hits.len(), 1);
            t = ce.event.t;
        }
    }

    #[test]
    fn selective_fraction_matches_s_n() {
        let p = params(1.0, 1e4);
        let mut rng = Stream::from_seed(23);
        let pos = [Point::ORIGIN];
        let m = 100_000;
        let mut sel = 0;
        let mut t = 0.0;
        for _ in 0..m {
            let ce = next_covering_event(&pos, t, &p, &Space::Plane, &mut rng).unwrap();
            t = ce.event.t;
            sel += ce.event.selective as u32;
        }
        let s = p.s_n();
        assert!((s - 1e4f64.ln() / 1e4).abs() < 1e-15);
        let se = (s * (1.0 - s) / m as f64).sqrt();
        assert!((sel as f64 / m as f64 - s).abs() < 3.0 * se);
    }

    /// Inclusion-exclusion oracle for the covering rate of a pair at
    /// separation rho, checked against both samplers.
    #[test]
    fn pair_rate_matches_inclusion_exclusion() {
        let p = ModelParams::new(Dim::Two, RadiusMeasure::new([(0.5, 0.3), (1.0, 0.7)]).unwrap(), 0.8, 1.0).unwrap();
        for rho in [0.0, 0.4, 1.1, 2.5] {
            let expect: f64 = p
                .mu()
                .atoms()
                .iter()
                .map(|a| a.weight * (2.0 * PI * a.radius * a.radius - crate::model::lens_volume(a.radius, rho, Dim::Two).unwrap()))
                .sum();
            let a = Point::ORIGIN;
            let b = Point::new2(rho, 0.0);
            let mut rng = Stream::from_seed(31);
            let m = 100_000;
            let mut t = 0.0;
            for _ in 0..m {
                t = next_covering_event(&[a, b], t, &p, &Space::Plane, &mut rng).unwrap().event.t;
            }
            assert!(((m as f64 / t) / expect - 1.0).abs() < 0.01, "generic rho={rho}");
            let mut t = 0.0;
            let mut joint = 0;
            for _ in 0..m {
                let ce = next_pair_event(a, b, t, &p, &mut rng);
                assert!(!ce.hits.is_empty());
                joint += (ce.hits.len() == 2) as u32;
                t = ce.event.t;
            }
            assert!(((m as f64 / t) / expect - 1.0).abs() < 0.01, "pair rho={rho}");
            let both: f64 = p
                .mu()
                .atoms()
                .iter()
                .map(|a| a.weight * crate::model::lens_volume(a.radius, rho, Dim::Two).unwrap())
                .sum();
            let se = (both / expect * (1.0 - both / expect) / m as f64).sqrt();
            assert!((joint as f64 / m as f64 - both / expect).abs() < 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn events_are_deterministic_given_seed() {
        let p = params(0.8, 100.0);
        let pos = [Point::ORIGIN, Point::new2(0.05, 0.02), Point::new2(0.5, 0.5)];
        let a = next_covering_event(&pos, 1.0, &p, &Space::Plane, &mut Stream::from_seed(9)).unwrap();
        let b = next_covering_event(&pos, 1.0, &p, &Space::Plane, &mut Stream::from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.event.t > 1.0);
        assert!(a.event.z1.norm() <= 1.0 && a.event.z2.norm() <= 1.0);
        assert!((0.0..=1.0).contains(&a.event.q));
    }

    #[test]
    fn trace_roundtrip_is_exact() {
        let p = params(0.8, 100.0);
        let mut rng = Stream::from_seed(12);
        let mut t = 0.0;
        let events: Vec<Event> = (0..50)
            .map(|_| {
                let e = next_covering_event(&[Point::ORIGIN], t, &p, &Space::Plane, &mut rng).unwrap().event;
                t = e.t;
                e
            })
            .collect();
        let mut buf = Vec::new();
        write_trace(&events, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(events, back);
    }
}
