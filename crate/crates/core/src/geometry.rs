//! Points in the plane or in 3-space, and the two ambient spaces lineages
//! live in: the plane itself and a periodic square torus.

use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error};

/// Spatial dimension of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn get(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Volume of the unit ball.
    pub fn unit_ball_volume(self) -> f64 {
        match self {
            Dim::Two => std::f64::consts::PI,
            Dim::Three => 4.0 * std::f64::consts::PI / 3.0,
        }
    }

    /// Surface area of the unit sphere, used for radial integrals.
    pub fn unit_sphere_area(self) -> f64 {
        match self {
            Dim::Two => 2.0 * std::f64::consts::PI,
            Dim::Three => 4.0 * std::f64::consts::PI,
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = Error;

    fn try_from(d: u8) -> Result<Self, Error> {
        match d {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            other => Err(param(format!("dimension must be 2 or 3, got {other}"))),
        }
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.get() as u8
    }
}

/// A point (or displacement) with up to three coordinates. In two dimensions
/// the third coordinate stays zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point(pub [f64; 3]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; 3]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn norm2(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn coords(&self, d: Dim) -> &[f64] {
        &self.0[..d.get()]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        Point([self * p.0[0], self * p.0[1], self * p.0[2]])
    }
}

/// Uniform point in the closed unit ball, by rejection from the cube.
pub fn uniform_in_unit_ball<R: Rng + ?Sized>(d: Dim, rng: &mut R) -> Point {
    loop {
        let x = 2.0 * rng.random::<f64>() - 1.0;
        let y = 2.0 * rng.random::<f64>() - 1.0;
        let z = match d {
            Dim::Two => 0.0,
            Dim::Three => 2.0 * rng.random::<f64>() - 1.0,
        };
        if x * x + y * y + z * z <= 1.0 {
            return Point([x, y, z]);
        }
    }
}

/// Where lineages and events live.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Space {
    /// Unbounded R^d.
    Plane,
    /// Square torus [0, side)^2. When `cell` is set, lineage positions are
    /// snapped to the centre of the containing grid cell after every jump.
    Torus { side: f64, cell: Option<f64> },
}

impl Space {
    /// Displacement from `a` to `b` (minimal image on the torus).
    pub fn displacement(&self, a: &Point, b: &Point) -> Point {
        let mut v = *b - *a;
        if let Space::Torus { side, .. } = *self {
            for c in v.0.iter_mut().take(2) {
                *c -= side * (*c / side).round();
            }
        }
        v
    }

    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Map a point into the fundamental domain without snapping.
    pub fn wrap(&self, p: Point) -> Point {
        match *self {
            Space::Plane => p,
            Space::Torus { side, .. } => {
                let mut q = p;
                for c in q.0.iter_mut().take(2) {
                    *c = c.rem_euclid(side);
                }
                q
            }
        }
    }

    /// Map a point into the fundamental domain, snapping to a cell centre
    /// when the torus carries a grid.
    pub fn place(&self, p: Point) -> Point {
        match *self {
            Space::Plane => p,
            Space::Torus { side, cell } => {
                let mut q = p;
                for c in q.0.iter_mut().take(2) {
                    *c = c.rem_euclid(side);
                    if let Some(h) = cell {
                        let m = (side / h).round() as usize;
                        let i = ((*c / h).floor() as usize).min(m - 1);
                        *c = (i as f64 + 0.5) * h;
                    }
                }
                q
            }
        }
    }
}
