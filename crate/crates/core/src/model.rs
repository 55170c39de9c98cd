//! Model parameters and the analytic quantities derived from them.
//!
//! All simulation happens in rescaled coordinates: at scale `n` an event of
//! radius `r` under the radius measure has radius `r / sqrt(n)`, events
//! arrive with intensity `n dt ⊗ n^{d/2} dx ⊗ mu^n(dr)`, and each one is
//! selective with probability `s_n`.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::geometry::Dim;
use crate::quadrature::{integrate, integrate_pieces};

/// Absolute tolerance for the radial lens moments.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Default excursion exponent `c`.
pub const DEFAULT_EXPONENT: f64 = 4.0;

/// Volume of the intersection of two `d`-balls of radius `r` whose centres
/// are `rho` apart.
pub fn lens_volume(r: f64, rho: f64, d: Dim) -> Result<f64> {
    if !(r > 0.0) || !(rho >= 0.0) || !r.is_finite() || !rho.is_finite() {
        return Err(param(format!("lens volume needs r > 0 and rho >= 0, got r = {r}, rho = {rho}")));
    }
    Ok(lens_volume_unchecked(r, rho, d))
}

#[inline]
pub(crate) fn lens_volume_unchecked(r: f64, rho: f64, d: Dim) -> f64 {
    if rho >= 2.0 * r {
        return 0.0;
    }
    match d {
        Dim::Two => {
            2.0 * r * r * (rho / (2.0 * r)).acos() - 0.5 * rho * (4.0 * r * r - rho * rho).sqrt()
        }
        Dim::Three => std::f64::consts::PI * (4.0 * r + rho) * (2.0 * r - rho).powi(2) / 12.0,
    }
}

/// Dimensionless moments `∫ |y|^k V_1(0, y) dy` for k = 0 and k = 2.
#[derive(Clone, Copy, Debug)]
struct LensMoments {
    m0: f64,
    m2: f64,
}

fn lens_moments(d: Dim) -> Result<LensMoments> {
    static TWO: OnceLock<std::result::Result<(f64, f64), (f64, f64)>> = OnceLock::new();
    static THREE: OnceLock<std::result::Result<(f64, f64), (f64, f64)>> = OnceLock::new();
    let cell = match d {
        Dim::Two => &TWO,
        Dim::Three => &THREE,
    };
    let r = cell.get_or_init(|| {
        let s = d.unit_sphere_area();
        let k = d.get() as i32;
        let radial = |p: i32| {
            integrate(
                |rho| s * rho.powi(k - 1 + p) * lens_volume_unchecked(1.0, rho, d),
                0.0,
                2.0,
                QUADRATURE_TOL,
            )
        };
        match (radial(0), radial(2)) {
            (Ok(m0), Ok(m2)) => Ok((m0, m2)),
            (Err(crate::Error::Numerical { achieved, tolerance }), _)
            | (_, Err(crate::Error::Numerical { achieved, tolerance })) => Err((achieved, tolerance)),
            _ => Err((f64::NAN, QUADRATURE_TOL)),
        }
    });
    match *r {
        Ok((m0, m2)) => Ok(LensMoments { m0, m2 }),
        Err((achieved, tolerance)) => Err(crate::Error::Numerical { achieved, tolerance }),
    }
}

/// A finite discrete radius measure `mu = sum_i w_i δ_{r_i}` on `(0, R]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct RadiusMeasure {
    atoms: Vec<Atom>,
    r_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub radius: f64,
    pub weight: f64,
}

impl RadiusMeasure {
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(radius, weight)| Atom { radius, weight })
            .collect();
        if atoms.is_empty() {
            return Err(param("radius measure needs at least one atom"));
        }
        for a in &atoms {
            if !(a.radius > 0.0 && a.radius.is_finite()) {
                return Err(param(format!("atom radius must be positive and finite, got {}", a.radius)));
            }
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(param(format!("atom weight must be positive and finite, got {}", a.weight)));
            }
        }
        let r_max = atoms.iter().map(|a| a.radius).fold(0.0, f64::max);
        Ok(RadiusMeasure { atoms, r_max })
    }

    /// Point mass of unit weight at `radius`.
    pub fn dirac(radius: f64) -> Result<Self> {
        Self::new([(radius, 1.0)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// The largest radius `R`.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `∫ r^k mu(dr)`.
    pub fn moment(&self, k: i32) -> f64 {
        self.atoms.iter().map(|a| a.weight * a.radius.powi(k)).sum()
    }
}

impl TryFrom<Vec<[f64; 2]>> for RadiusMeasure {
    type Error = crate::Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(v.into_iter().map(|[r, w]| (r, w)))
    }
}

impl From<RadiusMeasure> for Vec<[f64; 2]> {
    fn from(m: RadiusMeasure) -> Self {
        m.atoms.iter().map(|a| [a.radius, a.weight]).collect()
    }
}

/// How the per-event selection probability is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// `s_n = log(n)/n` in two dimensions and `1/n` in three.
    #[default]
    Scaled,
    /// A fixed probability, e.g. 0 for neutral-only runs.
    Fixed(f64),
}

/// Serializable parameter block; the schema of the `[params]` table in
/// experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub d: Dim,
    pub u: f64,
    pub n: f64,
    #[serde(default = "default_exponent")]
    pub c: f64,
    /// `[radius, weight]` pairs.
    pub atoms: RadiusMeasure,
    #[serde(default)]
    pub selection: Selection,
}

fn default_exponent() -> f64 {
    DEFAULT_EXPONENT
}

/// Immutable, validated model parameters with their derived rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    d: Dim,
    mu: RadiusMeasure,
    u: f64,
    n: f64,
    c: f64,
    selection: Selection,
    s_n: f64,
    r_n: f64,
    gamma_n: f64,
    lambda: f64,
    sigma2: f64,
    /// Rescaled radii and cumulative `w r^d` weights for proposal sampling.
    scaled_radii: Vec<f64>,
    volume_cdf: Vec<f64>,
    mass_cdf: Vec<f64>,
}

impl ModelParams {
    pub fn new(d: Dim, mu: RadiusMeasure, u: f64, n: f64) -> Result<Self> {
        Self::build(d, mu, u, n, DEFAULT_EXPONENT, Selection::Scaled)
    }

    pub fn from_config(cfg: &ParamsConfig) -> Result<Self> {
        Self::build(cfg.d, cfg.atoms.clone(), cfg.u, cfg.n, cfg.c, cfg.selection)
    }

    pub fn to_config(&self) -> ParamsConfig {
        ParamsConfig {
            d: self.d,
            u: self.u,
            n: self.n,
            c: self.c,
            atoms: self.mu.clone(),
            selection: self.selection,
        }
    }

    fn build(d: Dim, mu: RadiusMeasure, u: f64, n: f64, c: f64, selection: Selection) -> Result<Self> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(param(format!("impact u must lie in (0, 1], got {u}")));
        }
        if !(n >= 1.0 && n.is_finite()) {
            return Err(param(format!("scale n must be a finite real >= 1, got {n}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(param(format!("exponent c must be positive, got {c}")));
        }
        let s_n = match selection {
            Selection::Scaled => match d {
                Dim::Two => n.ln() / n,
                Dim::Three => 1.0 / n,
            },
            Selection::Fixed(s) => {
                if !(0.0..1.0).contains(&s) {
                    return Err(param(format!("fixed selection probability must lie in [0, 1), got {s}")));
                }
                s
            }
        };
        let sqrt_n = n.sqrt();
        let r_n = mu.r_max() / sqrt_n;
        let gamma_n = n.ln().powf(-c);
        let v1 = d.unit_ball_volume();
        let k = d.get() as i32;
        let lambda = u * v1 * mu.moment(k);
        let moments = lens_moments(d)?;
        let sigma2 = u / d.get() as f64 * mu.moment(k + 2) * moments.m2 / v1;

        let scaled_radii = mu.atoms().iter().map(|a| a.radius / sqrt_n).collect();
        let cumulative = |weights: Vec<f64>| {
            let total: f64 = weights.iter().sum();
            let mut acc = 0.0;
            weights
                .iter()
                .map(|w| {
                    acc += w / total;
                    acc
                })
                .collect::<Vec<_>>()
        };
        let volume_cdf = cumulative(mu.atoms().iter().map(|a| a.weight * a.radius.powi(k)).collect());
        let mass_cdf = cumulative(mu.atoms().iter().map(|a| a.weight).collect());

        Ok(ModelParams {
            d,
            mu,
            u,
            n,
            c,
            selection,
            s_n,
            r_n,
            gamma_n,
            lambda,
            sigma2,
            scaled_radii,
            volume_cdf,
            mass_cdf,
        })
    }

    /// Same parameters at another scale `n`.
    pub fn with_n(&self, n: f64) -> Result<Self> {
        Self::build(self.d, self.mu.clone(), self.u, n, self.c, self.selection)
    }

    pub fn with_u(&self, u: f64) -> Result<Self> {
        Self::build(self.d, self.mu.clone(), u, self.n, self.c, self.selection)
    }

    pub fn with_exponent(&self, c: f64) -> Result<Self> {
        Self::build(self.d, self.mu.clone(), self.u, self.n, c, self.selection)
    }

    pub fn with_selection(&self, selection: Selection) -> Result<Self> {
        Self::build(self.d, self.mu.clone(), self.u, self.n, self.c, selection)
    }

    pub fn d(&self) -> Dim {
        self.d
    }
    pub fn mu(&self) -> &RadiusMeasure {
        &self.mu
    }
    pub fn u(&self) -> f64 {
        self.u
    }
    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn selection(&self) -> Selection {
        self.selection
    }
    /// Probability that an event is selective.
    pub fn s_n(&self) -> f64 {
        self.s_n
    }
    /// Rescaled maximal radius `R / sqrt(n)`.
    pub fn r_n(&self) -> f64 {
        self.r_n
    }
    /// Divergence threshold `(log n)^{-c}`; infinite at `n = 1`.
    pub fn gamma_n(&self) -> f64 {
        self.gamma_n
    }
    /// Excursion time horizon `(log n)^{-c}`, equal to `gamma_n`.
    pub fn overshoot_time(&self) -> f64 {
        self.gamma_n
    }
    /// Jump rate per unit `n`: `u V_1 ∫ r^d mu(dr)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Whether `7 R_n < gamma_n`, the separation of scales the excursion
    /// decomposition relies on.
    pub fn standing_assumption_holds(&self) -> bool {
        7.0 * self.r_n < self.gamma_n
    }

    /// Rate of events whose ball covers one given point: `n λ / u`.
    pub fn proposal_rate(&self) -> f64 {
        self.n * self.lambda / self.u
    }

    /// Rate of events on a region of volume `area`: `n · n^{d/2} · area · mu(total)`.
    pub fn event_rate_on(&self, area: f64) -> f64 {
        self.n * self.n.powf(self.d.get() as f64 / 2.0) * area * self.mu.total_mass()
    }

    pub(crate) fn scaled_radii(&self) -> &[f64] {
        &self.scaled_radii
    }

    /// Rescaled radius drawn with probability proportional to `w r^d`: the
    /// radius of an event covering a fixed point.
    pub fn sample_covering_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scaled_radii[pick(&self.volume_cdf, rng.random())]
    }

    /// Rescaled radius drawn with probability proportional to `w`: the
    /// radius of an event with a uniformly placed centre.
    pub fn sample_radius<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scaled_radii[pick(&self.mass_cdf, rng.random())]
    }

    /// JSON audit of inputs and derived quantities.
    pub fn derived_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "params": self.to_config(),
            "s_n": self.s_n,
            "R_n": self.r_n,
            "gamma_n": self.gamma_n,
            "lambda": self.lambda,
            "sigma2": self.sigma2,
            "total_jump_rate": total_jump_rate(self),
            "neighbourhood_size": neighbourhood_size(self)?,
            "standing_assumption_holds": self.standing_assumption_holds(),
        }))
    }
}

#[inline]
fn pick(cdf: &[f64], x: f64) -> usize {
    cdf.iter().position(|&c| x < c).unwrap_or(cdf.len() - 1)
}

/// Rate density `m_n(z)` at which a lineage jumps by displacement `z`.
pub fn jump_intensity_density(z: &crate::Point, params: &ModelParams) -> f64 {
    jump_density_radial(z.norm(), params)
}

fn jump_density_radial(rho: f64, params: &ModelParams) -> f64 {
    let d = params.d;
    let n = params.n;
    let nd2 = n.powf(d.get() as f64 / 2.0);
    let v1 = d.unit_ball_volume();
    params
        .mu
        .atoms()
        .iter()
        .zip(&params.scaled_radii)
        .map(|(a, &r)| {
            let vr = v1 * r.powi(d.get() as i32);
            nd2 * a.weight * lens_volume_unchecked(r, rho, d) / vr
        })
        .sum::<f64>()
        * n
        * params.u
}

/// Total jump rate of one lineage, `n u V_1 ∫ r^d mu(dr) = n λ`.
pub fn total_jump_rate(params: &ModelParams) -> f64 {
    params.n * params.lambda
}

/// Radial quadrature of [`jump_intensity_density`]; agrees with
/// [`total_jump_rate`] to quadrature accuracy.
pub fn jump_rate_by_quadrature(params: &ModelParams) -> Result<f64> {
    let d = params.d;
    let s = d.unit_sphere_area();
    let k = d.get() as i32;
    let mut breaks: Vec<f64> = params.scaled_radii.iter().map(|r| 2.0 * r).collect();
    breaks.push(0.0);
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    let tol = 1e-12 * total_jump_rate(params);
    integrate_pieces(|rho| s * rho.powi(k - 1) * jump_density_radial(rho, params), &breaks, tol)
}

/// Diffusion constant `σ² = (1/d) ∫ |z|² m_n(dz)`, evaluated through the
/// n-free radial moment of the lens volume.
pub fn diffusion_constant(params: &ModelParams) -> Result<f64> {
    let m = lens_moments(params.d)?;
    let k = params.d.get() as i32;
    Ok(params.u / params.d.get() as f64 * params.mu.moment(k + 2) * m.m2 / params.d.unit_ball_volume())
}

/// Unscaled pairwise coalescence rate density `η(x) = u² Σ w_r V_r(0, x)`.
pub fn coalescence_rate_density(rho: f64, params: &ModelParams) -> f64 {
    params.u
        * params.u
        * params
            .mu
            .atoms()
            .iter()
            .map(|a| a.weight * lens_volume_unchecked(a.radius, rho, params.d))
            .sum::<f64>()
}

/// `∫ η(x) dx` by radial quadrature.
pub fn coalescence_integral(params: &ModelParams) -> Result<f64> {
    let m = lens_moments(params.d)?;
    let k = params.d.get() as i32;
    Ok(params.u * params.u * params.mu.moment(2 * k) * m.m0)
}

/// Neighbourhood size `N = 2 d C_d σ² / ∫ η`.
pub fn neighbourhood_size(params: &ModelParams) -> Result<f64> {
    let d = params.d;
    Ok(2.0 * d.get() as f64 * d.unit_ball_volume() * diffusion_constant(params)? / coalescence_integral(params)?)
}
