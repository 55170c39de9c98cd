//! Binary branching Brownian motion and comparisons with caterpillar
//! forests.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::caterpillar::{CaterpillarForest, SampledPath};
use crate::dual::Path;
use crate::error::{param, Result};
use crate::events::exp_sample;
use crate::geometry::Point;
use crate::stats::{chi_square_gof, chi_square_homogeneity, ks_two_sample, ChiSquareResult, KsResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbmNode {
    pub label: String,
    pub birth: f64,
    /// Branch time, or the horizon for particles alive at the end.
    pub death: f64,
    pub branched: bool,
    pub start: Point,
    pub end: Point,
    pub path: Option<SampledPath>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBMTree {
    pub root: Point,
    pub v: f64,
    pub sigma2: f64,
    pub horizon: f64,
    pub nodes: Vec<BbmNode>,
    pub truncated: bool,
}

/// Default particle cap per tree.
pub const MAX_PARTICLES: usize = 1_000_000;

/// BBM from `p` with branching rate `v` and per-coordinate diffusion
/// `sigma2`, on `[0, horizon]`. Positions are two-dimensional.
pub fn simulate_bbm<R: Rng + ?Sized>(
    p: Point,
    v: f64,
    sigma2: f64,
    horizon: f64,
    grid: Option<f64>,
    max_particles: usize,
    rng: &mut R,
) -> Result<BBMTree> {
    if !(v > 0.0 && v.is_finite()) || !(sigma2 > 0.0 && sigma2.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(param(format!("need V, sigma2, T positive and finite; got {v}, {sigma2}, {horizon}")));
    }
    if let Some(dt) = grid {
        if !(dt > 0.0) {
            return Err(param(format!("grid step must be positive, got {dt}")));
        }
    }
    let sd = sigma2.sqrt();
    let gauss = Normal::new(0.0, 1.0).expect("standard normal");
    let step = |from: Point, dt: f64, rng: &mut R| {
        let s = sd * dt.sqrt();
        from + Point::new2(s * gauss.sample(rng), s * gauss.sample(rng))
    };
    let mut nodes = Vec::new();
    let mut queue = std::collections::VecDeque::from([(String::new(), 0.0, p)]);
    let mut alive = 1usize;
    let mut truncated = false;
    while let Some((label, birth, start)) = queue.pop_front() {
        let life = exp_sample(v, rng);
        let branched = birth + life < horizon;
        let death = if branched { birth + life } else { horizon };
        let mut pos = start;
        let path = match grid {
            Some(dt) => {
                let mut sp = SampledPath::new(dt);
                sp.points.push(start);
                let mut t = 0.0;
                while (sp.points.len() as f64) * dt <= death - birth {
                    let next = sp.points.len() as f64 * dt;
                    pos = step(pos, next - t, rng);
                    t = next;
                    sp.points.push(pos);
                }
                if death - birth > t {
                    pos = step(pos, death - birth - t, rng);
                }
                Some(sp)
            }
            None => {
                pos = step(pos, death - birth, rng);
                None
            }
        };
        if branched {
            alive += 1;
            if alive > max_particles {
                truncated = true;
            } else {
                queue.push_back((format!("{label}1"), death, pos));
                queue.push_back((format!("{label}2"), death, pos));
            }
        }
        nodes.push(BbmNode {
            label,
            birth,
            death,
            branched,
            start,
            end: pos,
            path,
        });
        if truncated {
            break;
        }
    }
    Ok(BBMTree {
        root: p,
        v,
        sigma2,
        horizon,
        nodes,
        truncated,
    })
}

impl BBMTree {
    pub fn leaves(&self) -> impl Iterator<Item = &BbmNode> {
        self.nodes.iter().filter(|n| !n.branched)
    }

    pub fn particle_count(&self) -> usize {
        self.leaves().count()
    }

    /// Root-to-leaf paths on the sampling grid.
    pub fn leaf_paths(&self) -> Result<Vec<Path>> {
        let by: std::collections::HashMap<&str, &BbmNode> = self.nodes.iter().map(|n| (n.label.as_str(), n)).collect();
        self.leaves()
            .map(|leaf| {
                let mut path = Path::new();
                for depth in 0..=leaf.label.len() {
                    let n = by[&leaf.label[..depth]];
                    let sp = n.path.as_ref().ok_or_else(|| param("tree was simulated without paths"))?;
                    path.extend(sp.to_path(n.birth).into_iter().filter(|(t, _)| *t < n.death));
                }
                path.push((leaf.death, leaf.end));
                Ok(path)
            })
            .collect()
    }
}

/// The parts of a genealogy at the horizon that are compared between
/// forests and trees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyStructure {
    pub count: usize,
    /// Leaf positions minus the root.
    pub displacements: Vec<Point>,
    /// Distances between pairs among the first few leaves.
    pub pairwise: Vec<f64>,
    pub truncated: bool,
}

/// Leaves used for pairwise distances, to keep the cost quadratic in a
/// constant.
const PAIR_LEAVES: usize = 64;

impl FamilyStructure {
    fn from_leaves(root: Point, leaves: Vec<Point>, truncated: bool) -> Self {
        let k = leaves.len().min(PAIR_LEAVES);
        let mut pairwise = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                pairwise.push(leaves[i].dist(&leaves[j]));
            }
        }
        FamilyStructure {
            count: leaves.len(),
            displacements: leaves.iter().map(|&q| q - root).collect(),
            pairwise,
            truncated,
        }
    }

    pub fn from_forest(f: &CaterpillarForest) -> Self {
        Self::from_leaves(f.root, f.leaf_positions(), f.truncated)
    }

    pub fn from_tree(t: &BBMTree) -> Self {
        Self::from_leaves(t.root, t.leaves().map(|n| n.end).collect(), t.truncated)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub samples: usize,
    pub truncated_a: usize,
    pub truncated_b: usize,
    pub mean_count_a: f64,
    pub mean_count_b: f64,
    pub count: ChiSquareResult,
    pub displacement_x: KsResult,
    pub displacement_y: KsResult,
    pub pairwise: Option<KsResult>,
}

impl FamilyReport {
    /// Larger of the two per-coordinate displacement KS distances.
    pub fn displacement_distance(&self) -> f64 {
        self.displacement_x.statistic.max(self.displacement_y.statistic)
    }
}

pub fn compare_families(a: &[FamilyStructure], b: &[FamilyStructure]) -> Result<FamilyReport> {
    if a.len() != b.len() {
        return Err(param(format!("sample sizes differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(param("nothing to compare"));
    }
    let hist = |s: &[FamilyStructure], max: usize| {
        let mut h = vec![0u64; max + 1];
        for f in s {
            h[f.count] += 1;
        }
        h
    };
    let max = a.iter().chain(b).map(|f| f.count).max().unwrap_or(0);
    let count = chi_square_homogeneity(&hist(a, max), &hist(b, max))?;
    let coord = |s: &[FamilyStructure], i: usize| s.iter().flat_map(|f| f.displacements.iter().map(move |d| d.0[i])).collect::<Vec<_>>();
    let pairs = |s: &[FamilyStructure]| s.iter().flat_map(|f| f.pairwise.iter().copied()).collect::<Vec<_>>();
    let (pa, pb) = (pairs(a), pairs(b));
    let mean = |s: &[FamilyStructure]| s.iter().map(|f| f.count as f64).sum::<f64>() / s.len() as f64;
    Ok(FamilyReport {
        samples: a.len(),
        truncated_a: a.iter().filter(|f| f.truncated).count(),
        truncated_b: b.iter().filter(|f| f.truncated).count(),
        mean_count_a: mean(a),
        mean_count_b: mean(b),
        count,
        displacement_x: ks_two_sample(&coord(a, 0), &coord(b, 0))?,
        displacement_y: ks_two_sample(&coord(a, 1), &coord(b, 1))?,
        pairwise: if pa.is_empty() || pb.is_empty() { None } else { Some(ks_two_sample(&pa, &pb)?) },
    })
}

/// Forests against BBM trees (built with `V = λ κ̂_n` and the model's σ²).
pub fn compare_family_structure(forests: &[CaterpillarForest], trees: &[BBMTree]) -> Result<FamilyReport> {
    let a: Vec<FamilyStructure> = forests.iter().map(FamilyStructure::from_forest).collect();
    let b: Vec<FamilyStructure> = trees.iter().map(FamilyStructure::from_tree).collect();
    compare_families(&a, &b)
}

/// Chi-square of particle counts against the Yule law at `T`: Geometric on
/// `{1, 2, ...}` with success probability `e^{-VT}`.
pub fn yule_count_test(counts: &[usize], v: f64, horizon: f64) -> Result<ChiSquareResult> {
    if counts.is_empty() {
        return Err(param("no counts"));
    }
    let q = (-v * horizon).exp();
    let max = counts.iter().copied().max().unwrap_or(1).max(1);
    let mut observed = vec![0u64; max];
    for &c in counts {
        if c == 0 {
            return Err(param("particle counts start at 1"));
        }
        observed[c - 1] += 1;
    }
    let mut probs: Vec<f64> = (1..max).map(|k| q * (1.0 - q).powi(k as i32 - 1)).collect();
    probs.push((1.0 - q).powi(max as i32 - 1));
    chi_square_gof(&observed, &probs, 0)
}
