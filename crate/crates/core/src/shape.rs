//! Time-constant and asymptotic-shape estimation.
//!
//! Shape runs scale targets to a common radius n, estimate T(0, z) per
//! direction across replicas, and place the scaled points z / mean T on
//! the estimated unit ball. Replicas whose geodesic touches the box
//! boundary are discarded (restricted paths bias T upward) and counted.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::busemann::LinearFunctional;
use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{euclid_norm, BoxRegion};
use crate::metric::PassageMap;
use crate::rng::{mix, STREAM_REPLICA};
use crate::stats::RunningMoments;
use crate::weights::WeightSpec;

/// Estimate for one grid direction. `mu_hat` is time per lattice unit
/// along the rounded target; `radius` is the scaled-ball radius 1/mu_hat.
#[derive(Debug, Clone, Serialize)]
pub struct DirectionEstimate {
    pub angle: f64,
    pub target: Vec<i64>,
    pub target_norm: f64,
    pub moments: RunningMoments,
    pub mu_hat: Option<f64>,
    pub mu_stderr: Option<f64>,
    pub radius: Option<f64>,
    pub radius_stderr: Option<f64>,
    pub kept: u64,
    pub discarded: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShapeEstimate {
    pub n: i64,
    pub replicas: u64,
    pub directions: Vec<DirectionEstimate>,
    /// Scaled points z / mean T(0, z), one per direction with data.
    pub cloud: Vec<[f64; 2]>,
    /// Convex hull of the cloud, counterclockwise.
    pub hull: Vec<[f64; 2]>,
    pub origin_inside: bool,
    /// Max over dihedral orbits of the relative radius mismatch
    /// (max - min) / min within the orbit. Exactly 0 on deterministic runs.
    pub symmetry_defect: Option<f64>,
    /// Root mean square, over dihedral orbit pairs, of the pooled
    /// standard error sqrt(se_i^2 + se_j^2) of the compared relative
    /// radii; the comparison scale for the symmetry defect.
    pub pooled_stderr: Option<f64>,
    /// Max distance from a cloud point to the hull boundary; depth of
    /// the worst non-convex dent.
    pub convexity_defect: Option<f64>,
}

impl ShapeEstimate {
    /// Columns: direction angle, mu_hat, stderr, n, kept replicas.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "angle,mu_hat,stderr,n,replicas")?;
        for d in &self.directions {
            writeln!(
                w,
                "{},{},{},{},{}",
                d.angle,
                d.mu_hat.map_or(String::new(), |v| v.to_string()),
                d.mu_stderr.map_or(String::new(), |v| v.to_string()),
                self.n,
                d.kept
            )?;
        }
        Ok(())
    }

    /// Ordered hull vertices, counterclockwise.
    pub fn write_hull_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "x,y")?;
        for p in &self.hull {
            writeln!(w, "{},{}", p[0], p[1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeConstantEstimate {
    pub direction: Vec<i64>,
    pub n_list: Vec<i64>,
    /// Summary of T(0, n z) / n per entry of `n_list`.
    pub per_n: Vec<RunningMoments>,
    pub kept: Vec<u64>,
    pub discarded: Vec<u64>,
    /// Mean T(0, n_max z) / n_max over kept replicas.
    pub mu_hat: Option<f64>,
    pub stderr: Option<f64>,
    /// Whether mean T / n is nonincreasing along `n_list`; diagnostic
    /// for the subadditive upper-bound trend, reported not asserted.
    pub trend_nonincreasing: bool,
}

fn replica_env(region: &BoxRegion, spec: &WeightSpec, seed: u64, replica: u64) -> Result<Environment> {
    Environment::new(region.clone(), spec.clone(), mix(seed, STREAM_REPLICA, replica))
}

/// Point estimate of the time constant along `z` from T(0, n z) / n at
/// the largest n, with the per-n trend as diagnostic.
pub fn estimate_time_constant(
    spec: &WeightSpec,
    z: &[i64],
    n_list: &[i64],
    replicas: u64,
    seed: u64,
) -> Result<TimeConstantEstimate> {
    spec.validate()?;
    if z.iter().all(|&c| c == 0) {
        return Err(FppError::Config("direction must be nonzero".into()));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] < 1 {
        return Err(FppError::Config("n_list must be positive and strictly increasing".into()));
    }
    if replicas == 0 {
        return Err(FppError::Config("need at least one replica".into()));
    }
    let d = z.len();
    let n_max = *n_list.last().unwrap();
    let reach = z.iter().map(|c| c.abs()).max().unwrap() * n_max;
    let margin = (reach / 4).max(4);
    let mut lower = vec![0i64; d];
    let mut upper = vec![0i64; d];
    for a in 0..d {
        lower[a] = (n_max * z[a]).min(0) - margin;
        upper[a] = (n_max * z[a]).max(0) + margin;
    }
    let region = BoxRegion::new(lower, upper)?;
    let origin = vec![0i64; d];

    // One row of Option<T/n> per replica; merged in replica order below
    // so the aggregate is independent of the worker count.
    let rows: Vec<Vec<Option<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = replica_env(&region, spec, seed, r)?;
            let map = PassageMap::compute(&env, &origin)?;
            n_list
                .iter()
                .map(|&n| {
                    let target: Vec<i64> = z.iter().map(|&c| c * n).collect();
                    let t = map.passage_time(&target)?;
                    let path = map.geodesic(&target)?;
                    Ok((!path.touches_boundary(&region)?).then_some(t / n as f64))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut per_n = vec![RunningMoments::new(); n_list.len()];
    let mut kept = vec![0u64; n_list.len()];
    let mut discarded = vec![0u64; n_list.len()];
    for row in &rows {
        for (i, obs) in row.iter().enumerate() {
            match obs {
                Some(v) => {
                    per_n[i].push(*v);
                    kept[i] += 1;
                }
                None => discarded[i] += 1,
            }
        }
    }
    let means: Vec<Option<f64>> = per_n.iter().map(|m| m.mean()).collect();
    let trend_nonincreasing = means
        .windows(2)
        .all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b <= a));
    let last = &per_n[n_list.len() - 1];
    Ok(TimeConstantEstimate {
        direction: z.to_vec(),
        n_list: n_list.to_vec(),
        mu_hat: last.mean(),
        stderr: last.stderr(),
        per_n,
        kept,
        discarded,
        trend_nonincreasing,
    })
}

/// Estimates the asymptotic shape on a planar direction grid.
///
/// `n_dirs` must be a positive multiple of 4 (at least 8) so the grid is
/// closed under the dihedral symmetries used for the defect statistic.
pub fn estimate_shape(
    spec: &WeightSpec,
    n_dirs: usize,
    n: i64,
    replicas: u64,
    seed: u64,
) -> Result<ShapeEstimate> {
    spec.validate()?;
    if n_dirs < 8 || n_dirs % 4 != 0 {
        return Err(FppError::Config(
            "direction grid must be a multiple of 4, at least 8".into(),
        ));
    }
    if n < 4 {
        return Err(FppError::Config("shape radius n must be at least 4".into()));
    }
    if replicas == 0 {
        return Err(FppError::Config("need at least one replica".into()));
    }
    let margin = (n / 4).max(4);
    let region = BoxRegion::cube(2, n + margin)?;
    let angles: Vec<f64> = (0..n_dirs)
        .map(|j| std::f64::consts::TAU * j as f64 / n_dirs as f64)
        .collect();
    let targets: Vec<Vec<i64>> = angles
        .iter()
        .map(|&a| {
            vec![
                (n as f64 * a.cos()).round() as i64,
                (n as f64 * a.sin()).round() as i64,
            ]
        })
        .collect();

    let rows: Vec<Vec<Option<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = replica_env(&region, spec, seed, r)?;
            let map = PassageMap::compute(&env, &[0, 0])?;
            targets
                .iter()
                .map(|tgt| {
                    let t = map.passage_time(tgt)?;
                    let path = map.geodesic(tgt)?;
                    Ok((!path.touches_boundary(&region)?).then_some(t))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut moments = vec![RunningMoments::new(); n_dirs];
    let mut kept = vec![0u64; n_dirs];
    let mut discarded = vec![0u64; n_dirs];
    for row in &rows {
        for (j, obs) in row.iter().enumerate() {
            match obs {
                Some(t) => {
                    moments[j].push(*t);
                    kept[j] += 1;
                }
                None => discarded[j] += 1,
            }
        }
    }

    let mut directions = Vec::with_capacity(n_dirs);
    let mut cloud = Vec::new();
    for j in 0..n_dirs {
        let norm = euclid_norm(&targets[j]);
        let mean = moments[j].mean();
        let se = moments[j].stderr();
        let radius = mean.map(|m| norm / m);
        // Delta method: Var(norm / T-bar) ~ (norm / mean^2)^2 Var(T-bar).
        let radius_stderr = match (mean, se) {
            (Some(m), Some(s)) => Some(norm * s / (m * m)),
            _ => None,
        };
        if let Some(m) = mean {
            cloud.push([targets[j][0] as f64 / m, targets[j][1] as f64 / m]);
        }
        directions.push(DirectionEstimate {
            angle: angles[j],
            target: targets[j].clone(),
            target_norm: norm,
            moments: moments[j],
            mu_hat: mean.map(|m| m / norm),
            mu_stderr: se.map(|s| s / norm),
            radius,
            radius_stderr,
            kept: kept[j],
            discarded: discarded[j],
        });
    }

    let hull = convex_hull(&cloud);
    let origin_inside = hull.len() >= 3 && polygon_strictly_contains(&hull, [0.0, 0.0]);
    let (symmetry_defect, pooled_stderr) = dihedral_defect(&directions, n_dirs);
    let convexity_defect = (hull.len() >= 3).then(|| {
        cloud
            .iter()
            .map(|&p| distance_to_polygon_boundary(&hull, p))
            .fold(0.0f64, f64::max)
    });

    Ok(ShapeEstimate {
        n,
        replicas,
        directions,
        cloud,
        hull,
        origin_inside,
        symmetry_defect,
        pooled_stderr,
        convexity_defect,
    })
}

/// Max relative radius mismatch within any dihedral orbit, plus the rms
/// over orbit pairs of the pooled standard error of the compared radii,
/// sqrt(se_i^2 + se_j^2) in relative units: the two-sample scale the
/// mismatch statistic is judged against. Orbit of grid index j:
/// quarter-turn rotations j + k n/4 and the axis reflection -j.
fn dihedral_defect(directions: &[DirectionEstimate], n_dirs: usize) -> (Option<f64>, Option<f64>) {
    let quarter = n_dirs / 4;
    let mut defect: Option<f64> = None;
    let mut pair_vars: Vec<f64> = Vec::new();
    for j in 0..n_dirs {
        let mut orbit: Vec<usize> = Vec::with_capacity(8);
        for k in 0..4 {
            for base in [j, n_dirs - j] {
                let idx = (base + k * quarter) % n_dirs;
                if !orbit.contains(&idx) {
                    orbit.push(idx);
                }
            }
        }
        // Each orbit is handled once, at its smallest member.
        if orbit.iter().min() != Some(&j) {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &idx in &orbit {
            if let Some(r) = directions[idx].radius {
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        if lo.is_finite() && hi.is_finite() {
            let dev = (hi - lo) / lo;
            defect = Some(defect.map_or(dev, |d: f64| d.max(dev)));
        }
        for (a, &ia) in orbit.iter().enumerate() {
            for &ib in orbit.iter().skip(a + 1) {
                let rel = |i: usize| {
                    let d = &directions[i];
                    Some(d.radius_stderr? / d.radius?)
                };
                if let (Some(sa), Some(sb)) = (rel(ia), rel(ib)) {
                    pair_vars.push(sa * sa + sb * sb);
                }
            }
        }
    }
    let pooled = (!pair_vars.is_empty())
        .then(|| (pair_vars.iter().sum::<f64>() / pair_vars.len() as f64).sqrt());
    (defect, pooled)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull, counterclockwise without the closing
/// point. Collinear points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_strictly_contains(hull: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = hull.len();
    (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) > 0.0)
}

fn segment_distance(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn distance_to_polygon_boundary(hull: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = hull.len();
    (0..n)
        .map(|i| segment_distance(hull[i], hull[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

/// Tangent-direction count of the hull after merging edge normals whose
/// angles differ by less than `angle_tol`.
#[derive(Debug, Clone, Serialize)]
pub struct SideReport {
    pub angle_tol: f64,
    pub count: usize,
    /// Sorted outward normal angles of the hull edges.
    pub normal_angles: Vec<f64>,
}

pub fn count_sides(shape: &ShapeEstimate, angle_tol: f64) -> Result<SideReport> {
    if !(angle_tol > 0.0 && angle_tol < std::f64::consts::FRAC_PI_4) {
        return Err(FppError::Config(
            "side-count tolerance must lie in (0, pi/4)".into(),
        ));
    }
    if shape.hull.len() < 3 {
        return Err(FppError::DegenerateDesign("hull has fewer than 3 vertices".into()));
    }
    let n = shape.hull.len();
    let mut normals: Vec<f64> = (0..n)
        .map(|i| {
            let a = shape.hull[i];
            let b = shape.hull[(i + 1) % n];
            // Outward normal of a counterclockwise edge.
            (a[0] - b[0]).atan2(b[1] - a[1])
        })
        .collect();
    normals.sort_by(f64::total_cmp);
    let mut count = 0;
    for i in 0..n {
        let gap = if i + 1 < n {
            normals[i + 1] - normals[i]
        } else {
            normals[0] + std::f64::consts::TAU - normals[n - 1]
        };
        if gap >= angle_tol {
            count += 1;
        }
    }
    Ok(SideReport { angle_tol, count: count.max(1), normal_angles: normals })
}

/// Functional along `u` scaled so the hull's support value is 1, with
/// its touch set and a uniqueness flag.
#[derive(Debug, Clone, Serialize)]
pub struct SupportReport {
    pub functional: LinearFunctional,
    pub touch_indices: Vec<usize>,
    /// Unique touch point: the support line is tangent, not a flat edge.
    pub is_tangent: bool,
}

pub fn supporting_functional(shape: &ShapeEstimate, u: &[f64]) -> Result<SupportReport> {
    if u.len() != 2 || (euclidf(u) - 1.0).abs() > 1e-9 {
        return Err(FppError::Config("direction must be a planar unit vector".into()));
    }
    if shape.hull.len() < 3 {
        return Err(FppError::DegenerateDesign("hull has fewer than 3 vertices".into()));
    }
    let support = shape
        .hull
        .iter()
        .map(|p| u[0] * p[0] + u[1] * p[1])
        .fold(f64::NEG_INFINITY, f64::max);
    if !(support > 0.0) {
        return Err(FppError::DegenerateDesign(
            "hull support value along the direction is not positive".into(),
        ));
    }
    let functional = LinearFunctional::new(vec![u[0] / support, u[1] / support])?;
    let touch_indices: Vec<usize> = shape
        .hull
        .iter()
        .enumerate()
        .filter(|(_, p)| u[0] * p[0] + u[1] * p[1] >= support * (1.0 - 1e-9))
        .map(|(i, _)| i)
        .collect();
    // Verifier: rho at most 1 on the hull, with equality somewhere.
    for p in &shape.hull {
        let v = functional.apply(&[p[0], p[1]]);
        if v > 1.0 + 1e-9 {
            return Err(FppError::Invariant(format!(
                "support line fails to contain the hull: rho = {v}"
            )));
        }
    }
    if touch_indices.is_empty() {
        return Err(FppError::Invariant("support line misses the hull".into()));
    }
    Ok(SupportReport { is_tangent: touch_indices.len() == 1, functional, touch_indices })
}

fn euclidf(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
