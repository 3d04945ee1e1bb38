//! Finite-horizon Busemann approximants, linear-functional fitting, and the
//! half-plane/cone machinery used to place coexistence candidates.
//!
//! The approximant B_k(x, y) = T(x, v_k) - T(y, v_k) is evaluated along a
//! target ray v_1, v_2, ... heading for the box boundary. The largest-k
//! value stands in for the limit; an oscillation diagnostic over the tail
//! is reported instead of a convergence certificate.

use std::io::Write;

use serde::Serialize;

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{euclid_dist, euclid_norm};
use crate::metric::PassageMap;

fn fdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fnorm(a: &[f64]) -> f64 {
    fdot(a, a).sqrt()
}

fn displacement(a: &[i64], b: &[i64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) as f64).collect()
}

/// Linear map x -> <gradient, x>, measured in time per lattice unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFunctional {
    gradient: Vec<f64>,
}

impl LinearFunctional {
    pub fn new(gradient: Vec<f64>) -> Result<Self> {
        if gradient.is_empty() {
            return Err(FppError::Config("functional gradient is empty".into()));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(FppError::Config("functional gradient must be finite".into()));
        }
        Ok(Self { gradient })
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn dimension(&self) -> usize {
        self.gradient.len()
    }

    pub fn apply(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.gradient.len());
        fdot(&self.gradient, x)
    }

    pub fn apply_lattice(&self, x: &[i64]) -> f64 {
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        self.apply(&xf)
    }

    pub fn norm(&self) -> f64 {
        fnorm(&self.gradient)
    }

    /// Gradient direction on the circle. Planar functionals only.
    pub fn angle(&self) -> Option<f64> {
        (self.gradient.len() == 2 && self.norm() > 0.0)
            .then(|| self.gradient[1].atan2(self.gradient[0]))
    }
}

/// How the target ray of a Busemann series is chosen.
#[derive(Debug, Clone)]
pub enum RaySpec {
    /// Explicit targets, strictly increasing in Euclidean norm.
    Explicit(Vec<Vec<i64>>),
    /// Follow the finite geodesic from `origin` to the boundary vertex
    /// whose direction is angularly nearest `direction`, keeping the
    /// subsequence of strictly increasing Euclidean norm.
    TowardDirection { origin: Vec<i64>, direction: Vec<f64> },
}

/// B_k(x, y) sampled along a fixed target ray.
#[derive(Debug, Clone, Serialize)]
pub struct BusemannSeries {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub targets: Vec<Vec<i64>>,
    pub values: Vec<f64>,
    /// T(x, y), for the |B_k| <= T(x, y) bound.
    pub passage_xy: f64,
}

impl BusemannSeries {
    /// Builds the series from two precomputed maps sharing a region.
    /// Targets must lie in the region with strictly increasing norm.
    pub fn from_maps(
        map_x: &PassageMap,
        map_y: &PassageMap,
        targets: Vec<Vec<i64>>,
    ) -> Result<Self> {
        if map_x.region() != map_y.region() {
            return Err(FppError::Config("passage maps cover different regions".into()));
        }
        if targets.is_empty() {
            return Err(FppError::Config("ray has no targets".into()));
        }
        let region = map_x.region();
        let mut prev = f64::NEG_INFINITY;
        for v in &targets {
            if !region.contains(v) {
                return Err(FppError::OutOfRegion(v.clone()));
            }
            let r = euclid_norm(v);
            if r <= prev {
                return Err(FppError::Config(
                    "ray targets must have strictly increasing norm".into(),
                ));
            }
            prev = r;
        }
        let values = targets
            .iter()
            .map(|v| {
                let i = region.vertex_index(v)?;
                Ok(map_x.passage_time_by_index(i) - map_y.passage_time_by_index(i))
            })
            .collect::<Result<Vec<f64>>>()?;
        let passage_xy = map_x.passage_time(map_y.source())?;
        Ok(Self {
            x: map_x.source().to_vec(),
            y: map_y.source().to_vec(),
            targets,
            values,
            passage_xy,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest-k approximant, the stand-in for the limit.
    pub fn b_last(&self) -> f64 {
        *self.values.last().expect("series is never empty")
    }

    /// Max minus min of B_k over the last quartile of indices.
    pub fn oscillation(&self) -> f64 {
        let tail = self.len().div_ceil(4);
        let window = &self.values[self.len() - tail..];
        let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }

    /// Columns: k (1-based), target coordinates, B_k.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.x.len();
        let coords: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        writeln!(w, "k,{},B", coords.join(","))?;
        for (k, (v, b)) in self.targets.iter().zip(&self.values).enumerate() {
            let cs: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{},{}", k + 1, cs.join(","), b)?;
        }
        Ok(())
    }
}

/// Resolves a ray spec to concrete targets inside `env`'s region.
pub fn resolve_ray(env: &Environment, ray: &RaySpec) -> Result<Vec<Vec<i64>>> {
    match ray {
        RaySpec::Explicit(targets) => Ok(targets.clone()),
        RaySpec::TowardDirection { origin, direction } => {
            let region = env.region();
            if !region.contains(origin) {
                return Err(FppError::OutOfRegion(origin.clone()));
            }
            if direction.len() != region.dimension() || fnorm(direction) == 0.0 {
                return Err(FppError::Config("ray direction must be a nonzero vector".into()));
            }
            // Boundary vertex maximizing the cosine with the requested
            // direction; ties broken by vertex index for reproducibility.
            let mut best: Option<(f64, usize)> = None;
            for i in 0..region.vertex_count() {
                if !region.is_boundary_index(i) {
                    continue;
                }
                let v = region.vertex_coords(i);
                let diff = displacement(&v, origin);
                let r = fnorm(&diff);
                if r == 0.0 {
                    continue;
                }
                let cos = fdot(&diff, direction) / r;
                if best.is_none_or(|(c, _)| cos > c) {
                    best = Some((cos, i));
                }
            }
            let (_, target_idx) = best.ok_or_else(|| {
                FppError::Config("region has no boundary vertex besides the ray origin".into())
            })?;
            let map = PassageMap::compute(env, origin)?;
            let path = map.geodesic(&region.vertex_coords(target_idx))?;
            let mut targets = Vec::new();
            let mut prev = f64::NEG_INFINITY;
            for v in &path.vertices()[1..] {
                let r = euclid_norm(v);
                if r > prev {
                    targets.push(v.clone());
                    prev = r;
                }
            }
            if targets.is_empty() {
                return Err(FppError::Config("ray collapsed to its origin".into()));
            }
            Ok(targets)
        }
    }
}

/// Computes B_k(x, y) along the resolved ray. Convenience wrapper that
/// runs both passage maps; batch callers should reuse maps via
/// [`BusemannSeries::from_maps`].
pub fn busemann_series(
    env: &Environment,
    x: &[i64],
    y: &[i64],
    ray: &RaySpec,
) -> Result<BusemannSeries> {
    let targets = resolve_ray(env, ray)?;
    let map_x = PassageMap::compute(env, x)?;
    let map_y = PassageMap::compute(env, y)?;
    BusemannSeries::from_maps(&map_x, &map_y, targets)
}

/// Least-squares gradient for B_last(x, y) ~ rho(y - x), with residual
/// and conditioning diagnostics from the normal equations.
#[derive(Debug, Clone, Serialize)]
pub struct FunctionalFit {
    pub functional: LinearFunctional,
    pub residual_rms: f64,
    pub residual_max: f64,
    /// Largest over smallest eigenvalue of the normal matrix.
    pub condition: f64,
    /// Smallest eigenvalue of the normal matrix; bounds the gradient's
    /// sensitivity to value perturbations.
    pub sigma_min: f64,
    pub samples: usize,
}

/// Fits rho by least squares over series sharing an anchor x.
pub fn fit_linear_functional(series: &[BusemannSeries]) -> Result<FunctionalFit> {
    let first = series
        .first()
        .ok_or_else(|| FppError::Config("no series to fit".into()))?;
    let anchor = &first.x;
    let d = anchor.len();
    if series.len() < d {
        return Err(FppError::DegenerateDesign(format!(
            "need at least {d} probes, got {}",
            series.len()
        )));
    }
    let mut probes = Vec::with_capacity(series.len());
    for s in series {
        if &s.x != anchor {
            return Err(FppError::Config("series disagree on the anchor point".into()));
        }
        probes.push((displacement(&s.y, anchor), s.b_last()));
    }

    let mut normal = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (u, b) in &probes {
        for i in 0..d {
            for j in 0..d {
                normal[i][j] += u[i] * u[j];
            }
            rhs[i] += b * u[i];
        }
    }

    let gradient = solve_symmetric(&normal, &rhs)?;
    let eigen = symmetric_eigenvalues(&normal);
    let lambda_min = eigen.iter().cloned().fold(f64::INFINITY, f64::min);
    let lambda_max = eigen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lambda_min <= 0.0 {
        return Err(FppError::DegenerateDesign(
            "normal matrix is not positive definite".into(),
        ));
    }

    let functional = LinearFunctional::new(gradient)?;
    let mut sq = 0.0;
    let mut max = 0.0f64;
    for (u, b) in &probes {
        let r = b - functional.apply(u);
        sq += r * r;
        max = max.max(r.abs());
    }
    Ok(FunctionalFit {
        functional,
        residual_rms: (sq / probes.len() as f64).sqrt(),
        residual_max: max,
        condition: lambda_max / lambda_min,
        sigma_min: lambda_min,
        samples: probes.len(),
    })
}

/// Gaussian elimination with partial pivoting on a copy of `a`.
fn solve_symmetric(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let d = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot_row][col].abs() <= 1e-12 * scale {
            return Err(FppError::DegenerateDesign(
                "displacement design is rank deficient".into(),
            ));
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..d {
            let f = m[row][col] / m[col][col];
            for k in col..d {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; d];
    for col in (0..d).rev() {
        let mut acc = rhs[col];
        for k in col + 1..d {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Ok(x)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let d = a.len();
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let scale = m
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    if scale == 0.0 {
        return vec![0.0; d];
    }
    for _ in 0..100 {
        let mut p = 0;
        let mut q = 1;
        let mut off = 0.0;
        for i in 0..d {
            for j in i + 1..d {
                if m[i][j].abs() > off {
                    off = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if d < 2 || off <= 1e-15 * scale {
            break;
        }
        let tau = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
        let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = t * c;
        for k in 0..d {
            let mkp = m[k][p];
            let mkq = m[k][q];
            m[k][p] = c * mkp - s * mkq;
            m[k][q] = s * mkp + c * mkq;
        }
        for k in 0..d {
            let mpk = m[p][k];
            let mqk = m[q][k];
            m[p][k] = c * mpk - s * mqk;
            m[q][k] = s * mpk + c * mqk;
        }
    }
    (0..d).map(|i| m[i][i]).collect()
}

/// Sup over probes at distance >= `m` from the anchor of the scaled
/// linearity defect |B_last(z, y) - rho(y - z)| / |y - z|.
pub fn linearity_deviation(
    series: &[BusemannSeries],
    rho: &LinearFunctional,
    m: f64,
) -> Result<f64> {
    let first = series
        .first()
        .ok_or_else(|| FppError::Config("no series to evaluate".into()))?;
    let anchor = &first.x;
    let mut sup: Option<f64> = None;
    for s in series {
        if &s.x != anchor {
            return Err(FppError::Config("series disagree on the anchor point".into()));
        }
        let u = displacement(&s.y, anchor);
        let r = fnorm(&u);
        if r < m {
            continue;
        }
        let defect = (s.b_last() - rho.apply(&u)).abs() / r;
        sup = Some(sup.map_or(defect, |cur: f64| cur.max(defect)));
    }
    sup.ok_or_else(|| FppError::Config(format!("no probe at distance >= {m} from the anchor")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKind {
    HalfPlane,
    Cone,
}

/// Half-plane H(z, delta) or cone C(z, delta) anchored at z:
/// membership is rho(y - z) <= -delta |y - z| resp. |rho(y - z)| <= delta |y - z|.
#[derive(Debug, Clone, Serialize)]
pub struct RegionPredicate {
    pub kind: RegionKind,
    pub functional: LinearFunctional,
    pub anchor: Vec<i64>,
    pub delta: f64,
}

impl RegionPredicate {
    pub fn new(
        kind: RegionKind,
        functional: LinearFunctional,
        anchor: Vec<i64>,
        delta: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(FppError::Config("region slope must be finite and nonnegative".into()));
        }
        if functional.dimension() != anchor.len() {
            return Err(FppError::Config("functional and anchor dimensions differ".into()));
        }
        Ok(Self { kind, functional, anchor, delta })
    }

    pub fn half_plane(functional: LinearFunctional, anchor: Vec<i64>, delta: f64) -> Result<Self> {
        Self::new(RegionKind::HalfPlane, functional, anchor, delta)
    }

    pub fn cone(functional: LinearFunctional, anchor: Vec<i64>, delta: f64) -> Result<Self> {
        Self::new(RegionKind::Cone, functional, anchor, delta)
    }

    pub fn contains(&self, y: &[i64]) -> bool {
        let u = displacement(y, &self.anchor);
        let r = fnorm(&u);
        let v = self.functional.apply(&u);
        match self.kind {
            RegionKind::HalfPlane => v <= -self.delta * r,
            RegionKind::Cone => v.abs() <= self.delta * r,
        }
    }
}

/// One raw inequality evaluation behind a placement.
#[derive(Debug, Clone, Serialize)]
pub struct PlacementCheck {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub separation_required: f64,
    pub half_plane_lhs: f64,
    pub half_plane_rhs: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlacementReport {
    pub points: Vec<Vec<i64>>,
    pub gradients: Vec<Vec<f64>>,
    pub deltas: Vec<f64>,
    pub radii: Vec<f64>,
    pub checks: Vec<PlacementCheck>,
    pub verified: bool,
}

/// Evaluates every placement inequality from scratch: pairwise distances
/// against max(M_i, M_j) and x_j in H(x_i, delta_i) for all i != j.
/// Deliberately shares no code with the construction.
pub fn placement_report(
    points: &[Vec<i64>],
    functionals: &[LinearFunctional],
    deltas: &[f64],
    radii: &[f64],
) -> PlacementReport {
    let mut checks = Vec::new();
    let mut verified = true;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let dist = euclid_dist(&points[i], &points[j]);
            let needed = radii[i].max(radii[j]);
            let u = displacement(&points[j], &points[i]);
            let lhs = functionals[i].apply(&u);
            let rhs = -deltas[i] * dist;
            let ok = dist >= needed && lhs <= rhs;
            verified &= ok;
            checks.push(PlacementCheck {
                i,
                j,
                distance: dist,
                separation_required: needed,
                half_plane_lhs: lhs,
                half_plane_rhs: rhs,
                ok,
            });
        }
    }
    PlacementReport {
        points: points.to_vec(),
        gradients: functionals.iter().map(|f| f.gradient().to_vec()).collect(),
        deltas: deltas.to_vec(),
        radii: radii.to_vec(),
        checks,
        verified,
    }
}

pub fn verify_placement(
    points: &[Vec<i64>],
    functionals: &[LinearFunctional],
    deltas: &[f64],
    radii: &[f64],
) -> bool {
    placement_report(points, functionals, deltas, radii).verified
}

fn validate_placement_inputs(
    functionals: &[LinearFunctional],
    deltas: &[f64],
    radii: &[f64],
) -> Result<()> {
    if functionals.len() != deltas.len() || functionals.len() != radii.len() {
        return Err(FppError::Config(
            "functionals, deltas, and radii must have equal length".into(),
        ));
    }
    for f in functionals {
        if f.dimension() != 2 {
            return Err(FppError::Config("placement requires planar functionals".into()));
        }
        if f.norm() == 0.0 {
            return Err(FppError::InfeasibleGeometry("zero functional".into()));
        }
    }
    if deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(FppError::Config("deltas must be positive and finite".into()));
    }
    if radii.iter().any(|&m| !(m >= 0.0 && m.is_finite())) {
        return Err(FppError::Config("radii must be nonnegative and finite".into()));
    }
    Ok(())
}

/// Angle between the gradient directions of two planar functionals, in [0, pi].
fn gradient_angle(a: &LinearFunctional, b: &LinearFunctional) -> f64 {
    let cos = fdot(a.gradient(), b.gradient()) / (a.norm() * b.norm());
    cos.clamp(-1.0, 1.0).acos()
}

/// Places k points on a circle, each in the gradient direction of its own
/// functional, so that every other point lies in its half-plane region.
///
/// Feasibility: with x_i = R g_i/|g_i|, the pair condition reduces to
/// |g_i| sin(theta_ij / 2) > delta_i where theta_ij is the gradient angle
/// gap, so that exact inequality (both ways) is the precheck. The radius
/// doubles until integer rounding stops mattering and the independent
/// verifier accepts.
pub fn place_coexistence_points(
    functionals: &[LinearFunctional],
    deltas: &[f64],
    radii: &[f64],
) -> Result<Vec<Vec<i64>>> {
    validate_placement_inputs(functionals, deltas, radii)?;
    let k = functionals.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    if k == 1 {
        return Ok(vec![vec![0, 0]]);
    }
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let theta = gradient_angle(&functionals[i], &functionals[j]);
            let margin = functionals[i].norm() * (theta / 2.0).sin();
            if !(margin > deltas[i]) {
                return Err(FppError::InfeasibleGeometry(format!(
                    "functionals {i} and {j} are separated by {theta:.4} rad, too \
                     narrow for slope {}",
                    deltas[i]
                )));
            }
        }
    }

    // Smallest circle meeting every pairwise separation, plus slack for
    // integer rounding; the half-plane margins are scale invariant.
    let mut radius: f64 = 4.0;
    for i in 0..k {
        for j in i + 1..k {
            let theta = gradient_angle(&functionals[i], &functionals[j]);
            let need = radii[i].max(radii[j]) / (2.0 * (theta / 2.0).sin());
            radius = radius.max(need + 2.0);
        }
    }
    for _ in 0..60 {
        let points: Vec<Vec<i64>> = functionals
            .iter()
            .map(|f| {
                let n = f.norm();
                f.gradient().iter().map(|&g| (radius * g / n).round() as i64).collect()
            })
            .collect();
        if verify_placement(&points, functionals, deltas, radii) {
            return Ok(points);
        }
        radius *= 2.0;
    }
    Err(FppError::InfeasibleGeometry(
        "circle placement failed to verify at any radius".into(),
    ))
}

/// Arc on the unit circle, as [center - width, center + width].
#[derive(Clone, Copy)]
struct Arc {
    center: f64,
    width: f64,
}

/// Intersects `arc` (shifted by multiples of 2 pi) with [lo, hi].
fn intersect_arc(lo: f64, hi: f64, arc: Arc) -> Option<(f64, f64)> {
    let tau = std::f64::consts::TAU;
    for shift in [-1.0, 0.0, 1.0] {
        let a = arc.center - arc.width + shift * tau;
        let b = arc.center + arc.width + shift * tau;
        let l = lo.max(a);
        let h = hi.min(b);
        if l <= h {
            return Some((l, h));
        }
    }
    None
}

/// Inductive variant: x_1 = 0 and x_{t+1} = x_t + v_{t+1}, with each step
/// direction chosen so the new point is downhill of every earlier
/// functional and uphill of its own, and each step long enough to
/// dominate everything placed before. Requires strictly increasing
/// gradient angles.
pub fn place_coexistence_points_sequence(
    functionals: &[LinearFunctional],
    deltas: &[f64],
    radii: &[f64],
) -> Result<Vec<Vec<i64>>> {
    validate_placement_inputs(functionals, deltas, radii)?;
    let k = functionals.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let angles: Vec<f64> = functionals.iter().map(|f| f.angle().unwrap()).collect();
    if angles.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FppError::InfeasibleGeometry(
            "sequence placement requires strictly increasing gradient angles".into(),
        ));
    }
    let sines: Vec<f64> = functionals
        .iter()
        .zip(deltas)
        .map(|(f, &d)| d / f.norm())
        .collect();
    if sines.iter().any(|&s| s >= 1.0) {
        return Err(FppError::InfeasibleGeometry(
            "slope at least the gradient norm leaves no feasible direction".into(),
        ));
    }

    // Each feasibility arc shrinks by `tighten` so that finite step
    // lengths (where x_t - x_j is not exactly the step direction) retain
    // slack; on verification failure the arcs tighten less and the steps
    // stretch more.
    let base_scale = 8.0 * radii.iter().cloned().fold(1.0f64, f64::max);
    for attempt in 0..8 {
        let tighten = 0.05 / (1 << attempt) as f64;
        let scale = base_scale * (1 << attempt) as f64;
        if let Some(points) = try_sequence(&angles, &sines, tighten, scale) {
            if verify_placement(&points, functionals, deltas, radii) {
                return Ok(points);
            }
        }
    }
    Err(FppError::InfeasibleGeometry(
        "inductive placement found no verifiable step sequence".into(),
    ))
}

fn try_sequence(angles: &[f64], sines: &[f64], tighten: f64, scale: f64) -> Option<Vec<Vec<i64>>> {
    let k = angles.len();
    let mut points = vec![vec![0i64, 0]];
    let mut span = 1.0f64;
    for t in 1..k {
        // Downhill of every earlier functional, uphill of the new one.
        let own = Arc {
            center: angles[t],
            width: (sines[t] + tighten).min(1.0).acos(),
        };
        let (mut lo, mut hi) = (own.center - own.width, own.center + own.width);
        for j in 0..t {
            let arc = Arc {
                center: angles[j] + std::f64::consts::PI,
                width: (sines[j] + tighten).min(1.0).acos(),
            };
            let (l, h) = intersect_arc(lo, hi, arc)?;
            lo = l;
            hi = h;
        }
        let dir = (lo + hi) / 2.0;
        let len = scale * span;
        let prev = points.last().unwrap();
        points.push(vec![
            prev[0] + (len * dir.cos()).round() as i64,
            prev[1] + (len * dir.sin()).round() as i64,
        ]);
        span += len;
    }
    Some(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::BoxRegion;
    use crate::weights::WeightSpec;

    fn exp_env(radius: i64, seed: u64) -> Environment {
        let region = BoxRegion::cube(2, radius).unwrap();
        Environment::new(region, WeightSpec::Exponential { rate: 1.0 }, seed).unwrap()
    }

    fn functional(g: &[f64]) -> LinearFunctional {
        LinearFunctional::new(g.to_vec()).unwrap()
    }

    #[test]
    fn series_vanishes_when_base_points_coincide() {
        let env = exp_env(4, 11);
        let ray = RaySpec::TowardDirection { origin: vec![0, 0], direction: vec![1.0, 0.0] };
        let s = busemann_series(&env, &[1, 1], &[1, 1], &ray).unwrap();
        assert!(!s.is_empty());
        assert!(s.values.iter().all(|&b| b == 0.0));
        assert_eq!(s.passage_xy, 0.0);
        assert_eq!(s.oscillation(), 0.0);
    }

    #[test]
    fn antisymmetry_is_bit_exact_for_every_index() {
        let env = exp_env(5, 23);
        let ray = RaySpec::TowardDirection { origin: vec![0, 0], direction: vec![0.6, 0.8] };
        let fwd = busemann_series(&env, &[1, 0], &[-1, 1], &ray).unwrap();
        let bwd = busemann_series(&env, &[-1, 1], &[1, 0], &ray).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        for (a, b) in fwd.values.iter().zip(&bwd.values) {
            assert_eq!(a.to_bits(), (-b).to_bits());
        }
    }

    #[test]
    fn series_is_bounded_by_the_pair_passage_time() {
        for seed in [3, 5, 9] {
            let env = exp_env(5, seed);
            let ray =
                RaySpec::TowardDirection { origin: vec![0, 0], direction: vec![-1.0, 0.3] };
            let s = busemann_series(&env, &[2, -1], &[-1, 2], &ray).unwrap();
            for &b in &s.values {
                assert!(b.abs() <= s.passage_xy + 1e-9);
            }
        }
    }

    #[test]
    fn tree_ancestor_pair_recovers_the_passage_time() {
        // x interior on the geodesic from y toward the boundary; at the
        // ray index hitting x the approximant equals T(y, x) exactly,
        // and stays within rounding drift beyond it.
        let env = exp_env(6, 41);
        let y = vec![0, 0];
        let map_y = PassageMap::compute(&env, &y).unwrap();
        let path = map_y.geodesic(&[6, 6]).unwrap();
        let vertices = path.vertices();
        assert!(vertices.len() > 3);
        let x = vertices[vertices.len() / 2].clone();
        let mut targets = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        for v in &vertices[1..] {
            let r = euclid_norm(v);
            if r > prev {
                targets.push(v.clone());
                prev = r;
            }
        }
        let map_x = PassageMap::compute(&env, &x).unwrap();
        let s = BusemannSeries::from_maps(&map_y, &map_x, targets.clone()).unwrap();
        let t_yx = map_y.passage_time(&x).unwrap();
        let at_x = targets.iter().position(|v| v == &x).expect("x is on the ray");
        assert_eq!(s.values[at_x].to_bits(), t_yx.to_bits());
        for &b in &s.values[at_x..] {
            assert!((b - t_yx).abs() <= 1e-9);
        }
    }

    #[test]
    fn explicit_rays_must_grow_in_norm_and_stay_inside() {
        let env = exp_env(3, 7);
        let bad_order = RaySpec::Explicit(vec![vec![2, 0], vec![1, 0]]);
        assert!(matches!(
            busemann_series(&env, &[0, 0], &[1, 1], &bad_order),
            Err(FppError::Config(_))
        ));
        let outside = RaySpec::Explicit(vec![vec![9, 0]]);
        assert!(matches!(
            busemann_series(&env, &[0, 0], &[1, 1], &outside),
            Err(FppError::OutOfRegion(_))
        ));
    }

    #[test]
    fn exact_linear_data_is_recovered_to_nine_digits() {
        let g0 = [0.75, -0.4];
        let mut series = Vec::new();
        for (yx, yy) in [(5i64, 0i64), (0, 5), (3, 4), (-4, 2), (2, -3), (-1, -5)] {
            let y = vec![yx, yy];
            let b = g0[0] * yx as f64 + g0[1] * yy as f64;
            series.push(BusemannSeries {
                x: vec![0, 0],
                y,
                targets: vec![vec![100, 0]],
                values: vec![b],
                passage_xy: 1.0,
            });
        }
        let fit = fit_linear_functional(&series).unwrap();
        assert!((fit.functional.gradient()[0] - g0[0]).abs() < 1e-9);
        assert!((fit.functional.gradient()[1] - g0[1]).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-9);
        assert!(fit.residual_max < 1e-9);
        assert!(fit.condition >= 1.0);
    }

    #[test]
    fn constant_perturbation_moves_the_fit_by_at_most_the_normal_equation_bound() {
        let g0 = [1.1, 0.3];
        let probes = [(6i64, 1i64), (1, 7), (-5, 2), (4, -6), (-3, -4), (7, 3)];
        let eps = 1e-3;
        let build = |shift: f64| -> Vec<BusemannSeries> {
            probes
                .iter()
                .map(|&(yx, yy)| BusemannSeries {
                    x: vec![0, 0],
                    y: vec![yx, yy],
                    targets: vec![vec![50, 0]],
                    values: vec![g0[0] * yx as f64 + g0[1] * yy as f64 + shift],
                    passage_xy: 1.0,
                })
                .collect()
        };
        let clean = fit_linear_functional(&build(0.0)).unwrap();
        let bumped = fit_linear_functional(&build(eps)).unwrap();
        let dg: Vec<f64> = clean
            .functional
            .gradient()
            .iter()
            .zip(bumped.functional.gradient())
            .map(|(a, b)| b - a)
            .collect();
        // |dg| <= |A^{-1}| |sum eps u_i| <= eps sum|u_i| / lambda_min.
        let total_norm: f64 =
            probes.iter().map(|&(a, b)| euclid_norm(&[a, b])).sum();
        let bound = eps * total_norm / clean.sigma_min;
        assert!(fnorm(&dg) <= bound * (1.0 + 1e-9));
        assert!(fnorm(&dg) > 0.0);
    }

    #[test]
    fn collinear_probes_are_rejected_as_rank_deficient() {
        let series: Vec<BusemannSeries> = (1..=4)
            .map(|i| BusemannSeries {
                x: vec![0, 0],
                y: vec![i, 2 * i],
                targets: vec![vec![40, 0]],
                values: vec![i as f64],
                passage_xy: 1.0,
            })
            .collect();
        assert!(matches!(
            fit_linear_functional(&series),
            Err(FppError::DegenerateDesign(_))
        ));
    }

    #[test]
    fn deviation_is_zero_on_linear_data_and_monotone_in_the_cutoff() {
        let rho = functional(&[0.5, 0.25]);
        let mut series = Vec::new();
        for (yx, yy) in [(4i64, 0i64), (0, 6), (8, 8), (-10, 2), (12, -5)] {
            series.push(BusemannSeries {
                x: vec![0, 0],
                y: vec![yx, yy],
                targets: vec![vec![30, 0]],
                values: vec![rho.apply_lattice(&[yx, yy])],
                passage_xy: 1.0,
            });
        }
        assert_eq!(linearity_deviation(&series, &rho, 2.0).unwrap(), 0.0);

        let noisy = functional(&[0.5, 0.26]);
        let mut prev = f64::INFINITY;
        for m in [2.0, 5.0, 9.0, 12.0] {
            let dev = linearity_deviation(&series, &noisy, m).unwrap();
            assert!(dev <= prev);
            prev = dev;
        }
        assert!(matches!(
            linearity_deviation(&series, &rho, 100.0),
            Err(FppError::Config(_))
        ));
    }

    #[test]
    fn region_examples_evaluate_as_stated() {
        let rho = functional(&[1.0, 0.0]);
        let h = RegionPredicate::half_plane(rho.clone(), vec![0, 0], 0.5).unwrap();
        let c = RegionPredicate::cone(rho, vec![0, 0], 0.5).unwrap();
        assert!(h.contains(&[-2, 0]));
        assert!(!h.contains(&[2, 0]));
        assert!(h.contains(&[0, 0]) && c.contains(&[0, 0]));
        assert!(c.contains(&[0, 3]));
        assert!(!c.contains(&[3, 0]));
    }

    #[test]
    fn half_plane_and_narrower_cone_meet_only_at_the_anchor() {
        let rho = functional(&[0.8, 0.6]);
        let h = RegionPredicate::half_plane(rho.clone(), vec![1, -2], 0.6).unwrap();
        let c = RegionPredicate::cone(rho, vec![1, -2], 0.4).unwrap();
        for x in -8..=8 {
            for y in -8..=8 {
                let p = [x, y];
                if h.contains(&p) && c.contains(&p) {
                    assert_eq!(p, [1, -2]);
                }
            }
        }
    }

    #[test]
    fn opposite_pair_lands_on_the_axis_and_the_stated_points_verify() {
        let fs = [functional(&[1.0, 0.0]), functional(&[-1.0, 0.0])];
        let pts = place_coexistence_points(&fs, &[0.5, 0.5], &[10.0, 10.0]).unwrap();
        assert!(verify_placement(&pts, &fs, &[0.5, 0.5], &[10.0, 10.0]));
        // Both points sit on the x axis, separated by at least M.
        assert_eq!(pts[0][1], 0);
        assert_eq!(pts[1][1], 0);
        assert!(pts[0][0] - pts[1][0] >= 10);
        let diff = displacement(&pts[1], &pts[0]);
        let dist = fnorm(&diff);
        assert!(fs[0].apply(&diff) <= -0.5 * dist);
        // The textbook pair (+-10, 0) passes the same raw inequalities.
        let stated = [vec![10, 0], vec![-10, 0]];
        assert!(verify_placement(&stated, &fs, &[0.5, 0.5], &[10.0, 10.0]));
    }

    #[test]
    fn cardinal_quadruple_passes_all_twelve_cross_checks() {
        let fs = [
            functional(&[1.0, 0.0]),
            functional(&[0.0, 1.0]),
            functional(&[-1.0, 0.0]),
            functional(&[0.0, -1.0]),
        ];
        let deltas = [0.5; 4];
        let radii = [10.0; 4];
        let pts = place_coexistence_points(&fs, &deltas, &radii).unwrap();
        let report = placement_report(&pts, &fs, &deltas, &radii);
        assert_eq!(report.checks.len(), 12);
        assert!(report.checks.iter().all(|c| c.ok));
        assert!(report.verified);
        // The circle of radius 2M through the four axis points also works.
        let circle = [vec![20, 0], vec![0, 20], vec![-20, 0], vec![0, -20]];
        assert!(verify_placement(&circle, &fs, &deltas, &radii));
    }

    #[test]
    fn single_point_and_infeasible_geometry_edge_cases() {
        let one = place_coexistence_points(&[functional(&[1.0, 0.0])], &[0.9], &[5.0]).unwrap();
        assert_eq!(one, vec![vec![0, 0]]);
        // Two functionals 30 degrees apart with slope 0.5: sin(15 deg) < 0.5.
        let fs = [functional(&[1.0, 0.0]), functional(&[0.866, 0.5])];
        assert!(matches!(
            place_coexistence_points(&fs, &[0.5, 0.5], &[5.0, 5.0]),
            Err(FppError::InfeasibleGeometry(_))
        ));
    }

    #[test]
    fn sequence_placement_verifies_and_rejects_unordered_angles() {
        let fs = [
            functional(&[1.0, 0.0]),
            functional(&[0.0, 1.0]),
            functional(&[-1.0, 0.0]),
        ];
        let deltas = [0.3; 3];
        let radii = [8.0; 3];
        let pts = place_coexistence_points_sequence(&fs, &deltas, &radii).unwrap();
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0], vec![0, 0]);
        assert!(verify_placement(&pts, &fs, &deltas, &radii));

        let unordered = [fs[1].clone(), fs[0].clone(), fs[2].clone()];
        assert!(matches!(
            place_coexistence_points_sequence(&unordered, &deltas, &radii),
            Err(FppError::InfeasibleGeometry(_))
        ));
    }

    #[test]
    fn series_csv_has_one_row_per_target() {
        let env = exp_env(3, 2);
        let ray = RaySpec::Explicit(vec![vec![1, 0], vec![2, 0], vec![3, 0]]);
        let s = busemann_series(&env, &[0, 1], &[0, -1], &ray).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x0,x1,B");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,1,0,"));
    }
}
