//! Structure of geodesic families: branch counts of geodesic trees,
//! coalescence of geodesics, and packings of pairwise disjoint geodesics.

use serde::Serialize;

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{euclid_dist, BoxRegion};
use crate::metric::{GeodesicTree, LatticePath, PassageMap};

/// Distinct branches of a geodesic tree surviving from the inner radius to
/// the outer radius, both in the l^infinity norm around the root.
///
/// The trunk is the root together with every vertex whose tree path stays
/// at norm < `inner` throughout; a branch is identified by the first vertex
/// at which a path leaves the trunk. The count is the number of distinct
/// branches that reach norm `outer`. Enlarging `inner` refines branches, so
/// the count is nondecreasing in `inner`; enlarging `outer` prunes them, so
/// it is nonincreasing in `outer`.
#[derive(Clone, Debug, Serialize)]
pub struct EndCountReport {
    pub inner_radius: i64,
    pub outer_radius: i64,
    pub count: usize,
    /// Euclidean unit vectors from the root toward each branch's exit
    /// vertex, ordered by the exit vertex's canonical index.
    pub exit_directions: Vec<Vec<f64>>,
}

pub fn tree_end_count(tree: &GeodesicTree, inner: i64, outer: i64) -> Result<EndCountReport> {
    if inner < 0 || inner >= outer {
        return Err(FppError::Config(format!(
            "radii must satisfy 0 <= inner < outer, got {inner}, {outer}"
        )));
    }
    let region = tree.region();
    let root_coords = tree.root_coords();
    if region.inradius_from(&root_coords)? < outer {
        return Err(FppError::Config(format!(
            "outer radius {outer} exceeds the box inradius at the root"
        )));
    }
    let n = tree.vertex_count();
    let d = region.dimension();
    let norm = |idx: usize| -> i64 {
        (0..d)
            .map(|a| (region.coord_at(idx, a) - root_coords[a]).abs())
            .max()
            .expect("nonempty dimension")
    };

    const NO_EXIT: u32 = u32::MAX;
    let mut exit = vec![NO_EXIT; n];
    let root = tree.root_index();
    // Depth-first sweep; a vertex is in the trunk exactly when its exit is
    // still unset after processing.
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &c in tree.children_indices(v) {
            let c = c as usize;
            if exit[v] != NO_EXIT {
                exit[c] = exit[v];
            } else if norm(c) >= inner {
                exit[c] = c as u32;
            }
            stack.push(c);
        }
    }

    let mut exits: Vec<u32> = (0..n)
        .filter(|&v| norm(v) == outer)
        .map(|v| {
            debug_assert!(exit[v] != NO_EXIT, "sphere vertex with no exit");
            exit[v]
        })
        .collect();
    exits.sort_unstable();
    exits.dedup();

    let exit_directions = exits
        .iter()
        .map(|&e| {
            let coords = region.vertex_coords(e as usize);
            let len = euclid_dist(&coords, &root_coords);
            (0..d).map(|a| (coords[a] - root_coords[a]) as f64 / len).collect()
        })
        .collect();

    Ok(EndCountReport { inner_radius: inner, outer_radius: outer, count: exits.len(), exit_directions })
}

/// Earliest vertex after which two paths to a common endpoint coincide;
/// `None` when the paths share no suffix (distinct endpoints).
pub fn merge_of_paths(a: &LatticePath, b: &LatticePath) -> Option<Vec<i64>> {
    let va = a.vertices();
    let vb = b.vertices();
    let mut k = 0;
    while k < va.len().min(vb.len()) && va[va.len() - 1 - k] == vb[vb.len() - 1 - k] {
        k += 1;
    }
    (k > 0).then(|| va[va.len() - k].clone())
}

/// Merge point of the geodesics from `x` and from `y` to a common `target`:
/// the first vertex from which the two geodesics run together. Since both
/// end at `target`, a merge point always exists; it equals `target` itself
/// when the geodesics only share the endpoint.
pub fn coalescence_merge(
    env: &Environment,
    x: &[i64],
    y: &[i64],
    target: &[i64],
) -> Result<Option<Vec<i64>>> {
    let ga = PassageMap::compute(env, x)?.geodesic(target)?;
    let gb = PassageMap::compute(env, y)?.geodesic(target)?;
    Ok(merge_of_paths(&ga, &gb))
}

/// Euclidean unit vectors from the path's first vertex toward every later
/// vertex, in path order. A direction sequence that settles down indicates
/// the geodesic has an asymptotic direction.
pub fn direction_sequence(path: &LatticePath) -> Result<Vec<Vec<f64>>> {
    if path.vertices().len() < 2 {
        return Err(FppError::DegenerateDesign(
            "direction sequence needs a path with at least two vertices".into(),
        ));
    }
    let origin = path.first().to_vec();
    Ok(path
        .vertices()[1..]
        .iter()
        .map(|v| {
            let len = euclid_dist(v, &origin);
            (0..v.len()).map(|a| (v[a] - origin[a]) as f64 / len).collect()
        })
        .collect())
}

/// A family of pairwise disjoint geodesics, one or more per source, from
/// the sources to the boundary of the origin-centered box of the given
/// radius. Two geodesics from the same source may share that source and
/// nothing else; geodesics from different sources may share nothing.
#[derive(Clone, Debug)]
pub struct DisjointFamily {
    pub count: usize,
    pub paths: Vec<LatticePath>,
    /// True when the count was certified maximal by exhaustive search over
    /// candidate geodesics; false when it is a greedy lower bound.
    pub exact: bool,
}

/// Packs pairwise disjoint tree geodesics from the sources to the boundary
/// of `[-radius, radius]^d`.
///
/// Candidates are the unique tree geodesics from each source to each
/// boundary vertex. On regions of at most 20 vertices the maximum over
/// candidate subsets is computed exactly; otherwise a shortest-first greedy
/// packing gives a certified lower bound.
pub fn disjoint_geodesic_count(
    env: &Environment,
    sources: &[Vec<i64>],
    radius: i64,
) -> Result<DisjointFamily> {
    let d = env.dimension();
    let boxr = BoxRegion::cube(d, radius)?;
    if !env.region().contains_region(&boxr) {
        return Err(FppError::Config(format!(
            "radius-{radius} box does not fit inside the environment region"
        )));
    }
    if sources.is_empty() {
        return Err(FppError::Config("need at least one source".into()));
    }
    for (i, s) in sources.iter().enumerate() {
        if !boxr.contains(s) {
            return Err(FppError::OutOfRegion(s.clone()));
        }
        if sources[..i].contains(s) {
            return Err(FppError::Config(format!("duplicate source {s:?}")));
        }
    }

    // Candidate geodesics as region-index chains, one per (source, boundary
    // vertex), in deterministic order.
    let n = boxr.vertex_count();
    let mut candidates: Vec<(usize, Vec<u32>)> = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        let pm = PassageMap::compute_on(env, boxr.clone(), s)?;
        for b in 0..n {
            if !boxr.is_boundary_index(b) {
                continue;
            }
            let mut chain = vec![b as u32];
            let mut v = b;
            while pm.pred_by_index(v) != v {
                v = pm.pred_by_index(v);
                chain.push(v as u32);
            }
            chain.reverse();
            candidates.push((i, chain));
        }
    }
    let src_idx: Vec<u32> =
        sources.iter().map(|s| boxr.vertex_index(s).map(|i| i as u32)).collect::<Result<_>>()?;

    let (chosen, exact) = if n <= 20 {
        (exact_packing(&candidates, &src_idx), true)
    } else {
        (greedy_packing(&candidates, &src_idx, n), false)
    };

    let paths = chosen
        .iter()
        .map(|&c| {
            let (i, chain) = &candidates[c];
            let verts: Vec<Vec<i64>> =
                chain.iter().map(|&v| boxr.vertex_coords(v as usize)).collect();
            // Re-accumulate: the chain is a tree geodesic inside the box.
            LatticePath::from_vertices(env, verts).map(|p| {
                debug_assert_eq!(p.first(), sources[*i].as_slice());
                p
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DisjointFamily { count: paths.len(), paths, exact })
}

/// Two candidates conflict when they share a vertex, unless that vertex is
/// the common source of both.
fn conflicts(a: &(usize, Vec<u32>), b: &(usize, Vec<u32>), src_idx: &[u32]) -> bool {
    let shared_ok = if a.0 == b.0 { Some(src_idx[a.0]) } else { None };
    // Paths are short; a quadratic scan beats hashing at this size.
    for &v in &a.1 {
        if Some(v) == shared_ok {
            continue;
        }
        if b.1.contains(&v) {
            return true;
        }
    }
    false
}

fn exact_packing(candidates: &[(usize, Vec<u32>)], src_idx: &[u32]) -> Vec<usize> {
    // Boundary of a <= 20 vertex box times a handful of sources stays well
    // under 64 candidates, so subsets fit in a u64.
    assert!(candidates.len() <= 64, "candidate set too large for exact packing");
    let m = candidates.len();
    let mut adj = vec![0u64; m];
    for i in 0..m {
        for j in i + 1..m {
            if conflicts(&candidates[i], &candidates[j], src_idx) {
                adj[i] |= 1 << j;
                adj[j] |= 1 << i;
            }
        }
    }
    let mut best = 0u32;
    let mut best_set = 0u64;
    branch(if m == 64 { u64::MAX } else { (1u64 << m) - 1 }, 0, 0, &adj, &mut best, &mut best_set);
    (0..m).filter(|&i| best_set & (1 << i) != 0).collect()
}

fn branch(avail: u64, cur: u32, cur_set: u64, adj: &[u64], best: &mut u32, best_set: &mut u64) {
    if cur + avail.count_ones() <= *best {
        return;
    }
    if avail == 0 {
        if cur > *best {
            *best = cur;
            *best_set = cur_set;
        }
        return;
    }
    let v = avail.trailing_zeros() as usize;
    branch(avail & !adj[v] & !(1u64 << v), cur + 1, cur_set | (1u64 << v), adj, best, best_set);
    branch(avail & !(1u64 << v), cur, cur_set, adj, best, best_set);
}

fn greedy_packing(candidates: &[(usize, Vec<u32>)], src_idx: &[u32], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&c| (candidates[c].1.len(), candidates[c].0, candidates[c].1[0]));
    let mut occupied: Vec<i32> = vec![-1; n];
    let mut chosen = Vec::new();
    'outer: for &c in &order {
        let (i, chain) = &candidates[c];
        for &v in chain {
            let o = occupied[v as usize];
            if o >= 0 && !(v == src_idx[*i] && o == *i as i32) {
                continue 'outer;
            }
        }
        for &v in chain {
            occupied[v as usize] = *i as i32;
        }
        chosen.push(c);
    }
    chosen
}
