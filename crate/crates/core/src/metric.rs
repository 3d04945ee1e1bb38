//! The random metric: passage times, geodesics, and geodesic trees.
//!
//! The passage time from a fixed source is computed by Dijkstra's algorithm
//! with a lazy-deletion binary heap. Since every edge weight is positive,
//! the value settled at a vertex equals the minimum over paths of the
//! front-to-back floating point sum of edge weights, which is the quantity
//! the exhaustive oracle computes as well; the two agree bit for bit.
//!
//! Exact ties between arrival values are counted, never broken silently:
//! when two predecessors give the same settled value the lexicographically
//! smaller predecessor is kept, so trees are reproducible even in degenerate
//! environments (constant weights).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::BoxRegion;

/// A self-avoiding nearest-neighbour path together with its exact
/// front-to-back weight sum.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePath {
    vertices: Vec<Vec<i64>>,
    total: f64,
}

impl LatticePath {
    /// Validates self-avoidance and adjacency, and accumulates the weight
    /// sum front to back.
    pub fn from_vertices(env: &Environment, vertices: Vec<Vec<i64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(FppError::Config("a path needs at least one vertex".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(vertices.len());
        for v in &vertices {
            if !env.region().contains(v) {
                return Err(FppError::OutOfRegion(v.clone()));
            }
            if !seen.insert(v.clone()) {
                return Err(FppError::Config(format!("path revisits vertex {v:?}")));
            }
        }
        let mut total = 0.0f64;
        for pair in vertices.windows(2) {
            total += env.edge_weight(&pair[0], &pair[1])?;
        }
        Ok(Self { vertices, total })
    }

    /// The trivial path at a single vertex; weight zero.
    pub fn single(v: Vec<i64>) -> Self {
        Self { vertices: vec![v], total: 0.0 }
    }

    pub(crate) fn from_trusted(vertices: Vec<Vec<i64>>, total: f64) -> Self {
        Self { vertices, total }
    }

    pub fn vertices(&self) -> &[Vec<i64>] {
        &self.vertices
    }

    pub fn first(&self) -> &[i64] {
        &self.vertices[0]
    }

    pub fn last(&self) -> &[i64] {
        self.vertices.last().expect("path nonempty")
    }

    pub fn edge_len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        self.vertices.iter().any(|p| p == v)
    }

    /// Whether any vertex lies on the boundary of `region`.
    pub fn touches_boundary(&self, region: &BoxRegion) -> Result<bool> {
        for v in &self.vertices {
            if region.is_boundary(v)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    t: f64,
    v: u32,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t.total_cmp(&other.t).then(self.v.cmp(&other.v))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Passage times and geodesic predecessors from one source to every vertex
/// of a region.
#[derive(Clone, Debug)]
pub struct PassageMap {
    region: BoxRegion,
    source: Vec<i64>,
    dist: Vec<f64>,
    pred: Vec<u32>,
    tie_count: u64,
}

impl PassageMap {
    /// Passage times from `source` over the full environment region.
    pub fn compute(env: &Environment, source: &[i64]) -> Result<Self> {
        Self::compute_on(env, env.region().clone(), source)
    }

    /// Passage times restricted to paths inside `region`, a sub-box of the
    /// environment. Restricting the region can only increase passage times.
    pub fn compute_on(env: &Environment, region: BoxRegion, source: &[i64]) -> Result<Self> {
        if !env.region().contains_region(&region) {
            return Err(FppError::Config(
                "passage map region must lie inside the environment region".into(),
            ));
        }
        let src = region.vertex_index(source)?;
        let n = region.vertex_count();
        let d = region.dimension();
        if n > u32::MAX as usize {
            return Err(FppError::Config("region too large for u32 vertex indices".into()));
        }
        let same = &region == env.region();
        // Environment vertex index for every region vertex; identity when the
        // regions coincide.
        let env_map: Option<Vec<u32>> = if same {
            None
        } else {
            let mut m = Vec::with_capacity(n);
            for idx in 0..n {
                let coords = region.vertex_coords(idx);
                m.push(env.region().vertex_index(&coords)? as u32);
            }
            Some(m)
        };
        let env_at = |idx: usize| -> usize {
            match &env_map {
                None => idx,
                Some(m) => m[idx] as usize,
            }
        };

        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![u32::MAX; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        let mut tie_count = 0u64;

        dist[src] = 0.0;
        pred[src] = src as u32;
        heap.push(Reverse(HeapItem { t: 0.0, v: src as u32 }));

        while let Some(Reverse(HeapItem { t: _, v })) = heap.pop() {
            let u = v as usize;
            if settled[u] {
                continue;
            }
            settled[u] = true;
            let du = dist[u];
            let eu = env_at(u);
            for a in 0..d {
                let off = region.offset_at(u, a);
                // +axis neighbour
                if off + 1 < region.extents()[a] {
                    let w = env.weight_at(eu, a);
                    let nb = u + region.stride(a);
                    relax(&mut dist, &mut pred, &mut heap, &mut tie_count, &settled, u, nb, du, w);
                }
                // -axis neighbour; the edge's smaller endpoint is that neighbour
                if off > 0 {
                    let nb = u - region.stride(a);
                    let w = env.weight_at(env_at(nb), a);
                    relax(&mut dist, &mut pred, &mut heap, &mut tie_count, &settled, u, nb, du, w);
                }
            }
        }

        Ok(Self { region, source: source.to_vec(), dist, pred, tie_count })
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn source(&self) -> &[i64] {
        &self.source
    }

    /// Exact float ties between arrival values encountered during the run.
    pub fn tie_count(&self) -> u64 {
        self.tie_count
    }

    pub fn passage_time(&self, target: &[i64]) -> Result<f64> {
        Ok(self.dist[self.region.vertex_index(target)?])
    }

    #[inline]
    pub fn passage_time_by_index(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    #[inline]
    pub(crate) fn pred_by_index(&self, idx: usize) -> usize {
        self.pred[idx] as usize
    }

    /// The geodesic from the source to `target`, read off the predecessor
    /// chain. Its weight is the settled passage time, which by construction
    /// equals the front-to-back sum along the returned path.
    pub fn geodesic(&self, target: &[i64]) -> Result<LatticePath> {
        let tgt = self.region.vertex_index(target)?;
        let mut chain = vec![tgt];
        let mut v = tgt;
        while self.pred[v] as usize != v {
            v = self.pred[v] as usize;
            chain.push(v);
            if chain.len() > self.dist.len() {
                return Err(FppError::Invariant("predecessor chain cycles".into()));
            }
        }
        chain.reverse();
        let vertices = chain.into_iter().map(|i| self.region.vertex_coords(i)).collect();
        Ok(LatticePath::from_trusted(vertices, self.dist[tgt]))
    }

    /// Rows `x_0,...,x_{d-1},T,pred_x_0,...,pred_x_{d-1}` in canonical
    /// vertex order; the source lists itself as predecessor.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.region.dimension();
        let mut header = String::new();
        for a in 0..d {
            header.push_str(&format!("x{a},"));
        }
        header.push('T');
        for a in 0..d {
            header.push_str(&format!(",pred_x{a}"));
        }
        writeln!(w, "{header}")?;
        for idx in 0..self.dist.len() {
            let v = self.region.vertex_coords(idx);
            let p = self.region.vertex_coords(self.pred[idx] as usize);
            let mut row = String::new();
            for c in &v {
                row.push_str(&format!("{c},"));
            }
            row.push_str(&format!("{}", self.dist[idx]));
            for c in &p {
                row.push_str(&format!(",{c}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// The tree of geodesics from the source to every vertex of the region.
    pub fn geodesic_tree(&self) -> GeodesicTree {
        let n = self.dist.len();
        let root = self.region.vertex_index(&self.source).expect("source in region");
        let mut child_count = vec![0u32; n + 1];
        for v in 0..n {
            let p = self.pred[v] as usize;
            if p != v {
                child_count[p + 1] += 1;
            }
        }
        for i in 0..n {
            child_count[i + 1] += child_count[i];
        }
        let start = child_count;
        let mut fill = start.clone();
        let mut children = vec![0u32; n - 1];
        for v in 0..n {
            let p = self.pred[v] as usize;
            if p != v {
                children[fill[p] as usize] = v as u32;
                fill[p] += 1;
            }
        }
        GeodesicTree { region: self.region.clone(), root, parent: self.pred.clone(), start, children }
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn relax(
    dist: &mut [f64],
    pred: &mut [u32],
    heap: &mut BinaryHeap<Reverse<HeapItem>>,
    tie_count: &mut u64,
    settled: &[bool],
    u: usize,
    nb: usize,
    du: f64,
    w: f64,
) {
    let nd = du + w;
    if nd < dist[nb] {
        dist[nb] = nd;
        pred[nb] = u as u32;
        debug_assert!(!settled[nb]);
        heap.push(Reverse(HeapItem { t: nd, v: nb as u32 }));
    } else if nd == dist[nb] {
        *tie_count += 1;
        // Keep the lexicographically smallest predecessor so the tree does
        // not depend on heap order. Guard against degenerate zero-progress
        // edges to keep the predecessor graph acyclic.
        if du < dist[nb] && (u as u32) < pred[nb] {
            pred[nb] = u as u32;
        }
    }
}

/// Geodesic tree in compressed child-list form.
#[derive(Clone, Debug)]
pub struct GeodesicTree {
    region: BoxRegion,
    root: usize,
    parent: Vec<u32>,
    start: Vec<u32>,
    children: Vec<u32>,
}

impl GeodesicTree {
    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn root_index(&self) -> usize {
        self.root
    }

    pub fn root_coords(&self) -> Vec<i64> {
        self.region.vertex_coords(self.root)
    }

    pub fn vertex_count(&self) -> usize {
        self.parent.len()
    }

    /// Parent index; the root is its own parent.
    pub fn parent_index(&self, idx: usize) -> usize {
        self.parent[idx] as usize
    }

    pub fn children_indices(&self, idx: usize) -> &[u32] {
        &self.children[self.start[idx] as usize..self.start[idx + 1] as usize]
    }

    /// Vertex indices from the root to `idx`, inclusive.
    pub fn path_from_root(&self, idx: usize) -> Vec<usize> {
        let mut chain = vec![idx];
        let mut v = idx;
        while self.parent[v] as usize != v {
            v = self.parent[v] as usize;
            chain.push(v);
        }
        chain.reverse();
        chain
    }
}
