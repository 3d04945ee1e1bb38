//! Axis-aligned boxes of the hypercubic lattice Z^d and canonical indexing
//! of their vertices and nearest-neighbour edges.

use crate::error::{FppError, Result};

/// A finite box `[lower_0, upper_0] x ... x [lower_{d-1}, upper_{d-1}]` of Z^d.
///
/// Vertices are indexed lexicographically by coordinate tuple (last axis
/// fastest), so index order and lexicographic order on coordinates agree.
/// Edges are the nearest-neighbour pairs with both endpoints in the box,
/// indexed lexicographically by (smaller endpoint, axis).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxRegion {
    lower: Vec<i64>,
    upper: Vec<i64>,
    extents: Vec<usize>,
    strides: Vec<usize>,
    vertex_count: usize,
}

impl BoxRegion {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(FppError::Config(format!(
                "box bounds must be nonempty and of equal dimension, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        let d = lower.len();
        let mut extents = Vec::with_capacity(d);
        for a in 0..d {
            if lower[a] > upper[a] {
                return Err(FppError::Config(format!(
                    "axis {a}: lower bound {} exceeds upper bound {}",
                    lower[a], upper[a]
                )));
            }
            let ext = upper[a]
                .checked_sub(lower[a])
                .and_then(|w| w.checked_add(1))
                .ok_or_else(|| FppError::Config(format!("axis {a}: extent overflows")))?;
            extents.push(ext as usize);
        }
        let mut strides = vec![1usize; d];
        let mut count = extents[d - 1];
        for a in (0..d - 1).rev() {
            strides[a] = strides[a + 1]
                .checked_mul(extents[a + 1])
                .ok_or_else(|| FppError::Config("box vertex count overflows".into()))?;
            count = count
                .checked_mul(extents[a])
                .ok_or_else(|| FppError::Config("box vertex count overflows".into()))?;
        }
        Ok(Self { lower, upper, extents, strides, vertex_count: count })
    }

    /// The box `[center - radius, center + radius]^d`.
    pub fn centered(center: &[i64], radius: i64) -> Result<Self> {
        if radius < 0 {
            return Err(FppError::Config(format!("negative box radius {radius}")));
        }
        let lower = center.iter().map(|&c| c - radius).collect();
        let upper = center.iter().map(|&c| c + radius).collect();
        Self::new(lower, upper)
    }

    /// The origin-centered cube `[-radius, radius]^d`.
    pub fn cube(dimension: usize, radius: i64) -> Result<Self> {
        Self::centered(&vec![0; dimension], radius)
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Total nearest-neighbour edges with both endpoints inside the box.
    pub fn edge_count(&self) -> usize {
        let d = self.dimension();
        let mut total = 0usize;
        for a in 0..d {
            let mut along = self.extents[a] - 1;
            for b in 0..d {
                if b != a {
                    along *= self.extents[b];
                }
            }
            total += along;
        }
        total
    }

    pub fn contains(&self, v: &[i64]) -> bool {
        v.len() == self.dimension()
            && v.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&c, (&lo, &up))| lo <= c && c <= up)
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_region(&self, other: &BoxRegion) -> bool {
        other.dimension() == self.dimension()
            && self.contains(&other.lower)
            && self.contains(&other.upper)
    }

    pub fn vertex_index(&self, v: &[i64]) -> Result<usize> {
        if !self.contains(v) {
            return Err(FppError::OutOfRegion(v.to_vec()));
        }
        let mut idx = 0usize;
        for a in 0..self.dimension() {
            idx += (v[a] - self.lower[a]) as usize * self.strides[a];
        }
        Ok(idx)
    }

    pub fn vertex_coords(&self, idx: usize) -> Vec<i64> {
        debug_assert!(idx < self.vertex_count);
        let d = self.dimension();
        let mut v = Vec::with_capacity(d);
        for a in 0..d {
            v.push(self.lower[a] + ((idx / self.strides[a]) % self.extents[a]) as i64);
        }
        v
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Coordinate of vertex `idx` along `axis`, without materializing the tuple.
    #[inline]
    pub fn coord_at(&self, idx: usize, axis: usize) -> i64 {
        self.lower[axis] + ((idx / self.strides[axis]) % self.extents[axis]) as i64
    }

    /// Offset of the coordinate along `axis` from the lower bound.
    #[inline]
    pub fn offset_at(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.extents[axis]
    }

    pub fn is_boundary(&self, v: &[i64]) -> Result<bool> {
        if !self.contains(v) {
            return Err(FppError::OutOfRegion(v.to_vec()));
        }
        Ok((0..self.dimension()).any(|a| v[a] == self.lower[a] || v[a] == self.upper[a]))
    }

    #[inline]
    pub fn is_boundary_index(&self, idx: usize) -> bool {
        (0..self.dimension()).any(|a| {
            let off = self.offset_at(idx, a);
            off == 0 || off == self.extents[a] - 1
        })
    }

    /// True when all 2d nearest neighbours of `v` lie in the box.
    pub fn is_interior(&self, v: &[i64]) -> Result<bool> {
        Ok(!self.is_boundary(v)?)
    }

    /// Chebyshev distance from `v` to the complement of the box.
    pub fn inradius_from(&self, v: &[i64]) -> Result<i64> {
        if !self.contains(v) {
            return Err(FppError::OutOfRegion(v.to_vec()));
        }
        Ok((0..self.dimension())
            .map(|a| (v[a] - self.lower[a]).min(self.upper[a] - v[a]))
            .min()
            .expect("nonempty dimension"))
    }

    /// Checks that `a` and `b` are nearest neighbours and returns
    /// (smaller endpoint index, axis) of the connecting edge.
    pub fn adjacent(&self, a: &[i64], b: &[i64]) -> Result<(usize, usize)> {
        let ia = self.vertex_index(a)?;
        let ib = self.vertex_index(b)?;
        let mut axis = None;
        for ax in 0..self.dimension() {
            match (a[ax] - b[ax]).abs() {
                0 => {}
                1 if axis.is_none() => axis = Some(ax),
                _ => return Err(FppError::NotAdjacent(a.to_vec(), b.to_vec())),
            }
        }
        match axis {
            Some(ax) => Ok((ia.min(ib), ax)),
            None => Err(FppError::NotAdjacent(a.to_vec(), b.to_vec())),
        }
    }
}

/// Prefix-count table mapping (smaller endpoint, axis) to the canonical
/// edge index of the region. Offsets hold, for every vertex, the number of
/// edges whose smaller endpoint precedes it.
#[derive(Clone, Debug)]
pub(crate) struct EdgeTable {
    offsets: Vec<u64>,
}

impl EdgeTable {
    pub(crate) fn new(region: &BoxRegion) -> Self {
        let d = region.dimension();
        let n = region.vertex_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0u64;
        for idx in 0..n {
            offsets.push(acc);
            for a in 0..d {
                if region.offset_at(idx, a) + 1 < region.extents()[a] {
                    acc += 1;
                }
            }
        }
        offsets.push(acc);
        Self { offsets }
    }

    pub(crate) fn edge_count(&self) -> usize {
        *self.offsets.last().expect("offsets nonempty") as usize
    }

    /// Canonical index of the edge from vertex `idx` in the +axis direction.
    #[inline]
    pub(crate) fn edge_index(&self, region: &BoxRegion, idx: usize, axis: usize) -> usize {
        debug_assert!(region.offset_at(idx, axis) + 1 < region.extents()[axis]);
        let mut rank = 0usize;
        for a in 0..axis {
            if region.offset_at(idx, a) + 1 < region.extents()[a] {
                rank += 1;
            }
        }
        self.offsets[idx] as usize + rank
    }

    /// Inverse of `edge_index`: (smaller endpoint, axis).
    pub(crate) fn edge_endpoints(&self, region: &BoxRegion, edge: usize) -> (usize, usize) {
        let e = edge as u64;
        // Last vertex whose offset is <= e; partition_point gives the first > e.
        let idx = self.offsets.partition_point(|&o| o <= e) - 1;
        let mut rank = (e - self.offsets[idx]) as usize;
        for a in 0..region.dimension() {
            if region.offset_at(idx, a) + 1 < region.extents()[a] {
                if rank == 0 {
                    return (idx, a);
                }
                rank -= 1;
            }
        }
        unreachable!("edge index out of range");
    }
}

/// Euclidean norm of an integer vector.
pub fn euclid_norm(v: &[i64]) -> f64 {
    v.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt()
}

/// Euclidean distance between integer vectors of equal dimension.
pub fn euclid_dist(a: &[i64], b: &[i64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let t = (x - y) as f64;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// l^infinity distance between integer vectors.
pub fn chebyshev_dist(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).max().unwrap_or(0)
}

/// l^1 norm of an integer vector.
pub fn l1_norm(v: &[i64]) -> i64 {
    v.iter().map(|&c| c.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_indexing_round_trips_and_is_lexicographic() {
        let region = BoxRegion::new(vec![-1, 2], vec![1, 4]).unwrap();
        assert_eq!(region.vertex_count(), 9);
        let mut prev = None;
        for idx in 0..region.vertex_count() {
            let v = region.vertex_coords(idx);
            assert_eq!(region.vertex_index(&v).unwrap(), idx);
            if let Some(p) = prev {
                assert!(p < v, "index order must match lexicographic order");
            }
            prev = Some(v);
        }
    }

    #[test]
    fn edge_count_matches_grid_formula() {
        // 3x4 grid: 2*4 + 3*3 = 17 edges.
        let region = BoxRegion::new(vec![0, 0], vec![2, 3]).unwrap();
        assert_eq!(region.edge_count(), 17);
        let table = EdgeTable::new(&region);
        assert_eq!(table.edge_count(), 17);
    }

    #[test]
    fn edge_indices_are_a_bijection() {
        let region = BoxRegion::new(vec![0, 0, 0], vec![2, 1, 2]).unwrap();
        let table = EdgeTable::new(&region);
        let mut seen = vec![false; table.edge_count()];
        for idx in 0..region.vertex_count() {
            for a in 0..3 {
                if region.offset_at(idx, a) + 1 < region.extents()[a] {
                    let e = table.edge_index(&region, idx, a);
                    assert!(!seen[e], "edge index {e} hit twice");
                    seen[e] = true;
                    assert_eq!(table.edge_endpoints(&region, e), (idx, a));
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn boundary_and_inradius_agree() {
        let region = BoxRegion::cube(2, 3).unwrap();
        assert!(region.is_boundary(&[3, 0]).unwrap());
        assert!(!region.is_boundary(&[2, 0]).unwrap());
        assert_eq!(region.inradius_from(&[0, 0]).unwrap(), 3);
        assert_eq!(region.inradius_from(&[2, -1]).unwrap(), 1);
        assert_eq!(region.inradius_from(&[3, 0]).unwrap(), 0);
    }

    #[test]
    fn adjacency_rejects_diagonals_and_self() {
        let region = BoxRegion::cube(2, 2).unwrap();
        assert!(region.adjacent(&[0, 0], &[0, 1]).is_ok());
        assert!(matches!(region.adjacent(&[0, 0], &[1, 1]), Err(FppError::NotAdjacent(_, _))));
        assert!(matches!(region.adjacent(&[0, 0], &[0, 0]), Err(FppError::NotAdjacent(_, _))));
        assert!(matches!(region.adjacent(&[0, 0], &[0, 2]), Err(FppError::NotAdjacent(_, _))));
    }

    #[test]
    fn degenerate_bounds_are_rejected() {
        assert!(BoxRegion::new(vec![0], vec![-1]).is_err());
        assert!(BoxRegion::new(vec![], vec![]).is_err());
        assert!(BoxRegion::new(vec![0, 0], vec![1]).is_err());
    }
}
