//! Exhaustive reference for passage times on tiny regions.
//!
//! Enumerates every self-avoiding path from a source by depth-first search,
//! accumulating weight sums front to back exactly like the Dijkstra
//! computation does. Minima over all self-avoiding paths therefore agree
//! with the heap-based values bit for bit, which is what the equivalence
//! tests assert. No pruning: the point of this module is to be obviously
//! correct, not fast.

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::BoxRegion;
use crate::metric::LatticePath;

/// Largest region (in vertices) the enumeration accepts.
pub const ENUMERATION_CAP: usize = 20;

/// Minimal passage times from one source to every vertex, by enumeration.
#[derive(Clone, Debug)]
pub struct OracleMap {
    region: BoxRegion,
    source: Vec<i64>,
    dist: Vec<f64>,
    paths: Vec<Vec<u32>>,
    tie_count: u64,
}

impl OracleMap {
    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn source(&self) -> &[i64] {
        &self.source
    }

    /// Number of pairs of distinct self-avoiding paths whose sums collided
    /// exactly at some vertex. Zero for continuous weights in practice.
    pub fn tie_count(&self) -> u64 {
        self.tie_count
    }

    pub fn passage_time(&self, target: &[i64]) -> Result<f64> {
        Ok(self.dist[self.region.vertex_index(target)?])
    }

    pub fn geodesic(&self, target: &[i64]) -> Result<LatticePath> {
        let idx = self.region.vertex_index(target)?;
        let vertices =
            self.paths[idx].iter().map(|&i| self.region.vertex_coords(i as usize)).collect();
        Ok(LatticePath::from_trusted(vertices, self.dist[idx]))
    }
}

struct Search<'a> {
    env: &'a Environment,
    dist: Vec<f64>,
    paths: Vec<Vec<u32>>,
    chain: Vec<u32>,
    ties: u64,
}

/// Enumerates all self-avoiding paths from `source` over the full
/// environment region, which may have at most [`ENUMERATION_CAP`] vertices.
pub fn enumerate_from(env: &Environment, source: &[i64]) -> Result<OracleMap> {
    let region = env.region();
    let n = region.vertex_count();
    if n > ENUMERATION_CAP {
        return Err(FppError::RegionTooLarge { vertices: n, cap: ENUMERATION_CAP });
    }
    let src = region.vertex_index(source)?;
    let mut search = Search {
        env,
        dist: vec![f64::INFINITY; n],
        paths: vec![Vec::new(); n],
        chain: vec![src as u32],
        ties: 0,
    };
    search.dist[src] = 0.0;
    search.paths[src] = search.chain.clone();
    dfs(&mut search, src, 0.0, 1u32 << src);
    Ok(OracleMap {
        region: region.clone(),
        source: source.to_vec(),
        dist: search.dist,
        paths: search.paths,
        tie_count: search.ties,
    })
}

fn dfs(st: &mut Search, v: usize, total: f64, mask: u32) {
    let region = st.env.region().clone();
    for a in 0..region.dimension() {
        let off = region.offset_at(v, a);
        if off + 1 < region.extents()[a] {
            let nb = v + region.stride(a);
            if mask & (1 << nb) == 0 {
                step(st, nb, total + st.env.weight_at(v, a), mask);
            }
        }
        if off > 0 {
            let nb = v - region.stride(a);
            if mask & (1 << nb) == 0 {
                step(st, nb, total + st.env.weight_at(nb, a), mask);
            }
        }
    }
}

fn step(st: &mut Search, nb: usize, nt: f64, mask: u32) {
    if nt < st.dist[nb] {
        st.dist[nb] = nt;
        let mut p = st.chain.clone();
        p.push(nb as u32);
        st.paths[nb] = p;
    } else if nt == st.dist[nb] {
        st.ties += 1;
    }
    st.chain.push(nb as u32);
    dfs(st, nb, nt, mask | (1 << nb));
    st.chain.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::PassageMap;
    use crate::weights::WeightSpec;

    #[test]
    fn single_edge_region_returns_the_edge_weight() {
        let region = BoxRegion::new(vec![0, 0], vec![0, 1]).unwrap();
        let env = Environment::new(region, WeightSpec::Exponential { rate: 1.0 }, 3).unwrap();
        let om = enumerate_from(&env, &[0, 0]).unwrap();
        let w = env.edge_weight(&[0, 0], &[0, 1]).unwrap();
        assert_eq!(om.passage_time(&[0, 1]).unwrap().to_bits(), w.to_bits());
        assert_eq!(om.tie_count(), 0);
    }

    #[test]
    fn enumeration_matches_heap_search_on_small_boxes() {
        for seed in 0..5 {
            let region = BoxRegion::new(vec![0, 0], vec![3, 3]).unwrap();
            let env =
                Environment::new(region.clone(), WeightSpec::Uniform { lo: 0.2, hi: 3.0 }, seed)
                    .unwrap();
            let om = enumerate_from(&env, &[0, 0]).unwrap();
            let pm = PassageMap::compute(&env, &[0, 0]).unwrap();
            assert_eq!(om.tie_count(), 0);
            for idx in 0..region.vertex_count() {
                let v = region.vertex_coords(idx);
                let a = om.passage_time(&v).unwrap();
                let b = pm.passage_time(&v).unwrap();
                assert_eq!(a.to_bits(), b.to_bits(), "distance mismatch at {v:?}, seed {seed}");
                assert_eq!(
                    om.geodesic(&v).unwrap().vertices(),
                    pm.geodesic(&v).unwrap().vertices(),
                    "geodesic mismatch at {v:?}, seed {seed}"
                );
            }
        }
    }

    #[test]
    fn oracle_paths_revalidate_front_to_back() {
        let region = BoxRegion::new(vec![0, 0], vec![3, 3]).unwrap();
        let env =
            Environment::new(region.clone(), WeightSpec::Exponential { rate: 2.0 }, 8).unwrap();
        let om = enumerate_from(&env, &[1, 1]).unwrap();
        for idx in 0..region.vertex_count() {
            let v = region.vertex_coords(idx);
            let g = om.geodesic(&v).unwrap();
            let revalidated = LatticePath::from_vertices(&env, g.vertices().to_vec()).unwrap();
            assert_eq!(revalidated.total_weight().to_bits(), g.total_weight().to_bits());
        }
    }

    #[test]
    fn constant_weights_tie_and_keep_l1_distances() {
        let region = BoxRegion::new(vec![0, 0], vec![1, 1]).unwrap();
        let env = Environment::new(region, WeightSpec::Constant { value: 0.5 }, 0).unwrap();
        let om = enumerate_from(&env, &[0, 0]).unwrap();
        assert_eq!(om.passage_time(&[1, 1]).unwrap(), 1.0);
        assert!(om.tie_count() >= 1);
    }

    #[test]
    fn oversized_regions_are_refused() {
        let region = BoxRegion::new(vec![0, 0], vec![4, 4]).unwrap();
        let env = Environment::new(region, WeightSpec::Exponential { rate: 1.0 }, 1).unwrap();
        assert!(matches!(
            enumerate_from(&env, &[0, 0]),
            Err(FppError::RegionTooLarge { vertices: 25, cap: ENUMERATION_CAP })
        ));
    }
}
