//! Quenched weight environments over box regions, and their disk format.
//!
//! An environment assigns one weight to every nearest-neighbour edge of its
//! region. Weights are materialized eagerly from a counter-based hash of
//! (seed, edge index), so an environment is fully determined by
//! (region, weight spec, seed) and identical no matter in which order or on
//! how many threads it is consumed later.
//!
//! Disk format (little endian):
//!
//! ```text
//! magic   7 bytes  "FPPENV1"
//! cached  u8       1 when the weight array follows the header
//! d       u32
//! lower   d x i64
//! upper   d x i64
//! family  u8       weight family id
//! params  2 x f64
//! seed    u64
//! weights u64 count + count x f64, only when cached
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{FppError, Result};
use crate::lattice::{BoxRegion, EdgeTable};
use crate::rng::{mix, unit_open, STREAM_EDGE_WEIGHTS};
use crate::weights::WeightSpec;

const MAGIC: &[u8; 7] = b"FPPENV1";

#[derive(Clone, Debug)]
pub struct Environment {
    region: BoxRegion,
    spec: WeightSpec,
    seed: u64,
    weights: Vec<f64>,
    table: EdgeTable,
}

impl PartialEq for Environment {
    fn eq(&self, other: &Self) -> bool {
        // The edge table is derived from the region.
        self.region == other.region
            && self.spec == other.spec
            && self.seed == other.seed
            && self.weights == other.weights
    }
}

impl Environment {
    /// Draws the full weight array for `region` from `seed`.
    ///
    /// For continuous families the weights are checked to be pairwise
    /// distinct; an exact tie is an error rather than a silent source of
    /// non-unique geodesics.
    pub fn new(region: BoxRegion, spec: WeightSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let table = EdgeTable::new(&region);
        let count = table.edge_count();
        let mut weights = Vec::with_capacity(count);
        for e in 0..count {
            let u = unit_open(mix(seed, STREAM_EDGE_WEIGHTS, e as u64));
            let w = spec.quantile(u);
            if !(w > 0.0 && w.is_finite()) {
                return Err(FppError::Config(format!(
                    "weight spec produced non-positive or non-finite weight {w}"
                )));
            }
            weights.push(w);
        }
        if spec.is_continuous() {
            check_distinct(&weights)?;
        }
        Ok(Self { region, spec, seed, weights, table })
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.region.dimension()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    /// All weights in canonical edge order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Canonical index of the edge between two nearest neighbours.
    pub fn edge_index(&self, a: &[i64], b: &[i64]) -> Result<usize> {
        let (min_idx, axis) = self.region.adjacent(a, b)?;
        Ok(self.table.edge_index(&self.region, min_idx, axis))
    }

    /// Endpoints of a canonical edge index, smaller endpoint first.
    pub fn edge_endpoints(&self, edge: usize) -> Result<(Vec<i64>, Vec<i64>)> {
        if edge >= self.weights.len() {
            return Err(FppError::Config(format!(
                "edge index {edge} out of range 0..{}",
                self.weights.len()
            )));
        }
        let (idx, axis) = self.table.edge_endpoints(&self.region, edge);
        let lo = self.region.vertex_coords(idx);
        let mut hi = lo.clone();
        hi[axis] += 1;
        Ok((lo, hi))
    }

    pub fn edge_weight(&self, a: &[i64], b: &[i64]) -> Result<f64> {
        Ok(self.weights[self.edge_index(a, b)?])
    }

    /// Weight of the edge from vertex index `idx` in the +axis direction.
    #[inline]
    pub(crate) fn weight_at(&self, idx: usize, axis: usize) -> f64 {
        self.weights[self.table.edge_index(&self.region, idx, axis)]
    }

    /// Minimum weight over the 2d edges at `v`. Requires `v` interior so
    /// all 2d edges exist.
    pub fn min_incident_weight(&self, v: &[i64]) -> Result<f64> {
        if !self.region.is_interior(v)? {
            return Err(FppError::NotInterior(v.to_vec()));
        }
        let idx = self.region.vertex_index(v)?;
        let mut min = f64::INFINITY;
        for a in 0..self.dimension() {
            let below = idx - self.region.stride(a);
            min = min.min(self.weight_at(below, a));
            min = min.min(self.weight_at(idx, a));
        }
        Ok(min)
    }

    pub fn save(&self, path: &Path, cache_weights: bool) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w, cache_weights)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W, cache_weights: bool) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[cache_weights as u8])?;
        w.write_all(&(self.dimension() as u32).to_le_bytes())?;
        for &c in self.region.lower() {
            w.write_all(&c.to_le_bytes())?;
        }
        for &c in self.region.upper() {
            w.write_all(&c.to_le_bytes())?;
        }
        let (p0, p1) = self.spec.params();
        w.write_all(&[self.spec.family_id()])?;
        w.write_all(&p0.to_le_bytes())?;
        w.write_all(&p1.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        if cache_weights {
            w.write_all(&(self.weights.len() as u64).to_le_bytes())?;
            for &x in &self.weights {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 7];
        read_all(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(FppError::CorruptFile("bad magic, not an environment file".into()));
        }
        let cached = read_u8(r)?;
        if cached > 1 {
            return Err(FppError::CorruptFile(format!("invalid cache flag {cached}")));
        }
        let d = read_u32(r)? as usize;
        if d == 0 || d > 16 {
            return Err(FppError::CorruptFile(format!("implausible dimension {d}")));
        }
        let lower: Vec<i64> = (0..d).map(|_| read_i64(r)).collect::<Result<_>>()?;
        let upper: Vec<i64> = (0..d).map(|_| read_i64(r)).collect::<Result<_>>()?;
        let region = BoxRegion::new(lower, upper)
            .map_err(|e| FppError::CorruptFile(format!("bad region bounds: {e}")))?;
        let family = read_u8(r)?;
        let p0 = read_f64(r)?;
        let p1 = read_f64(r)?;
        let spec = WeightSpec::from_parts(family, p0, p1)?;
        let seed = read_u64(r)?;
        if cached == 0 {
            return Self::new(region, spec, seed);
        }
        let table = EdgeTable::new(&region);
        let count = read_u64(r)? as usize;
        if count != table.edge_count() {
            return Err(FppError::CorruptFile(format!(
                "weight count {count} does not match region edge count {}",
                table.edge_count()
            )));
        }
        let mut weights = Vec::with_capacity(count);
        for _ in 0..count {
            let x = read_f64(r)?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(FppError::CorruptFile(format!("non-positive cached weight {x}")));
            }
            weights.push(x);
        }
        if spec.is_continuous() {
            check_distinct(&weights)?;
        }
        Ok(Self { region, spec, seed, weights, table })
    }
}

/// Errors with the two colliding canonical edge indices on an exact tie.
fn check_distinct(weights: &[f64]) -> Result<()> {
    let mut order: Vec<u32> = (0..weights.len() as u32).collect();
    order.sort_unstable_by(|&i, &j| weights[i as usize].total_cmp(&weights[j as usize]));
    for pair in order.windows(2) {
        let (i, j) = (pair[0] as usize, pair[1] as usize);
        if weights[i] == weights[j] {
            return Err(FppError::ExactTie(i.min(j), i.max(j)));
        }
    }
    Ok(())
}

fn read_all<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            FppError::CorruptFile("truncated file".into())
        } else {
            FppError::Io(e)
        }
    })
}

macro_rules! reader {
    ($name:ident, $ty:ty) => {
        fn $name<R: Read>(r: &mut R) -> Result<$ty> {
            let mut buf = [0u8; std::mem::size_of::<$ty>()];
            read_all(r, &mut buf)?;
            Ok(<$ty>::from_le_bytes(buf))
        }
    };
}

reader!(read_u32, u32);
reader!(read_u64, u64);
reader!(read_i64, i64);
reader!(read_f64, f64);

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    read_all(r, &mut buf)?;
    Ok(buf[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_env(seed: u64) -> Environment {
        let region = BoxRegion::cube(2, 4).unwrap();
        Environment::new(region, WeightSpec::Exponential { rate: 1.0 }, seed).unwrap()
    }

    #[test]
    fn weights_are_deterministic_in_the_seed() {
        let a = small_env(3);
        let b = small_env(3);
        let c = small_env(4);
        assert_eq!(a.weights(), b.weights());
        assert_ne!(a.weights(), c.weights());
    }

    #[test]
    fn edge_weight_is_symmetric_in_the_endpoints() {
        let env = small_env(9);
        let w1 = env.edge_weight(&[0, 0], &[0, 1]).unwrap();
        let w2 = env.edge_weight(&[0, 1], &[0, 0]).unwrap();
        assert_eq!(w1.to_bits(), w2.to_bits());
    }

    #[test]
    fn edge_endpoints_invert_edge_index() {
        let env = small_env(1);
        for e in 0..env.edge_count() {
            let (a, b) = env.edge_endpoints(e).unwrap();
            assert_eq!(env.edge_index(&a, &b).unwrap(), e);
        }
    }

    #[test]
    fn min_incident_weight_matches_direct_minimum() {
        let env = small_env(17);
        let v = [1, -2];
        let mut expect = f64::INFINITY;
        for (da, db) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            expect = expect.min(env.edge_weight(&v, &[v[0] + da, v[1] + db]).unwrap());
        }
        assert_eq!(env.min_incident_weight(&v).unwrap(), expect);
        assert!(matches!(
            env.min_incident_weight(&[4, 0]),
            Err(FppError::NotInterior(_))
        ));
    }

    #[test]
    fn round_trip_with_cached_weights_is_identity() {
        let env = small_env(123);
        let mut buf = Vec::new();
        env.write_to(&mut buf, true).unwrap();
        let back = Environment::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn header_only_file_regenerates_identical_weights() {
        let env = small_env(123);
        let mut buf = Vec::new();
        env.write_to(&mut buf, false).unwrap();
        let back = Environment::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(env, back);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let env = small_env(5);
        let mut buf = Vec::new();
        env.write_to(&mut buf, true).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            Environment::read_from(&mut bad_magic.as_slice()),
            Err(FppError::CorruptFile(_))
        ));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            Environment::read_from(&mut &truncated[..]),
            Err(FppError::CorruptFile(_))
        ));
    }

    #[test]
    fn exact_ties_are_detected() {
        let mut weights: Vec<f64> = (1..=10).map(|i| i as f64 * 0.5).collect();
        assert!(check_distinct(&weights).is_ok());
        weights[7] = weights[2];
        match check_distinct(&weights) {
            Err(FppError::ExactTie(2, 7)) => {}
            other => panic!("expected tie between 2 and 7, got {other:?}"),
        }
    }

    #[test]
    fn constant_environments_skip_the_tie_check() {
        let region = BoxRegion::cube(2, 2).unwrap();
        let env = Environment::new(region, WeightSpec::Constant { value: 1.0 }, 0).unwrap();
        assert!(env.weights().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn ks_statistic_of_generated_weights_is_small() {
        let region = BoxRegion::cube(2, 30).unwrap();
        let spec = WeightSpec::ShiftedPower { alpha: 2.0, scale: 1.0 };
        let env = Environment::new(region, spec, 42).unwrap();
        let d = crate::weights::ks_statistic(env.weights(), &spec);
        // n = 7440 edges; 99.9% KS quantile ~ 1.95/sqrt(n) ~ 0.023.
        assert!(d < 0.023, "ks = {d}");
    }
}
