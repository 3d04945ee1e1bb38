//! Multi-type competition: first-passage Voronoi cells for equal-strength
//! types, and an event-driven growth simulation for general rates.
//!
//! With all rates 1 and traversal clocks read off the environment's
//! exponential edge weights, the growth simulation is the same computation
//! as the Voronoi construction (a multi-source heap search over the same
//! float sums), so their owner maps agree vertex for vertex. That pathwise
//! coupling is asserted in tests rather than assumed.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use crate::env::Environment;
use crate::error::{FppError, Result};
use crate::lattice::{BoxRegion, EdgeTable};
use crate::metric::{LatticePath, PassageMap};
use crate::rng::{mix, unit_open, STREAM_CLOCK_BASE};
use crate::weights::WeightSpec;

/// Ownership of every vertex of a region by one of k competing sources.
#[derive(Clone, Debug)]
pub struct Partition {
    region: BoxRegion,
    sources: Vec<Vec<i64>>,
    owner: Vec<u16>,
    cell_sizes: Vec<usize>,
    boundary_touch: Vec<bool>,
    tie_count: u64,
}

impl Partition {
    /// Validates that each source owns itself and that every cell is
    /// lattice-connected, then derives sizes and boundary flags.
    fn from_owner(
        region: BoxRegion,
        sources: Vec<Vec<i64>>,
        owner: Vec<u16>,
        tie_count: u64,
    ) -> Result<Self> {
        let k = sources.len();
        let n = region.vertex_count();
        debug_assert_eq!(owner.len(), n);
        let mut cell_sizes = vec![0usize; k];
        let mut boundary_touch = vec![false; k];
        for (idx, &o) in owner.iter().enumerate() {
            let o = o as usize;
            if o >= k {
                return Err(FppError::Invariant(format!("owner {o} out of range")));
            }
            cell_sizes[o] += 1;
            if !boundary_touch[o] && region.is_boundary_index(idx) {
                boundary_touch[o] = true;
            }
        }
        // Connectivity: the fill from each source along same-owner edges
        // must reach the whole cell.
        let d = region.dimension();
        let mut seen = vec![false; n];
        for (i, s) in sources.iter().enumerate() {
            let src = region.vertex_index(s)?;
            if owner[src] as usize != i {
                return Err(FppError::Invariant(format!(
                    "source {s:?} is not in its own cell"
                )));
            }
            let mut reached = 0usize;
            let mut stack = vec![src];
            seen[src] = true;
            while let Some(v) = stack.pop() {
                reached += 1;
                for a in 0..d {
                    let off = region.offset_at(v, a);
                    if off + 1 < region.extents()[a] {
                        let nb = v + region.stride(a);
                        if !seen[nb] && owner[nb] == owner[v] {
                            seen[nb] = true;
                            stack.push(nb);
                        }
                    }
                    if off > 0 {
                        let nb = v - region.stride(a);
                        if !seen[nb] && owner[nb] == owner[v] {
                            seen[nb] = true;
                            stack.push(nb);
                        }
                    }
                }
            }
            if reached != cell_sizes[i] {
                return Err(FppError::Invariant(format!(
                    "cell {i} is disconnected: reached {reached} of {} vertices",
                    cell_sizes[i]
                )));
            }
        }
        Ok(Self { region, sources, owner, cell_sizes, boundary_touch, tie_count })
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn sources(&self) -> &[Vec<i64>] {
        &self.sources
    }

    pub fn k(&self) -> usize {
        self.sources.len()
    }

    pub fn owner_of(&self, v: &[i64]) -> Result<usize> {
        Ok(self.owner[self.region.vertex_index(v)?] as usize)
    }

    #[inline]
    pub fn owner_by_index(&self, idx: usize) -> usize {
        self.owner[idx] as usize
    }

    pub fn cell_size(&self, i: usize) -> usize {
        self.cell_sizes[i]
    }

    pub fn touches_boundary(&self, i: usize) -> bool {
        self.boundary_touch[i]
    }

    /// Vertices whose minimal passage time was achieved by two sources at
    /// exactly equal float value; such vertices go to the lower index.
    pub fn tie_count(&self) -> u64 {
        self.tie_count
    }

    /// Rows `x_0,...,x_{d-1},owner` in canonical vertex order.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.region.dimension();
        let mut header = String::new();
        for a in 0..d {
            header.push_str(&format!("x{a},"));
        }
        header.push_str("owner");
        writeln!(w, "{header}")?;
        for idx in 0..self.owner.len() {
            let v = self.region.vertex_coords(idx);
            let mut row = String::new();
            for c in &v {
                row.push_str(&format!("{c},"));
            }
            row.push_str(&format!("{}", self.owner[idx]));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

fn validate_sources(region: &BoxRegion, sources: &[Vec<i64>]) -> Result<()> {
    if sources.is_empty() {
        return Err(FppError::Config("need at least one source".into()));
    }
    if sources.len() > u16::MAX as usize {
        return Err(FppError::Config("too many sources".into()));
    }
    for (i, s) in sources.iter().enumerate() {
        if !region.contains(s) {
            return Err(FppError::OutOfRegion(s.clone()));
        }
        if sources[..i].contains(s) {
            return Err(FppError::Config(format!("duplicate source {s:?}")));
        }
    }
    Ok(())
}

/// Assigns every vertex to the source of minimal passage time.
pub fn fpp_voronoi(env: &Environment, sources: &[Vec<i64>]) -> Result<Partition> {
    let region = env.region().clone();
    validate_sources(&region, sources)?;
    let maps: Vec<PassageMap> =
        sources.iter().map(|s| PassageMap::compute(env, s)).collect::<Result<_>>()?;
    let n = region.vertex_count();
    let mut owner = vec![0u16; n];
    let mut tie_count = 0u64;
    for idx in 0..n {
        let mut best = maps[0].passage_time_by_index(idx);
        let mut arg = 0u16;
        let mut tied = false;
        for (j, pm) in maps.iter().enumerate().skip(1) {
            let t = pm.passage_time_by_index(idx);
            if t < best {
                best = t;
                arg = j as u16;
                tied = false;
            } else if t == best {
                tied = true;
            }
        }
        if tied {
            tie_count += 1;
        }
        owner[idx] = arg;
    }
    Partition::from_owner(region, sources.to_vec(), owner, tie_count)
}

/// One colouring event of the growth process.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthEvent {
    pub time: f64,
    pub vertex: Vec<i64>,
    pub owner: usize,
}

/// Time-ordered record of a growth run. The k seeding events sit at time
/// exactly zero; all later events have strictly increasing positive times
/// and each is adjacent to previously coloured territory of its own type.
#[derive(Clone, Debug)]
pub struct GrowthTrace {
    rates: Vec<f64>,
    events: Vec<GrowthEvent>,
}

impl GrowthTrace {
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn events(&self) -> &[GrowthEvent] {
        &self.events
    }

    /// Checks the trace invariants against the region and source list.
    pub fn validate(&self, region: &BoxRegion, sources: &[Vec<i64>]) -> Result<()> {
        let mut coloured: std::collections::HashMap<Vec<i64>, usize> = Default::default();
        let mut last = 0.0f64;
        for (n, e) in self.events.iter().enumerate() {
            if !region.contains(&e.vertex) {
                return Err(FppError::OutOfRegion(e.vertex.clone()));
            }
            if e.time == 0.0 {
                if !sources.iter().any(|s| s[..] == e.vertex[..]) {
                    return Err(FppError::Invariant(format!(
                        "zero-time event at non-source {:?}",
                        e.vertex
                    )));
                }
            } else {
                if e.time <= last {
                    return Err(FppError::Invariant(format!(
                        "event times not strictly increasing at event {n}"
                    )));
                }
                let has_own_neighbour = (0..region.dimension()).any(|a| {
                    [-1i64, 1].iter().any(|&dc| {
                        let mut nb = e.vertex.clone();
                        nb[a] += dc;
                        coloured.get(&nb) == Some(&e.owner)
                    })
                });
                if !has_own_neighbour {
                    return Err(FppError::Invariant(format!(
                        "vertex {:?} coloured with no neighbour of its type",
                        e.vertex
                    )));
                }
            }
            last = e.time;
            if coloured.insert(e.vertex.clone(), e.owner).is_some() {
                return Err(FppError::Invariant(format!(
                    "vertex {:?} coloured twice",
                    e.vertex
                )));
            }
        }
        if coloured.len() != region.vertex_count() {
            return Err(FppError::Invariant(format!(
                "trace covers {} of {} vertices",
                coloured.len(),
                region.vertex_count()
            )));
        }
        Ok(())
    }

    /// Rows `time,x_0,...,x_{d-1},type` in event order.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.events.first().map_or(0, |e| e.vertex.len());
        let mut header = String::from("time");
        for a in 0..d {
            header.push_str(&format!(",x{a}"));
        }
        header.push_str(",type");
        writeln!(w, "{header}")?;
        for e in &self.events {
            let mut row = format!("{}", e.time);
            for c in &e.vertex {
                row.push_str(&format!(",{c}"));
            }
            row.push_str(&format!(",{}", e.owner));
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Claim {
    t: f64,
    v: u32,
    owner: u16,
}

impl Eq for Claim {}

impl Ord for Claim {
    fn cmp(&self, other: &Self) -> Ordering {
        // Lower owner pops first on an exact (time, vertex) tie, matching
        // the argmin tie rule of the Voronoi construction.
        self.t.total_cmp(&other.t).then(self.v.cmp(&other.v)).then(self.owner.cmp(&other.owner))
    }
}

impl PartialOrd for Claim {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event-driven multi-type growth with independent per-(edge, type)
/// exponential traversal clocks of the given rates.
///
/// Memorylessness lets each clock be sampled once, when the edge is first
/// exposed; the sample is a pure function of (seed, type, edge index), so
/// the run never depends on exposure order.
pub fn simulate_richardson(
    region: &BoxRegion,
    sources: &[Vec<i64>],
    rates: &[f64],
    seed: u64,
) -> Result<(Partition, GrowthTrace)> {
    if rates.len() != sources.len() {
        return Err(FppError::Config(format!(
            "got {} rates for {} sources",
            rates.len(),
            sources.len()
        )));
    }
    for &r in rates {
        if !(r > 0.0 && r.is_finite()) {
            return Err(FppError::Config(format!("rates must be positive and finite, got {r}")));
        }
    }
    let table = EdgeTable::new(region);
    let clock = |edge: usize, ty: usize| {
        let u = unit_open(mix(seed, STREAM_CLOCK_BASE + ty as u64, edge as u64));
        WeightSpec::Exponential { rate: rates[ty] }.quantile(u)
    };
    run_growth(region, sources, rates.to_vec(), &table, clock)
}

/// Rate-1 growth whose traversal clocks are the environment's own
/// exponential edge weights; the coupling that makes the final owners equal
/// to [`fpp_voronoi`] exactly.
pub fn simulate_richardson_coupled(
    env: &Environment,
    sources: &[Vec<i64>],
) -> Result<(Partition, GrowthTrace)> {
    if !matches!(env.spec(), WeightSpec::Exponential { .. }) {
        return Err(FppError::Config(
            "coupled growth needs an exponential-weight environment".into(),
        ));
    }
    let region = env.region().clone();
    let table = EdgeTable::new(&region);
    let weights = env.weights();
    let rates = vec![1.0; sources.len()];
    run_growth(&region, sources, rates, &table, |edge, _ty| weights[edge])
}

fn run_growth(
    region: &BoxRegion,
    sources: &[Vec<i64>],
    rates: Vec<f64>,
    table: &EdgeTable,
    clock: impl Fn(usize, usize) -> f64,
) -> Result<(Partition, GrowthTrace)> {
    validate_sources(region, sources)?;
    let n = region.vertex_count();
    let d = region.dimension();
    const UNCOLOURED: u16 = u16::MAX;
    let mut owner = vec![UNCOLOURED; n];
    let mut time = vec![f64::INFINITY; n];
    let mut heap: BinaryHeap<Reverse<Claim>> = BinaryHeap::new();
    let mut events = Vec::with_capacity(n);
    let mut tie_count = 0u64;

    let expose = |heap: &mut BinaryHeap<Reverse<Claim>>,
                  owner: &[u16],
                  v: usize,
                  ty: u16,
                  t: f64| {
        for a in 0..d {
            let off = region.offset_at(v, a);
            if off + 1 < region.extents()[a] {
                let nb = v + region.stride(a);
                if owner[nb] == UNCOLOURED {
                    let fire = t + clock(table.edge_index(region, v, a), ty as usize);
                    heap.push(Reverse(Claim { t: fire, v: nb as u32, owner: ty }));
                }
            }
            if off > 0 {
                let nb = v - region.stride(a);
                if owner[nb] == UNCOLOURED {
                    let fire = t + clock(table.edge_index(region, nb, a), ty as usize);
                    heap.push(Reverse(Claim { t: fire, v: nb as u32, owner: ty }));
                }
            }
        }
    };

    for (i, s) in sources.iter().enumerate() {
        let idx = region.vertex_index(s)?;
        owner[idx] = i as u16;
        time[idx] = 0.0;
        events.push(GrowthEvent { time: 0.0, vertex: s.clone(), owner: i });
    }
    for (i, s) in sources.iter().enumerate() {
        let idx = region.vertex_index(s)?;
        expose(&mut heap, &owner, idx, i as u16, 0.0);
    }

    while let Some(Reverse(Claim { t, v, owner: ty })) = heap.pop() {
        let v = v as usize;
        if owner[v] != UNCOLOURED {
            if t == time[v] && ty != owner[v] {
                tie_count += 1;
            }
            continue;
        }
        owner[v] = ty;
        time[v] = t;
        events.push(GrowthEvent { time: t, vertex: region.vertex_coords(v), owner: ty as usize });
        expose(&mut heap, &owner, v, ty, t);
    }

    let partition = Partition::from_owner(region.clone(), sources.to_vec(), owner, tie_count)?;
    Ok((partition, GrowthTrace { rates, events }))
}

/// Finite surrogates for the coexistence event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxyMode {
    /// Every cell reaches the region boundary.
    Boundary,
    /// Every cell holds at least this fraction of the region's vertices.
    Volume(f64),
}

pub fn coexistence_proxy(p: &Partition, mode: ProxyMode) -> Result<bool> {
    match mode {
        ProxyMode::Boundary => Ok((0..p.k()).all(|i| p.touches_boundary(i))),
        ProxyMode::Volume(theta) => {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(FppError::Config(format!(
                    "volume fraction must lie in (0, 1], got {theta}"
                )));
            }
            let need = theta * p.region().vertex_count() as f64;
            Ok((0..p.k()).all(|i| p.cell_size(i) as f64 >= need))
        }
    }
}

/// When every cell touches the boundary, produces one geodesic per cell
/// from its source to a boundary vertex of that cell. Each geodesic stays
/// inside its own cell (any prefix of a minimizing path is minimizing), so
/// the returned paths are pairwise vertex-disjoint; both facts are checked.
pub fn extract_disjoint_geodesics(env: &Environment, p: &Partition) -> Result<Vec<LatticePath>> {
    if env.region() != p.region() {
        return Err(FppError::Config(
            "partition and environment must describe the same region".into(),
        ));
    }
    if !coexistence_proxy(p, ProxyMode::Boundary)? {
        return Err(FppError::ProxyFailed);
    }
    let region = p.region();
    let n = region.vertex_count();
    let mut paths = Vec::with_capacity(p.k());
    for (i, s) in p.sources().iter().enumerate() {
        let pm = PassageMap::compute(env, s)?;
        let target = (0..n)
            .filter(|&idx| p.owner_by_index(idx) == i && region.is_boundary_index(idx))
            .min_by(|&a, &b| {
                pm.passage_time_by_index(a).total_cmp(&pm.passage_time_by_index(b)).then(a.cmp(&b))
            })
            .expect("boundary-touching cell has a boundary vertex");
        let g = pm.geodesic(&region.vertex_coords(target))?;
        for v in g.vertices() {
            if p.owner_of(v)? != i {
                return Err(FppError::Invariant(format!(
                    "geodesic for cell {i} leaves its cell at {v:?}"
                )));
            }
        }
        paths.push(g);
    }
    for (i, a) in paths.iter().enumerate() {
        for b in &paths[..i] {
            for v in a.vertices() {
                if b.contains(v) {
                    return Err(FppError::Invariant(format!(
                        "extracted geodesics share vertex {v:?}"
                    )));
                }
            }
        }
    }
    Ok(paths)
}
