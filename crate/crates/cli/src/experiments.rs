//! Experiment drivers, one per configuration kind.
//!
//! Replicas are embarrassingly parallel: replica r always draws its
//! environment from `mix(seed, STREAM_REPLICA, r)`, outcomes are collected
//! in replica order, and aggregation folds that ordered list on a single
//! thread.  Worker count therefore changes wall-clock time and nothing
//! else; `report.json` is byte-identical for any `workers` value.

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use fpp_core::busemann::{
    fit_linear_functional, linearity_deviation, place_coexistence_points, placement_report,
    resolve_ray, BusemannSeries, LinearFunctional, RaySpec,
};
use fpp_core::compete::{
    coexistence_proxy, extract_disjoint_geodesics, fpp_voronoi, simulate_richardson,
    simulate_richardson_coupled, ProxyMode,
};
use fpp_core::geodesics::{coalescence_merge, tree_end_count};
use fpp_core::oracle::enumerate_from;
use fpp_core::rng::{mix, STREAM_REPLICA};
use fpp_core::shape::{count_sides, estimate_shape, supporting_functional};
use fpp_core::stats::{wilson_interval, RunningMoments, Z_95};
use fpp_core::weights::ks_statistic;
use fpp_core::{BoxRegion, Environment, FppError, PassageMap, Result};

use crate::config::{
    BusemannParams, CompeteParams, DualityParams, ExperimentConfig, ExperimentKind, MetricParams,
    ProxyConfig, ShapeParams,
};
use crate::report::ExperimentOutput;

/// Validates, pins the worker pool, and dispatches on the kind.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    if config.replicas == 0 {
        // Zero replicas make an empty but schema-valid report.
        return Ok(ExperimentOutput {
            aggregates: Value::Object(Map::new()),
            records: Vec::new(),
            artifacts: Vec::new(),
            replicas_aggregated: 0,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| FppError::Config(format!("worker pool: {e}")))?;
    pool.install(|| match config.kind {
        ExperimentKind::Env => run_env(config),
        ExperimentKind::Metric => run_metric(config),
        ExperimentKind::Shape => run_shape(config),
        ExperimentKind::Busemann => run_busemann(config),
        ExperimentKind::Compete => run_compete(config),
        ExperimentKind::Duality => run_duality(config),
    })
}

fn replica_seed(master: u64, replica: u64) -> u64 {
    mix(master, STREAM_REPLICA, replica)
}

/// Runs `f` over all replicas in parallel, returning outcomes in replica
/// order so downstream folds are deterministic.
fn for_each_replica<T: Send>(
    config: &ExperimentConfig,
    f: impl Fn(u64, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = replica_seed(config.seed, r);
            f(r, seed)
                .map_err(|e| FppError::Invariant(format!("replica {r} (seed {seed:#018x}): {e}")))
        })
        .collect()
}

fn moments_json(m: &RunningMoments) -> Value {
    json!({
        "count": m.count(),
        "mean": m.mean(),
        "stderr": m.stderr(),
    })
}

fn frequency_json(successes: u64, trials: u64) -> Value {
    let interval = wilson_interval(successes, trials, Z_95);
    json!({
        "successes": successes,
        "trials": trials,
        "frequency": if trials > 0 { Some(successes as f64 / trials as f64) } else { None },
        "wilson_95": interval.map(|(lo, hi)| vec![lo, hi]),
    })
}

fn proxy_mode(p: &ProxyConfig) -> ProxyMode {
    match p {
        ProxyConfig::Boundary => ProxyMode::Boundary,
        ProxyConfig::Volume { theta } => ProxyMode::Volume(*theta),
    }
}

fn seed_hex(seed: u64) -> String {
    format!("{seed:#018x}")
}

/// Sorted (value, multiplicity) pairs plus the median; histogram of a
/// small integer statistic over replicas.
fn histogram_json(values: &[u64]) -> Value {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let mut pairs: Vec<(u64, u64)> = Vec::new();
    for &v in &sorted {
        match pairs.last_mut() {
            Some((val, count)) if *val == v => *count += 1,
            _ => pairs.push((v, 1)),
        }
    }
    let median = if sorted.is_empty() {
        None
    } else if sorted.len() % 2 == 1 {
        Some(sorted[sorted.len() / 2] as f64)
    } else {
        Some((sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) as f64 / 2.0)
    };
    json!({
        "histogram": pairs.iter().map(|&(v, c)| vec![v, c]).collect::<Vec<_>>(),
        "median": median,
    })
}

// ---------------------------------------------------------------------
// env

struct EnvOutcome {
    record: Value,
    weight_moments: RunningMoments,
    incident_moments: RunningMoments,
    ks: f64,
    env_bytes: Option<Vec<u8>>,
}

/// Draws fresh environments and reports how the realized edge weights
/// track the configured family.
fn run_env(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let region = BoxRegion::cube(config.dimension, config.box_radius)?;
    let outcomes = for_each_replica(config, |r, seed| {
        let env = Environment::new(region.clone(), config.weights.clone(), seed)?;
        let mut weight_moments = RunningMoments::new();
        for &w in env.weights() {
            weight_moments.push(w);
        }
        let ks = ks_statistic(env.weights(), &config.weights);
        let mut incident_moments = RunningMoments::new();
        for i in 0..region.vertex_count() {
            if !region.is_boundary_index(i) {
                incident_moments.push(env.min_incident_weight(&region.vertex_coords(i))?);
            }
        }
        let env_bytes = if r == 0 {
            // Seed and spec reproduce the weights, so skip the cache.
            let mut bytes = Vec::new();
            env.write_to(&mut bytes, false)?;
            Some(bytes)
        } else {
            None
        };
        let record = json!({
            "replica": r,
            "seed": seed_hex(seed),
            "mean_weight": weight_moments.mean(),
            "ks_statistic": ks,
            "mean_min_incident": incident_moments.mean(),
        });
        Ok(EnvOutcome { record, weight_moments, incident_moments, ks, env_bytes })
    })?;

    let mut weight_moments = RunningMoments::new();
    let mut incident_moments = RunningMoments::new();
    let mut ks_max = f64::NEG_INFINITY;
    let mut ks_mean = RunningMoments::new();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::new();
    for outcome in outcomes {
        weight_moments.merge(&outcome.weight_moments);
        incident_moments.merge(&outcome.incident_moments);
        ks_max = ks_max.max(outcome.ks);
        ks_mean.push(outcome.ks);
        records.push(outcome.record);
        if let Some(bytes) = outcome.env_bytes {
            artifacts.push(("env.bin".to_string(), bytes));
        }
    }
    let aggregates = json!({
        "edge_weight": moments_json(&weight_moments),
        "spec_mean": config.weights.mean(),
        "ks": {"mean": ks_mean.mean(), "max": ks_max},
        "min_incident_interior": moments_json(&incident_moments),
    });
    Ok(ExperimentOutput {
        aggregates,
        records,
        artifacts,
        replicas_aggregated: config.replicas,
    })
}

// ---------------------------------------------------------------------
// metric

struct MetricOutcome {
    record: Value,
    corner_time: f64,
    ties: u64,
    oracle_mismatches: Option<u64>,
    symmetry_defect: Option<f64>,
    triangle_excess: Option<f64>,
    identity_violations: Option<u64>,
    end_count: Option<u64>,
    merged: Option<bool>,
    passage_csv: Option<Vec<u8>>,
}

/// First-passage metric checks: oracle comparison, metric axioms on
/// sampled triples, geodesic-tree end counts, and pair coalescence.
fn run_metric(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: &MetricParams = config.metric.as_ref().expect("validated");
    let region = BoxRegion::cube(config.dimension, config.box_radius)?;
    let origin = vec![0i64; config.dimension];

    let outcomes = for_each_replica(config, |r, seed| {
        let env = Environment::new(region.clone(), config.weights.clone(), seed)?;
        let map0 = PassageMap::compute(&env, &origin)?;
        let corner_time = map0.passage_time(region.upper())?;
        let mut ties = map0.tie_count();
        let mut record = Map::new();
        record.insert("replica".into(), json!(r));
        record.insert("seed".into(), json!(seed_hex(seed)));
        record.insert("corner_time".into(), json!(corner_time));

        let oracle_mismatches = if params.oracle {
            let oracle = enumerate_from(&env, &origin)?;
            let mut mismatches = 0u64;
            for i in 0..region.vertex_count() {
                let fast = map0.passage_time_by_index(i);
                let slow = oracle.passage_time(&region.vertex_coords(i))?;
                if fast.to_bits() != slow.to_bits() {
                    mismatches += 1;
                }
            }
            record.insert("oracle_mismatches".into(), json!(mismatches));
            Some(mismatches)
        } else {
            None
        };

        let (mut symmetry_defect, mut triangle_excess, mut identity_violations) =
            (None, None, None);
        if params.axiom_triples > 0 {
            let maps = (0..region.vertex_count())
                .map(|i| PassageMap::compute(&env, &region.vertex_coords(i)))
                .collect::<Result<Vec<_>>>()?;
            ties += maps.iter().map(|m| m.tie_count()).sum::<u64>();
            let n = region.vertex_count() as u64;
            let mut worst_sym = 0.0f64;
            let mut worst_tri = f64::NEG_INFINITY;
            let mut bad_identity = 0u64;
            for t in 0..params.axiom_triples {
                let x = (mix(seed, 0xa10, 3 * t) % n) as usize;
                let y = (mix(seed, 0xa10, 3 * t + 1) % n) as usize;
                let z = (mix(seed, 0xa10, 3 * t + 2) % n) as usize;
                let xy = maps[x].passage_time_by_index(y);
                let yx = maps[y].passage_time_by_index(x);
                let yz = maps[y].passage_time_by_index(z);
                let xz = maps[x].passage_time_by_index(z);
                worst_sym = worst_sym.max((xy - yx).abs());
                worst_tri = worst_tri.max(xz - (xy + yz));
                if maps[x].passage_time_by_index(x) != 0.0 {
                    bad_identity += 1;
                }
            }
            record.insert("max_symmetry_defect".into(), json!(worst_sym));
            record.insert("max_triangle_excess".into(), json!(worst_tri));
            symmetry_defect = Some(worst_sym);
            triangle_excess = Some(worst_tri);
            identity_violations = Some(bad_identity);
        }

        let end_count = match params.end_count {
            Some((inner, outer)) => {
                let tree = map0.geodesic_tree();
                let report = tree_end_count(&tree, inner, outer)?;
                record.insert("end_count".into(), json!(report.count));
                Some(report.count as u64)
            }
            None => None,
        };

        let merged = match params.merge_distance {
            Some(dist) => {
                let mut y = origin.clone();
                y[config.dimension - 1] = 1;
                let mut target = origin.clone();
                target[0] = dist;
                let merge = coalescence_merge(&env, &origin, &y, &target)?;
                let before_target = matches!(&merge, Some(v) if v != &target);
                record.insert("merge_point".into(), json!(merge));
                record.insert("merged_before_target".into(), json!(before_target));
                Some(before_target)
            }
            None => None,
        };

        record.insert("tie_count".into(), json!(ties));
        let passage_csv = if r == 0 {
            let mut bytes = Vec::new();
            map0.write_csv(&mut bytes)?;
            Some(bytes)
        } else {
            None
        };
        Ok(MetricOutcome {
            record: Value::Object(record),
            corner_time,
            ties,
            oracle_mismatches,
            symmetry_defect,
            triangle_excess,
            identity_violations,
            end_count,
            merged,
            passage_csv,
        })
    })?;

    let mut corner = RunningMoments::new();
    let mut ties_total = 0u64;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::new();
    let mut oracle_total: Option<u64> = None;
    let mut sym_max: Option<f64> = None;
    let mut tri_max: Option<f64> = None;
    let mut identity_total: Option<u64> = None;
    let mut end_counts = Vec::new();
    let mut merge_successes = 0u64;
    let mut merge_trials = 0u64;
    for outcome in outcomes {
        corner.push(outcome.corner_time);
        ties_total += outcome.ties;
        if let Some(m) = outcome.oracle_mismatches {
            *oracle_total.get_or_insert(0) += m;
        }
        if let Some(s) = outcome.symmetry_defect {
            sym_max = Some(sym_max.map_or(s, |cur: f64| cur.max(s)));
        }
        if let Some(t) = outcome.triangle_excess {
            tri_max = Some(tri_max.map_or(t, |cur: f64| cur.max(t)));
        }
        if let Some(v) = outcome.identity_violations {
            *identity_total.get_or_insert(0) += v;
        }
        if let Some(c) = outcome.end_count {
            end_counts.push(c);
        }
        if let Some(m) = outcome.merged {
            merge_trials += 1;
            merge_successes += m as u64;
        }
        records.push(outcome.record);
        if let Some(bytes) = outcome.passage_csv {
            artifacts.push(("passage.csv".to_string(), bytes));
        }
    }

    let mut aggregates = Map::new();
    aggregates.insert("corner_time".into(), moments_json(&corner));
    aggregates.insert("tie_count".into(), json!(ties_total));
    if let Some(total) = oracle_total {
        aggregates.insert(
            "oracle".into(),
            json!({"replicas": config.replicas, "mismatches": total}),
        );
    }
    if params.axiom_triples > 0 {
        aggregates.insert(
            "axioms".into(),
            json!({
                "triples": params.axiom_triples * config.replicas,
                "max_symmetry_defect": sym_max,
                "max_triangle_excess": tri_max,
                "identity_violations": identity_total,
            }),
        );
    }
    if !end_counts.is_empty() {
        aggregates.insert("end_count".into(), histogram_json(&end_counts));
    }
    if params.merge_distance.is_some() {
        aggregates.insert("merge".into(), frequency_json(merge_successes, merge_trials));
    }
    Ok(ExperimentOutput {
        aggregates: Value::Object(aggregates),
        records,
        artifacts,
        replicas_aggregated: config.replicas,
    })
}

// ---------------------------------------------------------------------
// shape

/// Limit-shape estimate over a grid of directions, with side counting
/// and the supporting functional along the first axis.
fn run_shape(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: &ShapeParams = config.shape.as_ref().expect("validated");
    let estimate = estimate_shape(
        &config.weights,
        params.n_dirs,
        params.n,
        config.replicas,
        config.seed,
    )?;
    let sides = count_sides(&estimate, params.angle_tol)?;
    let support = supporting_functional(&estimate, &[1.0, 0.0])?;

    let records = estimate
        .directions
        .iter()
        .map(|d| {
            json!({
                "angle": d.angle,
                "target": d.target,
                "mu_hat": d.mu_hat,
                "mu_stderr": d.mu_stderr,
                "radius": d.radius,
                "radius_stderr": d.radius_stderr,
                "kept": d.kept,
                "discarded": d.discarded,
            })
        })
        .collect();

    let aggregates = json!({
        "n": params.n,
        "n_dirs": params.n_dirs,
        "mu_e1": {
            "mean": estimate.directions[0].mu_hat,
            "stderr": estimate.directions[0].mu_stderr,
        },
        "origin_inside": estimate.origin_inside,
        "symmetry_defect": estimate.symmetry_defect,
        "pooled_stderr": estimate.pooled_stderr,
        "convexity_defect": estimate.convexity_defect,
        "sides": {"angle_tol": sides.angle_tol, "count": sides.count},
        "support_e1": {
            "gradient": support.functional.gradient(),
            "is_tangent": support.is_tangent,
        },
    });

    let mut shape_csv = Vec::new();
    estimate.write_csv(&mut shape_csv)?;
    let mut hull_csv = Vec::new();
    estimate.write_hull_csv(&mut hull_csv)?;
    Ok(ExperimentOutput {
        aggregates,
        records,
        artifacts: vec![
            ("shape.csv".to_string(), shape_csv),
            ("hull.csv".to_string(), hull_csv),
        ],
        replicas_aggregated: config.replicas,
    })
}

// ---------------------------------------------------------------------
// busemann

struct BusemannOutcome {
    record: Value,
    gradient: Vec<f64>,
    deviation: f64,
    residual_rms: f64,
    condition: f64,
    series_csv: Option<Vec<u8>>,
}

/// Probe points on two rings around the anchor.  Radii sit one unit
/// outside the nominal rings so integer rounding cannot pull a probe
/// below the deviation threshold `min_probe_radius`.
fn probe_points(params: &BusemannParams, anchor: &[i64]) -> Result<Vec<Vec<i64>>> {
    let m = params.min_probe_radius;
    let mut points = Vec::with_capacity(params.probes);
    for i in 0..params.probes {
        let angle = std::f64::consts::TAU * i as f64 / params.probes as f64;
        let radius = if i % 2 == 0 { m + 1.0 } else { 1.5 * m + 1.0 };
        let p = vec![
            (radius * angle.cos()).round() as i64,
            (radius * angle.sin()).round() as i64,
        ];
        if p == anchor || points.contains(&p) {
            return Err(FppError::Config(format!(
                "probe ring too tight: point {p:?} repeats; raise min_probe_radius or lower probes"
            )));
        }
        points.push(p);
    }
    Ok(points)
}

/// Fits a linear functional to Busemann values over ring probes and
/// reports how often the linearity defect stays under each slope.
fn run_busemann(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: &BusemannParams = config.busemann.as_ref().expect("validated");
    let region = BoxRegion::cube(config.dimension, config.box_radius)?;
    let anchor = vec![0i64; config.dimension];
    let probes = probe_points(params, &anchor)?;
    for p in &probes {
        if !region.contains(p) {
            return Err(FppError::Config(format!("probe {p:?} falls outside the box")));
        }
    }
    let direction = vec![params.ray_angle.cos(), params.ray_angle.sin()];

    let outcomes = for_each_replica(config, |r, seed| {
        let env = Environment::new(region.clone(), config.weights.clone(), seed)?;
        let ray = RaySpec::TowardDirection {
            origin: anchor.clone(),
            direction: direction.clone(),
        };
        let targets = resolve_ray(&env, &ray)?;
        let map_anchor = PassageMap::compute(&env, &anchor)?;
        let series = probes
            .iter()
            .map(|p| {
                let map_p = PassageMap::compute(&env, p)?;
                BusemannSeries::from_maps(&map_anchor, &map_p, targets.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_linear_functional(&series)?;
        let deviation = linearity_deviation(&series, &fit.functional, params.min_probe_radius)?;
        let oscillation_max = series
            .iter()
            .map(BusemannSeries::oscillation)
            .fold(0.0f64, f64::max);
        let series_csv = if r == 0 {
            let mut bytes = Vec::new();
            for s in &series {
                s.write_csv(&mut bytes)?;
            }
            Some(bytes)
        } else {
            None
        };
        let record = json!({
            "replica": r,
            "seed": seed_hex(seed),
            "gradient": fit.functional.gradient(),
            "residual_rms": fit.residual_rms,
            "condition": fit.condition,
            "deviation": deviation,
            "oscillation_max": oscillation_max,
            "ray_len": targets.len(),
        });
        Ok(BusemannOutcome {
            record,
            gradient: fit.functional.gradient().to_vec(),
            deviation,
            residual_rms: fit.residual_rms,
            condition: fit.condition,
            series_csv,
        })
    })?;

    let mut grad_x = RunningMoments::new();
    let mut grad_y = RunningMoments::new();
    let mut deviation = RunningMoments::new();
    let mut residual = RunningMoments::new();
    let mut condition_max = 0.0f64;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::new();
    let mut gradient_csv = String::from("replica,gx,gy,residual_rms,deviation\n");
    for (r, outcome) in outcomes.iter().enumerate() {
        grad_x.push(outcome.gradient[0]);
        grad_y.push(outcome.gradient[1]);
        deviation.push(outcome.deviation);
        residual.push(outcome.residual_rms);
        condition_max = condition_max.max(outcome.condition);
        records.push(outcome.record.clone());
        use std::fmt::Write;
        writeln!(
            gradient_csv,
            "{},{},{},{},{}",
            r, outcome.gradient[0], outcome.gradient[1], outcome.residual_rms, outcome.deviation
        )
        .expect("writing to String cannot fail");
        if let Some(bytes) = &outcome.series_csv {
            artifacts.push(("series.csv".to_string(), bytes.clone()));
        }
    }
    artifacts.push(("fitted_gradients.csv".to_string(), gradient_csv.into_bytes()));

    let delta_rows: Vec<Value> = params
        .delta_grid
        .iter()
        .map(|&delta| {
            let successes = outcomes.iter().filter(|o| o.deviation < delta).count() as u64;
            let mut row = frequency_json(successes, config.replicas);
            row.as_object_mut()
                .expect("frequency_json returns an object")
                .insert("delta".into(), json!(delta));
            row
        })
        .collect();

    let aggregates = json!({
        "gradient": {"x": moments_json(&grad_x), "y": moments_json(&grad_y)},
        "deviation": moments_json(&deviation),
        "residual_rms": moments_json(&residual),
        "condition_max": condition_max,
        "linearity": delta_rows,
        "probes": probes,
    });
    Ok(ExperimentOutput {
        aggregates,
        records,
        artifacts,
        replicas_aggregated: config.replicas,
    })
}

// ---------------------------------------------------------------------
// compete

struct CompeteOutcome {
    record: Value,
    coexist: bool,
    shares: Vec<f64>,
    ties: u64,
    partition_csv: Option<Vec<u8>>,
    trace_csv: Option<Vec<u8>>,
}

/// Multi-type growth from fixed sources; optionally checks the coupled
/// construction against the FPP-Voronoi partition of one environment.
fn run_compete(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: &CompeteParams = config.compete.as_ref().expect("validated");
    let region = BoxRegion::cube(config.dimension, config.box_radius)?;
    let mode = proxy_mode(&params.proxy);

    let outcomes = for_each_replica(config, |r, seed| {
        let (partition, trace) = if params.coupled {
            let env = Environment::new(region.clone(), config.weights.clone(), seed)?;
            let (partition, trace) = simulate_richardson_coupled(&env, &params.sources)?;
            let voronoi = fpp_voronoi(&env, &params.sources)?;
            for i in 0..region.vertex_count() {
                if partition.owner_by_index(i) != voronoi.owner_by_index(i) {
                    return Err(FppError::Invariant(format!(
                        "coupled growth and FPP-Voronoi disagree at {:?}",
                        region.vertex_coords(i)
                    )));
                }
            }
            (partition, trace)
        } else {
            simulate_richardson(&region, &params.sources, &params.rates, seed)?
        };
        trace.validate(&region, &params.sources)?;
        let coexist = coexistence_proxy(&partition, mode)?;
        let total = region.vertex_count() as f64;
        let shares: Vec<f64> = (0..partition.k())
            .map(|i| partition.cell_size(i) as f64 / total)
            .collect();
        let (partition_csv, trace_csv) = if r == 0 {
            let mut p = Vec::new();
            partition.write_csv(&mut p)?;
            let mut t = Vec::new();
            trace.write_csv(&mut t)?;
            (Some(p), Some(t))
        } else {
            (None, None)
        };
        let record = json!({
            "replica": r,
            "seed": seed_hex(seed),
            "coexist": coexist,
            "shares": shares,
            "tie_count": partition.tie_count(),
            "events": trace.events().len(),
        });
        Ok(CompeteOutcome {
            record,
            coexist,
            shares,
            ties: partition.tie_count(),
            partition_csv,
            trace_csv,
        })
    })?;

    let k = params.sources.len();
    let mut share_moments = vec![RunningMoments::new(); k];
    let mut coexist_count = 0u64;
    let mut ties_total = 0u64;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::new();
    for outcome in outcomes {
        for (m, &s) in share_moments.iter_mut().zip(&outcome.shares) {
            m.push(s);
        }
        coexist_count += outcome.coexist as u64;
        ties_total += outcome.ties;
        records.push(outcome.record);
        if let Some(bytes) = outcome.partition_csv {
            artifacts.push(("partition.csv".to_string(), bytes));
        }
        if let Some(bytes) = outcome.trace_csv {
            artifacts.push(("trace.csv".to_string(), bytes));
        }
    }
    let aggregates = json!({
        "coexistence": frequency_json(coexist_count, config.replicas),
        "shares": share_moments.iter().map(moments_json).collect::<Vec<_>>(),
        "tie_count": ties_total,
        "coupled_checked": params.coupled,
    });
    Ok(ExperimentOutput {
        aggregates,
        records,
        artifacts,
        replicas_aggregated: config.replicas,
    })
}

// ---------------------------------------------------------------------
// duality

struct DualityOutcome {
    record: Value,
    coexist: bool,
    extracted: bool,
    partition_csv: Option<Vec<u8>>,
    paths_csv: Option<Vec<u8>>,
}

fn paths_csv(paths: &[fpp_core::LatticePath]) -> Vec<u8> {
    let mut text = String::from("path,step,x,y\n");
    use std::fmt::Write;
    for (i, path) in paths.iter().enumerate() {
        for (s, v) in path.vertices().iter().enumerate() {
            writeln!(text, "{},{},{},{}", i, s, v[0], v[1]).expect("writing to String cannot fail");
        }
    }
    text.into_bytes()
}

/// Sources from the half-plane placement for k evenly spaced functionals,
/// then the coexistence frequency of the resulting k-type competition and
/// the disjoint geodesics it certifies.
fn run_duality(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let params: &DualityParams = config.duality.as_ref().expect("validated");
    let region = BoxRegion::cube(config.dimension, config.box_radius)?;
    let functionals = (0..params.k)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / params.k as f64;
            LinearFunctional::new(vec![angle.cos(), angle.sin()])
        })
        .collect::<Result<Vec<_>>>()?;
    let deltas = vec![params.delta; params.k];
    let radii = vec![params.separation; params.k];
    let points = place_coexistence_points(&functionals, &deltas, &radii)?;
    let placement = placement_report(&points, &functionals, &deltas, &radii);
    if params.k > 1 && !placement.verified {
        return Err(FppError::Invariant(
            "constructed placement fails its own inequalities".into(),
        ));
    }
    for p in &points {
        if !region.contains(p) {
            return Err(FppError::Config(format!(
                "placed source {p:?} falls outside the box; raise box_radius"
            )));
        }
    }
    let mode = proxy_mode(&params.proxy);

    let outcomes = for_each_replica(config, |r, seed| {
        let env = Environment::new(region.clone(), config.weights.clone(), seed)?;
        let partition = fpp_voronoi(&env, &points)?;
        let coexist = coexistence_proxy(&partition, mode)?;
        let paths = if coexist {
            // The proxy promises a disjoint family; failure here is a bug.
            Some(extract_disjoint_geodesics(&env, &partition)?)
        } else {
            None
        };
        let extracted = paths.is_some();
        let (partition_csv_bytes, paths_bytes) = if r == 0 {
            let mut p = Vec::new();
            partition.write_csv(&mut p)?;
            (Some(p), paths.as_ref().map(|ps| paths_csv(ps)))
        } else {
            (None, None)
        };
        let record = json!({
            "replica": r,
            "seed": seed_hex(seed),
            "coexist": coexist,
            "disjoint_extracted": extracted,
            "path_lengths": paths.as_ref().map(|ps| {
                ps.iter().map(|p| p.edge_len()).collect::<Vec<_>>()
            }),
        });
        Ok(DualityOutcome {
            record,
            coexist,
            extracted,
            partition_csv: partition_csv_bytes,
            paths_csv: paths_bytes,
        })
    })?;

    let mut coexist_count = 0u64;
    let mut extraction_failures = 0u64;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut artifacts = Vec::new();
    for outcome in outcomes {
        coexist_count += outcome.coexist as u64;
        extraction_failures += (outcome.coexist && !outcome.extracted) as u64;
        records.push(outcome.record);
        if let Some(bytes) = outcome.partition_csv {
            artifacts.push(("partition.csv".to_string(), bytes));
        }
        if let Some(bytes) = outcome.paths_csv {
            artifacts.push(("paths.csv".to_string(), bytes));
        }
    }

    let mut aggregates = Map::new();
    aggregates.insert("k".into(), json!(params.k));
    aggregates.insert("sources".into(), json!(points));
    aggregates.insert("placement_verified".into(), json!(placement.verified || params.k == 1));
    aggregates.insert("coexistence".into(), frequency_json(coexist_count, config.replicas));
    aggregates.insert("extraction_failures".into(), json!(extraction_failures));
    if let Some(s) = &params.sides_check {
        // Side count of the same weight family's shape estimate, seeded
        // independently of the replica stream.
        let shape_seed = mix(config.seed, 0x51de5, 0);
        let estimate = estimate_shape(&config.weights, s.n_dirs, s.n, s.replicas, shape_seed)?;
        let sides = count_sides(&estimate, s.angle_tol)?;
        aggregates.insert(
            "sides_check".into(),
            json!({
                "count": sides.count,
                "angle_tol": s.angle_tol,
                "n": s.n,
                "n_dirs": s.n_dirs,
                "replicas": s.replicas,
                "meets_k": sides.count >= params.k,
            }),
        );
    }
    artifacts.push((
        "placement.json".to_string(),
        serde_json::to_vec_pretty(&placement)
            .map_err(|e| FppError::Config(format!("placement not serializable: {e}")))?,
    ));
    Ok(ExperimentOutput {
        aggregates: Value::Object(aggregates),
        records,
        artifacts,
        replicas_aggregated: config.replicas,
    })
}
