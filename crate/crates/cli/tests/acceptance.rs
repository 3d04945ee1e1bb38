//! Acceptance suite: one test per release criterion, each printing a
//! single PASS/FAIL line (visible with --nocapture) before asserting.
//!
//! The Monte Carlo criteria pin master seeds so every run is
//! reproducible; scales and tolerances are stated inline.

use std::time::Instant;

use fpp_core::lattice::{euclid_norm, l1_norm};
use fpp_core::metric::PassageMap;
use fpp_core::oracle::enumerate_from;
use fpp_core::rng::mix;
use fpp_core::shape::{count_sides, estimate_shape};
use fpp_core::weights::WeightSpec;
use fpp_core::{BoxRegion, Environment};

use fpp_lab::config::{
    BusemannParams, CompeteParams, DualityParams, ExperimentConfig, ExperimentKind, MetricParams,
    ProxyConfig, ShapeParams, SidesCheckParams,
};
use fpp_lab::experiments::run_experiment;

fn verdict(id: &str, pass: bool, detail: &str) {
    println!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn base_config(kind: ExperimentKind, box_radius: i64, seed: u64, replicas: u64) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        dimension: 2,
        box_radius,
        weights: WeightSpec::Exponential { rate: 1.0 },
        seed,
        replicas,
        workers: 4,
        metric: None,
        shape: None,
        busemann: None,
        compete: None,
        duality: None,
    }
}

/// Criterion 1: on 100 seeded environments over 16-vertex boxes, heap
/// search and exhaustive path enumeration agree bit-for-bit on every
/// passage time and vertex-for-vertex on every geodesic; under a minute.
#[test]
fn oracle_equivalence_on_small_boxes() {
    let started = Instant::now();
    let region = BoxRegion::new(vec![0, 0], vec![3, 3]).unwrap();
    let mut comparisons = 0u64;
    let mut ties = 0u64;
    for seed in 0..100u64 {
        let env =
            Environment::new(region.clone(), WeightSpec::Exponential { rate: 1.0 }, seed).unwrap();
        for source in [vec![0, 0], vec![1, 2]] {
            let map = PassageMap::compute(&env, &source).unwrap();
            let oracle = enumerate_from(&env, &source).unwrap();
            ties += map.tie_count() + oracle.tie_count();
            for i in 0..region.vertex_count() {
                let v = region.vertex_coords(i);
                let fast = map.passage_time_by_index(i);
                let slow = oracle.passage_time(&v).unwrap();
                assert_eq!(fast.to_bits(), slow.to_bits(), "time mismatch at {v:?}");
                let fast_path = map.geodesic(&v).unwrap();
                let slow_path = oracle.geodesic(&v).unwrap();
                assert_eq!(fast_path.vertices(), slow_path.vertices(), "path mismatch at {v:?}");
                comparisons += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = comparisons == 3200 && ties == 0 && elapsed < 60.0;
    verdict(
        "1 (oracle equivalence)",
        pass,
        &format!("{comparisons} time+path comparisons, {ties} ties, {elapsed:.1}s"),
    );
    assert!(pass);
}

/// Criterion 2: symmetry and triangle inequality at 1e-9 over 10^4
/// sampled triples across 20 environments, with zero exact ties.
#[test]
fn metric_axioms_hold_to_nine_digits_with_zero_ties() {
    let mut config = base_config(ExperimentKind::Metric, 6, 0xacce5, 20);
    config.metric = Some(MetricParams {
        oracle: false,
        axiom_triples: 500,
        end_count: None,
        merge_distance: None,
    });
    let output = run_experiment(&config).unwrap();
    let axioms = &output.aggregates["axioms"];
    let triples = axioms["triples"].as_u64().unwrap();
    let sym = axioms["max_symmetry_defect"].as_f64().unwrap();
    let tri = axioms["max_triangle_excess"].as_f64().unwrap();
    let identity = axioms["identity_violations"].as_u64().unwrap();
    let ties = output.aggregates["tie_count"].as_u64().unwrap();
    let pass = triples == 10_000 && sym <= 1e-9 && tri <= 1e-9 && identity == 0 && ties == 0;
    verdict(
        "2 (metric axioms)",
        pass,
        &format!(
            "{triples} triples, symmetry defect {sym:.2e}, triangle excess {tri:.2e}, {ties} ties"
        ),
    );
    assert!(pass);
}

/// Criterion 3: antisymmetry and the cocycle identity of the Busemann
/// increments bit-exact, and |B| bounded by the passage time, over 10^3
/// sampled configurations whose three passage times are comparable
/// (within a factor of two, so the subtractions are exact); plus B = T
/// along a geodesic, exact where the ray index sits on the geodesic.
#[test]
fn busemann_algebra_is_exact_on_comparable_configurations() {
    let region = BoxRegion::cube(2, 10).unwrap();
    // Anchor cluster around the origin and a far target ring.
    let cluster: Vec<Vec<i64>> =
        (-2..=2).flat_map(|x| (-2..=2).map(move |y| vec![x, y])).collect();
    let ring: Vec<usize> = (0..region.vertex_count())
        .filter(|&i| {
            let v = region.vertex_coords(i);
            v.iter().map(|c| c.abs()).max().unwrap() == 10
        })
        .collect();

    let mut verified = 0u64;
    let mut skipped = 0u64;
    let mut exact_ties = 0u64;
    for env_seed in 0..50u64 {
        let env = Environment::new(
            region.clone(),
            WeightSpec::Exponential { rate: 1.0 },
            mix(0xb05e, 0x1, env_seed),
        )
        .unwrap();
        let maps: Vec<PassageMap> =
            cluster.iter().map(|a| PassageMap::compute(&env, a).unwrap()).collect();
        let mut done = 0;
        let mut draw = 0u64;
        while done < 20 {
            let pick =
                |salt: u64, n: usize| (mix(env_seed, 0xc0f1, draw * 4 + salt) % n as u64) as usize;
            let xi = pick(0, cluster.len());
            let yi = pick(1, cluster.len());
            let zi = pick(2, cluster.len());
            let ki = pick(3, ring.len());
            draw += 1;
            if xi == yi || yi == zi || xi == zi {
                continue;
            }
            let a = maps[xi].passage_time_by_index(ring[ki]);
            let b = maps[yi].passage_time_by_index(ring[ki]);
            let c = maps[zi].passage_time_by_index(ring[ki]);
            let lo = a.min(b).min(c);
            let hi = a.max(b).max(c);
            if hi >= 2.0 * lo {
                // Outside the exact-subtraction window; not a sample.
                skipped += 1;
                continue;
            }
            if a == b || b == c || a == c {
                exact_ties += 1;
                continue;
            }
            // Antisymmetry is exact negation.
            assert_eq!((a - b).to_bits(), (-(b - a)).to_bits());
            // Cocycle: both differences and their sum are exact.
            assert_eq!(((a - b) + (b - c)).to_bits(), (a - c).to_bits());
            // |B(x, y)| <= T(x, y) + 1e-9.
            let t_xy = maps[xi].passage_time(&cluster[yi]).unwrap();
            assert!((a - b).abs() <= t_xy + 1e-9);
            verified += 1;
            done += 1;
        }
    }

    // B = T along a geodesic: exact at the ray index on the geodesic,
    // within 1e-9 at the indices beyond it.
    let mut max_drift = 0.0f64;
    for env_seed in 0..20u64 {
        let env = Environment::new(
            region.clone(),
            WeightSpec::Exponential { rate: 1.0 },
            mix(0xb05e, 0x2, env_seed),
        )
        .unwrap();
        let x = vec![0i64, 0];
        let map_x = PassageMap::compute(&env, &x).unwrap();
        let g = map_x.geodesic(&vec![10, 10]).unwrap();
        assert!(g.edge_len() >= 6);
        let y = g.vertices()[g.edge_len() / 2].clone();
        let map_y = PassageMap::compute(&env, &y).unwrap();
        let t_xy = map_x.passage_time(&y).unwrap();
        // Ray index at y itself: B is bit-equal to T(x, y).
        let b_at_y = t_xy - map_y.passage_time(&y).unwrap();
        assert_eq!(b_at_y.to_bits(), t_xy.to_bits());
        // Later ray indices along the geodesic drift only by rounding.
        for v in &g.vertices()[g.edge_len() / 2..] {
            let b = map_x.passage_time(v).unwrap() - map_y.passage_time(v).unwrap();
            max_drift = max_drift.max((b - t_xy).abs());
            assert!((b - t_xy).abs() <= 1e-9);
        }
    }

    let pass = verified == 1000 && exact_ties == 0;
    verdict(
        "3 (Busemann algebra)",
        pass,
        &format!(
            "{verified} exact configurations ({skipped} non-comparable skipped), \
             {exact_ties} ties, geodesic drift max {max_drift:.2e}"
        ),
    );
    assert!(pass);
}

/// Criterion 4: the coupled event-driven growth reproduces the
/// FPP-Voronoi partition vertex-for-vertex on 100 seeds at 31^2, under
/// two minutes.  The driver asserts the equality inside every replica,
/// so a single mismatch fails the whole run.
#[test]
fn coupled_growth_reproduces_fpp_voronoi() {
    let started = Instant::now();
    let mut config = base_config(ExperimentKind::Compete, 15, 0xc091ed, 100);
    config.compete = Some(CompeteParams {
        sources: vec![vec![-5, 0], vec![5, 0]],
        rates: vec![1.0, 1.0],
        coupled: true,
        proxy: ProxyConfig::Boundary,
    });
    let result = run_experiment(&config);
    let elapsed = started.elapsed().as_secs_f64();
    let pass = match &result {
        Ok(output) => {
            output.replicas_aggregated == 100
                && output.aggregates["coupled_checked"].as_bool().unwrap()
                && output.aggregates["tie_count"].as_u64().unwrap() == 0
                && elapsed < 120.0
        }
        Err(_) => false,
    };
    verdict(
        "4 (growth coupling)",
        pass,
        &format!("100 seeds vertex-for-vertex at 31x31, {elapsed:.1}s"),
    );
    assert!(pass, "{result:?}");
}

/// Criteria 5 and 6 share one duality suite: two-type exponential
/// competition from placed sources at separation 20 in a 61^2 box, 500
/// replicas.  5: every proxy success yields the disjoint-geodesic
/// witness.  6: the coexistence frequency's 95% Wilson lower bound is
/// positive; under ten minutes.
#[test]
fn duality_suite_extracts_witnesses_and_shows_coexistence() {
    let started = Instant::now();
    let mut config = base_config(ExperimentKind::Duality, 30, 0xd0a1, 500);
    config.duality = Some(DualityParams {
        k: 2,
        delta: 0.5,
        separation: 20.0,
        proxy: ProxyConfig::Boundary,
        sides_check: None,
    });
    let output = run_experiment(&config).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let failures = output.aggregates["extraction_failures"].as_u64().unwrap();
    let coexistence = &output.aggregates["coexistence"];
    let successes = coexistence["successes"].as_u64().unwrap();
    let wilson_lo = coexistence["wilson_95"][0].as_f64().unwrap();
    let sources = &output.aggregates["sources"];
    let p0 = [sources[0][0].as_i64().unwrap(), sources[0][1].as_i64().unwrap()];
    let p1 = [sources[1][0].as_i64().unwrap(), sources[1][1].as_i64().unwrap()];
    let separation = euclid_norm(&[p0[0] - p1[0], p0[1] - p1[1]]);

    let pass5 = failures == 0 && output.replicas_aggregated == 500;
    verdict(
        "5 (disjoint-geodesic witness)",
        pass5,
        &format!("{successes} proxy successes, {failures} extraction failures"),
    );
    let pass6 = wilson_lo > 0.0 && separation >= 20.0 && elapsed < 600.0;
    verdict(
        "6 (coexistence positivity)",
        pass6,
        &format!(
            "frequency {successes}/500, Wilson lower {wilson_lo:.4}, \
             sources {p0:?} {p1:?}, {elapsed:.1}s"
        ),
    );
    assert!(pass5);
    assert!(pass6);
}

/// Criterion 7: constant weights give the L1-ball shape exactly (mu-hat
/// bit-equal to c L1/L2 per direction, 4 hull sides, zero symmetry
/// defect; the c = 1 hull lands on the four axis points); the
/// exponential estimate at 32 directions, n = 100, 50 replicas keeps
/// its symmetry defect under 3 pooled standard errors; under fifteen
/// minutes.
#[test]
fn shape_oracle_constant_exact_and_exponential_symmetric() {
    let started = Instant::now();

    // Constant c = 0.5: dyadic, so every mean is exact at any scale.
    let constant = estimate_shape(&WeightSpec::Constant { value: 0.5 }, 32, 20, 3, 9).unwrap();
    let mut exact = true;
    for d in &constant.directions {
        let expected = 0.5 * l1_norm(&d.target) as f64 / d.target_norm;
        if d.mu_hat != Some(expected) {
            println!(
                "  constant mu mismatch at {:?}: got {:?}, expected {expected}",
                d.target, d.mu_hat
            );
            exact = false;
        }
    }
    if constant.symmetry_defect != Some(0.0) {
        println!("  constant symmetry defect {:?}", constant.symmetry_defect);
        exact = false;
    }
    let const_sides = count_sides(&constant, 0.2).unwrap().count;
    exact &= const_sides == 4;

    // Constant c = 1: the cloud is the L1 unit sphere; every hull
    // vertex sits on it to 1e-12.
    let unit = estimate_shape(&WeightSpec::Constant { value: 1.0 }, 32, 20, 3, 9).unwrap();
    let mut hull_on_sphere = true;
    for v in &unit.hull {
        if (v[0].abs() + v[1].abs() - 1.0).abs() >= 1e-12 {
            println!("  hull vertex off the unit sphere: {v:?}");
            hull_on_sphere = false;
        }
    }
    let unit_sides = count_sides(&unit, 0.2).unwrap().count;
    hull_on_sphere &= unit_sides == 4;

    // Exponential at the stated scale.
    let exponential =
        estimate_shape(&WeightSpec::Exponential { rate: 1.0 }, 32, 100, 50, 314159).unwrap();
    let defect = exponential.symmetry_defect.unwrap();
    let pooled = exponential.pooled_stderr.unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let pass = exact && hull_on_sphere && defect < 3.0 * pooled && elapsed < 900.0;
    verdict(
        "7 (shape oracle)",
        pass,
        &format!(
            "constant exact, {const_sides}-sided L1 hull, exponential defect {defect:.4} \
             vs 3 x pooled {:.4}, {elapsed:.1}s",
            3.0 * pooled
        ),
    );
    assert!(pass);
}

/// Criterion 8: every experiment kind, rerun with workers 1 and 4 on
/// the same config and master seed, emits byte-identical aggregates and
/// replica records.
#[test]
fn aggregates_are_byte_identical_across_worker_counts() {
    let mut configs: Vec<ExperimentConfig> = Vec::new();

    configs.push(base_config(ExperimentKind::Env, 5, 81, 6));

    let mut metric = base_config(ExperimentKind::Metric, 4, 82, 4);
    metric.metric = Some(MetricParams {
        oracle: false,
        axiom_triples: 50,
        end_count: Some((1, 4)),
        merge_distance: None,
    });
    configs.push(metric);

    let mut shape = base_config(ExperimentKind::Shape, 16, 83, 6);
    shape.shape = Some(ShapeParams { n_dirs: 16, n: 16, angle_tol: 0.2 });
    configs.push(shape);

    let mut busemann = base_config(ExperimentKind::Busemann, 20, 84, 4);
    busemann.busemann = Some(BusemannParams {
        probes: 8,
        min_probe_radius: 6.0,
        delta_grid: vec![0.1, 0.3],
        ray_angle: 0.0,
    });
    configs.push(busemann);

    let mut compete = base_config(ExperimentKind::Compete, 10, 85, 10);
    compete.compete = Some(CompeteParams {
        sources: vec![vec![-3, 0], vec![3, 0]],
        rates: vec![1.0, 1.0],
        coupled: true,
        proxy: ProxyConfig::Boundary,
    });
    configs.push(compete);

    let mut duality = base_config(ExperimentKind::Duality, 30, 86, 10);
    duality.duality = Some(DualityParams {
        k: 2,
        delta: 0.5,
        separation: 20.0,
        proxy: ProxyConfig::Boundary,
        sides_check: Some(SidesCheckParams { n_dirs: 8, n: 10, replicas: 4, angle_tol: 0.2 }),
    });
    configs.push(duality);

    let mut all_identical = true;
    let mut detail = String::new();
    for config in &mut configs {
        config.workers = 1;
        let serial = run_experiment(config).unwrap();
        config.workers = 4;
        let parallel = run_experiment(config).unwrap();
        let same_aggregates = serde_json::to_string(&serial.aggregates).unwrap()
            == serde_json::to_string(&parallel.aggregates).unwrap();
        let same_records = serial.records == parallel.records;
        all_identical &= same_aggregates && same_records;
        detail.push_str(&format!(
            "{}:{} ",
            config.kind.name(),
            if same_aggregates && same_records { "ok" } else { "DIFFERS" }
        ));
    }
    verdict("8 (worker determinism)", all_identical, detail.trim());
    assert!(all_identical);
}

/// Criterion 9, exploratory: the geodesic-tree end count at radii
/// (20, 100) over 200 replicas, full distribution recorded and the
/// share with at least four ends reported; nothing asserted about the
/// values themselves.
#[test]
fn end_count_distribution_recorded_at_stated_radii() {
    let mut config = base_config(ExperimentKind::Metric, 100, 0xe9d5, 200);
    config.metric = Some(MetricParams {
        oracle: false,
        axiom_triples: 0,
        end_count: Some((20, 100)),
        merge_distance: None,
    });
    let output = run_experiment(&config).unwrap();
    let end = &output.aggregates["end_count"];
    let histogram = end["histogram"].as_array().unwrap();
    let median = end["median"].as_f64().unwrap();
    let total: u64 = histogram.iter().map(|p| p[1].as_u64().unwrap()).sum();
    let at_least_four: u64 = histogram
        .iter()
        .filter(|p| p[0].as_u64().unwrap() >= 4)
        .map(|p| p[1].as_u64().unwrap())
        .sum();
    let distribution: Vec<(u64, u64)> = histogram
        .iter()
        .map(|p| (p[0].as_u64().unwrap(), p[1].as_u64().unwrap()))
        .collect();

    let pass = total == 200;
    verdict(
        "9 (end counts, recorded)",
        pass,
        &format!(
            "distribution {distribution:?}, median {median}, \
             share with >= 4 ends {:.3} (recorded, not asserted)",
            at_least_four as f64 / total as f64
        ),
    );
    assert!(pass);
}
