//! Experiment configuration: a TOML file with a common header and one
//! kind-specific section. Everything is validated before any computation
//! so a bad file fails fast with a config error, never mid-run.

use std::path::Path;

use fpp_core::weights::WeightSpec;
use fpp_core::{FppError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Env,
    Metric,
    Shape,
    Busemann,
    Compete,
    Duality,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Env => "env",
            Self::Metric => "metric",
            Self::Shape => "shape",
            Self::Busemann => "busemann",
            Self::Compete => "compete",
            Self::Duality => "duality",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricParams {
    /// Compare against the exhaustive path oracle each replica.
    /// Requires a box small enough to enumerate.
    #[serde(default)]
    pub oracle: bool,
    /// Number of (x, y, z) triples per replica for the symmetry and
    /// triangle checks. Needs all-pairs maps, so the box must be small.
    #[serde(default)]
    pub axiom_triples: u64,
    /// (inner, outer) radii for the geodesic-tree end count.
    #[serde(default)]
    pub end_count: Option<(i64, i64)>,
    /// Coalescence statistic: adjacent starts racing to (distance, 0).
    #[serde(default)]
    pub merge_distance: Option<i64>,
}

/// The estimator derives its own lattice box from `n` plus a margin for
/// boundary-effect control, so `box_radius` only caps the scale here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    pub n_dirs: usize,
    pub n: i64,
    #[serde(default = "default_angle_tol")]
    pub angle_tol: f64,
}

fn default_angle_tol() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusemannParams {
    /// Probe points y for the linearity fit, spread over two rings.
    pub probes: usize,
    /// Minimum probe distance M in the deviation statistic.
    pub min_probe_radius: f64,
    /// Slopes delta at which P(deviation < delta) is reported.
    pub delta_grid: Vec<f64>,
    /// Direction (radians) of the target ray from the anchor.
    #[serde(default)]
    pub ray_angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProxyConfig {
    Boundary,
    Volume { theta: f64 },
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self::Boundary
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompeteParams {
    pub sources: Vec<Vec<i64>>,
    pub rates: Vec<f64>,
    /// Also run the coupled construction and assert it matches the
    /// FPP-Voronoi partition. Needs exponential weights and unit rates.
    #[serde(default)]
    pub coupled: bool,
    #[serde(default)]
    pub proxy: ProxyConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidesCheckParams {
    pub n_dirs: usize,
    pub n: i64,
    pub replicas: u64,
    pub angle_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualityParams {
    /// Number of competing types; sources come from the coexistence
    /// placement with functionals at k evenly spaced angles.
    pub k: usize,
    pub delta: f64,
    /// Minimum pairwise separation M passed to the placement.
    pub separation: f64,
    #[serde(default)]
    pub proxy: ProxyConfig,
    /// Optional side-count stage reported next to the coexistence
    /// frequency, linking the shape estimate to the k-type experiment.
    #[serde(default)]
    pub sides_check: Option<SidesCheckParams>,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub dimension: usize,
    pub box_radius: i64,
    pub weights: WeightSpec,
    pub seed: u64,
    pub replicas: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub busemann: Option<BusemannParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compete: Option<CompeteParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualityParams>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| FppError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.dimension == 0 {
            return Err(FppError::Config("dimension must be positive".into()));
        }
        if self.box_radius < 1 {
            return Err(FppError::Config("box_radius must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(FppError::Config("workers must be at least 1".into()));
        }
        let planar = matches!(
            self.kind,
            ExperimentKind::Shape | ExperimentKind::Busemann | ExperimentKind::Duality
        );
        if planar && self.dimension != 2 {
            return Err(FppError::Config(format!(
                "{} experiments are planar; got dimension {}",
                self.kind.name(),
                self.dimension
            )));
        }
        let section = |present: bool, name: &str| {
            if present {
                Ok(())
            } else {
                Err(FppError::Config(format!("kind {name} needs a [{name}] section")))
            }
        };
        match self.kind {
            ExperimentKind::Env => {}
            ExperimentKind::Metric => {
                section(self.metric.is_some(), "metric")?;
                self.validate_metric(self.metric.as_ref().unwrap())?;
            }
            ExperimentKind::Shape => {
                section(self.shape.is_some(), "shape")?;
                let p = self.shape.as_ref().unwrap();
                if !(p.angle_tol > 0.0 && p.angle_tol < std::f64::consts::FRAC_PI_4) {
                    return Err(FppError::Config("angle_tol must lie in (0, pi/4)".into()));
                }
                if p.n > self.box_radius {
                    return Err(FppError::Config(format!(
                        "shape target radius n = {} exceeds box_radius = {}",
                        p.n, self.box_radius
                    )));
                }
            }
            ExperimentKind::Busemann => {
                section(self.busemann.is_some(), "busemann")?;
                self.validate_busemann(self.busemann.as_ref().unwrap())?;
            }
            ExperimentKind::Compete => {
                section(self.compete.is_some(), "compete")?;
                self.validate_compete(self.compete.as_ref().unwrap())?;
            }
            ExperimentKind::Duality => {
                section(self.duality.is_some(), "duality")?;
                self.validate_duality(self.duality.as_ref().unwrap())?;
            }
        }
        Ok(())
    }

    fn vertex_count(&self) -> u128 {
        (2 * self.box_radius as u128 + 1).pow(self.dimension as u32)
    }

    fn validate_metric(&self, p: &MetricParams) -> Result<()> {
        if p.oracle && self.vertex_count() > 20 {
            return Err(FppError::Config(
                "oracle comparison needs a box of at most 20 vertices".into(),
            ));
        }
        if p.axiom_triples > 0 && self.vertex_count() > 400 {
            return Err(FppError::Config(
                "axiom triples need all-pairs maps; keep the box at or under 400 vertices"
                    .into(),
            ));
        }
        if let Some((inner, outer)) = p.end_count {
            if !(0 <= inner && inner < outer && outer <= self.box_radius) {
                return Err(FppError::Config(format!(
                    "end_count radii ({inner}, {outer}) must satisfy 0 <= inner < outer <= box_radius"
                )));
            }
        }
        if let Some(dist) = p.merge_distance {
            if dist < 2 || dist + 4 > self.box_radius {
                return Err(FppError::Config(
                    "merge_distance must fit inside the box with margin".into(),
                ));
            }
        }
        if !p.oracle && p.axiom_triples == 0 && p.end_count.is_none() && p.merge_distance.is_none()
        {
            return Err(FppError::Config(
                "metric experiment has nothing to do; enable at least one stage".into(),
            ));
        }
        Ok(())
    }

    fn validate_busemann(&self, p: &BusemannParams) -> Result<()> {
        if p.probes < 4 {
            return Err(FppError::Config("need at least 4 probes".into()));
        }
        if !(p.min_probe_radius >= 1.0) {
            return Err(FppError::Config("min_probe_radius must be at least 1".into()));
        }
        let outer_ring = (1.5 * p.min_probe_radius).ceil() as i64;
        if outer_ring + 2 > self.box_radius {
            return Err(FppError::Config(
                "probe rings do not fit inside the box".into(),
            ));
        }
        if p.delta_grid.is_empty()
            || p.delta_grid.iter().any(|&d| !(d > 0.0) || !d.is_finite())
            || p.delta_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(FppError::Config(
                "delta_grid must be positive, finite, strictly increasing".into(),
            ));
        }
        Ok(())
    }

    fn validate_compete(&self, p: &CompeteParams) -> Result<()> {
        if p.sources.len() != p.rates.len() || p.sources.is_empty() {
            return Err(FppError::Config(
                "sources and rates must be nonempty and equally long".into(),
            ));
        }
        for s in &p.sources {
            if s.len() != self.dimension {
                return Err(FppError::Config(format!("source {s:?} has the wrong dimension")));
            }
            if s.iter().any(|&c| c.abs() > self.box_radius) {
                return Err(FppError::Config(format!("source {s:?} lies outside the box")));
            }
        }
        if p.rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(FppError::Config("rates must be positive and finite".into()));
        }
        if p.coupled {
            if !matches!(self.weights, WeightSpec::Exponential { .. }) {
                return Err(FppError::Config(
                    "coupled mode needs exponential weights".into(),
                ));
            }
            if p.rates.iter().any(|&r| r != 1.0) {
                return Err(FppError::Config("coupled mode needs unit rates".into()));
            }
        }
        validate_proxy(&p.proxy)
    }

    fn validate_duality(&self, p: &DualityParams) -> Result<()> {
        if p.k < 1 {
            return Err(FppError::Config("k must be at least 1".into()));
        }
        if !(p.delta > 0.0 && p.delta.is_finite()) {
            return Err(FppError::Config("delta must be positive and finite".into()));
        }
        if !(p.separation >= 1.0 && p.separation.is_finite()) {
            return Err(FppError::Config("separation must be at least 1".into()));
        }
        if p.k > 1 {
            // Placement on a circle needs sin(pi/k) > delta for unit
            // gradients at evenly spaced angles.
            let gap = (std::f64::consts::PI / p.k as f64).sin();
            if gap <= p.delta {
                return Err(FppError::Config(format!(
                    "delta {} leaves no room between {} evenly spaced types",
                    p.delta, p.k
                )));
            }
        }
        if let Some(s) = &p.sides_check {
            if s.n_dirs < 8 || s.n_dirs % 4 != 0 || s.n < 4 || s.replicas == 0 {
                return Err(FppError::Config("sides_check parameters out of range".into()));
            }
            if !(s.angle_tol > 0.0 && s.angle_tol < std::f64::consts::FRAC_PI_4) {
                return Err(FppError::Config("sides_check angle_tol out of range".into()));
            }
        }
        validate_proxy(&p.proxy)
    }
}

fn validate_proxy(p: &ProxyConfig) -> Result<()> {
    if let ProxyConfig::Volume { theta } = p {
        if !(*theta > 0.0 && *theta <= 1.0) {
            return Err(FppError::Config("volume proxy theta must lie in (0, 1]".into()));
        }
    }
    Ok(())
}
