//! Scenario configuration: TOML schema, validation and built-in scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, MotionModel};
use crate::fusion::FusionConfig;
use crate::metrics::OspaParams;
use crate::rfs::SingleState;
use crate::simnet::{NetworkTopology, WorkMode};
use crate::tbd::{GroundTruth, SensorModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    /// Grid size in cells, `[width, height]`.
    #[serde(default = "default_grid")]
    pub grid: [usize; 2],
    /// Cell size in metres, `[δx, δy]`.
    #[serde(default = "default_cell")]
    pub cell: [f64; 2],
    /// Required. Signal-to-noise ratio in dB.
    pub snr_db: Option<f64>,
    #[serde(default = "one")]
    pub noise_power: f64,
    #[serde(default = "one")]
    pub blur: f64,
    #[serde(default = "default_template_radius")]
    pub template_radius: usize,
}

fn default_grid() -> [usize; 2] {
    [50, 50]
}

fn default_cell() -> [f64; 2] {
    [1.0, 1.0]
}

fn one() -> f64 {
    1.0
}

fn default_template_radius() -> usize {
    1
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            cell: default_cell(),
            snr_db: None,
            noise_power: 1.0,
            blur: 1.0,
            template_radius: default_template_radius(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    /// Initial state `[px, py, vx, vy]`.
    pub state: [f64; 4],
    /// First scan (1-based) at which the target exists.
    #[serde(default = "first_step")]
    pub birth: usize,
    /// Last scan at which the target exists; defaults to the final scan.
    pub death: Option<usize>,
}

fn first_step() -> usize {
    1
}

fn default_start() -> [f64; 2] {
    [10.0, 25.0]
}

fn default_velocity() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    /// Two targets with equal velocity, `separation` metres apart across
    /// their direction of motion, centred on `start`.
    Parallel {
        separation: f64,
        #[serde(default = "default_start")]
        start: [f64; 2],
        #[serde(default = "default_velocity")]
        velocity: [f64; 2],
    },
    Explicit { tracks: Vec<TrackSpec> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "one_node")]
    pub nodes: usize,
    /// Undirected edges between 1-based node ids. A chain is used when
    /// omitted.
    pub edges: Option<Vec<[usize; 2]>>,
}

fn one_node() -> usize {
    1
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { nodes: 1, edges: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    Metropolis,
    /// Every pairwise fusion uses `(own_weight, 1 − own_weight)`.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    pub policy: WeightPolicy,
    pub own_weight: f64,
    pub exhaustive_limit: usize,
    pub gate_bandwidths: f64,
    pub prune_weight: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self {
            policy: WeightPolicy::Metropolis,
            own_weight: 0.5,
            exhaustive_limit: f.exhaustive_limit,
            gate_bandwidths: f.gate_bandwidths,
            prune_weight: f.prune_weight,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub cutoff: f64,
    pub order: f64,
    /// OSPA below this counts as an efficient estimate; defaults to half the
    /// cutoff.
    pub efficiency_threshold: Option<f64>,
    /// Exponent used when recording the powered-sum approximation error of
    /// local posteriors.
    pub approximation_omega: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            cutoff: 5.0,
            order: 1.0,
            efficiency_threshold: None,
            approximation_omega: 0.5,
        }
    }
}

impl MetricsSection {
    pub fn ospa(&self) -> OspaParams {
        OspaParams {
            cutoff: self.cutoff,
            order: self.order,
        }
    }

    pub fn threshold(&self) -> f64 {
        self.efficiency_threshold.unwrap_or(self.cutoff / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "first_step")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: WorkMode,
    #[serde(default)]
    pub sensor: SensorSection,
    #[serde(default)]
    pub motion: MotionModel,
    pub targets: TargetSpec,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_name() -> String {
    "scenario".to_string()
}

fn default_steps() -> usize {
    30
}

impl ScenarioConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps", "must be >= 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be >= 1"));
        }
        let sensor = self.sensor_model()?;
        self.motion.validate()?;
        self.filter.validate()?;
        self.fusion_config().validate()?;
        self.metrics.ospa().validate()?;
        if !(self.metrics.threshold() > 0.0) {
            return Err(Error::config("metrics.efficiency_threshold", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.metrics.approximation_omega) {
            return Err(Error::config("metrics.approximation_omega", "must be in [0, 1]"));
        }
        if self.fusion.policy == WeightPolicy::Fixed && !(0.0..=1.0).contains(&self.fusion.own_weight) {
            return Err(Error::config("fusion.own_weight", "must be in [0, 1]"));
        }
        match &self.targets {
            TargetSpec::Parallel { separation, .. } if !(*separation >= 0.0) => {
                return Err(Error::config("targets.separation", "must be >= 0"));
            }
            TargetSpec::Explicit { tracks } => {
                for (i, t) in tracks.iter().enumerate() {
                    let death = t.death.unwrap_or(self.steps);
                    if t.birth == 0 || death < t.birth {
                        return Err(Error::config(
                            format!("targets.tracks[{i}]"),
                            "needs 1 <= birth <= death",
                        ));
                    }
                }
            }
            _ => {}
        }
        self.ground_truth().validate(&sensor, self.steps)?;
        self.topology()?;
        Ok(())
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        let s = &self.sensor;
        let snr = s
            .snr_db
            .ok_or_else(|| Error::config("sensor.snr_db", "required field is missing"))?;
        if !snr.is_finite() {
            return Err(Error::config("sensor.snr_db", "must be finite"));
        }
        SensorModel::from_snr(
            (s.grid[0], s.grid[1]),
            (s.cell[0], s.cell[1]),
            snr,
            s.noise_power,
            s.blur,
            s.template_radius,
        )
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let specs: Vec<(SingleState, usize, usize)> = match &self.targets {
            TargetSpec::Parallel {
                separation,
                start,
                velocity,
            } => {
                // Offsets are perpendicular to the velocity.
                let speed = velocity[0].hypot(velocity[1]);
                let (nx, ny) = if speed > 0.0 {
                    (-velocity[1] / speed, velocity[0] / speed)
                } else {
                    (0.0, 1.0)
                };
                [-0.5, 0.5]
                    .iter()
                    .map(|s| {
                        let x = SingleState::new(
                            start[0] + s * separation * nx,
                            start[1] + s * separation * ny,
                            velocity[0],
                            velocity[1],
                        );
                        (x, 1, self.steps)
                    })
                    .collect()
            }
            TargetSpec::Explicit { tracks } => tracks
                .iter()
                .map(|t| {
                    let [px, py, vx, vy] = t.state;
                    (SingleState::new(px, py, vx, vy), t.birth, t.death.unwrap_or(self.steps))
                })
                .collect(),
        };
        GroundTruth::constant_velocity(&specs, self.motion.period)
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        let n = self.network.nodes;
        if n == 0 {
            return Err(Error::config("network.nodes", "must be >= 1"));
        }
        let edges: Vec<(usize, usize)> = match &self.network.edges {
            None => (1..n).map(|i| (i - 1, i)).collect(),
            Some(list) => list
                .iter()
                .map(|&[a, b]| {
                    if a == 0 || b == 0 || a > n || b > n {
                        Err(Error::config(
                            "network.edges",
                            format!("edge [{a}, {b}] refers to a node outside 1..={n}"),
                        ))
                    } else {
                        Ok((a - 1, b - 1))
                    }
                })
                .collect::<Result<_>>()?,
        };
        NetworkTopology::new(vec![self.sensor_model()?; n], &edges)
            .map_err(|e| Error::config("network", e.to_string()))
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            exhaustive_limit: self.fusion.exhaustive_limit,
            gate_bandwidths: self.fusion.gate_bandwidths,
            prune_weight: self.fusion.prune_weight,
            particles_per_track: self.filter.particles_per_track,
        }
    }

    /// Two parallel targets moving along x, `separation` metres apart, seen
    /// by a pair of connected sensors with 3×3 templates.
    pub fn scenario1(separation: f64) -> Self {
        Self {
            name: "scenario1".into(),
            steps: 30,
            runs: 50,
            seed: 1,
            mode: WorkMode::M1,
            sensor: SensorSection {
                snr_db: Some(15.0),
                template_radius: 1,
                ..Default::default()
            },
            motion: MotionModel::default(),
            targets: TargetSpec::Parallel {
                separation,
                start: default_start(),
                velocity: default_velocity(),
            },
            network: NetworkSection { nodes: 2, edges: None },
            filter: FilterConfig::default(),
            fusion: FusionSection::default(),
            metrics: MetricsSection::default(),
        }
    }

    /// Three crossing targets seen by a chain of `nodes` sensors with 5×5
    /// templates.
    pub fn scenario2(nodes: usize) -> Self {
        let tracks = [[8.0, 12.0, 1.0, 0.3], [8.0, 38.0, 1.0, -0.3], [40.0, 25.0, -0.8, 0.0]]
            .into_iter()
            .map(|state| TrackSpec {
                state,
                birth: 1,
                death: None,
            })
            .collect();
        Self {
            name: "scenario2".into(),
            steps: 30,
            runs: 50,
            seed: 1,
            mode: WorkMode::M1,
            sensor: SensorSection {
                snr_db: Some(16.0),
                template_radius: 2,
                ..Default::default()
            },
            motion: MotionModel::default(),
            targets: TargetSpec::Explicit { tracks },
            network: NetworkSection { nodes, edges: None },
            filter: FilterConfig::default(),
            fusion: FusionSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}
