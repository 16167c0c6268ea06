//! Image observation model for track-before-detect.
//!
//! Every target spreads power over a square template of cells through a
//! Gaussian point-spread function; each cell carries independent Gaussian
//! noise. The per-target likelihood ratio only involves the template cells.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rfs::SingleState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub grid_width: usize,
    pub grid_height: usize,
    pub cell_width: f64,
    pub cell_height: f64,
    /// Source intensity σT.
    pub source_intensity: f64,
    /// Noise power σN (the per-cell noise variance).
    pub noise_power: f64,
    /// Blurring factor σb².
    pub blur: f64,
    /// Template half-size ρ; the template is (2ρ+1)×(2ρ+1) cells.
    pub template_radius: usize,
}

impl SensorModel {
    /// Builds a sensor whose source intensity is set from an SNR in dB,
    /// `σT = σN · 10^{SNR/10}`.
    pub fn from_snr(
        grid: (usize, usize),
        cell: (f64, f64),
        snr_db: f64,
        noise_power: f64,
        blur: f64,
        template_radius: usize,
    ) -> Result<Self> {
        let s = Self {
            grid_width: grid.0,
            grid_height: grid.1,
            cell_width: cell.0,
            cell_height: cell.1,
            source_intensity: noise_power * 10f64.powf(snr_db / 10.0),
            noise_power,
            blur,
            template_radius,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_width == 0 || self.grid_height == 0 {
            return Err(Error::config("sensor.grid", "grid must have at least one cell"));
        }
        for (name, v) in [
            ("sensor.cell_width", self.cell_width),
            ("sensor.cell_height", self.cell_height),
            ("sensor.source_intensity", self.source_intensity),
            ("sensor.noise_power", self.noise_power),
            ("sensor.blur", self.blur),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.source_intensity / self.noise_power).log10()
    }

    pub fn cell_count(&self) -> usize {
        self.grid_width * self.grid_height
    }

    /// Extent of the surveillance region `(width, height)` in metres.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.grid_width as f64 * self.cell_width,
            self.grid_height as f64 * self.cell_height,
        )
    }

    /// Cell nearest to the position of `x` (may lie outside the grid).
    pub fn nearest_cell(&self, x: &SingleState) -> (i64, i64) {
        (
            (x.px / self.cell_width).round() as i64,
            (x.py / self.cell_height).round() as i64,
        )
    }

    /// Cells of the template `U(x)`, clipped to the grid.
    pub fn template(&self, x: &SingleState) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (ca, cb) = self.nearest_cell(x);
        let rho = self.template_radius as i64;
        let (w, h) = (self.grid_width as i64, self.grid_height as i64);
        (cb - rho..=cb + rho)
            .flat_map(move |b| (ca - rho..=ca + rho).map(move |a| (a, b)))
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < w && b < h)
            .map(|(a, b)| (a as usize, b as usize))
    }
}

/// Power contributed by a target at `x` to cell `(a, b)`.
pub fn point_spread(x: &SingleState, cell: (usize, usize), sensor: &SensorModel) -> f64 {
    let dx = sensor.cell_width * cell.0 as f64 - x.px;
    let dy = sensor.cell_height * cell.1 as f64 - x.py;
    let peak = sensor.cell_width * sensor.cell_height * sensor.source_intensity
        / (2.0 * std::f64::consts::PI * sensor.blur);
    peak * (-(dx * dx + dy * dy) / (2.0 * sensor.blur)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    width: usize,
    height: usize,
    /// Scan index `k`.
    pub step: usize,
    data: Vec<f64>,
}

impl ImageFrame {
    pub fn zeros(sensor: &SensorModel, step: usize) -> Self {
        Self {
            width: sensor.grid_width,
            height: sensor.grid_height,
            step,
            data: vec![0.0; sensor.cell_count()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[b * self.width + a]
    }

    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.data[b * self.width + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn matches(&self, sensor: &SensorModel) -> bool {
        self.width == sensor.grid_width && self.height == sensor.grid_height
    }

    /// Grid as CSV, one row per `b`, cells `a = 0..width` left to right.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for b in 0..self.height {
            let row: Vec<String> = (0..self.width).map(|a| format!("{}", self.get(a, b))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Draws one frame. Template contributions of all targets are summed into
/// the cell means; every cell gets independent noise of variance σN.
pub fn generate_frame<R: Rng + ?Sized>(
    truth: &[SingleState],
    sensor: &SensorModel,
    step: usize,
    rng: &mut R,
) -> ImageFrame {
    let mut frame = ImageFrame::zeros(sensor, step);
    for x in truth {
        for cell in sensor.template(x) {
            let v = frame.get(cell.0, cell.1) + point_spread(x, cell, sensor);
            frame.set(cell.0, cell.1, v);
        }
    }
    let noise = Normal::new(0.0, sensor.noise_power.sqrt()).expect("positive noise power");
    for v in &mut frame.data {
        *v += noise.sample(rng);
    }
    frame
}

/// `ln g_z(x) = Σ_{j∈U(x)} (z_j s_j − s_j²/2) / σN`, the log ratio of the
/// target-present and noise-only cell densities over the template.
pub fn log_likelihood_ratio(frame: &ImageFrame, x: &SingleState, sensor: &SensorModel) -> f64 {
    sensor
        .template(x)
        .map(|cell| {
            let s = point_spread(x, cell, sensor);
            let z = frame.get(cell.0, cell.1);
            (z * s - 0.5 * s * s) / sensor.noise_power
        })
        .sum::<f64>()
}

/// Multi-target log likelihood without the state-independent noise factor:
/// the sum of per-target log ratios.
pub fn multi_target_log_likelihood(frame: &ImageFrame, xs: &[SingleState], sensor: &SensorModel) -> f64 {
    xs.iter().map(|x| log_likelihood_ratio(frame, x, sensor)).sum()
}

/// A target alive over `[birth, birth + states.len())` (1-based scan index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTrajectory {
    pub birth: usize,
    pub states: Vec<SingleState>,
}

impl TargetTrajectory {
    pub fn state_at(&self, step: usize) -> Option<SingleState> {
        step.checked_sub(self.birth).and_then(|i| self.states.get(i).copied())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub targets: Vec<TargetTrajectory>,
}

impl GroundTruth {
    /// Noise-free constant-velocity trajectories. Each entry is
    /// `(initial state, birth step, death step)`, with the target alive for
    /// steps `birth..=death`.
    pub fn constant_velocity(specs: &[(SingleState, usize, usize)], period: f64) -> Self {
        let targets = specs
            .iter()
            .map(|&(x0, birth, death)| {
                let states = (0..=death.saturating_sub(birth))
                    .map(|i| {
                        let t = i as f64 * period;
                        SingleState::new(x0.px + x0.vx * t, x0.py + x0.vy * t, x0.vx, x0.vy)
                    })
                    .collect();
                TargetTrajectory { birth, states }
            })
            .collect();
        Self { targets }
    }

    pub fn states_at(&self, step: usize) -> Vec<SingleState> {
        self.targets.iter().filter_map(|t| t.state_at(step)).collect()
    }

    /// Checks that every living target is inside the sensor's region.
    pub fn validate(&self, sensor: &SensorModel, steps: usize) -> Result<()> {
        let (w, h) = sensor.extent();
        for k in 1..=steps {
            for x in self.states_at(k) {
                if !(x.is_finite() && x.px >= 0.0 && x.py >= 0.0 && x.px < w && x.py < h) {
                    return Err(Error::config(
                        "targets",
                        format!("target at ({:.2}, {:.2}) leaves the surveillance region at step {k}", x.px, x.py),
                    ));
                }
            }
        }
        Ok(())
    }
}
