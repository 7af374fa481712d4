//! Desk-scale source space: a cube of voxels under a spherical cap of sensors,
//! with a `1/r^2` lead field.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Voxels per axis.
    pub voxels_per_axis: usize,
    /// Voxel pitch in cm.
    pub pitch: f64,
    pub n_sensors: usize,
    /// Radius of the sensor sphere in cm.
    pub sensor_radius: f64,
    /// Largest polar angle of the sensor cap, in degrees from the +z axis.
    pub cap_angle_deg: f64,
    /// Overall scale of the lead field.
    pub gain: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            voxels_per_axis: 10,
            pitch: 1.0,
            n_sensors: 59,
            sensor_radius: 12.0,
            cap_angle_deg: 110.0,
            gain: 1000.0,
        }
    }
}

/// Voxel positions, sensor positions and the cached lead field.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub config: GridConfig,
    pub voxels: Vec<[f64; 3]>,
    pub sensors: Vec<[f64; 3]>,
    /// Row-major `n_sensors x 3` block per voxel.
    lead: Vec<f64>,
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Points on a spherical cap from a Fibonacci spiral, evenly spread in area.
pub fn sensor_cap(n: usize, radius: f64, cap_angle_deg: f64) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let z_min = cap_angle_deg.to_radians().cos();
    (0..n)
        .map(|i| {
            let z = 1.0 - (1.0 - z_min) * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [radius * r * phi.cos(), radius * r * phi.sin(), radius * z]
        })
        .collect()
}

/// `gain * (s - p) / |s - p|^3` for one sensor and one source position.
pub fn lead_entry(sensor: &[f64; 3], voxel: &[f64; 3], gain: f64) -> Result<[f64; 3]> {
    let d = [sensor[0] - voxel[0], sensor[1] - voxel[1], sensor[2] - voxel[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(r > 0.0) {
        return Err(SmcError::InvalidArgument(
            "sensor coincides with a source position".into(),
        ));
    }
    let r3 = r * r * r;
    Ok([gain * d[0] / r3, gain * d[1] / r3, gain * d[2] / r3])
}

impl VoxelGrid {
    pub fn new(config: GridConfig) -> Result<Self> {
        let n = config.voxels_per_axis;
        if n == 0 || config.n_sensors == 0 {
            return Err(SmcError::InvalidArgument("empty grid".into()));
        }
        let half = 0.5 * (n as f64 - 1.0) * config.pitch;
        let mut voxels = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    voxels.push([
                        i as f64 * config.pitch - half,
                        j as f64 * config.pitch - half,
                        k as f64 * config.pitch - half,
                    ]);
                }
            }
        }
        let sensors = sensor_cap(config.n_sensors, config.sensor_radius, config.cap_angle_deg);
        Self::from_positions(config, voxels, sensors)
    }

    pub fn from_positions(config: GridConfig, voxels: Vec<[f64; 3]>, sensors: Vec<[f64; 3]>) -> Result<Self> {
        let mut lead = Vec::with_capacity(voxels.len() * sensors.len() * 3);
        for v in &voxels {
            for s in &sensors {
                lead.extend_from_slice(&lead_entry(s, v, config.gain)?);
            }
        }
        if lead.iter().any(|x| !x.is_finite()) {
            return Err(SmcError::InvalidArgument("non-finite lead field".into()));
        }
        Ok(Self {
            config,
            voxels,
            sensors,
            lead,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Lead field of voxel `r`: row-major `n_sensors x 3`.
    pub fn lead_field(&self, r: usize) -> Result<&[f64]> {
        if r >= self.n_voxels() {
            return Err(SmcError::OutOfRange {
                index: r,
                len: self.n_voxels(),
            });
        }
        let m = self.n_sensors() * 3;
        Ok(&self.lead[r * m..(r + 1) * m])
    }

    pub fn lead_matrix(&self, r: usize) -> Result<nalgebra::DMatrix<f64>> {
        Ok(nalgebra::DMatrix::from_row_slice(self.n_sensors(), 3, self.lead_field(r)?))
    }

    /// Voxels within `radius` cm of `r`, excluding `r` itself, in index order.
    pub fn neighbors(&self, r: usize, radius: f64) -> Vec<usize> {
        let p = self.voxels[r];
        (0..self.n_voxels())
            .filter(|&v| v != r && distance(&self.voxels[v], &p) <= radius + 1e-9)
            .collect()
    }

    pub fn min_sensor_distance(&self) -> f64 {
        self.voxels
            .iter()
            .flat_map(|v| self.sensors.iter().map(move |s| distance(s, v)))
            .fold(f64::INFINITY, f64::min)
    }
}
