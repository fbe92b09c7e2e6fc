use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        [0, 1, 2].map(|i| 0.5 * (self.min[i] + self.max[i]))
    }

    pub fn extent(&self) -> Vec3 {
        [0, 1, 2].map(|i| self.max[i] - self.min[i])
    }

    /// Grows the box by `margin` on each horizontal side.
    pub fn inflate_horizontal(&self, margin: f64) -> Aabb {
        Aabb {
            min: [self.min[0] - margin, self.min[1] - margin, self.min[2]],
            max: [self.max[0] + margin, self.max[1] + margin, self.max[2]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    /// Array phase center in meters.
    pub position: Vec3,
    /// Boresight azimuth in radians, counter-clockwise from +x.
    pub azimuth_rad: f64,
}

/// Uniform planar array: `cols` elements along the horizontal axis orthogonal
/// to boresight, `rows` elements along +z.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing_wavelengths: f64,
}

impl ArraySpec {
    pub fn element_count(&self) -> usize {
        self.rows * self.cols
    }
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 4,
            spacing_wavelengths: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub base_stations: Vec<BaseStation>,
    pub array: ArraySpec,
    pub ue_volume: Aabb,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    /// Total propagation paths per link, LOS included.
    pub path_count: usize,
    pub los_enabled: bool,
    /// Horizontal inflation of the UE volume that bounds scatterer positions.
    pub scatter_margin_m: f64,
    pub reflection_range: [f64; 2],
    pub seed: u64,
}

impl Scene {
    /// Six base stations around a 220 m × 300 m area, 2×4 UPA at half-wavelength
    /// spacing, 3.5 GHz carrier, 288 subcarriers over 20 MHz.
    pub fn full_scale() -> Self {
        let (w, h) = (220.0, 300.0);
        let sites = [
            [-20.0, -20.0],
            [w + 20.0, -20.0],
            [w + 20.0, h / 2.0],
            [w + 20.0, h + 20.0],
            [-20.0, h + 20.0],
            [-20.0, h / 2.0],
        ];
        Self::around_box(&sites, w, h, ArraySpec::default(), 288, 5)
    }

    /// Four corner base stations around a 200 m × 200 m area, 2×2 UPA,
    /// 64 subcarriers over 20 MHz.
    pub fn desk() -> Self {
        let (w, h) = (200.0, 200.0);
        let sites = [[-20.0, -20.0], [w + 20.0, -20.0], [w + 20.0, h + 20.0], [-20.0, h + 20.0]];
        let array = ArraySpec {
            rows: 2,
            cols: 2,
            spacing_wavelengths: 0.5,
        };
        Self::around_box(&sites, w, h, array, 64, 5)
    }

    fn around_box(sites: &[[f64; 2]], w: f64, h: f64, array: ArraySpec, n: usize, paths: usize) -> Self {
        let ue_volume = Aabb {
            min: [0.0, 0.0, 0.0],
            max: [w, h, 30.0],
        };
        let center = ue_volume.center();
        let base_stations = sites
            .iter()
            .map(|s| BaseStation {
                position: [s[0], s[1], 25.0],
                azimuth_rad: (center[1] - s[1]).atan2(center[0] - s[0]),
            })
            .collect();
        Self {
            base_stations,
            array,
            ue_volume,
            carrier_hz: 3.5e9,
            subcarrier_spacing_hz: 20e6 / n as f64,
            n_subcarriers: n,
            path_count: paths,
            los_enabled: true,
            scatter_margin_m: 50.0,
            reflection_range: [0.1, 0.6],
            seed: 0,
        }
    }

    /// Points every station's array at the center of the UE volume.
    pub fn aim_at_center(&mut self) {
        let c = self.ue_volume.center();
        for b in &mut self.base_stations {
            b.azimuth_rad = (c[1] - b.position[1]).atan2(c[0] - b.position[0]);
        }
    }

    pub fn bs_count(&self) -> usize {
        self.base_stations.len()
    }

    pub fn antenna_count(&self) -> usize {
        self.array.element_count()
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn scatter_volume(&self) -> Aabb {
        self.ue_volume.inflate_horizontal(self.scatter_margin_m)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.base_stations.is_empty() {
            return fail("scene needs at least one base station".into());
        }
        if self.n_subcarriers < 2 {
            return fail(format!("need N >= 2 subcarriers, got {}", self.n_subcarriers));
        }
        if self.path_count < 1 {
            return fail("need at least one propagation path".into());
        }
        if !(self.subcarrier_spacing_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return fail("carrier and subcarrier spacing must be positive".into());
        }
        if self.array.rows == 0 || self.array.cols == 0 || !(self.array.spacing_wavelengths > 0.0) {
            return fail(format!("degenerate antenna array {:?}", self.array));
        }
        if (0..3).any(|i| !(self.ue_volume.max[i] > self.ue_volume.min[i])) {
            return fail(format!("degenerate UE volume {:?}", self.ue_volume));
        }
        let [lo, hi] = self.reflection_range;
        if !(lo > 0.0 && hi >= lo) {
            return fail(format!("bad reflection range [{lo}, {hi}]"));
        }
        if self.scatter_margin_m < 0.0 {
            return fail("scatter margin must be non-negative".into());
        }
        Ok(())
    }

    /// Element positions of base station `bs_index` relative to its phase
    /// center, index `m = row * cols + col`.
    pub fn element_offsets(&self, bs_index: usize) -> Vec<Vec3> {
        let az = self.base_stations[bs_index].azimuth_rad;
        let d = self.array.spacing_wavelengths * self.carrier_wavelength();
        let horizontal = [-az.sin(), az.cos(), 0.0];
        let mut out = Vec::with_capacity(self.antenna_count());
        for r in 0..self.array.rows {
            for c in 0..self.array.cols {
                let h = scale(horizontal, c as f64 * d);
                out.push([h[0], h[1], h[2] + r as f64 * d]);
            }
        }
        out
    }
}

impl Default for Scene {
    fn default() -> Self {
        Self::full_scale()
    }
}
