use std::f64::consts::PI;

use num_complex::Complex64;

use super::paths::PathSet;
use super::scene::{dot, norm, Scene, Vec3, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Complex channel responses, shape `L × M × N`, row-major with the subcarrier
/// index fastest. `Complex64` is `(re, im)` in memory, so the buffer is the
/// interleaved real/imaginary layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiTensor {
    bs: usize,
    antennas: usize,
    subcarriers: usize,
    data: Vec<Complex64>,
}

impl CsiTensor {
    pub fn zeros(bs: usize, antennas: usize, subcarriers: usize) -> Self {
        Self {
            bs,
            antennas,
            subcarriers,
            data: vec![Complex64::new(0.0, 0.0); bs * antennas * subcarriers],
        }
    }

    pub fn from_vec(bs: usize, antennas: usize, subcarriers: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != bs * antennas * subcarriers {
            return Err(Error::shape("csi", &[bs, antennas, subcarriers], &[data.len()]));
        }
        Ok(Self {
            bs,
            antennas,
            subcarriers,
            data,
        })
    }

    /// `(L, M, N)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.bs, self.antennas, self.subcarriers)
    }

    fn offset(&self, l: usize, m: usize, n: usize) -> usize {
        (l * self.antennas + m) * self.subcarriers + n
    }

    pub fn get(&self, l: usize, m: usize, n: usize) -> Complex64 {
        self.data[self.offset(l, m, n)]
    }

    pub fn set(&mut self, l: usize, m: usize, n: usize, v: Complex64) {
        let i = self.offset(l, m, n);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Slice of base station `l`, `M × N`.
    pub fn bs_slice(&self, l: usize) -> &[Complex64] {
        let len = self.antennas * self.subcarriers;
        &self.data[l * len..(l + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Rounds every component to single precision, the on-disk resolution.
    pub fn quantize_f32(&mut self) {
        for z in &mut self.data {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
    }
}

/// `f_k = f_c + (k - N/2) Δf` for `k = 1..=N`; entry `k - 1` of the result.
pub fn subcarrier_frequencies(carrier_hz: f64, spacing_hz: f64, n: usize) -> Vec<f64> {
    let half = n as f64 / 2.0;
    (1..=n).map(|k| carrier_hz + (k as f64 - half) * spacing_hz).collect()
}

/// Plane-wave phase signature `exp(-j 2π <offset_m, direction> / λ)`.
pub fn steering_vector(offsets: &[Vec3], direction: Vec3, wavelength: f64) -> Result<Vec<Complex64>> {
    let n = norm(direction);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Contract("steering direction must be a nonzero vector".into()));
    }
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("steering direction must be unit length, |d| = {n}")));
    }
    Ok(offsets
        .iter()
        .map(|o| Complex64::from_polar(1.0, -2.0 * PI * dot(*o, direction) / wavelength))
        .collect())
}

/// Sums every path's delayed, steered contribution on each subcarrier:
/// `H[l, m, k] = Σ_p a_p exp(-j 2π f_k τ_p) a_m(dir_p; c / f_k)`.
pub fn synthesize_csi(scene: &Scene, paths: &[PathSet]) -> Result<CsiTensor> {
    let (l_count, m_count, n_count) = (scene.bs_count(), scene.antenna_count(), scene.n_subcarriers);
    if paths.len() != l_count {
        return Err(Error::Contract(format!(
            "need one path set per base station: {} sets for {} stations",
            paths.len(),
            l_count
        )));
    }
    let freqs = subcarrier_frequencies(scene.carrier_hz, scene.subcarrier_spacing_hz, n_count);
    let wavelengths: Vec<f64> = freqs.iter().map(|f| SPEED_OF_LIGHT / f).collect();
    let mut csi = CsiTensor::zeros(l_count, m_count, n_count);
    let mut delay_phasor = vec![Complex64::new(0.0, 0.0); n_count];

    for (l, set) in paths.iter().enumerate() {
        let offsets = scene.element_offsets(l);
        for path in &set.paths {
            for (ph, f) in delay_phasor.iter_mut().zip(&freqs) {
                *ph = Complex64::from_polar(path.gain, -2.0 * PI * f * path.delay_s);
            }
            for (m, o) in offsets.iter().enumerate() {
                let proj = dot(*o, path.direction);
                let row = &mut csi.data[(l * m_count + m) * n_count..(l * m_count + m + 1) * n_count];
                for ((h, ph), lambda) in row.iter_mut().zip(&delay_phasor).zip(&wavelengths) {
                    *h += ph * Complex64::from_polar(1.0, -2.0 * PI * proj / lambda);
                }
            }
        }
    }
    Ok(csi)
}
