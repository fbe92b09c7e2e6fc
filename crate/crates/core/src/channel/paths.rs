use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::scene::{norm, scale, sub, Aabb, Scene, Vec3, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// One propagation path as seen at the base-station array.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    /// Unitless amplitude gain.
    pub gain: f64,
    /// Propagation delay in seconds.
    pub delay_s: f64,
    /// Unit vector from the array toward the last interaction point.
    pub direction: Vec3,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn total_gain(&self) -> f64 {
        self.paths.iter().map(|p| p.gain).sum()
    }
}

/// Independent random stream for one dataset sample.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform_in(volume: &Aabb, rng: &mut impl Rng) -> Vec3 {
    [0, 1, 2].map(|i| rng.gen_range(volume.min[i]..=volume.max[i]))
}

/// Uniform UE position inside the scene's UE volume.
pub fn sample_ue(scene: &Scene, rng: &mut impl Rng) -> Vec3 {
    uniform_in(&scene.ue_volume, rng)
}

fn free_space_gain(wavelength: f64, distance: f64) -> f64 {
    wavelength / (4.0 * PI * distance)
}

/// Draws the multipath set between `ue` and base station `bs_index`: the
/// line-of-sight path when enabled, and single-bounce paths off scatterers
/// drawn uniformly in the inflated scene box. Scattered paths carry a
/// reflection coefficient uniform in `scene.reflection_range`.
pub fn generate_paths(scene: &Scene, ue: Vec3, bs_index: usize, rng: &mut impl Rng) -> Result<PathSet> {
    if !scene.ue_volume.contains(ue) {
        return Err(Error::Contract(format!("UE {ue:?} outside volume {:?}", scene.ue_volume)));
    }
    let bs = scene
        .base_stations
        .get(bs_index)
        .ok_or_else(|| Error::Contract(format!("no base station {bs_index}")))?
        .position;
    let lambda = scene.carrier_wavelength();
    let mut paths = Vec::with_capacity(scene.path_count);

    let scattered = if scene.los_enabled {
        let los = sub(ue, bs);
        let d = norm(los);
        if d == 0.0 {
            return Err(Error::Contract("UE coincides with base station".into()));
        }
        paths.push(Path {
            gain: free_space_gain(lambda, d),
            delay_s: d / SPEED_OF_LIGHT,
            direction: scale(los, 1.0 / d),
        });
        scene.path_count - 1
    } else {
        scene.path_count
    };

    let box_ = scene.scatter_volume();
    let [rho_lo, rho_hi] = scene.reflection_range;
    for _ in 0..scattered {
        let s = uniform_in(&box_, rng);
        let rho = rng.gen_range(rho_lo..=rho_hi);
        let to_s = sub(s, bs);
        let leg_bs = norm(to_s);
        let total = norm(sub(ue, s)) + leg_bs;
        if leg_bs == 0.0 {
            return Err(Error::Numeric("scatterer drawn on the base station".into()));
        }
        paths.push(Path {
            gain: free_space_gain(lambda, total) * rho,
            delay_s: total / SPEED_OF_LIGHT,
            direction: scale(to_s, 1.0 / leg_bs),
        });
    }
    Ok(PathSet { paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::scene::BaseStation;

    fn one_bs_scene() -> Scene {
        let mut s = Scene::desk();
        s.base_stations = vec![BaseStation {
            position: [0.0, 0.0, 0.0],
            azimuth_rad: 0.0,
        }];
        s.ue_volume = Aabb {
            min: [0.0, 0.0, 0.0],
            max: [200.0, 200.0, 30.0],
        };
        s
    }

    #[test]
    fn los_only_hundred_meters() {
        let mut s = one_bs_scene();
        s.path_count = 1;
        let mut rng = sample_rng(1, 0);
        let set = generate_paths(&s, [100.0, 0.0, 0.0], 0, &mut rng).unwrap();
        assert_eq!(set.paths.len(), 1);
        let p = &set.paths[0];
        let lambda = SPEED_OF_LIGHT / 3.5e9;
        assert!((lambda - 0.0857).abs() < 1e-4);
        assert_eq!(p.gain, lambda / (4.0 * PI * 100.0));
        assert!((p.gain - 6.82e-5).abs() < 1e-7);
        assert!((p.delay_s - 333.6e-9).abs() < 0.1e-9);
        assert_eq!(p.direction, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_paths_and_all_positive() {
        let s = Scene::desk();
        let ue = [50.0, 60.0, 10.0];
        let a = generate_paths(&s, ue, 1, &mut sample_rng(9, 3)).unwrap();
        let b = generate_paths(&s, ue, 1, &mut sample_rng(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.paths.len(), s.path_count);
        for p in &a.paths {
            assert!(p.gain > 0.0 && p.delay_s > 0.0);
            assert!((norm(p.direction) - 1.0).abs() < 1e-12);
        }
        let c = generate_paths(&s, ue, 1, &mut sample_rng(9, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ue_outside_volume_is_rejected() {
        let s = Scene::desk();
        let err = generate_paths(&s, [-1.0, 0.0, 0.0], 0, &mut sample_rng(0, 0)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn scattered_paths_are_weaker_and_later_than_los() {
        let s = Scene::desk();
        for i in 0..50 {
            let mut rng = sample_rng(2, i);
            let ue = sample_ue(&s, &mut rng);
            let set = generate_paths(&s, ue, 0, &mut rng).unwrap();
            let los = &set.paths[0];
            for p in &set.paths[1..] {
                assert!(p.delay_s >= los.delay_s);
                assert!(p.gain < los.gain);
            }
        }
    }

    #[test]
    fn ue_samples_fill_the_box_uniformly() {
        let s = Scene::desk();
        let mut rng = sample_rng(5, 0);
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            let p = sample_ue(&s, &mut rng);
            assert!(s.ue_volume.contains(p));
            for i in 0..3 {
                sums[i] += p[i];
            }
        }
        let c = s.ue_volume.center();
        let e = s.ue_volume.extent();
        for i in 0..3 {
            // sd of a uniform on [a, b] is (b - a) / sqrt(12)
            let se = e[i] / 12f64.sqrt() / (n as f64).sqrt();
            assert!((sums[i] / n as f64 - c[i]).abs() < 3.0 * se, "axis {i}");
        }
        assert_eq!(sample_ue(&s, &mut sample_rng(5, 7)), sample_ue(&s, &mut sample_rng(5, 7)));
    }
}
