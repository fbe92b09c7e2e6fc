use std::f64::consts::PI;

use num_complex::Complex64;

use super::*;

#[test]
fn subcarrier_grid() {
    let f = subcarrier_frequencies(1e9, 15e3, 4);
    assert_eq!(f[0], 999_985_000.0);
    assert_eq!(f[1], 1e9); // k = N/2
    let s = Scene::full_scale();
    let f = subcarrier_frequencies(s.carrier_hz, s.subcarrier_spacing_hz, s.n_subcarriers);
    assert_eq!(f.len(), 288);
    assert_eq!(f[143], 3.5e9);
    assert!((s.subcarrier_spacing_hz - 69_444.444_444).abs() < 1e-3);
    assert_eq!(f[287], 3.5e9 + 144.0 * s.subcarrier_spacing_hz);
}

#[test]
fn steering_examples() {
    let lambda = 0.1;
    let broadside = steering_vector(&[[0.0, 0.05, 0.0], [0.0, 0.0, 0.05]], [1.0, 0.0, 0.0], lambda).unwrap();
    assert!(broadside.iter().all(|z| *z == Complex64::new(1.0, 0.0)));

    let v = steering_vector(&[[lambda / 2.0, 0.0, 0.0]], [1.0, 0.0, 0.0], lambda).unwrap();
    assert!((v[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);

    assert!(matches!(
        steering_vector(&[[0.0; 3]], [0.0; 3], lambda),
        Err(Error::Contract(_))
    ));

    let s = Scene::full_scale();
    let mut rng = sample_rng(3, 0);
    for l in 0..s.bs_count() {
        let ue = sample_ue(&s, &mut rng);
        let set = generate_paths(&s, ue, l, &mut rng).unwrap();
        for p in &set.paths {
            let v = steering_vector(&s.element_offsets(l), p.direction, 0.07).unwrap();
            assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }
}

fn single_antenna_scene(n: usize) -> Scene {
    let mut s = Scene::desk();
    s.base_stations.truncate(1);
    s.array = ArraySpec {
        rows: 1,
        cols: 1,
        spacing_wavelengths: 0.5,
    };
    s.n_subcarriers = n;
    s
}

#[test]
fn single_los_path_has_flat_magnitude() {
    let s = single_antenna_scene(16);
    let set = PathSet {
        paths: vec![PropagationPath {
            gain: 3e-5,
            delay_s: 4.2e-7,
            direction: [0.6, 0.8, 0.0],
        }],
    };
    let h = synthesize_csi(&s, &[set]).unwrap();
    for k in 0..16 {
        assert!((h.get(0, 0, k).norm() - 3e-5).abs() < 1e-18);
    }
}

#[test]
fn half_inverse_spacing_delay_flips_phase_per_subcarrier() {
    let s = single_antenna_scene(8);
    let tau = 2.5e-7;
    let path = |delay_s| PathSet {
        paths: vec![PropagationPath {
            gain: 1.0,
            delay_s,
            direction: [1.0, 0.0, 0.0],
        }],
    };
    let h1 = synthesize_csi(&s, &[path(tau)]).unwrap();
    let h2 = synthesize_csi(&s, &[path(tau + 0.5 / s.subcarrier_spacing_hz)]).unwrap();
    for k in 0..7 {
        let rel_k = h2.get(0, 0, k) / h1.get(0, 0, k);
        let rel_next = h2.get(0, 0, k + 1) / h1.get(0, 0, k + 1);
        // rotation of the second path relative to the first grows by π per step
        let step = (rel_next / rel_k).arg();
        assert!((step.abs() - PI).abs() < 1e-6, "step {step}");
    }
}

#[test]
fn magnitudes_bounded_by_total_gain() {
    let s = Scene::desk();
    for i in 0..20 {
        let mut rng = sample_rng(8, i);
        let ue = sample_ue(&s, &mut rng);
        let sets: Vec<PathSet> = (0..s.bs_count())
            .map(|l| generate_paths(&s, ue, l, &mut rng).unwrap())
            .collect();
        let h = synthesize_csi(&s, &sets).unwrap();
        for (l, set) in sets.iter().enumerate() {
            let bound = set.total_gain() * (1.0 + 1e-12);
            assert!(h.bs_slice(l).iter().all(|z| z.norm() <= bound));
        }
    }
}

#[test]
fn path_set_count_must_match_stations() {
    let s = Scene::desk();
    assert!(matches!(synthesize_csi(&s, &[]), Err(Error::Contract(_))));
}

#[test]
fn dataset_generation_is_deterministic_across_workers() {
    let s = Scene::desk();
    let one = generate_dataset(&s, 10, 42, 1).unwrap();
    let eight = generate_dataset(&s, 10, 42, 8).unwrap();
    assert_eq!(one.to_bytes(), eight.to_bytes());
    let again = generate_dataset(&s, 10, 42, 1).unwrap();
    assert_eq!(one.to_bytes(), again.to_bytes());
    let other = generate_dataset(&s, 10, 43, 1).unwrap();
    assert_ne!(one.to_bytes(), other.to_bytes());
    assert!(one.header.scale > 0.0);
    assert_eq!(one.header.bs_positions.len(), 4);
    assert!(matches!(generate_dataset(&s, 0, 1, 1), Err(Error::Contract(_))));
}
