use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::{generate_dataset, Aabb, ArraySpec, Scene};
use crate::model::ModelConfig;

fn small_scene() -> Scene {
    let mut scene = Scene::desk();
    scene.array = ArraySpec {
        rows: 1,
        cols: 1,
        spacing_wavelengths: 0.5,
    };
    scene.n_subcarriers = 24;
    scene
}

#[test]
fn euclidean_examples() {
    assert_eq!(euclidean_error([1.5, -2.0, 7.0], [1.5, -2.0, 7.0]), 0.0);
    assert_eq!(euclidean_error([3.0, 4.0, 0.0], [0.0; 3]), 5.0);
    assert_eq!(euclidean_error([1.0, 2.0, 2.0], [0.0; 3]), 3.0);
}

#[test]
fn percentile_examples() {
    let e = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(percentile(&e, 50.0).unwrap(), 2.5);
    assert_eq!(percentile(&e, 100.0).unwrap(), 4.0);
    assert_eq!(percentile(&e, 0.0).unwrap(), 1.0);
    assert!(matches!(percentile(&[], 50.0), Err(Error::Contract(_))));
    assert!(matches!(error_cdf(&[]), Err(Error::Contract(_))));
}

#[test]
fn cdf_of_equal_errors_is_one_step() {
    assert_eq!(error_cdf(&[2.0; 5]).unwrap(), vec![(2.0, 1.0)]);
    assert_eq!(error_cdf(&[3.0, 1.0]).unwrap(), vec![(1.0, 0.5), (3.0, 1.0)]);
}

#[test]
fn spearman_examples() {
    let k = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(spearman(&k, &[9.0, 7.0, 4.0, 1.0]).unwrap(), -1.0);
    assert_eq!(spearman(&k, &[1.0, 5.0, 6.0, 60.0]).unwrap(), 1.0);
    assert_eq!(spearman(&k, &[3.0; 4]).unwrap(), 0.0);
    assert!(spearman(&k, &k[..3]).is_err());
}

#[test]
fn hotspot_single_sample() {
    let volume = Aabb {
        min: [0.0; 3],
        max: [100.0, 50.0, 10.0],
    };
    let g = hotspot_grid(&[[35.0, 12.0, 3.0]], &[4.5], &volume, 10.0).unwrap();
    assert_eq!((g.nx, g.ny), (10, 5));
    assert_eq!(g.occupied(), 1);
    assert_eq!(g.mean(3, 1), Some(4.5));
    let csv = g.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("y\\x,5,15,"));
    assert_eq!(lines[2].split(',').nth(4), Some("4.5"));
    assert_eq!(lines[2].split(',').filter(|c| *c == "NA").count(), 9);
}

#[test]
fn hotspot_uniform_occupancy_and_weighted_mean() {
    let volume = Scene::desk().ue_volume;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let positions: Vec<Vec3> = (0..20_000)
        .map(|_| [rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0), rng.gen_range(0.0..30.0)])
        .collect();
    let errors: Vec<f64> = (0..20_000).map(|_| rng.gen_range(0.0..40.0)).collect();
    let g = hotspot_grid(&positions, &errors, &volume, 10.0).unwrap();
    assert_eq!((g.nx, g.ny), (20, 20));
    assert!(g.occupied() as f64 >= 0.95 * 400.0);

    let mut weighted = 0.0;
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            if let Some(m) = g.mean(ix, iy) {
                weighted += m * g.counts[iy * g.nx + ix] as f64;
            }
        }
    }
    let global = mean(&errors).unwrap();
    assert!((weighted / 20_000.0 - global).abs() < 1e-9);
}

#[test]
fn report_curve_and_grid_agree() {
    let scene = small_scene();
    let ds = generate_dataset(&scene, 30, 2, 1).unwrap();
    let cfg = ModelConfig {
        d_k: 6,
        lstm_hidden: 6,
        mlp_hidden: 6,
        ..ModelConfig::new(4, 1, 24)
    };
    let params = ModelParams::init(&cfg, 3).unwrap();
    let norm = Normalizer::from_header(&ds.header);
    let preds = predict_dataset(&params, &cfg, &norm, &ds, 1).unwrap();
    assert_eq!(preds.subcarriers(), 24);

    let report = build_report(&preds, &ds, &cfg, "untrained", "abc").unwrap();
    assert_eq!(report.samples, 30);
    assert_eq!(report.variant, cfg.variant);
    assert!(report.cdf.windows(2).all(|w| w[0][0] < w[1][0] && w[0][1] < w[1][1]));
    assert_eq!(report.cdf.last().unwrap()[1], 1.0);
    assert!(report.median_m <= report.p90_m);

    let curve = accumulation_curve(&preds, 10).unwrap();
    let ks: Vec<usize> = curve.iter().map(|p| p.k).collect();
    assert_eq!(ks, vec![10, 20, 24]);
    assert_eq!(curve.last().unwrap().mean_error_m, report.mean_m);
    assert_eq!(curve_csv(&curve).lines().count(), 4);
    assert!(accumulation_curve(&preds, 0).is_err());

    let grid = hotspot_grid_for(&preds, &ds.header.ue_volume, 50.0).unwrap();
    assert_eq!(grid.counts.iter().sum::<usize>(), 30);

    // parallel evaluation is the same computation
    let again = predict_dataset(&params, &cfg, &norm, &ds, 3).unwrap();
    assert_eq!(again.per_subcarrier, preds.per_subcarrier);

    let wrong = ModelConfig::new(3, 1, 24);
    let p3 = ModelParams::init(&wrong, 0).unwrap();
    assert!(matches!(predict_dataset(&p3, &wrong, &norm, &ds, 1), Err(Error::Config(_))));
}

#[test]
fn untrained_curve_is_roughly_flat() {
    let scene = small_scene();
    let ds = generate_dataset(&scene, 200, 4, 1).unwrap();
    let cfg = ModelConfig::new(4, 1, 24);
    let params = ModelParams::init(&cfg, 8).unwrap();
    let preds = predict_dataset(&params, &cfg, &Normalizer::from_header(&ds.header), &ds, 1).unwrap();
    let curve = accumulation_curve(&preds, 4).unwrap();
    let (lo, hi) = curve.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.mean_error_m), hi.max(p.mean_error_m))
    });
    // no information is being accumulated, so the curve stays within a band
    assert!(hi / lo < 1.5, "{curve:?}");
}

#[test]
fn ablation_pairs_reports() {
    let scene = small_scene();
    let ds = generate_dataset(&scene, 40, 5, 1).unwrap();
    let test = generate_dataset(&scene, 10, 6, 1).unwrap();
    let (tr, val) = crate::train::split_validation(&ds, 8).unwrap();
    let cfg = ModelConfig {
        d_k: 4,
        lstm_hidden: 4,
        mlp_hidden: 4,
        ..ModelConfig::new(4, 1, 24)
    };
    let train = crate::train::TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..Default::default()
    };
    let a = ablate(&tr, &val, &test, &cfg, &train, &Default::default()).unwrap();
    let r = &a.report;
    assert_eq!(r.cma.variant, Variant::Cma);
    assert_eq!(r.plain.variant, Variant::Plain);
    assert_eq!(r.cma.dataset_checksum, r.plain.dataset_checksum);
    assert_eq!(r.summary.median_delta_m, r.plain.median_m - r.cma.median_m);
    assert_ne!(r.cma.checkpoint_id, r.plain.checkpoint_id);
    let json = serde_json::to_string(r).unwrap();
    assert_eq!(serde_json::from_str::<AblationReport>(&json).unwrap(), *r);
}

proptest! {
    #[test]
    fn percentiles_are_monotone(errors in prop::collection::vec(0.0f64..100.0, 1..40), q1 in 0.0f64..100.0, q2 in 0.0f64..100.0) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = percentile(&errors, lo).unwrap();
        let b = percentile(&errors, hi).unwrap();
        prop_assert!(a <= b);
        let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = errors.iter().cloned().fold(0.0, f64::max);
        prop_assert!(min <= a && b <= max);
    }

    #[test]
    fn cdf_is_monotone_in_unit_range(errors in prop::collection::vec(0.0f64..10.0, 1..40)) {
        let cdf = error_cdf(&errors).unwrap();
        prop_assert!(cdf.iter().all(|(_, p)| *p > 0.0 && *p <= 1.0));
        prop_assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
    }
}
