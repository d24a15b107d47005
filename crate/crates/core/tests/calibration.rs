use communitypoll_core::calibration::{
    calibrate, calibrate_grouped, calibrate_scores, coverage_simulation, predict_interval, read_pairs_csv,
    CalibrationPair, CoverageConfig, Grouping, NoiseModel,
};
use proptest::prelude::*;

fn pair(q: &str, y_hat: f64, y: f64) -> CalibrationPair {
    CalibrationPair { community_id: "c1".into(), question_id: q.into(), option_id: "o".into(), y_hat, y }
}

/// Conformal rank for alpha = per_mille / 1000 in exact integers.
fn oracle_rank(n: usize, per_mille: usize) -> usize {
    ((n + 1) * (1000 - per_mille)).div_ceil(1000)
}

#[test]
fn quantile_examples() {
    let m = calibrate_scores(vec![0.05, 0.02, 0.07], 0.25).unwrap();
    assert_eq!(m.q_hat, Some(0.07));
    assert_eq!(m.scores, [0.02, 0.05, 0.07]);
    let m = calibrate_scores(vec![0.05, 0.02, 0.07], 0.05).unwrap();
    assert_eq!(m.q_hat, None);
    assert_eq!(m.threshold(), f64::INFINITY);
    let same: Vec<CalibrationPair> = (0..20).map(|i| pair("q12", i as f64 / 20.0, i as f64 / 20.0)).collect();
    assert_eq!(calibrate(&same, 0.1).unwrap().q_hat, Some(0.0));
}

#[test]
fn interval_examples() {
    let m = calibrate_scores(vec![0.02, 0.05, 0.07], 0.25).unwrap();
    let iv = predict_interval(&m, 0.40).unwrap();
    assert!((iv.lo - 0.33).abs() < 1e-12 && (iv.hi - 0.47).abs() < 1e-12, "{iv:?}");
    let zero = calibrate_scores(vec![0.0; 10], 0.2).unwrap();
    let iv = predict_interval(&zero, 0.6).unwrap();
    assert_eq!((iv.lo, iv.hi), (0.6, 0.6));
    let vacuous = calibrate_scores(vec![0.1], 0.1).unwrap();
    let iv = predict_interval(&vacuous, 0.3).unwrap();
    assert_eq!((iv.lo, iv.hi), (0.0, 1.0));
    assert!(predict_interval(&m, 1.2).is_err());
    assert!(predict_interval(&m, -0.01).is_err());
}

#[test]
fn domain_errors() {
    assert!(calibrate(&[], 0.1).is_err());
    assert!(calibrate(&[pair("q", 0.5, 0.5)], 0.0).is_err());
    assert!(calibrate(&[pair("q", 0.5, 0.5)], 1.0).is_err());
    assert!(calibrate(&[pair("q", 1.5, 0.5)], 0.1).is_err());
}

#[test]
fn pooled_and_per_question() {
    let pairs: Vec<CalibrationPair> = (0..10)
        .map(|i| pair("q01", 0.5, 0.5 + i as f64 / 100.0))
        .chain((0..10).map(|i| pair("q12", 0.5, 0.5 - i as f64 / 20.0)))
        .collect();
    let pooled = calibrate_grouped(&pairs, 0.2, Grouping::Pooled).unwrap();
    let per = calibrate_grouped(&pairs, 0.2, Grouping::PerQuestion).unwrap();
    assert_eq!(pooled.models.len(), 1);
    assert_eq!(per.models.len(), 2);
    let a = per.predict("q01", 0.5).unwrap();
    let b = per.predict("q12", 0.5).unwrap();
    assert!(a.hi - a.lo < b.hi - b.lo);
    assert_eq!(pooled.predict("q01", 0.5).unwrap(), pooled.predict("q12", 0.5).unwrap());
    assert!(per.predict("q05", 0.5).is_err());
}

#[test]
fn pairs_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    std::fs::write(
        &path,
        "community_id,question_id,option_id,y_hat,y\ntaylor,q12,Neutral,0.542,0.50\ntaylor, q12 ,Support,0.355,0.40\n",
    )
    .unwrap();
    let ps = read_pairs_csv(&path).unwrap();
    assert_eq!(ps.len(), 2);
    assert_eq!(ps[1].question_id, "q12");
    assert!((ps[0].score() - 0.042).abs() < 1e-12);
    std::fs::write(&path, "community_id,question_id,option_id,y_hat,y\nt,q12,N,0.5,1.3\n").unwrap();
    let err = read_pairs_csv(&path).unwrap_err().to_string();
    assert!(err.contains("row 2"), "{err}");
}

proptest! {
    #[test]
    fn rank_matches_integer_oracle(scores in prop::collection::vec(0.0f64..1.0, 1..200), per_mille in 1usize..1000) {
        let alpha = per_mille as f64 / 1000.0;
        let m = calibrate_scores(scores.clone(), alpha).unwrap();
        let k = oracle_rank(scores.len(), per_mille);
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = (k <= sorted.len()).then(|| sorted[k - 1]);
        prop_assert_eq!(m.q_hat, expected);
    }

    #[test]
    fn q_hat_nonincreasing_in_alpha(scores in prop::collection::vec(0.0f64..1.0, 1..100), a in 0.001f64..0.998, d in 0.0f64..0.5) {
        let b = (a + d).min(0.999);
        let lo = calibrate_scores(scores.clone(), a).unwrap().threshold();
        let hi = calibrate_scores(scores, b).unwrap().threshold();
        prop_assert!(hi <= lo);
    }

    #[test]
    fn width_is_constant_inside_unit(scores in prop::collection::vec(0.0f64..0.3, 10..60), y1 in 0.3f64..0.7, y2 in 0.3f64..0.7) {
        let m = calibrate_scores(scores, 0.2).unwrap();
        let q = m.q_hat.unwrap();
        let (a, b) = (predict_interval(&m, y1).unwrap(), predict_interval(&m, y2).unwrap());
        prop_assert!(((a.hi - a.lo) - 2.0 * q).abs() < 1e-12);
        prop_assert!(((b.hi - b.lo) - 2.0 * q).abs() < 1e-12);
    }
}

#[test]
fn coverage_meets_bound_and_tracks_exact_rate() {
    for alpha in [0.05, 0.1] {
        for n_cal in [19, 49, 99] {
            let cfg = CoverageConfig { alpha, n_cal, trials: 10_000, noise: NoiseModel::Gaussian { sd: 0.05 }, seed: 2024 };
            let r = coverage_simulation(&cfg).unwrap();
            assert!(r.meets_bound(), "alpha {alpha} n {n_cal}: {r:?}");
            // Continuous scores give marginal coverage exactly k / (n + 1).
            let per_mille = (alpha * 1000.0).round() as usize;
            let exact = oracle_rank(n_cal, per_mille) as f64 / (n_cal + 1) as f64;
            let se = (exact * (1.0 - exact) / 10_000.0).sqrt();
            assert!((r.coverage - exact).abs() <= 4.0 * se, "alpha {alpha} n {n_cal}: {} vs {exact}", r.coverage);
        }
    }
}

#[test]
fn perfect_estimator_always_covers() {
    let cfg = CoverageConfig { alpha: 0.1, n_cal: 49, trials: 2_000, noise: NoiseModel::None, seed: 1 };
    assert_eq!(coverage_simulation(&cfg).unwrap().coverage, 1.0);
}

#[test]
fn half_alpha_with_symmetric_noise() {
    let cfg = CoverageConfig { alpha: 0.5, n_cal: 49, trials: 10_000, noise: NoiseModel::Uniform { half_width: 0.1 }, seed: 5 };
    let r = coverage_simulation(&cfg).unwrap();
    assert!(r.meets_bound(), "{r:?}");
    assert!(r.coverage < 0.6, "{r:?}");
}

#[test]
fn small_calibration_set_is_vacuous() {
    let cfg = CoverageConfig { alpha: 0.05, n_cal: 10, trials: 500, noise: NoiseModel::Gaussian { sd: 0.1 }, seed: 3 };
    let r = coverage_simulation(&cfg).unwrap();
    assert_eq!((r.vacuous, r.coverage), (500, 1.0));
}

#[test]
fn simulation_is_seeded() {
    let cfg = CoverageConfig { alpha: 0.1, n_cal: 19, trials: 3_000, noise: NoiseModel::Gaussian { sd: 0.05 }, seed: 77 };
    assert_eq!(coverage_simulation(&cfg).unwrap(), coverage_simulation(&cfg).unwrap());
}
