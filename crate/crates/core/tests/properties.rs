//! Cross-module properties: spectral bounds, cover identities, walk statistics.

use kikuchi::cover::{find_distinct_nontrivial_covers, find_good_closed_walk, WalkStats};
use kikuchi::instance::generate;
use kikuchi::ring::{mul_mod, rho_gaussian, sample_lpn_noise};
use kikuchi::spectral::estimate_spectral_norm;
use kikuchi::{AttackParams, KikuchiGraph, Mode, NoiseSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_at_most_max_degree(seed in any::<u64>(), q in 2u32..5, k in 1usize..4) {
        let p = AttackParams::new(6, k, q, 12, 2, NoiseSpec::Uniform);
        let inst = generate(&p, Mode::Random, &mut rng(seed)).unwrap();
        let g = KikuchiGraph::new(&inst, 2).unwrap();
        let max_deg = g.space().iter().map(|v| g.out_degree(&v)).max().unwrap();
        let est = estimate_spectral_norm(&inst, 2, &p.tunables, &mut rng(seed ^ 7)).unwrap();
        prop_assert!(est.estimate <= max_deg as f64 + 1e-9, "{} > {}", est.estimate, max_deg);
    }

    #[test]
    fn gaussian_bias_lower_bound(q in 2u32..64, r in 0.2f64..12.0) {
        let rho = rho_gaussian(q, r).unwrap();
        let bound = (-std::f64::consts::PI * r * r / (q as f64 * q as f64)).exp();
        prop_assert!(rho >= bound * (1.0 - 1e-9), "q={} r={}: {} < {}", q, r, rho, bound);
        prop_assert!((0.0..=1.0).contains(&rho));
    }
}

#[test]
fn planted_statistic_grows_with_m() {
    let mut last = 0.0;
    for m in [30, 60, 120] {
        let p = AttackParams::new(8, 2, 3, m, 2, NoiseSpec::Noiseless);
        let inst = generate(&p, Mode::Planted, &mut rng(m as u64)).unwrap();
        let est = estimate_spectral_norm(&inst, 2, &p.tunables, &mut rng(1)).unwrap().estimate;
        assert!(est > last, "m={m}: {est} <= {last}");
        last = est;
    }
}

#[test]
fn planted_cover_value_is_noise_combination() {
    let mut p = AttackParams::new(6, 2, 101, 1500, 1, NoiseSpec::Gaussian { r: 2.0 });
    p.tunables.walk_length = Some(1);
    p.tunables.cover_target = Some(6);
    let inst = generate(&p, Mode::Planted, &mut rng(12)).unwrap();
    let g = KikuchiGraph::new(&inst, 1).unwrap();
    let covers = find_distinct_nontrivial_covers(&g, &p.tunables, &mut rng(13)).unwrap().covers;
    assert!(!covers.is_empty());
    let noise = &inst.ground_truth().unwrap().noise;
    for c in &covers {
        // the secret cancels: c^T β = c^T e
        let ce = c.entries.iter().fold(0u64, |acc, &(i, ci)| acc + mul_mod(ci, noise[i], 101) as u64) % 101;
        assert_eq!(c.dot_rhs(&inst) as u64, ce);
        assert!(c.l1(101) <= 2);
    }
}

#[test]
fn nonzero_lpn_noise_is_invariant_under_scaling() {
    // η uniform on the nontrivial roots; η^s has the same law for s ≠ 0
    let q = 7u32;
    let mut r = rng(21);
    let draws: Vec<u32> =
        std::iter::repeat_with(|| sample_lpn_noise(q, 0.5, &mut r).unwrap()).filter(|&e| e != 0).take(60_000).collect();
    let chi = ChiSquared::new((q - 2) as f64).unwrap();
    for s in 1..q {
        let mut counts = vec![0f64; q as usize];
        for &e in &draws {
            counts[mul_mod(s, e, q) as usize] += 1.0;
        }
        assert_eq!(counts[0], 0.0);
        let expect = draws.len() as f64 / (q - 1) as f64;
        let stat: f64 = counts[1..].iter().map(|c| (c - expect).powi(2) / expect).sum();
        let p = 1.0 - chi.cdf(stat);
        assert!(p > 1e-4, "s={s}: p={p}");
    }
}

#[test]
fn collision_count_reaches_birthday_scale() {
    // mixed walks on a small graph: colliding pairs ≥ C(L,2)/N up to a factor 2
    let mut p = AttackParams::new(8, 2, 3, 100, 2, NoiseSpec::Noiseless);
    p.tunables.walk_length = Some(3);
    p.tunables.walk_retries = 1;
    p.tunables.c1 = 3.0;
    let inst = generate(&p, Mode::Planted, &mut rng(31)).unwrap();
    let g = KikuchiGraph::new(&inst, 2).unwrap();
    let n = g.space().size() as f64;
    let l = kikuchi::cover::walk_count(&g, &p.tunables) as f64;
    let mut stats = WalkStats::default();
    let mut r = rng(32);
    let searches = 10;
    for _ in 0..searches {
        find_good_closed_walk(&g, 3, &p.tunables, &mut stats, &mut r).unwrap();
    }
    let birthday = l * (l - 1.0) / 2.0 / n;
    let mean = stats.collisions as f64 / searches as f64;
    assert!(mean >= 0.5 * birthday, "mean collisions {mean} vs birthday {birthday} (L={l}, N={n})");
}

#[test]
fn instance_and_report_files_roundtrip() {
    use kikuchi::experiment::{emit_report, run_experiment, Attack, ExperimentConfig, JsonReport, ReportFormat};
    use kikuchi::LinInstance;

    let dir = tempfile::tempdir().unwrap();
    let p = AttackParams::new(8, 2, 3, 60, 2, NoiseSpec::Lpn { mu: 0.1 }).with_seed(5);
    let inst = generate(&p, Mode::Planted, &mut rng(5)).unwrap();
    let path = dir.path().join("inst.txt");
    inst.save(&path).unwrap();
    assert_eq!(LinInstance::load(&path).unwrap(), inst);

    let cfg =
        ExperimentConfig { params: p, attack: Attack::Spectral, trials: 2, record_timing: false, only_mode: None };
    let (records, summary) = run_experiment(&cfg).unwrap();
    let json = dir.path().join("r.json");
    emit_report(&records, Some(&summary), ReportFormat::Json, &json).unwrap();
    let back: JsonReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back.records, records);
    let csv = dir.path().join("r.csv");
    emit_report(&records, None, ReportFormat::Csv, &csv).unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 2 + records.len());
}
