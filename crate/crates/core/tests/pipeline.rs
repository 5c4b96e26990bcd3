use num_complex::Complex64;

use cellfree::config::ExperimentConfig;
use cellfree::harness::{prepare_drop, run_drop, run_experiment, PreparedDrop};
use cellfree::montecarlo::{normalization, run_blocks, simulate_block, McPlan, MrNormalization};
use cellfree::rng::Purpose;
use cellfree::se::{closed_form_mr_dl, finalize_se_dl, Bound, Link};
use cellfree::transceive::{combine_rzf, precode_slnr, Precoding};
use cellfree::Estimates;

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.num_aps = 16;
    cfg.network.num_ues = 6;
    cfg.network.area_side_m = 400.0;
    cfg.network.antennas_per_ap = 2;
    cfg.frame.tau_p = 3;
    cfg.monte_carlo.seed = seed;
    cfg.monte_carlo.drops = 2;
    cfg.monte_carlo.blocks = 200;
    cfg.monte_carlo.warmup_blocks = 200;
    cfg
}

fn drop(seed: u64) -> PreparedDrop {
    prepare_drop(&small(seed), 0).unwrap()
}

#[test]
fn estimation_error_is_uncorrelated_with_estimate() {
    let d = drop(3);
    let sc = &d.scenario;
    let n = sc.corr.antennas();
    let blocks = 20_000;
    for (idx, (k, l)) in sc.pairs.iter().enumerate().take(4) {
        let mut cross = vec![Complex64::new(0.0, 0.0); n * n];
        for b in 0..blocks {
            let s = simulate_block(sc, 11, Purpose::Block, b);
            let hh = s.estimates.get(idx);
            let h = s.channels.h(k, l);
            for i in 0..n {
                for j in 0..n {
                    cross[i * n + j] += hh[i] * (h[j] - hh[j]).conj();
                }
            }
        }
        let scale = sc.corr.r(k, l).frobenius();
        let err = cross.iter().map(|x| (x / blocks as f64).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 0.03 * scale, "pair {idx}: {err:e} vs {scale:e}");
    }
}

/// Replaces every estimate not at `ap` with a different vector.
fn perturb_outside(est: &Estimates, pairs: &cellfree::access::ServedPairs, ap: usize) -> Estimates {
    let n = est.antennas();
    let mut v = Vec::with_capacity(est.len() * n);
    for idx in 0..est.len() {
        let (_, l) = pairs.pair(idx);
        for x in est.get(idx) {
            v.push(if l == ap { *x } else { x * 3.0 + Complex64::new(1e-5, -2e-5) });
        }
    }
    Estimates::from_vectors(est.block, n, v)
}

#[test]
fn precoders_and_combiners_use_local_estimates_only() {
    let d = drop(4);
    let sc = &d.scenario;
    let s = simulate_block(sc, 2, Purpose::Block, 0);
    for ap in 0..sc.num_aps() {
        let other = perturb_outside(&s.estimates, &sc.pairs, ap);
        let w0 = precode_slnr(&s.estimates, &sc.pairs, &sc.alloc.rho, sc.frame.noise_power);
        let w1 = precode_slnr(&other, &sc.pairs, &sc.alloc.rho, sc.frame.noise_power);
        let v0 = combine_rzf(&s.estimates, &sc.pairs, &sc.alloc.p, sc.frame.noise_power);
        let v1 = combine_rzf(&other, &sc.pairs, &sc.alloc.p, sc.frame.noise_power);
        for idx in sc.pairs.at_ap(ap) {
            assert_eq!(w0.get(idx), w1.get(idx));
            assert_eq!(v0.get(idx), v1.get(idx));
        }
    }
}

#[test]
fn downlink_se_scales_linearly_with_prelog() {
    let mut a = small(5);
    a.schemes.precoding = vec![Precoding::Mr, Precoding::Slnr];
    a.schemes.combining = vec![];
    a.schemes.bounds = vec![Bound::Hardening];
    a.frame.tau_p = 10;
    a.frame.tau_u = Some(0);
    a.frame.tau_d = Some(190);
    let mut b = a.clone();
    b.frame.tau_u = Some(95);
    b.frame.tau_d = Some(95);
    let ra = run_drop(&a, 0).unwrap();
    let rb = run_drop(&b, 0).unwrap();
    for (x, y) in ra.reports.iter().zip(&rb.reports) {
        for (ex, ey) in x.entries.iter().zip(&y.entries) {
            assert!((ex.se - 2.0 * ey.se).abs() <= 1e-12 * ex.se.max(1e-300));
        }
    }
}

#[test]
fn closed_form_se_decreases_with_noise() {
    let mut prev: Option<Vec<f64>> = None;
    for nf in [0.0, 20.0, 40.0, 60.0, 80.0] {
        let mut cfg = small(6);
        cfg.frame.noise_figure_db = nf;
        let d = prepare_drop(&cfg, 0).unwrap();
        let sc = &d.scenario;
        let cf = closed_form_mr_dl(&sc.corr, &sc.psi, &sc.book, &sc.pairs, &sc.alloc, &d.dl_frame);
        let se: Vec<f64> = cf.report.entries.iter().map(|e| e.se).collect();
        if let Some(p) = &prev {
            for (a, b) in p.iter().zip(&se) {
                assert!(b <= &(a * (1.0 + 1e-12)), "{b} > {a} at NF {nf}");
            }
        }
        prev = Some(se);
    }
}

#[test]
fn monte_carlo_tracks_closed_form_with_warm_up_normalization() {
    let d = drop(7);
    let sc = &d.scenario;
    let norm = normalization(sc, Precoding::Mr, MrNormalization::WarmUp, 20_000, 512, d.seed).unwrap();
    let exact = normalization(sc, Precoding::Mr, MrNormalization::Analytic, 0, 1, d.seed).unwrap();
    for (w, e) in norm.norm_sq.iter().zip(&exact.norm_sq) {
        assert!((w / e - 1.0).abs() < 0.05);
    }
    let plan = McPlan {
        precoding: vec![Precoding::Mr],
        combining: vec![],
        blocks: 5000,
        chunk: 512,
        seed: d.seed,
    };
    let out = run_blocks(sc, &plan, &[exact]).unwrap();
    let mc = finalize_se_dl(&out.dl[0], &d.dl_frame).unwrap();
    let cf = closed_form_mr_dl(&sc.corr, &sc.psi, &sc.book, &sc.pairs, &sc.alloc, &d.dl_frame);
    for k in 0..sc.num_ues() {
        let (m, se) = out.dl[0].signal_mean(k);
        assert!((m.re - cf.signal_mean[k]).abs() <= 4.0 * se);
        for i in 0..sc.num_ues() {
            let (v, se) = out.dl[0].second_moment(k, i);
            assert!((v - cf.second_moments[k * sc.num_ues() + i]).abs() <= 4.0 * se + 1e-300);
        }
        let e = mc.entries[k];
        assert!((e.se - cf.report.entries[k].se).abs() <= 4.0 * e.stderr);
    }
}

#[test]
fn every_ue_appears_once_per_drop_scheme_and_bound() {
    let cfg = small(8);
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&cfg, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("se.csv")).unwrap();
    let mut seen = std::collections::BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let key = (rec[0].to_string(), rec[2].to_string(), rec[3].to_string(), rec[4].to_string(), rec[1].to_string());
        *seen.entry(key).or_insert(0) += 1;
    }
    assert!(seen.values().all(|&c| c == 1));
    // 2 drops x 6 UEs x (2 precoders + 2 combiners) x 2 bounds
    assert_eq!(seen.len(), 2 * 6 * 4 * 2);
    assert!(r.aggregate(Link::Downlink, "slnr", Bound::Hardening).is_some());
}

#[test]
fn experiment_output_is_byte_identical_for_one_seed() {
    let cfg = small(9);
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    let mut other = cfg.clone();
    other.monte_carlo.seed = 10;
    run_experiment(&other, c.path()).unwrap();
    for f in ["se.csv", "summary.json", "clusters.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_ne!(std::fs::read(a.path().join("se.csv")).unwrap(), std::fs::read(c.path().join("se.csv")).unwrap());
}

#[test]
fn admission_failure_skips_the_drop() {
    // one AP and more UEs than pilots: the master runs out of pilots
    let mut cfg = small(12);
    cfg.network.num_aps = 1;
    cfg.network.num_ues = 4;
    cfg.frame.tau_p = 2;
    let r = cellfree::harness::simulate_experiment(&cfg).unwrap();
    assert!(r.drops.is_empty());
    assert_eq!(r.summary.failed_drops.len(), 2);
    assert!(r.summary.failed_drops[0].error.contains("master capacity exhausted"));
}
