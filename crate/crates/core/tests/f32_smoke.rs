//! The numerical core in single precision against the double-precision closed form.

use cellfree::access::{admit_all, AccessParams};
use cellfree::channel::{build_correlation, CorrelationModel};
use cellfree::config::ExperimentConfig;
use cellfree::harness::prepare_drop;
use cellfree::montecarlo::{normalization, run_blocks, McPlan, MrNormalization, Scenario};
use cellfree::se::{closed_form_mr_dl, finalize_se_dl};
use cellfree::topology::{large_scale_gains, place_network};
use cellfree::transceive::Precoding;

#[test]
fn single_precision_monte_carlo_matches_closed_form() {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.num_aps = 9;
    cfg.network.num_ues = 4;
    cfg.network.area_side_m = 300.0;
    cfg.network.antennas_per_ap = 2;
    cfg.frame.tau_p = 2;
    let d64 = prepare_drop(&cfg, 0).unwrap();
    let s64 = &d64.scenario;
    let cf = closed_form_mr_dl(&s64.corr, &s64.psi, &s64.book, &s64.pairs, &s64.alloc, &d64.dl_frame);

    let net = cfg.network(d64.seed);
    let placement = place_network(&net);
    let ls = large_scale_gains::<f32>(&placement, &net, &cfg.pathloss);
    let corr = build_correlation(&ls, &placement, 2, &CorrelationModel::default()).unwrap();
    let frame = cfg.frame.frames::<f32>(4).0;
    let order: Vec<usize> = (0..4).collect();
    let adm = admit_all(&order, &ls, &corr, &frame, &AccessParams::default()).unwrap();
    assert_eq!(adm.cluster.master(0), s64.cluster.master(0));
    let sc = Scenario::new(corr, adm, frame).unwrap();
    let norm = normalization(&sc, Precoding::Mr, MrNormalization::Analytic, 0, 1, 1).unwrap();
    let plan = McPlan {
        precoding: vec![Precoding::Mr],
        combining: vec![],
        blocks: 20_000,
        chunk: 1000,
        seed: 77,
    };
    let out = run_blocks(&sc, &plan, &[norm]).unwrap();
    let mc = finalize_se_dl(&out.dl[0], &sc.frame).unwrap();
    for (e, c) in mc.entries.iter().zip(&cf.report.entries) {
        assert!((e.se - c.se).abs() <= 4.0 * e.stderr + 1e-3 * c.se, "{} vs {}", e.se, c.se);
    }
}
