//! Self-test gates run by `cellfree selftest`.
//!
//! Each gate writes its numbers to the output directory; nothing time- or
//! host-dependent is written, so two runs with one seed are byte-identical.

use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use crate::access::{admit_all, AccessParams, ServedPairs};
use crate::channel::{estimate_covariance, local_scattering_shape, FrameConfig, SpatialCorrelation};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{mean_stderr, ExperimentResult, prepare_drop, run_experiment, simulate_experiment, simulate_fig2, write_csv, write_json};
use crate::linalg::CMatrix;
use crate::montecarlo::{normalization, run_blocks, simulate_block, McPlan, MrNormalization, Scenario};
use crate::rng::{derive_seed, Purpose};
use crate::se::{closed_form_mr_dl, finalize_se_dl, genie_se, Bound, Link};
use crate::topology::{large_scale_gains, place_network, LargeScale, NetworkConfig, PathlossModel};
use crate::transceive::Precoding;

/// Monte-Carlo sizes of the gates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelftestBudget {
    /// Blocks for the closed-form and estimator gates.
    pub blocks: u64,
    pub fig2_samples: u64,
    pub ordering_drops: usize,
    pub ordering_blocks: u64,
    pub ordering_warmup: u64,
}

impl Default for SelftestBudget {
    fn default() -> Self {
        Self {
            blocks: 100_000,
            fig2_samples: 1_000_000,
            ordering_drops: 10,
            ordering_blocks: 1000,
            ordering_warmup: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateOutcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl GateOutcome {
    fn new(id: u32, name: &'static str, passed: bool, detail: String) -> Self {
        Self { id, name, passed, detail }
    }
}

/// Network of the closed-form gate: 16 APs with two antennas, 8 UEs, 4 pilots.
pub fn closed_form_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.network.num_aps = 16;
    cfg.network.num_ues = 8;
    cfg.network.antennas_per_ap = 2;
    cfg.network.area_side_m = 400.0;
    cfg.frame.tau_p = 4;
    cfg.monte_carlo.seed = seed;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormRow {
    pub ue_id: usize,
    pub monte_carlo_se: f64,
    pub stderr: f64,
    pub closed_form_se: f64,
    pub z: f64,
    pub genie_se: f64,
}

/// MR downlink: Monte-Carlo hardening bound against the closed form.
pub fn closed_form_gate(seed: u64, blocks: u64) -> Result<(Vec<ClosedFormRow>, bool)> {
    let cfg = closed_form_config(seed);
    let drop = prepare_drop(&cfg, 0)?;
    let sc = &drop.scenario;
    let norm = normalization(sc, Precoding::Mr, MrNormalization::Analytic, 0, 1, drop.seed)?;
    let plan = McPlan {
        precoding: vec![Precoding::Mr],
        combining: vec![],
        blocks,
        chunk: 256,
        seed: drop.seed,
    };
    let out = run_blocks(sc, &plan, &[norm])?;
    let mc = finalize_se_dl(&out.dl[0], &drop.dl_frame)?;
    let genie = genie_se(&out.dl[0], &drop.dl_frame)?;
    let cf = closed_form_mr_dl(&sc.corr, &sc.psi, &sc.book, &sc.pairs, &sc.alloc, &drop.dl_frame);
    let rows: Vec<ClosedFormRow> = (0..sc.num_ues())
        .map(|k| {
            let e = mc.entries[k];
            let c = cf.report.entries[k].se;
            ClosedFormRow {
                ue_id: k,
                monte_carlo_se: e.se,
                stderr: e.stderr,
                closed_form_se: c,
                z: (e.se - c) / e.stderr,
                genie_se: genie.entries[k].se,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| (r.monte_carlo_se - r.closed_form_se).abs() <= 3.0 * r.stderr);
    Ok((rows, pass))
}

/// Desk-scale ordering configuration with `n` antennas per AP.
pub fn ordering_config(seed: u64, antennas: usize, budget: &SelftestBudget) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.antennas_per_ap = antennas;
    cfg.monte_carlo.seed = seed;
    cfg.monte_carlo.drops = budget.ordering_drops;
    cfg.monte_carlo.blocks = budget.ordering_blocks;
    cfg.monte_carlo.warmup_blocks = budget.ordering_warmup;
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingRow {
    pub antennas: usize,
    pub link: &'static str,
    pub better: String,
    pub worse: String,
    pub mean_gain: f64,
    pub stderr: f64,
    pub relative_gain: f64,
    pub passed: bool,
}

/// Paired per-drop difference of mean SE between two schemes of one link.
fn paired_gain(r: &ExperimentResult, link: Link, better: &str, worse: &str, bound: Bound) -> (f64, f64, f64) {
    let idx = |scheme: &str| {
        r.drops[0]
            .reports
            .iter()
            .position(|x| x.link == link && x.scheme == scheme && x.bound == bound)
            .expect("report present")
    };
    let (b, w) = (idx(better), idx(worse));
    let diffs: Vec<f64> = r
        .drops
        .iter()
        .map(|d| d.reports[b].mean_se() - d.reports[w].mean_se())
        .collect();
    let base: f64 = r.drops.iter().map(|d| d.reports[w].mean_se()).sum::<f64>() / r.drops.len() as f64;
    let (m, s) = mean_stderr(&diffs);
    (m, s, m / base)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub config: String,
    pub drop_id: usize,
    pub link: &'static str,
    pub scheme: String,
    pub ue_id: usize,
    pub bound_se: f64,
    pub genie_se: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn bound_rows(label: &str, r: &ExperimentResult) -> Vec<BoundRow> {
    let mut out = Vec::new();
    for d in &r.drops {
        for rep in d.reports.iter().filter(|x| x.bound != Bound::Genie) {
            let g = d
                .reports
                .iter()
                .find(|x| x.bound == Bound::Genie && x.link == rep.link && x.scheme == rep.scheme)
                .expect("genie report present");
            for (e, ge) in rep.entries.iter().zip(&g.entries) {
                let tol = 3.0 * (e.stderr * e.stderr + ge.stderr * ge.stderr).sqrt();
                out.push(BoundRow {
                    config: label.to_string(),
                    drop_id: d.drop_id,
                    link: rep.link.as_str(),
                    scheme: rep.scheme.clone(),
                    ue_id: e.ue,
                    bound_se: e.se,
                    genie_se: ge.se,
                    tolerance: tol,
                    passed: ge.se >= e.se - tol,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalabilityRow {
    pub num_ues: usize,
    pub max_ap_load: usize,
    pub max_ap_estimates: usize,
    pub ues_without_master: usize,
    pub passed: bool,
}

/// Access-procedure invariants for `K in {tau_p, 4 tau_p, 16 tau_p}` on 64 APs over 0.8 km.
pub fn scalability_sweep(seed: u64) -> Result<Vec<ScalabilityRow>> {
    let tau_p = 10;
    let mut rows = Vec::new();
    for mult in [1usize, 4, 16] {
        let k = mult * tau_p;
        let net = NetworkConfig {
            area_side_m: 800.0,
            num_aps: 64,
            num_ues: k,
            antennas_per_ap: 1,
            ap_height_m: 10.0,
            rng_seed: derive_seed(seed, Purpose::Gate, mult as u64),
        };
        let placement = place_network(&net);
        let ls = large_scale_gains::<f64>(&placement, &net, &PathlossModel::default());
        let corr = SpatialCorrelation::scaled_identity(&ls, 1);
        let frame = crate::config::FrameSection::default().frames::<f64>(k).0;
        let order: Vec<usize> = (0..k).collect();
        let adm = admit_all(&order, &ls, &corr, &frame, &AccessParams::default())?;
        let pairs = ServedPairs::new(&adm.cluster);
        let max_ap_load = (0..64).map(|l| adm.cluster.serving_set(l).len()).max().unwrap_or(0);
        let max_ap_estimates = (0..64).map(|l| pairs.at_ap(l).len()).max().unwrap_or(0);
        let ues_without_master = (0..k).filter(|&u| adm.cluster.master(u).is_none()).count();
        rows.push(ScalabilityRow {
            num_ues: k,
            max_ap_load,
            max_ap_estimates,
            ues_without_master,
            passed: max_ap_load <= tau_p && max_ap_estimates <= tau_p && ues_without_master == 0,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub antennas: usize,
    pub ue_id: usize,
    pub ap_id: usize,
    pub pilot_id: usize,
    pub contaminated: bool,
    pub relative_error: f64,
    pub passed: bool,
}

/// Two APs, three UEs on two pilots; UEs 0 and 2 share pilot 0.
pub fn estimator_scenario(antennas: usize) -> Result<Scenario<f64>> {
    let ls = LargeScale::from_gains(3, 2, vec![1.0, 0.3, 0.5, 0.8, 0.2, 0.6]);
    let shape = |angle: f64| local_scattering_shape::<f64>(antennas, angle, 15f64.to_radians());
    let angles = [0.3, -0.7, 1.1, 0.2, -1.3, 0.9];
    let r: Vec<CMatrix<f64>> = (0..6)
        .map(|i| {
            shape(angles[i]).scale(ls.beta(i / 2, i % 2))
        })
        .collect();
    let corr = SpatialCorrelation::from_matrices(3, 2, r)?;
    let frame = FrameConfig::uniform(20, 2, 0, 18, 0.1, 1.0, 1.0, 3);
    let adm = admit_all(&[0, 1, 2], &ls, &corr, &frame, &AccessParams::default())?;
    Scenario::new(corr, adm, frame)
}

/// Sample covariance of every served estimate against `p tau_p R Psi^{-1} R`.
pub fn estimator_gate(seed: u64, blocks: u64) -> Result<Vec<EstimatorRow>> {
    let mut rows = Vec::new();
    for antennas in [1usize, 2, 4] {
        let sc = estimator_scenario(antennas)?;
        let n = antennas;
        let mut sums: Vec<CMatrix<f64>> = (0..sc.pairs.len()).map(|_| CMatrix::zeros(n)).collect();
        for b in 0..blocks {
            let s = simulate_block(&sc, derive_seed(seed, Purpose::Gate, n as u64), Purpose::Block, b);
            for (idx, acc) in sums.iter_mut().enumerate() {
                acc.add_outer(s.estimates.get(idx), 1.0);
            }
        }
        for (idx, (k, l)) in sc.pairs.iter().enumerate() {
            let emp = sums[idx].scale(1.0 / blocks as f64);
            let exact = estimate_covariance(k, l, &sc.corr, &sc.psi, &sc.book, &sc.frame);
            let mut diff = emp.clone();
            diff.add_scaled(&exact, -1.0);
            let rel = diff.frobenius() / exact.frobenius();
            let t = sc.book.pilot(k).expect("pilot");
            rows.push(EstimatorRow {
                antennas,
                ue_id: k,
                ap_id: l,
                pilot_id: t,
                contaminated: sc.book.members(t).len() > 1,
                relative_error: rel,
                passed: rel <= 0.02,
            });
        }
    }
    Ok(rows)
}

/// Runs every gate, writes artifacts to `out_dir` and returns the outcomes.
pub fn run_selftest(seed: u64, budget: &SelftestBudget, out_dir: &Path) -> Result<Vec<GateOutcome>> {
    fs::create_dir_all(out_dir)?;
    let mut gates = Vec::new();

    let (cf_rows, cf_pass) = closed_form_gate(seed, budget.blocks)?;
    write_csv(&out_dir.join("closed_form.csv"), &cf_rows)?;
    let worst = cf_rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    gates.push(GateOutcome::new(
        1,
        "closed-form MR downlink",
        cf_pass,
        format!("{} UEs, {} blocks, max |z| = {worst:.2} (limit 3)", cf_rows.len(), budget.blocks),
    ));
    info!("gate 1 done");

    let fig2 = simulate_fig2(budget.fig2_samples, derive_seed(seed, Purpose::Fig2, 0));
    write_csv(&out_dir.join("fig2_hist.csv"), &fig2.histogram)?;
    write_json(&out_dir.join("fig2_summary.json"), &fig2.summary)?;
    let s = &fig2.summary;
    let fig2_pass = (s.mr_mean - 1.0).abs() <= 0.02
        && (s.mr_var - 1.0).abs() <= 0.05
        && (s.slnr_mean - 1.0).abs() <= 0.02
        && s.slnr_max <= s.slnr_bound;
    gates.push(GateOutcome::new(
        2,
        "Fig. 2 gain statistics",
        fig2_pass,
        format!(
            "MR mean {:.4} var {:.4}; SLNR mean {:.4} max {:.4} <= {:.4}",
            s.mr_mean, s.mr_var, s.slnr_mean, s.slnr_max, s.slnr_bound
        ),
    ));
    info!("gate 2 done");

    let mut ordering = Vec::new();
    let mut bounds: Vec<BoundRow> = cf_rows
        .iter()
        .map(|r| {
            let tol = 3.0 * r.stderr;
            BoundRow {
                config: "closed-form".into(),
                drop_id: 0,
                link: Link::Downlink.as_str(),
                scheme: Precoding::Mr.to_string(),
                ue_id: r.ue_id,
                bound_se: r.monte_carlo_se,
                genie_se: r.genie_se,
                tolerance: tol,
                passed: r.genie_se >= r.monte_carlo_se - tol,
            }
        })
        .collect();
    let mut power_checks = 0usize;
    let mut power_fail = Vec::new();
    for n in [1usize, 4] {
        let cfg = ordering_config(seed, n, budget);
        let r = simulate_experiment(&cfg)?;
        for (link, better, worse, bound) in [
            (Link::Downlink, "slnr", "mr", Bound::Hardening),
            (Link::Uplink, "rzf", "mr", Bound::UseAndForget),
        ] {
            let (m, s, rel) = paired_gain(&r, link, better, worse, bound);
            ordering.push(OrderingRow {
                antennas: n,
                link: link.as_str(),
                better: better.into(),
                worse: worse.into(),
                mean_gain: m,
                stderr: s,
                relative_gain: rel,
                passed: r.summary.failed_drops.is_empty() && m > 3.0 * s,
            });
        }
        bounds.extend(bound_rows(&format!("desk-n{n}"), &r));
        for d in &r.drops {
            for (scheme, checks) in &d.power {
                for c in checks {
                    power_checks += 1;
                    if !c.feasible {
                        power_fail.push((n, d.drop_id, *scheme, *c));
                    }
                }
            }
        }
    }
    write_csv(&out_dir.join("ordering.csv"), &ordering)?;
    write_csv(&out_dir.join("bound_ordering.csv"), &bounds)?;
    let detail = ordering
        .iter()
        .map(|o| format!("N={} {} {}-{}: {:.3} +- {:.3} ({:+.0}%)", o.antennas, o.link, o.better, o.worse, o.mean_gain, o.stderr, 100.0 * o.relative_gain))
        .collect::<Vec<_>>()
        .join("; ");
    gates.push(GateOutcome::new(3, "scheme ordering", ordering.iter().all(|o| o.passed), detail));
    let bad = bounds.iter().filter(|b| !b.passed).count();
    gates.push(GateOutcome::new(
        4,
        "genie bound ordering",
        bad == 0,
        format!("{bad} of {} UE bounds exceed genie SE by more than 3 standard errors", bounds.len()),
    ));
    info!("gates 3-4 done");

    let scal = scalability_sweep(seed)?;
    write_csv(&out_dir.join("scalability.csv"), &scal)?;
    gates.push(GateOutcome::new(
        5,
        "scalability invariants",
        scal.iter().all(|r| r.passed),
        scal.iter()
            .map(|r| format!("K={}: max load {}", r.num_ues, r.max_ap_load))
            .collect::<Vec<_>>()
            .join("; "),
    ));

    let est = estimator_gate(seed, budget.blocks)?;
    write_csv(&out_dir.join("estimator.csv"), &est)?;
    let worst = est.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    gates.push(GateOutcome::new(
        6,
        "estimator covariance",
        est.iter().all(|r| r.passed) && est.iter().any(|r| r.contaminated),
        format!("{} pairs, worst relative Frobenius error {:.4} (limit 0.02)", est.len(), worst),
    ));
    info!("gates 5-6 done");

    #[derive(Serialize)]
    struct PowerFailure {
        antennas: usize,
        drop_id: usize,
        scheme: Precoding,
        ap: usize,
        mean: f64,
        stderr: f64,
        limit: f64,
    }
    let failures: Vec<PowerFailure> = power_fail
        .iter()
        .map(|(n, d, s, c)| PowerFailure {
            antennas: *n,
            drop_id: *d,
            scheme: *s,
            ap: c.ap,
            mean: c.mean,
            stderr: c.stderr,
            limit: c.limit,
        })
        .collect();
    write_json(&out_dir.join("power_failures.json"), &failures)?;
    gates.push(GateOutcome::new(
        7,
        "per-AP power feasibility",
        failures.is_empty(),
        format!("{} of {power_checks} AP checks above rho + 3 standard errors", failures.len()),
    ));

    let det = determinism_gate(seed, &out_dir.join("determinism"))?;
    gates.push(GateOutcome::new(
        8,
        "run determinism",
        det,
        "same seed, two runs, byte-identical se.csv and summary.json".into(),
    ));

    write_json(&out_dir.join("gates.json"), &gates)?;
    Ok(gates)
}

fn determinism_gate(seed: u64, dir: &Path) -> Result<bool> {
    let mut cfg = ExperimentConfig::desk();
    cfg.network.num_aps = 16;
    cfg.network.num_ues = 4;
    cfg.network.area_side_m = 400.0;
    cfg.network.antennas_per_ap = 2;
    cfg.monte_carlo.seed = seed;
    cfg.monte_carlo.drops = 1;
    cfg.monte_carlo.blocks = 200;
    cfg.monte_carlo.warmup_blocks = 200;
    let (a, b) = (dir.join("a"), dir.join("b"));
    run_experiment(&cfg, &a)?;
    run_experiment(&cfg, &b)?;
    let same = |f: &str| -> Result<bool> { Ok(fs::read(a.join(f))? == fs::read(b.join(f))?) };
    Ok(same("se.csv")? && same("summary.json")? && same("clusters.json")?)
}
