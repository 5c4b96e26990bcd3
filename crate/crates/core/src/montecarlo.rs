//! Coherence-block Monte-Carlo engine.
//!
//! Blocks are split into fixed chunks that run in parallel; each chunk owns
//! its accumulators and the chunks are merged in index order, so the result
//! does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::access::{Admission, ClusterState, PilotBook, ServedPairs};
use crate::channel::{
    draw_channels, mmse_estimate, receive_pilots, ChannelDraw, EstimateDraw, FrameConfig, PilotCovariance,
    SpatialCorrelation,
};
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::scalar::{norm_sqr, Real};
use crate::se::{accumulate_dl, accumulate_ul, LinkMoments};
use crate::transceive::{combine, normalize_precoders, precode, Combining, Normalization, PowerAlloc, Precoders, Precoding};

/// Everything fixed for the duration of one drop.
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub corr: SpatialCorrelation<T>,
    pub book: PilotBook,
    pub cluster: ClusterState,
    pub pairs: ServedPairs,
    pub frame: FrameConfig<T>,
    pub psi: PilotCovariance<T>,
    pub alloc: PowerAlloc<T>,
}

impl<T: Real> Scenario<T> {
    pub fn new(corr: SpatialCorrelation<T>, admission: Admission, frame: FrameConfig<T>) -> Result<Self> {
        frame.validate()?;
        let pairs = ServedPairs::new(&admission.cluster);
        let psi = PilotCovariance::new(&corr, &admission.book, &frame)?;
        let alloc = PowerAlloc::new(&pairs, frame.ap_power, frame.ue_max_power);
        Ok(Self {
            corr,
            book: admission.book,
            cluster: admission.cluster,
            pairs,
            frame,
            psi,
            alloc,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.corr.num_ues()
    }

    pub fn num_aps(&self) -> usize {
        self.corr.num_aps()
    }
}

/// True channels and their estimates for one coherence block.
#[derive(Debug, Clone)]
pub struct BlockSample<T> {
    pub channels: ChannelDraw<T>,
    pub estimates: EstimateDraw<T>,
}

/// Draws block `index` of the given substream family.
pub fn simulate_block<T: Real>(sc: &Scenario<T>, seed: u64, purpose: Purpose, index: u64) -> BlockSample<T> {
    let mut rng = substream(seed, purpose, index);
    let channels = draw_channels(&sc.corr, index, &mut rng);
    let obs = receive_pilots(&channels, &sc.book, &sc.frame, &sc.psi, &mut rng);
    let estimates = mmse_estimate(&obs, &sc.corr, &sc.pairs, &sc.book, &sc.frame);
    BlockSample { channels, estimates }
}

/// How MR precoders are normalized. Other precoders always use a warm-up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MrNormalization {
    #[default]
    Analytic,
    WarmUp,
}

fn chunks(blocks: u64, chunk: u64) -> Vec<(u64, u64)> {
    let chunk = chunk.max(1);
    (0..blocks.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(blocks)))
        .collect()
}

/// Estimates `E{||w_bar_kl||^2}` from independent warm-up blocks.
pub fn warm_up_normalization<T: Real>(
    sc: &Scenario<T>,
    scheme: Precoding,
    blocks: u64,
    chunk: u64,
    seed: u64,
) -> Result<Normalization<T>> {
    if blocks < 2 {
        return Err(Error::InvalidConfig("warm-up needs at least 2 blocks".into()));
    }
    let n_pairs = sc.pairs.len();
    let parts: Vec<(Vec<f64>, Vec<f64>)> = chunks(blocks, chunk)
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut sum = vec![0.0; n_pairs];
            let mut sq = vec![0.0; n_pairs];
            for b in lo..hi {
                let s = simulate_block(sc, seed, Purpose::WarmUp, b);
                let dirs = precode(scheme, &s.estimates, &sc.pairs, &sc.alloc.rho, sc.frame.noise_power);
                for idx in 0..n_pairs {
                    let x = norm_sqr(dirs.get(idx)).as_f64();
                    sum[idx] += x;
                    sq[idx] += x * x;
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; n_pairs];
    let mut sq = vec![0.0; n_pairs];
    for (s, q) in &parts {
        for idx in 0..n_pairs {
            sum[idx] += s[idx];
            sq[idx] += q[idx];
        }
    }
    let b = blocks as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / b).collect();
    let var: Vec<f64> = mean
        .iter()
        .zip(&sq)
        .map(|(m, q)| ((q - b * m * m) / (b - 1.0)).max(0.0) / b)
        .collect();
    Normalization::new(
        &sc.pairs,
        mean.into_iter().map(T::of).collect(),
        var.into_iter().map(T::of).collect(),
        &sc.alloc.rho,
    )
}

/// Normalization for `scheme`: analytic MR when requested, warm-up otherwise.
pub fn normalization<T: Real>(
    sc: &Scenario<T>,
    scheme: Precoding,
    mr: MrNormalization,
    warmup_blocks: u64,
    chunk: u64,
    seed: u64,
) -> Result<Normalization<T>> {
    match (scheme, mr) {
        (Precoding::Mr, MrNormalization::Analytic) => {
            Normalization::analytic_mr(&sc.pairs, &sc.corr, &sc.psi, &sc.book, &sc.frame, &sc.alloc.rho)
        }
        _ => warm_up_normalization(sc, scheme, warmup_blocks, chunk, seed),
    }
}

/// Running sums of transmitted power for one precoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMoments {
    pub scheme: Precoding,
    pub blocks: u64,
    /// Per served pair: `sum_b ||w_kl||^2`.
    pub pair_sum: Vec<f64>,
    /// Per AP: `sum_b sum_{k in D_l} ||w_kl||^2` and its square.
    pub ap_sum: Vec<f64>,
    pub ap_sq: Vec<f64>,
}

impl PowerMoments {
    pub fn new(scheme: Precoding, num_pairs: usize, num_aps: usize) -> Self {
        Self {
            scheme,
            blocks: 0,
            pair_sum: vec![0.0; num_pairs],
            ap_sum: vec![0.0; num_aps],
            ap_sq: vec![0.0; num_aps],
        }
    }

    pub fn push<T: Real>(&mut self, prec: &Precoders<T>, pairs: &ServedPairs) {
        for l in 0..self.ap_sum.len() {
            let mut p = 0.0;
            for idx in pairs.at_ap(l) {
                let x = norm_sqr(prec.get(idx)).as_f64();
                self.pair_sum[idx] += x;
                p += x;
            }
            self.ap_sum[l] += p;
            self.ap_sq[l] += p * p;
        }
        self.blocks += 1;
    }

    pub fn merge(&mut self, other: &PowerMoments) {
        self.blocks += other.blocks;
        for (a, b) in self.pair_sum.iter_mut().zip(&other.pair_sum) {
            *a += b;
        }
        for (a, b) in self.ap_sum.iter_mut().zip(&other.ap_sum) {
            *a += b;
        }
        for (a, b) in self.ap_sq.iter_mut().zip(&other.ap_sq) {
            *a += b;
        }
    }

    /// Average power per AP against `limit`, allowing three standard errors.
    ///
    /// The standard error combines the spread over evaluation blocks with the
    /// uncertainty of a warm-up normalization, which scales `||w_kl||^2` by
    /// `1 / E_hat{||w_bar_kl||^2}`.
    pub fn check<T: Real>(&self, norm: &Normalization<T>, pairs: &ServedPairs, limit: f64) -> Vec<PowerCheck> {
        let b = self.blocks as f64;
        (0..self.ap_sum.len())
            .map(|l| {
                let mean = self.ap_sum[l] / b;
                let eval_var = ((self.ap_sq[l] - b * mean * mean) / (b - 1.0)).max(0.0) / b;
                let warm_var: f64 = pairs
                    .at_ap(l)
                    .map(|idx| {
                        let m = self.pair_sum[idx] / b;
                        let e = norm.norm_sq[idx].as_f64();
                        let v = norm.norm_sq_var[idx].as_f64();
                        if e > 0.0 {
                            m * m * v / (e * e)
                        } else {
                            0.0
                        }
                    })
                    .sum();
                let stderr = (eval_var + warm_var).sqrt();
                PowerCheck {
                    ap: l,
                    mean,
                    stderr,
                    limit,
                    feasible: mean <= limit + 3.0 * stderr,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerCheck {
    pub ap: usize,
    pub mean: f64,
    pub stderr: f64,
    pub limit: f64,
    pub feasible: bool,
}

/// What to evaluate over the blocks of one drop.
#[derive(Debug, Clone, PartialEq)]
pub struct McPlan {
    pub precoding: Vec<Precoding>,
    pub combining: Vec<Combining>,
    pub blocks: u64,
    pub chunk: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McOutcome {
    pub dl: Vec<LinkMoments>,
    pub ul: Vec<LinkMoments>,
    pub power: Vec<PowerMoments>,
}

impl McOutcome {
    fn empty<T: Real>(sc: &Scenario<T>, plan: &McPlan) -> Self {
        let noise = sc.frame.noise_power.as_f64();
        Self {
            dl: plan
                .precoding
                .iter()
                .map(|&s| LinkMoments::downlink(s, sc.num_ues(), noise))
                .collect(),
            ul: plan
                .combining
                .iter()
                .map(|&s| LinkMoments::uplink(s, &sc.alloc.p, noise))
                .collect(),
            power: plan
                .precoding
                .iter()
                .map(|&s| PowerMoments::new(s, sc.pairs.len(), sc.num_aps()))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: &McOutcome) -> Result<()> {
        for (a, b) in self.dl.iter_mut().zip(&other.dl) {
            a.merge(b)?;
        }
        for (a, b) in self.ul.iter_mut().zip(&other.ul) {
            a.merge(b)?;
        }
        for (a, b) in self.power.iter_mut().zip(&other.power) {
            a.merge(b);
        }
        Ok(())
    }
}

/// Runs blocks `lo..hi` sequentially.
pub fn run_range<T: Real>(sc: &Scenario<T>, plan: &McPlan, norms: &[Normalization<T>], lo: u64, hi: u64) -> Result<McOutcome> {
    let mut out = McOutcome::empty(sc, plan);
    for b in lo..hi {
        let s = simulate_block(sc, plan.seed, Purpose::Block, b);
        for (j, &scheme) in plan.precoding.iter().enumerate() {
            let dirs = precode(scheme, &s.estimates, &sc.pairs, &sc.alloc.rho, sc.frame.noise_power);
            let prec = normalize_precoders(&dirs, &norms[j]);
            accumulate_dl(&mut out.dl[j], &s.channels, &prec, &sc.pairs)?;
            out.power[j].push(&prec, &sc.pairs);
        }
        for (j, &scheme) in plan.combining.iter().enumerate() {
            let comb = combine(scheme, &s.estimates, &sc.pairs, &sc.alloc.p, sc.frame.noise_power);
            accumulate_ul(&mut out.ul[j], &s.channels, &comb, &sc.pairs)?;
        }
    }
    Ok(out)
}

/// Runs all blocks of `plan`; `norms` is aligned with `plan.precoding`.
pub fn run_blocks<T: Real>(sc: &Scenario<T>, plan: &McPlan, norms: &[Normalization<T>]) -> Result<McOutcome> {
    if norms.len() != plan.precoding.len() {
        return Err(Error::InvalidConfig("one normalization per precoder is required".into()));
    }
    if plan.blocks == 0 {
        return Err(Error::NoBlocks);
    }
    let parts: Vec<Result<McOutcome>> = chunks(plan.blocks, plan.chunk)
        .into_par_iter()
        .map(|(lo, hi)| run_range(sc, plan, norms, lo, hi))
        .collect();
    let mut iter = parts.into_iter();
    let mut total = iter.next().expect("at least one chunk")?;
    for part in iter {
        total.merge(&part?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access::{admit_all, AccessParams};
    use crate::topology::LargeScale;

    fn scenario() -> Scenario<f64> {
        let ls = LargeScale::from_gains(3, 2, vec![1.0, 0.2, 0.3, 0.9, 0.5, 0.5]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 2);
        let frame = FrameConfig::uniform(20, 2, 0, 18, 0.1, 1.0, 1.0, 3);
        let adm = admit_all(&[0, 1, 2], &ls, &corr, &frame, &AccessParams::default()).unwrap();
        Scenario::new(corr, adm, frame).unwrap()
    }

    #[test]
    fn chunks_cover_all_blocks() {
        assert_eq!(chunks(10, 4), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(chunks(4, 4), vec![(0, 4)]);
        assert!(chunks(0, 4).is_empty());
    }

    #[test]
    fn block_sample_is_reproducible() {
        let sc = scenario();
        let a = simulate_block(&sc, 9, Purpose::Block, 5);
        let b = simulate_block(&sc, 9, Purpose::Block, 5);
        assert_eq!(a.channels, b.channels);
        assert_eq!(a.estimates, b.estimates);
        assert_eq!(a.estimates.block, 5);
    }

    #[test]
    fn chunk_size_does_not_change_results() {
        let sc = scenario();
        let norms = vec![normalization(&sc, Precoding::Mr, MrNormalization::Analytic, 0, 8, 1).unwrap()];
        let plan = |chunk| McPlan {
            precoding: vec![Precoding::Mr],
            combining: vec![Combining::Rzf],
            blocks: 50,
            chunk,
            seed: 3,
        };
        let a = run_blocks(&sc, &plan(7), &norms).unwrap();
        let b = run_blocks(&sc, &plan(50), &norms).unwrap();
        assert_eq!(a.dl[0].blocks(), 50);
        for k in 0..3 {
            let (x, _) = a.dl[0].signal_mean(k);
            let (y, _) = b.dl[0].signal_mean(k);
            assert!((x - y).norm() <= 1e-12 * x.norm().max(1e-300));
        }
    }

    #[test]
    fn warm_up_normalization_is_close_to_analytic_for_mr() {
        let sc = scenario();
        let exact = normalization(&sc, Precoding::Mr, MrNormalization::Analytic, 0, 64, 1).unwrap();
        let warm = normalization(&sc, Precoding::Mr, MrNormalization::WarmUp, 4000, 64, 1).unwrap();
        for idx in 0..sc.pairs.len() {
            let (e, w, v) = (exact.norm_sq[idx], warm.norm_sq[idx], warm.norm_sq_var[idx]);
            assert!((e - w).abs() < 4.0 * v.sqrt(), "{e} {w} {v}");
        }
    }

    #[test]
    fn mismatched_normalizations_are_rejected() {
        let sc = scenario();
        let plan = McPlan {
            precoding: vec![Precoding::Mr],
            combining: vec![],
            blocks: 4,
            chunk: 2,
            seed: 0,
        };
        assert!(run_blocks(&sc, &plan, &[]).is_err());
    }
}
