//! Spectral-efficiency evaluation.
//!
//! Downlink uses the hardening bound and uplink the use-and-then-forget
//! bound. Both have the form
//!
//! ```text
//! SINR_k = s_k |E{x_kk}|^2 / (E{c_k} - s_k |E{x_kk}|^2 + d)
//! ```
//!
//! where for the downlink `x_ki = h_k^T D_i w_i`, `s_k = 1`,
//! `c_k = sum_i |x_ki|^2` and `d = sigma^2`, and for the uplink
//! `x_ki = sum_{l in M(k)} v_kl^H h_il`, `s_k = p_k`,
//! `c_k = sum_i p_i |x_ki|^2 + sigma^2 sum_l ||v_kl||^2` and `d = 0`.
//! One [`LinkMoments`] type therefore serves both links.
//!
//! Moments are accumulated in `f64` whatever the working scalar is.

use std::f64::consts::LN_2;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::access::{PilotBook, ServedPairs};
use crate::channel::{ChannelDraw, EstimateDraw, FrameConfig, PilotCovariance, SpatialCorrelation};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{czero, dot_h, dot_t, norm_sqr, Real, C};
use crate::transceive::{Combiners, Combining, PowerAlloc, Precoders, Precoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Link {
    #[serde(rename = "dl")]
    Downlink,
    #[serde(rename = "ul")]
    Uplink,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Downlink => "dl",
            Link::Uplink => "ul",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    Hardening,
    UseAndForget,
    ClosedForm,
    Genie,
}

impl Bound {
    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Hardening => "hardening",
            Bound::UseAndForget => "use-and-forget",
            Bound::ClosedForm => "closed-form",
            Bound::Genie => "genie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeEntry {
    pub ue: usize,
    pub se: f64,
    pub stderr: f64,
}

/// Per-UE SE in bit/s/Hz with the prelog already applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeReport {
    pub link: Link,
    pub scheme: String,
    pub bound: Bound,
    pub blocks: u64,
    pub entries: Vec<SeEntry>,
}

impl SeReport {
    pub fn mean_se(&self) -> f64 {
        self.entries.iter().map(|e| e.se).sum::<f64>() / self.entries.len().max(1) as f64
    }

    pub fn se(&self, ue: usize) -> f64 {
        self.entries[ue].se
    }
}

/// Mergeable running sums behind one link's SE bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMoments {
    link: Link,
    scheme: String,
    num_ues: usize,
    /// `s_k`.
    signal_weight: Vec<f64>,
    /// Weight of `|x_ki|^2` inside `c_k`: 1 (downlink) or `p_i` (uplink).
    interference_weight: Vec<f64>,
    /// Weight of `sum_l ||v_kl||^2` inside `c_k`.
    combiner_noise: f64,
    /// `d`.
    noise: f64,
    blocks: u64,
    sig_re: Vec<f64>,
    sig_im: Vec<f64>,
    total: Vec<f64>,
    /// Per UE: sums of `aa, bb, cc, ab, ac, bc` for `(a, b, c) = (Re x_kk, Im x_kk, c_k)`.
    cross: Vec<[f64; 6]>,
    pair_sq: Vec<f64>,
    pair_quad: Vec<f64>,
    combiner_norm: Vec<f64>,
    genie: Vec<f64>,
    genie_sq: Vec<f64>,
}

impl LinkMoments {
    fn empty(link: Link, scheme: String, signal_weight: Vec<f64>, interference_weight: Vec<f64>, combiner_noise: f64, noise: f64) -> Self {
        let k = signal_weight.len();
        Self {
            link,
            scheme,
            num_ues: k,
            signal_weight,
            interference_weight,
            combiner_noise,
            noise,
            blocks: 0,
            sig_re: vec![0.0; k],
            sig_im: vec![0.0; k],
            total: vec![0.0; k],
            cross: vec![[0.0; 6]; k],
            pair_sq: vec![0.0; k * k],
            pair_quad: vec![0.0; k * k],
            combiner_norm: vec![0.0; k],
            genie: vec![0.0; k],
            genie_sq: vec![0.0; k],
        }
    }

    pub fn downlink(scheme: Precoding, num_ues: usize, noise_power: f64) -> Self {
        Self::empty(Link::Downlink, scheme.to_string(), vec![1.0; num_ues], vec![1.0; num_ues], 0.0, noise_power)
    }

    pub fn uplink<T: Real>(scheme: Combining, p: &[T], noise_power: f64) -> Self {
        let p: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
        Self::empty(Link::Uplink, scheme.to_string(), p.clone(), p, noise_power, 0.0)
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    /// Adds one block given the `K x K` effective gains `x[k * K + i]` and
    /// (uplink) `sum_l ||v_kl||^2` per UE.
    pub fn push_block(&mut self, x: &[C<f64>], combiner_norm: &[f64]) {
        let k_count = self.num_ues;
        for k in 0..k_count {
            let row = &x[k * k_count..(k + 1) * k_count];
            let mut interference = self.combiner_noise * combiner_norm.get(k).copied().unwrap_or(0.0);
            for (i, xi) in row.iter().enumerate() {
                let sq = xi.norm_sqr();
                self.pair_sq[k * k_count + i] += sq;
                self.pair_quad[k * k_count + i] += sq * sq;
                if i != k {
                    interference += self.interference_weight[i] * sq;
                }
            }
            let xkk = row[k];
            let desired = self.signal_weight[k] * xkk.norm_sqr();
            let c = interference + self.interference_weight[k] * xkk.norm_sqr();
            let (a, b) = (xkk.re, xkk.im);
            self.sig_re[k] += a;
            self.sig_im[k] += b;
            self.total[k] += c;
            let s = &mut self.cross[k];
            s[0] += a * a;
            s[1] += b * b;
            s[2] += c * c;
            s[3] += a * b;
            s[4] += a * c;
            s[5] += b * c;
            if let Some(n) = combiner_norm.get(k) {
                self.combiner_norm[k] += n;
            }
            let den = interference + self.noise;
            let g = if desired > 0.0 { (desired / den).ln_1p() / LN_2 } else { 0.0 };
            self.genie[k] += g;
            self.genie_sq[k] += g * g;
        }
        self.blocks += 1;
    }

    pub fn merge(&mut self, other: &LinkMoments) -> Result<()> {
        if self.link != other.link || self.scheme != other.scheme || self.num_ues != other.num_ues {
            return Err(Error::BlockMismatch("merging moments of different links or schemes".into()));
        }
        fn add(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.blocks += other.blocks;
        add(&mut self.sig_re, &other.sig_re);
        add(&mut self.sig_im, &other.sig_im);
        add(&mut self.total, &other.total);
        for (x, y) in self.cross.iter_mut().zip(&other.cross) {
            add(x, y);
        }
        add(&mut self.pair_sq, &other.pair_sq);
        add(&mut self.pair_quad, &other.pair_quad);
        add(&mut self.combiner_norm, &other.combiner_norm);
        add(&mut self.genie, &other.genie);
        add(&mut self.genie_sq, &other.genie_sq);
        Ok(())
    }

    /// `E{x_kk}` and the standard error of its real part.
    pub fn signal_mean(&self, k: usize) -> (C<f64>, f64) {
        let b = self.blocks as f64;
        let m = C::new(self.sig_re[k] / b, self.sig_im[k] / b);
        let var = (self.cross[k][0] - b * m.re * m.re) / (b - 1.0);
        (m, (var.max(0.0) / b).sqrt())
    }

    /// `E{|x_ki|^2}` and its standard error.
    pub fn second_moment(&self, k: usize, i: usize) -> (f64, f64) {
        let b = self.blocks as f64;
        let idx = k * self.num_ues + i;
        let m = self.pair_sq[idx] / b;
        let var = (self.pair_quad[idx] - b * m * m) / (b - 1.0);
        (m, (var.max(0.0) / b).sqrt())
    }

    /// `E{sum_l ||v_kl||^2}` (uplink only).
    pub fn combiner_norm(&self, k: usize) -> f64 {
        self.combiner_norm[k] / self.blocks as f64
    }

    fn bound_entry(&self, k: usize, prelog: f64) -> SeEntry {
        let b = self.blocks as f64;
        let (a, bi) = (self.sig_re[k] / b, self.sig_im[k] / b);
        let ec = self.total[k] / b;
        let s = self.signal_weight[k];
        let desired = s * (a * a + bi * bi);
        let mut rest = ec - desired;
        if rest < 0.0 {
            warn!(
                "{} {} UE {k}: interference-minus-signal term {rest:e} clamped to 0",
                self.link.as_str(),
                self.scheme
            );
            rest = 0.0;
        }
        let den = rest + self.noise;
        if !(desired > 0.0) {
            return SeEntry { ue: k, se: 0.0, stderr: 0.0 };
        }
        let se = prelog * (desired / den).ln_1p() / LN_2;
        // delta method on (Re m, Im m, E c)
        let c = &self.cross[k];
        let ecc = ec;
        let cov = |sxy: f64, mx: f64, my: f64| (sxy - b * mx * my) / (b - 1.0);
        let sigma = [
            [cov(c[0], a, a), cov(c[3], a, bi), cov(c[4], a, ecc)],
            [cov(c[3], a, bi), cov(c[1], bi, bi), cov(c[5], bi, ecc)],
            [cov(c[4], a, ecc), cov(c[5], bi, ecc), cov(c[2], ecc, ecc)],
        ];
        let f = prelog / LN_2;
        let grad = [f * 2.0 * s * a / den, f * 2.0 * s * bi / den, f * (1.0 / (ec + self.noise) - 1.0 / den)];
        let mut var = 0.0;
        for r in 0..3 {
            for q in 0..3 {
                var += grad[r] * sigma[r][q] * grad[q];
            }
        }
        SeEntry {
            ue: k,
            se,
            stderr: (var.max(0.0) / b).sqrt(),
        }
    }

    fn report(&self, bound: Bound, prelog: f64, entry: impl Fn(usize) -> SeEntry) -> Result<SeReport> {
        if self.blocks == 0 {
            return Err(Error::NoBlocks);
        }
        Ok(SeReport {
            link: self.link,
            scheme: self.scheme.clone(),
            bound,
            blocks: self.blocks,
            entries: (0..self.num_ues).map(|k| entry(k)).collect::<Vec<_>>().into_iter().map(|mut e| {
                e.se *= prelog;
                e.stderr *= prelog;
                e
            }).collect(),
        })
    }
}

/// Hardening bound for every UE, with prelog `tau_d / tau_c`.
pub fn finalize_se_dl<T: Real>(acc: &LinkMoments, frame: &FrameConfig<T>) -> Result<SeReport> {
    assert_eq!(acc.link, Link::Downlink);
    acc.report(Bound::Hardening, frame.dl_prelog(), |k| acc.bound_entry(k, 1.0))
}

/// Use-and-then-forget bound for every UE, with prelog `tau_u / tau_c`.
pub fn finalize_se_ul<T: Real>(acc: &LinkMoments, frame: &FrameConfig<T>) -> Result<SeReport> {
    assert_eq!(acc.link, Link::Uplink);
    acc.report(Bound::UseAndForget, frame.ul_prelog(), |k| acc.bound_entry(k, 1.0))
}

/// Average of the instantaneous-SINR rate with perfect receiver CSI.
pub fn genie_se<T: Real>(acc: &LinkMoments, frame: &FrameConfig<T>) -> Result<SeReport> {
    let prelog = match acc.link {
        Link::Downlink => frame.dl_prelog(),
        Link::Uplink => frame.ul_prelog(),
    };
    let b = acc.blocks as f64;
    acc.report(Bound::Genie, prelog, |k| {
        let m = acc.genie[k] / b;
        let var = (acc.genie_sq[k] - b * m * m) / (b - 1.0);
        SeEntry {
            ue: k,
            se: m,
            stderr: (var.max(0.0) / b).sqrt(),
        }
    })
}

fn check_block(what: &str, expected: u64, got: u64) -> Result<()> {
    if expected != got {
        return Err(Error::BlockMismatch(format!("{what} from block {got}, channels from block {expected}")));
    }
    Ok(())
}

/// `x_ki = h_k^T D_i w_i = sum_{l in M(i)} h_kl^T w_il`, row-major `K x K`.
pub fn downlink_gains<T: Real>(draw: &ChannelDraw<T>, prec: &Precoders<T>, pairs: &ServedPairs) -> Vec<C<f64>> {
    let k_count = pairs.num_ues();
    let mut x = vec![czero::<T>(); k_count * k_count];
    for idx in 0..pairs.len() {
        let (i, l) = pairs.pair(idx);
        let w = prec.get(idx);
        for k in 0..k_count {
            x[k * k_count + i] += dot_t(draw.h(k, l), w);
        }
    }
    x.into_iter().map(|z| C::new(z.re.as_f64(), z.im.as_f64())).collect()
}

/// `x_ki = sum_{l in M(k)} v_kl^H h_il`, plus `sum_l ||v_kl||^2` per UE.
pub fn uplink_gains<T: Real>(draw: &ChannelDraw<T>, comb: &Combiners<T>, pairs: &ServedPairs) -> (Vec<C<f64>>, Vec<f64>) {
    let k_count = pairs.num_ues();
    let mut x = vec![czero::<T>(); k_count * k_count];
    let mut norms = vec![0.0; k_count];
    for idx in 0..pairs.len() {
        let (k, l) = pairs.pair(idx);
        let v = comb.get(idx);
        norms[k] += norm_sqr(v).as_f64();
        for i in 0..k_count {
            x[k * k_count + i] += dot_h(v, draw.h(i, l));
        }
    }
    (x.into_iter().map(|z| C::new(z.re.as_f64(), z.im.as_f64())).collect(), norms)
}

pub fn accumulate_dl<T: Real>(acc: &mut LinkMoments, draw: &ChannelDraw<T>, prec: &Precoders<T>, pairs: &ServedPairs) -> Result<()> {
    check_block("precoders", draw.block, prec.block)?;
    let x = downlink_gains(draw, prec, pairs);
    acc.push_block(&x, &[]);
    Ok(())
}

pub fn accumulate_ul<T: Real>(acc: &mut LinkMoments, draw: &ChannelDraw<T>, comb: &Combiners<T>, pairs: &ServedPairs) -> Result<()> {
    check_block("combiners", draw.block, comb.block)?;
    let (x, norms) = uplink_gains(draw, comb, pairs);
    acc.push_block(&x, &norms);
    Ok(())
}

/// Downlink and uplink moments of one precoding/combining pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub dl: LinkMoments,
    pub ul: LinkMoments,
}

impl MomentAccumulator {
    pub fn new<T: Real>(precoding: Precoding, combining: Combining, alloc: &PowerAlloc<T>, noise_power: T) -> Self {
        Self {
            dl: LinkMoments::downlink(precoding, alloc.p.len(), noise_power.as_f64()),
            ul: LinkMoments::uplink(combining, &alloc.p, noise_power.as_f64()),
        }
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        self.dl.merge(&other.dl)?;
        self.ul.merge(&other.ul)
    }
}

/// Adds one block; every artifact must come from the same coherence block.
pub fn accumulate_block<T: Real>(
    acc: &mut MomentAccumulator,
    draw: &ChannelDraw<T>,
    est: &EstimateDraw<T>,
    prec: &Precoders<T>,
    comb: &Combiners<T>,
    pairs: &ServedPairs,
) -> Result<()> {
    check_block("estimates", draw.block, est.block)?;
    accumulate_dl(&mut acc.dl, draw, prec, pairs)?;
    accumulate_ul(&mut acc.ul, draw, comb, pairs)
}

/// Exact MR downlink moments and the resulting hardening-bound SE.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormDl {
    /// `E{h_k^T D_k w_k}`.
    pub signal_mean: Vec<f64>,
    /// `E{|h_k^T D_i w_i|^2}`, row-major `K x K`.
    pub second_moments: Vec<f64>,
    pub report: SeReport,
}

fn trace_product<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> C<f64> {
    let n = a.dim();
    let mut s = czero::<T>();
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    C::new(s.re.as_f64(), s.im.as_f64())
}

/// Closed-form MR expectations with MMSE estimates and DCC clusters.
///
/// The signal term of UE `k` at AP `l` uses that UE's own power `rho_kl`.
pub fn closed_form_mr_dl<T: Real>(
    corr: &SpatialCorrelation<T>,
    psi: &PilotCovariance<T>,
    book: &PilotBook,
    pairs: &ServedPairs,
    alloc: &PowerAlloc<T>,
    frame: &FrameConfig<T>,
) -> ClosedFormDl {
    let k_count = pairs.num_ues();
    let tau_p = frame.tau_p as f64;
    // per served pair (i, l): Z = R Psi^{-1} R and X^H = R Psi^{-1}
    let mut z = Vec::with_capacity(pairs.len());
    let mut xh = Vec::with_capacity(pairs.len());
    for (i, l) in pairs.iter() {
        let t = book.pilot(i).expect("served UE holds a pilot");
        let x = psi.cholesky(t, l).solve_matrix(corr.r(i, l));
        z.push(corr.r(i, l).matmul(&x));
        xh.push(x.adjoint());
    }
    let mut signal_mean = vec![0.0; k_count];
    let mut second = vec![0.0; k_count * k_count];
    for k in 0..k_count {
        let pk = frame.pilot_powers[k].as_f64();
        for &idx in pairs.of_ue(k) {
            let rho = alloc.rho[idx].as_f64();
            signal_mean[k] += (rho * pk * tau_p * z[idx].trace_re().as_f64()).sqrt();
        }
        for i in 0..k_count {
            let shared = book.pilot(i) == book.pilot(k);
            let mut incoherent = 0.0;
            let mut coherent = C::new(0.0, 0.0);
            for &idx in pairs.of_ue(i) {
                let (_, l) = pairs.pair(idx);
                let rho = alloc.rho[idx].as_f64();
                let tr = z[idx].trace_re().as_f64();
                incoherent += rho * trace_product(&z[idx], corr.r(k, l)).re / tr;
                if shared {
                    coherent += trace_product(&xh[idx], corr.r(k, l)) * ((rho * pk * tau_p).sqrt() / tr.sqrt());
                }
            }
            second[k * k_count + i] = incoherent + coherent.norm_sqr();
        }
    }
    let sigma2 = frame.noise_power.as_f64();
    let prelog = frame.dl_prelog();
    let entries = (0..k_count)
        .map(|k| {
            let s = signal_mean[k] * signal_mean[k];
            let total: f64 = second[k * k_count..(k + 1) * k_count].iter().sum();
            let se = if s > 0.0 {
                prelog * (s / ((total - s).max(0.0) + sigma2)).ln_1p() / LN_2
            } else {
                0.0
            };
            SeEntry { ue: k, se, stderr: 0.0 }
        })
        .collect();
    ClosedFormDl {
        signal_mean,
        second_moments: second,
        report: SeReport {
            link: Link::Downlink,
            scheme: Precoding::Mr.to_string(),
            bound: Bound::ClosedForm,
            blocks: 0,
            entries,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn frame() -> FrameConfig<f64> {
        FrameConfig::uniform(200, 10, 0, 190, 1.0, 1.0, 1.0, 1)
    }

    #[test]
    fn zero_precoders_keep_moments_zero() {
        let mut acc = LinkMoments::downlink(Precoding::Mr, 2, 1.0);
        for _ in 0..10 {
            acc.push_block(&[c(0.0, 0.0); 4], &[]);
        }
        let r = finalize_se_dl(&acc, &frame()).unwrap();
        assert!(r.entries.iter().all(|e| e.se == 0.0));
        assert_eq!(acc.second_moment(0, 1).0, 0.0);
    }

    #[test]
    fn zero_blocks_is_an_error() {
        let acc = LinkMoments::downlink(Precoding::Mr, 1, 1.0);
        assert!(matches!(finalize_se_dl(&acc, &frame()), Err(Error::NoBlocks)));
    }

    #[test]
    fn deterministic_channel_gives_exact_rates() {
        // constant gain 2: hardening and genie both give log2(1 + 4 / sigma^2)
        let mut acc = LinkMoments::downlink(Precoding::Mr, 1, 0.5);
        for _ in 0..5 {
            acc.push_block(&[c(2.0, 0.0)], &[]);
        }
        let f = frame();
        let hard = finalize_se_dl(&acc, &f).unwrap();
        let genie = genie_se(&acc, &f).unwrap();
        let expected = 0.95 * (1.0f64 + 8.0).log2();
        assert!((hard.se(0) - expected).abs() < 1e-12);
        assert!((genie.se(0) - expected).abs() < 1e-12);
        assert_eq!(hard.entries[0].stderr, 0.0);
    }

    #[test]
    fn prelog_scales_linearly() {
        let mut acc = LinkMoments::downlink(Precoding::Slnr, 1, 1.0);
        acc.push_block(&[c(1.0, 0.5)], &[]);
        acc.push_block(&[c(0.3, 0.1)], &[]);
        let a = finalize_se_dl(&acc, &FrameConfig::uniform(200, 10, 0, 190, 1.0, 1.0, 1.0, 1)).unwrap();
        let b = finalize_se_dl(&acc, &FrameConfig::uniform(200, 10, 95, 95, 1.0, 1.0, 1.0, 1)).unwrap();
        assert!((a.se(0) - 2.0 * b.se(0)).abs() < 1e-14);
    }

    #[test]
    fn uplink_noise_uses_combiner_norm() {
        // x_kk = 1 always, combiner norm 2, sigma^2 = 0.5, p = 3 -> SINR = 3 / (0.5 * 2)
        let mut acc = LinkMoments::uplink(Combining::Mr, &[3.0f64], 0.5);
        for _ in 0..4 {
            acc.push_block(&[c(1.0, 0.0)], &[2.0]);
        }
        let f = FrameConfig::uniform(200, 10, 190, 0, 0.5, 1.0, 3.0, 1);
        let r = finalize_se_ul(&acc, &f).unwrap();
        assert!((r.se(0) - 0.95 * 4f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn merge_is_order_independent() {
        let blocks: Vec<Vec<C<f64>>> = (0..40)
            .map(|b| {
                let t = b as f64;
                vec![c(t.sin(), t.cos()), c(0.1 * t, 0.2), c(0.3, -0.1 * t.cos()), c((2.0 * t).sin(), 1.0)]
            })
            .collect();
        let mut parts: Vec<LinkMoments> = blocks
            .chunks(7)
            .map(|ch| {
                let mut a = LinkMoments::downlink(Precoding::Mr, 2, 0.3);
                for x in ch {
                    a.push_block(x, &[]);
                }
                a
            })
            .collect();
        let fold = |ps: &[LinkMoments]| {
            let mut acc = ps[0].clone();
            for p in &ps[1..] {
                acc.merge(p).unwrap();
            }
            finalize_se_dl(&acc, &frame()).unwrap()
        };
        let forward = fold(&parts);
        parts.reverse();
        let backward = fold(&parts);
        for (a, b) in forward.entries.iter().zip(&backward.entries) {
            assert!((a.se - b.se).abs() <= 1e-9 * a.se.abs());
            assert!((a.stderr - b.stderr).abs() <= 1e-9 * a.stderr.abs().max(1e-300));
        }
    }

    #[test]
    fn merge_rejects_mismatched_schemes() {
        let mut a = LinkMoments::downlink(Precoding::Mr, 1, 1.0);
        let b = LinkMoments::downlink(Precoding::Slnr, 1, 1.0);
        assert!(a.merge(&b).is_err());
    }
}
