//! Local precoding and combining.
//!
//! Every vector computed for a served pair `(k, l)` depends only on the
//! estimates of the UEs in `D_l`, the AP's power coefficients and the noise
//! power, so each AP can run this code on its own data.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::access::{PilotBook, ServedPairs};
use crate::channel::{estimate_covariance, EstimateDraw, FrameConfig, PilotCovariance, SpatialCorrelation};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{czero, norm_sqr, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precoding {
    Mr,
    Slnr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combining {
    Mr,
    Rzf,
}

impl fmt::Display for Precoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precoding::Mr => "mr",
            Precoding::Slnr => "slnr",
        })
    }
}

impl fmt::Display for Combining {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Combining::Mr => "mr",
            Combining::Rzf => "rzf",
        })
    }
}

/// Downlink power per served pair and uplink power per UE.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAlloc<T> {
    /// `rho_kl`, aligned with [`ServedPairs`].
    pub rho: Vec<T>,
    /// `p_k`.
    pub p: Vec<T>,
}

impl<T: Real> PowerAlloc<T> {
    pub fn new(pairs: &ServedPairs, ap_power: T, ue_max_power: T) -> Self {
        Self {
            rho: allocate_power_dl(pairs, ap_power),
            p: allocate_power_ul(ue_max_power, pairs.num_ues()),
        }
    }

    pub fn rho_at(&self, pairs: &ServedPairs, ue: usize, ap: usize) -> T {
        pairs.index(ue, ap).map_or(T::zero(), |i| self.rho[i])
    }
}

/// Equal split of the AP power over its served UEs: `rho / |D_l|`.
pub fn allocate_power_dl<T: Real>(pairs: &ServedPairs, ap_power: T) -> Vec<T> {
    let mut rho = vec![T::zero(); pairs.len()];
    for l in 0..pairs.num_aps() {
        let range = pairs.at_ap(l);
        let share = ap_power / T::of(range.len().max(1) as f64);
        for idx in range {
            rho[idx] = share;
        }
    }
    rho
}

/// Full power: `p_k = P` for every UE.
pub fn allocate_power_ul<T: Real>(ue_max_power: T, num_ues: usize) -> Vec<T> {
    vec![ue_max_power; num_ues]
}

/// Unnormalized precoding directions `w_bar_kl` of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions<T> {
    pub block: u64,
    antennas: usize,
    w: Vec<C<T>>,
}

impl<T: Real> Directions<T> {
    #[inline]
    pub fn get(&self, pair: usize) -> &[C<T>] {
        &self.w[pair * self.antennas..(pair + 1) * self.antennas]
    }

    pub fn len(&self) -> usize {
        self.w.len() / self.antennas
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// `w_bar_kl = conj(h_hat_kl)`.
pub fn precode_mr<T: Real>(est: &EstimateDraw<T>) -> Directions<T> {
    let n = est.antennas();
    let w = (0..est.len()).flat_map(|p| est.get(p).iter().map(|x| x.conj())).collect();
    Directions {
        block: est.block,
        antennas: n,
        w,
    }
}

/// `w_bar_kl = (sum_{i in D_l} rho_il conj(h_hat_il) h_hat_il^T + sigma^2 I)^{-1} conj(h_hat_kl)`.
pub fn precode_slnr<T: Real>(est: &EstimateDraw<T>, pairs: &ServedPairs, rho: &[T], noise_power: T) -> Directions<T> {
    let n = est.antennas();
    let mut w = vec![czero(); est.len() * n];
    let mut conj_h = vec![czero::<T>(); n];
    for l in 0..pairs.num_aps() {
        let range = pairs.at_ap(l);
        if range.is_empty() {
            continue;
        }
        let mut a = CMatrix::scaled_identity(n, noise_power);
        for idx in range.clone() {
            for (c, h) in conj_h.iter_mut().zip(est.get(idx)) {
                *c = h.conj();
            }
            a.add_outer(&conj_h, rho[idx]);
        }
        let chol = a.cholesky().expect("sigma^2 > 0 keeps the SLNR matrix positive definite");
        for idx in range {
            let out = &mut w[idx * n..(idx + 1) * n];
            for (o, h) in out.iter_mut().zip(est.get(idx)) {
                *o = h.conj();
            }
            chol.solve_in_place(out);
        }
    }
    Directions {
        block: est.block,
        antennas: n,
        w,
    }
}

/// `E{||w_bar_kl||^2}` per served pair and the resulting scale factors
/// `sqrt(rho_kl / E{||w_bar_kl||^2})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization<T> {
    pub norm_sq: Vec<T>,
    /// Variance of each `norm_sq` estimate (zero when computed analytically).
    pub norm_sq_var: Vec<T>,
    scale: Vec<T>,
}

impl<T: Real> Normalization<T> {
    pub fn new(pairs: &ServedPairs, norm_sq: Vec<T>, norm_sq_var: Vec<T>, rho: &[T]) -> Result<Self> {
        let mut scale = Vec::with_capacity(norm_sq.len());
        for (idx, (&e, &r)) in norm_sq.iter().zip(rho).enumerate() {
            if r == T::zero() {
                scale.push(T::zero());
            } else if e > T::zero() && e.is_finite() {
                scale.push((r / e).sqrt());
            } else {
                let (ue, ap) = pairs.pair(idx);
                return Err(Error::ZeroNormalization { ue, ap });
            }
        }
        Ok(Self {
            norm_sq,
            norm_sq_var,
            scale,
        })
    }

    /// MR: `E{||h_hat_kl||^2} = p_k tau_p tr(R_kl Psi_tl^{-1} R_kl)`.
    pub fn analytic_mr(
        pairs: &ServedPairs,
        corr: &SpatialCorrelation<T>,
        psi: &PilotCovariance<T>,
        book: &PilotBook,
        frame: &FrameConfig<T>,
        rho: &[T],
    ) -> Result<Self> {
        let norm_sq: Vec<T> = pairs
            .iter()
            .map(|(k, l)| estimate_covariance(k, l, corr, psi, book, frame).trace_re())
            .collect();
        let var = vec![T::zero(); norm_sq.len()];
        Self::new(pairs, norm_sq, var, rho)
    }

    pub fn scale(&self, pair: usize) -> T {
        self.scale[pair]
    }
}

/// Normalized precoders `w_kl`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders<T> {
    pub block: u64,
    antennas: usize,
    w: Vec<C<T>>,
}

impl<T: Real> Precoders<T> {
    pub fn from_vectors(block: u64, antennas: usize, w: Vec<C<T>>) -> Self {
        Self { block, antennas, w }
    }

    #[inline]
    pub fn get(&self, pair: usize) -> &[C<T>] {
        &self.w[pair * self.antennas..(pair + 1) * self.antennas]
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    /// `sum_{k in D_l} ||w_kl||^2`.
    pub fn ap_power(&self, pairs: &ServedPairs, ap: usize) -> T {
        pairs.at_ap(ap).map(|i| norm_sqr(self.get(i))).sum()
    }
}

/// `w_kl = sqrt(rho_kl / E{||w_bar_kl||^2}) w_bar_kl`.
pub fn normalize_precoders<T: Real>(dirs: &Directions<T>, norm: &Normalization<T>) -> Precoders<T> {
    let n = dirs.antennas;
    let mut w = dirs.w.clone();
    for (idx, chunk) in w.chunks_mut(n).enumerate() {
        let s = norm.scale(idx);
        for x in chunk {
            *x *= s;
        }
    }
    Precoders {
        block: dirs.block,
        antennas: n,
        w,
    }
}

/// Combining vectors `v_kl` of one block.
#[derive(Debug, Clone, PartialEq)]
pub struct Combiners<T> {
    pub block: u64,
    antennas: usize,
    v: Vec<C<T>>,
}

impl<T: Real> Combiners<T> {
    pub fn from_vectors(block: u64, antennas: usize, v: Vec<C<T>>) -> Self {
        Self { block, antennas, v }
    }

    #[inline]
    pub fn get(&self, pair: usize) -> &[C<T>] {
        &self.v[pair * self.antennas..(pair + 1) * self.antennas]
    }

    #[inline]
    pub fn get_mut(&mut self, pair: usize) -> &mut [C<T>] {
        &mut self.v[pair * self.antennas..(pair + 1) * self.antennas]
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// `v_kl = h_hat_kl`.
pub fn combine_mr<T: Real>(est: &EstimateDraw<T>) -> Combiners<T> {
    Combiners {
        block: est.block,
        antennas: est.antennas(),
        v: (0..est.len()).flat_map(|p| est.get(p).iter().copied()).collect(),
    }
}

/// `v_kl = p_k (sum_{i in D_l} p_i h_hat_il h_hat_il^H + sigma^2 I)^{-1} h_hat_kl`.
pub fn combine_rzf<T: Real>(est: &EstimateDraw<T>, pairs: &ServedPairs, p: &[T], noise_power: T) -> Combiners<T> {
    let n = est.antennas();
    let mut v = vec![czero(); est.len() * n];
    for l in 0..pairs.num_aps() {
        let range = pairs.at_ap(l);
        if range.is_empty() {
            continue;
        }
        let mut a = CMatrix::scaled_identity(n, noise_power);
        for idx in range.clone() {
            let (i, _) = pairs.pair(idx);
            a.add_outer(est.get(idx), p[i]);
        }
        let chol = a.cholesky().expect("sigma^2 > 0 keeps the RZF matrix positive definite");
        for idx in range {
            let (k, _) = pairs.pair(idx);
            let out = &mut v[idx * n..(idx + 1) * n];
            out.copy_from_slice(est.get(idx));
            chol.solve_in_place(out);
            for x in out.iter_mut() {
                *x *= p[k];
            }
        }
    }
    Combiners {
        block: est.block,
        antennas: n,
        v,
    }
}

/// Directions for the requested precoding scheme.
pub fn precode<T: Real>(
    scheme: Precoding,
    est: &EstimateDraw<T>,
    pairs: &ServedPairs,
    rho: &[T],
    noise_power: T,
) -> Directions<T> {
    match scheme {
        Precoding::Mr => precode_mr(est),
        Precoding::Slnr => precode_slnr(est, pairs, rho, noise_power),
    }
}

pub fn combine<T: Real>(
    scheme: Combining,
    est: &EstimateDraw<T>,
    pairs: &ServedPairs,
    p: &[T],
    noise_power: T,
) -> Combiners<T> {
    match scheme {
        Combining::Mr => combine_mr(est),
        Combining::Rzf => combine_rzf(est, pairs, p, noise_power),
    }
}
