//! Spatial correlation, correlated Rayleigh fading, pilot reception and
//! MMSE channel estimation.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::access::{PilotBook, ServedPairs};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Cholesky};
use crate::rng::complex_normal;
use crate::scalar::{cplx, czero, Real, C};
use crate::topology::{wrap_offset, LargeScale, Placement};

/// Shape of the per-antenna correlation `R_kl / beta_kl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationModel {
    /// Gaussian local scattering around the UE-AP azimuth with a
    /// half-wavelength uniform linear array.
    LocalScattering { asd_deg: f64 },
    /// `R_kl = beta_kl I_N`.
    Uncorrelated,
}

impl Default for CorrelationModel {
    fn default() -> Self {
        CorrelationModel::LocalScattering { asd_deg: 15.0 }
    }
}

/// Integer-order Bessel functions `J_0(x) ..= J_{n_max}(x)` by Miller's
/// backward recurrence, normalized with `J_0 + 2 sum J_{2k} = 1`.
pub fn bessel_j_orders(x: f64, n_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = {
        let m = (n_max as f64).max(ax) + 20.0 + (40.0 * (n_max as f64).max(ax)).sqrt();
        2 * ((m as usize) / 2 + 1)
    };
    let mut j_next = 0.0f64;
    let mut j_cur = 1e-30f64;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if k - 1 <= n_max {
            out[k - 1] = j_cur;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j_cur;
        }
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += j_cur;
    for (n, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if x < 0.0 && n % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// `E{exp(j pi d sin(phi + delta))}` with `delta ~ N(0, asd^2)`, via the
/// Jacobi-Anger series `sum_n J_n(pi d) exp(j n phi) exp(-n^2 asd^2 / 2)`.
pub fn local_scattering_entry(antenna_offset: i64, nominal_angle: f64, asd_rad: f64) -> (f64, f64) {
    if antenna_offset == 0 {
        return (1.0, 0.0);
    }
    let z = PI * antenna_offset as f64;
    let n_max = (z.abs() + 30.0 + 10.0 * z.abs().cbrt()) as usize;
    let j = bessel_j_orders(z, n_max);
    let mut re = j[0];
    let mut im = 0.0;
    for n in 1..=n_max {
        let damp = (-(n as f64).powi(2) * asd_rad * asd_rad / 2.0).exp();
        if damp == 0.0 {
            break;
        }
        // J_{-n} = (-1)^n J_n
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let (s, c) = (n as f64 * nominal_angle).sin_cos();
        re += damp * j[n] * (c + sign * c);
        im += damp * j[n] * (s - sign * s);
    }
    (re, im)
}

/// Unit-diagonal correlation shape for an `n`-antenna array.
pub fn local_scattering_shape<T: Real>(n: usize, nominal_angle: f64, asd_rad: f64) -> CMatrix<T> {
    let entries: Vec<(f64, f64)> = (0..n as i64)
        .map(|d| local_scattering_entry(d, nominal_angle, asd_rad))
        .collect();
    CMatrix::from_fn(n, |i, k| {
        let d = i as i64 - k as i64;
        let (re, im) = entries[d.unsigned_abs() as usize];
        if d >= 0 {
            cplx(T::of(re), T::of(im))
        } else {
            cplx(T::of(re), T::of(-im))
        }
    })
}

/// `R_kl` for every UE-AP pair together with its square root.
#[derive(Debug, Clone)]
pub struct SpatialCorrelation<T> {
    num_ues: usize,
    num_aps: usize,
    antennas: usize,
    r: Vec<CMatrix<T>>,
    sqrt: Vec<CMatrix<T>>,
}

impl<T: Real> SpatialCorrelation<T> {
    /// Wraps explicit `K x L` row-major matrices, checking Hermitian PSD.
    pub fn from_matrices(num_ues: usize, num_aps: usize, r: Vec<CMatrix<T>>) -> Result<Self> {
        assert_eq!(r.len(), num_ues * num_aps);
        let antennas = r.first().map_or(1, CMatrix::dim);
        let mut sqrt = Vec::with_capacity(r.len());
        for m in &r {
            if m.dim() != antennas || !m.is_hermitian(T::of(1e-9)) {
                return Err(Error::InvalidConfig("correlation matrix is not Hermitian".into()));
            }
            sqrt.push(m.hermitian_sqrt()?);
        }
        Ok(Self {
            num_ues,
            num_aps,
            antennas,
            r,
            sqrt,
        })
    }

    /// `R_kl = beta_kl I_N`.
    pub fn scaled_identity(large_scale: &LargeScale<T>, antennas: usize) -> Self {
        let (k, l) = (large_scale.num_ues(), large_scale.num_aps());
        let mut r = Vec::with_capacity(k * l);
        let mut sqrt = Vec::with_capacity(k * l);
        for ue in 0..k {
            for ap in 0..l {
                let b = large_scale.beta(ue, ap);
                r.push(CMatrix::scaled_identity(antennas, b));
                sqrt.push(CMatrix::scaled_identity(antennas, b.sqrt()));
            }
        }
        Self {
            num_ues: k,
            num_aps: l,
            antennas,
            r,
            sqrt,
        }
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    /// `N`.
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    #[inline]
    pub fn r(&self, ue: usize, ap: usize) -> &CMatrix<T> {
        &self.r[ue * self.num_aps + ap]
    }

    #[inline]
    pub fn sqrt(&self, ue: usize, ap: usize) -> &CMatrix<T> {
        &self.sqrt[ue * self.num_aps + ap]
    }

    /// `tr(R_kl) / N`.
    pub fn gain(&self, ue: usize, ap: usize) -> T {
        self.r(ue, ap).trace_re() / T::of(self.antennas as f64)
    }
}

/// Builds `R_kl = beta_kl * shape_kl`; the nominal angle is the azimuth of the
/// UE seen from the AP on the wrap-around square.
pub fn build_correlation<T: Real>(
    large_scale: &LargeScale<T>,
    placement: &Placement,
    antennas: usize,
    model: &CorrelationModel,
) -> Result<SpatialCorrelation<T>> {
    if antennas == 0 {
        return Err(Error::InvalidConfig("antennas_per_ap must be at least 1".into()));
    }
    let asd = match *model {
        CorrelationModel::Uncorrelated => return Ok(SpatialCorrelation::scaled_identity(large_scale, antennas)),
        _ if antennas == 1 => return Ok(SpatialCorrelation::scaled_identity(large_scale, 1)),
        CorrelationModel::LocalScattering { asd_deg } => asd_deg.to_radians(),
    };
    let (k_count, l_count) = (large_scale.num_ues(), large_scale.num_aps());
    let mut r = Vec::with_capacity(k_count * l_count);
    for k in 0..k_count {
        for l in 0..l_count {
            let (dx, dy) = wrap_offset(
                placement.ap_positions[l],
                placement.ue_positions[k],
                placement.area_side_m,
            );
            let angle = dy.atan2(dx);
            r.push(local_scattering_shape::<T>(antennas, angle, asd).scale(large_scale.beta(k, l)));
        }
    }
    SpatialCorrelation::from_matrices(k_count, l_count, r)
}

/// Frame split and powers. Powers are in watts.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfig<T> {
    pub tau_c: usize,
    pub tau_p: usize,
    pub tau_u: usize,
    pub tau_d: usize,
    /// Per-UE pilot transmit power `p_k`.
    pub pilot_powers: Vec<T>,
    pub noise_power: T,
    /// Total downlink power per AP, `rho`.
    pub ap_power: T,
    /// Maximum uplink power per UE, `P`.
    pub ue_max_power: T,
}

impl<T: Real> FrameConfig<T> {
    /// All UEs send pilots at `ue_max_power`.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        tau_c: usize,
        tau_p: usize,
        tau_u: usize,
        tau_d: usize,
        noise_power: T,
        ap_power: T,
        ue_max_power: T,
        num_ues: usize,
    ) -> Self {
        Self {
            tau_c,
            tau_p,
            tau_u,
            tau_d,
            pilot_powers: vec![ue_max_power; num_ues],
            noise_power,
            ap_power,
            ue_max_power,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_p == 0 {
            return Err(Error::InvalidConfig("tau_p must be at least 1".into()));
        }
        if self.tau_p + self.tau_u + self.tau_d != self.tau_c {
            return Err(Error::InvalidConfig("frame split violated: tau_p + tau_u + tau_d != tau_c".into()));
        }
        let nonneg = |x: T| x >= T::zero() && x.is_finite();
        if !self.pilot_powers.iter().all(|&p| nonneg(p))
            || !nonneg(self.noise_power)
            || !nonneg(self.ap_power)
            || !nonneg(self.ue_max_power)
        {
            return Err(Error::InvalidConfig("powers must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// `tau_d / tau_c`.
    pub fn dl_prelog(&self) -> f64 {
        self.tau_d as f64 / self.tau_c as f64
    }

    /// `tau_u / tau_c`.
    pub fn ul_prelog(&self) -> f64 {
        self.tau_u as f64 / self.tau_c as f64
    }
}

/// One coherence block's channel realizations `h_kl`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw<T> {
    pub block: u64,
    num_aps: usize,
    antennas: usize,
    h: Vec<C<T>>,
}

impl<T: Real> ChannelDraw<T> {
    pub fn from_vectors(block: u64, num_ues: usize, num_aps: usize, antennas: usize, h: Vec<C<T>>) -> Self {
        assert_eq!(h.len(), num_ues * num_aps * antennas);
        Self {
            block,
            num_aps,
            antennas,
            h,
        }
    }

    #[inline]
    pub fn h(&self, ue: usize, ap: usize) -> &[C<T>] {
        let start = (ue * self.num_aps + ap) * self.antennas;
        &self.h[start..start + self.antennas]
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// `h_kl = R_kl^{1/2} g` with `g ~ CN(0, I_N)`, independently for every pair.
pub fn draw_channels<T: Real, R: Rng + ?Sized>(corr: &SpatialCorrelation<T>, block: u64, rng: &mut R) -> ChannelDraw<T> {
    let n = corr.antennas();
    let mut h = vec![czero(); corr.num_ues() * corr.num_aps() * n];
    let mut g = vec![czero::<T>(); n];
    for k in 0..corr.num_ues() {
        for l in 0..corr.num_aps() {
            for x in g.iter_mut() {
                *x = complex_normal(rng);
            }
            let start = (k * corr.num_aps() + l) * n;
            corr.sqrt(k, l).mul_vec_into(&g, &mut h[start..start + n]);
        }
    }
    ChannelDraw {
        block,
        num_aps: corr.num_aps(),
        antennas: n,
        h,
    }
}

/// `Psi_tl = sum_{i in S_t} tau_p p_i R_il + sigma^2 I_N` and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct PilotCovariance<T> {
    tau_p: usize,
    psi: Vec<CMatrix<T>>,
    chol: Vec<Cholesky<T>>,
}

impl<T: Real> PilotCovariance<T> {
    /// Sums over all UEs on each pilot, served or not.
    pub fn new(corr: &SpatialCorrelation<T>, book: &PilotBook, frame: &FrameConfig<T>) -> Result<Self> {
        let tau_p = book.tau_p();
        let n = corr.antennas();
        let mut psi = Vec::with_capacity(tau_p * corr.num_aps());
        let mut chol = Vec::with_capacity(tau_p * corr.num_aps());
        for t in 0..tau_p {
            for l in 0..corr.num_aps() {
                let mut m = CMatrix::scaled_identity(n, frame.noise_power);
                for &i in book.members(t) {
                    m.add_scaled(corr.r(i, l), T::of(tau_p as f64) * frame.pilot_powers[i]);
                }
                let c = m
                    .cholesky()
                    .map_err(|_| Error::SingularPilotCovariance { pilot: t, ap: l })?;
                psi.push(m);
                chol.push(c);
            }
        }
        Ok(Self { tau_p, psi, chol })
    }

    fn idx(&self, pilot: usize, ap: usize) -> usize {
        pilot * (self.psi.len() / self.tau_p) + ap
    }

    pub fn psi(&self, pilot: usize, ap: usize) -> &CMatrix<T> {
        &self.psi[self.idx(pilot, ap)]
    }

    pub fn cholesky(&self, pilot: usize, ap: usize) -> &Cholesky<T> {
        &self.chol[self.idx(pilot, ap)]
    }

    pub fn tau_p(&self) -> usize {
        self.tau_p
    }
}

/// Received pilot signals `y_tl` of one block.
#[derive(Debug, Clone)]
pub struct PilotObservation<'a, T> {
    pub block: u64,
    num_aps: usize,
    antennas: usize,
    y: Vec<C<T>>,
    pub psi: &'a PilotCovariance<T>,
}

impl<T: Real> PilotObservation<'_, T> {
    #[inline]
    pub fn y(&self, pilot: usize, ap: usize) -> &[C<T>] {
        let start = (pilot * self.num_aps + ap) * self.antennas;
        &self.y[start..start + self.antennas]
    }
}

/// `y_tl = sum_{i in S_t} sqrt(tau_p p_i) h_il + n_tl`, `n_tl ~ CN(0, sigma^2 I_N)`.
pub fn receive_pilots<'a, T: Real, R: Rng + ?Sized>(
    draw: &ChannelDraw<T>,
    book: &PilotBook,
    frame: &FrameConfig<T>,
    psi: &'a PilotCovariance<T>,
    rng: &mut R,
) -> PilotObservation<'a, T> {
    let n = draw.antennas;
    let l_count = draw.num_aps;
    let sigma = frame.noise_power.sqrt();
    let tau_p = T::of(frame.tau_p as f64);
    let mut y = vec![czero(); book.tau_p() * l_count * n];
    for t in 0..book.tau_p() {
        for l in 0..l_count {
            let out = &mut y[(t * l_count + l) * n..(t * l_count + l + 1) * n];
            for &i in book.members(t) {
                let amp = (tau_p * frame.pilot_powers[i]).sqrt();
                for (o, h) in out.iter_mut().zip(draw.h(i, l)) {
                    *o += h * amp;
                }
            }
            for o in out.iter_mut() {
                *o += complex_normal::<T, R>(rng) * sigma;
            }
        }
    }
    PilotObservation {
        block: draw.block,
        num_aps: l_count,
        antennas: n,
        y,
        psi,
    }
}

/// MMSE estimates `h_hat_kl` for served pairs only, aligned with [`ServedPairs`].
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateDraw<T> {
    pub block: u64,
    antennas: usize,
    h_hat: Vec<C<T>>,
}

impl<T: Real> EstimateDraw<T> {
    pub fn from_vectors(block: u64, antennas: usize, h_hat: Vec<C<T>>) -> Self {
        Self {
            block,
            antennas,
            h_hat,
        }
    }

    #[inline]
    pub fn get(&self, pair: usize) -> &[C<T>] {
        &self.h_hat[pair * self.antennas..(pair + 1) * self.antennas]
    }

    pub fn len(&self) -> usize {
        self.h_hat.len() / self.antennas
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.is_empty()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// `h_hat_kl = sqrt(p_k tau_p) R_kl Psi_tl^{-1} y_tl` for every `k in D_l`.
pub fn mmse_estimate<T: Real>(
    obs: &PilotObservation<'_, T>,
    corr: &SpatialCorrelation<T>,
    pairs: &ServedPairs,
    book: &PilotBook,
    frame: &FrameConfig<T>,
) -> EstimateDraw<T> {
    let n = corr.antennas();
    let tau_p = T::of(frame.tau_p as f64);
    let mut h_hat = vec![czero(); pairs.len() * n];
    let mut z = vec![czero::<T>(); n];
    for l in 0..pairs.num_aps() {
        // at most one served UE per pilot, so each y_tl is whitened once
        for idx in pairs.at_ap(l) {
            let (k, _) = pairs.pair(idx);
            let t = book.pilot(k).expect("served UE holds a pilot");
            z.copy_from_slice(obs.y(t, l));
            obs.psi.cholesky(t, l).solve_in_place(&mut z);
            let out = &mut h_hat[idx * n..(idx + 1) * n];
            corr.r(k, l).mul_vec_into(&z, out);
            let s = (frame.pilot_powers[k] * tau_p).sqrt();
            for o in out.iter_mut() {
                *o *= s;
            }
        }
    }
    EstimateDraw {
        block: obs.block,
        antennas: n,
        h_hat,
    }
}

/// Closed-form covariance of an MMSE estimate, `p_k tau_p R_kl Psi_tl^{-1} R_kl`.
pub fn estimate_covariance<T: Real>(
    ue: usize,
    ap: usize,
    corr: &SpatialCorrelation<T>,
    psi: &PilotCovariance<T>,
    book: &PilotBook,
    frame: &FrameConfig<T>,
) -> CMatrix<T> {
    let t = book.pilot(ue).expect("UE holds a pilot");
    let r = corr.r(ue, ap);
    let x = psi.cholesky(t, ap).solve_matrix(r);
    r.matmul(&x).scale(frame.pilot_powers[ue] * T::of(frame.tau_p as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn trapezoid_entry(d: i64, phi: f64, asd: f64) -> (f64, f64) {
        // brute force over +-12 standard deviations
        let steps = 400_000;
        let lo = -12.0 * asd;
        let h = 24.0 * asd / steps as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..=steps {
            let delta = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let pdf = (-delta * delta / (2.0 * asd * asd)).exp() / ((2.0 * PI).sqrt() * asd);
            let arg = PI * d as f64 * (phi + delta).sin();
            re += w * pdf * arg.cos() * h;
            im += w * pdf * arg.sin() * h;
        }
        (re, im)
    }

    #[test]
    fn bessel_known_values() {
        let j = bessel_j_orders(PI, 3);
        // J_0(pi), J_1(pi), J_2(pi), J_3(pi)
        let expected = [-0.304_242_177_644_093_9, 0.284_615_343_179_752_8, 0.485_433_932_631_509_3, 0.333_458_336_202_989_54];
        for (a, b) in j.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let j = bessel_j_orders(0.0, 2);
        assert_eq!(j, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_matches_quadrature_oracle() {
        let phi = 30f64.to_radians();
        let asd = 15f64.to_radians();
        let shape = local_scattering_shape::<f64>(4, phi, asd);
        for i in 0..4 {
            for k in 0..4 {
                let (re, im) = trapezoid_entry(i as i64 - k as i64, phi, asd);
                let e = shape[(i, k)];
                assert!((e.re - re).abs() < 1e-9 && (e.im - im).abs() < 1e-9, "({i},{k}) {e} vs {re}+{im}i");
            }
        }
        assert!(shape.is_hermitian(1e-14));
        assert!(shape.hermitian_eigenvalues()[0] > -1e-12);
    }

    #[test]
    fn wide_spread_limit_is_isotropic() {
        let shape = local_scattering_shape::<f64>(3, 0.7, 50.0);
        let j = bessel_j_orders(PI, 0)[0];
        let j2 = bessel_j_orders(2.0 * PI, 0)[0];
        assert!((shape[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((shape[(1, 0)].re - j).abs() < 1e-12 && shape[(1, 0)].im.abs() < 1e-12);
        assert!((shape[(2, 0)].re - j2).abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_model_is_identity() {
        let ls = LargeScale::from_gains(1, 1, vec![2.0]);
        let placement = Placement {
            ap_positions: vec![crate::topology::Point::new(0.0, 0.0)],
            ue_positions: vec![crate::topology::Point::new(1.0, 1.0)],
            area_side_m: 10.0,
        };
        let corr = build_correlation::<f64>(&ls, &placement, 3, &CorrelationModel::Uncorrelated).unwrap();
        assert_eq!(corr.r(0, 0), &CMatrix::scaled_identity(3, 2.0));
        let corr = build_correlation::<f64>(&ls, &placement, 1, &CorrelationModel::default()).unwrap();
        assert_eq!(corr.r(0, 0)[(0, 0)].re, 2.0);
        let corr = build_correlation::<f64>(&ls, &placement, 4, &CorrelationModel::default()).unwrap();
        assert!((corr.gain(0, 0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_correlation_gives_zero_channel() {
        let r = vec![CMatrix::<f64>::zeros(2)];
        let corr = SpatialCorrelation::from_matrices(1, 1, r).unwrap();
        let d = draw_channels(&corr, 0, &mut substream(1, Purpose::Block, 0));
        assert!(d.h(0, 0).iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn channel_draws_are_reproducible() {
        let ls = LargeScale::from_gains(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 2);
        let a = draw_channels(&corr, 5, &mut substream(3, Purpose::Block, 5));
        let b = draw_channels(&corr, 5, &mut substream(3, Purpose::Block, 5));
        assert_eq!(a, b);
    }

    #[test]
    fn scalar_channel_power() {
        let beta = 0.37;
        let ls = LargeScale::from_gains(1, 1, vec![beta]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 1);
        let mut rng = substream(9, Purpose::Gate, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|b| draw_channels(&corr, b, &mut rng).h(0, 0)[0].norm_sqr()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - beta).abs() < 3.0 * se, "{mean} vs {beta} (se {se})");
    }

    #[test]
    fn empty_pilot_is_pure_noise() {
        let ls = LargeScale::from_gains(1, 1, vec![1.0]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 2);
        let book = PilotBook::from_assignment(2, &[0]);
        let frame = FrameConfig::uniform(10, 2, 8, 0, 0.5, 1.0, 1.0, 1);
        let psi = PilotCovariance::new(&corr, &book, &frame).unwrap();
        assert_eq!(psi.psi(1, 0), &CMatrix::scaled_identity(2, 0.5));
    }

    #[test]
    fn shared_pilot_covariance() {
        let r1 = CMatrix::from_rows(2, vec![cplx(1.0, 0.0), cplx(0.2, 0.1), cplx(0.2, -0.1), cplx(1.0, 0.0)]);
        let r2 = CMatrix::scaled_identity(2, 0.5);
        let corr = SpatialCorrelation::from_matrices(2, 1, vec![r1.clone(), r2.clone()]).unwrap();
        let book = PilotBook::from_assignment(3, &[1, 1]);
        let mut frame = FrameConfig::uniform(10, 3, 7, 0, 0.1, 1.0, 1.0, 2);
        frame.pilot_powers = vec![0.3, 0.7];
        let psi = PilotCovariance::new(&corr, &book, &frame).unwrap();
        let mut expected = CMatrix::scaled_identity(2, 0.1);
        expected.add_scaled(&r1, 3.0 * 0.3);
        expected.add_scaled(&r2, 3.0 * 0.7);
        let mut diff = psi.psi(1, 0).clone();
        diff.add_scaled(&expected, -1.0);
        assert!(diff.frobenius() < 1e-14);
    }

    #[test]
    fn noiseless_single_ue_observation() {
        let ls = LargeScale::from_gains(1, 1, vec![2.0]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 2);
        let book = PilotBook::from_assignment(1, &[0]);
        let frame = FrameConfig::uniform(10, 1, 9, 0, 0.0, 1.0, 0.25, 1);
        let psi = PilotCovariance::new(&corr, &book, &frame).unwrap();
        let mut rng = substream(2, Purpose::Block, 0);
        let d = draw_channels(&corr, 0, &mut rng);
        let obs = receive_pilots(&d, &book, &frame, &psi, &mut rng);
        for (y, h) in obs.y(0, 0).iter().zip(d.h(0, 0)) {
            assert!((y - h * 0.25f64.sqrt()).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_with_empty_pilot_is_singular() {
        let ls = LargeScale::from_gains(1, 1, vec![2.0]);
        let corr = SpatialCorrelation::scaled_identity(&ls, 1);
        let book = PilotBook::from_assignment(2, &[0]);
        let frame = FrameConfig::uniform(10, 2, 8, 0, 0.0, 1.0, 1.0, 1);
        assert!(matches!(
            PilotCovariance::new(&corr, &book, &frame),
            Err(Error::SingularPilotCovariance { pilot: 1, ap: 0 })
        ));
    }

    #[test]
    fn frame_validation() {
        let f = FrameConfig::<f64>::uniform(200, 10, 190, 0, 1.0, 0.1, 0.1, 1);
        assert!(f.validate().is_ok());
        let f = FrameConfig::<f64>::uniform(200, 10, 190, 190, 1.0, 0.1, 0.1, 1);
        assert!(f.validate().is_err());
        let f = FrameConfig::<f64>::uniform(200, 10, 190, 0, 1.0, -0.1, 0.1, 1);
        assert!(f.validate().is_err());
    }
}
