//! AP/UE geometry on a wrap-around square and large-scale fading.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub area_side_m: f64,
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas_per_ap: usize,
    pub ap_height_m: f64,
    pub rng_seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.num_ues == 0 || self.antennas_per_ap == 0 {
            return Err(Error::InvalidConfig(
                "num_aps, num_ues and antennas_per_ap must be at least 1".into(),
            ));
        }
        if !(self.area_side_m > 0.0) || !self.area_side_m.is_finite() {
            return Err(Error::InvalidConfig("area_side_m must be positive".into()));
        }
        if !(self.ap_height_m >= 0.0) {
            return Err(Error::InvalidConfig("ap_height_m must be non-negative".into()));
        }
        Ok(())
    }

    /// Total number of AP antennas, `N * L`.
    pub fn total_antennas(&self) -> usize {
        self.antennas_per_ap * self.num_aps
    }
}

/// Distance-based pathloss in dB plus i.i.d. log-normal shadowing:
/// `beta_dB = intercept_db - slope_db * log10(d / 1 m) + shadowing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathlossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub shadowing_std_db: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            intercept_db: -30.5,
            slope_db: 36.7,
            shadowing_std_db: 4.0,
        }
    }
}

impl PathlossModel {
    pub fn without_shadowing(self) -> Self {
        Self {
            shadowing_std_db: 0.0,
            ..self
        }
    }

    /// Pathloss without shadowing, in dB.
    pub fn pathloss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db - self.slope_db * distance_m.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub ap_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    pub area_side_m: f64,
}

/// Drops `L` APs and `K` UEs i.i.d. uniformly on `[0, side)^2`.
pub fn place_network(cfg: &NetworkConfig) -> Placement {
    let mut rng = substream(cfg.rng_seed, Purpose::Placement, 0);
    let side = cfg.area_side_m;
    let mut draw = |count: usize| -> Vec<Point> {
        (0..count)
            .map(|_| {
                let x = rng.random::<f64>() * side;
                let y = rng.random::<f64>() * side;
                // guard against rounding up to `side`
                Point::new(x.min(side.next_down()), y.min(side.next_down()))
            })
            .collect()
    };
    let ap_positions = draw(cfg.num_aps);
    let ue_positions = draw(cfg.num_ues);
    Placement {
        ap_positions,
        ue_positions,
        area_side_m: side,
    }
}

/// Displacement from `a` to the nearest of the 9 toroidal images of `b`.
pub fn wrap_offset(a: Point, b: Point, side: f64) -> (f64, f64) {
    let mut best = (b.x - a.x, b.y - a.y);
    let mut best_d2 = f64::INFINITY;
    for sx in [-1.0, 0.0, 1.0] {
        for sy in [-1.0, 0.0, 1.0] {
            let dx = b.x + sx * side - a.x;
            let dy = b.y + sy * side - a.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                best = (dx, dy);
            }
        }
    }
    best
}

/// 3-D distance using the minimum planar wrap-around distance and the AP height.
pub fn wrap_distance(a: Point, b: Point, side: f64, height: f64) -> f64 {
    let (dx, dy) = wrap_offset(a, b, side);
    (dx * dx + dy * dy + height * height).sqrt()
}

/// Average channel gains `beta[k][l]` and the distances they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale<T> {
    num_ues: usize,
    num_aps: usize,
    beta: Vec<T>,
    distances: Vec<f64>,
}

impl<T: Real> LargeScale<T> {
    /// Builds from explicit `K x L` row-major gains; distances are left at zero.
    pub fn from_gains(num_ues: usize, num_aps: usize, beta: Vec<T>) -> Self {
        assert_eq!(beta.len(), num_ues * num_aps);
        Self {
            num_ues,
            num_aps,
            beta,
            distances: vec![0.0; num_ues * num_aps],
        }
    }

    pub fn num_ues(&self) -> usize {
        self.num_ues
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    #[inline]
    pub fn beta(&self, ue: usize, ap: usize) -> T {
        self.beta[ue * self.num_aps + ap]
    }

    pub fn beta_row(&self, ue: usize) -> &[T] {
        &self.beta[ue * self.num_aps..(ue + 1) * self.num_aps]
    }

    #[inline]
    pub fn distance(&self, ue: usize, ap: usize) -> f64 {
        self.distances[ue * self.num_aps + ap]
    }
}

pub fn large_scale_gains<T: Real>(
    placement: &Placement,
    cfg: &NetworkConfig,
    model: &PathlossModel,
) -> LargeScale<T> {
    let k_count = placement.ue_positions.len();
    let l_count = placement.ap_positions.len();
    let mut rng = substream(cfg.rng_seed, Purpose::Shadowing, 0);
    let mut beta = Vec::with_capacity(k_count * l_count);
    let mut distances = Vec::with_capacity(k_count * l_count);
    for ue in &placement.ue_positions {
        for ap in &placement.ap_positions {
            let d = wrap_distance(*ue, *ap, placement.area_side_m, cfg.ap_height_m);
            let shadow = if model.shadowing_std_db > 0.0 {
                model.shadowing_std_db * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            let db = model.pathloss_db(d) + shadow;
            beta.push(T::of(10f64.powf(db / 10.0)));
            distances.push(d);
        }
    }
    LargeScale {
        num_ues: k_count,
        num_aps: l_count,
        beta,
        distances,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(l: usize, k: usize, side: f64) -> NetworkConfig {
        NetworkConfig {
            area_side_m: side,
            num_aps: l,
            num_ues: k,
            antennas_per_ap: 1,
            ap_height_m: 10.0,
            rng_seed: 42,
        }
    }

    #[test]
    fn paper_scale_placement_stays_in_square() {
        let p = place_network(&cfg(400, 100, 2000.0));
        assert_eq!(p.ap_positions.len(), 400);
        assert_eq!(p.ue_positions.len(), 100);
        for q in p.ap_positions.iter().chain(&p.ue_positions) {
            assert!((0.0..2000.0).contains(&q.x) && (0.0..2000.0).contains(&q.y));
        }
    }

    #[test]
    fn degenerate_square() {
        let p = place_network(&cfg(1, 1, 1.0));
        for q in p.ap_positions.iter().chain(&p.ue_positions) {
            assert!((0.0..1.0).contains(&q.x) && (0.0..1.0).contains(&q.y));
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let c = cfg(20, 5, 500.0);
        assert_eq!(place_network(&c), place_network(&c));
        let mut other = c.clone();
        other.rng_seed += 1;
        assert_ne!(place_network(&c), place_network(&other));
    }

    #[test]
    fn wrap_distance_examples() {
        let d = wrap_distance(Point::new(0.0, 0.0), Point::new(1990.0, 0.0), 2000.0, 10.0);
        assert!((d - 200f64.sqrt()).abs() < 1e-12);
        let d = wrap_distance(Point::new(3.0, 4.0), Point::new(3.0, 4.0), 2000.0, 10.0);
        assert_eq!(d, 10.0);
        // brute force over all 9 shifts
        let (a, b) = (Point::new(0.0, 0.0), Point::new(1000.0, 1000.0));
        let mut best = f64::INFINITY;
        for sx in [-2000.0, 0.0, 2000.0] {
            for sy in [-2000.0, 0.0, 2000.0] {
                let dx: f64 = b.x + sx - a.x;
                let dy: f64 = b.y + sy - a.y;
                best = best.min((dx * dx + dy * dy + 100.0).sqrt());
            }
        }
        assert_eq!(wrap_distance(a, b, 2000.0, 10.0), best);
        assert!((best - (2e6f64 + 100.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn equidistant_ues_get_equal_gain() {
        let placement = Placement {
            ap_positions: vec![Point::new(50.0, 50.0)],
            ue_positions: vec![Point::new(80.0, 50.0), Point::new(50.0, 20.0)],
            area_side_m: 100.0,
        };
        let model = PathlossModel::default().without_shadowing();
        let ls: LargeScale<f64> = large_scale_gains(&placement, &cfg(1, 2, 100.0), &model);
        assert_eq!(ls.beta(0, 0), ls.beta(1, 0));
    }

    #[test]
    fn doubling_distance_ratio() {
        // height 0 so the 3-D distance equals the planar one
        let mut c = cfg(1, 2, 1000.0);
        c.ap_height_m = 0.0;
        let placement = Placement {
            ap_positions: vec![Point::new(0.0, 0.0)],
            ue_positions: vec![Point::new(100.0, 0.0), Point::new(200.0, 0.0)],
            area_side_m: 1000.0,
        };
        let ls: LargeScale<f64> =
            large_scale_gains(&placement, &c, &PathlossModel::default().without_shadowing());
        let ratio = ls.beta(1, 0) / ls.beta(0, 0);
        assert!((ratio - 2f64.powf(-3.67)).abs() < 1e-12);
        // -30.5 dB at 1 m
        assert!((10.0 * ls.beta(0, 0).log10() - (-30.5 - 36.7 * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn shadowing_is_reproducible() {
        let c = cfg(10, 4, 300.0);
        let p = place_network(&c);
        let a: LargeScale<f64> = large_scale_gains(&p, &c, &PathlossModel::default());
        let b: LargeScale<f64> = large_scale_gains(&p, &c, &PathlossModel::default());
        assert_eq!(a, b);
        for k in 0..4 {
            for l in 0..10 {
                assert!(a.beta(k, l) > 0.0);
                assert!(a.distance(k, l) >= 10.0);
            }
        }
    }

    proptest! {
        #[test]
        fn wrap_distance_symmetric(ax in 0.0..500.0f64, ay in 0.0..500.0f64, bx in 0.0..500.0f64, by in 0.0..500.0f64) {
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let d1 = wrap_distance(a, b, 500.0, 10.0);
            let d2 = wrap_distance(b, a, 500.0, 10.0);
            prop_assert!((d1 - d2).abs() < 1e-9);
            prop_assert!(d1 >= 10.0);
        }

        #[test]
        fn wrap_distance_translation_invariant(
            ax in 0.0..500.0f64, ay in 0.0..500.0f64,
            bx in 0.0..500.0f64, by in 0.0..500.0f64,
            sx in 0.0..500.0f64, sy in 0.0..500.0f64,
        ) {
            let side = 500.0;
            let shift = |p: Point| Point::new((p.x + sx).rem_euclid(side), (p.y + sy).rem_euclid(side));
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let d1 = wrap_distance(a, b, side, 10.0);
            let d2 = wrap_distance(shift(a), shift(b), side, 10.0);
            prop_assert!((d1 - d2).abs() < 1e-7);
        }
    }
}
