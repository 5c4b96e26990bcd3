//! Experiment configuration.
//!
//! Configs are TOML files with one table per concern (`[network]`,
//! `[frame]`, ...). Every field has a default, and the defaults form the
//! paper-scale profile. `validate` returns diagnostics instead of failing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::access::AccessParams;
use crate::channel::{CorrelationModel, FrameConfig};
use crate::error::{Error, Result};
use crate::montecarlo::MrNormalization;
use crate::scalar::Real;
use crate::se::Bound;
use crate::topology::{NetworkConfig, PathlossModel};
use crate::transceive::{Combining, Precoding};

/// Reference densities of the default profile, per km^2.
pub const AP_DENSITY_PER_KM2: f64 = 100.0;
pub const UE_DENSITY_PER_KM2: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas_per_ap: usize,
    pub area_side_m: f64,
    pub ap_height_m: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            num_aps: 400,
            num_ues: 100,
            antennas_per_ap: 4,
            area_side_m: 2000.0,
            ap_height_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub tau_c: usize,
    pub tau_p: usize,
    /// Uplink data length; `tau_c - tau_p` when evaluating uplink if unset.
    pub tau_u: Option<usize>,
    /// Downlink data length; `tau_c - tau_p` when evaluating downlink if unset.
    pub tau_d: Option<usize>,
    pub ap_power_mw: f64,
    pub ue_power_mw: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self {
            tau_c: 200,
            tau_p: 10,
            tau_u: None,
            tau_d: None,
            ap_power_mw: 100.0,
            ue_power_mw: 100.0,
            bandwidth_hz: 20e6,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 7.0,
        }
    }
}

impl FrameSection {
    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    /// Noise power in watts.
    pub fn noise_power_w(&self) -> f64 {
        10f64.powf(self.noise_power_dbm() / 10.0) / 1000.0
    }

    /// Frames used for the downlink and uplink evaluation respectively.
    ///
    /// Unless the data lengths are given, each link gets the whole data
    /// part of the block. A single given length leaves the rest to the other.
    pub fn frames<T: Real>(&self, num_ues: usize) -> (FrameConfig<T>, FrameConfig<T>) {
        let make = |tau_u, tau_d| {
            FrameConfig::uniform(
                self.tau_c,
                self.tau_p,
                tau_u,
                tau_d,
                T::of(self.noise_power_w()),
                T::of(self.ap_power_mw / 1000.0),
                T::of(self.ue_power_mw / 1000.0),
                num_ues,
            )
        };
        let rest = self.tau_c.saturating_sub(self.tau_p);
        let split = match (self.tau_u, self.tau_d) {
            (Some(u), Some(d)) => Some((u, d)),
            (Some(u), None) => Some((u, rest.saturating_sub(u))),
            (None, Some(d)) => Some((rest.saturating_sub(d), d)),
            (None, None) => None,
        };
        match split {
            Some((u, d)) => (make(u, d), make(u, d)),
            None => (make(0, rest), make(rest, 0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub precoding: Vec<Precoding>,
    pub combining: Vec<Combining>,
    pub bounds: Vec<Bound>,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            precoding: vec![Precoding::Mr, Precoding::Slnr],
            combining: vec![Combining::Mr, Combining::Rzf],
            bounds: vec![Bound::Hardening, Bound::UseAndForget, Bound::Genie],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub seed: u64,
    pub drops: usize,
    pub blocks: u64,
    pub warmup_blocks: u64,
    pub chunk: u64,
    pub mr_normalization: MrNormalization,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self {
            seed: 1,
            drops: 50,
            blocks: 1000,
            warmup_blocks: 2000,
            chunk: 64,
            mr_normalization: MrNormalization::Analytic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSection,
    pub pathloss: PathlossModel,
    pub correlation: CorrelationModel,
    pub access: AccessParams,
    pub frame: FrameSection,
    pub schemes: SchemeSection,
    pub monte_carlo: MonteCarloSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// 64 APs and 16 UEs on 0.8 km, same densities as the default.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.network.num_aps = 64;
        cfg.network.num_ues = 16;
        cfg.network.area_side_m = 800.0;
        cfg.monte_carlo.drops = 10;
        cfg
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Network geometry of drop `drop_seed`.
    pub fn network(&self, drop_seed: u64) -> NetworkConfig {
        NetworkConfig {
            area_side_m: self.network.area_side_m,
            num_aps: self.network.num_aps,
            num_ues: self.network.num_ues,
            antennas_per_ap: self.network.antennas_per_ap,
            ap_height_m: self.network.ap_height_m,
            rng_seed: drop_seed,
        }
    }

    /// Diagnostics; the config is usable when none has severity `error`.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut err = |field: &str, message: String| {
            out.push(Diagnostic {
                severity: Severity::Error,
                field: field.into(),
                message,
            })
        };
        let n = &self.network;
        if n.num_aps == 0 {
            err("network.num_aps", "at least one AP is required".into());
        }
        if n.num_ues == 0 {
            err("network.num_ues", "at least one UE is required".into());
        }
        if n.antennas_per_ap == 0 {
            err("network.antennas_per_ap", "at least one antenna per AP is required".into());
        }
        if !(n.area_side_m > 0.0 && n.area_side_m.is_finite()) {
            err("network.area_side_m", format!("area side must be positive, got {}", n.area_side_m));
        }
        if !(n.ap_height_m >= 0.0 && n.ap_height_m.is_finite()) {
            err("network.ap_height_m", format!("AP height must be non-negative, got {}", n.ap_height_m));
        }
        if !(self.pathloss.shadowing_std_db >= 0.0) {
            err("pathloss.shadowing_std_db", "shadowing deviation must be non-negative".into());
        }
        if let CorrelationModel::LocalScattering { asd_deg } = self.correlation {
            if !(asd_deg > 0.0 && asd_deg.is_finite()) {
                err("correlation.asd_deg", format!("angular spread must be positive, got {asd_deg}"));
            }
        }
        if self.access.max_neighbors == 0 {
            err("access.max_neighbors", "must be at least 1".into());
        }
        if !(self.access.neighbor_window_db >= 0.0) {
            err("access.neighbor_window_db", "must be non-negative".into());
        }
        let f = &self.frame;
        if f.tau_p == 0 {
            err("frame.tau_p", "at least one pilot is required".into());
        }
        if f.tau_p >= f.tau_c {
            err("frame.tau_p", format!("tau_p = {} leaves no data in tau_c = {}", f.tau_p, f.tau_c));
        }
        let split_violated = match (f.tau_u, f.tau_d) {
            (Some(u), Some(d)) => f.tau_p + u + d != f.tau_c,
            (Some(x), None) | (None, Some(x)) => f.tau_p + x > f.tau_c,
            (None, None) => false,
        };
        if split_violated {
            err(
                "frame",
                format!(
                    "frame split violated: tau_p + tau_u + tau_d != tau_c ({} + {:?} + {:?} vs {})",
                    f.tau_p, f.tau_u, f.tau_d, f.tau_c
                ),
            );
        }
        for (field, v) in [("frame.ap_power_mw", f.ap_power_mw), ("frame.ue_power_mw", f.ue_power_mw)] {
            if !(v >= 0.0 && v.is_finite()) {
                err(field, format!("power must be finite and non-negative, got {v}"));
            }
        }
        if !(f.bandwidth_hz > 0.0 && f.bandwidth_hz.is_finite()) {
            err("frame.bandwidth_hz", format!("bandwidth must be positive, got {}", f.bandwidth_hz));
        }
        let s = &self.schemes;
        if s.precoding.is_empty() && s.combining.is_empty() {
            err("schemes", "no precoding or combining scheme selected".into());
        }
        if s.bounds.contains(&Bound::ClosedForm) && !s.precoding.contains(&Precoding::Mr) {
            err("schemes.bounds", "closed-form bound requires MR precoding".into());
        }
        let mc = &self.monte_carlo;
        if mc.drops == 0 {
            err("monte_carlo.drops", "at least one drop is required".into());
        }
        if mc.blocks < 2 {
            err("monte_carlo.blocks", "at least two blocks are required".into());
        }
        let needs_warmup =
            s.precoding.contains(&Precoding::Slnr) || (mc.mr_normalization == MrNormalization::WarmUp && s.precoding.contains(&Precoding::Mr));
        if needs_warmup && mc.warmup_blocks < 2 {
            err("monte_carlo.warmup_blocks", "warm-up normalization needs at least two blocks".into());
        }
        if mc.chunk == 0 {
            err("monte_carlo.chunk", "chunk size must be positive".into());
        }
        if n.area_side_m > 0.0 {
            let km2 = (n.area_side_m / 1000.0).powi(2);
            for (field, count, reference) in [
                ("network.num_aps", n.num_aps, AP_DENSITY_PER_KM2),
                ("network.num_ues", n.num_ues, UE_DENSITY_PER_KM2),
            ] {
                let density = count as f64 / km2;
                if (density / reference - 1.0).abs() > 0.05 {
                    out.push(Diagnostic {
                        severity: Severity::Warning,
                        field: field.into(),
                        message: format!("density {density:.1}/km^2 differs from the reference {reference}/km^2"),
                    });
                }
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let errors: Vec<String> = self
            .validate()
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .map(|d| format!("{}: {}", d.field, d.message))
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}
