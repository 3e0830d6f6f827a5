//! Scenario configuration: one JSON file fully determines a run.
//!
//! The file is flat-with-sections JSON. `(scenario, seed)` is a pure
//! function to the outputs at the byte level; the scenario digest (SHA-256
//! of the canonical serialization, minus the output directory) identifies a
//! run in the co-simulation handshake.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::GainSet;
use crate::estimator::QuadratureRule;
use crate::plant::VehicleParams;
use crate::track::{self, RefPath, TrackError, TrackSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("cannot parse scenario {path}: {detail}")]
    Parse { path: String, detail: String },
    /// Every violated constraint, collected before any run starts.
    #[error("invalid scenario:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Track(#[from] TrackError),
}

/// Configuration of one control loop: the ultra-local model `(nu, alpha)`,
/// the gains, and the estimation window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    /// Derivation order of the loop's ultra-local model.
    pub nu: u8,
    /// Input scaling; a plain config number, never read from the plant.
    pub alpha: f64,
    pub kp: f64,
    #[serde(default)]
    pub ki: f64,
    #[serde(default)]
    pub kd: f64,
    /// Estimation window length, s.
    pub tau: f64,
    /// Optional symmetric clamp on the error integral (for iPI/iPID).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub int_e_limit: Option<f64>,
    /// Estimator integration rule.
    #[serde(default)]
    pub quadrature: QuadratureRule,
}

impl LoopConfig {
    pub fn gains(&self) -> GainSet {
        GainSet {
            kp: self.kp,
            ki: self.ki,
            kd: self.kd,
        }
    }
}

/// Measurement noise standard deviations (zero disables a channel).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Longitudinal speed measurement, m/s.
    pub vx_std: f64,
    /// Lateral deviation measurement, m.
    pub d_std: f64,
}

/// An unmodeled constant drag step the controller must absorb.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceConfig {
    /// Extra drag force, N; zero disables the disturbance.
    pub extra_drag_n: f64,
    /// Time the step switches on, s.
    pub onset_s: f64,
}

/// Initial condition offsets relative to the on-path start.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    /// Lateral offset from the path start, m, positive left.
    pub lateral_offset_m: f64,
    /// Speed offset from the reference, m/s.
    pub speed_offset_mps: f64,
}

/// Where the reference track comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackSource {
    File { file: PathBuf },
    Preset { preset: String },
    Inline(TrackSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub vehicle: VehicleParams,
    /// Loop 1: output `vx`, input `t_w`, first-order model closed by iP.
    pub longitudinal: LoopConfig,
    /// Loop 2: output lateral deviation, input `delta`, second-order model
    /// closed by iPD.
    pub lateral: LoopConfig,
    /// Cutoff of the error-derivative low-pass, Hz.
    pub filter_cutoff_hz: f64,
    /// Controller period, s; must be a whole number of microseconds and an
    /// integer multiple of the plant substep.
    pub control_period_s: f64,
    /// Plant integration substep, s.
    pub plant_substep_s: f64,
    /// Simulated duration, s.
    pub horizon_s: f64,
    /// Prefix excluded from the metrics; defaults to `max(tau1, tau2) + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_exclude_s: Option<f64>,
    pub track: TrackSource,
    /// Lateral reference offset from the centerline, m.
    #[serde(default)]
    pub d_ref_m: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub seed: u64,
    /// Output directory for traces and metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Scenario {
    /// Loads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Collects every violated constraint; an empty list means valid.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.vehicle.validate() {
            errs.push(e.to_string());
        }
        if self.longitudinal.nu != 1 {
            errs.push(format!(
                "longitudinal loop must use nu = 1, got {}",
                self.longitudinal.nu
            ));
        }
        if self.lateral.nu != 2 {
            errs.push(format!(
                "lateral loop must use nu = 2, got {}",
                self.lateral.nu
            ));
        }
        for (name, lc) in [
            ("longitudinal", &self.longitudinal),
            ("lateral", &self.lateral),
        ] {
            if lc.alpha == 0.0 || !lc.alpha.is_finite() {
                errs.push(format!(
                    "{name}.alpha must be finite and nonzero, got {}",
                    lc.alpha
                ));
            }
            if let Err(e) = lc.gains().validate(Some(lc.nu)) {
                errs.push(format!("{name}: {e}"));
            }
            if !(lc.tau > 0.0) {
                errs.push(format!("{name}.tau must be > 0, got {}", lc.tau));
            }
        }
        if !(self.filter_cutoff_hz > 0.0) {
            errs.push(format!(
                "filter_cutoff_hz must be > 0, got {}",
                self.filter_cutoff_hz
            ));
        }
        if !(self.control_period_s > 0.0) {
            errs.push(format!(
                "control_period_s must be > 0, got {}",
                self.control_period_s
            ));
        } else {
            let us = self.control_period_s * 1e6;
            if (us - us.round()).abs() > 1e-6 || us.round() < 1.0 {
                errs.push(format!(
                    "control_period_s must be a whole number of microseconds, got {}",
                    self.control_period_s
                ));
            }
        }
        if !(self.plant_substep_s > 0.0) {
            errs.push(format!(
                "plant_substep_s must be > 0, got {}",
                self.plant_substep_s
            ));
        } else if self.control_period_s > 0.0 {
            let ratio = self.control_period_s / self.plant_substep_s;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio < 1.0 - 1e-9 {
                errs.push(format!(
                    "control_period_s ({}) must be an integer multiple of plant_substep_s ({})",
                    self.control_period_s, self.plant_substep_s
                ));
            }
        }
        if !(self.horizon_s >= 0.0) || !self.horizon_s.is_finite() {
            errs.push(format!(
                "horizon_s must be finite and >= 0, got {}",
                self.horizon_s
            ));
        } else if self.horizon_s <= self.warmup_exclude() && self.horizon_s > 0.0 {
            errs.push(format!(
                "horizon_s ({}) must exceed the warm-up exclusion ({})",
                self.horizon_s,
                self.warmup_exclude()
            ));
        }
        if let Some(w) = self.warmup_exclude_s {
            if !(w >= 0.0) {
                errs.push(format!("warmup_exclude_s must be >= 0, got {w}"));
            }
        }
        if !(self.noise.vx_std >= 0.0) || !(self.noise.d_std >= 0.0) {
            errs.push("noise standard deviations must be >= 0".into());
        }
        if !self.disturbance.extra_drag_n.is_finite() || !(self.disturbance.onset_s >= 0.0) {
            errs.push("disturbance must have finite drag and onset_s >= 0".into());
        }
        if !self.d_ref_m.is_finite() {
            errs.push(format!("d_ref_m must be finite, got {}", self.d_ref_m));
        }
        match &self.track {
            TrackSource::Preset { preset } => {
                if track::preset(preset).is_none() {
                    errs.push(format!("unknown track preset {preset:?}"));
                }
            }
            TrackSource::Inline(spec) => {
                if let Err(e) = spec.validate() {
                    errs.push(format!("inline track: {e}"));
                }
            }
            TrackSource::File { .. } => {} // existence checked at resolve time
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(errs))
        }
    }

    /// Resolves the track source to a path, plus the generator spec when the
    /// track is generated (it carries the speed-profile breakpoints).
    /// Relative file paths resolve against `base_dir`.
    pub fn resolve_track(
        &self,
        base_dir: &Path,
    ) -> Result<(RefPath, Option<TrackSpec>), ScenarioError> {
        match &self.track {
            TrackSource::File { file } => {
                let full = if file.is_absolute() {
                    file.clone()
                } else {
                    base_dir.join(file)
                };
                Ok((track::load_track_file(&full, track::DEFAULT_DS)?, None))
            }
            TrackSource::Preset { preset } => {
                let spec = track::preset(preset).ok_or_else(|| {
                    ScenarioError::Invalid(vec![format!("unknown track preset {preset:?}")])
                })?;
                let (path, _warnings) = spec.generate(track::DEFAULT_DS)?;
                Ok((path, Some(spec)))
            }
            TrackSource::Inline(spec) => {
                let (path, _warnings) = spec.generate(track::DEFAULT_DS)?;
                Ok((path, Some(spec.clone())))
            }
        }
    }

    /// Metrics exclusion prefix: configured, or `max(tau1, tau2) + 1 s`.
    pub fn warmup_exclude(&self) -> f64 {
        self.warmup_exclude_s
            .unwrap_or_else(|| self.longitudinal.tau.max(self.lateral.tau) + 1.0)
    }

    /// Control period in whole microseconds.
    pub fn period_us(&self) -> u64 {
        (self.control_period_s * 1e6).round() as u64
    }

    /// Plant substeps per control period.
    pub fn substeps_per_period(&self) -> u32 {
        (self.control_period_s / self.plant_substep_s).round() as u32
    }

    /// Number of control steps over the horizon.
    pub fn n_steps(&self) -> u64 {
        (self.horizon_s / self.control_period_s + 1e-9).floor() as u64
    }

    /// SHA-256 over the canonical serialization with the output directory
    /// blanked; both co-simulation sides must agree on it.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        let json = serde_json::to_string(&canonical).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// Desk-scale default scenario on the tight reference track.
    ///
    /// `alpha1` is the torque-to-acceleration scale `1/(m*rw)` of a 1500 kg
    /// car; `alpha2` the steering-to-lateral-acceleration scale `v^2/L` at a
    /// 15 m/s nominal speed. Both are frozen config numbers derived offline.
    pub fn desk_default() -> Self {
        Scenario {
            vehicle: VehicleParams::default(),
            longitudinal: LoopConfig {
                nu: 1,
                alpha: 1.0 / 450.0,
                kp: 1.0,
                ki: 0.0,
                kd: 0.0,
                tau: 0.5,
                int_e_limit: None,
                quadrature: QuadratureRule::default(),
            },
            lateral: LoopConfig {
                nu: 2,
                alpha: 225.0 / 2.7,
                kp: 4.0,
                ki: 0.0,
                kd: 4.0,
                // 8 control periods: the shortest window the estimator
                // accepts at 100 Hz. The lateral loop pays for window length
                // twice (estimation lag plus velocity build-up at curvature
                // steps), so it runs much shorter than loop 1.
                tau: 0.08,
                int_e_limit: None,
                quadrature: QuadratureRule::default(),
            },
            filter_cutoff_hz: 10.0,
            control_period_s: 0.01,
            plant_substep_s: 0.001,
            horizon_s: 120.0,
            warmup_exclude_s: None,
            track: TrackSource::Preset {
                preset: "satory-mini".into(),
            },
            d_ref_m: 0.0,
            noise: NoiseConfig::default(),
            disturbance: DisturbanceConfig::default(),
            initial: InitialConfig::default(),
            seed: 0,
            out_dir: None,
        }
    }

    /// Default scenario on the gentle (large-radius) track variant.
    pub fn desk_gentle() -> Self {
        let mut s = Self::desk_default();
        s.track = TrackSource::Preset {
            preset: "satory-mini-gentle".into(),
        };
        // alpha2 at the 60 km/h nominal speed of the gentle profile
        s.lateral.alpha = (60.0f64 / 3.6).powi(2) / 2.7;
        s.horizon_s = 80.0;
        s
    }
}
