//! The two-loop path-tracking architecture.
//!
//! Loop 1 (longitudinal): output `y1 = vx`, input `u1 = t_w`, first-order
//! ultra-local model closed by an iP. Loop 2 (lateral): output `y2 = d` (the
//! signed lateral deviation), input `u2 = delta`, second-order model closed
//! by an iPD. The loops look decoupled; every coupling between them lands in
//! the estimated terms `F1` and `F2` instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    ip_control, ipd_control, ipi_control, ipid_control, step_loop, ControlError, GainSet,
    LoopState, UltraLocalConfig,
};
use crate::estimator::{EstimatorConfig, EstimatorError, SampleWindow};
use crate::plant::{ActuationInput, PlantError, VehicleState};
use crate::scenario::{LoopConfig, Scenario};
use crate::track::{Projection, RefPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackingError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// One closed loop: model config, gains, estimation window and running state.
#[derive(Debug, Clone)]
pub struct ControlLoop {
    pub ultra: UltraLocalConfig,
    pub gains: GainSet,
    pub estimator: EstimatorConfig,
    pub state: LoopState,
    pub window: SampleWindow,
    pub int_e_limit: Option<f64>,
}

impl ControlLoop {
    pub fn from_config(cfg: &LoopConfig, control_period: f64) -> Result<Self, ControlError> {
        let ultra = UltraLocalConfig::new(cfg.nu, cfg.alpha)?;
        let gains = cfg.gains();
        gains.validate(Some(cfg.nu))?;
        let capacity = (cfg.tau / control_period).ceil() as usize + 8;
        Ok(Self {
            ultra,
            gains,
            estimator: EstimatorConfig {
                nu: cfg.nu,
                alpha: cfg.alpha,
                tau: cfg.tau,
                quadrature: cfg.quadrature,
            },
            state: LoopState::new(cfg.tau),
            window: SampleWindow::new(cfg.tau, capacity),
            int_e_limit: cfg.int_e_limit,
        })
    }

    /// Current `F` estimate, or zero while the window is still filling.
    fn f_or_warmup(&self) -> Result<f64, EstimatorError> {
        match self.estimator.estimate(&self.window) {
            Ok(f) => Ok(f),
            Err(EstimatorError::WarmingUp { .. }) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Dispatches to the intelligent control law selected by the model order
    /// and whether an integral gain is configured.
    fn law(&self, f_est: f64, ref_deriv: f64, e: f64) -> Result<f64, ControlError> {
        match (self.ultra.nu, self.gains.ki > 0.0) {
            (1, false) => ip_control(f_est, ref_deriv, e, &self.gains, self.ultra.alpha),
            (1, true) => ipi_control(
                f_est,
                ref_deriv,
                e,
                self.state.integral_e,
                &self.gains,
                self.ultra.alpha,
            ),
            (2, false) => ipd_control(
                f_est,
                ref_deriv,
                e,
                self.state.edot_filtered,
                &self.gains,
                self.ultra.alpha,
            ),
            (2, true) => ipid_control(
                f_est,
                ref_deriv,
                e,
                self.state.integral_e,
                self.state.edot_filtered,
                &self.gains,
                self.ultra.alpha,
            ),
            (n, _) => Err(ControlError::UnsupportedOrder(n)),
        }
    }
}

/// The longitudinal/lateral loop pair of one vehicle.
#[derive(Debug, Clone)]
pub struct LoopPair {
    pub longitudinal: ControlLoop,
    pub lateral: ControlLoop,
    /// Error-derivative filter cutoff, Hz.
    pub filter_cutoff_hz: f64,
    /// Lateral reference offset from the centerline, m.
    pub d_ref: f64,
}

impl LoopPair {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, ControlError> {
        let longitudinal =
            ControlLoop::from_config(&scenario.longitudinal, scenario.control_period_s)?;
        let lateral = ControlLoop::from_config(&scenario.lateral, scenario.control_period_s)?;
        if longitudinal.ultra.nu != 1 {
            return Err(ControlError::UnsupportedOrder(longitudinal.ultra.nu));
        }
        if lateral.ultra.nu != 2 {
            return Err(ControlError::UnsupportedOrder(lateral.ultra.nu));
        }
        Ok(Self {
            longitudinal,
            lateral,
            filter_cutoff_hz: scenario.filter_cutoff_hz,
            d_ref: scenario.d_ref_m,
        })
    }
}

/// What the controller sees each period: time, the two measured outputs and
/// the arc-length of the vehicle's projection (the reference lookup key).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub vx: f64,
    pub d: f64,
    pub s_star: f64,
}

/// Controller outputs of one period plus the estimator internals worth
/// tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    /// Raw (pre-limit) actuation.
    pub raw: ActuationInput,
    pub f1_est: f64,
    pub f2_est: f64,
    /// Speed tracking error `vx - v_ref(s*)`, as used by loop 1.
    pub e_v: f64,
    /// Lateral tracking error `d - d_ref`, as used by loop 2.
    pub e_d: f64,
}

/// Advances both loops by one period from a prepared measurement.
///
/// The estimator windows are fed the measured outputs paired with the
/// previously *applied* (limited) inputs, keeping the ultra-local models
/// consistent with what the plant actually received. During estimator
/// warm-up the loops run with `F_est = 0`, i.e. feedforward plus P/PD only.
pub fn control_from_measurement(
    pair: &mut LoopPair,
    meas: &Measurement,
    path: &RefPath,
    prev_applied: &ActuationInput,
    dt: f64,
) -> Result<ControlDecision, TrackingError> {
    pair.longitudinal
        .window
        .push(meas.t, meas.vx, prev_applied.t_w)?;
    pair.lateral
        .window
        .push(meas.t, meas.d, prev_applied.delta)?;

    let sample = path.sample(meas.s_star);

    // loop 1: speed tracking with reference-slope feedforward (chain rule
    // through the measured speed)
    let e_v = meas.vx - sample.v_ref;
    let vdot_ref = sample.dv_ref_ds * meas.vx;
    step_loop(
        &mut pair.longitudinal.state,
        e_v,
        dt,
        pair.filter_cutoff_hz,
        pair.longitudinal.int_e_limit,
    );
    let f1 = pair.longitudinal.f_or_warmup()?;
    let t_w = pair.longitudinal.law(f1, vdot_ref, e_v)?;

    // loop 2: centerline (or constant-offset) tracking, yddot_ref = 0
    let e_d = meas.d - pair.d_ref;
    step_loop(
        &mut pair.lateral.state,
        e_d,
        dt,
        pair.filter_cutoff_hz,
        pair.lateral.int_e_limit,
    );
    let f2 = pair.lateral.f_or_warmup()?;
    let delta = pair.lateral.law(f2, 0.0, e_d)?;

    Ok(ControlDecision {
        raw: ActuationInput { t_w, delta },
        f1_est: f1,
        f2_est: f2,
        e_v,
        e_d,
    })
}

/// Projects the vehicle position onto the path: the plant-side observer.
pub fn observe(path: &RefPath, state: &VehicleState, hint_s: f64) -> Projection {
    path.project(state.x, state.y, hint_s)
}

/// One full control step from a raw vehicle measurement: projects onto the
/// path, then runs both loops. Returns the decision and the projection (the
/// latter feeds the next call's hint).
pub fn control_step(
    pair: &mut LoopPair,
    state: &VehicleState,
    path: &RefPath,
    t: f64,
    dt: f64,
    hint_s: f64,
    prev_applied: &ActuationInput,
) -> Result<(ControlDecision, Projection), TrackingError> {
    let proj = observe(path, state, hint_s);
    let meas = Measurement {
        t,
        vx: state.vx,
        d: proj.d,
        s_star: proj.s,
    };
    let decision = control_from_measurement(pair, &meas, path, prev_applied, dt)?;
    Ok((decision, proj))
}

/// Scalar tracking metrics over a run, computed after excluding a warm-up
/// prefix. `max >= rms >= 0` for each error channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// Lateral deviation error, m.
    pub e_y_max: f64,
    pub e_y_rms: f64,
    /// Speed error, m/s.
    pub e_v_max: f64,
    pub e_v_rms: f64,
    /// Yaw vs. path-heading error, rad.
    pub e_psi_max: f64,
}

impl TrackingMetrics {
    /// Computes metrics from `(t, e_y, e_v, e_psi)` samples, skipping
    /// `t < exclude_s`.
    pub fn from_samples<'a>(
        samples: impl Iterator<Item = (f64, f64, f64, f64)> + 'a,
        exclude_s: f64,
    ) -> Self {
        let mut m = TrackingMetrics::default();
        let mut n = 0u64;
        let mut sum_y2 = 0.0;
        let mut sum_v2 = 0.0;
        for (t, e_y, e_v, e_psi) in samples {
            if t < exclude_s {
                continue;
            }
            n += 1;
            m.e_y_max = m.e_y_max.max(e_y.abs());
            m.e_v_max = m.e_v_max.max(e_v.abs());
            m.e_psi_max = m.e_psi_max.max(e_psi.abs());
            sum_y2 += e_y * e_y;
            sum_v2 += e_v * e_v;
        }
        if n > 0 {
            m.e_y_rms = (sum_y2 / n as f64).sqrt();
            m.e_v_rms = (sum_v2 / n as f64).sqrt();
        }
        m
    }

    /// Flat key-value JSON line, the metrics file format.
    pub fn to_flat_json(&self) -> String {
        format!(
            "{{\"e_y_max\":{},\"e_y_rms\":{},\"e_v_max\":{},\"e_v_rms\":{},\"e_psi_max\":{}}}\n",
            self.e_y_max, self.e_y_rms, self.e_v_max, self.e_v_rms, self.e_psi_max
        )
    }
}
