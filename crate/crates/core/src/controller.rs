//! Ultra-local models and the intelligent P/PI/PD/PID control laws.
//!
//! An ultra-local model replaces the unknown plant by `y^(nu) = F + alpha*u`
//! over a short time window, where `F` lumps everything the model does not
//! capture (dynamics, couplings, disturbances) and is re-estimated online
//! from `(u, y)` measurements. The intelligent controllers cancel the current
//! `F` estimate, add reference-derivative feedforward and close the loop with
//! ordinary P/PI/PD/PID terms, so the ideal closed-loop error dynamics are
//! linear and depend on the gains only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from building or evaluating controllers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    /// `nu` outside `{1, 2}`. Higher derivation orders have no known use.
    #[error("derivation order nu must be 1 or 2, got {0}")]
    UnsupportedOrder(u8),
    /// `alpha` is zero or non-finite; every control law divides by it.
    #[error("input scaling alpha must be finite and nonzero, got {0}")]
    BadAlpha(f64),
    /// A gain violates its sign constraint.
    #[error("invalid gain: {0}")]
    BadGain(String),
    /// A controller input is NaN or infinite, which signals an upstream
    /// estimator divergence rather than a recoverable condition.
    #[error("non-finite controller input: {0}")]
    NonFinite(&'static str),
}

/// The `(nu, alpha)` pair of one ultra-local model `y^(nu) = F + alpha*u`.
///
/// `F` is deliberately not stored here: it is re-estimated every control
/// period by the window estimator and passed to the control laws by value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltraLocalConfig {
    /// Derivation order, 1 or 2.
    pub nu: u8,
    /// Input scaling, chosen so `alpha*u` and `y^(nu)` have comparable
    /// magnitude. Nonzero.
    pub alpha: f64,
}

impl UltraLocalConfig {
    pub fn new(nu: u8, alpha: f64) -> Result<Self, ControlError> {
        if nu != 1 && nu != 2 {
            return Err(ControlError::UnsupportedOrder(nu));
        }
        check_alpha(alpha)?;
        Ok(Self { nu, alpha })
    }
}

/// Classic P/I/D gains of one loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    /// Proportional gain, strictly positive.
    pub kp: f64,
    /// Integral gain, non-negative.
    #[serde(default)]
    pub ki: f64,
    /// Derivative gain, non-negative. Must be zero for a first-order loop.
    #[serde(default)]
    pub kd: f64,
}

impl GainSet {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Result<Self, ControlError> {
        let g = Self { kp, ki, kd };
        g.validate(None)?;
        Ok(g)
    }

    /// Checks sign constraints, and the order constraint when `nu` is known:
    /// a `nu = 1` loop admits iP/iPI only, so `kd` must be zero there.
    pub fn validate(&self, nu: Option<u8>) -> Result<(), ControlError> {
        if !(self.kp > 0.0) || !self.kp.is_finite() {
            return Err(ControlError::BadGain(format!(
                "kp must be finite and > 0, got {}",
                self.kp
            )));
        }
        if !(self.ki >= 0.0) || !self.ki.is_finite() {
            return Err(ControlError::BadGain(format!(
                "ki must be finite and >= 0, got {}",
                self.ki
            )));
        }
        if !(self.kd >= 0.0) || !self.kd.is_finite() {
            return Err(ControlError::BadGain(format!(
                "kd must be finite and >= 0, got {}",
                self.kd
            )));
        }
        if nu == Some(1) && self.kd != 0.0 {
            return Err(ControlError::BadGain(format!(
                "kd must be 0 for a first-order loop, got {}",
                self.kd
            )));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<(), ControlError> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(ControlError::BadAlpha(alpha));
    }
    Ok(())
}

fn check_finite(v: f64, name: &'static str) -> Result<(), ControlError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ControlError::NonFinite(name))
    }
}

/// Intelligent proportional controller (first-order model):
/// `u = -(F - ydot_ref + kp*e) / alpha`.
pub fn ip_control(
    f_est: f64,
    ydot_ref: f64,
    e: f64,
    gains: &GainSet,
    alpha: f64,
) -> Result<f64, ControlError> {
    check_alpha(alpha)?;
    check_finite(f_est, "f_est")?;
    check_finite(ydot_ref, "ydot_ref")?;
    check_finite(e, "e")?;
    Ok(-(f_est - ydot_ref + gains.kp * e) / alpha)
}

/// Intelligent proportional-integral controller (first-order model):
/// `u = -(F - ydot_ref + kp*e + ki*int_e) / alpha`.
pub fn ipi_control(
    f_est: f64,
    ydot_ref: f64,
    e: f64,
    int_e: f64,
    gains: &GainSet,
    alpha: f64,
) -> Result<f64, ControlError> {
    check_alpha(alpha)?;
    check_finite(f_est, "f_est")?;
    check_finite(ydot_ref, "ydot_ref")?;
    check_finite(e, "e")?;
    check_finite(int_e, "int_e")?;
    Ok(-(f_est - ydot_ref + gains.kp * e + gains.ki * int_e) / alpha)
}

/// Intelligent proportional-derivative controller (second-order model):
/// `u = -(F - yddot_ref + kp*e + kd*edot) / alpha`.
pub fn ipd_control(
    f_est: f64,
    yddot_ref: f64,
    e: f64,
    edot: f64,
    gains: &GainSet,
    alpha: f64,
) -> Result<f64, ControlError> {
    check_alpha(alpha)?;
    check_finite(f_est, "f_est")?;
    check_finite(yddot_ref, "yddot_ref")?;
    check_finite(e, "e")?;
    check_finite(edot, "edot")?;
    Ok(-(f_est - yddot_ref + gains.kp * e + gains.kd * edot) / alpha)
}

/// Intelligent proportional-integral-derivative controller (second-order
/// model): `u = -(F - yddot_ref + kp*e + ki*int_e + kd*edot) / alpha`.
pub fn ipid_control(
    f_est: f64,
    yddot_ref: f64,
    e: f64,
    int_e: f64,
    edot: f64,
    gains: &GainSet,
    alpha: f64,
) -> Result<f64, ControlError> {
    check_alpha(alpha)?;
    check_finite(f_est, "f_est")?;
    check_finite(yddot_ref, "yddot_ref")?;
    check_finite(e, "e")?;
    check_finite(int_e, "int_e")?;
    check_finite(edot, "edot")?;
    Ok(-(f_est - yddot_ref + gains.kp * e + gains.ki * int_e + gains.kd * edot) / alpha)
}

/// Per-loop bookkeeping between controller calls: the running error integral
/// (trapezoid rule), a low-pass filtered error derivative and the remaining
/// estimator warm-up time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoopState {
    /// Trapezoidal accumulation of the presented errors.
    pub integral_e: f64,
    /// Last presented error, `None` before the first sample.
    pub prev_e: Option<f64>,
    /// First-order low-pass of the backward difference `(e - prev_e)/dt`.
    pub edot_filtered: f64,
    /// Time until the estimation window is full, clamped at zero.
    pub warmup_remaining: f64,
}

impl LoopState {
    /// Fresh state whose warm-up clock starts at the estimator window length.
    pub fn new(warmup: f64) -> Self {
        Self {
            warmup_remaining: warmup,
            ..Self::default()
        }
    }

    /// True once the estimation window has filled.
    pub fn is_warm(&self) -> bool {
        self.warmup_remaining <= 0.0
    }
}

/// Advances a [`LoopState`] by one control period.
///
/// The integral advances by the trapezoid rule over `(prev_e, e)`; the error
/// derivative is the backward difference passed through a first-order
/// low-pass with cutoff `derivative_filter_cutoff_hz`. On the first call the
/// derivative is zero and the integral unchanged (a single sample bounds no
/// area). `int_e_limit`, when finite, clamps the integral symmetrically.
pub fn step_loop(
    state: &mut LoopState,
    e: f64,
    dt: f64,
    derivative_filter_cutoff_hz: f64,
    int_e_limit: Option<f64>,
) {
    debug_assert!(dt > 0.0, "control period must be positive");
    debug_assert!(
        derivative_filter_cutoff_hz > 0.0,
        "filter cutoff must be positive"
    );
    if let Some(prev) = state.prev_e {
        state.integral_e += 0.5 * (prev + e) * dt;
        let raw = (e - prev) / dt;
        // RC low-pass: alpha = dt / (rc + dt), rc = 1 / (2*pi*fc).
        let rc = 1.0 / (2.0 * std::f64::consts::PI * derivative_filter_cutoff_hz);
        let blend = dt / (rc + dt);
        state.edot_filtered += blend * (raw - state.edot_filtered);
    }
    if let Some(limit) = int_e_limit {
        state.integral_e = state.integral_e.clamp(-limit, limit);
    }
    state.prev_e = Some(e);
    state.warmup_remaining = (state.warmup_remaining - dt).max(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gains(kp: f64, ki: f64, kd: f64) -> GainSet {
        GainSet { kp, ki, kd }
    }

    #[test]
    fn config_rejects_bad_order_and_alpha() {
        assert!(UltraLocalConfig::new(1, 0.5).is_ok());
        assert!(UltraLocalConfig::new(2, -3.0).is_ok());
        assert!(matches!(
            UltraLocalConfig::new(0, 1.0),
            Err(ControlError::UnsupportedOrder(0))
        ));
        assert!(matches!(
            UltraLocalConfig::new(3, 1.0),
            Err(ControlError::UnsupportedOrder(3))
        ));
        assert!(matches!(
            UltraLocalConfig::new(1, 0.0),
            Err(ControlError::BadAlpha(_))
        ));
    }

    #[test]
    fn gains_order_constraint() {
        assert!(gains(1.0, 0.0, 0.0).validate(Some(1)).is_ok());
        assert!(gains(1.0, 0.5, 0.0).validate(Some(1)).is_ok());
        assert!(gains(1.0, 0.0, 2.0).validate(Some(1)).is_err());
        assert!(gains(1.0, 0.5, 2.0).validate(Some(2)).is_ok());
        assert!(gains(0.0, 0.0, 0.0).validate(None).is_err());
        assert!(gains(1.0, -0.1, 0.0).validate(None).is_err());
    }

    #[test]
    fn ip_examples() {
        let u = ip_control(0.0, 0.0, 0.0, &gains(1.0, 0.0, 0.0), 1.0).unwrap();
        assert_eq!(u, 0.0);
        // -(2 - 1 + 2*0.5)/2 = -1
        let u = ip_control(2.0, 1.0, 0.5, &gains(2.0, 0.0, 0.0), 2.0).unwrap();
        assert_eq!(u, -1.0);
        // -(0 - 0 + 3*1)/0.5 = -6
        let u = ip_control(0.0, 0.0, 1.0, &gains(3.0, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(u, -6.0);
    }

    #[test]
    fn ipi_examples() {
        let g = gains(1.0, 0.5, 0.0);
        assert_eq!(ipi_control(0.0, 0.0, 0.0, 0.0, &g, 1.0).unwrap(), 0.0);
        // pure feedforward: -(0 - 2)/1 = 2
        assert_eq!(ipi_control(0.0, 2.0, 0.0, 0.0, &g, 1.0).unwrap(), 2.0);
        // -(1 - 0 + 1*1 + 0.5*2)/2 = -1.5
        assert_eq!(ipi_control(1.0, 0.0, 1.0, 2.0, &g, 2.0).unwrap(), -1.5);
    }

    #[test]
    fn ipd_examples() {
        let g = gains(10.0, 0.0, 5.0);
        assert_eq!(ipd_control(0.0, 0.0, 0.0, 0.0, &g, 1.0).unwrap(), 0.0);
        // -(1 - 0 + 10*0.1 + 5*(-0.2))/4 = -0.25
        assert_eq!(ipd_control(1.0, 0.0, 0.1, -0.2, &g, 4.0).unwrap(), -0.25);
        // F-cancellation plus feedforward: -(-2 - 1)/1 = 3
        assert_eq!(ipd_control(-2.0, 1.0, 0.0, 0.0, &g, 1.0).unwrap(), 3.0);
    }

    #[test]
    fn ipid_examples() {
        let g = gains(1.0, 1.0, 1.0);
        assert_eq!(ipid_control(0.0, 0.0, 0.0, 0.0, 0.0, &g, 1.0).unwrap(), 0.0);
        // F exactly equals the feedforward term
        assert_eq!(ipid_control(1.0, 1.0, 0.0, 0.0, 0.0, &g, 1.0).unwrap(), 0.0);
        // -(0 - 0 + 1 + 1 + 1)/3 = -1
        assert_eq!(
            ipid_control(0.0, 0.0, 1.0, 1.0, 1.0, &g, 3.0).unwrap(),
            -1.0
        );
    }

    #[test]
    fn controllers_reject_non_finite() {
        let g = gains(1.0, 0.0, 0.0);
        assert!(ip_control(f64::NAN, 0.0, 0.0, &g, 1.0).is_err());
        assert!(ip_control(0.0, f64::INFINITY, 0.0, &g, 1.0).is_err());
        assert!(ipd_control(0.0, 0.0, 0.0, f64::NAN, &g, 1.0).is_err());
        assert!(ip_control(0.0, 0.0, 0.0, &g, 0.0).is_err());
    }

    #[test]
    fn f_cancellation_is_exact() {
        let g = gains(3.0, 0.7, 1.1);
        for &f in &[0.0, 1.0, -4.2, 1e6] {
            for &alpha in &[1.0, -0.5, 2.5] {
                let with_f = ipid_control(f, 0.3, 0.0, 0.0, 0.0, &g, alpha).unwrap();
                let without = ipid_control(0.0, 0.3, 0.0, 0.0, 0.0, &g, alpha).unwrap();
                assert_relative_eq!(with_f - without, -f / alpha, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn alpha_scaling_inverts_output() {
        let g = gains(2.0, 0.4, 0.9);
        let base = ipid_control(0.7, -0.2, 0.3, 0.1, -0.5, &g, 1.3).unwrap();
        for &beta in &[2.0, -3.0, 0.25] {
            let scaled = ipid_control(0.7, -0.2, 0.3, 0.1, -0.5, &g, beta * 1.3).unwrap();
            assert_relative_eq!(scaled, base / beta, max_relative = 1e-12);
        }
    }

    #[test]
    fn controllers_are_linear_in_all_inputs() {
        let g = gains(2.0, 0.4, 0.9);
        let lambda = 3.7;
        let u1 = ipid_control(0.7, -0.2, 0.3, 0.1, -0.5, &g, 1.3).unwrap();
        let u2 = ipid_control(
            lambda * 0.7,
            lambda * -0.2,
            lambda * 0.3,
            lambda * 0.1,
            lambda * -0.5,
            &g,
            1.3,
        )
        .unwrap();
        assert_relative_eq!(u2, lambda * u1, max_relative = 1e-12);
    }

    #[test]
    fn integral_accumulates_constant_error() {
        let mut s = LoopState::default();
        let dt = 0.01;
        let c = 2.5;
        step_loop(&mut s, c, dt, 10.0, None);
        assert_eq!(s.integral_e, 0.0); // first sample bounds no area
        let n = 100;
        for _ in 0..n {
            step_loop(&mut s, c, dt, 10.0, None);
        }
        assert_relative_eq!(s.integral_e, c * n as f64 * dt, max_relative = 1e-12);
        assert!(s.edot_filtered.abs() < 1e-12);
    }

    #[test]
    fn ramp_with_wide_filter_recovers_slope() {
        // cutoff so high the filter is a pass-through: edot == backward diff == 1
        let mut s = LoopState::default();
        let dt = 0.001;
        for k in 0..100 {
            step_loop(&mut s, k as f64 * dt, dt, 1e9, None);
        }
        assert_relative_eq!(s.edot_filtered, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn filtered_derivative_of_sinusoid_matches_analytic_response() {
        // e = sin(w t), dt = 1 ms, 10 Hz first-order filter. The oracle is the
        // exact discrete response of the backward difference cascaded with the
        // recursive low-pass: a sinusoid of amplitude A_f*w and phase phi_f.
        let dt = 1e-3;
        let f_sig = 1.0; // Hz
        let w = 2.0 * std::f64::consts::PI * f_sig;
        let cutoff = 10.0;
        let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff);
        let blend = dt / (rc + dt);

        // Discrete transfer function at z = e^{jw dt}:
        //   H(z) = [ (1 - z^-1) / dt ] * [ blend / (1 - (1-blend) z^-1) ]
        let (cosw, sinw) = ((w * dt).cos(), (w * dt).sin());
        // numerator of the difference: 1 - z^-1
        let (dre, dim) = (1.0 - cosw, sinw);
        // denominator of the filter: 1 - (1-blend) z^-1
        let (fre, fim) = (1.0 - (1.0 - blend) * cosw, (1.0 - blend) * sinw);
        let num_mag = (dre * dre + dim * dim).sqrt() / dt * blend;
        let den_mag = (fre * fre + fim * fim).sqrt();
        let gain = num_mag / den_mag;
        let phase = dim.atan2(dre) - fim.atan2(fre);

        let mut s = LoopState::default();
        let mut worst_vs_analytic: f64 = 0.0;
        let mut worst_vs_ideal: f64 = 0.0;
        let total = 2000; // 2 s
        for k in 0..=total {
            let t = k as f64 * dt;
            step_loop(&mut s, (w * t).sin(), dt, cutoff, None);
            if t >= 0.5 {
                // response to sin(w t) is gain * sin(w t + phase); the +pi/2
                // of differentiation is already inside `phase`
                let analytic = gain * (w * t + phase).sin();
                let ideal = w * (w * t).cos();
                worst_vs_analytic = worst_vs_analytic.max((s.edot_filtered - analytic).abs());
                worst_vs_ideal = worst_vs_ideal.max((s.edot_filtered - ideal).abs());
            }
        }
        // Tracks the analytic filtered response tightly once the transient
        // (time constant rc ~ 16 ms) has decayed.
        assert!(
            worst_vs_analytic < 0.01 * w,
            "deviation from analytic response: {} rad/s",
            worst_vs_analytic
        );
        // Against the ideal derivative the dominant term is the filter phase
        // lag atan(w rc) ~ 0.0997 rad, i.e. a peak deviation near 10% of w.
        assert!(
            worst_vs_ideal < 0.11 * w,
            "deviation from ideal derivative: {} rad/s",
            worst_vs_ideal
        );
        assert!(worst_vs_ideal > 0.05 * w, "phase lag unexpectedly small");
    }

    #[test]
    fn integral_clamp_applies_when_configured() {
        let mut s = LoopState::default();
        for _ in 0..1000 {
            step_loop(&mut s, 10.0, 0.01, 10.0, Some(0.5));
        }
        assert_eq!(s.integral_e, 0.5);
    }

    #[test]
    fn warmup_clock_counts_down() {
        let mut s = LoopState::new(0.05);
        assert!(!s.is_warm());
        for _ in 0..5 {
            step_loop(&mut s, 0.0, 0.01, 10.0, None);
        }
        assert!(s.is_warm());
        assert_eq!(s.warmup_remaining, 0.0);
    }
}
