//! Substitute vehicle plant: a 3-DoF nonlinear single-track (bicycle) model
//! with linear tires, longitudinal/lateral coupling, actuator limits and a
//! classical RK4 integrator.
//!
//! The controllers never read this module's parameters at runtime; the plant
//! exists so the closed loop has realistic coupled dynamics to not know.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    /// State or derivative turned NaN/infinite: integration blow-up.
    #[error("non-finite vehicle state during integration")]
    NonFiniteState,
    #[error("invalid vehicle parameter: {0}")]
    BadParameter(String),
}

/// Physical parameters of the single-track plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Mass, kg.
    pub m: f64,
    /// Yaw moment of inertia, kg m^2.
    pub iz: f64,
    /// CoG to front axle, m.
    pub lf: f64,
    /// CoG to rear axle, m.
    pub lr: f64,
    /// Front cornering stiffness, N/rad.
    pub cf: f64,
    /// Rear cornering stiffness, N/rad.
    pub cr: f64,
    /// Wheel radius, m.
    pub rw: f64,
    /// Rolling resistance, N (about crr * m * g).
    pub f0: f64,
    /// Aerodynamic drag coefficient, N s^2/m^2.
    pub f2: f64,
    /// Gravity, m/s^2.
    pub g: f64,
    /// Torque magnitude limit, N m.
    pub t_max: f64,
    /// Steering magnitude limit, rad.
    pub delta_max: f64,
    /// Torque slew limit, N m/s.
    pub torque_rate: f64,
    /// Steering slew limit, rad/s.
    pub delta_rate: f64,
}

impl VehicleParams {
    /// Below this longitudinal speed the slip-angle expressions are singular;
    /// lateral dynamics are frozen instead.
    pub const V_EPS: f64 = 0.5;

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("m", self.m),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("cf", self.cf),
            ("cr", self.cr),
            ("rw", self.rw),
            ("g", self.g),
            ("t_max", self.t_max),
            ("delta_max", self.delta_max),
            ("torque_rate", self.torque_rate),
            ("delta_rate", self.delta_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::BadParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        for (name, v) in [("f0", self.f0), ("f2", self.f2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(PlantError::BadParameter(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Wheelbase `lf + lr`.
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Understeer gradient of the linear bicycle model,
    /// `m*(lr*cr - lf*cf) / (cf*cr*L)`.
    pub fn understeer_gradient(&self) -> f64 {
        self.m * (self.lr * self.cr - self.lf * self.cf) / (self.cf * self.cr * self.wheelbase())
    }
}

impl Default for VehicleParams {
    /// A mid-size passenger car.
    fn default() -> Self {
        Self {
            m: 1500.0,
            iz: 2250.0,
            lf: 1.2,
            lr: 1.5,
            cf: 80_000.0,
            cr: 80_000.0,
            rw: 0.30,
            f0: 220.0,
            f2: 0.42,
            g: 9.81,
            t_max: 4000.0,
            delta_max: 0.50,
            torque_rate: 20_000.0,
            delta_rate: 1.0,
        }
    }
}

/// Plant state: planar pose plus body-frame velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Global position, m.
    pub x: f64,
    pub y: f64,
    /// Yaw angle, rad.
    pub psi: f64,
    /// Longitudinal speed, m/s.
    pub vx: f64,
    /// Lateral speed, m/s.
    pub vy: f64,
    /// Yaw rate, rad/s.
    pub psi_dot: f64,
}

impl VehicleState {
    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.vx, self.vy, self.psi_dot]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Commanded torque and steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuationInput {
    /// Drive/brake torque, N m.
    pub t_w: f64,
    /// Steering angle, rad.
    pub delta: f64,
}

/// Front/rear lateral tire forces, N, from the linear tire model.
pub fn tire_forces(
    state: &VehicleState,
    input: &ActuationInput,
    params: &VehicleParams,
) -> (f64, f64) {
    if state.vx < VehicleParams::V_EPS {
        return (0.0, 0.0);
    }
    let alpha_f = input.delta - (state.vy + params.lf * state.psi_dot) / state.vx;
    let alpha_r = -(state.vy - params.lr * state.psi_dot) / state.vx;
    (params.cf * alpha_f, params.cr * alpha_r)
}

/// State time-derivative of the single-track model.
///
/// Slip angles `af = delta - (vy + lf*r)/vx`, `ar = -(vy - lr*r)/vx`; lateral
/// forces `Fyf = cf*af`, `Fyr = cr*ar`; longitudinal force
/// `Fx = t_w/rw - f0 - f2*vx^2`. Below [`VehicleParams::V_EPS`] the lateral
/// dynamics are frozen to avoid the slip-angle singularity.
pub fn derivatives(
    state: &VehicleState,
    input: &ActuationInput,
    params: &VehicleParams,
) -> Result<VehicleState, PlantError> {
    derivatives_ext(state, input, params, 0.0)
}

/// [`derivatives`] with an extra unmodeled drag force (N) applied along the
/// body x axis; used to inject disturbance steps the controller must absorb.
pub fn derivatives_ext(
    state: &VehicleState,
    input: &ActuationInput,
    params: &VehicleParams,
    extra_drag: f64,
) -> Result<VehicleState, PlantError> {
    if !state.is_finite() {
        return Err(PlantError::NonFiniteState);
    }
    let (fyf, fyr) = tire_forces(state, input, params);
    let fx = input.t_w / params.rw - params.f0 - params.f2 * state.vx * state.vx - extra_drag;
    let (sin_d, cos_d) = input.delta.sin_cos();
    let (sin_psi, cos_psi) = state.psi.sin_cos();

    let lateral_active = state.vx >= VehicleParams::V_EPS;
    let vx_dot = state.psi_dot * state.vy + (fx - fyf * sin_d) / params.m;
    let (vy_dot, psi_ddot) = if lateral_active {
        (
            -state.psi_dot * state.vx + (fyf * cos_d + fyr) / params.m,
            (params.lf * fyf * cos_d - params.lr * fyr) / params.iz,
        )
    } else {
        (0.0, 0.0)
    };

    let d = VehicleState {
        x: state.vx * cos_psi - state.vy * sin_psi,
        y: state.vx * sin_psi + state.vy * cos_psi,
        psi: state.psi_dot,
        vx: vx_dot,
        vy: vy_dot,
        psi_dot: psi_ddot,
    };
    if d.is_finite() {
        Ok(d)
    } else {
        Err(PlantError::NonFiniteState)
    }
}

fn axpy(state: &VehicleState, k: &VehicleState, h: f64) -> VehicleState {
    VehicleState {
        x: state.x + h * k.x,
        y: state.y + h * k.y,
        psi: state.psi + h * k.psi,
        vx: state.vx + h * k.vx,
        vy: state.vy + h * k.vy,
        psi_dot: state.psi_dot + h * k.psi_dot,
    }
}

/// Classical 4th-order Runge-Kutta advance with a generic right-hand side
/// evaluated at the stage times; `f(t, state)` must be smooth in `t` for the
/// nominal order to hold.
pub fn rk4_step_with<E>(
    state: &VehicleState,
    t: f64,
    dt: f64,
    mut f: impl FnMut(f64, &VehicleState) -> Result<VehicleState, E>,
) -> Result<VehicleState, E> {
    let k1 = f(t, state)?;
    let k2 = f(t + 0.5 * dt, &axpy(state, &k1, 0.5 * dt))?;
    let k3 = f(t + 0.5 * dt, &axpy(state, &k2, 0.5 * dt))?;
    let k4 = f(t + dt, &axpy(state, &k3, dt))?;
    let sixth = dt / 6.0;
    Ok(VehicleState {
        x: state.x + sixth * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: state.y + sixth * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        psi: state.psi + sixth * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
        vx: state.vx + sixth * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
        vy: state.vy + sixth * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
        psi_dot: state.psi_dot
            + sixth * (k1.psi_dot + 2.0 * k2.psi_dot + 2.0 * k3.psi_dot + k4.psi_dot),
    })
}

/// RK4 advance with the input held constant over `dt`.
pub fn rk4_step(
    state: &VehicleState,
    input: &ActuationInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState, PlantError> {
    rk4_step_with(state, 0.0, dt, |_, s| derivatives(s, input, params))
}

/// Magnitude clamp to the actuator range, then slew clamp to
/// `prev +- rate*dt`.
pub fn apply_limits(
    raw: &ActuationInput,
    prev: &ActuationInput,
    params: &VehicleParams,
    dt: f64,
) -> ActuationInput {
    debug_assert!(dt > 0.0);
    let clamp_slew = |v: f64, prev: f64, mag: f64, rate: f64| {
        let v = v.clamp(-mag, mag);
        v.clamp(prev - rate * dt, prev + rate * dt)
    };
    ActuationInput {
        t_w: clamp_slew(raw.t_w, prev.t_w, params.t_max, params.torque_rate),
        delta: clamp_slew(raw.delta, prev.delta, params.delta_max, params.delta_rate),
    }
}
