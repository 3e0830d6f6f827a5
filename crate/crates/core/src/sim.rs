//! Closed-loop simulation: plant at the substep rate, controller at the
//! control period, trace and metrics emission.
//!
//! [`PlantSim`] exposes each control period in two phases — measure/decide,
//! then actuate/advance — so the in-process runner and the co-simulation
//! server share every numeric code path; a split session over the wire
//! reproduces the in-process trace bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::plant::{
    apply_limits, derivatives_ext, rk4_step_with, ActuationInput, PlantError, VehicleState,
};
use crate::scenario::Scenario;
use crate::track::{wrap_angle, RefPath};
use crate::tracking::{
    control_from_measurement, observe, ControlDecision, LoopPair, Measurement, TrackingError,
    TrackingMetrics,
};

/// A run aborts when the vehicle strays this far from the path, m.
pub const PROJECTION_LOSS_M: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("plant blow-up at t = {t:.3} s: {source}")]
    PlantBlowUp { t: f64, source: PlantError },
    #[error("projection lost at t = {t:.3} s: vehicle {d:.1} m off the path")]
    ProjectionLoss { t: f64, d: f64 },
    #[error("controller failed at t = {t:.3} s: {source}")]
    Controller { t: f64, source: TrackingError },
    #[error("scenario error: {0}")]
    BadScenario(String),
}

/// One trace row; the fields are the trace CSV columns, in order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub vx: f64,
    pub v_ref: f64,
    pub e_v: f64,
    pub d: f64,
    pub e_psi: f64,
    pub t_w_raw: f64,
    pub t_w_applied: f64,
    pub delta_raw: f64,
    pub delta_applied: f64,
    pub f1_est: f64,
    pub f2_est: f64,
}

pub const TRACE_HEADER: &str = "t,x,y,x_ref,y_ref,vx,v_ref,e_v,d,e_psi,t_w_raw,t_w_applied,delta_raw,delta_applied,f1_est,f2_est";

/// Time series of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 160 + 64);
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.x,
                r.y,
                r.x_ref,
                r.y_ref,
                r.vx,
                r.v_ref,
                r.e_v,
                r.d,
                r.e_psi,
                r.t_w_raw,
                r.t_w_applied,
                r.delta_raw,
                r.delta_applied,
                r.f1_est,
                r.f2_est
            ));
        }
        out
    }

    /// Largest absolute per-column difference against another trace.
    pub fn max_column_diff(&self, other: &Trace) -> f64 {
        if self.rows.len() != other.rows.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (va, vb) in a.columns().iter().zip(b.columns().iter()) {
                worst = worst.max((va - vb).abs());
            }
        }
        worst
    }

    /// Metrics over this trace, excluding rows before `exclude_s`. The
    /// lateral error is taken against `d_ref`.
    pub fn metrics(&self, exclude_s: f64, d_ref: f64) -> TrackingMetrics {
        TrackingMetrics::from_samples(
            self.rows.iter().map(|r| (r.t, r.d - d_ref, r.e_v, r.e_psi)),
            exclude_s,
        )
    }
}

impl TraceRow {
    pub fn columns(&self) -> [f64; 16] {
        [
            self.t,
            self.x,
            self.y,
            self.x_ref,
            self.y_ref,
            self.vx,
            self.v_ref,
            self.e_v,
            self.d,
            self.e_psi,
            self.t_w_raw,
            self.t_w_applied,
            self.delta_raw,
            self.delta_applied,
            self.f1_est,
            self.f2_est,
        ]
    }
}

/// Diagnostic overrides for the in-process runner.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    /// Force the raw torque command to zero (plant coasts).
    pub zero_torque: bool,
    /// Force the raw steering command to zero (lateral loop open).
    pub zero_steer: bool,
}

/// Everything the plant side produces for one control period before the
/// actuation command is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub seq: u64,
    pub t_us: u64,
    /// Measured outputs handed to the controller (noisy when configured).
    pub meas: Measurement,
    /// Truth snapshot for the sensor frame and the trace.
    pub truth: TruthSnapshot,
    /// The local controller's decision for this period (the co-simulation
    /// server keeps it for the trace estimator columns and otherwise applies
    /// the remote command).
    pub decision: ControlDecision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSnapshot {
    pub state: VehicleState,
    pub d: f64,
    pub s_star: f64,
    pub e_psi: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub v_ref: f64,
}

/// Plant-side simulation of one scenario, advanced one control period at a
/// time.
pub struct PlantSim<'a> {
    scenario: &'a Scenario,
    path: &'a RefPath,
    loops: LoopPair,
    state: VehicleState,
    prev_applied: ActuationInput,
    hint_s: f64,
    seq: u64,
    n_steps: u64,
    period_us: u64,
    substeps: u32,
    rng: ChaCha12Rng,
    noise_vx: Option<Normal<f64>>,
    noise_d: Option<Normal<f64>>,
    trace: Trace,
}

impl<'a> PlantSim<'a> {
    pub fn new(scenario: &'a Scenario, path: &'a RefPath) -> Result<Self, SimError> {
        let loops =
            LoopPair::from_scenario(scenario).map_err(|e| SimError::BadScenario(e.to_string()))?;
        let start = path.sample(0.0);
        let (sin_h, cos_h) = start.heading.sin_cos();
        let state = VehicleState {
            x: start.x - scenario.initial.lateral_offset_m * sin_h,
            y: start.y + scenario.initial.lateral_offset_m * cos_h,
            psi: start.heading,
            vx: start.v_ref + scenario.initial.speed_offset_mps,
            vy: 0.0,
            psi_dot: 0.0,
        };
        let noise = |std: f64| (std > 0.0).then(|| Normal::new(0.0, std).expect("valid std"));
        Ok(Self {
            scenario,
            path,
            loops,
            state,
            prev_applied: ActuationInput::default(),
            hint_s: 0.0,
            seq: 0,
            n_steps: scenario.n_steps(),
            period_us: scenario.period_us(),
            substeps: scenario.substeps_per_period(),
            rng: ChaCha12Rng::seed_from_u64(scenario.seed),
            noise_vx: noise(scenario.noise.vx_std),
            noise_d: noise(scenario.noise.d_std),
            trace: Trace::default(),
        })
    }

    pub fn n_steps(&self) -> u64 {
        self.n_steps
    }

    pub fn steps_done(&self) -> u64 {
        self.seq
    }

    pub fn is_done(&self) -> bool {
        self.seq >= self.n_steps
    }

    /// Phase 1 of a control period: project onto the path, sample the
    /// measurement noise, feed the estimator windows and run the local
    /// control laws.
    pub fn measure_and_decide(&mut self) -> Result<StepContext, SimError> {
        let t_us = self.seq * self.period_us;
        let t = t_us as f64 * 1e-6;
        let proj = observe(self.path, &self.state, self.hint_s);
        if proj.d.abs() > PROJECTION_LOSS_M {
            return Err(SimError::ProjectionLoss { t, d: proj.d });
        }
        self.hint_s = proj.s;
        let sample = self.path.sample(proj.s);
        let truth = TruthSnapshot {
            state: self.state,
            d: proj.d,
            s_star: proj.s,
            e_psi: wrap_angle(self.state.psi - proj.heading),
            x_ref: sample.x,
            y_ref: sample.y,
            v_ref: sample.v_ref,
        };
        // fixed draw order per step keeps runs reproducible
        let vx_meas = self.state.vx
            + self
                .noise_vx
                .as_ref()
                .map_or(0.0, |n| n.sample(&mut self.rng));
        let d_meas = proj.d
            + self
                .noise_d
                .as_ref()
                .map_or(0.0, |n| n.sample(&mut self.rng));
        let meas = Measurement {
            t,
            vx: vx_meas,
            d: d_meas,
            s_star: proj.s,
        };
        let decision = control_from_measurement(
            &mut self.loops,
            &meas,
            self.path,
            &self.prev_applied,
            self.scenario.control_period_s,
        )
        .map_err(|source| SimError::Controller { t, source })?;
        Ok(StepContext {
            seq: self.seq,
            t_us,
            meas,
            truth,
            decision,
        })
    }

    /// Phase 2: apply limits to the commanded raw actuation, record the
    /// trace row and advance the plant by one control period.
    pub fn actuate_and_advance(
        &mut self,
        ctx: &StepContext,
        raw: ActuationInput,
    ) -> Result<(), SimError> {
        let t = ctx.t_us as f64 * 1e-6;
        let applied = apply_limits(
            &raw,
            &self.prev_applied,
            &self.scenario.vehicle,
            self.scenario.control_period_s,
        );
        self.trace.rows.push(TraceRow {
            t,
            x: ctx.truth.state.x,
            y: ctx.truth.state.y,
            x_ref: ctx.truth.x_ref,
            y_ref: ctx.truth.y_ref,
            vx: ctx.truth.state.vx,
            v_ref: ctx.truth.v_ref,
            e_v: ctx.truth.state.vx - ctx.truth.v_ref,
            d: ctx.truth.d,
            e_psi: ctx.truth.e_psi,
            t_w_raw: raw.t_w,
            t_w_applied: applied.t_w,
            delta_raw: raw.delta,
            delta_applied: applied.delta,
            f1_est: ctx.decision.f1_est,
            f2_est: ctx.decision.f2_est,
        });

        let dt = self.scenario.plant_substep_s;
        let disturbance = &self.scenario.disturbance;
        for j in 0..self.substeps {
            let t_sub = t + j as f64 * dt;
            let drag = if disturbance.extra_drag_n != 0.0 && t_sub >= disturbance.onset_s {
                disturbance.extra_drag_n
            } else {
                0.0
            };
            self.state = rk4_step_with(&self.state, t_sub, dt, |_, s| {
                derivatives_ext(s, &applied, &self.scenario.vehicle, drag)
            })
            .map_err(|source| SimError::PlantBlowUp { t: t_sub, source })?;
        }
        if !self.state.is_finite() {
            return Err(SimError::PlantBlowUp {
                t,
                source: PlantError::NonFiniteState,
            });
        }
        self.prev_applied = applied;
        self.seq += 1;
        Ok(())
    }

    /// Finishes the run: the trace plus metrics over the post-warm-up rows.
    pub fn finish(self) -> (Trace, TrackingMetrics) {
        let metrics = self
            .trace
            .metrics(self.scenario.warmup_exclude(), self.scenario.d_ref_m);
        (self.trace, metrics)
    }
}

/// Runs the whole scenario in process.
pub fn run_closed_loop(
    scenario: &Scenario,
    path: &RefPath,
    opts: RunOptions,
) -> Result<(Trace, TrackingMetrics), SimError> {
    let mut sim = PlantSim::new(scenario, path)?;
    while !sim.is_done() {
        let ctx = sim.measure_and_decide()?;
        let mut raw = ctx.decision.raw;
        if opts.zero_torque {
            raw.t_w = 0.0;
        }
        if opts.zero_steer {
            raw.delta = 0.0;
        }
        sim.actuate_and_advance(&ctx, raw)?;
    }
    Ok(sim.finish())
}
