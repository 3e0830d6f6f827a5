//! Sliding-window algebraic estimation of the lumped dynamics term `F`.
//!
//! For a first-order ultra-local model `ydot = F + alpha*u`, treating `F` as
//! constant over a short window `[t - tau, t]` and annihilating the initial
//! condition in the operational domain yields the integral estimator
//!
//! ```text
//! F_est(t) = -(6/tau^3) * Int_0^tau [ (tau - 2s)*y + alpha*s*(tau - s)*u ] ds
//! ```
//!
//! with `s` the window-local time. The same procedure for a second-order
//! model `yddot = F + alpha*u` (differentiate the operational relation twice
//! to kill both initial conditions, then multiply by `s^-3` for noise
//! attenuation) gives
//!
//! ```text
//! F_est(t) = (60/tau^5) * Int_0^tau [ (tau^2 - 6*tau*s + 6*s^2)*y
//!                                     - (alpha/2)*s^2*(tau - s)^2*u ] ds
//! ```
//!
//! Both kernels annihilate the window-start initial conditions exactly: the
//! order-1 y-kernel has zero mean, the order-2 y-kernel has zero mean and
//! zero first moment, so constants (resp. affine functions) of time drop out.
//!
//! The integrals are evaluated against the piecewise-linear interpolant of
//! the samples with the polynomial kernels integrated in closed form
//! (precomputed kernel moments per grid cell). A plain sampled-kernel
//! trapezoid rule is also available; it is order-2 in the sample period on
//! everything including pure ramps, which at realistic rates leaves an
//! O(h^2/tau^2) bias on the estimate, while the kernel-moment form is exact
//! for linear signals.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum sample count before estimates are emitted.
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    /// Timestamps must be strictly increasing; anything else means the
    /// caller's clock is misconfigured.
    #[error("non-monotone sample timestamp {t} after {last}")]
    NonMonotoneTimestamp { t: f64, last: f64 },
    /// The window does not yet span `tau` (or holds fewer than
    /// [`MIN_SAMPLES`] samples); the caller runs with `F_est = 0` meanwhile.
    #[error("estimator warming up: window spans {span:.6} s of {needed:.6} s")]
    WarmingUp { span: f64, needed: f64 },
    #[error("estimator misuse: {0}")]
    Invalid(String),
}

/// One measurement triple `(t, y, u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: f64,
    pub u: f64,
}

/// Time-ordered `(t, y, u)` buffer covering the trailing `tau` seconds.
///
/// Eviction keeps the last sample at or before `t_latest - tau` so the
/// retained samples always bracket the full integration window; the span
/// therefore never exceeds `tau` plus one sample period.
#[derive(Debug, Clone)]
pub struct SampleWindow {
    tau: f64,
    capacity: usize,
    samples: VecDeque<Sample>,
}

impl SampleWindow {
    /// A window of length `tau` seconds holding at most `capacity` samples.
    pub fn new(tau: f64, capacity: usize) -> Self {
        assert!(tau > 0.0, "window length must be positive");
        assert!(capacity >= 2, "window capacity must be at least 2");
        Self {
            tau,
            capacity,
            samples: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time covered by the retained samples.
    pub fn span(&self) -> f64 {
        match (self.samples.front(), self.samples.back()) {
            (Some(first), Some(last)) => last.t - first.t,
            _ => 0.0,
        }
    }

    /// True when estimates can be emitted.
    pub fn is_warm(&self) -> bool {
        self.len() >= MIN_SAMPLES && self.span() >= self.tau
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Appends a sample and evicts stale ones.
    pub fn push(&mut self, t: f64, y: f64, u: f64) -> Result<(), EstimatorError> {
        if let Some(last) = self.samples.back() {
            if t <= last.t {
                return Err(EstimatorError::NonMonotoneTimestamp { t, last: last.t });
            }
        }
        self.samples.push_back(Sample { t, y, u });
        let cutoff = t - self.tau;
        // Keep one sample at or before the cutoff so interpolation at the
        // window start stays possible.
        while self.samples.len() > 2 && self.samples[1].t <= cutoff {
            self.samples.pop_front();
        }
        while self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
        Ok(())
    }
}

/// Which integration scheme evaluates the kernel integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Exact integration of the polynomial kernel against the piecewise-
    /// linear sample interpolant. Exact for linear signals at any rate.
    #[default]
    KernelMoments,
    /// Composite trapezoid on the sampled kernel-times-signal product.
    ProductTrapezoid,
}

/// Configuration of one window estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Derivation order of the ultra-local model, 1 or 2.
    pub nu: u8,
    /// Input scaling of the ultra-local model.
    pub alpha: f64,
    /// Window length in seconds.
    pub tau: f64,
    /// Integration rule.
    #[serde(default)]
    pub quadrature: QuadratureRule,
}

impl EstimatorConfig {
    pub fn estimate(&self, window: &SampleWindow) -> Result<f64, EstimatorError> {
        match self.nu {
            1 => estimate_f_order1_with(window, self.alpha, self.tau, self.quadrature),
            2 => estimate_f_order2_with(window, self.alpha, self.tau, self.quadrature),
            n => Err(EstimatorError::Invalid(format!(
                "unsupported derivation order {n}"
            ))),
        }
    }
}

/// `F` estimate for the first-order model, default quadrature.
pub fn estimate_f_order1(
    window: &SampleWindow,
    alpha: f64,
    tau: f64,
) -> Result<f64, EstimatorError> {
    estimate_f_order1_with(window, alpha, tau, QuadratureRule::default())
}

/// `F` estimate for the second-order model, default quadrature.
pub fn estimate_f_order2(
    window: &SampleWindow,
    alpha: f64,
    tau: f64,
) -> Result<f64, EstimatorError> {
    estimate_f_order2_with(window, alpha, tau, QuadratureRule::default())
}

pub fn estimate_f_order1_with(
    window: &SampleWindow,
    alpha: f64,
    tau: f64,
    rule: QuadratureRule,
) -> Result<f64, EstimatorError> {
    let grid = WindowGrid::build(window, tau)?;
    // y-kernel (tau - 2s), u-kernel alpha*s*(tau - s) = alpha*(tau*s - s^2)
    let ky = [tau, -2.0, 0.0, 0.0, 0.0];
    let ku = [0.0, alpha * tau, -alpha, 0.0, 0.0];
    let integral = grid.integrate(&ky, Channel::Y, rule) + grid.integrate(&ku, Channel::U, rule);
    Ok(-(6.0 / tau.powi(3)) * integral)
}

pub fn estimate_f_order2_with(
    window: &SampleWindow,
    alpha: f64,
    tau: f64,
    rule: QuadratureRule,
) -> Result<f64, EstimatorError> {
    let grid = WindowGrid::build(window, tau)?;
    // y-kernel tau^2 - 6*tau*s + 6*s^2
    let ky = [tau * tau, -6.0 * tau, 6.0, 0.0, 0.0];
    // u-kernel -(alpha/2)*s^2*(tau - s)^2 = -(alpha/2)*(tau^2 s^2 - 2 tau s^3 + s^4)
    let h = -alpha / 2.0;
    let ku = [0.0, 0.0, h * tau * tau, -2.0 * h * tau, h];
    let integral = grid.integrate(&ky, Channel::Y, rule) + grid.integrate(&ku, Channel::U, rule);
    Ok((60.0 / tau.powi(5)) * integral)
}

#[derive(Clone, Copy)]
enum Channel {
    Y,
    U,
}

/// Window-local sample grid: `sigma_i = t_i - (t_latest - tau)`, with the
/// first cell clipped at `sigma = 0` when the oldest retained sample lies
/// before the window start.
struct WindowGrid {
    sigma: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
}

impl WindowGrid {
    fn build(window: &SampleWindow, tau: f64) -> Result<Self, EstimatorError> {
        if !(tau > 0.0) {
            return Err(EstimatorError::Invalid(format!(
                "window length must be positive, got {tau}"
            )));
        }
        if window.len() < MIN_SAMPLES || window.span() + 1e-12 < tau {
            return Err(EstimatorError::WarmingUp {
                span: window.span(),
                needed: tau,
            });
        }
        let t_latest = window.samples.back().expect("non-empty").t;
        let start = t_latest - tau;
        let mut sigma = Vec::with_capacity(window.len());
        let mut y = Vec::with_capacity(window.len());
        let mut u = Vec::with_capacity(window.len());
        for s in window.samples() {
            sigma.push(s.t - start);
            y.push(s.y);
            u.push(s.u);
        }
        // Clip the leading cell at the window start.
        if sigma[0] < 0.0 {
            let w = -sigma[0] / (sigma[1] - sigma[0]);
            y[0] += w * (y[1] - y[0]);
            u[0] += w * (u[1] - u[0]);
            sigma[0] = 0.0;
        }
        Ok(Self { sigma, y, u })
    }

    fn integrate(&self, kernel: &[f64; 5], channel: Channel, rule: QuadratureRule) -> f64 {
        let vals = match channel {
            Channel::Y => &self.y,
            Channel::U => &self.u,
        };
        match rule {
            QuadratureRule::KernelMoments => kernel_moment_integral(&self.sigma, vals, kernel),
            QuadratureRule::ProductTrapezoid => {
                let f: Vec<f64> = self
                    .sigma
                    .iter()
                    .zip(vals)
                    .map(|(&s, &v)| poly_eval(kernel, s) * v)
                    .collect();
                trapezoid(&self.sigma, &f)
            }
        }
    }
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Exact integral of `kernel(s) * interp(s)` where `interp` is the
/// piecewise-linear interpolant of `(xs, vs)` and `kernel` a polynomial
/// (coefficients in ascending powers, degree at most 5).
///
/// On each cell `[a, b]` with endpoint values `va, vb` the interpolant is
/// `va*(b - s)/(b - a) + vb*(s - a)/(b - a)`, so the cell contributes
/// `va*(b*m0 - m1)/(b - a) + vb*(m1 - a*m0)/(b - a)` with `m0 = Int kernel`
/// and `m1 = Int s*kernel`. The moments come from the kernel antiderivatives
/// evaluated once per node.
pub fn kernel_moment_integral(xs: &[f64], vs: &[f64], kernel: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), vs.len());
    assert!(kernel.len() <= 6, "kernel degree above 5 is not supported");
    if xs.len() < 2 {
        return 0.0;
    }
    // antiderivatives P of kernel(s) and Q of s*kernel(s)
    let mut p = [0.0f64; 8];
    let mut q = [0.0f64; 8];
    for (j, &c) in kernel.iter().enumerate() {
        p[j + 1] = c / (j + 1) as f64;
        q[j + 2] = c / (j + 2) as f64;
    }
    let p = &p[..kernel.len() + 1];
    let q = &q[..kernel.len() + 2];
    let mut total = 0.0;
    let mut p_prev = poly_eval(p, xs[0]);
    let mut q_prev = poly_eval(q, xs[0]);
    for i in 0..xs.len() - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        let p_next = poly_eval(p, b);
        let q_next = poly_eval(q, b);
        let d = b - a;
        if d > 0.0 {
            let m0 = p_next - p_prev;
            let m1 = q_next - q_prev;
            total += vs[i] * (b * m0 - m1) / d + vs[i + 1] * (m1 - a * m0) / d;
        }
        p_prev = p_next;
        q_prev = q_next;
    }
    total
}

/// Composite trapezoid over a (possibly non-uniform) grid.
pub fn trapezoid(xs: &[f64], fs: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), fs.len());
    let mut total = 0.0;
    for i in 0..xs.len().saturating_sub(1) {
        total += 0.5 * (xs[i + 1] - xs[i]) * (fs[i] + fs[i + 1]);
    }
    total
}

/// Trapezoid integral of `kernel(s) * v(s)` with the kernel evaluated at the
/// sample points.
pub fn trapezoid_product(xs: &[f64], vs: &[f64], kernel: impl Fn(f64) -> f64) -> f64 {
    let fs: Vec<f64> = xs.iter().zip(vs).map(|(&x, &v)| kernel(x) * v).collect();
    trapezoid(xs, &fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Normal};

    /// Uniform window over `[t_end - tau, t_end]` at period `dt` filled from
    /// closures of window-local time.
    fn fill(
        tau: f64,
        dt: f64,
        t_end: f64,
        y: impl Fn(f64) -> f64,
        u: impl Fn(f64) -> f64,
    ) -> SampleWindow {
        let mut w = SampleWindow::new(tau, 1_000_000);
        let n = (tau / dt).round() as usize;
        for k in 0..=n {
            let sigma = k as f64 * dt;
            let t = t_end - tau + sigma;
            w.push(t, y(sigma), u(sigma)).unwrap();
        }
        w
    }

    #[test]
    fn push_appends_and_rejects_non_monotone() {
        let mut w = SampleWindow::new(1.0, 64);
        w.push(0.0, 1.0, 2.0).unwrap();
        assert_eq!(w.len(), 1);
        let err = w.push(0.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, EstimatorError::NonMonotoneTimestamp { .. }));
        let err = w.push(-1.0, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, EstimatorError::NonMonotoneTimestamp { .. }));
    }

    #[test]
    fn eviction_keeps_bracketing_sample() {
        let mut w = SampleWindow::new(0.1, 1024);
        let mut t = 0.0;
        while t <= 0.2501 {
            w.push(t, 0.0, 0.0).unwrap();
            t += 0.01;
        }
        let first = w.samples().next().unwrap().t;
        let last = w.samples().last().unwrap().t;
        assert!(first >= 0.15 - 1e-12, "first retained {first}");
        assert!(last <= 0.25 + 1e-12);
        assert!(w.span() >= 0.1 - 1e-12);
    }

    #[test]
    fn capacity_bounds_sample_count() {
        // span stays under tau, so only the capacity cap evicts
        let mut w = SampleWindow::new(10.0, 16);
        for k in 0..100 {
            w.push(k as f64 * 0.01, 0.0, 0.0).unwrap();
        }
        assert_eq!(w.len(), 16);
    }

    #[test]
    fn order1_zero_signals_give_zero() {
        let w = fill(0.5, 0.001, 0.5, |_| 0.0, |_| 0.0);
        assert_eq!(estimate_f_order1(&w, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn order1_linear_signal_recovers_f() {
        // ydot = F + alpha*u with F = 3, alpha = 1, u = 2: y = 5t + c.
        // The constant c is annihilated because the y-kernel has zero mean.
        for &c in &[0.0, -7.3, 1e4] {
            for &tau in &[0.1, 0.5, 2.0] {
                let w = fill(tau, tau / 500.0, 3.0, |s| 5.0 * s + c, |_| 2.0);
                let f = estimate_f_order1(&w, 1.0, tau).unwrap();
                assert_relative_eq!(f, 3.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn order1_monte_carlo_under_noise() {
        // y = 5t + eps, eps ~ N(0, 0.01), u = 2, alpha = 1, tau = 0.5 s at
        // 1 kHz: the kernel averages the noise down to a std of about 3e-3,
        // so essentially every trial lands within +-0.1 of F = 3.
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let trials = 1000;
        let mut hits = 0;
        for _ in 0..trials {
            let mut w = SampleWindow::new(0.5, 4096);
            for k in 0..=500 {
                let t = k as f64 * 0.001;
                w.push(t, 5.0 * t + noise.sample(&mut rng), 2.0).unwrap();
            }
            let f = estimate_f_order1(&w, 1.0, 0.5).unwrap();
            if (f - 3.0).abs() <= 0.1 {
                hits += 1;
            }
        }
        assert!(hits >= 990, "only {hits}/{trials} within 3 +- 0.1");
    }

    #[test]
    fn order2_polynomial_normalization() {
        // y = s^2/2 means yddot = 1 with u = 0, so F = 1: checks the
        // 60/tau^5 normalization of the derived kernel.
        let w = fill(1.0, 0.002, 1.0, |s| 0.5 * s * s, |_| 0.0);
        let f = estimate_f_order2(&w, 1.0, 1.0).unwrap();
        assert_relative_eq!(f, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn order2_annihilates_affine_offsets() {
        let base = fill(
            0.5,
            0.001,
            2.0,
            |s| 0.3 * s * s + (3.0 * s).sin() * 0.01,
            |s| s.cos(),
        );
        let f_base = estimate_f_order2(&base, 0.7, 0.5).unwrap();
        for &(y0, y1) in &[(5.0, 0.0), (0.0, -3.0), (120.0, 40.0)] {
            let shifted = fill(
                0.5,
                0.001,
                2.0,
                |s| 0.3 * s * s + (3.0 * s).sin() * 0.01 + y0 + y1 * s,
                |s| s.cos(),
            );
            let f = estimate_f_order2(&shifted, 0.7, 0.5).unwrap();
            assert_abs_diff_eq!(f, f_base, epsilon = 1e-9);
        }
    }

    #[test]
    fn order2_cancels_constant_input() {
        // u = c, y = (F + alpha*c) s^2/2: the u-kernel subtracts alpha*c.
        let (f_true, alpha, c) = (2.5, 0.8, -1.75);
        let w = fill(
            0.4,
            0.0005,
            0.4,
            |s| 0.5 * (f_true + alpha * c) * s * s,
            |_| c,
        );
        let f = estimate_f_order2(&w, alpha, 0.4).unwrap();
        assert_relative_eq!(f, f_true, max_relative = 1e-9);
    }

    #[test]
    fn order1_annihilates_constant_offset() {
        let base = fill(0.5, 0.001, 1.0, |s| (2.0 * s).sin(), |s| s);
        let f_base = estimate_f_order1(&base, 1.3, 0.5).unwrap();
        let shifted = fill(0.5, 0.001, 1.0, |s| (2.0 * s).sin() + 1e3, |s| s);
        let f = estimate_f_order1(&shifted, 1.3, 0.5).unwrap();
        assert_abs_diff_eq!(f, f_base, epsilon = 1e-9);
    }

    #[test]
    fn warming_up_until_span_reaches_tau() {
        let mut w = SampleWindow::new(0.5, 4096);
        for k in 0..40 {
            w.push(k as f64 * 0.01, 1.0, 0.0).unwrap();
            let r = estimate_f_order1(&w, 1.0, 0.5);
            assert!(matches!(r, Err(EstimatorError::WarmingUp { .. })));
        }
        for k in 40..=50 {
            w.push(k as f64 * 0.01, 1.0, 0.0).unwrap();
        }
        assert!(estimate_f_order1(&w, 1.0, 0.5).is_ok());
    }

    #[test]
    fn too_few_samples_is_warming_up() {
        let mut w = SampleWindow::new(0.1, 4096);
        for k in 0..6 {
            w.push(k as f64 * 0.05, 1.0, 0.0).unwrap();
        }
        assert!(w.span() > 0.1); // spans tau, but under MIN_SAMPLES
        assert!(matches!(
            estimate_f_order1(&w, 1.0, 0.1),
            Err(EstimatorError::WarmingUp { .. })
        ));
    }

    #[test]
    fn trapezoid_exact_on_constants_and_linears() {
        let tau = 0.73;
        let xs: Vec<f64> = (0..=100).map(|k| k as f64 * tau / 100.0).collect();
        let ones = vec![1.0; xs.len()];
        assert_abs_diff_eq!(trapezoid(&xs, &ones), tau, epsilon = 1e-12);

        let xs: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let lin: Vec<f64> = xs.clone();
        assert_abs_diff_eq!(trapezoid(&xs, &lin), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn trapezoid_is_second_order() {
        // Richardson on s^2 over [0, 1]: halving the step should divide the
        // error by about four.
        let exact = 1.0 / 3.0;
        let err = |n: usize| {
            let xs: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let fs: Vec<f64> = xs.iter().map(|x| x * x).collect();
            (trapezoid(&xs, &fs) - exact).abs()
        };
        let ratio = err(64) / err(128);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn product_trapezoid_agrees_with_moments_to_second_order() {
        // Both rules estimate the same integral; their difference is the
        // O(h^2) kernel-sampling error of the plain trapezoid.
        let w = fill(0.5, 0.001, 0.5, |s| 5.0 * s + 2.0, |_| 2.0);
        let f_mom = estimate_f_order1_with(&w, 1.0, 0.5, QuadratureRule::KernelMoments).unwrap();
        let f_trap =
            estimate_f_order1_with(&w, 1.0, 0.5, QuadratureRule::ProductTrapezoid).unwrap();
        assert_relative_eq!(f_mom, 3.0, max_relative = 1e-9);
        assert!((f_trap - 3.0).abs() < 1e-3);
        assert!(
            (f_trap - f_mom).abs() > 1e-7,
            "trapezoid bias should be visible"
        );
    }

    #[test]
    fn estimate_converges_at_second_order_in_the_period() {
        // Smooth cubic signal: the only error is the piecewise-linear
        // interpolation of y, which is O(h^2).
        let reference = {
            let w = fill(0.5, 0.5 / 4096.0, 0.5, |s| s * s * s, |_| 0.0);
            estimate_f_order1(&w, 1.0, 0.5).unwrap()
        };
        let err = |n: usize| {
            let w = fill(0.5, 0.5 / n as f64, 0.5, |s| s * s * s, |_| 0.0);
            (estimate_f_order1(&w, 1.0, 0.5).unwrap() - reference).abs()
        };
        let ratio = err(64) / err(128);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn window_shift_leaves_estimate_unchanged(shift in -500.0f64..500.0) {
            let y = |s: f64| 0.4 * s * s - 1.2 * s + 0.3;
            let u = |s: f64| (1.7 * s).sin();
            let base = fill(0.5, 0.001, 0.5, y, u);
            let shifted = fill(0.5, 0.001, 0.5 + shift.abs(), y, u);
            let f0 = estimate_f_order2(&base, 0.9, 0.5).unwrap();
            let f1 = estimate_f_order2(&shifted, 0.9, 0.5).unwrap();
            prop_assert!((f0 - f1).abs() < 1e-9 * f0.abs().max(1.0));
        }

        #[test]
        fn estimate_is_linear_in_the_signals(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let y1 = |s: f64| (2.0 * s).sin();
            let u1 = |s: f64| s;
            let y2 = |s: f64| s * s;
            let u2 = |s: f64| (s).cos();
            let w1 = fill(0.5, 0.002, 0.5, y1, u1);
            let w2 = fill(0.5, 0.002, 0.5, y2, u2);
            let wsum = fill(0.5, 0.002, 0.5, |s| a * y1(s) + b * y2(s), |s| a * u1(s) + b * u2(s));
            let f1 = estimate_f_order1(&w1, 1.1, 0.5).unwrap();
            let f2 = estimate_f_order1(&w2, 1.1, 0.5).unwrap();
            let fsum = estimate_f_order1(&wsum, 1.1, 0.5).unwrap();
            prop_assert!((fsum - (a * f1 + b * f2)).abs() < 1e-9 * (1.0 + fsum.abs()));
        }
    }

    #[test]
    fn jittered_grid_still_recovers_linear_f() {
        // Non-uniform sampling with the first cell clipped at the window
        // start; kernel moments stay exact on linear signals.
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut w = SampleWindow::new(0.5, 8192);
        let mut t = 0.0;
        while t < 1.2 {
            w.push(t, 5.0 * t - 0.4, 2.0).unwrap();
            t += 0.001 + rng.random_range(0.0..0.0005);
        }
        let f = estimate_f_order1(&w, 1.0, 0.5).unwrap();
        assert_relative_eq!(f, 3.0, max_relative = 1e-9);
    }
}
