//! Shared fixtures for the benchmark targets.

use mfc_core::estimator::SampleWindow;
use mfc_core::scenario::Scenario;
use mfc_core::track::{self, RefPath};

/// A full uniform window over `[0, tau]` at the given rate, driven by the
/// first-order model with `F = 3`, `u = 2`, `alpha = 1`.
pub fn warm_window(tau: f64, rate_hz: f64) -> SampleWindow {
    let dt = 1.0 / rate_hz;
    let n = (tau / dt).round() as usize;
    let mut w = SampleWindow::new(tau, n + 8);
    for k in 0..=n {
        let t = k as f64 * dt;
        w.push(t, 5.0 * t + 0.3, 2.0).expect("monotone");
    }
    w
}

/// The desk scenario with its generated track.
pub fn desk_setup() -> (Scenario, RefPath) {
    let scenario = Scenario::desk_default();
    let (path, _) = track::satory_mini()
        .generate(track::DEFAULT_DS)
        .expect("preset generates");
    (scenario, path)
}
