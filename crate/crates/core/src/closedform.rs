//! Analytic coincidence rates behind a balanced beamsplitter for equal-shape
//! photon pairs. `epsilon` and `kappa` are the two bandwidths, `tau` the
//! relative delay (equal bandwidths assumed in the delay formulas).

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomParams {
    pub epsilon: f64,
    pub kappa: f64,
    pub tau: f64,
}

pub fn gaussian_bandwidth(epsilon: f64, kappa: f64) -> f64 {
    0.5 - epsilon * kappa / (epsilon * epsilon + kappa * kappa)
}

pub fn gaussian_time(kappa: f64, tau: f64) -> f64 {
    0.5 - 0.5 * (-0.25 * kappa * kappa * tau * tau).exp()
}

pub fn lorentzian_bandwidth(epsilon: f64, kappa: f64) -> f64 {
    0.5 - 2.0 * epsilon * kappa / ((epsilon + kappa) * (epsilon + kappa))
}

pub fn lorentzian_time(kappa: f64, tau: f64) -> f64 {
    0.5 - 0.5 * (-2.0 * kappa * tau.abs()).exp()
}

/// Same as the Lorentzian result.
pub fn dc_bandwidth(epsilon: f64, kappa: f64) -> f64 {
    lorentzian_bandwidth(epsilon, kappa)
}

pub fn dc_time(kappa: f64, tau: f64) -> f64 {
    let x = kappa * tau.abs();
    0.5 - 0.5 * (-2.0 * x).exp() * (1.0 + x) * (1.0 + x)
}
