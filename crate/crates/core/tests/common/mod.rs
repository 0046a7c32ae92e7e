//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Modified Bessel function `I₀` from its power series, summed until the
/// relative increment drops below `1e−14`.
pub fn bessel_i0(z: f64) -> f64 {
    let q = z * z / 4.0;
    let (mut term, mut sum) = (1.0, 1.0);
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if term < 1e-14 * sum {
            return sum;
        }
        k += 1.0;
    }
}

/// Midpoint rule on `[0, 1)` with `m` cells.
pub fn midpoint_unit(f: impl Fn(f64) -> f64, m: usize) -> f64 {
    (0..m).map(|k| f((k as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64
}

/// Closed-form torus cell problem for `b = f = −Q'` and `a = σ²/2`:
/// `Φ' = −1 + e^{2Q/σ²}/Ẑ` and `Φ` normalised to zero mean under
/// `π ∝ e^{−2Q/σ²}`. Integrals use the midpoint rule with `m` cells.
pub struct TorusCorrector<Q: Fn(f64) -> f64> {
    pub q: Q,
    pub sigma: f64,
    pub z: f64,
    pub z_hat: f64,
    mean_phi: f64,
}

impl<Q: Fn(f64) -> f64> TorusCorrector<Q> {
    pub fn new(q: Q, sigma: f64, m: usize) -> Self {
        let s2 = sigma * sigma;
        let z = midpoint_unit(|y| (-2.0 * q(y) / s2).exp(), m);
        let z_hat = midpoint_unit(|y| (2.0 * q(y) / s2).exp(), m);
        let mut c = TorusCorrector { q, sigma, z, z_hat, mean_phi: 0.0 };
        c.mean_phi = midpoint_unit(|y| c.phi_raw(y) * c.density(y), 2000);
        c
    }

    pub fn density(&self, y: f64) -> f64 {
        (-2.0 * (self.q)(y) / (self.sigma * self.sigma)).exp() / self.z
    }

    pub fn phi_y(&self, y: f64) -> f64 {
        -1.0 + (2.0 * (self.q)(y) / (self.sigma * self.sigma)).exp() / self.z_hat
    }

    /// `∫₀^y Φ'` by the midpoint rule.
    fn phi_raw(&self, y: f64) -> f64 {
        let steps = 4000;
        let h = y / steps as f64;
        (0..steps).map(|k| self.phi_y((k as f64 + 0.5) * h)).sum::<f64>() * h
    }

    pub fn phi(&self, y: f64) -> f64 {
        self.phi_raw(y) - self.mean_phi
    }

    pub fn theta(&self) -> f64 {
        1.0 / (self.z * self.z_hat)
    }
}

/// `0.1 (cos 2πy + sin 2πy)`.
pub fn rough_q(y: f64) -> f64 {
    0.1 * ((2.0 * PI * y).cos() + (2.0 * PI * y).sin())
}

pub fn gaussian_density(y: f64) -> f64 {
    (-y * y / 2.0).exp() / (2.0 * PI).sqrt()
}
