mod common;

use common::{bessel_i0, midpoint_unit, rough_q, TorusCorrector};
use mvhom::frozen::default_h_x;
use mvhom::homogenize::{local_coefficients, periodic_theta};
use mvhom::reference::{rough_double_well, ROUGH_SIGMA};
use mvhom::{parse_potential, EmpiricalMeasure, FrozenSolver};

#[test]
fn bessel_series_known_values() {
    assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
    assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
    assert!((bessel_i0(2.0) - 2.279_585_302_336_067_3).abs() < 1e-14);
}

#[test]
fn bessel_matches_cosine_exponential_integral() {
    for c in [0.3, 1.0, 2.5] {
        let direct = midpoint_unit(|y| (c * (2.0 * std::f64::consts::PI * y).cos()).exp(), 4000);
        assert!((direct - bessel_i0(c)).abs() < 1e-13, "c = {c}");
    }
}

#[test]
fn rough_theta_from_phase_shift() {
    let c = 0.8 * 2f64.sqrt();
    let oracle = bessel_i0(c).powi(-2);
    let torus = TorusCorrector::new(rough_q, ROUGH_SIGMA, 100_000);
    assert!((torus.theta() - oracle).abs() < 1e-12);
    let q = parse_potential("0.1*(cos(2*pi*x) + sin(2*pi*x))").unwrap();
    let t = periodic_theta(&[q], ROUGH_SIGMA).unwrap();
    assert!((t.theta[0] - oracle).abs() < 1e-10);
    assert!((oracle - 0.551_529_562_268_271_3).abs() < 1e-12, "{oracle:.16}");
}

/// For the rough double well with `µ = δ₀` the slow drift is `c = g = −x³`
/// and the corrector is `x`-free, so `γ = −x³ e^{2Q/σ²}/Ẑ` and
/// `D = −Q'Φ + στ1 Φ' + σ²/2` with `στ1 = σ²`.
#[test]
fn rough_local_coefficients_against_torus_oracle() {
    let (x, y) = (0.3, 0.4);
    let model = rough_double_well().unwrap();
    let mu = EmpiricalMeasure::from_points_1d(&[0.0]).unwrap();
    let solver = FrozenSolver::new(&model).unwrap();
    let grid = solver.default_grid();
    let frozen = solver.solve(x, &grid).unwrap();
    let (phi_x, phi_xy) = solver.corrector_x_derivatives(x, &grid, default_h_x(x)).unwrap();
    let got = local_coefficients(&model, x, y, &mu, &frozen, &phi_x, &phi_xy).unwrap();

    let s2 = ROUGH_SIGMA * ROUGH_SIGMA;
    let torus = TorusCorrector::new(rough_q, ROUGH_SIGMA, 100_000);
    let dq = 0.2 * std::f64::consts::PI * ((2.0 * std::f64::consts::PI * y).cos()
        - (2.0 * std::f64::consts::PI * y).sin());
    let gamma = -x * x * x * (2.0 * rough_q(y) / s2).exp() / torus.z_hat;
    let d1 = -dq * torus.phi(y) + s2 * torus.phi_y(y);
    let d = d1 + 0.5 * s2;

    assert!((got.gamma - gamma).abs() < 1e-6, "{} vs {gamma}", got.gamma);
    assert!((got.d1 - d1).abs() < 1e-6, "{} vs {d1}", got.d1);
    assert!((got.d - d).abs() < 1e-6, "{} vs {d}", got.d);

    assert!((gamma - GAMMA_FROZEN).abs() < 1e-12, "{gamma:.16}");
    assert!((d - D_FROZEN).abs() < 1e-12, "{d:.16}");
}

const GAMMA_FROZEN: f64 = -0.016_799_036_829_184_9;
const D_FROZEN: f64 = 0.158_466_713_814_599_1;
