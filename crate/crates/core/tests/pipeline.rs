//! Config-driven runs through the averaged dynamics and the weak-error study.

mod common;

use common::midpoint_unit;
use mvhom::experiments::{weak_error_curve, WeakErrorSetup};
use mvhom::sde::simulate_averaged;
use mvhom::RunConfig;

const ROUGH: &str = "
model.kind = periodic_rough
model.V = x^4/4 - x^2/2
model.W = x^2/2
model.Q = 0.1*(cos(2*pi*x) + sin(2*pi*x))
model.sigma = 0.5
sim.n = 4000
sim.mc_reps = 1
sim.dt = 0.01
sim.t_end = 6
sim.record_stride = 600
sim.seed = 11
sim.init_slow = uniform(-2, 2)
";

fn rough(extra: &[&str]) -> RunConfig {
    let mut cfg = RunConfig::parse(ROUGH).unwrap();
    for o in extra {
        cfg.apply_override(o).unwrap();
    }
    cfg
}

fn final_positions(cfg: &RunConfig) -> Vec<f64> {
    let model = cfg.model().unwrap();
    let field = cfg.field(&model).unwrap();
    let ens = simulate_averaged(&field, &cfg.sim().unwrap(), &cfg.init_slow().unwrap()).unwrap();
    ens.replicas[0].slow.last().unwrap().clone()
}

/// With `W = x²/2` at `σ = 0.5` a single realization breaks the `x ↦ −x`
/// symmetry, so the check is on the law: the positive fraction averaged over
/// replicas is `½` up to the spread between replicas.
#[test]
fn averaged_rough_law_is_symmetric() {
    let cfg = rough(&["sim.n=500", "sim.mc_reps=24"]);
    let model = cfg.model().unwrap();
    let field = cfg.field(&model).unwrap();
    let ens = simulate_averaged(&field, &cfg.sim().unwrap(), &cfg.init_slow().unwrap()).unwrap();
    let fractions: Vec<f64> = ens
        .replicas
        .iter()
        .map(|r| {
            let xs = r.slow.last().unwrap();
            xs.iter().filter(|x| **x > 0.0).count() as f64 / xs.len() as f64
        })
        .collect();
    let k = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / k;
    let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (k - 1.0);
    assert!((mean - 0.5).abs() < 4.0 * (var / k).sqrt(), "{mean} from {fractions:?}");
}

/// Without interaction the averaged law relaxes to `∝ e^{−2V/σ²}`, which has
/// its modes at the wells `±1`.
#[test]
fn averaged_double_well_concentrates_at_minima() {
    let xs = final_positions(&rough(&["model.W=0"]));
    let n = xs.len() as f64;
    let v = |x: f64| x.powi(4) / 4.0 - x * x / 2.0;
    let w = |x: f64| (-8.0 * v(x)).exp();
    let on = |f: &dyn Fn(f64) -> f64| midpoint_unit(|u| f(6.0 * u - 3.0), 60_000);
    let z = on(&w);
    let second = on(&|x| x * x * w(x)) / z;
    let fourth = on(&|x| x.powi(4) * w(x)) / z;
    let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
    let se = ((fourth - second * second) / n).sqrt();
    assert!((m2 - second).abs() < 4.0 * se + 0.01, "{m2} vs {second}");

    let bin = |c: f64| xs.iter().filter(|x| (**x - c).abs() < 0.1).count();
    assert!(bin(1.0) > 3 * bin(0.0), "{} vs {}", bin(1.0), bin(0.0));
    assert!(bin(-1.0) > 3 * bin(0.0), "{} vs {}", bin(-1.0), bin(0.0));
    let positive = xs.iter().filter(|x| **x > 0.0).count() as f64 / n;
    assert!((positive - 0.5).abs() < 4.0 * 0.5 / n.sqrt(), "{positive}");
}

#[test]
fn closed_form_and_quadrature_fields_agree() {
    let cfg = rough(&["experiment.x_points=7", "sim.n=20"]);
    let quad = rough(&["experiment.field=quadrature"]);
    let model = cfg.model().unwrap();
    let closed = cfg.field(&model).unwrap();
    let numeric = quad.field(&model).unwrap();
    let mu = mvhom::EmpiricalMeasure::from_points_1d(&[-0.7, 0.2, 0.9]).unwrap();
    for x in cfg.xs().unwrap() {
        let a = closed.eval(x, &mu).unwrap();
        let b = numeric.eval(x, &mu).unwrap();
        assert!((a.gamma_bar - b.gamma_bar).abs() < 1e-5 * (1.0 + a.gamma_bar.abs()), "x = {x}");
        assert!((a.d_bar - b.d_bar).abs() < 1e-5, "x = {x}");
    }
}

#[test]
fn nonlinear_functional_gives_finite_errors() {
    let cfg = RunConfig::parse(
        "
model.kind = periodic_rough
model.V = 4*log(1 + (x^2 - 1)^2/16)
model.W = x^2/2
model.Q = 0.1*(cos(2*pi*x) + sin(2*pi*x))
model.sigma = 0.5
sim.n = 100
sim.mc_reps = 4
sim.t_end = 0.2
sim.dt = 0.01
sim.dt_safety = 0.5
sim.record_stride = 5
sim.init_slow = point(0.5)
experiment.eps_list = 0.4, 0.3, 0.2
experiment.functional = square_of_mean:tanh(x)
",
    )
    .unwrap();
    let model = cfg.model().unwrap();
    let field = cfg.field(&model).unwrap();
    let functional = cfg.functional().unwrap();
    let (init_slow, init_fast) = (cfg.init_slow().unwrap(), cfg.init_fast().unwrap());
    let setup = WeakErrorSetup {
        model: &model,
        field: &field,
        functional: &functional,
        cfg: cfg.sim().unwrap(),
        init_slow: &init_slow,
        init_fast: &init_fast,
    };
    let report = weak_error_curve(&setup, &cfg.eps_list().unwrap()).unwrap();
    assert_eq!(report.points.len(), 3);
    for p in &report.points {
        assert!(p.weak_error.is_finite() && p.weak_error >= 0.0);
        assert!(p.ci_lo <= p.weak_error && p.weak_error <= p.ci_hi && p.ci_hi.is_finite());
    }
}
