//! Reference models shared by the tests, the acceptance suite and the CLI.

use crate::coeffs::{build_aggdiff_model, build_periodic_rough_model, AggDiffPotentials, ModelSpec};
use crate::error::Result;
use crate::expr::{parse, parse_potential, Expr};

/// Periodic profile of the rough double-well landscape.
pub const ROUGH_Q: &str = "0.1*(cos(2*pi*x) + sin(2*pi*x))";
pub const ROUGH_V: &str = "x^4/4 - x^2/2";
pub const ROUGH_W: &str = "x^2/2";
pub const ROUGH_SIGMA: f64 = 0.5;
/// Double well with quartic growth flattened to logarithmic, `R² = 4`.
pub const MOLLIFIED_V: &str = "4*log(1 + (x^2 - 1)^2/16)";

fn pot(s: &str) -> Expr {
    parse_potential(s).expect("built-in potential parses")
}

fn e(s: &str) -> Expr {
    parse(s).expect("built-in expression parses")
}

/// `b = y`, `f = −y`, `τ1 = √2`, everything else zero: `π = N(0, 1)`, `Φ = y`.
pub fn ou() -> ModelSpec {
    ModelSpec::scalar(
        e("y"),
        Expr::zero(),
        e("-y"),
        Expr::zero(),
        Expr::zero(),
        Expr::c(2f64.sqrt()),
        Expr::zero(),
    )
    .expect("valid model")
    .named("ou")
}

/// As [`ou`] with the fast noise on the independent channel.
pub fn ou_tau2() -> ModelSpec {
    ModelSpec::scalar(
        e("y"),
        Expr::zero(),
        e("-y"),
        Expr::zero(),
        Expr::zero(),
        Expr::zero(),
        Expr::c(2f64.sqrt()),
    )
    .expect("valid model")
    .named("ou_tau2")
}

pub fn rough_q() -> Expr {
    pot(ROUGH_Q)
}

/// Rough double well `V + Q(·/ε)` with quadratic interaction, `σ = 0.5`.
pub fn rough_double_well() -> Result<ModelSpec> {
    build_periodic_rough_model(pot(ROUGH_V), pot(ROUGH_W), vec![rough_q()], ROUGH_SIGMA)
}

/// Periodic rough model on the mollified double well, used for rate runs.
pub fn rate_reference() -> Result<ModelSpec> {
    Ok(build_periodic_rough_model(
        pot(MOLLIFIED_V),
        pot(ROUGH_W),
        vec![rough_q()],
        ROUGH_SIGMA,
    )?
    .named("rate_reference"))
}

/// Aggregation-diffusion model on the line with a confining fast potential
/// `y²/2 + Q(y)`.
pub fn dissipative_aggdiff() -> Result<ModelSpec> {
    let fast = pot(&format!("x^2/2 + {ROUGH_Q}"));
    let p = AggDiffPotentials {
        v1: pot(MOLLIFIED_V),
        v2: fast.clone(),
        v3: pot(MOLLIFIED_V),
        v4: fast,
        w1: pot(ROUGH_W),
        w2: pot(ROUGH_W),
        sigma: ROUGH_SIGMA,
        tau1: ROUGH_SIGMA,
        tau2: 0.0,
    };
    Ok(build_aggdiff_model(p, 1)?.named("dissipative_aggdiff"))
}

/// Fast OU independent of the slow variable: `f = −y`, `τ2 = √2`, `b = 0`,
/// `c = −x`, `σ = 0.5`. The fast invariant law is `N(0, 1)`.
pub fn decoupled_ou() -> ModelSpec {
    ModelSpec::scalar(
        Expr::zero(),
        e("-x"),
        e("-y"),
        Expr::zero(),
        Expr::c(0.5),
        Expr::zero(),
        Expr::c(2f64.sqrt()),
    )
    .expect("valid model")
    .named("decoupled_ou")
}

/// `b = 0` with measure-dependent but `y`-free slow drift: the prelimit slow
/// dynamics coincides with the averaged one.
pub fn null_model() -> ModelSpec {
    ModelSpec::scalar(
        Expr::zero(),
        e("-x + 0.5*conv(x)"),
        e("-y"),
        e("y"),
        Expr::c(0.5),
        Expr::c(1.0),
        Expr::zero(),
    )
    .expect("valid model")
    .named("null")
}
