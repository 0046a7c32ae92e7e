//! Limiting coefficients: the local drift and diffusion built from the
//! corrector, their averages against the frozen density, the diffusion in
//! its manifestly nonnegative form, and the closed-form constants of the
//! periodic rough-potential model.
//!
//! The averaged diffusion is computed both as `∫ (bΦ + Φ' σ τ1 + σ²/2) π`
//! and as `½ ∫ (τ2² Φ'² + (σ + τ1 Φ')²) π`. The second is the production
//! value; the two must agree or evaluation fails.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use crate::coeffs::{Coefficient, CompiledModel, KernelSet, ModelKind, ModelSpec, PreparedMeasure};
use crate::error::{Error, Result};
use crate::expr::{Expr, Program, Var};
use crate::frozen::{default_h_x, FrozenSolution, FrozenSolver, Grid1D};
use crate::measure::EmpiricalMeasure;
use crate::quad::{simpson, simpson_weights};

/// Values at or above this are clamped to zero by [`sqrt_psd`].
pub const PSD_TOL: f64 = 1e-12;
/// Relative agreement required between the two diffusion quadratures.
pub const DIFFUSION_AGREEMENT_TOL: f64 = 1e-5;
/// Node count of the periodic-constant quadrature.
pub const THETA_NODES: usize = 2049;
/// Default spacing of the `x` cache of a quadrature field.
pub const DEFAULT_CACHE_DX: f64 = 1.0 / 128.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalCoefficients {
    pub gamma: f64,
    pub gamma1: f64,
    pub d: f64,
    pub d1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub gamma_bar: f64,
    pub d_bar: f64,
}

/// Nonnegative square root of a scalar diffusion.
pub fn sqrt_psd(d: f64) -> Result<f64> {
    if d.is_nan() || d < -PSD_TOL {
        return Err(Error::NotPsd { value: d });
    }
    Ok(d.max(0.0).sqrt())
}

/// Square root of a diagonal `dim × dim` matrix stored row-major.
pub fn sqrt_psd_diag(m: &[f64], dim: usize) -> Result<Vec<f64>> {
    if m.len() != dim * dim {
        return Err(Error::Shape(format!(
            "expected a {dim}×{dim} matrix, got {} entries",
            m.len()
        )));
    }
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let v = m[i * dim + j];
            if i == j {
                out[i * dim + j] = sqrt_psd(v)?;
            } else if v != 0.0 {
                return Err(Error::Invalid(format!(
                    "only diagonal matrices are supported, entry ({i}, {j}) is {v}"
                )));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTheta {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub z_hat: Vec<f64>,
}

/// `Z_k = ∫₀¹ e^{−2Q_k/σ²}`, `Ẑ_k = ∫₀¹ e^{2Q_k/σ²}` and `Θ_k = 1/(Z_k Ẑ_k)`.
pub fn periodic_theta(q: &[Expr], sigma: f64) -> Result<PeriodicTheta> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    let grid = Grid1D::torus(THETA_NODES)?;
    let h = grid.h();
    let scale = 2.0 / (sigma * sigma);
    let mut out = PeriodicTheta {
        theta: Vec::with_capacity(q.len()),
        z: Vec::with_capacity(q.len()),
        z_hat: Vec::with_capacity(q.len()),
    };
    for qk in q {
        let prog = Program::new(qk);
        let expo: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|y| prog.eval(&[y], &[y], &[]).map(|v| scale * v))
            .collect::<std::result::Result<_, _>>()?;
        let worst = expo.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if !(worst <= 700.0) {
            return Err(Error::Overflow { exponent: worst });
        }
        let minus: Vec<f64> = expo.iter().map(|e| (-e).exp()).collect();
        let plus: Vec<f64> = expo.iter().map(|e| e.exp()).collect();
        let z = simpson(&minus, h);
        let z_hat = simpson(&plus, h);
        out.theta.push(1.0 / (z * z_hat));
        out.z.push(z);
        out.z_hat.push(z_hat);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggDiffAlphas {
    pub alpha1: f64,
    pub alpha2: f64,
    pub z: f64,
}

/// Corrector averages of the one-dimensional aggregation-diffusion cell
/// problem: `b = −V2'`, density `∝ e^{−V4/α}`. Returns `α1 = ∫ Φ' π`,
/// `α2 = ∫ Φ'² π` and `Z = ∫ e^{−V4/α}`. Potentials are written in `x`.
pub fn aggdiff_alphas(
    v2: &Expr,
    v4: &Expr,
    alpha: f64,
    grid: &Grid1D,
    periodic: bool,
) -> Result<AggDiffAlphas> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("alpha must be positive, got {alpha}")));
    }
    let b = -v2.diff(Var::X(0))?.x_to_y();
    let f = -v4.diff(Var::X(0))?.x_to_y();
    let mut model = ModelSpec::scalar(
        b,
        Expr::zero(),
        f,
        Expr::zero(),
        Expr::zero(),
        Expr::c((2.0 * alpha).sqrt()),
        Expr::zero(),
    )?;
    if periodic {
        model = model.on_torus();
    }
    let solver = FrozenSolver::new(&model)?;
    let sol = solver.solve(0.0, grid)?;
    let h = sol.grid.h();
    let alpha1 = sol.average(&sol.phi_y);
    let sq: Vec<f64> = sol.phi_y.iter().map(|p| p * p).collect();
    let alpha2 = sol.average(&sq);
    let v4p = Program::new(v4);
    let weight: Vec<f64> = sol
        .grid
        .nodes()
        .into_iter()
        .map(|y| v4p.eval(&[y], &[y], &[]).map(|v| (-v / alpha).exp()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(AggDiffAlphas {
        alpha1,
        alpha2,
        z: simpson(&weight, h),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsKind {
    /// Right-hand side carrying the measure derivative of the corrector.
    Chi,
    /// Right-hand side `−b(x, y) Φ(x̄, ȳ)`.
    ChiTilde,
}

/// `|(∫ g π_x)(∫ h π_x̄)|` for the factorized right-hand side of the doubled
/// cell problem. With measure-free fast coefficients the corrector does not
/// depend on the law, so the `chi` right-hand side vanishes identically.
pub fn doubled_centering_residual(
    model: &ModelSpec,
    x: f64,
    _x_bar: f64,
    frozen_x: &FrozenSolution,
    frozen_xbar: &FrozenSolution,
    kind: RhsKind,
) -> Result<f64> {
    match kind {
        RhsKind::Chi => Ok(0.0),
        RhsKind::ChiTilde => {
            if !frozen_xbar.has_corrector() {
                return Err(Error::Invalid(
                    "the second frozen solution has no corrector".into(),
                ));
            }
            let solver = FrozenSolver::new(model)?;
            let b: Vec<f64> = frozen_x
                .grid
                .nodes()
                .into_iter()
                .map(|y| solver.eval_b(x, y))
                .collect::<Result<_>>()?;
            let first = frozen_x.average(&b);
            let second = frozen_xbar.average(&frozen_xbar.phi);
            Ok((first * second).abs())
        }
    }
}

/// Pointwise `γ = γ1 + c` and `D = D1 + σ²/2` at `(x, y)`. Corrector values
/// are interpolated linearly when `y` is off the grid.
pub fn local_coefficients(
    model: &ModelSpec,
    x: f64,
    y: f64,
    mu: &EmpiricalMeasure,
    frozen: &FrozenSolution,
    phi_x: &[f64],
    phi_xy: &[f64],
) -> Result<LocalCoefficients> {
    if model.dim() != 1 {
        return Err(Error::Invalid("local coefficients need a one-dimensional model".into()));
    }
    if !frozen.has_corrector() {
        return Err(Error::Invalid("frozen solution has no corrector".into()));
    }
    let n = frozen.grid.n();
    if phi_x.len() != n || phi_xy.len() != n {
        return Err(Error::Shape(format!(
            "x-derivatives have lengths {} and {}; grid has {n} nodes",
            phi_x.len(),
            phi_xy.len()
        )));
    }
    let ev = |w: Coefficient| -> Result<f64> { Ok(model.eval_coefficient(w, &[x], &[y], mu)?[0]) };
    let at = |v: &[f64]| frozen.grid.interpolate(v, y);
    let (b, c, g) = (ev(Coefficient::B)?, ev(Coefficient::C)?, ev(Coefficient::G)?);
    let (sigma, tau1) = (ev(Coefficient::Sigma)?, ev(Coefficient::Tau1)?);
    let phi = at(&frozen.phi);
    let phi_y = at(&frozen.phi_y);
    let gamma1 = at(phi_x) * b + phi_y * g + sigma * tau1 * at(phi_xy);
    let d1 = b * phi + phi_y * sigma * tau1;
    Ok(LocalCoefficients {
        gamma: gamma1 + c,
        gamma1,
        d: d1 + 0.5 * sigma * sigma,
        d1,
    })
}

/// `γ̄` and `D̄` (the `bΦ` form) on the default grid.
pub fn averaged_coefficients(model: &ModelSpec, x: f64, mu: &EmpiricalMeasure) -> Result<Averaged> {
    let hom = Homogenizer::new(model, None)?;
    let v = hom.evaluate_exact(x, mu)?;
    Ok(Averaged {
        gamma_bar: v.gamma_bar,
        d_bar: v.d_bar,
    })
}

/// `D̄` in the nonnegative form on the default grid.
/// The diffusion does not involve the measure; `_mu` keeps the signature
/// parallel to [`averaged_coefficients`].
pub fn averaged_diffusion_alt(model: &ModelSpec, x: f64, _mu: &EmpiricalMeasure) -> Result<f64> {
    let hom = Homogenizer::new(model, None)?;
    Ok(hom.cell(x)?.d_alt)
}

/// Everything about the frozen problem at one `x` that does not depend on the
/// measure, reduced to integrals and quadrature weights.
#[derive(Debug, Clone)]
struct Cell {
    /// `∫ (Φ_x b + σ τ1 Φ_xy) π`.
    k_b: f64,
    /// `∫ Φ_y π`.
    k_g: f64,
    d_primary: f64,
    d_alt: f64,
    /// `∫ c π` and `∫ Φ_y g π` at the cell's `x`, for tabulated terms.
    i_c: f64,
    i_g: f64,
    nodes: Vec<f64>,
    /// Simpson weight times `π`.
    w_c: Vec<f64>,
    /// Simpson weight times `Φ_y π`.
    w_g: Vec<f64>,
}

/// How a slow-drift term enters the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DriftMode {
    /// No `y`: evaluated once and scaled.
    YFree,
    /// `y` but no measure: integrated once per cell and interpolated in `x`.
    Tabulated,
    /// `y` and measure: integrated at every evaluation.
    Pointwise,
}

impl DriftMode {
    fn of(e: &Expr) -> DriftMode {
        match (e.depends_on_any_y(), e.has_conv()) {
            (false, _) => DriftMode::YFree,
            (true, false) => DriftMode::Tabulated,
            (true, true) => DriftMode::Pointwise,
        }
    }
}

/// Averaging engine for one scalar model on a fixed frozen grid.
#[derive(Debug, Clone)]
pub struct Homogenizer {
    cm: CompiledModel,
    solver: FrozenSolver,
    grid: Grid1D,
    c_mode: DriftMode,
    g_mode: DriftMode,
    x_free: bool,
    /// The frozen solution, once, when the fast problem does not depend on `x`.
    shared: OnceLock<Arc<FrozenSolution>>,
}

impl Homogenizer {
    pub fn new(model: &ModelSpec, grid: Option<Grid1D>) -> Result<Homogenizer> {
        let solver = FrozenSolver::new(model)?;
        let grid = grid.unwrap_or_else(|| solver.default_grid());
        Ok(Homogenizer {
            cm: model.compile(),
            solver,
            grid,
            c_mode: DriftMode::of(model.scalar_coefficient(Coefficient::C)),
            g_mode: DriftMode::of(model.scalar_coefficient(Coefficient::G)),
            x_free: model.fast_problem_is_x_free(),
            shared: OnceLock::new(),
        })
    }

    pub fn solver(&self) -> &FrozenSolver {
        &self.solver
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn kernels(&self) -> &KernelSet {
        self.cm.kernels()
    }

    /// One cell serves every `x` unless a tabulated term needs its own `x`.
    fn single_cell(&self) -> bool {
        self.x_free && self.c_mode != DriftMode::Tabulated && self.g_mode != DriftMode::Tabulated
    }

    fn solution(&self, x: f64) -> Result<(Arc<FrozenSolution>, Vec<f64>, Vec<f64>)> {
        if self.x_free {
            let sol = match self.shared.get() {
                Some(s) => s.clone(),
                None => {
                    let s = Arc::new(self.solver.solve(0.0, &self.grid)?);
                    self.shared.get_or_init(|| s).clone()
                }
            };
            let n = sol.grid.n();
            return Ok((sol, vec![0.0; n], vec![0.0; n]));
        }
        let sol = self.solver.solve(x, &self.grid)?;
        let (phi_x, phi_xy) = self
            .solver
            .corrector_x_derivatives(x, &self.grid, default_h_x(x))?;
        Ok((Arc::new(sol), phi_x, phi_xy))
    }

    fn cell(&self, x: f64) -> Result<Cell> {
        let (sol, phi_x, phi_xy) = self.solution(x)?;
        let grid = sol.grid;
        let nodes = grid.nodes();
        let sw = simpson_weights(grid.n(), grid.h());
        let (mut k_b, mut k_g, mut d_primary, mut d_alt) = (0.0, 0.0, 0.0, 0.0);
        let (mut i_c, mut i_g) = (0.0, 0.0);
        let tab_c = self.c_mode == DriftMode::Tabulated;
        let tab_g = self.g_mode == DriftMode::Tabulated;
        let mut w_c = Vec::with_capacity(nodes.len());
        let mut w_g = Vec::with_capacity(nodes.len());
        for (j, &y) in nodes.iter().enumerate() {
            let ev = |w: Coefficient| self.cm.eval_scalar(w, &[x], &[y], &[]);
            let b = ev(Coefficient::B)?;
            let sigma = ev(Coefficient::Sigma)?;
            let tau1 = ev(Coefficient::Tau1)?;
            let tau2 = ev(Coefficient::Tau2)?;
            let py = sol.phi_y[j];
            let wp = sw[j] * sol.pi[j];
            k_b += wp * (phi_x[j] * b + sigma * tau1 * phi_xy[j]);
            k_g += wp * py;
            d_primary += wp * (b * sol.phi[j] + py * sigma * tau1 + 0.5 * sigma * sigma);
            let s = sigma + tau1 * py;
            d_alt += wp * 0.5 * (tau2 * tau2 * py * py + s * s);
            if tab_c {
                i_c += wp * ev(Coefficient::C)?;
            }
            if tab_g {
                i_g += wp * py * ev(Coefficient::G)?;
            }
            w_c.push(wp);
            w_g.push(wp * py);
        }
        Ok(Cell {
            k_b,
            k_g,
            d_primary,
            d_alt,
            i_c,
            i_g,
            nodes,
            w_c,
            w_g,
        })
    }

    /// `∫ (c + Φ_y g) π`, the part of `γ̄` carried by the slow drifts.
    fn measure_part(&self, cell: &Cell, x: f64, conv: &[f64]) -> Result<f64> {
        let ev = |w: Coefficient, y: f64| self.cm.eval_scalar(w, &[x], &[y], conv);
        let pointwise = |w: Coefficient, weights: &[f64]| -> Result<f64> {
            let mut acc = 0.0;
            for (wj, &y) in weights.iter().zip(&cell.nodes) {
                acc += wj * ev(w, y)?;
            }
            Ok(acc)
        };
        let same = self.cm.alias(3) == 1;
        Ok(match (self.c_mode, self.g_mode) {
            (DriftMode::YFree, DriftMode::YFree) if same => ev(Coefficient::C, 0.0)? * (1.0 + cell.k_g),
            (c_mode, g_mode) => {
                let c = match c_mode {
                    DriftMode::YFree => ev(Coefficient::C, 0.0)?,
                    DriftMode::Tabulated => cell.i_c,
                    DriftMode::Pointwise => pointwise(Coefficient::C, &cell.w_c)?,
                };
                let g = match g_mode {
                    DriftMode::YFree => ev(Coefficient::G, 0.0)? * cell.k_g,
                    DriftMode::Tabulated => cell.i_g,
                    DriftMode::Pointwise => pointwise(Coefficient::G, &cell.w_g)?,
                };
                c + g
            }
        })
    }

    fn value(&self, x: f64, cells: &[(f64, &Cell)], conv: &[f64]) -> Result<FieldValue> {
        let mut v = FieldValue {
            gamma_bar: 0.0,
            d_bar: 0.0,
            d_bar_alt: 0.0,
            d_bar_sqrt: 0.0,
        };
        for (w, cell) in cells {
            v.gamma_bar += w * (cell.k_b + self.measure_part(cell, x, conv)?);
            v.d_bar += w * cell.d_primary;
            v.d_bar_alt += w * cell.d_alt;
        }
        let scale = v.d_bar.abs().max(v.d_bar_alt.abs());
        if (v.d_bar - v.d_bar_alt).abs() > DIFFUSION_AGREEMENT_TOL * scale + 1e-10 {
            return Err(Error::DiffusionMismatch {
                x,
                primary: v.d_bar,
                alt: v.d_bar_alt,
            });
        }
        v.d_bar_sqrt = sqrt_psd(v.d_bar_alt)?;
        Ok(v)
    }

    /// All averaged quantities at exactly `x`, bypassing any cache.
    pub fn evaluate_exact(&self, x: f64, mu: &EmpiricalMeasure) -> Result<FieldValue> {
        let cell = self.cell(x)?;
        let prep = self.cm.prepare(mu);
        let conv = prep.conv_vec(&[x])?;
        self.value(x, &[(1.0, &cell)], &conv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub gamma_bar: f64,
    /// Diffusion from the `bΦ` form.
    pub d_bar: f64,
    /// Diffusion from the nonnegative form; the production value.
    pub d_bar_alt: f64,
    /// `√d_bar_alt`.
    pub d_bar_sqrt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Quadrature,
    PeriodicClosedForm,
    /// Coefficients given directly as expressions.
    Explicit,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Quadrature => "quadrature",
            Provenance::PeriodicClosedForm => "periodic_closed_form",
            Provenance::Explicit => "explicit",
        }
    }
}

#[derive(Debug)]
struct QuadratureField {
    hom: Homogenizer,
    dx: f64,
    cache: RwLock<HashMap<i64, Arc<Cell>>>,
}

impl QuadratureField {
    fn cell_at(&self, key: i64) -> Result<Arc<Cell>> {
        if let Some(c) = self.cache.read().unwrap().get(&key) {
            return Ok(c.clone());
        }
        let cell = Arc::new(self.hom.cell(key as f64 * self.dx)?);
        let mut w = self.cache.write().unwrap();
        Ok(w.entry(key).or_insert(cell).clone())
    }

    fn eval(&self, x: f64, conv: &[f64]) -> Result<FieldValue> {
        if self.hom.single_cell() {
            let cell = self.cell_at(0)?;
            return self.hom.value(x, &[(1.0, &cell)], conv);
        }
        let s = x / self.dx;
        let k0 = s.floor();
        let t = s - k0;
        let k0 = k0 as i64;
        let c0 = self.cell_at(k0)?;
        if t == 0.0 {
            return self.hom.value(x, &[(1.0, &c0)], conv);
        }
        let c1 = self.cell_at(k0 + 1)?;
        self.hom.value(x, &[(1.0 - t, &c0), (t, &c1)], conv)
    }
}

#[derive(Debug)]
enum FieldKind {
    Quadrature(QuadratureField),
    Periodic {
        cm: CompiledModel,
        theta: f64,
        sigma: f64,
    },
    Explicit {
        gamma: Program,
        d: Program,
        kernels: KernelSet,
    },
}

/// Evaluator of `γ̄(x, µ)`, `D̄(x, µ)` and `D̄^{1/2}` for scalar models.
/// Evaluation is thread-safe; quadrature fields share a per-`x` cache.
#[derive(Debug)]
pub struct HomogenizedField {
    kind: FieldKind,
}

impl HomogenizedField {
    /// Averages by quadrature of the frozen problem. Frozen solutions are
    /// cached at multiples of `cache_dx` and interpolated linearly in between;
    /// if the fast problem does not depend on `x`, a single solution is used.
    pub fn quadrature(model: &ModelSpec, grid: Option<Grid1D>, cache_dx: f64) -> Result<Self> {
        if !(cache_dx > 0.0 && cache_dx.is_finite()) {
            return Err(Error::Invalid(format!("cache spacing must be positive, got {cache_dx}")));
        }
        Ok(HomogenizedField {
            kind: FieldKind::Quadrature(QuadratureField {
                hom: Homogenizer::new(model, grid)?,
                dx: cache_dx,
                cache: RwLock::new(HashMap::new()),
            }),
        })
    }

    /// `γ̄ = Θ c` and `D̄ = σ²Θ/2` for the one-dimensional periodic rough model.
    pub fn periodic_closed_form(model: &ModelSpec) -> Result<Self> {
        let ModelKind::PeriodicRough(p) = model.kind() else {
            return Err(Error::Invalid(
                "the closed form needs a periodic rough-potential model".into(),
            ));
        };
        if p.q.len() != 1 {
            return Err(Error::Invalid("the averaged field is one-dimensional".into()));
        }
        let theta = periodic_theta(&p.q, p.sigma)?.theta[0];
        Ok(HomogenizedField {
            kind: FieldKind::Periodic {
                cm: model.compile(),
                theta,
                sigma: p.sigma,
            },
        })
    }

    /// Drift `gamma(x)` (may contain convolutions) and diffusion `d(x)`.
    pub fn explicit(gamma: &Expr, d: &Expr) -> Result<Self> {
        for e in [gamma, d] {
            if e.depends_on_any_y() || e.max_coord() > 1 {
                return Err(Error::Invalid(format!("`{e}` must be a function of x alone")));
            }
        }
        if d.has_conv() {
            return Err(Error::Invalid("the diffusion must not depend on the measure".into()));
        }
        let mut registry = Vec::new();
        let gamma = Program::with_registry(gamma, &mut registry);
        Ok(HomogenizedField {
            kind: FieldKind::Explicit {
                gamma,
                d: Program::new(d),
                kernels: KernelSet::new(&registry, 1),
            },
        })
    }

    pub fn provenance(&self) -> Provenance {
        match self.kind {
            FieldKind::Quadrature(_) => Provenance::Quadrature,
            FieldKind::Periodic { .. } => Provenance::PeriodicClosedForm,
            FieldKind::Explicit { .. } => Provenance::Explicit,
        }
    }

    /// `Θ` for closed-form periodic fields.
    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            FieldKind::Periodic { theta, .. } => Some(theta),
            _ => None,
        }
    }

    pub fn kernels(&self) -> &KernelSet {
        match &self.kind {
            FieldKind::Quadrature(q) => q.hom.kernels(),
            FieldKind::Periodic { cm, .. } => cm.kernels(),
            FieldKind::Explicit { kernels, .. } => kernels,
        }
    }

    pub fn prepare<'a>(&'a self, mu: &'a EmpiricalMeasure) -> PreparedMeasure<'a> {
        self.kernels().prepare(mu)
    }

    /// Evaluates at `x` given the convolution values `conv` of the measure at `x`.
    pub fn eval_with_conv(&self, x: f64, conv: &[f64]) -> Result<FieldValue> {
        match &self.kind {
            FieldKind::Quadrature(q) => q.eval(x, conv),
            FieldKind::Periodic { cm, theta, sigma } => {
                let c = cm.eval_scalar(Coefficient::C, &[x], &[0.0], conv)?;
                let d = 0.5 * sigma * sigma * theta;
                Ok(FieldValue {
                    gamma_bar: theta * c,
                    d_bar: d,
                    d_bar_alt: d,
                    d_bar_sqrt: sqrt_psd(d)?,
                })
            }
            FieldKind::Explicit { gamma, d, .. } => {
                let g = gamma.eval(&[x], &[], conv)?;
                let d = d.eval(&[x], &[], &[])?;
                Ok(FieldValue {
                    gamma_bar: g,
                    d_bar: d,
                    d_bar_alt: d,
                    d_bar_sqrt: sqrt_psd(d)?,
                })
            }
        }
    }

    pub fn eval(&self, x: f64, mu: &EmpiricalMeasure) -> Result<FieldValue> {
        let prep = self.prepare(mu);
        let conv = prep.conv_vec(&[x])?;
        self.eval_with_conv(x, &conv)
    }

    /// Number of cached frozen solutions.
    pub fn cache_len(&self) -> usize {
        match &self.kind {
            FieldKind::Quadrature(q) => q.cache.read().unwrap().len(),
            _ => 0,
        }
    }
}

/// Writes `x, gamma_bar, D_bar, D_bar_alt, D_bar_sqrt` at each node.
pub fn write_field_csv(
    field: &HomogenizedField,
    xs: &[f64],
    mu: &EmpiricalMeasure,
    mut out: impl std::io::Write,
) -> Result<()> {
    use crate::output::write_row;
    writeln!(out, "x,gamma_bar,D_bar,D_bar_alt,D_bar_sqrt")?;
    let prep = field.prepare(mu);
    for &x in xs {
        let v = field.eval_with_conv(x, &prep.conv_vec(&[x])?)?;
        write_row(&mut out, &[x, v.gamma_bar, v.d_bar, v.d_bar_alt, v.d_bar_sqrt])?;
    }
    Ok(())
}
