//! Model coefficients `b, c, f, g, σ, τ1, τ2` and their evaluation.
//!
//! Measure dependence is confined to the slow-equation drifts `c` and `g`,
//! where it may only appear through convolution leaves. This keeps the frozen
//! fast problem independent of the law, so correctors are cached per `x`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{EvalError, Expr, Program, Var};
use crate::measure::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coefficient {
    B,
    C,
    F,
    G,
    Sigma,
    Tau1,
    Tau2,
}

impl Coefficient {
    pub const ALL: [Coefficient; 7] = [
        Coefficient::B,
        Coefficient::C,
        Coefficient::F,
        Coefficient::G,
        Coefficient::Sigma,
        Coefficient::Tau1,
        Coefficient::Tau2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Coefficient::B => "b",
            Coefficient::C => "c",
            Coefficient::F => "f",
            Coefficient::G => "g",
            Coefficient::Sigma => "sigma",
            Coefficient::Tau1 => "tau1",
            Coefficient::Tau2 => "tau2",
        }
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, Coefficient::Sigma | Coefficient::Tau1 | Coefficient::Tau2)
    }

    /// Only the slow-equation drifts may depend on the measure.
    pub fn may_use_measure(self) -> bool {
        matches!(self, Coefficient::C | Coefficient::G)
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Coefficient {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Coefficient::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown coefficient `{s}`")))
    }
}

/// Potentials of the aggregation-diffusion family, written in the slow variables.
#[derive(Debug, Clone, PartialEq)]
pub struct AggDiffPotentials {
    pub v1: Expr,
    pub v2: Expr,
    pub v3: Expr,
    pub v4: Expr,
    pub w1: Expr,
    pub w2: Expr,
    pub sigma: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl AggDiffPotentials {
    /// All potentials zero with the given noise levels.
    pub fn flat(sigma: f64, tau1: f64, tau2: f64) -> Self {
        AggDiffPotentials {
            v1: Expr::zero(),
            v2: Expr::zero(),
            v3: Expr::zero(),
            v4: Expr::zero(),
            w1: Expr::zero(),
            w2: Expr::zero(),
            sigma,
            tau1,
            tau2,
        }
    }

    /// Diffusion constant of the frozen fast process, `(τ1² + τ2²)/2`.
    pub fn alpha(&self) -> f64 {
        0.5 * (self.tau1 * self.tau1 + self.tau2 * self.tau2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicRough {
    pub v: Expr,
    pub w: Expr,
    /// One 1-periodic profile per coordinate, each written in `x`.
    pub q: Vec<Expr>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Custom,
    AggDiff(AggDiffPotentials),
    PeriodicRough(PeriodicRough),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    dim: usize,
    b: Vec<Expr>,
    c: Vec<Expr>,
    f: Vec<Expr>,
    g: Vec<Expr>,
    sigma: Vec<Expr>,
    tau1: Vec<Expr>,
    tau2: Vec<Expr>,
    name: String,
    torus: bool,
    kind: ModelKind,
}

impl ModelSpec {
    /// Vectors have length `dim`; matrices are `dim × dim`, row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        b: Vec<Expr>,
        c: Vec<Expr>,
        f: Vec<Expr>,
        g: Vec<Expr>,
        sigma: Vec<Expr>,
        tau1: Vec<Expr>,
        tau2: Vec<Expr>,
    ) -> Result<ModelSpec> {
        if dim == 0 {
            return Err(Error::Invalid("model dimension must be positive".into()));
        }
        let m = ModelSpec {
            dim,
            b,
            c,
            f,
            g,
            sigma,
            tau1,
            tau2,
            name: String::new(),
            torus: false,
            kind: ModelKind::Custom,
        };
        for which in Coefficient::ALL {
            let parts = m.coefficient(which);
            let want = if which.is_matrix() { dim * dim } else { dim };
            if parts.len() != want {
                return Err(Error::Shape(format!(
                    "{which} has {} entries, expected {want}",
                    parts.len()
                )));
            }
            for e in parts {
                if e.has_conv() && !which.may_use_measure() {
                    return Err(Error::Invalid(format!(
                        "{which} must not depend on the measure, found `{e}`"
                    )));
                }
                if e.max_coord() > dim {
                    return Err(Error::Shape(format!(
                        "{which} = `{e}` uses a coordinate beyond dimension {dim}"
                    )));
                }
                for k in e.conv_kernels() {
                    if k.depends_on_any_y() {
                        return Err(Error::Invalid(format!(
                            "convolution kernel `{k}` must only use x"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    /// Scalar model; matrices are 1×1.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        b: Expr,
        c: Expr,
        f: Expr,
        g: Expr,
        sigma: Expr,
        tau1: Expr,
        tau2: Expr,
    ) -> Result<ModelSpec> {
        ModelSpec::new(
            1,
            vec![b],
            vec![c],
            vec![f],
            vec![g],
            vec![sigma],
            vec![tau1],
            vec![tau2],
        )
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Marks the fast variable as living on the unit torus.
    pub fn on_torus(mut self) -> Self {
        self.torus = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Whether the fast variable lives on the unit torus.
    pub fn is_torus(&self) -> bool {
        self.torus
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn coefficient(&self, which: Coefficient) -> &[Expr] {
        match which {
            Coefficient::B => &self.b,
            Coefficient::C => &self.c,
            Coefficient::F => &self.f,
            Coefficient::G => &self.g,
            Coefficient::Sigma => &self.sigma,
            Coefficient::Tau1 => &self.tau1,
            Coefficient::Tau2 => &self.tau2,
        }
    }

    /// Scalar coefficient of a one-dimensional model.
    pub fn scalar_coefficient(&self, which: Coefficient) -> &Expr {
        assert_eq!(self.dim, 1, "scalar_coefficient needs a one-dimensional model");
        &self.coefficient(which)[0]
    }

    /// `a = ½(τ1 τ1ᵀ + τ2 τ2ᵀ)` as an expression, for one-dimensional models.
    pub fn a_expr(&self) -> Expr {
        let t1 = self.scalar_coefficient(Coefficient::Tau1).clone();
        let t2 = self.scalar_coefficient(Coefficient::Tau2).clone();
        Expr::c(0.5) * (t1.clone() * t1 + t2.clone() * t2)
    }

    /// Whether `b, f, σ, τ1, τ2` are free of the slow variable, so the frozen
    /// problem is the same at every `x`.
    pub fn fast_problem_is_x_free(&self) -> bool {
        [
            Coefficient::B,
            Coefficient::F,
            Coefficient::Sigma,
            Coefficient::Tau1,
            Coefficient::Tau2,
        ]
        .into_iter()
        .all(|w| self.coefficient(w).iter().all(|e| !e.depends_on_any_x()))
    }

    /// Evaluates a coefficient; matrices come back row-major.
    pub fn eval_coefficient(
        &self,
        which: Coefficient,
        x: &[f64],
        y: &[f64],
        mu: &EmpiricalMeasure,
    ) -> Result<Vec<f64>> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::Shape(format!(
                "model has dimension {}, got x of length {} and y of length {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if mu.dim() != self.dim {
            return Err(Error::Shape(format!(
                "measure has dimension {}, model has {}",
                mu.dim(),
                self.dim
            )));
        }
        self.coefficient(which)
            .iter()
            .map(|e| e.eval(x, y, Some(mu)).map_err(Error::from))
            .collect()
    }

    /// `a(x, y)` as a row-major `dim × dim` matrix.
    pub fn eval_a(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        let ev = |es: &[Expr]| -> Result<Vec<f64>> {
            es.iter()
                .map(|e| e.eval(x, y, None).map_err(Error::from))
                .collect()
        };
        let t1 = ev(&self.tau1)?;
        let t2 = ev(&self.tau2)?;
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += t1[i * d + k] * t1[j * d + k] + t2[i * d + k] * t2[j * d + k];
                }
                a[i * d + j] = 0.5 * s;
            }
        }
        Ok(a)
    }

    /// Smallest eigenvalue bound of `a` over the given sample points, via the
    /// Gershgorin discs. Returns the minimum and the point where it occurs.
    pub fn ellipticity_bound(&self, points: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, usize)> {
        let d = self.dim;
        let mut best = (f64::INFINITY, 0);
        for (idx, (x, y)) in points.iter().enumerate() {
            let a = self.eval_a(x, y)?;
            for i in 0..d {
                let off: f64 = (0..d).filter(|j| *j != i).map(|j| a[i * d + j].abs()).sum();
                let lower = a[i * d + i] - off;
                if lower < best.0 {
                    best = (lower, idx);
                }
            }
        }
        Ok(best)
    }

    pub fn compile(&self) -> CompiledModel {
        CompiledModel::new(self)
    }
}

fn check_potential(name: &str, e: &Expr) -> Result<()> {
    if e.depends_on_any_y() || e.has_conv() {
        return Err(Error::Invalid(format!(
            "potential {name} = `{e}` must be a function of one spatial variable"
        )));
    }
    Ok(())
}

/// Aggregation-diffusion system in `dim` dimensions: `b = −∇V2(y)`,
/// `f = −∇V4(y)`, `c = −∇V1(x) − ⟨µ, ∇W1(x − ·)⟩`, `g = −∇V3(x) − ⟨µ, ∇W2(x − ·)⟩`
/// and isotropic noise.
pub fn build_aggdiff_model(p: AggDiffPotentials, dim: usize) -> Result<ModelSpec> {
    for (name, e) in [
        ("V1", &p.v1),
        ("V2", &p.v2),
        ("V3", &p.v3),
        ("V4", &p.v4),
        ("W1", &p.w1),
        ("W2", &p.w2),
    ] {
        check_potential(name, e)?;
    }
    if ![p.sigma, p.tau1, p.tau2].iter().all(|v| v.is_finite()) {
        return Err(Error::Invalid("noise constants must be finite".into()));
    }
    if p.alpha() <= 0.0 {
        return Err(Error::Invalid("tau1^2 + tau2^2 must be positive".into()));
    }
    let neg_grad_y = |v: &Expr| -> Result<Vec<Expr>> {
        Ok(v.grad_x(dim)?.into_iter().map(|e| -e.x_to_y()).collect())
    };
    let slow_drift = |v: &Expr, w: &Expr| -> Result<Vec<Expr>> {
        let gv = v.grad_x(dim)?;
        let gw = w.grad_x(dim)?;
        Ok(gv
            .into_iter()
            .zip(gw)
            .map(|(dv, dw)| {
                let conv = if dw.is_zero() { Expr::zero() } else { Expr::conv(dw) };
                -dv - conv
            })
            .collect())
    };
    let diag = |s: f64| -> Vec<Expr> {
        (0..dim * dim)
            .map(|k| Expr::c(if k % (dim + 1) == 0 { s } else { 0.0 }))
            .collect()
    };
    let mut m = ModelSpec::new(
        dim,
        neg_grad_y(&p.v2)?,
        slow_drift(&p.v1, &p.w1)?,
        neg_grad_y(&p.v4)?,
        slow_drift(&p.v3, &p.w2)?,
        diag(p.sigma),
        diag(p.tau1),
        diag(p.tau2),
    )?;
    m.name = "aggdiff".into();
    m.kind = ModelKind::AggDiff(p);
    Ok(m)
}

/// Number of sample points used to check periodicity of a profile.
pub const PERIODICITY_SAMPLES: usize = 64;
pub const PERIODICITY_TOL: f64 = 1e-10;

/// Checks `|q(y + 1) − q(y)| ≤ 1e−10` on a spread of sample points.
pub fn check_periodic(q: &Expr) -> Result<()> {
    for j in 0..PERIODICITY_SAMPLES {
        let y = -1.5 + 3.0 * j as f64 / (PERIODICITY_SAMPLES - 1) as f64 + 1e-3;
        let a = q.eval(&[y], &[], None)?;
        let b = q.eval(&[y + 1.0], &[], None)?;
        let mismatch = (a - b).abs();
        if !(mismatch <= PERIODICITY_TOL) {
            return Err(Error::NotPeriodic { at: y, mismatch });
        }
    }
    Ok(())
}

/// Rough-potential model: the fast variable follows the same dynamics as the
/// slow one, `1/ε` faster, in the periodic landscape `Σ_k Q_k`.
pub fn build_periodic_rough_model(v: Expr, w: Expr, q: Vec<Expr>, sigma: f64) -> Result<ModelSpec> {
    let dim = q.len();
    if dim == 0 {
        return Err(Error::Invalid("need at least one periodic profile".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Invalid(format!("sigma must be positive, got {sigma}")));
    }
    let mut landscape = Expr::zero();
    for (k, qk) in q.iter().enumerate() {
        check_potential("Q", qk)?;
        let mut vars = std::collections::HashSet::new();
        qk.collect_vars(&mut vars);
        if vars.iter().any(|v| *v != Var::X(0)) {
            return Err(Error::Invalid(format!(
                "periodic profile `{qk}` must be a function of one scalar variable"
            )));
        }
        check_periodic(qk)?;
        landscape = landscape + qk.substitute(&|_| Some(Expr::xi(k)));
    }
    let pots = AggDiffPotentials {
        v1: v.clone(),
        v2: landscape.clone(),
        v3: v.clone(),
        v4: landscape,
        w1: w.clone(),
        w2: w.clone(),
        sigma,
        tau1: sigma,
        tau2: 0.0,
    };
    let mut m = build_aggdiff_model(pots, dim)?;
    m.name = "periodic_rough".into();
    m.torus = true;
    m.kind = ModelKind::PeriodicRough(PeriodicRough { v, w, q, sigma });
    Ok(m)
}

/// Largest polynomial degree evaluated through moments.
const MAX_POLY_KERNEL_DEGREE: usize = 6;

/// A model compiled for repeated evaluation. Convolution kernels across all
/// coefficients share one slot registry.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    dim: usize,
    torus: bool,
    progs: [Vec<Program>; 7],
    /// Index of the first coefficient with the same expressions.
    alias: [usize; 7],
    kernels: KernelSet,
}

/// Convolution kernels of a family of programs, indexed by slot.
#[derive(Debug, Clone)]
pub struct KernelSet {
    progs: Vec<Program>,
    poly: Vec<Option<Vec<f64>>>,
}

impl KernelSet {
    /// Kernels of dimension `dim`; polynomial ones in one dimension are
    /// reduced through moments.
    pub fn new(registry: &[Arc<Expr>], dim: usize) -> KernelSet {
        KernelSet {
            progs: registry.iter().map(|k| Program::new(k)).collect(),
            poly: registry
                .iter()
                .map(|k| {
                    if dim == 1 {
                        k.polynomial_coefficients(MAX_POLY_KERNEL_DEGREE)
                    } else {
                        None
                    }
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.progs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.progs.is_empty()
    }

    /// Reduces `mu` once so convolutions can be evaluated at many points.
    pub fn prepare<'a>(&'a self, mu: &'a EmpiricalMeasure) -> PreparedMeasure<'a> {
        let kernels = self
            .poly
            .iter()
            .zip(&self.progs)
            .map(|(poly, prog)| match poly {
                Some(c) => PreparedKernel::Poly(shifted_polynomial(c, mu)),
                None => PreparedKernel::Direct(prog),
            })
            .collect();
        PreparedMeasure { mu, kernels }
    }
}

impl CompiledModel {
    pub fn new(m: &ModelSpec) -> CompiledModel {
        let mut registry = Vec::new();
        let progs = Coefficient::ALL.map(|w| {
            m.coefficient(w)
                .iter()
                .map(|e| Program::with_registry(e, &mut registry))
                .collect::<Vec<_>>()
        });
        let alias = std::array::from_fn(|i| {
            (0..i)
                .find(|&j| m.coefficient(Coefficient::ALL[j]) == m.coefficient(Coefficient::ALL[i]))
                .unwrap_or(i)
        });
        CompiledModel {
            dim: m.dim,
            torus: m.torus,
            progs,
            alias,
            kernels: KernelSet::new(&registry, m.dim),
        }
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    /// Position in [`Coefficient::ALL`] of the first coefficient identical to
    /// the one at position `i`.
    pub fn alias(&self, i: usize) -> usize {
        self.alias[i]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_torus(&self) -> bool {
        self.torus
    }

    pub fn n_conv(&self) -> usize {
        self.kernels.len()
    }

    pub fn programs(&self, which: Coefficient) -> &[Program] {
        let idx = Coefficient::ALL.iter().position(|w| *w == which).unwrap();
        &self.progs[idx]
    }

    pub fn prepare<'a>(&'a self, mu: &'a EmpiricalMeasure) -> PreparedMeasure<'a> {
        self.kernels.prepare(mu)
    }

    /// Writes the coefficient into `out` (length `dim` or `dim²`).
    pub fn eval_into(
        &self,
        which: Coefficient,
        x: &[f64],
        y: &[f64],
        conv: &[f64],
        out: &mut [f64],
    ) -> Result<(), EvalError> {
        for (o, p) in out.iter_mut().zip(self.programs(which)) {
            *o = p.eval(x, y, conv)?;
        }
        Ok(())
    }

    /// First entry of a coefficient; the whole value for scalar models.
    pub fn eval_scalar(
        &self,
        which: Coefficient,
        x: &[f64],
        y: &[f64],
        conv: &[f64],
    ) -> Result<f64, EvalError> {
        self.programs(which)[0].eval(x, y, conv)
    }
}

/// Polynomial kernel `K(z) = Σ c_j z^j` reduced against `mu`: returns the
/// centre `m` and coefficients `p_k` with `⟨µ, K(x − ·)⟩ = Σ p_k (x − m)^k`.
fn shifted_polynomial(c: &[f64], mu: &EmpiricalMeasure) -> (f64, Vec<f64>) {
    let deg = c.len().saturating_sub(1);
    let centre = mu.mean()[0];
    let mut moments = vec![0.0; deg + 1];
    for (p, w) in mu.iter() {
        let q = p[0] - centre;
        let mut qk = w;
        for m in moments.iter_mut() {
            *m += qk;
            qk *= q;
        }
    }
    let mut out = vec![0.0; c.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let mut binom = 1.0;
        for j in k..c.len() {
            if j > k {
                binom = binom * j as f64 / (j - k) as f64;
            }
            let sign = if (j - k) % 2 == 0 { 1.0 } else { -1.0 };
            *o += c[j] * binom * sign * moments[j - k];
        }
    }
    (centre, out)
}

#[derive(Debug)]
enum PreparedKernel<'a> {
    Poly((f64, Vec<f64>)),
    Direct(&'a Program),
}

/// A measure reduced for fast convolution evaluation.
#[derive(Debug)]
pub struct PreparedMeasure<'a> {
    mu: &'a EmpiricalMeasure,
    kernels: Vec<PreparedKernel<'a>>,
}

impl PreparedMeasure<'_> {
    pub fn measure(&self) -> &EmpiricalMeasure {
        self.mu
    }

    pub fn n_conv(&self) -> usize {
        self.kernels.len()
    }

    /// Writes `⟨µ, K_k(x − ·)⟩` for every registered kernel into `out`.
    pub fn conv_values(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let d = self.mu.dim();
        for (o, k) in out.iter_mut().zip(&self.kernels) {
            *o = match k {
                PreparedKernel::Poly((centre, p)) => {
                    let u = x[0] - centre;
                    p.iter().rev().fold(0.0, |acc, c| acc * u + c)
                }
                PreparedKernel::Direct(prog) => {
                    let mut z = [0.0; 8];
                    let mut zv;
                    let z: &mut [f64] = if d <= 8 {
                        &mut z[..d]
                    } else {
                        zv = vec![0.0; d];
                        &mut zv
                    };
                    let mut acc = 0.0;
                    for (p, w) in self.mu.iter() {
                        for i in 0..d {
                            z[i] = x[i] - p[i];
                        }
                        acc += w * prog.eval(z, &[], &[])?;
                    }
                    acc
                }
            };
        }
        Ok(())
    }

    pub fn conv_vec(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut out = vec![0.0; self.kernels.len()];
        self.conv_values(x, &mut out)?;
        Ok(out)
    }
}
