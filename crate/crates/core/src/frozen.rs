//! The frozen fast problem at fixed `x`: invariant density, centering,
//! corrector and generator, from the explicit one-dimensional formulas.
//!
//! With `L(y) = ∫ f/a`, the density is `π ∝ exp(L)/a` and the corrector
//! solving `f Φ' + a Φ'' = −b` has
//! `Φ'(y) = exp(−L(y)) ∫_{−∞}^{y} (−b/a)(t) exp(L(t)) dt`.
//! The integral is accumulated in log space on a grid extended past the
//! user grid until `exp(L)` has decayed by `exp(−40)`, from the left below
//! the median of `π` and from the right above it. All running integrals use
//! a sixth-order interval rule, since the weight `exp(L(t) − L(y))` is steep
//! in the tails.

use crate::coeffs::{Coefficient, CompiledModel, ModelSpec};
use crate::error::{Error, Result};
use crate::expr::Program;
use crate::quad::{cumulative, interval_stencil, simpson, simpson_product};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Grid1D> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        if n < 7 || n % 2 == 0 {
            return Err(Error::Invalid(format!("grid needs an odd node count >= 7, got {n}")));
        }
        Ok(Grid1D { lo, hi, n })
    }

    /// `[−10, 10]` with 4001 nodes.
    pub fn default_dissipative() -> Grid1D {
        Grid1D {
            lo: -10.0,
            hi: 10.0,
            n: 4001,
        }
    }

    /// The unit cell `[0, 1]` with the endpoint duplicated.
    pub fn torus(n: usize) -> Result<Grid1D> {
        Grid1D::new(0.0, 1.0, n)
    }

    pub fn default_torus() -> Grid1D {
        Grid1D {
            lo: 0.0,
            hi: 1.0,
            n: 2049,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n - 1 {
            self.hi
        } else {
            self.lo + j as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Linear interpolation of grid values at `y`, clamped to the grid.
    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        let s = ((y - self.lo) / self.h()).clamp(0.0, (self.n - 1) as f64);
        let j = (s.floor() as usize).min(self.n - 2);
        let t = s - j as f64;
        values[j] * (1.0 - t) + values[j + 1] * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenOptions {
    pub tail_tol: f64,
    pub center_tol: f64,
    /// Required decay of `L` over the extension, in log units.
    pub extend_drop: f64,
    /// Maximum extension on each side, in multiples of the grid width.
    pub extend_cap: f64,
}

impl Default for FrozenOptions {
    fn default() -> Self {
        FrozenOptions {
            tail_tol: 1e-8,
            center_tol: 1e-7,
            extend_drop: 40.0,
            extend_cap: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSolution {
    pub grid: Grid1D,
    pub x_at: f64,
    pub torus: bool,
    /// `∫₀^y f/a − ln a`, relative to the node nearest `y = 0`.
    pub log_pi: Vec<f64>,
    /// `ln Z` with `π = Z exp(log_pi)`.
    pub log_z: f64,
    pub pi: Vec<f64>,
    pub phi: Vec<f64>,
    pub phi_y: Vec<f64>,
    pub phi_yy: Vec<f64>,
    pub tail_mass_estimate: f64,
}

impl FrozenSolution {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn has_corrector(&self) -> bool {
        !self.phi.is_empty()
    }

    /// `∫ v π` by Simpson on the grid.
    pub fn average(&self, v: &[f64]) -> f64 {
        simpson_product(v, &self.pi, self.grid.h())
    }
}

/// Frozen-problem solver bound to one model. Only `b`, `f`, `τ1`, `τ2` are
/// used; they never depend on the measure.
#[derive(Debug, Clone)]
pub struct FrozenSolver {
    b: Program,
    f: Program,
    tau1: Program,
    tau2: Program,
    torus: bool,
    x_free: bool,
    pub opts: FrozenOptions,
}

#[derive(Debug, Clone, Copy)]
struct Local {
    b: f64,
    f: f64,
    a: f64,
}

impl FrozenSolver {
    pub fn new(model: &ModelSpec) -> Result<FrozenSolver> {
        Self::with_options(model, FrozenOptions::default())
    }

    pub fn with_options(model: &ModelSpec, opts: FrozenOptions) -> Result<FrozenSolver> {
        if model.dim() != 1 {
            return Err(Error::Invalid(format!(
                "the frozen solver is one-dimensional, model has dimension {}",
                model.dim()
            )));
        }
        let cm = CompiledModel::new(model);
        let first = |w: Coefficient| cm.programs(w)[0].clone();
        Ok(FrozenSolver {
            b: first(Coefficient::B),
            f: first(Coefficient::F),
            tau1: first(Coefficient::Tau1),
            tau2: first(Coefficient::Tau2),
            torus: model.is_torus(),
            x_free: model.fast_problem_is_x_free(),
            opts,
        })
    }

    pub fn is_torus(&self) -> bool {
        self.torus
    }

    /// The grid to use when the caller has no preference.
    pub fn default_grid(&self) -> Grid1D {
        if self.torus {
            Grid1D::default_torus()
        } else {
            Grid1D::default_dissipative()
        }
    }

    /// Forces the unit cell on torus models, keeping the node count.
    fn effective_grid(&self, grid: &Grid1D) -> Grid1D {
        if self.torus {
            Grid1D {
                lo: 0.0,
                hi: 1.0,
                n: grid.n,
            }
        } else {
            *grid
        }
    }

    fn local(&self, x: f64, y: f64) -> Result<Local> {
        let (xs, ys) = ([x], [y]);
        let b = self.b.eval(&xs, &ys, &[])?;
        let f = self.f.eval(&xs, &ys, &[])?;
        let t1 = self.tau1.eval(&xs, &ys, &[])?;
        let t2 = self.tau2.eval(&xs, &ys, &[])?;
        let a = 0.5 * (t1 * t1 + t2 * t2);
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Ellipticity { x, y, a });
        }
        Ok(Local { b, f, a })
    }

    pub fn eval_b(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.b.eval(&[x], &[y], &[])?)
    }

    pub fn eval_f(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.f.eval(&[x], &[y], &[])?)
    }

    pub fn eval_a(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.local(x, y)?.a)
    }

    fn locals(&self, x: f64, grid: &Grid1D) -> Result<Vec<Local>> {
        grid.nodes().into_iter().map(|y| self.local(x, y)).collect()
    }

    /// Normalized invariant density on `grid` (the corrector is left empty).
    pub fn invariant_density(&self, x: f64, grid: &Grid1D) -> Result<FrozenSolution> {
        let grid = self.effective_grid(grid);
        let loc = self.locals(x, &grid)?;
        let h = grid.h();
        let ratio: Vec<f64> = loc.iter().map(|l| l.f / l.a).collect();
        let mut big_l = cumulative(&ratio, h, self.torus);
        if self.torus {
            let mismatch = big_l[grid.n - 1] - big_l[0];
            let scale = 1.0 + ratio.iter().map(|r| r.abs()).sum::<f64>() * h;
            if mismatch.abs() > 1e-8 * scale {
                return Err(Error::Periodicity { mismatch });
            }
        }
        let zero = if grid.lo <= 0.0 && 0.0 <= grid.hi {
            ((0.0 - grid.lo) / h).round() as usize
        } else {
            0
        };
        let shift = big_l[zero];
        for v in big_l.iter_mut() {
            *v -= shift;
        }
        let log_pi: Vec<f64> = big_l.iter().zip(&loc).map(|(l, c)| l - c.a.ln()).collect();
        let m = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut pi: Vec<f64> = log_pi.iter().map(|v| (v - m).exp()).collect();
        let s = simpson(&pi, h);
        for p in pi.iter_mut() {
            *p /= s;
        }
        let tail_mass_estimate = if self.torus {
            0.0
        } else {
            (pi[0] + pi[grid.n - 1]) * h
        };
        if !(tail_mass_estimate <= self.opts.tail_tol) {
            let reach = grid.lo.abs().max(grid.hi.abs());
            return Err(Error::GridTooSmall {
                lo: grid.lo,
                hi: grid.hi,
                tail_mass: tail_mass_estimate,
                tol: self.opts.tail_tol,
                suggest: 2.0 * reach,
            });
        }
        Ok(FrozenSolution {
            grid,
            x_at: x,
            torus: self.torus,
            log_pi,
            log_z: -m - s.ln(),
            pi,
            phi: Vec::new(),
            phi_y: Vec::new(),
            phi_yy: Vec::new(),
            tail_mass_estimate,
        })
    }

    /// `|∫ b π|` over the grid.
    pub fn check_centering(&self, x: f64, frozen: &FrozenSolution) -> Result<f64> {
        let b: Result<Vec<f64>> = frozen
            .grid
            .nodes()
            .into_iter()
            .map(|y| self.eval_b(x, y))
            .collect();
        Ok(frozen.average(&b?).abs())
    }

    /// Fills `phi`, `phi_y`, `phi_yy`. Fails if centering exceeds `center_tol`.
    pub fn solve_corrector(&self, x: f64, mut frozen: FrozenSolution) -> Result<FrozenSolution> {
        let residual = self.check_centering(x, &frozen)?;
        if !(residual <= self.opts.center_tol) {
            return Err(Error::Centering {
                x,
                residual,
                tol: self.opts.center_tol,
            });
        }
        let grid = frozen.grid;
        let h = grid.h();
        let phi_y = if self.torus {
            self.phi_y_torus(x, &grid)?
        } else {
            self.phi_y_line(x, &grid)?
        };
        let mut phi = cumulative(&phi_y, h, self.torus);
        if self.torus {
            let mismatch = phi[grid.n - 1] - phi[0];
            if mismatch.abs() > 1e-8 {
                return Err(Error::Periodicity { mismatch });
            }
        }
        let shift = simpson_product(&phi, &frozen.pi, h);
        for p in phi.iter_mut() {
            *p -= shift;
        }
        let loc = self.locals(x, &grid)?;
        let phi_yy = loc
            .iter()
            .zip(&phi_y)
            .map(|(l, py)| (-l.b - l.f * py) / l.a)
            .collect();
        frozen.phi = phi;
        frozen.phi_y = phi_y;
        frozen.phi_yy = phi_yy;
        Ok(frozen)
    }

    /// Density and corrector in one call.
    pub fn solve(&self, x: f64, grid: &Grid1D) -> Result<FrozenSolution> {
        let frozen = self.invariant_density(x, grid)?;
        self.solve_corrector(x, frozen)
    }

    /// Number of extension nodes on one side, stepping by `step` (±h) from `y0`.
    fn extension(&self, x: f64, y0: f64, step: f64, max_nodes: usize) -> usize {
        let mut drop = 0.0;
        let Ok(mut prev) = self.local(x, y0).map(|l| l.f / l.a) else {
            return 0;
        };
        for k in 1..=max_nodes {
            let Ok(l) = self.local(x, y0 + k as f64 * step) else {
                return k - 1;
            };
            let r = l.f / l.a;
            if !r.is_finite() || !l.b.is_finite() {
                return k - 1;
            }
            // Trapezoid estimate of the decay of L moving outward.
            drop -= 0.5 * (prev + r) * step;
            prev = r;
            if drop >= self.opts.extend_drop {
                return k;
            }
        }
        max_nodes
    }

    fn phi_y_line(&self, x: f64, grid: &Grid1D) -> Result<Vec<f64>> {
        let h = grid.h();
        let cap = (self.opts.extend_cap * (grid.n - 1) as f64) as usize;
        let left = self.extension(x, grid.lo, -h, cap);
        let right = self.extension(x, grid.hi, h, cap);
        let total = left + grid.n + right;
        let y = |j: usize| grid.lo + (j as f64 - left as f64) * h;
        let loc: Vec<Local> = (0..total)
            .map(|j| self.local(x, y(j)))
            .collect::<Result<_>>()?;
        let ratio: Vec<f64> = loc.iter().map(|l| l.f / l.a).collect();
        let big_l = cumulative(&ratio, h, false);
        let q: Vec<f64> = loc.iter().map(|l| -l.b / l.a).collect();

        let lmax = big_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mass: Vec<f64> = big_l
            .iter()
            .zip(&loc)
            .map(|(l, c)| (l - lmax).exp() / c.a)
            .collect();
        let cum = cumulative(&mass, h, false);
        let half = 0.5 * cum[total - 1];
        let median = cum.iter().position(|c| *c >= half).unwrap_or(total - 1);

        let interval = |i: usize, reference: f64| -> f64 {
            let (idx, w) = interval_stencil(i, total);
            idx.iter()
                .zip(w)
                .map(|(k, w)| w * q[*k] * (big_l[*k] - reference).exp())
                .sum::<f64>()
                * h
        };
        let mut phi_y = vec![0.0; total];
        for j in 1..=median {
            phi_y[j] = phi_y[j - 1] * (big_l[j - 1] - big_l[j]).exp() + interval(j - 1, big_l[j]);
        }
        let mut acc = 0.0;
        for j in (median + 1..total - 1).rev() {
            acc = acc * (big_l[j + 1] - big_l[j]).exp() - interval(j, big_l[j]);
            phi_y[j] = acc;
        }
        Ok(phi_y[left..left + grid.n].to_vec())
    }

    fn phi_y_torus(&self, x: f64, grid: &Grid1D) -> Result<Vec<f64>> {
        let h = grid.h();
        let n = grid.n;
        let loc = self.locals(x, grid)?;
        let ratio: Vec<f64> = loc.iter().map(|l| l.f / l.a).collect();
        let big_l = cumulative(&ratio, h, true);
        let lmax = big_l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = big_l.iter().map(|l| (l - lmax).exp()).collect();
        let qe: Vec<f64> = loc.iter().zip(&e).map(|(l, e)| -l.b / l.a * e).collect();
        let j = cumulative(&qe, h, true);
        let j_over_e: Vec<f64> = j.iter().zip(&e).map(|(j, e)| j / e).collect();
        let inv_e: Vec<f64> = e.iter().map(|e| 1.0 / e).collect();
        let c = -cumulative(&j_over_e, h, true)[n - 1] / cumulative(&inv_e, h, true)[n - 1];
        let phi_y: Vec<f64> = j.iter().zip(&e).map(|(j, e)| (c + j) / e).collect();
        let mismatch = phi_y[n - 1] - phi_y[0];
        if mismatch.abs() > 1e-8 {
            return Err(Error::Periodicity { mismatch });
        }
        Ok(phi_y)
    }

    /// `f g' + a g''` on the grid.
    pub fn apply_generator(
        &self,
        x: f64,
        frozen: &FrozenSolution,
        g: &[f64],
        g_y: &[f64],
        g_yy: &[f64],
    ) -> Result<Vec<f64>> {
        let n = frozen.grid.n;
        if g.len() != n || g_y.len() != n || g_yy.len() != n {
            return Err(Error::Shape(format!(
                "generator input has lengths {}, {}, {}; grid has {n} nodes",
                g.len(),
                g_y.len(),
                g_yy.len()
            )));
        }
        let loc = self.locals(x, &frozen.grid)?;
        Ok(loc
            .iter()
            .zip(g_y.iter().zip(g_yy))
            .map(|(l, (d1, d2))| l.f * d1 + l.a * d2)
            .collect())
    }

    /// Central differences of `Φ` and `Φ'` in `x`, both stencil points sharing `grid`.
    pub fn corrector_x_derivatives(
        &self,
        x: f64,
        grid: &Grid1D,
        h_x: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.effective_grid(grid).n;
        if self.x_free {
            return Ok((vec![0.0; n], vec![0.0; n]));
        }
        let plus = self.solve(x + h_x, grid)?;
        let minus = self.solve(x - h_x, grid)?;
        let d = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(p, m)| (p - m) / (2.0 * h_x)).collect()
        };
        Ok((d(&plus.phi, &minus.phi), d(&plus.phi_y, &minus.phi_y)))
    }
}

/// Default finite-difference step in `x`.
pub fn default_h_x(x: f64) -> f64 {
    1e-4 * (1.0 + x.abs())
}

pub fn invariant_density(model: &ModelSpec, x: f64, grid: &Grid1D) -> Result<FrozenSolution> {
    FrozenSolver::new(model)?.invariant_density(x, grid)
}

pub fn check_centering(model: &ModelSpec, x: f64, frozen: &FrozenSolution) -> Result<f64> {
    FrozenSolver::new(model)?.check_centering(x, frozen)
}

pub fn solve_corrector(model: &ModelSpec, x: f64, frozen: FrozenSolution) -> Result<FrozenSolution> {
    FrozenSolver::new(model)?.solve_corrector(x, frozen)
}

pub fn apply_generator(
    model: &ModelSpec,
    x: f64,
    frozen: &FrozenSolution,
    g: &[f64],
    g_y: &[f64],
    g_yy: &[f64],
) -> Result<Vec<f64>> {
    FrozenSolver::new(model)?.apply_generator(x, frozen, g, g_y, g_yy)
}

pub fn corrector_x_derivatives(
    model: &ModelSpec,
    x: f64,
    grid: &Grid1D,
    h_x: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    FrozenSolver::new(model)?.corrector_x_derivatives(x, grid, h_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, parse_potential, Expr};
    use crate::{build_periodic_rough_model, ModelSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn model(b: &str, f: &str, a: f64) -> ModelSpec {
        ModelSpec::scalar(
            parse(b).unwrap(),
            Expr::zero(),
            parse(f).unwrap(),
            Expr::zero(),
            Expr::zero(),
            Expr::c((2.0 * a).sqrt()),
            Expr::zero(),
        )
        .unwrap()
    }

    fn grid8() -> Grid1D {
        Grid1D::new(-8.0, 8.0, 4001).unwrap()
    }

    fn max_err(got: &[f64], want: impl Fn(f64) -> f64, grid: &Grid1D) -> f64 {
        grid.nodes()
            .iter()
            .zip(got)
            .map(|(y, g)| (g - want(*y)).abs())
            .fold(0.0, f64::max)
    }

    fn rough_double_well() -> ModelSpec {
        build_periodic_rough_model(
            parse_potential("x^4/4 - x^2/2").unwrap(),
            parse_potential("x^2/2").unwrap(),
            vec![parse_potential("0.1*(cos(2*pi*y) + sin(2*pi*y))").unwrap()],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn ou_density_is_gaussian() {
        for var in [1.0, 0.25] {
            let s = FrozenSolver::new(&model("y", "-y", var)).unwrap();
            let fr = s.invariant_density(0.0, &grid8()).unwrap();
            let gauss = |y: f64| (-y * y / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            assert!(max_err(&fr.pi, gauss, &fr.grid) < 1e-6);
            assert!((simpson(&fr.pi, fr.grid.h()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ou_correctors() {
        let s = FrozenSolver::new(&model("y", "-y", 1.0)).unwrap();
        let fr = s.solve(0.0, &grid8()).unwrap();
        assert!(max_err(&fr.phi, |y| y, &fr.grid) < 1e-7);
        assert!(max_err(&fr.phi_y, |_| 1.0, &fr.grid) < 1e-7);
        let s = FrozenSolver::new(&model("y^2 - 1", "-y", 1.0)).unwrap();
        let fr = s.solve(0.0, &grid8()).unwrap();
        assert!(max_err(&fr.phi, |y| (y * y - 1.0) / 2.0, &fr.grid) < 1e-7);
    }

    #[test]
    fn centering_examples() {
        let grid = grid8();
        for (b, want, tol) in [("y", 0.0, 1e-10), ("y^2 - 1", 0.0, 1e-8), ("y^2", 1.0, 1e-6)] {
            let s = FrozenSolver::new(&model(b, "-y", 1.0)).unwrap();
            let fr = s.invariant_density(0.0, &grid).unwrap();
            assert!((s.check_centering(0.0, &fr).unwrap() - want).abs() < tol, "{b}");
        }
        let s = FrozenSolver::new(&model("y^2", "-y", 1.0)).unwrap();
        assert!(matches!(s.solve(0.0, &grid), Err(Error::Centering { .. })));
        let s = FrozenSolver::new(&rough_double_well()).unwrap();
        let fr = s.invariant_density(0.3, &Grid1D::default_torus()).unwrap();
        assert!(s.check_centering(0.3, &fr).unwrap() < 1e-12);
    }

    #[test]
    fn periodic_density_matches_closed_form() {
        let s = FrozenSolver::new(&rough_double_well()).unwrap();
        let fr = s.invariant_density(0.0, &Grid1D::default_torus()).unwrap();
        let q = |y: f64| 0.1 * ((2.0 * PI * y).cos() + (2.0 * PI * y).sin());
        let boltz = |y: f64| (-2.0 * q(y) / 0.25).exp();
        // Independent normalization: fine midpoint rule.
        let m = 200_000;
        let z: f64 = (0..m).map(|k| boltz((k as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
        assert!(max_err(&fr.pi, |y| boltz(y) / z, &fr.grid) < 1e-9);
    }

    #[test]
    fn periodic_corrector_residual() {
        let s = FrozenSolver::new(&rough_double_well()).unwrap();
        let fr = s.solve(0.0, &Grid1D::default_torus()).unwrap();
        let y = fr.grid.nodes();
        let two_pi = 2.0 * PI;
        for j in 1..fr.grid.n() - 1 {
            let qp = 0.1 * two_pi * ((two_pi * y[j]).cos() - (two_pi * y[j]).sin());
            let (b, f, a) = (-qp, -qp, 0.125);
            let r = f * fr.phi_y[j] + a * fr.phi_yy[j] + b;
            assert!(r.abs() < 1e-6);
        }
        assert!(fr.average(&fr.phi).abs() < 1e-7);
        assert!((fr.phi[0] - fr.phi[fr.grid.n() - 1]).abs() < 1e-8);
    }

    #[test]
    fn generator_examples() {
        let s = FrozenSolver::new(&model("y", "-y", 1.0)).unwrap();
        let fr = s.invariant_density(0.0, &grid8()).unwrap();
        let y = fr.grid.nodes();
        let n = y.len();
        let zero = vec![0.0; n];
        let l_const = s.apply_generator(0.0, &fr, &vec![1.0; n], &zero, &zero).unwrap();
        assert!(l_const.iter().all(|v| *v == 0.0));
        let l_lin = s.apply_generator(0.0, &fr, &y, &vec![1.0; n], &zero).unwrap();
        assert!(l_lin.iter().zip(&y).all(|(v, y)| (v + y).abs() < 1e-15));
        let sq: Vec<f64> = y.iter().map(|v| v * v).collect();
        let d1: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let l_sq = s.apply_generator(0.0, &fr, &sq, &d1, &vec![2.0; n]).unwrap();
        assert!(fr.average(&l_sq).abs() < 1e-8);
        assert!(s.apply_generator(0.0, &fr, &sq, &d1, &[2.0]).is_err());
    }

    #[test]
    fn residual_identity_holds_by_construction() {
        let s = FrozenSolver::new(&model("sin(y) + y/(1 + y^2)", "-y - y^3", 0.7)).unwrap();
        let fr = s.solve(0.4, &grid8()).unwrap();
        for (j, y) in fr.grid.nodes().into_iter().enumerate() {
            let b = s.eval_b(0.4, y).unwrap();
            let f = s.eval_f(0.4, y).unwrap();
            let r = 0.7 * fr.phi_yy[j] + f * fr.phi_y[j] + b;
            assert!(r.abs() < 1e-12 * (1.0 + b.abs() + (f * fr.phi_y[j]).abs()));
        }
    }

    #[test]
    fn x_derivatives() {
        let s = FrozenSolver::new(&model("y", "-y", 1.0)).unwrap();
        let (px, pxy) = s.corrector_x_derivatives(0.5, &grid8(), default_h_x(0.5)).unwrap();
        assert!(px.iter().chain(&pxy).all(|v| v.abs() < 1e-8));

        let s = FrozenSolver::new(&model("x*(y^2 - 1)", "-y", 1.0)).unwrap();
        let grid = grid8();
        let (px, pxy) = s.corrector_x_derivatives(0.7, &grid, default_h_x(0.7)).unwrap();
        assert!(max_err(&px, |y| (y * y - 1.0) / 2.0, &grid) < 1e-6);
        assert!(max_err(&pxy, |y| y, &grid) < 1e-6);
    }

    #[test]
    fn x_derivative_stencil_converges() {
        // x-dependent fast drift: Φ_x has no closed form, so check Richardson ratios.
        let m = model("y - tanh(x)*0", "-(1 + 0.5*sin(x))*y", 1.0);
        let m = ModelSpec::scalar(
            parse("y*(1 + 0.3*x^2) - x*0.2*y^3 + 0.6*x*y").unwrap(),
            Expr::zero(),
            parse("-(1 + 0.5*sin(x))*y - 0.2*y^3").unwrap(),
            Expr::zero(),
            Expr::zero(),
            m.scalar_coefficient(Coefficient::Tau1).clone(),
            Expr::zero(),
        )
        .unwrap();
        let s = FrozenSolver::new(&m).unwrap();
        let grid = grid8();
        let x = 0.4;
        let (a, _) = s.corrector_x_derivatives(x, &grid, 0.04).unwrap();
        let (b, _) = s.corrector_x_derivatives(x, &grid, 0.02).unwrap();
        let (c, _) = s.corrector_x_derivatives(x, &grid, 0.01).unwrap();
        let mid = grid.n() / 2 + 100;
        let ratio = (a[mid] - b[mid]) / (b[mid] - c[mid]);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn grid_too_small_is_reported() {
        let s = FrozenSolver::new(&model("y", "-0.01*y", 1.0)).unwrap();
        match s.invariant_density(0.0, &grid8()) {
            Err(e @ Error::GridTooSmall { .. }) => assert_eq!(e.assumption(), Some("A2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_noise_is_an_ellipticity_error() {
        let m = ModelSpec::scalar(
            parse("y").unwrap(),
            Expr::zero(),
            parse("-y").unwrap(),
            Expr::zero(),
            Expr::zero(),
            parse("y").unwrap(),
            Expr::zero(),
        )
        .unwrap();
        let s = FrozenSolver::new(&m).unwrap();
        assert!(matches!(
            s.invariant_density(0.0, &grid8()),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn grid_refinement_is_stable() {
        for m in [model("y", "-y", 1.0), model("y^3 - 3*y", "-y", 1.0), rough_double_well()] {
            let s = FrozenSolver::new(&m).unwrap();
            let base = s.default_grid();
            let fine = Grid1D::new(base.lo(), base.hi(), 2 * base.n() - 1).unwrap();
            let energy = |g: &Grid1D| {
                let fr = s.solve(0.0, g).unwrap();
                let sq: Vec<f64> = fr.phi.iter().map(|p| p * p).collect();
                fr.average(&sq)
            };
            assert!((energy(&base) - energy(&fine)).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn corrector_is_normalized(k in 0.5f64..2.0, s3 in -0.3f64..0.3, x in -2.0f64..2.0) {
            let m = model(&format!("{s3}*(y^3 - 3*y) + y"), &format!("-{k}*y"), 1.0);
            let s = FrozenSolver::new(&m).unwrap();
            let fr = s.solve(x, &Grid1D::new(-9.0, 9.0, 2001).unwrap()).unwrap();
            prop_assert!(fr.average(&fr.phi).abs() < 1e-7);
            prop_assert!(fr.pi.iter().all(|p| *p >= 0.0));
        }

        #[test]
        fn ou_generator_kills_polynomial_means(deg in 0u32..5) {
            let s = FrozenSolver::new(&model("y", "-y", 1.0)).unwrap();
            let fr = s.invariant_density(0.0, &grid8()).unwrap();
            let y = fr.grid.nodes();
            let p = deg as f64;
            let g: Vec<f64> = y.iter().map(|v| v.powi(deg as i32)).collect();
            let g1: Vec<f64> = y.iter().map(|v| if deg >= 1 { p * v.powi(deg as i32 - 1) } else { 0.0 }).collect();
            let g2: Vec<f64> = y.iter().map(|v| if deg >= 2 { p * (p - 1.0) * v.powi(deg as i32 - 2) } else { 0.0 }).collect();
            let lg = s.apply_generator(0.0, &fr, &g, &g1, &g2).unwrap();
            prop_assert!(fr.average(&lg).abs() < 1e-8);
        }
    }
}
