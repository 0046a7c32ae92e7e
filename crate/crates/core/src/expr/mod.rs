//! Closed expression trees for coefficient functions.
//!
//! An [`Expr`] is built either programmatically (the arithmetic operators are
//! overloaded and fold constants as they go) or by [`parse`]-ing the small
//! infix grammar documented in the README. Trees are immutable and cheap to
//! clone; children are shared through `Arc`.
//!
//! The only measure-dependent leaf is [`Expr::Conv`], which denotes
//! `z ↦ ⟨µ, K(z − ·)⟩` for a kernel `K` written in the slow (`x`) variables.

mod compile;
mod parse;

pub use compile::Program;
pub use parse::{parse, parse_potential, ParseError};

use std::collections::HashSet;
use std::fmt;
use std::ops;
use std::sync::Arc;

use crate::measure::EmpiricalMeasure;

/// A coordinate of the slow (`X`) or fast (`Y`) variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Arc<Expr>),
    Binary(BinOp, Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
    /// Mean-field convolution `⟨µ, K(x − ·)⟩`; the kernel uses only `x` variables.
    Conv(Arc<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {detail}")]
    Domain { subexpr: String, detail: &'static str },
    #[error("expression uses {var} but only {available} coordinate(s) were supplied")]
    Dimension { var: String, available: usize },
    #[error("`{subexpr}` needs a measure but none was supplied")]
    MissingMeasure { subexpr: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("cannot differentiate `{subexpr}` symbolically")]
    NotDifferentiable { subexpr: String },
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    /// First slow coordinate.
    pub fn x() -> Expr {
        Expr::Var(Var::X(0))
    }

    /// First fast coordinate.
    pub fn y() -> Expr {
        Expr::Var(Var::Y(0))
    }

    pub fn xi(i: usize) -> Expr {
        Expr::Var(Var::X(i))
    }

    pub fn yi(i: usize) -> Expr {
        Expr::Var(Var::Y(i))
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        if let Some(v) = arg.as_const() {
            let r = f.apply(v);
            if r.is_finite() {
                return Expr::Const(r);
            }
        }
        Expr::Call(f, Arc::new(arg))
    }

    pub fn exp(self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn ln(self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sin(self) -> Expr {
        Expr::call(Func::Sin, self)
    }
    pub fn cos(self) -> Expr {
        Expr::call(Func::Cos, self)
    }
    pub fn tanh(self) -> Expr {
        Expr::call(Func::Tanh, self)
    }
    pub fn sqrt(self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }
    pub fn abs(self) -> Expr {
        Expr::call(Func::Abs, self)
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        binary(BinOp::Pow, self, exponent)
    }

    pub fn powi(self, n: i32) -> Expr {
        self.pow(Expr::c(n as f64))
    }

    /// Mean-field convolution leaf with the given kernel.
    pub fn conv(kernel: Expr) -> Expr {
        Expr::Conv(Arc::new(kernel))
    }

    /// Evaluates the tree directly. `Conv` leaves sum over the particles of `mu`.
    pub fn eval(
        &self,
        x: &[f64],
        y: &[f64],
        mu: Option<&EmpiricalMeasure>,
    ) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(v) => *v,
            Expr::Var(Var::X(i)) => *x.get(*i).ok_or_else(|| EvalError::Dimension {
                var: format!("x{i}"),
                available: x.len(),
            })?,
            Expr::Var(Var::Y(i)) => *y.get(*i).ok_or_else(|| EvalError::Dimension {
                var: format!("y{i}"),
                available: y.len(),
            })?,
            Expr::Neg(u) => -u.eval(x, y, mu)?,
            Expr::Binary(op, l, r) => {
                let a = l.eval(x, y, mu)?;
                let b = r.eval(x, y, mu)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = pow_value(a, b);
                        if v.is_nan() {
                            return Err(self.domain("power of a negative base"));
                        }
                        v
                    }
                }
            }
            Expr::Call(f, u) => {
                let a = u.eval(x, y, mu)?;
                match f {
                    Func::Log if a <= 0.0 => return Err(self.domain("log of a nonpositive value")),
                    Func::Sqrt if a < 0.0 => return Err(self.domain("sqrt of a negative value")),
                    _ => f.apply(a),
                }
            }
            Expr::Conv(k) => {
                let mu = mu.ok_or_else(|| EvalError::MissingMeasure {
                    subexpr: self.to_string(),
                })?;
                let d = mu.dim();
                if x.len() < d {
                    return Err(EvalError::Dimension {
                        var: format!("x{}", d - 1),
                        available: x.len(),
                    });
                }
                let mut z = vec![0.0; d];
                let mut acc = 0.0;
                for (p, w) in mu.iter() {
                    for (zi, (xi, pi)) in z.iter_mut().zip(x.iter().zip(p)) {
                        *zi = xi - pi;
                    }
                    acc += w * k.eval(&z, &[], None)?;
                }
                acc
            }
        };
        Ok(v)
    }

    fn domain(&self, detail: &'static str) -> EvalError {
        EvalError::Domain {
            subexpr: self.to_string(),
            detail,
        }
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, wrt: Var) -> Result<Expr, DiffError> {
        if !self.depends_on(wrt) {
            return Ok(Expr::zero());
        }
        let d = match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(v) => Expr::c(if *v == wrt { 1.0 } else { 0.0 }),
            Expr::Neg(u) => -u.diff(wrt)?,
            Expr::Binary(op, l, r) => {
                let (u, v) = (l.as_ref().clone(), r.as_ref().clone());
                match op {
                    BinOp::Add => l.diff(wrt)? + r.diff(wrt)?,
                    BinOp::Sub => l.diff(wrt)? - r.diff(wrt)?,
                    BinOp::Mul => l.diff(wrt)? * v + u * r.diff(wrt)?,
                    BinOp::Div => {
                        if !r.depends_on(wrt) {
                            l.diff(wrt)? / v
                        } else {
                            (l.diff(wrt)? * v.clone() - u * r.diff(wrt)?) / v.powi(2)
                        }
                    }
                    BinOp::Pow => {
                        if let Some(n) = v.as_const() {
                            Expr::c(n) * u.clone().pow(Expr::c(n - 1.0)) * l.diff(wrt)?
                        } else if let Some(base) = u.as_const() {
                            Expr::c(base.ln()) * self.clone() * r.diff(wrt)?
                        } else {
                            self.clone()
                                * (r.diff(wrt)? * u.clone().ln() + v * l.diff(wrt)? / u)
                        }
                    }
                }
            }
            Expr::Call(f, arg) => {
                let du = arg.diff(wrt)?;
                let u = arg.as_ref().clone();
                let outer = match f {
                    Func::Exp => self.clone(),
                    Func::Log => Expr::c(1.0) / u,
                    Func::Sin => u.cos(),
                    Func::Cos => -u.sin(),
                    Func::Tanh => Expr::c(1.0) - self.clone().powi(2),
                    Func::Sqrt => Expr::c(0.5) / self.clone(),
                    Func::Abs => {
                        return Err(DiffError::NotDifferentiable {
                            subexpr: self.to_string(),
                        })
                    }
                };
                outer * du
            }
            Expr::Conv(k) => match wrt {
                Var::X(_) => Expr::conv(k.diff(wrt)?),
                Var::Y(_) => Expr::zero(),
            },
        };
        Ok(d)
    }

    /// Gradient with respect to the first `dim` slow coordinates.
    pub fn grad_x(&self, dim: usize) -> Result<Vec<Expr>, DiffError> {
        (0..dim).map(|i| self.diff(Var::X(i))).collect()
    }

    /// Replaces variables according to `map`; unmapped variables are kept.
    pub fn substitute(&self, map: &dyn Fn(Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => map(*v).unwrap_or_else(|| self.clone()),
            Expr::Neg(u) => -u.substitute(map),
            Expr::Binary(op, l, r) => binary(*op, l.substitute(map), r.substitute(map)),
            Expr::Call(f, u) => Expr::call(*f, u.substitute(map)),
            // The kernel's variables are bound by the convolution.
            Expr::Conv(_) => self.clone(),
        }
    }

    /// `self ∘ inner`: every variable of `self` is replaced by `inner`.
    pub fn compose(&self, inner: &Expr) -> Expr {
        self.substitute(&|_| Some(inner.clone()))
    }

    /// Rewrites every slow variable `x_i` as the fast variable `y_i`.
    pub fn x_to_y(&self) -> Expr {
        self.substitute(&|v| match v {
            Var::X(i) => Some(Expr::Var(Var::Y(i))),
            Var::Y(_) => None,
        })
    }

    /// Whether the value can change with `v`. Convolutions depend on every `x_i`.
    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(u) | Expr::Call(_, u) => u.depends_on(v),
            Expr::Binary(_, l, r) => l.depends_on(v) || r.depends_on(v),
            Expr::Conv(k) => matches!(v, Var::X(_)) && !k.is_const_tree(),
        }
    }

    pub fn depends_on_any_y(&self) -> bool {
        let mut vars = HashSet::new();
        self.collect_vars(&mut vars);
        vars.iter().any(|v| matches!(v, Var::Y(_)))
    }

    pub fn depends_on_any_x(&self) -> bool {
        let mut vars = HashSet::new();
        self.collect_vars(&mut vars);
        vars.iter().any(|v| matches!(v, Var::X(_))) || self.has_conv()
    }

    fn is_const_tree(&self) -> bool {
        let mut vars = HashSet::new();
        self.collect_vars(&mut vars);
        vars.is_empty() && !self.has_conv()
    }

    /// Free variables, not counting those bound inside convolution kernels.
    pub fn collect_vars(&self, out: &mut HashSet<Var>) {
        match self {
            Expr::Const(_) | Expr::Conv(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(u) | Expr::Call(_, u) => u.collect_vars(out),
            Expr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    pub fn has_conv(&self) -> bool {
        match self {
            Expr::Conv(_) => true,
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Neg(u) | Expr::Call(_, u) => u.has_conv(),
            Expr::Binary(_, l, r) => l.has_conv() || r.has_conv(),
        }
    }

    /// Kernels of all convolution leaves, in tree order.
    pub fn conv_kernels(&self) -> Vec<Arc<Expr>> {
        let mut out = Vec::new();
        self.walk_convs(&mut out);
        out
    }

    fn walk_convs(&self, out: &mut Vec<Arc<Expr>>) {
        match self {
            Expr::Conv(k) => out.push(k.clone()),
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Neg(u) | Expr::Call(_, u) => u.walk_convs(out),
            Expr::Binary(_, l, r) => {
                l.walk_convs(out);
                r.walk_convs(out);
            }
        }
    }

    /// Largest coordinate index used plus one (0 for constants).
    pub fn max_coord(&self) -> usize {
        let mut vars = HashSet::new();
        self.collect_vars(&mut vars);
        let own = vars
            .iter()
            .map(|v| match v {
                Var::X(i) | Var::Y(i) => i + 1,
            })
            .max()
            .unwrap_or(0);
        self.conv_kernels()
            .iter()
            .map(|k| k.max_coord())
            .fold(own, usize::max)
    }

    /// Taylor coefficients at 0 if the tree is a polynomial in `x` of degree ≤ `max_degree`.
    ///
    /// Detection is structural: the tree must differentiate to the constant zero.
    pub fn polynomial_coefficients(&self, max_degree: usize) -> Option<Vec<f64>> {
        let mut vars = HashSet::new();
        self.collect_vars(&mut vars);
        if self.has_conv() || vars.iter().any(|v| *v != Var::X(0)) {
            return None;
        }
        let mut coeffs = Vec::new();
        let mut current = self.clone();
        let mut factorial = 1.0;
        for k in 0..=max_degree + 1 {
            if current.is_zero() {
                return Some(coeffs);
            }
            if k == max_degree + 1 {
                return None;
            }
            if k > 0 {
                factorial *= k as f64;
            }
            let at_zero = current.eval(&[0.0], &[], None).ok()?;
            coeffs.push(at_zero / factorial);
            current = current.diff(Var::X(0)).ok()?;
        }
        None
    }
}

pub(crate) fn pow_value(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

/// Builds a binary node, folding constants and trivial identities.
pub fn binary(op: BinOp, l: Expr, r: Expr) -> Expr {
    if let (Some(a), Some(b)) = (l.as_const(), r.as_const()) {
        let v = match op {
            BinOp::Add => Some(a + b),
            BinOp::Sub => Some(a - b),
            BinOp::Mul => Some(a * b),
            BinOp::Div if b != 0.0 => Some(a / b),
            BinOp::Pow => Some(pow_value(a, b)),
            _ => None,
        };
        if let Some(v) = v.filter(|v| v.is_finite()) {
            return Expr::Const(v);
        }
    }
    match op {
        BinOp::Add if l.is_zero() => return r,
        BinOp::Add | BinOp::Sub if r.is_zero() => return l,
        BinOp::Sub if l.is_zero() => return -r,
        BinOp::Mul if l.is_zero() || r.is_zero() => return Expr::zero(),
        BinOp::Mul if l.is_one() => return r,
        BinOp::Mul if r.is_one() => return l,
        BinOp::Div if l.is_zero() && !r.is_zero() => return Expr::zero(),
        BinOp::Div if r.is_one() => return l,
        BinOp::Pow if r.is_one() => return l,
        BinOp::Pow if r.is_zero() => return Expr::c(1.0),
        _ => {}
    }
    // (c1 * u) / c2 -> (c1 / c2) * u
    if let (BinOp::Div, Some(b), Expr::Binary(BinOp::Mul, il, ir)) = (op, r.as_const(), &l) {
        if let Some(a) = il.as_const() {
            return Expr::c(a / b) * ir.as_ref().clone();
        }
    }
    // c1 * (c2 * u) -> (c1 c2) * u
    if op == BinOp::Mul {
        if let (Some(a), Expr::Binary(BinOp::Mul, il, ir)) = (l.as_const(), &r) {
            if let Some(b) = il.as_const() {
                return Expr::c(a * b) * ir.as_ref().clone();
            }
        }
    }
    Expr::Binary(op, Arc::new(l), Arc::new(r))
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        binary(BinOp::Add, self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        binary(BinOp::Sub, self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        binary(BinOp::Mul, self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        binary(BinOp::Div, self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(-v),
            Expr::Neg(u) => u.as_ref().clone(),
            other => Expr::Neg(Arc::new(other)),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::Const(v)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(0) => write!(f, "x"),
            Var::Y(0) => write!(f, "y"),
            Var::X(i) => write!(f, "x{i}"),
            Var::Y(i) => write!(f, "y{i}"),
        }
    }
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        Expr::Const(v) if *v < 0.0 => 3,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(u) => {
                write!(f, "-")?;
                write_child(f, u, 4)
            }
            Expr::Binary(op, l, r) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => (" * ", 2, 3),
                    BinOp::Div => (" / ", 2, 3),
                    // right associative
                    BinOp::Pow => ("^", 5, 4),
                };
                write_child(f, l, lp)?;
                write!(f, "{sym}")?;
                write_child(f, r, rp)
            }
            Expr::Call(func, u) => write!(f, "{}({u})", func.name()),
            Expr::Conv(k) => write!(f, "conv({k})"),
        }
    }
}
