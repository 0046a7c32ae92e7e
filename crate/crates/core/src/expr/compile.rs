//! Flat postfix form of an [`Expr`] for the hot loops.
//!
//! Convolution leaves become slots whose values are supplied by the caller,
//! so a measure is reduced once per step instead of once per particle.

use std::sync::Arc;

use super::{pow_value, BinOp, EvalError, Expr, Func, Var};

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    X(usize),
    Y(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div(u32),
    Pow(u32),
    /// Binary operations with a constant operand.
    AddC(f64),
    SubC(f64),
    MulC(f64),
    DivC(f64),
    /// `c / top`.
    RDivC(f64, u32),
    PowI(i32),
    Call(Func, u32),
    Conv(usize, u32),
}

const INLINE_STACK: usize = 32;

#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    depth: usize,
    n_conv: usize,
    /// Nodes that can raise a domain error, for diagnostics.
    checked: Vec<Expr>,
}

impl Program {
    /// Compiles with private convolution slots numbered in tree order.
    pub fn new(expr: &Expr) -> Program {
        let mut registry = Vec::new();
        Program::with_registry(expr, &mut registry)
    }

    /// Compiles against a shared kernel registry: structurally equal kernels
    /// share a slot, and new kernels are appended.
    pub fn with_registry(expr: &Expr, registry: &mut Vec<Arc<Expr>>) -> Program {
        let mut p = Program {
            ops: Vec::new(),
            depth: 0,
            n_conv: 0,
            checked: Vec::new(),
        };
        let mut cur = 0;
        p.emit(expr, &mut cur, registry);
        p
    }

    fn emit(&mut self, e: &Expr, cur: &mut usize, registry: &mut Vec<Arc<Expr>>) {
        let push = |p: &mut Program, cur: &mut usize, op: Op| {
            p.ops.push(op);
            *cur += 1;
            p.depth = p.depth.max(*cur);
        };
        match e {
            Expr::Const(v) => push(self, cur, Op::Const(*v)),
            Expr::Var(Var::X(i)) => push(self, cur, Op::X(*i)),
            Expr::Var(Var::Y(i)) => push(self, cur, Op::Y(*i)),
            Expr::Conv(k) => {
                let slot = match registry.iter().position(|r| r == k) {
                    Some(s) => s,
                    None => {
                        registry.push(k.clone());
                        registry.len() - 1
                    }
                };
                self.n_conv = self.n_conv.max(slot + 1);
                let tag = self.tag(e);
                push(self, cur, Op::Conv(slot, tag));
            }
            Expr::Neg(u) => {
                self.emit(u, cur, registry);
                self.ops.push(Op::Neg);
            }
            Expr::Call(f, u) => {
                self.emit(u, cur, registry);
                let tag = self.tag(e);
                self.ops.push(Op::Call(*f, tag));
            }
            Expr::Binary(op, l, r) => {
                if let Some(fused) = self.fuse(e, *op, l, r) {
                    let (operand, extra) = fused;
                    self.emit(operand, cur, registry);
                    self.ops.extend(extra);
                    return;
                }
                self.emit(l, cur, registry);
                self.emit(r, cur, registry);
                let op = match op {
                    BinOp::Add => Op::Add,
                    BinOp::Sub => Op::Sub,
                    BinOp::Mul => Op::Mul,
                    BinOp::Div => Op::Div(self.tag(e)),
                    BinOp::Pow => Op::Pow(self.tag(e)),
                };
                self.ops.push(op);
                *cur -= 1;
            }
        }
    }

    /// Single-operand form of a binary node with one constant side: the
    /// operand to emit and the ops that follow it. Results are bitwise equal
    /// to the two-operand form.
    fn fuse<'e>(&mut self, e: &Expr, op: BinOp, l: &'e Expr, r: &'e Expr) -> Option<(&'e Expr, Vec<Op>)> {
        match (op, l.as_const(), r.as_const()) {
            (BinOp::Add, _, Some(c)) => Some((l, vec![Op::AddC(c)])),
            (BinOp::Add, Some(c), _) => Some((r, vec![Op::AddC(c)])),
            (BinOp::Sub, _, Some(c)) => Some((l, vec![Op::SubC(c)])),
            (BinOp::Sub, Some(c), _) => Some((r, vec![Op::Neg, Op::AddC(c)])),
            (BinOp::Mul, _, Some(c)) => Some((l, vec![Op::MulC(c)])),
            (BinOp::Mul, Some(c), _) => Some((r, vec![Op::MulC(c)])),
            (BinOp::Div, _, Some(c)) if c != 0.0 => Some((l, vec![Op::DivC(c)])),
            (BinOp::Div, Some(c), _) => Some((r, vec![Op::RDivC(c, self.tag(e))])),
            (BinOp::Pow, _, Some(c)) if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 => {
                Some((l, vec![Op::PowI(c as i32)]))
            }
            _ => None,
        }
    }

    fn tag(&mut self, e: &Expr) -> u32 {
        self.checked.push(e.clone());
        (self.checked.len() - 1) as u32
    }

    /// Length the `conv` slice passed to [`Program::eval`] must have at least.
    pub fn n_conv(&self) -> usize {
        self.n_conv
    }

    /// Returns the constant value if the program is a single constant.
    pub fn as_const(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(v)] => Some(*v),
            _ => None,
        }
    }

    /// Evaluates with `conv[k]` standing in for the k-th convolution leaf.
    pub fn eval(&self, x: &[f64], y: &[f64], conv: &[f64]) -> Result<f64, EvalError> {
        if let [Op::Const(v)] = self.ops.as_slice() {
            return Ok(*v);
        }
        if self.depth <= INLINE_STACK {
            let mut stack = [0.0; INLINE_STACK];
            self.run(&mut stack, x, y, conv)
        } else {
            let mut stack = vec![0.0; self.depth];
            self.run(&mut stack, x, y, conv)
        }
    }

    fn run(&self, s: &mut [f64], x: &[f64], y: &[f64], conv: &[f64]) -> Result<f64, EvalError> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    s[sp] = v;
                    sp += 1;
                }
                Op::X(i) => {
                    s[sp] = *x.get(i).ok_or_else(|| EvalError::Dimension {
                        var: format!("x{i}"),
                        available: x.len(),
                    })?;
                    sp += 1;
                }
                Op::Y(i) => {
                    s[sp] = *y.get(i).ok_or_else(|| EvalError::Dimension {
                        var: format!("y{i}"),
                        available: y.len(),
                    })?;
                    sp += 1;
                }
                Op::Conv(k, tag) => {
                    s[sp] = *conv.get(k).ok_or_else(|| EvalError::MissingMeasure {
                        subexpr: self.checked[tag as usize].to_string(),
                    })?;
                    sp += 1;
                }
                Op::Neg => s[sp - 1] = -s[sp - 1],
                Op::AddC(c) => s[sp - 1] += c,
                Op::SubC(c) => s[sp - 1] -= c,
                Op::MulC(c) => s[sp - 1] *= c,
                Op::DivC(c) => s[sp - 1] /= c,
                Op::RDivC(c, tag) => {
                    if s[sp - 1] == 0.0 {
                        return Err(self.domain(tag, "division by zero"));
                    }
                    s[sp - 1] = c / s[sp - 1];
                }
                Op::PowI(n) => s[sp - 1] = s[sp - 1].powi(n),
                Op::Call(f, tag) => {
                    let a = s[sp - 1];
                    s[sp - 1] = match f {
                        Func::Log if a <= 0.0 => {
                            return Err(self.domain(tag, "log of a nonpositive value"))
                        }
                        Func::Sqrt if a < 0.0 => {
                            return Err(self.domain(tag, "sqrt of a negative value"))
                        }
                        _ => f.apply(a),
                    };
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div(_) | Op::Pow(_) => {
                    sp -= 1;
                    let (a, b) = (s[sp - 1], s[sp]);
                    s[sp - 1] = match *op {
                        Op::Add => a + b,
                        Op::Sub => a - b,
                        Op::Mul => a * b,
                        Op::Div(tag) => {
                            if b == 0.0 {
                                return Err(self.domain(tag, "division by zero"));
                            }
                            a / b
                        }
                        Op::Pow(tag) => {
                            let v = pow_value(a, b);
                            if v.is_nan() {
                                return Err(self.domain(tag, "power of a negative base"));
                            }
                            v
                        }
                        _ => unreachable!(),
                    };
                }
            }
        }
        Ok(s[0])
    }

    fn domain(&self, tag: u32, detail: &'static str) -> EvalError {
        EvalError::Domain {
            subexpr: self.checked[tag as usize].to_string(),
            detail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::measure::EmpiricalMeasure;
    use proptest::prelude::*;

    #[test]
    fn matches_tree_evaluation() {
        let e = parse("exp(-x^2/2) * cos(2*pi*y) - x/(1 + y^2) + tanh(x*y)^3").unwrap();
        let p = Program::new(&e);
        for &(x, y) in &[(0.0, 0.0), (1.3, -0.4), (-2.0, 0.77)] {
            assert_eq!(
                p.eval(&[x], &[y], &[]).unwrap(),
                e.eval(&[x], &[y], None).unwrap()
            );
        }
    }

    #[test]
    fn conv_slots_take_supplied_values() {
        let e = parse("-x - conv(x) + 2*conv(x^3)").unwrap();
        let p = Program::new(&e);
        assert_eq!(p.n_conv(), 2);
        let mu = EmpiricalMeasure::from_points_1d(&[3.0]).unwrap();
        let direct = e.eval(&[1.0], &[], Some(&mu)).unwrap();
        let mut registry = vec![Arc::new(Expr::x().powi(3))];
        let shared = Program::with_registry(&e, &mut registry);
        assert_eq!(registry.len(), 2);
        assert_eq!(shared.eval(&[1.0], &[], &[-8.0, -2.0]).unwrap(), direct);
        assert_eq!(p.eval(&[1.0], &[], &[-2.0, -8.0]).unwrap(), direct);
        assert!(matches!(
            p.eval(&[1.0], &[], &[]),
            Err(EvalError::MissingMeasure { .. })
        ));
    }

    #[test]
    fn domain_errors_name_the_node() {
        let p = Program::new(&parse("1 + log(x - 1)").unwrap());
        match p.eval(&[0.5], &[], &[]) {
            Err(EvalError::Domain { subexpr, .. }) => assert_eq!(subexpr, "log(x - 1)"),
            other => panic!("unexpected {other:?}"),
        }
        let p = Program::new(&parse("y / x").unwrap());
        assert!(p.eval(&[0.0], &[1.0], &[]).is_err());
        assert!(p.eval(&[1.0], &[], &[]).is_err());
    }

    #[test]
    fn deep_trees_use_heap_stack() {
        let mut e = Expr::x();
        for k in 0..40 {
            e = Expr::c(k as f64 + 1.0) + Expr::x() * e.sin();
        }
        let p = Program::new(&e);
        assert_eq!(
            p.eval(&[0.3], &[], &[]).unwrap(),
            e.eval(&[0.3], &[], None).unwrap()
        );
    }

    proptest! {
        #[test]
        fn compiled_and_tree_agree(x in -3.0f64..3.0, y in -3.0f64..3.0, a in -2.0f64..2.0) {
            let e = Expr::c(a) * Expr::x().powi(3) - (Expr::y() * Expr::x()).cos()
                + (Expr::x() * Expr::x() + Expr::c(1.0)).ln() / (Expr::c(2.0) + Expr::y().sin());
            let p = Program::new(&e);
            prop_assert_eq!(p.eval(&[x], &[y], &[]).unwrap(), e.eval(&[x], &[y], None).unwrap());
        }
    }
}
