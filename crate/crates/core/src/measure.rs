//! Weighted particle clouds standing in for the law of the slow variable.

use std::io::Write;

use crate::error::{Error, Result};
use crate::expr::{EvalError, Expr};

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// Row-major, `len() * dim` entries.
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniform weights over `positions.len() / dim` particles.
    pub fn uniform(positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || positions.len() % dim != 0 {
            return Err(Error::Measure(format!(
                "{} coordinates do not form points of dimension {dim}",
                positions.len()
            )));
        }
        let n = positions.len() / dim;
        let w = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        Self::weighted(positions, dim, vec![w; n])
    }

    pub fn weighted(positions: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.len() != weights.len() * dim {
            return Err(Error::Measure("positions and weights disagree in length".into()));
        }
        if weights.is_empty() {
            return Err(Error::Measure("a measure needs at least one particle".into()));
        }
        if let Some(p) = positions.iter().find(|p| !p.is_finite()) {
            return Err(Error::Measure(format!("non-finite position {p}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Measure("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Measure(format!("weights sum to {total}, not 1")));
        }
        Ok(EmpiricalMeasure {
            dim,
            positions,
            weights,
        })
    }

    pub fn from_points_1d(points: &[f64]) -> Result<Self> {
        Self::uniform(points.to_vec(), 1)
    }

    /// `n` copies of the point `p`.
    pub fn dirac(p: &[f64], n: usize) -> Result<Self> {
        Self::uniform(p.repeat(n), p.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.positions
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// `Σ w_i φ(x_i)`.
    pub fn pairing(&self, phi: &Expr) -> Result<f64, EvalError> {
        let mut acc = 0.0;
        for (p, w) in self.iter() {
            acc += w * phi.eval(p, &[], None)?;
        }
        Ok(acc)
    }

    pub fn pairing_with(&self, mut phi: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(p, w)| w * phi(p)).sum()
    }

    /// `Σ w_i |x_i|^p` with the Euclidean norm.
    pub fn moment(&self, p: u32) -> f64 {
        self.pairing_with(|x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if p % 2 == 0 {
                r2.powi((p / 2) as i32)
            } else {
                r2.sqrt().powi(p as i32)
            }
        })
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.iter() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    /// Wasserstein-2 distance between equal-size uniform clouds in one dimension.
    pub fn w2_1d(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.dim != 1 || other.dim != 1 {
            return Err(Error::Shape("w2_1d needs one-dimensional measures".into()));
        }
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "w2_1d needs equal particle counts, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        let n = self.len() as f64;
        let uniform = |m: &EmpiricalMeasure| m.weights.iter().all(|w| (w * n - 1.0).abs() < 1e-9);
        if !uniform(self) || !uniform(other) {
            return Err(Error::Shape("w2_1d needs uniform weights".into()));
        }
        let mut a = self.positions.clone();
        let mut b = other.positions.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let ss: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum();
        Ok((ss / n).sqrt())
    }

    /// One row per particle: `index,weight,x_0..x_{d-1}`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let cols: Vec<String> = (0..self.dim).map(|k| format!("x_{k}")).collect();
        writeln!(out, "index,weight,{}", cols.join(","))?;
        for (i, (p, w)) in self.iter().enumerate() {
            write!(out, "{i},{}", crate::output::fmt_f64(w))?;
            for v in p {
                write!(out, ",{}", crate::output::fmt_f64(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use proptest::prelude::*;

    fn cloud(p: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_points_1d(p).unwrap()
    }

    #[test]
    fn pairing_examples() {
        let sq = parse("x^2").unwrap();
        assert_eq!(cloud(&[2.0]).pairing(&sq).unwrap(), 4.0);
        assert_eq!(cloud(&[0.0, 1.0]).pairing(&Expr::x()).unwrap(), 0.5);
        assert_eq!(cloud(&[-1.0, 1.0]).pairing(&parse("x^3").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn moment_examples() {
        assert_eq!(cloud(&[0.0]).moment(2), 0.0);
        assert_eq!(cloud(&[-1.0, 1.0]).moment(4), 1.0);
        assert_eq!(cloud(&[0.0, 2.0]).moment(2), 2.0);
    }

    #[test]
    fn w2_examples() {
        let a = cloud(&[0.3, -1.0, 2.0]);
        assert_eq!(a.w2_1d(&a).unwrap(), 0.0);
        assert_eq!(cloud(&[0.0]).w2_1d(&cloud(&[1.0])).unwrap(), 1.0);
        let d = cloud(&[0.0, 1.0]).w2_1d(&cloud(&[0.0, 3.0])).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!(cloud(&[0.0]).w2_1d(&cloud(&[0.0, 1.0])).is_err());
        let planar = EmpiricalMeasure::uniform(vec![0.0, 0.0], 2).unwrap();
        assert!(planar.w2_1d(&planar).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(EmpiricalMeasure::from_points_1d(&[]).is_err());
        assert!(EmpiricalMeasure::from_points_1d(&[f64::NAN]).is_err());
        assert!(EmpiricalMeasure::weighted(vec![0.0, 1.0], 1, vec![0.7, 0.7]).is_err());
        assert!(EmpiricalMeasure::weighted(vec![0.0, 1.0], 1, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = EmpiricalMeasure::uniform(vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,weight,x_0,x_1");
        assert!(lines[2].starts_with("1,5.0000000000000000e-1,3.0"));
    }

    fn arb_cloud(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, n)
    }

    proptest! {
        #[test]
        fn w2_is_a_metric(a in arb_cloud(7), b in arb_cloud(7), c in arb_cloud(7)) {
            let (ma, mb, mc) = (cloud(&a), cloud(&b), cloud(&c));
            let ab = ma.w2_1d(&mb).unwrap();
            prop_assert!((ab - mb.w2_1d(&ma).unwrap()).abs() < 1e-12);
            prop_assert!(ab <= ma.w2_1d(&mc).unwrap() + mc.w2_1d(&mb).unwrap() + 1e-12);
            let mut shuffled = a.clone();
            shuffled.reverse();
            prop_assert_eq!(ma.w2_1d(&cloud(&shuffled)).unwrap(), 0.0);
        }

        #[test]
        fn second_moment_is_w2_to_origin(a in arb_cloud(9)) {
            let m = cloud(&a);
            let origin = EmpiricalMeasure::dirac(&[0.0], 9).unwrap();
            let w = m.w2_1d(&origin).unwrap();
            prop_assert!((m.moment(2) - w * w).abs() < 1e-10 * (1.0 + m.moment(2)));
        }

        #[test]
        fn pairing_is_linear(a in arb_cloud(5), s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let m = cloud(&a);
            let f = parse("sin(x)").unwrap();
            let g = parse("x^2").unwrap();
            let lhs = m.pairing(&(Expr::c(s) * f.clone() + Expr::c(t) * g.clone())).unwrap();
            let rhs = s * m.pairing(&f).unwrap() + t * m.pairing(&g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn pairing_is_linear_in_weights(a in arb_cloud(4), l in 0.0f64..1.0) {
            let w1 = vec![0.25; 4];
            let w2 = vec![0.7, 0.1, 0.1, 0.1];
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(u, v)| l * u + (1.0 - l) * v).collect();
            let f = parse("exp(-x^2)").unwrap();
            let pair = |w: Vec<f64>| EmpiricalMeasure::weighted(a.clone(), 1, w).unwrap().pairing(&f).unwrap();
            let lhs = pair(mix);
            let rhs = l * pair(w1.clone()) + (1.0 - l) * pair(w2.clone());
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
