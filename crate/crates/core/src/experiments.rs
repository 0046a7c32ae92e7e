//! Weak-error curves, rate fits, ergodic deviations and effective-potential
//! tables.
//!
//! The weak error at each `ε` compares replica means of a functional between
//! independent prelimit and averaged ensembles, takes the supremum over the
//! shared snapshot times, and quantifies Monte Carlo noise with a replica
//! bootstrap.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, RwLock};

use crate::coeffs::ModelSpec;
use crate::error::{Error, Result};
use crate::expr::{Expr, Program};
use crate::frozen::{FrozenSolver, Grid1D};
use crate::homogenize::{periodic_theta, HomogenizedField};
use crate::output::{fmt_f64, write_row};
use crate::quad::simpson_weights;
use crate::rng::{derive_seed, Purpose, Stream};
use crate::sde::{simulate_averaged, simulate_slow_fast, InitialLaw, PathEnsemble, SimConfig};

pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Points with error below this many standard errors are left out of the fit.
pub const FIT_EXCLUSION_SE: f64 = 2.0;
pub const MIN_FIT_POINTS: usize = 3;

/// Seed labels separating the independent runs of an experiment.
const ROLE_PRELIMIT: u64 = 1;
const ROLE_AVERAGED: u64 = 2;
const ROLE_BOOTSTRAP: u64 = 3;

/// A functional of the slow empirical law.
#[derive(Debug, Clone)]
pub enum Functional {
    /// `⟨µ, φ⟩`.
    Linear(Expr),
    /// `⟨µ, φ⟩²`.
    SquareOfMean(Expr),
    /// `exp⟨µ, φ⟩`.
    ExpOfMean(Expr),
    /// Variance of the first coordinate.
    Variance,
}

impl Functional {
    pub fn describe(&self) -> String {
        match self {
            Functional::Linear(e) => format!("linear:{e}"),
            Functional::SquareOfMean(e) => format!("square_of_mean:{e}"),
            Functional::ExpOfMean(e) => format!("exp_of_mean:{e}"),
            Functional::Variance => "variance".into(),
        }
    }

    /// Evaluates on `N × dim` positions with uniform weights.
    pub fn eval(&self, positions: &[f64], dim: usize) -> Result<f64> {
        let n = (positions.len() / dim) as f64;
        let mean_of = |phi: &Expr| -> Result<f64> {
            if phi.depends_on_any_y() || phi.has_conv() {
                return Err(Error::Invalid(format!("test function `{phi}` must only use x")));
            }
            let prog = Program::new(phi);
            let mut acc = 0.0;
            for p in positions.chunks(dim) {
                acc += prog.eval(p, &[], &[])?;
            }
            Ok(acc / n)
        };
        Ok(match self {
            Functional::Linear(phi) => mean_of(phi)?,
            Functional::SquareOfMean(phi) => mean_of(phi)?.powi(2),
            Functional::ExpOfMean(phi) => mean_of(phi)?.exp(),
            Functional::Variance => {
                let m = positions.chunks(dim).map(|p| p[0]).sum::<f64>() / n;
                positions.chunks(dim).map(|p| (p[0] - m).powi(2)).sum::<f64>() / n
            }
        })
    }

    /// Values per replica (rows) and snapshot (columns).
    fn table(&self, ens: &PathEnsemble) -> Result<Vec<Vec<f64>>> {
        ens.replicas
            .iter()
            .map(|r| r.slow.iter().map(|x| self.eval(x, ens.dim)).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakErrorPoint {
    pub eps: f64,
    /// `sup_t |mean_prelimit − mean_averaged|`.
    pub weak_error: f64,
    /// Bootstrap standard deviation of the estimator.
    pub stderr: f64,
    /// 95% bootstrap interval for the true supremum.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_reps: usize,
    /// `mean_prelimit − mean_averaged` per snapshot.
    pub gap: Vec<f64>,
}

impl WeakErrorPoint {
    pub fn ci_contains_zero(&self) -> bool {
        self.ci_lo <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points_used: usize,
    /// `ε` values dropped for being within noise.
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct WeakErrorReport {
    pub functional: String,
    pub times: Vec<f64>,
    pub points: Vec<WeakErrorPoint>,
    pub fit: Option<RateFit>,
    /// Configuration of the averaged runs (`epsilon` unused).
    pub averaged_cfg: SimConfig,
}

impl WeakErrorReport {
    pub fn eps(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eps).collect()
    }

    /// `eps,weak_error,stderr,n_reps` rows followed by the rate summary, which
    /// reads `NaN,NaN,0` when no fit was possible.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "eps,weak_error,stderr,n_reps")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(p.eps),
                fmt_f64(p.weak_error),
                fmt_f64(p.stderr),
                p.n_reps
            )?;
        }
        writeln!(out, "slope,intercept,points_used")?;
        match &self.fit {
            Some(f) => writeln!(out, "{},{},{}", fmt_f64(f.slope), fmt_f64(f.intercept), f.points_used)?,
            None => writeln!(out, "NaN,NaN,0")?,
        }
        Ok(())
    }
}

fn mean_columns(rows: &[&Vec<f64>]) -> Vec<f64> {
    let k = rows[0].len();
    let mut out = vec![0.0; k];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r.iter()) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= rows.len() as f64);
    out
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sort_rows(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows
}

/// Supremum gap between two tables of replica values with its bootstrap
/// spread. Rows are sorted first so that relabeling replicas changes nothing.
pub fn compare_tables(
    prelimit: Vec<Vec<f64>>,
    averaged: Vec<Vec<f64>>,
    seed: u64,
) -> Result<(f64, f64, f64, f64, Vec<f64>)> {
    if prelimit.is_empty() || averaged.is_empty() {
        return Err(Error::Invalid("need at least one replica per ensemble".into()));
    }
    let p = sort_rows(prelimit);
    let a = sort_rows(averaged);
    let gap: Vec<f64> = mean_columns(&p.iter().collect::<Vec<_>>())
        .iter()
        .zip(mean_columns(&a.iter().collect::<Vec<_>>()))
        .map(|(x, y)| x - y)
        .collect();
    let e = sup_abs(&gap);
    let mut stream = Stream::new(seed, 0, 0, Purpose::Bootstrap);
    let mut sups = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut devs = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let rp: Vec<&Vec<f64>> = (0..p.len()).map(|_| &p[stream.index(p.len())]).collect();
        let ra: Vec<&Vec<f64>> = (0..a.len()).map(|_| &a[stream.index(a.len())]).collect();
        let g: Vec<f64> = mean_columns(&rp)
            .iter()
            .zip(mean_columns(&ra))
            .map(|(x, y)| x - y)
            .collect();
        sups.push(sup_abs(&g));
        let d: Vec<f64> = g.iter().zip(&gap).map(|(x, y)| x - y).collect();
        devs.push(sup_abs(&d));
    }
    let m = sups.iter().sum::<f64>() / sups.len() as f64;
    let sd = (sups.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (sups.len() - 1) as f64).sqrt();
    devs.sort_by(f64::total_cmp);
    let q95 = quantile(&devs, 0.95);
    Ok((e, sd, (e - q95).max(0.0), e + q95, gap))
}

/// Everything a weak-error run needs besides the list of `ε`.
#[derive(Debug, Clone)]
pub struct WeakErrorSetup<'a> {
    pub model: &'a ModelSpec,
    pub field: &'a HomogenizedField,
    pub functional: &'a Functional,
    pub cfg: SimConfig,
    pub init_slow: &'a InitialLaw,
    pub init_fast: &'a InitialLaw,
}

/// Weak error at a single `ε`; `index` separates the seeds of different points.
pub fn weak_error_point(setup: &WeakErrorSetup, eps: f64, index: u64) -> Result<WeakErrorPoint> {
    let pre_cfg = SimConfig {
        epsilon: eps,
        seed: derive_seed(setup.cfg.seed, &[ROLE_PRELIMIT, index]),
        ..setup.cfg
    };
    let avg_cfg = SimConfig {
        seed: derive_seed(setup.cfg.seed, &[ROLE_AVERAGED, index]),
        ..setup.cfg
    };
    let pre = simulate_slow_fast(setup.model, &pre_cfg, setup.init_slow, setup.init_fast)?;
    let avg = simulate_averaged(setup.field, &avg_cfg, setup.init_slow)?;
    let (weak_error, stderr, ci_lo, ci_hi, gap) = compare_tables(
        setup.functional.table(&pre)?,
        setup.functional.table(&avg)?,
        derive_seed(setup.cfg.seed, &[ROLE_BOOTSTRAP, index]),
    )?;
    Ok(WeakErrorPoint {
        eps,
        weak_error,
        stderr,
        ci_lo,
        ci_hi,
        n_reps: setup.cfg.mc_reps,
        gap,
    })
}

pub fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: eps_list.len(),
        });
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite()))
        || eps_list.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Config(format!(
            "eps_list must be positive and strictly decreasing, got {eps_list:?}"
        )));
    }
    Ok(())
}

/// Weak error for every `ε` of a strictly decreasing list, with a rate fit
/// when enough points stand out of the noise.
pub fn weak_error_curve(setup: &WeakErrorSetup, eps_list: &[f64]) -> Result<WeakErrorReport> {
    check_eps_list(eps_list)?;
    let points = eps_list
        .iter()
        .enumerate()
        .map(|(i, e)| weak_error_point(setup, *e, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let mut report = WeakErrorReport {
        functional: setup.functional.describe(),
        times: setup.cfg.snapshot_times(),
        points,
        fit: None,
        averaged_cfg: setup.cfg,
    };
    report.fit = fit_rate(&report).ok();
    Ok(report)
}

/// Least-squares slope of `log error` against `log ε`, dropping points whose
/// error is below twice its standard error.
pub fn fit_rate(report: &WeakErrorReport) -> Result<RateFit> {
    let eps: Vec<f64> = report.points.iter().map(|p| p.eps).collect();
    let err: Vec<f64> = report.points.iter().map(|p| p.weak_error).collect();
    let se: Vec<f64> = report.points.iter().map(|p| p.stderr).collect();
    fit_power_law(&eps, &err, &se)
}

pub fn fit_power_law(eps: &[f64], err: &[f64], se: &[f64]) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..eps.len() {
        if err[i] > 0.0 && err[i] >= FIT_EXCLUSION_SE * se[i] {
            xs.push(eps[i].ln());
            ys.push(err[i].ln());
        } else {
            excluded.push(eps[i]);
        }
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        points_used: xs.len(),
        excluded,
    })
}

/// `F̄(x) = ∫ F(x, y) π(dy; x)`. Quadrature weights `π_j h_j` are cached on
/// a lattice in `x` and interpolated linearly; `F` is evaluated at the exact `x`.
#[derive(Debug)]
pub struct FrozenAverage {
    solver: FrozenSolver,
    grid: Grid1D,
    f: Program,
    x_free: bool,
    /// `F` has no `x`, so each lattice point stores `∫ F π` directly.
    f_y_only: bool,
    dx: f64,
    cache: RwLock<HashMap<i64, Arc<AvgCell>>>,
}

#[derive(Debug)]
struct AvgCell {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `∫ F π` when `F` has no `x`.
    integral: Option<f64>,
}

impl FrozenAverage {
    pub fn new(model: &ModelSpec, f: &Expr, grid: Option<Grid1D>, dx: f64) -> Result<Self> {
        if f.has_conv() || f.max_coord() > 1 {
            return Err(Error::Invalid(format!(
                "observable `{f}` must be a measure-free function of (x, y)"
            )));
        }
        let solver = FrozenSolver::new(model)?;
        let grid = grid.unwrap_or_else(|| solver.default_grid());
        Ok(FrozenAverage {
            x_free: model.fast_problem_is_x_free(),
            f_y_only: !f.depends_on_any_x(),
            solver,
            grid,
            f: Program::new(f),
            dx,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Nodes and weights at lattice point `key`.
    fn at_key(&self, key: i64) -> Result<Arc<AvgCell>> {
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let sol = self.solver.invariant_density(key as f64 * self.dx, &self.grid)?;
        let sw = simpson_weights(sol.grid.n(), sol.grid.h());
        let mut cell = AvgCell {
            nodes: sol.grid.nodes(),
            weights: sw.iter().zip(&sol.pi).map(|(a, b)| a * b).collect(),
            integral: None,
        };
        if self.f_y_only {
            cell.integral = Some(self.integrate(0.0, &cell.nodes, &cell.weights)?);
        }
        let entry = Arc::new(cell);
        let mut c = self.cache.write().unwrap();
        Ok(c.entry(key).or_insert(entry).clone())
    }

    fn integrate(&self, x: f64, nodes: &[f64], weights: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (y, w) in nodes.iter().zip(weights) {
            acc += w * self.f.eval(&[x], &[*y], &[])?;
        }
        Ok(acc)
    }

    fn against(&self, x: f64, cell: &AvgCell) -> Result<f64> {
        match cell.integral {
            Some(v) => Ok(v),
            None => self.integrate(x, &cell.nodes, &cell.weights),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if self.x_free {
            return self.against(x, &*self.at_key(0)?);
        }
        let s = x / self.dx;
        let k0 = s.floor();
        let t = s - k0;
        let a = self.against(x, &*self.at_key(k0 as i64)?)?;
        if t == 0.0 {
            return Ok(a);
        }
        Ok((1.0 - t) * a + t * self.against(x, &*self.at_key(k0 as i64 + 1)?)?)
    }

    pub fn observable(&self) -> &Program {
        &self.f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicPoint {
    pub eps: f64,
    /// `|E ∫₀^T (F(X, Y) − F̄(X)) dt|`.
    pub deviation: f64,
    pub stderr: f64,
}

/// Time integral of `F − F̄` by the trapezoid rule on the snapshots, averaged
/// over particles and replicas.
pub fn ergodic_deviation_from(ens: &PathEnsemble, avg: &FrozenAverage) -> Result<ErgodicPoint> {
    let mut per_rep = Vec::with_capacity(ens.replicas.len());
    for rep in &ens.replicas {
        let fast = rep
            .fast
            .as_ref()
            .ok_or_else(|| Error::Invalid("ensemble has no fast positions".into()))?;
        let mut series = Vec::with_capacity(ens.times.len());
        for (xs, ys) in rep.slow.iter().zip(fast) {
            let mut acc = 0.0;
            for (x, y) in xs.iter().zip(ys) {
                acc += avg.observable().eval(&[*x], &[*y], &[])? - avg.eval(*x)?;
            }
            series.push(acc / xs.len() as f64);
        }
        let integral: f64 = ens
            .times
            .windows(2)
            .zip(series.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum();
        per_rep.push(integral);
    }
    let r = per_rep.len() as f64;
    let m = per_rep.iter().sum::<f64>() / r;
    let var = if per_rep.len() > 1 {
        per_rep.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        0.0
    };
    Ok(ErgodicPoint {
        eps: ens.cfg.epsilon,
        deviation: m.abs(),
        stderr: (var / r).sqrt(),
    })
}

/// One deviation per `ε`. The model must be one-dimensional.
pub fn ergodic_deviation(
    model: &ModelSpec,
    f: &Expr,
    cfg: &SimConfig,
    eps_list: &[f64],
    init_slow: &InitialLaw,
    init_fast: &InitialLaw,
    grid: Option<Grid1D>,
) -> Result<Vec<ErgodicPoint>> {
    let avg = FrozenAverage::new(model, f, grid, crate::homogenize::DEFAULT_CACHE_DX)?;
    eps_list
        .iter()
        .enumerate()
        .map(|(i, eps)| {
            let c = SimConfig {
                epsilon: *eps,
                seed: derive_seed(cfg.seed, &[ROLE_PRELIMIT, i as u64]),
                ..*cfg
            };
            let ens = simulate_slow_fast(model, &c, init_slow, init_fast)?;
            ergodic_deviation_from(&ens, &avg)
        })
        .collect()
}

pub fn write_ergodic_csv(points: &[ErgodicPoint], mut out: impl Write) -> Result<()> {
    writeln!(out, "eps,deviation,stderr")?;
    for p in points {
        write_row(&mut out, &[p.eps, p.deviation, p.stderr])?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTable {
    pub theta: f64,
    pub has_interaction: bool,
    /// `(x, V(x) + Q(x/ε), Θ V(x))`, plus `Θ W(x)` when an interaction is given.
    pub rows: Vec<Vec<f64>>,
}

impl EffectiveTable {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        if self.has_interaction {
            writeln!(out, "x,rough,effective,effective_interaction")?;
        } else {
            writeln!(out, "x,rough,effective")?;
        }
        for r in &self.rows {
            write_row(&mut out, r)?;
        }
        Ok(())
    }
}

/// Rough potential `V(x) + Q(x/ε)` beside the effective `Θ V(x)`.
pub fn effective_potential_table(
    v: &Expr,
    q: &Expr,
    sigma: f64,
    eps_display: f64,
    xs: &[f64],
    w: Option<&Expr>,
) -> Result<EffectiveTable> {
    if !(eps_display > 0.0) {
        return Err(Error::Invalid(format!("display epsilon must be positive, got {eps_display}")));
    }
    let theta = periodic_theta(std::slice::from_ref(q), sigma)?.theta[0];
    let (vp, qp) = (Program::new(v), Program::new(q));
    let wp = w.map(Program::new);
    let rows = xs
        .iter()
        .map(|&x| -> Result<Vec<f64>> {
            let vx = vp.eval(&[x], &[], &[])?;
            let mut row = vec![x, vx + qp.eval(&[x / eps_display], &[], &[])?, theta * vx];
            if let Some(wp) = &wp {
                row.push(theta * wp.eval(&[x], &[], &[])?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(EffectiveTable {
        theta,
        has_interaction: w.is_some(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, parse_potential};
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        let f = fit_power_law(&[0.4, 0.2, 0.1], &[0.4, 0.2, 0.1], &[0.0; 3]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        let eps = [0.4, 0.2, 0.1];
        let err: Vec<f64> = eps.iter().map(|e: &f64| e.sqrt()).collect();
        let f = fit_power_law(&eps, &err, &[0.0; 3]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        let e = fit_power_law(&eps, &[0.4, 0.2, 0.01], &[0.0, 0.0, 0.01]).unwrap_err();
        assert!(matches!(e, Error::InsufficientPoints { needed: 3, got: 2 }));
    }

    #[test]
    fn eps_list_checks() {
        assert!(matches!(
            check_eps_list(&[0.4, 0.2]),
            Err(Error::InsufficientPoints { .. })
        ));
        assert!(check_eps_list(&[0.4, 0.4, 0.1]).is_err());
        assert!(check_eps_list(&[0.4, 0.2, 0.1]).is_ok());
    }

    #[test]
    fn functionals() {
        let pos = [1.0, 2.0, 3.0];
        let x = parse("x").unwrap();
        assert_eq!(Functional::Linear(x.clone()).eval(&pos, 1).unwrap(), 2.0);
        assert_eq!(Functional::SquareOfMean(x.clone()).eval(&pos, 1).unwrap(), 4.0);
        assert!((Functional::ExpOfMean(x).eval(&pos, 1).unwrap() - 2f64.exp()).abs() < 1e-15);
        assert!((Functional::Variance.eval(&pos, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_is_invariant_under_relabeling() {
        let p: Vec<Vec<f64>> = (0..8).map(|r| vec![0.0, 0.1 * r as f64, (r as f64).sin()]).collect();
        let a: Vec<Vec<f64>> = (0..8).map(|r| vec![0.0, 0.05 * r as f64, (r as f64).cos()]).collect();
        let mut p2 = p.clone();
        p2.reverse();
        let mut a2 = a.clone();
        a2.rotate_left(3);
        assert_eq!(compare_tables(p, a, 4).unwrap(), compare_tables(p2, a2, 4).unwrap());
    }

    #[test]
    fn null_model_interval_contains_zero() {
        // b = 0: the prelimit slow dynamics is the averaged one.
        let m = ModelSpec::scalar(
            Expr::zero(),
            parse("-x + 0.5*conv(x)").unwrap(),
            parse("-y").unwrap(),
            Expr::zero(),
            Expr::c(0.7),
            Expr::c(1.0),
            Expr::zero(),
        )
        .unwrap();
        let field = HomogenizedField::quadrature(&m, None, crate::homogenize::DEFAULT_CACHE_DX).unwrap();
        let cfg = SimConfig {
            n: 200,
            mc_reps: 8,
            dt_slow_request: 0.02,
            t_end: 0.5,
            record_stride: 5,
            seed: 3,
            ..SimConfig::default()
        };
        let phi = Functional::Linear(parse("tanh(x)").unwrap());
        let init = InitialLaw::Gaussian { mean: 0.5, var: 0.2 };
        let setup = WeakErrorSetup {
            model: &m,
            field: &field,
            functional: &phi,
            cfg,
            init_slow: &init,
            init_fast: &InitialLaw::Point(0.0),
        };
        let r = weak_error_curve(&setup, &[0.4, 0.3, 0.2]).unwrap();
        for p in &r.points {
            assert!(p.ci_contains_zero(), "{p:?}");
            assert!(p.weak_error <= 3.0 * p.stderr + 1e-12 || p.ci_contains_zero());
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("eps,weak_error,stderr,n_reps\n4.0000000000000002e-1,"));
    }

    #[test]
    fn ergodic_y_free_observable_vanishes() {
        let m = ModelSpec::scalar(
            parse("y").unwrap(),
            parse("-x").unwrap(),
            parse("-y").unwrap(),
            Expr::zero(),
            Expr::c(0.5),
            Expr::c(2f64.sqrt()),
            Expr::zero(),
        )
        .unwrap();
        let cfg = SimConfig {
            n: 50,
            mc_reps: 2,
            dt_slow_request: 0.05,
            t_end: 0.5,
            record_stride: 1,
            ..SimConfig::default()
        };
        let pts = ergodic_deviation(
            &m,
            &parse("x^2").unwrap(),
            &cfg,
            &[0.4, 0.2],
            &InitialLaw::Point(1.0),
            &InitialLaw::Point(0.0),
            None,
        )
        .unwrap();
        for p in pts {
            assert!(p.deviation < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn effective_table_examples() {
        let v = parse_potential("x^4/4 - x^2/2").unwrap();
        let t = effective_potential_table(&v, &Expr::zero(), 0.5, 0.1, &[-1.0, 0.3], None).unwrap();
        for r in &t.rows {
            assert_eq!(r[1], r[2]);
        }
        let q = parse_potential("0.1*(cos(2*pi*x) + sin(2*pi*x))").unwrap();
        let w = parse_potential("x^2/2").unwrap();
        let t = effective_potential_table(&v, &q, 0.5, 0.1, &[0.0, 1.0], Some(&w)).unwrap();
        assert!((t.rows[0][1] - 0.1).abs() < 1e-15);
        assert_eq!(t.rows[0][2], 0.0);
        assert!(t.theta > 0.0 && t.theta < 1.0);
        assert!((t.rows[1][3] - 0.5 * t.theta).abs() < 1e-15);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,rough,effective,effective_interaction\n"));
    }

    proptest! {
        #[test]
        fn power_law_slope_recovered(slope in 0.2f64..3.0, scale in 0.01f64..10.0) {
            let eps = [0.4, 0.28, 0.2, 0.14, 0.1];
            let err: Vec<f64> = eps.iter().map(|e: &f64| scale * e.powf(slope)).collect();
            let f = fit_power_law(&eps, &err, &[0.0; 5]).unwrap();
            prop_assert!((f.slope - slope).abs() < 1e-12);
            prop_assert_eq!(f.points_used, 5);
        }
    }
}
