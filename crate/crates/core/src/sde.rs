//! Euler–Maruyama for the N-particle slow-fast system and for the averaged
//! equation, with the law replaced by the empirical measure of the particles.
//!
//! Time is organised in slow steps of `T / ceil(T / dt_slow_request)`; each
//! slow step is split into `ceil(dt_slow / (dt_safety ε²))` equal fine steps,
//! so the fine step never exceeds `dt_safety ε²` and snapshot times coincide
//! between the prelimit and averaged runs. Snapshots are taken every
//! `record_stride` slow steps and at the final time.
//!
//! Every particle owns a keyed random stream, and the measure is frozen at the
//! start of each step, so results do not depend on the number of threads.

use std::io::Write;

use rayon::prelude::*;

use crate::coeffs::{Coefficient, CompiledModel, ModelSpec};
use crate::error::{Error, Result};
use crate::homogenize::HomogenizedField;
use crate::measure::EmpiricalMeasure;
use crate::output::fmt_f64;
use crate::rng::{Purpose, Stream};

/// Particles per parallel work item.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub epsilon: f64,
    pub n: usize,
    pub dt_slow_request: f64,
    pub t_end: f64,
    pub seed: u64,
    pub mc_reps: usize,
    /// Slow steps between snapshots.
    pub record_stride: usize,
    pub dt_safety: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epsilon: 0.1,
            n: 2000,
            dt_slow_request: 0.01,
            t_end: 1.0,
            seed: 0,
            mc_reps: 16,
            record_stride: 20,
            dt_safety: 0.1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.dt_slow_request > 0.0 && self.dt_slow_request.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt_slow_request));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("T must be positive, got {}", self.t_end));
        }
        if !(self.dt_safety > 0.0 && self.dt_safety.is_finite()) {
            return bad(format!("dt_safety must be positive, got {}", self.dt_safety));
        }
        if self.n == 0 || self.mc_reps == 0 || self.record_stride == 0 {
            return bad("N, mc_reps and record_stride must be positive".into());
        }
        let steps = self.n_slow_steps() as f64 * self.fine_per_slow(true) as f64;
        if !(steps < u64::MAX as f64 / 4.0) {
            return bad(format!("{steps:.3e} steps do not fit in the step counter"));
        }
        Ok(())
    }

    pub fn n_slow_steps(&self) -> u64 {
        ((self.t_end / self.dt_slow_request) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }

    pub fn dt_slow(&self) -> f64 {
        self.t_end / self.n_slow_steps() as f64
    }

    /// Fine steps per slow step; 1 for the averaged equation.
    pub fn fine_per_slow(&self, multiscale: bool) -> u64 {
        if !multiscale {
            return 1;
        }
        let cap = self.dt_safety * self.epsilon * self.epsilon;
        ((self.dt_slow() / cap) * (1.0 - 1e-12)).ceil().max(1.0) as u64
    }

    /// Effective step of the slow-fast integrator.
    pub fn dt_effective(&self) -> f64 {
        self.dt_slow() / self.fine_per_slow(true) as f64
    }

    /// Slow-step indices at which snapshots are taken.
    pub fn snapshot_steps(&self) -> Vec<u64> {
        let n = self.n_slow_steps();
        let mut out: Vec<u64> = (0..=n).step_by(self.record_stride).collect();
        if *out.last().unwrap() != n {
            out.push(n);
        }
        out
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        let dt = self.dt_slow();
        self.snapshot_steps()
            .into_iter()
            .map(|k| k as f64 * dt)
            .collect()
    }
}

/// Initial law, applied independently to every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(f64),
    Gaussian { mean: f64, var: f64 },
    Uniform { a: f64, b: f64 },
    /// Explicit per-particle values, cycled if shorter than the ensemble.
    Points(Vec<f64>),
}

impl InitialLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            InitialLaw::Point(p) => p.is_finite(),
            InitialLaw::Gaussian { mean, var } => mean.is_finite() && *var >= 0.0 && var.is_finite(),
            InitialLaw::Uniform { a, b } => a.is_finite() && b.is_finite() && a <= b,
            InitialLaw::Points(v) => !v.is_empty() && v.iter().all(|p| p.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid initial law {self:?}")))
        }
    }

    fn sample(&self, stream: &mut Stream, particle: usize, coord: usize, dim: usize) -> f64 {
        match self {
            InitialLaw::Point(p) => *p,
            InitialLaw::Gaussian { mean, var } => mean + var.sqrt() * stream.normal_pair().0,
            InitialLaw::Uniform { a, b } => a + (b - a) * (1.0 - stream.uniform()),
            InitialLaw::Points(v) => v[(particle * dim + coord) % v.len()],
        }
    }

    /// `N × dim` samples for one replica.
    pub fn draw(&self, seed: u64, replica: u32, n: usize, dim: usize, purpose: Purpose) -> Vec<f64> {
        let mut out = Vec::with_capacity(n * dim);
        for i in 0..n {
            let mut s = Stream::new(seed, replica, i as u64, purpose);
            for k in 0..dim {
                out.push(self.sample(&mut s, i, k, dim));
            }
        }
        out
    }
}

/// Trajectories of one replica: flat `N × dim` positions per snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaPath {
    pub slow: Vec<Vec<f64>>,
    pub fast: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub cfg: SimConfig,
    pub dim: usize,
    pub times: Vec<f64>,
    pub replicas: Vec<ReplicaPath>,
}

impl PathEnsemble {
    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    /// Empirical law of the slow particles of `replica` at snapshot `k`.
    pub fn slow_measure(&self, replica: usize, k: usize) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::uniform(self.replicas[replica].slow[k].clone(), self.dim)
    }

    /// Rows `t, replica, particle, x_0.., y_0..` in ascending order.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let has_fast = self.replicas.iter().all(|r| r.fast.is_some());
        let mut header = vec!["t".to_string(), "replica".into(), "particle".into()];
        header.extend((0..self.dim).map(|k| format!("x_{k}")));
        if has_fast {
            header.extend((0..self.dim).map(|k| format!("y_{k}")));
        }
        writeln!(out, "{}", header.join(","))?;
        let d = self.dim;
        for (k, t) in self.times.iter().enumerate() {
            for (r, rep) in self.replicas.iter().enumerate() {
                let xs = &rep.slow[k];
                for i in 0..xs.len() / d {
                    let mut line = format!("{},{r},{i}", fmt_f64(*t));
                    for v in &xs[i * d..(i + 1) * d] {
                        line.push(',');
                        line.push_str(&fmt_f64(*v));
                    }
                    if has_fast {
                        let ys = &rep.fast.as_ref().unwrap()[k];
                        for v in &ys[i * d..(i + 1) * d] {
                            line.push(',');
                            line.push_str(&fmt_f64(*v));
                        }
                    }
                    writeln!(out, "{line}")?;
                }
            }
        }
        Ok(())
    }
}

fn check_finite(values: &[f64], step: u64) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { step })
    }
}

/// Scratch space for one worker.
struct Scratch {
    conv: Vec<f64>,
    coef: [Vec<f64>; 7],
    dw: Vec<f64>,
    db: Vec<f64>,
}

impl Scratch {
    fn new(cm: &CompiledModel) -> Scratch {
        let d = cm.dim();
        Scratch {
            conv: vec![0.0; cm.n_conv()],
            coef: Coefficient::ALL.map(|w| vec![0.0; if w.is_matrix() { d * d } else { d }]),
            dw: vec![0.0; d],
            db: vec![0.0; d],
        }
    }
}

fn matvec(m: &[f64], v: &[f64], i: usize) -> f64 {
    let d = v.len();
    (0..d).map(|k| m[i * d + k] * v[k]).sum()
}

/// One replica of the slow-fast system.
fn run_slow_fast_replica(
    cm: &CompiledModel,
    cfg: &SimConfig,
    replica: u32,
    init_slow: &InitialLaw,
    init_fast: &InitialLaw,
) -> Result<ReplicaPath> {
    let d = cm.dim();
    let n = cfg.n;
    let mut x = init_slow.draw(cfg.seed, replica, n, d, Purpose::InitSlow);
    let mut y = init_fast.draw(cfg.seed, replica, n, d, Purpose::InitFast);
    if cm.is_torus() {
        y.iter_mut().for_each(|v| *v -= v.floor());
    }
    let mut streams: Vec<Stream> = (0..n)
        .map(|i| Stream::new(cfg.seed, replica, i as u64, Purpose::Dynamics))
        .collect();
    let eps = cfg.epsilon;
    let fine = cfg.fine_per_slow(true);
    let dt = cfg.dt_slow() / fine as f64;
    let sqdt = dt.sqrt();
    let torus = cm.is_torus();
    let snaps = cfg.snapshot_steps();
    let mut path = ReplicaPath {
        slow: Vec::with_capacity(snaps.len()),
        fast: Some(Vec::with_capacity(snaps.len())),
    };
    let mut next_snap = 0;
    let mut x_next = x.clone();
    let mut y_next = y.clone();
    for slow_step in 0..=cfg.n_slow_steps() {
        if next_snap < snaps.len() && snaps[next_snap] == slow_step {
            path.slow.push(x.clone());
            path.fast.as_mut().unwrap().push(y.clone());
            next_snap += 1;
        }
        if slow_step == cfg.n_slow_steps() {
            break;
        }
        for sub in 0..fine {
            let step = slow_step * fine + sub;
            let mu = EmpiricalMeasure::uniform(x.clone(), d)?;
            let prep = cm.prepare(&mu);
            x_next
                .par_chunks_mut(CHUNK * d)
                .zip(y_next.par_chunks_mut(CHUNK * d))
                .zip(streams.par_chunks_mut(CHUNK))
                .enumerate()
                .try_for_each(|(c, ((xn, yn), st))| -> Result<()> {
                    let mut s = Scratch::new(cm);
                    for (j, stream) in st.iter_mut().enumerate() {
                        let i = c * CHUNK + j;
                        let xi = &x[i * d..(i + 1) * d];
                        let yi = &y[i * d..(i + 1) * d];
                        prep.conv_values(xi, &mut s.conv)?;
                        for (w, which) in Coefficient::ALL.iter().enumerate() {
                            let a = cm.alias(w);
                            if a == w {
                                cm.eval_into(*which, xi, yi, &s.conv, &mut s.coef[w])?;
                            } else {
                                let (head, tail) = s.coef.split_at_mut(w);
                                tail[0].copy_from_slice(&head[a]);
                            }
                        }
                        for k in 0..d {
                            let (a, b) = stream.normal_pair();
                            s.dw[k] = a * sqdt;
                            s.db[k] = b * sqdt;
                        }
                        let [b, c_, f, g, sigma, tau1, tau2] = &s.coef;
                        for k in 0..d {
                            let xk = xi[k] + (b[k] / eps + c_[k]) * dt + matvec(sigma, &s.dw, k);
                            let noise = matvec(tau1, &s.dw, k) + matvec(tau2, &s.db, k);
                            let mut yk = yi[k] + (f[k] / eps + g[k]) * dt / eps + noise / eps;
                            if torus {
                                yk -= yk.floor();
                            }
                            xn[j * d + k] = xk;
                            yn[j * d + k] = yk;
                        }
                    }
                    check_finite(xn, step)?;
                    check_finite(yn, step)
                })?;
            std::mem::swap(&mut x, &mut x_next);
            std::mem::swap(&mut y, &mut y_next);
        }
    }
    Ok(path)
}

/// Prelimit particle system; replicas use ids `0..mc_reps`.
pub fn simulate_slow_fast(
    model: &ModelSpec,
    cfg: &SimConfig,
    init_slow: &InitialLaw,
    init_fast: &InitialLaw,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    init_slow.validate()?;
    init_fast.validate()?;
    let cm = model.compile();
    let replicas = (0..cfg.mc_reps as u32)
        .into_par_iter()
        .map(|r| run_slow_fast_replica(&cm, cfg, r, init_slow, init_fast))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        cfg: *cfg,
        dim: model.dim(),
        times: cfg.snapshot_times(),
        replicas,
    })
}

fn run_averaged_replica(
    field: &HomogenizedField,
    cfg: &SimConfig,
    replica: u32,
    init_slow: &InitialLaw,
) -> Result<ReplicaPath> {
    let n = cfg.n;
    let mut x = init_slow.draw(cfg.seed, replica, n, 1, Purpose::InitSlow);
    let mut streams: Vec<Stream> = (0..n)
        .map(|i| Stream::new(cfg.seed, replica, i as u64, Purpose::Dynamics))
        .collect();
    let dt = cfg.dt_slow();
    let noise = (2.0 * dt).sqrt();
    let snaps = cfg.snapshot_steps();
    let mut path = ReplicaPath {
        slow: Vec::with_capacity(snaps.len()),
        fast: None,
    };
    let mut next_snap = 0;
    let mut x_next = x.clone();
    let n_conv = field.kernels().len();
    for step in 0..=cfg.n_slow_steps() {
        if next_snap < snaps.len() && snaps[next_snap] == step {
            path.slow.push(x.clone());
            next_snap += 1;
        }
        if step == cfg.n_slow_steps() {
            break;
        }
        let mu = EmpiricalMeasure::uniform(x.clone(), 1)?;
        let prep = field.prepare(&mu);
        x_next
            .par_chunks_mut(CHUNK)
            .zip(streams.par_chunks_mut(CHUNK))
            .enumerate()
            .try_for_each(|(c, (xn, st))| -> Result<()> {
                let mut conv = vec![0.0; n_conv];
                for (j, stream) in st.iter_mut().enumerate() {
                    let xi = x[c * CHUNK + j];
                    prep.conv_values(&[xi], &mut conv)?;
                    let v = field.eval_with_conv(xi, &conv)?;
                    let (dw, _) = stream.normal_pair();
                    xn[j] = xi + v.gamma_bar * dt + noise * v.d_bar_sqrt * dw;
                }
                check_finite(xn, step)
            })?;
        std::mem::swap(&mut x, &mut x_next);
    }
    Ok(path)
}

/// Averaged equation `dX = γ̄ dt + √2 D̄^{1/2} dW` with step `dt_slow`;
/// `epsilon` and `dt_safety` are ignored.
pub fn simulate_averaged(
    field: &HomogenizedField,
    cfg: &SimConfig,
    init_slow: &InitialLaw,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    init_slow.validate()?;
    let replicas = (0..cfg.mc_reps as u32)
        .into_par_iter()
        .map(|r| run_averaged_replica(field, cfg, r, init_slow))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        cfg: *cfg,
        dim: 1,
        times: cfg.snapshot_times(),
        replicas,
    })
}

/// `(t, mean |Y|^p)` over all particles and replicas at each snapshot.
pub fn fast_moment_trace(ens: &PathEnsemble, p: u32) -> Result<Vec<(f64, f64)>> {
    if p == 0 || p % 2 == 1 {
        return Err(Error::Invalid(format!("moment order must be even, got {p}")));
    }
    let d = ens.dim;
    let mut out = Vec::with_capacity(ens.times.len());
    for (k, t) in ens.times.iter().enumerate() {
        let mut acc = 0.0;
        let mut count = 0usize;
        for rep in &ens.replicas {
            let ys = rep
                .fast
                .as_ref()
                .ok_or_else(|| Error::Invalid("ensemble has no fast positions".into()))?;
            for yi in ys[k].chunks(d) {
                let r2: f64 = yi.iter().map(|v| v * v).sum();
                acc += r2.powi(p as i32 / 2);
                count += 1;
            }
        }
        out.push((*t, acc / count as f64));
    }
    Ok(out)
}
