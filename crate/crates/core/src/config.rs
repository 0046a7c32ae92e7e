//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Keys are
//! grouped by prefix (`model.`, `sim.`, `frozen.`, `experiment.`, `output.`);
//! the accepted set is [`KEYS`], and anything else is rejected. Numbers are
//! parsed strictly. Lists are comma-separated; per-coordinate expressions are
//! separated by `;`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::coeffs::{build_aggdiff_model, build_periodic_rough_model, AggDiffPotentials, ModelSpec};
use crate::error::{Error, Result};
use crate::experiments::Functional;
use crate::expr::{parse, parse_potential, Expr};
use crate::frozen::Grid1D;
use crate::homogenize::HomogenizedField;
use crate::sde::{InitialLaw, SimConfig};

/// A recognised configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeySpec {
    pub key: &'static str,
    /// Shown in `--help`; `None` means the key is required or unset by default.
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn k(key: &'static str, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec { key, default, help }
}

/// Every key the parser accepts.
pub const KEYS: &[KeySpec] = &[
    k("model.kind", None, "aggdiff | periodic_rough | custom"),
    k("model.name", None, "free-form label"),
    k("model.dim", Some("1"), "dimension (aggdiff, custom)"),
    k("model.V1", Some("0"), "aggdiff: slow confining potential"),
    k("model.V2", Some("0"), "aggdiff: potential of the centred fast drift b"),
    k("model.V3", Some("0"), "aggdiff: potential of the fast-equation drift g"),
    k("model.V4", Some("0"), "aggdiff: fast confining potential"),
    k("model.W1", Some("0"), "aggdiff: slow interaction potential"),
    k("model.W2", Some("0"), "aggdiff: interaction potential in g"),
    k("model.V", None, "periodic_rough: confining potential"),
    k("model.W", Some("0"), "periodic_rough: interaction potential"),
    k("model.Q", None, "periodic_rough: 1-periodic profiles, one per coordinate, `;`-separated"),
    k("model.b", None, "custom: b components, `;`-separated"),
    k("model.c", None, "custom: c components"),
    k("model.f", None, "custom: f components"),
    k("model.g", None, "custom: g components"),
    k("model.sigma", None, "number (aggdiff, periodic_rough) or row-major matrix entries (custom)"),
    k("model.tau1", None, "number (aggdiff) or row-major matrix entries (custom)"),
    k("model.tau2", Some("0"), "number (aggdiff) or row-major matrix entries (custom)"),
    k("model.torus", Some("false"), "custom: fast variable on the unit torus"),
    k("sim.epsilon", Some("0.1"), "scale separation"),
    k("sim.n", Some("2000"), "particles per replica"),
    k("sim.dt", Some("0.01"), "requested slow step"),
    k("sim.t_end", Some("1"), "final time"),
    k("sim.seed", Some("0"), "root seed of every random stream"),
    k("sim.mc_reps", Some("16"), "independent replicas"),
    k("sim.record_stride", Some("20"), "slow steps between snapshots"),
    k("sim.dt_safety", Some("0.1"), "fine step cap as a multiple of epsilon^2"),
    k("sim.threads", Some("0"), "worker threads, 0 for all cores"),
    k("sim.init_slow", Some("point(0)"), "point(a) | gaussian(m,v) | uniform(a,b) | points(a,b,..)"),
    k("sim.init_fast", Some("point(0)"), "initial law of the fast particles"),
    k("sim.system", Some("slow_fast"), "simulate: slow_fast | averaged"),
    k("frozen.lo", None, "lower end of the fast grid (line models)"),
    k("frozen.hi", None, "upper end of the fast grid (line models)"),
    k("frozen.n", None, "fast grid nodes"),
    k("frozen.cache_dx", Some("0.0078125"), "slow spacing of cached frozen solutions"),
    k("experiment.field", Some("auto"), "auto | quadrature | closed_form"),
    k("experiment.eps_list", None, "strictly decreasing epsilons, comma-separated"),
    k("experiment.functional", Some("linear:x"), "linear:phi | square_of_mean:phi | exp_of_mean:phi | variance"),
    k("experiment.observable", Some("y^2"), "ergodic: F(x, y)"),
    k("experiment.eps_display", Some("0.1"), "effective-potential: epsilon of the rough column"),
    k("experiment.x_min", Some("-1.5"), "lower end of the x table"),
    k("experiment.x_max", Some("1.5"), "upper end of the x table"),
    k("experiment.x_points", Some("31"), "points in the x table"),
    k("output.path", None, "CSV destination; standard output when unset"),
];

pub fn key_spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

/// Table of keys for `--help`.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|s| s.key.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys:\n");
    for s in KEYS {
        let def = s.default.map(|d| format!(" [default: {d}]")).unwrap_or_default();
        let _ = writeln!(out, "  {:width$}  {}{}", s.key, s.help, def);
    }
    out
}

/// Parsed key/value pairs, validated against [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    /// Parses the file format; duplicate and unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(cfg_err(format!("line {}: expected key=value, got `{line}`", i + 1)));
            };
            let key = key.trim();
            if cfg.values.contains_key(key) {
                return Err(cfg_err(format!("line {}: duplicate key `{key}`", i + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| cfg_err(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    /// Sets or replaces one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let spec = key_spec(key).ok_or_else(|| cfg_err(format!("unknown key `{key}`")))?;
        self.values.insert(spec.key, value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("expected key=value, got `{assignment}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(key_spec(key).is_some(), "key {key} missing from KEYS");
        self.values.get(key).map(String::as_str)
    }

    fn get_or_default(&self, key: &str) -> Option<&str> {
        self.get(key).or_else(|| key_spec(key).and_then(|s| s.default))
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get_or_default(key)
            .ok_or_else(|| cfg_err(format!("missing required key `{key}`")))
    }

    fn num(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.required(key)?)
    }

    fn opt_num(&self, key: &str) -> Result<Option<f64>> {
        self.get_or_default(key).map(|v| parse_f64(key, v)).transpose()
    }

    fn int<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| cfg_err(format!("`{key}` expects a non-negative integer, got `{v}`")))
    }

    fn boolean(&self, key: &str) -> Result<bool> {
        match self.required(key)? {
            "true" => Ok(true),
            "false" => Ok(false),
            v => Err(cfg_err(format!("`{key}` expects true or false, got `{v}`"))),
        }
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let c = SimConfig {
            epsilon: self.num("sim.epsilon")?,
            n: self.int("sim.n")?,
            dt_slow_request: self.num("sim.dt")?,
            t_end: self.num("sim.t_end")?,
            seed: self.int("sim.seed")?,
            mc_reps: self.int("sim.mc_reps")?,
            record_stride: self.int("sim.record_stride")?,
            dt_safety: self.num("sim.dt_safety")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn threads(&self) -> Result<usize> {
        self.int("sim.threads")
    }

    pub fn init_slow(&self) -> Result<InitialLaw> {
        parse_initial_law(self.required("sim.init_slow")?)
    }

    pub fn init_fast(&self) -> Result<InitialLaw> {
        parse_initial_law(self.required("sim.init_fast")?)
    }

    /// `true` when `simulate` should run the averaged equation.
    pub fn averaged_system(&self) -> Result<bool> {
        match self.required("sim.system")? {
            "slow_fast" => Ok(false),
            "averaged" => Ok(true),
            v => Err(cfg_err(format!("`sim.system` expects slow_fast or averaged, got `{v}`"))),
        }
    }

    pub fn model(&self) -> Result<ModelSpec> {
        let kind = self.required("model.kind")?;
        let allowed: &[&str] = match kind {
            "aggdiff" => &["dim", "V1", "V2", "V3", "V4", "W1", "W2", "sigma", "tau1", "tau2"],
            "periodic_rough" => &["V", "W", "Q", "sigma"],
            "custom" => &["dim", "b", "c", "f", "g", "sigma", "tau1", "tau2", "torus"],
            other => {
                return Err(cfg_err(format!(
                    "`model.kind` expects aggdiff, periodic_rough or custom, got `{other}`"
                )))
            }
        };
        for key in self.values.keys() {
            if let Some(field) = key.strip_prefix("model.") {
                if field != "kind" && field != "name" && !allowed.contains(&field) {
                    return Err(cfg_err(format!("`{key}` does not apply to model.kind={kind}")));
                }
            }
        }
        let m = match kind {
            "aggdiff" => {
                let pot = |key: &str| -> Result<Expr> { Ok(parse_potential(self.required(key)?)?) };
                let p = AggDiffPotentials {
                    v1: pot("model.V1")?,
                    v2: pot("model.V2")?,
                    v3: pot("model.V3")?,
                    v4: pot("model.V4")?,
                    w1: pot("model.W1")?,
                    w2: pot("model.W2")?,
                    sigma: self.num("model.sigma")?,
                    tau1: self.num("model.tau1")?,
                    tau2: self.num("model.tau2")?,
                };
                build_aggdiff_model(p, self.dim()?)?
            }
            "periodic_rough" => {
                let q = split_list(self.required("model.Q")?, ';')
                    .map(parse_potential)
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                build_periodic_rough_model(
                    parse_potential(self.required("model.V")?)?,
                    parse_potential(self.required("model.W")?)?,
                    q,
                    self.num("model.sigma")?,
                )?
            }
            _ => {
                let dim = self.dim()?;
                let exprs = |key: &str| -> Result<Vec<Expr>> {
                    Ok(split_list(self.required(key)?, ';')
                        .map(parse)
                        .collect::<std::result::Result<Vec<_>, _>>()?)
                };
                let tau2 = match self.get("model.tau2") {
                    Some(_) => exprs("model.tau2")?,
                    None => vec![Expr::zero(); dim * dim],
                };
                let m = ModelSpec::new(
                    dim,
                    exprs("model.b")?,
                    exprs("model.c")?,
                    exprs("model.f")?,
                    exprs("model.g")?,
                    exprs("model.sigma")?,
                    exprs("model.tau1")?,
                    tau2,
                )?
                .named("custom");
                if self.boolean("model.torus")? {
                    m.on_torus()
                } else {
                    m
                }
            }
        };
        Ok(match self.get("model.name") {
            Some(name) => m.named(name),
            None => m,
        })
    }

    fn dim(&self) -> Result<usize> {
        let d: usize = self.int("model.dim")?;
        if d == 0 {
            return Err(cfg_err("`model.dim` must be positive"));
        }
        Ok(d)
    }

    /// Explicit fast grid, if any `frozen.*` bound is set.
    pub fn grid(&self, model: &ModelSpec) -> Result<Option<Grid1D>> {
        let (lo, hi) = (self.opt_num("frozen.lo")?, self.opt_num("frozen.hi")?);
        let n: Option<usize> = self.get("frozen.n").map(|_| self.int("frozen.n")).transpose()?;
        if model.is_torus() {
            if lo.is_some() || hi.is_some() {
                return Err(cfg_err("`frozen.lo`/`frozen.hi` do not apply to torus models"));
            }
            return n.map(Grid1D::torus).transpose();
        }
        match (lo, hi, n) {
            (None, None, None) => Ok(None),
            (Some(lo), Some(hi), n) => Ok(Some(Grid1D::new(lo, hi, n.unwrap_or(4001))?)),
            _ => Err(cfg_err("set both `frozen.lo` and `frozen.hi`")),
        }
    }

    pub fn cache_dx(&self) -> Result<f64> {
        let dx = self.num("frozen.cache_dx")?;
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(cfg_err(format!("`frozen.cache_dx` must be positive, got {dx}")));
        }
        Ok(dx)
    }

    /// Averaged-coefficient field chosen by `experiment.field`.
    pub fn field(&self, model: &ModelSpec) -> Result<HomogenizedField> {
        let closed = match self.required("experiment.field")? {
            "auto" => matches!(model.kind(), crate::coeffs::ModelKind::PeriodicRough(_)),
            "closed_form" => true,
            "quadrature" => false,
            v => {
                return Err(cfg_err(format!(
                    "`experiment.field` expects auto, quadrature or closed_form, got `{v}`"
                )))
            }
        };
        if closed {
            HomogenizedField::periodic_closed_form(model)
        } else {
            HomogenizedField::quadrature(model, self.grid(model)?, self.cache_dx()?)
        }
    }

    /// Required for the experiment subcommands.
    pub fn eps_list(&self) -> Result<Vec<f64>> {
        split_list(self.required("experiment.eps_list")?, ',')
            .map(|v| parse_f64("experiment.eps_list", v))
            .collect()
    }

    pub fn functional(&self) -> Result<Functional> {
        parse_functional(self.required("experiment.functional")?)
    }

    pub fn observable(&self) -> Result<Expr> {
        Ok(parse(self.required("experiment.observable")?)?)
    }

    pub fn eps_display(&self) -> Result<f64> {
        self.num("experiment.eps_display")
    }

    /// Equally spaced `experiment.x_*` table.
    pub fn xs(&self) -> Result<Vec<f64>> {
        let (a, b) = (self.num("experiment.x_min")?, self.num("experiment.x_max")?);
        let n: usize = self.int("experiment.x_points")?;
        if n < 2 || !(a < b) {
            return Err(cfg_err("need experiment.x_min < experiment.x_max and x_points >= 2"));
        }
        Ok((0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect())
    }

    pub fn output_path(&self) -> Option<PathBuf> {
        self.get("output.path").map(PathBuf::from)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

fn split_list(s: &str, sep: char) -> impl Iterator<Item = &str> {
    s.split(sep).map(str::trim)
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(cfg_err(format!("`{key}` expects a finite number, got `{v}`"))),
    }
}

/// `name(args)` with comma-separated numeric arguments.
fn call_syntax<'a>(s: &'a str) -> Option<(&'a str, Vec<&'a str>)> {
    let (name, rest) = s.split_once('(')?;
    let inner = rest.trim_end().strip_suffix(')')?;
    Some((name.trim(), split_list(inner, ',').collect()))
}

/// `point(a)`, `gaussian(mean, var)`, `uniform(a, b)` or `points(a, b, ..)`.
pub fn parse_initial_law(s: &str) -> Result<InitialLaw> {
    let bad = || cfg_err(format!("invalid initial law `{s}`"));
    let (name, args) = call_syntax(s).ok_or_else(bad)?;
    let nums = args
        .iter()
        .map(|a| parse_f64("initial law", a))
        .collect::<Result<Vec<f64>>>()?;
    let law = match (name, nums.as_slice()) {
        ("point", [a]) => InitialLaw::Point(*a),
        ("gaussian", [m, v]) => InitialLaw::Gaussian { mean: *m, var: *v },
        ("uniform", [a, b]) => InitialLaw::Uniform { a: *a, b: *b },
        ("points", v) if !v.is_empty() => InitialLaw::Points(v.to_vec()),
        _ => return Err(bad()),
    };
    law.validate().map_err(|_| bad())?;
    Ok(law)
}

/// `linear:phi`, `square_of_mean:phi`, `exp_of_mean:phi` or `variance`.
pub fn parse_functional(s: &str) -> Result<Functional> {
    if s == "variance" {
        return Ok(Functional::Variance);
    }
    let (kind, phi) = s
        .split_once(':')
        .ok_or_else(|| cfg_err(format!("invalid functional `{s}`")))?;
    let phi = parse(phi.trim())?;
    match kind.trim() {
        "linear" => Ok(Functional::Linear(phi)),
        "square_of_mean" => Ok(Functional::SquareOfMean(phi)),
        "exp_of_mean" => Ok(Functional::ExpOfMean(phi)),
        other => Err(cfg_err(format!("unknown functional kind `{other}`"))),
    }
}
