//! `mvhom`: validate models, compute averaged coefficients, simulate and run
//! the weak-error, ergodic and effective-potential studies from a flat
//! `key = value` configuration.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvhom::config::keys_help;
use mvhom::experiments::{
    check_eps_list, effective_potential_table, ergodic_deviation, weak_error_curve,
    write_ergodic_csv, WeakErrorSetup,
};
use mvhom::homogenize::{write_field_csv, Homogenizer};
use mvhom::rng::Purpose;
use mvhom::sde::{simulate_averaged, simulate_slow_fast};
use mvhom::{EmpiricalMeasure, Error, FrozenSolver, ModelKind, ModelSpec, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mvhom", version, about = "Slow-fast McKean-Vlasov averaging toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    config: PathBuf,
    /// Override a key, e.g. `--set sim.epsilon=0.05`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check ellipticity, centering and the diffusion quadratures.
    #[command(after_help = keys_help())]
    Validate(Common),
    /// Tabulate the averaged drift and diffusion on the x table.
    #[command(after_help = keys_help())]
    Homogenize(Common),
    /// Simulate the particle system and write every snapshot.
    #[command(after_help = keys_help())]
    Simulate(Common),
    /// Weak error against the averaged equation for each epsilon, with a rate fit.
    #[command(name = "weak-error", after_help = keys_help())]
    WeakError(Common),
    /// Deviation of time averages from their frozen averages for each epsilon.
    #[command(after_help = keys_help())]
    Ergodic(Common),
    /// Rough and effective potentials of a periodic rough model.
    #[command(name = "effective-potential", after_help = keys_help())]
    EffectivePotential(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Validate(c)
            | Command::Homogenize(c)
            | Command::Simulate(c)
            | Command::WeakError(c)
            | Command::Ergodic(c)
            | Command::EffectivePotential(c) => c,
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn output(cfg: &RunConfig) -> Result<Box<dyn Write>, Error> {
    Ok(match cfg.output_path() {
        Some(p) => Box::new(BufWriter::new(fs::File::create(&p).map_err(|e| {
            Error::Config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn finish(mut out: Box<dyn Write>) -> Result<(), Error> {
    out.flush()?;
    Ok(())
}

/// Slow particles drawn from `sim.init_slow`, used as the frozen law.
fn reference_measure(cfg: &RunConfig, model: &ModelSpec) -> Result<EmpiricalMeasure, Error> {
    let sim = cfg.sim()?;
    let pts = cfg.init_slow()?.draw(sim.seed, 0, sim.n, model.dim(), Purpose::InitSlow);
    EmpiricalMeasure::uniform(pts, model.dim())
}

fn validate(cfg: &RunConfig) -> Result<(), Error> {
    let model = cfg.model()?;
    let xs = cfg.xs()?;
    let d = model.dim();
    let ys: Vec<f64> = (0..=16).map(|j| -2.0 + 0.25 * j as f64).collect();
    let points: Vec<(Vec<f64>, Vec<f64>)> = xs
        .iter()
        .flat_map(|x| ys.iter().map(move |y| (vec![*x; d], vec![*y; d])))
        .collect();
    let (lower, at) = model.ellipticity_bound(&points)?;
    if !(lower > 0.0) {
        let (x, y) = &points[at];
        return Err(Error::Ellipticity { x: x[0], y: y[0], a: lower });
    }
    println!("model {} (dim {d}), ellipticity lower bound {lower:.6e}", model.name());
    if d != 1 {
        println!("frozen-problem checks need a one-dimensional model; skipped");
        return Ok(());
    }
    let solver = FrozenSolver::new(&model)?;
    let grid = cfg.grid(&model)?.unwrap_or_else(|| solver.default_grid());
    let mut residual: f64 = 0.0;
    for &x in &xs {
        let frozen = solver.invariant_density(x, &grid)?;
        residual = residual.max(solver.check_centering(x, &frozen)?);
        solver.solve_corrector(x, frozen)?;
    }
    println!("centering residual max {residual:.3e} over {} slow points", xs.len());
    let hom = Homogenizer::new(&model, cfg.grid(&model)?)?;
    let mu = reference_measure(cfg, &model)?;
    let mut gap: f64 = 0.0;
    for &x in &xs {
        let v = hom.evaluate_exact(x, &mu)?;
        gap = gap.max((v.d_bar - v.d_bar_alt).abs() / v.d_bar_alt.abs().max(1e-12));
    }
    println!("diffusion two-form relative gap max {gap:.3e}");
    Ok(())
}

fn homogenize(cfg: &RunConfig) -> Result<(), Error> {
    let model = cfg.model()?;
    let field = cfg.field(&model)?;
    let mu = reference_measure(cfg, &model)?;
    let xs = cfg.xs()?;
    let out = output(cfg)?;
    write_field_csv(&field, &xs, &mu, out)
}

fn simulate(cfg: &RunConfig) -> Result<(), Error> {
    let model = cfg.model()?;
    let sim = cfg.sim()?;
    let init_slow = cfg.init_slow()?;
    let ens = if cfg.averaged_system()? {
        simulate_averaged(&cfg.field(&model)?, &sim, &init_slow)?
    } else {
        simulate_slow_fast(&model, &sim, &init_slow, &cfg.init_fast()?)?
    };
    let mut out = output(cfg)?;
    ens.write_csv(&mut out)?;
    finish(out)
}

fn weak_error(cfg: &RunConfig) -> Result<(), Error> {
    let eps = cfg.eps_list()?;
    check_eps_list(&eps)?;
    let model = cfg.model()?;
    let functional = cfg.functional()?;
    let (init_slow, init_fast) = (cfg.init_slow()?, cfg.init_fast()?);
    let field = cfg.field(&model)?;
    let setup = WeakErrorSetup {
        model: &model,
        field: &field,
        functional: &functional,
        cfg: cfg.sim()?,
        init_slow: &init_slow,
        init_fast: &init_fast,
    };
    let report = weak_error_curve(&setup, &eps)?;
    match &report.fit {
        Some(f) => eprintln!("fitted slope {:.4} from {} points", f.slope, f.points_used),
        None => eprintln!("rate fit skipped: fewer than 3 errors stand out of the noise"),
    }
    let mut out = output(cfg)?;
    report.write_csv(&mut out)?;
    finish(out)
}

fn ergodic(cfg: &RunConfig) -> Result<(), Error> {
    let eps = cfg.eps_list()?;
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Config("experiment.eps_list must hold positive values".into()));
    }
    let model = cfg.model()?;
    let points = ergodic_deviation(
        &model,
        &cfg.observable()?,
        &cfg.sim()?,
        &eps,
        &cfg.init_slow()?,
        &cfg.init_fast()?,
        cfg.grid(&model)?,
    )?;
    let mut out = output(cfg)?;
    write_ergodic_csv(&points, &mut out)?;
    finish(out)
}

fn effective_potential(cfg: &RunConfig) -> Result<(), Error> {
    let model = cfg.model()?;
    let ModelKind::PeriodicRough(p) = model.kind() else {
        return Err(Error::Config("effective-potential needs model.kind=periodic_rough".into()));
    };
    if p.q.len() != 1 {
        return Err(Error::Config("effective-potential needs a single periodic profile".into()));
    }
    let w = (!p.w.is_zero()).then_some(&p.w);
    let table = effective_potential_table(&p.v, &p.q[0], p.sigma, cfg.eps_display()?, &cfg.xs()?, w)?;
    eprintln!("Theta = {:.12}", table.theta);
    let mut out = output(cfg)?;
    table.write_csv(&mut out)?;
    finish(out)
}

fn run(cmd: &Command) -> Result<(), Error> {
    let cfg = load(cmd.common())?;
    let threads = cfg.threads()?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    match cmd {
        Command::Validate(_) => validate(&cfg),
        Command::Homogenize(_) => homogenize(&cfg),
        Command::Simulate(_) => simulate(&cfg),
        Command::WeakError(_) => weak_error(&cfg),
        Command::Ergodic(_) => ergodic(&cfg),
        Command::EffectivePotential(_) => effective_potential(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(a) = e.assumption() {
                eprintln!("violated assumption: {a}");
            }
            let code = if e.is_config() || matches!(e, Error::Io(_)) {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            };
            ExitCode::from(code)
        }
    }
}
