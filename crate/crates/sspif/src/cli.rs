//! The `sspif` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sspif_core::certify::certify;
use sspif_core::harness::{self, convergence_study, SweepSetup, Sweeper};
use sspif_core::methods;
use sspif_core::optimize::{default_multistarts, has_monotone_abscissas, optimize_tsrk, OptimizationProblem};
use sspif_core::order::{self, residuals_up_to, OrderReport};
use sspif_core::semidiscrete::Weno5;
use sspif_core::tableau::abscissas;

use crate::config::RunConfig;
use crate::methodfile::{save_method, MethodFile, Provenance};
use crate::output::{emit_csv, emit_plotdata, parallel_sweep};
use crate::registry::Registry;
use crate::{Error, Result};

/// Residual tolerance used when reporting the attained order.
pub const ORDER_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "sspif", version, about = "Construct, certify and test SSP two-step Runge–Kutta methods")]
pub struct Cli {
    /// Run description with `key = value` lines; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Method registry directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub registry: Option<PathBuf>,
    /// Seed for randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a method with maximal SSP coefficient.
    Optimize(OptimizeArgs),
    /// Print the SSP coefficient, abscissa monotonicity and order of a method.
    Certify {
        method: String,
    },
    /// Print order-condition residuals.
    OrderCheck {
        method: String,
        /// Highest order to evaluate.
        #[arg(long, default_value_t = order::MAX_ORDER)]
        max_order: usize,
        #[arg(long, default_value_t = ORDER_TOL)]
        tol: f64,
    },
    /// Print the stage abscissas and that of the new solution.
    Abscissas {
        method: String,
    },
    /// TVD time-step sweep and observed SSP coefficient.
    Sweep(SweepArgs),
    /// Van der Pol convergence study.
    Converge(ConvergeArgs),
    /// Inspect the method registry.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum RegistryAction {
    /// List methods with stages, order, SSP coefficient and abscissa monotonicity.
    List,
    /// Write the built-in classical methods into the registry directory.
    Init,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, short = 's')]
    pub stages: usize,
    #[arg(long, short = 'p')]
    pub order: usize,
    /// Number of random starts (default depends on the stage count).
    #[arg(long)]
    pub starts: Option<usize>,
    /// Drop the non-decreasing abscissa constraint.
    #[arg(long)]
    pub no_monotone: bool,
    /// Search one-step Runge–Kutta methods only.
    #[arg(long)]
    pub one_step: bool,
    /// Name of the resulting method.
    #[arg(long)]
    pub name: Option<String>,
    /// Store the result in the registry.
    #[arg(long)]
    pub save: bool,
    /// Write the result to this method file.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleArg {
    Linear,
    Burgers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WenoArg {
    /// Roe-speed upwinding, ε = 1e-40.
    Upwind,
    /// Global Lax–Friedrichs splitting, ε = 1e-6.
    Lf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub method: String,
    #[arg(long, value_enum)]
    pub example: Option<ExampleArg>,
    /// Wavespeed of the linear part.
    #[arg(long)]
    pub a: Option<f64>,
    /// Grid points.
    #[arg(long)]
    pub m: Option<usize>,
    /// Method steps after the start-up step.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub lambda_step: Option<f64>,
    /// Largest admissible stage-to-stage TV rise.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Step the full right-hand side explicitly instead of with an integrating factor.
    #[arg(long)]
    pub explicit: bool,
    /// Permit negative exponents from decreasing abscissas.
    #[arg(long)]
    pub allow_nonmonotone: bool,
    #[arg(long, value_enum, default_value_t = WenoArg::Upwind)]
    pub weno: WenoArg,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write `lambda,max_tv_rise` CSV here.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub plotdata: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Methods to study; repeat for several.
    #[arg(long, required = true)]
    pub method: Vec<String>,
    /// Write `dt,error` CSV here (one method only).
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub plotdata: Option<PathBuf>,
}

/// Parse `args` (including the program name) and run, writing reports to `out`.
/// Returns the process exit status.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let registry_dir = cli.registry.clone().unwrap_or_else(Registry::default_dir);
    let open = || Registry::open(&registry_dir);
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    match &cli.command {
        Command::Optimize(args) => optimize(args, &cfg, open, out),
        Command::Certify { method } => {
            let f = open()?.resolve(method)?;
            let c = certify(&f.method)?;
            let report = residuals_up_to(&f.method, (f.order + 1).min(order::MAX_ORDER))?;
            writeln!(
                out,
                "C = {c:.6}, monotone_abscissas = {}, order = {}",
                has_monotone_abscissas(&f.method),
                report.attained_order(ORDER_TOL)
            )
            .map_err(w)?;
            write_report(&report, ORDER_TOL, out).map_err(w)
        }
        Command::OrderCheck { method, max_order, tol } => {
            if !(1..=order::MAX_ORDER).contains(max_order) {
                return Err(Error::Usage(format!("--max-order must be in 1..={}", order::MAX_ORDER)));
            }
            let f = open()?.resolve(method)?;
            let report = residuals_up_to(&f.method, *max_order)?;
            writeln!(out, "{}: attained order {} (tol {tol:e})", f.name, report.attained_order(*tol)).map_err(w)?;
            for c in &report.conditions {
                writeln!(out, "  order {} {:<28} {:.3e}", c.order, c.name, c.residual).map_err(w)?;
            }
            Ok(())
        }
        Command::Abscissas { method } => {
            let f = open()?.resolve(method)?;
            let c = abscissas(&f.method).into_inner();
            let text: Vec<String> = c.iter().map(|v| format!("{v:.16}")).collect();
            writeln!(out, "{}", text.join(" ")).map_err(w)?;
            writeln!(out, "monotone_abscissas = {}", has_monotone_abscissas(&f.method)).map_err(w)
        }
        Command::Sweep(args) => sweep(args, &cfg, &open()?, out),
        Command::Converge(args) => converge(args, &cfg, &open()?, out),
        Command::Registry {
            action: RegistryAction::Init,
        } => {
            std::fs::create_dir_all(&registry_dir).map_err(|e| Error::io(&registry_dir, e))?;
            let mut reg = open()?;
            for (name, m) in methods::builtin() {
                let order = order::attained_order(&m, ORDER_TOL);
                let mut f = MethodFile::new(&name, order, m);
                f.certified_c = Some(certify(&f.method)?);
                let path = reg.insert(f)?;
                writeln!(out, "wrote {}", path.display()).map_err(w)?;
            }
            Ok(())
        }
        Command::Registry {
            action: RegistryAction::List,
        } => {
            let reg = open()?;
            writeln!(out, "{:<24} {:>3} {:>2} {:>2} {:>10} monotone", "name", "s", "k", "p", "C").map_err(w)?;
            for f in reg.methods() {
                let c = certify(&f.method)?;
                writeln!(
                    out,
                    "{:<24} {:>3} {:>2} {:>2} {:>10.6} {}",
                    f.name,
                    f.method.stages(),
                    if f.method.is_one_step() { 1 } else { 2 },
                    f.order,
                    c,
                    has_monotone_abscissas(&f.method)
                )
                .map_err(w)?;
            }
            for l in reg.lmms() {
                writeln!(out, "{:<24} {:>3} {:>2} {:>2} {:>10.6} lmm", l.name, 1, l.steps(), "-", l.ssp_coefficient())
                    .map_err(w)?;
            }
            Ok(())
        }
    }
}

fn write_report(report: &OrderReport, tol: f64, out: &mut dyn Write) -> std::io::Result<()> {
    for p in 1..=report.max_order {
        let n = report.at_order(p).count();
        let r = report.order_residual(p);
        let mark = if r <= tol { "ok" } else { "fails" };
        writeln!(out, "  order {p}: {n:>2} conditions, max residual {r:.3e} {mark}")?;
    }
    Ok(())
}

fn optimize(
    args: &OptimizeArgs,
    cfg: &RunConfig,
    open: impl Fn() -> Result<Registry>,
    out: &mut dyn Write,
) -> Result<()> {
    let starts = args.starts.or(cfg.starts).unwrap_or_else(|| default_multistarts(args.stages));
    let mut problem = OptimizationProblem::new(args.stages, args.order)
        .monotone(!args.no_monotone)
        .with_seed(cfg.seed)
        .with_starts(starts);
    if args.one_step {
        problem = problem.one_step();
    }
    problem.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let res = optimize_tsrk(&problem)?;
    let name = args.name.clone().unwrap_or_else(|| {
        let plus = if args.no_monotone { "" } else { "-plus" };
        let kind = if args.one_step { "essprk" } else { "tsrk" };
        format!("{kind}{plus}-{}-{}", args.stages, args.order)
    });
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(
        out,
        "{name}: C = {:.6}, max residual = {:.3e}, monotone_abscissas = {}, best start {} of {}",
        res.certified_c,
        res.order_report.max_residual(),
        has_monotone_abscissas(&res.method),
        res.best_start,
        res.starts_used
    )
    .map_err(w)?;
    let file = MethodFile {
        name,
        order: args.order,
        method: res.method,
        certified_c: Some(res.certified_c),
        provenance: Some(Provenance {
            seed: cfg.seed,
            starts: res.starts_used,
        }),
    };
    if let Some(path) = &args.output {
        save_method(&file, path)?;
        writeln!(out, "wrote {}", path.display()).map_err(w)?;
    }
    if args.save {
        let path = open()?.insert(file)?;
        writeln!(out, "wrote {}", path.display()).map_err(w)?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs, cfg: &RunConfig, reg: &Registry, out: &mut dyn Write) -> Result<()> {
    let f = reg.resolve(&args.method)?;
    let example = match (args.example, cfg.example.as_deref()) {
        (Some(e), _) => e,
        (None, None | Some("linear")) => ExampleArg::Linear,
        (None, Some("burgers")) => ExampleArg::Burgers,
        (None, Some(other)) => return Err(Error::Usage(format!("unknown example {other:?}"))),
    };
    let a = args.a.unwrap_or(cfg.a);
    let mut setup = match example {
        ExampleArg::Linear => SweepSetup::linear(a),
        ExampleArg::Burgers => SweepSetup::burgers(a),
    };
    if let Some(m) = args.m.or(cfg.m) {
        setup = setup.with_grid(m);
    }
    if let Some(steps) = args.steps.or(cfg.steps) {
        setup = setup.with_steps(steps);
    }
    setup = setup.with_weno(match args.weno {
        WenoArg::Upwind => Weno5::upwind(),
        WenoArg::Lf => Weno5::lax_friedrichs(),
    });
    if args.explicit {
        setup = setup.explicit();
    } else if args.allow_nonmonotone {
        setup = setup.allow_nonmonotone();
    }
    let mut range = cfg.clone();
    range.lambda_min = args.lambda_min.unwrap_or(cfg.lambda_min);
    range.lambda_max = args.lambda_max.unwrap_or(cfg.lambda_max);
    range.lambda_step = args.lambda_step.unwrap_or(cfg.lambda_step);
    let lambdas = range.lambdas()?;
    let threshold = args.threshold.unwrap_or(cfg.threshold);
    let threads = args.threads.unwrap_or(cfg.threads);

    let sweeper = Sweeper::new(&f.name, &f.method, &setup)?;
    let rec = parallel_sweep(&sweeper, &lambdas, threads)?;
    if let Some(path) = &args.output {
        emit_csv(&rec, path)?;
    }
    if let Some(path) = &args.plotdata {
        emit_plotdata(&rec, path)?;
    }
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    writeln!(
        out,
        "{} on {} (a = {}, m = {}, steps = {}): {} lambda values, max rise {:.3e}",
        f.name,
        setup.example.name(),
        a,
        setup.m,
        setup.steps,
        rec.lambdas.len(),
        rec.rises.iter().copied().fold(0.0, f64::max)
    )
    .map_err(w)?;
    let mut probe = |l: f64| sweeper.rise_at(l);
    match harness::observed_lambda(&rec, threshold, Some(&mut probe)) {
        Ok(l) => writeln!(out, "observed lambda = {l:.4}").map_err(w),
        Err(e @ sspif_core::Error::NoTransition { .. }) => writeln!(out, "observed lambda: {e}").map_err(w),
        Err(e) => Err(e.into()),
    }
}

fn converge(args: &ConvergeArgs, cfg: &RunConfig, reg: &Registry, out: &mut dyn Write) -> Result<()> {
    if args.method.len() > 1 && (args.output.is_some() || args.plotdata.is_some()) {
        return Err(Error::Usage("--output and --plotdata take a single --method".into()));
    }
    let w = |e: std::io::Error| Error::io("<stdout>", e);
    let methods: Vec<MethodFile> = args.method.iter().map(|m| reg.resolve(m)).collect::<Result<_>>()?;
    let mut dts = cfg.dts.clone();
    dts.sort_by(f64::total_cmp);
    for f in &methods {
        let rec = convergence_study(&f.name, &f.method, &dts)?;
        writeln!(out, "{}: order {}, slope = {:.4}", f.name, f.order, rec.slope).map_err(w)?;
        for (dt, e) in rec.dts.iter().zip(&rec.errors) {
            writeln!(out, "  dt = {dt:<6} error = {e:.6e}").map_err(w)?;
        }
        for dt in &rec.dropped {
            writeln!(out, "  warning: dt = {dt} overflowed and was dropped").map_err(w)?;
        }
        if let Some(path) = &args.output {
            emit_csv(&rec, path)?;
        }
        if let Some(path) = &args.plotdata {
            emit_plotdata(&rec, path)?;
        }
    }
    Ok(())
}

