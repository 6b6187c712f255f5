//! Command-line front end: argument parsing, run orchestration and artifact output.
//!
//! Exit codes: 0 success, 1 invalid input (arguments, config, parameters,
//! mesh), 2 solver failure.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{config_hash, RunConfig, MESH_KEYS};
pub use output::{resolve_out_dir, CsvSink, OUT_DIR_ENV, VERSION};

use crate::density::{solve_density, DensityConfig};
use crate::error::{Error, Result};
use crate::exercise_boundary::{boundary_limit, BoundaryLimit};
use crate::grid::{Mesh, SegmentList};
use crate::lsmc::{lsmc_price, BasisSpec, McConfig, McEstimate};
use crate::margrabe::{margrabe_delta, margrabe_price, MargrabeInputs};
use crate::pricer::{comparative_statics, solve, OptionStyle, Override, Solution, SolverConfig};
use crate::quadrature::GaussHermiteRule;
use crate::riccati::BoundaryConditionKind;
use output::{num, write_json};

/// `s` rows of the reference price table.
pub const TABLE2_S: [f64; 11] = [0.5, 0.625, 0.75, 0.875, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];

const INTERPOLATION: &str = "cubic-lagrange-in-s,linear-in-v";

#[derive(Debug, Parser)]
#[command(
    name = "exmol",
    version,
    about = "Exchange option pricing by the method of lines"
)]
struct Cli {
    /// Output directory (overrides EXMOL_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the parameter set and mesh.
    Validate(ConfigArgs),
    /// Early exercise boundary at maturity.
    BoundaryLimit(BoundaryArgs),
    /// European price, delta and gamma surfaces.
    PriceEuro(PriceArgs),
    /// American surfaces and the early exercise boundary.
    PriceAmer(PriceArgs),
    /// Joint transition density of (ln s, v).
    Density(DensityArgs),
    /// Closed-form constant-volatility price.
    Margrabe(MargrabeArgs),
    /// Least-squares Monte Carlo American price.
    Lsmc(LsmcArgs),
    /// Price differences under parameter overrides.
    Compstat(CompstatArgs),
    /// American prices at v = v_max under each boundary condition.
    CompareBc(SolverArgs),
    /// Price table at t = 0 for several time-step counts.
    ReproduceTable2(Table2Args),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat key = value parameter file; the reference set when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    n_time: Option<usize>,
    #[arg(long)]
    m_var: Option<usize>,
    #[arg(long)]
    v_max: Option<f64>,
    /// `start:end:intervals,...`
    #[arg(long, alias = "s-segments")]
    segments: Option<SegmentList>,
    /// Moves the end of the last s segment, keeping its interval count.
    #[arg(long)]
    s_max: Option<f64>,
    /// Gauss-Hermite order.
    #[arg(long)]
    quadrature_order: Option<usize>,
    #[arg(long, default_value = "standard-vega")]
    bc: BoundaryConditionKind,
    /// Include the delta change in the convergence test.
    #[arg(long)]
    strict_convergence: bool,
    /// Include the free-boundary change in the convergence test.
    #[arg(long)]
    boundary_convergence: bool,
}

#[derive(Debug, Args)]
struct BoundaryArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.56")]
    v: Vec<f64>,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE2_S.to_vec())]
    s: Vec<f64>,
    #[arg(long, default_value_t = 0.56)]
    v0: f64,
    /// Report prices in money (times S2(0)) rather than second-asset units.
    #[arg(long)]
    monetary: bool,
    #[arg(long = "s2-0", default_value_t = 1.0)]
    s2_0: f64,
    /// Write every time line instead of only tau = T.
    #[arg(long)]
    all_lines: bool,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    #[arg(long, default_value_t = 0.56)]
    v0: f64,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long)]
    n_time: Option<usize>,
    #[arg(long)]
    m_var: Option<usize>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    x_intervals: usize,
}

#[derive(Debug, Args)]
struct MargrabeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE2_S.to_vec())]
    s: Vec<f64>,
    /// Time to maturity; T when omitted.
    #[arg(long)]
    tau: Option<f64>,
    /// Effective volatility; sqrt(sigma^2 eta) from the config when omitted.
    #[arg(long)]
    sigma_eff: Option<f64>,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = McConfig::default().seed)]
    seed: u64,
    /// Regression basis, e.g. `s:3,v:2,sv` (add `payoff` for the exercise value).
    #[arg(long, default_value = "s:3,v:2,sv")]
    basis: BasisSpec,
    #[arg(long = "s2-0", default_value_t = 1.0)]
    s2_0: f64,
    #[arg(long)]
    no_antithetic: bool,
    #[arg(long)]
    flip_antithetic: bool,
}

impl McArgs {
    fn to_config(&self) -> McConfig {
        McConfig {
            paths: self.paths,
            steps: self.steps,
            seed: self.seed,
            basis: self.basis,
            s2_0: self.s2_0,
            antithetic: !self.no_antithetic,
            flip_antithetic: self.flip_antithetic,
        }
    }
}

#[derive(Debug, Args)]
struct LsmcArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "2.0")]
    s0: Vec<f64>,
    #[arg(long, default_value_t = 0.56)]
    v0: f64,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Debug, Args)]
struct CompstatArgs {
    #[command(flatten)]
    solver: SolverArgs,
    /// `label:key=value,key=value`; repeatable.
    #[arg(long = "override")]
    overrides: Vec<OverrideArg>,
    #[arg(long, default_value_t = 0.56)]
    v_sample: f64,
}

#[derive(Debug, Args)]
struct Table2Args {
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, value_delimiter = ',', default_value = "20,50,100")]
    variants: Vec<usize>,
    #[arg(long, default_value_t = 0.56)]
    v0: f64,
    /// Add least-squares Monte Carlo estimates per row.
    #[arg(long)]
    lsmc: bool,
    #[command(flatten)]
    mc: McArgs,
}

#[derive(Debug, Clone)]
struct OverrideArg(Override);

impl FromStr for OverrideArg {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (label, body) = text
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("override `{text}` needs `label:key=value`")))?;
        let mut changes = Vec::new();
        for item in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override item `{item}` needs key=value")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("override value `{v}` is not a number")))?;
            changes.push((k.trim().to_string(), v));
        }
        Ok(Self(Override {
            label: label.trim().to_string(),
            changes,
        }))
    }
}

/// Exit status for an error: 1 for bad input, 2 for solver failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParams(_)
        | Error::InvalidMesh(_)
        | Error::QuadratureOrder(_)
        | Error::NegativeCoordinate(_)
        | Error::InadmissibleBoundary { .. }
        | Error::SurfaceMismatch(_)
        | Error::SourceOutsideMesh { .. }
        | Error::McConfig(_)
        | Error::UnknownParameter(_)
        | Error::Config(_) => 1,
        Error::MissingHistory { .. }
        | Error::NonFinite { .. }
        | Error::NegativeRiccati { .. }
        | Error::BoundaryEscaped { .. }
        | Error::NoEarlyExercise
        | Error::Io(_) => 2,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let out_dir = resolve_out_dir(cli.out_dir.as_deref());
    match dispatch(cli.command, &out_dir) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &Path) -> Result<()> {
    match command {
        Command::Validate(a) => cmd_validate(&a),
        Command::BoundaryLimit(a) => cmd_boundary_limit(&a, out),
        Command::PriceEuro(a) => cmd_price(&a, OptionStyle::European, out),
        Command::PriceAmer(a) => cmd_price(&a, OptionStyle::American, out),
        Command::Density(a) => cmd_density(&a, out),
        Command::Margrabe(a) => cmd_margrabe(&a, out),
        Command::Lsmc(a) => cmd_lsmc(&a, out),
        Command::Compstat(a) => cmd_compstat(&a, out),
        Command::CompareBc(a) => cmd_compare_bc(&a, out),
        Command::ReproduceTable2(a) => cmd_table2(&a, out),
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    let cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let report = cfg.params.validate();
    if !report.is_valid() {
        return Err(Error::InvalidParams(report));
    }
    Ok(cfg)
}

fn load_solver(args: &SolverArgs) -> Result<(RunConfig, SolverConfig)> {
    let mut cfg = load(&args.config)?;
    if let Some(n) = args.n_time {
        cfg.mesh.n_time = n;
    }
    if let Some(m) = args.m_var {
        cfg.mesh.m_var = m;
    }
    if let Some(v) = args.v_max {
        cfg.mesh.v_max = v;
    }
    if let Some(s) = &args.segments {
        cfg.mesh.segments = s.clone();
    }
    if let Some(end) = args.s_max {
        let last = cfg
            .mesh
            .segments
            .0
            .last_mut()
            .expect("segment list is never empty");
        if !(end > last.start) {
            return Err(Error::Config(format!(
                "s_max = {end} must exceed the last segment start {}",
                last.start
            )));
        }
        last.end = end;
    }
    if let Some(l) = args.quadrature_order {
        cfg.quadrature_order = l;
    }
    let solver = SolverConfig {
        bc: args.bc,
        quadrature_order: cfg.quadrature_order,
        strict_convergence: args.strict_convergence,
        boundary_convergence: args.boundary_convergence,
        ..SolverConfig::default()
    };
    Ok((cfg, solver))
}

fn solver_options(s: &SolverConfig) -> String {
    format!(
        "bc={} strict={} boundary={} tol={:e} outer={} inner={}",
        s.bc, s.strict_convergence, s.boundary_convergence, s.tolerance, s.max_outer, s.max_inner
    )
}

fn cmd_validate(args: &ConfigArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let report = cfg.params.validate();
    if !report.is_valid() {
        return Err(Error::InvalidParams(report));
    }
    cfg.mesh.build(cfg.params.maturity)?;
    GaussHermiteRule::new(cfg.quadrature_order)?;
    println!("valid");
    Ok(())
}

#[derive(Serialize)]
struct BoundarySummary {
    limit: BoundaryLimit,
    a_at_maturity: Option<f64>,
    version: &'static str,
}

fn cmd_boundary_limit(args: &BoundaryArgs, out: &Path) -> Result<()> {
    let cfg = load(&args.config)?;
    let limit = boundary_limit(&cfg.params);
    let a0 = limit.a_at_maturity(&cfg.params);
    let hash = config_hash(&cfg, "boundary-limit");
    let mut csv = CsvSink::create(
        out,
        "boundary-limit.csv",
        &hash,
        &[],
        &["v", "b_limit", "a_limit"],
    )?;
    match (limit, a0) {
        (
            BoundaryLimit::Finite {
                b_limit,
                x_star,
                continuous_at_maturity,
            },
            Some(a),
        ) => {
            let verdict = if continuous_at_maturity {
                "continuous"
            } else {
                "discontinuous"
            };
            println!("x* = {x_star:.6}  b_limit = {b_limit:.6}  {verdict} at maturity");
            for &v in &args.v {
                println!("A(0+, v={v}) = {a:.6}");
                csv.row([num(v), num(b_limit), num(a)])?;
            }
        }
        _ => {
            println!("no early exercise at maturity (q1 = 0)");
            for &v in &args.v {
                csv.row([num(v), "inf".to_string(), "inf".to_string()])?;
            }
        }
    }
    csv.finish()?;
    write_json(
        out,
        "boundary-limit.json",
        &BoundarySummary {
            limit,
            a_at_maturity: a0,
            version: VERSION,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct QueryRow {
    s: f64,
    v: f64,
    price: f64,
    delta: f64,
}

#[derive(Serialize)]
struct PriceSummary<'a> {
    style: OptionStyle,
    units: &'static str,
    interpolation: &'static str,
    boundary_at_v0: Option<f64>,
    queries: Vec<QueryRow>,
    report: &'a crate::pricer::SolveReport,
    version: &'static str,
}

fn query_rows(sol: &Solution, s: &[f64], v0: f64, scale: f64) -> Result<Vec<QueryRow>> {
    s.iter()
        .map(|&s| {
            Ok(QueryRow {
                s,
                v: v0,
                price: sol.price_at(s, v0)? * scale,
                delta: sol.delta_at(s, v0)? * scale,
            })
        })
        .collect()
}

fn cmd_price(args: &PriceArgs, style: OptionStyle, out: &Path) -> Result<()> {
    let (cfg, solver) = load_solver(&args.solver)?;
    let mesh = cfg.mesh.build(cfg.params.maturity)?;
    let sol = solve(&cfg.params, &mesh, style, &solver)?;
    let name = match style {
        OptionStyle::European => "price-euro",
        OptionStyle::American => "price-amer",
    };
    let units = if args.monetary {
        "monetary"
    } else {
        "second-asset-yield"
    };
    let scale = if args.monetary { args.s2_0 } else { 1.0 };
    let hash = config_hash(&cfg, &solver_options(&solver));

    let mut csv = CsvSink::create(
        out,
        &format!("{name}.csv"),
        &hash,
        &[("units", "second-asset-yield".into())],
        &["tau", "v", "s", "price", "delta", "gamma"],
    )?;
    let lines: &[_] = if args.all_lines {
        &sol.lines
    } else {
        std::slice::from_ref(sol.final_line())
    };
    for line in lines {
        for (m, &v) in mesh.v_nodes().iter().enumerate() {
            for (j, &s) in mesh.s_nodes().iter().enumerate() {
                csv.row([
                    num(line.tau),
                    num(v),
                    num(s),
                    num(line.price.values[m][j]),
                    num(line.delta.values[m][j]),
                    num(line.gamma.values[m][j]),
                ])?;
            }
        }
    }
    csv.finish()?;

    if let Some(b) = &sol.boundary {
        let mut csv = CsvSink::create(out, "boundary.csv", &hash, &[], &["tau", "v", "A", "B"])?;
        for n in 0..b.tau.len() {
            for m in 0..b.v.len() {
                csv.row([
                    num(b.tau[n]),
                    num(b.v[m]),
                    num(b.value(n, m)),
                    num(b.normalized(n, m)),
                ])?;
            }
        }
        csv.finish()?;
    }

    let queries = query_rows(&sol, &args.s, args.v0, scale)?;
    let mut csv = CsvSink::create(
        out,
        &format!("{name}-query.csv"),
        &hash,
        &[
            ("units", units.into()),
            ("interpolation", INTERPOLATION.into()),
        ],
        &["s", "v", "price", "delta"],
    )?;
    println!("{:>8} {:>12} {:>12}", "s", "price", "delta");
    for q in &queries {
        println!("{:>8.3} {:>12.6} {:>12.6}", q.s, q.price, q.delta);
        csv.row([num(q.s), num(q.v), num(q.price), num(q.delta)])?;
    }
    csv.finish()?;
    let boundary_at_v0 = sol.boundary_at(sol.lines.len() - 1, args.v0);
    if let Some(a) = boundary_at_v0 {
        println!("A(0, {}) = {a:.4}", args.v0);
    }
    if sol.report.iteration_cap_hits > 0 {
        eprintln!(
            "warning: iteration cap reached at {} time steps",
            sol.report.iteration_cap_hits
        );
    }
    write_json(
        out,
        &format!("{name}.json"),
        &PriceSummary {
            style,
            units,
            interpolation: INTERPOLATION,
            boundary_at_v0,
            queries,
            report: &sol.report,
            version: VERSION,
        },
    )?;
    Ok(())
}

fn cmd_density(args: &DensityArgs, out: &Path) -> Result<()> {
    let cfg = load(&args.config)?;
    let n_time = args.n_time.unwrap_or(cfg.mesh.n_time);
    let m_var = args.m_var.unwrap_or(cfg.mesh.m_var);
    let x_max = args.x_max.unwrap_or(cfg.x_max);
    let mesh = Mesh::log_ratio(
        n_time,
        m_var,
        args.tau,
        cfg.mesh.v_max,
        x_max,
        args.x_intervals,
    )?;
    let rule = GaussHermiteRule::new(cfg.quadrature_order)?;
    let field = solve_density(
        &cfg.params,
        &mesh,
        args.x0,
        args.v0,
        &rule,
        &DensityConfig::default(),
    )?;
    let options = format!(
        "density x0={} v0={} tau={} N={n_time} M={m_var} x_max={x_max} x_intervals={}",
        args.x0, args.v0, args.tau, args.x_intervals
    );
    let hash = config_hash(&cfg, &options);
    let mut csv = CsvSink::create(out, "density.csv", &hash, &[], &["tau", "v", "x", "H"])?;
    for line in &field.lines {
        for (m, &v) in field.v.iter().enumerate() {
            for (j, &x) in field.x.iter().enumerate() {
                csv.row([num(line.tau), num(v), num(x), num(line.values[m][j])])?;
            }
        }
    }
    csv.finish()?;
    let mut csv = CsvSink::create(
        out,
        "density-mass.csv",
        &hash,
        &[],
        &["tau", "mass", "min_h"],
    )?;
    for line in &field.lines {
        csv.row([num(line.tau), num(line.mass), num(line.min_value)])?;
    }
    csv.finish()?;
    let last = field.final_line();
    println!(
        "tau = {}  mass = {:.6}  min H = {:.3e}",
        last.tau, last.mass, last.min_value
    );
    Ok(())
}

fn cmd_margrabe(args: &MargrabeArgs, out: &Path) -> Result<()> {
    let cfg = load(&args.config)?;
    let mut inp = MargrabeInputs::from_params(&cfg.params, args.tau.unwrap_or(cfg.params.maturity));
    if let Some(s) = args.sigma_eff {
        if !(s >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_eff = {s} must be nonnegative"
            )));
        }
        inp.sigma_eff = s;
    }
    let options = format!("margrabe tau={} sigma_eff={}", inp.tau, inp.sigma_eff);
    let hash = config_hash(&cfg, &options);
    let mut csv = CsvSink::create(out, "margrabe.csv", &hash, &[], &["s", "price", "delta"])?;
    println!("{:>8} {:>12} {:>12}", "s", "price", "delta");
    for &s in &args.s {
        let (p, d) = (margrabe_price(s, &inp), margrabe_delta(s, &inp));
        println!("{s:>8.3} {p:>12.6} {d:>12.6}");
        csv.row([num(s), num(p), num(d)])?;
    }
    csv.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct LsmcRow {
    s0: f64,
    v0: f64,
    estimate: McEstimate,
}

fn cmd_lsmc(args: &LsmcArgs, out: &Path) -> Result<()> {
    let cfg = load(&args.config)?;
    let mc = args.mc.to_config();
    let options = format!("lsmc {mc:?} v0={}", args.v0);
    let hash = config_hash(&cfg, &options);
    let mut csv = CsvSink::create(
        out,
        "lsmc.csv",
        &hash,
        &[
            ("seed", mc.seed.to_string()),
            ("basis", mc.basis.to_string()),
        ],
        &["s0", "v0", "price", "std_error", "ci_low", "ci_high"],
    )?;
    let mut rows = Vec::new();
    println!("{:>8} {:>12} {:>10} {:>24}", "s0", "price", "se", "95% CI");
    for &s0 in &args.s0 {
        let e = lsmc_price(&cfg.params, s0, args.v0, &mc)?;
        println!(
            "{s0:>8.3} {:>12.6} {:>10.6} [{:>10.6}, {:>10.6}]",
            e.price, e.std_error, e.ci_low, e.ci_high
        );
        csv.row([
            num(s0),
            num(args.v0),
            num(e.price),
            num(e.std_error),
            num(e.ci_low),
            num(e.ci_high),
        ])?;
        rows.push(LsmcRow {
            s0,
            v0: args.v0,
            estimate: e,
        });
    }
    csv.finish()?;
    write_json(out, "lsmc.json", &rows)?;
    Ok(())
}

fn cmd_compstat(args: &CompstatArgs, out: &Path) -> Result<()> {
    let (cfg, solver) = load_solver(&args.solver)?;
    let mesh = cfg.mesh.build(cfg.params.maturity)?;
    let overrides: Vec<Override> = args.overrides.iter().map(|o| o.0.clone()).collect();
    let rows = comparative_statics(&cfg.params, &overrides, &mesh, &solver, args.v_sample)?;
    let options = format!(
        "compstat {} {overrides:?} v={}",
        solver_options(&solver),
        args.v_sample
    );
    let hash = config_hash(&cfg, &options);
    let mut csv = CsvSink::create(
        out,
        "compstat.csv",
        &hash,
        &[],
        &["label", "style", "s", "difference"],
    )?;
    for row in &rows {
        let worst = row.difference.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        println!(
            "{:<24} {:<9} max |difference| = {worst:.6}",
            row.label,
            row.style.name()
        );
        for (s, d) in row.s.iter().zip(&row.difference) {
            csv.row([
                row.label.clone(),
                row.style.name().to_string(),
                num(*s),
                num(*d),
            ])?;
        }
    }
    csv.finish()?;
    Ok(())
}

fn cmd_compare_bc(args: &SolverArgs, out: &Path) -> Result<()> {
    let (cfg, solver) = load_solver(args)?;
    let mesh = cfg.mesh.build(cfg.params.maturity)?;
    for kind in BoundaryConditionKind::ALL {
        kind.check_admissible(&cfg.params.variance, mesh.v_max())?;
    }
    let solutions: Vec<Solution> = BoundaryConditionKind::ALL
        .par_iter()
        .map(|&bc| {
            solve(
                &cfg.params,
                &mesh,
                OptionStyle::American,
                &SolverConfig { bc, ..solver },
            )
        })
        .collect::<Result<_>>()?;
    let m = mesh.m_var();
    let rows: Vec<&[f64]> = solutions
        .iter()
        .map(|s| s.final_line().price.row(m))
        .collect();
    let options = format!("compare-bc {}", solver_options(&solver));
    let hash = config_hash(&cfg, &options);
    let mut header = vec!["s"];
    header.extend(BoundaryConditionKind::ALL.iter().map(|k| k.name()));
    let mut csv = CsvSink::create(
        out,
        "compare-bc.csv",
        &hash,
        &[("v", num(mesh.v_max()))],
        &header,
    )?;
    for (j, &s) in mesh.s_nodes().iter().enumerate() {
        let mut rec = vec![num(s)];
        rec.extend(rows.iter().map(|r| num(r[j])));
        csv.row(rec)?;
    }
    csv.finish()?;
    for (k, kind) in BoundaryConditionKind::ALL.iter().enumerate().skip(1) {
        let worst = rows[0]
            .iter()
            .zip(rows[k])
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        println!(
            "max |{} - {}| at v = {} : {worst:.6}",
            BoundaryConditionKind::ALL[0],
            kind,
            mesh.v_max()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct Table2Summary {
    variants: Vec<usize>,
    s: Vec<f64>,
    prices: Vec<Vec<f64>>,
    boundary_at_v0: Vec<f64>,
    wall_time_s: Vec<f64>,
    lsmc: Option<Vec<McEstimate>>,
    interpolation: &'static str,
    version: &'static str,
}

fn cmd_table2(args: &Table2Args, out: &Path) -> Result<()> {
    let (cfg, solver) = load_solver(&args.solver)?;
    if args.variants.is_empty() {
        return Err(Error::Config("no time-step variants given".into()));
    }
    let solutions: Vec<Solution> = args
        .variants
        .par_iter()
        .map(|&n| {
            let mut spec = cfg.mesh.clone();
            spec.n_time = n;
            let mesh = spec.build(cfg.params.maturity)?;
            solve(&cfg.params, &mesh, OptionStyle::American, &solver)
        })
        .collect::<Result<_>>()?;
    let prices: Vec<Vec<f64>> = solutions
        .iter()
        .map(|sol| {
            TABLE2_S
                .iter()
                .map(|&s| sol.price_at(s, args.v0))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let boundary: Vec<f64> = solutions
        .iter()
        .map(|sol| {
            sol.boundary_at(sol.lines.len() - 1, args.v0)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let mc = args.mc.to_config();
    let lsmc = if args.lsmc {
        Some(
            TABLE2_S
                .iter()
                .map(|&s| lsmc_price(&cfg.params, s, args.v0, &mc))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };

    let mut options = format!(
        "table2 {} variants={:?} v0={}",
        solver_options(&solver),
        args.variants,
        args.v0
    );
    if args.lsmc {
        options.push_str(&format!(" lsmc {mc:?}"));
    }
    let hash = config_hash(&cfg, &options);
    let mut header: Vec<String> = vec!["s".into()];
    header.extend(args.variants.iter().map(|n| format!("mol_n{n}")));
    if args.lsmc {
        header.extend(["lsmc", "lsmc_ci_low", "lsmc_ci_high"].map(String::from));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvSink::create(
        out,
        "table2.csv",
        &hash,
        &[
            ("interpolation", INTERPOLATION.into()),
            ("v0", num(args.v0)),
        ],
        &header_refs,
    )?;
    print!("{:>8}", "s");
    for n in &args.variants {
        print!(" {:>12}", format!("N={n}"));
    }
    if args.lsmc {
        print!(" {:>12} {:>25}", "LSMC", "95% CI");
    }
    println!();
    for (i, &s) in TABLE2_S.iter().enumerate() {
        let mut rec = vec![num(s)];
        print!("{s:>8.3}");
        for p in &prices {
            print!(" {:>12.6}", p[i]);
            rec.push(num(p[i]));
        }
        if let Some(est) = &lsmc {
            let e = &est[i];
            print!(
                " {:>12.6} [{:>10.6}, {:>10.6}]",
                e.price, e.ci_low, e.ci_high
            );
            rec.extend([num(e.price), num(e.ci_low), num(e.ci_high)]);
        }
        println!();
        csv.row(rec)?;
    }
    let mut rec = vec!["A(0,v0)".to_string()];
    print!("{:>8}", "A(0,v0)");
    for a in &boundary {
        print!(" {a:>12.4}");
        rec.push(num(*a));
    }
    if args.lsmc {
        rec.extend([String::new(), String::new(), String::new()]);
    }
    println!();
    csv.row(rec)?;
    csv.finish()?;
    let wall: Vec<f64> = solutions.iter().map(|s| s.report.wall_time_s).collect();
    print!("{:>8}", "time(s)");
    for t in &wall {
        print!(" {t:>12.2}");
    }
    println!();
    write_json(
        out,
        "table2.json",
        &Table2Summary {
            variants: args.variants.clone(),
            s: TABLE2_S.to_vec(),
            prices,
            boundary_at_v0: boundary,
            wall_time_s: wall,
            lsmc,
            interpolation: INTERPOLATION,
            version: VERSION,
        },
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parsing() {
        let o: OverrideArg = "no jumps:lambda1=0, lambda2=0".parse().unwrap();
        assert_eq!(o.0.label, "no jumps");
        assert_eq!(
            o.0.changes,
            vec![("lambda1".into(), 0.0), ("lambda2".into(), 0.0)]
        );
        assert!("nolabel".parse::<OverrideArg>().is_err());
        assert!("x:q1".parse::<OverrideArg>().is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["exmol", "validate", "--bogus"]), 1);
        assert_eq!(run(["exmol", "no-such-command"]), 1);
        assert_eq!(run(["exmol", "--help"]), 0);
    }

    #[test]
    fn validate_reference_set() {
        assert_eq!(run(["exmol", "validate"]), 0);
    }
}
