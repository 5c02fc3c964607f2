//! Command-line driver: benchmark runs, the identity battery, and temporal
//! self-convergence sweeps.
//!
//! Exit status: 0 on success, 2 when a run tripped the divergence guard (the
//! CSV is still written), 1 on usage or runtime errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::bench::identities::{verify_identities, DEFAULT_TRIALS};
use crate::bench::problems::{Gresho, Lattice};
use crate::bench::{svg, vtk};
use crate::diagnostics::{csv_row, DiagnosticsRecord, CSV_HEADER};
use crate::error::{Error, Result};
use crate::fem::space::TaylorHoodSpace;
use crate::forms::Formulation;
use crate::mesh::build_uniform_tri_mesh;
use crate::timeloop::{
    run_simulation, FlowProblem, InitialCondition, NonlinearMode, RunSink, SchemeConfig,
    StepReport, TimeState,
};

#[derive(Parser, Debug)]
#[command(
    name = "emac",
    about = "2D incompressible Navier-Stokes conservation benchmarks",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Standing vortex on (-1/2,1/2)^2: inviscid, conservation-focused.
    Gresho(RunArgs),
    /// Decaying vortex lattice on (0,1)^2 with exact-trace boundary data.
    Lattice(RunArgs),
    /// Randomized verification of the discrete vector identities.
    Identities(IdentityArgs),
    /// Temporal self-convergence of the lattice run against a fine-step
    /// reference.
    Convergence(ConvergenceArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Cells per direction (default 48 for gresho, 32 for lattice).
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long = "t-end", default_value_t = 10.0)]
    t_end: f64,
    /// Nonlinearity: emac | conv | skew | cons | rot.
    #[arg(long, default_value = "emac")]
    form: String,
    /// Nonlinear resolution: full | newton1 | newton2 | newton3 | skewlin.
    #[arg(long, default_value = "full")]
    mode: String,
    /// H1 step-norm threshold of the full Newton iteration.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Kinematic viscosity (default 0 for gresho, 1e-7 for lattice).
    #[arg(long)]
    nu: Option<f64>,
    /// Grad-div stabilization coefficient.
    #[arg(long = "graddiv", default_value_t = 0.0)]
    graddiv: f64,
    /// Initial condition handling: project | interpolate.
    #[arg(long, default_value = "project")]
    ic: String,
    /// Diagnostics CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG chart of the conserved quantities.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Dump velocity/pressure VTK files every this many steps.
    #[arg(long = "vtk-every")]
    vtk_every: Option<usize>,
}

#[derive(Args, Debug)]
struct IdentityArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    nx: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[arg(long, default_value_t = 32)]
    nx: usize,
    /// Comma-separated step sizes to test.
    #[arg(long, default_value = "0.01,0.005,0.0025")]
    dts: String,
    /// Reference step size.
    #[arg(long = "ref-dt", default_value_t = 0.00125)]
    ref_dt: f64,
    #[arg(long = "t-end", default_value_t = 0.5)]
    t_end: f64,
    #[arg(long, default_value = "emac")]
    form: String,
    #[arg(long, default_value = "full")]
    mode: String,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = Lattice::DEFAULT_NU)]
    nu: f64,
    #[arg(long = "graddiv", default_value_t = 0.0)]
    graddiv: f64,
    /// Results CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Parses and runs; returns the process exit status.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version are not errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let result = match cli.command {
        Command::Gresho(args) => run_benchmark(&Gresho, Gresho::DOMAIN, Gresho::DEFAULT_NX, Gresho::DEFAULT_NU, args),
        Command::Lattice(args) => {
            let nu = args.nu.unwrap_or(Lattice::DEFAULT_NU);
            run_benchmark(&Lattice { nu }, Lattice::DOMAIN, Lattice::DEFAULT_NX, nu, args)
        }
        Command::Identities(args) => run_identities(args),
        Command::Convergence(args) => run_convergence(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn parse_mode(mode: &str, tol: f64) -> Result<NonlinearMode> {
    match mode {
        "full" => Ok(NonlinearMode::FullNewton { tol, max_iter: 25 }),
        "newton1" => Ok(NonlinearMode::NewtonK { k: 1 }),
        "newton2" => Ok(NonlinearMode::NewtonK { k: 2 }),
        "newton3" => Ok(NonlinearMode::NewtonK { k: 3 }),
        "skewlin" => Ok(NonlinearMode::SkewLinearized),
        other => Err(Error::invalid(format!(
            "unknown mode '{other}' (expected full|newton1|newton2|newton3|skewlin)"
        ))),
    }
}

fn parse_ic(ic: &str) -> Result<InitialCondition> {
    match ic {
        "project" => Ok(InitialCondition::Project),
        "interpolate" => Ok(InitialCondition::Interpolate),
        other => Err(Error::invalid(format!(
            "unknown initial-condition handling '{other}' (expected project|interpolate)"
        ))),
    }
}

/// Streams records to the CSV file as they are produced, so an aborted run
/// leaves the partial series on disk.
struct CsvSink {
    file: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
    records: Vec<DiagnosticsRecord>,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut sink = CsvSink {
            file: std::io::BufWriter::new(file),
            path: path.to_path_buf(),
            records: Vec::new(),
        };
        sink.write_line(CSV_HEADER)?;
        Ok(sink)
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.write_all(b"\n"))
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

impl RunSink for CsvSink {
    fn on_record(
        &mut self,
        record: &DiagnosticsRecord,
        _state: &TimeState,
        _report: Option<&StepReport>,
    ) -> Result<()> {
        let row = csv_row(record);
        self.records.push(record.clone());
        self.write_line(&row)
    }
}

struct VtkSink {
    every: usize,
    prefix: PathBuf,
}

impl RunSink for VtkSink {
    fn on_record(
        &mut self,
        record: &DiagnosticsRecord,
        state: &TimeState,
        _report: Option<&StepReport>,
    ) -> Result<()> {
        if record.step % self.every == 0 {
            let path = self
                .prefix
                .with_file_name(format!(
                    "{}_{:06}.vtk",
                    self.prefix.file_stem().unwrap_or_default().to_string_lossy(),
                    record.step
                ));
            vtk::write_fields(&state.u_curr, &state.p_curr, path)?;
        }
        Ok(())
    }
}

struct MultiSink<'a>(Vec<&'a mut dyn RunSink>);

impl RunSink for MultiSink<'_> {
    fn on_record(
        &mut self,
        record: &DiagnosticsRecord,
        state: &TimeState,
        report: Option<&StepReport>,
    ) -> Result<()> {
        for s in &mut self.0 {
            s.on_record(record, state, report)?;
        }
        Ok(())
    }
}

fn run_benchmark(
    problem: &dyn FlowProblem,
    domain: crate::mesh::Rect,
    default_nx: usize,
    default_nu: f64,
    args: RunArgs,
) -> Result<i32> {
    let nx = args.nx.unwrap_or(default_nx);
    let config = SchemeConfig {
        form: Formulation::from_str(&args.form)?,
        mode: parse_mode(&args.mode, args.tol)?,
        dt: args.dt,
        t_end: args.t_end,
        nu: args.nu.unwrap_or(default_nu),
        gamma: args.graddiv,
    };
    config.validate()?;
    let ic = parse_ic(&args.ic)?;

    let mesh = Arc::new(build_uniform_tri_mesh(nx, nx, domain)?);
    let space = Arc::new(TaylorHoodSpace::new(mesh));

    let mut csv = CsvSink::create(&args.out)?;
    let outcome = if let Some(every) = args.vtk_every {
        if every == 0 {
            return Err(Error::invalid("--vtk-every must be positive"));
        }
        let mut vtk_sink = VtkSink {
            every,
            prefix: args.out.clone(),
        };
        let mut multi = MultiSink(vec![&mut csv, &mut vtk_sink]);
        run_simulation(space, config, problem, ic, &mut multi)?
    } else {
        run_simulation(space, config, problem, ic, &mut csv)?
    };

    if let Some(svg_path) = &args.svg {
        let recs = &outcome.records;
        let series = |label: &str, f: fn(&DiagnosticsRecord) -> f64| svg::Series {
            label: label.to_string(),
            points: recs.iter().map(|r| (r.t, f(r))).collect(),
        };
        svg::plot_series(
            "conserved quantities",
            "t",
            "value",
            &[
                series("energy", |r| r.energy),
                series("momentum_x", |r| r.momentum_x),
                series("momentum_y", |r| r.momentum_y),
                series("angular momentum", |r| r.ang_momentum),
            ],
            svg_path,
        )?;
    }

    Ok(if outcome.diverged { 2 } else { 0 })
}

fn run_identities(args: IdentityArgs) -> Result<i32> {
    let report = verify_identities(args.seed, args.nx, args.trials)?;
    let mut out = String::from("identity,max_rel_violation,tolerance,pass\n");
    for c in &report.checks {
        use std::fmt::Write as _;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{}",
            c.name,
            c.max_rel_violation,
            c.tolerance,
            c.passed()
        );
    }
    std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    for c in &report.checks {
        println!(
            "{:35} {:10.3e}  {}",
            c.name,
            c.max_rel_violation,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn run_convergence(args: ConvergenceArgs) -> Result<i32> {
    let form = Formulation::from_str(&args.form)?;
    let dts: Vec<f64> = args
        .dts
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad step size '{s}': {e}")))
        })
        .collect::<Result<_>>()?;
    if dts.is_empty() {
        return Err(Error::invalid("need at least one step size"));
    }

    let problem = Lattice { nu: args.nu };
    let mesh = Arc::new(build_uniform_tri_mesh(args.nx, args.nx, Lattice::DOMAIN)?);
    let space = Arc::new(TaylorHoodSpace::new(mesh));

    let run_at = |dt: f64| -> Result<crate::fem::space::FEFunction> {
        let config = SchemeConfig {
            form,
            mode: parse_mode(&args.mode, args.tol)?,
            dt,
            t_end: args.t_end,
            nu: args.nu,
            gamma: args.graddiv,
        };
        config.validate()?;
        let out = run_simulation(
            Arc::clone(&space),
            config,
            &problem,
            InitialCondition::Project,
            &mut crate::timeloop::NullSink,
        )?;
        if out.diverged {
            return Err(Error::invalid(format!("run at dt {dt} diverged")));
        }
        Ok(out.final_velocity)
    };

    let reference = run_at(args.ref_dt)?;
    let mass = crate::fem::assemble::assemble_mass(&space);
    let mut rows = Vec::new();
    for &dt in &dts {
        let u = run_at(dt)?;
        let d: Vec<f64> = u
            .coeffs()
            .iter()
            .zip(reference.coeffs())
            .map(|(a, b)| a - b)
            .collect();
        let err = mass.bilinear(&d, &d).max(0.0).sqrt();
        rows.push((dt, err));
    }

    let mut out = String::from("dt,l2_diff_vs_ref,order\n");
    for (i, &(dt, err)) in rows.iter().enumerate() {
        use std::fmt::Write as _;
        if i == 0 {
            let _ = writeln!(out, "{dt:e},{err:e},");
        } else {
            let (dt0, e0) = rows[i - 1];
            let order = (e0 / err).ln() / (dt0 / dt).ln();
            let _ = writeln!(out, "{dt:e},{err:e},{order:e}");
        }
    }
    std::fs::write(&args.out, &out).map_err(|e| Error::io(&args.out, e))?;
    print!("{out}");
    Ok(0)
}
