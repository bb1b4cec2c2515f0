use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dampde::fem::FeContext;
use dampde::forward::{SpaceTimeData, SpaceTimeSolver};
use dampde::harness::{
    format_sig6, measure_error, report_csv, report_svg, rows_csv, run_study, StudyMode, StudyPlan,
    StudyReport, StudyRow,
};
use dampde::mesh::SpaceKind;
use dampde::optimizer::ControlProblem;
use dampde::time::SpaceTimeField;
use dampde::verify::run_property_suite;

mod config;
mod expr;

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "dampde",
    version,
    about = "Space-time solver, convergence studies and optimal control for a linear damage model"
)]
struct Cli {
    /// Output directory
    #[arg(long, global = true, env = "DAMPDE_OUT", default_value = "results")]
    out: PathBuf,
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write log-log convergence plots
    #[arg(long, global = true)]
    svg: bool,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Fill the `seconds` column with wall-clock times
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Refine {
    Time,
    Space,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state equation once and report errors
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "m", alias = "M")]
        m: Option<usize>,
        /// Write per-interval nodal values of phi and d
        #[arg(long)]
        dump_fields: bool,
    },
    /// Fixed mesh, refined time steps
    ConvergenceTime {
        #[arg(long)]
        n: Option<usize>,
        #[arg(
            long = "m-list",
            alias = "M-list",
            value_delimiter = ',',
            required = true
        )]
        m_list: Vec<usize>,
    },
    /// Fixed time steps, refined mesh
    ConvergenceSpace {
        #[arg(long = "m", alias = "M")]
        m: Option<usize>,
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
    },
    /// Solve the optimal control problem once
    Optimize {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "m", alias = "M")]
        m: Option<usize>,
        /// Write per-interval nodal values of the control and states
        #[arg(long)]
        dump_fields: bool,
    },
    /// Convergence study for the optimal control problem
    OptimizeConvergence {
        #[arg(long, value_enum)]
        refine: Refine,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long = "m", alias = "M")]
        m: Option<usize>,
        #[arg(long = "m-list", alias = "M-list", value_delimiter = ',')]
        m_list: Vec<usize>,
        #[arg(long = "n-list", value_delimiter = ',')]
        n_list: Vec<usize>,
    },
    /// Run the invariant suites
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
    Checks(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<dampde::Error> for Failure {
    fn from(e: dampde::Error) -> Self {
        match e {
            e if e.is_numerical() => Failure::Numerical(e.to_string()),
            dampde::Error::Io(io) => Failure::Io(io.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Output {
    dir: PathBuf,
    svg: bool,
    timings: bool,
}

impl Output {
    fn write(&self, name: &str, text: &str) -> Outcome {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(name);
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn check_resolution(key: &str, v: usize) -> Result<usize, Failure> {
    if v == 0 {
        Err(Failure::Config(format!("{key}: must be at least 1")))
    } else {
        Ok(v)
    }
}

fn fields_csv(ctx: &FeContext, field: &SpaceTimeField) -> String {
    let mut out = String::from("m,t,node,x,y,value\n");
    for m in 1..=field.intervals() {
        let t = field.grid.interval(m).1;
        let nodal = match field.kind {
            SpaceKind::FreeP1 => field.on(m).to_vec(),
            SpaceKind::DirichletP1 => ctx.embed(field.on(m)),
        };
        for (k, (p, v)) in ctx.mesh().nodes().iter().zip(&nodal).enumerate() {
            let _ = writeln!(
                out,
                "{m},{},{k},{},{},{:e}",
                format_sig6(t),
                format_sig6(p[0]),
                format_sig6(p[1]),
                v
            );
        }
    }
    out
}

fn base_row(solver: &SpaceTimeSolver) -> StudyRow {
    StudyRow {
        n: solver.context().n(),
        m: solver.grid().len(),
        tau: solver.grid().max_tau(),
        h_over_sqrt2: solver.context().mesh().h_over_sqrt2(),
        ..StudyRow::default()
    }
}

fn simulate(cfg: &RunConfig, n: usize, m: usize, dump: bool, out: &Output) -> Outcome {
    let data = cfg.case_data()?;
    let start = std::time::Instant::now();
    let solver = cfg.build_solver(n, m)?;
    let sol = solver.solve_state(
        &SpaceTimeData::Function(data.l.clone()),
        &data.d0,
        &SpaceTimeData::Zero,
    )?;
    let stability = solver.stability_report(&sol)?;
    let mut row = base_row(&solver);
    row.err_phi = data
        .exact_phi
        .as_ref()
        .map(|f| measure_error(&solver, &sol.phi, f));
    row.err_d = data
        .exact_d
        .as_ref()
        .map(|f| measure_error(&solver, &sol.d, f));
    row.seconds = start.elapsed().as_secs_f64();
    out.write("simulate.csv", &rows_csv("simulate", &[row], out.timings))?;
    println!(
        "max |d_m| = {}, min stability slack = {:.3e}",
        format_sig6(stability.max_d_norm),
        stability.min_slack()
    );
    if dump {
        out.write("fields_phi.csv", &fields_csv(solver.context(), &sol.phi))?;
        out.write("fields_d.csv", &fields_csv(solver.context(), &sol.d))?;
    }
    Ok(())
}

fn optimize(cfg: &RunConfig, n: usize, m: usize, dump: bool, out: &Output) -> Outcome {
    let data = cfg.case_data()?;
    let start = std::time::Instant::now();
    let solver = cfg.build_solver(n, m)?;
    let problem = ControlProblem::new(solver.clone(), data.control)?;
    let sol = problem.solve(&cfg.optimizer())?;
    let mut row = base_row(&solver);
    if let Some(l) = &data.exact_control {
        row.err_l = Some(measure_error(&solver, &sol.control, l));
        row.err_phi = data
            .exact_phi
            .as_ref()
            .map(|f| measure_error(&solver, &sol.state.phi, f));
        row.err_d = data
            .exact_d
            .as_ref()
            .map(|f| measure_error(&solver, &sol.state.d, f));
    }
    row.r_vd = Some(sol.history.r_vd);
    row.cg_iters = Some(sol.history.iterations);
    row.seconds = start.elapsed().as_secs_f64();
    out.write("optimize.csv", &rows_csv("optimize", &[row], out.timings))?;
    println!(
        "J = {}, CG iterations = {}, |grad j(0)| = {:.3e}, r_vd = {:.3e}",
        format_sig6(*sol.history.objective.last().unwrap_or(&0.0)),
        sol.history.iterations,
        sol.history.initial_gradient_norm,
        sol.history.r_vd
    );
    if dump {
        out.write(
            "fields_control.csv",
            &fields_csv(solver.context(), &sol.control),
        )?;
        out.write(
            "fields_phi.csv",
            &fields_csv(solver.context(), &sol.state.phi),
        )?;
        out.write("fields_d.csv", &fields_csv(solver.context(), &sol.state.d))?;
    }
    Ok(())
}

fn study(
    cfg: &RunConfig,
    mode: StudyMode,
    fixed: usize,
    sweep: Vec<usize>,
    name: &str,
    out: &Output,
) -> Outcome {
    let case = cfg.manufactured().ok_or_else(|| {
        Failure::Config("case: convergence studies need case \"manufactured-linear\"".into())
    })?;
    if !cfg.ocp.use_ld && mode.is_ocp() {
        return Err(Failure::Config(
            "ocp.use_ld: convergence studies need the control shift".into(),
        ));
    }
    let plan = StudyPlan {
        mode,
        fixed,
        sweep,
        case,
        settings: cfg.settings(),
        optimizer: cfg.optimizer(),
    };
    plan.validate()
        .map_err(|e| Failure::Config(format!("sweep: {e}")))?;
    let report: StudyReport = run_study(&plan)?;
    let csv = report_csv(&report, out.timings);
    out.write(&format!("{name}.csv"), &csv)?;
    print!("{csv}");
    if out.svg {
        match report_svg(&report) {
            Ok(svg) => out.write(&format!("{name}.svg"), &svg)?,
            Err(e) => eprintln!("no plot: {e}"),
        }
    }
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| {
            r.failure
                .as_ref()
                .map(|f| format!("n={} M={}: {f}", r.n, r.m))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(failed.join("; ")))
    }
}

fn verify(seed: u64, out: &Output) -> Outcome {
    let checks = run_property_suite(seed);
    let mut csv = String::from("check,passed,detail\n");
    for c in &checks {
        println!(
            "{}  {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        let _ = writeln!(
            csv,
            "\"{}\",{},\"{}\"",
            c.name,
            c.passed,
            c.detail.replace('"', "'")
        );
    }
    out.write("verify.csv", &csv)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Checks(format!(
            "{failed} of {} checks failed",
            checks.len()
        )))
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Config("--threads: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let out = Output {
        dir: cli.out.clone(),
        svg: cli.svg,
        timings: cli.timings,
    };
    let cfg = load_config(&cli.config)?;
    let disc = &cfg.discretization;
    match cli.command {
        Command::Simulate { n, m, dump_fields } => simulate(
            &cfg,
            check_resolution("--n", n.unwrap_or(disc.n))?,
            check_resolution("--m", m.unwrap_or(disc.m))?,
            dump_fields,
            &out,
        ),
        Command::Optimize { n, m, dump_fields } => optimize(
            &cfg,
            check_resolution("--n", n.unwrap_or(disc.n))?,
            check_resolution("--m", m.unwrap_or(disc.m))?,
            dump_fields,
            &out,
        ),
        Command::ConvergenceTime { n, m_list } => {
            let n = check_resolution("--n", n.unwrap_or(disc.n))?;
            study(
                &cfg,
                StudyMode::TimeRefine,
                n,
                m_list,
                "convergence-time",
                &out,
            )
        }
        Command::ConvergenceSpace { m, n_list } => {
            let m = check_resolution("--m", m.unwrap_or(disc.m))?;
            study(
                &cfg,
                StudyMode::SpaceRefine,
                m,
                n_list,
                "convergence-space",
                &out,
            )
        }
        Command::OptimizeConvergence {
            refine,
            n,
            m,
            m_list,
            n_list,
        } => match refine {
            Refine::Time => {
                if m_list.is_empty() {
                    return Err(Failure::Config(
                        "--m-list: required with --refine time".into(),
                    ));
                }
                let n = check_resolution("--n", n.unwrap_or(disc.n))?;
                study(
                    &cfg,
                    StudyMode::OcpTimeRefine,
                    n,
                    m_list,
                    "optimize-convergence-time",
                    &out,
                )
            }
            Refine::Space => {
                if n_list.is_empty() {
                    return Err(Failure::Config(
                        "--n-list: required with --refine space".into(),
                    ));
                }
                let m = check_resolution("--m", m.unwrap_or(disc.m))?;
                study(
                    &cfg,
                    StudyMode::OcpSpaceRefine,
                    m,
                    n_list,
                    "optimize-convergence-space",
                    &out,
                )
            }
        },
        Command::Verify { seed } => verify(seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Numerical(m) => ("numerical failure", m),
                Failure::Io(m) => ("i/o error", m),
                Failure::Checks(m) => ("verification failed", m),
            };
            eprintln!("dampde: {kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}
