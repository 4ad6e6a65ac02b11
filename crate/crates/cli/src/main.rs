use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hjb_vem::analysis::{convergence_study, error_norms};
use hjb_vem::assembly::{Discretization, FreeDof, LoadRule};
use hjb_vem::element::Family;
use hjb_vem::mesh::{generate_structured, import_mesh, write_mesh, MeshKind, PolygonalMesh, Rectangle};
use hjb_vem::newton::{solve_hjb, StopMetric};
use hjb_vem::problem::{cordes_check, cordes_samples, make_builtin, HJBProblem};

mod config;

use config::{DiscretizationSection, NewtonSection, OutputSection, ProblemSection, RunConfig};

/// Thread count for the assembly pool; unset means one thread per core.
const THREADS_VAR: &str = "VEMHJB_THREADS";

type BoxError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "hjb-vem", version, about = "Virtual element solver for HJB and Cordes-type equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once on a single mesh and write the free DOFs.
    Run(SolveArgs),
    /// Solve on every refinement level and write the error table as CSV.
    Convergence(SolveArgs),
    /// Sample the Cordes condition of a built-in problem.
    CheckCordes {
        #[arg(long)]
        problem: String,
        /// Grid intervals per side of the sampling grid.
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        n_theta: Option<usize>,
        #[arg(long)]
        n_phi: Option<usize>,
    },
    /// Generate a structured mesh in the text mesh format.
    MakeMesh {
        #[arg(long, default_value = "square")]
        kind: MeshKind,
        #[arg(long)]
        n: usize,
        /// Domain as x0,y0,x1,y1.
        #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.0, 0.0, 1.0, 1.0])]
        domain: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolveArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n_theta: Option<usize>,
    #[arg(long)]
    n_phi: Option<usize>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    mesh: Option<MeshKind>,
    /// Mesh file for `run`; replaces the structured mesh.
    #[arg(long)]
    mesh_file: Option<PathBuf>,
    /// Subdivisions per side, comma separated. `run` uses the first.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    load_rule: Option<LoadRule>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    itermax: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<StopMetric>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Record wall times in the CSV (breaks byte-identical output).
    #[arg(long)]
    timing: bool,
}

fn parse_metric(s: &str) -> Result<StopMetric, String> {
    match s {
        "hessian-increment" => Ok(StopMetric::HessianIncrement),
        "b-norm" => Ok(StopMetric::BNorm),
        other => Err(format!("unknown stopping metric `{other}` (expected hessian-increment or b-norm)")),
    }
}

impl SolveArgs {
    fn resolve(self) -> Result<RunConfig, BoxError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.merge(RunConfig {
            problem: ProblemSection {
                name: self.problem,
                lambda: self.lambda,
                n_theta: self.n_theta,
                n_phi: self.n_phi,
                g_reference: None,
            },
            discretization: DiscretizationSection {
                family: self.family,
                mesh: self.mesh,
                mesh_file: self.mesh_file,
                levels: self.levels,
                quad_order: self.quad_order,
                load_rule: self.load_rule,
                seed: self.seed,
            },
            newton: NewtonSection {
                tol: self.tol,
                itermax: self.itermax,
                metric: self.metric,
                theta: self.theta,
            },
            output: OutputSection {
                path: self.output,
                timing: self.timing.then_some(true),
            },
        });
        Ok(cfg)
    }
}

fn build_problem(cfg: &RunConfig) -> Result<HJBProblem, BoxError> {
    let problem = make_builtin(cfg.problem_name()?, &cfg.builtin_options()?)?;
    Ok(match cfg.problem.lambda {
        Some(lambda) => problem.with_lambda(lambda)?,
        None => problem,
    })
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, BoxError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| format!("cannot create {}: {e}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cfg: RunConfig) -> Result<(), BoxError> {
    let problem = build_problem(&cfg)?;
    let n = cfg.levels()?[0];
    let mesh: PolygonalMesh = match &cfg.discretization.mesh_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            import_mesh(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => generate_structured(cfg.mesh_kind(), n, problem.domain, cfg.discretization.seed.unwrap_or(0))?,
    };
    let study = cfg.study()?;
    let start = Instant::now();
    let disc = Discretization::new(mesh, cfg.family(), problem.lambda, study.quad_order)?.with_load_rule(study.load_rule);
    let result = solve_hjb(&disc, &problem, &study.newton)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut out = csv::Writer::from_writer(open_output(cfg.output.path.as_deref())?);
    out.write_record(["index", "kind", "entity", "dir_x", "dir_y", "value"])?;
    for (i, (dof, value)) in disc.dofmap.free_dofs().iter().zip(&result.solution).enumerate() {
        let (kind, entity, dir) = match *dof {
            FreeDof::VertexValue(v) => ("vertex_value", v, None),
            FreeDof::VertexGradient { vertex, dir } => ("vertex_gradient", vertex, Some(dir)),
            FreeDof::EdgeValue(e) => ("edge_mean", e, None),
            FreeDof::EdgeNormal(e) => ("edge_normal", e, None),
        };
        let (dx, dy) = dir.map(|d| (format!("{:.17e}", d.x), format!("{:.17e}", d.y))).unwrap_or_default();
        out.write_record([i.to_string(), kind.into(), entity.to_string(), dx, dy, format!("{value:.17e}")])?;
    }
    out.flush()?;

    let trace = &result.trace;
    eprintln!(
        "{} {} on {} cells: {} free DOFs, {} Newton iterations, final increment {:.3e}{}",
        problem.name,
        disc.family,
        disc.mesh.num_cells(),
        disc.num_free(),
        trace.iterations(),
        trace.final_err().unwrap_or(f64::NAN),
        if trace.converged { "" } else { " (not converged)" }
    );
    if let Some(exact) = problem.exact() {
        let e = error_norms(&disc, &result.solution, exact);
        eprintln!("E2 {:.6e}  E1 {:.6e}  E0 {:.6e}", e.e2, e.e1, e.e0);
    }
    if cfg.timing() {
        eprintln!("time {seconds:.3} s");
    }
    if trace.converged {
        Ok(())
    } else {
        Err(format!("Newton did not reach tol {:.1e} in {} iterations", study.newton.tol, study.newton.itermax).into())
    }
}

fn convergence(cfg: RunConfig) -> Result<(), BoxError> {
    if cfg.discretization.mesh_file.is_some() {
        return Err("convergence needs a structured mesh family, not a mesh file".into());
    }
    let problem = build_problem(&cfg)?;
    let report = convergence_study(&problem, cfg.family(), cfg.mesh_kind(), &cfg.levels()?, &cfg.study()?)?;
    let mut out = open_output(cfg.output.path.as_deref())?;
    out.write_all(report.to_csv(cfg.timing()).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool, BoxError> {
    match cli.command {
        Command::Run(args) => run(args.resolve()?)?,
        Command::Convergence(args) => convergence(args.resolve()?)?,
        Command::CheckCordes {
            problem,
            samples,
            lambda,
            n_theta,
            n_phi,
        } => {
            let cfg = RunConfig {
                problem: ProblemSection {
                    name: Some(problem),
                    lambda,
                    n_theta,
                    n_phi,
                    g_reference: None,
                },
                ..Default::default()
            };
            let p = build_problem(&cfg)?;
            let report = cordes_check(&p, &cordes_samples(&p.domain, samples));
            println!("problem:          {}", p.name);
            println!("{report}");
            return Ok(report.pass);
        }
        Command::MakeMesh {
            kind,
            n,
            domain,
            seed,
            output,
        } => {
            let domain = Rectangle::new(domain[0], domain[1], domain[2], domain[3]);
            let mesh = generate_structured(kind, n, domain, seed)?;
            let mut out = open_output(output.as_deref())?;
            write_mesh(&mesh, &mut out)?;
            out.flush()?;
        }
    }
    Ok(true)
}

fn init_threads() -> Result<(), BoxError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_VAR} must be a non-negative integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| execute(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
