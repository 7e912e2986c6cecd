use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fpt_joint::boundary::{Boundary, Configuration, StripProblem};
use fpt_joint::config::{Method, Output, RunConfig};
use fpt_joint::joint::{assemble_case_i, assemble_case_ii, copula_density, marginal_cdf, JointDensitySurface, MarginalTable};
use fpt_joint::laplace::{invert_sub_densities, LaplaceEvaluator};
use fpt_joint::mc::{self, Binning, FirstHit, HittingTime};
use fpt_joint::output::{self, SurfaceWindow};
use fpt_joint::volterra::{convergence_study, solve_two_boundary_with, Side, SubDensityPair, TimeGrid};
use fpt_joint::{FptError, Process};

/// First-passage times through two boundaries.
#[derive(Parser)]
#[command(name = "fpt-joint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sub-densities of the first exit through each boundary.
    Solve(Common),
    /// Joint density of both hitting times.
    Joint(Common),
    /// Copula density and marginal quantile tables.
    Copula(Common),
    /// Errors and fitted order over a list of step sizes.
    Converge(Common),
    /// Monte Carlo hitting times and comparison with the computed densities.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<FptError> for Failure {
    fn from(e: FptError) -> Self {
        let code = match e {
            FptError::Config(_) | FptError::Io(_) => 2,
            FptError::StepSize(_) | FptError::NonFinite(_) | FptError::Conditioning(_) => 4,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: format!("io: {e}") }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(c) => setup(c).and_then(|cfg| solve(&cfg, &c.out_dir)),
        Command::Joint(c) => setup(c).and_then(|cfg| joint(&cfg, &c.out_dir)),
        Command::Copula(c) => setup(c).and_then(|cfg| copula(&cfg, &c.out_dir)),
        Command::Converge(c) => setup(c).and_then(|cfg| converge(&cfg, &c.out_dir)),
        Command::Simulate { common, seed } => setup(common).and_then(|cfg| simulate(&cfg, &common.out_dir, *seed, common.threads.unwrap_or(0))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ERROR:{}:{}", f.code, f.message);
            ExitCode::from(f.code)
        }
    }
}

fn setup(c: &Common) -> Result<RunConfig, Failure> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure { code: 3, message: format!("thread pool: {e}") })?;
    }
    let cfg = RunConfig::load(&c.config)?;
    cfg.validate()?;
    std::fs::create_dir_all(&c.out_dir)?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn side_of(process: &Process, bd: &Boundary) -> Result<Side, FptError> {
    Ok(if bd.eval(process.t0())? < process.x0() { Side::BelowStart } else { Side::AboveStart })
}

fn sub_densities(cfg: &RunConfig, sp: &StripProblem, grid: TimeGrid) -> Result<SubDensityPair, FptError> {
    match cfg.run.method {
        Method::Volterra => solve_two_boundary_with(sp, grid, &cfg.solver_options()),
        Method::ClosedForm => SubDensityPair::closed_form(sp, grid, &cfg.series_control()?),
        Method::Laplace => invert_sub_densities(&LaplaceEvaluator::for_problem(cfg.laplace.representation, sp)?, grid, &cfg.inversion),
    }
}

fn marginals(cfg: &RunConfig, sp: &StripProblem, grid: TimeGrid) -> Result<(MarginalTable, MarginalTable), FptError> {
    let p = &sp.process;
    let src = cfg.run.components;
    Ok((
        marginal_cdf(p, &sp.lower, side_of(p, &sp.lower)?, grid, src)?,
        marginal_cdf(p, &sp.upper, side_of(p, &sp.upper)?, grid, src)?,
    ))
}

fn surface(cfg: &RunConfig, sp: &StripProblem, grid: TimeGrid) -> Result<JointDensitySurface, FptError> {
    let src = cfg.run.components;
    match sp.configuration {
        Configuration::Inside => {
            let g = cfg.grid()?;
            let sub = sub_densities(cfg, sp, TimeGrid::new(g.t0, g.h, g.n.min(grid.n))?)?;
            assemble_case_ii(sp, &sub, grid, grid, src)
        }
        _ => assemble_case_i(sp, grid, grid, src),
    }
}

fn solve(cfg: &RunConfig, out: &Path) -> Outcome {
    let sp = cfg.strip()?;
    let grid = cfg.grid()?;
    let pair = sub_densities(cfg, &sp, grid)?;
    let file = create(out, "subdensities.csv")?;
    if cfg.run.method == Method::Laplace {
        output::write_sub_densities_laplace(file, &pair)?;
    } else {
        output::write_sub_densities(file, &pair)?;
    }
    let first = pair.lower[0].max(pair.upper[0]) * grid.h;
    if first > 0.01 {
        eprintln!("WARNING: first knot carries mass {first}; consider a smaller h");
    }
    let (lo, up) = (pair.mass_lower(), pair.mass_upper());
    println!("mass_lower={lo} mass_upper={up} mass_total={} clamped={}", lo + up, pair.clamp_count());
    if cfg.wants(Output::Marginals) {
        let (ml, mu) = marginals(cfg, &sp, grid)?;
        output::write_marginal(create(out, "marginal_lower.csv")?, &ml)?;
        output::write_marginal(create(out, "marginal_upper.csv")?, &mu)?;
    }
    Ok(())
}

fn window(cfg: &RunConfig, surf: &JointDensitySurface) -> SurfaceWindow {
    let spec = cfg.joint.unwrap_or_default();
    let end = spec.output_horizon.unwrap_or(cfg.grid.horizon);
    let knots = (((end - surf.t_grid.t0) / surf.h()).round().max(0.0) as usize).min(surf.t_grid.n);
    SurfaceWindow { t_knots: knots, s_knots: knots, stride: spec.stride.unwrap_or(1) }
}

fn joint(cfg: &RunConfig, out: &Path) -> Outcome {
    let sp = cfg.strip()?;
    let surf = surface(cfg, &sp, cfg.surface_grid()?)?;
    let win = window(cfg, &surf);
    output::write_joint_long(create(out, "joint_long.csv")?, &surf, win)?;
    output::write_joint_matrix(create(out, "joint_matrix.txt")?, &surf, win)?;
    println!("surface_mass={} knots={}", surf.mass(), surf.t_grid.n);
    Ok(())
}

fn copula(cfg: &RunConfig, out: &Path) -> Outcome {
    let sp = cfg.strip()?;
    let grid = cfg.surface_grid()?;
    let surf = surface(cfg, &sp, grid)?;
    let (ml, mu) = marginals(cfg, &sp, grid)?;
    let m = cfg.copula.unwrap_or_default().m;
    let cop = copula_density(&surf, &ml, &mu, m)?;
    if cop.uncovered() > 0 {
        eprintln!(
            "WARNING: uncovered quantile range: {} of {} cells (captured mass {} and {}); extend joint.horizon",
            cop.uncovered(),
            m * m,
            ml.captured(),
            mu.captured()
        );
    }
    output::write_copula(create(out, "copula.csv")?, &cop)?;
    output::write_quantiles(create(out, "quantiles.csv")?, &cop)?;
    output::write_marginal(create(out, "marginal_lower.csv")?, &ml)?;
    output::write_marginal(create(out, "marginal_upper.csv")?, &mu)?;
    println!("copula_m={m} uncovered={}", cop.uncovered());
    Ok(())
}

fn converge(cfg: &RunConfig, out: &Path) -> Outcome {
    let spec = cfg.converge.clone().ok_or_else(|| FptError::InvalidParameter("config has no [converge] section".into()))?;
    let sp = cfg.strip()?;
    let horizon = spec.horizon.unwrap_or(cfg.grid.horizon);
    let report = convergence_study(&sp, &spec.steps, cfg.reference()?, horizon)?;
    output::write_convergence(create(out, "convergence.csv")?, &report)?;
    for (k, h) in report.steps.iter().enumerate() {
        println!("h={h} max_error={} mse={}", report.max_errors[k], report.mse[k]);
    }
    match report.empirical_order {
        Some(p) => {
            println!("order={p}");
            if p < 0.8 {
                return Err(Failure { code: 5, message: format!("fitted order {p} is below 0.8") });
            }
        }
        None => println!("order=not-available"),
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path, seed: Option<u64>, workers: usize) -> Outcome {
    let sp = cfg.strip()?;
    let sim = cfg.sim_config(seed, workers)?;
    if let Some(w) = sim.dt_warning(&sp) {
        eprintln!("WARNING: {w}");
    }
    let samples = mc::simulate_pair(&sp, &sim)?;
    output::write_samples(create(out, "samples.csv")?, &samples)?;

    let mut lines = vec![
        ("p_lower_first".to_string(), mc::first_hit_fraction(&samples, FirstHit::Lower)),
        ("p_upper_first".to_string(), mc::first_hit_fraction(&samples, FirstHit::Upper)),
        ("p_censored".to_string(), mc::first_hit_fraction(&samples, FirstHit::None)),
    ];
    let t0 = sp.process.t0();
    let grid = TimeGrid::covering(t0, cfg.grid.h, sim.horizon)?;
    let width = cfg.mc.and_then(|m| m.bin_width).unwrap_or(10.0 * grid.h);
    let bins = Binning { t0, width, n_bins: ((sim.horizon - t0) / width + 1e-9).floor() as usize };

    if cfg.wants(Output::Subdensities) && sp.configuration == Configuration::Inside {
        let pair = sub_densities(cfg, &sp, grid)?;
        lines.push(("p_lower_first_computed".into(), pair.mass_lower()));
        lines.push(("p_upper_first_computed".into(), pair.mass_upper()));
        for (name, which) in [("lower", HittingTime::Lower), ("upper", HittingTime::Upper)] {
            let err = mc::sup_bin_error(&mc::sub_density_histogram(&samples, which, &bins), &mc::sub_density_bin_averages(&pair, which, &bins)?);
            lines.push((format!("sup_bin_error_g_{name}"), err));
        }
    }
    if cfg.wants(Output::Marginals) {
        let (ml, mu) = marginals(cfg, &sp, grid)?;
        for (name, which, table) in [("lower", HittingTime::Lower, &ml), ("upper", HittingTime::Upper, &mu)] {
            match mc::compare_marginal(&samples, which, table) {
                Ok(ks) => lines.push((format!("ks_{name}"), ks)),
                Err(e) => eprintln!("WARNING: no KS for the {name} hitting time: {e}"),
            }
        }
    }
    if cfg.wants(Output::Joint) {
        let surf = surface(cfg, &sp, grid)?;
        let err = mc::sup_bin_error(&mc::joint_histogram(&samples, &bins), &mc::surface_bin_averages(&surf, &bins)?);
        lines.push(("sup_bin_error_joint".into(), err));
    }

    let mut text = String::from("metric,value\n");
    for (k, v) in &lines {
        println!("{k}={v}");
        text.push_str(&format!("{k},{v}\n"));
    }
    std::fs::write(out.join("comparison.csv"), text)?;
    Ok(())
}
