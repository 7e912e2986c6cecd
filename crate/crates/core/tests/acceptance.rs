//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::time::{Duration, Instant};

use fpt_joint::boundary::{Boundary, StripProblem};
use fpt_joint::closed_form::{bm_fpt_cdf, bm_fpt_pdf, SeriesControl};
use fpt_joint::joint::{assemble_case_i, assemble_case_ii, copula_density, marginal_cdf, ComponentSource, CopulaSurface, JointDensitySurface};
use fpt_joint::laplace::{invert_sub_densities, InversionControl, LaplaceEvaluator, Representation};
use fpt_joint::mc::{self, Binning, FirstHit, HittingTime, SimConfig};
use fpt_joint::process::{Process, ProcessKind};
use fpt_joint::volterra::{
    convergence_study, solve_two_boundary, solve_two_boundary_with, Reference, Side, SolverOptions, SubDensityPair, TimeGrid,
};

type Outcome = Result<Report, String>;

/// Measured quantities of one criterion, each against its bound.
#[derive(Default)]
struct Report {
    items: Vec<(String, bool)>,
}

impl Report {
    fn at_most(&mut self, what: &str, value: f64, bound: f64) {
        self.items.push((format!("{what}={value:.3e} (<= {bound:e})"), value <= bound));
    }

    fn at_least(&mut self, what: &str, value: f64, bound: f64) {
        self.items.push((format!("{what}={value:.4} (>= {bound})"), value >= bound));
    }

    fn within(&mut self, what: &str, value: f64, lo: f64, hi: f64) {
        self.items.push((format!("{what}={value:.6} (in [{lo}, {hi}])"), (lo..=hi).contains(&value)));
    }

    fn holds(&mut self, what: &str, ok: bool) {
        self.items.push((what.to_string(), ok));
    }

    fn time(&mut self, what: &str, took: Duration, limit_s: f64) {
        let s = took.as_secs_f64();
        self.items.push((format!("{what}={s:.2}s (<= {limit_s}s)"), s <= limit_s));
    }

    fn passed(&self) -> bool {
        self.items.iter().all(|(_, ok)| *ok)
    }
}

fn bm_strip(x0: f64, a: f64, b: f64) -> StripProblem {
    StripProblem::new(Process::standard_brownian(x0), Boundary::Constant(a), Boundary::Constant(b)).unwrap()
}

fn mse(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64
}

fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn e(err: impl std::fmt::Display) -> String {
    err.to_string()
}

/// Reference problem: standard BM in (−1, 2) from 0, 2000 knots at h = 0.01.
fn reference() -> (StripProblem, TimeGrid, SubDensityPair) {
    let sp = bm_strip(0.0, -1.0, 2.0);
    let grid = TimeGrid::new(0.0, 0.01, 2000).unwrap();
    let exact = SubDensityPair::closed_form(&sp, grid, &SeriesControl::fixed(1000)).unwrap();
    (sp, grid, exact)
}

fn mse_numerical() -> Outcome {
    let (sp, grid, exact) = reference();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(e)?;
    let opts = SolverOptions { parallel: false, ..SolverOptions::default() };
    let start = Instant::now();
    let pair = pool.install(|| solve_two_boundary_with(&sp, grid, &opts)).map_err(e)?;
    let took = start.elapsed();
    let mut r = Report::default();
    r.at_most("mse_lower", mse(&pair.lower, &exact.lower), 1e-5);
    r.at_most("mse_upper", mse(&pair.upper, &exact.upper), 1e-6);
    r.time("single_thread_runtime", took, 30.0);
    Ok(r)
}

fn mse_laplace() -> Outcome {
    let (sp, grid, exact) = reference();
    let mut r = Report::default();
    for (name, rep) in [
        ("ito_mckean", Representation::ItoMcKean),
        ("fortet", Representation::Fortet),
        ("density_ratio", Representation::DensityRatio { x1: 3.0, x2: -2.0 }),
    ] {
        let ev = LaplaceEvaluator::for_problem(rep, &sp).map_err(e)?;
        let start = Instant::now();
        let pair = invert_sub_densities(&ev, grid, &InversionControl::default()).map_err(e)?;
        let took = start.elapsed();
        r.at_most(&format!("{name}_mse_lower"), mse(&pair.lower, &exact.lower), 1e-12);
        r.at_most(&format!("{name}_mse_upper"), mse(&pair.upper, &exact.upper), 1e-12);
        r.time(&format!("{name}_runtime"), took, 5.0);
    }
    Ok(r)
}

fn convergence_order() -> Outcome {
    let sp = bm_strip(0.0, -1.0, 2.0);
    let report = convergence_study(&sp, &[0.04, 0.02, 0.01, 0.005], Reference::ClosedForm(SeriesControl::fixed(1000)), 20.0).map_err(e)?;
    let mut r = Report::default();
    let order = report.empirical_order.ok_or("no fitted order")?;
    r.at_least("fitted_order", order, 1.0);
    for (k, ratio) in report.ratios().iter().enumerate() {
        r.at_least(&format!("ratio_{k}"), *ratio, 1.8);
    }
    Ok(r)
}

fn laplace_equivalence() -> Outcome {
    let p = Process::standard_brownian(0.0);
    let reps = [
        Representation::ItoMcKean,
        Representation::Fortet,
        Representation::DensityRatio { x1: 3.0, x2: -2.0 },
    ];
    let evs: Vec<LaplaceEvaluator> = reps.iter().map(|&rep| LaplaceEvaluator::new(rep, &p, -1.0, 2.0)).collect::<Result<_, _>>().map_err(e)?;
    let probe = LaplaceEvaluator::new(Representation::DensityRatio { x1: 7.5, x2: -4.25 }, &p, -1.0, 2.0).map_err(e)?;
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs());
    let (mut pairwise, mut probes) = (0.0f64, 0.0f64);
    for k in 0..25 {
        let lambda = 10f64.powf(-3.0 + 6.0 * k as f64 / 24.0);
        let vals: Vec<(f64, f64)> = evs.iter().map(|ev| ev.eval(lambda)).collect::<Result<_, _>>().map_err(e)?;
        for i in 0..3 {
            for j in i + 1..3 {
                pairwise = pairwise.max(rel(vals[i].0, vals[j].0)).max(rel(vals[i].1, vals[j].1));
            }
        }
        let other = probe.eval(lambda).map_err(e)?;
        probes = probes.max(rel(vals[2].0, other.0)).max(rel(vals[2].1, other.1));
    }
    let mut r = Report::default();
    r.at_most("pairwise_relative", pairwise, 1e-10);
    r.at_most("probe_invariance", probes, 1e-10);
    Ok(r)
}

fn mass_and_split() -> Outcome {
    let mut r = Report::default();
    for (x0, a, b) in [(0.0, -1.0, 2.0), (0.0, -1.0, 1.0), (0.0, -1.0, 1.5), (0.3, 0.0, 1.0)] {
        let sp = bm_strip(x0, a, b);
        let grid = TimeGrid::covering(0.0, 0.01, 20.0 * (b - a) * (b - a)).map_err(e)?;
        let pair = solve_two_boundary(&sp, grid).map_err(e)?;
        let tag = format!("({a},{b};{x0})");
        r.within(&format!("mass{tag}"), pair.mass_lower() + pair.mass_upper(), 0.99, 1.01);
        let split = (b - x0) / (b - a);
        r.within(&format!("split{tag}"), pair.mass_lower(), split - 0.01, split + 0.01);
    }
    Ok(r)
}

/// Knots per axis for surfaces whose mass and marginals must be captured.
const LONG: f64 = 1e5;

fn long_case_ii(a: f64, b: f64, sub_with_solver: bool) -> Result<JointDensitySurface, String> {
    let sp = bm_strip(0.0, a, b);
    let sub_grid = TimeGrid::covering(0.0, 0.01, 20.0 * (b - a) * (b - a)).map_err(e)?;
    let sub = if sub_with_solver {
        solve_two_boundary(&sp, sub_grid)
    } else {
        SubDensityPair::closed_form(&sp, sub_grid, &SeriesControl::default())
    }
    .map_err(e)?;
    let g = TimeGrid::covering(0.0, 0.01, LONG).map_err(e)?;
    assemble_case_ii(&sp, &sub, g, g, ComponentSource::ClosedForm).map_err(e)
}

fn diagonal_is_zero(s: &JointDensitySurface, n: usize) -> bool {
    (1..=n).all(|i| s.value(i, i) == 0.0)
}

fn joint_surface() -> Outcome {
    let mut r = Report::default();
    let window = 2000;

    let sym = long_case_ii(-1.0, 1.0, true)?;
    let mut asym: f64 = 0.0;
    for i in 1..=window {
        for j in 1..i {
            asym = asym.max((sym.value(i, j) - sym.value(j, i)).abs());
        }
    }
    r.at_most("symmetry(-1,1)", asym, 1e-12);
    r.holds("diagonal_zero(-1,1)", diagonal_is_zero(&sym, sym.t_grid.n));
    r.within("mass(-1,1)", sym.mass(), 0.98, 1.02);
    drop(sym);

    let surf = long_case_ii(-1.0, 2.0, false)?;
    r.holds("diagonal_zero(-1,2)", diagonal_is_zero(&surf, surf.t_grid.n));
    r.within("mass(-1,2)", surf.mass(), 0.98, 1.02);
    let (tm, sm) = (surf.t_marginal(window), surf.s_marginal(window));
    let knots = |i: usize| (i + 1) as f64 * 0.01;
    let (mut et, mut es) = (0.0f64, 0.0f64);
    for i in 0..window {
        et = et.max((tm[i] - bm_fpt_pdf(knots(i), 0.0, -1.0).map_err(e)?).abs());
        es = es.max((sm[i] - bm_fpt_pdf(knots(i), 0.0, 2.0).map_err(e)?).abs());
    }
    r.at_most("t_marginal_error(-1,2)", et, 5e-3);
    r.at_most("s_marginal_error(-1,2)", es, 5e-3);
    drop(surf);

    let sp = bm_strip(-2.0, -1.0, 1.0);
    let g = TimeGrid::covering(0.0, 0.01, LONG).map_err(e)?;
    let case_i = assemble_case_i(&sp, g, g, ComponentSource::ClosedForm).map_err(e)?;
    r.holds("diagonal_zero(case i)", diagonal_is_zero(&case_i, case_i.t_grid.n));
    r.within("mass(case i)", case_i.mass(), 0.98, 1.02);
    Ok(r)
}

fn monte_carlo() -> Outcome {
    let sp = bm_strip(0.0, -1.0, 2.0);
    let horizon = 5.0;
    let cfg = SimConfig { n_paths: 100_000, dt: 1e-4, horizon, seed: 20240501, workers: 0 };
    let samples = mc::simulate_pair(&sp, &cfg).map_err(e)?;
    let mut r = Report::default();

    let fine = TimeGrid::covering(0.0, cfg.dt, horizon).map_err(e)?;
    let table = marginal_cdf(&sp.process, &sp.lower, Side::BelowStart, fine, ComponentSource::ClosedForm).map_err(e)?;
    r.at_most("ks_lower", mc::compare_marginal(&samples, HittingTime::Lower, &table).map_err(e)?, 0.02);
    // the table is the exact level CDF at every knot
    r.holds("table_is_exact", (1..=fine.n).step_by(997).all(|i| (table.cdf[i - 1] - bm_fpt_cdf(fine.knot(i), 0.0, -1.0).unwrap()).abs() < 1e-15));

    let grid = TimeGrid::covering(0.0, 0.01, horizon).map_err(e)?;
    let pair = solve_two_boundary(&sp, grid).map_err(e)?;
    let p_hat = mc::first_hit_fraction(&samples, FirstHit::Lower);
    r.at_most("|p_lower_first - h*sum(g_a)|", (p_hat - pair.mass_lower()).abs(), 0.01);

    let surf = assemble_case_ii(&sp, &pair, grid, grid, ComponentSource::ClosedForm).map_err(e)?;
    let bins = Binning { t0: 0.0, width: 0.1, n_bins: 50 };
    let err = mc::sup_bin_error(&mc::joint_histogram(&samples, &bins), &mc::surface_bin_averages(&surf, &bins).map_err(e)?);
    r.at_most("joint_sup_bin_error", err, 0.03);

    // path i draws from stream i, so a prefix rerun with other worker counts must match
    let prefix = SimConfig { n_paths: 2000, ..cfg };
    let one = mc::simulate_pair(&sp, &SimConfig { workers: 1, ..prefix }).map_err(e)?;
    let two = mc::simulate_pair(&sp, &SimConfig { workers: 2, ..prefix }).map_err(e)?;
    r.holds("deterministic", one == samples[..2000] && two == one);
    Ok(r)
}

fn copula_for(process: Process, a: f64, b: f64, horizon: f64, m: usize) -> Result<(JointDensitySurface, CopulaSurface), String> {
    let sp = StripProblem::new(process, Boundary::Constant(a), Boundary::Constant(b)).map_err(e)?;
    let sub = SubDensityPair::closed_form(&sp, TimeGrid::covering(0.0, 0.01, 200.0).map_err(e)?, &SeriesControl::default()).map_err(e)?;
    let g = TimeGrid::covering(0.0, 0.01, horizon).map_err(e)?;
    let surf = assemble_case_ii(&sp, &sub, g, g, ComponentSource::ClosedForm).map_err(e)?;
    let ml = marginal_cdf(&sp.process, &sp.lower, Side::BelowStart, g, ComponentSource::ClosedForm).map_err(e)?;
    let mu = marginal_cdf(&sp.process, &sp.upper, Side::AboveStart, g, ComponentSource::ClosedForm).map_err(e)?;
    let cop = copula_density(&surf, &ml, &mu, m).map_err(e)?;
    Ok((surf, cop))
}

fn copula_sup_diff(x: &CopulaSurface, y: &CopulaSurface) -> f64 {
    x.density
        .iter()
        .zip(&y.density)
        .map(|(p, q)| match (p, q) {
            (Some(p), Some(q)) => (p - q).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn copula_invariance() -> Outcome {
    let (a, b, horizon, m) = (-1.0, 1.5, 5000.0, 50);
    let (surf, base) = copula_for(Process::standard_brownian(0.0), a, b, horizon, m)?;
    let mut r = Report::default();
    r.holds("fully_covered", base.uncovered() == 0);

    let sigma = 2.0;
    let scaled = Process::new(ProcessKind::ScaledBrownian { sigma }, 0.0, 0.0).map_err(e)?;
    let (_, cs) = copula_for(scaled, sigma * a, sigma * b, horizon, m)?;
    r.at_most("sup|c - c_scaled|", copula_sup_diff(&base, &cs), 1e-12);

    let s = 0.5;
    let gbm = Process::new(ProcessKind::GeometricBrownian { sigma: s }, 1.0, 0.0).map_err(e)?;
    let (_, cg) = copula_for(gbm, (s * a).exp(), (s * b).exp(), horizon, m)?;
    r.at_most("sup|c - c_gbm|", copula_sup_diff(&base, &cg), 1e-12);

    // peak heights on each side of the diagonal: lower boundary first is t < s
    let n = 1500;
    let (mut joint_lower, mut joint_upper) = (0.0f64, 0.0f64);
    for i in 1..=n {
        for j in 1..=n {
            let v = surf.value(i, j);
            if i < j {
                joint_lower = joint_lower.max(v);
            } else {
                joint_upper = joint_upper.max(v);
            }
        }
    }
    let (mut cop_lower, mut cop_upper) = (0.0f64, 0.0f64);
    for k in 0..m {
        for l in 0..m {
            if let (Some(c), Some(t), Some(q)) = (base.get(k, l), base.t_quantiles[k], base.s_quantiles[l]) {
                if t < q {
                    cop_lower = cop_lower.max(c);
                } else {
                    cop_upper = cop_upper.max(c);
                }
            }
        }
    }
    r.holds(
        &format!("joint peaks lower-first {joint_lower:.4} > upper-first {joint_upper:.4}"),
        joint_lower > joint_upper,
    );
    r.holds(&format!("copula peaks lower-first {cop_lower:.4} < upper-first {cop_upper:.4}"), cop_lower < cop_upper);
    Ok(r)
}

fn oscillating_boundaries() -> Outcome {
    let pi = std::f64::consts::PI;
    let sp = StripProblem::new(
        Process::standard_brownian(0.0),
        Boundary::cosine(-1.0, 0.1, pi, pi),
        Boundary::cosine(1.0, 0.1, pi, 0.0),
    )
    .map_err(e)?;
    let coarse = solve_two_boundary(&sp, TimeGrid::covering(0.0, 0.01, 10.0).map_err(e)?).map_err(e)?;
    let fine = solve_two_boundary(&sp, TimeGrid::covering(0.0, 0.005, 10.0).map_err(e)?).map_err(e)?;
    let mut r = Report::default();
    r.within("mass", coarse.mass_lower() + coarse.mass_upper(), 0.97, 1.005);
    let late_clamps = coarse.grid.knots().zip(&coarse.clamped).filter(|(t, &c)| *t > 0.05 && c).count();
    r.at_most("clamp_flags_after_0.05", late_clamps as f64, 0.0);
    let every_other = |v: &[f64]| v.iter().skip(1).step_by(2).copied().collect::<Vec<_>>();
    let diff = max_abs_diff(&coarse.lower, &every_other(&fine.lower)).max(max_abs_diff(&coarse.upper, &every_other(&fine.upper)));
    r.at_most("self_convergence_h_vs_h/2", diff, 5e-3);
    Ok(r)
}

fn ornstein_uhlenbeck() -> Outcome {
    let ou = Process::new(ProcessKind::OrnsteinUhlenbeck { theta: 10.0, mu: 0.0, sigma: 1.0 }, 0.0, 0.0).map_err(e)?;
    let sp = StripProblem::new(ou, Boundary::Constant(-1.0), Boundary::Constant(1.0)).map_err(e)?;
    let horizon = 5.0;
    let grid = TimeGrid::covering(0.0, 0.01, horizon).map_err(e)?;
    let pair = solve_two_boundary(&sp, grid).map_err(e)?;
    let mut r = Report::default();
    r.holds("g_lower == g_upper bitwise", pair.lower.iter().zip(&pair.upper).all(|(x, y)| x.to_bits() == y.to_bits()));

    let samples = mc::simulate_pair(&sp, &SimConfig { n_paths: 100_000, dt: 1e-4, horizon, seed: 20240502, workers: 0 }).map_err(e)?;
    let bins = Binning { t0: 0.0, width: 0.1, n_bins: 50 };
    for (name, which) in [("lower", HittingTime::Lower), ("upper", HittingTime::Upper)] {
        let err = mc::sup_bin_error(&mc::sub_density_histogram(&samples, which, &bins), &mc::sub_density_bin_averages(&pair, which, &bins).map_err(e)?);
        r.at_most(&format!("sub_density_{name}_sup_bin_error"), err, 0.03);
    }
    let surf = assemble_case_ii(&sp, &pair, grid, grid, ComponentSource::Solver).map_err(e)?;
    let err = mc::sup_bin_error(&mc::joint_histogram(&samples, &bins), &mc::surface_bin_averages(&surf, &bins).map_err(e)?);
    r.at_most("joint_sup_bin_error", err, 0.03);
    Ok(r)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("MSE of the Euler solver", mse_numerical),
        ("MSE of the Laplace route", mse_laplace),
        ("convergence order", convergence_order),
        ("three Laplace representations agree", laplace_equivalence),
        ("mass and gambler's-ruin split", mass_and_split),
        ("joint surface properties", joint_surface),
        ("Monte Carlo cross-validation", monte_carlo),
        ("copula scaling invariance and peak inversion", copula_invariance),
        ("oscillating boundaries", oscillating_boundaries),
        ("Ornstein-Uhlenbeck strip", ornstein_uhlenbeck),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(report) => {
                let ok = report.passed();
                failed += usize::from(!ok);
                let details: Vec<String> = report.items.iter().map(|(d, ok)| if *ok { d.clone() } else { format!("!{d}") }).collect();
                println!("{} [{}] {name} ({secs:.1}s): {}", if ok { "PASS" } else { "FAIL" }, k + 1, details.join("; "));
            }
            Err(msg) => {
                failed += 1;
                println!("FAIL [{}] {name} ({secs:.1}s): error: {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
