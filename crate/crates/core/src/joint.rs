//! Joint density of the two hitting times, the one-boundary marginals and the
//! copula density.
//!
//! A surface is kept in factored form: the density of the first hit times the
//! density of the second hit for the process restarted on the first boundary.
//! Cells are computed on demand, so long horizons cost memory linear in the
//! number of knots.

use serde::{Deserialize, Serialize};

use crate::boundary::{Boundary, Configuration, StripProblem};
use crate::closed_form::bm_fpt_pdf;
use crate::error::{FptError, Result};
use crate::interp::MonotoneCubic;
use crate::normal;
use crate::process::{Process, TransitionKernel};
use crate::volterra::{restart_family, solve_single_boundary_with, Side, SolverOptions, SubDensityPair, TimeGrid};

/// Where the one-boundary densities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentSource {
    /// Closed form when the process and boundaries allow it, solver otherwise.
    #[default]
    Auto,
    ClosedForm,
    Solver,
}

/// First-passage densities of restarted processes.
#[derive(Debug, Clone, PartialEq)]
pub enum RestartDensities {
    /// `v[k − 1]` is the density at lag `k·h`, shared by every restart knot.
    Lagged(Vec<f64>),
    /// `rows[j − 1][m]` is the density at knot `j + 1 + m` after a restart at knot `j`.
    PerKnot(Vec<Vec<f64>>),
}

impl RestartDensities {
    /// Density at knot `target` after a restart at knot `start`; zero outside
    /// the computed range.
    pub fn at(&self, start: usize, target: usize) -> f64 {
        if target <= start || start == 0 {
            return 0.0;
        }
        match self {
            RestartDensities::Lagged(v) => v.get(target - start - 1).copied().unwrap_or(0.0),
            RestartDensities::PerKnot(rows) => rows
                .get(start - 1)
                .and_then(|r| r.get(target - start - 1))
                .copied()
                .unwrap_or(0.0),
        }
    }

    /// `Σ_{k = start+1}^{last} at(start, k)`.
    fn tail_sum(&self, start: usize, last: usize, prefix: &[f64]) -> f64 {
        if last <= start {
            return 0.0;
        }
        match self {
            RestartDensities::Lagged(_) => prefix[(last - start).min(prefix.len() - 1)],
            RestartDensities::PerKnot(rows) => rows
                .get(start - 1)
                .map(|r| r.iter().take(last - start).sum())
                .unwrap_or(0.0),
        }
    }

    fn prefix(&self) -> Vec<f64> {
        match self {
            RestartDensities::Lagged(v) => std::iter::once(0.0)
                .chain(v.iter().scan(0.0, |acc, x| {
                    *acc += x;
                    Some(*acc)
                }))
                .collect(),
            RestartDensities::PerKnot(_) => Vec::new(),
        }
    }
}

fn closed_form_available(process: &Process, bds: &[&Boundary]) -> bool {
    process.brownian_coordinate(process.x0()).is_some() && bds.iter().all(|b| b.is_constant())
}

fn use_closed_form(source: ComponentSource, process: &Process, bds: &[&Boundary]) -> Result<bool> {
    let available = closed_form_available(process, bds);
    match source {
        ComponentSource::Auto => Ok(available),
        ComponentSource::Solver => Ok(false),
        ComponentSource::ClosedForm if available => Ok(true),
        ComponentSource::ClosedForm => Err(FptError::Unsupported(
            "closed-form components need a Brownian-type process and constant boundaries".into(),
        )),
    }
}

fn brownian(process: &Process, x: f64) -> f64 {
    process.brownian_coordinate(x).expect("checked by closed_form_available")
}

/// One-boundary first-passage density from the process start, at the knots of `grid`.
pub fn fpt_density(process: &Process, bd: &Boundary, side: Side, grid: TimeGrid, source: ComponentSource) -> Result<Vec<f64>> {
    if use_closed_form(source, process, &[bd])? {
        let c = bd.eval(grid.t0)?;
        let ok = match side {
            Side::AboveStart => c > process.x0(),
            Side::BelowStart => c < process.x0(),
        };
        if !ok {
            return Err(FptError::InvalidStrip(format!("boundary {c} is not {side:?} x0 = {}", process.x0())));
        }
        let (x0, level) = (brownian(process, process.x0()), brownian(process, c));
        (1..=grid.n).map(|i| bm_fpt_pdf(i as f64 * grid.h, x0, level)).collect()
    } else {
        Ok(solve_single_boundary_with(process, bd, side, grid, &SolverOptions::default())?.pdf)
    }
}

/// Densities of the passage through `to` after restarts on `from` at every knot
/// of `grid`.
pub fn restart_densities(
    process: &Process,
    from: &Boundary,
    to: &Boundary,
    side: Side,
    grid: TimeGrid,
    source: ComponentSource,
) -> Result<RestartDensities> {
    let lags = grid.n.saturating_sub(1);
    if lags == 0 {
        return Ok(RestartDensities::Lagged(Vec::new()));
    }
    let constant = from.is_constant() && to.is_constant() && process.time_homogeneous();
    if use_closed_form(source, process, &[from, to])? {
        let (y, c) = (brownian(process, from.eval(grid.t0)?), brownian(process, to.eval(grid.t0)?));
        let v = (1..=lags).map(|k| bm_fpt_pdf(k as f64 * grid.h, y, c)).collect::<Result<_>>()?;
        return Ok(RestartDensities::Lagged(v));
    }
    if constant {
        let restarted = process.restarted(from.eval(grid.t0)?, grid.t0);
        let lag_grid = TimeGrid::new(grid.t0, grid.h, lags)?;
        let sol = solve_single_boundary_with(&restarted, to, side, lag_grid, &SolverOptions::default())?;
        return Ok(RestartDensities::Lagged(sol.pdf));
    }
    Ok(RestartDensities::PerKnot(restart_family(process, from, to, side, grid, &SolverOptions::default())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointCase {
    /// Start outside the strip; the hits come in a fixed order.
    I,
    /// Start inside the strip; either boundary may be hit first.
    II,
}

/// Joint density `f(t, s)` of `(T_a, T_b)` on `t_grid × s_grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensitySurface {
    pub configuration: Configuration,
    pub t_grid: TimeGrid,
    pub s_grid: TimeGrid,
    /// Density of reaching `a` first, at t-knots (`g_a`, or `f_{T_a}` in case i).
    lower_first: Vec<f64>,
    /// Density of reaching `b` first, at s-knots.
    upper_first: Vec<f64>,
    /// `f_{T_b}(s | a(t_i), t_i)`.
    to_upper: RestartDensities,
    /// `f_{T_a}(t | b(s_j), s_j)`.
    to_lower: RestartDensities,
}

fn check_grids(process: &Process, t_grid: &TimeGrid, s_grid: &TimeGrid) -> Result<()> {
    if !t_grid.compatible(s_grid) {
        return Err(FptError::GridMismatch("t and s grids need the same start and step".into()));
    }
    if t_grid.t0 != process.t0() {
        return Err(FptError::GridMismatch(format!("grids start at {} but the process starts at {}", t_grid.t0, process.t0())));
    }
    Ok(())
}

fn longest(t_grid: &TimeGrid, s_grid: &TimeGrid) -> TimeGrid {
    if t_grid.n >= s_grid.n {
        *t_grid
    } else {
        *s_grid
    }
}

/// Surface for a start outside the strip.
pub fn assemble_case_i(sp: &StripProblem, t_grid: TimeGrid, s_grid: TimeGrid, source: ComponentSource) -> Result<JointDensitySurface> {
    let p = &sp.process;
    check_grids(p, &t_grid, &s_grid)?;
    let full = longest(&t_grid, &s_grid);
    sp.require_valid(full.horizon(), full.h)?;
    let empty = || RestartDensities::Lagged(Vec::new());
    match sp.configuration {
        Configuration::OutsideBelow => Ok(JointDensitySurface {
            configuration: sp.configuration,
            t_grid,
            s_grid,
            lower_first: fpt_density(p, &sp.lower, Side::AboveStart, t_grid, source)?,
            upper_first: Vec::new(),
            to_upper: restart_densities(p, &sp.lower, &sp.upper, Side::AboveStart, s_grid, source)?,
            to_lower: empty(),
        }),
        Configuration::OutsideAbove => Ok(JointDensitySurface {
            configuration: sp.configuration,
            t_grid,
            s_grid,
            lower_first: Vec::new(),
            upper_first: fpt_density(p, &sp.upper, Side::BelowStart, s_grid, source)?,
            to_upper: empty(),
            to_lower: restart_densities(p, &sp.upper, &sp.lower, Side::BelowStart, t_grid, source)?,
        }),
        Configuration::Inside => Err(FptError::InvalidStrip("case i needs the start outside the strip".into())),
    }
}

/// Surface for a start inside the strip from precomputed sub-densities. `sub`
/// may be shorter than the grids; missing knots count as zero.
pub fn assemble_case_ii(
    sp: &StripProblem,
    sub: &SubDensityPair,
    t_grid: TimeGrid,
    s_grid: TimeGrid,
    source: ComponentSource,
) -> Result<JointDensitySurface> {
    let p = &sp.process;
    if sp.configuration != Configuration::Inside {
        return Err(FptError::InvalidStrip("case ii needs the start inside the strip".into()));
    }
    check_grids(p, &t_grid, &s_grid)?;
    if !sub.grid.compatible(&t_grid) {
        return Err(FptError::GridMismatch("sub-densities were computed on a different grid".into()));
    }
    let full = longest(&t_grid, &s_grid);
    sp.require_valid(full.horizon(), full.h)?;
    Ok(JointDensitySurface {
        configuration: sp.configuration,
        t_grid,
        s_grid,
        lower_first: sub.lower.iter().take(t_grid.n).copied().collect(),
        upper_first: sub.upper.iter().take(s_grid.n).copied().collect(),
        to_upper: restart_densities(p, &sp.lower, &sp.upper, Side::AboveStart, s_grid, source)?,
        to_lower: restart_densities(p, &sp.upper, &sp.lower, Side::BelowStart, t_grid, source)?,
    })
}

fn get(v: &[f64], knot: usize) -> f64 {
    if knot == 0 {
        0.0
    } else {
        v.get(knot - 1).copied().unwrap_or(0.0)
    }
}

impl JointDensitySurface {
    pub fn case(&self) -> JointCase {
        match self.configuration {
            Configuration::Inside => JointCase::II,
            _ => JointCase::I,
        }
    }

    pub fn h(&self) -> f64 {
        self.t_grid.h
    }

    pub fn lower_first(&self) -> &[f64] {
        &self.lower_first
    }

    pub fn upper_first(&self) -> &[f64] {
        &self.upper_first
    }

    pub fn restart_to_upper(&self) -> &RestartDensities {
        &self.to_upper
    }

    pub fn restart_to_lower(&self) -> &RestartDensities {
        &self.to_lower
    }

    /// `f(t_i, s_j)` for 1-based knots; zero on the diagonal and outside the grids.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if i == 0 || j == 0 || i > self.t_grid.n || j > self.s_grid.n {
            return 0.0;
        }
        if i < j {
            get(&self.lower_first, i) * self.to_upper.at(i, j)
        } else if i > j {
            get(&self.upper_first, j) * self.to_lower.at(j, i)
        } else {
            0.0
        }
    }

    /// Row-major `n_t × n_s` matrix of cell values.
    pub fn dense(&self) -> Vec<f64> {
        let (nt, ns) = (self.t_grid.n, self.s_grid.n);
        let mut out = Vec::with_capacity(nt * ns);
        for i in 1..=nt {
            out.extend((1..=ns).map(|j| self.value(i, j)));
        }
        out
    }

    /// `h²·Σ f(t_i, s_j)` over the whole grid.
    pub fn mass(&self) -> f64 {
        let h = self.h();
        let (pu, pl) = (self.to_upper.prefix(), self.to_lower.prefix());
        let below: f64 = self
            .lower_first
            .iter()
            .enumerate()
            .map(|(m, g)| g * self.to_upper.tail_sum(m + 1, self.s_grid.n, &pu))
            .sum();
        let above: f64 = self
            .upper_first
            .iter()
            .enumerate()
            .map(|(m, g)| g * self.to_lower.tail_sum(m + 1, self.t_grid.n, &pl))
            .sum();
        h * h * (below + above)
    }

    /// `h·Σ_j f(t_i, s_j)` for the first `count` t-knots: the density of `T_a`.
    pub fn t_marginal(&self, count: usize) -> Vec<f64> {
        let h = self.h();
        let pu = self.to_upper.prefix();
        (1..=count.min(self.t_grid.n))
            .map(|i| {
                let later = get(&self.lower_first, i) * self.to_upper.tail_sum(i, self.s_grid.n, &pu);
                let earlier: f64 = (1..i.min(self.upper_first.len() + 1))
                    .map(|j| self.upper_first[j - 1] * self.to_lower.at(j, i))
                    .sum();
                h * (later + earlier)
            })
            .collect()
    }

    /// `h·Σ_i f(t_i, s_j)` for the first `count` s-knots: the density of `T_b`.
    pub fn s_marginal(&self, count: usize) -> Vec<f64> {
        let h = self.h();
        let pl = self.to_lower.prefix();
        (1..=count.min(self.s_grid.n))
            .map(|j| {
                let later = get(&self.upper_first, j) * self.to_lower.tail_sum(j, self.t_grid.n, &pl);
                let earlier: f64 = (1..j.min(self.lower_first.len() + 1))
                    .map(|i| self.lower_first[i - 1] * self.to_upper.at(i, j))
                    .sum();
                h * (later + earlier)
            })
            .collect()
    }

    /// Bilinear interpolation between knots; `None` beyond either grid.
    pub fn interpolate(&self, t: f64, s: f64) -> Option<f64> {
        let h = self.h();
        let x = (t - self.t_grid.t0) / h;
        let y = (s - self.s_grid.t0) / h;
        if !(x >= 0.0 && y >= 0.0 && x <= self.t_grid.n as f64 && y <= self.s_grid.n as f64) {
            return None;
        }
        let (i, j) = ((x.floor() as usize).min(self.t_grid.n.saturating_sub(1)), (y.floor() as usize).min(self.s_grid.n.saturating_sub(1)));
        let (fx, fy) = (x - i as f64, y - j as f64);
        let v = |a, b| self.value(a, b);
        // grouped so that swapping t and s gives bit-identical results
        let corners = (1.0 - fx) * (1.0 - fy) * v(i, j) + fx * fy * v(i + 1, j + 1);
        let cross = fx * (1.0 - fy) * v(i + 1, j) + (1.0 - fx) * fy * v(i, j + 1);
        Some(corners + cross)
    }
}

/// Tabulated marginal of a hitting time: pdf and CDF at the knots of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub grid: TimeGrid,
    pub pdf: Vec<f64>,
    pub cdf: Vec<f64>,
    quantile: Option<MonotoneCubic>,
}

/// CDF values below this are treated as "no mass yet" when inverting.
const CDF_FLOOR: f64 = 1e-12;

impl MarginalTable {
    pub fn new(grid: TimeGrid, pdf: Vec<f64>, cdf: Vec<f64>) -> Result<Self> {
        if pdf.len() != grid.n || cdf.len() != grid.n {
            return Err(FptError::GridMismatch("marginal arrays must have one entry per knot".into()));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(FptError::InvalidParameter("marginal CDF must be nondecreasing".into()));
        }
        // inverse table: (0, t0) followed by every knot where the CDF grows
        let mut us = vec![0.0];
        let mut ts = vec![grid.t0];
        for (k, &c) in cdf.iter().enumerate() {
            if c >= CDF_FLOOR && c > *us.last().unwrap() {
                us.push(c);
                ts.push(grid.knot(k + 1));
            }
        }
        let quantile = if us.len() >= 2 { Some(MonotoneCubic::new(us, ts)?) } else { None };
        Ok(Self { grid, pdf, cdf, quantile })
    }

    /// CDF as the running `h`-sum of the pdf, clipped to `[0, 1]`.
    pub fn from_pdf(grid: TimeGrid, pdf: Vec<f64>) -> Result<Self> {
        let h = grid.h;
        let cdf = pdf
            .iter()
            .scan(0.0, |acc, f| {
                *acc += h * f;
                Some(acc.clamp(0.0, 1.0))
            })
            .collect();
        Self::new(grid, pdf, cdf)
    }

    /// Largest probability covered by the table.
    pub fn captured(&self) -> f64 {
        self.cdf.last().copied().unwrap_or(0.0)
    }

    /// `Q(u)`, or `None` when `u` lies beyond the captured mass.
    pub fn quantile(&self, u: f64) -> Option<f64> {
        let q = self.quantile.as_ref()?;
        let (lo, hi) = q.domain();
        if !(u > lo && u <= hi) {
            return None;
        }
        q.eval(u).ok()
    }

    /// Linear interpolation of the pdf; zero at `t0`.
    pub fn pdf_at(&self, t: f64) -> Option<f64> {
        let x = (t - self.grid.t0) / self.grid.h;
        if !(x >= 0.0 && x <= self.grid.n as f64) {
            return None;
        }
        let i = (x.floor() as usize).min(self.grid.n - 1);
        let f = x - i as f64;
        Some((1.0 - f) * get(&self.pdf, i) + f * get(&self.pdf, i + 1))
    }
}

/// Marginal of the one-boundary hitting time through `bd`.
pub fn marginal_cdf(process: &Process, bd: &Boundary, side: Side, grid: TimeGrid, source: ComponentSource) -> Result<MarginalTable> {
    let pdf = fpt_density(process, bd, side, grid, source)?;
    if use_closed_form(source, process, &[bd])? {
        let d = (brownian(process, bd.eval(grid.t0)?) - brownian(process, process.x0())).abs();
        let cdf = (1..=grid.n).map(|i| normal::erfc(d / (2.0 * i as f64 * grid.h).sqrt())).collect();
        MarginalTable::new(grid, pdf, cdf)
    } else {
        MarginalTable::from_pdf(grid, pdf)
    }
}

/// Copula density on the interior grid `{1/(m+1), …, m/(m+1)}²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaSurface {
    pub m: usize,
    /// Grid coordinates, shared by both axes.
    pub u: Vec<f64>,
    /// Row-major `m × m`, rows indexed by `u` (the `T_a` axis); `None` marks an
    /// uncovered cell.
    pub density: Vec<Option<f64>>,
    pub t_quantiles: Vec<Option<f64>>,
    pub s_quantiles: Vec<Option<f64>>,
}

impl CopulaSurface {
    pub fn get(&self, k: usize, l: usize) -> Option<f64> {
        self.density[k * self.m + l]
    }

    pub fn uncovered(&self) -> usize {
        self.density.iter().filter(|c| c.is_none()).count()
    }

    /// `Σ_l c(u_k, v_l)/(m+1)` per row, `None` if the row has an uncovered cell.
    pub fn row_integrals(&self) -> Vec<Option<f64>> {
        let w = 1.0 / (self.m + 1) as f64;
        (0..self.m)
            .map(|k| (0..self.m).map(|l| self.get(k, l)).sum::<Option<f64>>().map(|s| s * w))
            .collect()
    }

    pub fn column_integrals(&self) -> Vec<Option<f64>> {
        let w = 1.0 / (self.m + 1) as f64;
        (0..self.m)
            .map(|l| (0..self.m).map(|k| self.get(k, l)).sum::<Option<f64>>().map(|s| s * w))
            .collect()
    }
}

/// `c(u, v) = f(Q_t(u), Q_s(v)) / (f_t(Q_t(u))·f_s(Q_s(v)))`.
pub fn copula_density(surface: &JointDensitySurface, marg_t: &MarginalTable, marg_s: &MarginalTable, m: usize) -> Result<CopulaSurface> {
    if m == 0 {
        return Err(FptError::InvalidParameter("copula grid needs m >= 1".into()));
    }
    let u: Vec<f64> = (1..=m).map(|k| k as f64 / (m + 1) as f64).collect();
    let t_quantiles: Vec<Option<f64>> = u.iter().map(|&x| marg_t.quantile(x)).collect();
    let s_quantiles: Vec<Option<f64>> = u.iter().map(|&x| marg_s.quantile(x)).collect();
    let mut density = Vec::with_capacity(m * m);
    for tq in &t_quantiles {
        for sq in &s_quantiles {
            let cell = match (tq, sq) {
                (Some(t), Some(s)) => match (surface.interpolate(*t, *s), marg_t.pdf_at(*t), marg_s.pdf_at(*s)) {
                    (Some(f), Some(ft), Some(fs)) if ft > 0.0 && fs > 0.0 => Some(f / (ft * fs)),
                    _ => None,
                },
                _ => None,
            };
            density.push(cell);
        }
    }
    Ok(CopulaSurface { m, u, density, t_quantiles, s_quantiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{bm_fpt_cdf, SeriesControl};
    use crate::volterra::solve_two_boundary;

    fn strip(x0: f64, a: f64, b: f64) -> StripProblem {
        StripProblem::new(Process::standard_brownian(x0), Boundary::Constant(a), Boundary::Constant(b)).unwrap()
    }

    #[test]
    fn case_i_cell_is_product_of_hitting_densities() {
        let sp = strip(-2.0, -1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 300).unwrap();
        let surf = assemble_case_i(&sp, g, g, ComponentSource::ClosedForm).unwrap();
        assert_eq!(surf.case(), JointCase::I);
        let v = surf.value(100, 200);
        let second = 2.0 / (2.0 * std::f64::consts::PI).sqrt() * (-2.0f64).exp();
        assert!((second - 0.107_981_933).abs() < 1e-9);
        assert!((v - 0.241_970_725 * second).abs() < 1e-9, "{v}");
        for i in 1..=300 {
            for j in 1..=i {
                assert_eq!(surf.value(i, j), 0.0);
            }
        }
    }

    #[test]
    fn case_i_mirrored_start() {
        let sp = strip(2.0, -1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 300).unwrap();
        let surf = assemble_case_i(&sp, g, g, ComponentSource::ClosedForm).unwrap();
        assert!((surf.value(200, 100) - 0.241_970_725 * 0.107_981_933).abs() < 1e-9);
        assert_eq!(surf.value(100, 200), 0.0);
        assert!(assemble_case_i(&strip(0.0, -1.0, 1.0), g, g, ComponentSource::Auto).is_err());
    }

    #[test]
    fn case_i_solver_components_track_closed_form() {
        let sp = strip(-2.0, -1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 400).unwrap();
        let exact = assemble_case_i(&sp, g, g, ComponentSource::ClosedForm).unwrap();
        let numeric = assemble_case_i(&sp, g, g, ComponentSource::Solver).unwrap();
        let worst = (1..=400)
            .flat_map(|i| (1..=400).map(move |j| (i, j)))
            .map(|(i, j)| (exact.value(i, j) - numeric.value(i, j)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn case_ii_symmetry_and_diagonal() {
        let sp = strip(0.0, -1.0, 1.0);
        let g = TimeGrid::new(0.0, 0.01, 300).unwrap();
        for source in [ComponentSource::ClosedForm, ComponentSource::Solver] {
            let sub = solve_two_boundary(&sp, g).unwrap();
            let surf = assemble_case_ii(&sp, &sub, g, g, source).unwrap();
            for i in 1..=300 {
                assert_eq!(surf.value(i, i), 0.0);
                for j in 1..i {
                    assert_eq!(surf.value(i, j), surf.value(j, i));
                }
            }
        }
    }

    #[test]
    fn case_ii_asymmetric_peaks() {
        let sp = strip(0.0, -1.0, 1.5);
        let g = TimeGrid::new(0.0, 0.01, 400).unwrap();
        let sub = SubDensityPair::closed_form(&sp, g, &SeriesControl::default()).unwrap();
        let surf = assemble_case_ii(&sp, &sub, g, g, ComponentSource::Auto).unwrap();
        let (mut below, mut above) = (0.0f64, 0.0f64);
        for i in 1..=400 {
            for j in 1..=400 {
                let v = surf.value(i, j);
                if i < j {
                    below = below.max(v);
                } else if i > j {
                    above = above.max(v);
                }
            }
        }
        assert!(below > above, "{below} vs {above}");
    }

    #[test]
    fn lagged_mass_matches_dense_sum() {
        let sp = strip(0.0, -1.0, 2.0);
        let g = TimeGrid::new(0.0, 0.02, 250).unwrap();
        let sub = solve_two_boundary(&sp, g).unwrap();
        for source in [ComponentSource::ClosedForm, ComponentSource::Solver] {
            let surf = assemble_case_ii(&sp, &sub, g, g, source).unwrap();
            let dense: f64 = surf.dense().iter().sum::<f64>() * g.h * g.h;
            assert!((surf.mass() - dense).abs() < 1e-12, "{} vs {dense}", surf.mass());
            let tm: f64 = surf.t_marginal(g.n).iter().sum::<f64>() * g.h;
            let sm: f64 = surf.s_marginal(g.n).iter().sum::<f64>() * g.h;
            assert!((tm - dense).abs() < 1e-12 && (sm - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn per_knot_restarts_agree_with_lagged_for_constant_boundaries() {
        let p = Process::standard_brownian(0.0);
        let g = TimeGrid::new(0.0, 0.02, 100).unwrap();
        let lagged = restart_densities(&p, &Boundary::Constant(-1.0), &Boundary::Constant(1.0), Side::AboveStart, g, ComponentSource::Solver).unwrap();
        let fam = RestartDensities::PerKnot(
            restart_family(&p, &Boundary::Constant(-1.0), &Boundary::Constant(1.0), Side::AboveStart, g, &SolverOptions::default()).unwrap(),
        );
        for i in 1..100 {
            for j in 1..=100 {
                assert!((lagged.at(i, j) - fam.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_cdf_routes() {
        let p = Process::standard_brownian(0.0);
        let g = TimeGrid::covering(0.0, 0.01, 20.0).unwrap();
        let exact = marginal_cdf(&p, &Boundary::Constant(-1.0), Side::BelowStart, g, ComponentSource::ClosedForm).unwrap();
        assert!((exact.cdf[99] - 0.317_310_507_862_914).abs() < 1e-12);
        let numeric = marginal_cdf(&p, &Boundary::Constant(-1.0), Side::BelowStart, g, ComponentSource::Solver).unwrap();
        assert!((numeric.cdf[99] - bm_fpt_cdf(1.0, 0.0, -1.0).unwrap()).abs() < 1e-2);
        for table in [&exact, &numeric] {
            assert!(table.cdf.windows(2).all(|w| w[1] >= w[0]));
        }
        let far = marginal_cdf(&p, &Boundary::Constant(-1.0), Side::BelowStart, TimeGrid::new(0.0, 100.0, 1000).unwrap(), ComponentSource::ClosedForm).unwrap();
        assert!(far.captured() > 0.99);
        // quantile inverts the CDF
        let q = exact.quantile(0.317_310_507_862_914).unwrap();
        assert!((q - 1.0).abs() < 1e-6, "{q}");
        assert_eq!(exact.quantile(0.999), None);
    }

    #[test]
    fn copula_of_symmetric_strip_is_symmetric() {
        let sp = strip(0.0, -1.0, 1.0);
        let g = TimeGrid::covering(0.0, 0.01, 60.0).unwrap();
        let sub = SubDensityPair::closed_form(&sp, TimeGrid::covering(0.0, 0.01, 30.0).unwrap(), &SeriesControl::default()).unwrap();
        let surf = assemble_case_ii(&sp, &sub, g, g, ComponentSource::ClosedForm).unwrap();
        let p = sp.process;
        let mt = marginal_cdf(&p, &sp.lower, Side::BelowStart, g, ComponentSource::ClosedForm).unwrap();
        let ms = marginal_cdf(&p, &sp.upper, Side::AboveStart, g, ComponentSource::ClosedForm).unwrap();
        let c = copula_density(&surf, &mt, &ms, 9).unwrap();
        for k in 0..9 {
            for l in 0..9 {
                assert_eq!(c.get(k, l), c.get(l, k));
            }
        }
        // the upper deciles need horizons far beyond 60
        assert!(c.uncovered() > 0);
        assert!(c.get(0, 1).unwrap() > 0.0);
    }
}
