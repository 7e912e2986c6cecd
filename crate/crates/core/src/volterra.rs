//! Euler discretization of the first-kind Volterra system for the sub-densities
//! `g_a`, `g_b`, plus the one-boundary (Fortet) equation.
//!
//! With knots `t_i = t0 + i·h` the left-hand sides of
//!
//! ```text
//! 1 − F(b(t)|x0,t0) = ∫ [1 − F(b(t)|a(τ),τ)] g_a(τ) dτ + ∫ [1 − F(b(t)|b(τ),τ)] g_b(τ) dτ
//!     F(a(t)|x0,t0) = ∫ F(a(t)|a(τ),τ) g_a(τ) dτ       + ∫ F(a(t)|b(τ),τ) g_b(τ) dτ
//! ```
//!
//! are matched by rectangle sums over `j ≤ i`. At `j = i` the same-boundary
//! kernel tends to ½ and the cross kernel to 0, which gives the explicit step
//!
//! ```text
//! ĝ_b(t_i) = (2/h)·[1 − F(b(t_i)|x0,t0) − h·Σ_{j<i} (K_ba ĝ_a(t_j) + K_bb ĝ_b(t_j))]
//! ```
//!
//! and symmetrically for `ĝ_a`.

use rayon::prelude::*;

use crate::boundary::{Boundary, Configuration, StripProblem};
use crate::closed_form::{bm_sub_density_lower, bm_sub_density_upper, SeriesControl};
use crate::error::{ensure_finite, FptError, Result};
use crate::process::{Process, TransitionKernel};

/// Uniform knots `t_i = t0 + i·h`, `i = 1..=n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub h: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || n == 0 || !t0.is_finite() {
            return Err(FptError::InvalidParameter(format!("grid needs h > 0 and n >= 1, got h={h}, n={n}")));
        }
        Ok(Self { t0, h, n })
    }

    /// Grid covering `(t0, horizon]`, rounding the knot count to nearest.
    pub fn covering(t0: f64, h: f64, horizon: f64) -> Result<Self> {
        let n = ((horizon - t0) / h).round();
        if !(n >= 1.0) {
            return Err(FptError::InvalidParameter(format!("horizon {horizon} leaves no knot after t0={t0}")));
        }
        Self::new(t0, h, n as usize)
    }

    /// Knot `i` (1-based); `knot(0)` is `t0`.
    pub fn knot(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn horizon(&self) -> f64 {
        self.knot(self.n)
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n).map(|i| self.knot(i))
    }

    pub fn compatible(&self, other: &TimeGrid) -> bool {
        self.t0 == other.t0 && self.h == other.h
    }
}

/// Sub-densities on a grid; index `i − 1` holds knot `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDensityPair {
    pub grid: TimeGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl SubDensityPair {
    pub fn mass_lower(&self) -> f64 {
        self.grid.h * self.lower.iter().sum::<f64>()
    }

    pub fn mass_upper(&self) -> f64 {
        self.grid.h * self.upper.iter().sum::<f64>()
    }

    /// Running `h·Σ_{j≤i}(ĝ_a + ĝ_b)`.
    pub fn cumulative_mass(&self) -> Vec<f64> {
        let h = self.grid.h;
        self.lower
            .iter()
            .zip(&self.upper)
            .scan(0.0, |acc, (a, b)| {
                *acc += h * (a + b);
                Some(*acc)
            })
            .collect()
    }

    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    /// Closed-form sub-densities for constant boundaries and a process that is a
    /// monotone image of a standard Brownian motion, sampled on `grid`.
    pub fn closed_form(sp: &StripProblem, grid: TimeGrid, ctl: &SeriesControl) -> Result<Self> {
        let unsupported = || FptError::Unsupported("closed form needs a Brownian-type process and constant boundaries".into());
        let (a, b) = sp.constant_boundaries().ok_or_else(unsupported)?;
        let p = &sp.process;
        let (a, b, x0) = match (p.brownian_coordinate(a), p.brownian_coordinate(b), p.brownian_coordinate(p.x0())) {
            (Some(a), Some(b), Some(x0)) => (a, b, x0),
            _ => return Err(unsupported()),
        };
        if grid.t0 != p.t0() {
            return Err(FptError::GridMismatch("grid must start at the process start time".into()));
        }
        let mut pair = Self { grid, lower: Vec::with_capacity(grid.n), upper: Vec::with_capacity(grid.n), clamped: Vec::with_capacity(grid.n) };
        for i in 1..=grid.n {
            let elapsed = i as f64 * grid.h;
            let lo = bm_sub_density_lower(elapsed, x0, a, b, ctl)?;
            let up = bm_sub_density_upper(elapsed, x0, a, b, ctl)?;
            pair.lower.push(lo.value);
            pair.upper.push(up.value);
            pair.clamped.push(lo.clamped || up.clamped);
        }
        Ok(pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Negative values below `−negative_tolerance · max(ĝ so far)` abort the solve.
    pub negative_tolerance: f64,
    /// Split correction sums across the rayon pool on long grids.
    pub parallel: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { negative_tolerance: 1e-3, parallel: true }
    }
}

/// Negatives this small are rounding noise and never abort.
const ABSOLUTE_NEGATIVE_FLOOR: f64 = 1e-10;
const CHUNK: usize = 512;
const PARALLEL_MIN: usize = 16 * CHUNK;

/// Fixed-order chunked sum of `f(j)` for `j in 0..len`. The chunk layout does not
/// depend on whether the chunks run in parallel, so results are bit-identical.
fn chunked_sum<F>(len: usize, parallel: bool, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partial = |c: usize| {
        let end = ((c + 1) * CHUNK).min(len);
        (c * CHUNK..end).map(&f).sum::<f64>()
    };
    let chunks = len.div_ceil(CHUNK);
    let partials: Vec<f64> = if parallel && len >= PARALLEL_MIN {
        (0..chunks).into_par_iter().map(partial).collect()
    } else {
        (0..chunks).map(partial).collect()
    };
    pairwise(&partials)
}

fn pairwise(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => pairwise(&values[..n / 2]) + pairwise(&values[n / 2..]),
    }
}

struct NegativeGuard {
    tolerance: f64,
    running_max: f64,
}

impl NegativeGuard {
    fn new(tolerance: f64) -> Self {
        Self { tolerance, running_max: 0.0 }
    }

    /// Returns the reported value and whether it was clamped. The recursion keeps
    /// the raw value so that clamping does not feed back into later knots.
    fn admit(&mut self, value: f64, what: &str, t: f64) -> Result<(f64, bool)> {
        ensure_finite(value, what)?;
        if value >= 0.0 {
            self.running_max = self.running_max.max(value);
            return Ok((value, false));
        }
        if value < -self.tolerance * self.running_max - ABSOLUTE_NEGATIVE_FLOOR {
            return Err(FptError::StepSize(format!(
                "{what} = {value:e} at t = {t} is below -{}·max = {:e}; reduce h",
                self.tolerance,
                -self.tolerance * self.running_max
            )));
        }
        Ok((0.0, true))
    }
}

fn boundary_values(bd: &Boundary, grid: &TimeGrid) -> Result<Vec<f64>> {
    (0..=grid.n).map(|i| bd.eval(grid.knot(i))).collect()
}

/// Kernel `K(i, j)` for `j < i` between a target and a source boundary, either
/// tabulated by lag or evaluated per pair.
enum Kernel<'a, K: TransitionKernel> {
    Lagged(Vec<f64>),
    Direct {
        process: &'a K,
        grid: TimeGrid,
        target: &'a [f64],
        source: &'a [f64],
        survival: bool,
    },
}

impl<'a, K: TransitionKernel> Kernel<'a, K> {
    fn new(
        process: &'a K,
        grid: TimeGrid,
        target: &'a [f64],
        source: &'a [f64],
        survival: bool,
        lagged: bool,
    ) -> Self {
        if lagged {
            let (c_to, c_from) = (target[0], source[0]);
            let values = (1..grid.n)
                .map(|lag| {
                    let (t, tau) = (grid.knot(lag), grid.t0);
                    if survival {
                        process.sf_unchecked(c_to, t, c_from, tau)
                    } else {
                        process.cdf_unchecked(c_to, t, c_from, tau)
                    }
                })
                .collect();
            Kernel::Lagged(values)
        } else {
            Kernel::Direct { process, grid, target, source, survival }
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        match self {
            Kernel::Lagged(v) => v[i - j - 1],
            Kernel::Direct { process, grid, target, source, survival } => {
                let (t, tau) = (grid.knot(i), grid.knot(j));
                if *survival {
                    process.sf_unchecked(target[i], t, source[j], tau)
                } else {
                    process.cdf_unchecked(target[i], t, source[j], tau)
                }
            }
        }
    }
}

/// Solve for `(ĝ_a, ĝ_b)` on `grid` for a start inside the strip.
pub fn solve_two_boundary(sp: &StripProblem, grid: TimeGrid) -> Result<SubDensityPair> {
    solve_two_boundary_with(sp, grid, &SolverOptions::default())
}

pub fn solve_two_boundary_with(sp: &StripProblem, grid: TimeGrid, opts: &SolverOptions) -> Result<SubDensityPair> {
    if sp.configuration != Configuration::Inside {
        return Err(FptError::InvalidStrip("two-boundary solver needs the start inside the strip".into()));
    }
    if grid.t0 != sp.process.t0() {
        return Err(FptError::GridMismatch(format!("grid t0 {} differs from process t0 {}", grid.t0, sp.process.t0())));
    }
    sp.require_valid(grid.horizon(), grid.h)?;
    let (process, lower, upper) = (&sp.process, &sp.lower, &sp.upper);
    let (x0, t0, h, n) = (process.x0(), grid.t0, grid.h, grid.n);
    let a = boundary_values(lower, &grid)?;
    let b = boundary_values(upper, &grid)?;
    let lagged = process.time_homogeneous() && lower.is_constant() && upper.is_constant();

    let k_ba = Kernel::new(process, grid, &b, &a, true, lagged);
    let k_bb = Kernel::new(process, grid, &b, &b, true, lagged);
    let k_aa = Kernel::new(process, grid, &a, &a, false, lagged);
    let k_ab = Kernel::new(process, grid, &a, &b, false, lagged);

    let mut ga = vec![0.0; n + 1];
    let mut gb = vec![0.0; n + 1];
    let mut lower_out = Vec::with_capacity(n);
    let mut upper_out = Vec::with_capacity(n);
    let mut clamped = Vec::with_capacity(n);
    let mut guard_a = NegativeGuard::new(opts.negative_tolerance);
    let mut guard_b = NegativeGuard::new(opts.negative_tolerance);

    for i in 1..=n {
        let t = grid.knot(i);
        let s_b = ensure_finite(process.sf_unchecked(b[i], t, x0, t0), "1 - F(b|x0)")?;
        let s_a = ensure_finite(process.cdf_unchecked(a[i], t, x0, t0), "F(a|x0)")?;

        // j runs over 1..i, stored at offset j - 1
        let corr_b = chunked_sum(i - 1, opts.parallel, |m| {
            let j = m + 1;
            k_ba.at(i, j) * ga[j] + k_bb.at(i, j) * gb[j]
        });
        let corr_a = chunked_sum(i - 1, opts.parallel, |m| {
            let j = m + 1;
            k_aa.at(i, j) * ga[j] + k_ab.at(i, j) * gb[j]
        });

        let raw_b = 2.0 * s_b / h - 2.0 * corr_b;
        let raw_a = 2.0 * s_a / h - 2.0 * corr_a;
        let (vb, cb) = guard_b.admit(raw_b, "g_upper", t)?;
        let (va, ca) = guard_a.admit(raw_a, "g_lower", t)?;
        gb[i] = raw_b;
        ga[i] = raw_a;
        lower_out.push(va);
        upper_out.push(vb);
        clamped.push(ca || cb);
    }

    Ok(SubDensityPair { grid, lower: lower_out, upper: upper_out, clamped })
}

/// Which side of the start the single boundary lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    BelowStart,
    AboveStart,
}

/// First-passage density through one boundary on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FptDensity {
    pub grid: TimeGrid,
    pub pdf: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl FptDensity {
    /// Running `h·Σ f̂`, clipped to `[0, 1]`.
    pub fn cdf(&self) -> Vec<f64> {
        let h = self.grid.h;
        self.pdf
            .iter()
            .scan(0.0, |acc, f| {
                *acc += h * f;
                Some(acc.clamp(0.0, 1.0))
            })
            .collect()
    }
}

fn check_side(process: &Process, bd: &Boundary, side: Side) -> Result<()> {
    let c = bd.eval(process.t0())?;
    let ok = match side {
        Side::BelowStart => c < process.x0(),
        Side::AboveStart => c > process.x0(),
    };
    if ok {
        Ok(())
    } else {
        Err(FptError::InvalidStrip(format!("boundary value {c} is not {side:?} x0 = {}", process.x0())))
    }
}

/// Solve the one-boundary equation `F(c(t)|x0,t0) = ∫ F(c(t)|c(τ),τ) f(τ) dτ`
/// (with survival functions when the boundary is above the start).
pub fn solve_single_boundary(process: &Process, bd: &Boundary, side: Side, grid: TimeGrid) -> Result<FptDensity> {
    solve_single_boundary_with(process, bd, side, grid, &SolverOptions::default())
}

pub fn solve_single_boundary_with(
    process: &Process,
    bd: &Boundary,
    side: Side,
    grid: TimeGrid,
    opts: &SolverOptions,
) -> Result<FptDensity> {
    check_side(process, bd, side)?;
    if grid.t0 != process.t0() {
        return Err(FptError::GridMismatch(format!("grid t0 {} differs from process t0 {}", grid.t0, process.t0())));
    }
    let c = boundary_values(bd, &grid)?;
    for (i, &v) in c.iter().enumerate() {
        if !process.contains(v) {
            return Err(FptError::InvalidStrip(format!("boundary value {v} at t={} outside the diffusion interval", grid.knot(i))));
        }
    }
    let survival = side == Side::AboveStart;
    let lagged = process.time_homogeneous() && bd.is_constant();
    let kernel = Kernel::new(process, grid, &c, &c, survival, lagged);
    let (x0, t0) = (process.x0(), process.t0());
    let drive = |i: usize| {
        let t = grid.knot(i);
        if survival {
            process.sf_unchecked(c[i], t, x0, t0)
        } else {
            process.cdf_unchecked(c[i], t, x0, t0)
        }
    };
    let (pdf, clamped) = single_recursion(&kernel, grid, 0, drive, opts)?;
    Ok(FptDensity { grid, pdf, clamped })
}

/// Euler recursion for a start at knot `start` with driving term `drive(i)`,
/// producing values at knots `start+1..=n`.
fn single_recursion<K: TransitionKernel, D: Fn(usize) -> f64>(
    kernel: &Kernel<'_, K>,
    grid: TimeGrid,
    start: usize,
    drive: D,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let h = grid.h;
    let len = grid.n - start;
    let mut raw = vec![0.0; len];
    let mut out = vec![0.0; len];
    let mut clamped = vec![false; len];
    let mut guard = NegativeGuard::new(opts.negative_tolerance);
    for m in 0..len {
        let i = start + 1 + m;
        let s = ensure_finite(drive(i), "driving term")?;
        let corr = chunked_sum(m, opts.parallel, |q| kernel.at(i, start + 1 + q) * raw[q]);
        raw[m] = 2.0 * s / h - 2.0 * corr;
        (out[m], clamped[m]) = guard.admit(raw[m], "fpt pdf", grid.knot(i))?;
    }
    Ok((out, clamped))
}

/// Densities of the first passage through `to` for the process restarted on
/// `from` at each knot `t_j`, `j = 1..n−1`. Entry `j − 1` holds the values at
/// knots `j+1..=n`.
pub fn restart_family(
    process: &Process,
    from: &Boundary,
    to: &Boundary,
    side: Side,
    grid: TimeGrid,
    opts: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    let c_from = boundary_values(from, &grid)?;
    let c_to = boundary_values(to, &grid)?;
    let survival = side == Side::AboveStart;
    let n = grid.n;
    // full lower-triangular kernel table, row i holds j = 1..i-1
    let mut table = Vec::with_capacity(n * (n + 1) / 2);
    let mut row_start = vec![0usize; n + 1];
    for i in 1..=n {
        row_start[i] = table.len();
        let t = grid.knot(i);
        for j in 1..i {
            let tau = grid.knot(j);
            table.push(if survival {
                process.sf_unchecked(c_to[i], t, c_to[j], tau)
            } else {
                process.cdf_unchecked(c_to[i], t, c_to[j], tau)
            });
        }
    }
    let at = |i: usize, j: usize| table[row_start[i] + j - 1];
    let h = grid.h;
    (1..n)
        .into_par_iter()
        .map(|j0| {
            let ok = match side {
                Side::AboveStart => c_to[j0] > c_from[j0],
                Side::BelowStart => c_to[j0] < c_from[j0],
            };
            if !ok {
                return Err(FptError::InvalidStrip(format!("restart at t={} is not {side:?}", grid.knot(j0))));
            }
            let tau = grid.knot(j0);
            let len = n - j0;
            let mut raw = vec![0.0; len];
            let mut f = vec![0.0; len];
            let mut guard = NegativeGuard::new(opts.negative_tolerance);
            for m in 0..len {
                let i = j0 + 1 + m;
                let t = grid.knot(i);
                let s = if survival {
                    process.sf_unchecked(c_to[i], t, c_from[j0], tau)
                } else {
                    process.cdf_unchecked(c_to[i], t, c_from[j0], tau)
                };
                let s = ensure_finite(s, "restart driving term")?;
                let corr: f64 = (0..m).map(|q| at(i, j0 + 1 + q) * raw[q]).sum();
                raw[m] = 2.0 * s / h - 2.0 * corr;
                f[m] = guard.admit(raw[m], "restart pdf", t)?.0;
            }
            Ok(f)
        })
        .collect()
}

/// Reference used by [`convergence_study`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// Image series; standard Brownian motion with constant boundaries only.
    ClosedForm(SeriesControl),
    /// Solution on the smallest step in the list.
    FinestGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    /// Largest `|ĝ − g|` over both sub-densities at the common coarse knots.
    pub max_errors: Vec<f64>,
    /// Mean squared deviation over both sub-densities at the common coarse knots.
    pub mse: Vec<f64>,
    /// Least-squares slope of `ln(max_error)` against `ln(h)`; `None` with fewer
    /// than two nonzero errors.
    pub empirical_order: Option<f64>,
}

impl ConvergenceReport {
    /// `max_errors[k] / max_errors[k + 1]`.
    pub fn ratios(&self) -> Vec<f64> {
        self.max_errors.windows(2).map(|w| w[0] / w[1]).collect()
    }
}

/// Measure solver error on `(t0, horizon]` for each step in `h_list`.
pub fn convergence_study(sp: &StripProblem, h_list: &[f64], reference: Reference, horizon: f64) -> Result<ConvergenceReport> {
    if h_list.is_empty() {
        return Err(FptError::InvalidParameter("empty step list".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(FptError::InvalidParameter("steps must be strictly decreasing".into()));
    }
    let t0 = sp.process.t0();
    let coarse = TimeGrid::covering(t0, h_list[0], horizon)?;
    let refine: Vec<usize> = h_list
        .iter()
        .map(|&h| {
            let r = h_list[0] / h;
            if (r - r.round()).abs() > 1e-9 * r {
                Err(FptError::InvalidParameter(format!("step {h} does not divide the coarsest step {}", h_list[0])))
            } else {
                Ok(r.round() as usize)
            }
        })
        .collect::<Result<_>>()?;

    let solve = |k: usize| -> Result<SubDensityPair> {
        let grid = TimeGrid::new(t0, h_list[k], coarse.n * refine[k])?;
        solve_two_boundary(sp, grid)
    };
    let sample = |pair: &SubDensityPair, r: usize| -> (Vec<f64>, Vec<f64>) {
        (1..=coarse.n).map(|m| (pair.lower[m * r - 1], pair.upper[m * r - 1])).unzip()
    };

    let (ref_lower, ref_upper) = match reference {
        Reference::ClosedForm(ctl) => {
            let pair = SubDensityPair::closed_form(sp, coarse, &ctl)?;
            (pair.lower, pair.upper)
        }
        Reference::FinestGrid => {
            let last = h_list.len() - 1;
            sample(&solve(last)?, refine[last])
        }
    };

    let mut max_errors = Vec::with_capacity(h_list.len());
    let mut mse = Vec::with_capacity(h_list.len());
    for k in 0..h_list.len() {
        let (lo, up) = sample(&solve(k)?, refine[k]);
        let deviations: Vec<f64> = lo
            .iter()
            .zip(&ref_lower)
            .chain(up.iter().zip(&ref_upper))
            .map(|(x, y)| x - y)
            .collect();
        max_errors.push(deviations.iter().fold(0.0f64, |m, d| m.max(d.abs())));
        mse.push(deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64);
    }

    let points: Vec<(f64, f64)> = h_list
        .iter()
        .zip(&max_errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    let empirical_order = (points.len() >= 2).then(|| least_squares_slope(&points));
    Ok(ConvergenceReport { steps: h_list.to_vec(), max_errors, mse, empirical_order })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
