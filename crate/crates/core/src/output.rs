//! CSV writers. Numbers use the shortest decimal that round-trips, so reruns
//! produce byte-identical files.

use std::io::{self, Write};

use crate::joint::{CopulaSurface, JointDensitySurface, MarginalTable};
use crate::mc::HittingTimeSample;
use crate::volterra::{ConvergenceReport, SubDensityPair};

fn num(x: f64) -> String {
    format!("{x}")
}

fn flag(b: bool) -> u8 {
    b as u8
}

pub fn write_sub_densities<W: Write>(mut w: W, pair: &SubDensityPair) -> io::Result<()> {
    writeln!(w, "t,g_lower,g_upper,clamped")?;
    for (i, t) in pair.grid.knots().enumerate() {
        writeln!(w, "{},{},{},{}", num(t), num(pair.lower[i]), num(pair.upper[i]), flag(pair.clamped[i]))?;
    }
    Ok(())
}

/// Same layout as [`write_sub_densities`]; the inversion never clamps.
pub fn write_sub_densities_laplace<W: Write>(mut w: W, pair: &SubDensityPair) -> io::Result<()> {
    writeln!(w, "t,g_lower,g_upper,method=laplace")?;
    for (i, t) in pair.grid.knots().enumerate() {
        writeln!(w, "{},{},{},0", num(t), num(pair.lower[i]), num(pair.upper[i]))?;
    }
    Ok(())
}

/// Part of a surface to emit: knots `stride, 2·stride, …` up to `t_knots` and
/// `s_knots`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceWindow {
    pub t_knots: usize,
    pub s_knots: usize,
    pub stride: usize,
}

impl SurfaceWindow {
    pub fn full(surface: &JointDensitySurface) -> Self {
        Self { t_knots: surface.t_grid.n, s_knots: surface.s_grid.n, stride: 1 }
    }

    fn rows(&self) -> impl Iterator<Item = usize> {
        (self.stride..=self.t_knots).step_by(self.stride.max(1))
    }

    fn cols(&self) -> impl Iterator<Item = usize> {
        (self.stride..=self.s_knots).step_by(self.stride.max(1))
    }
}

pub fn write_joint_long<W: Write>(mut w: W, surface: &JointDensitySurface, win: SurfaceWindow) -> io::Result<()> {
    writeln!(w, "t,s,value")?;
    for i in win.rows() {
        let t = num(surface.t_grid.knot(i));
        for j in win.cols() {
            writeln!(w, "{t},{},{}", num(surface.s_grid.knot(j)), num(surface.value(i, j)))?;
        }
    }
    Ok(())
}

/// Dense matrix, one line per t-knot.
pub fn write_joint_matrix<W: Write>(mut w: W, surface: &JointDensitySurface, win: SurfaceWindow) -> io::Result<()> {
    writeln!(w, "# rows=t cols=s h={}", num(surface.h() * win.stride as f64))?;
    for i in win.rows() {
        let row: Vec<String> = win.cols().map(|j| num(surface.value(i, j))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Uncovered cells are written as `NaN`.
pub fn write_copula<W: Write>(mut w: W, cop: &CopulaSurface) -> io::Result<()> {
    writeln!(w, "u,v,density")?;
    for (k, u) in cop.u.iter().enumerate() {
        for (l, v) in cop.u.iter().enumerate() {
            writeln!(w, "{},{},{}", num(*u), num(*v), num(cop.get(k, l).unwrap_or(f64::NAN)))?;
        }
    }
    Ok(())
}

pub fn write_quantiles<W: Write>(mut w: W, cop: &CopulaSurface) -> io::Result<()> {
    writeln!(w, "u,t_quantile,s_quantile")?;
    for (k, u) in cop.u.iter().enumerate() {
        let q = |v: Option<f64>| num(v.unwrap_or(f64::NAN));
        writeln!(w, "{},{},{}", num(*u), q(cop.t_quantiles[k]), q(cop.s_quantiles[k]))?;
    }
    Ok(())
}

pub fn write_marginal<W: Write>(mut w: W, table: &MarginalTable) -> io::Result<()> {
    writeln!(w, "t,pdf,cdf")?;
    for (i, t) in table.grid.knots().enumerate() {
        writeln!(w, "{},{},{}", num(t), num(table.pdf[i]), num(table.cdf[i]))?;
    }
    Ok(())
}

pub fn write_samples<W: Write>(mut w: W, samples: &[HittingTimeSample]) -> io::Result<()> {
    writeln!(w, "t_lower,t_upper,first_hit,censored_lower,censored_upper")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            num(s.t_lower),
            num(s.t_upper),
            s.first_hit.as_str(),
            flag(s.censored_lower),
            flag(s.censored_upper)
        )?;
    }
    Ok(())
}

/// Per-step errors followed by `# order=<p>` (or `not-available`).
pub fn write_convergence<W: Write>(mut w: W, report: &ConvergenceReport) -> io::Result<()> {
    writeln!(w, "h,max_error,mse")?;
    for k in 0..report.steps.len() {
        writeln!(w, "{},{},{}", num(report.steps[k]), num(report.max_errors[k]), num(report.mse[k]))?;
    }
    match report.empirical_order {
        Some(p) => writeln!(w, "# order={}", num(p)),
        None => writeln!(w, "# order=not-available"),
    }
}
