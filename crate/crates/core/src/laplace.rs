//! Laplace transforms of the sub-densities for constant boundaries and their
//! numerical inversion.
//!
//! Transforms are taken in elapsed time `t − t0`. All evaluators accept complex
//! `λ` so they can feed the Fourier-series inversion directly.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::StripProblem;
use crate::error::{FptError, Result};
use crate::process::Process;
use crate::volterra::{SubDensityPair, TimeGrid};

/// Smallest denominator accepted before reporting a conditioning error.
const SINGULAR_DENOMINATOR: f64 = 1e-300;

/// Which of the three equivalent transform formulas to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Representation {
    /// Hitting-time transforms of the single levels.
    ItoMcKean,
    /// Transforms of the transition CDF.
    Fortet,
    /// Transforms of the transition density at probes `x1 > b` and `x2 < a`.
    DensityRatio { x1: f64, x2: f64 },
}

fn check_lambda(lambda: Complex64) -> Result<()> {
    if lambda.re.is_finite() && lambda.im.is_finite() && lambda.re > 0.0 {
        Ok(())
    } else {
        Err(FptError::Domain(format!("transform argument needs Re λ > 0, got {lambda}")))
    }
}

fn root(lambda: Complex64) -> Complex64 {
    (2.0 * lambda).sqrt()
}

/// `E[exp(−λ T)]` for a standard Brownian motion hitting `level` from `x0`.
pub fn bm_fpt_laplace(x0: f64, level: f64, lambda: f64) -> Result<f64> {
    Ok(bm_fpt_laplace_complex(x0, level, Complex64::new(lambda, 0.0))?.re)
}

pub fn bm_fpt_laplace_complex(x0: f64, level: f64, lambda: Complex64) -> Result<Complex64> {
    check_lambda(lambda)?;
    Ok((-(x0 - level).abs() * root(lambda)).exp())
}

/// `∫ e^{−λt} P(W(t) ≤ x | W(0) = y) dt` for a standard Brownian motion.
pub fn bm_transition_cdf_laplace(x: f64, y: f64, lambda: Complex64) -> Result<Complex64> {
    check_lambda(lambda)?;
    let half = 0.5 / lambda;
    let e = (-(x - y).abs() * root(lambda)).exp();
    Ok(if x < y { half * e } else { 1.0 / lambda - half * e })
}

/// `∫ e^{−λt} P(W(t) > x | W(0) = y) dt`, so that `1 − λF^λ = λS^λ` without
/// cancellation.
pub fn bm_transition_sf_laplace(x: f64, y: f64, lambda: Complex64) -> Result<Complex64> {
    check_lambda(lambda)?;
    let half = 0.5 / lambda;
    let e = (-(x - y).abs() * root(lambda)).exp();
    Ok(if x > y { half * e } else { 1.0 / lambda - half * e })
}

/// `∫ e^{−λt} f_{W(t)}(x | W(0) = y) dt`.
pub fn bm_transition_pdf_laplace(x: f64, y: f64, lambda: Complex64) -> Result<Complex64> {
    check_lambda(lambda)?;
    let u = root(lambda);
    Ok((-(x - y).abs() * u).exp() / u)
}

fn ratio(num: Complex64, den: Complex64, what: &str) -> Result<Complex64> {
    if !(den.norm() >= SINGULAR_DENOMINATOR) {
        return Err(FptError::Conditioning(format!("{what} denominator {den} is numerically singular")));
    }
    let v = num / den;
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(FptError::NonFinite(format!("{what} transform evaluated to {v}")))
    }
}

/// Transform pair `(g_a^λ, g_b^λ)` for a standard Brownian motion in `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEvaluator {
    pub representation: Representation,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
}

impl LaplaceEvaluator {
    pub fn new(representation: Representation, process: &Process, a: f64, b: f64) -> Result<Self> {
        if !process.is_standard_brownian() {
            return Err(FptError::Unsupported(format!(
                "closed-form transform inputs exist for standard Brownian motion only, not {}",
                process.kind().name()
            )));
        }
        let x0 = process.x0();
        if !(a < x0 && x0 < b) {
            return Err(FptError::InvalidStrip(format!("need a < x0 < b, got a={a}, x0={x0}, b={b}")));
        }
        if let Representation::DensityRatio { x1, x2 } = representation {
            if !(x1 > b && x2 < a) {
                return Err(FptError::InvalidParameter(format!("probes need x1 > b and x2 < a, got x1={x1}, x2={x2}")));
            }
        }
        Ok(Self { representation, a, b, x0 })
    }

    /// Evaluator for a strip problem with constant boundaries.
    pub fn for_problem(representation: Representation, sp: &StripProblem) -> Result<Self> {
        let (a, b) = sp
            .constant_boundaries()
            .ok_or_else(|| FptError::Unsupported("Laplace route requires constant boundaries".into()))?;
        Self::new(representation, &sp.process, a, b)
    }

    pub fn eval(&self, lambda: f64) -> Result<(f64, f64)> {
        let (ga, gb) = self.eval_complex(Complex64::new(lambda, 0.0))?;
        Ok((ga.re, gb.re))
    }

    pub fn eval_complex(&self, lambda: Complex64) -> Result<(Complex64, Complex64)> {
        check_lambda(lambda)?;
        let (a, b, x0) = (self.a, self.b, self.x0);
        match self.representation {
            Representation::ItoMcKean => {
                let ta_x0 = bm_fpt_laplace_complex(x0, a, lambda)?;
                let tb_x0 = bm_fpt_laplace_complex(x0, b, lambda)?;
                let ta_b = bm_fpt_laplace_complex(b, a, lambda)?;
                let tb_a = bm_fpt_laplace_complex(a, b, lambda)?;
                let den = ta_b * tb_a - 1.0;
                Ok((
                    ratio(tb_x0 * ta_b - ta_x0, den, "ito-mckean")?,
                    ratio(ta_x0 * tb_a - tb_x0, den, "ito-mckean")?,
                ))
            }
            Representation::Fortet => {
                let s = |y: f64| bm_transition_sf_laplace(b, y, lambda).map(|v| lambda * v);
                let f = |y: f64| bm_transition_cdf_laplace(a, y, lambda);
                let (s_x0, s_a, s_b) = (s(x0)?, s(a)?, s(b)?);
                let (f_x0, f_a, f_b) = (f(x0)?, f(a)?, f(b)?);
                Ok((
                    ratio(s_x0 * f_b - s_b * f_x0, s_a * f_b - s_b * f_a, "fortet")?,
                    ratio(s_x0 * f_a - s_a * f_x0, s_b * f_a - s_a * f_b, "fortet")?,
                ))
            }
            Representation::DensityRatio { x1, x2 } => {
                // every product pairs an x1 factor with an x2 factor, so divide
                // through by f(x1, b)·f(x2, a) in log space to avoid underflow
                let ln_f = |x: f64, y: f64| -(x - y).abs() * root(lambda) - root(lambda).ln();
                let f1 = |y: f64| (ln_f(x1, y) - ln_f(x1, b)).exp();
                let f2 = |y: f64| (ln_f(x2, y) - ln_f(x2, a)).exp();
                let den = f1(a) * f2(b) - 1.0;
                Ok((
                    ratio(f1(x0) * f2(b) - f2(x0), den, "density-ratio")?,
                    ratio(f1(a) * f2(x0) - f1(x0), den, "density-ratio")?,
                ))
            }
        }
    }
}

/// Real-`λ` convenience wrapper returning `(g_a^λ, g_b^λ)`.
pub fn sub_density_laplace(rep: Representation, process: &Process, a: f64, b: f64, lambda: f64) -> Result<(f64, f64)> {
    LaplaceEvaluator::new(rep, process, a, b)?.eval(lambda)
}

/// Parameters of the Euler-summation Fourier-series inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionControl {
    /// Total number of series terms, including those averaged.
    pub terms: usize,
    /// Binomial averaging is over the last `euler_order + 1` partial sums.
    pub euler_order: usize,
    /// The discretization error is about `10^{−precision_decimals}`.
    pub precision_decimals: u32,
}

impl Default for InversionControl {
    fn default() -> Self {
        Self { terms: 50, euler_order: 11, precision_decimals: 10 }
    }
}

impl InversionControl {
    pub fn validate(&self) -> Result<()> {
        if self.terms < 10 {
            return Err(FptError::InvalidParameter(format!("inversion needs terms >= 10, got {}", self.terms)));
        }
        if self.euler_order >= self.terms {
            return Err(FptError::InvalidParameter("euler_order must be below terms".into()));
        }
        if self.precision_decimals == 0 || self.precision_decimals > 15 {
            return Err(FptError::InvalidParameter(format!(
                "precision_decimals must be in 1..=15, got {}",
                self.precision_decimals
            )));
        }
        Ok(())
    }
}

/// Invert a transform at each time in `times` (all `> 0`).
pub fn invert<F>(transform: F, times: &[f64], ctl: &InversionControl) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    ctl.validate()?;
    times.par_iter().map(|&t| invert_one(&transform, t, ctl)).collect()
}

fn invert_one<F>(transform: &F, t: f64, ctl: &InversionControl) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(FptError::Domain(format!("inversion time must be > 0, got {t}")));
    }
    let big_a = ctl.precision_decimals as f64 * std::f64::consts::LN_10;
    let m = ctl.euler_order;
    let n = ctl.terms - m;
    let value = |k: usize| -> Result<f64> {
        let s = Complex64::new(big_a, 2.0 * std::f64::consts::PI * k as f64) / (2.0 * t);
        let v = transform(s)?.re;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FptError::NonFinite(format!("transform is not finite at λ = {s}")))
        }
    };

    let mut partial = 0.5 * value(0)?;
    for k in 1..=n {
        partial += sign(k) * value(k)?;
    }
    // binomial average of the partial sums s_n .. s_{n+m}
    let mut weight = 0.5f64.powi(m as i32);
    let mut averaged = weight * partial;
    for j in 1..=m {
        partial += sign(n + j) * value(n + j)?;
        weight *= (m - j + 1) as f64 / j as f64;
        averaged += weight * partial;
    }
    Ok((0.5 * big_a).exp() / t * averaged)
}

fn sign(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Invert `(g_a^λ, g_b^λ)` on the knots of `grid`.
pub fn invert_sub_densities(ev: &LaplaceEvaluator, grid: TimeGrid, ctl: &InversionControl) -> Result<SubDensityPair> {
    let elapsed: Vec<f64> = (1..=grid.n).map(|i| i as f64 * grid.h).collect();
    let lower = invert(|s| ev.eval_complex(s).map(|v| v.0), &elapsed, ctl)?;
    let upper = invert(|s| ev.eval_complex(s).map(|v| v.1), &elapsed, ctl)?;
    Ok(SubDensityPair { grid, lower, upper, clamped: vec![false; grid.n] })
}
