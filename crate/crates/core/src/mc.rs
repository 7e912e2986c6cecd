//! Euler–Maruyama simulation of both hitting times, used as an independent
//! check on the densities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::StripProblem;
use crate::error::{FptError, Result};
use crate::joint::{JointDensitySurface, MarginalTable};
use crate::process::ProcessKind;
use crate::volterra::SubDensityPair;

/// Fewest uncensored hitting times accepted by [`compare_marginal`].
pub const MIN_UNCENSORED: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    pub dt: f64,
    /// Absolute time at which paths are censored.
    pub horizon: f64,
    pub seed: u64,
    /// Worker threads; 0 uses the ambient rayon pool. Path `i` always draws from
    /// ChaCha8 stream `i` of `seed`, so the count never changes the output.
    #[serde(default)]
    pub workers: usize,
}

impl SimConfig {
    pub fn validate(&self, sp: &StripProblem) -> Result<()> {
        if self.n_paths == 0 {
            return Err(FptError::InvalidParameter("n_paths must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FptError::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon > sp.process.t0()) || !self.horizon.is_finite() {
            return Err(FptError::InvalidParameter(format!("horizon {} must exceed t0", self.horizon)));
        }
        Ok(())
    }

    /// A warning when `dt` is coarse relative to the narrowest strip width.
    pub fn dt_warning(&self, sp: &StripProblem) -> Option<String> {
        let report = sp.validate(self.horizon, (self.horizon - sp.process.t0()) / 1000.0);
        let gap = report.min_gap;
        (gap.is_finite() && self.dt > (gap / 10.0).powi(2))
            .then(|| format!("dt = {} exceeds (min gap / 10)^2 = {}", self.dt, (gap / 10.0).powi(2)))
    }

    fn steps(&self, t0: f64) -> usize {
        ((self.horizon - t0) / self.dt).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FirstHit {
    Lower,
    Upper,
    None,
}

impl FirstHit {
    pub fn as_str(&self) -> &'static str {
        match self {
            FirstHit::Lower => "lower",
            FirstHit::Upper => "upper",
            FirstHit::None => "none",
        }
    }
}

/// Both hitting times of one path; censored times hold the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingTimeSample {
    pub t_lower: f64,
    pub t_upper: f64,
    pub censored_lower: bool,
    pub censored_upper: bool,
    pub first_hit: FirstHit,
    /// Index of the path, which is also its RNG stream.
    pub path_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HittingTime {
    Lower,
    Upper,
}

impl HittingTimeSample {
    pub fn time(&self, which: HittingTime) -> Option<f64> {
        match which {
            HittingTime::Lower => (!self.censored_lower).then_some(self.t_lower),
            HittingTime::Upper => (!self.censored_upper).then_some(self.t_upper),
        }
    }
}

/// One Euler–Maruyama step of the Gaussian coordinate.
#[derive(Clone, Copy)]
enum Stepper {
    Brownian { scale: f64 },
    OrnsteinUhlenbeck { theta: f64, mu: f64, scale: f64 },
}

impl Stepper {
    fn new(kind: ProcessKind, dt: f64) -> Self {
        let root = dt.sqrt();
        match kind {
            ProcessKind::StandardBrownian | ProcessKind::GeometricBrownian { .. } => Stepper::Brownian { scale: root },
            ProcessKind::ScaledBrownian { sigma } => Stepper::Brownian { scale: sigma * root },
            ProcessKind::OrnsteinUhlenbeck { theta, mu, sigma } => Stepper::OrnsteinUhlenbeck { theta, mu, scale: sigma * root },
        }
    }

    #[inline]
    fn step(&self, x: f64, dt: f64, z: f64) -> f64 {
        match *self {
            Stepper::Brownian { scale } => x + scale * z,
            Stepper::OrnsteinUhlenbeck { theta, mu, scale } => x + (-x / theta + mu) * dt + scale * z,
        }
    }
}

/// Simulate `cfg.n_paths` paths until both boundaries are hit or the horizon.
pub fn simulate_pair(sp: &StripProblem, cfg: &SimConfig) -> Result<Vec<HittingTimeSample>> {
    cfg.validate(sp)?;
    let p = &sp.process;
    let t0 = p.t0();
    let steps = cfg.steps(t0);
    sp.require_valid(t0 + steps as f64 * cfg.dt, cfg.dt)?;

    // boundaries in the coordinate where the path is simulated, one per step
    let coord = |v: f64| p.coordinate(v);
    let lower: Vec<f64> = (0..=steps).map(|k| sp.lower.eval(t0 + k as f64 * cfg.dt).map(coord)).collect::<Result<_>>()?;
    let upper: Vec<f64> = (0..=steps).map(|k| sp.upper.eval(t0 + k as f64 * cfg.dt).map(coord)).collect::<Result<_>>()?;
    let x0 = coord(p.x0());
    // a boundary is reached once (X − c)·side ≤ 0
    let side = |c: f64| if x0 > c { 1.0 } else { -1.0 };
    let (side_a, side_b) = (side(lower[0]), side(upper[0]));
    let stepper = Stepper::new(p.kind(), cfg.dt);
    let (dt, horizon, seed) = (cfg.dt, t0 + steps as f64 * cfg.dt, cfg.seed);

    let run = |i: usize| -> HittingTimeSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut x = x0;
        let mut hit_a: Option<usize> = None;
        let mut hit_b: Option<usize> = None;
        let mut first = FirstHit::None;
        for k in 1..=steps {
            let prev = x;
            x = stepper.step(x, dt, StandardNormal.sample(&mut rng));
            let now_a = hit_a.is_none() && (x - lower[k]) * side_a <= 0.0;
            let now_b = hit_b.is_none() && (x - upper[k]) * side_b <= 0.0;
            if now_a {
                hit_a = Some(k);
            }
            if now_b {
                hit_b = Some(k);
            }
            if first == FirstHit::None && (now_a || now_b) {
                first = match (now_a, now_b) {
                    (true, false) => FirstHit::Lower,
                    (false, true) => FirstHit::Upper,
                    // both in one step: the boundary nearer the previous state
                    _ if (prev - lower[k - 1]).abs() <= (prev - upper[k - 1]).abs() => FirstHit::Lower,
                    _ => FirstHit::Upper,
                };
            }
            if hit_a.is_some() && hit_b.is_some() {
                break;
            }
        }
        let time = |h: Option<usize>| h.map_or(horizon, |k| t0 + k as f64 * dt);
        HittingTimeSample {
            t_lower: time(hit_a),
            t_upper: time(hit_b),
            censored_lower: hit_a.is_none(),
            censored_upper: hit_b.is_none(),
            first_hit: first,
            path_seed: i as u64,
        }
    };

    let simulate = || (0..cfg.n_paths).into_par_iter().map(run).collect::<Vec<_>>();
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| FptError::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(simulate))
    } else {
        Ok(simulate())
    }
}

/// Fraction of paths whose first hit is `which`.
pub fn first_hit_fraction(samples: &[HittingTimeSample], which: FirstHit) -> f64 {
    samples.iter().filter(|s| s.first_hit == which).count() as f64 / samples.len() as f64
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical CDF of one
/// hitting time and `cdf`. Censored samples count in the denominator only and
/// the supremum runs over the uncensored range.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[HittingTimeSample], which: HittingTime, cdf: F) -> Result<f64> {
    let mut times: Vec<f64> = samples.iter().filter_map(|s| s.time(which)).collect();
    if times.is_empty() {
        return Err(FptError::InsufficientSamples("no uncensored hitting times".into()));
    }
    times.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    while k < times.len() {
        // step over ties so the jump is taken in one piece
        let t = times[k];
        let before = k as f64 / n;
        while k < times.len() && times[k] == t {
            k += 1;
        }
        let after = k as f64 / n;
        let f = cdf(t);
        worst = worst.max((f - before).abs()).max((f - after).abs());
    }
    Ok(worst)
}

/// KS distance against a tabulated marginal, linearly interpolated.
pub fn compare_marginal(samples: &[HittingTimeSample], which: HittingTime, table: &MarginalTable) -> Result<f64> {
    let uncensored = samples.iter().filter(|s| s.time(which).is_some()).count();
    if uncensored < MIN_UNCENSORED {
        return Err(FptError::InsufficientSamples(format!("{uncensored} uncensored hitting times, need {MIN_UNCENSORED}")));
    }
    let last = table.grid.horizon();
    if let Some(beyond) = samples.iter().filter_map(|s| s.time(which)).find(|&t| t > last) {
        return Err(FptError::GridMismatch(format!("hitting time {beyond} lies beyond the table horizon {last}")));
    }
    let g = table.grid;
    ks_distance(samples, which, |t| {
        let x = (t - g.t0) / g.h;
        if x <= 0.0 {
            return 0.0;
        }
        let i = (x.floor() as usize).min(g.n - 1);
        let f = x - i as f64;
        let at = |k: usize| if k == 0 { 0.0 } else { table.cdf[k - 1] };
        (1.0 - f) * at(i) + f * at(i + 1)
    })
}

/// Bins `(t0 + k·w, t0 + (k+1)·w]`, `k = 0..n_bins`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub t0: f64,
    pub width: f64,
    pub n_bins: usize,
}

impl Binning {
    fn index(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.width;
        if x <= 0.0 {
            return None;
        }
        let k = x.ceil() as usize - 1;
        (k < self.n_bins).then_some(k)
    }

    /// Knots `1..=n` of a grid with step `h` that fall in bin `k`.
    fn knots(&self, k: usize, h: f64, n: usize) -> std::ops::RangeInclusive<usize> {
        let per = (self.width / h).round() as usize;
        (k * per + 1)..=((k + 1) * per).min(n)
    }

    fn check_grid(&self, h: f64, t0: f64) -> Result<()> {
        let per = self.width / h;
        if (per - per.round()).abs() > 1e-9 * per || per.round() < 1.0 || t0 != self.t0 {
            return Err(FptError::GridMismatch(format!("bin width {} is not a multiple of the grid step {h}", self.width)));
        }
        Ok(())
    }
}

/// Empirical sub-density of the hitting time of `which` among paths that hit it
/// first: counts per bin over `(n_paths · w)`.
pub fn sub_density_histogram(samples: &[HittingTimeSample], which: HittingTime, bins: &Binning) -> Vec<f64> {
    let mut counts = vec![0usize; bins.n_bins];
    for s in samples {
        let t = match (which, s.first_hit) {
            (HittingTime::Lower, FirstHit::Lower) => s.t_lower,
            (HittingTime::Upper, FirstHit::Upper) => s.t_upper,
            _ => continue,
        };
        if let Some(k) = bins.index(t) {
            counts[k] += 1;
        }
    }
    let norm = samples.len() as f64 * bins.width;
    counts.into_iter().map(|c| c as f64 / norm).collect()
}

/// Bin averages `h·Σ ĝ / w` of one sub-density.
pub fn sub_density_bin_averages(sub: &SubDensityPair, which: HittingTime, bins: &Binning) -> Result<Vec<f64>> {
    bins.check_grid(sub.grid.h, sub.grid.t0)?;
    let values = match which {
        HittingTime::Lower => &sub.lower,
        HittingTime::Upper => &sub.upper,
    };
    Ok((0..bins.n_bins)
        .map(|k| bins.knots(k, sub.grid.h, values.len()).map(|i| values[i - 1]).sum::<f64>() * sub.grid.h / bins.width)
        .collect())
}

/// Empirical joint density of `(T_a, T_b)` on `n_bins × n_bins` square bins,
/// rows indexed by `T_a`.
pub fn joint_histogram(samples: &[HittingTimeSample], bins: &Binning) -> Vec<f64> {
    let n = bins.n_bins;
    let mut counts = vec![0usize; n * n];
    for s in samples.iter().filter(|s| !s.censored_lower && !s.censored_upper) {
        if let (Some(k), Some(l)) = (bins.index(s.t_lower), bins.index(s.t_upper)) {
            counts[k * n + l] += 1;
        }
    }
    let norm = samples.len() as f64 * bins.width * bins.width;
    counts.into_iter().map(|c| c as f64 / norm).collect()
}

/// Bin averages `h²·Σ f / w²` of a surface, rows indexed by `t`.
pub fn surface_bin_averages(surface: &JointDensitySurface, bins: &Binning) -> Result<Vec<f64>> {
    let h = surface.h();
    bins.check_grid(h, surface.t_grid.t0)?;
    let n = bins.n_bins;
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            let mut sum = 0.0;
            for i in bins.knots(k, h, surface.t_grid.n) {
                for j in bins.knots(l, h, surface.s_grid.n) {
                    sum += surface.value(i, j);
                }
            }
            out[k * n + l] = sum * h * h / (bins.width * bins.width);
        }
    }
    Ok(out)
}

/// Largest absolute difference between two equally sized histograms.
pub fn sup_bin_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "histograms differ in size");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
