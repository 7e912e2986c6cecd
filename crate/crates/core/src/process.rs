//! Diffusion models and their transition kernels.
//!
//! Every supported process has a Gaussian transition law in a suitable
//! coordinate: the identity for Brownian and Ornstein–Uhlenbeck processes and
//! `ln(x)/σ` for geometric Brownian motion, which is `exp(σW)` for a standard
//! Brownian motion `W`.

use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};
use crate::normal;

/// Transition kernel `F(x, t | y, τ) = P(X(t) ≤ x | X(τ) = y)` and its density.
///
/// The unchecked methods are the solver hot path; callers guarantee `t > τ` and
/// that both states lie in the diffusion interval.
pub trait TransitionKernel: Sync {
    fn cdf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64;

    /// `1 − F`, evaluated without cancellation.
    fn sf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64;

    fn pdf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64;

    /// Whether the kernel depends on `(t, τ)` only through `t − τ`.
    fn time_homogeneous(&self) -> bool;

    fn contains(&self, x: f64) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessKind {
    StandardBrownian,
    ScaledBrownian { sigma: f64 },
    GeometricBrownian { sigma: f64 },
    OrnsteinUhlenbeck { theta: f64, mu: f64, sigma: f64 },
}

impl ProcessKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::StandardBrownian => "standard-brownian",
            ProcessKind::ScaledBrownian { .. } => "scaled-brownian",
            ProcessKind::GeometricBrownian { .. } => "geometric-brownian",
            ProcessKind::OrnsteinUhlenbeck { .. } => "ornstein-uhlenbeck",
        }
    }
}

/// A diffusion started at `x0` at time `t0`. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Process {
    kind: ProcessKind,
    x0: f64,
    t0: f64,
}

fn positive(value: f64, name: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FptError::InvalidParameter(format!("{name} must be > 0, got {value}")))
    }
}

impl Process {
    pub fn new(kind: ProcessKind, x0: f64, t0: f64) -> Result<Self> {
        match kind {
            ProcessKind::StandardBrownian => {}
            ProcessKind::ScaledBrownian { sigma } => positive(sigma, "sigma")?,
            ProcessKind::GeometricBrownian { sigma } => {
                positive(sigma, "sigma")?;
                positive(x0, "x0 of a geometric Brownian motion")?;
            }
            ProcessKind::OrnsteinUhlenbeck { theta, mu, sigma } => {
                positive(theta, "theta")?;
                positive(sigma, "sigma")?;
                if !mu.is_finite() {
                    return Err(FptError::InvalidParameter(format!("mu must be finite, got {mu}")));
                }
            }
        }
        if !x0.is_finite() || !t0.is_finite() {
            return Err(FptError::InvalidParameter("x0 and t0 must be finite".into()));
        }
        Ok(Self { kind, x0, t0 })
    }

    pub fn standard_brownian(x0: f64) -> Self {
        Self { kind: ProcessKind::StandardBrownian, x0, t0: 0.0 }
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Same model restarted from `(x0, t0)`.
    pub fn restarted(&self, x0: f64, t0: f64) -> Self {
        Self { kind: self.kind, x0, t0 }
    }

    pub fn is_standard_brownian(&self) -> bool {
        matches!(self.kind, ProcessKind::StandardBrownian)
    }

    /// Map a state to the coordinate in which the transition law is Gaussian.
    pub(crate) fn coordinate(&self, x: f64) -> f64 {
        match self.kind {
            ProcessKind::GeometricBrownian { sigma } => x.ln() / sigma,
            _ => x,
        }
    }

    /// Coordinate in which the process is a standard Brownian motion, for the
    /// models that are monotone images of one.
    pub(crate) fn brownian_coordinate(&self, x: f64) -> Option<f64> {
        match self.kind {
            ProcessKind::StandardBrownian => Some(x),
            ProcessKind::ScaledBrownian { sigma } => Some(x / sigma),
            ProcessKind::GeometricBrownian { sigma } => Some(x.ln() / sigma),
            ProcessKind::OrnsteinUhlenbeck { .. } => None,
        }
    }

    /// Conditional mean and standard deviation of the coordinate after `dt`,
    /// starting from coordinate `y`.
    fn moments(&self, y: f64, dt: f64) -> (f64, f64) {
        match self.kind {
            ProcessKind::StandardBrownian | ProcessKind::GeometricBrownian { .. } => (y, dt.sqrt()),
            ProcessKind::ScaledBrownian { sigma } => (y, sigma * dt.sqrt()),
            ProcessKind::OrnsteinUhlenbeck { theta, mu, sigma } => {
                let decay = (-dt / theta).exp();
                let mean = y * decay + mu * theta * (-(-dt / theta).exp_m1());
                let var = 0.5 * sigma * sigma * theta * (-(-2.0 * dt / theta).exp_m1());
                (mean, var.sqrt())
            }
        }
    }

    fn standardized(&self, x: f64, t: f64, y: f64, tau: f64) -> (f64, f64) {
        let (mean, sd) = self.moments(self.coordinate(y), t - tau);
        ((self.coordinate(x) - mean) / sd, sd)
    }

    fn check(&self, x: f64, t: f64, y: f64, tau: f64) -> Result<()> {
        if !(t > tau) {
            return Err(FptError::Domain(format!("transition requires t > tau, got t={t}, tau={tau}")));
        }
        for (name, v) in [("x", x), ("y", y)] {
            if !self.contains(v) {
                return Err(FptError::Domain(format!(
                    "{name}={v} outside the diffusion interval of {}",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }

    /// `P(X(t) ≤ x | X(τ) = y)`.
    pub fn transition_cdf(&self, x: f64, t: f64, y: f64, tau: f64) -> Result<f64> {
        self.check(x, t, y, tau)?;
        Ok(self.cdf_unchecked(x, t, y, tau))
    }

    /// `P(X(t) > x | X(τ) = y)`.
    pub fn transition_sf(&self, x: f64, t: f64, y: f64, tau: f64) -> Result<f64> {
        self.check(x, t, y, tau)?;
        Ok(self.sf_unchecked(x, t, y, tau))
    }

    /// Transition density in `x`.
    pub fn transition_pdf(&self, x: f64, t: f64, y: f64, tau: f64) -> Result<f64> {
        self.check(x, t, y, tau)?;
        Ok(self.pdf_unchecked(x, t, y, tau))
    }
}

impl TransitionKernel for Process {
    fn cdf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64 {
        normal::cdf(self.standardized(x, t, y, tau).0)
    }

    fn sf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64 {
        normal::sf(self.standardized(x, t, y, tau).0)
    }

    fn pdf_unchecked(&self, x: f64, t: f64, y: f64, tau: f64) -> f64 {
        let (z, sd) = self.standardized(x, t, y, tau);
        let jacobian = match self.kind {
            ProcessKind::GeometricBrownian { sigma } => 1.0 / (sigma * x),
            _ => 1.0,
        };
        normal::pdf(z) / sd * jacobian
    }

    fn time_homogeneous(&self) -> bool {
        true
    }

    fn contains(&self, x: f64) -> bool {
        match self.kind {
            ProcessKind::GeometricBrownian { .. } => x.is_finite() && x > 0.0,
            _ => x.is_finite(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ou() -> Process {
        Process::new(ProcessKind::OrnsteinUhlenbeck { theta: 10.0, mu: 0.0, sigma: 1.0 }, 0.0, 0.0).unwrap()
    }

    fn all_kinds() -> Vec<Process> {
        vec![
            Process::standard_brownian(0.0),
            Process::new(ProcessKind::ScaledBrownian { sigma: 2.0 }, 0.3, 0.0).unwrap(),
            Process::new(ProcessKind::GeometricBrownian { sigma: 0.5 }, 1.0, 0.0).unwrap(),
            Process::new(ProcessKind::OrnsteinUhlenbeck { theta: 2.0, mu: 0.4, sigma: 0.7 }, 0.0, 0.0).unwrap(),
        ]
    }

    #[test]
    fn bm_cdf_examples() {
        let p = Process::standard_brownian(0.0);
        assert_eq!(p.transition_cdf(0.3, 2.0, 0.3, 1.0).unwrap(), 0.5);
        let v = p.transition_cdf(0.2 + 0.5f64.sqrt(), 1.5, 0.2, 1.0).unwrap();
        assert!((v - 0.841_344_746).abs() < 1e-9);
    }

    #[test]
    fn ou_cdf_at_conditional_mean() {
        let p = ou();
        let (y, tau, t) = (0.8, 0.0, 3.0);
        let x = y * (-(t - tau) / 10.0f64).exp();
        assert!((p.transition_cdf(x, t, y, tau).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pdf_examples() {
        let p = Process::standard_brownian(0.0);
        let v = p.transition_pdf(0.0, 1.0, 0.0, 0.0).unwrap();
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        for d in [0.1, 0.7, 2.5] {
            assert_eq!(
                p.transition_pdf(1.0 + d, 2.0, 1.0, 0.5).unwrap(),
                p.transition_pdf(1.0 - d, 2.0, 1.0, 0.5).unwrap()
            );
        }
    }

    #[test]
    fn ou_pdf_normalizes() {
        let p = ou();
        let (t, y) = (1.5, 0.4);
        let dx = 1e-3;
        let mut total = 0.0;
        for i in -20_000..=20_000 {
            total += p.transition_pdf(i as f64 * dx, t, y, 0.0).unwrap() * dx;
        }
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn domain_errors() {
        let p = Process::standard_brownian(0.0);
        assert!(matches!(p.transition_cdf(0.0, 1.0, 0.0, 1.0), Err(FptError::Domain(_))));
        let g = Process::new(ProcessKind::GeometricBrownian { sigma: 1.0 }, 1.0, 0.0).unwrap();
        assert!(matches!(g.transition_pdf(-1.0, 1.0, 1.0, 0.0), Err(FptError::Domain(_))));
        assert!(Process::new(ProcessKind::GeometricBrownian { sigma: 1.0 }, -1.0, 0.0).is_err());
        assert!(Process::new(ProcessKind::ScaledBrownian { sigma: 0.0 }, 0.0, 0.0).is_err());
        assert!(Process::new(ProcessKind::OrnsteinUhlenbeck { theta: -1.0, mu: 0.0, sigma: 1.0 }, 0.0, 0.0).is_err());
    }

    #[test]
    fn pdf_is_derivative_of_cdf() {
        let step = 1e-5;
        for p in all_kinds() {
            let y = if matches!(p.kind(), ProcessKind::GeometricBrownian { .. }) { 1.0 } else { 0.2 };
            for &(x, t) in &[(y + 0.3, 0.7), (y - 0.1, 1.3), (y + 0.05, 0.2)] {
                let fd = (p.transition_cdf(x + step, t, y, 0.0).unwrap()
                    - p.transition_cdf(x - step, t, y, 0.0).unwrap())
                    / (2.0 * step);
                let pdf = p.transition_pdf(x, t, y, 0.0).unwrap();
                assert!((fd - pdf).abs() < 1e-6, "{:?} x={x} fd={fd} pdf={pdf}", p.kind());
            }
        }
    }

    #[test]
    fn boundary_limit_identities() {
        // c(t) = 0.5 + 0.2 sin t : same-boundary kernel -> 1/2, cross kernels -> 0
        let c = |t: f64| 0.5 + 0.2 * t.sin();
        let a = |t: f64| -0.5 + 0.1 * t.cos();
        let s = 0.7;
        for p in [Process::standard_brownian(0.0), ou()] {
            let mut prev = f64::INFINITY;
            for dt in [1e-3, 1e-4, 1e-5] {
                let t = s + dt;
                let same = p.transition_cdf(c(t), t, c(s), s).unwrap();
                let dev = (same - 0.5).abs();
                assert!(dev < prev);
                prev = dev;
                assert!(1.0 - p.transition_cdf(c(t), t, a(s), s).unwrap() < 1e-10);
                assert!(p.transition_cdf(a(t), t, c(s), s).unwrap() < 1e-10);
            }
            assert!(prev < 1e-3);
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        for p in [Process::standard_brownian(0.0), ou(), Process::new(ProcessKind::ScaledBrownian { sigma: 1.5 }, 0.0, 0.0).unwrap()] {
            let (y, tau, u, t, x) = (0.1, 0.0, 0.6, 1.4, 0.5);
            let dz = 2e-3;
            let mut total = 0.0;
            for i in -6000..=6000 {
                let z = i as f64 * dz;
                total += p.transition_pdf(x, t, z, u).unwrap() * p.transition_pdf(z, u, y, tau).unwrap() * dz;
            }
            let direct = p.transition_pdf(x, t, y, tau).unwrap();
            assert!((total - direct).abs() < 1e-6, "{:?}: {total} vs {direct}", p.kind());
        }
    }

    #[test]
    fn ou_moments_match_simulation() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let (theta, mu, sigma) = (10.0, 0.3, 1.0);
        let p = Process::new(ProcessKind::OrnsteinUhlenbeck { theta, mu, sigma }, 0.5, 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (dt, steps, paths) = (1e-2, 200, 20_000);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..paths {
            let mut x: f64 = 0.5;
            for _ in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += (-x / theta + mu) * dt + sigma * dt.sqrt() * z;
            }
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / paths as f64;
        let var = sum2 / paths as f64 - mean * mean;
        let (m, sd) = p.moments(0.5, 2.0);
        assert!((mean - m).abs() < 0.03, "{mean} vs {m}");
        assert!((var / (sd * sd) - 1.0).abs() < 0.05, "{var} vs {}", sd * sd);
    }

    proptest::proptest! {
        #[test]
        fn cdf_monotone_in_x(x in -3.0f64..3.0, dx in 0.0f64..1.0, t in 0.01f64..5.0, y in -1.0f64..1.0) {
            for p in [Process::standard_brownian(0.0), ou()] {
                let lo = p.transition_cdf(x, t, y, 0.0).unwrap();
                let hi = p.transition_cdf(x + dx, t, y, 0.0).unwrap();
                proptest::prop_assert!(lo <= hi);
                proptest::prop_assert!((0.0..=1.0).contains(&lo));
            }
        }
    }

    #[test]
    fn cdf_limits_at_interval_ends() {
        for p in all_kinds() {
            let y = if matches!(p.kind(), ProcessKind::GeometricBrownian { .. }) { 1.0 } else { 0.0 };
            let (lo, hi) = if matches!(p.kind(), ProcessKind::GeometricBrownian { .. }) { (1e-300, 1e300) } else { (-1e6, 1e6) };
            assert!(p.transition_cdf(lo, 1.0, y, 0.0).unwrap() < 1e-12);
            assert!(p.transition_cdf(hi, 1.0, y, 0.0).unwrap() > 1.0 - 1e-12);
        }
    }
}
