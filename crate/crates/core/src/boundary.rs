//! Boundary functions and strip geometry.

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use crate::error::{FptError, Result};
use crate::interp::MonotoneCubic;
use crate::process::{Process, TransitionKernel};

/// A continuous boundary with bounded derivative.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    Constant(f64),
    /// `c + amplitude · cos(angular_frequency · t + phase)`
    Cosine { c: f64, amplitude: f64, angular_frequency: f64, phase: f64 },
    Tabulated(MonotoneCubic),
}

#[derive(Deserialize)]
struct KnotRow {
    t: f64,
    value: f64,
}

impl Boundary {
    pub fn cosine(c: f64, amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        Boundary::Cosine { c, amplitude, angular_frequency, phase }
    }

    pub fn tabulated(knots: &[(f64, f64)]) -> Result<Self> {
        let (ts, vs) = knots.iter().copied().unzip();
        Ok(Boundary::Tabulated(MonotoneCubic::new(ts, vs)?))
    }

    /// Load a tabulated boundary from a `t,value` CSV.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| FptError::Config(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return Err(FptError::Config(format!("boundary CSV header must be `t,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut knots = Vec::new();
        for row in rdr.deserialize::<KnotRow>() {
            let row = row.map_err(|e| FptError::Config(e.to_string()))?;
            knots.push((row.t, row.value));
        }
        Self::tabulated(&knots).map_err(|e| FptError::Config(e.to_string()))
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| FptError::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Boundary::Constant(c) => Ok(*c),
            Boundary::Cosine { c, amplitude, angular_frequency, phase } => {
                Ok(c + amplitude * (angular_frequency * t + phase).cos())
            }
            Boundary::Tabulated(m) => m.eval(t),
        }
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        match self {
            Boundary::Constant(_) => Ok(0.0),
            Boundary::Cosine { amplitude, angular_frequency, phase, .. } => {
                Ok(-amplitude * angular_frequency * (angular_frequency * t + phase).sin())
            }
            Boundary::Tabulated(m) => m.derivative(t),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Boundary::Constant(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    /// Reflection `x → −x`.
    pub fn mirrored(&self) -> Self {
        match self {
            Boundary::Constant(c) => Boundary::Constant(-c),
            Boundary::Cosine { c, amplitude, angular_frequency, phase } => Boundary::Cosine {
                c: -c,
                amplitude: -amplitude,
                angular_frequency: *angular_frequency,
                phase: *phase,
            },
            Boundary::Tabulated(m) => {
                let (ts, vs): (Vec<f64>, Vec<f64>) = m.knots().map(|(t, v)| (t, -v)).unzip();
                Boundary::Tabulated(MonotoneCubic::new(ts, vs).expect("mirrored knots stay valid"))
            }
        }
    }
}

/// Where the process starts relative to the strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Configuration {
    /// `lower(t0) < x0 < upper(t0)`; either boundary may be hit first.
    Inside,
    /// `x0 < lower(t0) < upper(t0)`; the lower boundary is hit first.
    OutsideBelow,
    /// `lower(t0) < upper(t0) < x0`; the upper boundary is hit first.
    OutsideAbove,
}

#[derive(Debug, Clone)]
pub struct StripProblem {
    pub process: Process,
    pub lower: Boundary,
    pub upper: Boundary,
    pub configuration: Configuration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    LowerNotBelowUpper { lower: f64, upper: f64 },
    StartOnBoundary,
    OutsideDiffusionInterval { value: f64 },
    Evaluation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub t: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub configuration: Configuration,
    pub violations: Vec<Violation>,
    /// Smallest probed `upper − lower` and where it occurred.
    pub min_gap: f64,
    pub min_gap_time: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

impl StripProblem {
    /// Classify the start against the boundaries at `t0`. Geometry is checked by
    /// [`StripProblem::validate`].
    pub fn new(process: Process, lower: Boundary, upper: Boundary) -> Result<Self> {
        let t0 = process.t0();
        let (a, b) = (lower.eval(t0)?, upper.eval(t0)?);
        let x0 = process.x0();
        let configuration = if a < x0 && x0 < b {
            Configuration::Inside
        } else if x0 < a {
            Configuration::OutsideBelow
        } else {
            Configuration::OutsideAbove
        };
        Ok(Self { process, lower, upper, configuration })
    }

    pub fn constant_boundaries(&self) -> Option<(f64, f64)> {
        Some((self.lower.constant_value()?, self.upper.constant_value()?))
    }

    /// Probe the strip on `[t0, horizon]` every `probe_step`.
    pub fn validate(&self, horizon: f64, probe_step: f64) -> ValidationReport {
        let t0 = self.process.t0();
        let mut violations = Vec::new();
        let mut min_gap = f64::INFINITY;
        let mut min_gap_time = t0;

        let x0 = self.process.x0();
        match (self.lower.eval(t0), self.upper.eval(t0)) {
            (Ok(a), Ok(b)) if a == x0 || b == x0 => {
                violations.push(Violation { t: t0, kind: ViolationKind::StartOnBoundary })
            }
            _ => {}
        }

        let steps = if probe_step > 0.0 && horizon > t0 {
            ((horizon - t0) / probe_step).ceil() as usize
        } else {
            0
        };
        for k in 0..=steps {
            let t = (t0 + k as f64 * probe_step).min(horizon.max(t0));
            let (a, b) = match (self.lower.eval(t), self.upper.eval(t)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    violations.push(Violation { t, kind: ViolationKind::Evaluation(e.to_string()) });
                    break;
                }
            };
            if b - a < min_gap {
                min_gap = b - a;
                min_gap_time = t;
            }
            if a >= b {
                violations.push(Violation { t, kind: ViolationKind::LowerNotBelowUpper { lower: a, upper: b } });
            }
            for v in [a, b] {
                if !self.process.contains(v) {
                    violations.push(Violation { t, kind: ViolationKind::OutsideDiffusionInterval { value: v } });
                }
            }
        }
        ValidationReport { configuration: self.configuration, violations, min_gap, min_gap_time }
    }

    pub(crate) fn require_valid(&self, horizon: f64, probe_step: f64) -> Result<()> {
        let report = self.validate(horizon, probe_step);
        match report.first_violation() {
            None => Ok(()),
            Some(v) => Err(FptError::InvalidStrip(format!("{:?} at t={}", v.kind, v.t))),
        }
    }

    /// The reflected problem `x → −x`: boundaries swap roles.
    pub fn mirrored(&self) -> Result<Self> {
        use crate::process::ProcessKind;
        let kind = match self.process.kind() {
            ProcessKind::GeometricBrownian { .. } => {
                return Err(FptError::Unsupported("reflection of a geometric Brownian motion".into()))
            }
            ProcessKind::OrnsteinUhlenbeck { theta, mu, sigma } => ProcessKind::OrnsteinUhlenbeck { theta, mu: -mu, sigma },
            k => k,
        };
        let process = Process::new(kind, -self.process.x0(), self.process.t0())?;
        StripProblem::new(process, self.upper.mirrored(), self.lower.mirrored())
    }
}
