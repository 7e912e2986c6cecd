//! TOML run configuration for the command-line driver.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::boundary::{Boundary, StripProblem};
use crate::closed_form::SeriesControl;
use crate::error::{FptError, Result};
use crate::joint::ComponentSource;
use crate::laplace::{InversionControl, Representation};
use crate::mc::SimConfig;
use crate::process::{Process, ProcessKind};
use crate::volterra::{Reference, SolverOptions, TimeGrid};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    pub x0: f64,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    Constant { value: f64 },
    Cosine { c: f64, amplitude: f64, angular_frequency: f64, phase: f64 },
    /// `t,value` CSV; relative paths resolve against the config file.
    Tabulated { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    /// Absolute end time.
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Volterra,
    Laplace,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    Subdensities,
    Joint,
    Copula,
    Marginals,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub method: Method,
    pub outputs: Vec<Output>,
    /// Source of one-boundary and restart densities.
    pub components: ComponentSource,
    pub negative_tolerance: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            method: Method::Volterra,
            outputs: vec![Output::Subdensities],
            components: ComponentSource::Auto,
            negative_tolerance: SolverOptions::default().negative_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSpec {
    pub max_terms: usize,
    pub tail_tolerance: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        let d = SeriesControl::default();
        Self { max_terms: d.max_terms, tail_tolerance: d.tail_tolerance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaplaceSpec {
    pub representation: Representation,
}

impl Default for LaplaceSpec {
    fn default() -> Self {
        Self { representation: Representation::Fortet }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointSpec {
    /// End of both surface axes; defaults to the grid horizon.
    pub horizon: Option<f64>,
    /// Last time written to the surface files; defaults to the grid horizon.
    pub output_horizon: Option<f64>,
    /// Write every `stride`-th knot.
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaSpec {
    pub m: usize,
}

impl Default for CopulaSpec {
    fn default() -> Self {
        Self { m: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    #[default]
    ClosedForm,
    FinestGrid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSpec {
    pub steps: Vec<f64>,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Defaults to the grid horizon.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_paths: usize,
    pub dt: f64,
    /// Absolute censoring time; defaults to the grid horizon.
    pub horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Histogram bin width for the comparisons; defaults to `10·h`.
    pub bin_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSpec,
    pub lower: BoundarySpec,
    pub upper: BoundarySpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub series: SeriesSpec,
    #[serde(default)]
    pub inversion: InversionControl,
    #[serde(default)]
    pub laplace: LaplaceSpec,
    pub joint: Option<JointSpec>,
    pub copula: Option<CopulaSpec>,
    pub converge: Option<ConvergeSpec>,
    pub mc: Option<McSpec>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    /// Parse only; see [`RunConfig::validate`].
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| FptError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FptError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn boundary(&self, spec: &BoundarySpec) -> Result<Boundary> {
        match spec {
            BoundarySpec::Constant { value } => Ok(Boundary::Constant(*value)),
            BoundarySpec::Cosine { c, amplitude, angular_frequency, phase } => {
                Ok(Boundary::cosine(*c, *amplitude, *angular_frequency, *phase))
            }
            BoundarySpec::Tabulated { path } => {
                let full = self.base_dir.join(path);
                if !full.exists() {
                    return Err(FptError::InvalidParameter(format!("boundary file {} does not exist", full.display())));
                }
                Boundary::from_csv(&full)
            }
        }
    }

    pub fn process(&self) -> Result<Process> {
        Process::new(self.process.kind, self.process.x0, self.process.t0)
    }

    pub fn strip(&self) -> Result<StripProblem> {
        StripProblem::new(self.process()?, self.boundary(&self.lower)?, self.boundary(&self.upper)?)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::covering(self.process.t0, self.grid.h, self.grid.horizon)
    }

    /// Grid of both surface axes.
    pub fn surface_grid(&self) -> Result<TimeGrid> {
        let horizon = self.joint.and_then(|j| j.horizon).unwrap_or(self.grid.horizon);
        TimeGrid::covering(self.process.t0, self.grid.h, horizon)
    }

    pub fn series_control(&self) -> Result<SeriesControl> {
        SeriesControl::new(self.series.max_terms, self.series.tail_tolerance)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { negative_tolerance: self.run.negative_tolerance, ..SolverOptions::default() }
    }

    pub fn reference(&self) -> Result<Reference> {
        match self.converge.as_ref().map(|c| c.reference).unwrap_or_default() {
            ReferenceKind::ClosedForm => Ok(Reference::ClosedForm(self.series_control()?)),
            ReferenceKind::FinestGrid => Ok(Reference::FinestGrid),
        }
    }

    pub fn sim_config(&self, seed: Option<u64>, workers: usize) -> Result<SimConfig> {
        let mc = self.mc.ok_or_else(|| FptError::InvalidParameter("config has no [mc] section".into()))?;
        Ok(SimConfig {
            n_paths: mc.n_paths,
            dt: mc.dt,
            horizon: mc.horizon.unwrap_or(self.grid.horizon),
            seed: seed.unwrap_or(mc.seed),
            workers,
        })
    }

    pub fn wants(&self, output: Output) -> bool {
        self.run.outputs.contains(&output)
    }

    /// Semantic checks that need no numerics.
    pub fn validate(&self) -> Result<()> {
        let sp = self.strip()?;
        self.grid()?;
        self.series_control()?;
        self.inversion.validate()?;
        if self.run.method != Method::Volterra {
            if !sp.process.is_standard_brownian() {
                return Err(FptError::Unsupported(format!("{:?} method requires standard Brownian motion", self.run.method)));
            }
            if sp.constant_boundaries().is_none() {
                return Err(FptError::Unsupported(match self.run.method {
                    Method::Laplace => "Laplace route requires constant boundaries".into(),
                    _ => "closed-form route requires constant boundaries".into(),
                }));
            }
        }
        if let Some(c) = &self.copula {
            if c.m == 0 {
                return Err(FptError::InvalidParameter("copula m must be positive".into()));
            }
        }
        if let Some(j) = &self.joint {
            if j.stride == Some(0) {
                return Err(FptError::InvalidParameter("joint stride must be positive".into()));
            }
        }
        Ok(())
    }
}
