//! Convergence study driver: mesh, DOFs, assembly, solve and error
//! measurement for a range of refinement levels.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{error_norms, EocTable, ErrorReport};
use crate::assembly::{assemble, AssemblyError, AssemblyOptions};
use crate::dofmap::DofMap;
use crate::geometry::{GeometryError, LevelSetSurface};
use crate::manufactured::{ExactSolution, FhMode, ManufacturedLoad};
use crate::mesh::{MeshError, SurfaceMesh, MAX_LEVEL};
use crate::solver::{solve, SolverError, SolverOptions};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurfaceSpec {
    Ellipsoid { a: f64, b: f64, c: f64 },
    Sphere { r: f64 },
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<LevelSetSurface, GeometryError> {
        match *self {
            Self::Ellipsoid { a, b, c } => LevelSetSurface::ellipsoid(a, b, c),
            Self::Sphere { r } => LevelSetSurface::sphere(r),
        }
    }
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        Self::Ellipsoid {
            a: 1.1,
            b: 1.2,
            c: 1.3,
        }
    }
}

impl FromStr for SurfaceSpec {
    type Err = String;

    /// `ellipsoid:a,b,c` or `sphere:r`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| format!("expected kind:params, got '{s}'"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("bad number '{t}': {e}"))
            })
            .collect::<Result<_, _>>()?;
        if nums.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(format!("surface parameters must be positive, got {nums:?}"));
        }
        match (kind, nums.as_slice()) {
            ("ellipsoid", &[a, b, c]) => Ok(Self::Ellipsoid { a, b, c }),
            ("sphere", &[r]) => Ok(Self::Sphere { r }),
            ("ellipsoid", _) => Err("ellipsoid takes three semi-axes".into()),
            ("sphere", _) => Err("sphere takes one radius".into()),
            _ => Err(format!("unknown surface kind '{kind}'")),
        }
    }
}

impl fmt::Display for SurfaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ellipsoid { a, b, c } => write!(f, "ellipsoid:{a},{b},{c}"),
            Self::Sphere { r } => write!(f, "sphere:{r}"),
        }
    }
}

/// Inclusive range of refinement levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub first: usize,
    pub last: usize,
}

impl LevelRange {
    pub fn new(first: usize, last: usize) -> Result<Self, String> {
        if first > last {
            return Err(format!("empty level range {first}..{last}"));
        }
        if last > MAX_LEVEL {
            return Err(format!("level {last} exceeds the cap {MAX_LEVEL}"));
        }
        Ok(Self { first, last })
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }
}

impl FromStr for LevelRange {
    type Err = String;

    /// `a..b` (inclusive) or a single level `a`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad level '{t}': {e}"))
        };
        match s.split_once("..") {
            Some((a, b)) => Self::new(parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let l = parse(s)?;
                Self::new(l, l)
            }
        }
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub surface: SurfaceSpec,
    pub levels: LevelRange,
    pub fh_mode: FhMode,
    pub quadrature_degree: usize,
    pub solver: SolverOptions,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            surface: SurfaceSpec::default(),
            levels: LevelRange { first: 1, last: 5 },
            fh_mode: FhMode::Piola,
            quadrature_degree: 6,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFailure {
    pub level: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub reports: Vec<ErrorReport>,
    pub eoc: EocTable,
    pub failures: Vec<LevelFailure>,
    /// Largest recomputed relative residual over all solves.
    pub max_residual: f64,
}

impl StudyOutcome {
    pub fn converged(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One level of the study; the mesh is passed in so levels can be refined
/// incrementally.
pub fn run_level(
    mesh: &SurfaceMesh,
    exact: &ExactSolution,
    config: &StudyConfig,
) -> Result<(ErrorReport, f64), StudyError> {
    let start = Instant::now();
    let dofmap = DofMap::build(mesh)?;
    let load = ManufacturedLoad {
        exact,
        mode: config.fh_mode,
    };
    let options = AssemblyOptions {
        quadrature_degree: config.quadrature_degree,
        ..Default::default()
    };
    let system = assemble(mesh, &dofmap, &load, &options)?;
    let solution = solve(&system, &config.solver)?;
    let mut report = error_norms(
        mesh,
        &dofmap,
        &solution.velocity,
        &solution.pressure,
        exact,
        config.quadrature_degree,
    )?;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((report, solution.residuals.max()))
}

pub fn run_study(config: &StudyConfig) -> Result<StudyOutcome, StudyError> {
    let surface = config.surface.build()?;
    let exact = ExactSolution::new(surface.clone());
    let mut mesh = SurfaceMesh::generate(&surface, config.levels.first)?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut max_residual = 0.0f64;
    for level in config.levels.iter() {
        if level > mesh.level {
            mesh = mesh.refine()?;
        }
        match run_level(&mesh, &exact, config) {
            Ok((report, residual)) => {
                max_residual = max_residual.max(residual);
                reports.push(report);
            }
            Err(StudyError::Solver(e)) => failures.push(LevelFailure {
                level,
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let eoc = EocTable::from_reports(&reports);
    Ok(StudyOutcome {
        reports,
        eoc,
        failures,
        max_residual,
    })
}
