//! Solution of the saddle-point system: sparse LU on the full symmetric
//! system, or preconditioned MINRES with a block-diagonal preconditioner.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::SaddleSystem;
use crate::sparse::{dot, norm, CsrMatrix};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub tol: f64,
    pub max_iterations: usize,
    pub max_refinements: usize,
    pub max_dimension: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: SolverMethod::Direct,
            tol: DEFAULT_TOLERANCE,
            max_iterations: 5000,
            max_refinements: 5,
            max_dimension: 1_000_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver breakdown: {reason} (residual {residual:e})")]
    SolverBreakdown { reason: String, residual: f64 },
    #[error("system dimension {dim} exceeds the cap {cap}")]
    TooLarge { dim: usize, cap: usize },
}

fn breakdown(reason: impl Into<String>, residual: f64) -> SolverError {
    SolverError::SolverBreakdown {
        reason: reason.into(),
        residual,
    }
}

/// Relative residual of each block row, recomputed from the stored operators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockResiduals {
    pub momentum: f64,
    pub continuity: f64,
    pub mean: f64,
}

impl BlockResiduals {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.continuity).max(self.mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
    pub residuals: BlockResiduals,
    pub method: SolverMethod,
    pub iterations: usize,
}

impl SaddleSolution {
    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.velocity.clone();
        x.extend_from_slice(&self.pressure);
        x.push(self.multiplier);
        x
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn block_residuals(system: &SaddleSystem, x: &[f64]) -> BlockResiduals {
    let nv = system.n_velocity();
    let np = system.n_pressure();
    let (u, rest) = x.split_at(nv);
    let (p, lambda) = rest.split_at(np);
    let au = system.a.mul_vec(u);
    let btp = system.b.transpose_mul_vec(p);
    let r1: Vec<f64> = (0..nv).map(|i| au[i] + btp[i] - system.f[i]).collect();
    let bu = system.b.mul_vec(u);
    let r2: Vec<f64> = (0..np)
        .map(|k| bu[k] + system.c[k] * lambda[0] - system.g[k])
        .collect();
    BlockResiduals {
        momentum: ratio(norm(&r1), norm(&system.f).max(norm(&au) + norm(&btp))),
        continuity: ratio(
            norm(&r2),
            norm(&system.g).max(norm(&bu) + lambda[0].abs() * norm(&system.c)),
        ),
        mean: ratio(dot(&system.c, p).abs(), norm(&system.c) * norm(p)),
    }
}

fn to_col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn from_col(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn split(
    system: &SaddleSystem,
    x: Vec<f64>,
    method: SolverMethod,
    iterations: usize,
) -> SaddleSolution {
    let nv = system.n_velocity();
    let np = system.n_pressure();
    let residuals = block_residuals(system, &x);
    SaddleSolution {
        velocity: x[..nv].to_vec(),
        pressure: x[nv..nv + np].to_vec(),
        multiplier: x[nv + np],
        residuals,
        method,
        iterations,
    }
}

pub fn solve(
    system: &SaddleSystem,
    options: &SolverOptions,
) -> Result<SaddleSolution, SolverError> {
    let dim = system.dimension();
    if dim > options.max_dimension {
        return Err(SolverError::TooLarge {
            dim,
            cap: options.max_dimension,
        });
    }
    let solution = match options.method {
        SolverMethod::Direct => solve_direct(system, options)?,
        SolverMethod::Iterative => {
            let x0 = vec![0.0; dim];
            let (x, it) = minres(system, &x0, options)?;
            split(system, x, SolverMethod::Iterative, it)
        }
    };
    if solution.residuals.max() > options.tol {
        return Err(breakdown(
            "residual above tolerance",
            solution.residuals.max(),
        ));
    }
    Ok(solution)
}

fn solve_direct(
    system: &SaddleSystem,
    options: &SolverOptions,
) -> Result<SaddleSolution, SolverError> {
    let kkt = system.kkt();
    let lu: Lu<usize, f64> = kkt
        .to_faer()
        .sp_lu()
        .map_err(|e| breakdown(format!("sparse LU failed: {e:?}"), f64::NAN))?;
    let rhs = system.rhs();
    let mut x = from_col(&lu.solve(to_col(&rhs)));
    let mut refinements = 0;
    let mut best = block_residuals(system, &x).max();
    while best > 0.1 * options.tol && refinements < options.max_refinements {
        let kx = kkt.mul_vec(&x);
        let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let dx = from_col(&lu.solve(to_col(&r)));
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let res = block_residuals(system, &candidate).max();
        refinements += 1;
        if !(res < best) {
            break;
        }
        x = candidate;
        best = res;
    }
    if !best.is_finite() {
        return Err(breakdown("non-finite solution", best));
    }
    Ok(split(system, x, SolverMethod::Direct, refinements))
}

/// Block-diagonal SPD preconditioner: exact `A⁻¹`, lumped pressure mass, and
/// a scalar for the multiplier.
struct BlockPreconditioner {
    a: Llt<usize, f64>,
    pressure_diag: Vec<f64>,
    multiplier: f64,
    nv: usize,
}

impl BlockPreconditioner {
    fn new(system: &SaddleSystem) -> Result<Self, SolverError> {
        let a = system.a.to_faer().sp_cholesky(Side::Lower).map_err(|e| {
            breakdown(
                format!("Cholesky of the velocity block failed: {e:?}"),
                f64::NAN,
            )
        })?;
        let area: f64 = system.c.iter().sum();
        Ok(Self {
            a,
            pressure_diag: system.c.clone(),
            multiplier: area,
            nv: system.n_velocity(),
        })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = from_col(&self.a.solve(to_col(&r[..self.nv])));
        let np = self.pressure_diag.len();
        z.extend((0..np).map(|k| r[self.nv + k] / self.pressure_diag[k]));
        z.push(r[self.nv + np] / self.multiplier);
        z
    }
}

/// Preconditioned MINRES from the initial iterate `x0`, restarted until the
/// recomputed block residuals meet the tolerance.
pub fn minres(
    system: &SaddleSystem,
    x0: &[f64],
    options: &SolverOptions,
) -> Result<(Vec<f64>, usize), SolverError> {
    let prec = BlockPreconditioner::new(system)?;
    let rhs = system.rhs();
    let mut x = x0.to_vec();
    let mut total = 0;
    let mut inner_tol = 0.01 * options.tol;
    for _restart in 0..4 {
        if block_residuals(system, &x).max() <= options.tol {
            return Ok((x, total));
        }
        let kx = system.apply(&x);
        let r0: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
        let (dx, it) = minres_cycle(
            system,
            &prec,
            &r0,
            inner_tol,
            options.max_iterations - total.min(options.max_iterations),
        )?;
        total += it;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        inner_tol *= 0.01;
    }
    let res = block_residuals(system, &x).max();
    if res <= options.tol {
        Ok((x, total))
    } else {
        Err(breakdown("MINRES stagnated", res))
    }
}

fn minres_cycle(
    system: &SaddleSystem,
    prec: &BlockPreconditioner,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize), SolverError> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut v_prev = vec![0.0; n];
    let mut v = b.to_vec();
    let mut z = prec.apply(&v);
    let mut gamma = dot(&z, &v);
    if gamma < 0.0 {
        return Err(breakdown("indefinite preconditioner", gamma));
    }
    gamma = gamma.sqrt();
    if gamma == 0.0 {
        return Ok((x, 0));
    }
    let gamma0 = gamma;
    let mut gamma_prev = 1.0;
    let mut eta = gamma;
    let (mut s_prev, mut s) = (0.0, 0.0);
    let (mut c_prev, mut c) = (1.0, 1.0);
    let mut w_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    for it in 1..=max_iterations {
        for zi in z.iter_mut() {
            *zi /= gamma;
        }
        let az = system.apply(&z);
        let delta = dot(&az, &z);
        let v_next: Vec<f64> = (0..n)
            .map(|i| az[i] - (delta / gamma) * v[i] - (gamma / gamma_prev) * v_prev[i])
            .collect();
        let z_next = prec.apply(&v_next);
        let g2 = dot(&z_next, &v_next);
        if g2 < 0.0 {
            return Err(breakdown("indefinite preconditioner", g2));
        }
        let gamma_next = g2.sqrt();
        let a0 = c * delta - c_prev * s * gamma;
        let a1 = (a0 * a0 + gamma_next * gamma_next).sqrt();
        let a2 = s * delta + c_prev * c * gamma;
        let a3 = s_prev * gamma;
        if a1 == 0.0 {
            return Err(breakdown("MINRES Lanczos breakdown", eta.abs() / gamma0));
        }
        let c_next = a0 / a1;
        let s_next = gamma_next / a1;
        let w_next: Vec<f64> = (0..n)
            .map(|i| (z[i] - a3 * w_prev[i] - a2 * w[i]) / a1)
            .collect();
        for i in 0..n {
            x[i] += c_next * eta * w_next[i];
        }
        eta *= -s_next;

        w_prev = std::mem::replace(&mut w, w_next);
        v_prev = std::mem::replace(&mut v, v_next);
        z = z_next;
        gamma_prev = gamma;
        gamma = gamma_next;
        s_prev = s;
        s = s_next;
        c_prev = c;
        c = c_next;
        if eta.abs() <= tol * gamma0 || gamma == 0.0 {
            return Ok((x, it));
        }
    }
    Ok((x, max_iterations))
}

/// Re-solves iteratively from a randomly perturbed copy of `solution` and
/// returns the relative distance between the two results.
pub fn uniqueness_probe(
    system: &SaddleSystem,
    solution: &SaddleSolution,
    options: &SolverOptions,
    seed: u64,
) -> Result<f64, SolverError> {
    let x = solution.stacked();
    let scale = norm(&x).max(1.0) / (x.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = x
        .iter()
        .map(|xi| xi + scale * rng.random_range(-1.0..1.0))
        .collect();
    let (y, _) = minres(system, &x0, options)?;
    let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&x).max(f64::MIN_POSITIVE))
}

/// Solves `A X = R` column by column with a sparse Cholesky factorization.
pub struct SpdSolver {
    llt: Llt<usize, f64>,
}

impl SpdSolver {
    pub fn new(a: &CsrMatrix) -> Result<Self, SolverError> {
        let llt = a
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| breakdown(format!("Cholesky failed: {e:?}"), f64::NAN))?;
        Ok(Self { llt })
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        from_col(&self.llt.solve(to_col(r)))
    }

    pub fn solve_many(&self, cols: &Mat<f64>) -> Mat<f64> {
        self.llt.solve(cols)
    }
}
