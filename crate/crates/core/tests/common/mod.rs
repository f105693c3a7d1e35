//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's differentiation or geometry code.

#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const AXES: [f64; 3] = [1.1, 1.2, 1.3];

pub fn level_set_normal(axes: [f64; 3], x: &Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| 2.0 * x[i] / (axes[i] * axes[i])).normalize()
}

pub fn projector(axes: [f64; 3], x: &Vector3<f64>) -> Matrix3<f64> {
    let n = level_set_normal(axes, x);
    Matrix3::identity() - n * n.transpose()
}

pub fn velocity(axes: [f64; 3], x: &Vector3<f64>) -> Vector3<f64> {
    projector(axes, x) * Vector3::new(-x.z * x.z, x.x, x.y)
}

pub fn pressure(x: &Vector3<f64>) -> f64 {
    x.x * x.y.powi(3) + x.z
}

/// Richardson-extrapolated central difference along axis `k`.
pub fn partial<T, F>(f: &F, x: &Vector3<f64>, k: usize, h: f64) -> T
where
    F: Fn(&Vector3<f64>) -> T,
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let central = |h: f64| {
        let mut e = Vector3::zeros();
        e[k] = h;
        (f(&(x + e)) - f(&(x - e))) * (0.5 / h)
    };
    let coarse = central(h);
    let fine = central(0.5 * h);
    fine * (4.0 / 3.0) - coarse * (1.0 / 3.0)
}

pub fn fd_jacobian(
    f: &impl Fn(&Vector3<f64>) -> Vector3<f64>,
    x: &Vector3<f64>,
    h: f64,
) -> Matrix3<f64> {
    Matrix3::from_columns(&[
        partial(f, x, 0, h),
        partial(f, x, 1, h),
        partial(f, x, 2, h),
    ])
}

/// Surface operators of the manufactured solution from finite differences.
pub struct FdOps {
    pub grad_u: Matrix3<f64>,
    pub div_u: f64,
    pub grad_p: Vector3<f64>,
    pub div_def: Vector3<f64>,
    pub f: Vector3<f64>,
}

pub const FD_STEP_FIRST: f64 = 1e-5;
pub const FD_STEP_INNER: f64 = 1e-3;
pub const FD_STEP_OUTER: f64 = 1e-2;

pub fn fd_surface_ops(axes: [f64; 3], x: &Vector3<f64>) -> FdOps {
    let pi = projector(axes, x);
    let u = |y: &Vector3<f64>| velocity(axes, y);
    let grad_u = pi * fd_jacobian(&u, x, FD_STEP_FIRST) * pi;
    let p = |y: &Vector3<f64>| Vector3::new(pressure(y), 0.0, 0.0);
    let grad_p = pi * Vector3::from_fn(|k, _| partial(&p, x, k, FD_STEP_FIRST).x);

    let def = |y: &Vector3<f64>| {
        let py = projector(axes, y);
        let g = py * fd_jacobian(&u, y, FD_STEP_INNER) * py;
        0.5 * (g + g.transpose())
    };
    let dk: Vec<Matrix3<f64>> = (0..3).map(|k| partial(&def, x, k, FD_STEP_OUTER)).collect();
    let div_d = Vector3::from_fn(|i, _| {
        let mut s = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                s += dk[k][(i, j)] * pi[(k, j)];
            }
        }
        s
    });
    let div_def = pi * div_d;
    FdOps {
        grad_u,
        div_u: grad_u.trace(),
        grad_p,
        div_def,
        f: -div_def + grad_p + velocity(axes, x),
    }
}

/// Points on the ellipsoid, radially projected from a uniform cube sample.
pub fn surface_points(axes: [f64; 3], n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let q: f64 = (0..3).map(|i| v[i] * v[i] / (axes[i] * axes[i])).sum();
            if q > 1e-2 {
                break v / q.sqrt();
            }
        })
        .collect()
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-2)
}
