//! Forward-mode dual numbers. Nesting `Dual<Dual<f64>>` yields second
//! derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + std::fmt::Debug
{
    fn from_f64(v: f64) -> Self;
    fn sqrt(self) -> Self;
    /// Value with every infinitesimal part dropped.
    fn value(self) -> f64;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn value(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Self {
            re,
            eps: T::from_f64(0.0),
        }
    }

    pub fn variable(re: T) -> Self {
        Self {
            re,
            eps: T::from_f64(1.0),
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Self::new(q, (self.eps - q * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Real> Real for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / (T::from_f64(2.0) * s))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
}

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

/// Jacobian `J[i][k] = ∂_k f_i` of a vector field.
pub fn jacobian<T: Real>(f: impl Fn(Vec3<Dual<T>>) -> Vec3<Dual<T>>, x: Vec3<T>) -> Mat3<T> {
    let mut j = [[T::from_f64(0.0); 3]; 3];
    for k in 0..3 {
        let seeded = [0, 1, 2].map(|l| {
            if l == k {
                Dual::variable(x[l])
            } else {
                Dual::constant(x[l])
            }
        });
        let y = f(seeded);
        for i in 0..3 {
            j[i][k] = y[i].eps;
        }
    }
    j
}

pub fn gradient<T: Real>(f: impl Fn(Vec3<Dual<T>>) -> Dual<T>, x: Vec3<T>) -> Vec3<T> {
    [0, 1, 2].map(|k| {
        let seeded = [0, 1, 2].map(|l| {
            if l == k {
                Dual::variable(x[l])
            } else {
                Dual::constant(x[l])
            }
        });
        f(seeded).eps
    })
}

/// Directional derivatives `∂_k M` of a matrix field, one per axis.
pub fn matrix_partials<T: Real>(
    f: impl Fn(Vec3<Dual<T>>) -> Mat3<Dual<T>>,
    x: Vec3<T>,
) -> [Mat3<T>; 3] {
    [0, 1, 2].map(|k| {
        let seeded = [0, 1, 2].map(|l| {
            if l == k {
                Dual::variable(x[l])
            } else {
                Dual::constant(x[l])
            }
        });
        f(seeded).map(|row| row.map(|v| v.eps))
    })
}
