//! Symmetric quadrature rules on the reference triangle `(0,0), (1,0), (0,1)`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("no rule of degree {0}; supported degrees are 2, 4 and 6")]
    UnsupportedDegree(usize),
    #[error("rule of degree {degree} fails on x^{a} y^{b}: error {error:e}")]
    NotExact {
        degree: usize,
        a: usize,
        b: usize,
        error: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    /// Reference coordinates `(ξ, η)`.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `∫_K̂ ξ^a η^b = a! b! / (a + b + 2)!`.
pub fn monomial_integral(a: usize, b: usize) -> f64 {
    factorial(a) * factorial(b) / factorial(a + b + 2)
}

// Orbits in barycentric coordinates; weights normalised to sum 1.
const DEG2: &[(f64, [f64; 2])] = &[(0.333_333_333_333_333_33, [0.166_666_666_666_666_67, 0.0])];

const DEG4: &[(f64, [f64; 2])] = &[
    (0.223_381_589_678_011_47, [0.445_948_490_915_964_89, 0.0]),
    (0.109_951_743_655_321_87, [0.091_576_213_509_770_743, 0.0]),
];

const DEG6_S21: &[(f64, f64)] = &[
    (0.116_786_275_726_379_37, 0.249_286_745_170_910_42),
    (0.050_844_906_370_206_817, 0.063_089_014_491_502_228),
];
const DEG6_S111: (f64, f64, f64) = (
    0.082_851_075_618_373_575,
    0.053_145_049_844_816_947,
    0.310_352_451_033_784_41,
);

fn push_s21(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, w: f64, a: f64) {
    let b = 1.0 - 2.0 * a;
    for p in [[a, a, b], [a, b, a], [b, a, a]] {
        points.push(p);
        weights.push(w);
    }
}

impl QuadratureRule {
    /// Rule exact for polynomials up to `degree`; exactness is verified
    /// against the closed-form monomial integrals before returning.
    pub fn new(degree: usize) -> Result<Self, QuadratureError> {
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        match degree {
            2 => {
                for &(w, [a, _]) in DEG2 {
                    push_s21(&mut bary, &mut weights, w, a);
                }
            }
            4 => {
                for &(w, [a, _]) in DEG4 {
                    push_s21(&mut bary, &mut weights, w, a);
                }
            }
            6 => {
                for &(w, a) in DEG6_S21 {
                    push_s21(&mut bary, &mut weights, w, a);
                }
                let (w, a, b) = DEG6_S111;
                let c = 1.0 - a - b;
                for p in [
                    [a, b, c],
                    [a, c, b],
                    [b, a, c],
                    [b, c, a],
                    [c, a, b],
                    [c, b, a],
                ] {
                    bary.push(p);
                    weights.push(w);
                }
            }
            d => return Err(QuadratureError::UnsupportedDegree(d)),
        }
        let rule = Self {
            degree,
            points: bary.iter().map(|l| [l[1], l[2]]).collect(),
            weights: weights.iter().map(|w| 0.5 * w).collect(),
        };
        rule.verify()?;
        Ok(rule)
    }

    fn verify(&self) -> Result<(), QuadratureError> {
        for a in 0..=self.degree {
            for b in 0..=(self.degree - a) {
                let exact = monomial_integral(a, b);
                let error =
                    (self.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32)) - exact).abs();
                if error > 1e-15 {
                    return Err(QuadratureError::NotExact {
                        degree: self.degree,
                        a,
                        b,
                        error,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `∫_K̂ λ₁^a λ₂^b λ₃^c = 2 · a! b! c! / (a + b + c + 2)! · |K̂|`
    fn barycentric_monomial(a: usize, b: usize, c: usize) -> f64 {
        factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
    }

    #[test]
    fn all_rules_construct() {
        for d in [2, 4, 6] {
            let r = QuadratureRule::new(d).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 0.5, epsilon = 1e-15);
        }
        assert_eq!(QuadratureRule::new(6).unwrap().len(), 12);
    }

    #[test]
    fn unsupported_degree() {
        assert_eq!(
            QuadratureRule::new(5),
            Err(QuadratureError::UnsupportedDegree(5))
        );
    }

    #[test]
    fn bubble_integrals() {
        let r = QuadratureRule::new(6).unwrap();
        let bubble = |x: f64, y: f64| (1.0 - x - y) * x * y;
        assert_relative_eq!(r.integrate(|_, _| 1.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(barycentric_monomial(1, 1, 1), 1.0 / 120.0, epsilon = 1e-17);
        assert_relative_eq!(r.integrate(bubble), 1.0 / 120.0, epsilon = 1e-16);
        assert_relative_eq!(barycentric_monomial(2, 2, 2), 1.0 / 5040.0, epsilon = 1e-18);
        assert_relative_eq!(
            r.integrate(|x, y| bubble(x, y).powi(2)),
            1.0 / 5040.0,
            epsilon = 1e-17
        );
    }
}
