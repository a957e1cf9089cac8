//! Quadrature on the reference triangle {ξ₁, ξ₂ ≥ 0, ξ₁ + ξ₂ ≤ 1} and the unit segment.

use crate::{Error, Result};

/// Highest polynomial degree supported by [`quadrature`].
pub const MAX_DEGREE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Triangle,
    Segment,
}

/// Points and positive weights; segment points use only the first coordinate.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub domain: Domain,
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Rule exact for polynomials up to `degree` on the given reference domain.
pub fn quadrature(domain: Domain, degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree {degree} exceeds the supported maximum {MAX_DEGREE}"
        )));
    }
    let (points, weights) = match domain {
        Domain::Segment => {
            let (x, w) = gauss_legendre(degree / 2 + 1);
            (x.into_iter().map(|s| [s, 0.0]).collect(), w)
        }
        Domain::Triangle => triangle_rule(degree),
    };
    Ok(QuadratureRule {
        domain,
        degree,
        points,
        weights,
    })
}

fn triangle_rule(degree: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
    match degree {
        0 | 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5]),
        2 => (
            vec![[1.0 / 6.0, 1.0 / 6.0], [2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0]],
            vec![1.0 / 6.0; 3],
        ),
        _ => {
            // Collapsed tensor rule: ξ₁ = u, ξ₂ = v(1 − u), Jacobian 1 − u.
            let n = (degree + 2).div_ceil(2);
            let (x, w) = gauss_legendre(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    points.push([x[i], x[j] * (1.0 - x[i])]);
                    weights.push(w[i] * w[j] * (1.0 - x[i]));
                }
            }
            (points, weights)
        }
    }
}

/// n-point Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial P_n at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn exact_triangle(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let r = quadrature(Domain::Triangle, 1).unwrap();
        assert_eq!(r.points, vec![[1.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(r.weights, vec![0.5]);
    }

    #[test]
    fn two_point_gauss() {
        let r = quadrature(Domain::Segment, 3).unwrap();
        assert_eq!(r.len(), 2);
        let s = 1.0 / 3f64.sqrt();
        assert!((r.points[0][0] - (1.0 - s) / 2.0).abs() < 1e-15);
        assert!((r.points[1][0] - (1.0 + s) / 2.0).abs() < 1e-15);
        for w in &r.weights {
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn x2y2_degree_four() {
        let r = quadrature(Domain::Triangle, 4).unwrap();
        let v: f64 = r.iter().map(|(p, w)| w * p[0].powi(2) * p[1].powi(2)).sum();
        assert!((v - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_rules_exact_for_all_monomials() {
        for degree in 0..=MAX_DEGREE {
            let r = quadrature(Domain::Triangle, degree).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let v: f64 = r.iter().map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    let e = exact_triangle(a, b);
                    assert!((v - e).abs() < 1e-14 * e.max(1e-3), "degree {degree}, x^{a} y^{b}: {v} vs {e}");
                }
            }
        }
    }

    #[test]
    fn segment_rules_exact_for_all_monomials() {
        for degree in 0..=MAX_DEGREE {
            let r = quadrature(Domain::Segment, degree).unwrap();
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for a in 0..=degree as i32 {
                let v: f64 = r.iter().map(|(p, w)| w * p[0].powi(a)).sum();
                assert!((v - 1.0 / (a + 1) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(quadrature(Domain::Triangle, 11).is_err());
    }
}
