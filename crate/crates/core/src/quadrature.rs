//! Quadrature on the reference triangle and on segments.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules; a rule with `n` points per direction integrates all polynomials of
//! total degree `<= 2n - 2` exactly. Two small symmetric rules are kept for
//! cross-checking assembled matrices.

use crate::geometry::{Point, Triangle};

/// Points and weights on `conv{(0,0),(1,0),(0,1)}`; weights sum to `1/2`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-type initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map from [-1, 1] to [0, 1]
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

impl QuadratureRule {
    /// Collapsed Gauss rule exact for total degree `degree`.
    pub fn collapsed(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let xi = x[i];
                let eta = x[j] * (1.0 - xi);
                points.push([xi, eta]);
                weights.push(w[i] * w[j] * (1.0 - xi));
            }
        }
        QuadratureRule {
            points,
            weights,
            exactness: 2 * n - 2,
        }
    }

    /// Symmetric three-point rule, exact for degree 2.
    pub fn symmetric_degree2() -> Self {
        let a = 1.0 / 6.0;
        let b = 2.0 / 3.0;
        QuadratureRule {
            points: vec![[a, a], [b, a], [a, b]],
            weights: vec![1.0 / 6.0; 3],
            exactness: 2,
        }
    }

    /// Radon's symmetric seven-point rule, exact for degree 5.
    pub fn symmetric_degree5() -> Self {
        let s = 15f64.sqrt();
        let a1 = (6.0 - s) / 21.0;
        let b1 = (9.0 + 2.0 * s) / 21.0;
        let a2 = (6.0 + s) / 21.0;
        let b2 = (9.0 - 2.0 * s) / 21.0;
        let w1 = (155.0 - s) / 2400.0;
        let w2 = (155.0 + s) / 2400.0;
        let third = 1.0 / 3.0;
        QuadratureRule {
            points: vec![
                [third, third],
                [a1, a1],
                [b1, a1],
                [a1, b1],
                [a2, a2],
                [b2, a2],
                [a2, b2],
            ],
            weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
            exactness: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points and weights on `tri`.
    pub fn on_triangle(&self, tri: &Triangle) -> impl Iterator<Item = (Point, f64)> + '_ {
        let jac = 2.0 * tri.area();
        let tri = *tri;
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&xi, &w)| (tri.map(xi), w * jac))
    }
}

/// Exact `int_{K^} x^a y^b = a! b! / (a + b + 2)!`.
pub fn reference_monomial_moment(a: usize, b: usize) -> f64 {
    let fact = |n: usize| (1..=n).fold(1.0f64, |acc, k| acc * k as f64);
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Gauss-Legendre rule on `[0, 1]` exact for degree `degree`.
pub fn segment_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(degree / 2 + 1)
}
