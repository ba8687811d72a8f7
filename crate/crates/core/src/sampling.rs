//! Quadrature samples of a target on a triangle or segment.
//!
//! A sample stores points, weights, target values and gradients together
//! with the local nodal basis, so all integrals needed for best
//! approximations (for any `eps`) are plain weighted sums. Analytic targets
//! are integrated adaptively: after splitting along kinks, a piece is red
//! refined until the coarse and the refined sums of the test integrals
//! `int u phi_k`, `int grad u . grad phi_k`, `int u^2`, `int |grad u|^2`
//! agree to a relative `1e-10`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::element::ReferenceBasis;
use crate::error::{Error, Result};
use crate::geometry::{dist, dot, lerp, Point, Triangle};
use crate::quadrature::{gauss_legendre, QuadratureRule};
use crate::target::TargetFunction;

pub const RELATIVE_TOLERANCE: f64 = 1e-10;
pub const MAX_LEVELS: usize = 10;

#[derive(Clone, Debug)]
pub struct SampledTriangle {
    pub tri: Triangle,
    pub basis: Arc<ReferenceBasis>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub grads: Vec<Point>,
    /// basis values, `n` per point
    pub phi: Vec<f64>,
    /// physical basis gradients, `n` per point
    pub dphi: Vec<Point>,
}

struct Chunk {
    weights: Vec<f64>,
    values: Vec<f64>,
    grads: Vec<Point>,
    phi: Vec<f64>,
    dphi: Vec<Point>,
    sums: Vec<f64>,
}

impl SampledTriangle {
    /// Sample `u` on `tri` for the degree-`degree` nodal basis of `tri`.
    pub fn new(u: &TargetFunction, tri: &Triangle, degree: usize) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        if tri.area() <= 1e-14 * tri.diameter().powi(2) {
            return Err(Error::Degenerate(format!("triangle {:?}", tri.v)));
        }
        let pieces = u.pieces(tri);
        let mut out = SampledTriangle {
            tri: *tri,
            basis: basis.clone(),
            weights: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            phi: Vec::new(),
            dphi: Vec::new(),
        };
        let n = basis.len();
        let ctx = Ctx {
            u,
            tri,
            basis: &basis,
            inv_t: tri.inv_jacobian_t(),
        };
        match u.piece_degree() {
            Some(pd) => {
                let rule = QuadratureRule::collapsed(2 * degree.max(pd));
                for p in &pieces {
                    out.push(ctx.chunk(&rule, &p.tri, p.source));
                }
            }
            None => {
                let rule = QuadratureRule::collapsed(2 * degree + 10);
                let roots: Vec<Chunk> = pieces
                    .iter()
                    .map(|p| ctx.chunk(&rule, &p.tri, p.source))
                    .collect();
                // magnitudes of the value group and the gradient group
                let mut mags = [0.0f64; 2];
                for c in &roots {
                    for (j, s) in c.sums.iter().enumerate() {
                        let g = group(j, n);
                        mags[g] = mags[g].max(s.abs());
                    }
                }
                let tol = mags.map(|m| RELATIVE_TOLERANCE * m);
                for (p, c) in pieces.iter().zip(roots) {
                    ctx.adapt(&rule, &p.tri, p.source, c, tol, 0, &mut out);
                }
            }
        }
        Ok(out)
    }

    fn push(&mut self, c: Chunk) {
        self.weights.extend(c.weights);
        self.values.extend(c.values);
        self.grads.extend(c.grads);
        self.phi.extend(c.phi);
        self.dphi.extend(c.dphi);
    }

    pub fn degree(&self) -> usize {
        self.basis.degree
    }

    #[inline]
    pub fn phi_at(&self, q: usize) -> &[f64] {
        let n = self.basis.len();
        &self.phi[q * n..(q + 1) * n]
    }

    #[inline]
    pub fn dphi_at(&self, q: usize) -> &[Point] {
        let n = self.basis.len();
        &self.dphi[q * n..(q + 1) * n]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `int u phi_k`.
    pub fn moments(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.basis.len());
        for q in 0..self.len() {
            let wu = self.weights[q] * self.values[q];
            for (k, &p) in self.phi_at(q).iter().enumerate() {
                m[k] += wu * p;
            }
        }
        m
    }

    /// `int grad u . grad phi_k`.
    pub fn grad_moments(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.basis.len());
        for q in 0..self.len() {
            let g = self.grads[q];
            let w = self.weights[q];
            for (k, &d) in self.dphi_at(q).iter().enumerate() {
                m[k] += w * dot(g, d);
            }
        }
        m
    }

    /// Right-hand side `int u phi_k + eps int grad u . grad phi_k`.
    pub fn load(&self, epsilon: f64) -> DVector<f64> {
        let mut b = self.moments();
        if epsilon != 0.0 {
            b += self.grad_moments() * epsilon;
        }
        b
    }

    pub fn integral_u(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// `(||u||^2, ||grad u||^2)`.
    pub fn norm_parts(&self) -> (f64, f64) {
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for q in 0..self.len() {
            l2 += self.weights[q] * self.values[q] * self.values[q];
            h1 += self.weights[q] * dot(self.grads[q], self.grads[q]);
        }
        (l2, h1)
    }

    pub fn norm_sq(&self, epsilon: f64) -> f64 {
        let (l2, h1) = self.norm_parts();
        l2 + epsilon * h1
    }

    /// `(||u - P||^2, ||grad(u - P)||^2)` for `P = sum c_k phi_k`.
    pub fn residual_parts(&self, coeffs: &[f64]) -> (f64, f64) {
        let mut l2 = 0.0;
        let mut h1 = 0.0;
        for q in 0..self.len() {
            let phi = self.phi_at(q);
            let dphi = self.dphi_at(q);
            let mut p = 0.0;
            let mut g = [0.0, 0.0];
            for (k, &c) in coeffs.iter().enumerate() {
                p += c * phi[k];
                g[0] += c * dphi[k][0];
                g[1] += c * dphi[k][1];
            }
            let r = self.values[q] - p;
            let rg = [self.grads[q][0] - g[0], self.grads[q][1] - g[1]];
            l2 += self.weights[q] * r * r;
            h1 += self.weights[q] * dot(rg, rg);
        }
        (l2, h1)
    }

    /// `|||u - P|||^2` on the triangle.
    pub fn residual_sq(&self, epsilon: f64, coeffs: &[f64]) -> f64 {
        let (l2, h1) = self.residual_parts(coeffs);
        l2 + epsilon * h1
    }
}

/// Test-vector entries `0..n` and `2n` measure values, the rest gradients.
fn group(j: usize, n: usize) -> usize {
    if j < n || j == 2 * n {
        0
    } else {
        1
    }
}

struct Ctx<'a> {
    u: &'a TargetFunction,
    tri: &'a Triangle,
    basis: &'a ReferenceBasis,
    inv_t: [[f64; 2]; 2],
}

impl Ctx<'_> {
    fn chunk(&self, rule: &QuadratureRule, piece: &Triangle, source: Option<usize>) -> Chunk {
        let n = self.basis.len();
        let m = rule.len();
        let mut c = Chunk {
            weights: Vec::with_capacity(m),
            values: Vec::with_capacity(m),
            grads: Vec::with_capacity(m),
            phi: Vec::with_capacity(m * n),
            dphi: Vec::with_capacity(m * n),
            sums: vec![0.0; 2 * n + 2],
        };
        let it = self.inv_t;
        for (x, w) in rule.on_triangle(piece) {
            let (v, g) = self.u.eval_on(source, x);
            let xi = self.tri.inverse_map(x);
            let phi = self.basis.eval(xi);
            let dphi = self.basis.grad(xi).into_iter().map(|d| {
                [
                    it[0][0] * d[0] + it[0][1] * d[1],
                    it[1][0] * d[0] + it[1][1] * d[1],
                ]
            });
            let start = c.dphi.len();
            c.dphi.extend(dphi);
            let dphi = &c.dphi[start..];
            for k in 0..n {
                c.sums[k] += w * v * phi[k];
                c.sums[n + k] += w * dot(g, dphi[k]);
            }
            c.sums[2 * n] += w * v * v;
            c.sums[2 * n + 1] += w * dot(g, g);
            c.weights.push(w);
            c.values.push(v);
            c.grads.push(g);
            c.phi.extend(phi);
        }
        c
    }

    #[allow(clippy::too_many_arguments)]
    fn adapt(
        &self,
        rule: &QuadratureRule,
        piece: &Triangle,
        source: Option<usize>,
        coarse: Chunk,
        tol: [f64; 2],
        level: usize,
        out: &mut SampledTriangle,
    ) {
        if tol[0] == 0.0 && tol[1] == 0.0 {
            out.push(coarse);
            return;
        }
        let n = self.basis.len();
        let children: Vec<(Triangle, Chunk)> = piece
            .red_children()
            .into_iter()
            .map(|t| (t, self.chunk(rule, &t, source)))
            .collect();
        let converged = (0..coarse.sums.len()).all(|j| {
            let fine: f64 = children.iter().map(|(_, c)| c.sums[j]).sum();
            (fine - coarse.sums[j]).abs() <= tol[group(j, n)]
        });
        if converged || level + 1 >= MAX_LEVELS {
            for (_, c) in children {
                out.push(c);
            }
            return;
        }
        for (t, c) in children {
            self.adapt(rule, &t, source, c, tol, level + 1, out);
        }
    }
}

/// Quadrature samples of a target on a segment.
#[derive(Clone, Debug)]
pub struct SampledEdge {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledEdge {
    /// Sample `u` on `[a, b]` with exactness `degree` against polynomials
    /// on smooth pieces; non-polynomial targets are bisected adaptively.
    pub fn new(u: &TargetFunction, a: Point, b: Point, degree: usize) -> Self {
        let mut out = SampledEdge {
            points: Vec::new(),
            weights: Vec::new(),
            values: Vec::new(),
        };
        let polynomial = u.piece_degree();
        let n = match polynomial {
            Some(pd) => (degree + pd) / 2 + 1,
            None => degree / 2 + 4,
        };
        let (t, w) = gauss_legendre(n);
        let moments = degree + 2;
        let sample =
            |p: Point, q: Point, src: Option<usize>| -> (Vec<(Point, f64, f64)>, Vec<f64>) {
                let len = dist(p, q);
                let mut pts = Vec::with_capacity(n);
                let mut sums = vec![0.0; moments];
                for (&s, &ws) in t.iter().zip(&w) {
                    let x = lerp(p, q, s);
                    let v = u.eval_on(src, x).0;
                    let wl = ws * len;
                    // moments against powers of the arclength along [a, b]
                    let arc = dist(a, x);
                    for (k, sum) in sums.iter_mut().take(moments - 1).enumerate() {
                        *sum += wl * v * arc.powi(k as i32);
                    }
                    sums[moments - 1] += wl * v * v;
                    pts.push((x, wl, v));
                }
                (pts, sums)
            };
        let pieces = u.segment_pieces(a, b);
        let roots: Vec<_> = pieces.iter().map(|&(p, q, s)| sample(p, q, s)).collect();
        let mag = roots
            .iter()
            .flat_map(|r| r.1.iter())
            .fold(0.0f64, |m, s| m.max(s.abs()));
        let tol = RELATIVE_TOLERANCE * mag;
        let mut stack: Vec<(
            Point,
            Point,
            Option<usize>,
            Vec<(Point, f64, f64)>,
            Vec<f64>,
            f64,
            usize,
        )> = pieces
            .iter()
            .zip(roots)
            .map(|(&(p, q, s), (pts, sums))| (p, q, s, pts, sums, tol, 0))
            .collect();
        stack.reverse();
        while let Some((p, q, s, pts, sums, tol, level)) = stack.pop() {
            if polynomial.is_some() || tol == 0.0 {
                out.extend(pts);
                continue;
            }
            let m = lerp(p, q, 0.5);
            let left = sample(p, m, s);
            let right = sample(m, q, s);
            let ok = (0..moments).all(|k| (left.1[k] + right.1[k] - sums[k]).abs() <= tol);
            if ok || level + 1 >= MAX_LEVELS * 2 {
                out.extend(left.0);
                out.extend(right.0);
            } else {
                stack.push((m, q, s, right.0, right.1, 0.5 * tol, level + 1));
                stack.push((p, m, s, left.0, left.1, 0.5 * tol, level + 1));
            }
        }
        out
    }

    fn extend(&mut self, pts: Vec<(Point, f64, f64)>) {
        for (x, w, v) in pts {
            self.points.push(x);
            self.weights.push(w);
            self.values.push(v);
        }
    }

    pub fn integral_sq(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum()
    }
}

/// Thread-safe cache of triangle samples of one target, keyed by the
/// ordered vertex coordinates (the local basis depends on vertex order).
pub struct SampleCache {
    pub target: TargetFunction,
    pub degree: usize,
    map: std::sync::Mutex<std::collections::HashMap<[(u64, u64); 3], Arc<SampledTriangle>>>,
}

impl SampleCache {
    pub fn new(target: TargetFunction, degree: usize) -> Result<Self> {
        ReferenceBasis::get(degree)?;
        Ok(SampleCache {
            target,
            degree,
            map: Default::default(),
        })
    }

    pub fn get(&self, tri: &Triangle) -> Result<Arc<SampledTriangle>> {
        let key = tri.v.map(crate::geometry::point_key);
        if let Some(s) = self.map.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(SampledTriangle::new(&self.target, tri, self.degree)?);
        self.map
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| s.clone());
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
