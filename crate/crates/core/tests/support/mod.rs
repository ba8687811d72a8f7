//! Independent reference computations for the integration tests.
//!
//! Targets here are piecewise polynomials on convex regions cut out by half
//! planes. Integrals over polygons are exact: Green's theorem turns them
//! into segment integrals of polynomials in the segment parameter, which
//! are integrated symbolically. Best approximations use monomial bases and
//! dense linear algebra; constraints are handled through a null space.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use rdloc::approx::{Approximator, LocalSpace};
use rdloc::element::ReferenceBasis;
use rdloc::geometry::{Point, Triangle};
use rdloc::mesh::{FaceId, Mesh};
use rdloc::target::{counterexample, step};
use rdloc::TargetFunction;

// ---------------------------------------------------------------------------
// polynomials

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly(pub BTreeMap<(u32, u32), f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        Poly::from_terms(&[(0, 0, c)])
    }

    pub fn from_terms(terms: &[(u32, u32, f64)]) -> Self {
        let mut p = Poly::zero();
        for &(a, b, c) in terms {
            *p.0.entry((a, b)).or_insert(0.0) += c;
        }
        p
    }

    pub fn terms(&self) -> Vec<(u32, u32, f64)> {
        self.0.iter().map(|(&(a, b), &c)| (a, b, c)).collect()
    }

    pub fn degree(&self) -> u32 {
        self.0.keys().map(|(a, b)| a + b).max().unwrap_or(0)
    }

    pub fn add(&self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (&k, &c) in &o.0 {
            *p.0.entry(k).or_insert(0.0) += c;
        }
        p
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|(&k, &c)| (k, c * s)).collect())
    }

    pub fn sub(&self, o: &Poly) -> Poly {
        self.add(&o.scale(-1.0))
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut p = Poly::zero();
        for (&(a, b), &c) in &self.0 {
            for (&(d, e), &f) in &o.0 {
                *p.0.entry((a + d, b + e)).or_insert(0.0) += c * f;
            }
        }
        p
    }

    pub fn dx(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .filter(|(&(a, _), _)| a > 0)
                .map(|(&(a, b), &c)| ((a - 1, b), c * a as f64))
                .collect(),
        )
    }

    pub fn dy(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .filter(|(&(_, b), _)| b > 0)
                .map(|(&(a, b), &c)| ((a, b - 1), c * b as f64))
                .collect(),
        )
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.0
            .iter()
            .map(|(&(a, b), &c)| c * p[0].powi(a as i32) * p[1].powi(b as i32))
            .sum()
    }

    /// `p(x + o)`
    pub fn translate(&self, o: Point) -> Poly {
        let mut out = Poly::zero();
        for (&(a, b), &c) in &self.0 {
            let px = binomial_power(o[0], 1.0, a);
            let py = binomial_power(o[1], 1.0, b);
            for (i, &u) in px.iter().enumerate() {
                for (j, &v) in py.iter().enumerate() {
                    *out.0.entry((i as u32, j as u32)).or_insert(0.0) += c * u * v;
                }
            }
        }
        out
    }

    /// `((x - c_x) / h)^i ((y - c_y) / h)^j`
    pub fn scaled_monomial(i: u32, j: u32, c: Point, h: f64) -> Poly {
        let lx = Poly::from_terms(&[(1, 0, 1.0 / h), (0, 0, -c[0] / h)]);
        let ly = Poly::from_terms(&[(0, 1, 1.0 / h), (0, 0, -c[1] / h)]);
        let mut p = Poly::constant(1.0);
        for _ in 0..i {
            p = p.mul(&lx);
        }
        for _ in 0..j {
            p = p.mul(&ly);
        }
        p
    }

    /// `p^2 + eps |grad p|^2`
    pub fn energy_density(&self, eps: f64) -> Poly {
        let gx = self.dx();
        let gy = self.dy();
        self.mul(self)
            .add(&gx.mul(&gx).add(&gy.mul(&gy)).scale(eps))
    }

    /// `p q + eps grad p . grad q`
    pub fn energy_product(&self, q: &Poly, eps: f64) -> Poly {
        self.mul(q).add(
            &self
                .dx()
                .mul(&q.dx())
                .add(&self.dy().mul(&q.dy()))
                .scale(eps),
        )
    }
}

/// Coefficients in `t` of `(a + b t)^n`.
fn binomial_power(a: f64, b: f64, n: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..n {
        let mut next = vec![0.0; out.len() + 1];
        for (k, &c) in out.iter().enumerate() {
            next[k] += c * a;
            next[k + 1] += c * b;
        }
        out = next;
    }
    out
}

fn mul1d(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &a) in p.iter().enumerate() {
        for (j, &b) in q.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

/// Exact integral of `p` over a simple polygon with counter-clockwise vertices,
/// from `int x^a y^b dA = closed integral of x^(a+1) y^b / (a+1) dy`.
pub fn integrate_polygon(p: &Poly, poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..poly.len() {
        let s = poly[i];
        let e = poly[(i + 1) % poly.len()];
        let dxs = e[0] - s[0];
        let dys = e[1] - s[1];
        if dys == 0.0 {
            continue;
        }
        for (&(a, b), &c) in &p.0 {
            let t = mul1d(
                &binomial_power(s[0], dxs, a + 1),
                &binomial_power(s[1], dys, b),
            );
            let int: f64 = t.iter().enumerate().map(|(k, &v)| v / (k + 1) as f64).sum();
            total += c * int * dys / (a + 1) as f64;
        }
    }
    total
}

// ---------------------------------------------------------------------------
// regions

/// Half plane `n . x <= c`.
#[derive(Clone, Copy, Debug)]
pub struct HalfPlane {
    pub n: Point,
    pub c: f64,
}

impl HalfPlane {
    pub fn x_below(x: f64) -> Self {
        HalfPlane {
            n: [1.0, 0.0],
            c: x,
        }
    }

    pub fn x_above(x: f64) -> Self {
        HalfPlane {
            n: [-1.0, 0.0],
            c: -x,
        }
    }
}

pub fn clip(poly: &[Point], h: &HalfPlane) -> Vec<Point> {
    let f = |p: Point| h.n[0] * p[0] + h.n[1] * p[1] - h.c;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (fa, fb) = (f(a), f(b));
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Piecewise polynomial target: each piece is a polynomial on an
/// intersection of half planes; pieces tile the plane.
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    pub pieces: Vec<(Vec<HalfPlane>, Poly)>,
}

impl PiecewisePoly {
    pub fn global(p: Poly) -> Self {
        PiecewisePoly {
            pieces: vec![(Vec::new(), p)],
        }
    }

    /// The clamped ramp `clamp(x / sqrt(eps), -1, 1)`; the sign step for `eps = 0`.
    pub fn counterexample(eps: f64) -> Self {
        if eps == 0.0 {
            return PiecewisePoly {
                pieces: vec![
                    (vec![HalfPlane::x_below(0.0)], Poly::constant(-1.0)),
                    (vec![HalfPlane::x_above(0.0)], Poly::constant(1.0)),
                ],
            };
        }
        let s = eps.sqrt();
        PiecewisePoly {
            pieces: vec![
                (vec![HalfPlane::x_below(-s)], Poly::constant(-1.0)),
                (
                    vec![HalfPlane::x_above(-s), HalfPlane::x_below(s)],
                    Poly::from_terms(&[(1, 0, 1.0 / s)]),
                ),
                (vec![HalfPlane::x_above(s)], Poly::constant(1.0)),
            ],
        }
    }

    /// `(polygon, polynomial)` pieces of a convex polygon.
    pub fn restrict(&self, poly: &[Point]) -> Vec<(Vec<Point>, Poly)> {
        self.pieces
            .iter()
            .filter_map(|(hs, p)| {
                let mut q = poly.to_vec();
                for h in hs {
                    q = clip(&q, h);
                    if q.len() < 3 {
                        return None;
                    }
                }
                Some((q, p.clone()))
            })
            .collect()
    }

    pub fn norm_sq(&self, tri: &Triangle, eps: f64) -> f64 {
        self.restrict(&tri.v)
            .iter()
            .map(|(q, p)| integrate_polygon(&p.energy_density(eps), q))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// dense best approximation

fn sub(p: Point, o: Point) -> Point {
    [p[0] - o[0], p[1] - o[1]]
}

fn monomial_basis(tri: &Triangle, degree: u32) -> Vec<Poly> {
    let c = tri.centroid();
    let h = tri.diameter();
    let mut out = Vec::new();
    for total in 0..=degree {
        for j in 0..=total {
            out.push(Poly::scaled_monomial(total - j, j, c, h));
        }
    }
    out
}

/// Orthonormal basis of the null space of `c` (columns), by SVD of `c`
/// padded with zero rows to a square matrix.
fn null_space(c: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if c.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let rows = c.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v requested");
    let max = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * max)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    DMatrix::from_columns(&cols)
}

/// Domain rectangle for zero-trace constraints.
#[derive(Clone, Copy, Debug)]
pub struct Rect(pub [f64; 4]);

impl Rect {
    pub fn on_boundary(&self, p: Point) -> bool {
        let [x0, x1, y0, y1] = self.0;
        let tol = 1e-12 * (x1 - x0).max(y1 - y0);
        (p[0] - x0).abs() <= tol
            || (p[0] - x1).abs() <= tol
            || (p[1] - y0).abs() <= tol
            || (p[1] - y1).abs() <= tol
    }

    /// Whether the segment lies on one side of the rectangle.
    pub fn segment_on_boundary(&self, a: Point, b: Point) -> bool {
        let [x0, x1, y0, y1] = self.0;
        let tol = 1e-12 * (x1 - x0).max(y1 - y0);
        let same = |u: f64, v: f64, w: f64| (u - w).abs() <= tol && (v - w).abs() <= tol;
        same(a[0], b[0], x0) || same(a[0], b[0], x1) || same(a[1], b[1], y0) || same(a[1], b[1], y1)
    }
}

fn equispaced(a: Point, b: Point, n: usize) -> Vec<Point> {
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        })
        .collect()
}

fn shares_edge(s: &Triangle, t: &Triangle) -> Option<(Point, Point)> {
    let close = |p: Point, q: Point| (p[0] - q[0]).hypot(p[1] - q[1]) <= 1e-12 * s.diameter();
    let common: Vec<Point> =
        s.v.iter()
            .copied()
            .filter(|&p| t.v.iter().any(|&q| close(p, q)))
            .collect();
    (common.len() == 2).then(|| (common[0], common[1]))
}

/// Space of continuous piecewise polynomials of degree `degree` on `tris`
/// (optionally vanishing on the domain boundary), as monomial coefficient
/// vectors restricted to a null space. Everything is assembled in a frame
/// centered at `origin` to keep the exact integrals well conditioned.
pub struct DenseSpace {
    pub tris: Vec<Triangle>,
    pub origin: Point,
    local: Vec<Triangle>,
    pub degree: u32,
    pub basis: Vec<Vec<Poly>>,
    pub offsets: Vec<usize>,
    pub n: usize,
    /// columns span the admissible coefficient vectors
    pub z: DMatrix<f64>,
}

impl DenseSpace {
    pub fn new(tris: &[Triangle], degree: u32, zero_on: Option<Rect>) -> Self {
        let origin = tris[0].centroid();
        let local: Vec<Triangle> = tris
            .iter()
            .map(|t| Triangle {
                v: t.v.map(|p| sub(p, origin)),
            })
            .collect();
        let basis: Vec<Vec<Poly>> = local.iter().map(|t| monomial_basis(t, degree)).collect();
        let mut offsets = Vec::new();
        let mut n = 0;
        for b in &basis {
            offsets.push(n);
            n += b.len();
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let row_at = |t: usize, p: Point, sign: f64, row: &mut Vec<f64>| {
            for (k, m) in basis[t].iter().enumerate() {
                row[offsets[t] + k] += sign * m.eval(sub(p, origin));
            }
        };
        let d = degree.max(1) as usize;
        for s in 0..tris.len() {
            for t in s + 1..tris.len() {
                if let Some((a, b)) = shares_edge(&tris[s], &tris[t]) {
                    for p in equispaced(a, b, d) {
                        let mut row = vec![0.0; n];
                        row_at(s, p, 1.0, &mut row);
                        row_at(t, p, -1.0, &mut row);
                        rows.push(row);
                    }
                }
            }
        }
        if let Some(rect) = zero_on {
            for (t, tri) in tris.iter().enumerate() {
                for e in 0..3 {
                    let (a, b) = (tri.v[e], tri.v[(e + 1) % 3]);
                    if rect.segment_on_boundary(a, b) {
                        for p in equispaced(a, b, d) {
                            let mut row = vec![0.0; n];
                            row_at(t, p, 1.0, &mut row);
                            rows.push(row);
                        }
                    }
                }
                for &p in &tri.v {
                    if rect.on_boundary(p) {
                        let mut row = vec![0.0; n];
                        row_at(t, p, 1.0, &mut row);
                        rows.push(row);
                    }
                }
            }
        }
        let c = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let z = null_space(&c, n);
        DenseSpace {
            tris: tris.to_vec(),
            origin,
            local,
            degree,
            basis,
            offsets,
            n,
            z,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Piecewise polynomial of a full coefficient vector.
    pub fn polys(&self, c: &DVector<f64>) -> Vec<Poly> {
        let o = self.origin;
        self.local_polys(c)
            .iter()
            .map(|p| p.translate([-o[0], -o[1]]))
            .collect()
    }

    fn local_polys(&self, c: &DVector<f64>) -> Vec<Poly> {
        self.basis
            .iter()
            .enumerate()
            .map(|(t, b)| {
                b.iter().enumerate().fold(Poly::zero(), |acc, (k, m)| {
                    acc.add(&m.scale(c[self.offsets[t] + k]))
                })
            })
            .collect()
    }

    fn gram(&self, f: impl Fn(&Poly, &Poly, &Triangle) -> f64) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.n);
        for (t, b) in self.basis.iter().enumerate() {
            for (i, p) in b.iter().enumerate() {
                for (j, q) in b.iter().enumerate() {
                    g[(self.offsets[t] + i, self.offsets[t] + j)] = f(p, q, &self.local[t]);
                }
            }
        }
        g
    }

    /// Target pieces of each triangle, in the local frame.
    fn pieces(&self, u: &PiecewisePoly) -> Vec<Vec<(Vec<Point>, Poly)>> {
        let o = self.origin;
        self.tris
            .iter()
            .map(|t| {
                u.restrict(&t.v)
                    .into_iter()
                    .map(|(q, p)| (q.iter().map(|&x| sub(x, o)).collect(), p.translate(o)))
                    .collect()
            })
            .collect()
    }

    fn load(&self, f: impl Fn(&Poly, usize) -> f64) -> DVector<f64> {
        let mut r = DVector::zeros(self.n);
        for (t, b) in self.basis.iter().enumerate() {
            for (i, p) in b.iter().enumerate() {
                r[self.offsets[t] + i] = f(p, t);
            }
        }
        r
    }
}

/// Result of a dense oracle solve.
pub struct OracleBest {
    pub polys: Vec<Poly>,
    pub error_sq: f64,
    pub norm_sq: f64,
}

/// Best approximation of `u` in the space, in the `eps`-norm.
pub fn best_dense(u: &PiecewisePoly, space: &DenseSpace, eps: f64) -> OracleBest {
    let g = space.gram(|p, q, tri| integrate_polygon(&p.energy_product(q, eps), &tri.v));
    let pieces = space.pieces(u);
    let r = space.load(|m, t| {
        pieces[t]
            .iter()
            .map(|(q, p)| integrate_polygon(&m.energy_product(p, eps), q))
            .sum()
    });
    let z = &space.z;
    let a = z.transpose() * &g * z;
    let y = a
        .clone()
        .cholesky()
        .map(|c| c.solve(&(z.transpose() * &r)))
        .unwrap_or_else(|| {
            a.lu()
                .solve(&(z.transpose() * &r))
                .expect("oracle system solvable")
        });
    let c = z * y;
    let polys = space.local_polys(&c);
    let mut error_sq = 0.0;
    let mut norm_sq = 0.0;
    for (t, ps) in pieces.iter().enumerate() {
        for (q, p) in ps {
            error_sq += integrate_polygon(&p.sub(&polys[t]).energy_density(eps), q);
            norm_sq += integrate_polygon(&p.energy_density(eps), q);
        }
    }
    let o = space.origin;
    let polys = polys.iter().map(|p| p.translate([-o[0], -o[1]])).collect();
    OracleBest {
        polys,
        error_sq,
        norm_sq,
    }
}

/// Minimizer of `||grad(u - P)||` subject to `int P = int u`; returns the
/// seminorm error squared and the mean of `P`.
pub fn best_seminorm_dense(u: &PiecewisePoly, space: &DenseSpace) -> (f64, f64) {
    let k = space.gram(|p, q, tri| {
        integrate_polygon(&p.dx().mul(&q.dx()).add(&p.dy().mul(&q.dy())), &tri.v)
    });
    let pieces = space.pieces(u);
    let r = space.load(|m, t| {
        pieces[t]
            .iter()
            .map(|(q, p)| integrate_polygon(&m.dx().mul(&p.dx()).add(&m.dy().mul(&p.dy())), q))
            .sum()
    });
    let mean = space.load(|m, t| integrate_polygon(m, &space.local[t].v));
    let int_u: f64 = pieces
        .iter()
        .flatten()
        .map(|(q, p)| integrate_polygon(p, q))
        .sum();
    let z = &space.z;
    let d = z.ncols();
    let mut kkt = DMatrix::zeros(d + 1, d + 1);
    kkt.view_mut((0, 0), (d, d))
        .copy_from(&(z.transpose() * &k * z));
    let zm = z.transpose() * &mean;
    for i in 0..d {
        kkt[(i, d)] = zm[i];
        kkt[(d, i)] = zm[i];
    }
    let mut rhs = DVector::zeros(d + 1);
    rhs.rows_mut(0, d).copy_from(&(z.transpose() * &r));
    rhs[d] = int_u;
    let sol = kkt.lu().solve(&rhs).expect("KKT system solvable");
    let c = z * sol.rows(0, d);
    let polys = space.local_polys(&c);
    let mut err = 0.0;
    let mut int_p = 0.0;
    for (t, ps) in pieces.iter().enumerate() {
        int_p += integrate_polygon(&polys[t], &space.local[t].v);
        for (q, p) in ps {
            let e = p.sub(&polys[t]);
            err += integrate_polygon(&e.dx().mul(&e.dx()).add(&e.dy().mul(&e.dy())), q);
        }
    }
    (err, int_p)
}

/// Best approximation on one triangle.
pub fn element_oracle(u: &PiecewisePoly, tri: &Triangle, degree: u32, eps: f64) -> OracleBest {
    best_dense(u, &DenseSpace::new(&[*tri], degree, None), eps)
}

/// Monomial coefficients of a polynomial of degree `degree` from its values
/// at the principal lattice of `tri`.
pub fn fit_polynomial(tri: &Triangle, degree: u32, f: impl Fn(Point) -> f64) -> Poly {
    let basis = monomial_basis(tri, degree);
    let d = degree.max(1);
    let mut pts = Vec::new();
    for i in 0..=d {
        for j in 0..=d - i {
            let (a, b) = (i as f64 / d as f64, j as f64 / d as f64);
            let v = tri.v;
            pts.push([
                v[0][0] + a * (v[1][0] - v[0][0]) + b * (v[2][0] - v[0][0]),
                v[0][1] + a * (v[1][1] - v[0][1]) + b * (v[2][1] - v[0][1]),
            ]);
        }
    }
    let m = DMatrix::from_fn(pts.len(), basis.len(), |r, c| basis[c].eval(pts[r]));
    let rhs = DVector::from_iterator(pts.len(), pts.iter().map(|&p| f(p)));
    let c = m.svd(true, true).solve(&rhs, 1e-14).expect("fit");
    basis
        .iter()
        .enumerate()
        .fold(Poly::zero(), |acc, (k, b)| acc.add(&b.scale(c[k])))
}

// ---------------------------------------------------------------------------
// targets

/// A seeded random polynomial of total degree `degree` on `(-2,2) x (-1,1)`.
pub fn random_poly(seed: u64, degree: u32) -> Poly {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for total in 0..=degree {
        for j in 0..=total {
            terms.push((total - j, j, rng.gen_range(-1.0..1.0)));
        }
    }
    Poly::from_terms(&terms)
}

pub fn poly_target(name: &str, p: &Poly) -> TargetFunction {
    TargetFunction::polynomial(name, p.terms())
}

// ---------------------------------------------------------------------------
// independent newest-vertex bisection

/// Leaf triangle with the index of the vertex opposite its refinement edge.
#[derive(Clone, Copy, Debug)]
pub struct Leaf {
    pub v: [Point; 3],
    pub r: usize,
}

fn qkey(p: Point) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

impl Leaf {
    fn edge(&self) -> ((i64, i64), (i64, i64)) {
        let a = qkey(self.v[(self.r + 1) % 3]);
        let b = qkey(self.v[(self.r + 2) % 3]);
        (a.min(b), a.max(b))
    }

    fn has_edge(&self, e: ((i64, i64), (i64, i64))) -> bool {
        let ks: Vec<_> = self.v.iter().map(|&p| qkey(p)).collect();
        ks.contains(&e.0) && ks.contains(&e.1)
    }

    fn children(&self) -> [Leaf; 2] {
        let p = self.v[self.r];
        let e1 = self.v[(self.r + 1) % 3];
        let e2 = self.v[(self.r + 2) % 3];
        let m = [(e1[0] + e2[0]) / 2.0, (e1[1] + e2[1]) / 2.0];
        [
            Leaf {
                v: [p, e1, m],
                r: 2,
            },
            Leaf {
                v: [p, m, e2],
                r: 1,
            },
        ]
    }

    pub fn key(&self) -> Vec<(i64, i64)> {
        let mut k: Vec<_> = self.v.iter().map(|&p| qkey(p)).collect();
        k.sort();
        k
    }
}

/// Conforming mesh as a plain list of leaves, refined by the textbook
/// recursive closure.
#[derive(Clone, Debug)]
pub struct NvbMesh {
    pub leaves: Vec<Leaf>,
}

impl NvbMesh {
    pub fn from_mesh_roots(m: &Mesh) -> Self {
        let root = m.root_mesh();
        let leaves = root
            .leaves()
            .iter()
            .map(|&k| Leaf {
                v: root.triangle(k).v,
                r: root.nodes()[k.0].refinement_edge,
            })
            .collect();
        NvbMesh { leaves }
    }

    fn position(&self, l: &Leaf) -> usize {
        let k = l.key();
        self.leaves
            .iter()
            .position(|x| x.key() == k)
            .expect("leaf present")
    }

    /// Bisect `t` (a current leaf) and whatever the closure requires.
    pub fn bisect(&mut self, t: Leaf) {
        let e = t.edge();
        loop {
            let me = t.key();
            let nb = self
                .leaves
                .iter()
                .copied()
                .find(|n| n.key() != me && n.has_edge(e));
            match nb {
                Some(n) if n.edge() != e => self.bisect(n),
                _ => break,
            }
        }
        let me = t.key();
        let nb = self
            .leaves
            .iter()
            .copied()
            .find(|n| n.key() != me && n.has_edge(e));
        let i = self.position(&t);
        self.leaves.remove(i);
        self.leaves.extend(t.children());
        if let Some(n) = nb {
            let j = self.position(&n);
            self.leaves.remove(j);
            self.leaves.extend(n.children());
        }
    }

    pub fn leaf_set(&self) -> Vec<Vec<(i64, i64)>> {
        let mut s: Vec<_> = self.leaves.iter().map(|l| l.key()).collect();
        s.sort();
        s
    }
}

pub fn leaf_set_of(m: &Mesh) -> Vec<Vec<(i64, i64)>> {
    let mut s: Vec<_> = m
        .leaves()
        .iter()
        .map(|&k| {
            let mut key: Vec<_> = m.triangle(k).v.iter().map(|&p| qkey(p)).collect();
            key.sort();
            key
        })
        .collect();
    s.sort();
    s
}

/// Number of distinct conforming meshes with at most `budget` elements,
/// by memoized depth-first search over the independent bisection.
pub fn count_conforming(root: &Mesh, budget: usize) -> usize {
    fn visit(m: &NvbMesh, budget: usize, seen: &mut HashMap<Vec<Vec<(i64, i64)>>, ()>) {
        if seen.insert(m.leaf_set(), ()).is_some() {
            return;
        }
        for l in m.leaves.clone() {
            let mut next = m.clone();
            next.bisect(l);
            if next.leaves.len() <= budget {
                visit(&next, budget, seen);
            }
        }
    }
    let mut seen = HashMap::new();
    visit(&NvbMesh::from_mesh_roots(root), budget, &mut seen);
    seen.len()
}

// ---------------------------------------------------------------------------
// oracle corpus

pub struct CorpusCase {
    pub ours: f64,
    pub oracle: f64,
    pub norm_sq: f64,
}

pub fn grid() -> Mesh {
    Mesh::rectangle_grid(-2.0, 2.0, -1.0, 1.0, 3, 2)
        .unwrap()
        .uniform_refine(1)
        .unwrap()
}

pub const DOMAIN: Rect = Rect([-2.0, 2.0, -1.0, 1.0]);

/// Target pair: crate target and the same function for the oracle.
pub fn corpus_target(kind: usize, seed: u64, degree: u32) -> (TargetFunction, PiecewisePoly) {
    match kind {
        0 => {
            let p = random_poly(seed, degree + 2);
            (poly_target("poly", &p), PiecewisePoly::global(p))
        }
        1 => {
            let eps_t = [0.01, 0.3, 1e-4][seed as usize % 3];
            (counterexample(eps_t), PiecewisePoly::counterexample(eps_t))
        }
        _ => (step(), PiecewisePoly::counterexample(0.0)),
    }
}

pub fn straddling_faces(m: &Mesh) -> Vec<FaceId> {
    (0..m.faces().len())
        .map(FaceId)
        .filter(|&f| {
            let face = &m.faces()[f.0];
            face.elements.iter().any(|&(k, _)| {
                let v = m.triangle(k).v;
                v.iter().any(|p| p[0] < -1e-9) && v.iter().any(|p| p[0] > 1e-9)
            })
        })
        .collect()
}

/// The 30-case corpus: crate value and oracle for element, pair, minimal
/// pair and zero-trace patch best errors.
pub fn oracle_corpus() -> Vec<CorpusCase> {
    let m = grid();
    let faces = straddling_faces(&m);
    assert!(faces.len() >= 10);
    let epsilons = [0.0, 1e-3, 1.0, 1e-8, 1e-2];
    let mut out = Vec::with_capacity(30);
    for i in 0..30usize {
        let degree = 1 + i % 3;
        let eps = epsilons[i % 5];
        let (u, pw) = corpus_target(i % 3, i as u64, degree as u32);
        let approx = Approximator::new(&u, degree).unwrap();
        let face = faces[(7 * i) % faces.len()];
        let (ours, oracle) = match (i / 3) % 4 {
            0 => {
                let k = m.faces()[face.0].elements[0].0;
                let tri = m.triangle(k);
                (
                    approx.best_on_triangle(&tri, eps).unwrap().error_sq,
                    element_oracle(&pw, &tri, degree as u32, eps),
                )
            }
            1 => {
                let p = m.pair(face).unwrap();
                let ours = approx
                    .best_on_patch(&p, eps, LocalSpace::Full)
                    .unwrap()
                    .error_sq;
                (
                    ours,
                    best_dense(
                        &pw,
                        &DenseSpace::new(&p.triangles, degree as u32, None),
                        eps,
                    ),
                )
            }
            2 => {
                let p = m.minimal_pair(face).unwrap();
                let ours = approx
                    .best_on_patch(&p, eps, LocalSpace::Full)
                    .unwrap()
                    .error_sq;
                (
                    ours,
                    best_dense(
                        &pw,
                        &DenseSpace::new(&p.triangles, degree as u32, None),
                        eps,
                    ),
                )
            }
            _ => {
                // patches touching the boundary, zero-trace space
                let bf = (0..m.faces().len())
                    .map(FaceId)
                    .filter(|&f| m.faces()[f.0].is_boundary())
                    .collect::<Vec<_>>();
                let f = bf[i % bf.len()];
                let p = m.minimal_pair(f).unwrap();
                let ours = approx
                    .best_on_patch(&p, eps, LocalSpace::ZeroTrace)
                    .unwrap()
                    .error_sq;
                (
                    ours,
                    best_dense(
                        &pw,
                        &DenseSpace::new(&p.triangles, degree as u32, Some(DOMAIN)),
                        eps,
                    ),
                )
            }
        };
        out.push(CorpusCase {
            ours,
            oracle: oracle.error_sq,
            norm_sq: oracle.norm_sq,
        });
    }
    out
}

/// A P1 function plus, on each element, the cubic bubble minus its
/// elementwise L2 projection onto P1. The elementwise L2 projections are the
/// continuous P1 part, so global and elementwise L2 best errors coincide.
pub fn bubble_orthogonal_target(mesh: &Mesh, seed: u64) -> TargetFunction {
    let v = TargetFunction::random_fe(mesh, 1, seed).unwrap();
    let basis = ReferenceBasis::get(3).unwrap();
    let coeffs = mesh
        .leaves()
        .iter()
        .map(|&k| {
            let tri = mesh.triangle(k);
            let [a, b, c] = tri.v;
            let lam = |p: Point, q: Point, r: Point| {
                // affine function equal to 1 at p and 0 on the line qr
                let det = (q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]);
                let nx = (q[1] - r[1]) / det;
                let ny = (r[0] - q[0]) / det;
                Poly::from_terms(&[(1, 0, nx), (0, 1, ny), (0, 0, -(nx * q[0] + ny * q[1]))])
            };
            let bubble = lam(a, b, c)
                .mul(&lam(b, c, a))
                .mul(&lam(c, a, b))
                .scale(27.0);
            let proj = element_oracle(&PiecewisePoly::global(bubble.clone()), &tri, 1, 0.0)
                .polys
                .remove(0);
            let w = bubble.sub(&proj);
            let cen = tri.centroid();
            basis
                .physical_nodes(&tri)
                .into_iter()
                .map(|x| {
                    let y = [
                        x[0] + 1e-12 * (cen[0] - x[0]),
                        x[1] + 1e-12 * (cen[1] - x[1]),
                    ];
                    v.value(y) + w.eval(x)
                })
                .collect()
        })
        .collect();
    TargetFunction::discrete("p1-plus-orthogonal-bubbles", mesh.clone(), 3, coeffs).unwrap()
}
