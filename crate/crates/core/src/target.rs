//! Functions `u` to be approximated.
//!
//! Analytic targets carry a value, a gradient and a list of lines across
//! which the gradient (or the value) may jump. Integration splits every
//! triangle along these lines first. Discrete targets are piecewise
//! polynomials on a fine mesh; integration clips against its elements.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::element::{eval_polynomial, ReferenceBasis};
use crate::error::{Error, Result};
use crate::geometry::{
    dist, fan_triangulate, intersect_triangles, lerp, polygon_area, split_by_lines, Line, Point,
    Triangle,
};
use crate::mesh::Mesh;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Names accepted by [`TargetFunction::builtin`].
pub const BUILTIN_TARGETS: &[&str] = &[
    "counterexample",
    "step",
    "regularized-step",
    "smooth-sine",
    "boundary-layer",
    "polynomial",
    "random-smooth",
];

#[derive(Clone)]
pub struct AnalyticTarget {
    pub name: String,
    pub value: ScalarFn,
    pub gradient: GradientFn,
    pub kinks: Vec<Line>,
    /// Total degree when the target is a polynomial.
    pub polynomial_degree: Option<usize>,
}

/// Piecewise polynomial on the leaves of a fine mesh.
#[derive(Clone)]
pub struct DiscreteTarget {
    pub name: String,
    pub degree: usize,
    pub mesh: Arc<Mesh>,
    /// local nodal coefficients, aligned with `mesh.leaves()`
    pub coeffs: Vec<Vec<f64>>,
    triangles: Vec<Triangle>,
    basis: Arc<ReferenceBasis>,
    grid: Arc<BucketGrid>,
}

#[derive(Clone)]
pub enum TargetFunction {
    Analytic(AnalyticTarget),
    Discrete(DiscreteTarget),
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetFunction::Analytic(a) => f
                .debug_struct("Analytic")
                .field("name", &a.name)
                .field("kinks", &a.kinks)
                .finish(),
            TargetFunction::Discrete(d) => f
                .debug_struct("Discrete")
                .field("name", &d.name)
                .field("degree", &d.degree)
                .field("elements", &d.coeffs.len())
                .finish(),
        }
    }
}

/// A sub-triangle on which the target is smooth, with the fine element it
/// belongs to (discrete targets only).
#[derive(Clone, Copy, Debug)]
pub struct Piece {
    pub tri: Triangle,
    pub source: Option<usize>,
}

impl TargetFunction {
    pub fn analytic<V, G>(name: &str, value: V, gradient: G) -> Self
    where
        V: Fn(Point) -> f64 + Send + Sync + 'static,
        G: Fn(Point) -> Point + Send + Sync + 'static,
    {
        TargetFunction::Analytic(AnalyticTarget {
            name: name.to_string(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            kinks: Vec::new(),
            polynomial_degree: None,
        })
    }

    /// Declare lines where the target is not smooth.
    pub fn with_kinks(mut self, lines: Vec<Line>) -> Self {
        if let TargetFunction::Analytic(a) = &mut self {
            a.kinks.extend(lines);
        }
        self
    }

    /// Polynomial `sum c x^a y^b` given as `(a, b, c)` terms.
    pub fn polynomial(name: &str, terms: Vec<(u32, u32, f64)>) -> Self {
        let degree = terms
            .iter()
            .map(|&(a, b, _)| (a + b) as usize)
            .max()
            .unwrap_or(0);
        let t1 = Arc::new(terms);
        let t2 = t1.clone();
        let value = move |p: Point| {
            t1.iter()
                .map(|&(a, b, c)| c * p[0].powi(a as i32) * p[1].powi(b as i32))
                .sum()
        };
        let gradient = move |p: Point| {
            let mut g = [0.0, 0.0];
            for &(a, b, c) in t2.iter() {
                if a > 0 {
                    g[0] += c * a as f64 * p[0].powi(a as i32 - 1) * p[1].powi(b as i32);
                }
                if b > 0 {
                    g[1] += c * b as f64 * p[0].powi(a as i32) * p[1].powi(b as i32 - 1);
                }
            }
            g
        };
        let mut t = TargetFunction::analytic(name, value, gradient);
        if let TargetFunction::Analytic(a) = &mut t {
            a.polynomial_degree = Some(degree);
        }
        t
    }

    /// Piecewise polynomial of degree `degree` on the leaves of `mesh`, with
    /// local nodal coefficients aligned with `mesh.leaves()`.
    pub fn discrete(name: &str, mesh: Mesh, degree: usize, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        if coeffs.len() != mesh.num_elements() || coeffs.iter().any(|c| c.len() != basis.len()) {
            return Err(Error::InvalidParameter(format!(
                "coefficient table does not match {} elements of degree {degree}",
                mesh.num_elements()
            )));
        }
        let triangles: Vec<Triangle> = mesh.leaves().iter().map(|&k| mesh.triangle(k)).collect();
        let grid = Arc::new(BucketGrid::new(&triangles));
        Ok(TargetFunction::Discrete(DiscreteTarget {
            name: name.to_string(),
            degree,
            mesh: Arc::new(mesh),
            coeffs,
            triangles,
            basis,
            grid,
        }))
    }

    /// Nodal interpolant of `f` in the continuous degree-`degree` space on `mesh`.
    pub fn interpolate<F: Fn(Point) -> f64>(
        name: &str,
        mesh: &Mesh,
        degree: usize,
        f: F,
    ) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        let coeffs = mesh
            .leaves()
            .iter()
            .map(|&k| {
                basis
                    .physical_nodes(&mesh.triangle(k))
                    .into_iter()
                    .map(&f)
                    .collect()
            })
            .collect();
        TargetFunction::discrete(name, mesh.clone(), degree, coeffs)
    }

    /// A random element of the continuous degree-`degree` space on `mesh`:
    /// nodal values drawn uniformly from `[-1, 1]`, keyed by node position.
    pub fn random_fe(mesh: &Mesh, degree: usize, seed: u64) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: HashMap<(u64, u64), f64> = HashMap::new();
        let mut coeffs = Vec::with_capacity(mesh.num_elements());
        for &k in mesh.leaves() {
            let local = basis
                .physical_nodes(&mesh.triangle(k))
                .into_iter()
                .map(|p| {
                    let key = node_key(p, mesh.scale());
                    *values
                        .entry(key)
                        .or_insert_with(|| rng.gen_range(-1.0..1.0))
                })
                .collect();
            coeffs.push(local);
        }
        TargetFunction::discrete(&format!("random-fe-{seed}"), mesh.clone(), degree, coeffs)
    }

    /// Built-in targets on the domain `(-2, 2) x (-1, 1)`.
    pub fn builtin(name: &str, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be >= 0, got {epsilon}"
            )));
        }
        let t = match name {
            "counterexample" | "counterexample-u_eps" => counterexample(epsilon),
            "step" => step(),
            "regularized-step" => regularized_step(0.05),
            "smooth-sine" => smooth_sine(),
            "boundary-layer" => boundary_layer([-2.0, 2.0, -1.0, 1.0], epsilon),
            "polynomial" => TargetFunction::polynomial(
                "polynomial",
                vec![(0, 0, 1.0), (1, 0, 0.5), (0, 1, -0.25)],
            ),
            "random-smooth" => random_smooth(seed),
            _ => return Err(Error::InvalidParameter(format!("unknown target `{name}`"))),
        };
        Ok(t)
    }

    pub fn name(&self) -> &str {
        match self {
            TargetFunction::Analytic(a) => &a.name,
            TargetFunction::Discrete(d) => &d.name,
        }
    }

    /// Degree of a polynomial representation on each piece, if there is one.
    pub fn piece_degree(&self) -> Option<usize> {
        match self {
            TargetFunction::Analytic(a) => a.polynomial_degree,
            TargetFunction::Discrete(d) => Some(d.degree),
        }
    }

    pub fn value(&self, p: Point) -> f64 {
        match self {
            TargetFunction::Analytic(a) => (a.value)(p),
            TargetFunction::Discrete(d) => match d.locate(p) {
                Some(i) => d.eval(i, p).0,
                None => 0.0,
            },
        }
    }

    pub fn gradient(&self, p: Point) -> Point {
        match self {
            TargetFunction::Analytic(a) => (a.gradient)(p),
            TargetFunction::Discrete(d) => match d.locate(p) {
                Some(i) => d.eval(i, p).1,
                None => [0.0, 0.0],
            },
        }
    }

    /// Value and gradient at `p` inside a piece returned by [`pieces`](Self::pieces).
    #[inline]
    pub fn eval_on(&self, source: Option<usize>, p: Point) -> (f64, Point) {
        match (self, source) {
            (TargetFunction::Analytic(a), _) => ((a.value)(p), (a.gradient)(p)),
            (TargetFunction::Discrete(d), Some(i)) => d.eval(i, p),
            (TargetFunction::Discrete(_), None) => (self.value(p), self.gradient(p)),
        }
    }

    /// Split `tri` into pieces on which the target is smooth.
    pub fn pieces(&self, tri: &Triangle) -> Vec<Piece> {
        match self {
            TargetFunction::Analytic(a) => {
                let lines: Vec<Line> = a
                    .kinks
                    .iter()
                    .filter(|l| crosses(tri, l))
                    .copied()
                    .collect();
                if lines.is_empty() {
                    return vec![Piece {
                        tri: *tri,
                        source: None,
                    }];
                }
                split_by_lines(tri, &lines)
                    .into_iter()
                    .map(|t| Piece {
                        tri: t,
                        source: None,
                    })
                    .collect()
            }
            TargetFunction::Discrete(d) => d.pieces(tri),
        }
    }

    /// Split the segment `[a, b]` into sub-segments on which the target is smooth.
    pub fn segment_pieces(&self, a: Point, b: Point) -> Vec<(Point, Point, Option<usize>)> {
        match self {
            TargetFunction::Analytic(an) => {
                let mut ts = vec![0.0, 1.0];
                for line in &an.kinks {
                    if let Some(t) = crate::geometry::segment_crossings(a, b, line) {
                        ts.push(t);
                    }
                }
                ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                ts.windows(2)
                    .filter(|w| w[1] - w[0] > 1e-14)
                    .map(|w| (lerp(a, b, w[0]), lerp(a, b, w[1]), None))
                    .collect()
            }
            TargetFunction::Discrete(d) => d.segment_pieces(a, b),
        }
    }
}

fn crosses(tri: &Triangle, line: &Line) -> bool {
    let vals = tri.v.map(|p| line.eval(p));
    vals.iter().any(|&v| v > 0.0) && vals.iter().any(|&v| v < 0.0)
}

fn node_key(p: Point, scale: f64) -> (u64, u64) {
    // coordinates rounded to 1e-12 of the mesh scale
    let q = |x: f64| ((x / scale) * 1e12).round() as i64 as u64;
    (q(p[0]), q(p[1]))
}

/// `-1` left of `-sqrt(eps)`, `1` right of `sqrt(eps)`, linear in between;
/// the step with value 0 on `x = 0` for `eps = 0`.
pub fn counterexample(epsilon: f64) -> TargetFunction {
    if epsilon == 0.0 {
        let mut t = step();
        if let TargetFunction::Analytic(a) = &mut t {
            a.name = "counterexample".into();
        }
        return t;
    }
    let s = epsilon.sqrt();
    let value = move |p: Point| (p[0] / s).clamp(-1.0, 1.0);
    let gradient = move |p: Point| {
        if p[0].abs() < s {
            [1.0 / s, 0.0]
        } else {
            [0.0, 0.0]
        }
    };
    TargetFunction::analytic("counterexample", value, gradient)
        .with_kinks(vec![Line::vertical(-s), Line::vertical(s)])
}

/// Sign of `x`, with value 0 on the jump line.
pub fn step() -> TargetFunction {
    let value = |p: Point| {
        if p[0] > 0.0 {
            1.0
        } else if p[0] < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    TargetFunction::analytic("step", value, |_| [0.0, 0.0]).with_kinks(vec![Line::vertical(0.0)])
}

/// `tanh(x / width)`.
pub fn regularized_step(width: f64) -> TargetFunction {
    let value = move |p: Point| (p[0] / width).tanh();
    let gradient = move |p: Point| {
        let c = (p[0] / width).cosh();
        [1.0 / (width * c * c), 0.0]
    };
    TargetFunction::analytic("regularized-step", value, gradient)
}

/// `sin(pi x / 2) cos(pi y / 2) + x y / 4`.
pub fn smooth_sine() -> TargetFunction {
    let k = PI / 2.0;
    let value = move |p: Point| (k * p[0]).sin() * (k * p[1]).cos() + 0.25 * p[0] * p[1];
    let gradient = move |p: Point| {
        [
            k * (k * p[0]).cos() * (k * p[1]).cos() + 0.25 * p[1],
            -k * (k * p[0]).sin() * (k * p[1]).sin() + 0.25 * p[0],
        ]
    };
    TargetFunction::analytic("smooth-sine", value, gradient)
}

/// Smooth surrogate of `min{1, dist(x, boundary) / sqrt(eps)}` on the
/// rectangle `[x0, x1] x [y0, y1]`: the product over the four sides of
/// `1 - exp(-d / sqrt(eps))`. Vanishes on the boundary; for `eps = 0` it is
/// 1 inside and 0 on the boundary.
pub fn boundary_layer(rect: [f64; 4], epsilon: f64) -> TargetFunction {
    let [x0, x1, y0, y1] = rect;
    let s = epsilon.sqrt();
    let dists = move |p: Point| [p[0] - x0, x1 - p[0], p[1] - y0, y1 - p[1]];
    let dirs: [Point; 4] = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let factor = move |d: f64| -> (f64, f64) {
        if d <= 0.0 {
            (0.0, if s > 0.0 { 1.0 / s } else { 0.0 })
        } else if s == 0.0 {
            (1.0, 0.0)
        } else {
            let e = (-d / s).exp();
            (1.0 - e, e / s)
        }
    };
    let value = move |p: Point| dists(p).iter().map(|&d| factor(d).0).product();
    let gradient = move |p: Point| {
        let f: Vec<(f64, f64)> = dists(p).iter().map(|&d| factor(d)).collect();
        let mut g = [0.0, 0.0];
        for i in 0..4 {
            let others: f64 = (0..4).filter(|&j| j != i).map(|j| f[j].0).product();
            g[0] += f[i].1 * dirs[i][0] * others;
            g[1] += f[i].1 * dirs[i][1] * others;
        }
        g
    };
    TargetFunction::analytic("boundary-layer", value, gradient)
}

/// Smooth random target: a few low-frequency sine waves with random
/// directions, phases and amplitudes plus a random quadratic.
pub fn random_smooth(seed: u64) -> TargetFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(Point, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.gen_range(0.0..2.0 * PI);
            let freq = rng.gen_range(0.5..3.0);
            let k = [freq * angle.cos(), freq * angle.sin()];
            (k, rng.gen_range(0.0..2.0 * PI), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let quad: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-0.5..0.5));
    let w1 = Arc::new(waves);
    let w2 = w1.clone();
    let value = move |p: Point| {
        let q = quad[0]
            + quad[1] * p[0]
            + quad[2] * p[1]
            + quad[3] * p[0] * p[0]
            + quad[4] * p[0] * p[1]
            + quad[5] * p[1] * p[1];
        q + w1
            .iter()
            .map(|&(k, ph, a)| a * (k[0] * p[0] + k[1] * p[1] + ph).sin())
            .sum::<f64>()
    };
    let gradient = move |p: Point| {
        let mut g = [
            quad[1] + 2.0 * quad[3] * p[0] + quad[4] * p[1],
            quad[2] + quad[4] * p[0] + 2.0 * quad[5] * p[1],
        ];
        for &(k, ph, a) in w2.iter() {
            let c = a * (k[0] * p[0] + k[1] * p[1] + ph).cos();
            g[0] += c * k[0];
            g[1] += c * k[1];
        }
        g
    };
    TargetFunction::analytic(&format!("random-smooth-{seed}"), value, gradient)
}

impl DiscreteTarget {
    #[inline]
    fn eval(&self, i: usize, p: Point) -> (f64, Point) {
        let tri = &self.triangles[i];
        let xi = tri.inverse_map(p);
        let phi = self.basis.eval(xi);
        let dphi = self.basis.grad(xi);
        let it = tri.inv_jacobian_t();
        let c = &self.coeffs[i];
        let mut v = 0.0;
        let mut gref = [0.0, 0.0];
        for k in 0..c.len() {
            v += c[k] * phi[k];
            gref[0] += c[k] * dphi[k][0];
            gref[1] += c[k] * dphi[k][1];
        }
        let g = [
            it[0][0] * gref[0] + it[0][1] * gref[1],
            it[1][0] * gref[0] + it[1][1] * gref[1],
        ];
        (v, g)
    }

    /// Value of fine element `i`'s polynomial at `p`.
    pub fn eval_element(&self, i: usize, p: Point) -> f64 {
        eval_polynomial(&self.basis, &self.triangles[i], &self.coeffs[i], p)
    }

    fn locate(&self, p: Point) -> Option<usize> {
        let cands = self.grid.query(p, p);
        cands
            .iter()
            .copied()
            .find(|&i| self.triangles[i].contains(p, 1e-12))
    }

    fn pieces(&self, tri: &Triangle) -> Vec<Piece> {
        let (lo, hi) = tri.bbox();
        let min_area = 1e-14 * tri.area();
        let mut out = Vec::new();
        for i in self.grid.query(lo, hi) {
            let poly = intersect_triangles(tri, &self.triangles[i]);
            if poly.len() < 3 || polygon_area(&poly) <= min_area {
                continue;
            }
            for t in fan_triangulate(&poly, min_area) {
                out.push(Piece {
                    tri: t,
                    source: Some(i),
                });
            }
        }
        out
    }

    fn segment_pieces(&self, a: Point, b: Point) -> Vec<(Point, Point, Option<usize>)> {
        let lo = [a[0].min(b[0]), a[1].min(b[1])];
        let hi = [a[0].max(b[0]), a[1].max(b[1])];
        let len = dist(a, b);
        let mut cuts: Vec<(f64, f64, usize)> = Vec::new();
        for i in self.grid.query(lo, hi) {
            if let Some((t0, t1)) = clip_segment(a, b, &self.triangles[i]) {
                if (t1 - t0) * len > 1e-13 * len.max(1.0) {
                    cuts.push((t0, t1, i));
                }
            }
        }
        // an edge lying on a fine face is covered from both sides; keep one
        cuts.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.2.cmp(&y.2)));
        let mut out = Vec::new();
        let mut reached = 0.0;
        for (t0, t1, i) in cuts {
            if t1 <= reached + 1e-13 {
                continue;
            }
            let s = t0.max(reached);
            out.push((lerp(a, b, s), lerp(a, b, t1), Some(i)));
            reached = t1;
        }
        out
    }
}

/// Parameter interval of `[a, b]` inside the closed triangle, if any.
fn clip_segment(a: Point, b: Point, tri: &Triangle) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    let tol = 1e-12 * tri.diameter();
    for i in 0..3 {
        let (p, q) = tri.edge(i);
        let line = Line::through(p, q);
        let scale = line.normal[0].hypot(line.normal[1]);
        let fa = line.eval(a) / scale + tol;
        let fb = line.eval(b) / scale + tol;
        // keep {f >= 0}
        if fa < 0.0 && fb < 0.0 {
            return None;
        }
        if fa < 0.0 {
            t0 = t0.max(fa / (fa - fb));
        } else if fb < 0.0 {
            t1 = t1.min(fa / (fa - fb));
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Uniform bucket grid over triangle bounding boxes.
struct BucketGrid {
    lo: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<usize>>,
}

impl BucketGrid {
    fn new(tris: &[Triangle]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for t in tris {
            let (a, b) = t.bbox();
            lo = [lo[0].min(a[0]), lo[1].min(a[1])];
            hi = [hi[0].max(b[0]), hi[1].max(b[1])];
        }
        let area = ((hi[0] - lo[0]) * (hi[1] - lo[1])).max(f64::MIN_POSITIVE);
        let cell = (area / tris.len().max(1) as f64).sqrt().max(1e-300);
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).clamp(1, 4096);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).clamp(1, 4096);
        let mut grid = BucketGrid {
            lo,
            cell,
            nx,
            ny,
            cells: vec![Vec::new(); nx * ny],
        };
        for (i, t) in tris.iter().enumerate() {
            let (a, b) = t.bbox();
            let (i0, j0) = grid.index(a);
            let (i1, j1) = grid.index(b);
            for j in j0..=j1 {
                for ii in i0..=i1 {
                    grid.cells[j * nx + ii].push(i);
                }
            }
        }
        grid
    }

    fn index(&self, p: Point) -> (usize, usize) {
        let f = |x: f64, n: usize| ((x / self.cell).floor().max(0.0) as usize).min(n - 1);
        (f(p[0] - self.lo[0], self.nx), f(p[1] - self.lo[1], self.ny))
    }

    fn query(&self, lo: Point, hi: Point) -> Vec<usize> {
        let pad = 1e-12 * self.cell;
        let (i0, j0) = self.index([lo[0] - pad, lo[1] - pad]);
        let (i1, j1) = self.index([hi[0] + pad, hi[1] + pad]);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.cells[j * self.nx + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}
