//! Planar points, triangles and the polygon clipping used to split
//! integration domains along kink lines and fine-mesh element boundaries.

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

#[inline]
pub fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Convex combination `a + t (b - a)`.
#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// Twice the signed area of `(a, b, c)`.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

/// Bit-exact key of a point, used for hashing exact (dyadic) coordinates.
#[inline]
pub fn point_key(p: Point) -> (u64, u64) {
    // normalise -0.0
    let f = |x: f64| {
        if x == 0.0 {
            0.0f64.to_bits()
        } else {
            x.to_bits()
        }
    };
    (f(p[0]), f(p[1]))
}

/// A straight line `{x : normal . x = offset}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub normal: Point,
    pub offset: f64,
}

impl Line {
    pub fn vertical(x: f64) -> Self {
        Line {
            normal: [1.0, 0.0],
            offset: x,
        }
    }

    pub fn horizontal(y: f64) -> Self {
        Line {
            normal: [0.0, 1.0],
            offset: y,
        }
    }

    /// Line through two distinct points.
    pub fn through(a: Point, b: Point) -> Self {
        let d = sub(b, a);
        let normal = [-d[1], d[0]];
        Line {
            normal,
            offset: dot(normal, a),
        }
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        dot(self.normal, p) - self.offset
    }
}

/// Triangle with counter-clockwise vertices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v: [Point; 3],
}

impl Triangle {
    pub fn new(a: Point, b: Point, c: Point) -> Self {
        if orient(a, b, c) < 0.0 {
            Triangle { v: [a, c, b] }
        } else {
            Triangle { v: [a, b, c] }
        }
    }

    pub fn area(&self) -> f64 {
        0.5 * orient(self.v[0], self.v[1], self.v[2])
    }

    pub fn centroid(&self) -> Point {
        [
            (self.v[0][0] + self.v[1][0] + self.v[2][0]) / 3.0,
            (self.v[0][1] + self.v[1][1] + self.v[2][1]) / 3.0,
        ]
    }

    /// Endpoints of local edge `i`, the edge opposite vertex `i`.
    pub fn edge(&self, i: usize) -> (Point, Point) {
        (self.v[(i + 1) % 3], self.v[(i + 2) % 3])
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let (a, b) = self.edge(i);
        dist(a, b)
    }

    pub fn perimeter(&self) -> f64 {
        (0..3).map(|i| self.edge_length(i)).sum()
    }

    /// Longest edge length.
    pub fn diameter(&self) -> f64 {
        (0..3).map(|i| self.edge_length(i)).fold(0.0, f64::max)
    }

    /// Diameter of the inscribed circle.
    pub fn inball_diameter(&self) -> f64 {
        4.0 * self.area() / self.perimeter()
    }

    /// Affine map from the reference triangle `conv{(0,0),(1,0),(0,1)}`.
    pub fn map(&self, xi: Point) -> Point {
        let [a, b, c] = self.v;
        [
            a[0] + (b[0] - a[0]) * xi[0] + (c[0] - a[0]) * xi[1],
            a[1] + (b[1] - a[1]) * xi[0] + (c[1] - a[1]) * xi[1],
        ]
    }

    /// Jacobian columns `[b - a, c - a]` as a row-major 2x2 matrix.
    pub fn jacobian(&self) -> [[f64; 2]; 2] {
        let [a, b, c] = self.v;
        [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]]
    }

    /// Inverse transpose of the Jacobian, mapping reference gradients to physical ones.
    pub fn inv_jacobian_t(&self) -> [[f64; 2]; 2] {
        let j = self.jacobian();
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // (J^{-1})^T = 1/det [[j11, -j10], [-j01, j00]]
        [
            [j[1][1] / det, -j[1][0] / det],
            [-j[0][1] / det, j[0][0] / det],
        ]
    }

    /// Reference coordinates of a physical point.
    pub fn inverse_map(&self, x: Point) -> Point {
        let j = self.jacobian();
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let d = sub(x, self.v[0]);
        [
            (j[1][1] * d[0] - j[0][1] * d[1]) / det,
            (-j[1][0] * d[0] + j[0][0] * d[1]) / det,
        ]
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = self.v[0];
        let mut hi = self.v[0];
        for p in &self.v[1..] {
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
        (lo, hi)
    }

    /// The four congruent children obtained by joining edge midpoints.
    pub fn red_children(&self) -> [Triangle; 4] {
        let [a, b, c] = self.v;
        let ab = midpoint(a, b);
        let bc = midpoint(b, c);
        let ca = midpoint(c, a);
        [
            Triangle { v: [a, ab, ca] },
            Triangle { v: [ab, b, bc] },
            Triangle { v: [ca, bc, c] },
            Triangle { v: [bc, ca, ab] },
        ]
    }

    /// Vertex set as an order-independent bit-exact key.
    pub fn key(&self) -> [(u64, u64); 3] {
        let mut k = [
            point_key(self.v[0]),
            point_key(self.v[1]),
            point_key(self.v[2]),
        ];
        k.sort_unstable();
        k
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let [a, b, c] = self.v;
        let s = self.diameter();
        let t = tol * s;
        orient(a, b, p) >= -t * dist(a, b)
            && orient(b, c, p) >= -t * dist(b, c)
            && orient(c, a, p) >= -t * dist(c, a)
    }
}

/// Clip a convex polygon to the half plane `line.eval(x) >= 0` (or `<= 0` when `keep_negative`).
pub fn clip_half_plane(poly: &[Point], line: &Line, keep_negative: bool) -> Vec<Point> {
    let side = |p: Point| {
        let v = line.eval(p);
        if keep_negative {
            -v
        } else {
            v
        }
    };
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = side(p);
        let sq = side(q);
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
            let t = sp / (sp - sq);
            out.push(lerp(p, q, t));
        }
    }
    out
}

/// Area of a simple polygon (positive for counter-clockwise order).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        s += cross(poly[i], poly[(i + 1) % n]);
    }
    0.5 * s
}

/// Fan triangulation of a convex polygon; pieces below `min_area` are dropped.
pub fn fan_triangulate(poly: &[Point], min_area: f64) -> Vec<Triangle> {
    let mut out = Vec::new();
    if poly.len() < 3 {
        return out;
    }
    for i in 1..poly.len() - 1 {
        let t = Triangle {
            v: [poly[0], poly[i], poly[i + 1]],
        };
        if t.area() > min_area {
            out.push(t);
        }
    }
    out
}

/// Split a triangle along a set of lines into convex pieces, triangulated.
pub fn split_by_lines(tri: &Triangle, lines: &[Line]) -> Vec<Triangle> {
    let min_area = 1e-14 * tri.area();
    let mut polys: Vec<Vec<Point>> = vec![tri.v.to_vec()];
    for line in lines {
        let mut next = Vec::with_capacity(polys.len() * 2);
        for poly in polys {
            let vals: Vec<f64> = poly.iter().map(|&p| line.eval(p)).collect();
            let crosses = vals.iter().any(|&v| v > 0.0) && vals.iter().any(|&v| v < 0.0);
            if !crosses {
                next.push(poly);
                continue;
            }
            for keep_negative in [false, true] {
                let piece = clip_half_plane(&poly, line, keep_negative);
                if piece.len() >= 3 && polygon_area(&piece) > min_area {
                    next.push(piece);
                }
            }
        }
        polys = next;
    }
    polys
        .iter()
        .flat_map(|p| fan_triangulate(p, min_area))
        .collect()
}

/// Intersection of two triangles as a (possibly empty) convex polygon.
pub fn intersect_triangles(a: &Triangle, b: &Triangle) -> Vec<Point> {
    let mut poly = a.v.to_vec();
    for i in 0..3 {
        let (p, q) = b.edge(i);
        // interior of b lies to the left of each counter-clockwise edge
        let line = Line::through(p, q);
        poly = clip_half_plane(&poly, &line, false);
        if poly.len() < 3 {
            return Vec::new();
        }
    }
    poly
}

/// Whether `p` lies on the closed segment `[a, b]` up to `tol` (relative to the segment length).
pub fn on_segment(p: Point, a: Point, b: Point, tol: f64) -> bool {
    let len = dist(a, b);
    if len == 0.0 {
        return dist(p, a) <= tol;
    }
    let d = sub(b, a);
    let off = cross(d, sub(p, a)).abs() / len;
    if off > tol * len {
        return false;
    }
    let t = dot(sub(p, a), d) / (len * len);
    t >= -tol && t <= 1.0 + tol
}

/// Parameters in `(0, 1)` where the segment `[a, b]` crosses `line` transversally.
pub fn segment_crossings(a: Point, b: Point, line: &Line) -> Option<f64> {
    let fa = line.eval(a);
    let fb = line.eval(b);
    if (fa > 0.0 && fb < 0.0) || (fa < 0.0 && fb > 0.0) {
        let t = fa / (fa - fb);
        if t > 1e-14 && t < 1.0 - 1e-14 {
            return Some(t);
        }
    }
    None
}
