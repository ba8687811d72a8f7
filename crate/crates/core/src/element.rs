//! Lagrange elements of degree 1 to 3 on triangles: reference basis,
//! L2-dual basis and local matrices.

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Point, Triangle};
use crate::quadrature::{segment_rule, QuadratureRule};
use crate::sampling::SampledTriangle;
use crate::target::TargetFunction;

pub const MAX_DEGREE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Vertex,
    Edge,
    Interior,
}

/// A lattice node `(i/l, j/l)` of the reference triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeNode {
    /// Barycentric multi-index `(l - i - j, i, j)` relative to vertices 0, 1, 2.
    pub bary: [usize; 3],
    pub kind: NodeKind,
}

impl LatticeNode {
    pub fn coords(&self, degree: usize) -> Point {
        let l = degree as f64;
        [self.bary[1] as f64 / l, self.bary[2] as f64 / l]
    }

    /// Whether the node lies on local edge `e` (opposite vertex `e`).
    pub fn on_edge(&self, e: usize) -> bool {
        self.bary[e] == 0
    }
}

/// Nodal basis of `P_l` on the reference triangle.
///
/// Nodes are ordered lexicographically in `(j, i)`: row by row from the
/// edge `y = 0` upwards. Each basis function is stored by its monomial
/// coefficients `x^a y^b`, `a + b <= l`.
#[derive(Debug)]
pub struct ReferenceBasis {
    pub degree: usize,
    pub nodes: Vec<LatticeNode>,
    monomials: Vec<(usize, usize)>,
    /// column `k` holds the monomial coefficients of basis function `k`
    coeffs: DMatrix<f64>,
    mass: DMatrix<f64>,
    mass_inv: DMatrix<f64>,
}

fn monomial_exponents(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for b in 0..=total {
            out.push((total - b, b));
        }
    }
    out
}

impl ReferenceBasis {
    fn build(degree: usize) -> Self {
        let mut nodes = Vec::new();
        for j in 0..=degree {
            for i in 0..=degree - j {
                let bary = [degree - i - j, i, j];
                let zeros = bary.iter().filter(|&&b| b == 0).count();
                let kind = match zeros {
                    2 => NodeKind::Vertex,
                    1 => NodeKind::Edge,
                    _ => NodeKind::Interior,
                };
                nodes.push(LatticeNode { bary, kind });
            }
        }
        let monomials = monomial_exponents(degree);
        let n = nodes.len();
        let vander = DMatrix::from_fn(n, n, |r, c| {
            let p = nodes[r].coords(degree);
            let (a, b) = monomials[c];
            p[0].powi(a as i32) * p[1].powi(b as i32)
        });
        // V C = I  =>  sum_m V[r][m] C[m][k] = delta_rk
        let coeffs = vander
            .try_inverse()
            .expect("lattice Vandermonde is invertible");
        let mut basis = ReferenceBasis {
            degree,
            nodes,
            monomials,
            coeffs,
            mass: DMatrix::zeros(0, 0),
            mass_inv: DMatrix::zeros(0, 0),
        };
        let rule = QuadratureRule::collapsed(2 * degree);
        let mut mass = DMatrix::zeros(n, n);
        for (p, &w) in rule.points.iter().zip(&rule.weights) {
            let phi = basis.eval(*p);
            for r in 0..n {
                for c in 0..n {
                    mass[(r, c)] += w * phi[r] * phi[c];
                }
            }
        }
        basis.mass_inv = mass
            .clone()
            .cholesky()
            .expect("reference mass is SPD")
            .inverse();
        basis.mass = mass;
        basis
    }

    /// Shared instance for `degree` in `1..=3`.
    pub fn get(degree: usize) -> Result<Arc<ReferenceBasis>> {
        static CACHE: [OnceLock<Arc<ReferenceBasis>>; MAX_DEGREE] =
            [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::Degree(degree));
        }
        Ok(CACHE[degree - 1]
            .get_or_init(|| Arc::new(ReferenceBasis::build(degree)))
            .clone())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn monomial_values(&self, xi: Point) -> Vec<f64> {
        self.monomials
            .iter()
            .map(|&(a, b)| xi[0].powi(a as i32) * xi[1].powi(b as i32))
            .collect()
    }

    pub fn eval(&self, xi: Point) -> Vec<f64> {
        let m = self.monomial_values(xi);
        let n = self.len();
        (0..n)
            .map(|k| (0..n).map(|r| self.coeffs[(r, k)] * m[r]).sum())
            .collect()
    }

    pub fn grad(&self, xi: Point) -> Vec<Point> {
        let n = self.len();
        let dm: Vec<Point> = self
            .monomials
            .iter()
            .map(|&(a, b)| {
                let dx = if a == 0 {
                    0.0
                } else {
                    a as f64 * xi[0].powi(a as i32 - 1) * xi[1].powi(b as i32)
                };
                let dy = if b == 0 {
                    0.0
                } else {
                    b as f64 * xi[0].powi(a as i32) * xi[1].powi(b as i32 - 1)
                };
                [dx, dy]
            })
            .collect();
        (0..n)
            .map(|k| {
                let mut g = [0.0, 0.0];
                for r in 0..n {
                    g[0] += self.coeffs[(r, k)] * dm[r][0];
                    g[1] += self.coeffs[(r, k)] * dm[r][1];
                }
                g
            })
            .collect()
    }

    /// Reference mass matrix on `K^` (area 1/2).
    pub fn reference_mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    /// Physical nodes of `tri` in basis order.
    pub fn physical_nodes(&self, tri: &Triangle) -> Vec<Point> {
        self.nodes
            .iter()
            .map(|n| tri.map(n.coords(self.degree)))
            .collect()
    }

    /// Local indices of the nodes on edge `e`, ordered from the edge's first
    /// endpoint (vertex `e + 1`) to its second (vertex `e + 2`).
    pub fn edge_nodes(&self, e: usize) -> Vec<usize> {
        let from = (e + 1) % 3;
        let mut idx: Vec<usize> = (0..self.len())
            .filter(|&k| self.nodes[k].on_edge(e))
            .collect();
        idx.sort_by_key(|&k| std::cmp::Reverse(self.nodes[k].bary[from]));
        idx
    }
}

/// Evaluate the nodal basis of `tri` at a physical point.
pub fn physical_eval(basis: &ReferenceBasis, tri: &Triangle, x: Point) -> Vec<f64> {
    basis.eval(tri.inverse_map(x))
}

/// Evaluate a polynomial given by nodal coefficients on `tri` at `x`.
pub fn eval_polynomial(basis: &ReferenceBasis, tri: &Triangle, coeffs: &[f64], x: Point) -> f64 {
    physical_eval(basis, tri, x)
        .iter()
        .zip(coeffs)
        .map(|(p, c)| p * c)
        .sum()
}

/// Coefficients of the L2(K)-dual basis in the nodal basis of `tri`:
/// `psi_z = sum_y D[z][y] phi_y`, so that `int_K psi_z phi_y = delta_zy`.
#[derive(Clone, Debug)]
pub struct DualBasis {
    pub coeffs: DMatrix<f64>,
}

impl DualBasis {
    pub fn new(basis: &ReferenceBasis, tri: &Triangle) -> Self {
        // M_K = (|K| / |K^|) M^
        let scale = 0.5 / tri.area();
        DualBasis {
            coeffs: &basis.mass_inv * scale,
        }
    }
}

/// Local matrices of `P_l` on a physical triangle.
#[derive(Clone, Debug)]
pub struct LocalMatrices {
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    /// `int_{E_e} phi_i phi_j` for each local edge `e`.
    pub face_mass: [DMatrix<f64>; 3],
    /// `int_{dK} phi_i phi_j`.
    pub boundary_mass: DMatrix<f64>,
}

/// Assemble mass, stiffness and trace matrices on `tri` with the given rule.
pub fn assemble_local_with(
    tri: &Triangle,
    degree: usize,
    rule: &QuadratureRule,
) -> Result<LocalMatrices> {
    let basis = ReferenceBasis::get(degree)?;
    let scale = tri.diameter();
    if tri.area() < 1e-14 * scale * scale {
        return Err(Error::Degenerate(format!(
            "triangle {:?} has area {:.3e}",
            tri.v,
            tri.area()
        )));
    }
    let n = basis.len();
    let jac = 2.0 * tri.area();
    let git = tri.inv_jacobian_t();
    let mut mass = DMatrix::zeros(n, n);
    let mut stiffness = DMatrix::zeros(n, n);
    for (xi, &w) in rule.points.iter().zip(&rule.weights) {
        let phi = basis.eval(*xi);
        let dphi: Vec<Point> = basis
            .grad(*xi)
            .into_iter()
            .map(|g| {
                [
                    git[0][0] * g[0] + git[0][1] * g[1],
                    git[1][0] * g[0] + git[1][1] * g[1],
                ]
            })
            .collect();
        for r in 0..n {
            for c in 0..n {
                mass[(r, c)] += w * jac * phi[r] * phi[c];
                stiffness[(r, c)] += w * jac * (dphi[r][0] * dphi[c][0] + dphi[r][1] * dphi[c][1]);
            }
        }
    }
    let (t, wt) = segment_rule(2 * degree);
    let ref_vertices = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let face_mass: [DMatrix<f64>; 3] = std::array::from_fn(|e| {
        let a = ref_vertices[(e + 1) % 3];
        let b = ref_vertices[(e + 2) % 3];
        let len = tri.edge_length(e);
        let mut m = DMatrix::zeros(n, n);
        for (s, w) in t.iter().zip(&wt) {
            let xi = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let phi = basis.eval(xi);
            for r in 0..n {
                for c in 0..n {
                    m[(r, c)] += w * len * phi[r] * phi[c];
                }
            }
        }
        m
    });
    let boundary_mass = &face_mass[0] + &face_mass[1] + &face_mass[2];
    symmetrize(&mut mass);
    symmetrize(&mut stiffness);
    Ok(LocalMatrices {
        mass,
        stiffness,
        face_mass,
        boundary_mass,
    })
}

/// Assemble local matrices with the default rule (exact for degree `2l`).
pub fn assemble_local(tri: &Triangle, degree: usize) -> Result<LocalMatrices> {
    assemble_local_with(tri, degree, &QuadratureRule::collapsed(2 * degree))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

/// Mass matrix of the 1D Lagrange basis on `l + 1` equispaced nodes of a segment.
pub fn face_mass_1d(length: f64, degree: usize) -> DMatrix<f64> {
    let n = degree + 1;
    let nodes: Vec<f64> = (0..n).map(|k| k as f64 / degree as f64).collect();
    let lagrange = |k: usize, t: f64| -> f64 {
        nodes
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != k)
            .map(|(_, &tm)| (t - tm) / (nodes[k] - tm))
            .product()
    };
    let (t, w) = segment_rule(2 * degree);
    DMatrix::from_fn(n, n, |r, c| {
        t.iter()
            .zip(&w)
            .map(|(&s, &ws)| ws * length * lagrange(r, s) * lagrange(c, s))
            .sum()
    })
}

/// `int_K u psi_z^K` for local node `z` of `tri`.
pub fn dual_eval(u: &TargetFunction, tri: &Triangle, degree: usize, node: usize) -> Result<f64> {
    let sampled = SampledTriangle::new(u, tri, degree)?;
    Ok(dual_values(&sampled)[node])
}

/// `int_K u psi_z^K` for all local nodes of a sampled triangle.
pub fn dual_values(sampled: &SampledTriangle) -> Vec<f64> {
    let dual = DualBasis::new(&sampled.basis, &sampled.tri);
    let moments = sampled.moments();
    (&dual.coeffs * moments).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> Triangle {
        Triangle::new([0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
    }

    #[test]
    fn nodal_property_and_partition_of_unity() {
        for degree in 1..=3 {
            let basis = ReferenceBasis::get(degree).unwrap();
            for (k, node) in basis.nodes.iter().enumerate() {
                let v = basis.eval(node.coords(degree));
                for (j, x) in v.iter().enumerate() {
                    let expect = if j == k { 1.0 } else { 0.0 };
                    assert!((x - expect).abs() < 1e-12);
                }
            }
            for xi in [[0.1, 0.2], [0.7, 0.05], [0.3, 0.3]] {
                let s: f64 = basis.eval(xi).iter().sum();
                assert!((s - 1.0).abs() < 1e-13);
                let g = basis
                    .grad(xi)
                    .iter()
                    .fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
                assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_counts_and_kinds() {
        let b3 = ReferenceBasis::get(3).unwrap();
        assert_eq!(b3.len(), 10);
        assert_eq!(
            b3.nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Interior)
                .count(),
            1
        );
        assert_eq!(
            b3.nodes
                .iter()
                .filter(|n| n.kind == NodeKind::Vertex)
                .count(),
            3
        );
        assert_eq!(b3.edge_nodes(0).len(), 4);
        assert!(ReferenceBasis::get(4).is_err());
        assert!(ReferenceBasis::get(0).is_err());
    }

    #[test]
    fn p1_mass_on_reference() {
        let m = assemble_local(&reference(), 1).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c { 1.0 / 12.0 } else { 1.0 / 24.0 };
                assert!((m.mass[(r, c)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn row_sums_and_constant_kernel() {
        let tri = Triangle::new([0.2, 0.1], [1.3, -0.4], [0.9, 1.1]);
        for degree in 1..=3 {
            let m = assemble_local(&tri, degree).unwrap();
            let total: f64 = m.mass.iter().sum();
            assert!((total - tri.area()).abs() < 1e-13);
            let ones = nalgebra::DVector::from_element(m.stiffness.nrows(), 1.0);
            assert!((&m.stiffness * &ones).amax() < 1e-12);
            assert!(m.mass.clone().cholesky().is_some());
            // boundary mass total = perimeter
            let bt: f64 = m.boundary_mass.iter().sum();
            assert!((bt - tri.perimeter()).abs() < 1e-13);
        }
    }

    #[test]
    fn two_rules_agree() {
        let tri = Triangle::new([0.0, 0.0], [2.0, 0.5], [0.4, 1.5]);
        for degree in 1..=2 {
            let a =
                assemble_local_with(&tri, degree, &QuadratureRule::symmetric_degree5()).unwrap();
            let b = assemble_local_with(&tri, degree, &QuadratureRule::collapsed(8)).unwrap();
            assert!((&a.mass - &b.mass).amax() < 1e-13);
            assert!((&a.stiffness - &b.stiffness).amax() < 1e-13);
        }
        let a = assemble_local_with(&tri, 1, &QuadratureRule::symmetric_degree2()).unwrap();
        let b = assemble_local(&tri, 1).unwrap();
        assert!((&a.mass - &b.mass).amax() < 1e-14);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let tri = Triangle {
            v: [[0.0, 0.0], [1.0, 0.0], [2.0, 1e-16]],
        };
        assert!(matches!(assemble_local(&tri, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn dual_basis_biorthogonal_and_scaling() {
        let tri = Triangle::new([0.3, 0.2], [2.1, 0.4], [0.8, 1.7]);
        for degree in 1..=3 {
            let basis = ReferenceBasis::get(degree).unwrap();
            let m = assemble_local(&tri, degree).unwrap();
            let dual = DualBasis::new(&basis, &tri);
            let prod = &dual.coeffs * &m.mass;
            let id = DMatrix::<f64>::identity(basis.len(), basis.len());
            assert!((prod - id).amax() < 1e-12);
            // ||phi_z||_K = (|K|/|K^|)^{1/2} ||phi^||, ||psi_z||_K = (|K^|/|K|)^{1/2} ||psi^||
            let ref_dual = DualBasis::new(&basis, &reference());
            let ratio = tri.area() / 0.5;
            for z in 0..basis.len() {
                let phi_norm = m.mass[(z, z)].sqrt();
                let phi_ref = basis.reference_mass()[(z, z)].sqrt();
                assert!((phi_norm - ratio.sqrt() * phi_ref).abs() < 1e-12 * phi_norm);
                let row = dual.coeffs.row(z).transpose();
                let psi_norm = (row.transpose() * &m.mass * &row)[(0, 0)].sqrt();
                let rrow = ref_dual.coeffs.row(z).transpose();
                let psi_ref = (rrow.transpose() * basis.reference_mass() * &rrow)[(0, 0)].sqrt();
                assert!((psi_norm - psi_ref / ratio.sqrt()).abs() < 1e-12 * psi_norm);
            }
        }
    }

    #[test]
    fn edge_nodes_are_ordered_along_edge() {
        let basis = ReferenceBasis::get(3).unwrap();
        let tri = reference();
        let nodes = basis.physical_nodes(&tri);
        for e in 0..3 {
            let (a, b) = tri.edge(e);
            let idx = basis.edge_nodes(e);
            let first = nodes[idx[0]];
            let last = nodes[*idx.last().unwrap()];
            assert!(crate::geometry::dist(first, a) < 1e-14);
            assert!(crate::geometry::dist(last, b) < 1e-14);
        }
    }

    #[test]
    fn face_mass_matches_trace_of_local() {
        let tri = Triangle::new([0.0, 0.0], [1.5, 0.2], [0.3, 1.1]);
        for degree in 1..=3 {
            let basis = ReferenceBasis::get(degree).unwrap();
            let m = assemble_local(&tri, degree).unwrap();
            for e in 0..3 {
                let idx = basis.edge_nodes(e);
                let m1 = face_mass_1d(tri.edge_length(e), degree);
                for (r, &i) in idx.iter().enumerate() {
                    for (c, &j) in idx.iter().enumerate() {
                        assert!((m1[(r, c)] - m.face_mass[e][(i, j)]).abs() < 1e-13);
                    }
                }
            }
        }
    }
}
