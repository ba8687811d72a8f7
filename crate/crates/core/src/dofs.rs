//! Global numbering of the continuous Lagrange space on a mesh.

use std::collections::HashMap;

use crate::element::{NodeKind, ReferenceBasis};
use crate::error::Result;
use crate::geometry::Point;
use crate::mesh::{ElementId, Mesh};

/// Combinatorial identity of a Lagrange node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKey {
    Vertex(usize),
    /// edge `(a, b)`, `a < b`, with barycentric weight `k` of `a`
    Edge(usize, usize, usize),
    Interior(ElementId, usize),
}

/// Degrees of freedom of `S` (or of its zero-trace subspace).
#[derive(Clone, Debug)]
pub struct DofMap {
    pub degree: usize,
    pub dirichlet: bool,
    /// number of free degrees of freedom
    pub ndof: usize,
    /// per leaf (in `mesh.leaves()` order): global index of each local node,
    /// `None` for nodes removed by the boundary condition
    pub local_to_global: Vec<Vec<Option<usize>>>,
    pub points: Vec<Point>,
    pub keys: Vec<NodeKey>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, degree: usize, dirichlet: bool) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        let boundary_edges: std::collections::HashSet<(usize, usize)> = mesh
            .faces()
            .iter()
            .filter(|f| f.is_boundary())
            .map(|f| (f.vertices[0], f.vertices[1]))
            .collect();
        let mut index: HashMap<NodeKey, usize> = HashMap::new();
        let mut points = Vec::new();
        let mut keys = Vec::new();
        let mut local_to_global = Vec::with_capacity(mesh.num_elements());
        for &k in mesh.leaves() {
            let el = mesh.element(k)?;
            let tri = mesh.triangle(k);
            let mut local = Vec::with_capacity(basis.len());
            for (i, node) in basis.nodes.iter().enumerate() {
                let (key, on_boundary) = match node.kind {
                    NodeKind::Vertex => {
                        let v = el.vertices[node.bary.iter().position(|&b| b == degree).unwrap()];
                        (NodeKey::Vertex(v), mesh.is_boundary_vertex(v))
                    }
                    NodeKind::Edge => {
                        let e = node.bary.iter().position(|&b| b == 0).unwrap();
                        let (ia, ib) = ((e + 1) % 3, (e + 2) % 3);
                        let (va, vb) = (el.vertices[ia], el.vertices[ib]);
                        let (a, wa) = if va < vb {
                            (va, node.bary[ia])
                        } else {
                            (vb, node.bary[ib])
                        };
                        let b = va.max(vb);
                        (NodeKey::Edge(a, b, wa), boundary_edges.contains(&(a, b)))
                    }
                    NodeKind::Interior => (NodeKey::Interior(k, i), false),
                };
                if dirichlet && on_boundary {
                    local.push(None);
                    continue;
                }
                let next = index.len();
                let g = *index.entry(key).or_insert_with(|| {
                    points.push(tri.map(node.coords(degree)));
                    keys.push(key);
                    next
                });
                local.push(Some(g));
            }
            local_to_global.push(local);
        }
        Ok(DofMap {
            degree,
            dirichlet,
            ndof: points.len(),
            local_to_global,
            points,
            keys,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_dimension_formula() {
        let mesh = Mesh::rectangle_grid(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        // 9 vertices, 16 edges, 8 triangles
        for (degree, expect) in [(1, 9), (2, 9 + 16), (3, 9 + 32 + 8)] {
            let d = DofMap::new(&mesh, degree, false).unwrap();
            assert_eq!(d.ndof, expect);
        }
        // interior: 1 vertex, 8 interior edges
        for (degree, expect) in [(1, 1), (2, 1 + 8), (3, 1 + 16 + 8)] {
            let d = DofMap::new(&mesh, degree, true).unwrap();
            assert_eq!(d.ndof, expect);
        }
    }

    #[test]
    fn shared_nodes_have_equal_coordinates() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0)
            .unwrap()
            .uniform_refine(3)
            .unwrap();
        let d = DofMap::new(&mesh, 3, false).unwrap();
        let basis = ReferenceBasis::get(3).unwrap();
        for (pos, &k) in mesh.leaves().iter().enumerate() {
            let nodes = basis.physical_nodes(&mesh.triangle(k));
            for (i, g) in d.local_to_global[pos].iter().enumerate() {
                let p = d.points[g.unwrap()];
                assert!(crate::geometry::dist(p, nodes[i]) < 1e-14);
            }
        }
    }
}
