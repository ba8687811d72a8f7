use std::collections::HashMap;

use serde::Serialize;

use super::{ElementId, Mesh};

/// Quality parameters of a mesh.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeshStats {
    /// Largest ratio `|K|^{1/2} / |K'|^{1/2}` over touching elements.
    pub mu: f64,
    /// Largest ratio `h_{K'} / rho_K` over touching elements (including `K' = K`).
    pub sigma: f64,
    /// Largest number of elements sharing a vertex.
    pub nbar: usize,
    pub face_connected: bool,
    pub num_elements: usize,
    pub num_vertices: usize,
}

pub(super) fn compute(mesh: &Mesh) -> MeshStats {
    let mut by_vertex: HashMap<usize, Vec<ElementId>> = HashMap::new();
    for &k in mesh.leaves() {
        for &v in &mesh.elements[k.0].vertices {
            by_vertex.entry(v).or_default().push(k);
        }
    }
    let mut mu: f64 = 1.0;
    let mut sigma: f64 = 0.0;
    for &k in mesh.leaves() {
        let tk = mesh.triangle(k);
        let rho = tk.inball_diameter();
        for &v in &mesh.elements[k.0].vertices {
            for &o in &by_vertex[&v] {
                let to = mesh.triangle(o);
                mu = mu.max((tk.area() / to.area()).sqrt());
                sigma = sigma.max(to.diameter() / rho);
            }
        }
    }
    let nbar = by_vertex.values().map(|v| v.len()).max().unwrap_or(0);
    let face_connected = by_vertex
        .iter()
        .all(|(&z, els)| vertex_star_connected(mesh, z, els));
    MeshStats {
        mu,
        sigma,
        nbar,
        face_connected,
        num_elements: mesh.num_elements(),
        num_vertices: by_vertex.len(),
    }
}

/// Elements around `z` form one component when linked through interior
/// faces containing `z`.
fn vertex_star_connected(mesh: &Mesh, z: usize, els: &[ElementId]) -> bool {
    if els.len() <= 1 {
        return true;
    }
    let mut seen = vec![false; els.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        let faces = mesh.element_faces(els[i]).expect("leaf");
        for f in faces {
            let face = &mesh.faces[f.0];
            if face.is_boundary() || !face.vertices.contains(&z) {
                continue;
            }
            for &(o, _) in &face.elements {
                if let Some(j) = els.iter().position(|&x| x == o) {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}
