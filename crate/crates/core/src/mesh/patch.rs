use serde::Serialize;

use super::{bisection_children, ElementId, FaceId, Mesh};
use crate::error::{Error, Result};
use crate::geometry::{on_segment, point_key, Point, Triangle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PatchKind {
    SingleElement,
    Pair,
    MinimalPair,
}

/// A union of at most two (possibly virtual) triangles glued along one face.
///
/// Virtual triangles are bisection children of their host element that are
/// not part of the mesh; they never modify it.
#[derive(Clone, Debug)]
pub struct Patch {
    pub kind: PatchKind,
    pub face: Option<FaceId>,
    pub triangles: Vec<Triangle>,
    pub hosts: Vec<ElementId>,
    pub is_virtual: Vec<bool>,
    /// `(triangle index, local edge)` on both sides of the shared face.
    pub shared_face: Option<[(usize, usize); 2]>,
    /// `(triangle index, local edge)` of edges contained in the domain boundary.
    pub boundary_edges: Vec<(usize, usize)>,
    /// Mesh boundary vertices that are vertices of the patch.
    pub boundary_points: Vec<Point>,
}

impl Patch {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area()).sum()
    }

    pub fn has_boundary_face(&self) -> bool {
        !self.boundary_edges.is_empty()
    }

    /// Whether `p` lies on the domain boundary as seen from this patch
    /// (`tol` relative to the patch and edge sizes).
    pub fn on_domain_boundary(&self, p: Point, tol: f64) -> bool {
        let abs = tol * self.diameter();
        if self
            .boundary_points
            .iter()
            .any(|&q| crate::geometry::dist(p, q) <= abs)
        {
            return true;
        }
        self.boundary_edges.iter().any(|&(t, e)| {
            let (a, b) = self.triangles[t].edge(e);
            on_segment(p, a, b, tol)
        })
    }

    /// Diameter of the patch.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self.triangles.iter().flat_map(|t| t.v).collect();
        let mut d: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                d = d.max(crate::geometry::dist(*a, *b));
            }
        }
        d
    }
}

fn build(
    mesh: &Mesh,
    kind: PatchKind,
    face: Option<FaceId>,
    parts: Vec<(ElementId, Triangle, bool, Option<usize>)>,
) -> Patch {
    let mut boundary_edges = Vec::new();
    let mut boundary_points: Vec<Point> = Vec::new();
    for (ti, (host, tri, _, _)) in parts.iter().enumerate() {
        let faces = mesh.element_faces(*host).expect("host is a leaf");
        let host_boundary: Vec<(Point, Point)> = faces
            .iter()
            .filter(|f| mesh.faces[f.0].is_boundary())
            .map(|&f| mesh.face_segment(f))
            .collect();
        for e in 0..3 {
            let (a, b) = tri.edge(e);
            if host_boundary
                .iter()
                .any(|&(s0, s1)| on_segment(a, s0, s1, 1e-12) && on_segment(b, s0, s1, 1e-12))
            {
                boundary_edges.push((ti, e));
            }
        }
        let el = &mesh.elements[host.0];
        for &v in &el.vertices {
            if mesh.is_boundary_vertex(v) {
                let p = mesh.vertex(v);
                let key = point_key(p);
                if tri.v.iter().any(|&q| point_key(q) == key)
                    && !boundary_points.iter().any(|&q| point_key(q) == key)
                {
                    boundary_points.push(p);
                }
            }
        }
    }
    let shared_face = if parts.len() == 2 {
        Some([(0, parts[0].3.unwrap()), (1, parts[1].3.unwrap())])
    } else {
        None
    };
    Patch {
        kind,
        face,
        triangles: parts.iter().map(|p| p.1).collect(),
        hosts: parts.iter().map(|p| p.0).collect(),
        is_virtual: parts.iter().map(|p| p.2).collect(),
        shared_face,
        boundary_edges,
        boundary_points,
    }
}

pub(super) fn pair(mesh: &Mesh, face: FaceId) -> Result<Patch> {
    let f = mesh.face(face)?;
    let parts = f
        .elements
        .iter()
        .map(|&(k, e)| (k, mesh.triangle(k), false, Some(e)))
        .collect();
    let kind = if f.is_boundary() {
        PatchKind::SingleElement
    } else {
        PatchKind::Pair
    };
    Ok(build(mesh, kind, Some(face), parts))
}

/// Part of the minimal pair of local edge `e` inside element `k`: the element
/// itself when `e` is its refinement edge, otherwise the bisection child
/// adjacent to `e` (whose refinement edge is `e`). Returns the triangle,
/// whether it is virtual, and the local index of `e` in it.
pub(crate) fn minimal_part(mesh: &Mesh, k: ElementId, e: usize) -> (Triangle, bool, usize) {
    let el = &mesh.elements[k.0];
    let tri = mesh.triangle(k);
    let r = el.refinement_edge;
    if r == e {
        return (tri, false, e);
    }
    let children = bisection_children(tri.v, r);
    if e == (r + 2) % 3 {
        let (t, re) = children[0];
        (t, true, re)
    } else {
        let (t, re) = children[1];
        (t, true, re)
    }
}

pub(super) fn minimal_pair(mesh: &Mesh, face: FaceId) -> Result<Patch> {
    let f = mesh.face(face)?;
    let parts = f
        .elements
        .iter()
        .map(|&(k, e)| {
            let (t, virt, le) = minimal_part(mesh, k, e);
            (k, t, virt, Some(le))
        })
        .collect();
    Ok(build(mesh, PatchKind::MinimalPair, Some(face), parts))
}

pub(super) fn single(mesh: &Mesh, id: ElementId) -> Result<Patch> {
    if !mesh.element(id)?.is_leaf() {
        return Err(Error::NotALeaf(id.0));
    }
    Ok(build(
        mesh,
        PatchKind::SingleElement,
        None,
        vec![(id, mesh.triangle(id), false, None)],
    ))
}
