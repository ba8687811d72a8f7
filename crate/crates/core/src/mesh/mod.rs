//! Conforming triangular meshes under newest-vertex bisection.
//!
//! A [`Mesh`] keeps every element ever created in an arena, so the arena is
//! the materialised part of the master tree and the current mesh is its leaf
//! set. Element ids are arena indices and are stable under refinement.
//! Mutating operations return a new mesh.

mod io;
mod patch;
mod stats;

pub use io::{parse_mesh, write_mesh};
pub use patch::{Patch, PatchKind};
pub use stats::MeshStats;

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{midpoint, orient, point_key, Point, Triangle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ElementId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FaceId(pub usize);

impl std::fmt::Display for ElementId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for FaceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A node of the master tree.
#[derive(Clone, Debug)]
pub struct Element {
    /// Counter-clockwise vertex ids.
    pub vertices: [usize; 3],
    /// Local index of the refinement edge; edge `r` is opposite vertex `r`.
    pub refinement_edge: usize,
    pub parent: Option<ElementId>,
    pub children: Option<[ElementId; 2]>,
    pub depth: u32,
    pub root: usize,
}

impl Element {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Sorted vertex pair of local edge `e`.
    pub fn edge_key(&self, e: usize) -> (usize, usize) {
        sorted_pair(self.vertices[(e + 1) % 3], self.vertices[(e + 2) % 3])
    }

    pub fn refinement_edge_key(&self) -> (usize, usize) {
        self.edge_key(self.refinement_edge)
    }
}

#[inline]
fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// An edge of the current leaf mesh.
#[derive(Clone, Debug)]
pub struct Face {
    /// Sorted vertex ids.
    pub vertices: [usize; 2],
    /// Incident leaves with the local edge index of the face in each; the
    /// first entry has the lower element id.
    pub elements: Vec<(ElementId, usize)>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.elements.len() == 1
    }
}

/// Geometry of the two bisection children of a triangle with vertices
/// `v` and refinement edge `r`: the peak `v[r]` is joined to the midpoint
/// of the refinement edge, and each child's refinement edge is the one
/// opposite the new vertex.
pub fn bisection_children(v: [Point; 3], r: usize) -> [(Triangle, usize); 2] {
    let p = v[r];
    let e1 = v[(r + 1) % 3];
    let e2 = v[(r + 2) % 3];
    let m = midpoint(e1, e2);
    [
        (Triangle { v: [p, e1, m] }, 2),
        (Triangle { v: [p, m, e2] }, 1),
    ]
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<Element>,
    num_roots: usize,
    leaves: Vec<ElementId>,
    faces: Vec<Face>,
    element_faces: Vec<Option<[FaceId; 3]>>,
    boundary_vertex: Vec<bool>,
    midpoints: HashMap<(usize, usize), usize>,
    log: Vec<ElementId>,
    scale: f64,
}

impl Mesh {
    /// Build a root mesh from vertices and `(vertex ids, refinement edge)` triples.
    ///
    /// Clockwise triangles are reoriented. The mesh must be conforming.
    pub fn from_roots(vertices: Vec<Point>, triangles: &[([usize; 3], usize)]) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no elements".into()));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &vertices {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
            }
            lo = [lo[0].min(p[0]), lo[1].min(p[1])];
            hi = [hi[0].max(p[0]), hi[1].max(p[1])];
        }
        let scale = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        let mut elements = Vec::with_capacity(triangles.len());
        for (idx, &(mut vs, mut r)) in triangles.iter().enumerate() {
            if vs.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {idx} references a missing vertex"
                )));
            }
            if r > 2 {
                return Err(Error::InvalidMesh(format!(
                    "element {idx} has refinement edge {r}"
                )));
            }
            let o = orient(vertices[vs[0]], vertices[vs[1]], vertices[vs[2]]);
            if o.abs() <= 1e-12 * scale * scale {
                return Err(Error::InvalidMesh(format!("element {idx} is degenerate")));
            }
            if o < 0.0 {
                // swapping vertices 1 and 2 keeps edge r opposite the same vertex
                vs.swap(1, 2);
                r = match r {
                    1 => 2,
                    2 => 1,
                    x => x,
                };
            }
            elements.push(Element {
                vertices: vs,
                refinement_edge: r,
                parent: None,
                children: None,
                depth: 0,
                root: idx,
            });
        }
        let num_roots = elements.len();
        let mut mesh = Mesh {
            vertices,
            elements,
            num_roots,
            leaves: Vec::new(),
            faces: Vec::new(),
            element_faces: Vec::new(),
            boundary_vertex: Vec::new(),
            midpoints: HashMap::new(),
            log: Vec::new(),
            scale,
        };
        mesh.rebuild_topology()?;
        mesh.check_no_hanging_vertices()?;
        Ok(mesh)
    }

    /// Two triangles on `[x0, x1] x [y0, y1]` split by the diagonal from
    /// `(x0, y0)` to `(x1, y1)`, which is the refinement edge of both.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        Mesh::rectangle_grid(x0, x1, y0, y1, 1, 1)
    }

    /// `nx * ny` rectangles, each split along its lower-left to upper-right
    /// diagonal, with the diagonals as refinement edges.
    pub fn rectangle_grid(
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self> {
        Mesh::rectangle_grid_with_lines(
            &(0..=nx)
                .map(|i| x0 + (x1 - x0) * i as f64 / nx as f64)
                .collect::<Vec<_>>(),
            &(0..=ny)
                .map(|j| y0 + (y1 - y0) * j as f64 / ny as f64)
                .collect::<Vec<_>>(),
        )
    }

    /// Tensor grid with explicit coordinate lines.
    pub fn rectangle_grid_with_lines(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 {
            return Err(Error::InvalidMesh(
                "grid needs at least two lines per direction".into(),
            ));
        }
        let nx = xs.len() - 1;
        let mut vertices = Vec::new();
        for &y in ys {
            for &x in xs {
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut tris = Vec::new();
        for j in 0..ys.len() - 1 {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                // the diagonal a-c is opposite b in the first and d in the second
                tris.push(([a, b, c], 1));
                tris.push(([a, c, d], 2));
            }
        }
        Mesh::from_roots(vertices, &tris)
    }

    fn rebuild_topology(&mut self) -> Result<()> {
        self.leaves = (0..self.elements.len())
            .filter(|&i| self.elements[i].is_leaf())
            .map(ElementId)
            .collect();
        let mut edges: BTreeMap<(usize, usize), Vec<(ElementId, usize)>> = BTreeMap::new();
        for &k in &self.leaves {
            let el = &self.elements[k.0];
            for e in 0..3 {
                edges.entry(el.edge_key(e)).or_default().push((k, e));
            }
        }
        self.faces.clear();
        self.element_faces = vec![None; self.elements.len()];
        let mut slots: HashMap<ElementId, [usize; 3]> = HashMap::new();
        for ((a, b), mut inc) in edges {
            if inc.len() > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) shared by {} elements",
                    inc.len()
                )));
            }
            inc.sort();
            let fid = self.faces.len();
            for &(k, e) in &inc {
                slots.entry(k).or_insert([usize::MAX; 3])[e] = fid;
            }
            self.faces.push(Face {
                vertices: [a, b],
                elements: inc,
            });
        }
        for (k, s) in slots {
            self.element_faces[k.0] = Some([FaceId(s[0]), FaceId(s[1]), FaceId(s[2])]);
        }
        self.boundary_vertex = vec![false; self.vertices.len()];
        for f in &self.faces {
            if f.is_boundary() {
                self.boundary_vertex[f.vertices[0]] = true;
                self.boundary_vertex[f.vertices[1]] = true;
            }
        }
        Ok(())
    }

    fn check_no_hanging_vertices(&self) -> Result<()> {
        // root meshes: geometric test; refined meshes: midpoint bookkeeping
        let mut used = vec![false; self.vertices.len()];
        for &k in &self.leaves {
            for &v in &self.elements[k.0].vertices {
                used[v] = true;
            }
        }
        for f in &self.faces {
            if let Some(&m) = self.midpoints.get(&(f.vertices[0], f.vertices[1])) {
                if used[m] {
                    return Err(Error::InvalidMesh(format!(
                        "hanging vertex {m} on face {:?}",
                        f.vertices
                    )));
                }
            }
        }
        if self.midpoints.is_empty() {
            let tol = 1e-12;
            for f in &self.faces {
                let a = self.vertices[f.vertices[0]];
                let b = self.vertices[f.vertices[1]];
                for (v, p) in self.vertices.iter().enumerate() {
                    if !used[v] || v == f.vertices[0] || v == f.vertices[1] {
                        continue;
                    }
                    if crate::geometry::on_segment(*p, a, b, tol)
                        && crate::geometry::dist(*p, a) > tol * self.scale
                        && crate::geometry::dist(*p, b) > tol * self.scale
                    {
                        return Err(Error::InvalidMesh(format!(
                            "hanging vertex {v} on face {:?}",
                            f.vertices
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    /// Diameter of the root mesh bounding box.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_roots(&self) -> usize {
        self.num_roots
    }

    pub fn roots(&self) -> impl Iterator<Item = ElementId> {
        (0..self.num_roots).map(ElementId)
    }

    /// All master-tree nodes created so far.
    pub fn nodes(&self) -> &[Element] {
        &self.elements
    }

    /// Current leaves in ascending id order.
    pub fn leaves(&self) -> &[ElementId] {
        &self.leaves
    }

    pub fn num_elements(&self) -> usize {
        self.leaves.len()
    }

    pub fn element(&self, id: ElementId) -> Result<&Element> {
        self.elements.get(id.0).ok_or(Error::UnknownElement(id.0))
    }

    pub fn is_leaf(&self, id: ElementId) -> bool {
        self.elements.get(id.0).is_some_and(|e| e.is_leaf())
    }

    pub fn triangle(&self, id: ElementId) -> Triangle {
        let vs = self.elements[id.0].vertices;
        Triangle {
            v: [
                self.vertices[vs[0]],
                self.vertices[vs[1]],
                self.vertices[vs[2]],
            ],
        }
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, id: FaceId) -> Result<&Face> {
        self.faces.get(id.0).ok_or(Error::UnknownFace(id.0))
    }

    pub fn face_segment(&self, id: FaceId) -> (Point, Point) {
        let f = &self.faces[id.0];
        (self.vertices[f.vertices[0]], self.vertices[f.vertices[1]])
    }

    pub fn face_length(&self, id: FaceId) -> f64 {
        let (a, b) = self.face_segment(id);
        crate::geometry::dist(a, b)
    }

    /// Faces of leaf `id`; entry `e` is the face opposite local vertex `e`.
    pub fn element_faces(&self, id: ElementId) -> Result<[FaceId; 3]> {
        self.element_faces
            .get(id.0)
            .copied()
            .flatten()
            .ok_or(Error::NotALeaf(id.0))
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = FaceId> + '_ {
        self.faces
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_boundary())
            .map(|(i, _)| FaceId(i))
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Requested bisections in order; replaying them on the root mesh
    /// reproduces this mesh including element ids.
    pub fn bisection_log(&self) -> &[ElementId] {
        &self.log
    }

    /// The root mesh this mesh was refined from.
    pub fn root_mesh(&self) -> Mesh {
        let vertices = self.vertices[..self.root_vertex_count()].to_vec();
        let tris: Vec<_> = self.elements[..self.num_roots]
            .iter()
            .map(|e| (e.vertices, e.refinement_edge))
            .collect();
        Mesh::from_roots(vertices, &tris).expect("root mesh was valid")
    }

    fn root_vertex_count(&self) -> usize {
        // every vertex added by refinement is an edge midpoint
        self.vertices.len() - self.midpoints.len()
    }

    /// Bit-exact key of a master-tree node: its sorted vertex coordinates.
    pub fn geometry_key(&self, id: ElementId) -> [(u64, u64); 3] {
        self.triangle(id).key()
    }

    /// Order-independent key of the leaf set.
    pub fn leaf_set_key(&self) -> Vec<[(u64, u64); 3]> {
        let mut keys: Vec<_> = self.leaves.iter().map(|&k| self.geometry_key(k)).collect();
        keys.sort_unstable();
        keys
    }

    /// Stable hex digest of the leaf geometry and refinement tags.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let mut keys: Vec<_> = self
            .leaves
            .iter()
            .map(|&k| {
                let el = &self.elements[k.0];
                let t = self.triangle(k);
                let (a, b) = t.edge(el.refinement_edge);
                let mut r = [point_key(a), point_key(b)];
                r.sort_unstable();
                (t.key(), r)
            })
            .collect();
        keys.sort_unstable();
        for (k, r) in keys {
            for (x, y) in k.iter().chain(r.iter()) {
                h.update(x.to_le_bytes());
                h.update(y.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Bisect a leaf together with the conforming closure.
    pub fn bisect_conforming(&self, id: ElementId) -> Result<Mesh> {
        let mut out = self.clone();
        out.bisect_in_place(id)?;
        Ok(out)
    }

    /// In-place variant of [`Mesh::bisect_conforming`]; returns the ids of
    /// all master-tree nodes created, in creation order.
    pub fn bisect_in_place(&mut self, id: ElementId) -> Result<Vec<ElementId>> {
        let el = self.element(id)?;
        if !el.is_leaf() {
            return Err(Error::NotALeaf(id.0));
        }
        let before = self.elements.len();
        let mut refiner = Refiner::new(self);
        refiner.refine(id)?;
        self.log.push(id);
        self.rebuild_topology()?;
        Ok((before..self.elements.len()).map(ElementId).collect())
    }

    /// Bisect every element `rounds` times (with closure).
    pub fn uniform_refine(&self, rounds: usize) -> Result<Mesh> {
        let mut out = self.clone();
        for _ in 0..rounds {
            let current = out.leaves.clone();
            for k in current {
                if out.is_leaf(k) {
                    out.bisect_in_place(k)?;
                }
            }
        }
        Ok(out)
    }

    /// Replay a bisection log on this mesh.
    pub fn replay(&self, log: &[ElementId]) -> Result<Mesh> {
        let mut out = self.clone();
        for &k in log {
            out.bisect_in_place(k)?;
        }
        Ok(out)
    }

    /// Detect root tag assignments whose closure fails to terminate: two
    /// rounds of uniform refinement must succeed and double the element count.
    pub fn validate_matching(&self) -> Result<()> {
        let once = self.uniform_refine(1)?;
        let twice = once.uniform_refine(1)?;
        if once.num_elements() != 2 * self.num_elements()
            || twice.num_elements() != 2 * once.num_elements()
        {
            return Err(Error::InvalidMesh(format!(
                "uniform refinement grew {} -> {} -> {} elements",
                self.num_elements(),
                once.num_elements(),
                twice.num_elements()
            )));
        }
        Ok(())
    }

    /// Structural audit: conformity, orientation, genealogy and the
    /// child refinement-edge rule.
    pub fn check_invariants(&self) -> Result<()> {
        for f in &self.faces {
            if f.elements.is_empty() || f.elements.len() > 2 {
                return Err(Error::InvalidMesh(format!(
                    "face {:?} has {} elements",
                    f.vertices,
                    f.elements.len()
                )));
            }
        }
        self.check_no_hanging_vertices()?;
        for (i, el) in self.elements.iter().enumerate() {
            let t = self.triangle(ElementId(i));
            if t.area() <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "element {i} has non-positive area"
                )));
            }
            if el.refinement_edge > 2 {
                return Err(Error::InvalidMesh(format!(
                    "element {i} has invalid refinement edge"
                )));
            }
            if let Some([c1, c2]) = el.children {
                let expect = bisection_children(t.v, el.refinement_edge);
                for (c, (tri, r)) in [c1, c2].into_iter().zip(expect) {
                    let child = &self.elements[c.0];
                    let ct = self.triangle(c);
                    if ct.key() != tri.key() {
                        return Err(Error::InvalidMesh(format!(
                            "child {c} of {i} has wrong geometry"
                        )));
                    }
                    if (ct.area() - 0.5 * t.area()).abs() > 1e-14 * t.area() {
                        return Err(Error::InvalidMesh(format!(
                            "child {c} of {i} does not halve the area"
                        )));
                    }
                    let (a, b) = tri.edge(r);
                    let (ca, cb) = ct.edge(child.refinement_edge);
                    let same = (point_key(a) == point_key(ca) && point_key(b) == point_key(cb))
                        || (point_key(a) == point_key(cb) && point_key(b) == point_key(ca));
                    if !same {
                        return Err(Error::InvalidMesh(format!(
                            "child {c} violates the refinement-edge rule"
                        )));
                    }
                    if child.parent != Some(ElementId(i)) || child.depth != el.depth + 1 {
                        return Err(Error::InvalidMesh(format!(
                            "child {c} has inconsistent genealogy"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> MeshStats {
        stats::compute(self)
    }

    pub fn pair(&self, face: FaceId) -> Result<Patch> {
        patch::pair(self, face)
    }

    pub fn minimal_pair(&self, face: FaceId) -> Result<Patch> {
        patch::minimal_pair(self, face)
    }

    pub fn single_element(&self, id: ElementId) -> Result<Patch> {
        patch::single(self, id)
    }

    /// The leaf containing `p`, if any (lowest id on ties).
    pub fn locate(&self, p: Point) -> Option<ElementId> {
        self.leaves
            .iter()
            .copied()
            .find(|&k| self.triangle(k).contains(p, 1e-12))
    }

    /// Total area of the current leaves.
    pub fn area(&self) -> f64 {
        self.leaves.iter().map(|&k| self.triangle(k).area()).sum()
    }
}

struct Refiner<'a> {
    mesh: &'a mut Mesh,
    edge_map: HashMap<(usize, usize), Vec<ElementId>>,
    cascades: usize,
    limit: usize,
}

impl<'a> Refiner<'a> {
    fn new(mesh: &'a mut Mesh) -> Self {
        let mut edge_map: HashMap<(usize, usize), Vec<ElementId>> = HashMap::new();
        for &k in &mesh.leaves {
            let el = &mesh.elements[k.0];
            for e in 0..3 {
                edge_map.entry(el.edge_key(e)).or_default().push(k);
            }
        }
        let limit = 64 * mesh.num_roots;
        Refiner {
            mesh,
            edge_map,
            cascades: 0,
            limit,
        }
    }

    fn neighbour(&self, k: ElementId, edge: (usize, usize)) -> Option<ElementId> {
        self.edge_map
            .get(&edge)
            .and_then(|v| v.iter().copied().find(|&o| o != k))
    }

    fn refine(&mut self, k: ElementId) -> Result<()> {
        loop {
            if !self.mesh.elements[k.0].is_leaf() {
                return Ok(());
            }
            let edge = self.mesh.elements[k.0].refinement_edge_key();
            match self.neighbour(k, edge) {
                None => {
                    self.bisect(k);
                    return Ok(());
                }
                Some(n) if self.mesh.elements[n.0].refinement_edge_key() == edge => {
                    self.bisect(k);
                    self.bisect(n);
                    return Ok(());
                }
                Some(n) => {
                    self.cascades += 1;
                    if self.cascades > self.limit {
                        return Err(Error::ClosureDiverged(self.cascades));
                    }
                    self.refine(n)?;
                }
            }
        }
    }

    fn bisect(&mut self, k: ElementId) {
        let el = self.mesh.elements[k.0].clone();
        let r = el.refinement_edge;
        let p = el.vertices[r];
        let e1 = el.vertices[(r + 1) % 3];
        let e2 = el.vertices[(r + 2) % 3];
        let key = sorted_pair(e1, e2);
        let m = match self.mesh.midpoints.get(&key) {
            Some(&m) => m,
            None => {
                let m = self.mesh.vertices.len();
                self.mesh
                    .vertices
                    .push(midpoint(self.mesh.vertices[e1], self.mesh.vertices[e2]));
                self.mesh.midpoints.insert(key, m);
                m
            }
        };
        let c1 = ElementId(self.mesh.elements.len());
        let c2 = ElementId(c1.0 + 1);
        for (vs, re) in [([p, e1, m], 2), ([p, m, e2], 1)] {
            self.mesh.elements.push(Element {
                vertices: vs,
                refinement_edge: re,
                parent: Some(k),
                children: None,
                depth: el.depth + 1,
                root: el.root,
            });
        }
        self.mesh.elements[k.0].children = Some([c1, c2]);
        for e in 0..3 {
            if let Some(v) = self.edge_map.get_mut(&el.edge_key(e)) {
                v.retain(|&o| o != k);
            }
        }
        for c in [c1, c2] {
            let cel = &self.mesh.elements[c.0];
            for e in 0..3 {
                self.edge_map.entry(cel.edge_key(e)).or_default().push(c);
            }
        }
    }
}
