//! Best approximations in `|||v|||^2 = ||v||^2 + eps ||grad v||^2` on
//! elements, patches and the whole mesh, and the quasi-interpolation `I^eps`.
//!
//! Errors are integrated directly from the residual `u - P` at the sample
//! points rather than as `|||u|||^2 - c^T b`; the latter loses all digits
//! when the error is tiny compared to `u`. The Pythagoras identity is still
//! checked as a guard against assembly bugs.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dofs::DofMap;
use crate::element::{assemble_local, eval_polynomial, NodeKind, ReferenceBasis};
use crate::error::{Error, Result};
use crate::geometry::{dist, Point, Triangle};
use crate::mesh::{ElementId, FaceId, Mesh, Patch, PatchKind};
use crate::sampling::{SampleCache, SampledTriangle};
use crate::sparse::{pcg, CsrMatrix};
use crate::target::TargetFunction;

/// Relative residual of the global conjugate gradient solve.
pub const CG_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcMode {
    None,
    HomogeneousDirichlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RDContext {
    pub epsilon: f64,
    pub degree: usize,
    pub bc: BcMode,
}

impl RDContext {
    pub fn new(epsilon: f64, degree: usize) -> Result<Self> {
        Self::with_bc(epsilon, degree, BcMode::None)
    }

    pub fn with_bc(epsilon: f64, degree: usize, bc: BcMode) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        ReferenceBasis::get(degree)?;
        Ok(RDContext {
            epsilon,
            degree,
            bc,
        })
    }

    pub fn dirichlet(&self) -> bool {
        self.bc == BcMode::HomogeneousDirichlet
    }

    /// Patch space used by this context: the full restriction without
    /// boundary conditions, otherwise the zero-trace space on patches with
    /// a boundary face.
    pub fn local_space(&self) -> LocalSpace {
        if self.dirichlet() {
            LocalSpace::BoundaryFace
        } else {
            LocalSpace::Full
        }
    }
}

/// Which functions on a patch are admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalSpace {
    /// all continuous piecewise polynomials on the patch
    Full,
    /// zero trace on the domain boundary if the patch has a boundary face
    BoundaryFace,
    /// zero at every point of the patch on the domain boundary
    ZeroTrace,
}

/// Continuous piecewise-polynomial space on a patch: nodes on the shared
/// face are glued by coordinates, removed nodes carry `None`.
#[derive(Clone, Debug)]
pub struct PatchSpace {
    pub degree: usize,
    pub space: LocalSpace,
    pub local_to_patch: Vec<Vec<Option<usize>>>,
    pub points: Vec<Point>,
}

impl PatchSpace {
    pub fn new(patch: &Patch, degree: usize, space: LocalSpace) -> Result<Self> {
        let basis = ReferenceBasis::get(degree)?;
        let tol = 1e-12 * patch.diameter();
        let constrain = match space {
            LocalSpace::Full => false,
            LocalSpace::BoundaryFace => patch.has_boundary_face(),
            LocalSpace::ZeroTrace => true,
        };
        let mut points: Vec<Point> = Vec::new();
        let mut local_to_patch = Vec::with_capacity(patch.triangles.len());
        for tri in &patch.triangles {
            let mut local = Vec::with_capacity(basis.len());
            for p in basis.physical_nodes(tri) {
                if constrain && patch.on_domain_boundary(p, 1e-12) {
                    local.push(None);
                    continue;
                }
                let idx = match points.iter().position(|&q| dist(p, q) <= tol) {
                    Some(i) => i,
                    None => {
                        points.push(p);
                        points.len() - 1
                    }
                };
                local.push(Some(idx));
            }
            local_to_patch.push(local);
        }
        Ok(PatchSpace {
            degree,
            space,
            local_to_patch,
            points,
        })
    }

    pub fn ndof(&self) -> usize {
        self.points.len()
    }

    /// Local nodal coefficients on triangle `t` of a patch coefficient vector.
    pub fn local_coeffs(&self, t: usize, coeffs: &[f64]) -> Vec<f64> {
        self.local_to_patch[t]
            .iter()
            .map(|g| g.map_or(0.0, |g| coeffs[g]))
            .collect()
    }
}

/// Best approximation on one element.
#[derive(Clone, Debug)]
pub struct ElementBest {
    pub tri: Triangle,
    pub degree: usize,
    /// nodal coefficients in the local basis of `tri`
    pub coeffs: Vec<f64>,
    pub error_sq: f64,
}

impl ElementBest {
    pub fn error(&self) -> f64 {
        self.error_sq.sqrt()
    }

    pub fn eval(&self, x: Point) -> f64 {
        let basis = ReferenceBasis::get(self.degree).expect("valid degree");
        eval_polynomial(&basis, &self.tri, &self.coeffs, x)
    }
}

/// Function in a patch space.
#[derive(Clone, Debug)]
pub struct PatchFunction {
    pub patch: Patch,
    pub space: PatchSpace,
    pub coeffs: Vec<f64>,
}

impl PatchFunction {
    pub fn local_coeffs(&self, t: usize) -> Vec<f64> {
        self.space.local_coeffs(t, &self.coeffs)
    }

    /// Value at `x` (first containing triangle).
    pub fn eval(&self, x: Point) -> Option<f64> {
        let basis = ReferenceBasis::get(self.space.degree).ok()?;
        let t = self
            .patch
            .triangles
            .iter()
            .position(|t| t.contains(x, 1e-12))?;
        Some(eval_polynomial(
            &basis,
            &self.patch.triangles[t],
            &self.local_coeffs(t),
            x,
        ))
    }
}

#[derive(Clone, Debug)]
pub struct PatchBest {
    pub function: PatchFunction,
    pub error_sq: f64,
}

impl PatchBest {
    pub fn error(&self) -> f64 {
        self.error_sq.sqrt()
    }
}

/// Function in the global space `S` (or `S_0`).
#[derive(Clone, Debug)]
pub struct FEFunction {
    pub degree: usize,
    pub bc: BcMode,
    pub mesh_hash: String,
    pub dofs: Arc<DofMap>,
    pub coeffs: Vec<f64>,
}

impl FEFunction {
    /// Local nodal coefficients on the leaf at position `pos` of `mesh.leaves()`.
    pub fn local_coeffs(&self, pos: usize) -> Vec<f64> {
        self.dofs.local_to_global[pos]
            .iter()
            .map(|g| g.map_or(0.0, |g| self.coeffs[g]))
            .collect()
    }

    /// The function as a discrete target on `mesh`.
    pub fn to_target(&self, mesh: &Mesh, name: &str) -> Result<TargetFunction> {
        let coeffs = (0..mesh.num_elements())
            .map(|p| self.local_coeffs(p))
            .collect();
        TargetFunction::discrete(name, mesh.clone(), self.degree, coeffs)
    }
}

#[derive(Clone, Debug)]
pub struct GlobalBest {
    pub function: FEFunction,
    pub error_sq: f64,
    pub iterations: usize,
}

impl GlobalBest {
    pub fn error(&self) -> f64 {
        self.error_sq.sqrt()
    }
}

fn system(tri: &Triangle, degree: usize, epsilon: f64) -> Result<DMatrix<f64>> {
    let m = assemble_local(tri, degree)?;
    Ok(if epsilon == 0.0 {
        m.mass
    } else {
        m.mass + m.stiffness * epsilon
    })
}

fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Degenerate(format!("{what}: system not positive definite")))?;
    Ok(chol.solve(b))
}

/// `|||u|||^2 - c^T b` must agree with the residual up to roundoff.
fn check_pythagoras(norm_sq: f64, projected: f64, error_sq: f64) -> Result<()> {
    let gap = norm_sq - projected;
    let slack = 1e-9 * norm_sq.max(f64::MIN_POSITIVE) + 1e-12;
    if gap < -slack || (gap - error_sq).abs() > 1e-7 * norm_sq + 1e-12 {
        return Err(Error::NegativeError(gap));
    }
    Ok(())
}

/// Shared sampling state for one target and degree.
pub struct Approximator {
    pub cache: SampleCache,
}

impl Approximator {
    pub fn new(u: &TargetFunction, degree: usize) -> Result<Self> {
        Ok(Approximator {
            cache: SampleCache::new(u.clone(), degree)?,
        })
    }

    pub fn target(&self) -> &TargetFunction {
        &self.cache.target
    }

    pub fn degree(&self) -> usize {
        self.cache.degree
    }

    pub fn sample(&self, tri: &Triangle) -> Result<Arc<SampledTriangle>> {
        self.cache.get(tri)
    }

    fn check_degree(&self, ctx: &RDContext) -> Result<()> {
        if ctx.degree != self.degree() {
            return Err(Error::InvalidParameter(format!(
                "context degree {} differs from sampled degree {}",
                ctx.degree,
                self.degree()
            )));
        }
        Ok(())
    }

    pub fn best_on_triangle(&self, tri: &Triangle, epsilon: f64) -> Result<ElementBest> {
        let s = self.sample(tri)?;
        let a = system(tri, self.degree(), epsilon)?;
        let b = s.load(epsilon);
        let c = spd_solve(a, &b, "element")?;
        let coeffs: Vec<f64> = c.iter().copied().collect();
        let error_sq = s.residual_sq(epsilon, &coeffs);
        check_pythagoras(s.norm_sq(epsilon), c.dot(&b), error_sq)?;
        Ok(ElementBest {
            tri: *tri,
            degree: self.degree(),
            coeffs,
            error_sq,
        })
    }

    pub fn best_on_element(
        &self,
        mesh: &Mesh,
        id: ElementId,
        ctx: &RDContext,
    ) -> Result<ElementBest> {
        self.check_degree(ctx)?;
        if !mesh.element(id)?.is_leaf() {
            return Err(Error::NotALeaf(id.0));
        }
        self.best_on_triangle(&mesh.triangle(id), ctx.epsilon)
    }

    pub fn best_on_patch(
        &self,
        patch: &Patch,
        epsilon: f64,
        space: LocalSpace,
    ) -> Result<PatchBest> {
        let degree = self.degree();
        let ps = PatchSpace::new(patch, degree, space)?;
        let n = ps.ndof();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut samples = Vec::with_capacity(patch.triangles.len());
        let mut norm_sq = 0.0;
        for (t, tri) in patch.triangles.iter().enumerate() {
            let s = self.sample(tri)?;
            let at = system(tri, degree, epsilon)?;
            let bt = s.load(epsilon);
            norm_sq += s.norm_sq(epsilon);
            let map = &ps.local_to_patch[t];
            for (i, gi) in map.iter().enumerate() {
                let Some(gi) = *gi else { continue };
                b[gi] += bt[i];
                for (j, gj) in map.iter().enumerate() {
                    if let Some(gj) = *gj {
                        a[(gi, gj)] += at[(i, j)];
                    }
                }
            }
            samples.push(s);
        }
        let c = spd_solve(a, &b, "patch")?;
        let coeffs: Vec<f64> = c.iter().copied().collect();
        let error_sq: f64 = samples
            .iter()
            .enumerate()
            .map(|(t, s)| s.residual_sq(epsilon, &ps.local_coeffs(t, &coeffs)))
            .sum();
        check_pythagoras(norm_sq, c.dot(&b), error_sq)?;
        Ok(PatchBest {
            function: PatchFunction {
                patch: patch.clone(),
                space: ps,
                coeffs,
            },
            error_sq,
        })
    }

    /// Minimize `||grad(u - P)||` over the patch space subject to
    /// `int P = int u`; the returned error is the seminorm error squared.
    pub fn best_seminorm_on_patch(&self, patch: &Patch) -> Result<PatchBest> {
        if patch.shared_face.is_none() {
            return Err(Error::InvalidParameter(
                "seminorm best approximation needs an interior-face patch".into(),
            ));
        }
        let degree = self.degree();
        let ps = PatchSpace::new(patch, degree, LocalSpace::Full)?;
        let n = ps.ndof();
        let mut k = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        let mut samples = Vec::new();
        for (t, tri) in patch.triangles.iter().enumerate() {
            let s = self.sample(tri)?;
            let mats = assemble_local(tri, degree)?;
            let g = s.grad_moments();
            let ones = DVector::from_element(mats.mass.nrows(), 1.0);
            let int_phi = &mats.mass * ones;
            let map = &ps.local_to_patch[t];
            for (i, gi) in map.iter().enumerate() {
                let gi = gi.expect("unconstrained space");
                rhs[gi] += g[i];
                k[(gi, n)] += int_phi[i];
                k[(n, gi)] += int_phi[i];
                for (j, gj) in map.iter().enumerate() {
                    k[(gi, gj.expect("unconstrained space"))] += mats.stiffness[(i, j)];
                }
            }
            rhs[n] += s.integral_u();
            samples.push(s);
        }
        let sol = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular mean-constrained system".into()))?;
        let coeffs: Vec<f64> = sol.iter().take(n).copied().collect();
        let error_sq = samples
            .iter()
            .enumerate()
            .map(|(t, s)| s.residual_parts(&ps.local_coeffs(t, &coeffs)).1)
            .sum();
        Ok(PatchBest {
            function: PatchFunction {
                patch: patch.clone(),
                space: ps,
                coeffs,
            },
            error_sq,
        })
    }

    /// Per-leaf samples in `mesh.leaves()` order.
    pub fn leaf_samples(&self, mesh: &Mesh) -> Result<Vec<Arc<SampledTriangle>>> {
        mesh.leaves()
            .par_iter()
            .map(|&k| self.sample(&mesh.triangle(k)))
            .collect()
    }

    pub fn global_best(&self, mesh: &Mesh, ctx: &RDContext) -> Result<GlobalBest> {
        self.check_degree(ctx)?;
        let dofs = Arc::new(DofMap::new(mesh, ctx.degree, ctx.dirichlet())?);
        let samples = self.leaf_samples(mesh)?;
        let n = dofs.ndof;
        let mut triplets = Vec::new();
        let mut b = vec![0.0; n];
        let mut norm_sq = 0.0;
        for (pos, &k) in mesh.leaves().iter().enumerate() {
            let tri = mesh.triangle(k);
            let a = system(&tri, ctx.degree, ctx.epsilon)?;
            let s = &samples[pos];
            let bt = s.load(ctx.epsilon);
            norm_sq += s.norm_sq(ctx.epsilon);
            let map = &dofs.local_to_global[pos];
            for (i, gi) in map.iter().enumerate() {
                let Some(gi) = *gi else { continue };
                b[gi] += bt[i];
                for (j, gj) in map.iter().enumerate() {
                    if let Some(gj) = *gj {
                        triplets.push((gi, gj, a[(i, j)]));
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(n, triplets);
        let out = pcg(&matrix, &b, CG_TOLERANCE, (10 * n).max(10))?;
        let function = FEFunction {
            degree: ctx.degree,
            bc: ctx.bc,
            mesh_hash: mesh.hash(),
            dofs,
            coeffs: out.x,
        };
        let error_sq = self.error_sq(mesh, &function, ctx.epsilon, &samples);
        let projected: f64 = function.coeffs.iter().zip(&b).map(|(c, b)| c * b).sum();
        check_pythagoras(norm_sq, projected, error_sq)?;
        Ok(GlobalBest {
            function,
            error_sq,
            iterations: out.iterations,
        })
    }

    fn error_sq(
        &self,
        mesh: &Mesh,
        v: &FEFunction,
        epsilon: f64,
        samples: &[Arc<SampledTriangle>],
    ) -> f64 {
        (0..mesh.num_elements())
            .map(|pos| samples[pos].residual_sq(epsilon, &v.local_coeffs(pos)))
            .sum()
    }

    /// `|||u - v|||^2` over the mesh.
    pub fn distance_sq(&self, mesh: &Mesh, v: &FEFunction, epsilon: f64) -> Result<f64> {
        let samples = self.leaf_samples(mesh)?;
        Ok(self.error_sq(mesh, v, epsilon, &samples))
    }

    /// Quasi-interpolation `I^eps u`: element-interior nodes take the value
    /// of the pair best approximation `R_F u` for the lowest-indexed interior
    /// face `F` of their element; skeleton nodes take `int_K u psi_z^K` on
    /// the lowest-indexed element containing them.
    pub fn quasi_interpolate(&self, mesh: &Mesh, ctx: &RDContext) -> Result<FEFunction> {
        self.check_degree(ctx)?;
        let dofs = Arc::new(DofMap::new(mesh, ctx.degree, ctx.dirichlet())?);
        let basis = ReferenceBasis::get(ctx.degree)?;
        let mut coeffs = vec![f64::NAN; dofs.ndof];
        let mut order: Vec<(ElementId, usize)> = mesh.leaves().iter().copied().zip(0..).collect();
        order.sort_unstable();
        let mut pair_cache: HashMap<FaceId, PatchBest> = HashMap::new();
        let mut element_cache: HashMap<ElementId, ElementBest> = HashMap::new();
        for (k, pos) in order {
            let map = &dofs.local_to_global[pos];
            let tri = mesh.triangle(k);
            let mut duals: Option<Vec<f64>> = None;
            for (i, g) in map.iter().enumerate() {
                let Some(g) = *g else { continue };
                if !coeffs[g].is_nan() {
                    continue;
                }
                coeffs[g] = if basis.nodes[i].kind == NodeKind::Interior {
                    self.interior_value(mesh, k, i, ctx, &mut pair_cache, &mut element_cache)?
                } else {
                    if duals.is_none() {
                        duals = Some(crate::element::dual_values(&*self.sample(&tri)?));
                    }
                    duals.as_ref().unwrap()[i]
                };
            }
        }
        Ok(FEFunction {
            degree: ctx.degree,
            bc: ctx.bc,
            mesh_hash: mesh.hash(),
            dofs,
            coeffs,
        })
    }

    fn interior_value(
        &self,
        mesh: &Mesh,
        k: ElementId,
        node: usize,
        ctx: &RDContext,
        pairs: &mut HashMap<FaceId, PatchBest>,
        elements: &mut HashMap<ElementId, ElementBest>,
    ) -> Result<f64> {
        let faces = mesh.element_faces(k)?;
        let face = faces
            .iter()
            .copied()
            .filter(|f| !mesh.faces()[f.0].is_boundary())
            .min();
        match face {
            Some(f) => {
                let best = match pairs.entry(f) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => {
                        let patch = mesh.pair(f)?;
                        e.insert(self.best_on_patch(&patch, ctx.epsilon, ctx.local_space())?)
                    }
                };
                let t = best
                    .function
                    .patch
                    .hosts
                    .iter()
                    .position(|&h| h == k)
                    .expect("element is in its pair");
                Ok(best.function.local_coeffs(t)[node])
            }
            None if mesh.num_elements() == 1 => {
                let best = match elements.entry(k) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => e.insert(self.best_on_element(mesh, k, ctx)?),
                };
                Ok(best.coeffs[node])
            }
            None => Err(Error::FaceAssignment(format!(
                "element {k} has no interior face"
            ))),
        }
    }
}

pub fn best_on_element(
    u: &TargetFunction,
    mesh: &Mesh,
    id: ElementId,
    ctx: &RDContext,
) -> Result<ElementBest> {
    Approximator::new(u, ctx.degree)?.best_on_element(mesh, id, ctx)
}

pub fn best_on_patch(u: &TargetFunction, patch: &Patch, ctx: &RDContext) -> Result<PatchBest> {
    Approximator::new(u, ctx.degree)?.best_on_patch(patch, ctx.epsilon, ctx.local_space())
}

pub fn best_seminorm_on_patch(
    u: &TargetFunction,
    patch: &Patch,
    degree: usize,
) -> Result<PatchBest> {
    Approximator::new(u, degree)?.best_seminorm_on_patch(patch)
}

pub fn global_best(u: &TargetFunction, mesh: &Mesh, ctx: &RDContext) -> Result<GlobalBest> {
    Approximator::new(u, ctx.degree)?.global_best(mesh, ctx)
}

pub fn quasi_interpolate(u: &TargetFunction, mesh: &Mesh, ctx: &RDContext) -> Result<FEFunction> {
    Approximator::new(u, ctx.degree)?.quasi_interpolate(mesh, ctx)
}

impl PatchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatchKind::SingleElement => "single-element",
            PatchKind::Pair => "pair",
            PatchKind::MinimalPair => "minimal-pair",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{counterexample, smooth_sine, step};

    fn ctx(eps: f64, degree: usize) -> RDContext {
        RDContext::new(eps, degree).unwrap()
    }

    #[test]
    fn polynomials_are_reproduced_on_elements() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        for degree in 1..=3 {
            let terms: Vec<(u32, u32, f64)> = (0..=degree as u32)
                .flat_map(|a| {
                    (0..=degree as u32 - a).map(move |b| (a, b, 0.3 + a as f64 - 0.7 * b as f64))
                })
                .collect();
            let u = TargetFunction::polynomial("p", terms);
            for eps in [0.0, 1.0] {
                let e = best_on_element(&u, &mesh, ElementId(0), &ctx(eps, degree)).unwrap();
                assert!(e.error_sq < 1e-24, "degree {degree}: {}", e.error_sq);
            }
        }
    }

    #[test]
    fn step_pair_error_positive_but_elements_exact() {
        let mesh = Mesh::rectangle_grid_with_lines(&[-1.0, 0.0, 1.0], &[0.0, 1.0]).unwrap();
        let c = ctx(0.0, 1);
        let u = step();
        for &k in mesh.leaves() {
            assert!(best_on_element(&u, &mesh, k, &c).unwrap().error_sq < 1e-28);
        }
        let f = mesh
            .interior_faces()
            .find(|&f| {
                let (a, b) = mesh.face_segment(f);
                a[0] == 0.0 && b[0] == 0.0
            })
            .unwrap();
        let pb = best_on_patch(&u, &mesh.pair(f).unwrap(), &c).unwrap();
        assert!(pb.error_sq > 1e-2);
    }

    #[test]
    fn mean_value_identity() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let f = mesh.interior_faces().next().unwrap();
        let patch = mesh.pair(f).unwrap();
        let u = smooth_sine();
        let approx = Approximator::new(&u, 2).unwrap();
        let best = approx.best_on_patch(&patch, 0.1, LocalSpace::Full).unwrap();
        let mut int_u = 0.0;
        let mut int_p = 0.0;
        for (t, tri) in patch.triangles.iter().enumerate() {
            let s = approx.sample(tri).unwrap();
            int_u += s.integral_u();
            let m = assemble_local(tri, 2).unwrap().mass;
            let c = DVector::from_vec(best.function.local_coeffs(t));
            int_p += (m * c).sum();
        }
        assert!((int_u - int_p).abs() < 1e-12 * int_u.abs().max(1.0));
    }

    #[test]
    fn global_best_reproduces_fe_functions() {
        let mesh = Mesh::rectangle_grid(-2.0, 2.0, -1.0, 1.0, 2, 1)
            .unwrap()
            .uniform_refine(2)
            .unwrap();
        for degree in 1..=3 {
            let u = TargetFunction::random_fe(&mesh, degree, 5).unwrap();
            for eps in [0.0, 1e-3, 1.0] {
                let g = global_best(&u, &mesh, &ctx(eps, degree)).unwrap();
                assert!(g.error_sq < 1e-18, "{degree} {eps} {}", g.error_sq);
                let q = quasi_interpolate(&u, &mesh, &ctx(eps, degree)).unwrap();
                let TargetFunction::Discrete(d) = &u else {
                    unreachable!()
                };
                for pos in 0..mesh.num_elements() {
                    for (a, b) in q.local_coeffs(pos).iter().zip(&d.coeffs[pos]) {
                        assert!((a - b).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn global_at_least_elementwise() {
        let mesh = Mesh::rectangle_grid_with_lines(
            &[-2.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, 2.0],
            &[-1.0, 0.0, 1.0],
        )
        .unwrap();
        let u = counterexample(1e-2);
        let c = ctx(0.0, 1);
        let a = Approximator::new(&u, 1).unwrap();
        let g = a.global_best(&mesh, &c).unwrap();
        let sum: f64 = mesh
            .leaves()
            .iter()
            .map(|&k| a.best_on_element(&mesh, k, &c).unwrap().error_sq)
            .sum();
        assert!(g.error_sq >= sum);
    }

    #[test]
    fn invalid_context_rejected() {
        assert!(RDContext::new(-1.0, 1).is_err());
        assert!(RDContext::new(f64::NAN, 1).is_err());
        assert!(RDContext::new(1.0, 4).is_err());
    }
}
