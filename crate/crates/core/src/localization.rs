//! Localized error quantities and their comparison with the global best error.
//!
//! For a target `u`, mesh and context the report collects
//! - the global best error over `S` (or `S_0`),
//! - best errors on pairs of interior faces and on minimal pairs of all faces,
//! - elementwise best errors, their jump augmentation per interior face and
//!   the trace-augmented element functional,
//! - the error functional `e(K)` (sum over the minimal pairs of the faces of `K`).

use std::io::Write;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::approx::{Approximator, BcMode, ElementBest, LocalSpace, RDContext};
use crate::element::{assemble_local, face_mass_1d, physical_eval, ReferenceBasis};
use crate::error::{Error, Result};
use crate::geometry::{lerp, Triangle};
use crate::mesh::{ElementId, FaceId, Mesh, MeshStats};
use crate::sampling::SampledEdge;
use crate::target::TargetFunction;

/// Slack for the exact covering inequalities.
pub const COVERING_SLACK: f64 = 1e-9;

/// `sum / global`, or the sentinel `exact` when both vanish.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ratio {
    Value(f64),
    Exact,
}

impl Ratio {
    fn of(sum: f64, global: f64, scale: f64) -> Ratio {
        let tiny = 1e-9 * scale.max(f64::MIN_POSITIVE);
        if global <= tiny && sum <= tiny {
            Ratio::Exact
        } else {
            Ratio::Value(sum / global)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(*v),
            Ratio::Exact => None,
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Value(v) => write!(f, "{v:e}"),
            Ratio::Exact => f.write_str("exact"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Exact => s.serialize_str("exact"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FaceRecord {
    pub id: usize,
    pub boundary: bool,
    pub length: f64,
    /// interior faces only
    pub pair_error_sq: Option<f64>,
    pub minimal_pair_error_sq: f64,
    /// `h_F ||P_1 - P_2||_F^2`, interior faces only
    pub jump_sq: Option<f64>,
    /// jump plus both element errors squared
    pub jump_augmented_sq: Option<f64>,
    /// zero-trace variant (homogeneous Dirichlet mode only)
    pub pair_error_sq_zero_trace: Option<f64>,
    pub minimal_pair_error_sq_zero_trace: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ElementRecord {
    pub id: usize,
    pub area: f64,
    pub element_error_sq: f64,
    pub trace_augmented_sq: f64,
    pub error_functional: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Ratios {
    pub pair: Ratio,
    pub minimal_pair: Ratio,
    pub element: Ratio,
    pub jump_augmented: Ratio,
    pub trace_augmented: Ratio,
    pub error_functional: Ratio,
}

#[derive(Clone, Debug, Serialize)]
pub struct Covering {
    /// `pair_sum^2 <= 3 global^2`
    pub pair: bool,
    /// `minimal_pair_sum^2 <= 2 global^2`
    pub minimal_pair: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationReport {
    pub target: String,
    pub epsilon: f64,
    pub degree: usize,
    pub bc: BcMode,
    pub mesh_hash: String,
    pub stats: MeshStats,
    pub target_norm: f64,
    pub global_error: f64,
    pub pair_sum: f64,
    pub minimal_pair_sum: f64,
    pub element_sum: f64,
    pub jump_augmented_sum: f64,
    pub trace_augmented_sum: f64,
    /// `E(T)^{1/2}`
    pub error_functional_sum: f64,
    pub pair_sum_zero_trace: Option<f64>,
    pub minimal_pair_sum_zero_trace: Option<f64>,
    pub ratios: Ratios,
    pub covering: Covering,
    pub cg_iterations: usize,
    pub faces: Vec<FaceRecord>,
    pub elements: Vec<ElementRecord>,
}

/// Localization engine sharing target samples across contexts.
pub struct Localizer {
    pub approx: Approximator,
}

fn sum_sqrt<I: Iterator<Item = f64>>(it: I) -> f64 {
    it.fold(0.0, |a, b| a + b).sqrt()
}

impl Localizer {
    pub fn new(u: &TargetFunction, degree: usize) -> Result<Self> {
        Ok(Localizer {
            approx: Approximator::new(u, degree)?,
        })
    }

    pub fn target(&self) -> &TargetFunction {
        self.approx.target()
    }

    /// Best errors squared on `pair(F)` for every face (`None` on boundary faces).
    pub fn pair_errors(
        &self,
        mesh: &Mesh,
        epsilon: f64,
        space: LocalSpace,
    ) -> Result<Vec<Option<f64>>> {
        (0..mesh.faces().len())
            .into_par_iter()
            .map(|f| {
                if mesh.faces()[f].is_boundary() {
                    return Ok(None);
                }
                let patch = mesh.pair(FaceId(f))?;
                Ok(Some(
                    self.approx.best_on_patch(&patch, epsilon, space)?.error_sq,
                ))
            })
            .collect()
    }

    /// Best errors squared on the minimal pair of every face.
    pub fn minimal_pair_errors(
        &self,
        mesh: &Mesh,
        epsilon: f64,
        space: LocalSpace,
    ) -> Result<Vec<f64>> {
        (0..mesh.faces().len())
            .into_par_iter()
            .map(|f| {
                let patch = mesh.minimal_pair(FaceId(f))?;
                Ok(self.approx.best_on_patch(&patch, epsilon, space)?.error_sq)
            })
            .collect()
    }

    /// Elementwise best approximations in `mesh.leaves()` order.
    pub fn element_bests(&self, mesh: &Mesh, epsilon: f64) -> Result<Vec<ElementBest>> {
        mesh.leaves()
            .par_iter()
            .map(|&k| self.approx.best_on_triangle(&mesh.triangle(k), epsilon))
            .collect()
    }

    /// `h_F ||P_1 - P_2||_F^2` for every interior face, from elementwise best
    /// approximations given in `mesh.leaves()` order.
    pub fn jump_terms(&self, mesh: &Mesh, bests: &[ElementBest]) -> Result<Vec<Option<f64>>> {
        let degree = self.approx.degree();
        let basis = ReferenceBasis::get(degree)?;
        let pos = leaf_positions(mesh);
        let out = mesh
            .faces()
            .iter()
            .enumerate()
            .map(|(f, face)| {
                if face.is_boundary() {
                    return None;
                }
                let (a, b) = mesh.face_segment(FaceId(f));
                let len = mesh.face_length(FaceId(f));
                let (k1, k2) = (face.elements[0].0, face.elements[1].0);
                let (p1, p2) = (&bests[pos[k1.0]], &bests[pos[k2.0]]);
                let d: Vec<f64> = (0..=degree)
                    .map(|i| {
                        let x = lerp(a, b, i as f64 / degree as f64);
                        let v1: f64 = physical_eval(&basis, &p1.tri, x)
                            .iter()
                            .zip(&p1.coeffs)
                            .map(|(p, c)| p * c)
                            .sum();
                        let v2: f64 = physical_eval(&basis, &p2.tri, x)
                            .iter()
                            .zip(&p2.coeffs)
                            .map(|(p, c)| p * c)
                            .sum();
                        v1 - v2
                    })
                    .collect();
                let m = face_mass_1d(len, degree);
                let mut jump = 0.0;
                for i in 0..=degree {
                    for j in 0..=degree {
                        jump += d[i] * m[(i, j)] * d[j];
                    }
                }
                let h = p1.tri.area().min(p2.tri.area()) / len;
                Some(h * jump.max(0.0))
            })
            .collect();
        Ok(out)
    }

    /// `|||u - P|||_K^2 + |K|/|dK| ||u - P||_{dK}^2` for given nodal coefficients.
    pub fn trace_functional(&self, tri: &Triangle, coeffs: &[f64], epsilon: f64) -> Result<f64> {
        let s = self.approx.sample(tri)?;
        let basis = ReferenceBasis::get(self.approx.degree())?;
        let weight = tri.area() / tri.perimeter();
        let mut boundary = 0.0;
        for e in 0..3 {
            let (a, b) = tri.edge(e);
            let edge = SampledEdge::new(self.target(), a, b, 2 * self.approx.degree());
            for ((x, w), v) in edge.points.iter().zip(&edge.weights).zip(&edge.values) {
                let p: f64 = physical_eval(&basis, tri, *x)
                    .iter()
                    .zip(coeffs)
                    .map(|(p, c)| p * c)
                    .sum();
                boundary += w * (v - p) * (v - p);
            }
        }
        Ok(s.residual_sq(epsilon, coeffs) + weight * boundary)
    }

    /// Minimizer of the trace-augmented functional on one triangle and its value.
    pub fn trace_augmented_on(&self, tri: &Triangle, epsilon: f64) -> Result<(Vec<f64>, f64)> {
        let degree = self.approx.degree();
        let basis = ReferenceBasis::get(degree)?;
        let s = self.approx.sample(tri)?;
        let m = assemble_local(tri, degree)?;
        let weight = tri.area() / tri.perimeter();
        let mut b = s.load(epsilon);
        for e in 0..3 {
            let (p, q) = tri.edge(e);
            let edge = SampledEdge::new(self.target(), p, q, 2 * degree);
            for ((x, w), v) in edge.points.iter().zip(&edge.weights).zip(&edge.values) {
                for (k, phi) in physical_eval(&basis, tri, *x).iter().enumerate() {
                    b[k] += weight * w * v * phi;
                }
            }
        }
        let a = m.mass + m.stiffness * epsilon + m.boundary_mass * weight;
        let c = a
            .cholesky()
            .ok_or_else(|| Error::Degenerate("trace-augmented system".into()))?
            .solve(&b);
        let coeffs: Vec<f64> = c.iter().copied().collect();
        let value = self.trace_functional(tri, &coeffs, epsilon)?;
        Ok((coeffs, value))
    }

    /// `e(K)`: sum of minimal-pair best errors squared over the faces of `K`.
    pub fn error_functional(&self, mesh: &Mesh, k: ElementId, ctx: &RDContext) -> Result<f64> {
        let mut e = 0.0;
        for f in mesh.element_faces(k)? {
            let patch = mesh.minimal_pair(f)?;
            e += self
                .approx
                .best_on_patch(&patch, ctx.epsilon, ctx.local_space())?
                .error_sq;
        }
        Ok(e)
    }

    /// Full report for one context.
    pub fn report(&self, mesh: &Mesh, ctx: &RDContext) -> Result<LocalizationReport> {
        if ctx.degree != self.approx.degree() {
            return Err(Error::InvalidParameter(
                "context degree differs from localizer degree".into(),
            ));
        }
        let eps = ctx.epsilon;
        let space = ctx.local_space();
        let global = self.approx.global_best(mesh, ctx)?;
        let target_norm = self
            .approx
            .leaf_samples(mesh)?
            .iter()
            .map(|s| s.norm_sq(eps))
            .sum::<f64>()
            .sqrt();
        let bests = self.element_bests(mesh, eps)?;
        let pairs = self.pair_errors(mesh, eps, space)?;
        let minimal = self.minimal_pair_errors(mesh, eps, space)?;
        let jumps = self.jump_terms(mesh, &bests)?;
        let (pairs_zt, minimal_zt) = if ctx.dirichlet() {
            (
                Some(self.pair_errors(mesh, eps, LocalSpace::ZeroTrace)?),
                Some(self.minimal_pair_errors(mesh, eps, LocalSpace::ZeroTrace)?),
            )
        } else {
            (None, None)
        };
        let traces: Vec<f64> = mesh
            .leaves()
            .par_iter()
            .map(|&k| Ok(self.trace_augmented_on(&mesh.triangle(k), eps)?.1))
            .collect::<Result<_>>()?;
        let pos = leaf_positions(mesh);

        let faces: Vec<FaceRecord> = mesh
            .faces()
            .iter()
            .enumerate()
            .map(|(f, face)| {
                let jump_augmented_sq = jumps[f].map(|j| {
                    j + face
                        .elements
                        .iter()
                        .map(|&(k, _)| bests[pos[k.0]].error_sq)
                        .sum::<f64>()
                });
                FaceRecord {
                    id: f,
                    boundary: face.is_boundary(),
                    length: mesh.face_length(FaceId(f)),
                    pair_error_sq: pairs[f],
                    minimal_pair_error_sq: minimal[f],
                    jump_sq: jumps[f],
                    jump_augmented_sq,
                    pair_error_sq_zero_trace: pairs_zt.as_ref().and_then(|p| p[f]),
                    minimal_pair_error_sq_zero_trace: minimal_zt.as_ref().map(|m| m[f]),
                }
            })
            .collect();
        let elements: Vec<ElementRecord> = mesh
            .leaves()
            .iter()
            .enumerate()
            .map(|(p, &k)| {
                let fs = mesh.element_faces(k).expect("leaf");
                ElementRecord {
                    id: k.0,
                    area: mesh.triangle(k).area(),
                    element_error_sq: bests[p].error_sq,
                    trace_augmented_sq: traces[p],
                    error_functional: fs.iter().map(|f| minimal[f.0]).sum(),
                }
            })
            .collect();

        let global_error = global.error();
        let pair_sum = sum_sqrt(faces.iter().filter_map(|f| f.pair_error_sq));
        let minimal_pair_sum = sum_sqrt(faces.iter().map(|f| f.minimal_pair_error_sq));
        let element_sum = sum_sqrt(elements.iter().map(|e| e.element_error_sq));
        let jump_augmented_sum = sum_sqrt(faces.iter().filter_map(|f| f.jump_augmented_sq));
        let trace_augmented_sum = sum_sqrt(elements.iter().map(|e| e.trace_augmented_sq));
        let error_functional_sum = sum_sqrt(elements.iter().map(|e| e.error_functional));
        let pair_sum_zero_trace =
            pairs_zt.map(|_| sum_sqrt(faces.iter().filter_map(|f| f.pair_error_sq_zero_trace)));
        let minimal_pair_sum_zero_trace = minimal_zt.map(|_| {
            sum_sqrt(
                faces
                    .iter()
                    .filter_map(|f| f.minimal_pair_error_sq_zero_trace),
            )
        });

        let g2 = global.error_sq;
        let covering = Covering {
            pair: pair_sum * pair_sum <= 3.0 * g2 + COVERING_SLACK,
            minimal_pair: minimal_pair_sum * minimal_pair_sum <= 2.0 * g2 + COVERING_SLACK,
        };
        let r = |s: f64| Ratio::of(s, global_error, target_norm);
        let ratios = Ratios {
            pair: r(pair_sum),
            minimal_pair: r(minimal_pair_sum),
            element: r(element_sum),
            jump_augmented: r(jump_augmented_sum),
            trace_augmented: r(trace_augmented_sum),
            error_functional: r(error_functional_sum),
        };
        Ok(LocalizationReport {
            target: self.target().name().to_string(),
            epsilon: eps,
            degree: ctx.degree,
            bc: ctx.bc,
            mesh_hash: mesh.hash(),
            stats: mesh.stats(),
            target_norm,
            global_error,
            pair_sum,
            minimal_pair_sum,
            element_sum,
            jump_augmented_sum,
            trace_augmented_sum,
            error_functional_sum,
            pair_sum_zero_trace,
            minimal_pair_sum_zero_trace,
            ratios,
            covering,
            cg_iterations: global.iterations,
            faces,
            elements,
        })
    }
}

/// Position in `mesh.leaves()` indexed by element id.
fn leaf_positions(mesh: &Mesh) -> Vec<usize> {
    let mut pos = vec![usize::MAX; mesh.nodes().len()];
    for (p, &k) in mesh.leaves().iter().enumerate() {
        pos[k.0] = p;
    }
    pos
}

/// Largest `|u|` over sample points on the boundary faces.
pub fn boundary_trace_max(u: &TargetFunction, mesh: &Mesh) -> f64 {
    let mut m: f64 = 0.0;
    for (f, face) in mesh.faces().iter().enumerate() {
        if !face.is_boundary() {
            continue;
        }
        let (a, b) = mesh.face_segment(FaceId(f));
        for i in 0..=8 {
            m = m.max(u.value(lerp(a, b, i as f64 / 8.0)).abs());
        }
    }
    m
}

impl LocalizationReport {
    fn rows(&self) -> Vec<(&'static str, usize, &'static str, f64)> {
        let mut rows = Vec::new();
        for f in &self.faces {
            let kind = if f.boundary {
                "boundary-face"
            } else {
                "interior-face"
            };
            if let Some(v) = f.pair_error_sq {
                rows.push((kind, f.id, "pair", v));
            }
            rows.push((kind, f.id, "minimal-pair", f.minimal_pair_error_sq));
            if let Some(v) = f.jump_sq {
                rows.push((kind, f.id, "jump", v));
            }
            if let Some(v) = f.jump_augmented_sq {
                rows.push((kind, f.id, "jump-augmented", v));
            }
            if let Some(v) = f.pair_error_sq_zero_trace {
                rows.push((kind, f.id, "pair-zero-trace", v));
            }
            if let Some(v) = f.minimal_pair_error_sq_zero_trace {
                rows.push((kind, f.id, "minimal-pair-zero-trace", v));
            }
        }
        for e in &self.elements {
            rows.push(("element", e.id, "element", e.element_error_sq));
            rows.push(("element", e.id, "trace-augmented", e.trace_augmented_sq));
            rows.push(("element", e.id, "error-functional", e.error_functional));
        }
        rows
    }

    /// One row per face or element quantity.
    pub fn write_csv<W: Write>(&self, out: W, write_header: bool) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        if write_header {
            w.write_record([
                "target",
                "epsilon",
                "degree",
                "mesh_hash",
                "bc",
                "entity",
                "id",
                "quantity",
                "value_sq",
            ])?;
        }
        let bc = match self.bc {
            BcMode::None => "none",
            BcMode::HomogeneousDirichlet => "homogeneous-dirichlet",
        };
        for (entity, id, quantity, value) in self.rows() {
            w.write_record([
                self.target.as_str(),
                &format!("{:e}", self.epsilon),
                &self.degree.to_string(),
                &self.mesh_hash,
                bc,
                entity,
                &id.to_string(),
                quantity,
                &format!("{value:e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Summary without the per-face and per-element tables.
    pub fn summary_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("faces");
            obj.remove("elements");
            obj.insert("schema".into(), serde_json::json!(1));
        }
        v
    }
}

pub fn pair_localization(
    u: &TargetFunction,
    mesh: &Mesh,
    ctx: &RDContext,
) -> Result<LocalizationReport> {
    Localizer::new(u, ctx.degree)?.report(mesh, ctx)
}

/// Report in homogeneous Dirichlet mode; `u` must vanish on the boundary.
pub fn dirichlet_pair_localization(
    u: &TargetFunction,
    mesh: &Mesh,
    ctx: &RDContext,
) -> Result<LocalizationReport> {
    let trace = boundary_trace_max(u, mesh);
    if trace > 1e-8 {
        return Err(Error::NonzeroTrace(trace));
    }
    let ctx = RDContext {
        bc: BcMode::HomogeneousDirichlet,
        ..*ctx
    };
    Localizer::new(u, ctx.degree)?.report(mesh, &ctx)
}

/// Per interior face: `h_F ||P_1 - P_2||_F^2 + |||u - P_1|||^2 + |||u - P_2|||^2`.
pub fn jump_augmented(
    u: &TargetFunction,
    mesh: &Mesh,
    ctx: &RDContext,
) -> Result<Vec<(FaceId, f64)>> {
    let loc = Localizer::new(u, ctx.degree)?;
    let bests = loc.element_bests(mesh, ctx.epsilon)?;
    let jumps = loc.jump_terms(mesh, &bests)?;
    let pos = leaf_positions(mesh);
    Ok(jumps
        .iter()
        .enumerate()
        .filter_map(|(f, j)| {
            j.map(|j| {
                let face = &mesh.faces()[f];
                (
                    FaceId(f),
                    j + face
                        .elements
                        .iter()
                        .map(|&(k, _)| bests[pos[k.0]].error_sq)
                        .sum::<f64>(),
                )
            })
        })
        .collect())
}

/// Per leaf: the minimized trace-augmented element functional.
pub fn trace_augmented(
    u: &TargetFunction,
    mesh: &Mesh,
    ctx: &RDContext,
) -> Result<Vec<(ElementId, f64)>> {
    let loc = Localizer::new(u, ctx.degree)?;
    mesh.leaves()
        .iter()
        .map(|&k| Ok((k, loc.trace_augmented_on(&mesh.triangle(k), ctx.epsilon)?.1)))
        .collect()
}

pub fn error_functional_e(
    u: &TargetFunction,
    mesh: &Mesh,
    k: ElementId,
    ctx: &RDContext,
) -> Result<f64> {
    if !mesh.element(k)?.is_leaf() {
        return Err(Error::NotALeaf(k.0));
    }
    Localizer::new(u, ctx.degree)?.error_functional(mesh, k, ctx)
}

/// `E(T)`: sum of `e(K)` over the leaves.
pub fn global_functional(u: &TargetFunction, mesh: &Mesh, ctx: &RDContext) -> Result<f64> {
    let loc = Localizer::new(u, ctx.degree)?;
    let minimal = loc.minimal_pair_errors(mesh, ctx.epsilon, ctx.local_space())?;
    Ok(mesh
        .leaves()
        .iter()
        .map(|&k| {
            mesh.element_faces(k)
                .expect("leaf")
                .iter()
                .map(|f| minimal[f.0])
                .sum::<f64>()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{smooth_sine, step};

    #[test]
    fn fe_target_gives_zero_report() {
        let mesh = Mesh::rectangle_grid(-2.0, 2.0, -1.0, 1.0, 2, 1)
            .unwrap()
            .uniform_refine(1)
            .unwrap();
        let u = TargetFunction::random_fe(&mesh, 2, 1).unwrap();
        let r = pair_localization(&u, &mesh, &RDContext::new(1e-3, 2).unwrap()).unwrap();
        let tol = 1e-9 * r.target_norm;
        for v in [
            r.global_error,
            r.pair_sum,
            r.minimal_pair_sum,
            r.element_sum,
            r.jump_augmented_sum,
            r.error_functional_sum,
        ] {
            assert!(v <= tol, "{v}");
        }
        assert_eq!(r.ratios.pair, Ratio::Exact);
    }

    #[test]
    fn step_jump_on_symmetric_pair() {
        // two unit squares split by x = 0, each cut by a diagonal
        let mesh = Mesh::rectangle_grid_with_lines(&[-1.0, 0.0, 1.0], &[0.0, 1.0]).unwrap();
        let ctx = RDContext::new(0.0, 1).unwrap();
        let jumps = jump_augmented(&step(), &mesh, &ctx).unwrap();
        let f = mesh
            .interior_faces()
            .find(|&f| {
                let (a, b) = mesh.face_segment(f);
                a[0] == 0.0 && b[0] == 0.0
            })
            .unwrap();
        let (_, value) = jumps.iter().find(|(g, _)| *g == f).unwrap();
        let face = mesh.face(f).unwrap();
        let h = face
            .elements
            .iter()
            .map(|&(k, _)| mesh.triangle(k).area())
            .fold(f64::INFINITY, f64::min)
            / 1.0;
        assert!((value - 4.0 * h * 1.0).abs() < 1e-12, "{value}");
    }

    #[test]
    fn covering_inequalities_hold() {
        let mesh = Mesh::rectangle_grid(-2.0, 2.0, -1.0, 1.0, 3, 2)
            .unwrap()
            .uniform_refine(1)
            .unwrap();
        for eps in [1.0, 1e-4, 0.0] {
            let r =
                pair_localization(&smooth_sine(), &mesh, &RDContext::new(eps, 1).unwrap()).unwrap();
            assert!(r.covering.pair && r.covering.minimal_pair);
        }
    }

    #[test]
    fn csv_and_summary() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let r = pair_localization(&smooth_sine(), &mesh, &RDContext::new(0.1, 1).unwrap()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("target,epsilon,degree,mesh_hash"));
        // interior face: 4 quantities, boundary faces: 1 each, elements: 3 each
        assert_eq!(text.lines().count(), 1 + 4 + 4 + 2 * 3);
        let s = r.summary_json();
        assert_eq!(s["schema"], 1);
        assert!(s.get("faces").is_none());
    }

    #[test]
    fn dirichlet_requires_zero_trace() {
        let mesh = Mesh::rectangle(0.0, 1.0, 0.0, 1.0).unwrap();
        let ctx = RDContext::new(0.1, 1).unwrap();
        assert!(matches!(
            dirichlet_pair_localization(&smooth_sine(), &mesh, &ctx),
            Err(Error::NonzeroTrace(_))
        ));
    }
}
