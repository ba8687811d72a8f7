//! Greedy tree approximation driven by the minimal-pair error functional.
//!
//! Each leaf carries a modified error `q`: `q = e` on roots and
//! `q(K') = e(K') q(K) / (e(K') + q(K))` for a child `K'` of `K` (0 when
//! both vanish). The leaf with the largest `q` (lowest id on ties) is
//! bisected with conforming closure until the budget is reached or all
//! `q` vanish. Closure-created elements get the same update from their
//! own parents.
//!
//! `e(K)` depends only on `K` and the root tags, so it is cached by the
//! geometry of `K`. Elements that are bisected again within the closure
//! of the same step are evaluated on the coarsest conforming mesh that
//! contains them.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::approx::RDContext;
use crate::error::{Error, Result};
use crate::localization::Localizer;
use crate::mesh::{ElementId, Mesh};
use crate::target::TargetFunction;

/// Largest budget accepted by the exhaustive enumeration.
pub const MAX_EXHAUSTIVE_BUDGET: usize = 16;

type GeometryKey = [(u64, u64); 3];

#[derive(Clone, Debug, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub elements: usize,
    /// `E(T)`
    pub functional: f64,
    pub global_error: Option<f64>,
    pub selected: Option<usize>,
}

/// One bisection performed during a run, with `e` of the parent and the sum
/// of `e` over its two children.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Subdivision {
    pub parent: usize,
    pub parent_e: f64,
    pub children_e: f64,
}

/// Evaluates and caches `e(K)` for one target and context.
pub struct ErrorFunctional {
    pub localizer: Localizer,
    pub ctx: RDContext,
    cache: HashMap<GeometryKey, f64>,
    pub evaluations: usize,
    /// values below this are roundoff and count as 0
    floor: f64,
}

impl ErrorFunctional {
    /// `reference` sets the roundoff floor: `1e-24 |||u|||^2` over its leaves.
    pub fn new(u: &TargetFunction, ctx: &RDContext, reference: &Mesh) -> Result<Self> {
        let localizer = Localizer::new(u, ctx.degree)?;
        let norm_sq: f64 = localizer
            .approx
            .leaf_samples(reference)?
            .iter()
            .map(|s| s.norm_sq(ctx.epsilon))
            .sum();
        Ok(ErrorFunctional {
            localizer,
            ctx: *ctx,
            cache: HashMap::new(),
            evaluations: 0,
            floor: 1e-24 * norm_sq,
        })
    }

    /// `e` of a master-tree node of `mesh` (leaf or not).
    pub fn eval(&mut self, mesh: &Mesh, k: ElementId) -> Result<f64> {
        let key = mesh.geometry_key(k);
        if let Some(&e) = self.cache.get(&key) {
            return Ok(e);
        }
        let e = if mesh.is_leaf(k) {
            self.localizer.error_functional(mesh, k, &self.ctx)?
        } else {
            let (m, id) = coarsest_mesh_containing(mesh, k)?;
            self.localizer.error_functional(&m, id, &self.ctx)?
        };
        let e = if e <= self.floor { 0.0 } else { e };
        self.evaluations += 1;
        self.cache.insert(key, e);
        Ok(e)
    }

    /// `E(T)` over the leaves of `mesh`.
    pub fn total(&mut self, mesh: &Mesh) -> Result<f64> {
        let mut sum = 0.0;
        for &k in mesh.leaves() {
            sum += self.eval(mesh, k)?;
        }
        Ok(sum)
    }
}

/// The coarsest conforming refinement of the root mesh containing node `k`
/// of `mesh` as a leaf, and the id of that leaf in it.
fn coarsest_mesh_containing(mesh: &Mesh, k: ElementId) -> Result<(Mesh, ElementId)> {
    let mut chain = Vec::new();
    let mut cur = mesh.element(k)?.parent;
    while let Some(p) = cur {
        chain.push(p);
        cur = mesh.nodes()[p.0].parent;
    }
    chain.reverse();
    let mut m = mesh.root_mesh();
    for a in chain {
        let key = mesh.geometry_key(a);
        if let Some(&leaf) = m.leaves().iter().find(|&&l| m.geometry_key(l) == key) {
            m.bisect_in_place(leaf)?;
        }
    }
    let key = mesh.geometry_key(k);
    let id = m
        .leaves()
        .iter()
        .copied()
        .find(|&l| m.geometry_key(l) == key)
        .ok_or_else(|| {
            Error::InvalidMesh(format!("element {k} not reachable from the root mesh"))
        })?;
    Ok((m, id))
}

/// State of the greedy loop.
pub struct AdaptiveState {
    pub mesh: Mesh,
    pub functional: ErrorFunctional,
    pub q: HashMap<ElementId, f64>,
    pub budget: usize,
    pub subdivisions: Vec<Subdivision>,
}

impl AdaptiveState {
    pub fn new(u: &TargetFunction, root: &Mesh, ctx: &RDContext, budget: usize) -> Result<Self> {
        if budget < root.num_elements() {
            return Err(Error::BudgetTooSmall {
                budget,
                root: root.num_elements(),
            });
        }
        let mut functional = ErrorFunctional::new(u, ctx, root)?;
        let mut q = HashMap::new();
        for &k in root.leaves() {
            q.insert(k, functional.eval(root, k)?);
        }
        Ok(AdaptiveState {
            mesh: root.clone(),
            functional,
            q,
            budget,
            subdivisions: Vec::new(),
        })
    }

    /// Leaf with the largest modified error, lowest id on ties.
    pub fn select(&self) -> Option<(ElementId, f64)> {
        let mut best: Option<(ElementId, f64)> = None;
        for &k in self.mesh.leaves() {
            let v = self.q[&k];
            best = match best {
                Some((b, bv)) if bv > v || (bv == v && b < k) => Some((b, bv)),
                _ => Some((k, v)),
            };
        }
        best
    }

    /// Bisect `k` with closure and update the modified errors.
    pub fn refine(&mut self, k: ElementId) -> Result<()> {
        let created = self.mesh.bisect_in_place(k)?;
        let mut parents = Vec::new();
        for c in created {
            let parent = self.mesh.nodes()[c.0]
                .parent
                .expect("created nodes have parents");
            let e = self.functional.eval(&self.mesh, c)?;
            let qp = self.q[&parent];
            let q = if e + qp == 0.0 {
                0.0
            } else {
                e * qp / (e + qp)
            };
            self.q.insert(c, q);
            if !parents.contains(&parent) {
                parents.push(parent);
            }
        }
        for p in parents {
            let [c1, c2] = self.mesh.nodes()[p.0].children.expect("bisected");
            let parent_e = self.functional.eval(&self.mesh, p)?;
            let children_e =
                self.functional.eval(&self.mesh, c1)? + self.functional.eval(&self.mesh, c2)?;
            self.subdivisions.push(Subdivision {
                parent: p.0,
                parent_e,
                children_e,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TreeResult {
    pub mesh: Mesh,
    pub trace: Vec<TraceStep>,
    pub functional: f64,
    pub evaluations: usize,
    pub subdivisions: Vec<Subdivision>,
}

impl TreeResult {
    /// `E` of the output for a smaller budget: greedy runs are nested, so it
    /// is the first trace step with at least `budget` elements.
    pub fn functional_at_budget(&self, budget: usize) -> f64 {
        self.trace
            .iter()
            .find(|t| t.elements >= budget)
            .unwrap_or_else(|| self.trace.last().unwrap())
            .functional
    }

    /// Subdivisions violating `sum e(children) <= 4 e(parent)` (with roundoff slack).
    pub fn subadditivity_violations(&self) -> Vec<Subdivision> {
        self.subdivisions
            .iter()
            .copied()
            .filter(|s| s.children_e > 4.0 * s.parent_e * (1.0 + 1e-9) + 1e-15)
            .collect()
    }
}

/// Run the greedy loop until `#leaves >= budget` or all modified errors vanish.
/// With `trace_global` the global best error is recorded at every step.
pub fn tree_approximate(
    u: &TargetFunction,
    root: &Mesh,
    ctx: &RDContext,
    budget: usize,
    trace_global: bool,
) -> Result<TreeResult> {
    let mut state = AdaptiveState::new(u, root, ctx, budget)?;
    let mut trace = Vec::new();
    let mut step = 0;
    loop {
        let functional = state.functional.total(&state.mesh)?;
        let global_error = if trace_global {
            Some(
                state
                    .functional
                    .localizer
                    .approx
                    .global_best(&state.mesh, ctx)?
                    .error(),
            )
        } else {
            None
        };
        let selection = if state.mesh.num_elements() >= budget {
            None
        } else {
            state.select()
        };
        let selected = selection.filter(|&(_, q)| q > 0.0).map(|(k, _)| k);
        trace.push(TraceStep {
            step,
            elements: state.mesh.num_elements(),
            functional,
            global_error,
            selected: selected.map(|k| k.0),
        });
        let Some(k) = selected else { break };
        state.refine(k)?;
        step += 1;
    }
    let functional = trace.last().map_or(0.0, |t| t.functional);
    Ok(TreeResult {
        mesh: state.mesh,
        trace,
        functional,
        evaluations: state.functional.evaluations,
        subdivisions: state.subdivisions,
    })
}

/// All conforming refinements of `root` with at most `budget` elements, in
/// breadth-first order of single-leaf bisections.
pub fn enumerate_meshes(root: &Mesh, budget: usize) -> Result<Vec<Mesh>> {
    if budget > MAX_EXHAUSTIVE_BUDGET {
        return Err(Error::BudgetTooLarge {
            budget,
            max: MAX_EXHAUSTIVE_BUDGET,
        });
    }
    if budget < root.num_elements() {
        return Err(Error::BudgetTooSmall {
            budget,
            root: root.num_elements(),
        });
    }
    let mut seen = HashSet::new();
    seen.insert(root.leaf_set_key());
    let mut queue = VecDeque::from([root.clone()]);
    let mut out = Vec::new();
    while let Some(m) = queue.pop_front() {
        for &k in m.leaves() {
            let next = m.bisect_conforming(k)?;
            if next.num_elements() <= budget && seen.insert(next.leaf_set_key()) {
                queue.push_back(next);
            }
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ExhaustiveResult {
    pub mesh: Mesh,
    pub functional: f64,
    pub enumerated: usize,
}

/// Minimizer of `E` over all conforming refinements with at most `budget` elements.
pub fn exhaustive_best_tree(
    u: &TargetFunction,
    root: &Mesh,
    ctx: &RDContext,
    budget: usize,
) -> Result<ExhaustiveResult> {
    Ok(exhaustive_best_by_budget(u, root, ctx, budget)?
        .pop()
        .expect("budget >= root size"))
}

/// Minimizers of `E` for every budget from `#root` to `max_budget`, from a
/// single enumeration.
pub fn exhaustive_best_by_budget(
    u: &TargetFunction,
    root: &Mesh,
    ctx: &RDContext,
    max_budget: usize,
) -> Result<Vec<ExhaustiveResult>> {
    let meshes = enumerate_meshes(root, max_budget)?;
    let mut functional = ErrorFunctional::new(u, ctx, root)?;
    let values: Vec<f64> = meshes
        .iter()
        .map(|m| functional.total(m))
        .collect::<Result<_>>()?;
    let enumerated = meshes.len();
    (root.num_elements()..=max_budget)
        .map(|n| {
            let mut best: Option<usize> = None;
            for (i, m) in meshes.iter().enumerate() {
                if m.num_elements() <= n && best.is_none_or(|b| values[i] < values[b]) {
                    best = Some(i);
                }
            }
            let i = best.expect("root mesh is always enumerated");
            Ok(ExhaustiveResult {
                mesh: meshes[i].clone(),
                functional: values[i],
                enumerated,
            })
        })
        .collect()
}
