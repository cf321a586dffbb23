//! The nested (adapted) Wasserstein distance: backward dynamic programming
//! over scenario-tree node pairs, the Markov reduction over state pairs, a
//! mixed Markov-against-tree pass, bicausality verification of couplings, and
//! an independent linear-programming oracle for two-period instances.

mod lp;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::measures::{MarkovMeasure, Path, PathMeasure, ProcessShape, ScenarioTree};
use crate::transport::{
    self, euclidean, path_distance, solve_transport, CostMatrix, TransportPlan,
};

/// Tolerance for causality factorizations and plan self-checks.
pub const CAUSALITY_TOL: f64 = 1e-9;

/// Largest `|paths(a)| * |paths(b)|` the two-period oracle accepts.
pub const ORACLE_LIMIT: usize = 400;

// ---------------------------------------------------------------------------
// DP value tables
// ---------------------------------------------------------------------------

/// Values `V_t` over the reachable node pairs at one depth.
#[derive(Debug, Clone)]
pub struct DpLevel {
    depth: usize,
    a_nodes: Vec<usize>,
    b_nodes: Vec<usize>,
    /// Dense row-major `|a_nodes| x |b_nodes|`.
    values: Vec<f64>,
}

impl DpLevel {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn a_nodes(&self) -> &[usize] {
        &self.a_nodes
    }

    pub fn b_nodes(&self) -> &[usize] {
        &self.b_nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The map `(node of a at depth t, node of b at depth t) -> V_t`. `V_T` is
/// identically zero and stored implicitly.
#[derive(Debug, Clone)]
pub struct DpValueTable {
    t_len: usize,
    levels: Vec<DpLevel>,
}

impl DpValueTable {
    pub fn levels(&self) -> &[DpLevel] {
        &self.levels
    }

    /// `V_t` at a node pair; `t = T` answers zero for any pair, matching the
    /// terminal condition.
    pub fn get(&self, t: usize, a_node: usize, b_node: usize) -> Option<f64> {
        if t == self.t_len {
            return Some(0.0);
        }
        let level = self.levels.get(t)?;
        let ia = level.a_nodes.binary_search(&a_node).ok()?;
        let ib = level.b_nodes.binary_search(&b_node).ok()?;
        Some(level.values[ia * level.b_nodes.len() + ib])
    }

    /// The root value `V_0`, i.e. the distance.
    pub fn root_value(&self) -> f64 {
        self.levels[0].values[0]
    }
}

// ---------------------------------------------------------------------------
// Couplings of path measures
// ---------------------------------------------------------------------------

/// A coupling between two path measures, given atom-wise.
#[derive(Debug, Clone)]
pub struct PathCoupling {
    shape: ProcessShape,
    entries: Vec<(Path, Path, f64)>,
}

impl PathCoupling {
    pub fn new(shape: ProcessShape, entries: Vec<(Path, Path, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyAtoms);
        }
        let mut total = 0.0;
        for (x, y, m) in &entries {
            if !m.is_finite() || *m < 0.0 {
                return Err(Error::NegativeWeight(*m));
            }
            if x.coords().len() != shape.coords() || y.coords().len() != shape.coords() {
                return Err(Error::PathLength {
                    expected: shape.coords(),
                    got: x.coords().len().max(y.coords().len()),
                });
            }
            total += m;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { shape, entries })
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    pub fn entries(&self) -> &[(Path, Path, f64)] {
        &self.entries
    }

    /// Total cost under the process distance `sum_t |x_t - y_t|`.
    pub fn cost(&self) -> f64 {
        self.entries
            .iter()
            .map(|(x, y, m)| m * path_distance(x, y))
            .sum()
    }

    /// The two marginal path measures.
    pub fn marginals(&self) -> (PathMeasure, PathMeasure) {
        let xs = self
            .entries
            .iter()
            .map(|(x, _, m)| (x.clone(), *m))
            .collect();
        let ys = self
            .entries
            .iter()
            .map(|(_, y, m)| (y.clone(), *m))
            .collect();
        (
            PathMeasure::new(self.shape, xs).expect("coupling carries positive mass"),
            PathMeasure::new(self.shape, ys).expect("coupling carries positive mass"),
        )
    }
}

/// Which conditional-independence requirement to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausalDirection {
    /// Given the x-past, the y-present is independent of the x-future.
    Causal,
    /// Roles of x and y swapped.
    Anticausal,
    /// Both directions.
    Bicausal,
}

/// First violated factorization, reported with the conditioning prefix.
#[derive(Debug, Clone)]
pub struct CausalityWitness {
    /// Direction in which the violation was found.
    pub direction: CausalDirection,
    /// Time index `t` of the violated condition (1-based, `t < T`).
    pub t: usize,
    /// Conditioning prefix `x_{1:t}` (`y_{1:t}` for the anticausal check).
    pub conditioning_prefix: Vec<f64>,
    /// The step value of the other process at time `t`.
    pub other_step: Vec<f64>,
    /// The future `x_{t+1:T}` (`y_{t+1:T}` respectively).
    pub future: Vec<f64>,
    /// `|joint - product|` on the conditional masses.
    pub gap: f64,
}

/// Outcome of [`check_causality`].
#[derive(Debug, Clone)]
pub struct CausalityCheck {
    pub satisfied: bool,
    pub max_gap: f64,
    pub witness: Option<CausalityWitness>,
}

fn bits(coords: &[f64]) -> Vec<u64> {
    coords.iter().map(|c| c.to_bits()).collect()
}

/// Verifies the conditional-independence factorization of a coupling on its
/// finite support, within [`CAUSALITY_TOL`]: for every `t < T` and every
/// positive-mass prefix, the joint conditional law of (other-process step `t`,
/// own future) must factorize.
pub fn check_causality(coupling: &PathCoupling, direction: CausalDirection) -> CausalityCheck {
    match direction {
        CausalDirection::Causal => check_one_way(coupling, false),
        CausalDirection::Anticausal => check_one_way(coupling, true),
        CausalDirection::Bicausal => {
            let fwd = check_one_way(coupling, false);
            if !fwd.satisfied {
                return fwd;
            }
            let bwd = check_one_way(coupling, true);
            CausalityCheck {
                satisfied: bwd.satisfied,
                max_gap: fwd.max_gap.max(bwd.max_gap),
                witness: bwd.witness,
            }
        }
    }
}

fn check_one_way(coupling: &PathCoupling, swapped: bool) -> CausalityCheck {
    let shape = coupling.shape();
    let d = shape.d();
    let mut max_gap = 0.0f64;
    let mut witness = None;
    for t in 1..shape.t() {
        // Group entries by the conditioning prefix x_{1:t}.
        let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
        for (idx, (x, y, _)) in coupling.entries().iter().enumerate() {
            let own = if swapped { y } else { x };
            groups.entry(bits(own.prefix(t))).or_default().push(idx);
        }
        for indices in groups.values() {
            let mut mass = 0.0;
            let mut joint: BTreeMap<(Vec<u64>, Vec<u64>), f64> = BTreeMap::new();
            let mut steps: BTreeMap<Vec<u64>, (f64, Vec<f64>)> = BTreeMap::new();
            let mut futures: BTreeMap<Vec<u64>, (f64, Vec<f64>)> = BTreeMap::new();
            for &idx in indices {
                let (x, y, m) = &coupling.entries()[idx];
                let (own, other) = if swapped { (y, x) } else { (x, y) };
                let step = other.step(t);
                let fut = &own.coords()[t * d..];
                mass += m;
                *joint.entry((bits(step), bits(fut))).or_insert(0.0) += m;
                let s = steps
                    .entry(bits(step))
                    .or_insert_with(|| (0.0, step.to_vec()));
                s.0 += m;
                let f = futures
                    .entry(bits(fut))
                    .or_insert_with(|| (0.0, fut.to_vec()));
                f.0 += m;
            }
            if mass <= 0.0 {
                continue;
            }
            for (step_key, (step_mass, step_val)) in &steps {
                for (fut_key, (fut_mass, fut_val)) in &futures {
                    let joint_mass = joint
                        .get(&(step_key.clone(), fut_key.clone()))
                        .copied()
                        .unwrap_or(0.0);
                    let gap =
                        (joint_mass / mass - (step_mass / mass) * (fut_mass / mass)).abs();
                    if gap > max_gap {
                        max_gap = gap;
                        if gap > CAUSALITY_TOL && witness.is_none() {
                            let any = &coupling.entries()[indices[0]];
                            let own = if swapped { &any.1 } else { &any.0 };
                            witness = Some(CausalityWitness {
                                direction: if swapped {
                                    CausalDirection::Anticausal
                                } else {
                                    CausalDirection::Causal
                                },
                                t,
                                conditioning_prefix: own.prefix(t).to_vec(),
                                other_step: step_val.clone(),
                                future: fut_val.clone(),
                                gap,
                            });
                        }
                    }
                }
            }
        }
    }
    CausalityCheck {
        satisfied: max_gap <= CAUSALITY_TOL,
        max_gap,
        witness,
    }
}

// ---------------------------------------------------------------------------
// Backward dynamic program on tree pairs
// ---------------------------------------------------------------------------

/// Per-level view of each node's children: local indices into the next level,
/// conditional probabilities, and scalar positions when `d = 1`.
struct LevelKernels {
    offsets: Vec<usize>,
    child_ids: Vec<usize>,
    child_local: Vec<usize>,
    probs: Vec<f64>,
    pos: Vec<f64>,
}

impl LevelKernels {
    fn build(tree: &ScenarioTree, depth: usize, local: &[usize]) -> Self {
        let nodes = tree.level(depth);
        let d = tree.shape().d();
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut child_ids = Vec::new();
        let mut child_local = Vec::new();
        let mut probs = Vec::new();
        let mut pos = Vec::new();
        offsets.push(0);
        for &n in nodes {
            for &c in tree.children(n) {
                child_ids.push(c);
                child_local.push(local[c]);
                probs.push(tree.conditional(c));
                if d == 1 {
                    pos.push(tree.point(c)[0]);
                }
            }
            offsets.push(child_ids.len());
        }
        Self {
            offsets,
            child_ids,
            child_local,
            probs,
            pos,
        }
    }

    fn range(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Local index of every node within its depth level.
fn local_index(tree: &ScenarioTree) -> Vec<usize> {
    let mut map = vec![usize::MAX; tree.node_count()];
    for depth in 0..=tree.shape().t() {
        for (k, &id) in tree.level(depth).iter().enumerate() {
            map[id] = k;
        }
    }
    map
}

fn backward(a: &ScenarioTree, b: &ScenarioTree) -> Result<DpValueTable> {
    let shape = a.shape();
    let t_len = shape.t();
    let d = shape.d();
    let la = local_index(a);
    let lb = local_index(b);
    let mut levels: Vec<DpLevel> = Vec::with_capacity(t_len);
    for t in (0..t_len).rev() {
        let a_nodes = a.level(t);
        let b_nodes = b.level(t);
        let nb_next = b.level(t + 1).len();
        let ka = LevelKernels::build(a, t, &la);
        let kb = LevelKernels::build(b, t, &lb);
        let terminal = t + 1 == t_len;
        let deeper: &[f64] = levels.last().map(|l| l.values.as_slice()).unwrap_or(&[]);
        let mut values = vec![0.0f64; a_nodes.len() * b_nodes.len()];
        for ia in 0..a_nodes.len() {
            let ra = ka.range(ia);
            let row_a = (terminal && d == 1)
                .then(|| transport::Kernel1d::from_row(&ka.pos[ra.clone()], &ka.probs[ra.clone()]));
            for ib in 0..b_nodes.len() {
                let rb = kb.range(ib);
                let v = if terminal && d == 1 {
                    let row_a = row_a.as_ref().unwrap();
                    if rb.len() == 1 {
                        row_a.w1_to_dirac(kb.pos[rb.start])
                    } else {
                        transport::w1_monotone_value(
                            &row_a.pos,
                            &row_a.w,
                            &kb.pos[rb.clone()],
                            &kb.probs[rb.clone()],
                        )
                    }
                } else {
                    let cost = CostMatrix::from_fn(ra.len(), rb.len(), |i, j| {
                        let ca = ka.child_ids[ra.start + i];
                        let cb = kb.child_ids[rb.start + j];
                        let mut c = euclidean(a.point(ca), b.point(cb));
                        if !terminal {
                            c += deeper[ka.child_local[ra.start + i] * nb_next
                                + kb.child_local[rb.start + j]];
                        }
                        c
                    });
                    solve_transport(&ka.probs[ra.clone()], &kb.probs[rb.clone()], cost)?.value()
                };
                values[ia * b_nodes.len() + ib] = v;
            }
        }
        levels.push(DpLevel {
            depth: t,
            a_nodes: a_nodes.to_vec(),
            b_nodes: b_nodes.to_vec(),
            values,
        });
    }
    levels.reverse();
    Ok(DpValueTable { t_len, levels })
}

/// Nested distance between two scenario trees: the value and the full DP
/// table, without assembling a plan. This is the memory-lean path used by the
/// experiment sweeps.
pub fn nested_distance_value(a: &ScenarioTree, b: &ScenarioTree) -> Result<(f64, DpValueTable)> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    let table = backward(a, b)?;
    Ok((table.root_value(), table))
}

/// One node-pair coupling of a bicausal plan, with sub-plans attached to each
/// positive-mass child pair.
#[derive(Debug, Clone)]
pub struct BicausalPlan {
    a_node: usize,
    b_node: usize,
    plan: TransportPlan,
    children: Vec<BicausalPlan>,
}

impl BicausalPlan {
    pub fn a_node(&self) -> usize {
        self.a_node
    }

    pub fn b_node(&self) -> usize {
        self.b_node
    }

    /// The coupling over child pairs at this node pair (indices are positions
    /// in the respective children lists).
    pub fn node_plan(&self) -> &TransportPlan {
        &self.plan
    }

    /// Sub-plans aligned with `node_plan().entries()`; empty at depth `T - 1`.
    pub fn children(&self) -> &[BicausalPlan] {
        &self.children
    }

    pub fn value(&self) -> f64 {
        self.plan.value()
    }

    /// Flattens the recursive plan into a coupling on path pairs.
    pub fn flatten(&self, a: &ScenarioTree, b: &ScenarioTree) -> Result<PathCoupling> {
        let shape = a.shape();
        let mut entries = Vec::new();
        let mut xa = Vec::new();
        let mut yb = Vec::new();
        self.walk(a, b, 1.0, &mut xa, &mut yb, &mut entries)?;
        PathCoupling::new(shape, entries)
    }

    fn walk(
        &self,
        a: &ScenarioTree,
        b: &ScenarioTree,
        mass: f64,
        xa: &mut Vec<f64>,
        yb: &mut Vec<f64>,
        out: &mut Vec<(Path, Path, f64)>,
    ) -> Result<()> {
        let shape = a.shape();
        let ca = a.children(self.a_node);
        let cb = b.children(self.b_node);
        for (k, &(i, j, m)) in self.plan.entries().iter().enumerate() {
            let na = ca[i];
            let nb = cb[j];
            xa.extend_from_slice(a.point(na));
            yb.extend_from_slice(b.point(nb));
            if self.children.is_empty() {
                out.push((
                    Path::new(shape, xa.clone())?,
                    Path::new(shape, yb.clone())?,
                    mass * m,
                ));
            } else {
                self.children[k].walk(a, b, mass * m, xa, yb, out)?;
            }
            xa.truncate(xa.len() - shape.d());
            yb.truncate(yb.len() - shape.d());
        }
        Ok(())
    }
}

/// Full nested-distance solution: value, one optimal bicausal plan, its
/// flattening, and the DP value table.
#[derive(Debug, Clone)]
pub struct NestedSolution {
    pub value: f64,
    pub plan: BicausalPlan,
    pub coupling: PathCoupling,
    pub table: DpValueTable,
}

/// Nested (adapted) Wasserstein distance with an optimal bicausal plan.
///
/// After the backward pass the plan is assembled through the reached node
/// pairs and verified: its flattening must reproduce both marginals and pass
/// the bicausality check, and its cost must equal the DP value. These
/// self-checks run on every call.
pub fn nested_distance(a: &ScenarioTree, b: &ScenarioTree) -> Result<NestedSolution> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    let table = backward(a, b)?;
    let la = local_index(a);
    let lb = local_index(b);
    let plan = assemble(a, b, &table, &la, &lb, a.root(), b.root(), 0)?;
    let value = table.root_value();
    let coupling = plan.flatten(a, b)?;

    if (coupling.cost() - value).abs() > CAUSALITY_TOL {
        return Err(Error::Internal("plan cost does not match the DP value"));
    }
    let (ma, mb) = coupling.marginals();
    if !measures_close(&ma, &a.to_path_measure()) || !measures_close(&mb, &b.to_path_measure()) {
        return Err(Error::Internal("plan marginals do not match the inputs"));
    }
    let causality = check_causality(&coupling, CausalDirection::Bicausal);
    if !causality.satisfied {
        return Err(Error::Internal("plan failed the bicausality self-check"));
    }
    Ok(NestedSolution {
        value,
        plan,
        coupling,
        table,
    })
}

fn measures_close(a: &PathMeasure, b: &PathMeasure) -> bool {
    a.len() == b.len()
        && a.atoms().iter().zip(b.atoms()).all(|((pa, wa), (pb, wb))| {
            pa.coords() == pb.coords() && (wa - wb).abs() <= CAUSALITY_TOL
        })
}

fn assemble(
    a: &ScenarioTree,
    b: &ScenarioTree,
    table: &DpValueTable,
    la: &[usize],
    lb: &[usize],
    na: usize,
    nb: usize,
    t: usize,
) -> Result<BicausalPlan> {
    let shape = a.shape();
    let t_len = shape.t();
    let d = shape.d();
    let terminal = t + 1 == t_len;
    let ca = a.children(na);
    let cb = b.children(nb);
    let pa: Vec<f64> = ca.iter().map(|&c| a.conditional(c)).collect();
    let pb: Vec<f64> = cb.iter().map(|&c| b.conditional(c)).collect();
    let plan = if terminal && d == 1 {
        let xs: Vec<f64> = ca.iter().map(|&c| a.point(c)[0]).collect();
        let ys: Vec<f64> = cb.iter().map(|&c| b.point(c)[0]).collect();
        transport::w1_monotone_sorted(&xs, &pa, &ys, &pb)
    } else if terminal {
        let cost = CostMatrix::from_fn(ca.len(), cb.len(), |i, j| {
            euclidean(a.point(ca[i]), b.point(cb[j]))
        });
        solve_transport(&pa, &pb, cost)?
    } else {
        let next = &table.levels[t + 1];
        let nb_next = next.b_nodes.len();
        let cost = CostMatrix::from_fn(ca.len(), cb.len(), |i, j| {
            euclidean(a.point(ca[i]), b.point(cb[j]))
                + next.values[la[ca[i]] * nb_next + lb[cb[j]]]
        });
        solve_transport(&pa, &pb, cost)?
    };
    let children = if terminal {
        Vec::new()
    } else {
        plan.entries()
            .iter()
            .map(|&(i, j, _)| assemble(a, b, table, la, lb, ca[i], cb[j], t + 1))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(BicausalPlan {
        a_node: na,
        b_node: nb,
        plan,
        children,
    })
}

// ---------------------------------------------------------------------------
// Markov dynamic programs
// ---------------------------------------------------------------------------

/// `V_t` over state pairs at one time step.
#[derive(Debug, Clone)]
pub struct MarkovDpLevel {
    /// Time step (1-based).
    pub t: usize,
    pub n_a: usize,
    pub n_b: usize,
    /// Dense row-major `n_a x n_b`.
    pub values: Vec<f64>,
}

/// DP table of the Markov recursion, one level per time step `1..T`.
#[derive(Debug, Clone)]
pub struct MarkovDpTable {
    pub levels: Vec<MarkovDpLevel>,
}

/// Nested distance between two Markov laws via the state-pair recursion; the
/// history dependence of the general DP collapses to the current state.
/// Equals [`nested_distance_value`] on the expanded trees.
pub fn markov_nested_distance(a: &MarkovMeasure, b: &MarkovMeasure) -> Result<(f64, MarkovDpTable)> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    let shape = a.shape();
    let t_len = shape.t();
    let d = shape.d();
    let mut levels: Vec<MarkovDpLevel> = Vec::new();
    // Backward over t = T-1 .. 1; level for time t couples states at time t.
    for t in (1..t_len).rev() {
        let n_a = a.support_len(t);
        let n_b = b.support_len(t);
        let na_next = a.support_len(t + 1);
        let nb_next = b.support_len(t + 1);
        let terminal = t + 1 == t_len;
        let deeper = levels.last();
        let compressed_b: Vec<transport::Kernel1d> = if terminal && d == 1 {
            (0..n_b)
                .map(|j| {
                    transport::Kernel1d::from_row(
                        b.supports()[t].as_slice(),
                        b.transition_row(t, j),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut values = vec![0.0f64; n_a * n_b];
        for i in 0..n_a {
            let row_a = a.transition_row(t, i);
            let packed_a = (terminal && d == 1)
                .then(|| transport::Kernel1d::from_row(a.supports()[t].as_slice(), row_a));
            for j in 0..n_b {
                let row_b = b.transition_row(t, j);
                let v = if terminal && d == 1 {
                    let pa = packed_a.as_ref().unwrap();
                    let pb = &compressed_b[j];
                    transport::w1_monotone_value(&pa.pos, &pa.w, &pb.pos, &pb.w)
                } else {
                    let cost = CostMatrix::from_fn(na_next, nb_next, |ii, jj| {
                        let mut c =
                            euclidean(a.support_point(t + 1, ii), b.support_point(t + 1, jj));
                        if let Some(lvl) = deeper {
                            c += lvl.values[ii * lvl.n_b + jj];
                        }
                        c
                    });
                    solve_transport(row_a, row_b, cost)?.value()
                };
                values[i * n_b + j] = v;
            }
        }
        levels.push(MarkovDpLevel {
            t,
            n_a,
            n_b,
            values,
        });
    }
    // Root coupling of the initial distributions.
    let deeper = levels.last();
    let cost = CostMatrix::from_fn(a.support_len(1), b.support_len(1), |i, j| {
        let mut c = euclidean(a.support_point(1, i), b.support_point(1, j));
        if let Some(lvl) = deeper {
            c += lvl.values[i * lvl.n_b + j];
        }
        c
    });
    let value = if t_len == 1 && d == 1 {
        transport::w1_monotone_value(
            a.supports()[0].as_slice(),
            a.initial(),
            b.supports()[0].as_slice(),
            b.initial(),
        )
    } else {
        solve_transport(a.initial(), b.initial(), cost)?.value()
    };
    levels.reverse();
    Ok((value, MarkovDpTable { levels }))
}

/// Nested distance between a Markov law and a scenario tree, keyed by
/// (state of `a` at `t`, node of `b` at depth `t`). Because the kernels of a
/// Markov law depend only on the current state, this equals
/// [`nested_distance_value`] against the expanded tree while avoiding the
/// exponential expansion of `a`. The distance is symmetric; argument order
/// carries no meaning.
pub fn markov_tree_distance(a: &MarkovMeasure, b: &ScenarioTree) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    let shape = a.shape();
    let t_len = shape.t();
    let d = shape.d();
    let lb = local_index(b);
    let mut deeper: Vec<f64> = Vec::new();
    for t in (1..t_len).rev() {
        let n_a = a.support_len(t);
        let b_nodes = b.level(t);
        let na_next = a.support_len(t + 1);
        let nb_next = b.level(t + 1).len();
        let kb = LevelKernels::build(b, t, &lb);
        let terminal = t + 1 == t_len;
        let mut values = vec![0.0f64; n_a * b_nodes.len()];
        for i in 0..n_a {
            let row_a = a.transition_row(t, i);
            let packed_a = (terminal && d == 1)
                .then(|| transport::Kernel1d::from_row(a.supports()[t].as_slice(), row_a));
            for ib in 0..b_nodes.len() {
                let rb = kb.range(ib);
                let v = if terminal && d == 1 {
                    let pa = packed_a.as_ref().unwrap();
                    if rb.len() == 1 {
                        pa.w1_to_dirac(kb.pos[rb.start])
                    } else {
                        transport::w1_monotone_value(
                            &pa.pos,
                            &pa.w,
                            &kb.pos[rb.clone()],
                            &kb.probs[rb.clone()],
                        )
                    }
                } else {
                    let cost = CostMatrix::from_fn(na_next, rb.len(), |ii, j| {
                        let cb = kb.child_ids[rb.start + j];
                        let mut c = euclidean(a.support_point(t + 1, ii), b.point(cb));
                        if !terminal {
                            c += deeper[ii * nb_next + kb.child_local[rb.start + j]];
                        }
                        c
                    });
                    solve_transport(row_a, &kb.probs[rb.clone()], cost)?.value()
                };
                values[i * b_nodes.len() + ib] = v;
            }
        }
        deeper = values;
    }
    let kb = LevelKernels::build(b, 0, &lb);
    let rb = kb.range(0);
    let nb_first = b.level(1).len();
    if t_len == 1 && d == 1 {
        return Ok(transport::w1_monotone_value(
            a.supports()[0].as_slice(),
            a.initial(),
            &kb.pos[rb.clone()],
            &kb.probs[rb.clone()],
        ));
    }
    let cost = CostMatrix::from_fn(a.support_len(1), rb.len(), |i, j| {
        let cb = kb.child_ids[rb.start + j];
        let mut c = euclidean(a.support_point(1, i), b.point(cb));
        if t_len > 1 {
            c += deeper[i * nb_first + kb.child_local[rb.start + j]];
        }
        c
    });
    Ok(solve_transport(a.initial(), &kb.probs[rb.clone()], cost)?.value())
}

// ---------------------------------------------------------------------------
// Two-period linear-programming oracle
// ---------------------------------------------------------------------------

/// Solves the two-period bicausal transport as one explicit linear program
/// over path-pair couplings: marginal constraints plus the linearized
/// causality constraints (given the marginals, conditional independence at
/// `t = 1` is linear in the coupling). Independent of the dynamic program, it
/// verifies [`nested_distance`] on small instances.
pub fn bicausal_oracle_t2(a: &ScenarioTree, b: &ScenarioTree) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    if a.shape().t() != 2 {
        return Err(Error::BadHorizon {
            expected: 2,
            got: a.shape().t(),
        });
    }
    let na = a.leaf_count();
    let nb = b.leaf_count();
    if na * nb > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            size: na * nb,
            limit: ORACLE_LIMIT,
        });
    }
    let a_leaves = a.level(2);
    let b_leaves = b.level(2);
    let leaf_index_b: BTreeMap<usize, usize> = b_leaves
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, k))
        .collect();
    let leaf_index_a: BTreeMap<usize, usize> = a_leaves
        .iter()
        .enumerate()
        .map(|(k, &id)| (id, k))
        .collect();
    let nvars = na * nb;

    let mut objective = vec![0.0f64; nvars];
    for (k, &ia) in a_leaves.iter().enumerate() {
        let xa = a.prefix(ia);
        let pa = Path::new(a.shape(), xa)?;
        for (l, &ib) in b_leaves.iter().enumerate() {
            let yb = b.prefix(ib);
            let pb = Path::new(b.shape(), yb)?;
            objective[k * nb + l] = path_distance(&pa, &pb);
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    for (k, &ia) in a_leaves.iter().enumerate() {
        let mut row = vec![0.0; nvars];
        for l in 0..nb {
            row[k * nb + l] = 1.0;
        }
        rows.push(row);
        rhs.push(a.mass(ia));
    }
    for (l, &ib) in b_leaves.iter().enumerate() {
        let mut row = vec![0.0; nvars];
        for k in 0..na {
            row[k * nb + l] = 1.0;
        }
        rows.push(row);
        rhs.push(b.mass(ib));
    }
    // Causality: pi(x1, x2, y1) = mu_{x1}(x2) * pi(x1, y1) for every first
    // step x1 of a, successor x2, and first step y1 of b.
    for &ua in a.level(1) {
        for &ka in a.children(ua) {
            let k = leaf_index_a[&ka];
            let cond = a.conditional(ka);
            for &vb in b.level(1) {
                let mut row = vec![0.0; nvars];
                for &lb in b.children(vb) {
                    let l = leaf_index_b[&lb];
                    row[k * nb + l] += 1.0;
                    for &ka2 in a.children(ua) {
                        let k2 = leaf_index_a[&ka2];
                        row[k2 * nb + l] -= cond;
                    }
                }
                rows.push(row);
                rhs.push(0.0);
            }
        }
    }
    // Anticausality: roles swapped.
    for &vb in b.level(1) {
        for &lb in b.children(vb) {
            let l = leaf_index_b[&lb];
            let cond = b.conditional(lb);
            for &ua in a.level(1) {
                let mut row = vec![0.0; nvars];
                for &ka in a.children(ua) {
                    let k = leaf_index_a[&ka];
                    row[k * nb + l] += 1.0;
                    for &lb2 in b.children(vb) {
                        let l2 = leaf_index_b[&lb2];
                        row[k * nb + l2] -= cond;
                    }
                }
                rows.push(row);
                rhs.push(0.0);
            }
        }
    }

    let solution = lp::solve(&lp::LinearProgram {
        objective,
        rows,
        rhs,
    })?;
    Ok(solution.value)
}
