//! Finitely supported laws of discrete-time processes on `([0,1]^d)^T` and the
//! conversions between their three representations: weighted path lists
//! ([`PathMeasure`]), rooted trees carrying the filtration ([`ScenarioTree`]),
//! and per-time supports with transition matrices ([`MarkovMeasure`]).
//!
//! All types are immutable after construction and safe to share across
//! threads. Construction normalizes total mass to one, merges bit-identical
//! atoms and orders everything lexicographically, so equal inputs produce
//! bit-equal values regardless of input order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tolerance for probability-vector validation.
pub const MASS_TOL: f64 = 1e-12;

/// State dimension `d` and number of time steps `T` of a process law.
///
/// `T = 1` is accepted; every operation that meaningfully degrades to plain
/// one-step optimal transport does so.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProcessShape {
    d: usize,
    t: usize,
}

impl ProcessShape {
    pub fn new(d: usize, t: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("d must be at least 1".into()));
        }
        if t == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        Ok(Self { d, t })
    }

    /// State dimension `d`.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of time steps `T`.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Total coordinate count `d * T` of a path.
    pub fn coords(&self) -> usize {
        self.d * self.t
    }
}

/// One trajectory: `T` points in `[0,1]^d`, stored flattened step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    d: usize,
    coords: Vec<f64>,
}

impl Path {
    /// Validates length and the closed range `[0,1]` of every coordinate.
    pub fn new(shape: ProcessShape, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != shape.coords() {
            return Err(Error::PathLength {
                expected: shape.coords(),
                got: coords.len(),
            });
        }
        for (i, &c) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::CoordinateOutOfRange {
                    step: i / shape.d + 1,
                    dim: i % shape.d + 1,
                    value: c,
                });
            }
        }
        Ok(Self { d: shape.d, coords })
    }

    /// Flattened coordinates, step-major.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The point at step `t` (1-based).
    pub fn step(&self, t: usize) -> &[f64] {
        &self.coords[(t - 1) * self.d..t * self.d]
    }

    /// The first `t` steps, flattened.
    pub fn prefix(&self, t: usize) -> &[f64] {
        &self.coords[..t * self.d]
    }

    pub fn steps(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.d)
    }
}

/// Lexicographic order on coordinate slices; total because inputs are
/// validated to be NaN-free.
pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        let c = x.total_cmp(y);
        if c != core::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// A finitely supported probability on `([0,1]^d)^T` as a weighted path list.
///
/// Invariants after construction: weights are positive and sum to one within
/// [`MASS_TOL`], no two atoms share a bit-identical path, and atoms are in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    shape: ProcessShape,
    atoms: Vec<(Path, f64)>,
}

impl PathMeasure {
    /// Builds a measure from raw atoms: validates paths, drops zero weights,
    /// merges duplicates and normalizes the total mass to one.
    ///
    /// Note that prefix grouping downstream uses bit-exact equality of
    /// coordinates; inputs with nearly-equal prefixes are the caller's
    /// responsibility.
    pub fn new(shape: ProcessShape, atoms: Vec<(Path, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyAtoms);
        }
        let mut kept: Vec<(Path, f64)> = Vec::with_capacity(atoms.len());
        let mut total = 0.0;
        for (path, w) in atoms {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight(w));
            }
            if path.coords.len() != shape.coords() {
                return Err(Error::PathLength {
                    expected: shape.coords(),
                    got: path.coords.len(),
                });
            }
            if w > 0.0 {
                total += w;
                kept.push((path, w));
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        kept.sort_by(|a, b| lex_cmp(&a.0.coords, &b.0.coords));
        let mut merged: Vec<(Path, f64)> = Vec::with_capacity(kept.len());
        for (path, w) in kept {
            match merged.last_mut() {
                Some((prev, pw)) if prev.coords == path.coords => *pw += w,
                _ => merged.push((path, w)),
            }
        }
        // Normalization is idempotent: a total already at one (within the
        // tolerance) is left untouched, which keeps representation
        // round-trips exact at the bit level.
        if (total - 1.0).abs() > MASS_TOL {
            for (_, w) in merged.iter_mut() {
                *w /= total;
            }
        }
        Ok(Self { shape, atoms: merged })
    }

    /// Convenience constructor from flattened coordinate rows.
    pub fn from_rows(shape: ProcessShape, rows: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let atoms = rows
            .into_iter()
            .map(|(coords, w)| Ok((Path::new(shape, coords)?, w)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(shape, atoms)
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    pub fn atoms(&self) -> &[(Path, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// Groups atoms by shared length-`t` bit-identical prefixes and encodes the
    /// disintegration as a rooted tree. Exact inverse of
    /// [`ScenarioTree::to_path_measure`].
    pub fn to_scenario_tree(&self) -> ScenarioTree {
        ScenarioTree::from_path_measure(self)
    }
}

/// Internal tree node. `mass` is the absolute prefix mass, so leaf masses are
/// the atom weights unchanged and round-trips through the tree are bit-exact.
#[derive(Debug, Clone)]
struct Node {
    /// Offset into the point arena; the root stores no point.
    point_off: usize,
    depth: usize,
    mass: f64,
    parent: usize,
    children: Vec<usize>,
}

/// A depth-`T` rooted tree encoding a [`PathMeasure`] through its filtration.
///
/// Paths sharing a bit-identical length-`t` prefix share the depth-`t` node;
/// edge weights are conditional probabilities (prefix-mass ratios). All leaves
/// sit at depth `T`, children are in lexicographic order of their points, and
/// zero-mass branches do not exist.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    shape: ProcessShape,
    nodes: Vec<Node>,
    points: Vec<f64>,
    levels: Vec<Vec<usize>>,
}

impl ScenarioTree {
    pub fn from_path_measure(m: &PathMeasure) -> Self {
        let shape = m.shape();
        let mut tree = Self {
            shape,
            nodes: vec![Node {
                point_off: usize::MAX,
                depth: 0,
                mass: m.total_mass(),
                parent: usize::MAX,
                children: Vec::new(),
            }],
            points: Vec::new(),
            levels: Vec::new(),
        };
        // Atoms are sorted, so each group of equal prefixes is contiguous.
        tree.split(m.atoms(), 0, 0);
        tree.rebuild_levels();
        tree
    }

    fn split(&mut self, atoms: &[(Path, f64)], parent: usize, t: usize) {
        if t == self.shape.t() {
            return;
        }
        let mut start = 0;
        while start < atoms.len() {
            let key = atoms[start].0.step(t + 1);
            let mut end = start + 1;
            while end < atoms.len() && atoms[end].0.step(t + 1) == key {
                end += 1;
            }
            let group = &atoms[start..end];
            let mass: f64 = group.iter().map(|(_, w)| w).sum();
            let point_off = self.points.len();
            self.points.extend_from_slice(key);
            let id = self.nodes.len();
            self.nodes.push(Node {
                point_off,
                depth: t + 1,
                mass,
                parent,
                children: Vec::new(),
            });
            self.nodes[parent].children.push(id);
            self.split(group, id, t + 1);
            start = end;
        }
    }

    fn rebuild_levels(&mut self) {
        let mut levels = vec![Vec::new(); self.shape.t() + 1];
        for (id, node) in self.nodes.iter().enumerate() {
            levels[node.depth].push(id);
        }
        self.levels = levels;
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self, id: usize) -> usize {
        self.nodes[id].depth
    }

    /// Absolute probability of reaching node `id`.
    pub fn mass(&self, id: usize) -> f64 {
        self.nodes[id].mass
    }

    /// The point `x_t` attached to a non-root node.
    pub fn point(&self, id: usize) -> &[f64] {
        let off = self.nodes[id].point_off;
        &self.points[off..off + self.shape.d()]
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        (id != 0).then(|| self.nodes[id].parent)
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.nodes[id].children
    }

    /// Conditional probability of `child` given its parent.
    pub fn conditional(&self, child: usize) -> f64 {
        let parent = self.nodes[child].parent;
        self.nodes[child].mass / self.nodes[parent].mass
    }

    /// Node ids at each depth `0..=T`, in construction (lexicographic) order.
    pub fn level(&self, depth: usize) -> &[usize] {
        &self.levels[depth]
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[self.shape.t()].len()
    }

    /// Flattened root-to-node prefix of `id`.
    pub fn prefix(&self, id: usize) -> Vec<f64> {
        let mut rev = Vec::with_capacity(self.nodes[id].depth);
        let mut cur = id;
        while cur != 0 {
            rev.push(cur);
            cur = self.nodes[cur].parent;
        }
        let mut coords = Vec::with_capacity(rev.len() * self.shape.d());
        for &n in rev.iter().rev() {
            coords.extend_from_slice(self.point(n));
        }
        coords
    }

    /// Enumerates root-to-leaf paths with their masses; exact inverse of
    /// [`PathMeasure::to_scenario_tree`] because leaf masses are the atom
    /// weights themselves.
    pub fn to_path_measure(&self) -> PathMeasure {
        let mut atoms = Vec::with_capacity(self.leaf_count());
        for &leaf in self.level(self.shape.t()) {
            let coords = self.prefix(leaf);
            atoms.push((
                Path {
                    d: self.shape.d(),
                    coords,
                },
                self.nodes[leaf].mass,
            ));
        }
        PathMeasure::new(self.shape, atoms)
            .expect("a scenario tree always carries positive total mass")
    }
}

/// A Markov law: per-time supports, an initial distribution and row-stochastic
/// transition matrices. Substrate for the Markov estimator and the
/// state-pair dynamic program.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMeasure {
    shape: ProcessShape,
    /// `supports[t]` holds the time-`t+1` support, flattened (`n_t * d`).
    supports: Vec<Vec<f64>>,
    initial: Vec<f64>,
    /// `transitions[t]` is row-major `n_t x n_{t+1}`.
    transitions: Vec<Vec<f64>>,
}

impl MarkovMeasure {
    /// Validates dimensions, coordinate ranges, distinct per-time support
    /// points, and that `initial` and every transition row sum to one within
    /// [`MASS_TOL`]. Supports must be in lexicographic order.
    pub fn new(
        shape: ProcessShape,
        supports: Vec<Vec<f64>>,
        initial: Vec<f64>,
        transitions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = shape.d();
        if supports.len() != shape.t() {
            return Err(Error::DimensionMismatch(format!(
                "{} supports for T = {}",
                supports.len(),
                shape.t()
            )));
        }
        if transitions.len() + 1 != shape.t() && shape.t() > 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} transition matrices for T = {}",
                transitions.len(),
                shape.t()
            )));
        }
        if shape.t() == 1 && !transitions.is_empty() {
            return Err(Error::DimensionMismatch(
                "T = 1 admits no transitions".into(),
            ));
        }
        let mut sizes = Vec::with_capacity(shape.t());
        for (t, sup) in supports.iter().enumerate() {
            if sup.is_empty() || sup.len() % d != 0 {
                return Err(Error::DimensionMismatch(format!(
                    "support at t = {} has {} coordinates, not a positive multiple of d = {}",
                    t + 1,
                    sup.len(),
                    d
                )));
            }
            for (i, &c) in sup.iter().enumerate() {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::CoordinateOutOfRange {
                        step: t + 1,
                        dim: i % d + 1,
                        value: c,
                    });
                }
            }
            let n = sup.len() / d;
            for i in 1..n {
                if lex_cmp(&sup[(i - 1) * d..i * d], &sup[i * d..(i + 1) * d])
                    != core::cmp::Ordering::Less
                {
                    return Err(Error::InvalidParameter(format!(
                        "support at t = {} must be strictly increasing lexicographically",
                        t + 1
                    )));
                }
            }
            sizes.push(n);
        }
        check_prob_vector(&initial, sizes[0])?;
        for (t, matrix) in transitions.iter().enumerate() {
            if matrix.len() != sizes[t] * sizes[t + 1] {
                return Err(Error::DimensionMismatch(format!(
                    "transition {} has {} entries, expected {}x{}",
                    t + 1,
                    matrix.len(),
                    sizes[t],
                    sizes[t + 1]
                )));
            }
            for row in 0..sizes[t] {
                check_prob_vector(&matrix[row * sizes[t + 1]..(row + 1) * sizes[t + 1]], sizes[t + 1])?;
            }
        }
        Ok(Self {
            shape,
            supports,
            initial,
            transitions,
        })
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    /// Number of support points at step `t` (1-based).
    pub fn support_len(&self, t: usize) -> usize {
        self.supports[t - 1].len() / self.shape.d()
    }

    /// The `i`-th support point at step `t` (1-based).
    pub fn support_point(&self, t: usize, i: usize) -> &[f64] {
        let d = self.shape.d();
        &self.supports[t - 1][i * d..(i + 1) * d]
    }

    pub fn supports(&self) -> &[Vec<f64>] {
        &self.supports
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    /// Row of the step-`t` transition matrix for source state `i` (1-based `t`,
    /// `t < T`).
    pub fn transition_row(&self, t: usize, i: usize) -> &[f64] {
        let cols = self.support_len(t + 1);
        &self.transitions[t - 1][i * cols..(i + 1) * cols]
    }

    /// Expands into a [`ScenarioTree`] whose kernels depend only on the current
    /// state. Zero-probability branches are pruned, so the leaf count is the
    /// product of reachable support sizes along positive-probability paths.
    pub fn to_tree(&self) -> ScenarioTree {
        let mut nodes = vec![Node {
            point_off: usize::MAX,
            depth: 0,
            mass: 1.0,
            parent: usize::MAX,
            children: Vec::new(),
        }];
        let mut points = Vec::new();
        // frontier: (node id, state index at current depth)
        let mut frontier: Vec<(usize, usize)> = Vec::new();
        for (i, &w) in self.initial.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let id = nodes.len();
            let point_off = points.len();
            points.extend_from_slice(self.support_point(1, i));
            nodes.push(Node {
                point_off,
                depth: 1,
                mass: w,
                parent: 0,
                children: Vec::new(),
            });
            nodes[0].children.push(id);
            frontier.push((id, i));
        }
        for t in 1..self.shape.t() {
            let mut next = Vec::new();
            for &(node, state) in &frontier {
                let row = self.transition_row(t, state);
                let mass = nodes[node].mass;
                for (j, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let id = nodes.len();
                    let point_off = points.len();
                    points.extend_from_slice(self.support_point(t + 1, j));
                    nodes.push(Node {
                        point_off,
                        depth: t + 1,
                        mass: mass * p,
                        parent: node,
                        children: Vec::new(),
                    });
                    nodes[node].children.push(id);
                    next.push((id, j));
                }
            }
            frontier = next;
        }
        let mut tree = ScenarioTree {
            shape: self.shape,
            nodes,
            points,
            levels: Vec::new(),
        };
        tree.rebuild_levels();
        tree
    }
}

fn check_prob_vector(v: &[f64], expected_len: usize) -> Result<()> {
    if v.len() != expected_len {
        return Err(Error::DimensionMismatch(format!(
            "probability vector of length {}, expected {}",
            v.len(),
            expected_len
        )));
    }
    let mut sum = 0.0;
    for &w in v {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NegativeWeight(w));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > MASS_TOL {
        return Err(Error::NotNormalized(sum));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: usize, t: usize) -> ProcessShape {
        ProcessShape::new(d, t).unwrap()
    }

    fn measure(d: usize, t: usize, rows: &[(&[f64], f64)]) -> PathMeasure {
        PathMeasure::from_rows(
            shape(d, t),
            rows.iter().map(|(c, w)| (c.to_vec(), *w)).collect(),
        )
        .unwrap()
    }

    /// The classic two-atom pair, given as an unnormalized Dirac sum that
    /// construction must normalize.
    fn figure_one_mu() -> PathMeasure {
        measure(1, 2, &[(&[0.5, 1.0], 1.0), (&[0.5, 0.0], 1.0)])
    }

    #[test]
    fn normalizes_unnormalized_dirac_sum() {
        let m = figure_one_mu();
        assert_eq!(m.len(), 2);
        for (_, w) in m.atoms() {
            assert_eq!(*w, 0.5);
        }
        assert!((m.total_mass() - 1.0).abs() < MASS_TOL);
    }

    #[test]
    fn single_atom_any_weight_normalizes_to_one() {
        let m = measure(1, 2, &[(&[0.25, 0.75], 7.0)]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].1, 1.0);
    }

    #[test]
    fn duplicate_paths_merge() {
        let m = measure(1, 2, &[(&[0.25, 0.75], 0.3), (&[0.25, 0.75], 0.7)]);
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].1, 1.0);
    }

    #[test]
    fn atom_order_is_input_independent() {
        let a = measure(1, 2, &[(&[0.5, 1.0], 0.5), (&[0.1, 0.2], 0.5)]);
        let b = measure(1, 2, &[(&[0.1, 0.2], 0.5), (&[0.5, 1.0], 0.5)]);
        assert_eq!(a, b);
        assert_eq!(a.atoms()[0].0.coords(), &[0.1, 0.2]);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            PathMeasure::from_rows(shape(1, 2), Vec::new()),
            Err(Error::EmptyAtoms)
        );
        assert!(matches!(
            PathMeasure::from_rows(shape(1, 2), vec![(vec![0.5, 1.5], 1.0)]),
            Err(Error::CoordinateOutOfRange { .. })
        ));
        assert!(matches!(
            PathMeasure::from_rows(shape(1, 2), vec![(vec![0.5], 1.0)]),
            Err(Error::PathLength { .. })
        ));
        assert_eq!(
            PathMeasure::from_rows(shape(1, 2), vec![(vec![0.5, 1.0], 0.0)]),
            Err(Error::ZeroMass)
        );
        assert!(matches!(
            PathMeasure::from_rows(shape(1, 2), vec![(vec![0.5, 1.0], -0.1)]),
            Err(Error::NegativeWeight(_))
        ));
    }

    #[test]
    fn figure_one_mu_tree_shares_the_first_step() {
        let tree = figure_one_mu().to_scenario_tree();
        let roots = tree.children(tree.root());
        assert_eq!(roots.len(), 1);
        assert_eq!(tree.point(roots[0]), &[0.5]);
        let kids = tree.children(roots[0]);
        assert_eq!(kids.len(), 2);
        assert_eq!(tree.conditional(kids[0]), 0.5);
        assert_eq!(tree.conditional(kids[1]), 0.5);
        assert_eq!(tree.point(kids[0]), &[0.0]);
        assert_eq!(tree.point(kids[1]), &[1.0]);
    }

    #[test]
    fn figure_one_nu_tree_splits_at_the_first_step() {
        let eps = 0.1;
        let nu = measure(1, 2, &[(&[0.5 + eps, 1.0], 1.0), (&[0.5 - eps, 0.0], 1.0)]);
        let tree = nu.to_scenario_tree();
        let roots = tree.children(tree.root());
        assert_eq!(roots.len(), 2);
        for &r in roots {
            assert_eq!(tree.children(r).len(), 1);
        }
    }

    #[test]
    fn one_atom_measure_yields_a_chain() {
        let m = measure(2, 3, &[(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 3.0)]);
        let tree = m.to_scenario_tree();
        assert_eq!(tree.node_count(), 4);
        for depth in 0..3 {
            let level = tree.level(depth);
            assert_eq!(level.len(), 1);
            assert_eq!(tree.children(level[0]).len(), 1);
            if depth > 0 {
                assert_eq!(tree.conditional(level[0]), 1.0);
            }
        }
    }

    #[test]
    fn tree_round_trip_is_exact() {
        let m = measure(
            1,
            3,
            &[
                (&[0.5, 1.0, 0.25], 0.125),
                (&[0.5, 1.0, 0.75], 0.25),
                (&[0.5, 0.0, 0.25], 0.5),
                (&[0.25, 0.0, 0.25], 0.125),
            ],
        );
        let back = m.to_scenario_tree().to_path_measure();
        assert_eq!(m, back);
    }

    #[test]
    fn conditional_probabilities_sum_to_one() {
        let m = measure(
            1,
            2,
            &[(&[0.5, 1.0], 0.2), (&[0.5, 0.0], 0.3), (&[0.25, 1.0], 0.5)],
        );
        let tree = m.to_scenario_tree();
        for id in 0..tree.node_count() {
            if !tree.children(id).is_empty() {
                let sum: f64 = tree.children(id).iter().map(|&c| tree.conditional(c)).sum();
                assert!((sum - 1.0).abs() < MASS_TOL);
            }
        }
    }

    fn two_state_chain(t: usize, initial: [f64; 2], rows: [[f64; 2]; 2]) -> MarkovMeasure {
        let flat_rows: Vec<f64> = rows.iter().flatten().copied().collect();
        MarkovMeasure::new(
            shape(1, t),
            vec![vec![0.25, 0.75]; t],
            initial.to_vec(),
            vec![flat_rows; t - 1],
        )
        .unwrap()
    }

    #[test]
    fn iid_chain_expands_to_identical_kernels() {
        let m = two_state_chain(2, [0.3, 0.7], [[0.3, 0.7], [0.3, 0.7]]);
        let tree = m.to_tree();
        let roots = tree.children(tree.root());
        assert_eq!(roots.len(), 2);
        for &r in roots {
            let kids = tree.children(r);
            assert_eq!(kids.len(), 2);
            assert!((tree.conditional(kids[0]) - 0.3).abs() < 1e-15);
            assert!((tree.conditional(kids[1]) - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_cycle_expands_to_disjoint_chains() {
        let m = two_state_chain(3, [1.0, 0.0], [[0.0, 1.0], [1.0, 0.0]]);
        let tree = m.to_tree();
        // One initial state, deterministic transitions: a single chain.
        assert_eq!(tree.leaf_count(), 1);
        let leaf = tree.level(3)[0];
        assert_eq!(tree.mass(leaf), 1.0);
        assert_eq!(tree.prefix(leaf), vec![0.25, 0.75, 0.25]);
    }

    #[test]
    fn generic_two_state_t3_masses_are_products() {
        let initial = [0.4, 0.6];
        let rows = [[0.1, 0.9], [0.8, 0.2]];
        let m = two_state_chain(3, initial, rows);
        let tree = m.to_tree();
        assert_eq!(tree.leaf_count(), 8);
        let atoms = tree.to_path_measure();
        // Direct product computation over all 2x2x2 index paths.
        let states = [0.25, 0.75];
        let mut expected: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    expected.push((
                        vec![states[i], states[j], states[k]],
                        initial[i] * rows[i][j] * rows[j][k],
                    ));
                }
            }
        }
        expected.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        assert_eq!(atoms.len(), expected.len());
        for ((path, w), (coords, mass)) in atoms.atoms().iter().zip(expected.iter()) {
            assert_eq!(path.coords(), &coords[..]);
            assert!((w - mass).abs() < 1e-15, "weight {w} vs product {mass}");
        }
    }

    #[test]
    fn zero_probability_branches_are_pruned() {
        let m = two_state_chain(2, [1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]]);
        let tree = m.to_tree();
        assert_eq!(tree.children(tree.root()).len(), 1);
        assert_eq!(tree.leaf_count(), 2);
        // Expansion drops the zero-mass branch, so the path measure has no
        // zero-weight atoms.
        assert_eq!(tree.to_path_measure().len(), 2);
    }

    #[test]
    fn markov_validation_errors() {
        let s = shape(1, 2);
        // transition row does not sum to one
        assert!(matches!(
            MarkovMeasure::new(
                s,
                vec![vec![0.25, 0.75], vec![0.25, 0.75]],
                vec![0.5, 0.5],
                vec![vec![0.5, 0.4, 0.5, 0.5]],
            ),
            Err(Error::NotNormalized(_))
        ));
        // support dimension mismatch with shape
        assert!(matches!(
            MarkovMeasure::new(
                shape(2, 2),
                vec![vec![0.25, 0.75, 0.5], vec![0.25, 0.75, 0.1, 0.2]],
                vec![1.0],
                vec![vec![1.0]],
            ),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn markov_tree_round_trip_matches_direct_products() {
        // Random-ish 3-state, T = 4 instance, checked against direct
        // multiplication.
        let sup = vec![vec![0.1, 0.5, 0.9]; 4];
        let initial = vec![0.2, 0.3, 0.5];
        let p = vec![
            0.1, 0.2, 0.7, //
            0.4, 0.6, 0.0, //
            0.3, 0.3, 0.4,
        ];
        let m = MarkovMeasure::new(shape(1, 4), sup, initial.clone(), vec![p.clone(); 3]).unwrap();
        let pm = m.to_tree().to_path_measure();
        let states = [0.1, 0.5, 0.9];
        let mut total = 0.0;
        for (path, w) in pm.atoms() {
            let idx: Vec<usize> = path
                .coords()
                .iter()
                .map(|c| states.iter().position(|s| s == c).unwrap())
                .collect();
            let expected = initial[idx[0]]
                * p[idx[0] * 3 + idx[1]]
                * p[idx[1] * 3 + idx[2]]
                * p[idx[2] * 3 + idx[3]];
            assert!((w - expected).abs() < 1e-15);
            total += w;
        }
        assert!((total - 1.0).abs() < MASS_TOL);
    }
}
