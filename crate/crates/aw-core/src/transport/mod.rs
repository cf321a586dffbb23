//! Exact solvers for discrete optimal transport: general cost-matrix
//! transport through a network simplex, Euclidean Wasserstein-1 between point
//! clouds, the path-cost Wasserstein-1 between process laws, and the
//! one-dimensional quantile closed form used as an independent oracle.

mod simplex;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::measures::{lex_cmp, Path, PathMeasure};

/// Tolerance for the marginal/duality contracts of a returned plan.
pub const PLAN_TOL: f64 = 1e-9;

/// A finitely supported distribution on `R^d` with distinct points in
/// lexicographic order and positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    d: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    /// Builds a distribution from flattened points; duplicates merge, weights
    /// normalize to total mass one.
    pub fn new(d: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if points.len() != weights.len() * d {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} weights in dimension {}",
                points.len(),
                weights.len(),
                d
            )));
        }
        if weights.is_empty() {
            return Err(Error::EmptyAtoms);
        }
        if let Some(&bad) = points.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite coordinate {bad}")));
        }
        let mut total = 0.0;
        let mut order: Vec<usize> = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeWeight(w));
            }
            if w > 0.0 {
                total += w;
                order.push(i);
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroMass);
        }
        order.sort_by(|&a, &b| lex_cmp(&points[a * d..(a + 1) * d], &points[b * d..(b + 1) * d]));
        let mut out_points = Vec::with_capacity(order.len() * d);
        let mut out_weights: Vec<f64> = Vec::with_capacity(order.len());
        for i in order {
            let p = &points[i * d..(i + 1) * d];
            let merged = match out_weights.last_mut() {
                Some(w) if &out_points[out_points.len() - d..] == p => {
                    *w += weights[i];
                    true
                }
                _ => false,
            };
            if !merged {
                out_points.extend_from_slice(p);
                out_weights.push(weights[i]);
            }
        }
        if (total - 1.0).abs() > crate::measures::MASS_TOL {
            for w in out_weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(Self {
            d,
            points: out_points,
            weights: out_weights,
        })
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        let d = point.len();
        Self::new(d, point, alloc::vec![1.0])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Scalar positions; only valid for `d = 1`.
    pub fn positions(&self) -> &[f64] {
        debug_assert_eq!(self.d, 1);
        &self.points
    }
}

/// Dense row-major cost matrix.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} cost entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// A coupling between two weight vectors: sparse entries, total cost, and the
/// dual potentials certifying optimality.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n_source: usize,
    n_target: usize,
    entries: Vec<(usize, usize, f64)>,
    value: f64,
    source_potentials: Vec<f64>,
    target_potentials: Vec<f64>,
}

impl TransportPlan {
    pub fn value(&self) -> f64 {
        self.value
    }

    /// `(source index, target index, mass)` triples with positive mass.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    /// Dual potential of each source atom (`u` in `u_i + v_j <= c_ij`).
    pub fn source_potentials(&self) -> &[f64] {
        &self.source_potentials
    }

    pub fn target_potentials(&self) -> &[f64] {
        &self.target_potentials
    }

    pub fn source_marginals(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.n_source];
        for &(i, _, m) in &self.entries {
            out[i] += m;
        }
        out
    }

    pub fn target_marginals(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.n_target];
        for &(_, j, m) in &self.entries {
            out[j] += m;
        }
        out
    }

    /// Largest violation among the plan contracts: marginal consistency,
    /// `value = sum(mass * cost)`, dual feasibility `u_i + v_j <= c_ij`, and a
    /// zero duality gap. Optimal plans stay below [`PLAN_TOL`].
    pub fn max_violation(
        &self,
        source: &[f64],
        target: &[f64],
        cost: impl Fn(usize, usize) -> f64,
    ) -> f64 {
        let mut worst = 0.0f64;
        let sm = self.source_marginals();
        for (a, b) in sm.iter().zip(source.iter()) {
            worst = worst.max((a - b).abs());
        }
        let tm = self.target_marginals();
        for (a, b) in tm.iter().zip(target.iter()) {
            worst = worst.max((a - b).abs());
        }
        let recomputed: f64 = self.entries.iter().map(|&(i, j, m)| m * cost(i, j)).sum();
        worst = worst.max((recomputed - self.value).abs());
        for i in 0..self.n_source {
            for j in 0..self.n_target {
                let slack = cost(i, j) - self.source_potentials[i] - self.target_potentials[j];
                worst = worst.max(-slack);
            }
        }
        let dual: f64 = self
            .source_potentials
            .iter()
            .zip(source.iter())
            .map(|(u, w)| u * w)
            .sum::<f64>()
            + self
                .target_potentials
                .iter()
                .zip(target.iter())
                .map(|(v, w)| v * w)
                .sum::<f64>();
        worst = worst.max((dual - self.value).abs());
        worst
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &x in w {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::NegativeWeight(x));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(sum));
    }
    Ok(())
}

/// Exact optimum of the discrete transport problem between two probability
/// vectors under a dense cost matrix.
///
/// Zero-weight rows and columns are stripped before solving and reinstated
/// afterwards; their potentials are set to the largest feasible values so the
/// dual certificate covers every index pair.
pub fn solve_transport(source: &[f64], target: &[f64], cost: CostMatrix) -> Result<TransportPlan> {
    if cost.rows() != source.len() || cost.cols() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix {}x{} against {} sources and {} targets",
            cost.rows(),
            cost.cols(),
            source.len(),
            target.len()
        )));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyAtoms);
    }
    for (idx, &c) in cost.data.iter().enumerate() {
        if !c.is_finite() {
            return Err(Error::NonFiniteCost {
                row: idx / cost.cols,
                col: idx % cost.cols,
            });
        }
    }
    check_weights(source)?;
    check_weights(target)?;

    let keep_rows: Vec<usize> = (0..source.len()).filter(|&i| source[i] > 0.0).collect();
    let keep_cols: Vec<usize> = (0..target.len()).filter(|&j| target[j] > 0.0).collect();
    let sub_source: Vec<f64> = keep_rows.iter().map(|&i| source[i]).collect();
    let total_s: f64 = sub_source.iter().sum();
    // Rescale the demand side so both totals agree to the last bit.
    let total_t: f64 = keep_cols.iter().map(|&j| target[j]).sum();
    let scale = total_s / total_t;
    let sub_target: Vec<f64> = keep_cols.iter().map(|&j| target[j] * scale).collect();

    let stripped = keep_rows.len() != source.len() || keep_cols.len() != target.len();
    let sub_cost;
    let cost_view: &[f64] = if stripped {
        let mut data = Vec::with_capacity(keep_rows.len() * keep_cols.len());
        for &i in &keep_rows {
            for &j in &keep_cols {
                data.push(cost.at(i, j));
            }
        }
        sub_cost = data;
        &sub_cost
    } else {
        &cost.data
    };

    let flow = simplex::solve_balanced(&sub_source, &sub_target, cost_view)?;

    let mut entries = Vec::with_capacity(flow.entries.len());
    let mut value = 0.0;
    for &(i, j, m) in &flow.entries {
        let (oi, oj) = (keep_rows[i], keep_cols[j]);
        value += m * cost.at(oi, oj);
        entries.push((oi, oj, m));
    }
    // Node potentials translate into feasible duals as u = -pi_source,
    // v = pi_target.
    let mut u = alloc::vec![f64::NAN; source.len()];
    let mut v = alloc::vec![f64::NAN; target.len()];
    for (k, &i) in keep_rows.iter().enumerate() {
        u[i] = -flow.pi_source[k];
    }
    for (k, &j) in keep_cols.iter().enumerate() {
        v[j] = flow.pi_target[k];
    }
    for j in 0..target.len() {
        if v[j].is_nan() {
            let mut best = f64::INFINITY;
            for &i in &keep_rows {
                best = best.min(cost.at(i, j) - u[i]);
            }
            v[j] = if best.is_finite() { best } else { 0.0 };
        }
    }
    for i in 0..source.len() {
        if u[i].is_nan() {
            let mut best = f64::INFINITY;
            for j in 0..target.len() {
                best = best.min(cost.at(i, j) - v[j]);
            }
            u[i] = if best.is_finite() { best } else { 0.0 };
        }
    }
    Ok(TransportPlan {
        n_source: source.len(),
        n_target: target.len(),
        entries,
        value,
        source_potentials: u,
        target_potentials: v,
    })
}

/// Euclidean distance.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    math::sqrt(acc)
}

/// The process cost `sum_t |x_t - y_t|` with Euclidean norms per step.
pub fn path_distance(a: &Path, b: &Path) -> f64 {
    a.steps().zip(b.steps()).map(|(x, y)| euclidean(x, y)).sum()
}

/// Wasserstein-1 between point clouds under the Euclidean ground cost, solved
/// exactly via [`solve_transport`].
pub fn wasserstein1(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<TransportPlan> {
    if a.d() != b.d() {
        return Err(Error::DimensionMismatch(format!(
            "point clouds of dimension {} and {}",
            a.d(),
            b.d()
        )));
    }
    let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| euclidean(a.point(i), b.point(j)));
    solve_transport(a.weights(), b.weights(), cost)
}

/// Wasserstein-1 between path measures under the process cost
/// `sum_t |x_t - y_t|`, solved exactly via [`solve_transport`].
pub fn wasserstein1_paths(a: &PathMeasure, b: &PathMeasure) -> Result<TransportPlan> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch);
    }
    let wa: Vec<f64> = a.atoms().iter().map(|(_, w)| *w).collect();
    let wb: Vec<f64> = b.atoms().iter().map(|(_, w)| *w).collect();
    let cost = CostMatrix::from_fn(a.len(), b.len(), |i, j| {
        path_distance(&a.atoms()[i].0, &b.atoms()[j].0)
    });
    solve_transport(&wa, &wb, cost)
}

/// One-dimensional Wasserstein-1 by the quantile formula: the integral of
/// `|F_a - F_b|` over a merged sweep of both supports. Independent of the
/// simplex path, it serves as the `d = 1` oracle.
pub fn wasserstein1_sorted(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<f64> {
    if a.d() != 1 || b.d() != 1 {
        return Err(Error::NotOneDimensional);
    }
    let xs = a.positions();
    let ys = b.positions();
    let mut i = 0;
    let mut j = 0;
    let mut cdf_a = 0.0f64;
    let mut cdf_b = 0.0f64;
    let mut prev = f64::NAN;
    let mut total = 0.0;
    while i < xs.len() || j < ys.len() {
        let z = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() && z > prev {
            total += (cdf_a - cdf_b).abs() * (z - prev);
        }
        while i < xs.len() && xs[i] == z {
            cdf_a += a.weight(i);
            i += 1;
        }
        while j < ys.len() && ys[j] == z {
            cdf_b += b.weight(j);
            j += 1;
        }
        prev = z;
    }
    Ok(total)
}

/// Nonzero support of a one-dimensional kernel row with prefix sums, so the
/// dynamic program answers distance queries against Diracs in logarithmic
/// time and merges against compressed rows only.
pub(crate) struct Kernel1d {
    pub pos: Vec<f64>,
    pub w: Vec<f64>,
    wcum: Vec<f64>,
    scum: Vec<f64>,
}

impl Kernel1d {
    /// `positions` ascending; zero weights are dropped.
    pub(crate) fn from_row(positions: &[f64], weights: &[f64]) -> Self {
        let mut pos = Vec::new();
        let mut w = Vec::new();
        let mut wcum = alloc::vec![0.0];
        let mut scum = alloc::vec![0.0];
        for (&x, &wt) in positions.iter().zip(weights.iter()) {
            if wt > 0.0 {
                pos.push(x);
                w.push(wt);
                wcum.push(wcum.last().unwrap() + wt);
                scum.push(scum.last().unwrap() + wt * x);
            }
        }
        Self { pos, w, wcum, scum }
    }

    /// `sum_i w_i |x_i - y|` via the prefix sums.
    pub(crate) fn w1_to_dirac(&self, y: f64) -> f64 {
        let idx = self.pos.partition_point(|&p| p <= y);
        let n = self.pos.len();
        let left = y * self.wcum[idx] - self.scum[idx];
        let right = (self.scum[n] - self.scum[idx]) - y * (self.wcum[n] - self.wcum[idx]);
        left + right
    }
}

/// Value of the one-dimensional monotone coupling on pre-sorted supports;
/// allocation-free inner loop of the dynamic program's terminal level.
pub(crate) fn w1_monotone_value(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> f64 {
    let mut value = 0.0;
    let mut i = 0;
    let mut j = 0;
    let mut res_x = if wx.is_empty() { 0.0 } else { wx[0] };
    let mut res_y = if wy.is_empty() { 0.0 } else { wy[0] };
    while i < xs.len() && j < ys.len() {
        let m = res_x.min(res_y);
        if m > 0.0 {
            value += m * (xs[i] - ys[j]).abs();
        }
        res_x -= m;
        res_y -= m;
        if res_x <= res_y {
            i += 1;
            if i < xs.len() {
                res_x = wx[i];
            }
        } else {
            j += 1;
            if j < ys.len() {
                res_y = wy[j];
            }
        }
    }
    value
}

/// Exact one-dimensional Wasserstein-1 via the monotone (quantile) coupling
/// on pre-sorted supports, with dual potentials recovered from the CDF signs.
/// Used by the dynamic program for terminal levels where the cost is a pure
/// distance; agrees with [`solve_transport`] to float precision.
pub(crate) fn w1_monotone_sorted(
    xs: &[f64],
    wx: &[f64],
    ys: &[f64],
    wy: &[f64],
) -> TransportPlan {
    debug_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    let mut entries = Vec::with_capacity(xs.len() + ys.len());
    let mut value = 0.0;
    let mut i = 0;
    let mut j = 0;
    let mut res_x = if wx.is_empty() { 0.0 } else { wx[0] };
    let mut res_y = if wy.is_empty() { 0.0 } else { wy[0] };
    while i < xs.len() && j < ys.len() {
        let m = res_x.min(res_y);
        if m > 0.0 {
            entries.push((i, j, m));
            value += m * (xs[i] - ys[j]).abs();
        }
        res_x -= m;
        res_y -= m;
        if res_x <= res_y {
            i += 1;
            if i < xs.len() {
                res_x = wx[i];
            }
        } else {
            j += 1;
            if j < ys.len() {
                res_y = wy[j];
            }
        }
    }

    // Kantorovich potential: f' = -sign(F_a - F_b) between merged support
    // points, u_i = f(x_i), v_j = -f(y_j).
    let mut u = alloc::vec![0.0; xs.len()];
    let mut v = alloc::vec![0.0; ys.len()];
    let mut f = 0.0f64;
    let mut prev = f64::NAN;
    let mut cdf_a = 0.0f64;
    let mut cdf_b = 0.0f64;
    let mut i = 0;
    let mut j = 0;
    while i < xs.len() || j < ys.len() {
        let z = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() && z > prev {
            let slope = -(cdf_a - cdf_b).signum();
            f += slope * (z - prev);
        }
        while i < xs.len() && xs[i] == z {
            u[i] = f;
            cdf_a += wx[i];
            i += 1;
        }
        while j < ys.len() && ys[j] == z {
            v[j] = -f;
            cdf_b += wy[j];
            j += 1;
        }
        prev = z;
    }
    TransportPlan {
        n_source: xs.len(),
        n_target: ys.len(),
        entries,
        value,
        source_potentials: u,
        target_potentials: v,
    }
}

/// Builds the flattened point cloud of a path measure in dimension `d * T`.
pub fn flatten_measure(m: &PathMeasure) -> DiscreteDistribution {
    let shape = m.shape();
    let mut points = Vec::with_capacity(m.len() * shape.coords());
    let mut weights = Vec::with_capacity(m.len());
    for (p, w) in m.atoms() {
        points.extend_from_slice(p.coords());
        weights.push(*w);
    }
    DiscreteDistribution::new(shape.coords(), points, weights)
        .expect("a path measure is a valid distribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ProcessShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist1(points: &[f64], weights: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(1, points.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn identical_single_atoms_cost_zero() {
        let plan = solve_transport(&[1.0], &[1.0], CostMatrix::new(1, 1, alloc::vec![0.0]).unwrap())
            .unwrap();
        assert_eq!(plan.value(), 0.0);
        assert_eq!(plan.entries(), &[(0, 0, 1.0)]);
    }

    #[test]
    fn two_by_two_selects_the_cheap_diagonal() {
        // One-parameter family pi_11 = p has cost 2.5 - 4p, minimized at the
        // diagonal p = 0.5.
        let cost = CostMatrix::new(2, 2, alloc::vec![1.0, 2.0, 3.0, 0.0]).unwrap();
        let plan = solve_transport(&[0.5, 0.5], &[0.5, 0.5], cost).unwrap();
        assert!((plan.value() - 0.5).abs() < PLAN_TOL);
        let mut entries = plan.entries().to_vec();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        assert_eq!(entries, alloc::vec![(0, 0, 0.5), (1, 1, 0.5)]);
    }

    #[test]
    fn identity_matching_costs_zero() {
        let cost = CostMatrix::new(2, 2, alloc::vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let plan = solve_transport(&[0.5, 0.5], &[0.5, 0.5], cost).unwrap();
        assert_eq!(plan.value(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            solve_transport(
                &[1.0],
                &[0.5, 0.5],
                CostMatrix::new(1, 1, alloc::vec![0.0]).unwrap()
            ),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            solve_transport(
                &[1.0],
                &[1.0],
                CostMatrix::new(1, 1, alloc::vec![f64::INFINITY]).unwrap()
            ),
            Err(Error::NonFiniteCost { .. })
        ));
        assert!(matches!(
            solve_transport(
                &[0.8],
                &[1.0],
                CostMatrix::new(1, 1, alloc::vec![0.0]).unwrap()
            ),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn zero_weight_rows_are_reinstated_with_feasible_duals() {
        let source = [0.5, 0.0, 0.5];
        let target = [0.25, 0.75, 0.0];
        let cost = CostMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs());
        let plan = solve_transport(&source, &target, cost).unwrap();
        let violation = plan.max_violation(&source, &target, |i, j| {
            (i as f64 - j as f64).abs()
        });
        assert!(violation < PLAN_TOL, "violation {violation}");
        assert!(plan.entries().iter().all(|&(i, j, _)| i != 1 && j != 2));
    }

    #[test]
    fn w_between_equal_diracs_is_zero() {
        let a = dist1(&[0.5], &[1.0]);
        let plan = wasserstein1(&a, &a).unwrap();
        assert_eq!(plan.value(), 0.0);
    }

    #[test]
    fn w_splits_mass_to_the_middle() {
        let a = dist1(&[0.0, 1.0], &[0.5, 0.5]);
        let b = dist1(&[0.5], &[1.0]);
        let plan = wasserstein1(&a, &b).unwrap();
        assert!((plan.value() - 0.5).abs() < PLAN_TOL);
    }

    #[test]
    fn figure_one_pair_under_the_path_cost() {
        let shape = ProcessShape::new(1, 2).unwrap();
        let eps = 0.1;
        let mu = PathMeasure::from_rows(
            shape,
            alloc::vec![(alloc::vec![0.5, 1.0], 1.0), (alloc::vec![0.5, 0.0], 1.0)],
        )
        .unwrap();
        let nu = PathMeasure::from_rows(
            shape,
            alloc::vec![
                (alloc::vec![0.5 + eps, 1.0], 1.0),
                (alloc::vec![0.5 - eps, 0.0], 1.0),
            ],
        )
        .unwrap();
        // Both perfect matchings of two atoms: like-endpoint matching costs
        // eps, the crossed one costs 1 + eps; the optimum is eps.
        let plan = wasserstein1_paths(&mu, &nu).unwrap();
        assert!((plan.value() - eps).abs() < PLAN_TOL);
    }

    #[test]
    fn sorted_oracle_matches_hand_values() {
        let a = dist1(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(wasserstein1_sorted(&a, &a).unwrap(), 0.0);
        let d0 = dist1(&[0.0], &[1.0]);
        let d1 = dist1(&[1.0], &[1.0]);
        assert_eq!(wasserstein1_sorted(&d0, &d1).unwrap(), 1.0);
        let b = dist1(&[0.25, 0.75], &[0.5, 0.5]);
        assert!((wasserstein1_sorted(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    }

    fn random_dist(rng: &mut ChaCha8Rng, d: usize, max_atoms: usize) -> DiscreteDistribution {
        let n = rng.random_range(1..=max_atoms);
        let points: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        DiscreteDistribution::new(d, points, weights).unwrap()
    }

    #[test]
    fn simplex_agrees_with_the_sorted_oracle_on_200_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        for _ in 0..200 {
            let a = random_dist(&mut rng, 1, 6);
            let b = random_dist(&mut rng, 1, 6);
            let lp = wasserstein1(&a, &b).unwrap();
            let oracle = wasserstein1_sorted(&a, &b).unwrap();
            assert!(
                (lp.value() - oracle).abs() < PLAN_TOL,
                "lp {} oracle {}",
                lp.value(),
                oracle
            );
        }
    }

    #[test]
    fn monotone_fast_path_matches_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        for _ in 0..200 {
            let a = random_dist(&mut rng, 1, 6);
            let b = random_dist(&mut rng, 1, 6);
            let fast = w1_monotone_sorted(a.positions(), a.weights(), b.positions(), b.weights());
            let lp = wasserstein1(&a, &b).unwrap();
            assert!((fast.value() - lp.value()).abs() < PLAN_TOL);
            let violation = fast.max_violation(a.weights(), b.weights(), |i, j| {
                (a.positions()[i] - b.positions()[j]).abs()
            });
            assert!(violation < PLAN_TOL, "violation {violation}");
        }
    }

    #[test]
    fn every_plan_carries_a_valid_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
        for _ in 0..100 {
            let d = rng.random_range(1..=3);
            let a = random_dist(&mut rng, d, 6);
            let b = random_dist(&mut rng, d, 6);
            let plan = wasserstein1(&a, &b).unwrap();
            let violation = plan.max_violation(a.weights(), b.weights(), |i, j| {
                euclidean(a.point(i), b.point(j))
            });
            assert!(violation < PLAN_TOL, "violation {violation}");
        }
    }

    #[test]
    fn metric_axioms_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        for _ in 0..60 {
            let d = rng.random_range(1..=2);
            let a = random_dist(&mut rng, d, 5);
            let b = random_dist(&mut rng, d, 5);
            let c = random_dist(&mut rng, d, 5);
            let ab = wasserstein1(&a, &b).unwrap().value();
            let ba = wasserstein1(&b, &a).unwrap().value();
            assert!((ab - ba).abs() < PLAN_TOL);
            let ac = wasserstein1(&a, &c).unwrap().value();
            let bc = wasserstein1(&b, &c).unwrap().value();
            assert!(ac <= ab + bc + PLAN_TOL);
            assert_eq!(wasserstein1(&a, &a).unwrap().value(), 0.0);
        }
    }

    #[test]
    fn heavier_random_instances_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
        for _ in 0..5 {
            let n = rng.random_range(40..=80);
            let a = random_dist(&mut rng, 1, n);
            let b = random_dist(&mut rng, 1, n);
            let lp = wasserstein1(&a, &b).unwrap();
            let oracle = wasserstein1_sorted(&a, &b).unwrap();
            assert!((lp.value() - oracle).abs() < PLAN_TOL);
        }
    }
}
