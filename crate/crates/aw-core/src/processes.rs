//! Ground-truth process models: Lipschitz autoregressive dynamics, a
//! Lipschitz-density law on the path cube, explicit finite-support laws, and
//! the two-atom pair from the introduction. Provides seeded samplers with
//! per-row streams and reference discretizations with explicit error budgets.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimators::SampleSet;
use crate::grid::{quantization_budget, GridSpec};
use crate::math;
use crate::measures::{MarkovMeasure, Path, PathMeasure, ProcessShape, ScenarioTree};

/// Largest node count [`quantized_reference`] will expand into a tree.
pub const EXPANSION_LIMIT: usize = 2_000_000;

/// Law of the first step.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    /// Uniform on `[0,1]^d`.
    Uniform,
    /// Finitely supported: flattened points and matching weights.
    Finite { points: Vec<f64>, weights: Vec<f64> },
}

/// One-step map of the Lipschitz dynamics.
#[derive(Debug, Clone, PartialEq)]
pub enum StepMap {
    /// `X_{t+1} = rho * X_t + (1 - rho) * Z` per coordinate with `Z` uniform
    /// on `[0,1]^d`; a convex combination, so no clamping is ever needed, and
    /// the map is `rho`-Lipschitz in the state for every noise value.
    AutoRegressive { rho: f64 },
}

/// Which member of the two-atom pair to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureMember {
    Mu,
    Nu,
}

/// A process law that can be sampled and, where tractable, discretized.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessModel {
    /// Example-family (a): iterated Lipschitz maps with independent uniform
    /// innovations.
    LipschitzDynamics {
        shape: ProcessShape,
        initial: InitialLaw,
        step: StepMap,
    },
    /// Example-family (b): density `f = 1 + alpha * g` on `([0,1]^d)^T` with
    /// `g(x) = cos(2 pi sum_i x_i) / (2 pi T d)`, which is 1-Lipschitz and
    /// integrates to zero, so the normalizer is exactly one and
    /// `f >= 1 - alpha/(2 pi T d) > 0`.
    Density { shape: ProcessShape, alpha: f64 },
    /// Example-family (c): an explicit finitely supported law.
    Finite { measure: PathMeasure },
    /// The two-atom counterexample pair with separation `epsilon`.
    FigureOne { epsilon: f64, member: FigureMember },
}

impl ProcessModel {
    /// Convenience constructor for the autoregressive family with a uniform
    /// start.
    pub fn ar(d: usize, t: usize, rho: f64) -> Result<Self> {
        let model = ProcessModel::LipschitzDynamics {
            shape: ProcessShape::new(d, t)?,
            initial: InitialLaw::Uniform,
            step: StepMap::AutoRegressive { rho },
        };
        model.validate()?;
        Ok(model)
    }

    /// Independent uniform coordinates at every step (`rho = 0`).
    pub fn iid_uniform(d: usize, t: usize) -> Result<Self> {
        Self::ar(d, t, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::LipschitzDynamics { initial, step, shape } => {
                let StepMap::AutoRegressive { rho } = step;
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::InvalidParameter(
                        "autoregression factor must lie in [0, 1)".into(),
                    ));
                }
                if let InitialLaw::Finite { points, weights } = initial {
                    if points.len() != weights.len() * shape.d() {
                        return Err(Error::DimensionMismatch(
                            "initial support does not match the state dimension".into(),
                        ));
                    }
                    if weights.is_empty() {
                        return Err(Error::EmptyAtoms);
                    }
                    if points.iter().any(|c| !(0.0..=1.0).contains(c)) {
                        return Err(Error::InvalidParameter(
                            "initial support must lie in the unit cube".into(),
                        ));
                    }
                    if weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
                        return Err(Error::ZeroMass);
                    }
                }
                Ok(())
            }
            ProcessModel::Density { alpha, .. } => {
                if !(0.0..1.0).contains(alpha) {
                    return Err(Error::InvalidParameter(
                        "density tilt must lie in [0, 1)".into(),
                    ));
                }
                Ok(())
            }
            ProcessModel::Finite { .. } => Ok(()),
            ProcessModel::FigureOne { epsilon, .. } => {
                if !(*epsilon > 0.0 && *epsilon < 0.5) {
                    return Err(Error::InvalidParameter(
                        "epsilon must lie in (0, 1/2)".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn shape(&self) -> ProcessShape {
        match self {
            ProcessModel::LipschitzDynamics { shape, .. } => *shape,
            ProcessModel::Density { shape, .. } => *shape,
            ProcessModel::Finite { measure } => measure.shape(),
            ProcessModel::FigureOne { .. } => ProcessShape::new(1, 2).unwrap(),
        }
    }

    /// Lipschitz constant of the kernels where the model family fixes one;
    /// consumed by experiment reports as metadata.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        match self {
            ProcessModel::LipschitzDynamics { step, .. } => {
                let StepMap::AutoRegressive { rho } = step;
                Some(*rho)
            }
            _ => None,
        }
    }
}

/// Draws `n` i.i.d. paths. Rows use independent counter-based streams derived
/// from `(seed, row)`, so output is reproducible bit for bit and independent
/// of evaluation order.
pub fn sample(model: &ProcessModel, n: usize, seed: u64) -> Result<SampleSet> {
    model.validate()?;
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let shape = model.shape();
    let mut rows = Vec::with_capacity(n);
    for row in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64 + 1);
        rows.push(sample_row(model, shape, &mut rng)?);
    }
    SampleSet::new(shape, rows)
}

fn sample_row(model: &ProcessModel, shape: ProcessShape, rng: &mut ChaCha8Rng) -> Result<Path> {
    let d = shape.d();
    let t_len = shape.t();
    let coords = match model {
        ProcessModel::LipschitzDynamics { initial, step, .. } => {
            let StepMap::AutoRegressive { rho } = step;
            let mut coords = Vec::with_capacity(d * t_len);
            let mut state: Vec<f64> = match initial {
                InitialLaw::Uniform => (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
                InitialLaw::Finite { points, weights } => {
                    let i = sample_index(weights, rng);
                    points[i * d..(i + 1) * d].to_vec()
                }
            };
            coords.extend_from_slice(&state);
            for _ in 1..t_len {
                for x in state.iter_mut() {
                    let z: f64 = rng.random_range(0.0..1.0);
                    *x = rho * *x + (1.0 - rho) * z;
                }
                coords.extend_from_slice(&state);
            }
            coords
        }
        ProcessModel::Density { alpha, .. } => sample_density_row(shape, *alpha, rng).0,
        ProcessModel::Finite { measure } => {
            let weights: Vec<f64> = measure.atoms().iter().map(|(_, w)| *w).collect();
            let i = sample_index(&weights, rng);
            measure.atoms()[i].0.coords().to_vec()
        }
        ProcessModel::FigureOne { epsilon, member } => {
            let up = rng.random_range(0.0..1.0) < 0.5;
            match member {
                FigureMember::Mu => vec![0.5, if up { 1.0 } else { 0.0 }],
                FigureMember::Nu => {
                    if up {
                        vec![0.5 + epsilon, 1.0]
                    } else {
                        vec![0.5 - epsilon, 0.0]
                    }
                }
            }
        }
    };
    Path::new(shape, coords)
}

fn sample_index(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random_range(0.0..1.0) * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Density of the tilt `g` at a flattened path.
fn density_tilt(shape: ProcessShape, coords: &[f64]) -> f64 {
    let s: f64 = coords.iter().sum();
    math::cos(2.0 * core::f64::consts::PI * s)
        / (2.0 * core::f64::consts::PI * (shape.t() * shape.d()) as f64)
}

/// Rejection sampler for the density model with envelope `(1 + alpha)`;
/// returns the accepted path and the number of proposals consumed. The
/// acceptance probability is exactly `1 / (1 + alpha)`.
pub(crate) fn sample_density_row(
    shape: ProcessShape,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, usize) {
    let count = shape.coords();
    let mut proposals = 0;
    loop {
        proposals += 1;
        let coords: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = 1.0 + alpha * density_tilt(shape, &coords);
        let u: f64 = rng.random_range(0.0..1.0);
        if u * (1.0 + alpha) <= f {
            return (coords, proposals);
        }
    }
}

/// The two-atom pair: `mu` stacks both futures on one first step, `nu` splits
/// them `epsilon` apart.
pub fn figure_one_measures(epsilon: f64) -> Result<(PathMeasure, PathMeasure)> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter("epsilon must lie in (0, 1/2)".into()));
    }
    let shape = ProcessShape::new(1, 2)?;
    let mu = PathMeasure::from_rows(
        shape,
        vec![(vec![0.5, 1.0], 1.0), (vec![0.5, 0.0], 1.0)],
    )?;
    let nu = PathMeasure::from_rows(
        shape,
        vec![
            (vec![0.5 + epsilon, 1.0], 1.0),
            (vec![0.5 - epsilon, 0.0], 1.0),
        ],
    )?;
    Ok((mu, nu))
}

// ---------------------------------------------------------------------------
// Reference discretizations
// ---------------------------------------------------------------------------

/// Representation of a reference law: a plain tree, or per-time kernels when
/// the model is Markov and a full expansion would be exponential.
#[derive(Debug, Clone)]
pub enum ReferenceLaw {
    Tree(ScenarioTree),
    Markov(MarkovMeasure),
}

/// A grid discretization of a model together with its error budget
/// `T * (sqrt(d)/2) / K` against the continuous law.
///
/// The budget is exact (and zero) when a finite support already sits on grid
/// centers and the quantization maps distinct prefixes to distinct cells; for
/// continuous Lipschitz models it is the first-order term and omits the
/// kernel-averaging contribution, which carries the model's Lipschitz
/// constant. `exact` records the lossless case.
#[derive(Debug, Clone)]
pub struct QuantizedReference {
    pub law: ReferenceLaw,
    pub cells: u64,
    pub budget: f64,
    pub exact: bool,
}

impl QuantizedReference {
    /// Expands the law into a tree, whatever its representation.
    pub fn to_tree(&self) -> Result<ScenarioTree> {
        match &self.law {
            ReferenceLaw::Tree(t) => Ok(t.clone()),
            ReferenceLaw::Markov(m) => {
                let nodes = markov_expansion_nodes(m);
                if nodes > EXPANSION_LIMIT {
                    return Err(Error::ExpansionTooLarge {
                        nodes,
                        limit: EXPANSION_LIMIT,
                    });
                }
                Ok(m.to_tree())
            }
        }
    }
}

/// Number of tree nodes `MarkovMeasure::to_tree` would create, capped once
/// it clearly exceeds [`EXPANSION_LIMIT`]; callers guard expansions with it.
pub fn markov_expansion_nodes(m: &MarkovMeasure) -> usize {
    let t_len = m.shape().t();
    let mut counts: Vec<usize> = m.initial().iter().map(|&w| (w > 0.0) as usize).collect();
    let mut total = 1 + counts.iter().sum::<usize>();
    for t in 1..t_len {
        let cols = m.support_len(t + 1);
        let mut next = vec![0usize; cols];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let row = m.transition_row(t, i);
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    next[j] += c;
                }
            }
        }
        total += next.iter().sum::<usize>();
        counts = next;
        if total > 8 * EXPANSION_LIMIT {
            break;
        }
    }
    total
}

/// Discretizes a model onto a `k`-cell grid, choosing the representation:
/// finite supports quantize exactly into trees, autoregressive models with a
/// uniform start discretize into Markov kernels through closed-form
/// piecewise-polynomial integration. The density family carries no tractable
/// reference.
pub fn quantized_reference_law(model: &ProcessModel, k: u64) -> Result<QuantizedReference> {
    model.validate()?;
    if k == 0 {
        return Err(Error::InvalidParameter("cell count must be positive".into()));
    }
    match model {
        ProcessModel::Finite { measure } => finite_reference(measure, k),
        ProcessModel::FigureOne { member, .. } => {
            let (mu, nu) = match model {
                ProcessModel::FigureOne { epsilon, .. } => figure_one_measures(*epsilon)?,
                _ => unreachable!(),
            };
            let m = match member {
                FigureMember::Mu => mu,
                FigureMember::Nu => nu,
            };
            finite_reference(&m, k)
        }
        ProcessModel::LipschitzDynamics { shape, initial, step } => {
            let StepMap::AutoRegressive { rho } = step;
            if shape.d() != 1 || *initial != InitialLaw::Uniform {
                return Err(Error::NoTractableReference);
            }
            let markov = ar_reference_markov(shape.t(), *rho, k)?;
            Ok(QuantizedReference {
                law: ReferenceLaw::Markov(markov),
                cells: k,
                budget: quantization_budget(*shape, k),
                exact: false,
            })
        }
        ProcessModel::Density { .. } => Err(Error::NoTractableReference),
    }
}

/// The tree form of [`quantized_reference_law`]; errors when the expansion
/// would exceed [`EXPANSION_LIMIT`] nodes.
pub fn quantized_reference(model: &ProcessModel, k: u64) -> Result<ScenarioTree> {
    quantized_reference_law(model, k)?.to_tree()
}

fn finite_reference(measure: &PathMeasure, k: u64) -> Result<QuantizedReference> {
    let shape = measure.shape();
    let grid = GridSpec::with_cells(shape, k)?;
    let mut displacement_by_step = vec![0.0f64; shape.t()];
    let atoms = measure
        .atoms()
        .iter()
        .map(|(p, w)| {
            let q = grid.quantize_path(p)?;
            for t in 1..=shape.t() {
                let d = crate::transport::euclidean(p.step(t), q.step(t));
                if d > displacement_by_step[t - 1] {
                    displacement_by_step[t - 1] = d;
                }
            }
            Ok((q, *w))
        })
        .collect::<Result<Vec<_>>>()?;
    let quantized = PathMeasure::new(shape, atoms)?;

    // Structure preservation: distinct prefixes must stay distinct at every
    // horizon, otherwise the quantization merges histories and the pathwise
    // coupling is no longer bicausal.
    let mut preserved = true;
    for t in 1..=shape.t() {
        let count = |m: &PathMeasure| {
            let mut set: alloc::collections::BTreeSet<Vec<u64>> = Default::default();
            for (p, _) in m.atoms() {
                set.insert(p.prefix(t).iter().map(|c| c.to_bits()).collect());
            }
            set.len()
        };
        if count(measure) != count(&quantized) {
            preserved = false;
            break;
        }
    }
    let snap: f64 = displacement_by_step.iter().sum();
    let budget = if preserved {
        snap
    } else {
        quantization_budget(shape, k)
    };
    Ok(QuantizedReference {
        law: ReferenceLaw::Tree(quantized.to_scenario_tree()),
        cells: k,
        budget,
        exact: preserved && snap == 0.0,
    })
}

// ---------------------------------------------------------------------------
// Piecewise-polynomial marginals of the autoregressive family
// ---------------------------------------------------------------------------

/// Polynomial with coefficients in increasing degree.
type Poly = Vec<f64>;

fn poly_eval(p: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// `p(a*y + c)` by Horner expansion in the polynomial ring.
fn poly_compose_affine(p: &[f64], a: f64, c: f64) -> Poly {
    let mut acc: Poly = vec![0.0];
    for &coeff in p.iter().rev() {
        // acc = acc * (a y + c) + coeff
        let mut next = vec![0.0; acc.len() + 1];
        for (k, &v) in acc.iter().enumerate() {
            next[k] += v * c;
            next[k + 1] += v * a;
        }
        next[0] += coeff;
        acc = next;
    }
    acc
}

fn poly_antiderivative(p: &[f64]) -> Poly {
    let mut out = vec![0.0; p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k + 1] = c / (k + 1) as f64;
    }
    out
}

fn poly_shift_up(p: &[f64]) -> Poly {
    let mut out = vec![0.0; p.len() + 1];
    for (k, &c) in p.iter().enumerate() {
        out[k + 1] = c;
    }
    out
}

/// Piecewise polynomial on `[0, 1]`.
#[derive(Debug, Clone)]
struct Piecewise {
    breaks: Vec<f64>,
    polys: Vec<Poly>,
}

impl Piecewise {
    fn constant_one() -> Self {
        Self {
            breaks: vec![0.0, 1.0],
            polys: vec![vec![1.0]],
        }
    }

    fn segment_of(&self, x: f64) -> usize {
        let mut lo = 0;
        let mut hi = self.polys.len() - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.breaks[mid] <= x {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    fn eval(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        poly_eval(&self.polys[self.segment_of(x)], x)
    }

    /// Continuous antiderivative with value zero at the origin.
    fn antiderivative(&self) -> Piecewise {
        let mut polys = Vec::with_capacity(self.polys.len());
        let mut acc = 0.0;
        for (i, p) in self.polys.iter().enumerate() {
            let mut ap = poly_antiderivative(p);
            let shift = acc - poly_eval(&ap, self.breaks[i]);
            ap[0] += shift;
            acc = poly_eval(&ap, self.breaks[i + 1]);
            polys.push(ap);
        }
        Piecewise {
            breaks: self.breaks.clone(),
            polys,
        }
    }

    /// The first-moment integrand `x -> x * f(x)`.
    fn times_x(&self) -> Piecewise {
        Piecewise {
            breaks: self.breaks.clone(),
            polys: self.polys.iter().map(|p| poly_shift_up(p.as_slice())).collect(),
        }
    }
}

/// One marginal-propagation step of `X' = rho X + (1 - rho) Z`: the density
/// of `X'` is `(P(min(1, y/rho)) - P(max(0, (y - (1-rho))/rho))) / (1-rho)`
/// where `P` is the CDF of `X`.
fn propagate_density(density: &Piecewise, rho: f64) -> Piecewise {
    debug_assert!(rho > 0.0 && rho < 1.0);
    let cdf = density.antiderivative();
    let mut breaks: Vec<f64> = Vec::new();
    for &b in &cdf.breaks {
        breaks.push(rho * b);
        breaks.push(rho * b + (1.0 - rho));
    }
    breaks.push(0.0);
    breaks.push(1.0);
    breaks.retain(|&b| (0.0..=1.0).contains(&b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let inv = 1.0 / (1.0 - rho);
    let mut polys = Vec::with_capacity(breaks.len() - 1);
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        // Upper term: P(y / rho), saturating at one for y >= rho.
        let upper: Poly = if mid >= rho {
            vec![1.0]
        } else {
            let seg = cdf.segment_of(mid / rho);
            poly_compose_affine(&cdf.polys[seg], 1.0 / rho, 0.0)
        };
        // Lower term: P((y - (1 - rho)) / rho), zero for y <= 1 - rho.
        let lower: Poly = if mid <= 1.0 - rho {
            vec![0.0]
        } else {
            let arg = (mid - (1.0 - rho)) / rho;
            let seg = cdf.segment_of(arg);
            poly_compose_affine(&cdf.polys[seg], 1.0 / rho, -(1.0 - rho) / rho)
        };
        let mut poly = vec![0.0; upper.len().max(lower.len())];
        for (k, &c) in upper.iter().enumerate() {
            poly[k] += c * inv;
        }
        for (k, &c) in lower.iter().enumerate() {
            poly[k] -= c * inv;
        }
        polys.push(poly);
    }
    Piecewise { breaks, polys }
}

/// Exact Markov discretization of the `d = 1` autoregressive model with a
/// uniform start: cell masses and transition kernels are integrals of
/// piecewise-polynomial marginals against the uniform one-step kernel,
/// evaluated in closed form.
fn ar_reference_markov(t_len: usize, rho: f64, k: u64) -> Result<MarkovMeasure> {
    let shape = ProcessShape::new(1, t_len)?;
    let cells = k as usize;
    let centers: Vec<f64> = (0..cells).map(|i| (i as f64 + 0.5) / k as f64).collect();
    let edges: Vec<f64> = (0..=cells).map(|i| i as f64 / k as f64).collect();
    let supports = vec![centers; t_len];

    if t_len == 1 {
        return MarkovMeasure::new(shape, supports, vec![1.0 / k as f64; cells], Vec::new());
    }

    // Independent coordinates: every kernel is the uniform cell law.
    if rho == 0.0 {
        let uniform_row = vec![1.0 / k as f64; cells];
        let matrix: Vec<f64> = (0..cells).flat_map(|_| uniform_row.clone()).collect();
        return MarkovMeasure::new(
            shape,
            supports,
            uniform_row,
            vec![matrix; t_len - 1],
        );
    }

    let mut density = Piecewise::constant_one();
    let mut transitions = Vec::with_capacity(t_len - 1);
    for _ in 1..t_len {
        let m0 = density.antiderivative();
        let m1 = density.times_x().antiderivative();
        // I(y) integrated over cell [xl, xu]: full mass where the kernel CDF
        // saturates, plus the linear strip (y - rho x) / (1 - rho).
        let strip = |y: f64, xl: f64, xu: f64| -> f64 {
            let x_hi = y / rho;
            let x_lo = (y - (1.0 - rho)) / rho;
            let c1 = x_lo.clamp(xl, xu);
            let c2 = x_hi.clamp(xl, xu);
            let full = m0.eval(c1) - m0.eval(xl);
            let linear = (y * (m0.eval(c2) - m0.eval(c1))
                - rho * (m1.eval(c2) - m1.eval(c1)))
                / (1.0 - rho);
            full + linear
        };
        let mut matrix = vec![0.0f64; cells * cells];
        for i in 0..cells {
            let (xl, xu) = (edges[i], edges[i + 1]);
            let mass = m0.eval(xu) - m0.eval(xl);
            debug_assert!(mass > 0.0);
            let mut acc_prev = 0.0;
            let mut row_sum = 0.0;
            for j in 0..cells {
                let acc = strip(edges[j + 1], xl, xu);
                let w = ((acc - acc_prev) / mass).max(0.0);
                matrix[i * cells + j] = w;
                row_sum += w;
                acc_prev = acc;
            }
            for j in 0..cells {
                matrix[i * cells + j] /= row_sum;
            }
        }
        transitions.push(matrix);
        density = propagate_density(&density, rho);
    }
    MarkovMeasure::new(shape, supports, vec![1.0 / k as f64; cells], transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{adapted_empirical, empirical};
    use crate::transport::wasserstein1_paths;

    #[test]
    fn sampling_is_reproducible_bit_for_bit() {
        let model = ProcessModel::ar(1, 3, 0.5).unwrap();
        let a = sample(&model, 64, 9).unwrap();
        let b = sample(&model, 64, 9).unwrap();
        for (x, y) in a.rows().iter().zip(b.rows()) {
            assert_eq!(x.coords(), y.coords());
        }
        let c = sample(&model, 64, 10).unwrap();
        assert!(a
            .rows()
            .iter()
            .zip(c.rows())
            .any(|(x, y)| x.coords() != y.coords()));
    }

    #[test]
    fn finite_dirac_model_repeats_the_single_path() {
        let shape = ProcessShape::new(1, 2).unwrap();
        let measure =
            PathMeasure::from_rows(shape, vec![(vec![0.25, 0.75], 1.0)]).unwrap();
        let s = sample(&ProcessModel::Finite { measure }, 12, 4).unwrap();
        for row in s.rows() {
            assert_eq!(row.coords(), &[0.25, 0.75]);
        }
    }

    #[test]
    fn figure_one_mu_rows_start_at_one_half_exactly() {
        let model = ProcessModel::FigureOne {
            epsilon: 0.1,
            member: FigureMember::Mu,
        };
        let s = sample(&model, 40, 7).unwrap();
        for row in s.rows() {
            assert_eq!(row.step(1), &[0.5]);
            assert!(row.step(2) == [1.0] || row.step(2) == [0.0]);
        }
    }

    #[test]
    fn ar_marginal_means_sit_near_one_half() {
        // E X_{t+1} = rho E X_t + (1 - rho)/2 has the fixed point 1/2, and the
        // uniform start already sits on it.
        let model = ProcessModel::ar(1, 3, 0.5).unwrap();
        let s = sample(&model, 20_000, 11).unwrap();
        for t in 1..=3 {
            let mean: f64 =
                s.rows().iter().map(|r| r.step(t)[0]).sum::<f64>() / s.len() as f64;
            assert!((mean - 0.5).abs() < 0.02, "t {t} mean {mean}");
        }
    }

    #[test]
    fn density_acceptance_rate_matches_the_envelope() {
        let shape = ProcessShape::new(1, 2).unwrap();
        let alpha = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut accepted = 0usize;
        let mut proposals = 0usize;
        while proposals < 100_000 {
            let (_, used) = sample_density_row(shape, alpha, &mut rng);
            proposals += used;
            accepted += 1;
        }
        let rate = accepted as f64 / proposals as f64;
        let expected = 1.0 / (1.0 + alpha);
        assert!((rate - expected).abs() < 0.05, "rate {rate} expected {expected}");
    }

    #[test]
    fn row_subsets_share_the_marginal_distribution() {
        // Smoke test, not a proof: the Kolmogorov-Smirnov distance between
        // first-coordinate empirical CDFs of the two halves stays small.
        let model = ProcessModel::ar(1, 2, 0.5).unwrap();
        let s = sample(&model, 4000, 13).unwrap();
        let mut first: Vec<f64> = s.rows()[..2000].iter().map(|r| r.step(1)[0]).collect();
        let mut second: Vec<f64> = s.rows()[2000..].iter().map(|r| r.step(1)[0]).collect();
        first.sort_by(f64::total_cmp);
        second.sort_by(f64::total_cmp);
        let mut ks = 0.0f64;
        let (mut i, mut j) = (0usize, 0usize);
        while i < first.len() && j < second.len() {
            if first[i] <= second[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 / 2000.0 - j as f64 / 2000.0).abs());
        }
        assert!(ks < 0.08, "ks {ks}");
    }

    #[test]
    fn figure_one_measures_have_the_stated_atoms() {
        let (mu, nu) = figure_one_measures(0.1).unwrap();
        assert_eq!(mu.atoms()[0].0.coords(), &[0.5, 0.0]);
        assert_eq!(mu.atoms()[1].0.coords(), &[0.5, 1.0]);
        assert!(mu.atoms().iter().all(|(_, w)| *w == 0.5));
        let w = wasserstein1_paths(&mu, &nu).unwrap().value();
        assert!((w - 0.1).abs() < 1e-9);
        assert!(figure_one_measures(0.6).is_err());
    }

    #[test]
    fn grid_aligned_finite_support_is_reproduced_exactly() {
        let shape = ProcessShape::new(1, 2).unwrap();
        let measure = PathMeasure::from_rows(
            shape,
            vec![(vec![0.125, 0.375], 0.5), (vec![0.625, 0.875], 0.5)],
        )
        .unwrap();
        let r = quantized_reference_law(&ProcessModel::Finite { measure: measure.clone() }, 4)
            .unwrap();
        assert!(r.exact);
        assert_eq!(r.budget, 0.0);
        match r.law {
            ReferenceLaw::Tree(t) => assert_eq!(t.to_path_measure(), measure),
            _ => panic!("finite supports discretize into trees"),
        }
    }

    #[test]
    fn figure_one_reference_snaps_within_half_a_cell() {
        let model = ProcessModel::FigureOne {
            epsilon: 0.1,
            member: FigureMember::Nu,
        };
        let k = 50;
        let r = quantized_reference_law(&model, k).unwrap();
        assert!(r.budget <= 2.0 * 0.5 / k as f64 + 1e-15);
        let tree = match r.law {
            ReferenceLaw::Tree(t) => t,
            _ => unreachable!(),
        };
        for (p, _) in tree.to_path_measure().atoms() {
            for (orig, snapped) in [0.4, 0.6].iter().zip(p.step(1)) {
                let _ = orig;
                assert!((snapped - 0.4).abs() <= 0.01 + 1e-12 || (snapped - 0.6).abs() <= 0.01 + 1e-12);
            }
        }
    }

    #[test]
    fn ar_reference_tree_size_and_budget() {
        let model = ProcessModel::ar(1, 2, 0.5).unwrap();
        let r = quantized_reference_law(&model, 512).unwrap();
        assert!((r.budget - 2.0 * 0.5 / 512.0).abs() < 1e-15);
        let tree = r.to_tree().unwrap();
        assert!(tree.node_count() <= 1 + 512 + 512 * 512);
        // Every first-step cell carries mass 1/512 exactly.
        for &n in tree.level(1) {
            assert!((tree.mass(n) - 1.0 / 512.0).abs() < 1e-15);
        }
    }

    #[test]
    fn second_marginal_of_the_half_ar_model_is_triangular() {
        // X2 = (X1 + Z)/2 with X1, Z uniform: density 4y on [0, 1/2] and
        // 4(1-y) on [1/2, 1].
        let density = propagate_density(&Piecewise::constant_one(), 0.5);
        for (y, expected) in [(0.125, 0.5), (0.25, 1.0), (0.5, 2.0), (0.75, 1.0), (0.9, 0.4)] {
            let got = density.eval(y);
            assert!((got - expected).abs() < 1e-12, "y {y}: {got} vs {expected}");
        }
    }

    #[test]
    fn ar_transition_rows_match_hand_integrals_for_two_cells() {
        // K = 2, rho = 1/2: P(X2 < 1/2 | X1 = x) = 1 - x on the lower cell,
        // averaging to 3/4.
        let m = ar_reference_markov(2, 0.5, 2).unwrap();
        let row0 = m.transition_row(1, 0);
        assert!((row0[0] - 0.75).abs() < 1e-12);
        assert!((row0[1] - 0.25).abs() < 1e-12);
        let row1 = m.transition_row(1, 1);
        assert!((row1[0] - 0.25).abs() < 1e-12);
        assert!((row1[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ar_reference_matches_simpson_integration() {
        // Numerical (composite Simpson) evaluation of the first transition
        // kernel and of second-marginal cell masses, d = 1, K = 8.
        let rho = 0.5;
        let k = 8usize;
        let m = ar_reference_markov(3, rho, k as u64).unwrap();
        let kernel_cdf = |y: f64, x: f64| ((y - rho * x) / (1.0 - rho)).clamp(0.0, 1.0);
        // Simpson over the first cell [0, 1/8] of P(X2 in cell j | X1 = x).
        let n = 4096;
        for j in 0..k {
            let (a, b) = (j as f64 / k as f64, (j + 1) as f64 / k as f64);
            let f = |x: f64| kernel_cdf(b, x) - kernel_cdf(a, x);
            let (xl, xu) = (0.0, 1.0 / k as f64);
            let h = (xu - xl) / n as f64;
            let mut acc = f(xl) + f(xu);
            for i in 1..n {
                let x = xl + i as f64 * h;
                acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let integral = acc * h / 3.0;
            let expected = integral / (1.0 / k as f64);
            assert!(
                (m.transition_row(1, 0)[j] - expected).abs() < 1e-9,
                "j {j}: {} vs {expected}",
                m.transition_row(1, 0)[j]
            );
        }
        // Second-marginal cell masses from the triangular density.
        let density = propagate_density(&Piecewise::constant_one(), rho);
        let cdf = density.antiderivative();
        let tri_cdf = |y: f64| {
            if y <= 0.5 {
                2.0 * y * y
            } else {
                1.0 - 2.0 * (1.0 - y) * (1.0 - y)
            }
        };
        for j in 0..=8 {
            let y = j as f64 / 8.0;
            assert!((cdf.eval(y) - tri_cdf(y)).abs() < 1e-12);
        }
    }

    #[test]
    fn ar_reference_agrees_with_large_sample_frequencies() {
        let model = ProcessModel::ar(1, 2, 0.5).unwrap();
        let k = 4u64;
        let reference = match quantized_reference_law(&model, k).unwrap().law {
            ReferenceLaw::Markov(m) => m,
            _ => unreachable!(),
        };
        let s = sample(&model, 60_000, 17).unwrap();
        let grid = GridSpec::with_cells(model.shape(), k).unwrap();
        let mut joint = vec![0.0f64; (k * k) as usize];
        for row in s.rows() {
            let i = grid.quantize(row.step(1)).unwrap().0 .0[0] as usize;
            let j = grid.quantize(row.step(2)).unwrap().0 .0[0] as usize;
            joint[i * k as usize + j] += 1.0 / s.len() as f64;
        }
        for i in 0..k as usize {
            let mass: f64 = joint[i * k as usize..(i + 1) * k as usize].iter().sum();
            for j in 0..k as usize {
                let expected = reference.initial()[i] * reference.transition_row(1, i)[j];
                let got = joint[i * k as usize + j];
                assert!(
                    (got - expected).abs() < 0.01,
                    "cell ({i},{j}): {got} vs {expected}"
                );
                let _ = mass;
            }
        }
    }

    #[test]
    fn density_model_has_no_tractable_reference() {
        let model = ProcessModel::Density {
            shape: ProcessShape::new(1, 2).unwrap(),
            alpha: 0.5,
        };
        assert!(matches!(
            quantized_reference_law(&model, 8),
            Err(Error::NoTractableReference)
        ));
    }

    #[test]
    fn oversized_expansions_are_refused() {
        let model = ProcessModel::ar(1, 3, 0.5).unwrap();
        let r = quantized_reference_law(&model, 512).unwrap();
        assert!(matches!(
            r.to_tree(),
            Err(Error::ExpansionTooLarge { .. })
        ));
    }

    #[test]
    fn adapted_estimate_of_ar_converges_towards_the_reference() {
        // Coarse sanity check tying sampler, estimator and reference
        // together: the distance shrinks visibly from N = 32 to N = 2048.
        let model = ProcessModel::ar(1, 2, 0.5).unwrap();
        let reference = quantized_reference_law(&model, 128).unwrap();
        let markov = match &reference.law {
            ReferenceLaw::Markov(m) => m.clone(),
            _ => unreachable!(),
        };
        let mut dist = Vec::new();
        for &n in &[32usize, 2048] {
            let s = sample(&model, n, 23).unwrap();
            let est = adapted_empirical(&s).unwrap().to_scenario_tree();
            dist.push(crate::adapted::markov_tree_distance(&markov, &est).unwrap());
        }
        assert!(dist[1] < 0.6 * dist[0], "{dist:?}");
        let emp = empirical(&sample(&model, 512, 29).unwrap()).unwrap();
        let emp_dist =
            crate::adapted::markov_tree_distance(&markov, &emp.to_scenario_tree()).unwrap();
        assert!(emp_dist > 0.1, "empirical stays bounded away: {emp_dist}");
    }
}
