//! The three estimators built from an i.i.d. sample of paths: the classical
//! empirical measure, the grid-quantized adapted empirical measure, and the
//! Markov variant that estimates state-dependent transition kernels only.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{GridMode, GridSpec};
use crate::measures::{MarkovMeasure, Path, PathMeasure, ProcessShape};

/// `N` sample paths of a process law.
#[derive(Debug, Clone)]
pub struct SampleSet {
    shape: ProcessShape,
    rows: Vec<Path>,
}

impl SampleSet {
    pub fn new(shape: ProcessShape, rows: Vec<Path>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        for row in &rows {
            if row.coords().len() != shape.coords() {
                return Err(Error::PathLength {
                    expected: shape.coords(),
                    got: row.coords().len(),
                });
            }
        }
        Ok(Self { shape, rows })
    }

    pub fn from_rows(shape: ProcessShape, rows: Vec<Vec<f64>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|coords| Path::new(shape, coords))
            .collect::<Result<Vec<_>>>()?;
        Self::new(shape, rows)
    }

    pub fn shape(&self) -> ProcessShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Path] {
        &self.rows
    }
}

/// The classical empirical measure: uniform weights on the raw paths,
/// duplicates merged.
pub fn empirical(s: &SampleSet) -> Result<PathMeasure> {
    PathMeasure::new(s.shape, s.rows.iter().map(|p| (p.clone(), 1.0)).collect())
}

/// The adapted empirical measure: every path is quantized through the
/// sample-size-derived grid before the uniform mixture is formed. Equals the
/// push-forward of [`empirical`] under the path quantization map.
pub fn adapted_empirical(s: &SampleSet) -> Result<PathMeasure> {
    let grid = GridSpec::new(s.shape, s.len() as u64, GridMode::General)?;
    adapted_empirical_with_grid(s, &grid)
}

/// Adapted empirical measure on an explicit grid. No convergence-rate theory
/// is asserted for grids other than the derived one.
///
/// Implemented literally as the push-forward of the empirical measure, so the
/// identity between the two holds at the bit level.
pub fn adapted_empirical_with_grid(s: &SampleSet, grid: &GridSpec) -> Result<PathMeasure> {
    let emp = empirical(s)?;
    let atoms = emp
        .atoms()
        .iter()
        .map(|(p, w)| Ok((grid.quantize_path(p)?, *w)))
        .collect::<Result<Vec<_>>>()?;
    PathMeasure::new(s.shape, atoms)
}

/// The Markov adapted estimator: initial law from the quantized first steps,
/// one transition row per visited grid state, estimated from the quantized
/// successors of the samples currently in that state.
///
/// Supports carry exactly the visited states; a state never visited at time
/// `t` has zero mass under the estimator, so its (by-convention Dirac) kernel
/// is never charged and no row is stored for it.
pub fn markov_adapted_empirical(s: &SampleSet) -> Result<MarkovMeasure> {
    let grid = GridSpec::new(s.shape, s.len() as u64, GridMode::Markov)?;
    markov_adapted_empirical_with_grid(s, &grid)
}

/// Markov adapted estimator on an explicit grid.
pub fn markov_adapted_empirical_with_grid(
    s: &SampleSet,
    grid: &GridSpec,
) -> Result<MarkovMeasure> {
    let shape = s.shape;
    let d = shape.d();
    let t_len = shape.t();
    let quantized: Vec<Path> = s
        .rows
        .iter()
        .map(|p| grid.quantize_path(p))
        .collect::<Result<Vec<_>>>()?;

    // Visited states per time step, keyed by exact bits, in point order.
    let mut state_index: Vec<BTreeMap<Vec<u64>, usize>> = Vec::with_capacity(t_len);
    let mut supports: Vec<Vec<f64>> = Vec::with_capacity(t_len);
    for t in 1..=t_len {
        let mut keys: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
        for q in &quantized {
            let step = q.step(t);
            keys.entry(step.iter().map(|c| c.to_bits()).collect())
                .or_insert_with(|| step.to_vec());
        }
        let mut index = BTreeMap::new();
        let mut flat = Vec::with_capacity(keys.len() * d);
        for (i, (key, point)) in keys.into_iter().enumerate() {
            index.insert(key, i);
            flat.extend_from_slice(&point);
        }
        state_index.push(index);
        supports.push(flat);
    }

    let n = s.len() as f64;
    let mut initial = alloc::vec![0.0; state_index[0].len()];
    for q in &quantized {
        let key: Vec<u64> = q.step(1).iter().map(|c| c.to_bits()).collect();
        initial[state_index[0][&key]] += 1.0;
    }
    for w in initial.iter_mut() {
        *w /= n;
    }

    let mut transitions = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let rows = state_index[t - 1].len();
        let cols = state_index[t].len();
        let mut counts = alloc::vec![0.0f64; rows * cols];
        let mut row_totals = alloc::vec![0.0f64; rows];
        for q in &quantized {
            let from: Vec<u64> = q.step(t).iter().map(|c| c.to_bits()).collect();
            let to: Vec<u64> = q.step(t + 1).iter().map(|c| c.to_bits()).collect();
            let i = state_index[t - 1][&from];
            let j = state_index[t][&to];
            counts[i * cols + j] += 1.0;
            row_totals[i] += 1.0;
        }
        for i in 0..rows {
            // Every state visited at t < T has at least one successor.
            debug_assert!(row_totals[i] > 0.0);
            for j in 0..cols {
                counts[i * cols + j] /= row_totals[i];
            }
        }
        transitions.push(counts);
    }
    MarkovMeasure::new(shape, supports, initial, transitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::wasserstein1_paths;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape(d: usize, t: usize) -> ProcessShape {
        ProcessShape::new(d, t).unwrap()
    }

    fn samples(d: usize, t: usize, rows: &[&[f64]]) -> SampleSet {
        SampleSet::from_rows(shape(d, t), rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn random_samples(rng: &mut ChaCha8Rng, d: usize, t: usize, n: usize) -> SampleSet {
        let rows = (0..n)
            .map(|_| (0..d * t).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        SampleSet::from_rows(shape(d, t), rows).unwrap()
    }

    #[test]
    fn empirical_of_one_sample_is_a_dirac() {
        let s = samples(1, 2, &[&[0.3, 0.7]]);
        let m = empirical(&s).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].1, 1.0);
    }

    #[test]
    fn empirical_merges_identical_samples() {
        let s = samples(1, 2, &[&[0.3, 0.7], &[0.3, 0.7]]);
        let m = empirical(&s).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].1, 1.0);
    }

    #[test]
    fn empirical_of_distinct_samples_is_uniform() {
        let s = samples(1, 2, &[&[0.1, 0.2], &[0.3, 0.4], &[0.5, 0.6]]);
        let m = empirical(&s).unwrap();
        assert_eq!(m.len(), 3);
        for (_, w) in m.atoms() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn samples_within_one_cell_path_collapse_to_its_center() {
        // N = 8 gives r = 1/3 and two cells per dimension.
        let rows: Vec<Vec<f64>> = (0..8).map(|k| vec![0.1 + 0.01 * k as f64, 0.3]).collect();
        let s = SampleSet::from_rows(shape(1, 2), rows).unwrap();
        let m = adapted_empirical(&s).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].0.coords(), &[0.25, 0.25]);
    }

    #[test]
    fn eight_spread_samples_collapse_onto_the_four_center_paths() {
        let rows: Vec<Vec<f64>> = vec![
            vec![0.1, 0.2],
            vec![0.2, 0.8],
            vec![0.3, 0.3],
            vec![0.4, 0.9],
            vec![0.6, 0.1],
            vec![0.7, 0.7],
            vec![0.8, 0.4],
            vec![0.9, 0.6],
        ];
        let s = SampleSet::from_rows(shape(1, 2), rows).unwrap();
        let m = adapted_empirical(&s).unwrap();
        assert_eq!(m.len(), 4);
        for (p, w) in m.atoms() {
            assert!(p.coords().iter().all(|&c| c == 0.25 || c == 0.75));
            assert_eq!(*w, 0.25);
        }
    }

    #[test]
    fn adapted_is_the_pushforward_of_empirical_under_quantization() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &(d, t, n) in &[(1usize, 2usize, 50usize), (2, 3, 30), (1, 4, 17)] {
            let s = random_samples(&mut rng, d, t, n);
            let grid = GridSpec::new(s.shape(), n as u64, GridMode::General).unwrap();
            let adapted = adapted_empirical(&s).unwrap();
            let pushed = PathMeasure::new(
                s.shape(),
                empirical(&s)
                    .unwrap()
                    .atoms()
                    .iter()
                    .map(|(p, w)| (grid.quantize_path(p).unwrap(), *w))
                    .collect(),
            )
            .unwrap();
            assert_eq!(adapted, pushed);
        }
    }

    #[test]
    fn quantization_displaces_at_most_the_grid_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for &(d, t, n) in &[(1usize, 2usize, 40usize), (2, 2, 25)] {
            let s = random_samples(&mut rng, d, t, n);
            let grid = GridSpec::new(s.shape(), n as u64, GridMode::General).unwrap();
            let emp = empirical(&s).unwrap();
            let adapted = adapted_empirical(&s).unwrap();
            let w = wasserstein1_paths(&emp, &adapted).unwrap().value();
            let bound = t as f64 * grid.displacement_bound();
            assert!(w <= bound + 1e-12, "w {w} bound {bound}");
        }
    }

    #[test]
    fn cell_masses_of_adapted_and_empirical_agree_on_cell_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let s = random_samples(&mut rng, 1, 3, 60);
        let grid = GridSpec::new(s.shape(), 60, GridMode::General).unwrap();
        let adapted = adapted_empirical(&s).unwrap();
        for t in 1..=3usize {
            // Empirical mass of each cell block G at horizon t.
            let mut counts: alloc::collections::BTreeMap<Vec<u32>, f64> = Default::default();
            for row in s.rows() {
                let cells: Vec<u32> = (1..=t)
                    .map(|step| grid.quantize(row.step(step)).unwrap().0 .0[0])
                    .collect();
                *counts.entry(cells).or_insert(0.0) += 1.0 / s.len() as f64;
            }
            // Adapted mass of the corresponding center prefix.
            let mut adapted_mass: alloc::collections::BTreeMap<Vec<u32>, f64> = Default::default();
            for (p, w) in adapted.atoms() {
                let cells: Vec<u32> = (1..=t)
                    .map(|step| grid.quantize(p.step(step)).unwrap().0 .0[0])
                    .collect();
                *adapted_mass.entry(cells).or_insert(0.0) += w;
            }
            assert_eq!(counts.len(), adapted_mass.len());
            for (cells, mass) in counts {
                assert!((adapted_mass[&cells] - mass).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adapted_tree_kernels_are_quantized_averaged_empirical_kernels() {
        // The kernel of the adapted tree at a center prefix equals the
        // push-forward under the cell map of the empirical kernel averaged
        // over the corresponding cell block.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let s = random_samples(&mut rng, 1, 3, 40);
        let grid = GridSpec::new(s.shape(), 40, GridMode::General).unwrap();
        let emp = empirical(&s).unwrap();
        let tree = adapted_empirical(&s).unwrap().to_scenario_tree();
        for t in 1..3usize {
            for &node in tree.level(t) {
                // Cell block of the node's center prefix.
                let prefix = tree.prefix(node);
                let cells: Vec<crate::grid::CellId> = prefix
                    .chunks(1)
                    .map(|step| grid.quantize(step).unwrap().0)
                    .collect();
                let averaged = crate::grid::averaged_kernel(&emp, t, &cells, &grid).unwrap();
                // Quantize the averaged kernel's support and merge.
                let mut pushed: alloc::collections::BTreeMap<u64, f64> = Default::default();
                for i in 0..averaged.len() {
                    let (_, center) = grid.quantize(averaged.point(i)).unwrap();
                    *pushed.entry(center[0].to_bits()).or_insert(0.0) += averaged.weight(i);
                }
                let kernel: Vec<(u64, f64)> = tree
                    .children(node)
                    .iter()
                    .map(|&c| (tree.point(c)[0].to_bits(), tree.conditional(c)))
                    .collect();
                assert_eq!(kernel.len(), pushed.len());
                for (bits, prob) in kernel {
                    let expected = pushed[&bits];
                    assert!(
                        (prob - expected).abs() < 1e-12,
                        "kernel weight {prob} vs averaged {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn empirical_kernels_are_dirac_while_adapted_kernels_are_not() {
        // Distinct first coordinates happen with probability one for atomless
        // laws; with 64 samples in at most four cells the adapted tree must
        // merge histories.
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let s = random_samples(&mut rng, 1, 2, 64);
        let emp_tree = empirical(&s).unwrap().to_scenario_tree();
        for &node in emp_tree.level(1) {
            assert_eq!(emp_tree.children(node).len(), 1);
        }
        let adapted_tree = adapted_empirical(&s).unwrap().to_scenario_tree();
        assert!(adapted_tree
            .level(1)
            .iter()
            .any(|&node| adapted_tree.children(node).len() > 1));
    }

    #[test]
    fn constant_samples_give_an_absorbing_chain() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.4, 0.4, 0.4]).collect();
        let s = SampleSet::from_rows(shape(1, 3), rows).unwrap();
        let m = markov_adapted_empirical(&s).unwrap();
        for t in 1..=3 {
            assert_eq!(m.support_len(t), 1);
        }
        assert_eq!(m.initial(), &[1.0]);
        for t in 1..3 {
            assert_eq!(m.transition_row(t, 1 - 1), &[1.0]);
        }
    }

    #[test]
    fn six_sample_transition_rows_match_hand_counts() {
        // N = 6 gives m = 2 cells (ceil(6^(1/3))); cells split at one half.
        let rows: Vec<Vec<f64>> = vec![
            vec![0.1, 0.2], // low  -> low
            vec![0.2, 0.9], // low  -> high
            vec![0.3, 0.3], // low  -> low
            vec![0.6, 0.7], // high -> high
            vec![0.7, 0.1], // high -> low
            vec![0.9, 0.8], // high -> high
        ];
        let s = SampleSet::from_rows(shape(1, 2), rows).unwrap();
        let m = markov_adapted_empirical(&s).unwrap();
        assert_eq!(m.support_len(1), 2);
        assert_eq!(m.initial(), &[0.5, 0.5]);
        let low = m.transition_row(1, 0);
        assert!((low[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((low[1] - 1.0 / 3.0).abs() < 1e-15);
        let high = m.transition_row(1, 1);
        assert!((high[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((high[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn markov_expansion_kernels_depend_only_on_the_current_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let s = random_samples(&mut rng, 1, 3, 40);
        let m = markov_adapted_empirical(&s).unwrap();
        let tree = m.to_tree();
        for depth in 1..3 {
            let mut seen: alloc::collections::BTreeMap<u64, Vec<(u64, f64)>> = Default::default();
            for &node in tree.level(depth) {
                let kernel: Vec<(u64, f64)> = tree
                    .children(node)
                    .iter()
                    .map(|&c| (tree.point(c)[0].to_bits(), tree.conditional(c)))
                    .collect();
                let key = tree.point(node)[0].to_bits();
                if let Some(prev) = seen.get(&key) {
                    assert_eq!(prev.len(), kernel.len());
                    for ((pa, wa), (pb, wb)) in prev.iter().zip(kernel.iter()) {
                        assert_eq!(pa, pb);
                        assert!((wa - wb).abs() < 1e-13);
                    }
                } else {
                    seen.insert(key, kernel);
                }
            }
        }
    }

    #[test]
    fn estimators_are_deterministic_in_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let s = random_samples(&mut rng, 1, 3, 32);
        assert_eq!(empirical(&s).unwrap(), empirical(&s).unwrap());
        assert_eq!(adapted_empirical(&s).unwrap(), adapted_empirical(&s).unwrap());
        assert_eq!(
            markov_adapted_empirical(&s).unwrap(),
            markov_adapted_empirical(&s).unwrap()
        );
    }

    #[test]
    fn empty_sample_is_rejected() {
        assert!(matches!(
            SampleSet::from_rows(shape(1, 2), Vec::new()),
            Err(Error::EmptySample)
        ));
    }
}
