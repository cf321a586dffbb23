//! Primal network simplex on the complete bipartite transportation graph,
//! following the LEMON structure: spanning tree stored through
//! parent/predecessor/thread indices, block-search pricing, and an artificial
//! root node providing the initial strongly feasible basis.
//!
//! Arcs are implicit: arc `e < m*n` joins source `e / n` to target `e % n`;
//! the `m + n` trailing arcs connect every node to the artificial root.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Relative pricing tolerance; an arc enters only if its reduced cost is below
/// `-EPS * scale` where `scale` covers the magnitudes involved.
const EPS: f64 = 1e-13;

pub(crate) struct BasicFlow {
    /// Positive flows on real arcs.
    pub entries: Vec<(usize, usize, f64)>,
    /// Node potentials of the source side.
    pub pi_source: Vec<f64>,
    /// Node potentials of the target side.
    pub pi_target: Vec<f64>,
}

struct Solver<'a> {
    m: usize,
    n: usize,
    real_arcs: usize,
    all_arcs: usize,
    node_count: usize, // m + n + 1, root last
    root: usize,
    cost: &'a [f64],
    art_cost: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    pi: Vec<f64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    dirty_revs: Vec<usize>,
    block_size: usize,
    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    v_out: usize,
    delta: f64,
}

const NONE: usize = usize::MAX;

impl<'a> Solver<'a> {
    fn source(&self, e: usize) -> usize {
        if e < self.real_arcs {
            e / self.n
        } else {
            let k = e - self.real_arcs;
            if k < self.m {
                k
            } else {
                self.root
            }
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.real_arcs {
            self.m + e % self.n
        } else {
            let k = e - self.real_arcs;
            if k < self.m {
                self.root
            } else {
                k
            }
        }
    }

    fn cost(&self, e: usize) -> f64 {
        if e < self.real_arcs {
            self.cost[e]
        } else {
            self.art_cost[e - self.real_arcs]
        }
    }

    /// Initial basis: every node hangs on the root through its artificial arc.
    fn new(supply: &'a [f64], demand: &'a [f64], cost: &'a [f64]) -> Self {
        let m = supply.len();
        let n = demand.len();
        let real_arcs = m * n;
        let all_arcs = real_arcs + m + n;
        let node_count = m + n + 1;
        let root = m + n;

        let mut max_cost = 0.0f64;
        for &c in cost {
            if c.abs() > max_cost {
                max_cost = c.abs();
            }
        }
        let art = (max_cost + 1.0) * node_count as f64;

        let mut art_cost = Vec::with_capacity(m + n);
        let mut flow = vec![0.0; all_arcs];
        let mut state = vec![STATE_LOWER; all_arcs];
        let mut pi = vec![0.0; node_count];
        let mut parent = vec![NONE; node_count];
        let mut pred = vec![NONE; node_count];
        let mut pred_dir = vec![0i8; node_count];
        let mut thread = vec![0usize; node_count];
        let mut rev_thread = vec![0usize; node_count];
        let mut succ_num = vec![1usize; node_count];
        let mut last_succ = vec![0usize; node_count];

        parent[root] = NONE;
        pred[root] = NONE;
        thread[root] = 0;
        rev_thread[0] = root;
        succ_num[root] = node_count;
        last_succ[root] = node_count - 2;
        pi[root] = 0.0;

        for u in 0..node_count - 1 {
            parent[u] = root;
            let e = real_arcs + u;
            pred[u] = e;
            thread[u] = u + 1;
            rev_thread[u + 1] = u;
            succ_num[u] = 1;
            last_succ[u] = u;
            state[e] = STATE_TREE;
            if u < m {
                // supply node: arc u -> root
                pred_dir[u] = DIR_UP;
                pi[u] = 0.0;
                flow[e] = supply[u];
                art_cost.push(0.0);
            } else {
                // demand node: arc root -> u
                pred_dir[u] = DIR_DOWN;
                pi[u] = art;
                flow[e] = demand[u - m];
                art_cost.push(art);
            }
        }
        let block_size = ((math::sqrt(real_arcs as f64)) as usize).max(10);
        Solver {
            m,
            n,
            real_arcs,
            all_arcs,
            node_count,
            root,
            cost,
            art_cost,
            flow,
            state,
            pi,
            parent,
            pred,
            pred_dir,
            thread,
            rev_thread,
            succ_num,
            last_succ,
            dirty_revs: Vec::new(),
            block_size,
            next_arc: 0,
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            v_out: 0,
            delta: 0.0,
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost(e) + self.pi[self.source(e)] - self.pi[self.target(e)]
    }

    /// Accepts a candidate only if its reduced cost is negative beyond float
    /// noise at the magnitudes of the quantities that formed it.
    fn significant(&self, e: usize, rc: f64) -> bool {
        let scale = 1.0f64
            .max(self.cost(e).abs())
            .max(self.pi[self.source(e)].abs())
            .max(self.pi[self.target(e)].abs());
        rc < -EPS * scale
    }

    /// Block-search pricing over real arcs (artificial arcs never re-enter).
    fn find_entering_arc(&mut self) -> bool {
        let mut min_cost = 0.0;
        let mut min_arc = NONE;
        let mut count = self.block_size;
        let mut scanned = 0usize;
        let mut e = self.next_arc;
        while scanned < self.real_arcs {
            if self.state[e] == STATE_LOWER {
                let rc = self.reduced_cost(e);
                if rc < min_cost {
                    min_cost = rc;
                    min_arc = e;
                }
            }
            count -= 1;
            if count == 0 {
                if min_arc != NONE && self.significant(min_arc, min_cost) {
                    self.in_arc = min_arc;
                    self.next_arc = (e + 1) % self.real_arcs;
                    return true;
                }
                count = self.block_size;
            }
            scanned += 1;
            e += 1;
            if e == self.real_arcs {
                e = 0;
            }
        }
        if min_arc != NONE && self.significant(min_arc, min_cost) {
            self.in_arc = min_arc;
            self.next_arc = e % self.real_arcs;
            return true;
        }
        false
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Smallest flow on the cycle arcs oriented against the entering direction.
    /// Ties prefer the second branch, which keeps the basis strongly feasible.
    fn find_leaving_arc(&mut self) -> bool {
        // Entering arcs always sit at the lower bound (no capacities).
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        self.delta = f64::INFINITY;
        let mut result = 0u8;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[e];
                if d < self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[e];
                if d <= self.delta {
                    self.delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        result != 0
    }

    fn change_flow(&mut self) {
        if self.delta > 0.0 {
            let val = self.delta;
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out_arc = self.pred[self.u_out];
        self.flow[out_arc] = 0.0;
        self.state[out_arc] = STATE_LOWER;
    }

    fn update_tree_structure(&mut self) {
        let old_rev_thread = self.rev_thread[self.u_out];
        let old_succ_num = self.succ_num[self.u_out];
        let old_last_succ = self.last_succ[self.u_out];
        self.v_out = self.parent[self.u_out];

        if self.u_in == self.u_out {
            self.parent[self.u_in] = self.v_in;
            self.pred[self.u_in] = self.in_arc;
            self.pred_dir[self.u_in] = if self.u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            if self.thread[self.v_in] != self.u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[self.v_in];
                self.thread[self.v_in] = self.u_out;
                self.rev_thread[self.u_out] = self.v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            // Nodes on the stem between u_in and u_out are re-hung one by one.
            let thread_continue = if old_rev_thread == self.v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[self.v_in]
            };
            let mut stem = self.u_in;
            let mut par_stem = self.v_in;
            let mut last = self.last_succ[self.u_in];
            let mut after = self.thread[last];
            self.thread[self.v_in] = self.u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(self.v_in);
            while stem != self.u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[self.u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[self.u_out] = last;

            if old_rev_thread != self.v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }

            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                self.rev_thread[self.thread[u]] = u;
            }

            // Predecessors along the stem flip direction.
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[self.u_out];
            let mut u = self.u_out;
            while u != self.u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc += self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[self.u_in] = self.in_arc;
            self.pred_dir[self.u_in] = if self.u_in == self.source(self.in_arc) {
                DIR_UP
            } else {
                DIR_DOWN
            };
            self.succ_num[self.u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[self.join] == self.v_in {
            self.join
        } else {
            NONE
        };
        let last_succ_out = self.last_succ[self.u_out];
        let mut u = self.v_in;
        while u != NONE && self.last_succ[u] == self.v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if self.join != old_rev_thread && self.v_in != old_rev_thread {
            let mut u = self.v_out;
            while u != NONE && u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = self.v_out;
            while u != NONE && u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = self.v_in;
        while u != self.join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = self.v_out;
        while u != self.join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in] - self.pi[self.u_in]
            - self.pred_dir[self.u_in] as f64 * self.cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        loop {
            self.pi[u] += sigma;
            u = self.thread[u];
            if u == end {
                break;
            }
        }
    }

    /// Flows of the current spanning tree for arbitrary node balances:
    /// children accumulate into parents in subtree-size order, so every
    /// predecessor arc carries exactly its subtree's net supply.
    fn tree_flows(&self, balance: impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.node_count - 1).collect();
        order.sort_unstable_by_key(|&u| self.succ_num[u]);
        let mut net: Vec<f64> = (0..self.node_count - 1)
            .map(|u| balance(u))
            .chain(core::iter::once(0.0))
            .collect();
        let mut flows = Vec::with_capacity(order.len());
        for &u in &order {
            let f = if self.pred_dir[u] == DIR_UP {
                net[u]
            } else {
                -net[u]
            };
            flows.push((self.pred[u], f.max(0.0)));
            let p = self.parent[u];
            net[p] += net[u];
        }
        flows
    }

    fn run(&mut self) -> Result<()> {
        let pivot_limit = 1000 * self.node_count + 10_000;
        let mut pivots = 0usize;
        while self.find_entering_arc() {
            pivots += 1;
            if pivots > pivot_limit {
                return Err(Error::IterationLimit);
            }
            self.find_join_node();
            if !self.find_leaving_arc() {
                // Impossible for a balanced transportation instance.
                return Err(Error::IterationLimit);
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
        }
        // Balanced instances route everything through real arcs; only float
        // residue may remain on the artificial ones.
        for e in self.real_arcs..self.all_arcs {
            if self.flow[e].abs() > 1e-9 {
                return Err(Error::IterationLimit);
            }
        }
        Ok(())
    }
}

/// Size of the deterministic anti-degeneracy perturbation. Index-scaled
/// increments of this magnitude break the flow ties that otherwise stall the
/// pivot on uniform-weight instances; the induced value drift is bounded by
/// `max_cost * (m + n) * PERTURBATION`, far below the 1e-9 plan contracts.
const PERTURBATION: f64 = 1e-14;

/// Solves `min sum c_ij x_ij` subject to row sums `supply`, column sums
/// `demand`, `x >= 0`. Both vectors must be strictly positive with equal
/// totals (up to float rounding); `cost` is row-major.
pub(crate) fn solve_balanced(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<BasicFlow> {
    debug_assert_eq!(cost.len(), supply.len() * demand.len());
    let (m, n) = (supply.len(), demand.len());
    let eps_s = PERTURBATION / m as f64;
    let eps_d = PERTURBATION / n as f64;
    let supply: Vec<f64> = supply
        .iter()
        .enumerate()
        .map(|(i, &w)| w + (i + 1) as f64 * eps_s)
        .collect();
    let demand: Vec<f64> = demand
        .iter()
        .enumerate()
        .map(|(j, &w)| w + (j + 1) as f64 * eps_d)
        .collect();
    let mut solver = Solver::new(&supply, &demand, cost);
    solver.run()?;
    // The perturbed flows steered the pivot; the basis they end in is optimal
    // for the original data as well (costs never changed), so the exact flows
    // are the subtree sums of the unperturbed supplies over the final tree.
    let flows = solver.tree_flows(
        |u| {
            if u < m {
                supply[u] - (u + 1) as f64 * eps_s
            } else {
                -(demand[u - m] - (u - m + 1) as f64 * eps_d)
            }
        },
    );
    let mut entries = Vec::new();
    for (e, f) in flows {
        if e < solver.real_arcs && f > 0.0 {
            entries.push((e / solver.n, e % solver.n, f));
        }
    }
    let pi_source = solver.pi[..solver.m].to_vec();
    let pi_target = solver.pi[solver.m..solver.m + solver.n].to_vec();
    Ok(BasicFlow {
        entries,
        pi_source,
        pi_target,
    })
}
