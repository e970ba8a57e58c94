//! Exact s/t min-cut solver for binary first-order MRF energies with
//! non-negative Potts pairwise terms (submodular, so the cut is the global
//! optimum).
//!
//! The energy `Σ_i unary_i(l_i) + Σ_ij w_ij · [l_i ≠ l_j]` is reduced to a
//! flow network: after subtracting `min(c0, c1)` per node (the reported
//! constant), the residual unary becomes a single terminal arc, and every
//! pairwise term becomes an undirected arc pair. Max-flow is computed with
//! Dinic's algorithm (BFS level graph + blocking flow with the current-arc
//! optimization, iterative so deep graphs cannot overflow the stack).
//!
//! Labels are read from source-side reachability in the residual graph:
//! label 0 = reachable. Nodes with no residual incentive end up unreachable,
//! so exact ties deterministically take label 1.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A binary labeling problem instance.
#[derive(Clone, Debug)]
pub struct BinaryEnergy<T> {
    n_nodes: usize,
    unary: Vec<(T, T)>,
    pairwise: Vec<(u32, u32, T)>,
}

/// Outcome of a solve: the optimal labeling and its energy.
#[derive(Clone, Debug)]
pub struct MinCutSolution<T> {
    /// One bit per node; `false` = label 0, `true` = label 1.
    pub labels: Vec<bool>,
    /// Energy of `labels` under the instance, recomputed from the labeling.
    pub energy: T,
    /// Raw max-flow value of the reduced network.
    pub max_flow: T,
    /// `Σ_i min(c0_i, c1_i)`, the constant removed by the reduction.
    pub constant: T,
}

impl<T: Real> BinaryEnergy<T> {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            unary: vec![(T::zero(), T::zero()); n_nodes],
            pairwise: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.pairwise.len()
    }

    pub fn unary(&self, i: usize) -> (T, T) {
        self.unary[i]
    }

    pub fn pairwise(&self) -> &[(u32, u32, T)] {
        &self.pairwise
    }

    pub fn set_unary(&mut self, i: usize, cost0: T, cost1: T) -> Result<()> {
        for v in [cost0, cost1] {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::InvalidCost {
                    node: i,
                    value: v.to_double(),
                });
            }
        }
        self.unary[i] = (cost0, cost1);
        Ok(())
    }

    pub fn add_unary(&mut self, i: usize, cost0: T, cost1: T) -> Result<()> {
        let (c0, c1) = self.unary[i];
        self.set_unary(i, c0 + cost0, c1 + cost1)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, weight: T) -> Result<()> {
        if i == j || i >= self.n_nodes || j >= self.n_nodes {
            return Err(Error::InvalidEdge {
                i,
                j,
                nodes: self.n_nodes,
            });
        }
        if !weight.is_finite() || weight < T::zero() {
            return Err(Error::InvalidCost {
                node: i,
                value: weight.to_double(),
            });
        }
        self.pairwise.push((i as u32, j as u32, weight));
        Ok(())
    }

    /// Confirms there are no duplicate undirected edges. Kept separate from
    /// `add_edge` so bulk loading stays O(E log E) rather than hashing on
    /// every insert.
    pub fn check_no_duplicate_edges(&self) -> Result<()> {
        let mut keys: Vec<(u32, u32)> = self
            .pairwise
            .iter()
            .map(|&(i, j, _)| (i.min(j), i.max(j)))
            .collect();
        keys.sort_unstable();
        for w in keys.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateEdge {
                    i: w[0].0 as usize,
                    j: w[0].1 as usize,
                });
            }
        }
        Ok(())
    }

    /// Energy of an arbitrary labeling under this instance.
    pub fn energy_of(&self, labels: &[bool]) -> T {
        let mut e = T::zero();
        for (i, &(c0, c1)) in self.unary.iter().enumerate() {
            e += if labels[i] { c1 } else { c0 };
        }
        for &(i, j, w) in &self.pairwise {
            if labels[i as usize] != labels[j as usize] {
                e += w;
            }
        }
        e
    }

    /// Exact global minimization via max-flow/min-cut.
    pub fn solve(&self) -> Result<MinCutSolution<T>> {
        self.check_no_duplicate_edges()?;
        let n = self.n_nodes;
        if n == 0 {
            return Ok(MinCutSolution {
                labels: Vec::new(),
                energy: T::zero(),
                max_flow: T::zero(),
                constant: T::zero(),
            });
        }
        let source = n;
        let sink = n + 1;
        let mut graph = FlowGraph::new(n + 2, self.pairwise.len() + n)?;

        let mut constant = T::zero();
        for (i, &(c0, c1)) in self.unary.iter().enumerate() {
            let m = c0.min(c1);
            constant += m;
            // Cutting i onto the source side (label 0) must pay c0, onto the
            // sink side (label 1) must pay c1.
            if c1 > m {
                graph.add_arc(source, i, c1 - m, T::zero());
            } else if c0 > m {
                graph.add_arc(i, sink, c0 - m, T::zero());
            }
        }
        for &(i, j, w) in &self.pairwise {
            if w > T::zero() {
                graph.add_arc(i as usize, j as usize, w, w);
            }
        }

        let max_flow = graph.max_flow(source, sink);
        let reachable = graph.residual_reachable(source);
        let labels: Vec<bool> = (0..n).map(|i| !reachable[i]).collect();
        let energy = self.energy_of(&labels);

        let flow_energy = max_flow + constant;
        let tol = T::of(1e-9) * T::one().max(energy.abs());
        if (flow_energy - energy).abs() > tol {
            return Err(Error::Internal(format!(
                "max-flow {} + constant {} disagrees with labeling energy {}",
                max_flow.to_double(),
                constant.to_double(),
                energy.to_double()
            )));
        }

        Ok(MinCutSolution {
            labels,
            energy,
            max_flow,
            constant,
        })
    }
}

/// Arc-pair flow network in CSR-free form: arcs stored flat, reverse arc at
/// `id ^ 1`, per-node adjacency lists of arc ids.
struct FlowGraph<T> {
    caps: Vec<T>,
    to: Vec<u32>,
    adj: Vec<Vec<u32>>,
    level: Vec<i32>,
    cursor: Vec<usize>,
}

impl<T: Real> FlowGraph<T> {
    fn new(n_nodes: usize, expected_arcs: usize) -> Result<Self> {
        let mut caps = Vec::new();
        let mut to = Vec::new();
        caps.try_reserve(2 * expected_arcs)
            .map_err(|_| Error::OutOfMemory("allocating flow arcs".into()))?;
        to.try_reserve(2 * expected_arcs)
            .map_err(|_| Error::OutOfMemory("allocating flow arcs".into()))?;
        let mut adj = Vec::new();
        adj.try_reserve(n_nodes)
            .map_err(|_| Error::OutOfMemory("allocating adjacency".into()))?;
        adj.resize(n_nodes, Vec::new());
        Ok(Self {
            caps,
            to,
            adj,
            level: vec![-1; n_nodes],
            cursor: vec![0; n_nodes],
        })
    }

    fn add_arc(&mut self, u: usize, v: usize, cap_fwd: T, cap_rev: T) {
        let id = self.caps.len() as u32;
        self.caps.push(cap_fwd);
        self.to.push(v as u32);
        self.caps.push(cap_rev);
        self.to.push(u as u32);
        self.adj[u].push(id);
        self.adj[v].push(id + 1);
    }


    fn bfs(&mut self, source: usize, sink: usize) -> bool {
        self.level.fill(-1);
        self.level[source] = 0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(source as u32);
        while let Some(u) = queue.pop_front() {
            for &arc in &self.adj[u as usize] {
                let v = self.to[arc as usize] as usize;
                if self.level[v] < 0 && self.caps[arc as usize] > T::zero() {
                    self.level[v] = self.level[u as usize] + 1;
                    queue.push_back(v as u32);
                }
            }
        }
        self.level[sink] >= 0
    }

    /// Iterative DFS blocking flow.
    fn blocking_flow(&mut self, source: usize, sink: usize) -> T {
        let mut total = T::zero();
        // Stack of (node, arc taken to reach it).
        let mut path: Vec<u32> = Vec::new();
        loop {
            let u = if let Some(&arc) = path.last() {
                self.to[arc as usize] as usize
            } else {
                source
            };
            if u == sink {
                // Augment along the path by its bottleneck, then retreat to
                // just before the first saturated arc.
                let mut bottleneck = T::infinity();
                for &arc in &path {
                    bottleneck = bottleneck.min(self.caps[arc as usize]);
                }
                let mut first_saturated = path.len();
                for (depth, &arc) in path.iter().enumerate() {
                    let a = arc as usize;
                    self.caps[a] -= bottleneck;
                    self.caps[a ^ 1] += bottleneck;
                    if self.caps[a] <= T::zero() && depth < first_saturated {
                        first_saturated = depth;
                    }
                }
                total += bottleneck;
                path.truncate(first_saturated);
                continue;
            }
            // Advance along the first admissible arc from u.
            let mut advanced = false;
            while self.cursor[u] < self.adj[u].len() {
                let arc = self.adj[u][self.cursor[u]];
                let v = self.to[arc as usize] as usize;
                if self.caps[arc as usize] > T::zero() && self.level[v] == self.level[u] + 1 {
                    path.push(arc);
                    advanced = true;
                    break;
                }
                self.cursor[u] += 1;
            }
            if !advanced {
                // Dead end: remove u from the level graph and retreat.
                self.level[u] = -1;
                match path.pop() {
                    Some(_) => {}
                    None => break,
                }
            }
        }
        total
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> T {
        let mut flow = T::zero();
        while self.bfs(source, sink) {
            self.cursor.fill(0);
            flow += self.blocking_flow(source, sink);
        }
        flow
    }

    fn residual_reachable(&self, source: usize) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[source] = true;
        queue.push_back(source as u32);
        while let Some(u) = queue.pop_front() {
            for &arc in &self.adj[u as usize] {
                let v = self.to[arc as usize] as usize;
                if !seen[v] && self.caps[arc as usize] > T::zero() {
                    seen[v] = true;
                    queue.push_back(v as u32);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_takes_cheaper_label() {
        let mut e = BinaryEnergy::<f64>::new(1);
        e.set_unary(0, 0.2, 0.8).unwrap();
        let sol = e.solve().unwrap();
        assert_eq!(sol.labels, vec![false]);
        assert!((sol.energy - 0.2).abs() < 1e-12);
    }

    #[test]
    fn strong_coupling_aligns_labels() {
        let mut e = BinaryEnergy::<f64>::new(2);
        e.set_unary(0, 0.0, 10.0).unwrap();
        e.set_unary(1, 10.0, 0.0).unwrap();
        e.add_edge(0, 1, 100.0).unwrap();
        let sol = e.solve().unwrap();
        assert_eq!(sol.labels[0], sol.labels[1]);
        assert!((sol.energy - 10.0).abs() < 1e-9);
    }

    #[test]
    fn exact_tie_takes_label_one() {
        let mut e = BinaryEnergy::<f64>::new(1);
        e.set_unary(0, 0.5, 0.5).unwrap();
        let sol = e.solve().unwrap();
        assert_eq!(sol.labels, vec![true]);
    }

    #[test]
    fn rejects_negative_and_non_finite_costs() {
        let mut e = BinaryEnergy::<f64>::new(1);
        assert!(e.set_unary(0, -0.1, 0.0).is_err());
        assert!(e.set_unary(0, f64::NAN, 0.0).is_err());
        let mut e2 = BinaryEnergy::<f64>::new(2);
        assert!(e2.add_edge(0, 1, f64::INFINITY).is_err());
        assert!(e2.add_edge(0, 0, 1.0).is_err());
        assert!(e2.add_edge(0, 5, 1.0).is_err());
    }

    #[test]
    fn duplicate_edges_are_rejected_at_solve() {
        let mut e = BinaryEnergy::<f64>::new(2);
        e.add_edge(0, 1, 1.0).unwrap();
        e.add_edge(1, 0, 2.0).unwrap();
        assert!(matches!(e.solve(), Err(Error::DuplicateEdge { .. })));
    }

    #[test]
    fn flow_plus_constant_equals_energy() {
        let mut e = BinaryEnergy::<f64>::new(3);
        e.set_unary(0, 1.0, 3.0).unwrap();
        e.set_unary(1, 2.5, 0.5).unwrap();
        e.set_unary(2, 0.7, 0.9).unwrap();
        e.add_edge(0, 1, 0.4).unwrap();
        e.add_edge(1, 2, 0.6).unwrap();
        let sol = e.solve().unwrap();
        assert!((sol.max_flow + sol.constant - sol.energy).abs() < 1e-12);
    }

    #[test]
    fn deterministic_repeat_solves() {
        let mut e = BinaryEnergy::<f64>::new(4);
        for i in 0..4 {
            e.set_unary(i, 0.5, 0.5).unwrap();
        }
        e.add_edge(0, 1, 0.25).unwrap();
        e.add_edge(2, 3, 0.25).unwrap();
        let a = e.solve().unwrap();
        let b = e.solve().unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.energy, b.energy);
    }
}
