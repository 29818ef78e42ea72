//! Explicit finite trees: exact Snell envelope by dynamic programming, path
//! sampling, and an indicator basis that represents any function of the node
//! exactly. Used as ground truth for the regression engine.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::basis::BasisSystem;
use crate::error::{Error, Result};
use crate::paths::PathBundle;
use crate::payoff::{IntrinsicMatrix, PayoffSpec};
use crate::rng::path_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeNode {
    pub date: usize,
    pub state: Vec<f64>,
    pub payoff: f64,
    /// `(child index, transition probability)`.
    pub children: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nodes: Vec<LatticeNode>,
    horizon: usize,
    discount: f64,
    parent: Vec<Option<usize>>,
}

impl Lattice {
    /// Node 0 is the root at date 0. Every non-leaf node's probabilities must
    /// sum to one within 1e-12 and leaves must sit at the final date.
    pub fn new(nodes: Vec<LatticeNode>, discount: f64) -> Result<Self> {
        if nodes.is_empty() || nodes[0].date != 0 {
            return Err(Error::Config("lattice needs a root node at date 0".into()));
        }
        if !(discount > 0.0 && discount.is_finite()) {
            return Err(Error::Config("lattice discount factor must be positive".into()));
        }
        let horizon = nodes.iter().map(|n| n.date).max().unwrap_or(0);
        let dim = nodes[0].state.len();
        let mut parent = vec![None; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if node.state.len() != dim {
                return Err(Error::Config(format!("node {i} has inconsistent state dimension")));
            }
            if !(node.payoff.is_finite() && node.payoff >= 0.0) {
                return Err(Error::Config(format!("node {i} payoff must be finite and nonnegative")));
            }
            if node.children.is_empty() {
                if node.date != horizon {
                    return Err(Error::Config(format!("leaf {i} is not at the final date")));
                }
                continue;
            }
            let total: f64 = node.children.iter().map(|c| c.1).sum();
            if (total - 1.0).abs() > 1e-12 || node.children.iter().any(|c| c.1 < 0.0) {
                return Err(Error::Config(format!(
                    "node {i}: transition probabilities sum to {total}, expected 1"
                )));
            }
            for &(c, _) in &node.children {
                let child = nodes
                    .get(c)
                    .ok_or_else(|| Error::Config(format!("node {i} references missing child {c}")))?;
                if child.date != node.date + 1 {
                    return Err(Error::Config(format!("child {c} of node {i} is not one date later")));
                }
                if parent[c].replace(i).is_some() {
                    return Err(Error::Config(format!("node {c} has two parents")));
                }
            }
        }
        if parent.iter().skip(1).any(Option::is_none) {
            return Err(Error::Config("lattice has unreachable nodes".into()));
        }
        Ok(Lattice {
            nodes,
            horizon,
            discount,
            parent,
        })
    }

    /// Non-recombining binomial tree on one asset (`2^steps` leaves) with
    /// payoffs from `payoff`.
    pub fn binomial(
        s0: f64,
        up: f64,
        down: f64,
        p_up: f64,
        steps: usize,
        discount: f64,
        payoff: &PayoffSpec,
    ) -> Result<Self> {
        let mut nodes = vec![LatticeNode {
            date: 0,
            state: vec![s0],
            payoff: payoff.evaluate(&[s0])?,
            children: Vec::new(),
        }];
        let mut frontier = vec![0usize];
        for t in 1..=steps {
            let mut next = Vec::with_capacity(frontier.len() * 2);
            for &i in &frontier {
                let s = nodes[i].state[0];
                for (factor, prob) in [(up, p_up), (down, 1.0 - p_up)] {
                    let child = nodes.len();
                    let state = vec![s * factor];
                    nodes.push(LatticeNode {
                        date: t,
                        payoff: payoff.evaluate(&state)?,
                        state,
                        children: Vec::new(),
                    });
                    nodes[i].children.push((child, prob));
                    next.push(child);
                }
            }
            frontier = next;
        }
        Self::new(nodes, discount)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].state.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    /// Snell envelope `U` at every node together with the discounted
    /// continuation value `E[U_{t+1} | node]` (equal to `U` at leaves).
    pub fn snell(&self) -> (Vec<f64>, Vec<f64>) {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.nodes[i].date));
        let mut u = vec![0.0; self.nodes.len()];
        let mut cont = vec![0.0; self.nodes.len()];
        for i in order {
            let node = &self.nodes[i];
            if node.children.is_empty() {
                u[i] = node.payoff;
                cont[i] = node.payoff;
            } else {
                let c = self.discount * node.children.iter().map(|&(j, p)| p * u[j]).sum::<f64>();
                cont[i] = c;
                u[i] = node.payoff.max(c);
            }
        }
        (u, cont)
    }

    /// Prefix of states from the root to `node`, flattened.
    pub fn prefix(&self, node: usize) -> Vec<f64> {
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(p) = self.parent[cur] {
            chain.push(p);
            cur = p;
        }
        chain.iter().rev().flat_map(|&i| self.nodes[i].state.iter().copied()).collect()
    }

    /// Samples `n_paths` root-to-leaf walks. Returns the state paths (constant
    /// accrual equal to the lattice discount), the node payoffs along each walk,
    /// and the visited node indices.
    pub fn sample(&self, n_paths: usize, seed: u64) -> Result<(PathBundle, IntrinsicMatrix, Vec<Vec<usize>>)> {
        let walks: Vec<Vec<usize>> = (0..n_paths)
            .into_par_iter()
            .map(|n| {
                let mut rng = path_rng(seed, n as u64);
                let mut walk = Vec::with_capacity(self.horizon + 1);
                let mut cur = 0usize;
                walk.push(cur);
                while !self.nodes[cur].children.is_empty() {
                    let u: f64 = rng.random();
                    let kids = &self.nodes[cur].children;
                    let mut acc = 0.0;
                    let mut pick = kids[kids.len() - 1].0;
                    for &(c, p) in kids {
                        acc += p;
                        if u < acc {
                            pick = c;
                            break;
                        }
                    }
                    cur = pick;
                    walk.push(cur);
                }
                walk
            })
            .collect();
        let dim = self.dim();
        let mut values = Vec::with_capacity(n_paths * (self.horizon + 1) * dim);
        let mut z = Vec::with_capacity(n_paths * (self.horizon + 1));
        for walk in &walks {
            for &i in walk {
                values.extend_from_slice(&self.nodes[i].state);
                z.push(self.nodes[i].payoff);
            }
        }
        let paths = PathBundle::with_constant_accrual(n_paths, self.horizon, dim, values, self.discount)?;
        let z = IntrinsicMatrix::from_rows(n_paths, self.horizon, z)?;
        Ok((paths, z, walks))
    }

    pub fn indicator_basis(&self) -> LatticeIndicatorBasis {
        let mut columns = vec![HashMap::new(); self.horizon + 1];
        for i in 0..self.nodes.len() {
            let key: Vec<u64> = self.prefix(i).iter().map(|v| v.to_bits()).collect();
            let map = &mut columns[self.nodes[i].date];
            let next = map.len();
            map.entry(key).or_insert(next);
        }
        LatticeIndicatorBasis {
            columns,
            dim: self.dim(),
        }
    }
}

/// Exact price `U_0` of the optimal stopping problem on `lattice`.
pub fn exact_snell_oracle(lattice: &Lattice) -> f64 {
    lattice.snell().0[0]
}

/// One indicator per distinct path prefix at each date; spans every function of
/// the lattice node.
#[derive(Debug, Clone)]
pub struct LatticeIndicatorBasis {
    columns: Vec<HashMap<Vec<u64>, usize>>,
    dim: usize,
}

impl BasisSystem for LatticeIndicatorBasis {
    fn name(&self) -> String {
        "lattice_indicator".into()
    }

    fn len(&self, t: usize) -> usize {
        self.columns.get(t).map_or(1, |m| m.len().max(1))
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim {
            return Err(Error::Config(format!(
                "indicator basis built for {}-dimensional lattice, paths have {dim}",
                self.dim
            )));
        }
        Ok(())
    }

    fn evaluate(&self, prefix: &[f64], _dim: usize, t: usize, out: &mut [f64]) {
        out.fill(0.0);
        let key: Vec<u64> = prefix.iter().map(|v| v.to_bits()).collect();
        if let Some(&c) = self.columns.get(t).and_then(|m| m.get(&key)) {
            out[c] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(date: usize, s: f64, z: f64) -> LatticeNode {
        LatticeNode {
            date,
            state: vec![s],
            payoff: z,
            children: Vec::new(),
        }
    }

    fn one_period(z0: f64) -> Lattice {
        let mut root = leaf(0, 1.0, z0);
        root.children = vec![(1, 0.5), (2, 0.5)];
        Lattice::new(vec![root, leaf(1, 0.5, 10.0), leaf(1, 2.0, 0.0)], 1.0).unwrap()
    }

    #[test]
    fn one_step_expectation() {
        assert_eq!(exact_snell_oracle(&one_period(3.0)), 5.0);
    }

    #[test]
    fn exercise_dominates() {
        assert_eq!(exact_snell_oracle(&one_period(6.0)), 6.0);
    }

    #[test]
    fn probabilities_validated() {
        let mut root = leaf(0, 1.0, 0.0);
        root.children = vec![(1, 0.5), (2, 0.4)];
        let err = Lattice::new(vec![root, leaf(1, 0.5, 1.0), leaf(1, 2.0, 0.0)], 1.0).unwrap_err();
        assert!(err.to_string().contains("sum to"));
    }

    #[test]
    fn adding_a_date_never_lowers_price() {
        let put = PayoffSpec::vanilla_put(100.0);
        let mut last = 0.0;
        for steps in 1..=6 {
            let lat = Lattice::binomial(100.0, 1.1, 0.9, 0.55, steps, 0.99, &put).unwrap();
            let v = exact_snell_oracle(&lat);
            assert!(v >= last - 1e-12, "steps={steps} {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn sampled_paths_follow_tree() {
        let put = PayoffSpec::vanilla_put(100.0);
        let lat = Lattice::binomial(100.0, 1.2, 0.8, 0.5, 3, 0.97, &put).unwrap();
        let (paths, z, walks) = lat.sample(50, 9).unwrap();
        let basis = lat.indicator_basis();
        assert_eq!(basis.len(2), 4);
        let mut out = vec![0.0; 4];
        for n in 0..50 {
            assert_eq!(walks[n].len(), 4);
            for t in 0..=3 {
                assert_eq!(paths.state(n, t), lat.nodes()[walks[n][t]].state.as_slice());
                assert_eq!(z.get(n, t), lat.nodes()[walks[n][t]].payoff);
            }
            basis.evaluate(paths.prefix(n, 2), 1, 2, &mut out);
            assert_eq!(out.iter().sum::<f64>(), 1.0);
        }
    }
}
