//! Causal Bayesian networks over categorical variables.
//!
//! A [`CausalNetwork`] is a DAG plus one conditional probability table per
//! node. Categories are integer indices internally; labels are kept only for
//! I/O. On construction the node list is permuted into a topological order
//! (stable with respect to the declared order), so node ids are always a
//! valid elimination/sampling order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Tolerance for CPT row sums during validation.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Rows off by more than [`ROW_SUM_TOL`] but within this are renormalized on
/// load; anything worse is rejected.
pub const ROW_RENORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub node_id: NodeId,
    pub name: String,
    /// Ordered category labels (the set `C_i`).
    pub categories: Vec<String>,
    /// Ordered parent node ids.
    pub parents: Vec<NodeId>,
}

impl NodeSpec {
    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }
}

/// Conditional probability table of one node.
///
/// Rows are stored row-major over parent assignment tuples with the last
/// parent varying fastest; each row is a distribution over the node's
/// categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub node_id: NodeId,
    pub rows: Vec<Vec<f64>>,
}

impl Cpt {
    /// Renormalize rows whose sum drifted by at most `tol` (text formats
    /// round probabilities); rows further off are rejected.
    pub fn normalize_rows(&mut self, tol: f64) -> Result<()> {
        for (r, row) in self.rows.iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() <= ROW_SUM_TOL {
                continue;
            }
            if (sum - 1.0).abs() <= tol && sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            } else {
                return Err(Error::RowSumViolation {
                    node: self.node_id,
                    row: r,
                    sum,
                });
            }
        }
        Ok(())
    }
}

/// A (possibly partial) assignment of category indices to nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<Option<usize>>,
}

impl Assignment {
    pub fn empty(n: usize) -> Self {
        Assignment {
            values: vec![None; n],
        }
    }

    pub fn full(values: Vec<usize>) -> Self {
        Assignment {
            values: values.into_iter().map(Some).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, node: NodeId) -> Option<usize> {
        self.values.get(node).copied().flatten()
    }

    pub fn set(&mut self, node: NodeId, value: usize) {
        self.values[node] = Some(value);
    }

    pub fn is_full(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    /// Category indices of a full assignment.
    pub fn as_full(&self) -> Result<Vec<usize>> {
        self.values
            .iter()
            .map(|v| v.ok_or(Error::PartialAssignment))
            .collect()
    }
}

/// Validated causal Bayesian network: DAG + CPTs, nodes in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalNetwork {
    nodes: Vec<NodeSpec>,
    cpts: Vec<Cpt>,
}

impl CausalNetwork {
    /// Build and validate a network. The node list is permuted into a
    /// topological order (ties broken by declared position) and all ids are
    /// remapped accordingly.
    pub fn new(nodes: Vec<NodeSpec>, cpts: Vec<Cpt>) -> Result<Self> {
        let n = nodes.len();
        if cpts.len() != n {
            return Err(Error::ArityMismatch(cpts.len().min(n)));
        }
        for node in &nodes {
            let mut seen = vec![false; n];
            for &p in &node.parents {
                if p >= n {
                    return Err(Error::DanglingParent(node.node_id));
                }
                if seen[p] {
                    return Err(Error::DanglingParent(node.node_id));
                }
                seen[p] = true;
            }
        }

        let parents_of: Vec<Vec<NodeId>> = nodes.iter().map(|s| s.parents.clone()).collect();
        let order = kahn_order(&parents_of)?;

        // position of original id in the new ordering
        let mut pos = vec![0usize; n];
        for (new_id, &old_id) in order.iter().enumerate() {
            pos[old_id] = new_id;
        }

        let mut new_nodes = Vec::with_capacity(n);
        let mut new_cpts: Vec<Option<Cpt>> = (0..n).map(|_| None).collect();
        for cpt in cpts {
            if cpt.node_id >= n {
                return Err(Error::ArityMismatch(cpt.node_id));
            }
            let slot = &mut new_cpts[pos[cpt.node_id]];
            if slot.is_some() {
                return Err(Error::ArityMismatch(cpt.node_id));
            }
            *slot = Some(Cpt {
                node_id: pos[cpt.node_id],
                rows: cpt.rows,
            });
        }
        for (new_id, &old_id) in order.iter().enumerate() {
            let spec = &nodes[old_id];
            new_nodes.push(NodeSpec {
                node_id: new_id,
                name: spec.name.clone(),
                categories: spec.categories.clone(),
                parents: spec.parents.iter().map(|&p| pos[p]).collect(),
            });
        }
        let cpts = new_cpts
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::ArityMismatch(0))?;

        let net = CausalNetwork {
            nodes: new_nodes,
            cpts,
        };
        net.validate()?;
        Ok(net)
    }

    /// Check every structural invariant of the network.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(Error::DanglingParent(i));
            }
            if node.categories.is_empty() {
                return Err(Error::BadCategories { node: i });
            }
            for (a, ca) in node.categories.iter().enumerate() {
                if node.categories[..a].contains(ca) {
                    return Err(Error::BadCategories { node: i });
                }
            }
            for &p in &node.parents {
                if p >= n {
                    return Err(Error::DanglingParent(i));
                }
            }
        }
        // stored order must be topological
        for node in &self.nodes {
            if node.parents.iter().any(|&p| p >= node.node_id) {
                return Err(Error::CycleDetected);
            }
        }
        for (i, cpt) in self.cpts.iter().enumerate() {
            if cpt.node_id != i {
                return Err(Error::ArityMismatch(i));
            }
            let expected_rows: usize = self.nodes[i]
                .parents
                .iter()
                .map(|&p| self.nodes[p].cardinality())
                .product();
            if cpt.rows.len() != expected_rows {
                return Err(Error::ArityMismatch(i));
            }
            for (r, row) in cpt.rows.iter().enumerate() {
                if row.len() != self.nodes[i].cardinality() {
                    return Err(Error::ArityMismatch(i));
                }
                if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::RowSumViolation {
                        node: i,
                        row: r,
                        sum: row.iter().sum(),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::RowSumViolation { node: i, row: r, sum });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id]
    }

    pub fn cpt(&self, id: NodeId) -> &Cpt {
        &self.cpts[id]
    }

    pub fn cardinality(&self, id: NodeId) -> usize {
        self.nodes[id].cardinality()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|s| s.parents.len()).sum()
    }

    pub fn total_categories(&self) -> usize {
        self.nodes.iter().map(|s| s.cardinality()).sum()
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|s| s.name == name)
    }

    pub fn category_index(&self, node: NodeId, label: &str) -> Option<usize> {
        self.nodes[node].categories.iter().position(|c| c == label)
    }

    /// Replace one node's parents and CPT, revalidating. The node keeps its
    /// id; callers must not introduce edges that break the stored order.
    pub(crate) fn with_replaced_node(
        &self,
        id: NodeId,
        parents: Vec<NodeId>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut net = self.clone();
        net.nodes[id].parents = parents;
        net.cpts[id].rows = rows;
        net.validate()?;
        Ok(net)
    }

    /// Row index into a node's CPT for given parent values (last parent
    /// varies fastest).
    pub fn cpt_row_index(&self, node: NodeId, values: &[usize]) -> usize {
        let mut idx = 0;
        for (&p, &v) in self.nodes[node].parents.iter().zip(values) {
            idx = idx * self.nodes[p].cardinality() + v;
        }
        idx
    }

    /// Deterministic topological order: every node after its parents, ties
    /// broken by node id.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let parents_of: Vec<Vec<NodeId>> = self.nodes.iter().map(|s| s.parents.clone()).collect();
        kahn_order(&parents_of)
    }

    /// `P(x) = prod_i P(x_i | pa_i)` for a full assignment.
    pub fn joint_probability(&self, x: &Assignment) -> Result<f64> {
        let values = x.as_full()?;
        if values.len() != self.n() {
            return Err(Error::PartialAssignment);
        }
        let mut prob = 1.0;
        for i in 0..self.n() {
            let v = values[i];
            if v >= self.cardinality(i) {
                return Err(Error::ValueOutOfRange(i));
            }
            let parent_vals: Vec<usize> = self.nodes[i].parents.iter().map(|&p| values[p]).collect();
            let row = &self.cpts[i].rows[self.cpt_row_index(i, &parent_vals)];
            prob *= row[v];
        }
        Ok(prob)
    }

    /// Draw one full assignment by sampling nodes in topological order.
    pub fn ancestral_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut values = vec![0usize; self.n()];
        for i in 0..self.n() {
            let parent_vals: Vec<usize> = self.nodes[i].parents.iter().map(|&p| values[p]).collect();
            let row = &self.cpts[i].rows[self.cpt_row_index(i, &parent_vals)];
            values[i] = sample_categorical(row, rng);
        }
        Assignment::full(values)
    }

    /// Descendant sets (inclusive of the node itself).
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let n = self.n();
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for node in &self.nodes {
            for &p in &node.parents {
                children[p].push(node.node_id);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![id];
        seen[id] = true;
        while let Some(v) = stack.pop() {
            for &c in &children[v] {
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        (0..n).filter(|&v| seen[v]).collect()
    }

    /// Ancestor set of a node, inclusive.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.n()];
        let mut stack = vec![id];
        seen[id] = true;
        while let Some(v) = stack.pop() {
            for &p in &self.nodes[v].parents {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        (0..self.n()).filter(|&v| seen[v]).collect()
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Kahn's algorithm with a min-heap so ties resolve to the smallest id.
fn kahn_order(parents_of: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let n = parents_of.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for (v, parents) in parents_of.iter().enumerate() {
        indegree[v] = parents.len();
        for &p in parents {
            children[p].push(v);
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                heap.push(Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(Error::CycleDetected);
    }
    Ok(order)
}
