//! Dense categorical factors and variable elimination.

use crate::bn::{CausalNetwork, NodeId};

/// A nonnegative table over a sorted set of categorical variables, stored
/// row-major with the last variable varying fastest.
#[derive(Debug, Clone)]
pub struct Factor {
    pub vars: Vec<NodeId>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    /// Build a factor from a table given in an arbitrary variable order;
    /// variables are sorted ascending and the table permuted to match.
    pub fn from_table(vars: Vec<NodeId>, cards: Vec<usize>, values: Vec<f64>) -> Factor {
        debug_assert_eq!(cards.iter().product::<usize>(), values.len());
        let mut perm: Vec<usize> = (0..vars.len()).collect();
        perm.sort_by_key(|&i| vars[i]);
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Factor { vars, cards, values };
        }
        let sorted_vars: Vec<NodeId> = perm.iter().map(|&i| vars[i]).collect();
        let sorted_cards: Vec<usize> = perm.iter().map(|&i| cards[i]).collect();

        // stride of each original position in the original layout
        let mut orig_strides = vec![1usize; vars.len()];
        for i in (0..vars.len().saturating_sub(1)).rev() {
            orig_strides[i] = orig_strides[i + 1] * cards[i + 1];
        }
        let mut out = vec![0.0; values.len()];
        let mut digits = vec![0usize; vars.len()];
        for (new_idx, slot) in out.iter_mut().enumerate() {
            // decode new_idx in the sorted layout
            let mut rem = new_idx;
            for pos in (0..sorted_cards.len()).rev() {
                digits[pos] = rem % sorted_cards[pos];
                rem /= sorted_cards[pos];
            }
            let mut orig_idx = 0usize;
            for (pos, &p) in perm.iter().enumerate() {
                orig_idx += digits[pos] * orig_strides[p];
            }
            *slot = values[orig_idx];
        }
        Factor {
            vars: sorted_vars,
            cards: sorted_cards,
            values: out,
        }
    }

    /// CPT of one node as a factor over `parents U {node}`.
    pub fn from_cpt(network: &CausalNetwork, node: NodeId) -> Factor {
        let spec = network.node(node);
        let mut vars: Vec<NodeId> = spec.parents.clone();
        vars.push(node);
        let cards: Vec<usize> = vars.iter().map(|&v| network.cardinality(v)).collect();
        let values: Vec<f64> = network
            .cpt(node)
            .rows
            .iter()
            .flat_map(|row| row.iter().copied())
            .collect();
        Factor::from_table(vars, cards, values)
    }

    /// Pointwise product over the union of scopes.
    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars = Vec::with_capacity(self.vars.len() + other.vars.len());
        let mut cards = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() || j < other.vars.len() {
            if j >= other.vars.len() || (i < self.vars.len() && self.vars[i] < other.vars[j]) {
                vars.push(self.vars[i]);
                cards.push(self.cards[i]);
                i += 1;
            } else if i >= self.vars.len() || other.vars[j] < self.vars[i] {
                vars.push(other.vars[j]);
                cards.push(other.cards[j]);
                j += 1;
            } else {
                vars.push(self.vars[i]);
                cards.push(self.cards[i]);
                i += 1;
                j += 1;
            }
        }
        let strides_a = union_strides(&vars, &self.vars, &self.cards);
        let strides_b = union_strides(&vars, &other.vars, &other.cards);
        let total: usize = cards.iter().product();
        let mut values = vec![0.0; total];
        let mut digits = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for slot in values.iter_mut() {
            *slot = self.values[ia] * other.values[ib];
            // increment mixed-radix counter, updating both indices
            for pos in (0..vars.len()).rev() {
                digits[pos] += 1;
                ia += strides_a[pos];
                ib += strides_b[pos];
                if digits[pos] < cards[pos] {
                    break;
                }
                ia -= strides_a[pos] * cards[pos];
                ib -= strides_b[pos] * cards[pos];
                digits[pos] = 0;
            }
        }
        Factor { vars, cards, values }
    }

    /// Marginalize a variable out of the scope.
    pub fn sum_out(&self, var: NodeId) -> Factor {
        let pos = self
            .vars
            .iter()
            .position(|&v| v == var)
            .expect("variable not in scope");
        let vars: Vec<NodeId> = self
            .vars
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != pos)
            .map(|(_, &v)| v)
            .collect();
        let cards: Vec<usize> = self
            .cards
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != pos)
            .map(|(_, &c)| c)
            .collect();
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let k = self.cards[pos];
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for v in 0..k {
                let src = (o * k + v) * inner;
                let dst = o * inner;
                for r in 0..inner {
                    values[dst + r] += self.values[src + r];
                }
            }
        }
        Factor { vars, cards, values }
    }
}

fn union_strides(union_vars: &[NodeId], vars: &[NodeId], cards: &[usize]) -> Vec<usize> {
    let mut strides_in_f = vec![1usize; vars.len()];
    for i in (0..vars.len().saturating_sub(1)).rev() {
        strides_in_f[i] = strides_in_f[i + 1] * cards[i + 1];
    }
    union_vars
        .iter()
        .map(|&u| {
            vars.iter()
                .position(|&v| v == u)
                .map_or(0, |p| strides_in_f[p])
        })
        .collect()
}

/// Exact single-node marginal by variable elimination with a min-fill order.
/// Barren nodes are pruned first: only ancestors of the query matter.
pub fn marginal_by_elimination(network: &CausalNetwork, query: NodeId) -> Vec<f64> {
    let relevant = network.ancestors(query);
    let mut factors: Vec<Factor> = relevant
        .iter()
        .map(|&v| Factor::from_cpt(network, v))
        .collect();

    for var in min_fill_order(&factors, query) {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        let mut product = touching
            .into_iter()
            .reduce(|a, b| a.product(&b))
            .expect("eliminated variable appears in at least one factor");
        product = product.sum_out(var);
        factors = rest;
        if !product.vars.is_empty() || factors.is_empty() {
            factors.push(product);
        } else {
            // scalar factor: fold the constant into an arbitrary survivor
            for v in factors[0].values.iter_mut() {
                *v *= product.values[0];
            }
        }
    }

    let result = factors
        .into_iter()
        .reduce(|a, b| a.product(&b))
        .expect("query factor remains");
    debug_assert_eq!(result.vars, vec![query]);
    result.values
}

/// Greedy min-fill elimination order over every scope variable except the
/// query; ties broken by node id.
fn min_fill_order(factors: &[Factor], query: NodeId) -> Vec<NodeId> {
    use std::collections::{BTreeMap, BTreeSet};
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for f in factors {
        for &a in &f.vars {
            adj.entry(a).or_default();
            for &b in &f.vars {
                if a != b {
                    adj.entry(a).or_default().insert(b);
                }
            }
        }
    }
    let mut remaining: BTreeSet<NodeId> = adj.keys().copied().filter(|&v| v != query).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best = (usize::MAX, NodeId::MAX);
        for &v in &remaining {
            let nbrs: Vec<NodeId> = adj[&v]
                .iter()
                .copied()
                .filter(|n| remaining.contains(n) || *n == query)
                .collect();
            let mut fill = 0;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !adj[&a].contains(&b) {
                        fill += 1;
                    }
                }
            }
            if (fill, v) < best {
                best = (fill, v);
            }
        }
        let v = best.1;
        let nbrs: Vec<NodeId> = adj[&v]
            .iter()
            .copied()
            .filter(|n| remaining.contains(n) || *n == query)
            .collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj.get_mut(&a).unwrap().insert(b);
                adj.get_mut(&b).unwrap().insert(a);
            }
        }
        remaining.remove(&v);
        order.push(v);
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::Assignment;
    use crate::fixtures::chain2;

    fn enum_marginal(net: &CausalNetwork, node: NodeId, cat: usize) -> f64 {
        let cards: Vec<usize> = (0..net.n()).map(|i| net.cardinality(i)).collect();
        let total: usize = cards.iter().product();
        let mut p = 0.0;
        for code in 0..total {
            let mut rem = code;
            let mut values = vec![0usize; net.n()];
            for i in (0..net.n()).rev() {
                values[i] = rem % cards[i];
                rem /= cards[i];
            }
            if values[node] == cat {
                p += net.joint_probability(&Assignment::full(values)).unwrap();
            }
        }
        p
    }

    #[test]
    fn chain2_marginals_match_enumeration() {
        let net = chain2();
        for node in 0..2 {
            let m = marginal_by_elimination(&net, node);
            for cat in 0..2 {
                assert!((m[cat] - enum_marginal(&net, node, cat)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn product_and_sum_out_are_consistent() {
        let a = Factor::from_table(vec![0, 1], vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let b = Factor::from_table(vec![1, 2], vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = a.product(&b);
        assert_eq!(p.vars, vec![0, 1, 2]);
        // spot check: (x0=1, x1=0, x2=2) -> 0.3 * 3.0
        assert!((p.values[1 * 6 + 0 * 3 + 2] - 0.9).abs() < 1e-15);
        let s = p.sum_out(2);
        assert_eq!(s.vars, vec![0, 1]);
        assert!((s.values[0] - 0.1 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn from_table_sorts_variables() {
        // table over (child=0, parent=2) declared parent-last
        let f = Factor::from_table(vec![2, 0], vec![2, 3], vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(f.vars, vec![0, 2]);
        assert_eq!(f.cards, vec![3, 2]);
        // original (x2=1, x0=2) = 6 -> new index (x0=2, x2=1)
        assert!((f.values[2 * 2 + 1] - 6.0).abs() < 1e-15);
    }
}
