//! Small networks shared by tests, docs and the CLI examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bn::{CausalNetwork, Cpt, NodeSpec};

/// Two binary nodes A -> B with P(A=1)=0.6, P(B=1|A=0)=0.2, P(B=1|A=1)=0.9.
pub fn chain2() -> CausalNetwork {
    let nodes = vec![
        NodeSpec {
            node_id: 0,
            name: "A".into(),
            categories: vec!["0".into(), "1".into()],
            parents: vec![],
        },
        NodeSpec {
            node_id: 1,
            name: "B".into(),
            categories: vec!["0".into(), "1".into()],
            parents: vec![0],
        },
    ];
    let cpts = vec![
        Cpt {
            node_id: 0,
            rows: vec![vec![0.4, 0.6]],
        },
        Cpt {
            node_id: 1,
            rows: vec![vec![0.8, 0.2], vec![0.1, 0.9]],
        },
    ];
    CausalNetwork::new(nodes, cpts).expect("chain2 fixture is well-formed")
}

/// Single binary node with P(X=first)=p.
pub fn coin(p: f64) -> CausalNetwork {
    let nodes = vec![NodeSpec {
        node_id: 0,
        name: "X".into(),
        categories: vec!["H".into(), "T".into()],
        parents: vec![],
    }];
    let cpts = vec![Cpt {
        node_id: 0,
        rows: vec![vec![p, 1.0 - p]],
    }];
    CausalNetwork::new(nodes, cpts).expect("coin fixture is well-formed")
}

/// Path of the bundled ALARM benchmark network.
pub fn alarm_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../assets/alarm.bif")
}

/// The 37-node ALARM monitoring network (46 edges, 105 categories).
pub fn alarm() -> CausalNetwork {
    let text = std::fs::read_to_string(alarm_path()).expect("bundled alarm.bif is readable");
    crate::bif::parse_bif(&text).expect("bundled alarm.bif parses")
}

/// Random benchmark network: up to `max_nodes` nodes with 2..=`max_card`
/// categories and in-degree at most `max_indegree`. CPT rows are Dirichlet
/// draws blended with the uniform distribution so every entry is bounded
/// away from zero and all marginals stay strictly positive. Deterministic
/// given the seed.
pub fn random_network(seed: u64, max_nodes: usize, max_card: usize, max_indegree: usize) -> CausalNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_1234_5678);
    let n = rng.random_range(3..=max_nodes.max(3));

    let mut cards = Vec::with_capacity(n);
    let mut joint: u64 = 1;
    for _ in 0..n {
        let mut card = rng.random_range(2..=max_card.max(2));
        // cap the joint state space so enumeration oracles stay cheap
        if joint.saturating_mul(card as u64) > 100_000 {
            card = 2;
        }
        joint = joint.saturating_mul(card as u64);
        cards.push(card);
    }

    let mut nodes = Vec::with_capacity(n);
    let mut cpts = Vec::with_capacity(n);
    for i in 0..n {
        let mut parents: Vec<usize> = Vec::new();
        if i > 0 {
            let limit = max_indegree.min(i).min(3);
            let indegree = rng.random_range(0..=limit);
            let mut pool: Vec<usize> = (0..i).collect();
            for t in 0..indegree {
                let swap = rng.random_range(t..pool.len());
                pool.swap(t, swap);
            }
            parents = pool[..indegree].to_vec();
            parents.sort_unstable();
        }
        let row_count: usize = parents.iter().map(|&p| cards[p]).product();
        let k = cards[i];
        let rows: Vec<Vec<f64>> = (0..row_count)
            .map(|_| {
                let mut row: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let sum: f64 = row.iter().sum();
                // blend toward uniform: keeps every entry >= 0.3/k
                row.iter_mut()
                    .map(|w| 0.7 * (*w / sum) + 0.3 / k as f64)
                    .collect()
            })
            .collect();
        nodes.push(NodeSpec {
            node_id: i,
            name: format!("N{i}"),
            categories: (0..k).map(|c| format!("c{c}")).collect(),
            parents: parents.clone(),
        });
        cpts.push(Cpt { node_id: i, rows });
    }
    CausalNetwork::new(nodes, cpts).expect("random network is well-formed by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alarm_dimensions() {
        let net = alarm();
        assert_eq!(net.n(), 37);
        assert_eq!(net.edge_count(), 46);
        assert_eq!(net.total_categories(), 105);
        let max_indegree = (0..net.n())
            .map(|i| net.node(i).parents.len())
            .max()
            .unwrap();
        assert_eq!(max_indegree, 4);
    }

    #[test]
    fn alarm_marginals_strictly_positive() {
        let net = alarm();
        let base = crate::marginals::exact_marginals(&net);
        for j in 0..net.n() {
            for &p in base.row(j) {
                assert!(p > 1e-6, "node {j} has a near-zero category: {p:e}");
            }
        }
    }
}
