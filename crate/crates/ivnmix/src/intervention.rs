//! Perfect interventions: graph surgery and the component set.

use serde::{Deserialize, Serialize};

use crate::bn::{CausalNetwork, NodeId};
use crate::error::{Error, Result};

/// Identity of a mixture component: the untouched network, or a single-node
/// do-intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterventionId {
    Phi,
    Do { node: NodeId, category: usize },
}

impl InterventionId {
    pub fn is_phi(&self) -> bool {
        matches!(self, InterventionId::Phi)
    }
}

/// JSON encoding of an [`InterventionId`]: the string `"phi"` or
/// `{"node": name, "category": label}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterventionIdJson {
    Phi(String),
    Do { node: String, category: String },
}

impl InterventionId {
    pub fn to_json(&self, network: &CausalNetwork) -> InterventionIdJson {
        match *self {
            InterventionId::Phi => InterventionIdJson::Phi("phi".into()),
            InterventionId::Do { node, category } => InterventionIdJson::Do {
                node: network.node(node).name.clone(),
                category: network.node(node).categories[category].clone(),
            },
        }
    }

    pub fn from_json(doc: &InterventionIdJson, network: &CausalNetwork) -> Result<Self> {
        match doc {
            InterventionIdJson::Phi(s) if s == "phi" => Ok(InterventionId::Phi),
            InterventionIdJson::Phi(s) => Err(Error::Schema(format!(
                "unknown intervention tag `{s}`"
            ))),
            InterventionIdJson::Do { node, category } => {
                let id = network
                    .node_by_name(node)
                    .ok_or(Error::InvalidIntervention)?;
                let cat = network
                    .category_index(id, category)
                    .ok_or(Error::InvalidIntervention)?;
                Ok(InterventionId::Do {
                    node: id,
                    category: cat,
                })
            }
        }
    }
}

/// Materialize a perfect intervention by surgery: drop the intervened node's
/// parents and replace its CPT by a point mass. `Phi` returns the network
/// unchanged.
pub fn surgery(network: &CausalNetwork, id: InterventionId) -> Result<CausalNetwork> {
    match id {
        InterventionId::Phi => Ok(network.clone()),
        InterventionId::Do { node, category } => {
            if node >= network.n() || category >= network.cardinality(node) {
                return Err(Error::InvalidIntervention);
            }
            let mut row = vec![0.0; network.cardinality(node)];
            row[category] = 1.0;
            network.with_replaced_node(node, Vec::new(), vec![row])
        }
    }
}

/// All components in canonical order: `Phi` first, then `Do(i, a)` with nodes
/// in stored (topological) order and categories in declared order. Length is
/// `sum_i |C_i| + 1`.
pub fn enumerate_components(network: &CausalNetwork) -> Vec<InterventionId> {
    let mut out = Vec::with_capacity(network.total_categories() + 1);
    out.push(InterventionId::Phi);
    for node in 0..network.n() {
        for category in 0..network.cardinality(node) {
            out.push(InterventionId::Do { node, category });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::Assignment;
    use crate::fixtures::{chain2, coin};

    /// Exact marginal by full-joint enumeration (independent of the
    /// variable-elimination path).
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
    fn surgery_do_a_changes_downstream() {
        let net = chain2();
        let cut = surgery(&net, InterventionId::Do { node: 0, category: 1 }).unwrap();
        assert!((enum_marginal(&cut, 1, 1) - 0.9).abs() < 1e-12);
        assert!((enum_marginal(&cut, 0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surgery_do_b_leaves_upstream() {
        let net = chain2();
        let cut = surgery(&net, InterventionId::Do { node: 1, category: 1 }).unwrap();
        assert!((enum_marginal(&cut, 0, 1) - 0.6).abs() < 1e-12);
        assert!((enum_marginal(&cut, 1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surgery_phi_is_identity() {
        let net = chain2();
        let same = surgery(&net, InterventionId::Phi).unwrap();
        assert_eq!(net, same);
    }

    #[test]
    fn surgery_invalid_target() {
        let net = chain2();
        match surgery(&net, InterventionId::Do { node: 5, category: 0 }) {
            Err(Error::InvalidIntervention) => {}
            other => panic!("expected InvalidIntervention, got {other:?}"),
        }
    }

    #[test]
    fn component_enumeration_chain2() {
        let net = chain2();
        let comps = enumerate_components(&net);
        assert_eq!(comps.len(), 5);
        assert_eq!(comps[0], InterventionId::Phi);
        assert_eq!(comps[1], InterventionId::Do { node: 0, category: 0 });
        assert_eq!(comps[4], InterventionId::Do { node: 1, category: 1 });
    }

    #[test]
    fn component_enumeration_single_node() {
        let net = coin(0.6);
        let comps = enumerate_components(&net);
        assert_eq!(
            comps,
            vec![
                InterventionId::Phi,
                InterventionId::Do { node: 0, category: 0 },
                InterventionId::Do { node: 0, category: 1 },
            ]
        );
    }

    #[test]
    fn non_descendant_invariance() {
        let net = chain2();
        // B's only non-descendant is A
        let cut = surgery(&net, InterventionId::Do { node: 1, category: 0 }).unwrap();
        for cat in 0..2 {
            let base = enum_marginal(&net, 0, cat);
            let post = enum_marginal(&cut, 0, cat);
            assert!((base - post).abs() < 1e-12);
        }
    }

    #[test]
    fn intervention_id_json_roundtrip() {
        let net = chain2();
        for id in enumerate_components(&net) {
            let doc = id.to_json(&net);
            let back = InterventionId::from_json(&doc, &net).unwrap();
            assert_eq!(id, back);
        }
    }
}
