//! Mixing proportions, mixture sampling and benchmark instance generation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::bn::{Assignment, CausalNetwork, NodeId};
use crate::error::{Error, Result};
use crate::intervention::{surgery, InterventionId};
use crate::marginals::{exact_marginals, ZERO_CATEGORY_TOL};

/// Mass the no-intervention component gets in generated instances.
pub const INSTANCE_PI_PHI: f64 = 0.2;

/// Mixing proportions over the component set: `pi_phi` plus a sparse map of
/// do-component proportions (missing entries are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub pi_phi: f64,
    pi: BTreeMap<(NodeId, usize), f64>,
}

impl MixtureSpec {
    pub fn from_pairs(pi_phi: f64, pairs: Vec<((NodeId, usize), f64)>) -> Result<Self> {
        let mut pi = BTreeMap::new();
        for (key, weight) in pairs {
            if pi.insert(key, weight).is_some() {
                return Err(Error::InvalidIntervention);
            }
        }
        let spec = MixtureSpec { pi_phi, pi };
        spec.check_simplex()?;
        Ok(spec)
    }

    pub fn phi_only() -> Self {
        MixtureSpec {
            pi_phi: 1.0,
            pi: BTreeMap::new(),
        }
    }

    pub fn get(&self, node: NodeId, category: usize) -> f64 {
        self.pi.get(&(node, category)).copied().unwrap_or(0.0)
    }

    pub fn do_proportions(&self) -> impl Iterator<Item = (&(NodeId, usize), &f64)> {
        self.pi.iter()
    }

    /// Number of strictly positive do-components.
    pub fn support_size(&self) -> usize {
        self.pi.values().filter(|&&w| w > 0.0).count()
    }

    pub(crate) fn check_simplex(&self) -> Result<()> {
        if self.pi_phi < 0.0 || self.pi.values().any(|&w| w < 0.0) {
            return Err(Error::NegativeProportion);
        }
        let total: f64 = self.pi_phi + self.pi.values().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::SumNotOne(total));
        }
        Ok(())
    }

    /// Check all invariants plus that every do-id targets a real
    /// node/category of the network.
    pub fn validate(&self, network: &CausalNetwork) -> Result<()> {
        self.check_simplex()?;
        for &(node, category) in self.pi.keys() {
            if node >= network.n() || category >= network.cardinality(node) {
                return Err(Error::InvalidIntervention);
            }
        }
        Ok(())
    }

    pub fn to_json(&self, network: &CausalNetwork) -> Value {
        let props: Vec<Value> = self
            .pi
            .iter()
            .map(|(&(node, category), &prob)| {
                json!({
                    "node": network.node(node).name,
                    "category": network.node(node).categories[category],
                    "prob": prob,
                })
            })
            .collect();
        json!({ "pi_phi": self.pi_phi, "proportions": props })
    }

    pub fn from_json(doc: &Value, network: &CausalNetwork) -> Result<Self> {
        let pi_phi = doc
            .get("pi_phi")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Schema("missing `pi_phi`".into()))?;
        let mut pairs = Vec::new();
        if let Some(props) = doc.get("proportions") {
            let props = props
                .as_array()
                .ok_or_else(|| Error::Schema("`proportions` must be an array".into()))?;
            for p in props {
                let node_name = p
                    .get("node")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Schema("missing `node`".into()))?;
                let cat_label = p
                    .get("category")
                    .and_then(Value::as_str)
                    .ok_or_else(|| Error::Schema("missing `category`".into()))?;
                let prob = p
                    .get("prob")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Schema("missing `prob`".into()))?;
                let node = network
                    .node_by_name(node_name)
                    .ok_or(Error::InvalidIntervention)?;
                let category = network
                    .category_index(node, cat_label)
                    .ok_or(Error::InvalidIntervention)?;
                pairs.push(((node, category), prob));
            }
        }
        MixtureSpec::from_pairs(pi_phi, pairs)
    }
}

/// A generated benchmark instance: ground-truth proportions plus the
/// per-node excluded category that makes them identifiable.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub spec: MixtureSpec,
    /// Excluded category `alpha_i` per node; `pi_{i, alpha_i} = 0`.
    pub excluded: Vec<usize>,
    pub n_ivn: usize,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn validate(&self, network: &CausalNetwork) -> Result<()> {
        self.spec.validate(network)?;
        if self.excluded.len() != network.n() {
            return Err(Error::InvalidIntervention);
        }
        for (i, &alpha) in self.excluded.iter().enumerate() {
            if alpha >= network.cardinality(i) {
                return Err(Error::InvalidIntervention);
            }
            if self.spec.get(i, alpha) != 0.0 {
                return Err(Error::InvalidIntervention);
            }
        }
        if self.spec.support_size() != self.n_ivn {
            return Err(Error::InvalidIntervention);
        }
        Ok(())
    }

    pub fn to_json(&self, network: &CausalNetwork) -> Value {
        let mut excluded = Map::new();
        for (i, &alpha) in self.excluded.iter().enumerate() {
            excluded.insert(
                network.node(i).name.clone(),
                json!(network.node(i).categories[alpha]),
            );
        }
        json!({
            "n_ivn": self.n_ivn,
            "seed": self.seed,
            "excluded": Value::Object(excluded),
            "spec": self.spec.to_json(network),
        })
    }

    pub fn from_json(doc: &Value, network: &CausalNetwork) -> Result<Self> {
        let n_ivn = doc
            .get("n_ivn")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Schema("missing `n_ivn`".into()))? as usize;
        let seed = doc
            .get("seed")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Schema("missing `seed`".into()))?;
        let spec = MixtureSpec::from_json(
            doc.get("spec").ok_or_else(|| Error::Schema("missing `spec`".into()))?,
            network,
        )?;
        let excluded_doc = doc
            .get("excluded")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Schema("missing `excluded`".into()))?;
        let mut excluded = vec![0usize; network.n()];
        for (i, slot) in excluded.iter_mut().enumerate() {
            let name = &network.node(i).name;
            let label = excluded_doc
                .get(name)
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Schema(format!("missing excluded category for `{name}`")))?;
            *slot = network
                .category_index(i, label)
                .ok_or(Error::InvalidIntervention)?;
        }
        Ok(ProblemInstance {
            spec,
            excluded,
            n_ivn,
            seed,
        })
    }
}

/// Draw `m` samples from the mixture: pick the latent component, then
/// ancestral-sample the corresponding surgered network.
pub fn sample_mixture<R: Rng + ?Sized>(
    network: &CausalNetwork,
    spec: &MixtureSpec,
    m: usize,
    rng: &mut R,
) -> Result<Vec<Assignment>> {
    spec.validate(network)?;
    // components in canonical order with nonzero mass; networks built once
    let mut components: Vec<(f64, CausalNetwork)> = Vec::new();
    if spec.pi_phi > 0.0 {
        components.push((spec.pi_phi, network.clone()));
    }
    for (&(node, category), &weight) in spec.do_proportions() {
        if weight > 0.0 {
            components.push((weight, surgery(network, InterventionId::Do { node, category })?));
        }
    }
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    let mut samples = Vec::with_capacity(m);
    for _ in 0..m {
        let mut u: f64 = rng.random::<f64>() * total;
        let mut chosen = components.len() - 1;
        for (idx, (w, _)) in components.iter().enumerate() {
            if u < *w {
                chosen = idx;
                break;
            }
            u -= w;
        }
        samples.push(components[chosen].1.ancestral_sample(rng));
    }
    Ok(samples)
}

/// Generate a benchmark instance with `n_ivn` active do-components.
///
/// Per node an excluded category is drawn uniformly and pinned to zero;
/// `n_ivn` distinct eligible (node, category) pairs get Dirichlet(1) weights
/// scaled to total 0.8, with the remaining 0.2 on the base distribution.
/// Deterministic given `(network, n_ivn, seed)`.
pub fn generate_instance(
    network: &CausalNetwork,
    n_ivn: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = exact_marginals(network);

    let mut excluded = Vec::with_capacity(network.n());
    for i in 0..network.n() {
        let retained: Vec<usize> = (0..network.cardinality(i))
            .filter(|&k| base.get(i, k) > ZERO_CATEGORY_TOL)
            .collect();
        let pick = retained[rng.random_range(0..retained.len())];
        excluded.push(pick);
    }

    if n_ivn == 0 {
        return Ok(ProblemInstance {
            spec: MixtureSpec::phi_only(),
            excluded,
            n_ivn: 0,
            seed,
        });
    }

    let mut eligible: Vec<(NodeId, usize)> = Vec::new();
    for i in 0..network.n() {
        for k in 0..network.cardinality(i) {
            if k != excluded[i] && base.get(i, k) > ZERO_CATEGORY_TOL {
                eligible.push((i, k));
            }
        }
    }
    if n_ivn > eligible.len() {
        return Err(Error::TooManyInterventions {
            requested: n_ivn,
            available: eligible.len(),
        });
    }

    // partial Fisher-Yates picks n_ivn distinct pairs uniformly
    for t in 0..n_ivn {
        let swap = rng.random_range(t..eligible.len());
        eligible.swap(t, swap);
    }
    let chosen = &eligible[..n_ivn];

    // Dirichlet(1) over the support, scaled to 0.8 total mass
    let mut weights: Vec<f64> = (0..n_ivn)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w *= (1.0 - INSTANCE_PI_PHI) / total;
    }

    let pairs: Vec<((NodeId, usize), f64)> =
        chosen.iter().copied().zip(weights).collect();
    let spec = MixtureSpec::from_pairs(INSTANCE_PI_PHI, pairs)?;
    Ok(ProblemInstance {
        spec,
        excluded,
        n_ivn,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::chain2;
    use crate::marginals::{
        empirical_marginals, interventional_marginals, mixture_marginals_exact,
    };

    #[test]
    fn phi_only_spec_validates() {
        let net = chain2();
        assert!(MixtureSpec::phi_only().validate(&net).is_ok());
    }

    #[test]
    fn sum_not_one_rejected() {
        match MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.6)]) {
            Err(Error::SumNotOne(_)) => {}
            other => panic!("expected SumNotOne, got {other:?}"),
        }
    }

    #[test]
    fn negative_proportion_rejected() {
        match MixtureSpec::from_pairs(1.1, vec![((0, 1), -0.1)]) {
            Err(Error::NegativeProportion) => {}
            other => panic!("expected NegativeProportion, got {other:?}"),
        }
    }

    #[test]
    fn invalid_do_target_rejected() {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.5, vec![((9, 0), 0.5)]).unwrap();
        match spec.validate(&net) {
            Err(Error::InvalidIntervention) => {}
            other => panic!("expected InvalidIntervention, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_mixture_sampling() {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.0, vec![((0, 1), 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in sample_mixture(&net, &spec, 200, &mut rng).unwrap() {
            assert_eq!(s.get(0), Some(1));
        }
    }

    #[test]
    fn mixture_sampling_matches_exact_marginals() {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = sample_mixture(&net, &spec, 1_000_000, &mut rng).unwrap();
        let empirical = empirical_marginals(&samples, &net).unwrap();
        let base = crate::marginals::exact_marginals(&net);
        let inter = interventional_marginals(&net).unwrap();
        let exact = mixture_marginals_exact(&base, &inter, &spec).unwrap();
        assert!(empirical.max_abs_diff(&exact) < 0.005);
        assert!((empirical.get(0, 1) - 0.8).abs() < 0.005);
    }

    #[test]
    fn instance_n0_is_phi_only() {
        let net = chain2();
        let inst = generate_instance(&net, 0, 1).unwrap();
        assert_eq!(inst.spec.pi_phi, 1.0);
        assert_eq!(inst.spec.support_size(), 0);
        inst.validate(&net).unwrap();
    }

    #[test]
    fn instance_has_requested_support() {
        let net = chain2();
        let inst = generate_instance(&net, 2, 5).unwrap();
        assert_eq!(inst.spec.support_size(), 2);
        assert!((inst.spec.pi_phi - 0.2).abs() < 1e-12);
        inst.validate(&net).unwrap();
    }

    #[test]
    fn instance_generation_is_deterministic() {
        let net = chain2();
        let a = generate_instance(&net, 2, 42).unwrap();
        let b = generate_instance(&net, 2, 42).unwrap();
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.excluded, b.excluded);
    }

    #[test]
    fn too_many_interventions_rejected() {
        let net = chain2();
        // eligible pairs = sum(|C_i| - 1) = 2
        match generate_instance(&net, 3, 0) {
            Err(Error::TooManyInterventions { .. }) => {}
            other => panic!("expected TooManyInterventions, got {other:?}"),
        }
    }

    #[test]
    fn spec_json_roundtrip() {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.3, vec![((0, 1), 0.5), ((1, 0), 0.2)]).unwrap();
        let doc = spec.to_json(&net);
        let back = MixtureSpec::from_json(&doc, &net).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn instance_json_roundtrip() {
        let net = chain2();
        let inst = generate_instance(&net, 2, 9).unwrap();
        let doc = inst.to_json(&net);
        let back = ProblemInstance::from_json(&doc, &net).unwrap();
        assert_eq!(inst.spec, back.spec);
        assert_eq!(inst.excluded, back.excluded);
        assert_eq!(inst.n_ivn, back.n_ivn);
        assert_eq!(inst.seed, back.seed);
    }
}
