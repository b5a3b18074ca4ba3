//! Single-node marginal tables and the oracle bundle consumed by recovery.

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::bn::{Assignment, CausalNetwork, NodeId};
use crate::error::{Error, Result};
use crate::factor::marginal_by_elimination;
use crate::intervention::{enumerate_components, surgery, InterventionId};
use crate::mixture::MixtureSpec;

/// Threshold under which a base marginal is treated as structurally zero and
/// its category excluded from recovery.
pub const ZERO_CATEGORY_TOL: f64 = 1e-15;

/// Per-node marginal distributions `(node, category) -> probability`, in
/// canonical node/category order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    rows: Vec<Vec<f64>>,
}

impl MarginalTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (j, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < -1e-12 || p > 1.0 + 1e-9) {
                return Err(Error::Schema(format!("marginal row {j} is not a distribution")));
            }
        }
        Ok(MarginalTable { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, node: NodeId) -> &[f64] {
        &self.rows[node]
    }

    pub fn get(&self, node: NodeId, category: usize) -> f64 {
        self.rows[node][category]
    }

    pub fn max_abs_diff(&self, other: &MarginalTable) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// JSON encoding `{node name: {category label: probability}}`.
    pub fn to_json(&self, network: &CausalNetwork) -> Value {
        let mut doc = Map::new();
        for (j, row) in self.rows.iter().enumerate() {
            let spec = network.node(j);
            let mut inner = Map::new();
            for (k, &p) in row.iter().enumerate() {
                inner.insert(spec.categories[k].clone(), json!(p));
            }
            doc.insert(spec.name.clone(), Value::Object(inner));
        }
        Value::Object(doc)
    }

    pub fn from_json(doc: &Value, network: &CausalNetwork) -> Result<Self> {
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Schema("marginal table must be an object".into()))?;
        let mut rows = Vec::with_capacity(network.n());
        for j in 0..network.n() {
            let spec = network.node(j);
            let inner = obj
                .get(&spec.name)
                .and_then(Value::as_object)
                .ok_or_else(|| Error::Schema(format!("missing node `{}`", spec.name)))?;
            let mut row = Vec::with_capacity(spec.cardinality());
            for label in &spec.categories {
                let p = inner
                    .get(label)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| Error::Schema(format!("missing `{}.{label}`", spec.name)))?;
                row.push(p);
            }
            rows.push(row);
        }
        MarginalTable::new(rows)
    }
}

/// Exact marginals `P(X_j = beta)` of every node, by variable elimination.
pub fn exact_marginals(network: &CausalNetwork) -> MarginalTable {
    let rows: Vec<Vec<f64>> = (0..network.n())
        .into_par_iter()
        .map(|j| marginal_by_elimination(network, j))
        .collect();
    MarginalTable { rows }
}

/// Exact marginals of every interventional component, indexed
/// `[node][category]`. The `Phi` component equals the base table.
pub fn interventional_marginals(network: &CausalNetwork) -> Result<Vec<Vec<MarginalTable>>> {
    let ids: Vec<InterventionId> = enumerate_components(network)
        .into_iter()
        .filter(|id| !id.is_phi())
        .collect();
    let tables: Vec<MarginalTable> = ids
        .par_iter()
        .map(|&id| {
            let cut = surgery(network, id)?;
            Ok(exact_marginals(&cut))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Vec<MarginalTable>> = (0..network.n()).map(|_| Vec::new()).collect();
    for (id, table) in ids.into_iter().zip(tables) {
        if let InterventionId::Do { node, .. } = id {
            out[node].push(table);
        }
    }
    Ok(out)
}

/// Relative category frequencies from full-assignment samples.
pub fn empirical_marginals(
    samples: &[Assignment],
    network: &CausalNetwork,
) -> Result<MarginalTable> {
    if samples.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut counts: Vec<Vec<u64>> = (0..network.n())
        .map(|j| vec![0u64; network.cardinality(j)])
        .collect();
    for sample in samples {
        let values = sample.as_full()?;
        if values.len() != network.n() {
            return Err(Error::PartialAssignment);
        }
        for (j, &v) in values.iter().enumerate() {
            if v >= network.cardinality(j) {
                return Err(Error::ValueOutOfRange(j));
            }
            counts[j][v] += 1;
        }
    }
    let m = samples.len() as f64;
    let rows = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / m).collect())
        .collect();
    Ok(MarginalTable { rows })
}

/// `p_mix(j,b) = sum_{i,a} p_{i,a}(j,b) pi_{i,a} + p(j,b) pi_phi`.
pub fn mixture_marginals_exact(
    base: &MarginalTable,
    interventional: &[Vec<MarginalTable>],
    spec: &MixtureSpec,
) -> Result<MarginalTable> {
    let n = base.n();
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|j| base.row(j).iter().map(|&p| p * spec.pi_phi).collect())
        .collect();
    for (&(i, alpha), &weight) in spec.do_proportions() {
        if weight == 0.0 {
            continue;
        }
        let table = interventional
            .get(i)
            .and_then(|per_cat| per_cat.get(alpha))
            .ok_or(Error::MissingComponent)?;
        for j in 0..n {
            for (k, slot) in rows[j].iter_mut().enumerate() {
                *slot += table.get(j, k) * weight;
            }
        }
    }
    Ok(MarginalTable { rows })
}

/// Everything recovery is allowed to see: base, interventional and mixture
/// marginals (the latter possibly estimated from samples).
#[derive(Debug, Clone)]
pub struct OracleBundle {
    pub base: MarginalTable,
    /// `[node][category]`, covering every non-`Phi` component.
    pub interventional: Vec<Vec<MarginalTable>>,
    pub mix: MarginalTable,
    pub mix_is_estimate: bool,
    pub sample_count: Option<u64>,
    /// Categories whose base marginal is structurally zero; their proportion
    /// is pinned to 0 and they are dropped from every linear system.
    pub zero_categories: Vec<Vec<bool>>,
}

impl OracleBundle {
    pub fn new(
        base: MarginalTable,
        interventional: Vec<Vec<MarginalTable>>,
        mix: MarginalTable,
        mix_is_estimate: bool,
        sample_count: Option<u64>,
    ) -> Result<Self> {
        let n = base.n();
        if interventional.len() != n || mix.n() != n {
            return Err(Error::MissingComponent);
        }
        for (j, per_cat) in interventional.iter().enumerate() {
            if per_cat.len() != base.row(j).len() {
                return Err(Error::MissingComponent);
            }
        }
        let zero_categories = base
            .rows
            .iter()
            .map(|row| row.iter().map(|&p| p <= ZERO_CATEGORY_TOL).collect())
            .collect();
        Ok(OracleBundle {
            base,
            interventional,
            mix,
            mix_is_estimate,
            sample_count,
            zero_categories,
        })
    }

    /// Bundle with the mixture marginal computed exactly from a known spec.
    pub fn exact(network: &CausalNetwork, spec: &MixtureSpec) -> Result<Self> {
        let base = exact_marginals(network);
        let interventional = interventional_marginals(network)?;
        let mix = mixture_marginals_exact(&base, &interventional, spec)?;
        OracleBundle::new(base, interventional, mix, false, None)
    }

    /// Bundle whose mixture marginal is estimated from joint samples.
    pub fn estimated(network: &CausalNetwork, samples: &[Assignment]) -> Result<Self> {
        let base = exact_marginals(network);
        let interventional = interventional_marginals(network)?;
        let mix = empirical_marginals(samples, network)?;
        OracleBundle::new(base, interventional, mix, true, Some(samples.len() as u64))
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    /// Marginal table of one component; `Phi` maps to the base table.
    pub fn table_for(&self, id: InterventionId) -> Result<&MarginalTable> {
        match id {
            InterventionId::Phi => Ok(&self.base),
            InterventionId::Do { node, category } => self
                .interventional
                .get(node)
                .and_then(|per_cat| per_cat.get(category))
                .ok_or(Error::MissingComponent),
        }
    }

    pub fn to_json(&self, network: &CausalNetwork) -> Value {
        let interventional: Vec<Value> = (0..self.n())
            .flat_map(|node| {
                (0..self.base.row(node).len()).map(move |category| (node, category))
            })
            .map(|(node, category)| {
                let id = InterventionId::Do { node, category };
                json!({
                    "intervention": id.to_json(network),
                    "table": self.interventional[node][category].to_json(network),
                })
            })
            .collect();
        json!({
            "base": self.base.to_json(network),
            "interventional": interventional,
            "mix": self.mix.to_json(network),
            "mix_is_estimate": self.mix_is_estimate,
            "sample_count": self.sample_count,
        })
    }

    pub fn from_json(doc: &Value, network: &CausalNetwork) -> Result<Self> {
        let base = MarginalTable::from_json(
            doc.get("base").ok_or_else(|| Error::Schema("missing `base`".into()))?,
            network,
        )?;
        let mix = MarginalTable::from_json(
            doc.get("mix").ok_or_else(|| Error::Schema("missing `mix`".into()))?,
            network,
        )?;
        let mut interventional: Vec<Vec<Option<MarginalTable>>> = (0..network.n())
            .map(|j| vec![None; network.cardinality(j)])
            .collect();
        let entries = doc
            .get("interventional")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Schema("missing `interventional`".into()))?;
        for entry in entries {
            let id_doc: crate::intervention::InterventionIdJson = serde_json::from_value(
                entry
                    .get("intervention")
                    .ok_or_else(|| Error::Schema("missing `intervention`".into()))?
                    .clone(),
            )?;
            let id = InterventionId::from_json(&id_doc, network)?;
            let table = MarginalTable::from_json(
                entry
                    .get("table")
                    .ok_or_else(|| Error::Schema("missing `table`".into()))?,
                network,
            )?;
            match id {
                InterventionId::Do { node, category } => {
                    interventional[node][category] = Some(table);
                }
                InterventionId::Phi => return Err(Error::Schema("phi has no entry".into())),
            }
        }
        let interventional: Vec<Vec<MarginalTable>> = interventional
            .into_iter()
            .map(|per_cat| per_cat.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::MissingComponent)?;
        let mix_is_estimate = doc
            .get("mix_is_estimate")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        let sample_count = doc.get("sample_count").and_then(Value::as_u64);
        OracleBundle::new(base, interventional, mix, mix_is_estimate, sample_count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain2, coin};
    use crate::mixture::MixtureSpec;

    #[test]
    fn chain2_exact_marginals() {
        let net = chain2();
        let t = exact_marginals(&net);
        assert!((t.get(0, 1) - 0.6).abs() < 1e-14);
        // 0.6*0.9 + 0.4*0.2 = 0.62
        assert!((t.get(1, 1) - 0.62).abs() < 1e-14);
    }

    #[test]
    fn single_node_marginals_are_cpt() {
        let net = coin(0.3);
        let t = exact_marginals(&net);
        assert!((t.get(0, 0) - 0.3).abs() < 1e-15);
        assert!((t.get(0, 1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn interventional_tables_chain2() {
        let net = chain2();
        let tables = interventional_marginals(&net).unwrap();
        // do(A=1): P(B=1)=0.9, P(A=1)=1
        assert!((tables[0][1].get(1, 1) - 0.9).abs() < 1e-14);
        assert!((tables[0][1].get(0, 1) - 1.0).abs() < 1e-14);
        // do(B=0): P(A=1)=0.6, P(B=0)=1
        assert!((tables[1][0].get(0, 1) - 0.6).abs() < 1e-14);
        assert!((tables[1][0].get(1, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empirical_counting() {
        let net = chain2();
        let samples = vec![Assignment::full(vec![1, 0]), Assignment::full(vec![1, 1])];
        let t = empirical_marginals(&samples, &net).unwrap();
        assert!((t.get(0, 1) - 1.0).abs() < 1e-15);
        assert!((t.get(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empirical_single_sample_point_mass() {
        let net = chain2();
        let t = empirical_marginals(&[Assignment::full(vec![0, 1])], &net).unwrap();
        assert!((t.get(0, 0) - 1.0).abs() < 1e-15);
        assert!((t.get(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_set_rejected() {
        let net = chain2();
        match empirical_marginals(&[], &net) {
            Err(Error::EmptySampleSet) => {}
            other => panic!("expected EmptySampleSet, got {other:?}"),
        }
    }

    #[test]
    fn mixture_marginals_chain2() {
        let net = chain2();
        let base = exact_marginals(&net);
        let inter = interventional_marginals(&net).unwrap();
        let spec = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        let mix = mixture_marginals_exact(&base, &inter, &spec).unwrap();
        assert!((mix.get(0, 1) - 0.8).abs() < 1e-14);
        assert!((mix.get(1, 1) - 0.76).abs() < 1e-14);
    }

    #[test]
    fn phi_only_mixture_is_base() {
        let net = chain2();
        let base = exact_marginals(&net);
        let inter = interventional_marginals(&net).unwrap();
        let spec = MixtureSpec::from_pairs(1.0, vec![]).unwrap();
        let mix = mixture_marginals_exact(&base, &inter, &spec).unwrap();
        assert!(mix.max_abs_diff(&base) < 1e-15);
    }

    #[test]
    fn example1_single_node_mixture() {
        // q = (1 - pi_H - pi_T) p + pi_H with p=0.6, pi_H=0.2, pi_T=0
        let net = coin(0.6);
        let base = exact_marginals(&net);
        let inter = interventional_marginals(&net).unwrap();
        let spec = MixtureSpec::from_pairs(0.8, vec![((0, 0), 0.2)]).unwrap();
        let mix = mixture_marginals_exact(&base, &inter, &spec).unwrap();
        assert!((mix.get(0, 0) - 0.68).abs() < 1e-14);
    }

    #[test]
    fn mixture_is_linear_in_proportions() {
        let net = chain2();
        let base = exact_marginals(&net);
        let inter = interventional_marginals(&net).unwrap();
        let s1 = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        let s2 = MixtureSpec::from_pairs(0.3, vec![((1, 0), 0.7)]).unwrap();
        let blended = MixtureSpec::from_pairs(0.4, vec![((0, 1), 0.25), ((1, 0), 0.35)]).unwrap();
        let m1 = mixture_marginals_exact(&base, &inter, &s1).unwrap();
        let m2 = mixture_marginals_exact(&base, &inter, &s2).unwrap();
        let mb = mixture_marginals_exact(&base, &inter, &blended).unwrap();
        for j in 0..2 {
            for k in 0..2 {
                let lin = 0.5 * m1.get(j, k) + 0.5 * m2.get(j, k);
                assert!((lin - mb.get(j, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bundle_json_roundtrip() {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        let bundle = OracleBundle::exact(&net, &spec).unwrap();
        let doc = bundle.to_json(&net);
        let back = OracleBundle::from_json(&doc, &net).unwrap();
        assert!(bundle.base.max_abs_diff(&back.base) < 1e-15);
        assert!(bundle.mix.max_abs_diff(&back.mix) < 1e-15);
        assert_eq!(bundle.mix_is_estimate, back.mix_is_estimate);
    }
}
