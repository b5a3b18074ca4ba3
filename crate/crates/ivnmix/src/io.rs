//! Native JSON interchange: networks and experiment configurations.
//!
//! Network schema: `{name, nodes: [{name, categories, parents}], cpts:
//! [{node, rows}]}` with parents referenced by name. Marginal tables,
//! mixture specs and problem instances have their own codecs next to their
//! types; this module owns the network document and the experiment config.

use std::path::PathBuf;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::bn::{CausalNetwork, Cpt, NodeSpec};
use crate::error::{Error, Result};

fn schema(path: &str) -> Error {
    Error::Schema(path.to_string())
}

fn range(field: &str, detail: impl Into<String>) -> Error {
    Error::Range {
        field: field.to_string(),
        detail: detail.into(),
    }
}

pub fn network_to_json(network: &CausalNetwork) -> Value {
    let nodes: Vec<Value> = network
        .nodes()
        .iter()
        .map(|node| {
            json!({
                "name": node.name,
                "categories": node.categories,
                "parents": node
                    .parents
                    .iter()
                    .map(|&p| network.node(p).name.clone())
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    let cpts: Vec<Value> = network
        .nodes()
        .iter()
        .map(|node| {
            json!({
                "node": node.name,
                "rows": network.cpt(node.node_id).rows,
            })
        })
        .collect();
    json!({ "name": "network", "nodes": nodes, "cpts": cpts })
}

pub fn network_from_json(doc: &Value) -> Result<CausalNetwork> {
    let obj = doc.as_object().ok_or_else(|| schema("$"))?;
    let node_docs = obj
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("nodes"))?;
    let cpt_docs = obj
        .get("cpts")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("cpts"))?;

    let mut names = Vec::with_capacity(node_docs.len());
    for (i, node) in node_docs.iter().enumerate() {
        let name = node
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| schema(&format!("nodes[{i}].name")))?;
        names.push(name.to_string());
    }
    let id_of = |name: &str| names.iter().position(|n| n == name);

    let mut nodes = Vec::with_capacity(node_docs.len());
    for (i, node) in node_docs.iter().enumerate() {
        let categories: Vec<String> = node
            .get("categories")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(&format!("nodes[{i}].categories")))?
            .iter()
            .map(|c| c.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| schema(&format!("nodes[{i}].categories")))?;
        let parents: Vec<usize> = node
            .get("parents")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(&format!("nodes[{i}].parents")))?
            .iter()
            .map(|p| p.as_str().and_then(id_of))
            .collect::<Option<_>>()
            .ok_or_else(|| schema(&format!("nodes[{i}].parents")))?;
        nodes.push(NodeSpec {
            node_id: i,
            name: names[i].clone(),
            categories,
            parents,
        });
    }

    let mut cpts: Vec<Option<Cpt>> = vec![None; nodes.len()];
    for (i, cpt) in cpt_docs.iter().enumerate() {
        let node = cpt
            .get("node")
            .and_then(Value::as_str)
            .and_then(id_of)
            .ok_or_else(|| schema(&format!("cpts[{i}].node")))?;
        let rows: Vec<Vec<f64>> = cpt
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| schema(&format!("cpts[{i}].rows")))?
            .iter()
            .map(|row| {
                row.as_array().and_then(|cells| {
                    cells.iter().map(Value::as_f64).collect::<Option<Vec<_>>>()
                })
            })
            .collect::<Option<_>>()
            .ok_or_else(|| schema(&format!("cpts[{i}].rows")))?;
        if cpts[node].replace(Cpt { node_id: node, rows }).is_some() {
            return Err(schema(&format!("cpts[{i}].node (duplicate)")));
        }
    }
    let cpts: Vec<Cpt> = cpts
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| schema(&format!("cpts (missing node {})", names[i]))))
        .collect::<Result<_>>()?;
    CausalNetwork::new(nodes, cpts)
}

/// Either an exact mixture-marginal oracle or an m-sample estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SampleSize {
    Exact,
    Count(usize),
}

impl SampleSize {
    /// Value of the `m` column in metrics CSV.
    pub fn label(&self) -> String {
        match self {
            SampleSize::Exact => "exact".to_string(),
            SampleSize::Count(m) => m.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Exact,
    Dimm,
    Em,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Dimm => "dimm",
            Method::Em => "em",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "dimm" => Ok(Method::Dimm),
            "em" => Ok(Method::Em),
            other => Err(range("method", format!("unknown method `{other}`"))),
        }
    }
}

/// A full experiment description; lists sweep the cross product.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub network: PathBuf,
    pub n_ivn: Vec<usize>,
    pub samples: Vec<SampleSize>,
    pub methods: Vec<Method>,
    pub lambda: f64,
    pub epsilon: f64,
    pub restarts: usize,
    pub em_restarts: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// When false the `seconds` column is written as zero so reruns are
    /// byte-identical.
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(range("lambda", format!("{} not in [0, 1]", self.lambda)));
        }
        if self.epsilon <= 0.0 {
            return Err(range("epsilon", format!("{} must be > 0", self.epsilon)));
        }
        if self.restarts < 1 {
            return Err(range("restarts", "must be >= 1"));
        }
        if self.em_restarts < 1 {
            return Err(range("em_restarts", "must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(range("methods", "at least one method"));
        }
        if self.samples.iter().any(|s| *s == SampleSize::Count(0)) {
            return Err(range("samples", "sample count must be >= 1"));
        }
        Ok(())
    }
}

fn usize_list(doc: &Value, field: &str) -> Result<Vec<usize>> {
    let items: Vec<&Value> = match doc {
        Value::Array(a) => a.iter().collect(),
        single => vec![single],
    };
    items
        .into_iter()
        .map(|v| {
            v.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| schema(field))
        })
        .collect()
}

fn sample_list(doc: &Value) -> Result<Vec<SampleSize>> {
    let items: Vec<&Value> = match doc {
        Value::Array(a) => a.iter().collect(),
        single => vec![single],
    };
    items
        .into_iter()
        .map(|v| match v {
            Value::String(s) if s == "exact" => Ok(SampleSize::Exact),
            Value::Number(n) => n
                .as_u64()
                .map(|m| SampleSize::Count(m as usize))
                .ok_or_else(|| schema("samples")),
            _ => Err(schema("samples")),
        })
        .collect()
}

fn method_list(doc: &Value) -> Result<Vec<Method>> {
    let items: Vec<&Value> = match doc {
        Value::Array(a) => a.iter().collect(),
        single => vec![single],
    };
    items
        .into_iter()
        .map(|v| v.as_str().ok_or_else(|| schema("methods"))?.parse())
        .collect()
}

/// Parse and validate a config document, filling in the defaults
/// `lambda = 0.1`, `epsilon = 1e-5`, `restarts = 60`, `samples = exact`,
/// `methods = [dimm]`, `seed = 0`.
pub fn load_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let doc: Value = serde_json::from_str(text)?;
    let obj: &Map<String, Value> = doc.as_object().ok_or_else(|| schema("$"))?;

    let network = obj
        .get("network")
        .and_then(Value::as_str)
        .map(PathBuf::from)
        .ok_or_else(|| schema("network"))?;
    let n_ivn = match obj.get("n_ivn") {
        Some(v) => usize_list(v, "n_ivn")?,
        None => vec![0],
    };
    let samples = match obj.get("samples") {
        Some(v) => sample_list(v)?,
        None => vec![SampleSize::Exact],
    };
    let methods = match obj.get("methods") {
        Some(v) => method_list(v)?,
        None => vec![Method::Dimm],
    };
    let config = ExperimentConfig {
        network,
        n_ivn,
        samples,
        methods,
        lambda: match obj.get("lambda") {
            Some(v) => v.as_f64().ok_or_else(|| schema("lambda"))?,
            None => crate::dimm::DEFAULT_LAMBDA,
        },
        epsilon: match obj.get("epsilon") {
            Some(v) => v.as_f64().ok_or_else(|| schema("epsilon"))?,
            None => crate::dimm::DEFAULT_EPSILON,
        },
        restarts: match obj.get("restarts") {
            Some(v) => v.as_u64().ok_or_else(|| schema("restarts"))? as usize,
            None => crate::dimm::DEFAULT_RESTARTS,
        },
        em_restarts: match obj.get("em_restarts") {
            Some(v) => v.as_u64().ok_or_else(|| schema("em_restarts"))? as usize,
            None => crate::em::DEFAULT_RESTARTS,
        },
        seed: match obj.get("seed") {
            Some(v) => v.as_u64().ok_or_else(|| schema("seed"))?,
            None => 0,
        },
        output: obj
            .get("output")
            .map(|v| v.as_str().map(PathBuf::from).ok_or_else(|| schema("output")))
            .transpose()?,
        record_timing: match obj.get("record_timing") {
            Some(v) => v.as_bool().ok_or_else(|| schema("record_timing"))?,
            None => true,
        },
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{alarm, chain2, random_network};

    #[test]
    fn chain2_round_trip() {
        let net = chain2();
        let doc = network_to_json(&net);
        let back = network_from_json(&doc).unwrap();
        assert_eq!(net.nodes(), back.nodes());
        for i in 0..net.n() {
            assert_eq!(net.cpt(i).rows, back.cpt(i).rows);
        }
    }

    #[test]
    fn alarm_round_trip() {
        let net = alarm();
        let back = network_from_json(&network_to_json(&net)).unwrap();
        assert_eq!(back.n(), 37);
        assert_eq!(net.nodes(), back.nodes());
        for i in 0..net.n() {
            assert_eq!(net.cpt(i).rows, back.cpt(i).rows);
        }
    }

    #[test]
    fn random_round_trip_fixpoint() {
        for seed in 0..20 {
            let net = random_network(seed, 10, 4, 3);
            let doc = network_to_json(&net);
            let back = network_from_json(&doc).unwrap();
            assert_eq!(network_to_json(&back), doc, "seed {seed}");
        }
    }

    #[test]
    fn missing_cpts_key() {
        let doc = serde_json::json!({"name": "x", "nodes": []});
        match network_from_json(&doc) {
            Err(Error::Schema(path)) => assert_eq!(path, "cpts"),
            other => panic!("expected Schema, got {other:?}"),
        }
    }

    #[test]
    fn config_defaults() {
        let cfg = load_experiment_config(r#"{"network": "net.bif"}"#).unwrap();
        assert_eq!(cfg.lambda, 0.1);
        assert_eq!(cfg.epsilon, 1e-5);
        assert_eq!(cfg.restarts, 60);
        assert_eq!(cfg.samples, vec![SampleSize::Exact]);
        assert_eq!(cfg.methods, vec![Method::Dimm]);
        assert!(cfg.record_timing);
    }

    #[test]
    fn config_sweeps_and_scalars() {
        let cfg = load_experiment_config(
            r#"{"network": "n.bif", "n_ivn": [0, 5, 9], "samples": ["exact", 100000],
                "methods": ["dimm", "em"], "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_ivn, vec![0, 5, 9]);
        assert_eq!(
            cfg.samples,
            vec![SampleSize::Exact, SampleSize::Count(100_000)]
        );
        assert_eq!(cfg.methods, vec![Method::Dimm, Method::Em]);
        let scalar = load_experiment_config(
            r#"{"network": "n.bif", "n_ivn": 5, "samples": 1000, "methods": "em"}"#,
        )
        .unwrap();
        assert_eq!(scalar.n_ivn, vec![5]);
        assert_eq!(scalar.samples, vec![SampleSize::Count(1000)]);
    }

    #[test]
    fn lambda_out_of_range() {
        match load_experiment_config(r#"{"network": "n.bif", "lambda": 1.5}"#) {
            Err(Error::Range { field, .. }) => assert_eq!(field, "lambda"),
            other => panic!("expected Range, got {other:?}"),
        }
    }

    #[test]
    fn zero_samples_rejected() {
        match load_experiment_config(r#"{"network": "n.bif", "samples": 0}"#) {
            Err(Error::Range { field, .. }) => assert_eq!(field, "samples"),
            other => panic!("expected Range, got {other:?}"),
        }
    }
}
