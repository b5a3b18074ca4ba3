//! Exact recovery of mixing proportions from exact marginals.
//!
//! Per node the marginal identity yields a rank-deficient linear system
//! `A x = b` whose solution set is a line; intersecting the line with the
//! coordinate hyperplanes gives at most one nonnegative point, which is the
//! node's proportion vector. Sweeping nodes in topological order and feeding
//! recovered proportions forward recovers the whole mixture.

use crate::bn::NodeId;
use crate::error::{Error, Result};
use crate::marginals::OracleBundle;
use crate::mixture::MixtureSpec;

/// Default nonnegativity tolerance for exact bundles.
pub const DEFAULT_TOL: f64 = 1e-9;

/// One node's linear system over its retained categories.
///
/// `a_k` is the base marginal, `b_k` the mixture deviation corrected by the
/// already-recovered upstream proportions; the implicit matrix is
/// `A[k][l] = delta_{kl} - a_k`.
#[derive(Debug, Clone)]
pub struct NodeSystem {
    pub node: NodeId,
    /// Retained category indices (zero-probability categories dropped).
    pub categories: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl NodeSystem {
    pub fn k(&self) -> usize {
        self.a.len()
    }

    /// `A x - b` for a vector over the retained categories.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let total: f64 = x.iter().sum();
        self.a
            .iter()
            .zip(x)
            .zip(&self.b)
            .map(|((&a_k, &x_k), &b_k)| x_k - a_k * total - b_k)
            .collect()
    }
}

/// The one-dimensional solution set of a [`NodeSystem`], parametrized by the
/// pivot coordinate: `x_k = slope_k * x_pivot + intercept_k`.
#[derive(Debug, Clone)]
pub struct SolutionLine {
    pub pivot: usize,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

/// Intersections of the solution line with the coordinate hyperplanes.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub points: Vec<Vec<f64>>,
    pub min_coords: Vec<f64>,
}

/// Build node `j`'s system from the bundle and the proportions recovered for
/// all upstream nodes (`prefix[i][alpha]` for `i < j`).
pub fn build_node_system(
    j: NodeId,
    bundle: &OracleBundle,
    prefix: &[Vec<f64>],
) -> Result<NodeSystem> {
    if j >= bundle.n() || prefix.len() < j {
        return Err(Error::MissingMarginal);
    }
    let categories: Vec<usize> = (0..bundle.base.row(j).len())
        .filter(|&k| !bundle.zero_categories[j][k])
        .collect();
    let a: Vec<f64> = categories.iter().map(|&k| bundle.base.get(j, k)).collect();
    let mut b = Vec::with_capacity(categories.len());
    for &beta in &categories {
        let base = bundle.base.get(j, beta);
        let mut rhs = bundle.mix.get(j, beta) - base;
        for (i, pi_row) in prefix.iter().enumerate().take(j) {
            for (alpha, &pi) in pi_row.iter().enumerate() {
                if pi != 0.0 {
                    let p_ia = bundle.interventional[i][alpha].get(j, beta);
                    rhs -= (p_ia - base) * pi;
                }
            }
        }
        b.push(rhs);
    }
    Ok(NodeSystem {
        node: j,
        categories,
        a,
        b,
    })
}

/// Row-reduce the system to its solution line, pivoting on the largest base
/// marginal (equivalent to the last category up to relabeling, and the
/// numerically safest divisor).
pub fn reduce_to_line(sys: &NodeSystem) -> Result<SolutionLine> {
    let k = sys.k();
    let pivot = (0..k)
        .max_by(|&x, &y| sys.a[x].partial_cmp(&sys.a[y]).unwrap())
        .ok_or(Error::DegeneratePivot(sys.node))?;
    let a_p = sys.a[pivot];
    if a_p < 1e-12 {
        return Err(Error::DegeneratePivot(sys.node));
    }
    let mut slopes = vec![0.0; k];
    let mut intercepts = vec![0.0; k];
    for i in 0..k {
        if i == pivot {
            slopes[i] = 1.0;
            intercepts[i] = 0.0;
        } else {
            slopes[i] = sys.a[i] / a_p;
            intercepts[i] = sys.b[i] - slopes[i] * sys.b[pivot];
        }
    }
    Ok(SolutionLine {
        pivot,
        slopes,
        intercepts,
    })
}

/// The K intersections of the line with the coordinate hyperplanes; point
/// `p_k` has coordinate `k` exactly zero.
pub fn candidate_points(line: &SolutionLine) -> CandidateSet {
    let k = line.slopes.len();
    let mut points = Vec::with_capacity(k);
    let mut min_coords = Vec::with_capacity(k);
    for zeroed in 0..k {
        let x_pivot = if zeroed == line.pivot {
            0.0
        } else {
            -line.intercepts[zeroed] / line.slopes[zeroed]
        };
        let mut point: Vec<f64> = (0..k)
            .map(|i| line.slopes[i] * x_pivot + line.intercepts[i])
            .collect();
        point[zeroed] = 0.0;
        let min = point.iter().copied().fold(f64::INFINITY, f64::min);
        points.push(point);
        min_coords.push(min);
    }
    CandidateSet { points, min_coords }
}

/// Pick the unique candidate that is nonnegative up to `tol`; negatives
/// within the tolerance are clamped to zero.
pub fn select_nonnegative(node: NodeId, cands: &CandidateSet, tol: f64) -> Result<Vec<f64>> {
    let passing: Vec<usize> = (0..cands.points.len())
        .filter(|&i| cands.min_coords[i] >= -tol)
        .collect();
    match passing.as_slice() {
        [] => Err(Error::NoNonnegativeCandidate(node)),
        &[single] => Ok(clamp_dust(&cands.points[single], tol)),
        many => {
            // coincident candidates (all-zero node) are not ambiguous
            let first = &cands.points[many[0]];
            for &other in &many[1..] {
                let diff = cands.points[other]
                    .iter()
                    .zip(first)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                if diff > tol {
                    return Err(Error::AmbiguousCandidates {
                        node,
                        candidates: many.iter().map(|&i| cands.points[i].clone()).collect(),
                    });
                }
            }
            Ok(clamp_dust(first, tol))
        }
    }
}

fn clamp_dust(point: &[f64], tol: f64) -> Vec<f64> {
    point
        .iter()
        .map(|&x| if x < 0.0 && x >= -tol { 0.0 } else { x })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeStatus {
    Recovered,
    Failed(String),
    /// Not reached because an upstream node failed.
    Skipped,
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub node: NodeId,
    pub status: NodeStatus,
    pub candidate_index: Option<usize>,
    /// `||A x - b||_2` at the selected candidate.
    pub residual: Option<f64>,
}

/// Outcome of the full topological sweep. `spec` is present only when every
/// node recovered; the per-node reports always cover the partial prefix.
#[derive(Debug)]
pub struct RecoveryResult {
    pub spec: Option<MixtureSpec>,
    pub pi_phi: Option<f64>,
    pub per_node: Vec<NodeReport>,
    pub error: Option<Error>,
}

impl RecoveryResult {
    pub fn expect_spec(self) -> Result<MixtureSpec> {
        match (self.spec, self.error) {
            (Some(spec), _) => Ok(spec),
            (None, Some(e)) => Err(e),
            (None, None) => Err(Error::MissingMarginal),
        }
    }
}

/// Sweep nodes in topological order, recovering each node's proportions from
/// the line/candidate construction and feeding them into downstream systems.
pub fn recover_all(bundle: &OracleBundle, tol: f64) -> RecoveryResult {
    let n = bundle.n();
    let mut prefix: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut per_node = Vec::with_capacity(n);

    for j in 0..n {
        let step = (|| -> Result<(Vec<f64>, usize, f64)> {
            let sys = build_node_system(j, bundle, &prefix)?;
            let line = reduce_to_line(&sys)?;
            let cands = candidate_points(&line);
            let selected = select_nonnegative(j, &cands, tol)?;
            let index = cands
                .points
                .iter()
                .position(|p| {
                    p.iter()
                        .zip(&selected)
                        .all(|(x, y)| (x - y).abs() <= tol || (*x < 0.0 && *y == 0.0))
                })
                .unwrap_or(0);
            let residual = sys
                .residual(&selected)
                .iter()
                .map(|r| r * r)
                .sum::<f64>()
                .sqrt();
            // scatter retained coordinates back into full category positions
            let mut full = vec![0.0; bundle.base.row(j).len()];
            for (pos, &cat) in sys.categories.iter().enumerate() {
                full[cat] = selected[pos];
            }
            Ok((full, index, residual))
        })();

        match step {
            Ok((full, index, residual)) => {
                per_node.push(NodeReport {
                    node: j,
                    status: NodeStatus::Recovered,
                    candidate_index: Some(index),
                    residual: Some(residual),
                });
                prefix.push(full);
            }
            Err(e) => {
                per_node.push(NodeReport {
                    node: j,
                    status: NodeStatus::Failed(e.to_string()),
                    candidate_index: None,
                    residual: None,
                });
                for skipped in j + 1..n {
                    per_node.push(NodeReport {
                        node: skipped,
                        status: NodeStatus::Skipped,
                        candidate_index: None,
                        residual: None,
                    });
                }
                return RecoveryResult {
                    spec: None,
                    pi_phi: None,
                    per_node,
                    error: Some(e),
                };
            }
        }
    }

    let total: f64 = prefix.iter().flatten().sum();
    let pi_phi = (1.0 - total).max(0.0);
    let pairs: Vec<((NodeId, usize), f64)> = prefix
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(move |(alpha, &pi)| ((i, alpha), pi))
        })
        .collect();
    match MixtureSpec::from_pairs(pi_phi, pairs) {
        Ok(spec) => RecoveryResult {
            spec: Some(spec),
            pi_phi: Some(pi_phi),
            per_node,
            error: None,
        },
        Err(e) => RecoveryResult {
            spec: None,
            pi_phi: Some(pi_phi),
            per_node,
            error: Some(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{chain2, coin, random_network};
    use crate::marginals::OracleBundle;
    use crate::mixture::{generate_instance, MixtureSpec};

    fn chain2_bundle() -> OracleBundle {
        let net = chain2();
        let spec = MixtureSpec::from_pairs(0.5, vec![((0, 1), 0.5)]).unwrap();
        OracleBundle::exact(&net, &spec).unwrap()
    }

    #[test]
    fn node_a_system_matches_hand_derivation() {
        let bundle = chain2_bundle();
        let sys = build_node_system(0, &bundle, &[]).unwrap();
        assert_eq!(sys.a, vec![0.4, 0.6]);
        assert!((sys.b[0] - (-0.2)).abs() < 1e-12);
        assert!((sys.b[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_prefix_gives_plain_deviation() {
        let net = chain2();
        let spec = MixtureSpec::phi_only();
        let bundle = OracleBundle::exact(&net, &spec).unwrap();
        let sys = build_node_system(1, &bundle, &[vec![0.0, 0.0]]).unwrap();
        for &b_k in &sys.b {
            assert!(b_k.abs() < 1e-12);
        }
    }

    #[test]
    fn line_reduction_hand_trace() {
        let bundle = chain2_bundle();
        let sys = build_node_system(0, &bundle, &[]).unwrap();
        let line = reduce_to_line(&sys).unwrap();
        assert_eq!(line.pivot, 1);
        assert!((line.slopes[0] - 0.4 / 0.6).abs() < 1e-12);
        assert!((line.intercepts[0] - (-1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_binary_slope_is_one() {
        let sys = NodeSystem {
            node: 0,
            categories: vec![0, 1],
            a: vec![0.5, 0.5],
            b: vec![0.1, -0.1],
        };
        let line = reduce_to_line(&sys).unwrap();
        let other = 1 - line.pivot;
        assert!((line.slopes[other] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn candidates_hand_trace() {
        let bundle = chain2_bundle();
        let sys = build_node_system(0, &bundle, &[]).unwrap();
        let line = reduce_to_line(&sys).unwrap();
        let cands = candidate_points(&line);
        // x_0 = 0 forces x_1 = 0.5; x_1 = 0 forces x_0 = -1/3
        assert!((cands.points[0][1] - 0.5).abs() < 1e-12);
        assert!((cands.points[1][0] - (-1.0 / 3.0)).abs() < 1e-12);
        // every candidate lies on A x = b
        for p in &cands.points {
            for r in sys.residual(p) {
                assert!(r.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_rhs_candidates_collapse_to_origin() {
        let sys = NodeSystem {
            node: 0,
            categories: vec![0, 1, 2],
            a: vec![0.2, 0.3, 0.5],
            b: vec![0.0, 0.0, 0.0],
        };
        let cands = candidate_points(&reduce_to_line(&sys).unwrap());
        for p in &cands.points {
            for &x in p {
                assert!(x.abs() < 1e-15);
            }
        }
        let selected = select_nonnegative(0, &cands, 1e-9).unwrap();
        assert_eq!(selected, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn example1_candidates_and_selection() {
        let net = coin(0.6);
        let spec = MixtureSpec::from_pairs(0.8, vec![((0, 0), 0.2)]).unwrap();
        let bundle = OracleBundle::exact(&net, &spec).unwrap();
        let sys = build_node_system(0, &bundle, &[]).unwrap();
        let cands = candidate_points(&reduce_to_line(&sys).unwrap());
        // candidates (pi_H, pi_T): (0.2, 0) and (0, -2/15)
        assert!((cands.points[1][0] - 0.2).abs() < 1e-12);
        assert!((cands.points[0][1] - (-2.0 / 15.0)).abs() < 1e-12);
        let selected = select_nonnegative(0, &cands, 1e-9).unwrap();
        assert!((selected[0] - 0.2).abs() < 1e-12);
        assert_eq!(selected[1], 0.0);
    }

    #[test]
    fn chain2_full_recovery() {
        let bundle = chain2_bundle();
        let result = recover_all(&bundle, DEFAULT_TOL);
        let spec = result.expect_spec().unwrap();
        assert!((spec.get(0, 1) - 0.5).abs() < 1e-10);
        assert!(spec.get(1, 0).abs() < 1e-10);
        assert!(spec.get(1, 1).abs() < 1e-10);
        assert!((spec.pi_phi - 0.5).abs() < 1e-10);
    }

    #[test]
    fn phi_only_recovery_is_all_zero() {
        let net = chain2();
        let bundle = OracleBundle::exact(&net, &MixtureSpec::phi_only()).unwrap();
        let spec = recover_all(&bundle, DEFAULT_TOL).expect_spec().unwrap();
        assert_eq!(spec.support_size(), 0);
        assert!((spec.pi_phi - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_instances_recover_exactly() {
        for seed in 0..25u64 {
            let net = random_network(seed, 8, 4, 3);
            let max_ivn = net.total_categories() - net.n();
            let n_ivn = (seed as usize * 3 + 1) % (max_ivn.min(6) + 1);
            let inst = generate_instance(&net, n_ivn, seed + 1000).unwrap();
            let bundle = OracleBundle::exact(&net, &inst.spec).unwrap();
            let recovered = recover_all(&bundle, DEFAULT_TOL).expect_spec().unwrap();
            for i in 0..net.n() {
                for k in 0..net.cardinality(i) {
                    let err = (recovered.get(i, k) - inst.spec.get(i, k)).abs();
                    assert!(err <= 1e-8, "seed {seed} node {i} cat {k}: err {err}");
                }
            }
        }
    }

    #[test]
    fn non_identifiability_witness() {
        // both specs produce the same marginal; recovery returns the one
        // satisfying the per-node exclusion
        let net = coin(0.6);
        let s1 = MixtureSpec::from_pairs(0.8, vec![((0, 0), 0.2)]).unwrap();
        let s2 = MixtureSpec::from_pairs(0.55, vec![((0, 0), 0.35), ((0, 1), 0.1)]).unwrap();
        let b1 = OracleBundle::exact(&net, &s1).unwrap();
        let b2 = OracleBundle::exact(&net, &s2).unwrap();
        assert!(b1.mix.max_abs_diff(&b2.mix) < 1e-12);
        let recovered = recover_all(&b2, DEFAULT_TOL).expect_spec().unwrap();
        assert!((recovered.get(0, 0) - 0.2).abs() < 1e-10);
        assert!(recovered.get(0, 1).abs() < 1e-10);
    }
}
