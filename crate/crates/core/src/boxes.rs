//! No-signaling boxes on the chained Bell scenario: constructors for the
//! ideal, single-contradiction and quantum boxes, Bell-value evaluation in
//! both the independent-input and source-correlated pictures, the randomness
//! distance, the ideal/bad mixture decomposition, and the local-box toy
//! attack.
//!
//! A box lives on the `n` chain edges only. Settings `1..=n` sit on a cycle
//! (odd vertices belong to Alice, even to Bob); edge `i < n` joins settings
//! `(i, i+1)` and edge `n` joins `(1, n)`. The expected correlation is
//! `x = y` on edges `1..n-1` and `x != y` on edge `n`.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

const CONSTRUCTION_TOL: f64 = 1e-12;
const ACCEPTANCE_TOL: f64 = 1e-9;

/// The chained Bell indicator: `B(edge, outcome) = 1` exactly on the
/// outcomes that enter the Bell sum (mismatches with the ideal
/// correlations).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BellExpression {
    pub n: usize,
}

impl BellExpression {
    pub fn new(n: usize) -> Result<Self> {
        validate_chain_size(n)?;
        Ok(Self { n })
    }

    /// Parity counted by the Bell expression on `edge`: 1 on the chain
    /// edges, 0 on the anti-correlated closing edge.
    pub fn violation_parity(&self, edge: usize) -> u8 {
        u8::from(edge == self.n) ^ 1
    }

    /// Parity of the ideal correlation on `edge` (complement of
    /// [`Self::violation_parity`]).
    pub fn expected_parity(&self, edge: usize) -> u8 {
        self.violation_parity(edge) ^ 1
    }

    pub fn indicator(&self, edge: usize, x: u8, y: u8) -> bool {
        (x ^ y) == self.violation_parity(edge)
    }

    /// The measurement pair `(u, v)` behind an edge label, with `u` odd
    /// (Alice) and `v` even (Bob).
    pub fn input_pair(&self, edge: usize) -> (usize, usize) {
        debug_assert!((1..=self.n).contains(&edge));
        if edge == self.n {
            (1, self.n)
        } else if edge % 2 == 1 {
            (edge, edge + 1)
        } else {
            (edge + 1, edge)
        }
    }
}

/// Per-edge joint outcome distribution on the chain. Edge tables are
/// ordered `[p00, p01, p10, p11]` with the first index Alice's outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainBox {
    n: usize,
    edges: Vec<[f64; 4]>,
}

fn validate_chain_size(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidChainSize(n as i64));
    }
    Ok(())
}

impl ChainBox {
    /// Build from raw edge tables, validating shape, positivity and
    /// normalization. Chain no-signaling is not enforced here; run
    /// [`check_no_signaling`] to test it.
    pub fn new(n: usize, edges: Vec<[f64; 4]>) -> Result<Self> {
        validate_chain_size(n)?;
        if edges.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} edge tables, got {}",
                edges.len()
            )));
        }
        for (i, table) in edges.iter().enumerate() {
            for &p in table {
                if p < -CONSTRUCTION_TOL {
                    return Err(Error::NegativeProbability {
                        edge: i + 1,
                        value: p,
                    });
                }
            }
            let sum: f64 = table.iter().sum();
            if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                return Err(Error::EdgeNotNormalized { edge: i + 1, sum });
            }
        }
        Ok(Self { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bell_expression(&self) -> BellExpression {
        BellExpression { n: self.n }
    }

    /// Edge table by 1-based edge label.
    pub fn edge(&self, edge: usize) -> &[f64; 4] {
        &self.edges[edge - 1]
    }

    pub fn edges(&self) -> &[[f64; 4]] {
        &self.edges
    }

    /// Bell-indicator mass of one edge: the probability that measuring it
    /// shows a contradiction with the ideal correlations.
    pub fn edge_violation_mass(&self, edge: usize) -> f64 {
        let t = self.edge(edge);
        if edge == self.n {
            t[0] + t[3]
        } else {
            t[1] + t[2]
        }
    }

    /// Marginal `P(outcome = 0)` of the party owning `vertex`, evaluated on
    /// `edge` (which must be incident to the vertex).
    fn vertex_marginal_zero(&self, vertex: usize, edge: usize) -> f64 {
        let t = self.edge(edge);
        if vertex % 2 == 1 {
            t[0] + t[1] // Alice: x = 0
        } else {
            t[0] + t[2] // Bob: y = 0
        }
    }
}

impl<'de> Deserialize<'de> for ChainBox {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            edges: Vec<[f64; 4]>,
        }
        let raw = Raw::deserialize(deserializer)?;
        ChainBox::new(raw.n, raw.edges).map_err(D::Error::custom)
    }
}

/// The unique chain box with Bell value 0: perfect correlation on edges
/// `1..n-1`, perfect anti-correlation on edge `n`, uniform marginals.
/// At `n = 2` this is the familiar two-edge form of the PR correlations.
pub fn ideal_box(n: usize) -> Result<ChainBox> {
    validate_chain_size(n)?;
    let mut edges = vec![[0.5, 0.0, 0.0, 0.5]; n];
    edges[n - 1] = [0.0, 0.5, 0.5, 0.0];
    Ok(ChainBox { n, edges })
}

/// Ideal box with the correlation flipped on exactly one edge; its true
/// Bell value is exactly `1/n`.
pub fn bad_box(n: usize, contradiction_edge: usize) -> Result<ChainBox> {
    validate_chain_size(n)?;
    if contradiction_edge < 1 || contradiction_edge > n {
        return Err(Error::EdgeOutOfRange {
            edge: contradiction_edge,
            n,
        });
    }
    let mut bx = ideal_box(n)?;
    let flipped = flip_table(bx.edge(contradiction_edge));
    bx.edges[contradiction_edge - 1] = flipped;
    Ok(bx)
}

fn flip_table(t: &[f64; 4]) -> [f64; 4] {
    // Swap correlated and anti-correlated mass, preserving marginals.
    [t[1], t[0], t[3], t[2]]
}

/// The box induced by the optimal quantum strategy: every edge errs from
/// the ideal correlation with probability `sin^2(pi/2n)`, marginals
/// uniform.
pub fn quantum_box(n: usize) -> Result<ChainBox> {
    validate_chain_size(n)?;
    let delta = delta_q(n);
    let correlated = [
        (1.0 - delta) / 2.0,
        delta / 2.0,
        delta / 2.0,
        (1.0 - delta) / 2.0,
    ];
    let mut edges = vec![correlated; n];
    edges[n - 1] = flip_table(&correlated);
    Ok(ChainBox { n, edges })
}

/// Optimal quantum Bell value `sin^2(pi / 2n)`.
pub fn delta_q(n: usize) -> f64 {
    let s = (std::f64::consts::PI / (2.0 * n as f64)).sin();
    s * s
}

/// Edgewise convex combination. No-signaling is preserved: marginals mix
/// linearly.
pub fn mix(boxes: &[ChainBox], weights: &[f64]) -> Result<ChainBox> {
    if boxes.is_empty() {
        return Err(Error::Invalid("mix requires at least one box".into()));
    }
    if boxes.len() != weights.len() {
        return Err(Error::WeightCountMismatch {
            boxes: boxes.len(),
            weights: weights.len(),
        });
    }
    let n = boxes[0].n;
    for b in boxes {
        if b.n != n {
            return Err(Error::MixedChainSizes(n, b.n));
        }
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < -CONSTRUCTION_TOL) || (sum - 1.0).abs() > CONSTRUCTION_TOL {
        return Err(Error::InvalidWeights(sum));
    }
    let mut edges = vec![[0.0; 4]; n];
    for (b, &w) in boxes.iter().zip(weights) {
        for (acc, t) in edges.iter_mut().zip(&b.edges) {
            for k in 0..4 {
                acc[k] += w * t[k];
            }
        }
    }
    Ok(ChainBox { n, edges })
}

/// One violated marginal-consistency constraint on the chain.
#[derive(Debug, Clone, Serialize)]
pub struct NoSignalingViolation {
    /// The shared setting whose marginal disagrees.
    pub vertex: usize,
    pub edge_a: usize,
    pub edge_b: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoSignalingReport {
    pub ok: bool,
    pub tolerance: f64,
    pub violations: Vec<NoSignalingViolation>,
}

/// Check chain no-signaling: each setting is shared by two adjacent edges
/// and the owning party's marginal must agree across them (tolerance 1e-9
/// for user-supplied boxes).
pub fn check_no_signaling(bx: &ChainBox) -> NoSignalingReport {
    let n = bx.n;
    let mut violations = Vec::new();
    for vertex in 1..=n {
        let (edge_a, edge_b) = if vertex == 1 {
            (1, n)
        } else if vertex == n {
            (n - 1, n)
        } else {
            (vertex - 1, vertex)
        };
        let ma = bx.vertex_marginal_zero(vertex, edge_a);
        let mb = bx.vertex_marginal_zero(vertex, edge_b);
        let magnitude = (ma - mb).abs();
        if magnitude > ACCEPTANCE_TOL {
            violations.push(NoSignalingViolation {
                vertex,
                edge_a,
                edge_b,
                magnitude,
            });
        }
    }
    NoSignalingReport {
        ok: violations.is_empty(),
        tolerance: ACCEPTANCE_TOL,
        violations,
    }
}

/// Bell value under independent uniform inputs:
/// `(1/n) sum_i` (Bell-indicator mass of edge `i`). Lies in `[0, 1]`.
pub fn true_bell_value(bx: &ChainBox) -> f64 {
    let n = bx.n;
    (1..=n).map(|i| bx.edge_violation_mass(i)).sum::<f64>() / n as f64
}

/// Bell value under source-correlated inputs: the source value `s` selects
/// both the measured edge and (possibly) the box, so each box is evaluated
/// only on its own edge.
pub fn observed_bell_value(boxes_by_source: &[ChainBox], source_dist: &[f64]) -> Result<f64> {
    if boxes_by_source.is_empty() || boxes_by_source.len() != source_dist.len() {
        return Err(Error::SourceDomainMismatch);
    }
    let n = boxes_by_source[0].n;
    if boxes_by_source.len() != n || boxes_by_source.iter().any(|b| b.n != n) {
        return Err(Error::SourceDomainMismatch);
    }
    let sum: f64 = source_dist.iter().sum();
    if source_dist.iter().any(|&w| w < -CONSTRUCTION_TOL) || (sum - 1.0).abs() > ACCEPTANCE_TOL {
        return Err(Error::InvalidWeights(sum));
    }
    Ok(boxes_by_source
        .iter()
        .zip(source_dist)
        .enumerate()
        .map(|(idx, (bx, &w))| w * bx.edge_violation_mass(idx + 1))
        .sum())
}

/// Distance of the per-edge output bit from uniform:
/// `d = max_i (|p_i(0) - 1/2| + |p_i(1) - 1/2|) / 2`, where `p_i` collects
/// the correctly correlated outcomes of edge `i`. In `[0, 1/2]`.
pub fn randomness_distance(bx: &ChainBox) -> f64 {
    let n = bx.n;
    (1..=n)
        .map(|i| {
            let t = bx.edge(i);
            // Outcomes matching the ideal correlation, keyed by Alice's bit.
            let (p0, p1) = if i == n { (t[1], t[2]) } else { (t[0], t[3]) };
            0.5 * ((p0 - 0.5).abs() + (p1 - 0.5).abs())
        })
        .fold(0.0, f64::max)
}

/// Mixture weights recovered from a box in the convex hull of the ideal
/// box and the single-contradiction bad boxes.
#[derive(Debug, Clone, Serialize)]
pub struct BoxDecomposition {
    pub lambda: f64,
    /// Per-edge bad-box mass; sums to `lambda`.
    pub bad_weights: Vec<f64>,
}

impl BoxDecomposition {
    /// Rebuild the box this decomposition describes.
    pub fn reconstruct(&self, n: usize) -> Result<ChainBox> {
        let mut boxes = vec![ideal_box(n)?];
        let mut weights = vec![1.0 - self.lambda];
        for (i, &w) in self.bad_weights.iter().enumerate() {
            boxes.push(bad_box(n, i + 1)?);
            weights.push(w);
        }
        mix(&boxes, &weights)
    }
}

/// Decompose a box over the ideal/bad family. On this family
/// `lambda = n * true_bell_value`. Boxes outside the family (asymmetric
/// edge tables, or total violation mass above 1) are rejected.
pub fn lambda_decompose(bx: &ChainBox) -> Result<BoxDecomposition> {
    let n = bx.n;
    let mut bad_weights = Vec::with_capacity(n);
    for i in 1..=n {
        let t = bx.edge(i);
        if (t[0] - t[3]).abs() > ACCEPTANCE_TOL || (t[1] - t[2]).abs() > ACCEPTANCE_TOL {
            return Err(Error::OutsideDecompositionFamily(format!(
                "edge {i} outcome table is not parity-symmetric"
            )));
        }
        bad_weights.push(bx.edge_violation_mass(i));
    }
    let lambda: f64 = bad_weights.iter().sum();
    if lambda > 1.0 + ACCEPTANCE_TOL {
        return Err(Error::OutsideDecompositionFamily(format!(
            "total violation mass {lambda} exceeds 1"
        )));
    }
    Ok(BoxDecomposition {
        lambda: lambda.min(1.0),
        bad_weights,
    })
}

/// Deterministic local box from one output bit per setting: the party
/// owning a setting always answers with its assigned bit.
pub fn deterministic_box(n: usize, outputs: &[u8]) -> Result<ChainBox> {
    validate_chain_size(n)?;
    if outputs.len() != n || outputs.iter().any(|&b| b > 1) {
        return Err(Error::Invalid(format!(
            "need {n} binary outputs, got {:?}",
            outputs
        )));
    }
    let expr = BellExpression { n };
    let edges = (1..=n)
        .map(|i| {
            let (u, v) = expr.input_pair(i);
            let (x, y) = (outputs[u - 1], outputs[v - 1]);
            let mut t = [0.0; 4];
            t[(2 * x + y) as usize] = 1.0;
            t
        })
        .collect();
    Ok(ChainBox { n, edges })
}

/// The four-edge local-box scenario: each source value is perfectly
/// correlated with one local box and with the honest parties' input, so
/// measuring only matched edges always reproduces the ideal correlations
/// while the mixture is manifestly classical.
#[derive(Debug, Clone, Serialize)]
pub struct ToyScenario {
    pub local_boxes: Vec<ChainBox>,
    /// Deterministic outputs behind each local box, one bit per setting.
    pub assignments: Vec<Vec<u8>>,
    /// `P(box = L_j | S = s)`; a Kronecker delta for the canonical
    /// construction.
    pub source_correlation: Vec<Vec<f64>>,
    /// `P(I = i | S = s)`; also a Kronecker delta.
    pub input_correlation: Vec<Vec<f64>>,
    /// Prior `P(S = s)` over the four edges.
    pub prior: Vec<f64>,
    /// Tester correlation `P(S' = s' | S = s)`.
    pub tester_given_source: Vec<Vec<f64>>,
}

impl ToyScenario {
    /// Canonical construction on the four-edge chain. The assignments are
    /// chosen so that on every edge the four boxes produce four distinct
    /// outcomes; exact observations then determine the source value.
    pub fn canonical() -> Self {
        let assignments: Vec<Vec<u8>> = vec![
            vec![0, 0, 0, 0],
            vec![1, 1, 1, 0],
            vec![1, 0, 1, 1],
            vec![0, 1, 0, 1],
        ];
        let local_boxes = assignments
            .iter()
            .map(|a| deterministic_box(4, a).expect("canonical assignment is valid"))
            .collect();
        let delta: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| f64::from(i == j)).collect())
            .collect();
        ToyScenario {
            local_boxes,
            assignments,
            source_correlation: delta.clone(),
            input_correlation: delta,
            prior: vec![0.25; 4],
            tester_given_source: vec![vec![0.25; 4]; 4],
        }
    }

    /// The deterministic outcome box `L_s` produces when edge `e` is
    /// measured.
    pub fn outcome(&self, source: usize, edge: usize) -> (u8, u8) {
        let expr = BellExpression { n: 4 };
        let (u, v) = expr.input_pair(edge);
        let a = &self.assignments[source - 1];
        (a[u - 1], a[v - 1])
    }

    /// The classical mixture the honest parties actually hold.
    pub fn mixture(&self) -> ChainBox {
        mix(&self.local_boxes, &self.prior).expect("uniform mixture of local boxes")
    }
}

/// Posterior over the source value after a tester measurement.
#[derive(Debug, Clone, Serialize)]
pub struct ToyPosterior {
    pub tester_edge: usize,
    pub observed: (u8, u8),
    pub posterior: Vec<f64>,
    /// True when the observation rules out `S = tester_edge` entirely, the
    /// witness that the source-device condition fails for this scenario.
    pub excludes_matched_source: bool,
}

/// Bayes update `P(S = s | S' = tester_edge, O = observed)` for the toy
/// scenario: the tester inputs its own source bits, so the box seen is
/// still selected by `S`.
pub fn toy_attack(
    scenario: &ToyScenario,
    tester_edge: usize,
    observed: (u8, u8),
) -> Result<ToyPosterior> {
    if !(1..=4).contains(&tester_edge) {
        return Err(Error::EdgeOutOfRange {
            edge: tester_edge,
            n: 4,
        });
    }
    if observed.0 > 1 || observed.1 > 1 {
        return Err(Error::Invalid("outcomes must be binary".into()));
    }
    let mut posterior: Vec<f64> = (0..4)
        .map(|s| {
            let likelihood = f64::from(scenario.outcome(s + 1, tester_edge) == observed);
            scenario.prior[s] * scenario.tester_given_source[s][tester_edge - 1] * likelihood
        })
        .collect();
    let total: f64 = posterior.iter().sum();
    if total > 0.0 {
        for p in &mut posterior {
            *p /= total;
        }
    }
    let excludes_matched_source = posterior[tester_edge - 1] == 0.0;
    Ok(ToyPosterior {
        tester_edge,
        observed,
        posterior,
        excludes_matched_source,
    })
}
