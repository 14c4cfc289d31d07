//! Gradient-boosted regression trees with a squared-error objective.
//!
//! Trees are grown level by level with exact greedy split enumeration over
//! pre-sorted feature columns. Missing values are handled sparsity-aware: at
//! every split the examples whose value is missing are tried on both sides and
//! the better side is stored as the node's default direction.
//!
//! With squared error the gradient of example `i` is `pred_i - y_i` and its
//! hessian is 1, so a leaf holding examples with gradient sum `G` and hessian
//! sum `H` gets weight `-G / (H + lambda)` and a split gains
//!
//! ```text
//! 0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::FeatureVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoosterParams {
    pub learning_rate: f64,
    pub num_trees: usize,
    pub max_depth: usize,
    /// L2 regularization on leaf weights.
    pub lambda: f64,
    /// Minimum gain required to split.
    pub gamma: f64,
    /// Minimum hessian sum (here: example count) in each child.
    pub min_child_weight: f64,
    /// Recorded for provenance; training itself is deterministic.
    pub seed: u64,
}

impl Default for BoosterParams {
    fn default() -> Self {
        BoosterParams {
            learning_rate: 0.1,
            num_trees: 100,
            max_depth: 10,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl BoosterParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate must be in (0, 1]");
        }
        if self.num_trees == 0 {
            return fail("num_trees must be at least 1");
        }
        if self.max_depth == 0 {
            return fail("max_depth must be at least 1");
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return fail("lambda must be non-negative");
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return fail("gamma must be non-negative");
        }
        if !self.min_child_weight.is_finite() || self.min_child_weight < 0.0 {
            return fail("min_child_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        /// Present values strictly below go left.
        threshold: f64,
        /// Where missing values go.
        default: Direction,
        children: [usize; 2],
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    fn leaf_index(&self, value_of: impl Fn(usize) -> Option<f64>) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split {
                    feature,
                    threshold,
                    default,
                    children,
                    ..
                } => {
                    let go_left = match value_of(*feature) {
                        Some(v) => v < *threshold,
                        None => *default == Direction::Left,
                    };
                    idx = if go_left { children[0] } else { children[1] };
                }
            }
        }
    }

    /// Raw leaf weight reached by `vector` (before shrinkage).
    pub fn predict(&self, vector: &FeatureVector) -> f64 {
        match self.nodes[self.leaf_index(|f| vector.get(f))] {
            Node::Leaf { weight } => weight,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { children, .. } => {
                    1 + walk(nodes, children[0]).max(walk(nodes, children[1]))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// A trained ensemble: `base_score + learning_rate * sum(tree outputs)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub params: BoosterParams,
    pub feature_names: Vec<String>,
}

impl BoostedModel {
    /// Constant model with no trees.
    pub fn constant(base_score: f64, params: BoosterParams, feature_names: Vec<String>) -> Self {
        BoostedModel {
            base_score,
            trees: Vec::new(),
            params,
            feature_names,
        }
    }

    pub fn predict(&self, vector: &FeatureVector) -> Result<f64> {
        if vector.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch {
                expected: self.feature_names.len(),
                actual: vector.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(vector)).sum();
        Ok(self.base_score + self.params.learning_rate * sum)
    }

    /// Total realized split gain per feature; features never split on are absent.
    pub fn feature_importance(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    *out.entry(self.feature_names[*feature].clone())
                        .or_insert(0.0) += gain;
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: BoostedModel = serde_json::from_str(json)?;
        model.check_structure()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let model: BoostedModel = serde_json::from_reader(file)?;
        model.check_structure()?;
        Ok(model)
    }

    fn check_structure(&self) -> Result<()> {
        let width = self.feature_names.len();
        for tree in &self.trees {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidParams("tree without nodes".into()));
            }
            for node in &tree.nodes {
                if let Node::Split {
                    feature, children, ..
                } = node
                {
                    if *feature >= width || children.iter().any(|&c| c >= tree.nodes.len()) {
                        return Err(Error::InvalidParams(
                            "split refers to a missing feature or node".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-round bookkeeping of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitTrace {
    /// Training RMSE of the base score followed by the RMSE after each round.
    pub train_rmse: Vec<f64>,
    /// Sum of all realized split gains.
    pub total_gain: f64,
}

pub fn fit(
    vectors: &[FeatureVector],
    targets: &[f64],
    feature_names: Vec<String>,
    params: &BoosterParams,
) -> Result<BoostedModel> {
    fit_with_trace(vectors, targets, feature_names, params).map(|(m, _)| m)
}

pub fn fit_with_trace(
    vectors: &[FeatureVector],
    targets: &[f64],
    feature_names: Vec<String>,
    params: &BoosterParams,
) -> Result<(BoostedModel, FitTrace)> {
    params.validate()?;
    if vectors.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if vectors.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: vectors.len(),
            actual: targets.len(),
        });
    }
    let width = feature_names.len();
    for v in vectors {
        if v.len() != width {
            return Err(Error::LengthMismatch {
                expected: width,
                actual: v.len(),
            });
        }
        if v.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature value".into()));
        }
    }
    if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("target {t}")));
    }

    let data = Columns::canonical(vectors, targets);
    let n = data.targets.len();
    let base_score = data.targets.iter().sum::<f64>() / n as f64;
    let mut preds = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.num_trees);
    let mut trace = FitTrace {
        train_rmse: vec![data.rmse(&preds)],
        total_gain: 0.0,
    };

    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    for _ in 0..params.num_trees {
        for i in 0..n {
            grad[i] = preds[i] - data.targets[i];
        }
        let grown = grow_tree(&data, &grad, &hess, params);
        for (p, leaf) in preds.iter_mut().zip(&grown.leaf_of) {
            if let Node::Leaf { weight } = grown.tree.nodes[*leaf] {
                *p += params.learning_rate * weight;
            }
        }
        trace.total_gain += grown.total_gain;
        trace.train_rmse.push(data.rmse(&preds));
        trees.push(grown.tree);
    }

    Ok((
        BoostedModel {
            base_score,
            trees,
            params: params.clone(),
            feature_names,
        },
        trace,
    ))
}

/// Column-major training data in canonical example order. `NaN` marks missing.
struct Columns {
    cols: Vec<Vec<f64>>,
    /// Per feature: indices of examples with a present value, sorted by value.
    sorted: Vec<Vec<usize>>,
    targets: Vec<f64>,
}

impl Columns {
    /// Reorders examples by (target, feature values) so that training does not
    /// depend on the order in which examples were supplied.
    fn canonical(vectors: &[FeatureVector], targets: &[f64]) -> Self {
        let width = vectors[0].len();
        let mut order: Vec<usize> = (0..vectors.len()).collect();
        order.sort_by(|&a, &b| {
            targets[a].total_cmp(&targets[b]).then_with(|| {
                vectors[a]
                    .iter()
                    .zip(vectors[b].iter())
                    .map(|(x, y)| cmp_optional(x, y))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
        });
        let cols: Vec<Vec<f64>> = (0..width)
            .map(|j| {
                order
                    .iter()
                    .map(|&i| vectors[i].get(j).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let sorted = cols
            .iter()
            .map(|col| {
                let mut idx: Vec<usize> = (0..col.len()).filter(|&i| !col[i].is_nan()).collect();
                idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Columns {
            cols,
            sorted,
            targets: order.iter().map(|&i| targets[i]).collect(),
        }
    }

    fn rmse(&self, preds: &[f64]) -> f64 {
        let sse: f64 = preds
            .iter()
            .zip(&self.targets)
            .map(|(p, y)| (p - y) * (p - y))
            .sum();
        (sse / preds.len() as f64).sqrt()
    }
}

fn cmp_optional(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    feature: usize,
    threshold: f64,
    default: Direction,
    gain: f64,
}

struct OpenNode {
    node: usize,
    depth: usize,
    g: f64,
    h: f64,
    count: usize,
}

struct GrownTree {
    tree: RegressionTree,
    leaf_of: Vec<usize>,
    total_gain: f64,
}

const CLOSED: usize = usize::MAX;

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Smallest representable midpoint that still separates `lo` from `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m > lo {
        m
    } else {
        hi
    }
}

fn grow_tree(data: &Columns, grad: &[f64], hess: &[f64], params: &BoosterParams) -> GrownTree {
    let n = grad.len();
    let lambda = params.lambda;
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut node_of = vec![0usize; n];
    let mut total_gain = 0.0;

    let (g0, h0) = sums(grad, hess, (0..n).map(|_| true));
    let mut open = vec![OpenNode {
        node: 0,
        depth: 0,
        g: g0,
        h: h0,
        count: n,
    }];

    while !open.is_empty() {
        let mut slot_of = vec![CLOSED; nodes.len()];
        for (s, o) in open.iter().enumerate() {
            if o.depth < params.max_depth && o.count >= 2 {
                slot_of[o.node] = s;
            }
        }
        let best = find_splits(data, grad, hess, &open, &slot_of, &node_of, params);

        // apply splits, then route examples of split nodes to the new children
        let mut route: Vec<Option<(Candidate, usize, usize)>> = vec![None; nodes.len()];
        let mut next_depth = Vec::new();
        for (s, o) in open.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes.push(Node::Leaf { weight: 0.0 });
                    nodes[o.node] = Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        default: c.default,
                        children: [left, right],
                        gain: c.gain,
                    };
                    total_gain += c.gain;
                    route.resize(nodes.len(), None);
                    route[o.node] = Some((c, left, right));
                    next_depth.push((left, o.depth + 1));
                    next_depth.push((right, o.depth + 1));
                }
                None => {
                    nodes[o.node] = Node::Leaf {
                        weight: -o.g / (o.h + lambda),
                    };
                }
            }
        }
        if next_depth.is_empty() {
            break;
        }
        for i in 0..n {
            if let Some((c, left, right)) = route[node_of[i]] {
                let v = data.cols[c.feature][i];
                let go_left = if v.is_nan() {
                    c.default == Direction::Left
                } else {
                    v < c.threshold
                };
                node_of[i] = if go_left { left } else { right };
            }
        }
        open = next_depth
            .into_iter()
            .map(|(node, depth)| {
                let (g, h) = sums(grad, hess, node_of.iter().map(|&k| k == node));
                let count = node_of.iter().filter(|&&k| k == node).count();
                OpenNode {
                    node,
                    depth,
                    g,
                    h,
                    count,
                }
            })
            .collect();
    }

    GrownTree {
        tree: RegressionTree { nodes },
        leaf_of: node_of,
        total_gain,
    }
}

fn sums(grad: &[f64], hess: &[f64], member: impl Iterator<Item = bool>) -> (f64, f64) {
    let mut g = 0.0;
    let mut h = 0.0;
    for (i, m) in member.enumerate() {
        if m {
            g += grad[i];
            h += hess[i];
        }
    }
    (g, h)
}

/// Best split per open node. Features are scanned in ascending index and
/// thresholds in ascending value; only a strictly larger gain replaces the
/// incumbent, so ties resolve to the lowest feature, then lowest threshold,
/// then missing-goes-right.
fn find_splits(
    data: &Columns,
    grad: &[f64],
    hess: &[f64],
    open: &[OpenNode],
    slot_of: &[usize],
    node_of: &[usize],
    params: &BoosterParams,
) -> Vec<Option<Candidate>> {
    let k = open.len();
    let lambda = params.lambda;
    let mcw = params.min_child_weight;
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let parent_score: Vec<f64> = open.iter().map(|o| leaf_score(o.g, o.h, lambda)).collect();

    let mut present_g = vec![0.0; k];
    let mut present_h = vec![0.0; k];
    let mut present_n = vec![0usize; k];
    let mut run_g = vec![0.0; k];
    let mut run_h = vec![0.0; k];
    let mut run_n = vec![0usize; k];
    let mut last = vec![0.0; k];

    for (feature, order) in data.sorted.iter().enumerate() {
        let col = &data.cols[feature];
        present_g.iter_mut().for_each(|x| *x = 0.0);
        present_h.iter_mut().for_each(|x| *x = 0.0);
        present_n.iter_mut().for_each(|x| *x = 0);
        for &i in order {
            let s = slot_of[node_of[i]];
            if s != CLOSED {
                present_g[s] += grad[i];
                present_h[s] += hess[i];
                present_n[s] += 1;
            }
        }
        run_g.iter_mut().for_each(|x| *x = 0.0);
        run_h.iter_mut().for_each(|x| *x = 0.0);
        run_n.iter_mut().for_each(|x| *x = 0);

        for &i in order {
            let s = slot_of[node_of[i]];
            if s == CLOSED {
                continue;
            }
            let v = col[i];
            if run_n[s] > 0 && v > last[s] {
                let o = &open[s];
                let (gm, hm) = if present_n[s] == o.count {
                    (0.0, 0.0)
                } else {
                    (o.g - present_g[s], o.h - present_h[s])
                };
                let gl = run_g[s];
                let hl = run_h[s];
                let gr = present_g[s] - gl;
                let hr = present_h[s] - hl;
                let mut consider = |gl: f64, hl: f64, gr: f64, hr: f64, default| {
                    if hl < mcw || hr < mcw {
                        return;
                    }
                    let gain = 0.5
                        * (leaf_score(gl, hl, lambda) + leaf_score(gr, hr, lambda)
                            - parent_score[s])
                        - params.gamma;
                    if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                        best[s] = Some(Candidate {
                            feature,
                            threshold: midpoint(last[s], v),
                            default,
                            gain,
                        });
                    }
                };
                consider(gl, hl, gr + gm, hr + hm, Direction::Right);
                if present_n[s] < o.count {
                    consider(gl + gm, hl + hm, gr, hr, Direction::Left);
                }
            }
            run_g[s] += grad[i];
            run_h[s] += hess[i];
            run_n[s] += 1;
            last[s] = v;
        }
    }
    best
}
