//! Multi-output regression trees fit to per-sample gradient vectors.
//!
//! Growth is greedy and depth-first. Each node picks the split that most
//! reduces the summed squared L2 distance of the targets to their child
//! means. Numerical features are scanned over per-feature quantile bins
//! (exact when a feature has at most `num_bins` distinct values), and
//! categorical features use one-vs-rest equality tests. Leaves hold the raw
//! mean target; learning rates are applied by the ensemble.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSchema, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeFitConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub num_bins: usize,
    pub output_dim: usize,
}

impl TreeFitConfig {
    pub fn new(output_dim: usize) -> Self {
        Self {
            max_depth: 4,
            min_samples_leaf: 1,
            num_bins: 256,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if self.num_bins < 2 {
            return Err(Error::InvalidConfig("num_bins must be >= 2".into()));
        }
        if self.output_dim < 1 {
            return Err(Error::InvalidConfig("output_dim must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitTest {
    /// Left iff `value <= threshold`.
    NumericLe(f64),
    /// Left iff the token id equals this one.
    CategoricalEq(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCondition {
    pub feature: usize,
    pub test: SplitTest,
}

impl SplitCondition {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        let v = x[self.feature];
        match self.test {
            SplitTest::NumericLe(t) => v <= t,
            SplitTest::CategoricalEq(tok) => v == f64::from(tok),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        condition: SplitCondition,
        /// Variance reduction achieved on the training batch.
        gain: f64,
        left: u32,
        right: u32,
    },
    /// Index of the leaf's vector in the tree's leaf table.
    Leaf { leaf: u32 },
}

/// A binary tree whose leaves hold `output_dim`-long vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    output_dim: usize,
}

impl DecisionTree {
    /// A tree with a single leaf.
    pub fn constant(value: Vec<f64>) -> Self {
        let output_dim = value.len();
        Self {
            nodes: vec![Node::Leaf { leaf: 0 }],
            leaf_values: value,
            output_dim,
        }
    }

    /// Assembles a tree from raw parts, checking that child links stay in
    /// range, point forward, and that every leaf vector exists.
    pub fn from_parts(nodes: Vec<Node>, leaf_values: Vec<f64>, output_dim: usize) -> Result<Self> {
        if nodes.is_empty() || output_dim == 0 || leaf_values.len() % output_dim != 0 {
            return Err(Error::Malformed("tree has no nodes or ragged leaves".into()));
        }
        let n_leaves = leaf_values.len() / output_dim;
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split { left, right, .. } => {
                    let ok = |c: u32| (c as usize) > i && (c as usize) < nodes.len();
                    if !ok(left) || !ok(right) {
                        return Err(Error::Malformed(format!("node {i} has invalid children")));
                    }
                }
                Node::Leaf { leaf } => {
                    if leaf as usize >= n_leaves {
                        return Err(Error::Malformed(format!("node {i} points at missing leaf {leaf}")));
                    }
                }
            }
        }
        Ok(Self {
            nodes,
            leaf_values,
            output_dim,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_values.len() / self.output_dim
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Index of the leaf `x` is routed to.
    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { leaf } => return *leaf as usize,
                Node::Split {
                    condition,
                    left,
                    right,
                    ..
                } => {
                    i = if condition.goes_left(x) {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Leaf vector for raw slot values.
    #[inline]
    pub fn predict_slice(&self, x: &[f64]) -> &[f64] {
        let leaf = self.leaf_index(x);
        &self.leaf_values[leaf * self.output_dim..(leaf + 1) * self.output_dim]
    }

    pub fn predict(&self, x: &FeatureVector) -> &[f64] {
        self.predict_slice(x.values())
    }

    /// Iterates over split nodes as (feature, gain).
    pub fn split_gains(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { condition, gain, .. } => Some((condition.feature, *gain)),
            Node::Leaf { .. } => None,
        })
    }
}

/// Owned-free view of `predict_tree`.
pub fn predict_tree<'t>(tree: &'t DecisionTree, x: &FeatureVector) -> &'t [f64] {
    tree.predict(x)
}

fn sse(targets: &[&[f64]]) -> f64 {
    let n = targets.len() as f64;
    let dim = targets[0].len();
    let mut total = 0.0;
    for d in 0..dim {
        let mean = targets.iter().map(|g| g[d]).sum::<f64>() / n;
        total += targets.iter().map(|g| (g[d] - mean).powi(2)).sum::<f64>();
    }
    total
}

/// `SSE(node) - SSE(left) - SSE(right)` with `SSE(S) = Σ ‖g - mean(S)‖²`.
pub fn split_gain(node: &[&[f64]], left: &[&[f64]], right: &[&[f64]]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::EmptySplitChild);
    }
    if left.len() + right.len() != node.len() {
        return Err(Error::LengthMismatch("children do not partition the node".into()));
    }
    Ok(sse(node) - sse(left) - sse(right))
}

/// Per-feature binning computed once per fit.
enum Binning {
    /// Sorted thresholds; sample bin = number of thresholds strictly below
    /// its value, so `bin <= j` iff `value <= thresholds[j]`.
    Numeric { thresholds: Vec<f64> },
    /// Distinct token ids present in the batch, ascending.
    Categorical { tokens: Vec<u32> },
}

impl Binning {
    fn n_bins(&self) -> usize {
        match self {
            Binning::Numeric { thresholds } => thresholds.len() + 1,
            Binning::Categorical { tokens } => tokens.len(),
        }
    }
}

fn numeric_thresholds(mut values: Vec<f64>, num_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    let edges = if distinct.len() <= num_bins {
        distinct
    } else {
        let last = values.len() - 1;
        let mut edges: Vec<f64> = (0..num_bins).map(|b| values[b * last / (num_bins - 1)]).collect();
        edges.dedup();
        edges
    };
    edges
        .windows(2)
        .map(|w| {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            // Adjacent floats can round the midpoint up onto the upper edge.
            if mid < w[1] {
                mid
            } else {
                w[0]
            }
        })
        .collect()
}

struct Fitter<'a> {
    cfg: &'a TreeFitConfig,
    targets: &'a [f64],
    /// bins[f][i]: bin of sample i on feature f.
    bins: Vec<Vec<u32>>,
    binnings: Vec<Binning>,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    // Scratch histogram buffers.
    counts: Vec<usize>,
    sums: Vec<f64>,
}

struct Candidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl<'a> Fitter<'a> {
    fn target(&self, i: usize) -> &[f64] {
        let d = self.cfg.output_dim;
        &self.targets[i * d..(i + 1) * d]
    }

    fn push_leaf(&mut self, indices: &[usize]) -> u32 {
        let d = self.cfg.output_dim;
        let mut sum = vec![0.0; d];
        for &i in indices {
            for (s, g) in sum.iter_mut().zip(self.target(i)) {
                *s += g;
            }
        }
        let n = indices.len() as f64;
        let leaf = (self.leaf_values.len() / d) as u32;
        self.leaf_values.extend(sum.into_iter().map(|s| s / n));
        self.nodes.push(Node::Leaf { leaf });
        (self.nodes.len() - 1) as u32
    }

    fn best_split(&mut self, indices: &[usize]) -> Option<Candidate> {
        let d = self.cfg.output_dim;
        let n = indices.len();
        let min_leaf = self.cfg.min_samples_leaf;
        if n < 2 * min_leaf {
            return None;
        }
        let mut total = vec![0.0; d];
        let mut sum_sq = 0.0;
        for &i in indices {
            for (t, g) in total.iter_mut().zip(self.target(i)) {
                *t += g;
                sum_sq += g * g;
            }
        }
        // Gains at or below this level are rounding noise of a zero gain.
        let tolerance = 1e-14 * sum_sq.max(f64::MIN_POSITIVE);
        let mut best: Option<Candidate> = None;
        let mut left = vec![0.0; d];

        for f in 0..self.binnings.len() {
            let n_bins = self.binnings[f].n_bins();
            if n_bins < 2 {
                continue;
            }
            self.counts.clear();
            self.counts.resize(n_bins, 0);
            self.sums.clear();
            self.sums.resize(n_bins * d, 0.0);
            for &i in indices {
                let b = self.bins[f][i] as usize;
                self.counts[b] += 1;
                let row = &self.targets[i * d..(i + 1) * d];
                for (s, g) in self.sums[b * d..(b + 1) * d].iter_mut().zip(row) {
                    *s += g;
                }
            }
            let consider = |bin: usize, n_left: usize, left: &[f64], best: &mut Option<Candidate>| {
                let n_right = n - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    return;
                }
                // SSE(node) - SSE(L) - SSE(R) = n_L n_R / n ‖μ_L - μ_R‖²
                let (nl, nr) = (n_left as f64, n_right as f64);
                let mut dist = 0.0;
                for k in 0..d {
                    let diff = left[k] / nl - (total[k] - left[k]) / nr;
                    dist += diff * diff;
                }
                let gain = nl * nr / (nl + nr) * dist;
                if gain > tolerance && best.as_ref().is_none_or(|b| gain > b.gain) {
                    *best = Some(Candidate { feature: f, bin, gain });
                }
            };
            match &self.binnings[f] {
                Binning::Numeric { .. } => {
                    left.iter_mut().for_each(|v| *v = 0.0);
                    let mut n_left = 0;
                    for b in 0..n_bins - 1 {
                        n_left += self.counts[b];
                        for k in 0..d {
                            left[k] += self.sums[b * d + k];
                        }
                        if self.counts[b] > 0 {
                            consider(b, n_left, &left, &mut best);
                        }
                    }
                }
                Binning::Categorical { .. } => {
                    for b in 0..n_bins {
                        let c = self.counts[b];
                        if c == 0 || c == n {
                            continue;
                        }
                        consider(b, c, &self.sums[b * d..(b + 1) * d], &mut best);
                    }
                }
            }
        }
        best
    }

    fn condition(&self, c: &Candidate) -> SplitCondition {
        let test = match &self.binnings[c.feature] {
            Binning::Numeric { thresholds } => SplitTest::NumericLe(thresholds[c.bin]),
            Binning::Categorical { tokens } => SplitTest::CategoricalEq(tokens[c.bin]),
        };
        SplitCondition {
            feature: c.feature,
            test,
        }
    }

    fn grow(&mut self, indices: &mut [usize], depth: usize) -> u32 {
        let split = if depth < self.cfg.max_depth {
            self.best_split(indices)
        } else {
            None
        };
        let Some(split) = split else {
            return self.push_leaf(indices);
        };
        let bins = &self.bins[split.feature];
        let goes_left = |i: usize| match self.binnings[split.feature] {
            Binning::Numeric { .. } => bins[i] as usize <= split.bin,
            Binning::Categorical { .. } => bins[i] as usize == split.bin,
        };
        // Stable partition keeps leaf sums in batch order.
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| goes_left(i));
        let n_left = l.len();
        let condition = self.condition(&split);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { leaf: 0 });
        let left = self.grow(&mut l, depth + 1);
        let right = self.grow(&mut r, depth + 1);
        debug_assert_eq!(n_left + r.len(), indices.len());
        self.nodes[me] = Node::Split {
            condition,
            gain: split.gain,
            left,
            right,
        };
        me as u32
    }
}

/// Fits one tree to `(inputs[i], gradients[i*D..(i+1)*D])` pairs.
pub fn fit_tree(
    schema: &FeatureSchema,
    inputs: &[&FeatureVector],
    gradients: &[f64],
    cfg: &TreeFitConfig,
) -> Result<DecisionTree> {
    cfg.validate()?;
    let n = inputs.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let d = cfg.output_dim;
    if gradients.len() != n * d {
        return Err(Error::DimensionMismatch {
            expected: n * d,
            actual: gradients.len(),
        });
    }
    if let Some(pos) = gradients.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            sample: pos / d,
            dim: pos % d,
            value: gradients[pos],
        });
    }
    for x in inputs {
        if x.len() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.len(),
                actual: x.len(),
            });
        }
    }

    let mut binnings = Vec::with_capacity(schema.len());
    let mut bins = Vec::with_capacity(schema.len());
    for (f, entry) in schema.entries().iter().enumerate() {
        let column = inputs.iter().map(|x| x.values()[f]);
        match entry.kind {
            FeatureKind::Numerical => {
                let thresholds = numeric_thresholds(column.clone().collect(), cfg.num_bins);
                bins.push(
                    column
                        .map(|v| thresholds.partition_point(|&t| t < v) as u32)
                        .collect(),
                );
                binnings.push(Binning::Numeric { thresholds });
            }
            FeatureKind::Categorical => {
                let mut tokens: Vec<u32> = column.clone().map(|v| v as u32).collect();
                tokens.sort_unstable();
                tokens.dedup();
                bins.push(
                    column
                        .map(|v| tokens.binary_search(&(v as u32)).expect("token collected above") as u32)
                        .collect(),
                );
                binnings.push(Binning::Categorical { tokens });
            }
        }
    }

    let mut fitter = Fitter {
        cfg,
        targets: gradients,
        bins,
        binnings,
        nodes: Vec::new(),
        leaf_values: Vec::new(),
        counts: Vec::new(),
        sums: Vec::new(),
    };
    let mut indices: Vec<usize> = (0..n).collect();
    fitter.grow(&mut indices, 0);
    Ok(DecisionTree {
        nodes: fitter.nodes,
        leaf_values: fitter.leaf_values,
        output_dim: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_batch(xs: &[f64]) -> (FeatureSchema, Vec<FeatureVector>) {
        let schema = FeatureSchema::numerical(1);
        let rows = xs.iter().map(|&x| schema.numeric_vector(&[x]).unwrap()).collect();
        (schema, rows)
    }

    #[test]
    fn equal_targets_give_a_single_leaf() {
        let (schema, rows) = numeric_batch(&[0.0, 1.0, 2.0, 3.0]);
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let targets = [1.0, 2.0].repeat(4);
        let tree = fit_tree(&schema, &refs, &targets, &TreeFitConfig::new(2)).unwrap();
        assert_eq!(tree.node_count(), 1);
        assert_eq!(tree.predict(&rows[2]), &[1.0, 2.0]);
    }

    #[test]
    fn perfect_numeric_split() {
        let (schema, rows) = numeric_batch(&[0.0, 0.0, 1.0, 1.0]);
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let cfg = TreeFitConfig {
            max_depth: 1,
            ..TreeFitConfig::new(1)
        };
        let tree = fit_tree(&schema, &refs, &[-1.0, -1.0, 1.0, 1.0], &cfg).unwrap();
        match tree.nodes()[0] {
            Node::Split { condition, gain, .. } => {
                assert_eq!(condition.feature, 0);
                assert_eq!(condition.test, SplitTest::NumericLe(0.5));
                assert_eq!(gain, 4.0);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.predict(&rows[0]), &[-1.0]);
        assert_eq!(tree.predict(&rows[3]), &[1.0]);
        assert_eq!(tree.predict(&schema.numeric_vector(&[0.0]).unwrap()), &[-1.0]);
    }

    #[test]
    fn categorical_equality_split() {
        let mut schema = FeatureSchema::new();
        schema.push("c", FeatureKind::Categorical);
        let a = schema.intern_token(0, "a").unwrap();
        let b = schema.intern_token(0, "b").unwrap();
        let rows: Vec<FeatureVector> = [a, a, b]
            .iter()
            .map(|&t| FeatureVector::from_raw(vec![f64::from(t)]))
            .collect();
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let tree = fit_tree(&schema, &refs, &[0.0, 0.0, 3.0], &TreeFitConfig::new(1)).unwrap();
        match tree.nodes()[0] {
            Node::Split { condition, .. } => assert_eq!(condition.test, SplitTest::CategoricalEq(a)),
            _ => panic!("expected a split"),
        }
        assert_eq!(tree.predict(&rows[0]), &[0.0]);
        assert_eq!(tree.predict(&rows[2]), &[3.0]);
        // Unseen tokens fail every equality test.
        let unseen = FeatureVector::from_raw(vec![f64::from(schema.intern_token(0, "z").unwrap())]);
        assert_eq!(tree.predict(&unseen), &[3.0]);
    }

    #[test]
    fn gain_of_perfect_split_is_four() {
        let (m, p) = ([-1.0], [1.0]);
        let node: Vec<&[f64]> = vec![&m, &m, &p, &p];
        let g = split_gain(&node, &node[..2], &node[2..]).unwrap();
        assert!((g - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gain_is_zero_when_children_mirror_parent() {
        let (a, b) = ([-1.0], [1.0]);
        let node: Vec<&[f64]> = vec![&a, &b, &a, &b];
        let g = split_gain(&node, &node[..2], &node[2..]).unwrap();
        assert!(g.abs() < 1e-12);
    }

    #[test]
    fn empty_child_is_an_error() {
        let a = [1.0];
        let node: Vec<&[f64]> = vec![&a];
        assert!(matches!(split_gain(&node, &node, &[]), Err(Error::EmptySplitChild)));
    }

    #[test]
    fn fit_rejects_bad_batches() {
        let (schema, rows) = numeric_batch(&[0.0, 1.0]);
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let cfg = TreeFitConfig::new(1);
        assert!(matches!(fit_tree(&schema, &[], &[], &cfg), Err(Error::EmptyBatch)));
        assert!(matches!(
            fit_tree(&schema, &refs, &[0.0, f64::NAN], &cfg),
            Err(Error::NonFiniteGradient { sample: 1, dim: 0, .. })
        ));
        assert!(fit_tree(&schema, &refs, &[0.0], &cfg).is_err());
    }

    #[test]
    fn single_leaf_predicts_constant() {
        let tree = DecisionTree::constant(vec![0.5, -2.0]);
        let x = FeatureVector::from_raw(vec![123.0, 7.0]);
        assert_eq!(predict_tree(&tree, &x), &[0.5, -2.0]);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let (schema, rows) = numeric_batch(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let targets = [10.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let cfg = TreeFitConfig {
            min_samples_leaf: 3,
            ..TreeFitConfig::new(1)
        };
        let tree = fit_tree(&schema, &refs, &targets, &cfg).unwrap();
        let mut counts = vec![0; tree.leaf_count()];
        for r in &rows {
            counts[tree.leaf_index(r.values())] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 3), "{counts:?}");
    }

    #[test]
    fn quantile_binning_caps_threshold_count() {
        let values: Vec<f64> = (0..1000).map(f64::from).collect();
        let t = numeric_thresholds(values, 16);
        assert_eq!(t.len(), 15);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        let exact = numeric_thresholds(vec![3.0, 1.0, 2.0, 2.0], 16);
        assert_eq!(exact, vec![1.5, 2.5]);
    }

    #[test]
    fn from_parts_rejects_backward_links() {
        let cond = SplitCondition {
            feature: 0,
            test: SplitTest::NumericLe(0.0),
        };
        let nodes = vec![Node::Split {
            condition: cond,
            gain: 1.0,
            left: 0,
            right: 0,
        }];
        assert!(DecisionTree::from_parts(nodes, vec![0.0], 1).is_err());
    }
}
