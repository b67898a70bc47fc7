//! The shared actor-critic ensemble.
//!
//! `θ(x) = θ₀ + Σ_m rate_m ∘ h_m(x)`, where every tree emits one vector over
//! all output dims and `rate_m` is the per-dimension learning rate in effect
//! when tree `m` was added. Policy dims, log-std dims and the value dim each
//! get their own rate.

use std::ops::Range;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSchema, FeatureVector};
use crate::policy::{Distribution, PolicyParams};
use crate::tree::{DecisionTree, Node, SplitCondition, SplitTest};

/// Log-std initialization for Gaussian heads.
pub const LOG_STD_INIT: f64 = -2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionHead {
    Discrete { n_actions: usize },
    Gaussian { action_dim: usize },
}

impl ActionHead {
    pub fn param_dim(self) -> usize {
        match self {
            ActionHead::Discrete { n_actions } => n_actions,
            ActionHead::Gaussian { action_dim } => 2 * action_dim,
        }
    }
}

/// How θ's dims split into policy, log-std and value groups. The value dim,
/// when present, is always last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputLayout {
    pub head: Option<ActionHead>,
    pub value: bool,
}

impl OutputLayout {
    /// Logits followed by the value.
    pub fn discrete(n_actions: usize) -> Self {
        Self {
            head: Some(ActionHead::Discrete { n_actions }),
            value: true,
        }
    }

    /// μ, then log σ, then the value.
    pub fn gaussian(action_dim: usize) -> Self {
        Self {
            head: Some(ActionHead::Gaussian { action_dim }),
            value: true,
        }
    }

    pub fn actor_only(head: ActionHead) -> Self {
        Self {
            head: Some(head),
            value: false,
        }
    }

    pub fn value_only() -> Self {
        Self {
            head: None,
            value: true,
        }
    }

    /// Same head with the value dim removed.
    pub fn without_value(self) -> Self {
        Self { value: false, ..self }
    }

    pub fn output_dim(&self) -> usize {
        self.head.map_or(0, ActionHead::param_dim) + usize::from(self.value)
    }

    /// All dims that parameterize the action distribution.
    pub fn policy_range(&self) -> Range<usize> {
        0..self.head.map_or(0, ActionHead::param_dim)
    }

    /// Dims trained with the actor rate (logits or μ).
    pub fn actor_range(&self) -> Range<usize> {
        match self.head {
            Some(ActionHead::Discrete { n_actions }) => 0..n_actions,
            Some(ActionHead::Gaussian { action_dim }) => 0..action_dim,
            None => 0..0,
        }
    }

    pub fn log_std_range(&self) -> Range<usize> {
        match self.head {
            Some(ActionHead::Gaussian { action_dim }) => action_dim..2 * action_dim,
            _ => 0..0,
        }
    }

    pub fn value_index(&self) -> Option<usize> {
        self.value.then(|| self.output_dim() - 1)
    }

    /// θ₀: zeros, with log-std dims at [`LOG_STD_INIT`].
    pub fn initial_theta(&self) -> Vec<f64> {
        self.initial_theta_with(LOG_STD_INIT)
    }

    pub fn initial_theta_with(&self, log_std_init: f64) -> Vec<f64> {
        let mut theta = vec![0.0; self.output_dim()];
        theta[self.log_std_range()].iter_mut().for_each(|v| *v = log_std_init);
        theta
    }

    /// Per-dim rates from the three group rates.
    pub fn rates(&self, actor: f64, critic: f64, log_std: f64) -> Vec<f64> {
        let mut lr = vec![actor; self.output_dim()];
        lr[self.log_std_range()].iter_mut().for_each(|v| *v = log_std);
        if let Some(v) = self.value_index() {
            lr[v] = critic;
        }
        lr
    }

    /// Action distribution encoded by the policy dims of `theta`.
    pub fn distribution(&self, theta: &[f64]) -> Option<Distribution> {
        match self.head? {
            ActionHead::Discrete { n_actions } => Some(Distribution::Categorical {
                logits: theta[..n_actions].to_vec(),
            }),
            ActionHead::Gaussian { action_dim } => Some(Distribution::Gaussian {
                mu: theta[..action_dim].to_vec(),
                log_std: theta[action_dim..2 * action_dim].to_vec(),
            }),
        }
    }

    pub fn value(&self, theta: &[f64]) -> Option<f64> {
        self.value_index().map(|i| theta[i])
    }

    /// Splits a full θ into policy head and value.
    pub fn params(&self, theta: &[f64]) -> Result<PolicyParams> {
        match (self.distribution(theta), self.value(theta)) {
            (Some(dist), Some(value)) => Ok(PolicyParams { dist, value }),
            _ => Err(Error::LayoutMismatch(
                "layout lacks either a policy head or a value dim".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedACEnsemble {
    theta0: Vec<f64>,
    lr_per_dim: Vec<f64>,
    trees: Vec<DecisionTree>,
    /// Multiplier on the log-std rate recorded for each tree.
    log_std_scales: Vec<f64>,
    /// Effective per-dim rates of each tree, row-major (derived).
    tree_rates: Vec<f64>,
    /// Contiguous copy of the trees used for prediction (derived).
    forest: FlatForest,
    schema: FeatureSchema,
    layout: OutputLayout,
}

const FLAT_LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct FlatNode {
    /// Threshold, or the token id for categorical tests.
    value: f64,
    /// Feature slot, or `FLAT_LEAF`.
    feature: u32,
    categorical: bool,
    /// Left child; for leaves, the leaf row in `FlatForest::leaves`.
    left: u32,
    right: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct FlatForest {
    nodes: Vec<FlatNode>,
    roots: Vec<u32>,
    /// Leaf vectors already multiplied by their tree's rates.
    leaves: Vec<f64>,
}

impl FlatForest {
    fn push(&mut self, tree: &DecisionTree, rates: &[f64]) {
        let base = self.nodes.len() as u32;
        let leaf_base = (self.leaves.len() / rates.len()) as u32;
        self.roots.push(base);
        self.nodes.extend(tree.nodes().iter().map(|node| match node {
            Node::Leaf { leaf } => FlatNode {
                value: 0.0,
                feature: FLAT_LEAF,
                categorical: false,
                left: leaf_base + leaf,
                right: 0,
            },
            Node::Split {
                condition, left, right, ..
            } => {
                let (value, categorical) = match condition.test {
                    SplitTest::NumericLe(t) => (t, false),
                    SplitTest::CategoricalEq(tok) => (f64::from(tok), true),
                };
                FlatNode {
                    value,
                    feature: condition.feature as u32,
                    categorical,
                    left: base + left,
                    right: base + right,
                }
            }
        }));
        for row in tree.leaf_values().chunks_exact(rates.len()) {
            self.leaves.extend(row.iter().zip(rates).map(|(l, r)| r * l));
        }
    }

    /// Scaled leaf vector of tree `m` for `x`.
    #[inline]
    fn leaf(&self, m: usize, x: &[f64], d: usize) -> &[f64] {
        let mut i = self.roots[m] as usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == FLAT_LEAF {
                let row = n.left as usize * d;
                return &self.leaves[row..row + d];
            }
            let v = x[n.feature as usize];
            let left = if n.categorical { v == n.value } else { v <= n.value };
            i = if left { n.left } else { n.right } as usize;
        }
    }
}

impl SharedACEnsemble {
    pub fn new(schema: FeatureSchema, layout: OutputLayout, theta0: Vec<f64>, lr_per_dim: Vec<f64>) -> Result<Self> {
        let d = layout.output_dim();
        if d == 0 {
            return Err(Error::InvalidConfig("layout has no output dims".into()));
        }
        for v in [&theta0, &lr_per_dim] {
            if v.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: v.len(),
                });
            }
        }
        if let Some(bad) = lr_per_dim.iter().find(|lr| !(lr.is_finite() && **lr > 0.0)) {
            return Err(Error::InvalidConfig(format!("learning rates must be positive, got {bad}")));
        }
        if theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("theta0 must be finite".into()));
        }
        Ok(Self {
            theta0,
            lr_per_dim,
            trees: Vec::new(),
            log_std_scales: Vec::new(),
            tree_rates: Vec::new(),
            forest: FlatForest::default(),
            schema,
            layout,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn lr_per_dim(&self) -> &[f64] {
        &self.lr_per_dim
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(DecisionTree::node_count).sum()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_mut(&mut self) -> &mut FeatureSchema {
        &mut self.schema
    }

    pub fn set_schema(&mut self, schema: FeatureSchema) {
        self.schema = schema;
    }

    pub fn layout(&self) -> OutputLayout {
        self.layout
    }

    /// Effective rates tree `m` contributes with.
    pub fn tree_rates(&self, m: usize) -> &[f64] {
        let d = self.output_dim();
        &self.tree_rates[m * d..(m + 1) * d]
    }

    pub fn add_tree(&mut self, tree: DecisionTree) -> Result<()> {
        self.add_tree_scaled(tree, 1.0)
    }

    /// Appends a tree whose log-std dims use `log_std_scale` times the base
    /// log-std rate (for scheduled rates).
    pub fn add_tree_scaled(&mut self, tree: DecisionTree, log_std_scale: f64) -> Result<()> {
        if tree.output_dim() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: tree.output_dim(),
            });
        }
        if !log_std_scale.is_finite() || log_std_scale < 0.0 {
            return Err(Error::InvalidConfig(format!("invalid log-std rate scale {log_std_scale}")));
        }
        let mut rates = self.lr_per_dim.clone();
        rates[self.layout.log_std_range()]
            .iter_mut()
            .for_each(|r| *r *= log_std_scale);
        self.forest.push(&tree, &rates);
        self.tree_rates.extend(rates);
        self.trees.push(tree);
        self.log_std_scales.push(log_std_scale);
        Ok(())
    }

    /// Adds `rate_m ∘ h_m(x)` of tree `m` into `out`.
    #[inline]
    pub fn accumulate_tree(&self, m: usize, x: &[f64], out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(self.forest.leaf(m, x, self.output_dim())) {
            *o += l;
        }
    }

    /// Raw θ(x).
    pub fn predict_theta(&self, x: &FeatureVector) -> Vec<f64> {
        let mut out = self.theta0.clone();
        self.predict_into(x.values(), &mut out);
        out
    }

    fn predict_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.output_dim();
        for m in 0..self.trees.len() {
            for (o, l) in out.iter_mut().zip(self.forest.leaf(m, x, d)) {
                *o += l;
            }
        }
    }

    /// θ for many inputs. Walks the ensemble tree by tree so each tree is
    /// loaded once for the whole batch; results equal [`Self::predict_theta`]
    /// bit for bit.
    pub fn predict_theta_batch(&self, xs: &[&FeatureVector]) -> Vec<Vec<f64>> {
        let d = self.output_dim();
        let mut out: Vec<Vec<f64>> = xs.iter().map(|_| self.theta0.clone()).collect();
        for m in 0..self.trees.len() {
            for (x, o) in xs.iter().zip(&mut out) {
                for (o, l) in o.iter_mut().zip(self.forest.leaf(m, x.values(), d)) {
                    *o += l;
                }
            }
        }
        out
    }

    /// θ(x) split into policy head and value.
    pub fn predict(&self, x: &FeatureVector) -> Result<PolicyParams> {
        self.layout.params(&self.predict_theta(x))
    }

    pub fn predict_batch(&self, xs: &[&FeatureVector]) -> Result<Vec<PolicyParams>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Summed split gain per feature slot, over all trees.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.schema.len()];
        for tree in &self.trees {
            for (feature, gain) in tree.split_gains() {
                imp[feature] += gain;
            }
        }
        imp
    }

    /// Up to `k` (slot, importance) pairs, highest first; ties by slot.
    pub fn top_features(&self, k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.feature_importance().into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::decode(bytes)
    }
}

/// Binary model format.
///
/// ```text
/// magic "GBRLENS\0" | version u32 | payload_len u64 | payload | crc64 u64
/// ```
///
/// All integers and reals are little-endian; reals are IEEE-754 binary64 bit
/// patterns. The checksum is CRC-64/XZ over everything before it. The payload
/// holds the schema, layout, θ₀, per-dim rates and the tree list.
mod codec {
    use super::*;

    pub const MAGIC: &[u8; 8] = b"GBRLENS\0";
    pub const VERSION: u32 = 1;
    const CRC: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
    const HEADER: usize = 8 + 4 + 8;

    struct Writer(Vec<u8>);

    impl Writer {
        fn u8(&mut self, v: u8) {
            self.0.push(v);
        }
        fn u32(&mut self, v: u32) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn u64(&mut self, v: u64) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
        fn f64(&mut self, v: f64) {
            self.u64(v.to_bits());
        }
        fn len(&mut self, n: usize) {
            self.u32(u32::try_from(n).expect("collection too large for the model format"));
        }
        fn str(&mut self, s: &str) {
            self.len(s.len());
            self.0.extend_from_slice(s.as_bytes());
        }
        fn f64s(&mut self, vs: &[f64]) {
            self.len(vs.len());
            vs.iter().for_each(|&v| self.f64(v));
        }
    }

    pub fn encode(ens: &SharedACEnsemble) -> Vec<u8> {
        let mut p = Writer(Vec::new());
        let schema = &ens.schema;
        p.len(schema.len());
        for (slot, entry) in schema.entries().iter().enumerate() {
            p.str(&entry.name);
            match schema.vocabulary(slot) {
                None => p.u8(0),
                Some(vocab) => {
                    p.u8(1);
                    p.len(vocab.len());
                    vocab.tokens().iter().for_each(|t| p.str(t));
                }
            }
        }
        match ens.layout.head {
            None => {
                p.u8(0);
                p.u32(0);
            }
            Some(ActionHead::Discrete { n_actions }) => {
                p.u8(1);
                p.len(n_actions);
            }
            Some(ActionHead::Gaussian { action_dim }) => {
                p.u8(2);
                p.len(action_dim);
            }
        }
        p.u8(u8::from(ens.layout.value));
        p.f64s(&ens.theta0);
        p.f64s(&ens.lr_per_dim);
        p.u64(ens.trees.len() as u64);
        for (tree, &scale) in ens.trees.iter().zip(&ens.log_std_scales) {
            p.f64(scale);
            p.len(tree.nodes().len());
            for node in tree.nodes() {
                match node {
                    Node::Leaf { leaf } => {
                        p.u8(0);
                        p.u32(*leaf);
                    }
                    Node::Split {
                        condition,
                        gain,
                        left,
                        right,
                    } => {
                        p.u8(1);
                        p.len(condition.feature);
                        match condition.test {
                            SplitTest::NumericLe(t) => {
                                p.u8(0);
                                p.f64(t);
                            }
                            SplitTest::CategoricalEq(tok) => {
                                p.u8(1);
                                p.u32(tok);
                            }
                        }
                        p.f64(*gain);
                        p.u32(*left);
                        p.u32(*right);
                    }
                }
            }
            p.f64s(tree.leaf_values());
        }

        let payload = p.0;
        let mut out = Writer(Vec::with_capacity(HEADER + payload.len() + 8));
        out.0.extend_from_slice(MAGIC);
        out.u32(VERSION);
        out.u64(payload.len() as u64);
        out.0.extend_from_slice(&payload);
        let sum = CRC.checksum(&out.0);
        out.u64(sum);
        out.0
    }

    struct Reader<'a> {
        buf: &'a [u8],
        pos: usize,
    }

    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
            let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
            match end {
                Some(end) => {
                    let s = &self.buf[self.pos..end];
                    self.pos = end;
                    Ok(s)
                }
                None => Err(Error::Truncated(what)),
            }
        }
        fn u8(&mut self, what: &'static str) -> Result<u8> {
            Ok(self.take(1, what)?[0])
        }
        fn u32(&mut self, what: &'static str) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
        }
        fn u64(&mut self, what: &'static str) -> Result<u64> {
            Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
        }
        fn f64(&mut self, what: &'static str) -> Result<f64> {
            Ok(f64::from_bits(self.u64(what)?))
        }
        fn len(&mut self, what: &'static str) -> Result<usize> {
            Ok(self.u32(what)? as usize)
        }
        fn str(&mut self, what: &'static str) -> Result<String> {
            let n = self.len(what)?;
            String::from_utf8(self.take(n, what)?.to_vec())
                .map_err(|_| Error::Malformed(format!("{what} is not UTF-8")))
        }
        fn f64s(&mut self, what: &'static str) -> Result<Vec<f64>> {
            let n = self.len(what)?;
            // Bound the allocation by the bytes actually present.
            if n > (self.buf.len() - self.pos) / 8 {
                return Err(Error::Truncated(what));
            }
            (0..n).map(|_| self.f64(what)).collect()
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<SharedACEnsemble> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(Error::Malformed("not a GBRL ensemble file".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let payload_len = r.u64("payload length")?;
        let total = usize::try_from(payload_len)
            .ok()
            .and_then(|n| n.checked_add(HEADER + 8))
            .ok_or(Error::Truncated("payload"))?;
        if bytes.len() < total {
            return Err(Error::Truncated("payload"));
        }
        if bytes.len() > total {
            return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - total)));
        }
        let body = &bytes[..total - 8];
        let stored = u64::from_le_bytes(bytes[total - 8..].try_into().unwrap());
        let computed = CRC.checksum(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut p = Reader { buf: body, pos: HEADER };
        let n_slots = p.len("schema length")?;
        let mut schema = FeatureSchema::new();
        for slot in 0..n_slots {
            let name = p.str("feature name")?;
            match p.u8("feature kind")? {
                0 => {
                    schema.push(name, FeatureKind::Numerical);
                }
                1 => {
                    schema.push(name, FeatureKind::Categorical);
                    let n = p.len("vocabulary length")?;
                    let tokens = (0..n).map(|_| p.str("token")).collect::<Result<Vec<_>>>()?;
                    schema.set_vocabulary(slot, tokens)?;
                }
                k => return Err(Error::Malformed(format!("unknown feature kind {k}"))),
            }
        }
        let head_kind = p.u8("layout")?;
        let head_size = p.len("layout")?;
        let head = match head_kind {
            0 => None,
            1 => Some(ActionHead::Discrete { n_actions: head_size }),
            2 => Some(ActionHead::Gaussian { action_dim: head_size }),
            k => return Err(Error::Malformed(format!("unknown action head {k}"))),
        };
        let value = match p.u8("layout")? {
            0 => false,
            1 => true,
            v => return Err(Error::Malformed(format!("bad value flag {v}"))),
        };
        let layout = OutputLayout { head, value };
        let theta0 = p.f64s("theta0")?;
        let lr = p.f64s("learning rates")?;
        let mut ens = SharedACEnsemble::new(schema, layout, theta0, lr)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let d = ens.output_dim();

        let n_trees = p.u64("tree count")?;
        for _ in 0..n_trees {
            let scale = p.f64("tree rate scale")?;
            let n_nodes = p.len("node count")?;
            if n_nodes > body.len() - p.pos {
                return Err(Error::Truncated("nodes"));
            }
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                nodes.push(match p.u8("node tag")? {
                    0 => Node::Leaf { leaf: p.u32("leaf")? },
                    1 => {
                        let feature = p.len("split feature")?;
                        let test = match p.u8("split test")? {
                            0 => SplitTest::NumericLe(p.f64("threshold")?),
                            1 => SplitTest::CategoricalEq(p.u32("token")?),
                            k => return Err(Error::Malformed(format!("unknown split test {k}"))),
                        };
                        let expected = match test {
                            SplitTest::NumericLe(_) => FeatureKind::Numerical,
                            SplitTest::CategoricalEq(_) => FeatureKind::Categorical,
                        };
                        if ens.schema.kind(feature) != Some(expected) {
                            return Err(Error::Malformed(format!(
                                "split on feature {feature} does not match the schema"
                            )));
                        }
                        Node::Split {
                            condition: SplitCondition { feature, test },
                            gain: p.f64("gain")?,
                            left: p.u32("child")?,
                            right: p.u32("child")?,
                        }
                    }
                    t => return Err(Error::Malformed(format!("unknown node tag {t}"))),
                });
            }
            let leaves = p.f64s("leaf values")?;
            let tree = DecisionTree::from_parts(nodes, leaves, d)?;
            ens.add_tree_scaled(tree, scale)
                .map_err(|e| Error::Malformed(e.to_string()))?;
        }
        if p.pos != body.len() {
            return Err(Error::Malformed("unread bytes after tree list".into()));
        }
        Ok(ens)
    }
}
