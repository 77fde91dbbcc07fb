//! Exact-greedy gradient boosting of regression trees under squared error.
//!
//! With `g = ŷ − y` and `h = 1`, a split of a node with sums `(G, H)` into
//! `(G_L, H_L)` and `(G_R, H_R)` has gain
//! `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`, and a leaf gets weight
//! `−G/(H+λ)`. Candidate thresholds are midpoints between consecutive
//! distinct feature values; rows with `x < threshold` go left.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::MetaFeatures;
use crate::error::{GeoError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub colsample_bytree: f64,
    pub min_child_weight: f64,
    /// Only consulted when `colsample_bytree < 1`.
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 6,
            learning_rate: 0.3,
            lambda: 1.0,
            gamma: 0.0,
            colsample_bytree: 1.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    /// Latitude booster: 100 trees of depth 10.
    pub fn reference_latitude() -> Self {
        Self {
            n_estimators: 100,
            max_depth: 10,
            ..Self::default()
        }
    }

    /// Longitude booster: 1000 deeper trees of depth 20.
    pub fn reference_longitude() -> Self {
        Self {
            n_estimators: 1000,
            max_depth: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GeoError::InvalidArgument(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must lie in (0, 1]");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { weight } => return weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] < threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub feature_names: Vec<String>,
    pub params: GbtParams,
}

/// Per-round training diagnostics. Index 0 is the state before any tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    pub train_mse: Vec<f64>,
    pub predictions: Vec<Vec<f64>>,
}

impl GbtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_truncated(row, self.trees.len())
    }

    /// Prediction using only the first `n_trees` trees.
    pub fn predict_row_truncated(&self, row: &[f64], n_trees: usize) -> f64 {
        let mut acc = self.base_score;
        for tree in self.trees.iter().take(n_trees) {
            acc += self.params.learning_rate * tree.predict(row);
        }
        acc
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::from("gbt-model v1\n");
        let _ = writeln!(s, "base_score={}", self.base_score);
        let _ = writeln!(s, "n_estimators={}", p.n_estimators);
        let _ = writeln!(s, "max_depth={}", p.max_depth);
        let _ = writeln!(s, "learning_rate={}", p.learning_rate);
        let _ = writeln!(s, "lambda={}", p.lambda);
        let _ = writeln!(s, "gamma={}", p.gamma);
        let _ = writeln!(s, "colsample_bytree={}", p.colsample_bytree);
        let _ = writeln!(s, "min_child_weight={}", p.min_child_weight);
        let _ = writeln!(s, "seed={}", p.seed);
        let _ = writeln!(s, "features={}", self.feature_names.join(","));
        let _ = writeln!(s, "trees={}", self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {t} {}", tree.nodes.len());
            for node in &tree.nodes {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(s, "S {feature} {threshold} {left} {right}");
                    }
                    TreeNode::Leaf { weight } => {
                        let _ = writeln!(s, "L {weight}");
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| GeoError::parse(0, format!("truncated model: expected {what}")))
        };
        let (no, magic) = next("header")?;
        if magic != "gbt-model v1" {
            return Err(GeoError::parse(no, "not a gbt-model v1 file"));
        }
        fn field<'a>(line: (usize, &'a str), key: &str) -> Result<(usize, &'a str)> {
            line.1
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(|v| (line.0, v))
                .ok_or_else(|| GeoError::parse(line.0, format!("expected '{key}='")))
        }
        fn num<T: std::str::FromStr>((no, v): (usize, &str)) -> Result<T> {
            v.parse()
                .map_err(|_| GeoError::parse(no, format!("bad number '{v}'")))
        }
        let base_score: f64 = num(field(next("base_score")?, "base_score")?)?;
        let params = GbtParams {
            n_estimators: num(field(next("n_estimators")?, "n_estimators")?)?,
            max_depth: num(field(next("max_depth")?, "max_depth")?)?,
            learning_rate: num(field(next("learning_rate")?, "learning_rate")?)?,
            lambda: num(field(next("lambda")?, "lambda")?)?,
            gamma: num(field(next("gamma")?, "gamma")?)?,
            colsample_bytree: num(field(next("colsample_bytree")?, "colsample_bytree")?)?,
            min_child_weight: num(field(next("min_child_weight")?, "min_child_weight")?)?,
            seed: num(field(next("seed")?, "seed")?)?,
        };
        params.validate()?;
        let (_, feats) = field(next("features")?, "features")?;
        let feature_names: Vec<String> = feats.split(',').map(str::to_string).collect();
        let n_trees: usize = num(field(next("trees")?, "trees")?)?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let (no, head) = next("tree header")?;
            let parts: Vec<&str> = head.split(' ').collect();
            if parts.len() != 3 || parts[0] != "tree" || parts[1] != t.to_string() {
                return Err(GeoError::parse(no, format!("expected 'tree {t} <nodes>'")));
            }
            let n_nodes: usize = num((no, parts[2]))?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let (no, line) = next("tree node")?;
                let f: Vec<&str> = line.split(' ').collect();
                let node = match f.as_slice() {
                    ["L", w] => TreeNode::Leaf {
                        weight: num((no, w))?,
                    },
                    ["S", feat, thr, l, r] => TreeNode::Split {
                        feature: num((no, feat))?,
                        threshold: num((no, thr))?,
                        left: num((no, l))?,
                        right: num((no, r))?,
                    },
                    _ => return Err(GeoError::parse(no, "malformed tree node")),
                };
                if let TreeNode::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    if feature >= feature_names.len() || left >= n_nodes || right >= n_nodes {
                        return Err(GeoError::parse(no, "tree node index out of range"));
                    }
                    if left <= nodes.len() || right <= nodes.len() {
                        return Err(GeoError::parse(
                            no,
                            "tree children must follow their parent",
                        ));
                    }
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(GeoError::parse(no, "empty tree"));
            }
            trees.push(RegressionTree { nodes });
        }
        Ok(Self {
            base_score,
            trees,
            feature_names,
            params,
        })
    }
}

struct Builder<'a> {
    x: &'a MetaFeatures,
    grad: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    list: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    /// `sorted[c]` holds this node's rows sorted by feature `features[c]`.
    fn grow(&mut self, features: &[usize], sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let g_total: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h_total = rows.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            weight: -g_total / (h_total + self.params.lambda),
        });
        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }

        let parent = self.score(g_total, h_total);
        let mcw = self.params.min_child_weight;
        let mut best: Option<BestSplit> = None;
        for (c, list) in sorted.iter().enumerate() {
            let f = features[c];
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..list.len() - 1 {
                gl += self.grad[list[k]];
                hl += 1.0;
                let (a, b) = (self.x.get(list[k], f), self.x.get(list[k + 1], f));
                if a >= b {
                    continue;
                }
                let hr = h_total - hl;
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gr = g_total - gl;
                let gain =
                    0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.params.gamma;
                if gain > best.as_ref().map_or(0.0, |s| s.gain) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid > a { mid } else { b };
                    best = Some(BestSplit {
                        list: c,
                        threshold,
                        gain,
                    });
                }
            }
        }
        let Some(split) = best else { return id };

        let feature = features[split.list];
        let goes_left: Vec<bool> = {
            let mut v = vec![false; self.x.rows()];
            for &r in &sorted[split.list] {
                v[r] = self.x.get(r, feature) < split.threshold;
            }
            v
        };
        let (mut left_lists, mut right_lists) = (
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        );
        for list in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| goes_left[r]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = self.grow(features, left_lists, depth + 1);
        let right = self.grow(features, right_lists, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / y.len() as f64
}

pub fn train_gbt(x: &MetaFeatures, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    fit(x, y, params, false).map(|(m, _)| m)
}

/// Like [`train_gbt`], also returning the training predictions and loss after
/// each round.
pub fn train_gbt_traced(
    x: &MetaFeatures,
    y: &[f64],
    params: &GbtParams,
) -> Result<(GbtModel, BoostTrace)> {
    fit(x, y, params, true)
}

fn fit(
    x: &MetaFeatures,
    y: &[f64],
    params: &GbtParams,
    traced: bool,
) -> Result<(GbtModel, BoostTrace)> {
    params.validate()?;
    if y.len() != x.rows() {
        return Err(GeoError::DimensionMismatch(format!(
            "{} targets for {} feature rows",
            y.len(),
            x.rows()
        )));
    }
    if y.is_empty() {
        return Err(GeoError::InvalidData("cannot boost on zero rows".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GeoError::InvalidData("non-finite boosting target".into()));
    }

    let n = y.len();
    let ncols = x.cols();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let presorted: Vec<Vec<usize>> = (0..ncols)
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x.get(a, c).total_cmp(&x.get(b, c)).then(a.cmp(&b)));
            idx
        })
        .collect();
    let n_sampled = if params.colsample_bytree >= 1.0 {
        ncols
    } else {
        ((params.colsample_bytree * ncols as f64).floor() as usize).max(1)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut pred = vec![base_score; n];
    let mut trace = BoostTrace {
        train_mse: Vec::new(),
        predictions: Vec::new(),
    };
    if traced {
        trace.train_mse.push(mse(&pred, y));
        trace.predictions.push(pred.clone());
    }
    let mut trees = Vec::with_capacity(params.n_estimators);
    let mut grad = vec![0.0; n];
    for _ in 0..params.n_estimators {
        for i in 0..n {
            grad[i] = pred[i] - y[i];
        }
        let features: Vec<usize> = if n_sampled == ncols {
            (0..ncols).collect()
        } else {
            let mut f = sample(&mut rng, ncols, n_sampled).into_vec();
            f.sort_unstable();
            f
        };
        let sorted = features.iter().map(|&f| presorted[f].clone()).collect();
        let mut builder = Builder {
            x,
            grad: &grad,
            params,
            nodes: Vec::new(),
        };
        builder.grow(&features, sorted, 0);
        let tree = RegressionTree {
            nodes: builder.nodes,
        };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
        if traced {
            trace.train_mse.push(mse(&pred, y));
            trace.predictions.push(pred.clone());
        }
    }
    let model = GbtModel {
        base_score,
        trees,
        feature_names: x.column_names().to_vec(),
        params: *params,
    };
    Ok((model, trace))
}

pub fn predict_gbt(model: &GbtModel, x: &MetaFeatures) -> Result<Vec<f64>> {
    if x.column_names() != model.feature_names.as_slice() {
        return Err(GeoError::DimensionMismatch(format!(
            "model expects columns [{}], got [{}]",
            model.feature_names.join(","),
            x.column_names().join(",")
        )));
    }
    Ok((0..x.rows()).map(|r| model.predict_row(x.row(r))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_col(xs: &[f64]) -> MetaFeatures {
        MetaFeatures::from_rows(&xs.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_split_by_hand() {
        // Rows 0,1 at y=0 and rows 2,3 at y=4; base 2, gradients (2,2,−2,−2).
        let x = one_col(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 0.0, 4.0, 4.0];
        let p = GbtParams {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 1.0,
            ..Default::default()
        };
        let m = train_gbt(&x, &y, &p).unwrap();
        assert_eq!(m.base_score, 2.0);
        let tree = &m.trees[0];
        assert_eq!(
            tree.nodes()[0],
            TreeNode::Split {
                feature: 0,
                threshold: 2.5,
                left: 1,
                right: 2
            }
        );
        // w = −G/(H+λ) = −4/3 on the left.
        assert_eq!(tree.nodes()[1], TreeNode::Leaf { weight: -4.0 / 3.0 });
        assert_eq!(tree.nodes()[2], TreeNode::Leaf { weight: 4.0 / 3.0 });
    }

    #[test]
    fn gamma_blocks_weak_splits() {
        let x = one_col(&[1.0, 2.0, 3.0, 4.0]);
        let y = [0.0, 0.0, 4.0, 4.0];
        // Gain of the best split: ½(16/3 + 16/3 − 0) = 16/3.
        let p = GbtParams {
            n_estimators: 1,
            max_depth: 3,
            gamma: 16.0 / 3.0,
            ..Default::default()
        };
        let m = train_gbt(&x, &y, &p).unwrap();
        assert_eq!(m.trees[0].nodes().len(), 1);
    }

    #[test]
    fn constant_feature_gives_leaf() {
        let x = one_col(&[1.0; 5]);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = train_gbt(&x, &y, &GbtParams::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes().len() == 1));
    }

    #[test]
    fn ties_prefer_lower_column() {
        let x = MetaFeatures::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let p = GbtParams {
            n_estimators: 1,
            max_depth: 1,
            lambda: 0.0,
            ..Default::default()
        };
        let m = train_gbt(&x, &[0.0, 1.0], &p).unwrap();
        assert!(matches!(
            m.trees[0].nodes()[0],
            TreeNode::Split { feature: 0, .. }
        ));
    }

    #[test]
    fn trace_matches_prediction_bitwise() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64 * 0.3])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0].sin() + r[1]).collect();
        let x = MetaFeatures::from_rows(&rows).unwrap();
        let p = GbtParams {
            n_estimators: 20,
            max_depth: 3,
            colsample_bytree: 0.5,
            seed: 4,
            ..Default::default()
        };
        let (m, trace) = train_gbt_traced(&x, &y, &p).unwrap();
        assert_eq!(trace.train_mse.len(), 21);
        assert_eq!(predict_gbt(&m, &x).unwrap(), trace.predictions[20]);
        for t in [0, 5, 20] {
            let trunc: Vec<f64> = (0..x.rows())
                .map(|r| m.predict_row_truncated(x.row(r), t))
                .collect();
            assert_eq!(trunc, trace.predictions[t]);
        }
        assert_eq!(GbtModel::from_text(&m.to_text()).unwrap(), m);
        assert_eq!(train_gbt(&x, &y, &p).unwrap(), m);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = one_col(&[1.0, 2.0]);
        assert!(train_gbt(&x, &[1.0], &GbtParams::default()).is_err());
        assert!(train_gbt(&x, &[1.0, f64::NAN], &GbtParams::default()).is_err());
        let bad = GbtParams {
            colsample_bytree: 0.0,
            ..Default::default()
        };
        assert!(train_gbt(&x, &[1.0, 2.0], &bad).is_err());
        assert!(GbtModel::from_text("gbt-model v2\n").is_err());
    }

    #[test]
    fn reference_configs() {
        let (a, b) = (
            GbtParams::reference_latitude(),
            GbtParams::reference_longitude(),
        );
        assert_eq!((a.n_estimators, a.max_depth), (100, 10));
        assert_eq!((b.n_estimators, b.max_depth), (1000, 20));
    }

    proptest! {
        #[test]
        fn training_loss_never_increases(
            data in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -10.0f64..10.0), 2..40),
            depth in 1usize..5,
        ) {
            let rows: Vec<Vec<f64>> = data.iter().map(|(a, b, _)| vec![*a, *b]).collect();
            let y: Vec<f64> = data.iter().map(|(_, _, t)| *t).collect();
            let x = MetaFeatures::from_rows(&rows).unwrap();
            let p = GbtParams { n_estimators: 15, max_depth: depth, ..Default::default() };
            let (_, trace) = train_gbt_traced(&x, &y, &p).unwrap();
            for w in trace.train_mse.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
        }
    }
}
