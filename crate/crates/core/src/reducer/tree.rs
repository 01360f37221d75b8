use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART regression tree with exact split search. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

/// Grows a tree minimising squared error. Splits are `x[f] <= t` with `t` the
/// midpoint between consecutive distinct values; the first best split in
/// (feature, threshold) order wins.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> RegressionTree {
    let mut tree = RegressionTree { nodes: Vec::new() };
    let rows: Vec<usize> = (0..y.len()).collect();
    grow(&mut tree, x, y, rows, 0, params);
    tree
}

fn mean(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len().max(1) as f64
}

fn grow(tree: &mut RegressionTree, x: &[Vec<f64>], y: &[f64], rows: Vec<usize>, depth: usize, p: TreeParams) -> usize {
    let id = tree.nodes.len();
    let value = mean(y, &rows);
    tree.nodes.push(Node::Leaf { value });
    let can_split = p.max_depth.is_none_or(|d| depth < d) && rows.len() >= 2 * p.min_samples_leaf.max(1);
    if !can_split {
        return id;
    }
    let Some((feature, threshold)) = best_split(x, y, &rows, p.min_samples_leaf.max(1)) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
    let left = grow(tree, x, y, l, depth + 1, p);
    let right = grow(tree, x, y, r, depth + 1, p);
    tree.nodes[id] = Node::Split { feature, threshold, left, right };
    id
}

fn best_split(x: &[Vec<f64>], y: &[f64], rows: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = rows.len();
    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let total_sq: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
    let parent_sse = total_sq - total * total / n as f64;
    if parent_sse <= 1e-15 * (1.0 + total_sq) {
        return None;
    }
    let d = x[rows[0]].len();
    let mut best: Option<(usize, f64)> = None;
    let mut best_sse = parent_sse - 1e-12 * (1.0 + parent_sse);
    let mut order = rows.to_vec();
    for f in 0..d {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 0..n - 1 {
            let v = y[order[k]];
            s += v;
            sq += v * v;
            let nl = k + 1;
            let nr = n - nl;
            let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
            if a == b || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let sse = (sq - s * s / nl as f64) + ((total_sq - sq) - (total - s).powi(2) / nr as f64);
            if sse < best_sse {
                best_sse = sse;
                best = Some((f, a + (b - a) / 2.0));
            }
        }
    }
    best
}

/// Squared-loss gradient boosting: a constant start followed by shallow
/// trees fitted to the residuals, each scaled by `shrinkage`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub init: f64,
    pub shrinkage: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

pub fn fit_boosted(x: &[Vec<f64>], y: &[f64], n_trees: usize, max_depth: usize, shrinkage: f64) -> BoostedTrees {
    let init = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let mut f = vec![init; y.len()];
    let mut trees = Vec::with_capacity(n_trees);
    let params = TreeParams { max_depth: Some(max_depth), min_samples_leaf: 1 };
    for _ in 0..n_trees {
        let resid: Vec<f64> = y.iter().zip(&f).map(|(t, p)| t - p).collect();
        let tree = fit_tree(x, &resid, params);
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += shrinkage * tree.predict(row);
        }
        trees.push(tree);
    }
    BoostedTrees { init, shrinkage, trees }
}
