//! Regression trees, bagged ensembles, and gradient boosting with squared
//! error loss. Splits are exact greedy variance-reduction searches; all
//! randomness (bootstrap rows, per-node feature subsets, subsampling) flows
//! from the seed handed to the fit.

use rand::Rng;

use crate::linalg::Mat;
use crate::rng::{self, Prng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per node; 0 means ⌈D/3⌉.
    pub mtry: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub subsample: f64,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ForestModel {
    trees: Vec<Tree>,
}

impl ForestModel {
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.eval(x)).sum();
        s / self.trees.len() as f64
    }
}

#[derive(Clone, Debug)]
pub(crate) struct BoostModel {
    base: f64,
    rate: f64,
    trees: Vec<Tree>,
}

impl BoostModel {
    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        self.base + self.rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }
}

pub(crate) fn fit_forest(x: &Mat, y: &[f64], params: &ForestParams, seed: u64) -> ForestModel {
    let n = x.rows();
    let d = x.cols();
    let mtry = if params.mtry == 0 { d.div_ceil(3) } else { params.mtry.min(d) };
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut prng = rng::seeded(rng::derive(seed, &[0x7265, t as u64]));
        let rows: Vec<usize> = (0..n).map(|_| prng.random_range(0..n)).collect();
        trees.push(grow_tree(x, y, &rows, params.max_depth, params.min_leaf, mtry, &mut prng));
    }
    ForestModel { trees }
}

pub(crate) fn fit_boost(x: &Mat, y: &[f64], params: &BoostParams, seed: u64) -> BoostModel {
    let n = x.rows();
    let d = x.cols();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mut trees = Vec::with_capacity(params.n_rounds);
    let all_rows: Vec<usize> = (0..n).collect();
    for round in 0..params.n_rounds {
        let mut prng = rng::seeded(rng::derive(seed, &[0x626f, round as u64]));
        let rows = if params.subsample < 1.0 {
            let take = ((n as f64 * params.subsample).ceil() as usize).clamp(1, n);
            let mut pool = all_rows.clone();
            rng::shuffle(&mut pool, &mut prng);
            pool.truncate(take);
            pool.sort_unstable();
            pool
        } else {
            all_rows.clone()
        };
        let tree = grow_tree(x, &residual, &rows, params.max_depth, params.min_leaf, d, &mut prng);
        for i in 0..n {
            residual[i] -= params.learning_rate * tree.eval(x.row(i));
        }
        trees.push(tree);
    }
    BoostModel { base, rate: params.learning_rate, trees }
}

fn grow_tree(
    x: &Mat,
    y: &[f64],
    rows: &[usize],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    prng: &mut Prng,
) -> Tree {
    let mut nodes = Vec::new();
    build_node(x, y, rows, max_depth, min_leaf, mtry, prng, &mut nodes);
    Tree { nodes }
}

fn build_node(
    x: &Mat,
    y: &[f64],
    rows: &[usize],
    depth_left: usize,
    min_leaf: usize,
    mtry: usize,
    prng: &mut Prng,
    nodes: &mut Vec<Node>,
) -> usize {
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    if depth_left == 0 || rows.len() < 2 * min_leaf {
        nodes.push(Node::Leaf { value: mean });
        return nodes.len() - 1;
    }

    let d = x.cols();
    let features: Vec<usize> = if mtry >= d {
        (0..d).collect()
    } else {
        let mut pool: Vec<usize> = (0..d).collect();
        rng::shuffle(&mut pool, prng);
        pool.truncate(mtry);
        pool.sort_unstable();
        pool
    };

    let total: f64 = rows.iter().map(|&r| y[r]).sum();
    let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, score)
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for &f in &features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x[(r, f)], y[r])));
        pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left_sum = 0.0;
        for i in 0..pairs.len() - 1 {
            left_sum += pairs[i].1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let n_left = (i + 1) as f64;
            let n_right = (pairs.len() - i - 1) as f64;
            if (n_left as usize) < min_leaf || (n_right as usize) < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / n_left + right_sum * right_sum / n_right;
            if best.is_none_or(|(_, _, s)| score > s + 1e-12) {
                best = Some((f, 0.5 * (pairs[i].0 + pairs[i + 1].0), score));
            }
        }
    }

    let Some((feature, threshold, score)) = best else {
        nodes.push(Node::Leaf { value: mean });
        return nodes.len() - 1;
    };
    // require an actual variance reduction over the parent
    let parent_score = total * total / rows.len() as f64;
    if score <= parent_score + 1e-12 {
        nodes.push(Node::Leaf { value: mean });
        return nodes.len() - 1;
    }

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| x[(r, feature)] <= threshold);

    let here = nodes.len();
    nodes.push(Node::Leaf { value: mean }); // patched to a split below
    let left = build_node(x, y, &left_rows, depth_left - 1, min_leaf, mtry, prng, nodes);
    let right = build_node(x, y, &right_rows, depth_left - 1, min_leaf, mtry, prng, nodes);
    nodes[here] = Node::Split { feature, threshold, left, right };
    here
}
