//! Random forest of Gini-split decision trees with majority voting.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{rows, Classifier};
use crate::dataset::ClassSplit;
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: Some(5),
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    /// Training class counts reaching this leaf.
    Leaf { counts: Vec<u32> },
}

/// Nodes are stored flat; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf_counts(&self, x: &[T]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn predict(&self, x: &[T]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[Node<T>], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel<T> {
    pub trees: Vec<Tree<T>>,
    pub n_classes: usize,
    pub n_features: usize,
    pub label_map: Vec<String>,
}

impl<T: Scalar> ForestModel<T> {
    pub fn votes(&self, x: &[T]) -> Vec<u32> {
        let mut v = vec![0u32; self.n_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }
}

impl<T: Scalar> Classifier<T> for ForestModel<T> {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Vote counts per class.
    fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.votes(x).into_iter().map(|c| T::lit(c as f64)).collect())
    }
}

struct Grower<'a, T, R> {
    x: &'a [Vec<T>],
    y: &'a [usize],
    n_classes: usize,
    max_features: usize,
    rng: &'a mut R,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar, R: Rng> Grower<'_, T, R> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    // Best split of `idx` on one feature: (weighted impurity, threshold).
    fn best_on_feature(&self, idx: &mut [usize], f: usize, parent: &[u32]) -> Option<(f64, T)> {
        idx.sort_by(|&a, &b| self.x[a][f].partial_cmp(&self.x[b][f]).expect("finite features").then(a.cmp(&b)));
        let n = idx.len();
        let mut left = vec![0u32; self.n_classes];
        let mut right = parent.to_vec();
        let mut sq_left = 0.0f64;
        let mut sq_right: f64 = right.iter().map(|&c| (c as f64).powi(2)).sum();
        let mut best: Option<(f64, T)> = None;
        for k in 0..n - 1 {
            let c = self.y[idx[k]];
            sq_left += 2.0 * left[c] as f64 + 1.0;
            sq_right -= 2.0 * right[c] as f64 - 1.0;
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (self.x[idx[k]][f], self.x[idx[k + 1]][f]);
            if a == b {
                continue;
            }
            let (nl, nr) = ((k + 1) as f64, (n - k - 1) as f64);
            // n·weighted Gini = nl·(1 − Σpl²) + nr·(1 − Σpr²).
            let impurity = (nl - sq_left / nl) + (nr - sq_right / nr);
            if best.is_none_or(|(bi, _)| impurity < bi) {
                let mid = (a + b) / T::lit(2.0);
                best = Some((impurity, if mid < b { mid } else { a }));
            }
        }
        best
    }

    fn grow(&mut self, mut idx: Vec<usize>) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        if counts.iter().filter(|&&c| c > 0).count() <= 1 {
            return id;
        }
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(self.rng);
        // Keep drawing features past max_features until a usable split exists.
        let mut best: Option<(f64, usize, T)> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.max_features && best.is_some() {
                break;
            }
            if let Some((imp, thr)) = self.best_on_feature(&mut idx, f, &counts) {
                if best.is_none_or(|(bi, _, _)| imp < bi) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Grows one tree to purity on the given rows.
pub fn grow_tree<T: Scalar, R: Rng>(
    x: &[Vec<T>],
    y: &[usize],
    n_classes: usize,
    max_features: usize,
    sample: Vec<usize>,
    rng: &mut R,
) -> Tree<T> {
    let mut g = Grower {
        x,
        y,
        n_classes,
        max_features: max_features.max(1),
        rng,
        nodes: Vec::new(),
    };
    g.grow(sample);
    Tree { nodes: g.nodes }
}

/// Trains on raw (unstandardized) features. Each tree draws from its own
/// RNG stream, so results do not depend on thread scheduling.
pub fn train_random_forest<T: Scalar>(split: &ClassSplit<T>, params: ForestParams) -> Result<ForestModel<T>> {
    if split.train.is_empty() {
        return Err(Error::EmptySet);
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let x = rows(&split.train);
    let y = &split.train.y;
    let n = x.len();
    let n_features = x[0].len();
    let n_classes = split.n_classes();
    let max_features = params.max_features.unwrap_or(n_features).min(n_features);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = crate::seed::rng(params.seed, &format!("forest-tree-{t}"));
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(&x, y, n_classes, max_features, sample, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_classes,
        n_features,
        label_map: split.label_map.clone(),
    })
}
