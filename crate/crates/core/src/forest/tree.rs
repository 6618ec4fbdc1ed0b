use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Matrix;

/// A fitted tree. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        children: Box<[Node; 2]>,
    },
    Leaf {
        /// Class frequencies `[p(0), p(1)]`.
        leaf: [f64; 2],
    },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut n = self;
        loop {
            match n {
                Node::Leaf { leaf } => return leaf[1],
                Node::Split {
                    feature,
                    threshold,
                    children,
                } => n = &children[usize::from(x[*feature] > *threshold)],
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { children, .. } => 1 + children[0].depth().max(children[1].depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { children, .. } => children[0].n_leaves() + children[1].n_leaves(),
        }
    }

    pub(crate) fn visit_splits(&self, f: &mut impl FnMut(usize)) {
        if let Node::Split { feature, children, .. } = self {
            f(*feature);
            children[0].visit_splits(f);
            children[1].visit_splits(f);
        }
    }

    /// Every leaf frequency vector, depth-first.
    pub fn leaves(&self) -> Vec<[f64; 2]> {
        match self {
            Node::Leaf { leaf } => vec![*leaf],
            Node::Split { children, .. } => {
                let mut v = children[0].leaves();
                v.extend(children[1].leaves());
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_features: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

/// Column-major copy of the training matrix.
pub(crate) struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    pub fn new(x: &Matrix) -> Self {
        Columns {
            cols: (0..x.cols()).map(|j| (0..x.rows()).map(|i| x.get(i, j)).collect()).collect(),
        }
    }
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

fn counts(y: &[u8], idx: &[usize]) -> [usize; 2] {
    let mut c = [0; 2];
    idx.iter().for_each(|&i| c[usize::from(y[i])] += 1);
    c
}

/// Sum of squared class counts over size, the quantity a Gini split maximises.
fn purity(c: [usize; 2]) -> f64 {
    let n = (c[0] + c[1]) as f64;
    if n == 0.0 {
        0.0
    } else {
        ((c[0] * c[0] + c[1] * c[1]) as f64) / n
    }
}

const EPS: f64 = 1e-12;

/// Best threshold on one feature, if any split respects `min_leaf`.
fn scan(col: &[f64], y: &[u8], idx: &mut [usize], total: [usize; 2], min_leaf: usize) -> Option<(f64, f64)> {
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let n = idx.len();
    let mut left = [0usize; 2];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        left[usize::from(y[idx[i]])] += 1;
        let (a, b) = (col[idx[i]], col[idx[i + 1]]);
        if a == b || i + 1 < min_leaf || n - i - 1 < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let score = purity(left) + purity(right);
        if best.is_none_or(|(s, _)| score > s + EPS) {
            let mut thr = a + (b - a) / 2.0;
            if thr >= b {
                thr = a;
            }
            best = Some((score, thr));
        }
    }
    best
}

pub(crate) fn grow(cols: &Columns, y: &[u8], sample: Vec<usize>, p: &TreeParams, rng: &mut ChaCha8Rng) -> Node {
    grow_node(cols, y, sample, p, 0, rng)
}

fn grow_node(cols: &Columns, y: &[u8], mut idx: Vec<usize>, p: &TreeParams, depth: usize, rng: &mut ChaCha8Rng) -> Node {
    let total = counts(y, &idx);
    let n = idx.len();
    let leaf = || Node::Leaf {
        leaf: [total[0] as f64 / n as f64, total[1] as f64 / n as f64],
    };
    if total[0] == 0 || total[1] == 0 || n < 2 * p.min_leaf || p.max_depth.is_some_and(|m| depth >= m) {
        return leaf();
    }
    let f = cols.cols.len();
    let mut order: Vec<usize> = (0..f).collect();
    if p.max_features < f {
        order.shuffle(rng);
    }
    let mut best: Option<Best> = None;
    let mut buf = idx.clone();
    for (visited, &j) in order.iter().enumerate() {
        if visited >= p.max_features && best.is_some() {
            break;
        }
        buf.copy_from_slice(&idx);
        if let Some((score, threshold)) = scan(&cols.cols[j], y, &mut buf, total, p.min_leaf) {
            let better = match &best {
                None => true,
                Some(b) => {
                    score > b.score + EPS
                        || ((score - b.score).abs() <= EPS
                            && (j < b.feature || (j == b.feature && threshold < b.threshold)))
                }
            };
            if better {
                best = Some(Best {
                    score,
                    feature: j,
                    threshold,
                });
            }
        }
    }
    let Some(b) = best else { return leaf() };
    debug_assert!(b.score + 1e-9 >= purity(total), "negative Gini gain");
    let col = &cols.cols[b.feature];
    let (l, r): (Vec<usize>, Vec<usize>) = idx.drain(..).partition(|&i| col[i] <= b.threshold);
    Node::Split {
        feature: b.feature,
        threshold: b.threshold,
        children: Box::new([
            grow_node(cols, y, l, p, depth + 1, rng),
            grow_node(cols, y, r, p, depth + 1, rng),
        ]),
    }
}
