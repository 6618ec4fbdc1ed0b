use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn dataset(n: usize, f: usize, seed: u64, label: impl Fn(&[f64], &mut ChaCha8Rng) -> u8) -> (Matrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let r: Vec<f64> = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
        y.push(label(&r, &mut rng));
        rows.push(r);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn accuracy(p: &[f64], y: &[u8]) -> f64 {
    p.iter().zip(y).filter(|(p, &y)| (**p >= 0.5) == (y == 1)).count() as f64 / y.len() as f64
}

/// Plain recursive CART over every feature and every midpoint.
fn oracle(x: &Matrix, y: &[u8], idx: &[usize]) -> Node {
    let c1 = idx.iter().filter(|&&i| y[i] == 1).count();
    let n = idx.len();
    let leaf = Node::Leaf {
        leaf: [(n - c1) as f64 / n as f64, c1 as f64 / n as f64],
    };
    if c1 == 0 || c1 == n {
        return leaf;
    }
    let g = |ids: &[usize]| {
        let m = ids.len() as f64;
        let p = ids.iter().filter(|&&i| y[i] == 1).count() as f64 / m;
        1.0 - p * p - (1.0 - p) * (1.0 - p)
    };
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = idx.iter().map(|&i| x.get(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, f) <= thr);
            let imp = (l.len() as f64 * g(&l) + r.len() as f64 * g(&r)) / n as f64;
            if best.is_none_or(|b| imp < b.0 - 1e-12) {
                best = Some((imp, f, thr));
            }
        }
    }
    let Some((_, f, thr)) = best else { return leaf };
    let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, f) <= thr);
    Node::Split {
        feature: f,
        threshold: thr,
        children: Box::new([oracle(x, y, &l), oracle(x, y, &r)]),
    }
}

#[test]
fn single_unbagged_tree_matches_plain_cart() {
    for seed in 0..5 {
        let (x, y) = dataset(80, 4, seed, |r, rng| u8::from(r[0] * r[1] + 0.2 * rng.random::<f64>() > 0.0));
        let cfg = ForestConfig {
            n_trees: 1,
            max_features: MaxFeatures::All,
            bootstrap: false,
            seed,
            ..ForestConfig::default()
        };
        let f = rf_fit(&x, &y, &cfg).unwrap();
        let all: Vec<usize> = (0..x.rows()).collect();
        assert_eq!(f.trees[0], oracle(&x, &y, &all), "seed {seed}");
    }
}

#[test]
fn separable_data_is_fit_exactly() {
    let (x, y) = dataset(100, 1, 1, |r, _| u8::from(r[0] > 0.1));
    let f = rf_fit(&x, &y, &ForestConfig::default()).unwrap();
    let p = f.predict_proba(&x).unwrap();
    assert_eq!(accuracy(&p, &y), 1.0);
}

#[test]
fn pure_unbagged_forest_predicts_zero_or_one_on_training_points() {
    let (x, y) = dataset(60, 3, 2, |r, _| u8::from(r[1] > r[2]));
    let cfg = ForestConfig {
        n_trees: 7,
        bootstrap: false,
        ..ForestConfig::default()
    };
    let p = rf_fit(&x, &y, &cfg).unwrap().predict_proba(&x).unwrap();
    for (p, &y) in p.iter().zip(&y) {
        assert_eq!(*p, f64::from(y));
    }
}

#[test]
fn predictions_average_trees() {
    let forest = Forest {
        trees: vec![Node::Leaf { leaf: [1.0, 0.0] }, Node::Leaf { leaf: [0.0, 1.0] }],
        n_features: 1,
        max_features: 1,
        seed: 0,
        oob_error: None,
    };
    assert_eq!(rf_predict_proba(&forest, &Matrix::zeros(3, 1)).unwrap(), [0.5; 3]);
    assert!(forest.predict_proba(&Matrix::zeros(1, 2)).is_err());
}

#[test]
fn fits_are_deterministic_and_bounded() {
    let (x, y) = dataset(150, 6, 3, |r, rng| u8::from(r[0] + r[3] + 0.5 * rng.random::<f64>() > 0.2));
    let cfg = ForestConfig {
        n_trees: 20,
        max_depth: Some(4),
        min_leaf: 3,
        seed: 5,
        ..ForestConfig::default()
    };
    let a = rf_fit(&x, &y, &cfg).unwrap();
    let b = rf_fit(&x, &y, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.max_features, 3);
    for t in &a.trees {
        assert!(t.depth() <= 4);
        for l in t.leaves() {
            assert!((l[0] + l[1] - 1.0).abs() < 1e-12);
        }
    }
    let p = a.predict_proba(&x).unwrap();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(a.predict_proba(&x).unwrap(), b.predict_proba(&x).unwrap());
    let back: Forest = serde_json::from_str(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
    assert_eq!(a.split_counts().iter().sum::<usize>(), a.trees.iter().map(|t| t.n_leaves() - 1).sum::<usize>());
}

#[test]
fn input_errors() {
    let x = Matrix::zeros(4, 2);
    assert!(rf_fit(&x, &[1, 1, 1, 1], &ForestConfig::default()).is_err());
    assert!(rf_fit(&x, &[1, 0, 2, 0], &ForestConfig::default()).is_err());
    assert!(rf_fit(&x, &[1, 0, 1], &ForestConfig::default()).is_err());
    assert!(rf_fit(&Matrix::zeros(1, 2), &[1], &ForestConfig::default()).is_err());
}

#[test]
fn deterministic_target_generalises() {
    let rule = |r: &[f64], _: &mut ChaCha8Rng| u8::from(r[0] > 0.3);
    let (x, y) = dataset(500, 10, 7, rule);
    let (xt, yt) = dataset(500, 10, 8, rule);
    let f = rf_fit(&x, &y, &ForestConfig::default()).unwrap();
    let acc = accuracy(&f.predict_proba(&xt).unwrap(), &yt);
    assert!(acc >= 0.95, "test accuracy {acc}");
}

#[test]
fn oob_error_does_not_grow_with_more_trees() {
    let sizes = [1usize, 5, 25, 100];
    let mut mean = [0.0; 4];
    for seed in 0..5 {
        let (x, y) = dataset(200, 5, 100 + seed, |r, rng| u8::from(r[0] - r[1] + 0.6 * rng.random::<f64>() > 0.3));
        for (m, &n) in mean.iter_mut().zip(&sizes) {
            let cfg = ForestConfig {
                n_trees: n,
                seed,
                ..ForestConfig::default()
            };
            *m += rf_fit(&x, &y, &cfg).unwrap().oob_error.unwrap() / 5.0;
        }
    }
    assert!(mean[3] <= mean[0], "{mean:?}");
    assert!(mean[3] <= mean[1] + 0.01, "{mean:?}");
    assert!(mean[3] <= mean[2] + 0.02, "{mean:?}");
}

fn pair_auroc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
            }
        }
    }
    num / den
}

#[test]
fn multilabel_one_forest_per_label() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 250;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let cls = i % 5;
        rows.push((0..5).map(|j| if j == cls { 1.0 } else { 0.0 } + 0.1 * rng.random::<f64>()).collect::<Vec<_>>());
        y.push((0..5).map(|j| u8::from(j == cls)).collect::<Vec<u8>>());
    }
    let x = Matrix::from_rows(&rows).unwrap();
    let cfg = ForestConfig {
        n_trees: 20,
        ..ForestConfig::default()
    };
    let m = multilabel_fit(&x, &y, &cfg).unwrap();
    assert_eq!(m.labels.len(), 5);
    let p = multilabel_predict(&m, &x).unwrap();
    for j in 0..5 {
        let s: Vec<f64> = p.iter().map(|r| r[j]).collect();
        let yj: Vec<u8> = y.iter().map(|r| r[j]).collect();
        assert_eq!(pair_auroc(&s, &yj), 1.0);
    }
    let perm = [3, 0, 4, 1, 2];
    let yp: Vec<Vec<u8>> = y.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
    let pp = multilabel_predict(&multilabel_fit(&x, &yp, &cfg).unwrap(), &x).unwrap();
    for (a, b) in p.iter().zip(&pp) {
        for (k, &j) in perm.iter().enumerate() {
            assert_eq!(b[k], a[j]);
        }
    }
}

#[test]
fn single_class_label_becomes_constant() {
    let (x, y0) = dataset(40, 2, 4, |r, _| u8::from(r[0] > 0.0));
    let y: Vec<Vec<u8>> = y0.iter().map(|&v| vec![v, 0]).collect();
    let m = multilabel_fit(&x, &y, &ForestConfig { n_trees: 3, ..Default::default() }).unwrap();
    assert_eq!(m.labels[1], LabelModel::Constant(0.0));
    assert!(multilabel_predict(&m, &x).unwrap().iter().all(|r| r[1] == 0.0));
}
