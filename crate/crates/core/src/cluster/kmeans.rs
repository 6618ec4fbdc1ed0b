use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ExplainerModel, FitMeta};
use crate::matrix::sq_dist;
use crate::signal::splitmix;
use crate::{par, Error, Matrix, Result};

/// Softmax temperature of the soft assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temperature {
    Fixed(f64),
    /// Final inertia divided by the number of fitted samples, i.e. the mean
    /// squared distance of a sample to its centroid.
    MeanInertia,
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::Fixed(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest inertia wins.
    pub n_init: usize,
    pub temperature: Temperature,
    /// After Lloyd converges, try single-point transfers that lower the
    /// inertia and resume Lloyd if any point moved.
    pub refine: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 20,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            n_init: 10,
            temperature: Temperature::default(),
            refine: true,
        }
    }
}

struct Run {
    centroids: Matrix,
    inertia: f64,
    n_iters: usize,
}

/// Nearest centroid index (ties to the lowest) and its squared distance.
pub(crate) fn nearest(x: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

struct Step {
    sums: Vec<f64>,
    counts: Vec<usize>,
    inertia: f64,
    /// Sample farthest from its centroid.
    far: (usize, f64),
}

fn assign_step(data: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> Step {
    let (k, c) = (centroids.rows(), centroids.cols());
    let partial = par::map_chunks(data.rows(), |start, end| {
        let mut s = Step {
            sums: vec![0.0; k * c],
            counts: vec![0; k],
            inertia: 0.0,
            far: (start, -1.0),
        };
        let mut lab = Vec::with_capacity(end - start);
        for i in start..end {
            let x = data.row(i);
            let (j, d) = nearest(x, centroids);
            lab.push(j);
            s.counts[j] += 1;
            s.sums[j * c..(j + 1) * c].iter_mut().zip(x).for_each(|(a, b)| *a += b);
            s.inertia += d;
            if d > s.far.1 {
                s.far = (i, d);
            }
        }
        (s, lab)
    });
    let mut total = Step {
        sums: vec![0.0; k * c],
        counts: vec![0; k],
        inertia: 0.0,
        far: (0, -1.0),
    };
    let mut offset = 0;
    for (s, lab) in partial {
        labels[offset..offset + lab.len()].copy_from_slice(&lab);
        offset += lab.len();
        total.sums.iter_mut().zip(&s.sums).for_each(|(a, b)| *a += b);
        total.counts.iter_mut().zip(&s.counts).for_each(|(a, b)| *a += b);
        total.inertia += s.inertia;
        if s.far.1 > total.far.1 {
            total.far = s.far;
        }
    }
    total
}

fn plus_plus(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = data.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            // All remaining points coincide with a centroid.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(next)));
        }
    }
    data.select_rows(&chosen)
}

/// One sweep of single-point transfers. Moving `x` from cluster `a` to `b`
/// changes the inertia by `n_b/(n_b+1) |x - m_b|^2 - n_a/(n_a-1) |x - m_a|^2`;
/// every strictly improving move is applied with exact mean updates.
/// Returns whether any point moved.
fn transfer_pass(data: &Matrix, labels: &mut [usize], centroids: &mut Matrix) -> bool {
    let (k, c) = (centroids.rows(), centroids.cols());
    let mut counts = vec![0usize; k];
    let mut means = vec![0.0; k * c];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        means[l * c..(l + 1) * c].iter_mut().zip(data.row(i)).for_each(|(m, x)| *m += x);
    }
    for j in 0..k {
        if counts[j] > 0 {
            let n = counts[j] as f64;
            means[j * c..(j + 1) * c].iter_mut().for_each(|m| *m /= n);
        }
    }
    let mut moved = false;
    for (i, x) in data.iter_rows().enumerate() {
        let a = labels[i];
        if counts[a] <= 1 {
            continue;
        }
        let na = counts[a] as f64;
        let remove = na / (na - 1.0) * sq_dist(x, &means[a * c..(a + 1) * c]);
        let mut best = (a, remove);
        for b in (0..k).filter(|&b| b != a) {
            let nb = counts[b] as f64;
            let add = nb / (nb + 1.0) * sq_dist(x, &means[b * c..(b + 1) * c]);
            if add < best.1 {
                best = (b, add);
            }
        }
        let b = best.0;
        if b == a || best.1 >= remove * (1.0 - 1e-12) {
            continue;
        }
        let nb = counts[b] as f64;
        for (j, &xv) in x.iter().enumerate() {
            means[a * c + j] = (na * means[a * c + j] - xv) / (na - 1.0);
            means[b * c + j] = (nb * means[b * c + j] + xv) / (nb + 1.0);
        }
        counts[a] -= 1;
        counts[b] += 1;
        labels[i] = b;
        moved = true;
    }
    if moved {
        for j in 0..k {
            centroids.row_mut(j).copy_from_slice(&means[j * c..(j + 1) * c]);
        }
    }
    moved
}

fn lloyd(data: &Matrix, k: usize, cfg: &KMeansConfig, seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, k, &mut rng);
    let c = data.cols();
    let mut labels = vec![0; data.rows()];
    let mut prev = f64::INFINITY;
    let mut n_iters = 0;
    'outer: while n_iters < cfg.max_iter {
        while n_iters < cfg.max_iter {
            n_iters += 1;
            let step = assign_step(data, &centroids, &mut labels);
            debug_assert!(
                step.inertia <= prev * (1.0 + 1e-9) + 1e-12,
                "inertia increased from {prev} to {}",
                step.inertia
            );
            prev = step.inertia;
            let mut shift: f64 = 0.0;
            let mut reseeded = false;
            for j in 0..k {
                let new: Vec<f64> = if step.counts[j] == 0 {
                    reseeded = true;
                    data.row(step.far.0).to_vec()
                } else {
                    let n = step.counts[j] as f64;
                    step.sums[j * c..(j + 1) * c].iter().map(|s| s / n).collect()
                };
                shift = shift.max(sq_dist(&new, centroids.row(j)).sqrt());
                centroids.row_mut(j).copy_from_slice(&new);
            }
            if shift < cfg.tol && !reseeded {
                break;
            }
        }
        if !cfg.refine || !transfer_pass(data, &mut labels, &mut centroids) {
            break 'outer;
        }
    }
    // Centroids are stored as f32 on disk; keep the in-memory model identical.
    let mut rounded = Matrix::zeros(k, c);
    for j in 0..k {
        for (dst, &src) in rounded.row_mut(j).iter_mut().zip(centroids.row(j)) {
            *dst = f64::from(src as f32);
        }
    }
    let inertia = assign_step(data, &rounded, &mut labels).inertia;
    Run {
        centroids: rounded,
        inertia,
        n_iters,
    }
}

/// Fits `cfg.k` centroids to the rows of `data`.
pub fn kmeans_fit(data: &Matrix, cfg: &KMeansConfig) -> Result<ExplainerModel> {
    let (n, k) = (data.rows(), cfg.k);
    if k < 2 {
        return Err(Error::Config(format!("k-means needs K >= 2, got {k}")));
    }
    if cfg.n_init == 0 || cfg.max_iter == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::Config("n_init and max_iter must be positive, tol non-negative".into()));
    }
    if n < k {
        return Err(Error::invalid(format!("k-means needs at least K={k} samples, got {n}")));
    }
    if data.cols() == 0 {
        return Err(Error::invalid("k-means needs at least one feature column"));
    }
    if !data.is_finite() {
        return Err(Error::Numeric("k-means input contains non-finite values".into()));
    }
    let mut best: Option<Run> = None;
    for r in 0..cfg.n_init {
        let run = lloyd(data, k, cfg, splitmix(cfg.seed ^ splitmix(r as u64)));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("n_init >= 1");
    let tau = match cfg.temperature {
        Temperature::Fixed(t) => t,
        Temperature::MeanInertia => best.inertia / n as f64,
    };
    let tau = if tau > 0.0 && tau.is_finite() {
        tau
    } else if matches!(cfg.temperature, Temperature::MeanInertia) {
        // Perfect fit; any positive value keeps labels unchanged.
        1.0
    } else {
        return Err(Error::Config(format!("temperature must be positive and finite, got {tau}")));
    };
    ExplainerModel::new(
        best.centroids,
        tau,
        best.inertia,
        FitMeta {
            n_samples: n,
            n_iters: best.n_iters,
            seed: cfg.seed,
            taps: Vec::new(),
        },
    )
}
