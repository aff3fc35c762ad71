//! Lloyd clustering with k-means++ seeding, plus majority-vote centroid
//! labeling for the support centroid procedure.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Result of Lloyd's algorithm. `assignment[i]` is the cluster of pool
/// row i under the final centroids.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub centroids: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub iterations_run: usize,
}

fn sq_dist<S1, S2>(
    a: &nalgebra::Matrix<f64, nalgebra::U1, nalgebra::Dyn, S1>,
    b: &nalgebra::Matrix<f64, nalgebra::U1, nalgebra::Dyn, S2>,
) -> f64
where
    S1: nalgebra::storage::Storage<f64, nalgebra::U1, nalgebra::Dyn>,
    S2: nalgebra::storage::Storage<f64, nalgebra::U1, nalgebra::Dyn>,
{
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeanspp_init(pool: &DMatrix<f64>, n_c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = pool.nrows();
    let mut chosen = Vec::with_capacity(n_c);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(&pool.row(i), &pool.row(chosen[0])))
        .collect();
    while chosen.len() < n_c {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; pick uniformly
            rng.random_range(0..n)
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        chosen.push(next);
        for i in 0..n {
            let d = sq_dist(&pool.row(i), &pool.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    pool.select_rows(chosen.iter())
}

fn assign(pool: &DMatrix<f64>, centroids: &DMatrix<f64>) -> Vec<usize> {
    (0..pool.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..centroids.nrows() {
                let d = sq_dist(&pool.row(i), &centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Lloyd's algorithm with k-means++ seeding, at most `max_iters` updates.
/// Empty clusters are re-seeded to the pool point farthest from its
/// assigned centroid.
pub fn lloyd(pool: &DMatrix<f64>, n_c: usize, max_iters: usize, seed: u64) -> Result<Clustering> {
    let n = pool.nrows();
    if n_c == 0 {
        return Err(Error::InvalidParam("cluster count must be >= 1".into()));
    }
    if n < n_c {
        return Err(Error::InvalidParam(format!(
            "pool of {n} points is smaller than {n_c} clusters"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(pool, n_c, &mut rng);
    let d = pool.ncols();
    let mut assignment = assign(pool, &centroids);
    let mut iterations_run = 0;

    for _ in 0..max_iters {
        iterations_run += 1;
        // means
        let mut sums: DMatrix<f64> = DMatrix::zeros(n_c, d);
        let mut counts = vec![0usize; n_c];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for j in 0..d {
                sums[(c, j)] += pool[(i, j)];
            }
        }
        for c in 0..n_c {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
                }
            } else {
                // farthest point from its current centroid takes over
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&pool.row(a), &centroids.row(assignment[a]));
                        let db = sq_dist(&pool.row(b), &centroids.row(assignment[b]));
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                for j in 0..d {
                    centroids[(c, j)] = pool[(far, j)];
                }
                assignment[far] = c;
            }
        }
        let next = assign(pool, &centroids);
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
    }

    // Final mean update so each centroid is the mean of its assigned points.
    let mut sums: DMatrix<f64> = DMatrix::zeros(n_c, d);
    let mut counts = vec![0usize; n_c];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[(c, j)] += pool[(i, j)];
        }
    }
    for c in 0..n_c {
        if counts[c] > 0 {
            for j in 0..d {
                centroids[(c, j)] = sums[(c, j)] / counts[c] as f64;
            }
        }
    }

    Ok(Clustering {
        centroids,
        assignment,
        iterations_run,
    })
}

/// Majority-vote class per centroid; ties go to the smaller class id and
/// empty clusters get the global modal class.
pub fn label_centroids(c: &Clustering, labels: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    if labels.len() != c.assignment.len() {
        return Err(Error::DimMismatch(format!(
            "{} labels for {} pool points",
            labels.len(),
            c.assignment.len()
        )));
    }
    let n_c = c.centroids.nrows();
    let mut hist = vec![vec![0usize; n_classes]; n_c];
    let mut global = vec![0usize; n_classes];
    for (&cl, &y) in c.assignment.iter().zip(labels.iter()) {
        hist[cl][y] += 1;
        global[y] += 1;
    }
    let modal = |h: &[usize]| -> usize {
        let mut best = 0;
        for (k, &cnt) in h.iter().enumerate() {
            if cnt > h[best] {
                best = k;
            }
        }
        best
    };
    let global_mode = modal(&global);
    Ok((0..n_c)
        .map(|cl| {
            if hist[cl].iter().all(|&v| v == 0) {
                global_mode
            } else {
                modal(&hist[cl])
            }
        })
        .collect())
}
