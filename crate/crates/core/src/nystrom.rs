//! Explicit approximate feature maps: standard / ensemble / randomized-SVD /
//! k-means Nystrom variants and the Random Fourier Features baseline.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::kmeans;
use crate::linalg::{compact_eig_psd, randomized_eig_psd, whitening_map, PINV_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Ensemble,
    Rsvd,
    Kmeans,
}

/// Per-expert slice of the ensemble landmark set, with its mixture weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertBlock {
    pub start: usize,
    pub len: usize,
    pub weight: f64,
}

/// A fitted Nystrom feature map: features of X are A_hat^T K(landmarks, X).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NystromMap {
    pub landmarks: DMatrix<f64>,
    pub source_indices: Option<Vec<usize>>,
    pub a_hat: DMatrix<f64>,
    pub variant: Variant,
    pub kernel: KernelConfig,
    pub blocks: Option<Vec<ExpertBlock>>,
}

impl NystromMap {
    pub fn n_landmarks(&self) -> usize {
        self.landmarks.nrows()
    }

    /// Realized feature dimension (may be below the requested rank when the
    /// landmark Gram matrix is numerically rank-deficient).
    pub fn rank(&self) -> usize {
        self.a_hat.ncols()
    }

    /// Feature matrix Phi = A_hat^T K(landmarks, X), one column per point.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() == 0 {
            return Ok(DMatrix::zeros(self.rank(), 0));
        }
        let c = gram(&self.landmarks, x, &self.kernel)?;
        Ok(self.a_hat.transpose() * c)
    }

    /// Approximate kernel block K~(X, X') = Phi(X)^T Phi(X').
    pub fn approx_kernel(&self, x: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let phi = self.transform(x)?;
        let phi2 = self.transform(x2)?;
        let mut k = phi.transpose() * phi2;
        if x == x2 {
            // make symmetry exact
            for i in 0..k.nrows() {
                for j in 0..i {
                    let v = 0.5 * (k[(i, j)] + k[(j, i)]);
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
        }
        Ok(k)
    }
}

fn check_indices(indices: &[usize], n_total: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidParam("landmark index set is empty".into()));
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != indices.len() {
        return Err(Error::InvalidParam("duplicate landmark indices".into()));
    }
    if *sorted.last().unwrap() >= n_total {
        return Err(Error::InvalidParam("landmark index out of range".into()));
    }
    Ok(())
}

/// Draw n distinct indices from 0..n_total uniformly without replacement.
pub fn uniform_indices(n_total: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n > n_total {
        return Err(Error::InvalidParam(format!(
            "cannot draw {n} landmarks from {n_total} samples"
        )));
    }
    Ok(sample(rng, n_total, n).into_vec())
}

/// Standard Nystrom map over explicit landmark points.
pub fn fit_points_standard(
    points: DMatrix<f64>,
    source_indices: Option<Vec<usize>>,
    k: usize,
    cfg: &KernelConfig,
    variant: Variant,
) -> Result<NystromMap> {
    let n = points.nrows();
    if k > n || k == 0 {
        return Err(Error::InvalidParam(format!(
            "rank k = {k} must be in 1..={n}"
        )));
    }
    let b = gram(&points, &points, cfg)?;
    let factor = compact_eig_psd(&b, k, PINV_REL_TOL)?;
    let a_hat = whitening_map(&factor);
    Ok(NystromMap {
        landmarks: points,
        source_indices,
        a_hat,
        variant,
        kernel: *cfg,
        blocks: None,
    })
}

/// Standard Nystrom: KPCA whitening of the landmark Gram matrix.
pub fn fit_standard(
    train: &Dataset,
    indices: &[usize],
    k: usize,
    cfg: &KernelConfig,
) -> Result<NystromMap> {
    check_indices(indices, train.len())?;
    let points = train.x.select_rows(indices.iter());
    fit_points_standard(points, Some(indices.to_vec()), k, cfg, Variant::Standard)
}

/// Ensemble Nystrom: m experts over non-overlapping landmark blocks,
/// weights fixed at 1/m, block-diagonal A_hat scaled by sqrt(1/m).
pub fn fit_ensemble(
    train: &Dataset,
    indices: &[usize],
    m: usize,
    k: usize,
    cfg: &KernelConfig,
) -> Result<NystromMap> {
    check_indices(indices, train.len())?;
    let n = indices.len();
    if m == 0 || n % m != 0 {
        return Err(Error::InvalidParam(format!(
            "landmark count {n} not divisible by {m} experts"
        )));
    }
    if k % m != 0 || k == 0 || k > n {
        return Err(Error::InvalidParam(format!(
            "rank {k} must be a positive multiple of {m} and at most {n}"
        )));
    }
    let n_per = n / m;
    let k_per = k / m;
    let weight = 1.0 / m as f64;
    let sqrt_w = weight.sqrt();

    let mut factors = Vec::with_capacity(m);
    for e in 0..m {
        let block = &indices[e * n_per..(e + 1) * n_per];
        let points = train.x.select_rows(block.iter());
        let b = gram(&points, &points, cfg)?;
        let f = compact_eig_psd(&b, k_per, PINV_REL_TOL)?;
        factors.push(whitening_map(&f));
    }

    let total_rank: usize = factors.iter().map(|a| a.ncols()).sum();
    let mut a_hat = DMatrix::zeros(n, total_rank);
    let mut blocks = Vec::with_capacity(m);
    let mut col = 0;
    for (e, a) in factors.iter().enumerate() {
        for j in 0..a.ncols() {
            for i in 0..n_per {
                a_hat[(e * n_per + i, col + j)] = sqrt_w * a[(i, j)];
            }
        }
        blocks.push(ExpertBlock {
            start: col,
            len: a.ncols(),
            weight,
        });
        col += a.ncols();
    }

    Ok(NystromMap {
        landmarks: train.x.select_rows(indices.iter()),
        source_indices: Some(indices.to_vec()),
        a_hat,
        variant: Variant::Ensemble,
        kernel: *cfg,
        blocks: Some(blocks),
    })
}

/// Standard Nystrom with the landmark Gram factored by randomized SVD.
pub fn fit_rsvd(
    train: &Dataset,
    indices: &[usize],
    k: usize,
    oversample: usize,
    power: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<NystromMap> {
    check_indices(indices, train.len())?;
    let points = train.x.select_rows(indices.iter());
    let b = gram(&points, &points, cfg)?;
    let factor = randomized_eig_psd(&b, k, oversample, power, seed)?;
    let a_hat = whitening_map(&factor);
    Ok(NystromMap {
        landmarks: points,
        source_indices: Some(indices.to_vec()),
        a_hat,
        variant: Variant::Rsvd,
        kernel: *cfg,
        blocks: None,
    })
}

/// K-Means Nystrom: landmarks are Lloyd centroids of the pool (real-valued
/// points, not training rows), with k = n.
pub fn fit_kmeans_nystrom(
    pool: &DMatrix<f64>,
    n: usize,
    max_iters: usize,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<(NystromMap, usize)> {
    let clustering = kmeans::lloyd(pool, n, max_iters, seed)?;
    let iters = clustering.iterations_run;
    let map = fit_points_standard(clustering.centroids, None, n, cfg, Variant::Kmeans)?;
    Ok((map, iters))
}

/// Random Fourier Features map for the RBF kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RffMap {
    pub omega: DMatrix<f64>,
    pub phase: DVector<f64>,
}

impl RffMap {
    pub fn n_features(&self) -> usize {
        self.omega.nrows()
    }

    /// Features sqrt(2/D) cos(omega x + phase), one column per point.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.omega.ncols() {
            return Err(Error::DimMismatch(format!(
                "RFF map fitted on {} dims, input has {}",
                self.omega.ncols(),
                x.ncols()
            )));
        }
        let d_feat = self.n_features();
        let scale = (2.0 / d_feat as f64).sqrt();
        let mut z = &self.omega * x.transpose();
        for mut col in z.column_iter_mut() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = scale * (*v + self.phase[i]).cos();
            }
        }
        Ok(z)
    }
}

/// Sample an RFF map: omega_ij ~ N(0, 2 gamma), phase ~ U[0, 2 pi).
pub fn fit_rff(d: usize, n_features: usize, gamma: f64, seed: u64) -> Result<RffMap> {
    if n_features == 0 {
        return Err(Error::InvalidParam("RFF feature count must be >= 1".into()));
    }
    if gamma <= 0.0 {
        return Err(Error::InvalidParam("RFF gamma must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = (2.0 * gamma).sqrt();
    let omega = DMatrix::from_fn(n_features, d, |_, _| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * std
    });
    let phase = DVector::from_fn(n_features, |_, _| {
        rng.random_range(0.0..std::f64::consts::TAU)
    });
    Ok(RffMap { omega, phase })
}
