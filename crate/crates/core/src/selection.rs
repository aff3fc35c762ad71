//! Negative-margin support vector selection: margin computation, top-n
//! selection, the margin perturbation bound, and the two-stage training
//! pipeline with its centroid variants.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::linalg::spectral_norm;
use crate::nystrom::{
    fit_ensemble, fit_kmeans_nystrom, fit_points_standard, fit_rsvd, fit_standard, NystromMap,
    Variant,
};
use crate::ridge::{exact_krr, to_standard_form, train_ovr, StandardClassifier};
use crate::kmeans;

/// Per-sample negative margins -y_i (w_{y_i}^T phi(x_i) + b_{y_i}) from the
/// class-own binary classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginReport {
    pub neg_margin: Vec<f64>,
}

impl MarginReport {
    pub fn summary(&self) -> MarginSummary {
        let n = self.neg_margin.len() as f64;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in &self.neg_margin {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        MarginSummary {
            min,
            max,
            mean: sum / n,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarginSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Which Nystrom variant a pipeline stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum StageVariant {
    Standard,
    Ensemble { m: usize },
    Rsvd { oversample: usize, power: usize },
}

impl Default for StageVariant {
    fn default() -> Self {
        StageVariant::Standard
    }
}

/// Where k-means enters the pipeline, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CentroidMode {
    #[default]
    None,
    /// Cluster the margin-selected samples, use centroids as landmarks.
    Inputs,
    /// Cluster first, label centroids by majority vote, select centroids
    /// by negative margin.
    Outputs,
}

/// Parameters of the two-stage pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionParams {
    pub n0: usize,
    pub k0: usize,
    pub nf: usize,
    pub kf: usize,
    pub rho: f64,
    #[serde(default)]
    pub stage1: StageVariant,
    #[serde(default)]
    pub stage2: StageVariant,
    pub seed: u64,
    #[serde(default)]
    pub centroid_mode: CentroidMode,
    /// Cluster count multiplier for centroid-output selection.
    #[serde(default = "default_cluster_multiplier")]
    pub cluster_multiplier: usize,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_max_iters: usize,
    /// Pool size fed to k-means (centroid modes); 0 means "whole train set"
    /// for outputs mode and "the selected set" for inputs mode.
    #[serde(default)]
    pub kmeans_pool: usize,
}

fn default_cluster_multiplier() -> usize {
    3
}

fn default_kmeans_iters() -> usize {
    10
}

impl SelectionParams {
    pub fn new(n0: usize, k0: usize, nf: usize, kf: usize, rho: f64, seed: u64) -> Self {
        Self {
            n0,
            k0,
            nf,
            kf,
            rho,
            stage1: StageVariant::Standard,
            stage2: StageVariant::Standard,
            seed,
            centroid_mode: CentroidMode::None,
            cluster_multiplier: default_cluster_multiplier(),
            kmeans_max_iters: default_kmeans_iters(),
            kmeans_pool: 0,
        }
    }

    pub fn validate(&self, n_total: usize) -> Result<()> {
        if self.n0 == 0 || self.n0 > n_total || self.nf == 0 || self.nf > n_total {
            return Err(Error::InvalidParam(format!(
                "landmark counts n0={}, nf={} must be in 1..={n_total}",
                self.n0, self.nf
            )));
        }
        if self.k0 == 0 || self.k0 > self.n0 || self.kf == 0 || self.kf > self.nf {
            return Err(Error::InvalidParam(format!(
                "ranks k0={} (<= n0={}), kf={} (<= nf={}) invalid",
                self.k0, self.n0, self.kf, self.nf
            )));
        }
        if self.rho <= 0.0 {
            return Err(Error::InvalidParam("rho must be positive".into()));
        }
        Ok(())
    }
}

/// Per-run record of what the pipeline did and how long each stage took.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub stage1_s: f64,
    pub stage2_s: f64,
    pub selected: Vec<usize>,
    pub margins: MarginSummary,
    pub kmeans_iterations: Option<usize>,
}

/// neg_margin[i] = -h(x_i)[y_i]: the class indicator convention is +-1 with
/// +1 for the own class, so the own-class decision column carries the margin.
pub fn negative_margins(
    clf: &StandardClassifier,
    x: &DMatrix<f64>,
    y: &[usize],
) -> Result<MarginReport> {
    if x.nrows() != y.len() {
        return Err(Error::DimMismatch(format!(
            "{} points vs {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let h = clf.decision_values(x)?;
    if y.iter().any(|&c| c >= h.ncols()) {
        return Err(Error::InvalidParam("class id exceeds classifier output".into()));
    }
    let neg_margin = y.iter().enumerate().map(|(i, &c)| -h[(i, c)]).collect();
    Ok(MarginReport { neg_margin })
}

/// Indices of the n_f largest negative margins; ties go to the smaller
/// index, output sorted ascending.
pub fn select_top(report: &MarginReport, n_f: usize) -> Result<Vec<usize>> {
    let n = report.neg_margin.len();
    if n_f > n {
        return Err(Error::InvalidParam(format!(
            "cannot select {n_f} of {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        report.neg_margin[b]
            .partial_cmp(&report.neg_margin[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = order.into_iter().take(n_f).collect();
    top.sort_unstable();
    Ok(top)
}

/// Both sides of the margin perturbation bound: the observed worst-case
/// margin gap between exact KRR on K and on the approximate kernel, and
/// N kappa / rho^2 * ||K - K~||_2.
pub fn margin_bound_gap(
    train: &Dataset,
    map: &NystromMap,
    rho: f64,
) -> Result<(f64, f64)> {
    let k = gram(&train.x, &train.x, &map.kernel)?;
    let k_approx = map.approx_kernel(&train.x, &train.x)?;

    let exact = exact_krr(&k, &train.y, train.n_classes, rho)?;
    let approx = exact_krr(&k_approx, &train.y, train.n_classes, rho)?;
    let h_exact = exact.decision_values(&k)?;
    let h_approx = approx.decision_values(&k_approx)?;

    let mut lhs: f64 = 0.0;
    for (i, &c) in train.y.iter().enumerate() {
        lhs = lhs.max((h_exact[(i, c)] - h_approx[(i, c)]).abs());
    }
    let n = train.len() as f64;
    let rhs = n * map.kernel.kappa() / (rho * rho) * spectral_norm(&(k - k_approx), 300, 0);
    Ok((lhs, rhs))
}

/// Deterministic landmark permutation; stage-1 landmark draws are prefixes
/// of this so runs with equal seed share draws across methods.
pub fn landmark_permutation(n_total: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n_total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    perm
}

fn fit_stage(
    train: &Dataset,
    indices: &[usize],
    k: usize,
    variant: StageVariant,
    seed: u64,
    cfg: &KernelConfig,
) -> Result<NystromMap> {
    match variant {
        StageVariant::Standard => fit_standard(train, indices, k, cfg),
        StageVariant::Ensemble { m } => fit_ensemble(train, indices, m, k, cfg),
        StageVariant::Rsvd { oversample, power } => {
            fit_rsvd(train, indices, k, oversample, power, seed, cfg)
        }
    }
}

fn train_on_map(
    train: &Dataset,
    map: &NystromMap,
    rho: f64,
) -> Result<StandardClassifier> {
    let phi = map.transform(&train.x)?;
    let model = train_ovr(&phi, &train.y, train.n_classes, rho, &train.label_values)?;
    to_standard_form(&model, map)
}

/// Two-stage supervised Nystrom training: fit an unsupervised stage-1 map,
/// rank samples by negative margin, refit from the selected support vectors.
///
/// Dispatches on `centroid_mode`: `Inputs` clusters the selected samples
/// before the stage-2 fit, `Outputs` runs the support centroid procedure.
pub fn algorithm1(
    train: &Dataset,
    p: &SelectionParams,
    cfg: &KernelConfig,
) -> Result<(StandardClassifier, Diagnostics)> {
    p.validate(train.len())?;
    match p.centroid_mode {
        CentroidMode::Outputs => return support_centroid_selection(train, p, cfg),
        CentroidMode::None | CentroidMode::Inputs => {}
    }

    let t0 = Instant::now();
    let perm = landmark_permutation(train.len(), p.seed);
    let stage1_idx = &perm[..p.n0];
    let map1 = fit_stage(train, stage1_idx, p.k0, p.stage1, p.seed.wrapping_add(1), cfg)?;
    let clf1 = train_on_map(train, &map1, p.rho)?;
    let stage1_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let report = negative_margins(&clf1, &train.x, &train.y)?;
    let mut kmeans_iterations = None;

    let (map2, selected) = match p.centroid_mode {
        CentroidMode::None => {
            let selected = select_top(&report, p.nf)?;
            let map = fit_stage(train, &selected, p.kf, p.stage2, p.seed.wrapping_add(2), cfg)?;
            (map, selected)
        }
        CentroidMode::Inputs => {
            let pool_size = if p.kmeans_pool == 0 {
                p.nf
            } else {
                p.kmeans_pool.max(p.nf)
            };
            let selected = select_top(&report, pool_size.min(train.len()))?;
            let pool = train.x.select_rows(selected.iter());
            let (map, iters) = fit_kmeans_nystrom(
                &pool,
                p.nf,
                p.kmeans_max_iters,
                p.seed.wrapping_add(3),
                cfg,
            )?;
            kmeans_iterations = Some(iters);
            (map, selected)
        }
        CentroidMode::Outputs => unreachable!(),
    };

    let clf = train_on_map(train, &map2, p.rho)?;
    let stage2_s = t1.elapsed().as_secs_f64();

    Ok((
        clf,
        Diagnostics {
            stage1_s,
            stage2_s,
            selected,
            margins: report.summary(),
            kmeans_iterations,
        },
    ))
}

/// Support centroid selection: cluster a pool into
/// `cluster_multiplier * nf` clusters, label centroids by majority vote,
/// approximate margins with a map over n0 random centroids, then select
/// the nf highest-negative-margin centroids as stage-2 landmarks.
pub fn support_centroid_selection(
    train: &Dataset,
    p: &SelectionParams,
    cfg: &KernelConfig,
) -> Result<(StandardClassifier, Diagnostics)> {
    p.validate(train.len())?;
    let n_clusters = p.cluster_multiplier * p.nf;

    let t0 = Instant::now();
    let pool_idx: Vec<usize> = if p.kmeans_pool == 0 || p.kmeans_pool >= train.len() {
        (0..train.len()).collect()
    } else {
        let perm = landmark_permutation(train.len(), p.seed.wrapping_add(4));
        let mut idx = perm[..p.kmeans_pool].to_vec();
        idx.sort_unstable();
        idx
    };
    if pool_idx.len() < n_clusters {
        return Err(Error::InvalidParam(format!(
            "pool of {} points cannot support {n_clusters} clusters",
            pool_idx.len()
        )));
    }
    let pool = train.x.select_rows(pool_idx.iter());
    let pool_labels: Vec<usize> = pool_idx.iter().map(|&i| train.y[i]).collect();

    let clustering = kmeans::lloyd(&pool, n_clusters, p.kmeans_max_iters, p.seed.wrapping_add(5))?;
    let centroid_labels = kmeans::label_centroids(&clustering, &pool_labels, train.n_classes)?;

    // stage 1: map over n0 randomly chosen centroids
    if p.n0 > n_clusters {
        return Err(Error::InvalidParam(format!(
            "n0 = {} exceeds the {n_clusters} available centroids",
            p.n0
        )));
    }
    let centroid_perm = landmark_permutation(n_clusters, p.seed);
    let stage1_points = clustering.centroids.select_rows(centroid_perm[..p.n0].iter());
    let map1 = fit_points_standard(stage1_points, None, p.k0, cfg, Variant::Kmeans)?;
    let clf1 = train_on_map(train, &map1, p.rho)?;
    let stage1_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let report = negative_margins(&clf1, &clustering.centroids, &centroid_labels)?;
    let selected = select_top(&report, p.nf)?;
    let stage2_points = clustering.centroids.select_rows(selected.iter());
    let map2 = fit_points_standard(stage2_points, None, p.kf, cfg, Variant::Kmeans)?;
    let clf = train_on_map(train, &map2, p.rho)?;
    let stage2_s = t1.elapsed().as_secs_f64();

    Ok((
        clf,
        Diagnostics {
            stage1_s,
            stage2_s,
            selected,
            margins: report.summary(),
            kmeans_iterations: Some(clustering.iterations_run),
        },
    ))
}
