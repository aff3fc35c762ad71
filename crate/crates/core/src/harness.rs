//! Benchmark harness: synthetic datasets, method dispatch, timing, model
//! size accounting and CSV trial records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::nystrom::{
    fit_ensemble, fit_kmeans_nystrom, fit_rff, fit_standard, fit_rsvd,
};
use crate::ridge::{exact_krr, to_standard_form, train_ovr, StandardClassifier, EXACT_KRR_CAP};
use crate::selection::{algorithm1, landmark_permutation, CentroidMode, SelectionParams, StageVariant};

/// Benchmark methods; the `Plus` variants run two-stage support vector
/// selection on top of the matching unsupervised map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Nys,
    #[serde(rename = "Nys+")]
    NysPlus,
    ENys,
    #[serde(rename = "ENys+")]
    ENysPlus,
    RNys,
    #[serde(rename = "RNys+")]
    RNysPlus,
    KNys,
    #[serde(rename = "KNys+")]
    KNysPlus,
    Fourier,
    #[serde(rename = "KRR")]
    KrrExact,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Nys => "Nys",
            Method::NysPlus => "Nys+",
            Method::ENys => "ENys",
            Method::ENysPlus => "ENys+",
            Method::RNys => "RNys",
            Method::RNysPlus => "RNys+",
            Method::KNys => "KNys",
            Method::KNysPlus => "KNys+",
            Method::Fourier => "Fourier",
            Method::KrrExact => "KRR",
        }
    }
}

/// One (n0, k0, nf, kf) grid point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridPoint {
    pub n0: usize,
    pub k0: usize,
    pub nf: usize,
    pub kf: usize,
}

/// Synthetic dataset families used as desk-scale substitutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthKind {
    TwoGaussians { separation: f64 },
    RingVsBlob,
    Redundant { repeat: usize, separation: f64 },
}

/// Where the benchmark data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Files {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        scale: bool,
    },
    Synth {
        #[serde(flatten)]
        kind: SynthKind,
        n_train: usize,
        n_test: usize,
        d: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub gamma: f64,
    pub methods: Vec<Method>,
    pub grid: Vec<GridPoint>,
    pub trials: usize,
    pub base_seed: u64,
    pub rho: f64,
    #[serde(default = "default_ensemble_experts")]
    pub ensemble_experts: usize,
    #[serde(default = "default_oversample")]
    pub rsvd_oversample: usize,
    #[serde(default = "default_power")]
    pub rsvd_power: usize,
    #[serde(default = "default_kmeans_iters")]
    pub kmeans_max_iters: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_ensemble_experts() -> usize {
    5
}
fn default_oversample() -> usize {
    10
}
fn default_power() -> usize {
    2
}
fn default_kmeans_iters() -> usize {
    10
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParam("trial count must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParam("method list is empty".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidParam("parameter grid is empty".into()));
        }
        if self.rho <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::InvalidParam("rho and gamma must be positive".into()));
        }
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// One benchmark trial result; serializes to the CSV schema
/// method,n0,k0,nf,kf,seed,accuracy,stage1_s,stage2_s,model_bytes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrialRecord {
    pub method: String,
    pub n0: usize,
    pub k0: usize,
    pub nf: usize,
    pub kf: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub stage1_s: f64,
    pub stage2_s: f64,
    pub model_bytes: usize,
}

/// Test-time parameter bytes of the deployable classifier: support points,
/// A and b as 8-byte floats.
pub fn model_size_bytes(clf: &StandardClassifier) -> usize {
    let n = clf.support.nrows();
    let d = clf.support.ncols();
    let l = clf.a.ncols();
    8 * (n * d + n * l + l)
}

/// Fraction of correct predictions.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let correct = pred.iter().zip(truth.iter()).filter(|(p, y)| p == y).count();
    correct as f64 / truth.len() as f64
}

/// Deterministic synthetic dataset in one of the benchmark families.
pub fn synth_dataset(kind: SynthKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidParam("synthetic dataset needs N >= 2".into()));
    }
    if d == 0 {
        return Err(Error::InvalidParam("synthetic dataset needs d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::TwoGaussians { separation } => {
            let mut x = DMatrix::zeros(n, d);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % 2;
                for j in 0..d {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    x[(i, j)] = v + if j == 0 && c == 1 { separation } else { 0.0 };
                }
                y.push(c);
            }
            Dataset::new(x, y, 2, vec![0.0, 1.0])
        }
        SynthKind::RingVsBlob => {
            let mut x = DMatrix::zeros(n, d);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let c = i % 2;
                if c == 0 {
                    // ring of radius 3 in the first two dims
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let r = 3.0 + 0.3 * noise;
                    x[(i, 0)] = r * theta.cos();
                    if d > 1 {
                        x[(i, 1)] = r * theta.sin();
                    }
                } else {
                    for j in 0..d.min(2) {
                        x[(i, j)] = StandardNormal.sample(&mut rng);
                    }
                }
                for j in 2..d {
                    x[(i, j)] = StandardNormal.sample(&mut rng);
                }
                y.push(c);
            }
            Dataset::new(x, y, 2, vec![0.0, 1.0])
        }
        SynthKind::Redundant { repeat, separation } => {
            if repeat == 0 {
                return Err(Error::InvalidParam("repeat must be >= 1".into()));
            }
            let n_base = n.div_ceil(repeat);
            let base = synth_dataset(SynthKind::TwoGaussians { separation }, n_base.max(2), d, seed)?;
            let mut x = DMatrix::zeros(n, d);
            let mut y = Vec::with_capacity(n);
            for i in 0..n {
                let src = i / repeat;
                for j in 0..d {
                    x[(i, j)] = base.x[(src, j)];
                }
                y.push(base.y[src]);
            }
            Dataset::new(x, y, 2, vec![0.0, 1.0])
        }
    }
}

fn selection_params(
    cfg: &ExperimentConfig,
    g: GridPoint,
    seed: u64,
    stage: StageVariant,
    centroid_mode: CentroidMode,
) -> SelectionParams {
    let mut p = SelectionParams::new(g.n0, g.k0, g.nf, g.kf, cfg.rho, seed);
    p.stage1 = stage;
    p.stage2 = stage;
    p.centroid_mode = centroid_mode;
    p.kmeans_max_iters = cfg.kmeans_max_iters;
    p
}

/// Run one (method, grid point, trial) cell.
pub fn run_trial(
    cfg: &ExperimentConfig,
    method: Method,
    g: GridPoint,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrialRecord> {
    let kernel = KernelConfig::rbf(cfg.gamma)?;
    let stage1_s;
    let mut stage2_s = 0.0;

    let (acc, bytes) = match method {
        Method::Nys | Method::ENys | Method::RNys | Method::KNys => {
            let t0 = Instant::now();
            let map = match method {
                Method::Nys => {
                    let perm = landmark_permutation(train.len(), seed);
                    fit_standard(train, &perm[..g.nf], g.kf, &kernel)?
                }
                Method::ENys => {
                    let perm = landmark_permutation(train.len(), seed);
                    fit_ensemble(train, &perm[..g.nf], cfg.ensemble_experts, g.kf, &kernel)?
                }
                Method::RNys => {
                    let perm = landmark_permutation(train.len(), seed);
                    fit_rsvd(
                        train,
                        &perm[..g.nf],
                        g.kf,
                        cfg.rsvd_oversample,
                        cfg.rsvd_power,
                        seed.wrapping_add(1),
                        &kernel,
                    )?
                }
                Method::KNys => {
                    let (map, _) = fit_kmeans_nystrom(
                        &train.x,
                        g.nf,
                        cfg.kmeans_max_iters,
                        seed,
                        &kernel,
                    )?;
                    map
                }
                _ => unreachable!(),
            };
            let phi = map.transform(&train.x)?;
            let model = train_ovr(&phi, &train.y, train.n_classes, cfg.rho, &train.label_values)?;
            let clf = to_standard_form(&model, &map)?;
            stage1_s = t0.elapsed().as_secs_f64();
            let acc = accuracy(&clf.predict(&test.x)?, &test.y);
            (acc, model_size_bytes(&clf))
        }
        Method::NysPlus | Method::ENysPlus | Method::RNysPlus | Method::KNysPlus => {
            let (stage, mode) = match method {
                Method::NysPlus => (StageVariant::Standard, CentroidMode::None),
                Method::ENysPlus => (
                    StageVariant::Ensemble {
                        m: cfg.ensemble_experts,
                    },
                    CentroidMode::None,
                ),
                Method::RNysPlus => (
                    StageVariant::Rsvd {
                        oversample: cfg.rsvd_oversample,
                        power: cfg.rsvd_power,
                    },
                    CentroidMode::None,
                ),
                Method::KNysPlus => (StageVariant::Standard, CentroidMode::Outputs),
                _ => unreachable!(),
            };
            let p = selection_params(cfg, g, seed, stage, mode);
            let (clf, diag) = algorithm1(train, &p, &kernel)?;
            stage1_s = diag.stage1_s;
            stage2_s = diag.stage2_s;
            let acc = accuracy(&clf.predict(&test.x)?, &test.y);
            (acc, model_size_bytes(&clf))
        }
        Method::Fourier => {
            let t0 = Instant::now();
            let map = fit_rff(train.dim(), g.kf, cfg.gamma, seed)?;
            let phi = map.transform(&train.x)?;
            let model = train_ovr(&phi, &train.y, train.n_classes, cfg.rho, &train.label_values)?;
            stage1_s = t0.elapsed().as_secs_f64();
            let h = model.decision_values(&map.transform(&test.x)?)?;
            let acc = accuracy(&crate::ridge::argmax_rows(&h), &test.y);
            let d_feat = map.n_features();
            let bytes =
                8 * (d_feat * train.dim() + d_feat + d_feat * train.n_classes + train.n_classes);
            (acc, bytes)
        }
        Method::KrrExact => {
            if train.len() > EXACT_KRR_CAP {
                return Err(Error::InvalidParam(format!(
                    "KRR baseline capped at {EXACT_KRR_CAP} training samples"
                )));
            }
            let t0 = Instant::now();
            let k = gram(&train.x, &train.x, &kernel)?;
            let model = exact_krr(&k, &train.y, train.n_classes, cfg.rho)?;
            stage1_s = t0.elapsed().as_secs_f64();
            let k_cross = gram(&train.x, &test.x, &kernel)?;
            let acc = accuracy(&model.predict(&k_cross)?, &test.y);
            let n = train.len();
            let bytes = 8 * (n * train.dim() + n * train.n_classes + train.n_classes);
            (acc, bytes)
        }
    };

    Ok(TrialRecord {
        method: method.name().to_string(),
        n0: g.n0,
        k0: g.k0,
        nf: g.nf,
        kf: g.kf,
        seed,
        accuracy: acc,
        stage1_s,
        stage2_s,
        model_bytes: bytes,
    })
}

/// Materialize the configured data source into (train, test).
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    match &cfg.data {
        DataSource::Files { train, test, scale } => {
            let mut tr = data::load_libsvm(train)?;
            let mut te = data::load_libsvm(test)?;
            if *scale {
                data::fit_apply_unit_scaling(&mut tr, &mut [&mut te])?;
            }
            Ok((tr, te))
        }
        DataSource::Synth {
            kind,
            n_train,
            n_test,
            d,
            seed,
        } => {
            let tr = synth_dataset(*kind, *n_train, *d, *seed)?;
            let te = synth_dataset(*kind, *n_test, *d, seed.wrapping_add(0x5eed))?;
            Ok((tr, te))
        }
    }
}

/// Run the full experiment grid. Trial t uses seed base_seed + t, so
/// supervised and unsupervised rows with equal seed share landmark draws.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let (train, test) = load_data(cfg)?;
    let mut records = Vec::new();
    for &g in &cfg.grid {
        for &method in &cfg.methods {
            for t in 0..cfg.trials {
                let seed = cfg.base_seed + t as u64;
                records.push(run_trial(cfg, method, g, seed, &train, &test)?);
            }
        }
    }
    if let Some(path) = &cfg.output {
        write_csv(&records, path)?;
    }
    Ok(records)
}

pub fn write_csv(records: &[TrialRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
