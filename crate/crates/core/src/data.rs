//! Dataset loading, scaling, dedup and splitting in the experimental protocol.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense labeled dataset. Rows of `x` are samples; `y` holds contiguous
/// class ids in `0..n_classes`. `label_values` maps each id back to the
/// original label (sorted ascending, so the remap is deterministic).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
    pub label_values: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<usize>, n_classes: usize, label_values: Vec<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyData("dataset has no rows".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimMismatch(format!(
                "{} rows vs {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|&c| c >= n_classes) {
            return Err(Error::InvalidParam("class id out of range".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("dataset contains NaN/Inf".into()));
        }
        Ok(Self {
            x,
            y,
            n_classes,
            label_values,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset on the given row indices (order preserved).
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if indices.iter().any(|&i| i >= self.len()) {
            return Err(Error::InvalidParam("row index out of range".into()));
        }
        let x = self.x.select_rows(indices.iter());
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Dataset::new(x, y, self.n_classes, self.label_values.clone())
    }
}

/// Per-feature min/max fitted on the training split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Parse a LIBSVM sparse text file into a dense dataset.
///
/// Indices are 1-based and must be strictly increasing per line. Labels are
/// remapped to contiguous ids by sorting the distinct original labels.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut raw_labels: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad label `{label_tok}`"),
        })?;
        let mut entries = Vec::new();
        let mut prev_idx = 0usize;
        for tok in tokens {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected idx:val, got `{tok}`"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad feature index `{idx_s}`"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad feature value `{val_s}`"),
            })?;
            if idx == 0 || idx <= prev_idx {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("indices must be 1-based strictly increasing, got {idx}"),
                });
            }
            prev_idx = idx;
            max_idx = max_idx.max(idx);
            entries.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(Error::EmptyData("LIBSVM file has no samples".into()));
    }

    let mut label_values: Vec<f64> = raw_labels.clone();
    label_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    label_values.dedup();
    let y: Vec<usize> = raw_labels
        .iter()
        .map(|l| label_values.partition_point(|v| v < l))
        .collect();

    let d = max_idx;
    let mut x = DMatrix::zeros(rows.len(), d);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            x[(i, j)] = v;
        }
    }
    Dataset::new(x, y, label_values.len(), label_values)
}

/// Write a dataset in LIBSVM sparse text format (zeros omitted, original
/// labels restored). Values use the shortest decimal that round-trips.
pub fn write_libsvm(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..d.len() {
        let label = d.label_values.get(d.y[i]).copied().unwrap_or(d.y[i] as f64);
        write!(out, "{label}").unwrap();
        for j in 0..d.dim() {
            let v = d.x[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    let mut f = File::create(path.as_ref())?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Fit per-feature [0,1] scaling on `train`, apply it to `train` and every
/// dataset in `others`. Constant features map to 0; transformed values are
/// clamped to [0,1].
pub fn fit_apply_unit_scaling(
    train: &mut Dataset,
    others: &mut [&mut Dataset],
) -> Result<ScalingParams> {
    let d = train.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for i in 0..train.len() {
        for j in 0..d {
            let v = train.x[(i, j)];
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    let params = ScalingParams { min, max };
    apply_scaling(train, &params)?;
    for ds in others.iter_mut() {
        apply_scaling(ds, &params)?;
    }
    Ok(params)
}

/// Apply fitted scaling to a dataset in place.
pub fn apply_scaling(ds: &mut Dataset, params: &ScalingParams) -> Result<()> {
    if ds.dim() != params.min.len() {
        return Err(Error::DimMismatch(format!(
            "scaling fitted on {} features, dataset has {}",
            params.min.len(),
            ds.dim()
        )));
    }
    for j in 0..ds.dim() {
        let range = params.max[j] - params.min[j];
        for i in 0..ds.len() {
            let v = ds.x[(i, j)];
            ds.x[(i, j)] = if range > 0.0 {
                ((v - params.min[j]) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
    }
    Ok(())
}

/// Remove exact duplicate (features, label) rows, keeping first occurrences.
pub fn dedupe(d: &Dataset) -> Result<Dataset> {
    let mut seen: std::collections::HashSet<(Vec<u64>, usize)> = std::collections::HashSet::new();
    let mut keep = Vec::new();
    for i in 0..d.len() {
        let key: Vec<u64> = d.x.row(i).iter().map(|v| v.to_bits()).collect();
        if seen.insert((key, d.y[i])) {
            keep.push(i);
        }
    }
    d.select(&keep)
}

/// Random train/test split, deterministic in `seed`.
pub fn split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let n = d.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidParam(format!(
            "split of {n} samples at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let (test_idx, train_idx) = perm.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((d.select(&train_idx)?, d.select(&test_idx)?))
}
