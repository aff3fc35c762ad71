//! One-vs-rest ridge classification on approximate features, its standard
//! (dual) form, and the exact kernel ridge oracle.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram, KernelConfig};
use crate::linalg::{solve_ridge, solve_spd};
use crate::nystrom::NystromMap;

/// Hard cap on the exact KRR problem size; beyond this the full Gram matrix
/// stops being a desk-scale object.
pub const EXACT_KRR_CAP: usize = 5000;

/// Primal one-vs-rest ridge model on explicit features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeModel {
    /// rank x L weight matrix, one column per class.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rho: f64,
    /// Original label values indexed by class id.
    pub label_values: Vec<f64>,
}

/// Deployable dual-form classifier h(X) = K_test^T A + 1 b^T.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardClassifier {
    pub support: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub kernel: KernelConfig,
    pub label_values: Vec<f64>,
}

/// Build the N x L class indicator matrix with +1 for the sample's class
/// and -1 elsewhere.
pub fn indicator_matrix(y: &[usize], n_classes: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(y.len(), n_classes, -1.0);
    for (i, &c) in y.iter().enumerate() {
        m[(i, c)] = 1.0;
    }
    m
}

/// Train a one-vs-rest ridge classifier on features `phi` (rank x N).
pub fn train_ovr(phi: &DMatrix<f64>, y: &[usize], n_classes: usize, rho: f64, label_values: &[f64]) -> Result<RidgeModel> {
    if phi.ncols() != y.len() {
        return Err(Error::DimMismatch(format!(
            "{} feature columns vs {} labels",
            phi.ncols(),
            y.len()
        )));
    }
    let distinct: std::collections::HashSet<usize> = y.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidParam(
            "one-vs-rest needs at least two classes present".into(),
        ));
    }
    let targets = indicator_matrix(y, n_classes);
    let (w, b) = solve_ridge(phi, &targets, rho)?;
    Ok(RidgeModel {
        w,
        b,
        rho,
        label_values: label_values.to_vec(),
    })
}

impl RidgeModel {
    /// Decision values through the primal path, |X| x L.
    pub fn decision_values(&self, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if phi.nrows() != self.w.nrows() {
            return Err(Error::DimMismatch(format!(
                "model rank {} vs feature rank {}",
                self.w.nrows(),
                phi.nrows()
            )));
        }
        let mut h = phi.transpose() * &self.w;
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        Ok(h)
    }
}

/// Fold the map into the model: A = A_hat W, so predictions need only
/// kernel columns against the support points.
pub fn to_standard_form(model: &RidgeModel, map: &NystromMap) -> Result<StandardClassifier> {
    if map.rank() != model.w.nrows() {
        return Err(Error::DimMismatch(format!(
            "map rank {} vs model rank {}",
            map.rank(),
            model.w.nrows()
        )));
    }
    Ok(StandardClassifier {
        support: map.landmarks.clone(),
        a: &map.a_hat * &model.w,
        b: model.b.clone(),
        kernel: map.kernel,
        label_values: model.label_values.clone(),
    })
}

impl StandardClassifier {
    pub fn n_support(&self) -> usize {
        self.support.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.a.ncols()
    }

    /// h(X) = K_test^T A + 1 b^T, one row per input point.
    pub fn decision_values(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let k_test = gram(&self.support, x, &self.kernel)?;
        let mut h = k_test.transpose() * &self.a;
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        Ok(h)
    }

    /// Predicted class ids: argmax over decision columns, ties to the
    /// smaller class id.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let h = self.decision_values(x)?;
        Ok(argmax_rows(&h))
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref())?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(f)?)
    }
}

pub fn argmax_rows(h: &DMatrix<f64>) -> Vec<usize> {
    (0..h.nrows())
        .map(|i| {
            let mut best = 0;
            for j in 1..h.ncols() {
                if h[(i, j)] > h[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Dual one-vs-rest kernel ridge model with an unpenalized bias, solved on
/// the full Gram matrix. Used as the exact-margin oracle and the
/// full-dimensional baseline.
#[derive(Debug, Clone)]
pub struct KrrModel {
    /// N x L dual coefficients c with f(X) = K_X^T c + 1 b^T.
    pub coef: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rho: f64,
}

/// Solve centered dual KRR: beta = (H K H + rho I)^-1 H Y, coefficients
/// c = H beta, bias from the training means.
pub fn exact_krr(k: &DMatrix<f64>, y: &[usize], n_classes: usize, rho: f64) -> Result<KrrModel> {
    let n = k.nrows();
    if n != k.ncols() {
        return Err(Error::DimMismatch("Gram matrix must be square".into()));
    }
    if n != y.len() {
        return Err(Error::DimMismatch(format!("{n} Gram rows vs {} labels", y.len())));
    }
    if n > EXACT_KRR_CAP {
        return Err(Error::InvalidParam(format!(
            "exact KRR capped at {EXACT_KRR_CAP} samples, got {n}"
        )));
    }
    if rho <= 0.0 {
        return Err(Error::InvalidParam("rho must be positive".into()));
    }
    let targets = indicator_matrix(y, n_classes);
    let y_mean: DVector<f64> =
        DVector::from_iterator(n_classes, targets.column_iter().map(|c| c.mean()));

    // H M = M - 1 (colmean M); M H = M - (rowmean M) 1^T
    let center_cols = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            let mu = col.mean();
            col.add_scalar_mut(-mu);
        }
        out
    };
    let khk = {
        let kh = center_cols(&k.transpose()).transpose(); // K H
        center_cols(&kh) // H K H
    };
    let mut g = (&khk + khk.transpose()) * 0.5;
    for i in 0..n {
        g[(i, i)] += rho;
    }
    let y_c = center_cols(&targets);
    let beta = solve_spd(g, y_c)?;
    let coef = center_cols(&beta); // H beta

    // b_l = ybar_l - mean over train of (K c)_:l
    let kc = k * &coef;
    let b = DVector::from_iterator(
        n_classes,
        (0..n_classes).map(|l| y_mean[l] - kc.column(l).mean()),
    );
    Ok(KrrModel { coef, b, rho })
}

impl KrrModel {
    /// Decision values given the cross-kernel block K(train, X), N x |X|.
    pub fn decision_values(&self, k_cross: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if k_cross.nrows() != self.coef.nrows() {
            return Err(Error::DimMismatch(format!(
                "cross-kernel has {} rows, model has {} training points",
                k_cross.nrows(),
                self.coef.nrows()
            )));
        }
        let mut h = k_cross.transpose() * &self.coef;
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        Ok(h)
    }

    pub fn predict(&self, k_cross: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.decision_values(k_cross)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::nystrom::fit_standard;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn synth(n: usize, d: usize, n_classes: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(0.0..1.0));
        let y: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
        let labels = (0..n_classes).map(|c| c as f64).collect();
        Dataset::new(x, y, n_classes, labels).unwrap()
    }

    #[test]
    fn binary_columns_are_negations() {
        let ds = synth(30, 3, 2, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = DMatrix::from_fn(5, 30, |_, _| rng.random_range(-1.0..1.0));
        let model = train_ovr(&phi, &ds.y, 2, 1e-5, &ds.label_values).unwrap();
        assert!((model.w.column(0) + model.w.column(1)).norm() < 1e-8);
        assert!((model.b[0] + model.b[1]).abs() < 1e-8);
    }

    #[test]
    fn zero_features_give_class_means() {
        let ds = synth(20, 2, 2, 2);
        let phi = DMatrix::zeros(3, 20);
        let model = train_ovr(&phi, &ds.y, 2, 1e-5, &ds.label_values).unwrap();
        assert!(model.w.norm() < 1e-12);
        let targets = indicator_matrix(&ds.y, 2);
        for l in 0..2 {
            assert!((model.b[l] - targets.column(l).mean()).abs() < 1e-12);
        }
    }

    #[test]
    fn ovr_matches_independent_binary_solves() {
        let ds = synth(40, 3, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = DMatrix::from_fn(6, 40, |_, _| rng.random_range(-1.0..1.0));
        let model = train_ovr(&phi, &ds.y, 3, 1e-4, &ds.label_values).unwrap();
        let targets = indicator_matrix(&ds.y, 3);
        for l in 0..3 {
            let yl = DMatrix::from_column_slice(40, 1, targets.column(l).as_slice());
            let (wl, bl) = solve_ridge(&phi, &yl, 1e-4).unwrap();
            assert!((model.w.column(l) - wl.column(0)).norm() < 1e-8);
            assert!((model.b[l] - bl[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn ovr_rejects_single_class() {
        let phi = DMatrix::zeros(2, 5);
        assert!(train_ovr(&phi, &[0, 0, 0, 0, 0], 2, 1e-5, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn standard_form_preserves_predictions() {
        let ds = synth(60, 3, 3, 5);
        let cfg = KernelConfig::rbf(1.0).unwrap();
        let idx: Vec<usize> = (0..15).collect();
        let map = fit_standard(&ds, &idx, 15, &cfg).unwrap();
        let phi = map.transform(&ds.x).unwrap();
        let model = train_ovr(&phi, &ds.y, 3, 1e-5, &ds.label_values).unwrap();
        let clf = to_standard_form(&model, &map).unwrap();
        assert_eq!(clf.a.shape(), (15, 3));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let probe = DMatrix::from_fn(100, 3, |_, _| rng.random_range(0.0..1.0));
        let primal = model.decision_values(&map.transform(&probe).unwrap()).unwrap();
        let dual = clf.decision_values(&probe).unwrap();
        let gap = (primal - dual).abs().max();
        assert!(gap <= 1e-8, "prediction gap {gap}");
    }

    #[test]
    fn constant_bias_dominates() {
        let clf = StandardClassifier {
            support: DMatrix::zeros(1, 2),
            a: DMatrix::zeros(1, 2),
            b: DVector::from_vec(vec![1.0, 0.0]),
            kernel: KernelConfig::rbf(1.0).unwrap(),
            label_values: vec![0.0, 1.0],
        };
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
        assert_eq!(clf.predict(&x).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn argmax_tie_breaks_to_smaller_class() {
        let h = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.1, 0.2, 0.9, 0.9]);
        assert_eq!(argmax_rows(&h), vec![0, 1]);
    }

    #[test]
    fn argmax_invariant_under_row_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = DMatrix::from_fn(50, 4, |_, _| rng.random_range(-1.0..1.0));
        let mut shifted = h.clone();
        for mut row in shifted.row_iter_mut() {
            row.add_scalar_mut(3.7);
        }
        assert_eq!(argmax_rows(&h), argmax_rows(&shifted));
    }

    #[test]
    fn krr_interpolates_as_rho_vanishes() {
        let k = DMatrix::identity(10, 10);
        let y: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let model = exact_krr(&k, &y, 2, 1e-10).unwrap();
        let h = model.decision_values(&k).unwrap();
        let targets = indicator_matrix(&y, 2);
        assert!((h - targets).abs().max() < 1e-6);
    }

    #[test]
    fn krr_equals_primal_on_full_rank_map() {
        let ds = synth(50, 3, 2, 8);
        let cfg = KernelConfig::rbf(1.0).unwrap();
        let idx: Vec<usize> = (0..50).collect();
        let map = fit_standard(&ds, &idx, 50, &cfg).unwrap();
        let phi = map.transform(&ds.x).unwrap();
        let model = train_ovr(&phi, &ds.y, 2, 1e-4, &ds.label_values).unwrap();
        let primal = model.decision_values(&phi).unwrap();

        let k = gram(&ds.x, &ds.x, &cfg).unwrap();
        let krr = exact_krr(&k, &ds.y, 2, 1e-4).unwrap();
        let dual = krr.decision_values(&k).unwrap();
        let gap = (primal - dual).abs().max();
        assert!(gap < 1e-6, "representer gap {gap}");
    }

    #[test]
    fn krr_scale_invariance() {
        let ds = synth(30, 2, 2, 9);
        let cfg = KernelConfig::rbf(1.0).unwrap();
        let k = gram(&ds.x, &ds.x, &cfg).unwrap();
        let m1 = exact_krr(&k, &ds.y, 2, 1e-3).unwrap();
        let c = 7.0;
        let m2 = exact_krr(&(&k * c), &ds.y, 2, 1e-3 * c).unwrap();
        let h1 = m1.decision_values(&k).unwrap();
        let h2 = m2.decision_values(&(&k * c)).unwrap();
        assert!((h1 - h2).abs().max() < 1e-8);
    }

    #[test]
    fn krr_cap_enforced() {
        let n = EXACT_KRR_CAP + 1;
        let k = DMatrix::zeros(n, n);
        let y = vec![0usize; n];
        assert!(exact_krr(&k, &y, 2, 1e-5).is_err());
    }
}
