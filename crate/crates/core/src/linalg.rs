//! Symmetric eigenfactorizations, randomized range finding, spectral norm
//! estimation and the ridge solver shared by all variants.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff realizing the pseudoinverse truncation.
pub const PINV_REL_TOL: f64 = 1e-12;

/// Truncated symmetric factorization B ~ U diag(sigma) U^T with orthonormal
/// U and strictly positive, nonincreasing sigma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactFactor {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

impl CompactFactor {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

fn check_symmetric(b: &DMatrix<f64>, tol: f64) -> Result<()> {
    if b.nrows() != b.ncols() {
        return Err(Error::DimMismatch("matrix is not square".into()));
    }
    for i in 0..b.nrows() {
        for j in 0..i {
            if (b[(i, j)] - b[(j, i)]).abs() > tol {
                return Err(Error::InvalidParam(format!(
                    "matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Top-k eigenpairs of a symmetric PSD matrix, with eigenvalues below
/// `rel_tol * max_eig` dropped.
pub fn compact_eig_psd(b: &DMatrix<f64>, k: usize, rel_tol: f64) -> Result<CompactFactor> {
    if k < 1 {
        return Err(Error::InvalidParam("rank target k must be >= 1".into()));
    }
    check_symmetric(b, 1e-10)?;
    let eig = b.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });
    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = rel_tol * max_eig;
    let kept: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&i| eig.eigenvalues[i] > cutoff && eig.eigenvalues[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidParam(
            "matrix has no positive eigenvalues above tolerance".into(),
        ));
    }
    let u = eig.eigenvectors.select_columns(kept.iter());
    let sigma = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
    Ok(CompactFactor { u, sigma })
}

fn gaussian_matrix(nrows: usize, ncols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(nrows, ncols, |_, _| StandardNormal.sample(rng))
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    qr.q()
}

/// Randomized rank-k factorization of a symmetric PSD matrix via Gaussian
/// range finding with subspace (power) iterations.
pub fn randomized_eig_psd(
    b: &DMatrix<f64>,
    k: usize,
    oversample: usize,
    power: usize,
    seed: u64,
) -> Result<CompactFactor> {
    if k < 1 {
        return Err(Error::InvalidParam("rank target k must be >= 1".into()));
    }
    check_symmetric(b, 1e-10)?;
    let n = b.nrows();
    let probes = k + oversample;
    if probes > n {
        return Err(Error::InvalidParam(format!(
            "k + oversample = {probes} exceeds matrix size {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = gaussian_matrix(n, probes, &mut rng);
    let mut q = orthonormalize(b * omega);
    for _ in 0..power {
        q = orthonormalize(b * q);
    }
    // Rayleigh-Ritz on the captured range.
    let t = q.transpose() * b * &q;
    let t = (&t + t.transpose()) * 0.5;
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });
    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = PINV_REL_TOL * max_eig;
    let kept: Vec<usize> = order
        .into_iter()
        .take(k)
        .filter(|&i| eig.eigenvalues[i] > cutoff && eig.eigenvalues[i] > 0.0)
        .collect();
    if kept.is_empty() {
        return Err(Error::InvalidParam(
            "matrix has no positive eigenvalues above tolerance".into(),
        ));
    }
    let v = eig.eigenvectors.select_columns(kept.iter());
    let u = q * v;
    let sigma = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
    Ok(CompactFactor { u, sigma })
}

/// Whitening map A0 = U Sigma^{-1/2}; A0^T B A0 = I on the captured range.
pub fn whitening_map(f: &CompactFactor) -> DMatrix<f64> {
    let mut a = f.u.clone();
    for (j, s) in f.sigma.iter().enumerate() {
        let inv_sqrt = 1.0 / s.sqrt();
        a.column_mut(j).scale_mut(inv_sqrt);
    }
    a
}

/// Largest singular value of `m` by power iteration on M^T M.
pub fn spectral_norm(m: &DMatrix<f64>, iters: usize, seed: u64) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: DVector<f64> = DVector::from_fn(m.ncols(), |_, _| StandardNormal.sample(&mut rng));
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut sigma = 0.0;
    for _ in 0..iters {
        let mv = m * &v;
        sigma = mv.norm();
        let w = m.transpose() * mv;
        let wn = w.norm();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
    }
    sigma.max((m * &v).norm())
}

/// Minimize ||Phi^T W + 1 b^T - Y||_F^2 + rho ||W||_F^2 with an unpenalized
/// bias, by centering and solving the D x D normal equations.
///
/// `phi` is D x N (one feature column per sample), `y` is N x L.
pub fn solve_ridge(
    phi: &DMatrix<f64>,
    y: &DMatrix<f64>,
    rho: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::InvalidParam(format!("rho must be positive, got {rho}")));
    }
    let (d, n) = phi.shape();
    if y.nrows() != n {
        return Err(Error::DimMismatch(format!(
            "phi has {n} samples, y has {}",
            y.nrows()
        )));
    }
    if phi.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("non-finite entries in ridge inputs".into()));
    }
    let l = y.ncols();

    let phi_mean: DVector<f64> = phi.column_mean();
    let y_mean: DVector<f64> = DVector::from_iterator(l, y.column_iter().map(|c| c.mean()));

    let mut phi_c = phi.clone();
    for mut col in phi_c.column_iter_mut() {
        col -= &phi_mean;
    }
    let mut y_c = y.clone();
    for (j, mut col) in y_c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-y_mean[j]);
    }

    let mut g = &phi_c * phi_c.transpose();
    for i in 0..d {
        g[(i, i)] += rho;
    }
    let rhs = &phi_c * &y_c;
    let w = solve_spd(g, rhs)?;
    let b = &y_mean - w.transpose() * &phi_mean;
    Ok((w, b))
}

/// Solve G X = RHS for symmetric positive definite G, with an LU fallback
/// for near-singular inputs.
pub fn solve_spd(g: DMatrix<f64>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = g.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    g.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParam("ridge system is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_psd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(n, n, &mut rng);
        let m = &a * a.transpose();
        (&m + m.transpose()) * 0.5
    }

    fn full_eigs_desc(b: &DMatrix<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = b.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn compact_identity() {
        let f = compact_eig_psd(&DMatrix::identity(2, 2), 2, PINV_REL_TOL).unwrap();
        assert_eq!(f.rank(), 2);
        assert_relative_eq!(f.sigma[0], 1.0, max_relative = 1e-12);
        let utu = f.u.transpose() * &f.u;
        assert!((utu - DMatrix::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn compact_diag_truncation() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let f = compact_eig_psd(&b, 1, PINV_REL_TOL).unwrap();
        assert_eq!(f.rank(), 1);
        assert_relative_eq!(f.sigma[0], 4.0, max_relative = 1e-12);
        assert!((f.u[(0, 0)].abs() - 1.0).abs() < 1e-12 && f.u[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn compact_eckart_young_truncation_error() {
        let b = random_psd(20, 3);
        let f = compact_eig_psd(&b, 5, PINV_REL_TOL).unwrap();
        let approx = &f.u * DMatrix::from_diagonal(&f.sigma) * f.u.transpose();
        let err = spectral_norm(&(&b - approx), 200, 0);
        let tail = full_eigs_desc(&b)[5];
        assert_relative_eq!(err, tail, max_relative = 1e-6);
    }

    #[test]
    fn compact_rejects_nonsymmetric() {
        let mut b = DMatrix::identity(3, 3);
        b[(0, 1)] = 0.5;
        assert!(compact_eig_psd(&b, 2, PINV_REL_TOL).is_err());
    }

    #[test]
    fn compact_sigma_nonincreasing_and_orthonormal() {
        for seed in 0..5 {
            let b = random_psd(30, seed);
            let f = compact_eig_psd(&b, 12, PINV_REL_TOL).unwrap();
            for i in 1..f.rank() {
                assert!(f.sigma[i] <= f.sigma[i - 1]);
                assert!(f.sigma[i] > 0.0);
            }
            let utu = f.u.transpose() * &f.u;
            assert!((utu - DMatrix::identity(f.rank(), f.rank())).norm() < 1e-8);
        }
    }

    #[test]
    fn randomized_exact_low_rank() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]));
        let f = randomized_eig_psd(&b, 1, 2, 2, 42).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.sigma[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn randomized_is_deterministic_in_seed() {
        let b = random_psd(40, 9);
        let f1 = randomized_eig_psd(&b, 10, 5, 2, 7).unwrap();
        let f2 = randomized_eig_psd(&b, 10, 5, 2, 7).unwrap();
        assert_eq!(f1.u, f2.u);
        assert_eq!(f1.sigma, f2.sigma);
    }

    #[test]
    fn randomized_near_optimal_truncation() {
        let b = random_psd(200, 11);
        let f = randomized_eig_psd(&b, 20, 10, 2, 5).unwrap();
        let approx = &f.u * DMatrix::from_diagonal(&f.sigma) * f.u.transpose();
        let err = spectral_norm(&(&b - approx), 300, 1);
        let tail = full_eigs_desc(&b)[20];
        assert!(err <= 10.0 * (tail + 1e-12), "err {err} vs tail {tail}");
    }

    #[test]
    fn randomized_rejects_oversized_probes() {
        let b = DMatrix::identity(5, 5);
        assert!(randomized_eig_psd(&b, 4, 3, 1, 0).is_err());
    }

    #[test]
    fn whitening_unit_sigma_is_u() {
        let b = random_psd(10, 2);
        let f = compact_eig_psd(&b, 10, PINV_REL_TOL).unwrap();
        let flat = CompactFactor {
            u: f.u.clone(),
            sigma: DVector::from_element(f.rank(), 1.0),
        };
        assert_eq!(whitening_map(&flat), f.u);
    }

    #[test]
    fn whitening_single_eigenpair() {
        let f = CompactFactor {
            u: DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            sigma: DVector::from_vec(vec![4.0]),
        };
        let a0 = whitening_map(&f);
        assert_eq!(a0.as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn whitening_identity_on_reconstruction() {
        let b = random_psd(15, 4);
        let f = compact_eig_psd(&b, 15, PINV_REL_TOL).unwrap();
        let recon = &f.u * DMatrix::from_diagonal(&f.sigma) * f.u.transpose();
        let a0 = whitening_map(&f);
        let should_be_i = a0.transpose() * recon * &a0;
        assert!((should_be_i - DMatrix::identity(f.rank(), f.rank())).norm() < 1e-6);
    }

    #[test]
    fn spectral_norm_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        assert_relative_eq!(spectral_norm(&m, 100, 0), 3.0, max_relative = 1e-6);
        assert_relative_eq!(
            spectral_norm(&DMatrix::identity(4, 4), 50, 0),
            1.0,
            max_relative = 1e-8
        );
    }

    #[test]
    fn spectral_norm_matches_dense_oracle() {
        let b = random_psd(50, 6);
        let est = spectral_norm(&b, 500, 3);
        let oracle = full_eigs_desc(&b)[0];
        assert_relative_eq!(est, oracle, max_relative = 1e-4);
    }

    #[test]
    fn ridge_zero_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = gaussian_matrix(4, 20, &mut rng);
        let y = DMatrix::zeros(20, 3);
        let (w, b) = solve_ridge(&phi, &y, 1e-5).unwrap();
        assert!(w.norm() < 1e-12);
        assert!(b.norm() < 1e-12);
    }

    #[test]
    fn ridge_huge_rho_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = gaussian_matrix(4, 30, &mut rng);
        let y = gaussian_matrix(30, 2, &mut rng);
        let (w_small, _) = solve_ridge(&phi, &y, 1e-5).unwrap();
        let (w, b) = solve_ridge(&phi, &y, 1e9).unwrap();
        assert!(w.norm() <= 1e-6 * w_small.norm().max(1.0));
        for j in 0..2 {
            assert_relative_eq!(b[j], y.column(j).mean(), max_relative = 1e-6);
        }
    }

    // Finite-difference check that the returned (W, b) is a stationary point
    // of the penalized objective.
    fn ridge_objective(phi: &DMatrix<f64>, y: &DMatrix<f64>, rho: f64, w: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
        let mut resid = phi.transpose() * w - y;
        for (j, mut col) in resid.column_iter_mut().enumerate() {
            col.add_scalar_mut(b[j]);
        }
        resid.norm_squared() + rho * w.norm_squared()
    }

    #[test]
    fn ridge_gradient_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = gaussian_matrix(10, 30, &mut rng);
        let y = gaussian_matrix(30, 2, &mut rng);
        let rho = 1e-5;
        let (w, b) = solve_ridge(&phi, &y, rho).unwrap();
        // analytic gradient: dW = 2 Phi(Phi^T W + 1b^T - Y) + 2 rho W; db = 2 sum residual
        let mut resid = phi.transpose() * &w - &y;
        for (j, mut col) in resid.column_iter_mut().enumerate() {
            col.add_scalar_mut(b[j]);
        }
        let grad_w = &phi * &resid * 2.0 + &w * (2.0 * rho);
        let grad_b: DVector<f64> =
            DVector::from_iterator(2, resid.column_iter().map(|c| 2.0 * c.sum()));
        let gnorm = (grad_w.norm_squared() + grad_b.norm_squared()).sqrt();
        assert!(gnorm <= 1e-8 * y.norm(), "gradient norm {gnorm}");
        // and finite-difference in a few random directions agrees
        let f0 = ridge_objective(&phi, &y, rho, &w, &b);
        for seed in 0..5 {
            let mut prng = ChaCha8Rng::seed_from_u64(seed);
            let dw = gaussian_matrix(10, 2, &mut prng) * 1e-3;
            let db = DVector::from_fn(2, |_, _| {
                let v: f64 = StandardNormal.sample(&mut prng);
                v * 1e-3
            });
            let f1 = ridge_objective(&phi, &y, rho, &(&w + dw), &(&b + db));
            assert!(f1 >= f0 - 1e-9 * f0.max(1.0), "perturbed objective below optimum");
        }
    }

    #[test]
    fn ridge_bias_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = gaussian_matrix(6, 25, &mut rng);
        let y = gaussian_matrix(25, 3, &mut rng);
        let (w1, b1) = solve_ridge(&phi, &y, 1e-3).unwrap();
        let shifted = y.map(|v| v + 2.5);
        let (w2, b2) = solve_ridge(&phi, &shifted, 1e-3).unwrap();
        assert!((w1 - w2).norm() < 1e-8);
        assert!((b2 - b1).map(|v| v - 2.5).norm() < 1e-8);
    }

    #[test]
    fn ridge_rejects_bad_rho() {
        let phi = DMatrix::identity(2, 2);
        let y = DMatrix::zeros(2, 2);
        assert!(solve_ridge(&phi, &y, 0.0).is_err());
        assert!(solve_ridge(&phi, &y, -1.0).is_err());
    }
}
