//! Small dense linear-algebra helpers: Sherman–Morrison maintenance of inverse design
//! matrices, elliptical norms and minimum eigenvalues.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Returns the inverse of `Λ + φφᵀ` given `Λ⁻¹` (Sherman–Morrison).
pub fn rank_one_update(lambda_inv: &DMatrix<f64>, phi: &DVector<f64>) -> DMatrix<f64> {
    let mut out = lambda_inv.clone();
    rank_one_update_in_place(&mut out, phi);
    out
}

pub fn rank_one_update_in_place(lambda_inv: &mut DMatrix<f64>, phi: &DVector<f64>) {
    if phi.iter().all(|x| *x == 0.0) {
        return;
    }
    let u = &*lambda_inv * phi;
    let denom = 1.0 + phi.dot(&u);
    lambda_inv.ger(-1.0 / denom, &u, &u, 1.0);
}

/// `‖φ‖_{Λ⁻¹} = √(φᵀΛ⁻¹φ)`.
pub fn elliptical_bonus(phi: &DVector<f64>, lambda_inv: &DMatrix<f64>) -> f64 {
    let q = phi.dot(&(lambda_inv * phi));
    q.max(0.0).sqrt()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    Some(chol.inverse())
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Regularised design matrix `Λ = I + Σ φφᵀ` with its inverse maintained incrementally.
///
/// The inverse is recomputed from `Λ` every `reinvert_every` updates to bound drift.
#[derive(Clone, Debug)]
pub struct Covariance {
    lambda: DMatrix<f64>,
    inverse: DMatrix<f64>,
    updates: usize,
    reinvert_every: usize,
}

impl Covariance {
    pub fn identity(dim: usize, reinvert_every: usize) -> Self {
        Self::scaled_identity(dim, 1.0, reinvert_every)
    }

    pub fn scaled_identity(dim: usize, reg: f64, reinvert_every: usize) -> Self {
        Self {
            lambda: DMatrix::identity(dim, dim) * reg,
            inverse: DMatrix::identity(dim, dim) / reg,
            updates: 0,
            reinvert_every: reinvert_every.max(1),
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn update(&mut self, phi: &DVector<f64>) {
        self.update_weighted(phi, 1.0);
    }

    /// Adds `w·φφᵀ` for integer-like multiplicities `w ≥ 0`.
    pub fn update_weighted(&mut self, phi: &DVector<f64>, weight: f64) {
        if weight <= 0.0 {
            return;
        }
        self.lambda.ger(weight, phi, phi, 1.0);
        let scaled = phi * weight.sqrt();
        rank_one_update_in_place(&mut self.inverse, &scaled);
        self.updates += 1;
        if self.updates.is_multiple_of(self.reinvert_every) {
            self.reinvert();
        }
    }

    pub fn reinvert(&mut self) {
        if let Some(inv) = invert_spd(&self.lambda) {
            self.inverse = inv;
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn bonus(&self, phi: &DVector<f64>) -> f64 {
        elliptical_bonus(phi, &self.inverse)
    }
}

pub fn one_hot(dim: usize, index: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn random_spd(dim: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(dim, dim)
    }

    #[test]
    fn zero_vector_leaves_inverse_unchanged() {
        let inv = DMatrix::<f64>::identity(3, 3);
        let out = rank_one_update(&inv, &DVector::zeros(3));
        assert_eq!(out, inv);
    }

    #[test]
    fn identity_plus_e1() {
        let inv = DMatrix::<f64>::identity(4, 4);
        let out = rank_one_update(&inv, &one_hot(4, 0));
        let mut expected = DMatrix::<f64>::identity(4, 4);
        expected[(0, 0)] = 0.5;
        assert!((out - expected).abs().max() < 1e-15);
    }

    #[test]
    fn bonus_examples() {
        let inv = DMatrix::<f64>::identity(5, 5);
        assert!((elliptical_bonus(&one_hot(5, 2), &inv) - 1.0).abs() < 1e-15);
        assert_eq!(elliptical_bonus(&DVector::zeros(5), &inv), 0.0);
        let mut cov = Covariance::identity(5, 512);
        for m in 1..=10 {
            cov.update(&one_hot(5, 0));
            let expected = 1.0 / ((m + 1) as f64).sqrt();
            assert!((cov.bonus(&one_hot(5, 0)) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sherman_morrison_matches_direct_inverse() {
        let mut rng = crate::rng::Rng::seed_from_u64(3);
        for dim in [1usize, 2, 7, 16] {
            let lambda = random_spd(dim, &mut rng);
            let inv = invert_spd(&lambda).unwrap();
            let phi = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let updated = rank_one_update(&inv, &phi);
            let direct = invert_spd(&(&lambda + &phi * phi.transpose())).unwrap();
            let rel = (&updated - &direct).abs().max() / direct.abs().max();
            assert!(rel < 1e-10, "dim {dim}: {rel}");
        }
    }

    #[test]
    fn lambda_min_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.1, 0.6]));
        assert!((lambda_min(&m) - 0.1).abs() < 1e-12);
    }
}
