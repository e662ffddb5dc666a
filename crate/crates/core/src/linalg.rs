use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::{Error, Result, Sample};

pub(crate) type CMatrix = DMatrix<Sample>;

/// Relative diagonal jitter tried when a Hermitian factorization fails.
pub(crate) const JITTER: f64 = 1e-12;

pub(crate) struct HermitianFactor {
    pub chol: Cholesky<Sample, Dyn>,
    pub jittered: bool,
}

impl HermitianFactor {
    /// Cholesky of a Hermitian positive definite matrix, retrying once with
    /// `JITTER * mean(diag)` added to the diagonal.
    pub fn new(m: CMatrix) -> Result<Self> {
        let n = m.nrows();
        let scale = (0..n).map(|i| m[(i, i)].re).sum::<f64>() / n.max(1) as f64;
        if !scale.is_finite() || scale <= 0.0 {
            return Err(Error::Numerical("matrix is not positive definite".into()));
        }
        match m.clone().cholesky() {
            Some(chol) => Ok(HermitianFactor { chol, jittered: false }),
            None => {
                let mut j = m;
                for i in 0..n {
                    j[(i, i)] += Sample::new(JITTER * scale, 0.0);
                }
                j.cholesky()
                    .map(|chol| HermitianFactor { chol, jittered: true })
                    .ok_or_else(|| Error::Numerical("Hermitian factorization failed".into()))
            }
        }
    }

    /// `(max L_ii / min L_ii)^2`, a cheap condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = l[(i, i)].re.abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (hi / lo).powi(2)
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower(&self, b: &mut CMatrix) {
        let _ = self.chol.l_dirty().solve_lower_triangular_mut(b);
    }
}
