//! The discrete Riesz map F: V -> V* and the H, V, V* norms.
//!
//! F is realized in Galerkin form: F^{-1}v solves (K+M)z = Mv, so the V*
//! pairing of two fields is z^T M w and the norm chain
//! |v|_{V*} <= |v|_H <= |v|_V holds exactly at the discrete level.

use crate::domain::{DomainError, EllipticOperator, Field};
use crate::linalg::TridiagFactor;

/// Dual-space engine: an elliptic operator plus the cached factorization of
/// K+M. Immutable after construction; solves are reentrant.
#[derive(Debug, Clone)]
pub struct DualEngine {
    op: EllipticOperator,
    a_factor: TridiagFactor,
}

impl DualEngine {
    /// The A-form is symmetric positive definite by construction, so the
    /// factorization cannot fail on a valid operator.
    pub fn new(op: EllipticOperator) -> Self {
        let a_factor = op
            .a_form_tridiag()
            .ldlt()
            .expect("K+M must be symmetric positive definite");
        Self { op, a_factor }
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    fn check_len(&self, v: &Field) -> Result<(), DomainError> {
        if v.len() != self.len() {
            return Err(DomainError::DimensionMismatch {
                field: v.len(),
                grid: self.len(),
            });
        }
        Ok(())
    }

    fn mass_weighted(&self, v: &Field) -> Vec<f64> {
        self.op
            .mass()
            .iter()
            .zip(&v.values)
            .map(|(&m, &x)| m * x)
            .collect()
    }

    /// z = F^{-1} v: solve (K+M) z = M v.
    pub fn riesz_inverse(&self, v: &Field) -> Result<Field, DomainError> {
        self.check_len(v)?;
        Ok(Field::from_values(
            self.a_factor.solve(&self.mass_weighted(v)),
        ))
    }

    /// V* inner product (v, w)_{V*} = <v, F^{-1} w> = (F^{-1}v)^T M w.
    pub fn vstar_inner(&self, v: &Field, w: &Field) -> Result<f64, DomainError> {
        let z = self.riesz_inverse(v)?;
        self.check_len(w)?;
        Ok(self.op.h_inner(&z, w))
    }

    /// |v|_{V*} = (v, v)_{V*}^{1/2}.
    pub fn vstar_norm(&self, v: &Field) -> Result<f64, DomainError> {
        Ok(self.vstar_inner(v, v)?.max(0.0).sqrt())
    }

    /// |v|_H = (v^T M v)^{1/2}.
    pub fn h_norm(&self, v: &Field) -> f64 {
        self.op.h_inner(v, v).max(0.0).sqrt()
    }

    /// |v|_V = (v^T (K+M) v)^{1/2}.
    pub fn v_norm(&self, v: &Field) -> f64 {
        self.op.v_inner(v, v).max(0.0).sqrt()
    }

    /// The fixed source term of the regularized system: solve the discrete
    /// weak Neumann problem (K+M) f = M g for a given g in H.
    pub fn compute_f(&self, g: &Field) -> Result<Field, DomainError> {
        self.riesz_inverse(g)
    }
}
