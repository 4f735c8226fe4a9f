//! Finite element fields: coefficient vectors over a space.
//!
//! A field either spans the whole space (one coefficient per node) or the
//! zero-trace subspace (one coefficient per interior node, implicit zeros on
//! the boundary).

use std::sync::Arc;

use super::space::{FeSpace, MAX_LOCAL_NODES};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct FeField {
    space: Arc<FeSpace>,
    coeffs: Vec<f64>,
    zero_trace: bool,
}

impl FeField {
    /// Field over the whole space; `coeffs.len() == num_nodes()`.
    pub fn from_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.num_nodes());
        FeField { space, coeffs, zero_trace: false }
    }

    /// Zero-trace field; `coeffs.len() == num_interior()`.
    pub fn from_interior_coeffs(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.num_interior());
        FeField { space, coeffs, zero_trace: true }
    }

    pub fn zeros(space: Arc<FeSpace>) -> Self {
        let n = space.num_nodes();
        FeField::from_coeffs(space, vec![0.0; n])
    }

    /// Nodal interpolant of a closed-form function.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let coeffs = (0..space.num_nodes()).map(|i| f(space.node(i))).collect();
        FeField::from_coeffs(space, coeffs)
    }

    /// Nodal interpolant restricted to interior coefficients (zero trace).
    pub fn interpolate_zero_trace(space: Arc<FeSpace>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let coeffs =
            space.interior_nodes().iter().map(|&i| f(space.node(i as usize))).collect();
        FeField::from_interior_coeffs(space, coeffs)
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn is_zero_trace(&self) -> bool {
        self.zero_trace
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient at a global node (zero on the boundary for zero-trace fields).
    pub fn coeff_at_node(&self, global: usize) -> f64 {
        if self.zero_trace {
            match self.space.interior_index(global) {
                Some(k) => self.coeffs[k],
                None => 0.0,
            }
        } else {
            self.coeffs[global]
        }
    }

    /// Coefficients extended over all nodes.
    pub fn full_coeffs(&self) -> Vec<f64> {
        if self.zero_trace {
            let mut out = vec![0.0; self.space.num_nodes()];
            for (k, &i) in self.space.interior_nodes().iter().enumerate() {
                out[i as usize] = self.coeffs[k];
            }
            out
        } else {
            self.coeffs.clone()
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, &c| m.max(c.abs()))
    }

    /// Value from precomputed basis values of triangle `t`.
    pub fn value_from_basis(&self, t: usize, basis: &[f64; MAX_LOCAL_NODES]) -> f64 {
        let mut s = 0.0;
        for (l, &g) in self.space.triangle_nodes(t).iter().enumerate() {
            s += self.coeff_at_node(g as usize) * basis[l];
        }
        s
    }

    /// Exact FE value at a point of the domain.
    pub fn evaluate(&self, p: [f64; 2]) -> Result<f64> {
        let (t, bary) = self.space.mesh().locate(p)?;
        let mut basis = [0.0; MAX_LOCAL_NODES];
        self.space.basis_values(bary, &mut basis);
        Ok(self.value_from_basis(t, &basis))
    }

    /// Elementwise gradient at a point (the raw per-triangle derivative, not
    /// the recovered one; discontinuous across edges).
    pub fn evaluate_gradient(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let (t, bary) = self.space.mesh().locate(p)?;
        let mut grads = [[0.0; 2]; MAX_LOCAL_NODES];
        self.space.basis_gradients(t, bary, &mut grads);
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (l, &g) in self.space.triangle_nodes(t).iter().enumerate() {
            let c = self.coeff_at_node(g as usize);
            gx += c * grads[l][0];
            gy += c * grads[l][1];
        }
        Ok([gx, gy])
    }

    /// Area-weighted nodal derivative recovery along `axis` (0 or 1).
    ///
    /// The result spans the whole space, boundary nodes included.
    pub fn recover_derivative(&self, axis: usize) -> FeField {
        let full = self.full_coeffs();
        let coeffs = self.space.recovery_matrix(axis).matvec(&full);
        FeField::from_coeffs(self.space.clone(), coeffs)
    }

    /// Recovered Hessian fields `[h11, h12, h21, h22]`.
    ///
    /// The mixed entries are symmetrized by averaging the two recovery
    /// orders, since recovery does not commute exactly.
    pub fn recover_hessian(&self) -> [FeField; 4] {
        let d1 = self.recover_derivative(0);
        let d2 = self.recover_derivative(1);
        let h11 = d1.recover_derivative(0);
        let h12 = d1.recover_derivative(1);
        let h21 = d2.recover_derivative(0);
        let h22 = d2.recover_derivative(1);
        let mut sym = h12.clone();
        for (s, (&a, &b)) in sym.coeffs.iter_mut().zip(h12.coeffs.iter().zip(&h21.coeffs)) {
            *s = 0.5 * (a + b);
        }
        [h11, sym.clone(), sym, h22]
    }
}
