//! Discrete Neumann Laplacian on all nodes and the negative-order norms it
//! induces.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::eigen::{eigenpairs, Eigenbasis};
use crate::error::{Error, Result};
use crate::mesh::{assemble_mass_matrix, assemble_stiffness_matrix, Mesh};

/// Relative size of the mean above which a field counts as not mean-zero.
pub const MEAN_ZERO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NeumannOperator {
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Full spectrum; `values[0]` is zero with a constant eigenvector.
    pub eigen: Eigenbasis,
    /// Reciprocal of the first nonzero eigenvalue.
    pub poincare: f64,
    measure: f64,
    mass_ones: DVector<f64>,
    mass_chol: Cholesky<f64, Dyn>,
}

pub fn neumann_operator(mesh: &Mesh) -> Result<NeumannOperator> {
    let stiffness = assemble_stiffness_matrix(mesh);
    let mass = assemble_mass_matrix(mesh);
    let n = mesh.node_count();
    let mut eigen = eigenpairs(&stiffness, &mass, n)?;
    eigen.values[0] = 0.0;
    let poincare = 1.0 / eigen.values[1];
    let mass_ones = &mass * DVector::from_element(n, 1.0);
    let mass_chol = Cholesky::new(mass.clone())
        .ok_or_else(|| Error::NumericalFailure("mass matrix is not positive definite".into()))?;
    Ok(NeumannOperator {
        stiffness,
        mass,
        eigen,
        poincare,
        measure: mesh.measure(),
        mass_ones,
        mass_chol,
    })
}

impl NeumannOperator {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// ⟨ψ⟩
    pub fn mean(&self, psi: &DVector<f64>) -> f64 {
        self.mass_ones.dot(psi) / self.measure
    }

    pub fn l2_norm(&self, psi: &DVector<f64>) -> f64 {
        psi.dot(&(&self.mass * psi)).max(0.0).sqrt()
    }

    pub fn grad_norm_sq(&self, psi: &DVector<f64>) -> f64 {
        psi.dot(&(&self.stiffness * psi))
    }

    /// Nodal field of `-Δψ`, i.e. `M⁻¹ K ψ`.
    pub fn apply(&self, psi: &DVector<f64>) -> DVector<f64> {
        self.mass_chol.solve(&(&self.stiffness * psi))
    }

    /// Solves `-Δφ = ψ`, `⟨φ⟩ = 0` for mean-zero `ψ`.
    pub fn apply_inverse(&self, psi: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_mean_zero(psi)?;
        let coeffs = self.eigen.vectors.transpose() * (&self.mass * psi);
        let mut out = DVector::zeros(self.dim());
        for k in 1..self.eigen.count {
            out.axpy(
                coeffs[k] / self.eigen.values[k],
                &self.eigen.vectors.column(k),
                1.0,
            );
        }
        Ok(out)
    }

    pub fn require_mean_zero(&self, psi: &DVector<f64>) -> Result<()> {
        let mean = self.mean(psi);
        let norm = self.l2_norm(psi);
        if mean.abs() > MEAN_ZERO_TOLERANCE * norm.max(f64::MIN_POSITIVE) && mean != 0.0 {
            return Err(Error::MeanZeroViolation { mean, norm });
        }
        Ok(())
    }

    /// `‖A^{-r/2}(ψ − ⟨ψ⟩)‖² + ⟨ψ⟩²`
    pub fn negative_norm_sq(&self, psi: &DVector<f64>, r: f64) -> f64 {
        let coeffs = self.eigen.vectors.transpose() * (&self.mass * psi);
        let mean = self.mean(psi);
        let mut acc = mean * mean;
        for k in 1..self.eigen.count {
            acc += coeffs[k] * coeffs[k] / self.eigen.values[k].powf(r);
        }
        acc
    }

    pub fn negative_norm(&self, psi: &DVector<f64>, r: f64) -> f64 {
        self.negative_norm_sq(psi, r).sqrt()
    }

    /// Gram matrix `D` of the `r = 1` norm: `ψᵀ D ψ = negative_norm_sq(ψ, 1)`.
    pub fn h_minus_one_gram(&self) -> DMatrix<f64> {
        let mv = &self.mass * &self.eigen.vectors;
        let n = self.dim();
        let mut scaled = mv.clone();
        for k in 0..n {
            let s = if k == 0 {
                0.0
            } else {
                1.0 / self.eigen.values[k]
            };
            scaled.column_mut(k).scale_mut(s);
        }
        let mut d = scaled * mv.transpose();
        let w = self.measure * self.measure;
        d += &self.mass_ones * self.mass_ones.transpose() / w;
        (&d + d.transpose()) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn constants_in_kernel() {
        let mesh = build_interval_mesh(0.0, 1.0, 33).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let r = &a.stiffness * DVector::from_element(34, 1.0);
        assert!(r.amax() < 1e-12);
        assert_eq!(a.eigen.values[0], 0.0);
        assert!(a.eigen.values[1] > 0.0);
    }

    #[test]
    fn poincare_wirtinger() {
        let mesh = build_interval_mesh(-0.5, 1.5, 40).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let psi = random_field(41, &mut rng);
            let centred = psi.add_scalar(-a.mean(&psi));
            let lhs = a.l2_norm(&centred);
            let rhs = a.poincare.sqrt() * a.grad_norm_sq(&psi).sqrt();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn cosine_h_minus_one_norm() {
        let mut prev = f64::INFINITY;
        let target = 1.0 / (2.0 * PI * PI);
        for n in [32, 64, 128] {
            let mesh = build_interval_mesh(0.0, 1.0, n).unwrap();
            let a = neumann_operator(&mesh).unwrap();
            let psi = DVector::from_iterator(n + 1, mesh.nodes.iter().map(|x| (PI * x).cos()));
            assert!(a.mean(&psi).abs() < 1e-12);
            let err = (a.negative_norm_sq(&psi, 1.0) - target).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev / target < 1e-3);
    }

    #[test]
    fn constant_field_norm() {
        let mesh = build_interval_mesh(0.0, 2.0, 10).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let psi = DVector::from_element(11, -3.0);
        assert!((a.negative_norm(&psi, 1.0) - 3.0).abs() < 1e-12);
        assert!((a.negative_norm(&psi, 2.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_on_range() {
        let mesh = build_interval_mesh(0.0, 1.0, 24).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let psi = random_field(25, &mut rng);
            let back = a.apply_inverse(&a.apply(&psi)).unwrap();
            let expect = psi.add_scalar(-a.mean(&psi));
            assert!((back - expect).amax() < 1e-10);
        }
    }

    #[test]
    fn inverse_rejects_mean() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let psi = DVector::from_element(9, 1.0);
        assert!(matches!(
            a.apply_inverse(&psi),
            Err(Error::MeanZeroViolation { .. })
        ));
    }

    #[test]
    fn gram_matches_norm() {
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let a = neumann_operator(&mesh).unwrap();
        let d = a.h_minus_one_gram();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let psi = random_field(17, &mut rng);
            let via_gram = psi.dot(&(&d * &psi));
            assert!((via_gram - a.negative_norm_sq(&psi, 1.0)).abs() < 1e-12);
        }
    }
}
