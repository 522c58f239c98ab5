//! Dense generalized symmetric eigenproblems `S v = λ M v`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Ascending eigenpairs with `M`-orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct Eigenbasis {
    pub count: usize,
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigenbasis {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }

    pub fn rayleigh_quotient(s: &DMatrix<f64>, m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(s * v)) / v.dot(&(m * v))
    }
}

/// The first `k` generalized eigenpairs of the pencil `(s, m)`.
pub fn eigenpairs(s: &DMatrix<f64>, m: &DMatrix<f64>, k: usize) -> Result<Eigenbasis> {
    let n = s.nrows();
    if s.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::Parameter(format!(
            "pencil shapes differ: S is {}x{}, M is {}x{}",
            s.nrows(),
            s.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "requested {k} eigenpairs from a problem of dimension {n}"
        )));
    }
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::NumericalFailure("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} S L^{-T}
    let mut c = s.clone();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(Error::NumericalFailure("singular Cholesky factor".into()));
    }
    let mut c = c.transpose();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(Error::NumericalFailure("singular Cholesky factor".into()));
    }
    let c = (&c + c.transpose()) * 0.5;

    let eig = SymmetricEigen::<f64, Dyn>::try_new(c, EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::NumericalFailure(format!(
            "symmetric eigensolver did not converge within {EIGEN_MAX_ITER} iterations (dimension {n})"
        ))
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let order = &order[..k];

    let mut y = DMatrix::zeros(n, k);
    for (col, &idx) in order.iter().enumerate() {
        y.set_column(col, &eig.eigenvectors.column(idx));
    }
    // v = L^{-T} y
    let lt = l.transpose();
    if !lt.solve_upper_triangular_mut(&mut y) {
        return Err(Error::NumericalFailure("singular Cholesky factor".into()));
    }
    for mut col in y.column_iter_mut() {
        // fix the sign so the largest-magnitude entry is positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(Eigenbasis {
        count: k,
        values,
        vectors: y,
    })
}
