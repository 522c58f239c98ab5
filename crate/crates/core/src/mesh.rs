//! Uniform interval meshes, Gauss rules and the standard P1 matrices.
//!
//! Node `0` and node `n_cells` are the two boundary nodes. Fields that vanish
//! outside the interval (the order parameter) live on the interior nodes
//! `1..n_cells`; fields carrying a Neumann condition use every node.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub nodes: Vec<f64>,
    pub h: f64,
}

pub fn build_interval_mesh(a: f64, b: f64, n_cells: usize) -> Result<Mesh> {
    Mesh::new(a, b, n_cells)
}

impl Mesh {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || b <= a {
            return Err(Error::InvalidDomain(format!(
                "interval ({a}, {b}) must have positive length"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidDomain(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        let h = (b - a) / n_cells as f64;
        let mut nodes: Vec<f64> = (0..=n_cells).map(|i| a + i as f64 * h).collect();
        nodes[n_cells] = b;
        Ok(Self {
            a,
            b,
            n_cells,
            nodes,
            h,
        })
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        self.b - self.a
    }

    pub fn node_count(&self) -> usize {
        self.n_cells + 1
    }

    pub fn interior_count(&self) -> usize {
        self.n_cells - 1
    }

    pub fn cell(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    pub fn interior_nodes(&self) -> &[f64] {
        &self.nodes[1..self.n_cells]
    }

    /// Prolongs an interior-node vector by zeros at the two boundary nodes.
    pub fn extend_by_zero(&self, interior: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.node_count());
        full.rows_mut(1, self.interior_count()).copy_from(interior);
        full
    }

    pub fn restrict_to_interior(&self, full: &DVector<f64>) -> DVector<f64> {
        full.rows(1, self.interior_count()).into_owned()
    }

    /// Nodal trapezoid weights (row sums of the P1 mass matrix).
    pub fn lumped_weights(&self) -> DVector<f64> {
        let mut w = DVector::from_element(self.node_count(), self.h);
        w[0] = 0.5 * self.h;
        w[self.n_cells] = 0.5 * self.h;
        w
    }
}

/// Gauss–Legendre rule mapped to the reference cell [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Highest polynomial degree integrated exactly.
    pub order: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_legendre(n_points: usize) -> Self {
        assert!(n_points >= 1, "a quadrature rule needs at least one point");
        let n = n_points;
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n from the Chebyshev-like initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1, 1] to [0, 1]
            points[i] = 0.5 * (1.0 - x);
            points[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self {
            order: 2 * n - 1,
            points,
            weights,
        }
    }

    /// Smallest Gauss rule exact up to `order`.
    pub fn with_order(order: usize) -> Self {
        Self::gauss_legendre(order / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ∫_lo^hi f
    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut f: F) -> f64 {
        let len = hi - lo;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(lo + len * t))
            .sum::<f64>()
            * len
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Consistent P1 mass matrix on all nodes.
pub fn assemble_mass_matrix(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.node_count();
    let h = mesh.h;
    let mut m = DMatrix::zeros(n, n);
    for e in 0..mesh.n_cells {
        m[(e, e)] += h / 3.0;
        m[(e + 1, e + 1)] += h / 3.0;
        m[(e, e + 1)] += h / 6.0;
        m[(e + 1, e)] += h / 6.0;
    }
    m
}

/// P1 stiffness of -d²/dx² with natural (Neumann) boundary conditions.
pub fn assemble_stiffness_matrix(mesh: &Mesh) -> DMatrix<f64> {
    let n = mesh.node_count();
    let k = 1.0 / mesh.h;
    let mut s = DMatrix::zeros(n, n);
    for e in 0..mesh.n_cells {
        s[(e, e)] += k;
        s[(e + 1, e + 1)] += k;
        s[(e, e + 1)] -= k;
        s[(e + 1, e)] -= k;
    }
    s
}

/// Interior-node block of a full-node matrix.
pub fn interior_block(mesh: &Mesh, full: &DMatrix<f64>) -> DMatrix<f64> {
    let m = mesh.interior_count();
    full.view((1, 1), (m, m)).into_owned()
}

/// Columns of a full-node matrix belonging to interior nodes.
pub fn interior_columns(mesh: &Mesh, full: &DMatrix<f64>) -> DMatrix<f64> {
    let m = mesh.interior_count();
    full.view((0, 1), (full.nrows(), m)).into_owned()
}
