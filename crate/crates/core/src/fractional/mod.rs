//! Restricted and regional fractional Dirichlet forms on P1 elements.
//!
//! The regional form is assembled element pair by element pair: coinciding
//! cells have a closed form, touching cells use a Duffy split that leaves
//! smooth one-dimensional integrals, and separated cells use a tensor Gauss
//! rule. On a uniform mesh every pair type depends only on the cell offset,
//! so each local block is computed once.

pub mod check;

use nalgebra::{DMatrix, DVector};

use crate::eigen::{eigenpairs, Eigenbasis};
use crate::error::{Error, Result};
use crate::mesh::{assemble_mass_matrix, interior_block, interior_columns, Mesh, QuadratureRule};

/// Relative tolerance the assembled forms are certified to.
pub const ASSEMBLY_TOLERANCE: f64 = 1e-9;

/// Cells closer than this many cells to an endpoint get the closed-form
/// potential weights.
const NEAR_BOUNDARY_CELLS: usize = 4;

pub fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.25 && beta < 1.0) {
        return Err(Error::Parameter(format!(
            "beta must lie in (1/4, 1), got {beta}"
        )));
    }
    Ok(())
}

/// `C_{N,β} = β 2^{2β} Γ((N+2β)/2) / (π^{N/2} Γ(1−β))`
pub fn c_constant(n: u32, beta: f64) -> Result<f64> {
    if !(1..=3).contains(&n) {
        return Err(Error::Parameter(format!(
            "dimension must be 1, 2 or 3, got {n}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Parameter(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    let nf = n as f64;
    Ok(beta * 4f64.powf(beta) * libm::tgamma(0.5 * nf + beta)
        / (std::f64::consts::PI.powf(0.5 * nf) * libm::tgamma(1.0 - beta)))
}

/// `V_Ω(x)` for a point strictly inside `(a, b)`.
pub fn exterior_potential_at(a: f64, b: f64, beta: f64, x: f64) -> Result<f64> {
    if !(x > a && x < b) {
        return Err(Error::Parameter(format!(
            "exterior potential is singular at x = {x} outside the open interval ({a}, {b})"
        )));
    }
    let c = c_constant(1, beta)?;
    Ok(c / (2.0 * beta) * ((x - a).powf(-2.0 * beta) + (b - x).powf(-2.0 * beta)))
}

/// `V_Ω` at the interior nodes.
pub fn exterior_potential(mesh: &Mesh, beta: f64) -> Result<Vec<f64>> {
    mesh.interior_nodes()
        .iter()
        .map(|&x| exterior_potential_at(mesh.a, mesh.b, beta, x))
        .collect()
}

/// `∫_0^1 t^k (1+t)^{-1-2β} dt` for k = 0, 1, 2.
fn duffy_moments(beta: f64, rule: &QuadratureRule) -> [f64; 3] {
    let mut t = [0.0; 3];
    for (k, tk) in t.iter_mut().enumerate() {
        *tk = rule.integrate(0.0, 1.0, |s| {
            s.powi(k as i32) * (1.0 + s).powf(-1.0 - 2.0 * beta)
        });
    }
    t
}

/// Separated-pair block over local nodes `[e0, e1, f0, f1]` for cells
/// `[0, h]` and `[d h, (d+1) h]`, without the constant factor.
fn separated_block(h: f64, d: usize, beta: f64, quad: &QuadratureRule) -> [[f64; 4]; 4] {
    let mut blk = [[0.0; 4]; 4];
    let y0 = d as f64 * h;
    for (&tx, &wx) in quad.points.iter().zip(&quad.weights) {
        let x = tx * h;
        let dx = [1.0 - tx, tx];
        for (&ty, &wy) in quad.points.iter().zip(&quad.weights) {
            let y = y0 + ty * h;
            let kern = wx * wy * h * h * (y - x).powf(-1.0 - 2.0 * beta);
            let diff = [dx[0], dx[1], -(1.0 - ty), -ty];
            for i in 0..4 {
                for j in 0..4 {
                    blk[i][j] += diff[i] * diff[j] * kern;
                }
            }
        }
    }
    blk
}

fn max_abs_block(a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Regional form on every node (boundary hats included).
pub fn assemble_regional_form_full(
    mesh: &Mesh,
    beta: f64,
    quad: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    let c = c_constant(1, beta)?;
    let n = mesh.n_cells;
    let h = mesh.h;
    let g = 3.0 - 2.0 * beta;
    let mut s = DMatrix::zeros(n + 1, n + 1);

    // coinciding cells: difference quotients are constant, integrand |x-y|^{1-2β}
    let self_int = 2.0 * h.powf(g) / ((2.0 - 2.0 * beta) * g) / (h * h);
    let same = 0.5 * c * self_int;
    for e in 0..n {
        s[(e, e)] += same;
        s[(e + 1, e + 1)] += same;
        s[(e, e + 1)] -= same;
        s[(e + 1, e)] -= same;
    }
    let scale = same.abs();

    // touching cells sharing node x0: with ξ = x0 - x and ζ = y - x0 the
    // differences are linear in (ξ, ζ); Duffy reduces to moments T_k
    let rule = QuadratureRule::gauss_legendre(24);
    let tk = duffy_moments(beta, &rule);
    let tk_ref = duffy_moments(beta, &QuadratureRule::gauss_legendre(32));
    let t_err = (0..3)
        .map(|k| (tk[k] - tk_ref[k]).abs() / tk_ref[k])
        .fold(0.0, f64::max);
    if t_err > ASSEMBLY_TOLERANCE {
        return Err(Error::AssemblyTolerance {
            estimate: t_err,
            tolerance: ASSEMBLY_TOLERANCE,
            context: "touching-cell moments".into(),
        });
    }
    let kk = h.powf(g) / g;
    let i_aa = kk * (tk[0] + tk[2]);
    let i_ab = kk * 2.0 * tk[1];
    let pq = [(1.0 / h, 0.0), (-1.0 / h, 1.0 / h), (0.0, -1.0 / h)];
    let mut touch = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (pi, qi) = pq[i];
            let (pj, qj) = pq[j];
            // both orderings of the pair, times C/2
            touch[i][j] = c * (pi * pj * i_aa + (pi * qj + qi * pj) * i_ab + qi * qj * i_aa);
        }
    }
    for e in 0..n.saturating_sub(1) {
        for i in 0..3 {
            for j in 0..3 {
                s[(e + i, e + j)] += touch[i][j];
            }
        }
    }

    // separated cells
    if n >= 3 {
        let near = separated_block(h, 2, beta, quad);
        let finer = QuadratureRule::gauss_legendre(quad.len() + 4);
        let near_ref = separated_block(h, 2, beta, &finer);
        let est = max_abs_block(&near, &near_ref) / scale;
        if est > ASSEMBLY_TOLERANCE {
            return Err(Error::AssemblyTolerance {
                estimate: est,
                tolerance: ASSEMBLY_TOLERANCE,
                context: format!("separated cells with a {}-point rule", quad.len()),
            });
        }
        for d in 2..n {
            let blk = if d == 2 {
                near
            } else {
                separated_block(h, d, beta, quad)
            };
            for e in 0..n - d {
                let idx = [e, e + 1, e + d, e + d + 1];
                for i in 0..4 {
                    for j in 0..4 {
                        s[(idx[i], idx[j])] += c * blk[i][j];
                    }
                }
            }
        }
    }
    Ok(symmetrize(s))
}

/// Regional form on the interior nodes.
pub fn assemble_regional_form(
    mesh: &Mesh,
    beta: f64,
    quad: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    Ok(interior_block(
        mesh,
        &assemble_regional_form_full(mesh, beta, quad)?,
    ))
}

/// `∫_e^{e+1} t^{k-2β} dt` for k = 0, 1, 2, with the k = 0 entry left NaN when
/// it diverges.
fn power_moments(e: usize, beta: f64) -> [f64; 3] {
    let lo = e as f64;
    let hi = lo + 1.0;
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let p = k as f64 + 1.0 - 2.0 * beta;
        *o = if p.abs() < 1e-14 {
            if e == 0 {
                f64::NAN
            } else {
                (hi / lo).ln()
            }
        } else if e == 0 && p < 0.0 {
            f64::NAN
        } else {
            (hi.powf(p) - lo.powf(p)) / p
        };
    }
    out
}

/// `∫ dist^{-2β} φ_a φ_b` over the cell at index `e` counted from one end,
/// ordered (near node, far node), in units where h = 1.
fn one_sided_cell_weights(e: usize, beta: f64) -> [[f64; 2]; 2] {
    if e < NEAR_BOUNDARY_CELLS {
        let j = power_moments(e, beta);
        let ef = e as f64;
        let e1 = ef + 1.0;
        // near = e+1-t, far = t-e
        let nn = e1 * e1 * j[0] - 2.0 * e1 * j[1] + j[2];
        let nf = -e1 * ef * j[0] + (2.0 * ef + 1.0) * j[1] - j[2];
        let ff = ef * ef * j[0] - 2.0 * ef * j[1] + j[2];
        let (nn, nf) = if e == 0 {
            // φ_near vanishes at the far end only; the near-near entry
            // belongs to a boundary hat and may diverge
            (
                if 2.0 * beta < 1.0 {
                    j[0] - 2.0 * j[1] + j[2]
                } else {
                    f64::NAN
                },
                j[1] - j[2],
            )
        } else {
            (nn, nf)
        };
        let ff = if e == 0 { j[2] } else { ff };
        [[nn, nf], [nf, ff]]
    } else {
        let rule = QuadratureRule::gauss_legendre(16);
        let mut w = [[0.0; 2]; 2];
        let lo = e as f64;
        for (&t, &q) in rule.points.iter().zip(&rule.weights) {
            let x = lo + t;
            let v = q * x.powf(-2.0 * beta);
            let phi = [1.0 - t, t];
            for a in 0..2 {
                for b in 0..2 {
                    w[a][b] += v * phi[a] * phi[b];
                }
            }
        }
        w
    }
}

/// `∫ V_Ω φ_i φ_j` for every node pair with at least one interior node. The
/// boundary-boundary entries are left zero.
pub fn assemble_potential_weights_full(mesh: &Mesh, beta: f64) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    let c = c_constant(1, beta)?;
    let n = mesh.n_cells;
    let factor = c / (2.0 * beta) * mesh.h.powf(1.0 - 2.0 * beta);
    let mut v = DMatrix::zeros(n + 1, n + 1);
    for e in 0..n {
        let left = one_sided_cell_weights(e, beta);
        let right = one_sided_cell_weights(n - 1 - e, beta);
        // left: near = e, far = e+1; right: near = e+1, far = e
        let nodes = [e, e + 1];
        for a in 0..2 {
            for b in 0..2 {
                let (i, j) = (nodes[a], nodes[b]);
                if (i == 0 || i == n) && (j == 0 || j == n) {
                    continue;
                }
                let l = left[a][b];
                let r = right[1 - a][1 - b];
                v[(i, j)] += factor * (l + r);
            }
        }
    }
    Ok(symmetrize(v))
}

/// `∫ V_Ω φ_i φ_j` on the interior nodes.
pub fn assemble_potential_weights(mesh: &Mesh, beta: f64) -> Result<DMatrix<f64>> {
    Ok(interior_block(
        mesh,
        &assemble_potential_weights_full(mesh, beta)?,
    ))
}

/// Restricted form on the interior nodes: regional part plus potential weights.
pub fn assemble_restricted_form(
    mesh: &Mesh,
    beta: f64,
    quad: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    Ok(assemble_regional_form(mesh, beta, quad)? + assemble_potential_weights(mesh, beta)?)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Everything the dynamics need from the fractional operator.
#[derive(Debug, Clone)]
pub struct FractionalOperatorSet {
    pub beta: f64,
    pub c_const: f64,
    /// Interior-node restricted form.
    pub s_restricted: DMatrix<f64>,
    /// Interior-node regional form.
    pub s_regional: DMatrix<f64>,
    /// Interior-node `V_Ω`-weighted mass matrix.
    pub v_weights: DMatrix<f64>,
    /// Restricted form between every hat (rows) and the interior hats (columns).
    pub s_restricted_rows: DMatrix<f64>,
    /// Interior-node consistent mass matrix.
    pub mass: DMatrix<f64>,
    /// All-node consistent mass matrix.
    pub mass_full: DMatrix<f64>,
    /// Generalized eigenpairs of `(s_restricted, mass)`.
    pub eigen: Eigenbasis,
}

impl FractionalOperatorSet {
    pub fn assemble(mesh: &Mesh, beta: f64, quad: &QuadratureRule) -> Result<Self> {
        check_beta(beta)?;
        let c_const = c_constant(1, beta)?;
        let regional_full = assemble_regional_form_full(mesh, beta, quad)?;
        let v_full = assemble_potential_weights_full(mesh, beta)?;
        let s_regional = interior_block(mesh, &regional_full);
        let v_weights = interior_block(mesh, &v_full);
        let s_restricted = &s_regional + &v_weights;
        let s_restricted_rows = interior_columns(mesh, &(regional_full + v_full));
        let mass_full = assemble_mass_matrix(mesh);
        let mass = interior_block(mesh, &mass_full);
        let dim = mesh.interior_count();
        let eigen = eigenpairs(&s_restricted, &mass, dim)?;
        if eigen.values[0] <= 0.0 {
            return Err(Error::NumericalFailure(format!(
                "restricted form is not positive definite (λ₁ = {:e})",
                eigen.values[0]
            )));
        }
        Ok(Self {
            beta,
            c_const,
            s_restricted,
            s_regional,
            v_weights,
            s_restricted_rows,
            mass,
            mass_full,
            eigen,
        })
    }

    /// `|‖u‖|²` for an interior-node vector.
    pub fn energy_norm_sq(&self, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.s_restricted * u))
    }
}

/// Writes a matrix in `row col value` coordinate form, one nonzero per line.
pub fn write_coordinate<W: std::io::Write>(out: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "# {} {}", m.nrows(), m.ncols())?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(out, "{i} {j} {v:.16e}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Lanczos approximation, independent of the library Gamma.
    fn gamma(x: f64) -> f64 {
        const G: f64 = 7.0;
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            return PI / ((PI * x).sin() * gamma(1.0 - x));
        }
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }

    #[test]
    fn constant_at_one_half() {
        let c = c_constant(1, 0.5).unwrap();
        assert!((c - 1.0 / PI).abs() < 1e-14);
        for beta in [0.3, 0.5, 0.75] {
            for n in 1..=3u32 {
                let nf = n as f64;
                let oracle = beta * 4f64.powf(beta) * gamma(0.5 * nf + beta)
                    / (PI.powf(0.5 * nf) * gamma(1.0 - beta));
                let got = c_constant(n, beta).unwrap();
                assert!(got > 0.0);
                assert!((got - oracle).abs() < 1e-12 * oracle);
            }
        }
    }

    #[test]
    fn constant_vanishes_near_one() {
        let vals: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&b| c_constant(1, b).unwrap())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2] && vals[2] > 0.0);
        assert!(c_constant(1, 1.0).is_err());
        assert!(c_constant(1, 0.0).is_err());
        assert!(c_constant(4, 0.5).is_err());
    }

    #[test]
    fn potential_midpoint_and_symmetry() {
        let v = exterior_potential_at(0.0, 1.0, 0.5, 0.5).unwrap();
        assert!((v - 4.0 / PI).abs() < 1e-14);
        let mesh = build_interval_mesh(-1.0, 3.0, 16).unwrap();
        let vs = exterior_potential(&mesh, 0.7).unwrap();
        let m = vs.len();
        for i in 0..m {
            assert!((vs[i] - vs[m - 1 - i]).abs() <= 1e-13 * vs[i]);
        }
        assert!(vs[0] > vs[m / 2]);
        assert!(exterior_potential_at(0.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn regional_symmetric_and_semidefinite() {
        let mesh = build_interval_mesh(0.0, 1.0, 24).unwrap();
        let q = QuadratureRule::gauss_legendre(10);
        let s = assemble_regional_form_full(&mesh, 0.6, &q).unwrap();
        assert_eq!(s, s.transpose());
        // constants are in the kernel of the regional form
        let ones = DVector::from_element(25, 1.0);
        assert!((&s * &ones).amax() < 1e-10 * s.amax());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = DVector::from_fn(25, |_, _| rng.gen_range(-1.0..1.0));
            assert!(x.dot(&(&s * &x)) >= -1e-12 * s.amax());
        }
    }

    #[test]
    fn low_order_rule_is_rejected() {
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let q = QuadratureRule::gauss_legendre(2);
        assert!(matches!(
            assemble_regional_form(&mesh, 0.5, &q),
            Err(Error::AssemblyTolerance { .. })
        ));
    }

    #[test]
    fn beta_range_enforced() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let q = QuadratureRule::gauss_legendre(10);
        assert!(assemble_regional_form(&mesh, 0.2, &q).is_err());
        assert!(assemble_regional_form(&mesh, 1.0, &q).is_err());
    }

    #[test]
    fn restricted_exceeds_regional() {
        let mesh = build_interval_mesh(0.0, 1.0, 16).unwrap();
        let q = QuadratureRule::gauss_legendre(10);
        let set = FractionalOperatorSet::assemble(&mesh, 0.5, &q).unwrap();
        let mut hat = DVector::zeros(15);
        hat[7] = 1.0;
        assert!(set.energy_norm_sq(&hat) > hat.dot(&(&set.s_regional * &hat)));
        assert!(set.eigen.values[0] > 0.0);
        assert_eq!(set.s_restricted, set.s_restricted.transpose());
        let d = &set.s_restricted - &set.s_regional - &set.v_weights;
        assert!(d.amax() < 1e-12);
    }

    #[test]
    fn potential_weights_match_pointwise_quadrature() {
        // far from the boundary the weights are a smooth mass matrix
        let mesh = build_interval_mesh(0.0, 1.0, 32).unwrap();
        let v = assemble_potential_weights_full(&mesh, 0.4).unwrap();
        let i = 16;
        let x = mesh.nodes[i];
        let vx = exterior_potential_at(0.0, 1.0, 0.4, x).unwrap();
        let row: f64 = (0..33).map(|j| v[(i, j)]).sum();
        // row sum ≈ V(x_i) · h
        assert!((row - vx * mesh.h).abs() / (vx * mesh.h) < 1e-2);
    }
}
