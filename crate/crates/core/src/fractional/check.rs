//! Independent quadrature of the regional form and the potential weights.
//!
//! Everything here evaluates hat functions pointwise and integrates with
//! geometrically graded composite Gauss rules, so it shares no formulas with
//! the primary assembly beyond the kernel itself. It is slow and meant for
//! cross-checking only.

use nalgebra::DMatrix;

use super::{c_constant, check_beta};
use crate::error::Result;
use crate::mesh::{interior_block, Mesh, QuadratureRule};

const GRADING: f64 = 0.2;
const MIN_LEVELS: usize = 25;
const TAIL_DIGITS: f64 = 14.0;
const POINTS: usize = 16;
const SEPARATED_POINTS: usize = 12;

/// `φ_i(x) − φ_i(y)` for points given as offsets `ox`, `oy` from node
/// `anchor`, with `sep = ox − oy` supplied exactly. When both points sit on
/// the same linear piece of `φ_i` the difference is formed from `sep` so
/// that nearly coincident points do not cancel.
fn hat_difference(h: f64, i: usize, anchor: usize, ox: f64, oy: f64, sep: f64) -> f64 {
    let shift = (i as f64 - anchor as f64) * h;
    let ux = ox - shift;
    let uy = oy - shift;
    let inside = |u: f64| u.abs() < h;
    if inside(ux) && inside(uy) && (ux >= 0.0) == (uy >= 0.0) {
        let side = if ux >= 0.0 { 1.0 } else { -1.0 };
        -side * sep / h
    } else {
        (1.0 - ux.abs() / h).max(0.0) - (1.0 - uy.abs() / h).max(0.0)
    }
}

/// Geometric intervals `[σ^{k+1} L, σ^k L]` deep enough that a singular
/// factor `r^{2−2β}` has decayed below roundoff.
fn graded_levels(len: f64, beta: f64) -> Vec<(f64, f64)> {
    let levels = ((TAIL_DIGITS * std::f64::consts::LN_10) / ((2.0 - 2.0 * beta) * -GRADING.ln()))
        .ceil()
        .clamp(MIN_LEVELS as f64, 5000.0) as usize;
    let mut out = Vec::with_capacity(levels);
    let mut hi = len;
    for _ in 0..levels {
        let lo = hi * GRADING;
        out.push((lo, hi));
        hi = lo;
    }
    out
}

struct PairIntegrator {
    h: f64,
    beta: f64,
    nodes: Vec<usize>,
    acc: Vec<f64>,
}

impl PairIntegrator {
    fn new(mesh: &Mesh, beta: f64, e: usize, f: usize) -> Self {
        let mut nodes = vec![e, e + 1, f, f + 1];
        nodes.sort_unstable();
        nodes.dedup();
        let k = nodes.len();
        Self {
            h: mesh.h,
            beta,
            nodes,
            acc: vec![0.0; k * k],
        }
    }

    /// Adds the point pair `x = n_anchor + ox`, `y = n_anchor + oy`.
    fn add(&mut self, anchor: usize, ox: f64, oy: f64, sep: f64, w: f64) {
        let k = self.nodes.len();
        let kern = w * sep.abs().powf(-1.0 - 2.0 * self.beta);
        let mut d = [0.0; 4];
        for (slot, &i) in d.iter_mut().zip(&self.nodes) {
            *slot = hat_difference(self.h, i, anchor, ox, oy, sep);
        }
        for a in 0..k {
            for b in 0..k {
                self.acc[a * k + b] += d[a] * d[b] * kern;
            }
        }
    }

    fn scatter(&self, s: &mut DMatrix<f64>, factor: f64) {
        let k = self.nodes.len();
        for a in 0..k {
            for b in 0..k {
                s[(self.nodes[a], self.nodes[b])] += factor * self.acc[a * k + b];
            }
        }
    }
}

/// Regional form on all nodes by graded composite quadrature.
pub fn regional_form_check(mesh: &Mesh, beta: f64) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    let c = c_constant(1, beta)?;
    let n = mesh.n_cells;
    let h = mesh.h;
    let gl = QuadratureRule::gauss_legendre(POINTS);
    let gs = QuadratureRule::gauss_legendre(SEPARATED_POINTS);
    let mut s = DMatrix::zeros(n + 1, n + 1);

    for e in 0..n {
        let (lo, hi) = mesh.cell(e);
        // coinciding cell: x = y + r, graded in r toward the diagonal; the
        // two triangles x > y and x < y contribute equally
        let mut p = PairIntegrator::new(mesh, beta, e, e);
        for (rlo, rhi) in graded_levels(h, beta) {
            for (&tr, &wr) in gl.points.iter().zip(&gl.weights) {
                let r = rlo + (rhi - rlo) * tr;
                let ylen = h - r;
                for (&ty, &wy) in gl.points.iter().zip(&gl.weights) {
                    let oy = ylen * ty;
                    p.add(e, oy + r, oy, r, 2.0 * wr * (rhi - rlo) * wy * ylen);
                }
            }
        }
        p.scatter(&mut s, 0.5 * c);

        for f in e + 1..n {
            let mut p = PairIntegrator::new(mesh, beta, e, f);
            if f == e + 1 {
                // touching cells: ξ = x0 - x, ζ = y - x0 graded toward (0, 0)
                for (slo, shi) in graded_levels(h, beta) {
                    let boxes = [
                        ((slo, shi), (0.0, slo)),
                        ((0.0, slo), (slo, shi)),
                        ((slo, shi), (slo, shi)),
                    ];
                    for ((alo, ahi), (blo, bhi)) in boxes {
                        for (&ta, &wa) in gl.points.iter().zip(&gl.weights) {
                            let xi = alo + (ahi - alo) * ta;
                            for (&tb, &wb) in gl.points.iter().zip(&gl.weights) {
                                let zeta = blo + (bhi - blo) * tb;
                                let w = wa * (ahi - alo) * wb * (bhi - blo);
                                p.add(e + 1, -xi, zeta, -(xi + zeta), w);
                            }
                        }
                    }
                }
            } else {
                let (flo, fhi) = mesh.cell(f);
                let halves = |a: f64, b: f64| [(a, 0.5 * (a + b)), (0.5 * (a + b), b)];
                for (xa, xb) in halves(lo, hi) {
                    for (ya, yb) in halves(flo, fhi) {
                        for (&tx, &wx) in gs.points.iter().zip(&gs.weights) {
                            let x = xa + (xb - xa) * tx;
                            for (&ty, &wy) in gs.points.iter().zip(&gs.weights) {
                                let y = ya + (yb - ya) * ty;
                                let w = wx * (xb - xa) * wy * (yb - ya);
                                p.add(e, x - lo, y - lo, x - y, w);
                            }
                        }
                    }
                }
            }
            // both orderings of the pair, times C/2
            p.scatter(&mut s, c);
        }
    }
    Ok((&s + s.transpose()) * 0.5)
}

/// Interior-node potential weights by graded composite quadrature.
pub fn potential_weights_check(mesh: &Mesh, beta: f64) -> Result<DMatrix<f64>> {
    check_beta(beta)?;
    let n = mesh.n_cells;
    let h = mesh.h;
    let c = c_constant(1, beta)?;
    let gl = QuadratureRule::gauss_legendre(POINTS);
    let mut v = DMatrix::zeros(n + 1, n + 1);
    for e in 0..n {
        // pieces in the distance q from the nearer end of the cell: from the
        // left end unless this is the last cell
        let from_right = e == n - 1 && n > 1;
        let pieces: Vec<(f64, f64)> = if e == 0 || from_right {
            graded_levels(h, beta)
        } else {
            vec![(0.0, 0.5 * h), (0.5 * h, h)]
        };
        for (qa, qb) in pieces {
            for (&t, &w) in gl.points.iter().zip(&gl.weights) {
                let q = qa + (qb - qa) * t;
                // distances to both ends of Ω and the two local hat values
                let (dl, dr, phi_left, phi_right) = if from_right {
                    ((e + 1) as f64 * h - q, q, q / h, 1.0 - q / h)
                } else {
                    (e as f64 * h + q, (n - e) as f64 * h - q, 1.0 - q / h, q / h)
                };
                let vx = c / (2.0 * beta)
                    * (dl.powf(-2.0 * beta) + dr.powf(-2.0 * beta))
                    * w
                    * (qb - qa);
                let local = [(e, phi_left), (e + 1, phi_right)];
                for &(i, pi) in &local {
                    for &(j, pj) in &local {
                        if (i == 0 || i == n) && (j == 0 || j == n) {
                            continue;
                        }
                        v[(i, j)] += vx * pi * pj;
                    }
                }
            }
        }
    }
    Ok(interior_block(mesh, &v))
}

/// Max-abs entry of `S_restricted − S_regional_check − V_check`, relative to
/// the max-abs entry of `S_restricted`.
pub fn splitting_defect(mesh: &Mesh, beta: f64, s_restricted: &DMatrix<f64>) -> Result<f64> {
    let regional = interior_block(mesh, &regional_form_check(mesh, beta)?);
    let v = potential_weights_check(mesh, beta)?;
    let d = s_restricted - regional - v;
    Ok(d.amax() / s_restricted.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{assemble_potential_weights, assemble_regional_form_full};
    use crate::mesh::build_interval_mesh;

    #[test]
    fn routes_agree_on_small_mesh() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let q = QuadratureRule::gauss_legendre(10);
        for beta in [0.3, 0.5, 0.8] {
            let a = assemble_regional_form_full(&mesh, beta, &q).unwrap();
            let b = regional_form_check(&mesh, beta).unwrap();
            let e = (&a - &b).amax() / a.amax();
            assert!(e < 1e-8, "beta {beta}: {e:e}");
            let va = assemble_potential_weights(&mesh, beta).unwrap();
            let vb = potential_weights_check(&mesh, beta).unwrap();
            let e = (&va - &vb).amax() / va.amax();
            assert!(e < 1e-8, "beta {beta}: {e:e}");
        }
    }
}
