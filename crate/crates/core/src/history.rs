//! The past-history variable `η^t(s)` in two representations.
//!
//! [`HistoryGrid`] stores `η` at the nodes of an [`SGrid`] and advances it by
//! exact characteristics: a step of length `dt` shifts by whole cells and adds
//! `min(s, dt)·g`. [`HistoryMoments`] stores the exponential moments
//! `m_i = ∫ λ_i e^{−λ_i s} η(s) ds`, which evolve by `m_i' = −λ_i m_i + g`,
//! together with the per-term squared norms `∫ λ_i e^{−λ_i s} |η(s)|² ds`.
//!
//! Field values are plain coefficient vectors. The grid and moment norms are
//! Euclidean in those coefficients; callers working in nodal coordinates pass
//! a metric explicitly.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::memory::{build_s_grid, KernelSpec, PronySet, SGrid};
use crate::neumann::NeumannOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// `ν(s)`, the memory-space norm.
    Nu,
    /// `−ν'(s)`, the dissipation rate of the transport semigroup.
    MinusNuPrime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryGrid {
    pub sgrid: SGrid,
    /// Row `q` holds `η(s_q)`.
    pub values: DMatrix<f64>,
}

impl HistoryGrid {
    pub fn zeros(sgrid: SGrid, dim: usize) -> Self {
        let values = DMatrix::zeros(sgrid.n_s + 1, dim);
        Self { sgrid, values }
    }

    /// `η(s) = s·g`, the history of a stationary chemical potential.
    pub fn linear(sgrid: SGrid, g: &DVector<f64>) -> Self {
        let mut h = Self::zeros(sgrid, g.len());
        for j in 0..g.len() {
            for (q, &s) in h.sgrid.nodes.iter().enumerate() {
                h.values[(q, j)] = s * g[j];
            }
        }
        h
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn at(&self, q: usize) -> DVector<f64> {
        self.values.row(q).transpose()
    }

    /// Source-free transport by `k` cells: `η(s) ← η(s − k ds)`, zero below.
    pub fn shift(&mut self, k: usize) {
        let rows = self.values.nrows();
        let k = k.min(rows);
        for mut col in self.values.column_iter_mut() {
            let col = col.as_mut_slice();
            col.copy_within(0..rows - k, k);
            col[..k].fill(0.0);
        }
    }

    /// Adds `min(s, dt)·g`.
    pub fn add_step_source(&mut self, g: &DVector<f64>, dt: f64) {
        let nodes = &self.sgrid.nodes;
        for (j, mut col) in self.values.column_iter_mut().enumerate() {
            let gj = g[j];
            if gj == 0.0 {
                continue;
            }
            for (v, &s) in col.as_mut_slice().iter_mut().zip(nodes) {
                *v += s.min(dt) * gj;
            }
        }
    }

    /// Exact characteristics of `∂_t η + ∂_s η = g` with `η(0) = 0` and `g`
    /// frozen over the step.
    pub fn transport_step(&mut self, g: &DVector<f64>, dt: f64) -> Result<()> {
        let k = self.sgrid.cells_per_step(dt)?;
        self.shift(k);
        self.add_step_source(g, dt);
        Ok(())
    }

    /// `∫ ν(s) η(s) ds`
    pub fn memory_integral(&self) -> DVector<f64> {
        let w = DVector::from_column_slice(&self.sgrid.weights);
        self.values.tr_mul(&w)
    }

    fn gram(&self, weight: Weight) -> (&[f64], &[f64]) {
        match weight {
            Weight::Nu => (&self.sgrid.gram_diag, &self.sgrid.gram_off),
            Weight::MinusNuPrime => (&self.sgrid.gram_prime_diag, &self.sgrid.gram_prime_off),
        }
    }

    /// `∫ w(s) |η(s)|² ds` with the Euclidean coefficient norm.
    pub fn norm_sq(&self, weight: Weight) -> f64 {
        let (d, o) = self.gram(weight);
        self.values
            .column_iter()
            .map(|c| tridiagonal_form(d, o, c.as_slice(), c.as_slice()))
            .sum()
    }

    /// Squared norm of `self − other`.
    pub fn diff_norm_sq(&self, other: &Self, weight: Weight) -> f64 {
        let diff = &self.values - &other.values;
        let (d, o) = self.gram(weight);
        diff.column_iter()
            .map(|c| tridiagonal_form(d, o, c.as_slice(), c.as_slice()))
            .sum()
    }

    /// `∫ w(s) η(s)ᵀ G η(s) ds` for a symmetric metric `G`.
    pub fn norm_sq_with_metric(&self, weight: Weight, metric: &DMatrix<f64>) -> f64 {
        let g_eta = &self.values * metric;
        let (d, o) = self.gram(weight);
        let mut acc = 0.0;
        for j in 0..self.dim() {
            acc += tridiagonal_form(
                d,
                o,
                self.values.column(j).as_slice(),
                g_eta.column(j).as_slice(),
            );
        }
        acc
    }

    /// `max_q |ℓ(η(s_q))|` for a linear functional `ℓ`.
    pub fn max_functional(&self, functional: &DVector<f64>) -> f64 {
        (&self.values * functional).amax()
    }

    pub fn write_checkpoint(&self, path: &Path, kernel: &KernelSpec) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# frachem history checkpoint v1")?;
        writeln!(out, "n_s {}", self.sgrid.n_s)?;
        writeln!(out, "s_max {:.16e}", self.sgrid.s_max)?;
        writeln!(out, "n_nodes {}", self.dim())?;
        match kernel {
            KernelSpec::ExponentialSum { terms } => {
                write!(out, "kernel exponential_sum")?;
                for (c, l) in terms {
                    write!(out, " {c:.16e} {l:.16e}")?;
                }
                writeln!(out)?;
            }
            KernelSpec::Tabulated { .. } => writeln!(out, "kernel tabulated")?,
        }
        for q in 0..self.values.nrows() {
            let row: Vec<String> = self
                .values
                .row(q)
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_checkpoint(path: &Path, kernel: &KernelSpec) -> Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut n_s = None;
        let mut s_max = None;
        let mut dim = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let bad = |m: &str| Error::Parse(format!("{}: {m}", path.display()));
        for line in file.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let head = it.next().unwrap();
            match head {
                "n_s" => n_s = it.next().and_then(|v| v.parse::<usize>().ok()),
                "s_max" => s_max = it.next().and_then(|v| v.parse::<f64>().ok()),
                "n_nodes" => dim = it.next().and_then(|v| v.parse::<usize>().ok()),
                "kernel" => {
                    let kind = it.next().unwrap_or("");
                    let vals: Vec<f64> = it.filter_map(|v| v.parse().ok()).collect();
                    let matches = match kernel {
                        KernelSpec::ExponentialSum { terms } => {
                            kind == "exponential_sum"
                                && vals.len() == 2 * terms.len()
                                && terms.iter().enumerate().all(|(i, &(c, l))| {
                                    (vals[2 * i] - c).abs() <= 1e-15 * c.abs()
                                        && (vals[2 * i + 1] - l).abs() <= 1e-15 * l.abs()
                                })
                        }
                        KernelSpec::Tabulated { .. } => kind == "tabulated",
                    };
                    if !matches {
                        return Err(Error::Config(format!(
                            "{}: checkpoint kernel does not match the configured kernel",
                            path.display()
                        )));
                    }
                }
                _ => {
                    let row: std::result::Result<Vec<f64>, _> =
                        line.split_whitespace().map(str::parse).collect();
                    rows.push(row.map_err(|e| bad(&format!("bad value: {e}")))?);
                }
            }
        }
        let (n_s, s_max, dim) = match (n_s, s_max, dim) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad("missing header field")),
        };
        if rows.len() != n_s + 1 || rows.iter().any(|r| r.len() != dim) {
            return Err(bad("value block does not match the header"));
        }
        let sgrid = build_s_grid(kernel, s_max, n_s)?;
        let values = DMatrix::from_fn(n_s + 1, dim, |q, j| rows[q][j]);
        Ok(Self { sgrid, values })
    }
}

/// `aᵀ T b` for the symmetric tridiagonal `T` with diagonal `d`, off-diagonal `o`.
fn tridiagonal_form(d: &[f64], o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for q in 0..d.len() {
        acc += d[q] * a[q] * b[q];
    }
    for q in 0..o.len() {
        acc += o[q] * (a[q] * b[q + 1] + a[q + 1] * b[q]);
    }
    acc
}

/// Functional form of [`HistoryGrid::transport_step`].
pub fn transport_step(mut h: HistoryGrid, g: &DVector<f64>, dt: f64) -> Result<HistoryGrid> {
    h.transport_step(g, dt)?;
    Ok(h)
}

/// Chemical potential over the past, `y ↦ μ_0(·, −y)` on every node.
pub struct PastChemicalPotential<'a> {
    pub horizon: f64,
    pub field: Box<dyn Fn(f64) -> DVector<f64> + 'a>,
}

/// `η_0(s) = ∫_0^s −Δμ_0(−y) dy` by cumulative trapezoid on the grid nodes.
pub fn init_history_from_past(
    past: &PastChemicalPotential,
    sgrid: SGrid,
    a_n: &NeumannOperator,
) -> Result<HistoryGrid> {
    if past.horizon + 1e-12 * sgrid.s_max < sgrid.s_max {
        return Err(Error::Truncation {
            tail: sgrid.s_max - past.horizon,
            tolerance: 0.0,
            suggested_s_max: past.horizon,
        });
    }
    let dim = a_n.dim();
    let mut h = HistoryGrid::zeros(sgrid, dim);
    let mut prev = a_n.apply(&(past.field)(0.0));
    let mut acc = DVector::zeros(dim);
    for q in 1..h.values.nrows() {
        let s0 = h.sgrid.nodes[q - 1];
        let s1 = h.sgrid.nodes[q];
        let next = a_n.apply(&(past.field)(s1));
        acc += (&prev + &next) * (0.5 * (s1 - s0));
        h.values.set_row(q, &acc.transpose());
        prev = next;
    }
    Ok(h)
}

/// `(∫ w(s) ‖η(s)‖²_{H^{-1}} ds)^{1/2}` for nodal histories.
pub fn history_norm(h: &HistoryGrid, a_n: &NeumannOperator, weight: Weight) -> Result<f64> {
    for q in 0..h.values.nrows() {
        a_n.require_mean_zero(&h.at(q))?;
    }
    let d = a_n.h_minus_one_gram();
    Ok(h.norm_sq_with_metric(weight, &d).max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryMoments {
    pub prony: PronySet,
    /// Row `i` holds `m_i`.
    pub moments: DMatrix<f64>,
    /// `∫ λ_i e^{−λ_i s} |η(s)|² ds` per term.
    pub term_norms: Vec<f64>,
}

impl HistoryMoments {
    pub fn zeros(prony: PronySet, dim: usize) -> Self {
        let n = prony.terms.len();
        Self {
            prony,
            moments: DMatrix::zeros(n, dim),
            term_norms: vec![0.0; n],
        }
    }

    /// Moments of `η(s) = s·g`.
    pub fn linear(prony: PronySet, g: &DVector<f64>) -> Self {
        let mut h = Self::zeros(prony, g.len());
        let g2 = g.norm_squared();
        for (i, &(_, l)) in h.prony.terms.iter().enumerate() {
            h.moments.set_row(i, &(g / l).transpose());
            h.term_norms[i] = 2.0 * g2 / (l * l);
        }
        h
    }

    pub fn dim(&self) -> usize {
        self.moments.ncols()
    }

    /// Source-free part of a step: `m_i ← e^{−λ_i dt} m_i`, norms likewise.
    pub fn decay(&mut self, dt: f64) {
        for (i, &(_, l)) in self.prony.terms.iter().enumerate() {
            let e = (-l * dt).exp();
            self.moments.row_mut(i).scale_mut(e);
            self.term_norms[i] *= e;
        }
    }

    /// Source part of a step, applied after [`decay`](Self::decay).
    pub fn add_step_source(&mut self, g: &DVector<f64>, dt: f64) {
        let g2 = g.norm_squared();
        for (i, &(_, l)) in self.prony.terms.iter().enumerate() {
            let e = (-l * dt).exp();
            let one_minus = -(-l * dt).exp_m1();
            let cross = self.moments.row(i).transpose().dot(g);
            let quad = 2.0 / l * (one_minus / l - dt * e);
            self.term_norms[i] += 2.0 * dt * cross + quad * g2;
            let mut row = self.moments.row_mut(i);
            row += g.transpose() * (one_minus / l);
        }
    }

    /// Exact integration of `m_i' = −λ_i m_i + g` with `g` frozen.
    pub fn moment_step(&mut self, g: &DVector<f64>, dt: f64) {
        self.decay(dt);
        self.add_step_source(g, dt);
    }

    /// `Σ c_i m_i`
    pub fn memory_integral(&self) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim());
        for (i, &(c, _)) in self.prony.terms.iter().enumerate() {
            w.axpy(c, &self.moments.row(i).transpose(), 1.0);
        }
        w
    }

    pub fn norm_sq(&self, weight: Weight) -> f64 {
        self.prony
            .terms
            .iter()
            .zip(&self.term_norms)
            .map(|(&(c, l), &n)| match weight {
                Weight::Nu => c * n,
                Weight::MinusNuPrime => c * l * n,
            })
            .sum()
    }

    pub fn max_functional(&self, functional: &DVector<f64>) -> f64 {
        (&self.moments * functional).amax()
    }
}

/// Functional form of [`HistoryMoments::moment_step`].
pub fn moment_step(mut h: HistoryMoments, g: &DVector<f64>, dt: f64) -> HistoryMoments {
    h.moment_step(g, dt);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::prony_reduce;
    use crate::mesh::build_interval_mesh;
    use crate::neumann::neumann_operator;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(s_max: f64, n_s: usize) -> SGrid {
        build_s_grid(&KernelSpec::exponential(1.0).unwrap(), s_max, n_s).unwrap()
    }

    #[test]
    fn zero_source_is_pure_shift() {
        let mut h = HistoryGrid::linear(grid(40.0, 400), &DVector::from_vec(vec![1.0, -2.0]));
        let before = h.values.clone();
        h.transport_step(&DVector::zeros(2), 0.3).unwrap();
        for q in 0..3 {
            assert_eq!(h.values.row(q).amax(), 0.0);
        }
        for q in 3..=400 {
            assert_eq!(h.values.row(q), before.row(q - 3));
        }
    }

    #[test]
    fn constant_source_gives_min_profile() {
        let g = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let mut h = HistoryGrid::zeros(grid(40.0, 400), 3);
        let dt = 0.2;
        for n in 1..=25 {
            h.transport_step(&g, dt).unwrap();
            let t = n as f64 * dt;
            for (q, &s) in h.sgrid.nodes.iter().enumerate() {
                for j in 0..3 {
                    assert!((h.values[(q, j)] - s.min(t) * g[j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn semigroup_with_frozen_source() {
        let g = DVector::from_vec(vec![1.0, 0.25]);
        let mut a = HistoryGrid::linear(grid(40.0, 400), &DVector::from_vec(vec![0.3, -0.7]));
        let mut b = a.clone();
        a.transport_step(&g, 0.2).unwrap();
        // two half steps with the same source
        b.transport_step(&g, 0.1).unwrap();
        b.transport_step(&g, 0.1).unwrap();
        assert!((&a.values - &b.values).amax() < 1e-14);
    }

    #[test]
    fn misaligned_step_rejected() {
        let mut h = HistoryGrid::zeros(grid(40.0, 400), 1);
        assert!(matches!(
            h.transport_step(&DVector::zeros(1), 0.15),
            Err(Error::Alignment { .. })
        ));
    }

    #[test]
    fn memory_integral_of_linear_history() {
        let lam = 2.5;
        let k = KernelSpec::exponential(lam).unwrap();
        let g = DVector::from_vec(vec![1.0, -3.0]);
        let h = HistoryGrid::linear(build_s_grid(&k, 40.0 / lam, 800).unwrap(), &g);
        let w = h.memory_integral();
        assert!((&w - &g / lam).amax() < 1e-12);
        let m = HistoryMoments::linear(prony_reduce(&k).unwrap(), &g);
        assert!((m.memory_integral() - &g / lam).amax() < 1e-15);
        assert_eq!(
            HistoryGrid::zeros(h.sgrid.clone(), 2)
                .memory_integral()
                .amax(),
            0.0
        );
    }

    #[test]
    fn moment_step_closed_form() {
        let k = KernelSpec::exponential(1.0).unwrap();
        let mut m = HistoryMoments::zeros(prony_reduce(&k).unwrap(), 1);
        let g = DVector::from_element(1, 1.0);
        let dt = 0.01;
        for n in 1..=300 {
            m.moment_step(&g, dt);
            let t = n as f64 * dt;
            assert!((m.moments[(0, 0)] - (1.0 - (-t).exp())).abs() < 1e-13);
        }
        let mut m =
            HistoryMoments::linear(prony_reduce(&k).unwrap(), &DVector::from_element(1, 2.0));
        let m0 = m.moments[(0, 0)];
        m.moment_step(&DVector::zeros(1), 0.7);
        assert!((m.moments[(0, 0)] - m0 * (-0.7f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn grid_and_moments_agree() {
        let k = KernelSpec::exponential(1.0).unwrap();
        let dt = 0.05;
        let mut grid_h = HistoryGrid::zeros(build_s_grid(&k, 40.0, 800).unwrap(), 3);
        let mut mom_h = HistoryMoments::zeros(prony_reduce(&k).unwrap(), 3);
        for n in 0..100 {
            let t = n as f64 * dt;
            let g = DVector::from_vec(vec![t.sin(), (2.0 * t).cos(), 1.0 - t]);
            grid_h.transport_step(&g, dt).unwrap();
            mom_h.moment_step(&g, dt);
            let wg = grid_h.memory_integral();
            let wm = mom_h.memory_integral();
            assert!((&wg - &wm).amax() <= 1e-9 * (1.0 + wm.amax()));
            for weight in [Weight::Nu, Weight::MinusNuPrime] {
                let a = grid_h.norm_sq(weight);
                let b = mom_h.norm_sq(weight);
                assert!((a - b).abs() <= 1e-9 * b.max(1e-300));
            }
        }
    }

    #[test]
    fn exponential_dissipation_weight() {
        let lam = 3.0;
        let k = KernelSpec::exponential(lam).unwrap();
        let mut h = HistoryGrid::zeros(build_s_grid(&k, 40.0 / lam, 600).unwrap(), 2);
        for n in 0..50 {
            let g = DVector::from_vec(vec![(n as f64).cos(), 0.5]);
            h.transport_step(&g, h.sgrid.ds).unwrap();
        }
        let a = h.norm_sq(Weight::MinusNuPrime);
        let b = lam * h.norm_sq(Weight::Nu);
        assert!((a - b).abs() <= 1e-12 * b);
    }

    #[test]
    fn source_free_norm_decreases() {
        let k = KernelSpec::exponential(1.0).unwrap();
        let mut h = HistoryGrid::linear(
            build_s_grid(&k, 40.0, 400).unwrap(),
            &DVector::from_vec(vec![1.0, 2.0]),
        );
        let mut prev = h.norm_sq(Weight::Nu);
        for _ in 0..20 {
            h.transport_step(&DVector::zeros(2), 0.1).unwrap();
            let now = h.norm_sq(Weight::Nu);
            assert!(now <= prev);
            prev = now;
        }
    }

    #[test]
    fn cosine_history_norm() {
        let mesh = build_interval_mesh(0.0, 1.0, 128).unwrap();
        let a_n = neumann_operator(&mesh).unwrap();
        let mu = DVector::from_iterator(129, mesh.nodes.iter().map(|x| (PI * x).cos()));
        let g = a_n.apply(&mu);
        let k = KernelSpec::exponential(1.0).unwrap();
        let h = HistoryGrid::linear(build_s_grid(&k, 40.0, 400).unwrap(), &g);
        let n = history_norm(&h, &a_n, Weight::Nu).unwrap();
        assert!((n * n - PI * PI).abs() / (PI * PI) < 1e-3);
        let mut h2 = h.clone();
        h2.values *= 2.0;
        let n2 = history_norm(&h2, &a_n, Weight::Nu).unwrap();
        assert!((n2 - 2.0 * n).abs() < 1e-12 * n);
        let zero = HistoryGrid::zeros(h.sgrid.clone(), 129);
        assert_eq!(history_norm(&zero, &a_n, Weight::Nu).unwrap(), 0.0);
    }

    #[test]
    fn history_norm_rejects_mean() {
        let mesh = build_interval_mesh(0.0, 1.0, 8).unwrap();
        let a_n = neumann_operator(&mesh).unwrap();
        let k = KernelSpec::exponential(1.0).unwrap();
        let h = HistoryGrid::linear(
            build_s_grid(&k, 40.0, 64).unwrap(),
            &DVector::from_element(9, 1.0),
        );
        assert!(matches!(
            history_norm(&h, &a_n, Weight::Nu),
            Err(Error::MeanZeroViolation { .. })
        ));
    }

    #[test]
    fn history_from_past() {
        let mesh = build_interval_mesh(0.0, 1.0, 32).unwrap();
        let a_n = neumann_operator(&mesh).unwrap();
        let k = KernelSpec::exponential(1.0).unwrap();
        let sg = build_s_grid(&k, 40.0, 200).unwrap();
        let nodes = mesh.nodes.clone();

        let zero = PastChemicalPotential {
            horizon: 40.0,
            field: Box::new(|_| DVector::zeros(33)),
        };
        assert_eq!(
            init_history_from_past(&zero, sg.clone(), &a_n)
                .unwrap()
                .values
                .amax(),
            0.0
        );

        let constant = PastChemicalPotential {
            horizon: 40.0,
            field: Box::new(|y| DVector::from_element(33, 1.0 + y)),
        };
        assert!(
            init_history_from_past(&constant, sg.clone(), &a_n)
                .unwrap()
                .values
                .amax()
                < 1e-10
        );

        let mu: DVector<f64> = DVector::from_iterator(33, nodes.iter().map(|x| (PI * x).cos()));
        let g = a_n.apply(&mu);
        let mu_c = mu.clone();
        let steady = PastChemicalPotential {
            horizon: 50.0,
            field: Box::new(move |_| mu_c.clone()),
        };
        let h = init_history_from_past(&steady, sg.clone(), &a_n).unwrap();
        let lin = HistoryGrid::linear(sg.clone(), &g);
        assert!((&h.values - &lin.values).amax() < 1e-10 * g.amax() * 40.0);
        for q in 0..h.values.nrows() {
            assert!(a_n.mean(&h.at(q)).abs() < 1e-10 * (1.0 + a_n.l2_norm(&h.at(q))));
        }

        let short = PastChemicalPotential {
            horizon: 10.0,
            field: Box::new(|_| DVector::zeros(33)),
        };
        assert!(matches!(
            init_history_from_past(&short, sg, &a_n),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let k = KernelSpec::exponential(1.0).unwrap();
        let mut h = HistoryGrid::zeros(build_s_grid(&k, 40.0, 64).unwrap(), 3);
        h.transport_step(&DVector::from_vec(vec![1.0 / 3.0, -2.0, 1e-17]), 1.25)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.txt");
        h.write_checkpoint(&p, &k).unwrap();
        let back = HistoryGrid::read_checkpoint(&p, &k).unwrap();
        assert_eq!(back, h);
        let other = KernelSpec::exponential(2.0).unwrap();
        assert!(HistoryGrid::read_checkpoint(&p, &other).is_err());
    }

    proptest! {
        #[test]
        fn origin_stays_zero(vals in proptest::collection::vec(-5.0f64..5.0, 3), k in 1usize..6) {
            let sg = grid(40.0, 400);
            let dt = k as f64 * sg.ds;
            let mut h = HistoryGrid::zeros(sg, 3);
            let g = DVector::from_vec(vals);
            for _ in 0..5 {
                h.transport_step(&g, dt).unwrap();
                prop_assert_eq!(h.values.row(0).amax(), 0.0);
            }
        }

        #[test]
        fn functional_annihilation_preserved(a in -3.0f64..3.0, b in -3.0f64..3.0, steps in 1usize..20) {
            // sources orthogonal to a functional keep every slice orthogonal
            let ell = DVector::from_vec(vec![1.0, 1.0, 2.0]);
            let g = DVector::from_vec(vec![a, b, -(a + b) / 2.0]);
            let mut h = HistoryGrid::zeros(grid(40.0, 400), 3);
            let mut m = HistoryMoments::zeros(prony_reduce(&KernelSpec::exponential(1.0).unwrap()).unwrap(), 3);
            for _ in 0..steps {
                h.transport_step(&g, 0.1).unwrap();
                m.moment_step(&g, 0.1);
            }
            prop_assert!(h.max_functional(&ell) < 1e-12);
            prop_assert!(m.max_functional(&ell) < 1e-12);
        }
    }
}
