//! Relaxation kernels `ν = −k'`, their assumption checks, the `s`-grid used
//! by the transport representation and the exponential-sum reduction used by
//! the moment representation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::QuadratureRule;

/// Tail mass allowed beyond the end of an `s`-grid.
pub const TRUNCATION_TOLERANCE: f64 = 1e-10;
const NORMALIZATION_TOLERANCE: f64 = 1e-12;
const TABLE_NORMALIZATION_TOLERANCE: f64 = 1e-6;
/// Decay rates below this fraction of `ν_0` are indistinguishable from zero
/// on a sampled kernel.
const K5_MIN_RATE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// `ν(s) = Σ c_i λ_i e^{−λ_i s}` stored as `(c_i, λ_i)`.
    ExponentialSum { terms: Vec<(f64, f64)> },
    /// Piecewise-linear interpolation of `(s, ν(s))`, zero beyond the table.
    Tabulated { s: Vec<f64>, nu: Vec<f64> },
}

impl KernelSpec {
    /// `ν(s) = λ e^{−λ s}`
    pub fn exponential(lambda: f64) -> Result<Self> {
        Self::exponential_sum(vec![(1.0, lambda)])
    }

    /// The relaxation family `k_ε(s) = ε⁻¹ e^{−s/ε}`, i.e. `ν = ε⁻² e^{−s/ε}`.
    ///
    /// `∫ k_ε = 1` and the mean delay `∫ s k_ε / ∫ k_ε = ε`, so `k_ε` tends to
    /// a point mass at `s = 0`. Its `k_0 = ∫ ν = 1/ε`; this is the one
    /// constructor that waives the unit normalization of `k_0`.
    pub fn relaxation(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::Parameter(format!(
                "relaxation time must be positive, got {eps}"
            )));
        }
        Ok(Self::ExponentialSum {
            terms: vec![(1.0 / eps, 1.0 / eps)],
        })
    }

    pub fn exponential_sum(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Parameter(
                "exponential sum needs at least one term".into(),
            ));
        }
        for &(c, l) in &terms {
            if !(c > 0.0 && l > 0.0 && c.is_finite() && l.is_finite()) {
                return Err(Error::Parameter(format!(
                    "kernel terms need c > 0 and λ > 0, got ({c}, {l})"
                )));
            }
        }
        let k0: f64 = terms.iter().map(|t| t.0).sum();
        if (k0 - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Parameter(format!(
                "kernel weights must sum to 1 (k_0 = 1), got {k0}"
            )));
        }
        Ok(Self::ExponentialSum { terms })
    }

    pub fn tabulated(s: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        if s.len() != nu.len() || s.len() < 2 {
            return Err(Error::Parameter(
                "kernel table needs at least two (s, ν) rows".into(),
            ));
        }
        if s[0] != 0.0 {
            return Err(Error::Parameter("kernel table must start at s = 0".into()));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(
                "kernel table s-values must increase".into(),
            ));
        }
        if s.iter().chain(&nu).any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "kernel table has non-finite entries".into(),
            ));
        }
        Ok(Self::Tabulated { s, nu })
    }

    /// Samples a closure on `[0, s_end]` into a table.
    pub fn tabulate<F: Fn(f64) -> f64>(f: F, s_end: f64, n: usize) -> Result<Self> {
        let s: Vec<f64> = (0..=n).map(|i| s_end * i as f64 / n as f64).collect();
        let nu = s.iter().map(|&x| f(x)).collect();
        Self::tabulated(s, nu)
    }

    /// Two whitespace-separated columns `s ν(s)`; `#` starts a comment.
    pub fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read kernel table {}: {e}", path.display()))
        })?;
        let mut s = Vec::new();
        let mut nu = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::Parse(format!(
                    "{}:{}: expected two columns",
                    path.display(),
                    ln + 1
                )));
            }
            let parse = |t: &str| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 1)))
            };
            s.push(parse(cols[0])?);
            nu.push(parse(cols[1])?);
        }
        Self::tabulated(s, nu)
    }

    pub fn nu(&self, s: f64) -> f64 {
        match self {
            Self::ExponentialSum { terms } => {
                terms.iter().map(|&(c, l)| c * l * (-l * s).exp()).sum()
            }
            Self::Tabulated { s: xs, nu } => {
                if s < 0.0 || s > *xs.last().unwrap() {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= s).clamp(1, xs.len() - 1);
                let t = (s - xs[i - 1]) / (xs[i] - xs[i - 1]);
                nu[i - 1] * (1.0 - t) + nu[i] * t
            }
        }
    }

    /// `ν'(s)`; for tables the slope of the interpolant.
    pub fn nu_prime(&self, s: f64) -> f64 {
        match self {
            Self::ExponentialSum { terms } => terms
                .iter()
                .map(|&(c, l)| -c * l * l * (-l * s).exp())
                .sum(),
            Self::Tabulated { s: xs, nu } => {
                if s < 0.0 || s >= *xs.last().unwrap() {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= s).clamp(1, xs.len() - 1);
                (nu[i] - nu[i - 1]) / (xs[i] - xs[i - 1])
            }
        }
    }

    /// `k_0 = ∫ ν`
    pub fn k0(&self) -> f64 {
        match self {
            Self::ExponentialSum { terms } => terms.iter().map(|t| t.0).sum(),
            Self::Tabulated { s, nu } => s
                .windows(2)
                .zip(nu.windows(2))
                .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
                .sum(),
        }
    }

    /// `ν_0 = ν(0⁺)`
    pub fn nu0(&self) -> f64 {
        self.nu(0.0)
    }

    /// `∫_L^∞ ν`
    pub fn tail_mass(&self, l: f64) -> f64 {
        match self {
            Self::ExponentialSum { terms } => {
                terms.iter().map(|&(c, lam)| c * (-lam * l).exp()).sum()
            }
            Self::Tabulated { s, .. } => {
                let end = *s.last().unwrap();
                if l >= end {
                    return 0.0;
                }
                let rule = QuadratureRule::gauss_legendre(4);
                let mut acc = 0.0;
                let mut lo = l;
                for &x in s.iter().filter(|&&x| x > l) {
                    acc += rule.integrate(lo, x, |t| self.nu(t));
                    lo = x;
                }
                acc
            }
        }
    }

    /// Smallest decay rate, used to size default `s`-grids.
    pub fn min_rate(&self) -> Option<f64> {
        match self {
            Self::ExponentialSum { terms } => terms.iter().map(|t| t.1).reduce(f64::min),
            Self::Tabulated { .. } => None,
        }
    }

    /// Natural end of the memory window: `40 / λ_min`, or the table end.
    pub fn default_s_max(&self) -> f64 {
        match self {
            Self::ExponentialSum { .. } => 40.0 / self.min_rate().unwrap(),
            Self::Tabulated { s, .. } => *s.last().unwrap(),
        }
    }

    fn breakpoints(&self) -> Option<&[f64]> {
        match self {
            Self::Tabulated { s, .. } => Some(s),
            Self::ExponentialSum { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub passed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub k1: KernelCheck,
    pub k2: KernelCheck,
    pub k3: KernelCheck,
    pub k4: KernelCheck,
    pub k5: KernelCheck,
    pub k0: f64,
    pub nu0: f64,
    /// Largest λ found with `ν' + λν ≤ 0` on the samples.
    pub lambda_k5: Option<f64>,
}

/// Sampled check of the kernel assumptions on `[0, s_max]`.
///
/// For tables `ν'` is taken from finite differences on the sample grid,
/// second-order one-sided at `s = 0`.
pub fn validate_kernel(spec: &KernelSpec, s_max: f64, samples: usize) -> Result<KernelReport> {
    if samples < 100 || !(s_max > 0.0) {
        return Err(Error::Parameter(
            "need s_max > 0 and at least 100 samples".into(),
        ));
    }
    let ds = s_max / (samples - 1) as f64;
    let ss: Vec<f64> = (0..samples).map(|i| i as f64 * ds).collect();
    let nu: Vec<f64> = ss.iter().map(|&s| spec.nu(s)).collect();
    let dnu: Vec<f64> = match spec {
        KernelSpec::ExponentialSum { .. } => ss.iter().map(|&s| spec.nu_prime(s)).collect(),
        KernelSpec::Tabulated { .. } => (0..samples)
            .map(|i| {
                if i == 0 {
                    (-3.0 * nu[0] + 4.0 * nu[1] - nu[2]) / (2.0 * ds)
                } else if i + 1 == samples {
                    (3.0 * nu[i] - 4.0 * nu[i - 1] + nu[i - 2]) / (2.0 * ds)
                } else {
                    (nu[i + 1] - nu[i - 1]) / (2.0 * ds)
                }
            })
            .collect(),
    };
    let nu0 = spec.nu0();
    let scale = nu0.abs().max(nu.iter().cloned().fold(0.0, f64::max));
    let tol = 1e-12 * scale;

    let min_nu = nu.iter().cloned().fold(f64::INFINITY, f64::min);
    let k1 = KernelCheck {
        passed: min_nu >= -tol,
        note: format!("min ν = {min_nu:.3e}"),
    };
    let max_dnu = dnu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k2 = KernelCheck {
        passed: max_dnu <= tol,
        note: format!("max ν' = {max_dnu:.3e}"),
    };
    let k0 = spec.k0();
    let k3_tol = match spec {
        KernelSpec::ExponentialSum { .. } => NORMALIZATION_TOLERANCE,
        KernelSpec::Tabulated { .. } => TABLE_NORMALIZATION_TOLERANCE,
    };
    let k3 = KernelCheck {
        passed: (k0 - 1.0).abs() <= k3_tol,
        note: format!("k_0 = {k0:.12}"),
    };
    let k4 = KernelCheck {
        passed: nu0.is_finite(),
        note: format!("ν_0 = {nu0:.6e}"),
    };
    // largest λ with ν' + λ ν ≤ 0 wherever ν > 0
    let mut lam = f64::INFINITY;
    let mut violated = false;
    for (&v, &d) in nu.iter().zip(&dnu) {
        if v > tol {
            lam = lam.min(-d / v);
        } else if d > tol {
            violated = true;
        }
    }
    let lambda_k5 = if violated || !(lam > K5_MIN_RATE_FRACTION * nu0) {
        None
    } else {
        Some(lam)
    };
    let k5 = KernelCheck {
        passed: lambda_k5.is_some(),
        note: match lambda_k5 {
            Some(l) => format!("holds with λ = {l:.6e}"),
            None => format!("fails: best λ = {:.3e}", lam.max(0.0)),
        },
    };
    Ok(KernelReport {
        k1,
        k2,
        k3,
        k4,
        k5,
        k0,
        nu0,
        lambda_k5,
    })
}

/// Exponential-sum terms for the moment representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PronySet {
    pub terms: Vec<(f64, f64)>,
}

impl PronySet {
    /// `∫ ν(s) min(s, dt) ds`
    pub fn step_weight(&self, dt: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, l)| c * (-(-l * dt).exp_m1()) / l)
            .sum()
    }
}

pub fn prony_reduce(spec: &KernelSpec) -> Result<PronySet> {
    match spec {
        KernelSpec::ExponentialSum { terms } => Ok(PronySet {
            terms: terms.clone(),
        }),
        KernelSpec::Tabulated { .. } => Err(Error::UnsupportedReduction(
            "tabulated kernels have no exact exponential-sum reduction".into(),
        )),
    }
}

/// Uniform grid on `[0, s_max]` with product-integration weights against `ν`.
///
/// With hat functions `ℓ_q` in `s`, `weights[q] = ∫ ν ℓ_q` so that
/// `Σ_q weights[q] f(s_q) = ∫ ν f` exactly for piecewise-linear `f`. The two
/// tridiagonal Gram matrices give exact `ν`- and `(−ν')`-weighted norms of
/// piecewise-linear histories.
#[derive(Debug, Clone, PartialEq)]
pub struct SGrid {
    pub s_max: f64,
    pub n_s: usize,
    pub ds: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `∫ ν ℓ_q ℓ_q` and `∫ ν ℓ_q ℓ_{q+1}`.
    pub gram_diag: Vec<f64>,
    pub gram_off: Vec<f64>,
    /// Same with `−ν'` in place of `ν`.
    pub gram_prime_diag: Vec<f64>,
    pub gram_prime_off: Vec<f64>,
    pub tail: f64,
}

pub fn build_s_grid(spec: &KernelSpec, s_max: f64, n_s: usize) -> Result<SGrid> {
    if !(s_max > 0.0) || n_s < 8 {
        return Err(Error::Parameter(format!(
            "s-grid needs s_max > 0 and n_s ≥ 8, got s_max = {s_max}, n_s = {n_s}"
        )));
    }
    let tail = spec.tail_mass(s_max);
    if tail > TRUNCATION_TOLERANCE {
        let suggested = match spec.min_rate() {
            Some(l) => {
                let total: f64 = match spec {
                    KernelSpec::ExponentialSum { terms } => terms.iter().map(|t| t.0).sum(),
                    _ => 1.0,
                };
                (total / TRUNCATION_TOLERANCE).ln() / l
            }
            None => spec.default_s_max(),
        };
        return Err(Error::Truncation {
            tail,
            tolerance: TRUNCATION_TOLERANCE,
            suggested_s_max: (suggested * 100.0).ceil() / 100.0,
        });
    }
    let ds = s_max / n_s as f64;
    let nodes: Vec<f64> = (0..=n_s)
        .map(|q| if q == n_s { s_max } else { q as f64 * ds })
        .collect();
    let rule = QuadratureRule::gauss_legendre(8);
    let mut weights = vec![0.0; n_s + 1];
    let mut gram_diag = vec![0.0; n_s + 1];
    let mut gram_off = vec![0.0; n_s];
    let mut gram_prime_diag = vec![0.0; n_s + 1];
    let mut gram_prime_off = vec![0.0; n_s];
    for cell in 0..n_s {
        let (lo, hi) = (nodes[cell], nodes[cell + 1]);
        let mut pieces = vec![lo];
        if let Some(bp) = spec.breakpoints() {
            pieces.extend(bp.iter().cloned().filter(|&x| x > lo && x < hi));
        }
        pieces.push(hi);
        for pair in pieces.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for (&t, &w) in rule.points.iter().zip(&rule.weights) {
                let s = a + (b - a) * t;
                let wq = w * (b - a);
                let v = spec.nu(s) * wq;
                let vp = -spec.nu_prime(s) * wq;
                let r = (s - lo) / (hi - lo);
                let l0 = 1.0 - r;
                let l1 = r;
                weights[cell] += v * l0;
                weights[cell + 1] += v * l1;
                gram_diag[cell] += v * l0 * l0;
                gram_diag[cell + 1] += v * l1 * l1;
                gram_off[cell] += v * l0 * l1;
                gram_prime_diag[cell] += vp * l0 * l0;
                gram_prime_diag[cell + 1] += vp * l1 * l1;
                gram_prime_off[cell] += vp * l0 * l1;
            }
        }
    }
    Ok(SGrid {
        s_max,
        n_s,
        ds,
        nodes,
        weights,
        gram_diag,
        gram_off,
        gram_prime_diag,
        gram_prime_off,
        tail,
    })
}

impl SGrid {
    /// Number of cells a step of length `dt` spans.
    pub fn cells_per_step(&self, dt: f64) -> Result<usize> {
        let k = (dt / self.ds).round();
        if k < 1.0 || (k * self.ds - dt).abs() > 1e-9 * dt {
            return Err(Error::Alignment { dt, ds: self.ds });
        }
        Ok(k as usize)
    }

    /// `Σ weights · f(nodes)`
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| w * f(s))
            .sum()
    }

    /// `∫ ν min(s, dt)` on the grid.
    pub fn step_weight(&self, dt: f64) -> f64 {
        self.integrate(|s| s.min(dt))
    }
}
