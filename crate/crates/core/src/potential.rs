//! Nonlinear potentials `F`, their convex splitting and sampled checks of the
//! growth assumptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be evaluated as `(F, F', F'')`.
pub trait Potential {
    fn eval(&self, r: f64) -> (f64, f64, f64);

    fn f(&self, r: f64) -> f64 {
        self.eval(r).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    DoubleWell,
    Polynomial,
}

/// Polynomial potential `F(r) = Σ_k coefficients[k] r^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub coefficients: Vec<f64>,
    /// Concavity bound: `F'' ≥ −c_F`.
    pub c_f: f64,
    /// Growth exponent of the `|F'|^p ≲ |F| + 1` bound.
    pub p: f64,
    /// Growth exponent of the `|F''| ≲ 1 + |r|^{ρ−2}` bound.
    pub rho: f64,
}

pub const DEFAULT_SAMPLE_RANGE: (f64, f64) = (-5.0, 5.0);
pub const DEFAULT_SAMPLES: usize = 10_000;

impl PotentialSpec {
    /// `F(r) = (r² − 1)²`
    pub fn double_well() -> Self {
        Self {
            kind: PotentialKind::DoubleWell,
            coefficients: vec![1.0, 0.0, -2.0, 0.0, 1.0],
            c_f: 4.0,
            p: 4.0 / 3.0,
            rho: 4.0,
        }
    }

    /// A general polynomial. The leading coefficient must be a positive even
    /// power so that `F` is bounded below. `c_F` is fitted on the default
    /// sample range.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        let coefficients = trim(coefficients);
        let deg = coefficients.len().saturating_sub(1);
        if deg < 2 || deg % 2 == 1 || coefficients[deg] <= 0.0 {
            return Err(Error::Parameter(
                "polynomial potential needs an even degree ≥ 2 with positive leading coefficient"
                    .into(),
            ));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite potential coefficient".into()));
        }
        let mut spec = Self {
            kind: PotentialKind::Polynomial,
            coefficients,
            c_f: 0.0,
            p: 0.0,
            rho: 0.0,
        };
        let d = deg as f64;
        // |F'|^p ~ r^{p(d-1)} ≤ r^d
        spec.p = (d / (d - 1.0)).min(2.0);
        spec.rho = d.max(2.0);
        let (lo, hi) = DEFAULT_SAMPLE_RANGE;
        spec.c_f = fit_c_f(&spec, lo, hi, DEFAULT_SAMPLES);
        Ok(spec)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// `p / (p − 1)`, the coercivity exponent.
    pub fn coercivity_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    c
}

impl Potential for PotentialSpec {
    fn eval(&self, r: f64) -> (f64, f64, f64) {
        if self.kind == PotentialKind::DoubleWell {
            let r2 = r * r;
            return (
                (r2 - 1.0) * (r2 - 1.0),
                4.0 * r * (r2 - 1.0),
                12.0 * r2 - 4.0,
            );
        }
        // Horner for the value and both derivatives
        let mut f = 0.0;
        let mut fp = 0.0;
        let mut fpp = 0.0;
        for &c in self.coefficients.iter().rev() {
            fpp = fpp * r + 2.0 * fp;
            fp = fp * r + f;
            f = f * r + c;
        }
        (f, fp, fpp)
    }
}

/// `(F, F', F'')` at a finite `r`.
pub fn potential_eval(spec: &PotentialSpec, r: f64) -> Result<(f64, f64, f64)> {
    if !r.is_finite() {
        return Err(Error::InvalidDomain(format!(
            "potential evaluated at non-finite r = {r}"
        )));
    }
    Ok(spec.eval(r))
}

/// `(G', c_F r)` for `F = G − (c_F/2) r²`.
pub fn convex_split(spec: &PotentialSpec, r: f64) -> (f64, f64) {
    let fp = spec.eval(r).1;
    let linear = spec.c_f * r;
    (fp + linear, linear)
}

fn samples(r_min: f64, r_max: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (r_max - r_min) / (n - 1) as f64;
    (0..n).map(move |i| {
        if i + 1 == n {
            r_max
        } else {
            r_min + i as f64 * step
        }
    })
}

/// `max(0, −min F'')` by grid search refined with a ternary search around the
/// best sample.
fn fit_c_f<P: Potential + ?Sized>(pot: &P, r_min: f64, r_max: f64, n: usize) -> f64 {
    let step = (r_max - r_min) / (n - 1) as f64;
    let (best, _) = samples(r_min, r_max, n).map(|r| (r, pot.eval(r).2)).fold(
        (r_min, f64::INFINITY),
        |acc, x| if x.1 < acc.1 { x } else { acc },
    );
    let mut lo = (best - step).max(r_min);
    let mut hi = (best + step).min(r_max);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if pot.eval(m1).2 <= pot.eval(m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let refined = pot.eval(0.5 * (lo + hi)).2.min(pot.eval(best).2);
    (-refined).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub passed: bool,
    pub constant: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub n1: AssumptionCheck,
    pub n2: AssumptionCheck,
    pub n3: AssumptionCheck,
    pub n4: AssumptionCheck,
    pub c_f: f64,
    pub c_f_n2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `sup |F'| / (|F| + 1)` over the samples.
    pub c_prime: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.n1.passed && self.n2.passed && self.n3.passed && self.n4.passed
    }
}

/// Least-squares slope of `ln y` against `ln |r|` on `|r| ∈ [lo, hi]`.
fn loglog_slope(pts: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let sel: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(r, y)| r.abs() >= lo && r.abs() <= hi && *y > 0.0)
        .map(|(r, y)| (r.abs().ln(), y.ln()))
        .collect();
    if sel.len() < 2 {
        return 0.0;
    }
    let n = sel.len() as f64;
    let mx = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = sel.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = sel.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Sampled check of the four growth assumptions with exponents `p` and `rho`
/// and declared concavity bound `c_f`.
pub fn verify_assumptions_with<P: Potential + ?Sized>(
    pot: &P,
    c_f: f64,
    p: f64,
    rho: f64,
    r_min: f64,
    r_max: f64,
    n_samples: usize,
) -> Result<AssumptionReport> {
    if !(r_min < r_max) || n_samples < 100 {
        return Err(Error::Parameter(
            "need r_min < r_max and at least 100 samples".into(),
        ));
    }
    if !(p > 1.0 && p <= 2.0) || rho < 2.0 {
        return Err(Error::Parameter(format!(
            "need p in (1, 2] and rho ≥ 2, got p = {p}, rho = {rho}"
        )));
    }
    let pts: Vec<(f64, f64, f64, f64)> = samples(r_min, r_max, n_samples)
        .map(|r| {
            let (f, fp, fpp) = pot.eval(r);
            (r, f, fp, fpp)
        })
        .collect();
    let reach = r_min.abs().max(r_max.abs());
    let outer = |r: f64| r.abs() >= 0.5 * reach;

    let fitted_c_f = fit_c_f(pot, r_min, r_max, n_samples);
    let n1 = AssumptionCheck {
        passed: fitted_c_f <= c_f + 1e-12,
        constant: fitted_c_f,
        note: format!("min F'' = {:.6e}", -fitted_c_f),
    };

    let ratio: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(r, f, fp, _)| (r, fp.abs().powf(p) / (f.abs() + 1.0)))
        .collect();
    let c_f_n2 = ratio.iter().map(|x| x.1).fold(0.0, f64::max);
    let growth = loglog_slope(&ratio, 0.5 * reach, reach);
    let n2 = AssumptionCheck {
        passed: c_f_n2.is_finite() && growth <= 0.1,
        constant: c_f_n2,
        note: format!("log-log growth of |F'|^p/(|F|+1) on the outer half: {growth:.3}"),
    };

    let q = p / (p - 1.0);
    let c1 = 0.5
        * pts
            .iter()
            .filter(|x| outer(x.0) && x.0 != 0.0)
            .map(|&(r, f, _, _)| f / r.abs().powf(q))
            .fold(f64::INFINITY, f64::min);
    let c1 = if c1.is_finite() { c1 } else { 0.0 };
    let c2 = pts
        .iter()
        .map(|&(r, f, _, _)| c1 * r.abs().powf(q) - f)
        .fold(0.0, f64::max);
    let n3 = AssumptionCheck {
        passed: c1 > 0.0,
        constant: c1,
        note: format!("F ≥ {c1:.4e} |r|^{q:.3} − {c2:.4e}"),
    };

    let fpp_abs: Vec<(f64, f64)> = pts.iter().map(|&(r, _, _, fpp)| (r, fpp.abs())).collect();
    let c3 = fpp_abs
        .iter()
        .map(|&(r, y)| y / (1.0 + r.abs().powf(rho - 2.0)))
        .fold(0.0, f64::max);
    let s1 = loglog_slope(&fpp_abs, 0.25 * reach, 0.5 * reach);
    let s2 = loglog_slope(&fpp_abs, 0.5 * reach, reach);
    let superpolynomial = s2 > s1 + 0.5;
    let n4 = AssumptionCheck {
        passed: c3.is_finite() && !superpolynomial && s2 <= rho - 2.0 + 0.25,
        constant: c3,
        note: format!("log-log slopes of |F''|: {s1:.3} then {s2:.3}"),
    };

    let c_prime = pts
        .iter()
        .map(|&(_, f, fp, _)| fp.abs() / (f.abs() + 1.0))
        .fold(0.0, f64::max);

    Ok(AssumptionReport {
        n1,
        n2,
        n3,
        n4,
        c_f: fitted_c_f,
        c_f_n2,
        c1,
        c2,
        c3,
        c_prime,
        r_min,
        r_max,
    })
}

pub fn verify_assumptions(
    spec: &PotentialSpec,
    r_min: f64,
    r_max: f64,
    samples: usize,
) -> Result<AssumptionReport> {
    verify_assumptions_with(spec, spec.c_f, spec.p, spec.rho, r_min, r_max, samples)
}

/// `C_shift = 2 C2 |Ω| + 1` with `C2` fitted on the default range.
pub fn default_energy_shift(spec: &PotentialSpec, measure: f64) -> Result<f64> {
    let (lo, hi) = DEFAULT_SAMPLE_RANGE;
    let rep = verify_assumptions(spec, lo, hi, DEFAULT_SAMPLES)?;
    Ok(2.0 * rep.c2 * measure + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Gaussian;
    impl Potential for Gaussian {
        fn eval(&self, r: f64) -> (f64, f64, f64) {
            let e = (r * r).exp();
            (e, 2.0 * r * e, (2.0 + 4.0 * r * r) * e)
        }
    }

    #[test]
    fn double_well_values() {
        let s = PotentialSpec::double_well();
        assert_eq!(potential_eval(&s, 1.0).unwrap(), (0.0, 0.0, 8.0));
        assert_eq!(potential_eval(&s, 0.0).unwrap(), (1.0, 0.0, -4.0));
        assert!(potential_eval(&s, f64::NAN).is_err());
        assert!(potential_eval(&s, f64::INFINITY).is_err());
    }

    #[test]
    fn double_well_concavity_bound_is_tight() {
        let s = PotentialSpec::double_well();
        let fitted = fit_c_f(&s, -5.0, 5.0, 10_001);
        assert!((fitted - 4.0).abs() < 1e-12);
    }

    #[test]
    fn polynomial_matches_double_well() {
        let p = PotentialSpec::polynomial(vec![1.0, 0.0, -2.0, 0.0, 1.0]).unwrap();
        let d = PotentialSpec::double_well();
        for r in [-3.0, -0.4, 0.0, 0.7, 2.5] {
            let a = p.eval(r);
            let b = d.eval(r);
            assert!(
                (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12 && (a.2 - b.2).abs() < 1e-12
            );
        }
        assert!((p.c_f - 4.0).abs() < 1e-9);
        assert!((p.p - 4.0 / 3.0).abs() < 1e-15);
        assert!(PotentialSpec::polynomial(vec![0.0, 1.0, 0.0, 1.0]).is_err());
        assert!(PotentialSpec::polynomial(vec![0.0, 0.0, -1.0]).is_err());
    }

    #[test]
    fn split_at_zero_and_monotone() {
        let s = PotentialSpec::double_well();
        assert_eq!(convex_split(&s, 0.0).0, 0.0);
        assert!(convex_split(&s, 0.5).0 <= convex_split(&s, 0.6).0);
    }

    #[test]
    fn double_well_passes_all() {
        let s = PotentialSpec::double_well();
        let rep = verify_assumptions(&s, -5.0, 5.0, 10_000).unwrap();
        assert!(rep.all_passed(), "{rep:?}");
        assert!((rep.c_f - 4.0).abs() < 1e-6);
        assert!(rep.c1 > 0.0 && rep.c2 >= 0.0);
        assert!(rep.c_prime.is_finite());
    }

    #[test]
    fn too_large_p_fails_n2() {
        let s = PotentialSpec::double_well();
        let rep = verify_assumptions_with(&s, 4.0, 2.0, 4.0, -5.0, 5.0, 10_000).unwrap();
        assert!(!rep.n2.passed);
    }

    #[test]
    fn exponential_growth_fails_n4() {
        for rho in [2.0, 4.0, 8.0, 20.0] {
            let rep =
                verify_assumptions_with(&Gaussian, 0.0, 1.5, rho, -10.0, 10.0, 10_000).unwrap();
            assert!(!rep.n4.passed, "rho = {rho}");
        }
    }

    #[test]
    fn energy_shift_positive() {
        let s = PotentialSpec::double_well();
        let c = default_energy_shift(&s, 1.0).unwrap();
        assert!(c > 1.0);
    }

    proptest! {
        #[test]
        fn split_reconstructs_derivative(r in -50.0f64..50.0) {
            let s = PotentialSpec::double_well();
            let (gp, lin) = convex_split(&s, r);
            let fp = s.eval(r).1;
            prop_assert!((gp - lin - fp).abs() <= 1e-12 * (1.0 + fp.abs()));
        }

        #[test]
        fn split_is_convex(r in -20.0f64..20.0) {
            let s = PotentialSpec::double_well();
            prop_assert!(s.eval(r).2 + s.c_f >= 0.0);
        }
    }
}
