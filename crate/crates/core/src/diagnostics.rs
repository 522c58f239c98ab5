//! Energy, the energy identity, continuous dependence, dissipativity and
//! ω-limit checks, all evaluated from recorded trajectories or states.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::history::Weight;
use crate::potential::{verify_assumptions, DEFAULT_SAMPLES, DEFAULT_SAMPLE_RANGE};
use crate::solver::{Discretization, History, RunOptions, SimState, SteadyState, TrajectoryRecord};

/// `E = fractional_norm_sq + potential_term + history_norm_sq + shift`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    /// `uᵀ S u`
    pub fractional_norm_sq: f64,
    /// `2 ∫ F(u)`
    pub potential_term: f64,
    /// `∫ ν ‖η‖²_{H⁻¹}`
    pub history_norm_sq: f64,
    pub shift: f64,
}

pub fn energy(disc: &Discretization, state: &SimState) -> EnergyReport {
    let fractional_norm_sq = state.coords.dot(&(&disc.s_q * &state.coords));
    let potential_term = 2.0 * disc.potential_integral(&state.u);
    let history_norm_sq = state.history.norm_sq(Weight::Nu);
    let shift = disc.energy_shift;
    EnergyReport {
        energy: fractional_norm_sq + potential_term + history_norm_sq + shift,
        fractional_norm_sq,
        potential_term,
        history_norm_sq,
        shift,
    }
}

/// `r(t) = E(t) + ∫₀ᵗ (2α‖∂_t u‖² + ∫(−ν')‖η‖²) − E(0)` from the recorded
/// trapezoid integral.
pub fn energy_identity_residual(traj: &TrajectoryRecord) -> Vec<f64> {
    let e0 = traj.energy.first().copied().unwrap_or(0.0);
    traj.energy
        .iter()
        .zip(&traj.dissipation_integral)
        .map(|(e, d)| e + d - e0)
        .collect()
}

/// `max |r(t)|` over `t ≤ t_max`.
pub fn max_identity_residual(traj: &TrajectoryRecord, t_max: f64) -> f64 {
    energy_identity_residual(traj)
        .iter()
        .zip(&traj.times)
        .filter(|(_, &t)| t <= t_max + 1e-12)
        .map(|(r, _)| r.abs())
        .fold(0.0, f64::max)
}

/// Observed convergence orders `log₂(e_k / e_{k+1})` of errors under
/// successive halving.
pub fn empirical_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Lumped `‖v‖_{L^q}^q` for interior nodal `v`.
fn lumped_lq(disc: &Discretization, v: &DVector<f64>, q: f64) -> f64 {
    v.iter().map(|x| disc.mesh.h * x.abs().powf(q)).sum()
}

/// Slack of `uᵀSu + 2 C₁ ‖u‖_q^q + ‖η‖² ≤ E + 2 C₂ |Ω|`, with `C₁`, `C₂`
/// fitted from the potential's growth report. Non-negative when it holds.
pub fn lower_bound_slack(disc: &Discretization, state: &SimState) -> Result<f64> {
    let (lo, hi) = DEFAULT_SAMPLE_RANGE;
    let rep = verify_assumptions(&disc.potential, lo, hi, DEFAULT_SAMPLES)?;
    let e = energy(disc, state);
    let q = disc.potential.coercivity_exponent();
    let lhs =
        e.fractional_norm_sq + 2.0 * rep.c1 * lumped_lq(disc, &state.u, q) + e.history_norm_sq;
    Ok(e.energy + 2.0 * rep.c2 * disc.mesh.measure() - lhs)
}

/// Two runs advanced in lockstep with the exact difference of their histories.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub times: Vec<f64>,
    /// `‖φ₁ − φ₂‖² = (u₁−u₂)ᵀ S (u₁−u₂) + ∫ ν ‖η₁ − η₂‖²`
    pub diff_norm_sq: Vec<f64>,
    /// `‖u₁ − u₂‖²_{L²}`
    pub u_diff_sq: Vec<f64>,
    /// `‖∇(μ₁ − μ₂)‖²_{L²}`
    pub grad_mu_diff_sq: Vec<f64>,
}

fn pair_sample(
    disc: &Discretization,
    a: &SimState,
    b: &SimState,
    diff: &History,
    rec: &mut PairRecord,
) {
    let dc = &a.coords - &b.coords;
    let du = &a.u - &b.u;
    let dmu = &a.mu - &b.mu;
    rec.times.push(a.t);
    rec.diff_norm_sq
        .push(dc.dot(&(&disc.s_q * &dc)) + diff.norm_sq(Weight::Nu));
    rec.u_diff_sq.push(du.dot(&(&disc.ops.mass * &du)));
    rec.grad_mu_diff_sq.push(disc.neumann.grad_norm_sq(&dmu));
}

/// Runs both states to `cfg.t_end`. The history difference is advanced with
/// the difference of the sources so its norm stays exact in moment form.
pub fn run_pair(disc: &Discretization, a: &mut SimState, b: &mut SimState) -> Result<PairRecord> {
    if a.coords.len() != b.coords.len() || (a.t - b.t).abs() > 0.0 {
        return Err(Error::Config(
            "paired runs need matching dimensions and start times".into(),
        ));
    }
    let steps = disc.cfg.step_count()?;
    let stepper = disc.stepper()?;
    let mut diff = a.history.difference(&b.history)?;
    let mut rec = PairRecord {
        times: Vec::with_capacity(steps + 1),
        diff_norm_sq: Vec::with_capacity(steps + 1),
        u_diff_sq: Vec::with_capacity(steps + 1),
        grad_mu_diff_sq: Vec::with_capacity(steps + 1),
    };
    pair_sample(disc, a, b, &diff, &mut rec);
    let t0 = a.t;
    for n in 1..=steps {
        let ia = stepper.step(a)?;
        let ib = stepper.step(b)?;
        a.t = t0 + n as f64 * disc.cfg.dt;
        b.t = a.t;
        diff.transport(disc.cfg.dt)?;
        diff.add_source(&(&ia.source - &ib.source), disc.cfg.dt);
        pair_sample(disc, a, b, &diff, &mut rec);
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub t_grid: Vec<f64>,
    pub diff_norm_sq: Vec<f64>,
    /// `e^{C t} diff(0)`
    pub bound: Vec<f64>,
    /// Smallest `C` with `diff(t) ≤ e^{C t} diff(0)` at every sample.
    pub fitted_c: f64,
    pub violated: bool,
}

/// Fits the growth constant of `diff(t) ≤ e^{C t} diff(0)` over `t ≤ t_max`.
pub fn contraction_check(pair: &PairRecord, t_max: f64) -> Result<ContractionReport> {
    let d0 = *pair
        .diff_norm_sq
        .first()
        .ok_or_else(|| Error::Parameter("empty pair record".into()))?;
    let mut t_grid = Vec::new();
    let mut diff = Vec::new();
    for (&t, &d) in pair.times.iter().zip(&pair.diff_norm_sq) {
        if t <= t_max + 1e-12 {
            t_grid.push(t);
            diff.push(d);
        }
    }
    if d0 == 0.0 {
        let violated = diff.iter().any(|&d| d > 0.0);
        let bound = vec![0.0; t_grid.len()];
        return Ok(ContractionReport {
            t_grid,
            diff_norm_sq: diff,
            bound,
            fitted_c: 0.0,
            violated,
        });
    }
    let fitted_c = t_grid
        .iter()
        .zip(&diff)
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &d)| (d / d0).ln() / t)
        .fold(f64::NEG_INFINITY, f64::max);
    let fitted_c = if fitted_c.is_finite() { fitted_c } else { 0.0 };
    let bound: Vec<f64> = t_grid.iter().map(|&t| (fitted_c * t).exp() * d0).collect();
    let violated = diff
        .iter()
        .zip(&bound)
        .any(|(&d, &b)| d > b * (1.0 + 1e-12));
    Ok(ContractionReport {
        t_grid,
        diff_norm_sq: diff,
        bound,
        fitted_c,
        violated,
    })
}

/// `C (∫₀^{t*} ‖∇(μ₁−μ₂)‖² + ‖u₁−u₂‖² dτ)^{1/2}` by trapezoid.
pub fn pseudometric(pair: &PairRecord, t_star: f64, c: f64) -> Result<f64> {
    let last = pair.times.last().copied().unwrap_or(0.0);
    if last + 1e-12 < t_star {
        return Err(Error::Parameter(format!(
            "pseudometric horizon {t_star} exceeds the recorded time {last}"
        )));
    }
    let mut acc = 0.0;
    for k in 1..pair.times.len() {
        if pair.times[k] > t_star + 1e-12 {
            break;
        }
        let f0 = pair.grad_mu_diff_sq[k - 1] + pair.u_diff_sq[k - 1];
        let f1 = pair.grad_mu_diff_sq[k] + pair.u_diff_sq[k];
        acc += 0.5 * (pair.times[k] - pair.times[k - 1]) * (f0 + f1);
    }
    Ok(c * acc.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    /// Decay rate of `Q e^{−κ₁ t} + C`; zero when the fit is degenerate.
    pub fitted_kappa1: f64,
    pub fitted_q: f64,
    pub fitted_c: f64,
    /// Root-mean-square fit residual.
    pub fit_residual: f64,
    /// Mean of `‖φ‖²` over the last tenth of the run.
    pub absorbing_radius: f64,
    /// `‖φ‖²` varies by less than 1e-3 relative over the last tenth.
    pub plateau: bool,
    /// The trajectory never left its initial level, so `κ₁` is meaningless.
    pub degenerate: bool,
}

/// Least-squares fit of `‖φ(t)‖² ≈ Q e^{−κ₁ t} + C`: a grid search in `κ₁`
/// with linear least squares for `(Q, C)` at each value.
pub fn dissipation_check(traj: &TrajectoryRecord) -> Result<DissipationReport> {
    let y = &traj.phase_norm_sq;
    let t = &traj.times;
    if y.len() < 10 {
        return Err(Error::Parameter(
            "dissipation fit needs at least 10 samples".into(),
        ));
    }
    let tail_start = y.len() - (y.len() / 10).max(1);
    let tail = &y[tail_start..];
    let absorbing_radius = tail.iter().sum::<f64>() / tail.len() as f64;
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = y
        .iter()
        .cloned()
        .fold(0.0, |a: f64, b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    let plateau = spread <= 1e-3 * absorbing_radius.abs().max(1e-12 * scale);
    let total_spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - y.iter().cloned().fold(f64::INFINITY, f64::min);
    let degenerate = total_spread <= 1e-9 * scale;

    let horizon = t[t.len() - 1] - t[0];
    let fit = |kappa: f64| {
        // normal equations for y ≈ Q x + C with x = e^{−κ t}
        let n = y.len() as f64;
        let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let x = (-kappa * (ti - t[0])).exp();
            sx += x;
            sxx += x * x;
            sy += yi;
            sxy += x * yi;
        }
        let det = n * sxx - sx * sx;
        if det.abs() < 1e-300 {
            return None;
        }
        let q = (n * sxy - sx * sy) / det;
        let c = (sy - q * sx) / n;
        let rss: f64 = t
            .iter()
            .zip(y)
            .map(|(&ti, &yi)| (q * (-kappa * (ti - t[0])).exp() + c - yi).powi(2))
            .sum();
        Some((q, c, (rss / n).sqrt()))
    };
    let mut best = (0.0, 0.0, absorbing_radius, f64::INFINITY);
    if !degenerate && horizon > 0.0 {
        // log-spaced κ₁ from 0.01/T to 1000/T, refined once around the best
        let mut lo = (0.01 / horizon).ln();
        let mut hi = (1000.0 / horizon).ln();
        for _ in 0..3 {
            let n = 200;
            let mut arg = lo;
            for k in 0..=n {
                let kappa = (lo + (hi - lo) * k as f64 / n as f64).exp();
                if let Some((q, c, r)) = fit(kappa) {
                    if r < best.3 {
                        best = (kappa, q, c, r);
                        arg = kappa.ln();
                    }
                }
            }
            let w = (hi - lo) / n as f64 * 2.0;
            lo = arg - w;
            hi = arg + w;
        }
    }
    let (fitted_kappa1, fitted_q, fitted_c, fit_residual) = if best.3.is_finite() {
        best
    } else {
        (0.0, 0.0, absorbing_radius, 0.0)
    };
    Ok(DissipationReport {
        fitted_kappa1,
        fitted_q,
        fitted_c,
        fit_residual,
        absorbing_radius,
        plateau,
        degenerate,
    })
}

/// `∫_{T−1}^{T} α‖∂_t u‖² dτ` over the last unit of time, by trapezoid.
pub fn late_viscous_dissipation(traj: &TrajectoryRecord) -> f64 {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let mut acc = 0.0;
    for k in 1..traj.times.len() {
        if traj.times[k - 1] + 1e-12 >= t_end - 1.0 {
            acc += 0.5
                * (traj.times[k] - traj.times[k - 1])
                * (traj.u_dot_norm_sq[k - 1] + traj.u_dot_norm_sq[k]);
        }
    }
    traj.alpha * acc
}

/// Terminal state polished by Newton when `‖∂_t u‖ < tol` over the last tenth
/// of a run of at least ten steps.
pub fn omega_limit_probe(
    disc: &Discretization,
    traj: &TrajectoryRecord,
    terminal: &SimState,
    tol: f64,
) -> Option<SteadyState> {
    let n = traj.u_dot_norm_sq.len();
    if n < 11 {
        return None;
    }
    let from = n - (n / 10).max(1);
    if traj.u_dot_norm_sq[from..].iter().any(|&v| v.sqrt() >= tol) {
        return None;
    }
    disc.steady_state(disc.mean(&terminal.coords), &terminal.u)
        .ok()
}

/// Runs with default options and returns the record.
pub fn run_default(disc: &Discretization, state: &mut SimState) -> Result<TrajectoryRecord> {
    crate::solver::run(disc, state, RunOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::KernelSpec;
    use crate::mesh::build_interval_mesh;
    use crate::potential::PotentialSpec;
    use crate::solver::{run, HistoryMode, InitialHistory, SolverConfig};

    fn disc(cfg: SolverConfig, kernel: KernelSpec) -> Discretization {
        Discretization::new(
            build_interval_mesh(0.0, 1.0, 32).unwrap(),
            cfg,
            PotentialSpec::double_well(),
            kernel,
        )
        .unwrap()
    }

    #[test]
    fn energy_of_zero_state() {
        let d = disc(
            SolverConfig::baseline(),
            KernelSpec::exponential(1.0).unwrap(),
        );
        let s = d
            .initial_state(&DVector::zeros(31), InitialHistory::Zero)
            .unwrap();
        let e = energy(&d, &s);
        assert!((e.energy - (2.0 + e.shift)).abs() < 1e-14);
        assert!(
            (e.energy - (e.fractional_norm_sq + e.potential_term + e.history_norm_sq + e.shift))
                .abs()
                < 1e-14
        );
        assert!(e.shift >= 1.0);
    }

    #[test]
    fn stationary_trajectory_has_zero_residual() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.5;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let guess = DVector::from_element(31, 0.3);
        let ss = d.steady_state(0.3, &guess).unwrap();
        let mut s = d.steady_simstate(&ss).unwrap();
        let rec = run(&d, &mut s, RunOptions::default()).unwrap();
        let e0 = rec.energy[0];
        assert!(rec.energy.iter().all(|e| (e - e0).abs() < 1e-10));
        assert!(energy_identity_residual(&rec)
            .iter()
            .all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn exponential_dissipation_is_rate_times_norm() {
        let lam = 2.0;
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.3;
        for mode in [HistoryMode::Prony, HistoryMode::Grid] {
            cfg.history_mode = mode;
            let d = disc(cfg.clone(), KernelSpec::exponential(lam).unwrap());
            let u0 = DVector::from_fn(31, |i, _| ((i as f64) * 0.7).sin() * 0.5);
            let mut s = d.initial_state(&u0, InitialHistory::Stationary).unwrap();
            let rec = run(&d, &mut s, RunOptions::default()).unwrap();
            for (a, b) in rec.history_dissipation.iter().zip(&rec.history_norm_sq) {
                assert!((a - lam * b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn identical_pair_has_zero_difference() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.2;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let u0 = DVector::from_fn(31, |i, _| ((i as f64) * 0.3).cos() * 0.4);
        let mut a = d.initial_state(&u0, InitialHistory::Zero).unwrap();
        let mut b = a.clone();
        let pair = run_pair(&d, &mut a, &mut b).unwrap();
        assert!(pair.diff_norm_sq.iter().all(|&x| x == 0.0));
        assert_eq!(pseudometric(&pair, 0.2, 1.0).unwrap(), 0.0);
        let rep = contraction_check(&pair, 0.2).unwrap();
        assert!(!rep.violated && rep.fitted_c == 0.0);
        assert!(pseudometric(&pair, 0.3, 1.0).is_err());
    }

    #[test]
    fn pseudometric_is_symmetric() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.2;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let u1 = DVector::from_fn(31, |i, _| ((i as f64) * 0.3).cos() * 0.4);
        let u2 = DVector::from_fn(31, |i, _| ((i as f64) * 0.5).sin() * 0.4);
        let s1 = d.initial_state(&u1, InitialHistory::Zero).unwrap();
        let s2 = d.initial_state(&u2, InitialHistory::Zero).unwrap();
        let p12 = run_pair(&d, &mut s1.clone(), &mut s2.clone()).unwrap();
        let p21 = run_pair(&d, &mut s2.clone(), &mut s1.clone()).unwrap();
        assert_eq!(
            pseudometric(&p12, 0.2, 2.0).unwrap(),
            pseudometric(&p21, 0.2, 2.0).unwrap()
        );
        let rep = contraction_check(&p12, 0.2).unwrap();
        assert!(!rep.violated && rep.fitted_c.is_finite());
        assert_eq!(rep.diff_norm_sq[0], p12.diff_norm_sq[0]);
    }

    #[test]
    fn grid_pair_difference_matches_direct() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.2;
        cfg.history_mode = HistoryMode::Grid;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let u1 = DVector::from_fn(31, |i, _| ((i as f64) * 0.3).cos() * 0.4);
        let u2 = DVector::from_fn(31, |i, _| ((i as f64) * 0.5).sin() * 0.4);
        let mut a = d.initial_state(&u1, InitialHistory::Stationary).unwrap();
        let mut b = d.initial_state(&u2, InitialHistory::Stationary).unwrap();
        let pair = run_pair(&d, &mut a, &mut b).unwrap();
        let direct = a
            .history
            .difference(&b.history)
            .unwrap()
            .norm_sq(Weight::Nu);
        let dc = &a.coords - &b.coords;
        let expect = dc.dot(&(&d.s_q * &dc)) + direct;
        let got = *pair.diff_norm_sq.last().unwrap();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn equilibrium_dissipation_is_degenerate() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = 0.5;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let ss = d.steady_state(0.0, &DVector::zeros(31)).unwrap();
        let mut s = d.steady_simstate(&ss).unwrap();
        let rec = run(&d, &mut s, RunOptions::default()).unwrap();
        let rep = dissipation_check(&rec).unwrap();
        assert!(rep.degenerate && rep.plateau);
        let omega = omega_limit_probe(&d, &rec, &s, 1e-8).unwrap();
        assert!((&omega.u - &ss.u).amax() < 1e-10);
    }

    #[test]
    fn short_run_has_no_omega_limit() {
        let mut cfg = SolverConfig::baseline();
        cfg.t_end = cfg.dt;
        let d = disc(cfg, KernelSpec::exponential(1.0).unwrap());
        let mut s = d
            .initial_state(&DVector::zeros(31), InitialHistory::Zero)
            .unwrap();
        let rec = run(&d, &mut s, RunOptions::default()).unwrap();
        assert!(omega_limit_probe(&d, &rec, &s, 1.0).is_none());
    }

    #[test]
    fn orders_of_halving_errors() {
        let o = empirical_orders(&[0.4, 0.2, 0.1]);
        assert!(o.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fit_recovers_exponential() {
        let times: Vec<f64> = (0..=400).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = times.iter().map(|t| 3.0 * (-0.7 * t).exp() + 0.5).collect();
        let n = times.len();
        let rec = TrajectoryRecord {
            alpha: 1.0,
            times,
            energy: vec![0.0; n],
            mass: vec![0.0; n],
            u_dot_norm_sq: vec![0.0; n],
            history_norm_sq: vec![0.0; n],
            history_dissipation: vec![0.0; n],
            dissipation_integral: vec![0.0; n],
            phase_norm_sq: y,
            breach: None,
            samples: vec![],
        };
        let rep = dissipation_check(&rec).unwrap();
        assert!(
            (rep.fitted_kappa1 - 0.7).abs() < 1e-3,
            "{}",
            rep.fitted_kappa1
        );
        assert!((rep.fitted_c - 0.5).abs() < 1e-3);
        assert!(rep.fit_residual < 1e-4);
    }
}
