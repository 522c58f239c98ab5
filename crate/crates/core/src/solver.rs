//! Galerkin discretization of the coupled order-parameter / chemical-potential
//! / history system, a linearly implicit stabilized time stepper and a Newton
//! solver for steady states.
//!
//! All three unknowns live in one trial space spanned by the columns of
//! `Q = P R⁻¹`, where `P` is either the identity on interior nodes (`fem`) or
//! the leading generalized eigenvectors of the restricted form (`eigen`), and
//! `RᵀR = Pᵀ D P` with `D` the `H⁻¹` Gram matrix. In these coordinates the
//! `H⁻¹` inner product is Euclidean, so the history norms and the coupling
//! between `u` and `η` need no further metric.
//!
//! One step with memory integral `w`, residual `r = ∂E/∂c / 2` and mean-free
//! projection `𝒢`:
//!
//! ```text
//! (I + dt κ 𝒢 Q_r) δ = −dt (w_old + κ 𝒢 r₀)
//! η⁺ = T η + min(s, dt) 𝒢 r,      c⁺ = c + δ
//! ```
//!
//! where `T` is source-free transport over `dt`, `w_old = ∫ ν Tη`,
//! `κ = ∫ ν min(s, dt)` and `Q_r = α M/dt + S + σ L`. The update is mass
//! conserving to rounding, keeps steady states fixed, and decreases the
//! discrete energy whenever `2α/(3 dt) + 2σ ≥ max F''` along the trajectory.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{energy, EnergyReport};
use crate::error::{Error, Result};
use crate::fractional::{check_beta, FractionalOperatorSet};
use crate::history::{HistoryGrid, HistoryMoments, Weight};
use crate::memory::{build_s_grid, prony_reduce, KernelSpec, PronySet, SGrid};
use crate::mesh::{interior_block, interior_columns, Mesh, QuadratureRule};
use crate::neumann::{neumann_operator, NeumannOperator};
use crate::potential::{default_energy_shift, Potential, PotentialSpec};

/// Newton iteration cap for [`Discretization::steady_state`].
pub const NEWTON_MAX_ITERATIONS: usize = 100;
/// Target residual for [`Discretization::steady_state`].
pub const NEWTON_TOLERANCE: f64 = 1e-10;
/// Relative drift of `⟨u⟩` that counts as an invariant breach.
pub const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GalerkinMode {
    Fem,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    Grid,
    Prony,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    /// `|⟨u⟩| ≤ M` when set.
    pub mean_bound: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub galerkin_mode: GalerkinMode,
    /// Trial-space dimension in eigen mode.
    pub n_modes: usize,
    /// `σ` in the stabilization `σ L (u⁺ − u)`.
    pub stabilization: f64,
    pub history_mode: HistoryMode,
    /// History cutoff; defaults to the kernel's own choice.
    pub s_max: Option<f64>,
    /// History cells; defaults to one cell per time step.
    pub n_s: Option<usize>,
    /// Admissible per-step energy increase before a run is flagged.
    pub energy_tolerance: f64,
    /// Gauss points per direction for separated cell pairs.
    pub quadrature_points: usize,
}

impl SolverConfig {
    /// Short-run settings: viscosity 1, `β = 1/2`, prony history, `dt = 0.01`
    /// up to `t = 1`, `σ = 4`.
    pub fn baseline() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            mean_bound: None,
            dt: 0.01,
            t_end: 1.0,
            galerkin_mode: GalerkinMode::Fem,
            n_modes: 16,
            stabilization: 4.0,
            history_mode: HistoryMode::Prony,
            s_max: None,
            n_s: None,
            energy_tolerance: 1e-9,
            quadrature_points: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive (got {}); the nonviscous case alpha = 0 is not supported",
                self.alpha
            )));
        }
        check_beta(self.beta)
            .map_err(|e| Error::Config(e.to_string().replace("parameter error: ", "")))?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if let Some(m) = self.mean_bound {
            if !(m >= 0.0) {
                return Err(Error::Config(format!(
                    "mean bound must be non-negative, got {m}"
                )));
            }
        }
        if !(self.stabilization >= 0.0) {
            return Err(Error::Config(format!(
                "stabilization must be non-negative, got {}",
                self.stabilization
            )));
        }
        if self.galerkin_mode == GalerkinMode::Eigen && self.n_modes < 2 {
            return Err(Error::Config("eigen mode needs at least two modes".into()));
        }
        if !(self.energy_tolerance >= 0.0) {
            return Err(Error::Config(
                "energy tolerance must be non-negative".into(),
            ));
        }
        if self.quadrature_points < 2 {
            return Err(Error::Config("need at least two quadrature points".into()));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`.
    pub fn step_count(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Config(format!(
                "dt = {} does not divide t_end = {}",
                self.dt, self.t_end
            )));
        }
        Ok(n as usize)
    }
}

/// Either history representation.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Grid(HistoryGrid),
    Moments(HistoryMoments),
}

impl History {
    pub fn dim(&self) -> usize {
        match self {
            History::Grid(h) => h.dim(),
            History::Moments(h) => h.dim(),
        }
    }

    /// `∫ ν η ds`
    pub fn memory_integral(&self) -> DVector<f64> {
        match self {
            History::Grid(h) => h.memory_integral(),
            History::Moments(h) => h.memory_integral(),
        }
    }

    pub fn norm_sq(&self, weight: Weight) -> f64 {
        match self {
            History::Grid(h) => h.norm_sq(weight),
            History::Moments(h) => h.norm_sq(weight),
        }
    }

    /// `max |ℓ(η(s))|` over the stored slices or moments.
    pub fn max_functional(&self, functional: &DVector<f64>) -> f64 {
        match self {
            History::Grid(h) => h.max_functional(functional),
            History::Moments(h) => h.max_functional(functional),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            History::Grid(h) => h.values.amax(),
            History::Moments(h) => h.moments.amax(),
        }
    }

    /// Source-free transport over `dt`; returns `κ = ∫ ν min(s, dt)`.
    pub fn transport(&mut self, dt: f64) -> Result<f64> {
        match self {
            History::Grid(h) => {
                let k = h.sgrid.cells_per_step(dt)?;
                h.shift(k);
                Ok(h.sgrid.step_weight(dt))
            }
            History::Moments(h) => {
                h.decay(dt);
                Ok(h.prony.step_weight(dt))
            }
        }
    }

    /// Adds the source `min(s, dt)·g` after [`transport`](Self::transport).
    pub fn add_source(&mut self, g: &DVector<f64>, dt: f64) {
        match self {
            History::Grid(h) => h.add_step_source(g, dt),
            History::Moments(h) => h.add_step_source(g, dt),
        }
    }

    /// `self − other`. Moment histories carry squared norms that do not
    /// subtract, so for them only identical histories are supported.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (History::Grid(a), History::Grid(b)) if a.sgrid == b.sgrid => {
                let mut d = a.clone();
                d.values -= &b.values;
                Ok(History::Grid(d))
            }
            (History::Moments(a), History::Moments(b)) if a == b => Ok(History::Moments(
                HistoryMoments::zeros(a.prony.clone(), a.dim()),
            )),
            (History::Moments(_), History::Moments(_)) => Err(Error::UnsupportedReduction(
                "difference of two distinct moment histories has no moment representation".into(),
            )),
            _ => Err(Error::Config(
                "histories use different representations".into(),
            )),
        }
    }
}

/// Initial history choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialHistory {
    /// `η₀ ≡ 0`
    Zero,
    /// `η₀(s) = s·g₀` with `g₀` the mean-free residual of `u₀`, the history
    /// of a chemical potential frozen at its initial value.
    Stationary,
    /// `η₀(s) = s·1`, which carries mass and is rejected at start-up.
    MeanOffset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Interior nodal values.
    pub u: DVector<f64>,
    /// Trial-space coordinates of `u`.
    pub coords: DVector<f64>,
    pub history: History,
    /// Chemical potential on all nodes.
    pub mu: DVector<f64>,
    /// Interior nodal values of the last `∂_t u`.
    pub u_dot: DVector<f64>,
}

/// A Newton steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub u: DVector<f64>,
    pub coords: DVector<f64>,
    /// The constant chemical potential `μ*`.
    pub mu: f64,
    pub residuals: Vec<f64>,
}

/// Everything fixed over a run: operators, trial basis and projected matrices.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub cfg: SolverConfig,
    pub potential: PotentialSpec,
    pub kernel: KernelSpec,
    pub ops: FractionalOperatorSet,
    pub neumann: NeumannOperator,
    /// `Q`, interior nodes × coordinates.
    pub basis: DMatrix<f64>,
    /// Left inverse of `Q` on its span.
    pub projector: DMatrix<f64>,
    pub s_q: DMatrix<f64>,
    pub m_q: DMatrix<f64>,
    pub l_q: DMatrix<f64>,
    /// `Qᵀ m` with `m_i = ∫ φ_i`.
    pub m_r: DVector<f64>,
    pub energy_shift: f64,
    m_r_norm_sq: f64,
    lumped: DVector<f64>,
    mass_wv: DMatrix<f64>,
    m_v_total: f64,
    sgrid: Option<SGrid>,
    prony: Option<PronySet>,
}

impl Discretization {
    pub fn new(
        mesh: Mesh,
        cfg: SolverConfig,
        potential: PotentialSpec,
        kernel: KernelSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        let ops = FractionalOperatorSet::assemble(
            &mesh,
            cfg.beta,
            &QuadratureRule::gauss_legendre(cfg.quadrature_points),
        )?;
        let neumann = neumann_operator(&mesh)?;
        let nv = mesh.interior_count();

        let p = match cfg.galerkin_mode {
            GalerkinMode::Fem => DMatrix::identity(nv, nv),
            GalerkinMode::Eigen => {
                if cfg.n_modes > nv {
                    return Err(Error::Config(format!(
                        "n_modes = {} exceeds the {nv} interior nodes",
                        cfg.n_modes
                    )));
                }
                ops.eigen.vectors.columns(0, cfg.n_modes).into_owned()
            }
        };
        let d_v = interior_block(&mesh, &neumann.h_minus_one_gram());
        let gram = p.transpose() * &d_v * &p;
        let chol = Cholesky::new((&gram + gram.transpose()) * 0.5).ok_or_else(|| {
            Error::NumericalFailure("H^-1 Gram matrix of the trial space is singular".into())
        })?;
        let l = chol.l();
        let nq = p.ncols();
        let l_inv_t = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(nq, nq))
            .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
        let basis = &p * &l_inv_t;
        let projector = match cfg.galerkin_mode {
            GalerkinMode::Fem => l.transpose(),
            GalerkinMode::Eigen => l.transpose() * p.transpose() * &ops.mass,
        };

        let lumped = mesh.lumped_weights();
        let l_v = DMatrix::from_diagonal(&mesh.restrict_to_interior(&lumped));
        let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;
        let s_q = sym(basis.transpose() * &ops.s_restricted * &basis);
        let m_q = sym(basis.transpose() * &ops.mass * &basis);
        let l_q = sym(basis.transpose() * &l_v * &basis);
        let mass_wv = interior_columns(&mesh, &ops.mass_full);
        let m_v = mass_wv.row_sum().transpose();
        let m_r = basis.transpose() * &m_v;
        let m_r_norm_sq = m_r.norm_squared();
        let m_v_total = m_v.sum();
        let energy_shift = default_energy_shift(&potential, mesh.measure())?;

        let (sgrid, prony) = match cfg.history_mode {
            HistoryMode::Grid => {
                let s_max = cfg.s_max.unwrap_or_else(|| kernel.default_s_max());
                let (s_max, n_s) = match cfg.n_s {
                    Some(n) => (s_max, n),
                    None => {
                        let n = (s_max / cfg.dt).ceil().max(8.0) as usize;
                        (n as f64 * cfg.dt, n)
                    }
                };
                let g = build_s_grid(&kernel, s_max, n_s)?;
                g.cells_per_step(cfg.dt)?;
                (Some(g), None)
            }
            HistoryMode::Prony => (None, Some(prony_reduce(&kernel)?)),
        };

        Ok(Self {
            mesh,
            cfg,
            potential,
            kernel,
            ops,
            neumann,
            basis,
            projector,
            s_q,
            m_q,
            l_q,
            m_r,
            energy_shift,
            m_r_norm_sq,
            lumped,
            mass_wv,
            m_v_total,
            sgrid,
            prony,
        })
    }

    /// Number of trial coordinates.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Coordinates of the best approximation of `u` in the trial space.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.projector * u
    }

    /// Interior nodal values from coordinates.
    pub fn reconstruct(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * c
    }

    /// `⟨u⟩` from coordinates.
    pub fn mean(&self, c: &DVector<f64>) -> f64 {
        self.m_r.dot(c) / self.mesh.measure()
    }

    /// `𝒢 v = v − m_r (m_rᵀ v) / |m_r|²`
    pub fn mean_free(&self, v: &DVector<f64>) -> DVector<f64> {
        v - &self.m_r * (self.m_r.dot(v) / self.m_r_norm_sq)
    }

    /// Lumped `∫ F(u)` with `u = 0` on the boundary nodes.
    pub fn potential_integral(&self, u: &DVector<f64>) -> f64 {
        let n = self.mesh.n_cells;
        let boundary = (self.lumped[0] + self.lumped[n]) * self.potential.f(0.0);
        boundary
            + u.iter()
                .enumerate()
                .map(|(j, &x)| self.lumped[j + 1] * self.potential.f(x))
                .sum::<f64>()
    }

    /// `∂Φ/∂c`
    pub fn potential_gradient(&self, c: &DVector<f64>) -> DVector<f64> {
        let u = self.reconstruct(c);
        let fv = DVector::from_fn(u.len(), |j, _| {
            self.lumped[j + 1] * self.potential.eval(u[j]).1
        });
        self.basis.transpose() * fv
    }

    /// `S_q c + ∂Φ/∂c`, half the energy gradient without history.
    pub fn residual(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.s_q * c + self.potential_gradient(c)
    }

    /// `|𝒢 (S_q c + ∂Φ/∂c)|`, zero exactly at steady states.
    pub fn stationary_residual(&self, c: &DVector<f64>) -> f64 {
        self.mean_free(&self.residual(c)).norm()
    }

    fn jacobian(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let u = self.reconstruct(c);
        let mut weighted = self.basis.clone();
        for (j, mut row) in weighted.row_iter_mut().enumerate() {
            row *= self.lumped[j + 1] * self.potential.eval(u[j]).2;
        }
        let j = &self.s_q + self.basis.transpose() * weighted;
        (&j + j.transpose()) * 0.5
    }

    /// Chemical potential on all nodes. The fluctuation inverts the Neumann
    /// Laplacian on the history source `source = 𝒢 r`, so that `−Δμ` is
    /// exactly what enters the history. The constant is fixed by testing
    /// `μ = α u̇ + A u⁺ + F'(u) + σ (u⁺ − u)` against the sum of the interior
    /// hats, which makes `μ ≡ μ*` at a steady state.
    pub fn chemical_potential(
        &self,
        u_old: &DVector<f64>,
        u_new: &DVector<f64>,
        u_dot: &DVector<f64>,
        source: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let sigma = self.cfg.stabilization;
        let mut load = &self.ops.mass * u_dot * self.cfg.alpha + &self.ops.s_restricted * u_new;
        for j in 0..u_new.len() {
            let l = self.lumped[j + 1];
            load[j] += l * (self.potential.eval(u_old[j]).1 + sigma * (u_new[j] - u_old[j]));
        }
        let mut psi = self.mesh.extend_by_zero(&self.reconstruct(source));
        psi.add_scalar_mut(-self.neumann.mean(&psi));
        let fluctuation = self.neumann.apply_inverse(&psi)?;
        let tested = (self.mass_wv.transpose() * &fluctuation).sum();
        let constant = (load.sum() - tested) / self.m_v_total;
        Ok(fluctuation.add_scalar(constant))
    }

    pub fn zero_history(&self) -> History {
        self.linear_history(&DVector::zeros(self.dim()))
    }

    /// `η(s) = s·g` in coordinates.
    pub fn linear_history(&self, g: &DVector<f64>) -> History {
        match (&self.sgrid, &self.prony) {
            (Some(sg), _) => History::Grid(HistoryGrid::linear(sg.clone(), g)),
            (None, Some(p)) => History::Moments(HistoryMoments::linear(p.clone(), g)),
            _ => unreachable!("one history representation is always built"),
        }
    }

    pub fn initial_history(&self, kind: InitialHistory, coords: &DVector<f64>) -> History {
        match kind {
            InitialHistory::Zero => self.zero_history(),
            InitialHistory::Stationary => {
                self.linear_history(&self.mean_free(&self.residual(coords)))
            }
            InitialHistory::MeanOffset => {
                self.linear_history(&(&self.m_r / self.m_r_norm_sq.sqrt()))
            }
        }
    }

    /// Errors unless every history slice has zero mean.
    pub fn check_history(&self, h: &History) -> Result<()> {
        if h.dim() != self.dim() {
            return Err(Error::Config(format!(
                "history has {} coordinates, trial space has {}",
                h.dim(),
                self.dim()
            )));
        }
        let unit = &self.m_r / self.m_r_norm_sq.sqrt();
        let mean = h.max_functional(&unit);
        let norm = h.max_abs() * (self.dim() as f64).sqrt();
        if mean > 1e-10 * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::MeanZeroViolation { mean, norm });
        }
        Ok(())
    }

    /// State at `t = 0` from interior nodal `u₀` with `∂_t u₀ = 0`.
    pub fn initial_state(&self, u0: &DVector<f64>, kind: InitialHistory) -> Result<SimState> {
        if u0.len() != self.mesh.interior_count() {
            return Err(Error::Config(format!(
                "initial field has {} values, mesh has {} interior nodes",
                u0.len(),
                self.mesh.interior_count()
            )));
        }
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite initial field".into()));
        }
        let coords = self.project(u0);
        let history = self.initial_history(kind, &coords);
        self.state_from_parts(coords, history)
    }

    /// State from coordinates and a history, with `∂_t u = 0`.
    pub fn state_from_parts(&self, coords: DVector<f64>, history: History) -> Result<SimState> {
        self.check_history(&history)?;
        let u = self.reconstruct(&coords);
        if let Some(m) = self.cfg.mean_bound {
            let mean = self.mean(&coords);
            if mean.abs() > m {
                return Err(Error::Config(format!(
                    "initial mean {mean} exceeds the bound {m}"
                )));
            }
        }
        let u_dot = DVector::zeros(u.len());
        let source = self.mean_free(&self.residual(&coords));
        let mu = self.chemical_potential(&u, &u, &u_dot, &source)?;
        Ok(SimState {
            t: 0.0,
            u,
            coords,
            history,
            mu,
            u_dot,
        })
    }

    /// Steady state with prescribed mean by Newton's method on
    /// `S u + F'(u) = μ* m`, `⟨u⟩ = mean`.
    pub fn steady_state(&self, mean: f64, guess: &DVector<f64>) -> Result<SteadyState> {
        if let Some(m) = self.cfg.mean_bound {
            if mean.abs() > m {
                return Err(Error::Parameter(format!(
                    "mean {mean} exceeds the bound {m}"
                )));
            }
        }
        let measure = self.mesh.measure();
        let mut c = self.project(guess);
        c += &self.m_r * ((mean * measure - self.m_r.dot(&c)) / self.m_r_norm_sq);
        let mut mu = self.m_r.dot(&self.residual(&c)) / self.m_r_norm_sq;
        let n = self.dim();

        let full_residual = |c: &DVector<f64>, mu: f64| -> (DVector<f64>, f64) {
            let r = self.residual(c) - &self.m_r * mu;
            (r, self.m_r.dot(c) - mean * measure)
        };
        let norm_of = |r: &DVector<f64>, k: f64| (r.norm_squared() + k * k).sqrt();

        let (mut r, mut k) = full_residual(&c, mu);
        let mut res = norm_of(&r, k);
        let mut residuals = vec![res];
        for _ in 0..NEWTON_MAX_ITERATIONS {
            if res < NEWTON_TOLERANCE {
                let u = self.reconstruct(&c);
                return Ok(SteadyState {
                    u,
                    coords: c,
                    mu,
                    residuals,
                });
            }
            let jac = self.jacobian(&c);
            let mut big = DMatrix::zeros(n + 1, n + 1);
            big.view_mut((0, 0), (n, n)).copy_from(&jac);
            for i in 0..n {
                big[(i, n)] = -self.m_r[i];
                big[(n, i)] = self.m_r[i];
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&r));
            rhs[n] = -k;
            let step = big
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::NumericalFailure("singular Newton system".into()))?;
            let dc = step.rows(0, n).into_owned();
            let dmu = step[n];
            let mut lambda = 1.0;
            loop {
                let c_try = &c + &dc * lambda;
                let mu_try = mu + dmu * lambda;
                let (r_try, k_try) = full_residual(&c_try, mu_try);
                let res_try = norm_of(&r_try, k_try);
                if res_try < res || lambda < 1e-6 {
                    c = c_try;
                    mu = mu_try;
                    r = r_try;
                    k = k_try;
                    res = res_try;
                    break;
                }
                lambda *= 0.5;
            }
            if !res.is_finite() {
                return Err(Error::NumericalFailure(
                    "Newton residual is not finite".into(),
                ));
            }
            residuals.push(res);
        }
        if res < NEWTON_TOLERANCE {
            let u = self.reconstruct(&c);
            return Ok(SteadyState {
                u,
                coords: c,
                mu,
                residuals,
            });
        }
        Err(Error::NoConvergence {
            iterations: NEWTON_MAX_ITERATIONS,
            last: res,
            residuals,
        })
    }

    /// Steady state fed into a [`SimState`] with zero history.
    pub fn steady_simstate(&self, steady: &SteadyState) -> Result<SimState> {
        self.state_from_parts(steady.coords.clone(), self.zero_history())
    }

    pub fn stepper(&self) -> Result<Stepper<'_>> {
        Stepper::new(self)
    }
}

/// Quantities of one step that diagnostics reuse.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// History source `𝒢 r`.
    pub source: DVector<f64>,
    /// Memory integral after source-free transport.
    pub w_old: DVector<f64>,
}

/// Time stepper with the step matrix factored once.
pub struct Stepper<'a> {
    disc: &'a Discretization,
    dt: f64,
    kappa: f64,
    q_r: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl<'a> Stepper<'a> {
    pub fn new(disc: &'a Discretization) -> Result<Self> {
        let dt = disc.cfg.dt;
        let mut probe = disc.zero_history();
        let kappa = probe.transport(dt)?;
        let q_r =
            &disc.m_q * (disc.cfg.alpha / dt) + &disc.s_q + &disc.l_q * disc.cfg.stabilization;
        let n = disc.dim();
        let g_q = &q_r - &disc.m_r * (disc.m_r.transpose() * &q_r) / disc.m_r_norm_sq;
        let a = DMatrix::identity(n, n) + g_q * (dt * kappa);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::NumericalFailure("step matrix is singular".into()));
        }
        Ok(Self {
            disc,
            dt,
            kappa,
            q_r,
            lu,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by one step.
    pub fn step(&self, state: &mut SimState) -> Result<StepInfo> {
        let disc = self.disc;
        let dt = self.dt;
        let kappa = state.history.transport(dt)?;
        if (kappa - self.kappa).abs() > 1e-12 * self.kappa {
            return Err(Error::InvariantBreach(
                "history step weight changed between steps".into(),
            ));
        }
        let w_old = state.history.memory_integral();
        let w_mean = disc.m_r.dot(&w_old);
        let scale = disc.m_r_norm_sq.sqrt() * w_old.norm();
        if w_mean.abs() > 1e-9 * scale + 1e-14 * disc.m_r_norm_sq.sqrt() {
            return Err(Error::MeanZeroViolation {
                mean: w_mean,
                norm: scale,
            });
        }
        let r0 = disc.residual(&state.coords);
        let rhs = -(&w_old + disc.mean_free(&r0) * kappa) * dt;
        let delta = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::NumericalFailure("step solve failed".into()))?;
        let source = disc.mean_free(&(&r0 + &self.q_r * &delta));
        let delta = -disc.mean_free(&(&w_old + &source * kappa)) * dt;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "non-finite update at t = {}",
                state.t + dt
            )));
        }
        state.history.add_source(&source, dt);

        let u_old = std::mem::replace(&mut state.u, DVector::zeros(0));
        state.coords += &delta;
        state.u = disc.reconstruct(&state.coords);
        state.u_dot = disc.reconstruct(&delta) / dt;
        state.mu = disc.chemical_potential(&u_old, &state.u, &state.u_dot, &source)?;
        state.t += dt;
        Ok(StepInfo { source, w_old })
    }
}

/// Energy increase beyond tolerance during a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityBreach {
    pub step: usize,
    pub t: f64,
    pub increase: f64,
}

/// Recorded snapshot of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub t: f64,
    pub u: DVector<f64>,
    pub mu: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass: Vec<f64>,
    pub u_dot_norm_sq: Vec<f64>,
    /// `∫ ν ‖η‖²_{H⁻¹}`
    pub history_norm_sq: Vec<f64>,
    /// `∫ (−ν') ‖η‖²_{H⁻¹}`
    pub history_dissipation: Vec<f64>,
    /// Trapezoid running integral of `2α‖∂_t u‖² + ∫(−ν')‖η‖²`.
    pub dissipation_integral: Vec<f64>,
    /// `uᵀ S u + ∫ ν ‖η‖²`
    pub phase_norm_sq: Vec<f64>,
    pub breach: Option<StabilityBreach>,
    pub samples: Vec<StateSample>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `sup_t ‖φ(t)‖`
    pub fn max_phase_norm(&self) -> f64 {
        self.phase_norm_sq
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Keep a [`StateSample`] every this many steps; 0 keeps none.
    pub sample_every: usize,
    /// Stop at the first energy increase beyond tolerance.
    pub stop_on_breach: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sample_every: 0,
            stop_on_breach: true,
        }
    }
}

fn push_sample(
    rec: &mut TrajectoryRecord,
    disc: &Discretization,
    state: &SimState,
    e: &EnergyReport,
) {
    let u_dot_sq = state.u_dot.dot(&(&disc.ops.mass * &state.u_dot));
    let hist_diss = state.history.norm_sq(Weight::MinusNuPrime);
    let running = match rec.times.len() {
        0 => 0.0,
        k => {
            let dt = state.t - rec.times[k - 1];
            let prev = 2.0 * rec.alpha * rec.u_dot_norm_sq[k - 1] + rec.history_dissipation[k - 1];
            let now = 2.0 * rec.alpha * u_dot_sq + hist_diss;
            rec.dissipation_integral[k - 1] + 0.5 * dt * (prev + now)
        }
    };
    rec.times.push(state.t);
    rec.energy.push(e.energy);
    rec.mass.push(disc.mean(&state.coords));
    rec.u_dot_norm_sq.push(u_dot_sq);
    rec.history_norm_sq.push(e.history_norm_sq);
    rec.history_dissipation.push(hist_diss);
    rec.dissipation_integral.push(running);
    rec.phase_norm_sq
        .push(e.fractional_norm_sq + e.history_norm_sq);
}

/// Runs `cfg.t_end / cfg.dt` steps from `state`, which is left at the final
/// time. Mass drift and mean-bound violations are errors; energy increases
/// are flagged in the record.
pub fn run(
    disc: &Discretization,
    state: &mut SimState,
    opts: RunOptions,
) -> Result<TrajectoryRecord> {
    let steps = disc.cfg.step_count()?;
    let stepper = disc.stepper()?;
    let mut rec = TrajectoryRecord {
        alpha: disc.cfg.alpha,
        times: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        mass: Vec::with_capacity(steps + 1),
        u_dot_norm_sq: Vec::with_capacity(steps + 1),
        history_norm_sq: Vec::with_capacity(steps + 1),
        history_dissipation: Vec::with_capacity(steps + 1),
        dissipation_integral: Vec::with_capacity(steps + 1),
        phase_norm_sq: Vec::with_capacity(steps + 1),
        breach: None,
        samples: Vec::new(),
    };
    let mass0 = disc.mean(&state.coords);
    let t0 = state.t;
    let mut e = energy(disc, state);
    push_sample(&mut rec, disc, state, &e);
    if opts.sample_every > 0 {
        rec.samples.push(sample_of(state));
    }
    for n in 1..=steps {
        stepper.step(state)?;
        state.t = t0 + n as f64 * disc.cfg.dt;
        let mass = disc.mean(&state.coords);
        if (mass - mass0).abs() > MASS_TOLERANCE * (1.0 + mass0.abs()) {
            return Err(Error::InvariantBreach(format!(
                "mean drifted from {mass0:e} to {mass:e} at t = {}",
                state.t
            )));
        }
        if let Some(m) = disc.cfg.mean_bound {
            if mass.abs() > m {
                return Err(Error::InvariantBreach(format!(
                    "mean {mass} exceeds the bound {m}"
                )));
            }
        }
        let prev = e.energy;
        e = energy(disc, state);
        if !e.energy.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "energy is not finite at t = {}",
                state.t
            )));
        }
        push_sample(&mut rec, disc, state, &e);
        if opts.sample_every > 0 && n % opts.sample_every == 0 {
            rec.samples.push(sample_of(state));
        }
        let increase = e.energy - prev;
        if increase > disc.cfg.energy_tolerance && rec.breach.is_none() {
            rec.breach = Some(StabilityBreach {
                step: n,
                t: state.t,
                increase,
            });
            if opts.stop_on_breach {
                break;
            }
        }
    }
    Ok(rec)
}

fn sample_of(state: &SimState) -> StateSample {
    StateSample {
        t: state.t,
        u: state.u.clone(),
        mu: state.mu.clone(),
    }
}
