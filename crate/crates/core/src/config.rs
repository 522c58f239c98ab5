//! Run configuration in sectioned TOML with strict keys and filled defaults.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::KernelSpec;
use crate::mesh::{build_interval_mesh, Mesh};
use crate::potential::{PotentialKind, PotentialSpec};
use crate::solver::{
    Discretization, GalerkinMode, HistoryMode, InitialHistory, SimState, SolverConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self {
            a: 0.0,
            b: 2.0,
            n_cells: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub alpha: f64,
    pub beta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_bound: Option<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub galerkin_mode: GalerkinMode,
    pub n_modes: usize,
    /// Defaults to the potential's concavity bound `c_F`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stabilization: Option<f64>,
    pub history_mode: HistoryMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_s: Option<usize>,
    pub energy_tolerance: f64,
    pub quadrature_points: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            mean_bound: None,
            dt: 0.0025,
            t_end: 25.0,
            galerkin_mode: GalerkinMode::Fem,
            n_modes: 16,
            stabilization: None,
            history_mode: HistoryMode::Prony,
            s_max: None,
            n_s: None,
            energy_tolerance: 1e-9,
            quadrature_points: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialSection {
    pub kind: PotentialKind,
    /// `F(r) = Σ coefficients[k] r^k` for `kind = "polynomial"`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<f64>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            kind: PotentialKind::DoubleWell,
            coefficients: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `ν = Σ c_i λ_i e^{−λ_i s}` from `terms = [[c, λ], …]`.
    ExponentialSum,
    /// `ν = ε⁻² e^{−s/ε}` from `eps`.
    Relaxation,
    /// Two-column table read from `path`.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub kind: KernelKind,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            kind: KernelKind::ExponentialSum,
            terms: vec![[1.0, 1.0]],
            eps: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Prescribed mean plus a seeded random sine series.
    Random,
    /// Interior nodal values read from `path`, one per line.
    File,
    /// A Newton steady state with the given mean, plus the random series.
    PerturbedEquilibrium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    pub kind: InitialKind,
    pub mean: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Number of random sine modes.
    pub modes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub history: InitialHistory,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: InitialKind::Random,
            mean: 0.0,
            amplitude: 0.5,
            seed: 42,
            modes: 2,
            path: None,
            history: InitialHistory::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Steps between state checkpoints; 0 writes none.
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub dissipation_fit: bool,
    pub omega_limit: bool,
    /// `‖∂_t u‖` threshold of the ω-limit probe.
    pub omega_tolerance: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            dissipation_fit: true,
            omega_limit: true,
            omega_tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub potential: PotentialSection,
    pub kernel: KernelSection,
    pub initial: InitialSection,
    pub output: OutputSection,
    pub diagnostics: DiagnosticsSection,
}

impl RunConfig {
    /// Reads, parses and validates a config file. Relative file paths inside
    /// the config are resolved against the config's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.kernel.path, &mut cfg.initial.path]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the file system.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.n_cells < 2 {
            return Err(Error::Config(format!(
                "need at least 2 cells, got {}",
                self.mesh.n_cells
            )));
        }
        if !(self.mesh.b > self.mesh.a) {
            return Err(Error::Config(format!(
                "empty interval ({}, {})",
                self.mesh.a, self.mesh.b
            )));
        }
        self.solver_config()?.validate()?;
        self.potential_spec()?;
        if self.kernel.kind == KernelKind::Table {
            require_file(self.kernel.path.as_deref(), "kernel table")?;
        }
        self.kernel_spec()?;
        if self.initial.kind == InitialKind::File {
            require_file(self.initial.path.as_deref(), "initial field")?;
        }
        if self.initial.seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "seed {} exceeds the TOML integer range (at most {})",
                self.initial.seed,
                i64::MAX
            )));
        }
        if !(self.initial.amplitude.is_finite() && self.initial.mean.is_finite()) {
            return Err(Error::Config(
                "initial mean and amplitude must be finite".into(),
            ));
        }
        if !(self.diagnostics.omega_tolerance > 0.0) {
            return Err(Error::Config("omega_tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        build_interval_mesh(self.mesh.a, self.mesh.b, self.mesh.n_cells)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        match self.potential.kind {
            PotentialKind::DoubleWell => {
                if !self.potential.coefficients.is_empty() {
                    return Err(Error::Config("double_well takes no coefficients".into()));
                }
                Ok(PotentialSpec::double_well())
            }
            PotentialKind::Polynomial => {
                PotentialSpec::polynomial(self.potential.coefficients.clone())
                    .map_err(|e| Error::Config(e.to_string()))
            }
        }
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let k = match self.kernel.kind {
            KernelKind::ExponentialSum => KernelSpec::exponential_sum(
                self.kernel.terms.iter().map(|t| (t[0], t[1])).collect(),
            ),
            KernelKind::Relaxation => {
                let eps = self
                    .kernel
                    .eps
                    .ok_or_else(|| Error::Config("relaxation kernel needs eps".into()))?;
                KernelSpec::relaxation(eps)
            }
            KernelKind::Table => {
                let path = self
                    .kernel
                    .path
                    .as_deref()
                    .ok_or_else(|| Error::Config("table kernel needs path".into()))?;
                KernelSpec::read_table(path)
            }
        };
        k.map_err(|e| match e {
            Error::Parse(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let stabilization = match s.stabilization {
            Some(v) => v,
            None => self.potential_spec()?.c_f,
        };
        Ok(SolverConfig {
            alpha: s.alpha,
            beta: s.beta,
            mean_bound: s.mean_bound,
            dt: s.dt,
            t_end: s.t_end,
            galerkin_mode: s.galerkin_mode,
            n_modes: s.n_modes,
            stabilization,
            history_mode: s.history_mode,
            s_max: s.s_max,
            n_s: s.n_s,
            energy_tolerance: s.energy_tolerance,
            quadrature_points: s.quadrature_points,
        })
    }

    pub fn discretization(&self) -> Result<Discretization> {
        let pot = self.potential_spec()?;
        let cfg = self.solver_config()?;
        if cfg.stabilization < pot.c_f {
            return Err(Error::Config(format!(
                "stabilization {} is below the concavity bound c_F = {}",
                cfg.stabilization, pot.c_f
            )));
        }
        Discretization::new(self.mesh()?, cfg, pot, self.kernel_spec()?)
    }

    /// Interior nodal values of `u₀`.
    pub fn initial_field(&self, disc: &Discretization) -> Result<DVector<f64>> {
        let init = &self.initial;
        match init.kind {
            InitialKind::Random => Ok(random_field(
                disc,
                init.mean,
                init.amplitude,
                init.seed,
                init.modes,
            )),
            InitialKind::File => {
                let path = init
                    .path
                    .as_deref()
                    .ok_or_else(|| Error::Config("initial file needs path".into()))?;
                read_field(path, disc.mesh.interior_count())
            }
            InitialKind::PerturbedEquilibrium => {
                let guess = random_field(disc, init.mean, 1.0, init.seed, init.modes);
                let ss = disc.steady_state(init.mean, &guess)?;
                let noise = random_field(
                    disc,
                    0.0,
                    init.amplitude,
                    init.seed.wrapping_add(1),
                    init.modes,
                );
                Ok(ss.u + noise)
            }
        }
    }

    pub fn initial_state(&self, disc: &Discretization) -> Result<SimState> {
        let u0 = self.initial_field(disc)?;
        disc.initial_state(&u0, self.initial.history)
    }
}

fn require_file(path: Option<&Path>, what: &str) -> Result<()> {
    match path {
        Some(p) if p.is_file() => Ok(()),
        Some(p) => Err(Error::Config(format!(
            "{what} {} does not exist",
            p.display()
        ))),
        None => Err(Error::Config(format!("{what} needs a path"))),
    }
}

/// `Σ_k a_k sin(2kπ ξ)/k` with seeded `a_k ∈ [−A, A]` on `ξ = (x − a)/|Ω|`,
/// plus a multiple of `sin(π ξ)` that sets the discrete mean to `mean`.
pub fn random_field(
    disc: &Discretization,
    mean: f64,
    amplitude: f64,
    seed: u64,
    modes: usize,
) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..modes)
        .map(|_| amplitude * rng.gen_range(-1.0..1.0))
        .collect();
    let (a, len) = (disc.mesh.a, disc.mesh.measure());
    let pi = std::f64::consts::PI;
    let xi: Vec<f64> = disc
        .mesh
        .interior_nodes()
        .iter()
        .map(|&x| (x - a) / len)
        .collect();
    let mut u = DVector::from_iterator(
        xi.len(),
        xi.iter().map(|&t| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (2.0 * (k + 1) as f64 * pi * t).sin() / (k + 1) as f64)
                .sum::<f64>()
        }),
    );
    let bump = DVector::from_iterator(xi.len(), xi.iter().map(|&t| (pi * t).sin()));
    let bump_mean = disc.mean(&disc.project(&bump));
    let shift = (mean - disc.mean(&disc.project(&u))) / bump_mean;
    u += bump * shift;
    u
}

/// One value per line (or the last column of each line); `#` comments.
fn read_field(path: &Path, n: usize) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut vals = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let last = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .next_back()
            .unwrap();
        vals.push(
            last.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 1)))?,
        );
    }
    if vals.len() != n {
        return Err(Error::Config(format!(
            "{} holds {} values, the mesh has {n} interior nodes",
            path.display(),
            vals.len()
        )));
    }
    Ok(DVector::from_vec(vals))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_round_trips() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn full_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.solver.mean_bound = Some(0.5);
        cfg.solver.stabilization = Some(10.0);
        cfg.solver.history_mode = HistoryMode::Grid;
        cfg.solver.s_max = Some(40.0);
        cfg.potential.kind = PotentialKind::Polynomial;
        cfg.potential.coefficients = vec![0.25, 0.0, -0.5, 0.0, 0.25];
        cfg.kernel.kind = KernelKind::Relaxation;
        cfg.kernel.eps = Some(0.1);
        cfg.initial.history = InitialHistory::Stationary;
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[mesh]\nn_cels = 8\n").is_err());
        assert!(RunConfig::from_toml("[meshes]\n").is_err());
    }

    #[test]
    fn beta_and_alpha_validated() {
        let cfg = RunConfig::from_toml("[solver]\nbeta = 0.2\n").unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("beta must lie in (1/4, 1)"), "{msg}");
        let cfg = RunConfig::from_toml("[solver]\nalpha = 0.0\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn oversized_seed_rejected() {
        let mut cfg = RunConfig::default();
        cfg.initial.seed = u64::MAX;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn missing_files_rejected() {
        let cfg =
            RunConfig::from_toml("[initial]\nkind = \"file\"\npath = \"/nonexistent/u.txt\"\n")
                .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_file(Path::new("/nonexistent/run.toml")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn random_field_has_requested_mean() {
        let mut cfg = RunConfig::default();
        cfg.mesh.n_cells = 16;
        let d = cfg.discretization().unwrap();
        for mean in [0.0, 0.3, -0.2] {
            let u = random_field(&d, mean, 0.5, 7, 3);
            assert!((d.mean(&d.project(&u)) - mean).abs() < 1e-14);
        }
        assert_eq!(
            random_field(&d, 0.1, 0.5, 7, 3),
            random_field(&d, 0.1, 0.5, 7, 3)
        );
    }
}
