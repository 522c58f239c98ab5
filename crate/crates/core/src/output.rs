//! Run driver and on-disk artifacts: `trajectory.csv`, `summary.txt` and
//! optional state checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::{
    dissipation_check, energy_identity_residual, omega_limit_probe, DissipationReport,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::solver::{run, RunOptions, StabilityBreach, StateSample, SteadyState, TrajectoryRecord};

pub const TRAJECTORY_SCHEMA: &str = "# schema v1";
pub const TRAJECTORY_COLUMNS: [&str; 6] = [
    "t",
    "energy",
    "mass",
    "u_dot_norm_sq",
    "history_norm_sq",
    "energy_identity_residual",
];

/// Everything a configured run produces.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: TrajectoryRecord,
    pub dissipation: Option<DissipationReport>,
    pub steady: Option<SteadyState>,
    pub final_state: StateSample,
}

/// Builds, runs and post-processes a configuration without touching disk.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let disc = cfg.discretization()?;
    let mut state = cfg.initial_state(&disc)?;
    let opts = RunOptions {
        sample_every: cfg.output.checkpoint_every,
        stop_on_breach: true,
    };
    let trajectory = run(&disc, &mut state, opts)?;
    let dissipation = if cfg.diagnostics.dissipation_fit && trajectory.breach.is_none() {
        dissipation_check(&trajectory).ok()
    } else {
        None
    };
    let steady = if cfg.diagnostics.omega_limit {
        omega_limit_probe(&disc, &trajectory, &state, cfg.diagnostics.omega_tolerance)
    } else {
        None
    };
    Ok(RunOutcome {
        trajectory,
        dissipation,
        steady,
        final_state: StateSample {
            t: state.t,
            u: state.u.clone(),
            mu: state.mu.clone(),
        },
    })
}

/// Writes all artifacts of `outcome` into `dir` and returns the files written.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mesh = cfg.mesh()?;
    let mut written = Vec::new();

    let p = dir.join("trajectory.csv");
    fs::write(&p, trajectory_csv(&outcome.trajectory))?;
    written.push(p);

    let p = dir.join("summary.txt");
    fs::write(&p, summary_text(cfg, outcome))?;
    written.push(p);

    let p = dir.join("config.toml");
    fs::write(&p, cfg.to_toml()?)?;
    written.push(p);

    let p = dir.join("final_state.csv");
    fs::write(&p, state_csv(&mesh, &outcome.final_state))?;
    written.push(p);

    for (k, s) in outcome.trajectory.samples.iter().enumerate() {
        let p = dir.join(format!("checkpoint_{k:05}.csv"));
        fs::write(&p, state_csv(&mesh, s))?;
        written.push(p);
    }
    Ok(written)
}

pub fn trajectory_csv(traj: &TrajectoryRecord) -> String {
    let resid = energy_identity_residual(traj);
    let mut out = String::new();
    out.push_str(TRAJECTORY_SCHEMA);
    out.push('\n');
    out.push_str(&TRAJECTORY_COLUMNS.join(","));
    out.push('\n');
    for k in 0..traj.len() {
        let row = [
            traj.times[k],
            traj.energy[k],
            traj.mass[k],
            traj.u_dot_norm_sq[k],
            traj.history_norm_sq[k],
            resid[k],
        ];
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses a file written by [`trajectory_csv`] back into its columns.
pub fn read_trajectory_csv(text: &str) -> Result<Vec<[f64; 6]>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRAJECTORY_SCHEMA) {
        return Err(Error::Parse("missing trajectory schema line".into()));
    }
    if lines.next() != Some(TRAJECTORY_COLUMNS.join(",").as_str()) {
        return Err(Error::Parse("unexpected trajectory header".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let vals: Vec<f64> = l
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            vals.try_into()
                .map_err(|_| Error::Parse(format!("row {}: expected 6 columns", i + 1)))
        })
        .collect()
}

/// Nodal `x, u, μ` on all nodes, with `u = 0` at the boundary.
pub fn state_csv(mesh: &Mesh, s: &StateSample) -> String {
    let u = mesh.extend_by_zero(&s.u);
    let mut out = format!("# t = {:.16e}\nx,u,mu\n", s.t);
    for i in 0..mesh.node_count() {
        let x = mesh.a + i as f64 * mesh.h;
        let _ = writeln!(out, "{x:.16e},{:.16e},{:.16e}", u[i], s.mu[i]);
    }
    out
}

pub fn summary_text(cfg: &RunConfig, outcome: &RunOutcome) -> String {
    let traj = &outcome.trajectory;
    let resid = energy_identity_residual(traj);
    let last = traj.len().saturating_sub(1);
    let mut kv: Vec<(&str, String)> = vec![
        ("n_cells", cfg.mesh.n_cells.to_string()),
        ("beta", cfg.solver.beta.to_string()),
        ("alpha", cfg.solver.alpha.to_string()),
        ("dt", cfg.solver.dt.to_string()),
        ("steps", last.to_string()),
        ("t_final", format!("{:.16e}", traj.times[last])),
        ("energy_initial", format!("{:.16e}", traj.energy[0])),
        ("energy_final", format!("{:.16e}", traj.energy[last])),
        ("mass", format!("{:.16e}", traj.mass[0])),
        (
            "mass_drift",
            format!(
                "{:.3e}",
                traj.mass
                    .iter()
                    .map(|m| (m - traj.mass[0]).abs())
                    .fold(0.0, f64::max)
            ),
        ),
        (
            "max_identity_residual",
            format!("{:.3e}", resid.iter().map(|r| r.abs()).fold(0.0, f64::max)),
        ),
        (
            "u_dot_norm_final",
            format!("{:.3e}", traj.u_dot_norm_sq[last].sqrt()),
        ),
        ("max_phase_norm", format!("{:.6e}", traj.max_phase_norm())),
    ];
    kv.push(("energy_stable", traj.breach.is_none().to_string()));
    if let Some(StabilityBreach { step, t, increase }) = traj.breach {
        kv.push(("breach_step", step.to_string()));
        kv.push(("breach_t", t.to_string()));
        kv.push(("breach_increase", format!("{increase:.3e}")));
    }
    if let Some(d) = &outcome.dissipation {
        kv.push(("dissipation_kappa1", format!("{:.6e}", d.fitted_kappa1)));
        kv.push(("dissipation_q", format!("{:.6e}", d.fitted_q)));
        kv.push(("dissipation_c", format!("{:.6e}", d.fitted_c)));
        kv.push(("absorbing_radius", format!("{:.6e}", d.absorbing_radius)));
        kv.push(("dissipation_degenerate", d.degenerate.to_string()));
    }
    match &outcome.steady {
        Some(s) => {
            kv.push(("omega_limit", "found".into()));
            kv.push((
                "omega_limit_residual",
                format!("{:.3e}", s.residuals.last().copied().unwrap_or(0.0)),
            ));
            let dist = (&s.u - &outcome.final_state.u).amax();
            kv.push(("omega_limit_distance", format!("{dist:.3e}")));
        }
        None => kv.push(("omega_limit", "none".into())),
    }
    let mut out = String::new();
    for (k, v) in kv {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.mesh.n_cells = 16;
        cfg.solver.dt = 0.01;
        cfg.solver.t_end = 0.2;
        cfg
    }

    #[test]
    fn trajectory_csv_round_trips() {
        let out = simulate(&short_config()).unwrap();
        let text = trajectory_csv(&out.trajectory);
        let rows = read_trajectory_csv(&text).unwrap();
        assert_eq!(rows.len(), out.trajectory.len());
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r[0], out.trajectory.times[k]);
            assert_eq!(r[1], out.trajectory.energy[k]);
        }
    }

    #[test]
    fn writes_artifacts() {
        let mut cfg = short_config();
        cfg.output.checkpoint_every = 10;
        let out = simulate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(dir.path(), &cfg, &out).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into())
            .collect();
        assert!(
            names.contains(&"checkpoint_00002.csv".to_string()),
            "{names:?}"
        );
        let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.lines().all(|l| l.contains('=')));
        assert!(summary.contains("energy_stable=true"));
        let back = RunConfig::from_file(&dir.path().join("config.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(read_trajectory_csv("t,energy\n").is_err());
        let text = format!(
            "{TRAJECTORY_SCHEMA}\n{}\n1,2\n",
            TRAJECTORY_COLUMNS.join(",")
        );
        assert!(read_trajectory_csv(&text).is_err());
    }
}
