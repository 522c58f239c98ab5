use frachem::config::{random_field, RunConfig};
use frachem::diagnostics::energy;
use frachem::solver::InitialHistory;
use proptest::prelude::*;

fn small_config(beta: f64, alpha: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh.n_cells = 16;
    cfg.solver.beta = beta;
    cfg.solver.alpha = alpha;
    cfg.solver.dt = 0.01;
    cfg.solver.t_end = 0.2;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_conserve_mass_and_do_not_raise_energy(
        beta in 0.3f64..0.95,
        alpha in 0.25f64..2.0,
        mean in -0.5f64..0.5,
        amplitude in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let cfg = small_config(beta, alpha);
        let disc = cfg.discretization().unwrap();
        let u0 = random_field(&disc, mean, amplitude, seed, 3);
        let mut state = disc.initial_state(&u0, InitialHistory::Zero).unwrap();
        let stepper = disc.stepper().unwrap();
        let m0 = disc.mean(&state.coords);
        let mut e = energy(&disc, &state).energy;
        for _ in 0..20 {
            stepper.step(&mut state).unwrap();
            let m = disc.mean(&state.coords);
            prop_assert!((m - m0).abs() <= 1e-12 * (1.0 + m0.abs()));
            let next = energy(&disc, &state).energy;
            prop_assert!(next <= e + 1e-9, "energy rose from {} to {}", e, next);
            e = next;
        }
    }

    #[test]
    fn config_round_trips(
        n_cells in 2usize..300,
        beta in 0.26f64..0.99,
        alpha in 0.01f64..10.0,
        seed in 0..=i64::MAX as u64,
        mean in -1.0f64..1.0,
        every in 0usize..50,
    ) {
        let mut cfg = RunConfig::default();
        cfg.mesh.n_cells = n_cells;
        cfg.solver.beta = beta;
        cfg.solver.alpha = alpha;
        cfg.initial.seed = seed;
        cfg.initial.mean = mean;
        cfg.output.checkpoint_every = every;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
