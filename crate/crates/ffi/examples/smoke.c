/* Minimal C client: runs 100 steps of a small configuration. */
#include <stdio.h>
#include <stdlib.h>
#include "frachem.h"

int main(void) {
    FrachemSim *sim = NULL;
    const char *cfg = "[mesh]\nn_cells = 16\n[solver]\ndt = 0.01\n";
    if (frachem_sim_new_from_config(cfg, &sim) != FRACHEM_STATUS_OK) {
        char msg[256];
        frachem_last_error_message(msg, sizeof msg);
        fprintf(stderr, "create failed: %s\n", msg);
        return 1;
    }
    double e0, e1, m0, m1, t;
    frachem_sim_energy(sim, &e0);
    frachem_sim_mass(sim, &m0);
    if (frachem_sim_step(sim, 100) != FRACHEM_STATUS_OK) return 2;
    frachem_sim_energy(sim, &e1);
    frachem_sim_mass(sim, &m1);
    frachem_sim_time(sim, &t);
    size_t n = 0;
    frachem_sim_node_count(sim, &n);
    double *u = malloc(n * sizeof *u);
    if (frachem_sim_get_u(sim, u, n) != FRACHEM_STATUS_OK) return 3;
    printf("t=%.6f nodes=%zu energy_drop=%d mass_drift=%.3e u0=%g un=%g\n", t, n, e1 <= e0, m1 - m0, u[0], u[n - 1]);
    free(u);
    frachem_sim_free(sim);
    return 0;
}
