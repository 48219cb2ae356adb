#include <stdio.h>
#include <stdlib.h>

#include "gmr.h"

int main(void) {
    const char *sets[] = {"grid.nx=16", "grid.ny=16", "grid.nz=16"};
    GmrSimulation *sim = NULL;
    if (gmr_simulation_new(NULL, sets, 3, &sim) != GMR_STATUS_OK) {
        char msg[512];
        gmr_last_error(msg, sizeof msg);
        fprintf(stderr, "new: %s\n", msg);
        return 1;
    }
    if (gmr_simulation_step(sim, 2) != GMR_STATUS_OK) {
        return 2;
    }
    GmrBudgets b;
    size_t nx, ny, nz, steps;
    gmr_simulation_budgets(sim, &b);
    gmr_simulation_info(sim, &nx, &ny, &nz, &steps);
    double *theta = malloc(nx * ny * nz * sizeof(double));
    if (gmr_simulation_copy_field(sim, GMR_FIELD_THETA, theta, nx * ny * nz) != GMR_STATUS_OK) {
        return 3;
    }
    printf("%zu %zu %zu %zu %.17g %.17g\n", nx, ny, nz, steps, b.theta_max, theta[nx * ny * nz - 1]);
    free(theta);
    gmr_simulation_free(sim);
    return 0;
}
