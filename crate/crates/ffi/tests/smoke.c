#include <stdio.h>
#include "exmol.h"

int main(void) {
    ExmolParams *p = exmol_params_reference();
    ExmolMeshSpec mesh = {10, 25, 2.0, "0:0.5:20,0.5:3:80,3:4:40"};
    ExmolSolution *sol = NULL;
    if (exmol_solve(p, &mesh, EXMOL_STYLE_AMERICAN, EXMOL_BOUNDARY_CONDITION_STANDARD_VEGA, &sol) != EXMOL_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", exmol_last_error());
        return 1;
    }
    double price = 0.0;
    if (exmol_solution_price(sol, 2.0, 0.56, &price) != EXMOL_STATUS_OK || price < 1.0) {
        fprintf(stderr, "price %f\n", price);
        return 1;
    }
    if (exmol_solution_price(sol, -1.0, 0.56, &price) != EXMOL_STATUS_INVALID_INPUT || exmol_last_error() == NULL) {
        return 1;
    }
    exmol_solution_free(sol);
    exmol_params_free(p);
    printf("ok %s\n", exmol_version());
    return 0;
}
