#include <math.h>
#include <stdio.h>
#include "adjoint_lab.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        AdjlStatus s_ = (call);                                            \
        if (s_ != ADJL_STATUS_OK) {                                        \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,              \
                    adjl_last_error() ? adjl_last_error() : "(none)");     \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    AdjlProblem *p = NULL;
    AdjlTrajectory *t = NULL;
    size_t n = 0, np = 0;
    double g[1];

    CHECK(adjl_problem_from_zoo("linear-scalar", &p));
    CHECK(adjl_problem_dims(p, &n, &np));
    if (n != 1 || np != 1) return 1;
    CHECK(adjl_solve_forward(p, "rk4", 1000, &t));
    CHECK(adjl_gradient(p, t, ADJL_METHOD_DISCRETE_ADJOINT, NULL, g, 1));
    if (fabs(g[0] - exp(0.3)) > 1e-6 * exp(0.3)) return 1;

    if (adjl_problem_from_zoo("nope", &p) != ADJL_STATUS_UNKNOWN_NAME) return 1;
    if (adjl_last_error() == NULL) return 1;

    adjl_trajectory_free(t);
    adjl_problem_free(p);
    printf("ok %.15f\n", g[0]);
    return 0;
}
