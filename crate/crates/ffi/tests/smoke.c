#include <math.h>
#include <stdio.h>
#include "dpsgd.h"

#define CHECK(expr)                                                         \
    do {                                                                    \
        if ((expr) != DPSGD_STATUS_OK) {                                    \
            fprintf(stderr, "%s failed: %s\n", #expr, dpsgd_last_error());  \
            return 1;                                                       \
        }                                                                   \
    } while (0)

int main(void) {
    DpsgdMechanism *mech = NULL;
    CHECK(dpsgd_mechanism_new(16, 2, 0.2, 2.0, 1.0, 4.0, 1000, 1.0, 1, &mech));

    double eps = 0.0;
    bool ok = false;
    CHECK(dpsgd_bound(mech, DPSGD_FAMILY_DC, 1.1, &eps, &ok));
    if (fabs(eps - 1.546369) > 1e-5 || !ok) {
        fprintf(stderr, "unexpected dc bound %f\n", eps);
        return 1;
    }

    if (dpsgd_bound(mech, 42, 1.1, &eps, NULL) != DPSGD_STATUS_PARAMETER_ERROR) {
        return 1;
    }

    DpsgdProblem *problem = NULL;
    CHECK(dpsgd_problem_quadratic(1, 16, 5, 1.0, &problem));
    DpsgdTrace *trace = NULL;
    CHECK(dpsgd_mechanism_set_t(mech, 50));
    CHECK(dpsgd_train(problem, mech, 9, 25, &trace));
    size_t len = dpsgd_trace_len(trace);
    double theta = 0.0;
    CHECK(dpsgd_trace_theta(trace, len - 1, &theta, 1));
    printf("records=%zu eps=%.6f theta=%.4f\n", len, eps, theta);

    dpsgd_trace_free(trace);
    dpsgd_problem_free(problem);
    dpsgd_mechanism_free(mech);
    return len == 3 && fabs(theta) <= 1.0 + 1e-12 ? 0 : 1;
}
