/* Minimal C client: builds a dense flow, maps a few points forward and
   back, and prints the worst round-trip error. */
#include <math.h>
#include <stdio.h>

#include "flowlab.h"

int main(void) {
    FlowlabModel *m = NULL;
    if (flowlab_model_new_dense(2, 3, FLOWLAB_ACTIVATION_ASINH, 7, &m) != FLOWLAB_STATUS_OK) {
        fprintf(stderr, "new: %s\n", flowlab_last_error());
        return 1;
    }
    double x[8] = {0.5, -1.0, 2.0, 0.25, -3.0, 1.5, 0.0, 0.0};
    double y[8], back[8], ll;
    if (flowlab_model_forward(m, x, 4, y) != FLOWLAB_STATUS_OK ||
        flowlab_model_inverse(m, y, 4, back) != FLOWLAB_STATUS_OK ||
        flowlab_model_log_likelihood(m, x, 4, NULL, &ll) != FLOWLAB_STATUS_OK) {
        fprintf(stderr, "eval: %s\n", flowlab_last_error());
        flowlab_model_free(m);
        return 1;
    }
    double worst = 0.0;
    for (int i = 0; i < 8; i++) {
        double e = fabs(x[i] - back[i]);
        if (e > worst) worst = e;
    }
    FlowlabModel *none = NULL;
    int status = flowlab_model_load("/nonexistent.ckpt", &none);
    printf("version %s roundtrip %.3e ll %.6f load_status %d\n", flowlab_version(), worst, ll, status);
    flowlab_model_free(m);
    return worst < 1e-10 && status == FLOWLAB_STATUS_IO ? 0 : 1;
}
