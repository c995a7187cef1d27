/* Minimal C client: build a model, run it, filter a Pareto set. */
#include <stdio.h>
#include <stdlib.h>

#include "dwnet.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        DwnetStatus s_ = (call);                                           \
        if (s_ != DWNET_STATUS_OK) {                                       \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_,        \
                    dwnet_last_error_message());                           \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    DwnetModel *model = NULL;
    CHECK(dwnet_model_build("dwnet", 4, 3, 3, 1, 1, true, 2, &model));

    uint64_t params = 0;
    CHECK(dwnet_model_param_count(model, &params));

    float x[16 * 16];
    float y[16 * 16];
    for (int i = 0; i < 16 * 16; i++) x[i] = (float)(i % 7) - 3.0f;
    CHECK(dwnet_model_forward(model, x, 1, 16, 16, y, 16 * 16));

    double cost[] = {1.0, 2.0, 3.0};
    double error[] = {3.0, 1.0, 2.0};
    size_t idx[3];
    size_t n = 0;
    CHECK(dwnet_pareto_front(cost, error, 3, idx, 3, &n));

    if (dwnet_model_forward(model, x, 1, 15, 16, y, 16 * 16) == DWNET_STATUS_OK) {
        fprintf(stderr, "odd grid accepted\n");
        return 1;
    }
    dwnet_model_free(model);
    printf("params %llu front %zu first %zu y0 %g\n", (unsigned long long)params, n, idx[0], (double)y[0]);
    return 0;
}
