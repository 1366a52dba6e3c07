#include <math.h>
#include <stdio.h>

#include "owb.h"

int main(void) {
    size_t rounds[3] = {2, 3, 1};
    double values[12] = {1, 2, 3, 4, 0, NAN, 2, 1, 4, 3, 5, NAN};
    OwbPanel *panel = NULL;
    OwbStatus s = owb_panel_new(3, 2, rounds, values, NULL, &panel);
    if (s != OWB_STATUS_OK) {
        fprintf(stderr, "%s: %s\n", owb_status_str(s), owb_last_error_message());
        return 1;
    }
    double mu[2], lo[2], hi[2];
    s = owb_bootstrap_ci(panel, NULL, 2000, 0.90, 42, mu, lo, hi);
    if (s != OWB_STATUS_OK) {
        fprintf(stderr, "%s: %s\n", owb_status_str(s), owb_last_error_message());
        owb_panel_free(panel);
        return 1;
    }
    for (size_t j = 0; j < owb_panel_n_petals(panel); j++)
        printf("petal %zu: %.4f [%.4f, %.4f]\n", j, mu[j], lo[j], hi[j]);
    owb_panel_free(panel);
    return 0;
}
