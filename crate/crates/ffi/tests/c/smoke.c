#include <stdio.h>
#include <string.h>
#include "hyperent.h"

int main(void) {
    double eta = 0.0;
    if (hyperent_afc_efficiency(1.8, 2.0, 0.25, HYPERENT_PEAK_SHAPE_GAUSSIAN, &eta) != HYPERENT_STATUS_OK) return 1;
    if (eta < 0.0445 || eta > 0.0447) return 2;

    HyperentConfig *cfg = hyperent_config_default();
    HyperentReport *report = NULL;
    if (hyperent_run(cfg, "comb-spectrum", 1, &report) != HYPERENT_STATUS_OK) return 3;
    if (hyperent_report_artifact_count(report) != 1) return 4;
    char *name = hyperent_report_artifact_name(report, 0);
    if (strcmp(name, "comb_spectrum.csv") != 0) return 5;
    hyperent_string_free(name);
    hyperent_report_free(report);

    if (hyperent_run(cfg, "nope", 1, &report) != HYPERENT_STATUS_UNKNOWN_SCENARIO) return 6;
    if (report != NULL || hyperent_last_error() == NULL) return 7;
    hyperent_config_free(cfg);
    puts("ok");
    return 0;
}
