#include <stdio.h>

#include "gmf.h"

static const char *MODEL =
    "{\"variables\":[{\"id\":0,\"cardinality\":2},{\"id\":1,\"cardinality\":2}],"
    "\"factors\":[{\"scope\":[0,1],\"log_table\":[0,0,0,1]}]}";

int main(void) {
    GmfModel *model = NULL;
    GmfReport *report = NULL;
    GmfOptions opts = gmf_options_default();
    double marginal[2];
    size_t written = 0;
    double elbo = 0.0;

    if (gmf_model_load_json(MODEL, &model) != GMF_STATUS_OK) {
        fprintf(stderr, "load: %s\n", gmf_last_error_message());
        return 1;
    }
    if (gmf_run_gmf(model, "singletons", &opts, &report) != GMF_STATUS_OK) {
        fprintf(stderr, "gmf: %s\n", gmf_last_error_message());
        return 1;
    }
    gmf_report_marginal(report, 0, marginal, 2, &written);
    gmf_report_elbo(report, &elbo);
    printf("q(x0=1) = %.6f, elbo = %.6f\n", marginal[1], elbo);
    gmf_report_free(report);
    gmf_model_free(model);
    return 0;
}
