/* Minimal C client for the cone-attention C ABI: builds a config, scores
 * a pair, runs a tiny attention read-out, and checks basic invariants. */

#include <math.h>
#include <stdio.h>
#include <string.h>

#include "cone_attention.h"

static int check(int cond, const char *what) {
    if (!cond) {
        fprintf(stderr, "FAIL: %s (last error: %s)\n", what, ca_last_error_message());
        return 1;
    }
    return 0;
}

int main(void) {
    int failures = 0;

    CaConfig *config = ca_config_new("umbral");
    failures += check(config != NULL, "config creation");
    failures += check(ca_config_set_gamma(config, 2.0) == CA_STATUS_OK, "set gamma");
    failures += check(ca_config_set_gamma(config, -1.0) == CA_STATUS_INVALID_ARGUMENT,
                      "negative gamma rejected");

    /* psi(0, 0) has height 1, so the self-logit is -gamma * 1 */
    double q[2] = {0.0, 0.0};
    double logit = 0.0;
    failures += check(ca_logit(config, q, q, 2, &logit) == CA_STATUS_OK, "self logit");
    failures += check(fabs(logit + 2.0) < 1e-12, "self logit value");

    /* one query, two identical keys: output is the value average */
    double queries[2] = {0.1, 0.2};
    double keys[4] = {0.4, -0.3, 0.4, -0.3};
    double values[4] = {1.0, 0.0, 0.0, 1.0};
    double out[2] = {0.0, 0.0};
    failures += check(
        ca_attend(config, queries, 1, keys, 2, 2, values, 2, NULL, out) == CA_STATUS_OK,
        "attend");
    failures += check(fabs(out[0] - 0.5) < 1e-12 && fabs(out[1] - 0.5) < 1e-12,
                      "attend averages identical keys");

    ca_config_free(config);
    ca_config_free(NULL); /* null must be a no-op */

    failures += check(ca_config_new("bogus") == NULL, "unknown kernel rejected");
    failures += check(strlen(ca_last_error_message()) > 0, "error message populated");

    if (failures == 0) {
        printf("smoke: all checks passed (version %s)\n", ca_version());
        return 0;
    }
    return 1;
}
