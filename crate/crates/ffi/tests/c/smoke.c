#include <stdio.h>
#include <string.h>
#include "bts_ffi.h"

#define CHECK(call) do { BtsStatus s_ = (call); if (s_ != BTS_STATUS_OK) { \
    fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, bts_last_error()); return 1; } } while (0)

int main(void) {
    BtsBandit *b = NULL;
    CHECK(bts_bandit_new(3, BTS_UPDATE_METHOD_SUMMATION, 7, &b));
    for (int batch = 0; batch < 20; batch++) {
        for (int i = 0; i < 100; i++) {
            size_t arm;
            CHECK(bts_bandit_select(b, &arm));
            CHECK(bts_bandit_record(b, arm, arm == 2 && i % 3 == 0));
        }
        CHECK(bts_bandit_end_batch(b));
    }
    double a, be, total = 0;
    for (size_t k = 0; k < 3; k++) {
        CHECK(bts_bandit_posterior(b, k, &a, &be));
        total += a + be - 2.0;
    }
    if (total != 2000.0) { fprintf(stderr, "mass %f\n", total); return 1; }
    if (bts_bandit_record(b, 9, true) != BTS_STATUS_INVALID_INPUT) return 1;
    if (bts_last_error() == NULL || strstr(bts_last_error(), "9") == NULL) return 1;
    bts_bandit_free(b);

    BtsCorpus *c = NULL;
    CHECK(bts_corpus_synthetic("articles=3,impressions=2000..4000", 1, &c));
    BtsSimConfig cfg = bts_sim_config_default();
    BtsCorpusTotals t;
    CHECK(bts_corpus_simulate(c, &cfg, &t));
    bts_corpus_free(c);
    printf("ok %llu %llu\n", (unsigned long long)t.impressions, (unsigned long long)t.clicks);
    return 0;
}
