/* Train on a TSV file and print test metrics.
 *
 *   cargo build --release -p cwrec-ffi
 *   cc crates/ffi/examples/train_toy.c -Icrates/ffi/include \
 *      -Ltarget/release -lcwrec_ffi -o train_toy
 *   LD_LIBRARY_PATH=target/release ./train_toy data/toy.tsv
 */
#include <stdio.h>
#include <stdlib.h>

#include "cwrec.h"

static int check(CwStatus st, const char *what) {
    if (st != CW_STATUS_OK) {
        const char *msg = cw_last_error_message();
        fprintf(stderr, "%s failed (%d): %s\n", what, (int)st, msg ? msg : "");
        return 1;
    }
    return 0;
}

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s DATA.tsv\n", argv[0]);
        return 2;
    }
    CwConfig *cfg = cw_config_new();
    CwDataset *ds = NULL;
    CwModel *model = NULL;
    int rc = 1;

    if (check(cw_config_set(cfg, "data.path", argv[1]), "config") ||
        check(cw_config_set(cfg, "loss.kind", "CW"), "config") ||
        check(cw_config_set(cfg, "loss.activation", "tanh"), "config") ||
        check(cw_config_set(cfg, "sampler.N", "8"), "config") ||
        check(cw_config_set(cfg, "schedule.epochs", "20"), "config"))
        goto done;
    if (check(cw_dataset_prepare(cfg, &ds), "prepare")) goto done;
    if (check(cw_model_train(cfg, ds, &model), "train")) goto done;

    size_t items = cw_dataset_num_items(ds);
    double *scores = malloc(items * sizeof *scores);
    if (scores && !check(cw_model_score_user(model, 0, scores, items), "score")) {
        printf("user 0, item 0: %.4f\n", scores[0]);
    }
    free(scores);

    CwMetrics m;
    if (check(cw_model_evaluate(model, ds, 20, &m), "evaluate")) goto done;
    printf("recall@20=%.4f ndcg@20=%.4f users=%zu\n", m.recall, m.ndcg, m.users_evaluated);
    rc = 0;

done:
    cw_model_free(model);
    cw_dataset_free(ds);
    cw_config_free(cfg);
    return rc;
}
