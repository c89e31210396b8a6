#include <stdio.h>
#include "trajbench.h"

int main(void) {
    double d = 0.0;
    if (tb_haversine_km(0.0, 0.0, 0.0, 1.0, &d) != TB_STATUS_OK) {
        fprintf(stderr, "%s\n", tb_last_error());
        return 1;
    }
    TbScores *scores = NULL;
    TbLabels *labels = NULL;
    double auc = 0.0;
    size_t hits = 0;
    if (tb_scores_read("scores.jsonl", &scores) == TB_STATUS_OK && tb_labels_read("labels.jsonl", &labels) == TB_STATUS_OK) {
        tb_roc_auc(scores, labels, &auc);
        tb_top_k_hits(scores, labels, 10, &hits);
    }
    tb_scores_free(scores);
    tb_labels_free(labels);
    printf("%s %.2f %.3f %zu\n", tb_version(), d, auc, hits);
    return 0;
}
