#include <stdio.h>
#include <string.h>
#include "s2vt.h"

int main(void) {
    const char *refs[] = {"a man is cooking"};
    double score = 0.0;
    if (s2vt_meteor("a man is cooking", refs, 1, &score) != S2VT_STATUS_OK || score != 0.9921875) {
        return 1;
    }
    char *stemmed = NULL;
    if (s2vt_stem("cooking", &stemmed) != S2VT_STATUS_OK || strcmp(stemmed, "cook") != 0) {
        return 2;
    }
    s2vt_string_free(stemmed);
    S2vtModel *model = NULL;
    if (s2vt_model_load("/nonexistent/model.ckpt", &model) != S2VT_STATUS_IO || model != NULL) {
        return 3;
    }
    if (s2vt_last_error() == NULL) {
        return 4;
    }
    printf("ok %s\n", s2vt_version());
    return 0;
}
