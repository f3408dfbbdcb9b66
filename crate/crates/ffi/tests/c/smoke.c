#include <stdio.h>
#include <string.h>
#include "numanchor.h"

int main(void) {
    double v = 0;
    if (na_parse_numeral("1,234.5", &v) != NA_STATUS_OK || v != 1234.5) return 1;
    if (na_parse_numeral("2nd", &v) != NA_STATUS_DOMAIN) return 2;
    if (na_last_error_message() == NULL) return 3;

    double values[40];
    for (int i = 0; i < 40; i++) values[i] = i % 2 ? 1000.0 + i : 1.0 + i;
    NaAnchorTable *t = NULL;
    if (na_anchor_table_fit(values, 40, 2, NA_SPACE_LOG, 5, 1, &t) != NA_STATUS_OK) return 4;
    if (na_anchor_table_len(t) != 2) return 5;

    char *out = NULL;
    if (na_augment_text(t, "ln-anchors-dir", "about 7 apples", &out) != NA_STATUS_OK) return 6;
    if (strstr(out, "<LA>") == NULL && strstr(out, "<RA>") == NULL) return 7;
    char *back = NULL;
    if (na_strip_text(out, &back) != NA_STATUS_OK || strcmp(back, "about 7 apples") != 0) return 8;
    na_string_free(out);
    na_string_free(back);
    na_anchor_table_free(t);
    printf("ok %s\n", na_version());
    return 0;
}
