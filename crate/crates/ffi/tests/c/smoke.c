#include <stdio.h>
#include <string.h>

#include "neuroisp.h"

#define W 16
#define H 16

int main(void) {
    NeuroispPipeline *p = NULL;
    uint16_t in[W * H];
    uint16_t out[W * H * 3];
    size_t ch = 0;
    char *stats = NULL;

    for (int i = 0; i < W * H; i++) {
        in[i] = (uint16_t)(40 + (i * 7) % 120);
    }
    if (neuroisp_pipeline_new(NULL, W, H, 8, NEUROISP_BAYER_RGGB, &p) != NEUROISP_STATUS_OK) {
        fprintf(stderr, "new: %s\n", neuroisp_last_error());
        return 1;
    }
    if (neuroisp_pipeline_output_channels(p, &ch) != NEUROISP_STATUS_OK || ch != 3) {
        return 2;
    }
    if (neuroisp_pipeline_run(p, in, W * H, out, W * H * ch) != NEUROISP_STATUS_OK) {
        fprintf(stderr, "run: %s\n", neuroisp_last_error());
        return 3;
    }
    if (neuroisp_pipeline_run(p, in, W * H, out, 4) != NEUROISP_STATUS_BUFFER_TOO_SMALL) {
        return 4;
    }
    if (neuroisp_pipeline_stats_json(p, &stats) != NEUROISP_STATUS_OK || stats[0] != '{') {
        return 5;
    }
    neuroisp_string_free(stats);
    if (neuroisp_pipeline_apply_directive(p, "{\"gamma\": 0}") != NEUROISP_STATUS_INVALID_ARGUMENT) {
        return 6;
    }
    neuroisp_pipeline_free(p);
    printf("ok %s %u\n", neuroisp_version(), (unsigned)out[0]);
    return 0;
}
