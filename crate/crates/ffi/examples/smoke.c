/* Opens the default gripper to 30 mm and runs the isolated scenario. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "berrygrip.h"

static const char *SCENARIO =
    "{\"name\": \"c\", \"seed\": 3, \"berries\": [{\"id\": 0, \"center\": [0, 0, 270],"
    " \"d_max\": 30, \"stem_diameter\": 2, \"stem_length_available\": 50,"
    " \"incline\": 0, \"incline_azimuth\": 0, \"ripe\": true}]}";

int main(void) {
    BgGeometry *g = bg_geometry_default();
    double phi = 0.0, r = 0.0;
    if (bg_servo_for_opening(g, 30.0, &phi) != BG_STATUS_OK) return 1;
    if (bg_forward_opening(g, phi, &r) != BG_STATUS_OK) return 1;
    if (bg_forward_opening(g, 1.0, &r) != BG_STATUS_OUT_OF_RANGE) return 2;
    if (bg_last_error() == NULL) return 2;
    bg_geometry_free(g);

    char *report = NULL;
    if (bg_simulate(SCENARIO, NULL, NULL, &report) != BG_STATUS_OK) {
        fprintf(stderr, "%s\n", bg_last_error());
        return 3;
    }
    int ok = strstr(report, "\"targets\":1") != NULL;
    printf("%s\n", report);
    bg_string_free(report);
    return ok ? 0 : 4;
}
