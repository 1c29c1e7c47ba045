#ifndef BERRYGRIP_H
#define BERRYGRIP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_ARGUMENT = 2,
  BG_STATUS_OUT_OF_RANGE = 3,
  BG_STATUS_PARSE = 4,
  BG_STATUS_SIMULATION = 5,
  BG_STATUS_PANIC = 6,
} BgStatus;

/**
 * Opaque gripper geometry.
 */
typedef struct BgGeometry BgGeometry;

/**
 * Circle fitted to the three sensor hits, gripper frame, mm.
 */
typedef struct BgSection {
  double qx;
  double qy;
  double d_sec;
} BgSection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *bg_last_error(void);

/**
 * Library version as a static string.
 */
const char *bg_version(void);

/**
 * Geometry with the default mechanical constants. Never null.
 */
struct BgGeometry *bg_geometry_default(void);

/**
 * Geometry from JSON with every field present.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum BgStatus bg_geometry_from_json(const char *json, struct BgGeometry **out);

/**
 * Releases a geometry handle. Null is ignored.
 *
 * # Safety
 * `g` must come from this library and not be used afterwards.
 */
void bg_geometry_free(struct BgGeometry *g);

/**
 * Servo angle limit, rad.
 *
 * # Safety
 * `g` must be a live handle or null.
 */
enum BgStatus bg_geometry_phi_max(const struct BgGeometry *g, double *out);

/**
 * Opening radius for servo angle `phi` (rad), mm.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_forward_opening(const struct BgGeometry *g, double phi, double *out);

/**
 * Servo angle (rad) that opens the fingers to `r` mm.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_servo_for_opening(const struct BgGeometry *g, double r, double *out);

/**
 * Finger angle (rad) for servo angle `phi`.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_finger_angle(const struct BgGeometry *g, double phi, double *out);

/**
 * Cutter blade angle (rad) for a non-positive servo angle.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_cutter_angle(const struct BgGeometry *g, double phi, double *out);

/**
 * Section circle from three sensor distances (mm, along the sensor axes)
 * taken at finger angle `theta`.
 *
 * # Safety
 * `g` must be a live handle, `mdp` point to three doubles and `out` be valid.
 */
enum BgStatus bg_estimate_section(const struct BgGeometry *g,
                                  double theta,
                                  const double *mdp,
                                  struct BgSection *out);

/**
 * Height of the sensed section above the joint plane, mm.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_section_height(const struct BgGeometry *g, double theta, double mdp1, double *out);

/**
 * Upward arm correction (mm) that leaves `l_stem` of stem, using the
 * default shape model.
 *
 * # Safety
 * `g` must be a live handle and `out` valid.
 */
enum BgStatus bg_stem_offset(const struct BgGeometry *g,
                             double d_max,
                             double d_sec,
                             double l_sg,
                             double l_stem,
                             double *out);

/**
 * Runs the picking cycle over a scenario and returns the run report as JSON.
 * `config_json` (partial configuration) and `seed` (overrides the scenario
 * seed) may be null. Free the report with `bg_string_free`.
 *
 * # Safety
 * String arguments must be nul-terminated; `report_json` must be valid.
 */
enum BgStatus bg_simulate(const char *scenario_json,
                          const char *config_json,
                          const uint64_t *seed,
                          char **report_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void bg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BERRYGRIP_H */
