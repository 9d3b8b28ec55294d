#ifndef HYPERENT_H
#define HYPERENT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes of fallible calls.
typedef enum HyperentStatus {
  HYPERENT_STATUS_OK = 0,
  HYPERENT_STATUS_NULL_POINTER = 1,
  HYPERENT_STATUS_INVALID_UTF8 = 2,
  HYPERENT_STATUS_DOMAIN = 3,
  HYPERENT_STATUS_STRUCTURAL = 4,
  HYPERENT_STATUS_CONFIG = 5,
  HYPERENT_STATUS_FIT = 6,
  HYPERENT_STATUS_IO = 7,
  HYPERENT_STATUS_PARSE = 8,
  HYPERENT_STATUS_UNKNOWN_SCENARIO = 9,
  HYPERENT_STATUS_OUT_OF_RANGE = 10,
  HYPERENT_STATUS_PANIC = 11,
} HyperentStatus;

// Comb peak shape selector for [`hyperent_afc_efficiency`].
typedef enum HyperentPeakShape {
  HYPERENT_PEAK_SHAPE_GAUSSIAN = 0,
  HYPERENT_PEAK_SHAPE_SQUARE = 1,
} HyperentPeakShape;

// Opaque experiment configuration.
typedef struct HyperentConfig HyperentConfig;

// Opaque result of a scenario run.
typedef struct HyperentReport HyperentReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *hyperent_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void hyperent_string_free(char *s);

// Shipped default configuration. Never NULL.
struct HyperentConfig *hyperent_config_default(void);

// Parses and validates a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a writable pointer.
enum HyperentStatus hyperent_config_from_toml(const char *toml, struct HyperentConfig **out);

// # Safety
// `cfg` must come from this library and not be freed twice. NULL is ignored.
void hyperent_config_free(struct HyperentConfig *cfg);

// Configuration serialized as TOML, or NULL for a NULL handle.
//
// # Safety
// `cfg` must be a live handle or NULL.
char *hyperent_config_to_toml(const struct HyperentConfig *cfg);

// Hex SHA-256 of the canonical configuration, or NULL for a NULL handle.
//
// # Safety
// `cfg` must be a live handle or NULL.
char *hyperent_config_digest(const struct HyperentConfig *cfg);

// Sets the coincidence target of each CHSH setting.
//
// # Safety
// `cfg` must be a live handle or NULL.
enum HyperentStatus hyperent_config_set_target_coincidences(struct HyperentConfig *cfg,
                                                            uint64_t target);

// Runs the scenario named `scenario` (`simulate`, `scan-phase`, `scan-hwp`,
// `chsh`, `table1`, `comb-spectrum`, `efficiency`, `crosscheck`).
//
// # Safety
// `cfg` must be a live handle, `scenario` a NUL-terminated string and
// `out` a writable pointer.
enum HyperentStatus hyperent_run(const struct HyperentConfig *cfg,
                                 const char *scenario,
                                 uint64_t seed,
                                 struct HyperentReport **out);

// # Safety
// `report` must come from this library and not be freed twice. NULL is ignored.
void hyperent_report_free(struct HyperentReport *report);

// Report as pretty-printed JSON, or NULL for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
char *hyperent_report_json(const struct HyperentReport *report);

// Number of CSV artifacts; 0 for a NULL handle.
//
// # Safety
// `report` must be a live handle or NULL.
size_t hyperent_report_artifact_count(const struct HyperentReport *report);

// Name of artifact `index`, or NULL when out of range.
//
// # Safety
// `report` must be a live handle or NULL.
char *hyperent_report_artifact_name(const struct HyperentReport *report, size_t index);

// CSV contents of artifact `index`, or NULL when out of range.
//
// # Safety
// `report` must be a live handle or NULL.
char *hyperent_report_artifact_contents(const struct HyperentReport *report, size_t index);

// Storage efficiency of a comb with peak depth `d`, finesse `finesse` and
// background depth `d0`. Teeth sit every 20 MHz over 600 MHz.
//
// # Safety
// `out` must be a writable pointer.
enum HyperentStatus hyperent_afc_efficiency(double d,
                                            double finesse,
                                            double d0,
                                            enum HyperentPeakShape shape,
                                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HYPERENT_H */
