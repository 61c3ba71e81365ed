#ifndef ANTCLOUD_H
#define ANTCLOUD_H

/* Generated by cbindgen from the antcloud-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define ANTCLOUD_OK 0

/**
 * A required pointer argument was NULL.
 */
#define ANTCLOUD_ERR_NULL_ARG -1

/**
 * A string argument was not valid UTF-8.
 */
#define ANTCLOUD_ERR_UTF8 -2

/**
 * The scenario text failed to parse or validate.
 */
#define ANTCLOUD_ERR_PARSE -3

/**
 * An argument value was outside its domain.
 */
#define ANTCLOUD_ERR_BAD_ARG -4

/**
 * The simulation aborted internally.
 */
#define ANTCLOUD_ERR_INTERNAL -5

/**
 * An opaque finished-run report.
 */
typedef struct AntcloudReport AntcloudReport;

/**
 * An opaque, resolved scenario ready to run.
 */
typedef struct AntcloudScenario AntcloudScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a borrowed, NUL-terminated string. Never freed.
 */
const char *antcloud_version(void);

/**
 * Message for the most recent failure on this thread, as a borrowed,
 * NUL-terminated string. Valid until the next failing call on the same
 * thread; empty when the last call succeeded.
 */
const char *antcloud_last_error(void);

/**
 * Parse and resolve a scenario from TOML text.
 *
 * On success stores a new handle in `*out` and returns `ANTCLOUD_OK`; the
 * caller owns the handle and must release it with
 * [`antcloud_scenario_free`]. Trace-file workloads resolve relative to the
 * process working directory.
 *
 * # Safety
 * `toml_text` must point to a NUL-terminated string and `out` to a valid
 * pointer slot; both must stay valid for the duration of the call.
 */
int32_t antcloud_scenario_parse(const char *toml_text, struct AntcloudScenario **out);

/**
 * Override the scenario's seed.
 *
 * # Safety
 * `scenario` must be a live handle from [`antcloud_scenario_parse`].
 */
int32_t antcloud_scenario_set_seed(struct AntcloudScenario *scenario, uint64_t seed);

/**
 * Override the scenario's policy: "ant", "round_robin", or "first_fit".
 *
 * # Safety
 * `scenario` must be a live handle and `policy` a NUL-terminated string.
 */
int32_t antcloud_scenario_set_policy(struct AntcloudScenario *scenario, const char *policy);

/**
 * Release a scenario handle. NULL is a no-op.
 *
 * # Safety
 * `scenario` must be NULL or a live handle, and must not be used after.
 */
void antcloud_scenario_free(struct AntcloudScenario *scenario);

/**
 * Run a scenario to its horizon. The scenario handle is not consumed and
 * can be rerun (identical seeds reproduce identical reports). On success
 * stores a new report handle in `*out`, owned by the caller.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer slot.
 */
int32_t antcloud_run(const struct AntcloudScenario *scenario, struct AntcloudReport **out);

/**
 * Serialize a report as pretty JSON. Returns a caller-owned string
 * (release with [`antcloud_string_free`]), or NULL if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle from [`antcloud_run`].
 */
char *antcloud_report_to_json(const struct AntcloudReport *report);

/**
 * Total fleet energy over the run, joules. NaN if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double antcloud_report_fleet_energy_j(const struct AntcloudReport *report);

/**
 * VM-seconds spent in a critical service band. NaN if `report` is NULL.
 *
 * # Safety
 * `report` must be NULL or a live handle.
 */
double antcloud_report_violation_vm_seconds(const struct AntcloudReport *report);

/**
 * Release a report handle. NULL is a no-op.
 *
 * # Safety
 * `report` must be NULL or a live handle, and must not be used after.
 */
void antcloud_report_free(struct AntcloudReport *report);

/**
 * Release a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or a string obtained from this library, and must not be
 * used after.
 */
void antcloud_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANTCLOUD_H */
