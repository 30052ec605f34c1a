#ifndef FLOWLAB_H
#define FLOWLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlowlabLimitLabel {
  FLOWLAB_LIMIT_LABEL_NOWHERE_DENSE_SING = 0,
  FLOWLAB_LIMIT_LABEL_LIMIT_CYCLE = 1,
  FLOWLAB_LIMIT_LABEL_LIMIT_QUASI_CIRCUIT = 2,
  FLOWLAB_LIMIT_LABEL_LOCALLY_DENSE_Q_SET = 3,
  FLOWLAB_LIMIT_LABEL_TRANSVERSELY_CANTOR_Q_SET = 4,
  FLOWLAB_LIMIT_LABEL_QUASI_Q_SET_IN_SING_P = 5,
  FLOWLAB_LIMIT_LABEL_SELF_CLOSED = 6,
  FLOWLAB_LIMIT_LABEL_UNDECIDED = 7,
} FlowlabLimitLabel;

typedef enum FlowlabStatus {
  FLOWLAB_STATUS_OK = 0,
  FLOWLAB_STATUS_NULL_POINTER = 1,
  FLOWLAB_STATUS_INVALID_UTF8 = 2,
  FLOWLAB_STATUS_CONFIG = 3,
  FLOWLAB_STATUS_INVALID_PARAMETER = 4,
  FLOWLAB_STATUS_OUT_OF_ATLAS = 5,
  FLOWLAB_STATUS_NUMERICAL = 6,
  FLOWLAB_STATUS_IO = 7,
  FLOWLAB_STATUS_PANIC = 8,
} FlowlabStatus;

/**
 * A vector field on a surface, possibly with surgeries applied.
 */
typedef struct FlowlabField FlowlabField;

/**
 * The JSON report of one run.
 */
typedef struct FlowlabReport FlowlabReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next flowlab call on the same thread.
 */
const char *flowlab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *flowlab_version(void);

/**
 * Builds a field from a TOML fragment in the `[field]` layout:
 * `base = { type = ... }` plus optional `[[surgery]]` tables.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FlowlabStatus flowlab_field_from_toml(const char *toml, struct FlowlabField **out);

/**
 * # Safety
 * `field` must come from [`flowlab_field_from_toml`] and not be used again.
 */
void flowlab_field_free(struct FlowlabField *field);

/**
 * Field value at chart coordinates `(u, v)`, written to `out[0..2]`.
 *
 * # Safety
 * `field` must be a live handle and `out` point to two doubles.
 */
enum FlowlabStatus flowlab_field_eval(const struct FlowlabField *field,
                                      uint8_t chart,
                                      double u,
                                      double v,
                                      double *out);

/**
 * Classifies the omega (`omega != 0`) or alpha limit set of the orbit
 * through `(u, v)` with default tunables and the given time budget.
 *
 * # Safety
 * `field` must be a live handle and `out` a valid pointer.
 */
enum FlowlabStatus flowlab_classify(const struct FlowlabField *field,
                                    uint8_t chart,
                                    double u,
                                    double v,
                                    int32_t omega,
                                    double budget,
                                    enum FlowlabLimitLabel *out);

/**
 * Runs a complete configuration (same format as the command line tool)
 * single-threaded and returns its report. Output paths in the
 * configuration are ignored.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FlowlabStatus flowlab_run(const char *config, struct FlowlabReport **out);

/**
 * JSON text of a report; valid while the report lives.
 *
 * # Safety
 * `report` must be a live handle or null (which yields null).
 */
const char *flowlab_report_json(const struct FlowlabReport *report);

/**
 * # Safety
 * `report` must come from [`flowlab_run`] and not be used again.
 */
void flowlab_report_free(struct FlowlabReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWLAB_H */
