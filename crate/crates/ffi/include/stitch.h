#ifndef STITCH_H
#define STITCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StitchStatus {
  STITCH_STATUS_OK = 0,
  STITCH_STATUS_NULL_ARGUMENT = 1,
  STITCH_STATUS_INVALID_UTF8 = 2,
  STITCH_STATUS_LOAD_ERROR = 3,
  STITCH_STATUS_ANALYSIS_ERROR = 4,
  STITCH_STATUS_REPAIR_ERROR = 5,
  STITCH_STATUS_NOT_FOUND = 6,
  STITCH_STATUS_SESSION_COMPLETE = 7,
  STITCH_STATUS_STALE_HINT = 8,
  STITCH_STATUS_EMPTY_QUESTION = 9,
  STITCH_STATUS_STORAGE_ERROR = 10,
  STITCH_STATUS_INDEX_OUT_OF_RANGE = 11,
  STITCH_STATUS_PANIC = 12,
} StitchStatus;

/**
 * A loaded project together with its media files.
 */
typedef struct StitchProject StitchProject;

typedef struct StitchReport StitchReport;

typedef struct StitchTutor StitchTutor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call into the library on this thread.
 */
const char *stitch_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void stitch_string_free(char *s);

/**
 * Release a byte buffer returned by this library.
 *
 * # Safety
 * `data`/`len` must be exactly what this library returned.
 */
void stitch_bytes_free(uint8_t *data, size_t len);

/**
 * Load a `.sb3` container or a bare `project.json` document.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum StitchStatus stitch_project_load(const uint8_t *data, size_t len, struct StitchProject **out);

/**
 * # Safety
 * `project` must come from this library and not be freed twice.
 */
void stitch_project_free(struct StitchProject *project);

/**
 * The project document as JSON.
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_string_free`].
 */
enum StitchStatus stitch_project_to_json(const struct StitchProject *project, char **out);

/**
 * The project as a `.sb3` container.
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_bytes_free`].
 */
enum StitchStatus stitch_project_to_sb3(const struct StitchProject *project,
                                        uint8_t **out_data,
                                        size_t *out_len);

/**
 * Compare a student project with the reference.
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_report_free`].
 */
enum StitchStatus stitch_diff(const struct StitchProject *student,
                              const struct StitchProject *teacher,
                              struct StitchReport **out);

/**
 * # Safety
 * `report` must come from this library and not be freed twice.
 */
void stitch_report_free(struct StitchReport *report);

/**
 * Number of items; 0 for a null report.
 *
 * # Safety
 * `report` must be null or valid.
 */
size_t stitch_report_len(const struct StitchReport *report);

/**
 * Whether the projects are functionally equivalent.
 *
 * # Safety
 * `report` must be null or valid.
 */
bool stitch_report_equivalent(const struct StitchReport *report);

/**
 * The whole report as JSON.
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_string_free`].
 */
enum StitchStatus stitch_report_to_json(const struct StitchReport *report, char **out);

/**
 * One item as JSON, most critical first.
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_string_free`].
 */
enum StitchStatus stitch_report_item_json(const struct StitchReport *report,
                                          size_t index,
                                          char **out);

/**
 * Apply fixes until the projects match (at most items + 2 rounds).
 *
 * # Safety
 * Pointers must be valid; free the result with [`stitch_project_free`].
 */
enum StitchStatus stitch_fix_all(const struct StitchProject *student,
                                 const struct StitchProject *teacher,
                                 struct StitchProject **out);

/**
 * A tutor with the offline explanation provider. `store_dir` may be null
 * for in-memory sessions.
 *
 * # Safety
 * `store_dir` must be null or a valid string; `out` must be writable.
 */
enum StitchStatus stitch_tutor_new(const char *store_dir, struct StitchTutor **out);

/**
 * # Safety
 * `tutor` must come from this library and not be freed twice.
 */
void stitch_tutor_free(struct StitchTutor *tutor);

/**
 * Start a session; writes `{"sessionId", "revision", "report", "status"}`.
 *
 * # Safety
 * Buffers must hold the given lengths; `description` may be null.
 */
enum StitchStatus stitch_tutor_create_session(const struct StitchTutor *tutor,
                                              const uint8_t *teacher,
                                              size_t teacher_len,
                                              const uint8_t *student,
                                              size_t student_len,
                                              const char *description,
                                              char **out_json);

/**
 * The current hint as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum StitchStatus stitch_tutor_next_hint(const struct StitchTutor *tutor,
                                         const char *session_id,
                                         char **out_json);

/**
 * Apply the fix for a hint; writes the new report and status as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum StitchStatus stitch_tutor_apply_fix(const struct StitchTutor *tutor,
                                         const char *session_id,
                                         const char *hint_id,
                                         char **out_json);

/**
 * Replace the student project; writes the new report and status as JSON.
 *
 * # Safety
 * `student` must hold `student_len` bytes.
 */
enum StitchStatus stitch_tutor_submit_revision(const struct StitchTutor *tutor,
                                               const char *session_id,
                                               const uint8_t *student,
                                               size_t student_len,
                                               char **out_json);

/**
 * Ask a question; writes the reply text.
 *
 * # Safety
 * Pointers must be valid.
 */
enum StitchStatus stitch_tutor_chat(const struct StitchTutor *tutor,
                                    const char *session_id,
                                    const char *question,
                                    char **out_reply);

/**
 * The current report and status as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum StitchStatus stitch_tutor_report(const struct StitchTutor *tutor,
                                      const char *session_id,
                                      char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STITCH_H */
