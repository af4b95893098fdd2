#ifndef OBFUSBENCH_H
#define OBFUSBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ObfbStatus {
  OBFB_STATUS_OK = 0,
  OBFB_STATUS_NULL_POINTER = 1,
  OBFB_STATUS_INVALID_UTF8 = 2,
  OBFB_STATUS_INVALID_ARGUMENT = 3,
  OBFB_STATUS_PARSE = 4,
  OBFB_STATUS_NOT_APPLICABLE = 5,
  OBFB_STATUS_IO = 6,
  OBFB_STATUS_INTERNAL = 7,
} ObfbStatus;

/**
 * Change of an obfuscated rate against its base.
 */
typedef enum ObfbChange {
  OBFB_CHANGE_EQUAL = 0,
  OBFB_CHANGE_SMALL_INCREASE = 1,
  OBFB_CHANGE_SMALL_DECREASE = 2,
  OBFB_CHANGE_LARGE_INCREASE = 3,
  OBFB_CHANGE_LARGE_DECREASE = 4,
} ObfbChange;

/**
 * A benchmark case.
 */
typedef struct ObfbCase ObfbCase;

/**
 * A loaded C project plus the renaming facts derived from it.
 */
typedef struct ObfbProject ObfbProject;

/**
 * A compiler-diagnostic rule set.
 */
typedef struct ObfbRuleSet ObfbRuleSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *obfb_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void obfb_string_free(char *s);

/**
 * Sample size for a population of `population` items with finite
 * population correction.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ObfbStatus obfb_sample_size(uint64_t population,
                                 double confidence,
                                 double margin,
                                 double p,
                                 uint64_t *out);

/**
 * Unbiased pass@k for `c` correct samples out of `n`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ObfbStatus obfb_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

/**
 * |base − obf| / base and its marker. Inputs are percentages.
 *
 * # Safety
 * `ratio` and `change` must be valid for writes.
 */
enum ObfbStatus obfb_decrease_ratio(double base,
                                    double obf,
                                    double *ratio,
                                    enum ObfbChange *change);

/**
 * The built-in diagnostic rules.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ObfbStatus obfb_ruleset_builtin(struct ObfbRuleSet **out);

/**
 * Rules from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum ObfbStatus obfb_ruleset_parse(const char *toml, struct ObfbRuleSet **out);

/**
 * # Safety
 * `rules` must be null or a handle from this library, not yet freed.
 */
void obfb_ruleset_free(struct ObfbRuleSet *rules);

/**
 * Category index (0..=21, 21 is "Others") of one diagnostic message.
 *
 * # Safety
 * `rules` must be a live handle, `message` a NUL-terminated string and
 * `out` valid for writes.
 */
enum ObfbStatus obfb_classify_message(const struct ObfbRuleSet *rules,
                                      const char *message,
                                      uint32_t *out);

/**
 * Number of error categories, "Others" included.
 */
uint32_t obfb_category_count(void);

/**
 * Subcategory name of a category index, or null when out of range. The
 * string is static.
 */
const char *obfb_category_sub(uint32_t index);

/**
 * Major category name of a category index, or null when out of range.
 */
const char *obfb_category_major(uint32_t index);

/**
 * Parse one case from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum ObfbStatus obfb_case_from_json(const char *json, struct ObfbCase **out);

/**
 * # Safety
 * `case` must be a live handle; `out` must be valid for writes.
 */
enum ObfbStatus obfb_case_to_json(const struct ObfbCase *case_, char **out);

/**
 * The prompt text for a case.
 *
 * # Safety
 * `case` must be a live handle; `out` must be valid for writes.
 */
enum ObfbStatus obfb_case_prompt(const struct ObfbCase *case_, char **out);

/**
 * # Safety
 * `case` must be null or a handle from this library, not yet freed.
 */
void obfb_case_free(struct ObfbCase *case_);

/**
 * Load a project checkout. Files under `tests` or `test` directories, or
 * with `test` anywhere in their path, are treated as tests.
 *
 * # Safety
 * `root` must be a NUL-terminated path; `out` must be valid for writes.
 */
enum ObfbStatus obfb_project_load(const char *root, struct ObfbProject **out);

/**
 * # Safety
 * `project` must be null or a handle from this library, not yet freed.
 */
void obfb_project_free(struct ObfbProject *project);

/**
 * Obfuscate an original case into `stratum` (`symbol`, `structure`,
 * `semantic`, `symbol+structure` or `symbol+semantic`). Returns
 * `NotApplicable` when the strategy has nothing to transform.
 *
 * # Safety
 * `project` and `case` must be live handles, `stratum` a NUL-terminated
 * string and `out` valid for writes.
 */
enum ObfbStatus obfb_obfuscate(const struct ObfbProject *project,
                               const struct ObfbCase *case_,
                               const char *stratum,
                               uint64_t seed,
                               struct ObfbCase **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OBFUSBENCH_H */
