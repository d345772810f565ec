#ifndef DYNSIMPLEX_H
#define DYNSIMPLEX_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsController {
  DS_CONTROLLER_PERFORMANT = 0,
  DS_CONTROLLER_SAFETY = 1,
} DsController;

/**
 * Result code of every call.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_CONFIG = 3,
  DS_STATUS_IO = 4,
  DS_STATUS_RUNTIME = 5,
  DS_STATUS_PANIC = 6,
} DsStatus;

/**
 * Opaque experiment configuration with a lazily built surrogate.
 */
typedef struct DsExperiment DsExperiment;

/**
 * Opaque lookup-table surrogate.
 */
typedef struct DsLut DsLut;

typedef struct DsWeights {
  double alpha1;
  double alpha2;
  double alpha3;
  uint32_t m_s;
} DsWeights;

typedef struct DsOcclusionReport {
  bool occluded;
  double blob_ratio;
  size_t blobs;
} DsOcclusionReport;

/**
 * Situation for a lookup-table query. `road_type` is a NUL-terminated name
 * such as "MainRoad"; `density` is 0 (low), 1 (medium) or 2 (high).
 */
typedef struct DsBeliefQuery {
  const char *road_type;
  double curvature;
  bool traffic_sign;
  double cloudiness;
  double precipitation;
  double precipitation_deposit;
  uint32_t density;
  bool degraded;
} DsBeliefQuery;

typedef struct DsBelief {
  /**
   * normalized speed in [0, 1]
   */
  double perf_score;
  /**
   * collision likelihood in [0, 1]
   */
  double safety_score;
  /**
   * mean speed of the neighbours, m/s
   */
  double raw_speed;
} DsBelief;

typedef struct DsEpisodeMetrics {
  double travel_time;
  double route_completion;
  bool vehicle_collision;
  bool object_collision;
  uint32_t switch_count;
  uint32_t reverse_switches;
  double infraction;
  double mean_decision_latency_ms;
  bool timed_out;
} DsEpisodeMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ds_last_error(void);

/**
 * Switching penalty: 0 for `omega` <= 1, else `omega / m_s` capped at 1.
 */
enum DsStatus ds_switch_cost(uint32_t omega, uint32_t m_s, double *out);

enum DsStatus ds_forward_reward(double perf,
                                double collision,
                                const struct DsWeights *w,
                                double *out);

enum DsStatus ds_reverse_reward(double perf,
                                double collision,
                                uint32_t omega,
                                const struct DsWeights *w,
                                double *out);

enum DsStatus ds_infraction_score(double route_completion,
                                  bool vehicle_collision,
                                  bool object_collision,
                                  double *out);

/**
 * Runs the occlusion detector with default thresholds on a row-major 8-bit
 * grayscale image of `width * height` bytes.
 */
enum DsStatus ds_detect_occlusion(const uint8_t *pixels,
                                  size_t width,
                                  size_t height,
                                  struct DsOcclusionReport *out);

/**
 * Loads a lookup-table CSV. `k` neighbours, `v_max` m/s speed normalizer.
 */
enum DsStatus ds_lut_load(const char *path, size_t k, double v_max, struct DsLut **out);

enum DsStatus ds_lut_len(const struct DsLut *lut, size_t *out);

/**
 * Belief of `controller` in the queried situation.
 */
enum DsStatus ds_lut_belief(const struct DsLut *lut,
                            const struct DsBeliefQuery *query,
                            enum DsController controller,
                            struct DsBelief *out);

void ds_lut_free(struct DsLut *lut);

/**
 * Parses an experiment configuration document.
 */
enum DsStatus ds_experiment_from_json(const char *json, struct DsExperiment **out);

/**
 * Reads a configuration file; the DS_SEED environment variable overrides its seed.
 */
enum DsStatus ds_experiment_load(const char *path, struct DsExperiment **out);

enum DsStatus ds_experiment_set_seed(struct DsExperiment *exp, uint64_t seed);

/**
 * Runs the whole matrix into `out_dir` (NULL: the configured directory).
 */
enum DsStatus ds_experiment_run(const struct DsExperiment *exp,
                                const char *out_dir,
                                uint32_t jobs,
                                size_t *episodes);

/**
 * Runs one episode of `strategy` (e.g. "DS") on a track named in the config.
 * `schedule` is "none", "permanent_at_random" or "intermittent".
 */
enum DsStatus ds_experiment_run_episode(const struct DsExperiment *exp,
                                        const char *track,
                                        const char *strategy,
                                        const char *schedule,
                                        uint64_t seed,
                                        struct DsEpisodeMetrics *out);

void ds_experiment_free(struct DsExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYNSIMPLEX_H */
