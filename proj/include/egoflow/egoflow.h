#ifndef EGOFLOW_EGOFLOW_H
#define EGOFLOW_EGOFLOW_H

/* C interface to the egoflow library: pipeline sessions and trained models.
 *
 * Every call returns an egoflow_status. On failure, egoflow_last_error()
 * describes the most recent error of the calling thread. */

#include <stddef.h>
#include <stdint.h>

#if defined(EGOFLOW_BUILDING)
#define EGOFLOW_API __attribute__((visibility("default")))
#else
#define EGOFLOW_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum egoflow_status {
  EGOFLOW_OK = 0,
  EGOFLOW_ERR_RUNTIME = 1,
  EGOFLOW_ERR_MISSING_INPUT = 2,
  EGOFLOW_ERR_CONFIG = 3
} egoflow_status;

typedef struct egoflow_session egoflow_session;
typedef struct egoflow_model egoflow_model;

EGOFLOW_API const char* egoflow_version(void);
EGOFLOW_API const char* egoflow_last_error(void);

/* config_path may be NULL for built-in defaults. */
EGOFLOW_API egoflow_status egoflow_session_open(const char* config_path, const char* out_dir, egoflow_session** session);
EGOFLOW_API void egoflow_session_close(egoflow_session* session);

/* Overrides a dotted config key ("eval.steps") with a JSON value ("20"). */
EGOFLOW_API egoflow_status egoflow_session_override(egoflow_session* session, const char* dotted_key, const char* json_value);

/* Runs synth, corrupt, build, stats, train, eval, ablate or report. */
EGOFLOW_API egoflow_status egoflow_session_run(egoflow_session* session, const char* command);

/* Summary text of the last successful run; valid until the next run or close. */
EGOFLOW_API const char* egoflow_session_output(const egoflow_session* session);

/* The merged configuration as JSON; valid until the next call on the session. */
EGOFLOW_API const char* egoflow_session_config(egoflow_session* session);

EGOFLOW_API egoflow_status egoflow_model_load(const char* checkpoint_path, egoflow_model** model);
EGOFLOW_API void egoflow_model_free(egoflow_model* model);

/* History and future horizons and the number of candidate modes. */
EGOFLOW_API egoflow_status egoflow_model_info(const egoflow_model* model, int* history_steps, int* future_steps, int* modes);

/* Predicts world-frame futures for one scene.
 *   history:    agents x (2 * history_steps) doubles, row-major, x/y interleaved
 *   mask:       agents x history_steps doubles in {0, 1}
 *   ego_index:  row of the ego agent
 *   out_traj:   k x agents x (2 * future_steps) doubles, candidate-major
 *   out_logits: k x agents doubles, may be NULL
 * Invisible steps are filled from visible neighbours before encoding. */
EGOFLOW_API egoflow_status egoflow_model_predict(const egoflow_model* model, const double* history, const double* mask,
                                     int agents, int ego_index, int k, int steps, uint64_t seed, double* out_traj,
                                     double* out_logits);

#ifdef __cplusplus
}
#endif

#endif
