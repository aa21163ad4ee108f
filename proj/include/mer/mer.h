/* C interface to the reward indexer. All functions are thread-safe with
 * respect to distinct handles. On failure a function returns a non-zero
 * mer_status and mer_last_error() describes it for the calling thread. */
#ifndef MER_MER_H
#define MER_MER_H

#include <stdint.h>

#if defined(_WIN32)
#define MER_API __declspec(dllexport)
#else
#define MER_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mer_status {
    MER_OK = 0,
    MER_ERR_DOMAIN = 1,
    MER_ERR_NOT_FOUND = 2,
    MER_ERR_BACKEND_UNAVAILABLE = 3,
    MER_ERR_DECODE = 4,
    MER_ERR_CONFLICT = 5,
    MER_ERR_INVALID_CONFIG = 6,
    MER_ERR_IO = 7,
    /* Artifacts were written but an internal audit failed. */
    MER_ERR_AUDIT = 8,
    MER_ERR_INVALID_ARGUMENT = 9,
    MER_ERR_INTERNAL = 10
} mer_status;

MER_API const char *mer_last_error(void);
MER_API const char *mer_status_name(mer_status status);
MER_API const char *mer_version(void);

typedef struct mer_weight_params {
    uint64_t base_reward_factor;
    uint64_t timely_source_weight;
    uint64_t timely_target_weight;
    uint64_t timely_head_weight;
    uint64_t sync_reward_weight;
    uint64_t proposer_weight;
    uint64_t weight_denominator;
    uint64_t slots_per_epoch;
    uint64_t sync_committee_size;
    uint64_t epochs_per_sync_period;
    uint64_t effective_balance_increment;
    uint64_t max_effective_balance;
} mer_weight_params;

/* Fills in mainnet defaults. */
MER_API void mer_weight_params_default(mer_weight_params *params);

/* Flags: bit 0 source, bit 1 target, bit 2 head. All amounts in Gwei. A null
 * params pointer selects the defaults. */
MER_API mer_status mer_base_reward(
    const mer_weight_params *params, uint64_t effective_balance, uint64_t total_active_balance,
    uint64_t *out);
MER_API mer_status mer_attestation_reward(
    const mer_weight_params *params, uint8_t flags, uint64_t base_reward,
    uint64_t total_active_balance, uint64_t attesting_source, uint64_t attesting_target,
    uint64_t attesting_head, uint64_t *out);
MER_API mer_status mer_attestation_penalty(
    const mer_weight_params *params, uint8_t missed_flags, uint64_t base_reward, uint64_t *out);
MER_API mer_status mer_sync_participant_reward(
    const mer_weight_params *params, uint64_t total_active_balance, uint64_t *out);
MER_API mer_status mer_proposer_reward(
    const mer_weight_params *params, uint64_t sum_weighted_base, uint64_t sync_signatures,
    uint64_t participant_reward, uint64_t *out);
MER_API mer_status mer_slashing(
    const mer_weight_params *params, uint64_t effective_balance, uint64_t *penalty,
    uint64_t *proposer_reward, uint64_t *whistleblower_reward);

/* Run configuration and commands. */
typedef struct mer_run mer_run;

MER_API mer_status mer_run_create(mer_run **out);
MER_API void mer_run_destroy(mer_run *run);
/* Reads `key = value` lines. Later loads and sets override earlier ones. */
MER_API mer_status mer_run_load_config(mer_run *run, const char *path);
MER_API mer_status mer_run_set(mer_run *run, const char *key, const char *value);
MER_API mer_status mer_run_validate(const mer_run *run);

/* Progress lines from the last command, newline separated. Valid until the
 * next command on the same handle. */
MER_API const char *mer_run_messages(const mer_run *run);

MER_API mer_status mer_cmd_simulate(mer_run *run);
MER_API mer_status mer_cmd_analyze(mer_run *run);
MER_API mer_status mer_cmd_report(mer_run *run);
MER_API mer_status mer_cmd_full(mer_run *run);

/* Store content hash of the run's ledger. */
MER_API mer_status mer_run_store_hash(const mer_run *run, uint64_t *out);

/* Mock beacon HTTP server backed by the run's simulator or fixtures. */
typedef struct mer_server mer_server;

MER_API mer_status mer_server_start(
    const mer_run *run, const char *host, int port, mer_server **out);
MER_API int mer_server_port(const mer_server *server);
/* Blocks until mer_server_stop is called from another thread. */
MER_API void mer_server_wait(mer_server *server);
MER_API void mer_server_stop(mer_server *server);
MER_API void mer_server_destroy(mer_server *server);

#ifdef __cplusplus
}
#endif

#endif
