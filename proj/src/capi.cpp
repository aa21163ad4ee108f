#include <mer/mer.h>

#include <mer/beacon_source.hpp>
#include <mer/reward_model.hpp>
#include <mer/run_config.hpp>

#include <fmt/format.h>

#include <exception>
#include <memory>
#include <string>

struct mer_run
{
    mer::RunConfig config;
    std::string messages;
};

struct mer_server
{
    std::unique_ptr<mer::MockBeaconServer> server;
};

namespace {

thread_local std::string last_error;

mer_status status_of(mer::ErrorCode code) noexcept
{
    switch (code) {
    case mer::ErrorCode::domain:
        return MER_ERR_DOMAIN;
    case mer::ErrorCode::not_found:
        return MER_ERR_NOT_FOUND;
    case mer::ErrorCode::backend_unavailable:
        return MER_ERR_BACKEND_UNAVAILABLE;
    case mer::ErrorCode::decode:
        return MER_ERR_DECODE;
    case mer::ErrorCode::conflict:
        return MER_ERR_CONFLICT;
    case mer::ErrorCode::invalid_config:
        return MER_ERR_INVALID_CONFIG;
    case mer::ErrorCode::io:
        return MER_ERR_IO;
    case mer::ErrorCode::audit:
        return MER_ERR_AUDIT;
    }
    return MER_ERR_INTERNAL;
}

mer_status fail(mer_status status, std::string message)
{
    last_error = std::move(message);
    return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
mer_status guarded(Fn &&fn) noexcept
{
    try {
        last_error.clear();
        return fn();
    }
    catch (mer::HaltError const &e) {
        auto message = std::string(e.what());
        if (e.checkpoint()) {
            message += fmt::format(
                " (checkpoint: epoch {} indexed; rerun to resume)",
                e.checkpoint()->last_fully_indexed_epoch);
        }
        return fail(status_of(e.code()), message);
    }
    catch (mer::Error const &e) {
        return fail(status_of(e.code()), e.what());
    }
    catch (std::exception const &e) {
        return fail(MER_ERR_INTERNAL, e.what());
    }
    catch (...) {
        return fail(MER_ERR_INTERNAL, "unknown exception");
    }
}

mer::WeightParams to_params(mer_weight_params const *p)
{
    if (p == nullptr) {
        return {};
    }
    mer::WeightParams out;
    out.base_reward_factor = p->base_reward_factor;
    out.timely_source_weight = p->timely_source_weight;
    out.timely_target_weight = p->timely_target_weight;
    out.timely_head_weight = p->timely_head_weight;
    out.sync_reward_weight = p->sync_reward_weight;
    out.proposer_weight = p->proposer_weight;
    out.weight_denominator = p->weight_denominator;
    out.slots_per_epoch = p->slots_per_epoch;
    out.sync_committee_size = p->sync_committee_size;
    out.epochs_per_sync_period = p->epochs_per_sync_period;
    out.effective_balance_increment = p->effective_balance_increment;
    out.max_effective_balance = p->max_effective_balance;
    out.validate();
    return out;
}

mer_status null_argument(char const *name)
{
    return fail(MER_ERR_INVALID_ARGUMENT, fmt::format("{} must not be null", name));
}

mer_status run_command(mer_run *run, mer::CommandResult (*command)(mer::RunConfig const &))
{
    if (run == nullptr) {
        return null_argument("run");
    }
    run->messages.clear();
    return guarded([&] {
        auto const result = command(run->config);
        for (auto const &line : result.messages) {
            run->messages += line;
            run->messages += '\n';
        }
        if (!result.audits_passed) {
            return fail(MER_ERR_AUDIT, "internal audit failed; see run messages");
        }
        return MER_OK;
    });
}

} // namespace

extern "C" {

const char *mer_last_error(void)
{
    return last_error.c_str();
}

const char *mer_status_name(mer_status status)
{
    switch (status) {
    case MER_OK:
        return "ok";
    case MER_ERR_DOMAIN:
        return "domain";
    case MER_ERR_NOT_FOUND:
        return "not_found";
    case MER_ERR_BACKEND_UNAVAILABLE:
        return "backend_unavailable";
    case MER_ERR_DECODE:
        return "decode";
    case MER_ERR_CONFLICT:
        return "conflict";
    case MER_ERR_INVALID_CONFIG:
        return "invalid_config";
    case MER_ERR_IO:
        return "io";
    case MER_ERR_AUDIT:
        return "audit";
    case MER_ERR_INVALID_ARGUMENT:
        return "invalid_argument";
    case MER_ERR_INTERNAL:
        return "internal";
    }
    return "unknown";
}

const char *mer_version(void)
{
    return "1.0.0";
}

void mer_weight_params_default(mer_weight_params *params)
{
    if (params == nullptr) {
        return;
    }
    mer::WeightParams const d;
    *params = {
        d.base_reward_factor,    d.timely_source_weight,   d.timely_target_weight,
        d.timely_head_weight,    d.sync_reward_weight,     d.proposer_weight,
        d.weight_denominator,    d.slots_per_epoch,        d.sync_committee_size,
        d.epochs_per_sync_period, d.effective_balance_increment, d.max_effective_balance};
}

mer_status mer_base_reward(
    const mer_weight_params *params, uint64_t effective_balance, uint64_t total_active_balance,
    uint64_t *out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        *out = mer::base_reward(effective_balance, total_active_balance, to_params(params));
        return MER_OK;
    });
}

mer_status mer_attestation_reward(
    const mer_weight_params *params, uint8_t flags, uint64_t base_reward,
    uint64_t total_active_balance, uint64_t attesting_source, uint64_t attesting_target,
    uint64_t attesting_head, uint64_t *out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        mer::EpochBalances balances{
            total_active_balance, attesting_source, attesting_target, attesting_head};
        *out = mer::attestation_reward(
            mer::FlagSet::from_bits(flags), base_reward, balances, to_params(params));
        return MER_OK;
    });
}

mer_status mer_attestation_penalty(
    const mer_weight_params *params, uint8_t missed_flags, uint64_t base_reward, uint64_t *out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        *out = mer::attestation_penalty(
            mer::FlagSet::from_bits(missed_flags), base_reward, to_params(params));
        return MER_OK;
    });
}

mer_status mer_sync_participant_reward(
    const mer_weight_params *params, uint64_t total_active_balance, uint64_t *out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        auto const p = to_params(params);
        *out = mer::sync_participant_reward(
            mer::sync_total_reward(mer::total_base_reward(total_active_balance, p), p), p);
        return MER_OK;
    });
}

mer_status mer_proposer_reward(
    const mer_weight_params *params, uint64_t sum_weighted_base, uint64_t sync_signatures,
    uint64_t participant_reward, uint64_t *out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        auto const p = to_params(params);
        *out = mer::proposer_reward(
            mer::proposer_attestation_component(sum_weighted_base, p),
            mer::proposer_sync_component(sync_signatures, participant_reward, p));
        return MER_OK;
    });
}

mer_status mer_slashing(
    const mer_weight_params *params, uint64_t effective_balance, uint64_t *penalty,
    uint64_t *proposer_reward, uint64_t *whistleblower_reward)
{
    if (penalty == nullptr || proposer_reward == nullptr || whistleblower_reward == nullptr) {
        return null_argument("output pointers");
    }
    return guarded([&] {
        auto const amounts = mer::slashing_amounts(effective_balance, to_params(params));
        *penalty = amounts.penalty;
        *proposer_reward = amounts.proposer_reward;
        *whistleblower_reward = amounts.whistleblower_reward;
        return MER_OK;
    });
}

mer_status mer_run_create(mer_run **out)
{
    if (out == nullptr) {
        return null_argument("out");
    }
    return guarded([&] {
        *out = new mer_run{};
        return MER_OK;
    });
}

void mer_run_destroy(mer_run *run)
{
    delete run;
}

mer_status mer_run_load_config(mer_run *run, const char *path)
{
    if (run == nullptr || path == nullptr) {
        return null_argument("run and path");
    }
    return guarded([&] {
        run->config.load(std::filesystem::path(path));
        return MER_OK;
    });
}

mer_status mer_run_set(mer_run *run, const char *key, const char *value)
{
    if (run == nullptr || key == nullptr || value == nullptr) {
        return null_argument("run, key and value");
    }
    return guarded([&] {
        run->config.set(key, value);
        return MER_OK;
    });
}

mer_status mer_run_validate(const mer_run *run)
{
    if (run == nullptr) {
        return null_argument("run");
    }
    return guarded([&] {
        run->config.validate();
        return MER_OK;
    });
}

const char *mer_run_messages(const mer_run *run)
{
    return run == nullptr ? "" : run->messages.c_str();
}

mer_status mer_cmd_simulate(mer_run *run)
{
    return run_command(run, &mer::cmd_simulate);
}

mer_status mer_cmd_analyze(mer_run *run)
{
    return run_command(run, &mer::cmd_analyze);
}

mer_status mer_cmd_report(mer_run *run)
{
    return run_command(run, &mer::cmd_report);
}

mer_status mer_cmd_full(mer_run *run)
{
    return run_command(run, &mer::cmd_full);
}

mer_status mer_run_store_hash(const mer_run *run, uint64_t *out)
{
    if (run == nullptr || out == nullptr) {
        return null_argument("run and out");
    }
    return guarded([&] {
        mer::LedgerStore const store(run->config.store_dir());
        *out = store.content_hash();
        return MER_OK;
    });
}

mer_status mer_server_start(const mer_run *run, const char *host, int port, mer_server **out)
{
    if (run == nullptr || out == nullptr) {
        return null_argument("run and out");
    }
    return guarded([&] {
        auto const &config = run->config;
        config.validate();
        std::shared_ptr<mer::StateProvider> source;
        switch (config.provider) {
        case mer::ProviderKind::sim:
            source = std::make_shared<mer::SimProvider>(config.sim);
            break;
        case mer::ProviderKind::files:
            source = std::make_shared<mer::FileProvider>(
                config.fixtures.value_or(config.states_dir()));
            break;
        case mer::ProviderKind::http:
            return fail(MER_ERR_INVALID_CONFIG, "provider: serve needs sim or files");
        }
        auto server = std::make_unique<mer_server>();
        server->server = std::make_unique<mer::MockBeaconServer>(
            std::move(source), host != nullptr ? host : "127.0.0.1", port);
        *out = server.release();
        return MER_OK;
    });
}

int mer_server_port(const mer_server *server)
{
    return server == nullptr ? -1 : server->server->port();
}

void mer_server_wait(mer_server *server)
{
    if (server != nullptr) {
        server->server->wait();
    }
}

void mer_server_stop(mer_server *server)
{
    if (server != nullptr) {
        server->server->stop();
    }
}

void mer_server_destroy(mer_server *server)
{
    delete server;
}

} // extern "C"
