#include <mer/state_analyzer.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <map>

namespace mer {

namespace {

// Attestation outcome of one epoch, indexed by validator.
struct AttestationResult
{
    std::vector<bool> active;
    std::vector<FlagSet> flags;
    std::vector<Gwei> reward;
    std::vector<Gwei> penalty;
    std::vector<Gwei> maximum;

    SignedGwei net(std::size_t v) const
    {
        if (v >= active.size() || !active[v]) {
            return 0;
        }
        return static_cast<SignedGwei>(reward[v]) - static_cast<SignedGwei>(penalty[v]);
    }
};

Gwei total_active(BeaconStateSnapshot const &s)
{
    Gwei total = 0;
    for (std::size_t v = 0; v < s.registry_size(); ++v) {
        if (s.active[v]) {
            total += s.effective_balances[v];
        }
    }
    return total;
}

AttestationResult settle_attestations(
    BeaconStateSnapshot const &end_n, BeaconStateSnapshot const &end_n1,
    AnalyzerOptions const &options)
{
    auto const &params = options.params;
    auto const n = end_n.registry_size();
    AttestationResult out;
    out.active = end_n.active;
    out.flags = resolve_attestations(end_n, end_n1);
    out.reward.assign(n, 0);
    out.penalty.assign(n, 0);
    out.maximum.assign(n, 0);

    EpochBalances balances;
    balances.total_active_balance = total_active(end_n);
    if (balances.total_active_balance == 0) {
        return out;
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (!end_n.active[v]) {
            continue;
        }
        auto const eff = end_n.effective_balances[v];
        balances.attesting_balance_source += out.flags[v].source ? eff : 0;
        balances.attesting_balance_target += out.flags[v].target ? eff : 0;
        balances.attesting_balance_head += out.flags[v].head ? eff : 0;
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (!end_n.active[v]) {
            continue;
        }
        auto const base =
            base_reward(end_n.effective_balances[v], balances.total_active_balance, params);
        auto const flags = out.flags[v];
        out.reward[v] = attestation_reward(flags, base, balances, params);
        out.penalty[v] = options.scaled_penalties
                             ? attestation_penalty_scaled(flags.missed(), base, balances, params)
                             : attestation_penalty(flags.missed(), base, params);
        out.maximum[v] = attestation_reward(FlagSet::all(), base, balances, params);
    }
    return out;
}

struct Window
{
    std::map<Epoch, BeaconStateSnapshot> states;
    std::map<Epoch, AttestationResult> attestations;

    BeaconStateSnapshot const *state(Epoch e) const
    {
        auto it = states.find(e);
        return it == states.end() ? nullptr : &it->second;
    }

    AttestationResult const *attestation(Epoch e) const
    {
        auto it = attestations.find(e);
        return it == attestations.end() ? nullptr : &it->second;
    }
};

EpochBatch index_epoch(
    Epoch n, Window const &window, EntityMap const &entities, AnalyzerOptions const &options,
    AnalyzeSummary &summary)
{
    auto const &params = options.params;
    auto const &end_n = *window.state(n);
    auto const *end_prev = n > 0 ? window.state(n - 1) : nullptr;
    auto const &att = *window.attestation(n);
    auto const *att_settled = n >= 2 ? window.attestation(n - 2) : nullptr;
    auto const registry = end_n.registry_size();

    EpochBatch batch;
    batch.epoch = n;

    std::vector<SignedGwei> sync(registry, 0);
    std::vector<bool> in_sync(registry, false);
    std::vector<std::uint32_t> proposed(registry, 0);
    std::vector<std::uint32_t> missed(registry, 0);
    std::vector<Gwei> el(registry, 0);
    std::vector<Gwei> slash_penalty(registry, 0);
    std::vector<Gwei> whistleblower(registry, 0);

    auto const total = total_active(end_n);
    Gwei const participant =
        total == 0 ? 0
                   : sync_participant_reward(
                         sync_total_reward(total_base_reward(total, params), params), params);
    auto const &committee = end_n.sync_committee;
    for (auto const member : committee) {
        if (member < registry && end_n.active[member]) {
            in_sync[member] = true;
        }
    }

    for (auto const &record : end_n.epoch_slots) {
        batch.slots.push_back({record.slot, record.proposer_index, record.block_proposed});
        if (record.proposer_index >= registry) {
            throw Error(
                ErrorCode::decode,
                fmt::format("slot {}: proposer {} outside registry", record.slot,
                            record.proposer_index));
        }
        if (!record.block_proposed) {
            ++missed[record.proposer_index];
            continue;
        }
        ++proposed[record.proposer_index];
        el[record.proposer_index] += record.el_tips;
        for (std::size_t i = 0; i < committee.size() && i < record.sync_participation.size(); ++i) {
            auto const member = committee[i];
            if (!in_sync[member]) {
                continue;
            }
            sync[member] += record.sync_participation[i] ? static_cast<SignedGwei>(participant)
                                                         : -static_cast<SignedGwei>(participant);
        }
        for (auto const &s : record.slashings) {
            if (s.validator >= registry || s.whistleblower >= registry) {
                throw Error(
                    ErrorCode::decode, fmt::format("slot {}: slashing outside registry", record.slot));
            }
            auto const amounts = slashing_amounts(end_n.effective_balances[s.validator], params);
            slash_penalty[s.validator] += amounts.penalty;
            whistleblower[s.whistleblower] += amounts.whistleblower_reward;
        }
    }

    for (std::size_t v = 0; v < registry; ++v) {
        if (!end_n.active[v]) {
            continue;
        }
        auto const prev_balance = end_prev != nullptr && v < end_prev->registry_size()
                                      ? end_prev->balances[v]
                                      : end_n.effective_balances[v];
        auto const delta = static_cast<SignedGwei>(end_n.balances[v]) -
                           static_cast<SignedGwei>(prev_balance);
        auto const explained = sync[v] + static_cast<SignedGwei>(el[v]) +
                               static_cast<SignedGwei>(whistleblower[v]) -
                               static_cast<SignedGwei>(slash_penalty[v]) +
                               (att_settled != nullptr ? att_settled->net(v) : 0);
        auto const residual = delta - explained;

        Gwei proposer_cl = 0;
        if (proposed[v] > 0 && residual >= 0) {
            proposer_cl = static_cast<Gwei>(residual);
        }
        else if (residual != 0) {
            ++summary.reconciliation_failures;
        }

        ValidatorEpochRow row;
        row.epoch = n;
        row.validator_index = static_cast<ValidatorIndex>(v);
        row.effective_balance = end_n.effective_balances[v];
        row.flags = att.flags[v];
        row.attestation_reward = att.reward[v];
        row.attestation_penalty = att.penalty[v] + slash_penalty[v];
        row.max_attestation_reward = att.maximum[v];
        row.in_sync_committee = in_sync[v];
        row.sync_reward = sync[v];
        row.max_sync_reward = in_sync[v] ? participant * params.slots_per_epoch : 0;
        row.proposed_slots = proposed[v];
        row.missed_proposals = missed[v];
        row.proposer_cl_reward = proposer_cl + whistleblower[v];
        row.el_reward = el[v];
        row.entity = entities.resolve(row.validator_index);

        if (row.attestation_reward > row.max_attestation_reward ||
            row.sync_reward > static_cast<SignedGwei>(row.max_sync_reward)) {
            ++summary.dominance_violations;
        }
        batch.rows.push_back(std::move(row));
    }
    return batch;
}

bool halts_pipeline(ErrorCode code) noexcept
{
    return code == ErrorCode::not_found || code == ErrorCode::backend_unavailable ||
           code == ErrorCode::decode;
}

} // namespace

std::optional<AnalyzerCheckpoint> load_checkpoint(std::filesystem::path const &path)
{
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        return std::nullopt;
    }
    try {
        auto const j = nlohmann::json::parse(read_file(path));
        return AnalyzerCheckpoint{
            j.at("last_fully_indexed_epoch").get<Epoch>(), j.at("stream_position").get<Slot>()};
    }
    catch (nlohmann::json::exception const &e) {
        throw Error(ErrorCode::decode, fmt::format("{}: {}", path.string(), e.what()));
    }
}

AnalyzerCheckpoint save_checkpoint(
    std::filesystem::path const &path, AnalyzerCheckpoint const &checkpoint)
{
    auto const existing = load_checkpoint(path);
    if (existing && existing->last_fully_indexed_epoch >= checkpoint.last_fully_indexed_epoch) {
        return *existing;
    }
    nlohmann::json j = {
        {"last_fully_indexed_epoch", checkpoint.last_fully_indexed_epoch},
        {"stream_position", checkpoint.stream_position}};
    write_file_atomic(path, j.dump(2) + "\n");
    return checkpoint;
}

Slot epoch_end_slot(Epoch epoch, WeightParams const &params) noexcept
{
    return (epoch + 1) * params.slots_per_epoch - 1;
}

std::vector<FlagSet> resolve_attestations(
    BeaconStateSnapshot const &epoch_n_state, BeaconStateSnapshot const &epoch_n_plus_1_state)
{
    auto const n = epoch_n_state.registry_size();
    auto const &participation = epoch_n_plus_1_state.previous_participation_flags;
    std::vector<FlagSet> flags(n);
    for (std::size_t v = 0; v < n && v < participation.size(); ++v) {
        if (epoch_n_state.active[v]) {
            flags[v] = FlagSet::from_bits(participation[v]);
        }
    }
    return flags;
}

void MerSums::add(ValidatorEpochRow const &row) noexcept
{
    achieved += row.attestation_reward +
                (row.sync_reward > 0 ? static_cast<Gwei>(row.sync_reward) : 0);
    maximum += row.max_attestation_reward + row.max_sync_reward;
}

double MerSums::ratio() const
{
    if (maximum == 0) {
        throw Error(ErrorCode::domain, "MER ratio: zero maximum reward (no active validators)");
    }
    return static_cast<double>(achieved) / static_cast<double>(maximum);
}

double compute_mer_ratio(std::span<ValidatorEpochRow const> rows)
{
    MerSums sums;
    for (auto const &row : rows) {
        sums.add(row);
    }
    return sums.ratio();
}

AnalyzeSummary process_range(
    StateProvider &provider, Epoch first_epoch, Epoch last_epoch, EntityMap const &entities,
    LedgerStore &store, AnalyzerOptions const &options)
{
    if (first_epoch > last_epoch) {
        throw Error(
            ErrorCode::invalid_config,
            fmt::format("epoch range: first {} after last {}", first_epoch, last_epoch));
    }
    options.params.validate();

    AnalyzeSummary summary;
    summary.first_epoch = first_epoch;
    summary.last_epoch = last_epoch;

    std::optional<AnalyzerCheckpoint> checkpoint;
    if (options.checkpoint_path) {
        checkpoint = load_checkpoint(*options.checkpoint_path);
    }
    Epoch start = first_epoch;
    if (options.resume && checkpoint && checkpoint->last_fully_indexed_epoch >= first_epoch) {
        if (checkpoint->last_fully_indexed_epoch >= last_epoch) {
            return summary;
        }
        start = checkpoint->last_fully_indexed_epoch + 1;
    }
    summary.first_epoch = start;

    std::optional<AnalyzerCheckpoint> progress;
    auto record_checkpoint = [&] {
        if (options.checkpoint_path && progress) {
            save_checkpoint(*options.checkpoint_path, *progress);
        }
    };

    Window window;
    Epoch const lead_in = std::max<Epoch>(start, 2) - 2;
    for (Epoch k = lead_in; k <= last_epoch + 1; ++k) {
        auto const slot = epoch_end_slot(k, options.params);
        try {
            auto state = provider.get_state(slot);
            if (state.slot != slot) {
                throw Error(
                    ErrorCode::decode,
                    fmt::format("requested slot {}, provider returned slot {}", slot, state.slot));
            }
            window.states.emplace(k, std::move(state));
        }
        catch (Error const &e) {
            if (!halts_pipeline(e.code())) {
                throw;
            }
            record_checkpoint();
            throw HaltError(
                e.code(),
                fmt::format("state for epoch {} (slot {}) unavailable: {}", k, slot, e.what()),
                progress);
        }

        if (k == lead_in) {
            continue;
        }
        auto const n = k - 1;
        window.attestations.emplace(
            n, settle_attestations(*window.state(n), *window.state(k), options));

        if (n >= start) {
            auto batch = index_epoch(n, window, entities, options, summary);
            summary.rows += batch.rows.size();
            if (store.commit(std::move(batch)) == LedgerStore::CommitResult::written) {
                ++summary.epochs_written;
            }
            else {
                ++summary.epochs_unchanged;
            }
            progress = AnalyzerCheckpoint{n, slot};
            if (options.checkpoint_interval > 0 && (n + 1) % options.checkpoint_interval == 0) {
                record_checkpoint();
            }
        }

        // end(n - 1), end(n), end(n + 1) and the attestation result of
        // epoch n - 1 are needed for the next row.
        while (!window.states.empty() && window.states.begin()->first + 2 < k) {
            window.states.erase(window.states.begin());
        }
        while (!window.attestations.empty() && window.attestations.begin()->first + 1 < n) {
            window.attestations.erase(window.attestations.begin());
        }
    }
    record_checkpoint();
    return summary;
}

} // namespace mer
