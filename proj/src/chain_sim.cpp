#include <mer/chain_sim.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace mer {

namespace {

// Stream tags for mix_seed.
constexpr std::uint64_t kTagCommittee = 1;
constexpr std::uint64_t kTagProposer = 2;
constexpr std::uint64_t kTagSync = 3;
constexpr std::uint64_t kTagSlot = 4;

// Beacon effective-balance hysteresis.
constexpr std::uint64_t kHysteresisQuotient = 4;
constexpr std::uint64_t kHysteresisDownwardMultiplier = 1;
constexpr std::uint64_t kHysteresisUpwardMultiplier = 5;

[[noreturn]] void config_error(std::string const &field, std::string const &why)
{
    throw Error(ErrorCode::invalid_config, fmt::format("{}: {}", field, why));
}

void check_probability(std::string const &field, double p)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        config_error(field, fmt::format("probability {} outside [0, 1]", p));
    }
}

void check_probability(std::string const &field, std::optional<double> p)
{
    if (p) {
        check_probability(field, *p);
    }
}

Epoch epoch_of(Slot slot, WeightParams const &params) noexcept
{
    return slot / params.slots_per_epoch;
}

struct DutyProbabilities
{
    double source;
    double target;
    double head;
    double sync;
    double block;
};

DutyProbabilities probabilities_for(ValidatorIndex v, Epoch epoch, SimConfig const &config)
{
    DutyProbabilities p{
        config.p_missed_source, config.p_missed_target, config.p_missed_head,
        config.p_sync_miss, config.p_missed_block};
    if (config.split_epoch && epoch >= *config.split_epoch && config.p_missed_block_after) {
        p.block = *config.p_missed_block_after;
    }
    for (auto const &profile : config.profiles) {
        if (v < profile.first || v >= profile.last) {
            continue;
        }
        p.source = profile.p_missed_source.value_or(p.source);
        p.target = profile.p_missed_target.value_or(p.target);
        p.head = profile.p_missed_head.value_or(p.head);
        p.sync = profile.p_sync_miss.value_or(p.sync);
        p.block = profile.p_missed_block.value_or(p.block);
    }
    return p;
}

struct Offline
{
    bool attest = false;
    bool sync = false;
    bool propose = false;
};

Offline offline_for(ValidatorIndex v, Epoch epoch, SimConfig const &config)
{
    Offline out;
    for (auto const &event : config.offline) {
        if (epoch < event.first_epoch || epoch > event.last_epoch || v < event.first ||
            v >= event.last) {
            continue;
        }
        out.attest = out.attest || event.attest;
        out.sync = out.sync || event.sync;
        out.propose = out.propose || event.propose;
    }
    return out;
}

ValidatorTruth *truth_at(ChainState &state, Epoch epoch, ValidatorIndex v)
{
    if (state.truth == nullptr) {
        return nullptr;
    }
    return &(*state.truth)[{epoch, v}];
}

EpochContext build_context(ChainState const &state, Epoch epoch, WeightParams const &params)
{
    EpochContext ctx;
    ctx.epoch = epoch;
    ctx.active = state.active;
    ctx.effective_balances = state.effective_balances;
    for (std::size_t v = 0; v < state.registry_size(); ++v) {
        if (state.active[v]) {
            ctx.total_active_balance += state.effective_balances[v];
        }
    }
    ctx.base_rewards.assign(state.registry_size(), 0);
    for (std::size_t v = 0; v < state.registry_size(); ++v) {
        if (state.active[v]) {
            ctx.base_rewards[v] =
                base_reward(state.effective_balances[v], ctx.total_active_balance, params);
        }
    }
    ctx.sync_participant_reward = sync_participant_reward(
        sync_total_reward(total_base_reward(ctx.total_active_balance, params), params), params);
    return ctx;
}

void start_epoch(ChainState &state, Epoch epoch, SimConfig const &config)
{
    auto const &params = config.params;
    state.contexts[epoch] = build_context(state, epoch, params);
    while (!state.contexts.empty() && state.contexts.begin()->first + 2 < epoch) {
        state.contexts.erase(state.contexts.begin());
    }

    std::vector<ValidatorIndex> active_indices;
    for (std::size_t v = 0; v < state.registry_size(); ++v) {
        if (state.active[v]) {
            active_indices.push_back(static_cast<ValidatorIndex>(v));
        }
    }
    state.assignments = assign_epoch(epoch, active_indices, config.seed, params, state.sync_cache);
    state.epoch_slots.clear();
}

void add_validators(ChainState &state, std::size_t count, Gwei deposit)
{
    for (std::size_t i = 0; i < count; ++i) {
        state.balances.push_back(deposit);
        state.effective_balances.push_back(deposit);
        state.active.push_back(true);
        state.slashed.push_back(false);
        state.net_change.push_back(0);
        state.current_flags.push_back(0);
        state.previous_flags.push_back(0);
        state.initial_balances.push_back(deposit);
    }
}

void apply_attestation_rewards(ChainState &state, Epoch epoch, SimConfig const &config)
{
    auto const &params = config.params;
    auto const &ctx = state.context(epoch);
    auto const n = ctx.active.size();

    EpochBalances balances;
    balances.total_active_balance = ctx.total_active_balance;
    for (std::size_t v = 0; v < n; ++v) {
        if (!ctx.active[v]) {
            continue;
        }
        auto const flags = FlagSet::from_bits(state.previous_flags[v]);
        if (flags.source) {
            balances.attesting_balance_source += ctx.effective_balances[v];
        }
        if (flags.target) {
            balances.attesting_balance_target += ctx.effective_balances[v];
        }
        if (flags.head) {
            balances.attesting_balance_head += ctx.effective_balances[v];
        }
    }

    for (std::size_t v = 0; v < n; ++v) {
        if (!ctx.active[v]) {
            continue;
        }
        auto const index = static_cast<ValidatorIndex>(v);
        auto const flags = FlagSet::from_bits(state.previous_flags[v]);
        auto const base = ctx.base_rewards[v];
        auto const reward = attestation_reward(flags, base, balances, params);
        auto const penalty =
            config.scaled_penalties
                ? attestation_penalty_scaled(flags.missed(), base, balances, params)
                : attestation_penalty(flags.missed(), base, params);
        state.credit(index, reward);
        auto const taken = state.debit(index, penalty);
        state.journal.attestation_rewards += reward;
        state.journal.attestation_penalties += taken;
        if (auto *t = truth_at(state, epoch, index)) {
            t->flags = flags;
            t->attestation_reward = reward;
            t->attestation_penalty = taken;
        }
    }
}

void update_effective_balances(ChainState &state, WeightParams const &params)
{
    auto const increment = params.effective_balance_increment;
    auto const hysteresis = increment / kHysteresisQuotient;
    auto const downward = hysteresis * kHysteresisDownwardMultiplier;
    auto const upward = hysteresis * kHysteresisUpwardMultiplier;
    for (std::size_t v = 0; v < state.registry_size(); ++v) {
        if (!state.active[v]) {
            continue;
        }
        auto const balance = state.balances[v];
        auto &eff = state.effective_balances[v];
        if (balance + downward < eff || eff + upward < balance) {
            eff = std::min(balance - balance % increment, params.max_effective_balance);
        }
    }
}

void apply_slashings(
    ChainState &state, Slot slot, ValidatorIndex proposer, SlotRecord &record,
    SimConfig const &config)
{
    auto const epoch = epoch_of(slot, config.params);
    auto it = state.pending_slashings.begin();
    while (it != state.pending_slashings.end()) {
        if (it->epoch > epoch) {
            ++it;
            continue;
        }
        auto const v = it->validator;
        auto whistleblower = it->whistleblower.value_or(proposer);
        if (whistleblower >= state.registry_size() || !state.active[whistleblower]) {
            whistleblower = proposer;
        }
        it = state.pending_slashings.erase(it);
        if (v >= state.registry_size() || !state.active[v] || state.slashed[v]) {
            continue;
        }
        auto const amounts = slashing_amounts(state.effective_balances[v], config.params);
        auto const taken = state.debit(v, amounts.penalty);
        state.credit(proposer, amounts.proposer_reward);
        state.credit(whistleblower, amounts.whistleblower_reward);
        state.journal.slashing_penalties += taken;
        state.journal.slashing_rewards += amounts.proposer_reward + amounts.whistleblower_reward;
        state.slashed[v] = true;
        state.pending_exits.push_back(v);
        record.slashings.push_back({v, whistleblower});
        if (auto *t = truth_at(state, epoch, v)) {
            t->slashing_penalty += taken;
        }
        if (auto *t = truth_at(state, epoch, proposer)) {
            t->proposer_cl += amounts.proposer_reward;
        }
        if (auto *t = truth_at(state, epoch, whistleblower)) {
            t->whistleblower_reward += amounts.whistleblower_reward;
        }
    }
}

} // namespace

std::uint64_t Rng::below(std::uint64_t bound)
{
    // Rejection sampling removes modulo bias.
    std::uint64_t const threshold = (0 - bound) % bound;
    for (;;) {
        auto const x = next();
        if (x >= threshold) {
            return x % bound;
        }
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept
{
    auto splitmix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

void SimConfig::validate() const
{
    params.validate();
    if (validator_count < kMinValidators) {
        config_error(
            "validators", fmt::format("{} is below the minimum of {}", validator_count,
                                      kMinValidators));
    }
    if (validator_count < params.slots_per_epoch) {
        config_error("validators", "fewer validators than slots per epoch");
    }
    if (epochs == 0) {
        config_error("epochs", "must be positive");
    }
    check_probability("p_missed_block", p_missed_block);
    check_probability("p_missed_block_after", p_missed_block_after);
    check_probability("p_missed_source", p_missed_source);
    check_probability("p_missed_target", p_missed_target);
    check_probability("p_missed_head", p_missed_head);
    check_probability("p_sync_miss", p_sync_miss);
    if (!(growth_per_epoch >= 0.0 && std::isfinite(growth_per_epoch))) {
        config_error("growth_per_epoch", "must be a non-negative fraction");
    }
    if (el_tip_min > el_tip_max) {
        config_error("el_tip_min", "exceeds el_tip_max");
    }
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        auto const &p = profiles[i];
        auto const field = fmt::format("profile[{}]", i);
        if (p.first >= p.last) {
            config_error(field, "empty validator range");
        }
        check_probability(field + ".p_missed_source", p.p_missed_source);
        check_probability(field + ".p_missed_target", p.p_missed_target);
        check_probability(field + ".p_missed_head", p.p_missed_head);
        check_probability(field + ".p_sync_miss", p.p_sync_miss);
        check_probability(field + ".p_missed_block", p.p_missed_block);
    }
    for (std::size_t i = 0; i < offline.size(); ++i) {
        auto const &o = offline[i];
        auto const field = fmt::format("offline[{}]", i);
        if (o.first >= o.last) {
            config_error(field, "empty validator range");
        }
        if (o.first_epoch > o.last_epoch) {
            config_error(field, "first epoch after last epoch");
        }
    }
    for (std::size_t i = 0; i < slashings.size(); ++i) {
        auto const &s = slashings[i];
        auto const field = fmt::format("slashing[{}]", i);
        if (s.validator >= validator_count) {
            config_error(field, "validator outside the genesis registry");
        }
        if (s.whistleblower && *s.whistleblower >= validator_count) {
            config_error(field, "whistleblower outside the genesis registry");
        }
    }
}

SignedGwei BalanceJournal::net() const noexcept
{
    return static_cast<SignedGwei>(attestation_rewards) -
           static_cast<SignedGwei>(attestation_penalties) +
           static_cast<SignedGwei>(sync_rewards) - static_cast<SignedGwei>(sync_penalties) +
           static_cast<SignedGwei>(proposer_rewards) + static_cast<SignedGwei>(el_tips) -
           static_cast<SignedGwei>(slashing_penalties) +
           static_cast<SignedGwei>(slashing_rewards);
}

std::vector<ValidatorIndex> const *SyncCommitteeCache::find(std::uint64_t period) const
{
    auto it = committees_.find(period);
    return it == committees_.end() ? nullptr : &it->second;
}

void SyncCommitteeCache::store(std::uint64_t period, std::vector<ValidatorIndex> committee)
{
    committees_[period] = std::move(committee);
}

EpochAssignments assign_epoch(
    Epoch epoch, std::span<ValidatorIndex const> active_indices, std::uint64_t seed,
    WeightParams const &params, SyncCommitteeCache &cache)
{
    auto const n = active_indices.size();
    if (n == 0) {
        throw Error(ErrorCode::domain, "assign_epoch: registry has no active validators");
    }
    if (n < params.slots_per_epoch) {
        throw Error(
            ErrorCode::domain,
            fmt::format("assign_epoch: {} active validators for {} slots", n,
                        params.slots_per_epoch));
    }

    EpochAssignments out;
    out.epoch = epoch;

    std::vector<ValidatorIndex> shuffled(active_indices.begin(), active_indices.end());
    Rng committee_rng(mix_seed(seed, kTagCommittee, epoch));
    fisher_yates(std::span<ValidatorIndex>(shuffled), committee_rng);
    auto const slots = params.slots_per_epoch;
    out.committees.resize(slots);
    for (std::uint64_t i = 0; i < slots; ++i) {
        auto const begin = i * n / slots;
        auto const end = (i + 1) * n / slots;
        out.committees[i].assign(shuffled.begin() + begin, shuffled.begin() + end);
    }

    Rng proposer_rng(mix_seed(seed, kTagProposer, epoch));
    out.proposers.resize(slots);
    for (auto &p : out.proposers) {
        p = active_indices[proposer_rng.below(n)];
    }

    auto const period = epoch / params.epochs_per_sync_period;
    if (auto const *cached = cache.find(period)) {
        out.sync_committee = *cached;
    }
    else {
        std::vector<ValidatorIndex> pool(active_indices.begin(), active_indices.end());
        Rng sync_rng(mix_seed(seed, kTagSync, period));
        auto const size = std::min<std::size_t>(params.sync_committee_size, n);
        // Partial Fisher-Yates: the first `size` picks are a uniform draw
        // without replacement.
        for (std::size_t i = 0; i < size; ++i) {
            auto const j = i + static_cast<std::size_t>(sync_rng.below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(size);
        cache.store(period, pool);
        out.sync_committee = std::move(pool);
    }
    return out;
}

EpochContext const &ChainState::context(Epoch epoch) const
{
    auto it = contexts.find(epoch);
    if (it == contexts.end()) {
        throw Error(ErrorCode::domain, fmt::format("no reward context for epoch {}", epoch));
    }
    return it->second;
}

void ChainState::credit(ValidatorIndex v, Gwei amount)
{
    balances[v] += amount;
    net_change[v] += static_cast<SignedGwei>(amount);
}

Gwei ChainState::debit(ValidatorIndex v, Gwei amount)
{
    auto const taken = std::min(amount, balances[v]);
    balances[v] -= taken;
    net_change[v] -= static_cast<SignedGwei>(taken);
    return taken;
}

ChainState genesis(SimConfig const &config)
{
    config.validate();
    ChainState state;
    add_validators(state, config.validator_count, config.params.max_effective_balance);
    state.pending_slashings = config.slashings;
    std::stable_sort(
        state.pending_slashings.begin(), state.pending_slashings.end(),
        [](auto const &a, auto const &b) { return a.epoch < b.epoch; });
    start_epoch(state, 0, config);
    return state;
}

SlotOutcome simulate_slot(
    Slot slot, EpochAssignments const &assignments, SimConfig const &config,
    ChainState const &state)
{
    auto const &params = config.params;
    auto const epoch = epoch_of(slot, params);
    auto const index_in_epoch = slot % params.slots_per_epoch;
    Rng rng(mix_seed(config.seed, kTagSlot, slot));

    SlotOutcome out;
    out.slot = slot;
    out.proposer_index = assignments.proposers.at(index_in_epoch);
    {
        auto const p = probabilities_for(out.proposer_index, epoch, config);
        bool const missed = rng.bernoulli(p.block);
        out.block_proposed = !missed && !offline_for(out.proposer_index, epoch, config).propose;
    }

    for (auto const v : assignments.committees.at(index_in_epoch)) {
        auto const p = probabilities_for(v, epoch, config);
        FlagSet flags;
        flags.source = !rng.bernoulli(p.source);
        flags.target = !rng.bernoulli(p.target);
        flags.head = !rng.bernoulli(p.head);
        if (offline_for(v, epoch, config).attest || !flags.any()) {
            continue;
        }
        out.votes.push_back({slot, v, flags});
    }

    auto const &committee = assignments.sync_committee;
    out.sync_participation.assign(committee.size(), false);
    for (std::size_t i = 0; i < committee.size(); ++i) {
        auto const member = committee[i];
        bool const signed_header = !rng.bernoulli(probabilities_for(member, epoch, config).sync);
        out.sync_participation[i] = out.block_proposed && state.active[member] &&
                                    signed_header && !offline_for(member, epoch, config).sync;
    }

    auto const tip_draw = config.el_tip_min + rng.below(config.el_tip_max - config.el_tip_min + 1);
    out.el_tips = out.block_proposed ? tip_draw : 0;
    return out;
}

void apply_slot_transition(ChainState &state, SlotOutcome const &outcome, SimConfig const &config)
{
    auto const &params = config.params;
    auto const slot = outcome.slot;
    auto const epoch = epoch_of(slot, params);
    auto const proposer = outcome.proposer_index;

    // Drop votes whose inclusion window closed before this slot.
    std::erase_if(state.pending_votes, [&](Vote const &v) {
        return v.slot + params.slots_per_epoch < slot;
    });

    SlotRecord record;
    record.slot = slot;
    record.block_proposed = outcome.block_proposed;
    record.proposer_index = proposer;
    record.sync_participation.assign(state.assignments.sync_committee.size(), false);

    if (outcome.block_proposed) {
        Gwei weighted_base = 0;
        for (auto const &vote : state.pending_votes) {
            auto const vote_epoch = epoch_of(vote.slot, params);
            auto &flags = vote_epoch == epoch ? state.current_flags : state.previous_flags;
            flags[vote.validator] |= vote.flags.bits();
            auto const base = state.context(vote_epoch).base_rewards[vote.validator];
            if (vote.flags.source) {
                weighted_base += base * params.timely_source_weight;
            }
            if (vote.flags.target) {
                weighted_base += base * params.timely_target_weight;
            }
            if (vote.flags.head) {
                weighted_base += base * params.timely_head_weight;
            }
        }
        state.pending_votes.clear();

        auto const &committee = state.assignments.sync_committee;
        auto const participant = state.context(epoch).sync_participant_reward;
        std::uint64_t signatures = 0;
        for (std::size_t i = 0; i < committee.size(); ++i) {
            auto const member = committee[i];
            if (!state.active[member]) {
                continue;
            }
            auto *t = truth_at(state, epoch, member);
            if (outcome.sync_participation[i]) {
                state.credit(member, participant);
                state.journal.sync_rewards += participant;
                ++signatures;
                record.sync_participation[i] = true;
                if (t) {
                    t->sync_net += static_cast<SignedGwei>(participant);
                }
            }
            else {
                auto const taken = state.debit(member, participant);
                state.journal.sync_penalties += taken;
                if (t) {
                    t->sync_net -= static_cast<SignedGwei>(taken);
                }
            }
        }

        auto const cl = proposer_reward(
            proposer_attestation_component(weighted_base, params),
            proposer_sync_component(signatures, participant, params));
        state.credit(proposer, cl);
        state.credit(proposer, outcome.el_tips);
        state.journal.proposer_rewards += cl;
        state.journal.el_tips += outcome.el_tips;
        record.el_tips = outcome.el_tips;
        if (auto *t = truth_at(state, epoch, proposer)) {
            t->proposer_cl += cl;
            t->el += outcome.el_tips;
            ++t->proposed;
        }
        apply_slashings(state, slot, proposer, record, config);
    }
    else if (auto *t = truth_at(state, epoch, proposer)) {
        ++t->missed;
    }

    state.pending_votes.insert(state.pending_votes.end(), outcome.votes.begin(), outcome.votes.end());
    state.epoch_slots.push_back(std::move(record));
    state.next_slot = slot + 1;
}

void apply_epoch_transition(ChainState &state, SimConfig const &config)
{
    auto const &params = config.params;
    auto const epoch = epoch_of(state.next_slot, params);
    if (epoch == 0) {
        return;
    }
    if (epoch >= 2) {
        apply_attestation_rewards(state, epoch - 2, config);
    }

    state.previous_flags = std::move(state.current_flags);
    state.current_flags.assign(state.registry_size(), 0);

    if (config.effective_balance_rule == EffectiveBalanceRule::hysteresis) {
        update_effective_balances(state, params);
    }

    for (auto const v : state.pending_exits) {
        state.active[v] = false;
    }
    state.pending_exits.clear();

    state.growth_carry += config.growth_per_epoch * config.validator_count;
    auto const joining = static_cast<std::size_t>(std::floor(state.growth_carry));
    if (joining > 0) {
        state.growth_carry -= static_cast<double>(joining);
        add_validators(state, joining, params.max_effective_balance);
        state.journal.deposits += joining * params.max_effective_balance;
    }

    start_epoch(state, epoch, config);
}

BeaconStateSnapshot make_snapshot(ChainState const &state)
{
    BeaconStateSnapshot s;
    s.slot = state.next_slot == 0 ? 0 : state.next_slot - 1;
    s.balances = state.balances;
    s.effective_balances = state.effective_balances;
    s.participation_flags = state.current_flags;
    s.previous_participation_flags = state.previous_flags;
    s.active = state.active;
    s.slashed = state.slashed;
    s.sync_committee = state.assignments.sync_committee;
    s.epoch_slots = state.epoch_slots;
    if (!state.epoch_slots.empty()) {
        auto const &last = state.epoch_slots.back();
        s.block_proposed = last.block_proposed;
        s.proposer_index = last.proposer_index;
        s.sync_participation = last.sync_participation;
        s.el_tips = last.el_tips;
    }
    else {
        s.sync_participation.assign(s.sync_committee.size(), false);
    }
    return s;
}

ConservationAudit audit_conservation(ChainState const &state)
{
    ConservationAudit audit;
    for (std::size_t v = 0; v < state.registry_size(); ++v) {
        auto const delta = static_cast<SignedGwei>(state.balances[v]) -
                           static_cast<SignedGwei>(state.initial_balances[v]);
        audit.balance_delta += delta;
        if (delta != state.net_change[v]) {
            ++audit.mismatched_validators;
        }
    }
    audit.journal_net = state.journal.net();
    audit.ok = audit.mismatched_validators == 0 && audit.balance_delta == audit.journal_net;
    return audit;
}

Simulator::Simulator(SimConfig config)
    : config_(std::move(config))
    , state_(genesis(config_))
{
}

bool Simulator::step()
{
    if (done()) {
        return false;
    }
    auto const slot = state_.next_slot;
    if (slot > 0 && slot % config_.params.slots_per_epoch == 0) {
        apply_epoch_transition(state_, config_);
    }
    auto const outcome = simulate_slot(slot, state_.assignments, config_, state_);
    apply_slot_transition(state_, outcome, config_);
    return true;
}

ConservationAudit run(SimConfig const &config, SnapshotSink const &sink)
{
    Simulator sim(config);
    while (sim.step()) {
        sink(sim.snapshot());
    }
    return audit_conservation(sim.state());
}

} // namespace mer
