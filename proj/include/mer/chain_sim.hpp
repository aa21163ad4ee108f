#pragma once

// Seeded desk-scale beacon chain. Proposer and sync rewards are applied at
// slot transitions, attestation rewards for epoch n at the transition into
// epoch n + 2 (once the inclusion window of every epoch-n vote has closed).

#include <mer/reward_model.hpp>
#include <mer/snapshot.hpp>
#include <mer/types.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mer {

// Deterministic randomness. The engine output is fixed by the standard; the
// distributions below are written out so streams match across toolchains.
class Rng
{
public:
    explicit Rng(std::uint64_t seed)
        : engine_(seed)
    {
    }

    std::uint64_t next()
    {
        return engine_();
    }

    // Uniform in [0, 1).
    double uniform01()
    {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p)
    {
        return uniform01() < p;
    }

    // Uniform in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept;

template <typename T>
void fisher_yates(std::span<T> items, Rng &rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        auto const j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

// Overrides for a half-open validator index range. Later profiles win.
struct FaultProfile
{
    ValidatorIndex first = 0;
    ValidatorIndex last = 0;
    std::optional<double> p_missed_source;
    std::optional<double> p_missed_target;
    std::optional<double> p_missed_head;
    std::optional<double> p_sync_miss;
    std::optional<double> p_missed_block;
};

// Validators [first, last) miss the selected duties for epochs
// [first_epoch, last_epoch].
struct OfflineEvent
{
    Epoch first_epoch = 0;
    Epoch last_epoch = 0;
    ValidatorIndex first = 0;
    ValidatorIndex last = 0;
    bool attest = true;
    bool sync = true;
    bool propose = true;
};

// Applied in the first proposed block at or after the start of `epoch`.
// The whistleblower defaults to that block's proposer.
struct SlashingEvent
{
    Epoch epoch = 0;
    ValidatorIndex validator = 0;
    std::optional<ValidatorIndex> whistleblower;
};

enum class EffectiveBalanceRule { pinned, hysteresis };

struct SimConfig
{
    std::uint64_t seed = 1;
    std::uint32_t validator_count = 64;
    std::uint64_t epochs = 4;
    double p_missed_block = 0.0;
    // From split_epoch on, p_missed_block_after replaces p_missed_block.
    std::optional<Epoch> split_epoch;
    std::optional<double> p_missed_block_after;
    double p_missed_source = 0.0;
    double p_missed_target = 0.0;
    double p_missed_head = 0.0;
    double p_sync_miss = 0.0;
    // New validators per epoch as a fraction of validator_count.
    double growth_per_epoch = 0.0;
    Gwei el_tip_min = 0;
    Gwei el_tip_max = 0;
    bool scaled_penalties = false;
    EffectiveBalanceRule effective_balance_rule = EffectiveBalanceRule::pinned;
    WeightParams params;
    std::vector<FaultProfile> profiles;
    std::vector<OfflineEvent> offline;
    std::vector<SlashingEvent> slashings;

    // Throws Error(invalid_config) naming the field.
    void validate() const;

    Slot slot_count() const noexcept
    {
        return epochs * params.slots_per_epoch;
    }
};

inline constexpr std::uint32_t kMinValidators = 64;

struct EpochAssignments
{
    Epoch epoch = 0;
    // committees[i] attests at slot epoch * slots_per_epoch + i.
    std::vector<std::vector<ValidatorIndex>> committees;
    std::vector<ValidatorIndex> proposers;
    std::vector<ValidatorIndex> sync_committee;
};

// Sync committees keyed by period; a period's committee is drawn once.
class SyncCommitteeCache
{
public:
    std::vector<ValidatorIndex> const *find(std::uint64_t period) const;
    void store(std::uint64_t period, std::vector<ValidatorIndex> committee);

private:
    std::map<std::uint64_t, std::vector<ValidatorIndex>> committees_;
};

// Shuffled committee partition of the active set, uniform proposers, and the
// period's sync committee (min(sync_committee_size, active) members, drawn
// without replacement). Pure in (seed, epoch) given the cache contents.
EpochAssignments assign_epoch(
    Epoch epoch, std::span<ValidatorIndex const> active_indices, std::uint64_t seed,
    WeightParams const &params, SyncCommitteeCache &cache);

struct Vote
{
    Slot slot = 0;
    ValidatorIndex validator = 0;
    FlagSet flags;
};

struct SlotOutcome
{
    Slot slot = 0;
    bool block_proposed = false;
    ValidatorIndex proposer_index = 0;
    std::vector<Vote> votes;
    SyncBits sync_participation;
    Gwei el_tips = 0;
};

// Reward inputs frozen for one epoch.
struct EpochContext
{
    Epoch epoch = 0;
    std::vector<bool> active;
    std::vector<Gwei> effective_balances;
    std::vector<Gwei> base_rewards;
    Gwei total_active_balance = 0;
    Gwei sync_participant_reward = 0;
};

// Running totals of every balance change, by cause.
struct BalanceJournal
{
    Gwei attestation_rewards = 0;
    Gwei attestation_penalties = 0;
    Gwei sync_rewards = 0;
    Gwei sync_penalties = 0;
    Gwei proposer_rewards = 0;
    Gwei el_tips = 0;
    Gwei slashing_penalties = 0;
    Gwei slashing_rewards = 0;
    Gwei deposits = 0;

    SignedGwei net() const noexcept;
};

struct ConservationAudit
{
    bool ok = true;
    SignedGwei balance_delta = 0;
    SignedGwei journal_net = 0;
    std::size_t mismatched_validators = 0;
};

struct ValidatorTruth
{
    FlagSet flags;
    Gwei attestation_reward = 0;
    Gwei attestation_penalty = 0;
    SignedGwei sync_net = 0;
    // Includes the proposer share of any slashing in the block.
    Gwei proposer_cl = 0;
    Gwei el = 0;
    Gwei slashing_penalty = 0;
    Gwei whistleblower_reward = 0;
    std::uint32_t proposed = 0;
    std::uint32_t missed = 0;
};

// Ground truth keyed by (duty epoch, validator), for tests.
using TruthLog = std::map<std::pair<Epoch, ValidatorIndex>, ValidatorTruth>;

class ChainState
{
public:
    Slot next_slot = 0;
    std::vector<Gwei> balances;
    std::vector<Gwei> effective_balances;
    std::vector<bool> active;
    std::vector<bool> slashed;
    std::vector<SignedGwei> net_change;
    std::vector<std::uint8_t> current_flags;
    std::vector<std::uint8_t> previous_flags;
    std::map<Epoch, EpochContext> contexts;
    EpochAssignments assignments;
    SyncCommitteeCache sync_cache;
    std::vector<Vote> pending_votes;
    std::vector<SlotRecord> epoch_slots;
    std::vector<ValidatorIndex> pending_exits;
    std::vector<SlashingEvent> pending_slashings;
    double growth_carry = 0.0;
    BalanceJournal journal;
    std::vector<Gwei> initial_balances;
    TruthLog *truth = nullptr;

    std::size_t registry_size() const noexcept
    {
        return balances.size();
    }

    EpochContext const &context(Epoch epoch) const;

    void credit(ValidatorIndex v, Gwei amount);
    // Saturates at zero; returns the amount actually removed.
    Gwei debit(ValidatorIndex v, Gwei amount);
};

ChainState genesis(SimConfig const &config);

SlotOutcome simulate_slot(
    Slot slot, EpochAssignments const &assignments, SimConfig const &config,
    ChainState const &state);

// Processes one slot's block: vote inclusion, proposer and sync rewards, EL
// tips, due slashings. Appends the slot's record to the epoch history.
void apply_slot_transition(ChainState &state, SlotOutcome const &outcome, SimConfig const &config);

// Runs at the boundary into `state.next_slot`'s epoch: applies epoch n - 2
// attestation rewards and penalties, rotates participation, updates
// effective balances, exits slashed validators, adds new validators, and
// draws the new epoch's assignments.
void apply_epoch_transition(ChainState &state, SimConfig const &config);

BeaconStateSnapshot make_snapshot(ChainState const &state);

ConservationAudit audit_conservation(ChainState const &state);

class Simulator
{
public:
    explicit Simulator(SimConfig config);

    // Advances one slot. Returns false once every configured slot ran.
    bool step();

    // Slot of the most recent step; requires at least one step.
    Slot slot() const noexcept
    {
        return state_.next_slot - 1;
    }

    bool done() const noexcept
    {
        return state_.next_slot >= config_.slot_count();
    }

    BeaconStateSnapshot snapshot() const
    {
        return make_snapshot(state_);
    }

    ChainState const &state() const noexcept
    {
        return state_;
    }

    SimConfig const &config() const noexcept
    {
        return config_;
    }

    void record_truth(TruthLog *log) noexcept
    {
        state_.truth = log;
    }

private:
    SimConfig config_;
    ChainState state_;
};

using SnapshotSink = std::function<void(BeaconStateSnapshot const &)>;

// Emits every slot's snapshot in order; returns the conservation audit.
ConservationAudit run(SimConfig const &config, SnapshotSink const &sink);

} // namespace mer
