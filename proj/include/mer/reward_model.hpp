#pragma once

// Consensus-layer reward arithmetic: attestation, sync committee, proposer,
// penalty, slashing and execution-layer tip accounting. All operations are
// pure integer functions in Gwei with floor division at the points noted on
// each function.

#include <mer/types.hpp>

#include <cstdint>
#include <span>

namespace mer {

struct WeightParams
{
    std::uint64_t base_reward_factor = 64;
    std::uint64_t timely_source_weight = 14;
    std::uint64_t timely_target_weight = 26;
    std::uint64_t timely_head_weight = 14;
    std::uint64_t sync_reward_weight = 2;
    std::uint64_t proposer_weight = 8;
    std::uint64_t weight_denominator = 64;
    std::uint64_t slots_per_epoch = 32;
    std::uint64_t sync_committee_size = 512;
    std::uint64_t epochs_per_sync_period = 256;
    Gwei effective_balance_increment = kGweiPerEth;
    Gwei max_effective_balance = 32 * kGweiPerEth;

    // Throws Error(invalid_config) naming the offending field.
    void validate() const;

    friend bool operator==(WeightParams const &, WeightParams const &) = default;
};

// Divisor of the slashing proposer/whistleblower rewards.
inline constexpr std::uint64_t kWhistleblowerRewardQuotient = 512;
// Divisor of the initial slashing penalty.
inline constexpr std::uint64_t kSlashingPenaltyQuotient = 32;

struct EpochBalances
{
    Gwei total_active_balance = 0;
    Gwei attesting_balance_source = 0;
    Gwei attesting_balance_target = 0;
    Gwei attesting_balance_head = 0;

    void validate() const;
};

struct TransactionFees
{
    std::uint64_t gas_used = 0;
    Gwei base_fee_per_gas = 0;
    Gwei priority_fee_per_gas = 0;
};

inline constexpr std::uint64_t kDefaultBlockGasLimit = 30'000'000;

struct SlashingAmounts
{
    Gwei penalty = 0;
    Gwei proposer_reward = 0;
    Gwei whistleblower_reward = 0;
};

struct ExecutionReward
{
    Gwei tips = 0;
    Gwei burned = 0;
};

enum class Flag { source, target, head };

std::uint64_t flag_weight(Flag flag, WeightParams const &params) noexcept;

// floor(sqrt(n)).
std::uint64_t integer_sqrt(std::uint64_t n) noexcept;

// increment * base_reward_factor / isqrt(total), floored.
Gwei base_reward_per_increment(Gwei total_active_balance, WeightParams const &params);

// (eff / increment) * base_reward_per_increment(total).
Gwei base_reward(Gwei eff_balance, Gwei total_active_balance, WeightParams const &params);

// Sum of base_reward over every active validator. Effective balances are
// increment multiples, so this equals total/increment per-increment units.
Gwei total_base_reward(Gwei total_active_balance, WeightParams const &params);

Gwei flag_reward(
    std::uint64_t flag_weight, Gwei validator_base_reward, Gwei attesting_balance,
    Gwei total_active_balance, WeightParams const &params);

Gwei flag_reward(
    Flag flag, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params);

Gwei attestation_reward(
    FlagSet flags, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params);

// Flat penalty: each missed source/target flag costs floor(w * base / denom).
// Missing head costs nothing.
Gwei attestation_penalty(
    FlagSet flags_missed, Gwei validator_base_reward, WeightParams const &params);

// Alternative penalty scaled by participation, i.e. the exact negative of
// flag_reward for source and target.
Gwei attestation_penalty_scaled(
    FlagSet flags_missed, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params);

Gwei sync_total_reward(Gwei sum_base_rewards, WeightParams const &params);

// Per validator per slot. Credited on participation, debited in full on a miss.
Gwei sync_participant_reward(Gwei total_sync_reward, WeightParams const &params);

// sum_weighted_base = sum over newly included votes of base * flag weight for
// each timely flag. Returns floor(sum * prop / ((denom - prop) * denom)).
Gwei proposer_attestation_component(Gwei sum_weighted_base, WeightParams const &params);

Gwei proposer_sync_component(
    std::uint64_t included_sync_signatures, Gwei participant_reward,
    WeightParams const &params);

Gwei proposer_reward(Gwei att_component, Gwei sync_component);

SlashingAmounts slashing_amounts(Gwei eff_balance, WeightParams const &params);

ExecutionReward el_proposer_reward(
    std::span<TransactionFees const> transactions,
    std::uint64_t block_gas_limit = kDefaultBlockGasLimit);

// Maximum extractable reward of one validator-epoch: the all-flags
// attestation reward at the realized attesting balances, plus a full epoch of
// sync rewards when the validator sits in the sync committee. Proposer and
// execution-layer income are excluded.
Gwei max_epoch_reward(
    Gwei eff_balance, Gwei total_active_balance, EpochBalances const &balances,
    bool in_sync_committee, WeightParams const &params);

} // namespace mer
