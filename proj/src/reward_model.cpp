#include <mer/reward_model.hpp>

#include <fmt/format.h>

namespace mer {

namespace {

__extension__ typedef unsigned __int128 u128;

[[noreturn]] void domain_error(std::string const &what)
{
    throw Error(ErrorCode::domain, what);
}

Gwei narrow(u128 value, char const *op)
{
    if (value > static_cast<u128>(UINT64_MAX)) {
        domain_error(fmt::format("{}: result exceeds 64 bits", op));
    }
    return static_cast<Gwei>(value);
}

Gwei attesting_balance(Flag flag, EpochBalances const &balances) noexcept
{
    switch (flag) {
    case Flag::source:
        return balances.attesting_balance_source;
    case Flag::target:
        return balances.attesting_balance_target;
    case Flag::head:
        return balances.attesting_balance_head;
    }
    return 0;
}

} // namespace

char const *to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::domain:
        return "domain";
    case ErrorCode::not_found:
        return "not_found";
    case ErrorCode::backend_unavailable:
        return "backend_unavailable";
    case ErrorCode::decode:
        return "decode";
    case ErrorCode::conflict:
        return "conflict";
    case ErrorCode::invalid_config:
        return "invalid_config";
    case ErrorCode::io:
        return "io";
    case ErrorCode::audit:
        return "audit";
    }
    return "unknown";
}

void WeightParams::validate() const
{
    auto fail = [](char const *field, char const *why) {
        throw Error(ErrorCode::invalid_config, fmt::format("weights.{}: {}", field, why));
    };
    if (timely_source_weight == 0) {
        fail("timely_source_weight", "must be positive");
    }
    if (timely_target_weight == 0) {
        fail("timely_target_weight", "must be positive");
    }
    if (timely_head_weight == 0) {
        fail("timely_head_weight", "must be positive");
    }
    if (sync_reward_weight == 0) {
        fail("sync_reward_weight", "must be positive");
    }
    if (proposer_weight == 0) {
        fail("proposer_weight", "must be positive");
    }
    if (weight_denominator <= proposer_weight) {
        fail("weight_denominator", "must exceed proposer_weight");
    }
    auto const sum = timely_source_weight + timely_target_weight + timely_head_weight +
                     sync_reward_weight + proposer_weight;
    if (sum > weight_denominator) {
        fail("weight_denominator", "weights sum past the denominator");
    }
    if (base_reward_factor == 0) {
        fail("base_reward_factor", "must be positive");
    }
    if (slots_per_epoch == 0) {
        fail("slots_per_epoch", "must be positive");
    }
    if (sync_committee_size == 0) {
        fail("sync_committee_size", "must be positive");
    }
    if (epochs_per_sync_period == 0) {
        fail("epochs_per_sync_period", "must be positive");
    }
    if (effective_balance_increment == 0) {
        fail("effective_balance_increment", "must be positive");
    }
    if (max_effective_balance < effective_balance_increment ||
        max_effective_balance % effective_balance_increment != 0) {
        fail("max_effective_balance", "must be a positive multiple of the increment");
    }
}

void EpochBalances::validate() const
{
    if (total_active_balance == 0) {
        domain_error("epoch balances: total_active_balance is zero");
    }
    if (attesting_balance_source > total_active_balance ||
        attesting_balance_target > total_active_balance ||
        attesting_balance_head > total_active_balance) {
        domain_error("epoch balances: attesting balance exceeds total active balance");
    }
}

std::uint64_t flag_weight(Flag flag, WeightParams const &params) noexcept
{
    switch (flag) {
    case Flag::source:
        return params.timely_source_weight;
    case Flag::target:
        return params.timely_target_weight;
    case Flag::head:
        return params.timely_head_weight;
    }
    return 0;
}

std::uint64_t integer_sqrt(std::uint64_t n) noexcept
{
    if (n < 2) {
        return n;
    }
    // Newton iteration from an overestimate; monotonically decreasing.
    std::uint64_t x = n;
    std::uint64_t y = x / 2 + (x & 1);
    while (y < x) {
        x = y;
        y = (x + n / x) / 2;
    }
    return x;
}

Gwei base_reward_per_increment(Gwei total_active_balance, WeightParams const &params)
{
    if (total_active_balance == 0) {
        domain_error("base_reward: total_active_balance is zero");
    }
    if (total_active_balance < params.effective_balance_increment) {
        domain_error("base_reward: total_active_balance below one increment");
    }
    u128 const numerator =
        static_cast<u128>(params.effective_balance_increment) * params.base_reward_factor;
    return narrow(numerator / integer_sqrt(total_active_balance), "base_reward");
}

Gwei base_reward(Gwei eff_balance, Gwei total_active_balance, WeightParams const &params)
{
    if (eff_balance > params.max_effective_balance) {
        domain_error(fmt::format(
            "base_reward: effective balance {} exceeds maximum {}", eff_balance,
            params.max_effective_balance));
    }
    auto const per_increment = base_reward_per_increment(total_active_balance, params);
    auto const increments = eff_balance / params.effective_balance_increment;
    return narrow(static_cast<u128>(increments) * per_increment, "base_reward");
}

Gwei total_base_reward(Gwei total_active_balance, WeightParams const &params)
{
    auto const per_increment = base_reward_per_increment(total_active_balance, params);
    auto const increments = total_active_balance / params.effective_balance_increment;
    return narrow(static_cast<u128>(increments) * per_increment, "total_base_reward");
}

Gwei flag_reward(
    std::uint64_t weight, Gwei validator_base_reward, Gwei attesting_balance,
    Gwei total_active_balance, WeightParams const &params)
{
    if (total_active_balance == 0) {
        domain_error("flag_reward: total_active_balance is zero");
    }
    if (attesting_balance > total_active_balance) {
        domain_error("flag_reward: attesting balance exceeds total active balance");
    }
    u128 const numerator =
        static_cast<u128>(weight) * validator_base_reward * attesting_balance;
    u128 const denominator = static_cast<u128>(params.weight_denominator) * total_active_balance;
    return narrow(numerator / denominator, "flag_reward");
}

Gwei flag_reward(
    Flag flag, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params)
{
    return flag_reward(
        flag_weight(flag, params), validator_base_reward, attesting_balance(flag, balances),
        balances.total_active_balance, params);
}

Gwei attestation_reward(
    FlagSet flags, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params)
{
    balances.validate();
    Gwei total = 0;
    if (flags.source) {
        total += flag_reward(Flag::source, validator_base_reward, balances, params);
    }
    if (flags.target) {
        total += flag_reward(Flag::target, validator_base_reward, balances, params);
    }
    if (flags.head) {
        total += flag_reward(Flag::head, validator_base_reward, balances, params);
    }
    return total;
}

Gwei attestation_penalty(
    FlagSet flags_missed, Gwei validator_base_reward, WeightParams const &params)
{
    auto const unit = [&](std::uint64_t weight) {
        return narrow(
            static_cast<u128>(weight) * validator_base_reward / params.weight_denominator,
            "attestation_penalty");
    };
    Gwei total = 0;
    if (flags_missed.source) {
        total += unit(params.timely_source_weight);
    }
    if (flags_missed.target) {
        total += unit(params.timely_target_weight);
    }
    return total;
}

Gwei attestation_penalty_scaled(
    FlagSet flags_missed, Gwei validator_base_reward, EpochBalances const &balances,
    WeightParams const &params)
{
    balances.validate();
    Gwei total = 0;
    if (flags_missed.source) {
        total += flag_reward(Flag::source, validator_base_reward, balances, params);
    }
    if (flags_missed.target) {
        total += flag_reward(Flag::target, validator_base_reward, balances, params);
    }
    return total;
}

Gwei sync_total_reward(Gwei sum_base_rewards, WeightParams const &params)
{
    return narrow(
        static_cast<u128>(sum_base_rewards) * params.sync_reward_weight /
            params.weight_denominator,
        "sync_total_reward");
}

Gwei sync_participant_reward(Gwei total_sync_reward, WeightParams const &params)
{
    return total_sync_reward / (params.slots_per_epoch * params.sync_committee_size);
}

Gwei proposer_attestation_component(Gwei sum_weighted_base, WeightParams const &params)
{
    u128 const denominator =
        static_cast<u128>(params.weight_denominator - params.proposer_weight) *
        params.weight_denominator;
    return narrow(
        static_cast<u128>(sum_weighted_base) * params.proposer_weight / denominator,
        "proposer_attestation_component");
}

Gwei proposer_sync_component(
    std::uint64_t included_sync_signatures, Gwei participant_reward,
    WeightParams const &params)
{
    if (included_sync_signatures > params.sync_committee_size) {
        domain_error(fmt::format(
            "proposer_sync_component: {} signatures exceed committee size {}",
            included_sync_signatures, params.sync_committee_size));
    }
    auto const per_signature = narrow(
        static_cast<u128>(participant_reward) * params.proposer_weight /
            (params.weight_denominator - params.proposer_weight),
        "proposer_sync_component");
    return narrow(
        static_cast<u128>(per_signature) * included_sync_signatures,
        "proposer_sync_component");
}

Gwei proposer_reward(Gwei att_component, Gwei sync_component)
{
    if (att_component > UINT64_MAX - sync_component) {
        domain_error("proposer_reward: overflow");
    }
    return att_component + sync_component;
}

SlashingAmounts slashing_amounts(Gwei eff_balance, WeightParams const &params)
{
    if (eff_balance > params.max_effective_balance) {
        domain_error("slashing_amounts: effective balance exceeds maximum");
    }
    SlashingAmounts out;
    out.penalty = eff_balance / kSlashingPenaltyQuotient;
    auto const whistleblower_total = eff_balance / kWhistleblowerRewardQuotient;
    out.proposer_reward = narrow(
        static_cast<u128>(eff_balance) * params.proposer_weight /
            (static_cast<u128>(kWhistleblowerRewardQuotient) * params.weight_denominator),
        "slashing_amounts");
    out.whistleblower_reward = whistleblower_total - out.proposer_reward;
    return out;
}

ExecutionReward el_proposer_reward(
    std::span<TransactionFees const> transactions, std::uint64_t block_gas_limit)
{
    ExecutionReward out;
    for (std::size_t i = 0; i < transactions.size(); ++i) {
        auto const &tx = transactions[i];
        if (tx.gas_used > block_gas_limit) {
            domain_error(fmt::format(
                "el_proposer_reward: tx {} gas_used {} exceeds block gas limit {}", i,
                tx.gas_used, block_gas_limit));
        }
        Gwei tip = 0;
        Gwei burn = 0;
        if (__builtin_mul_overflow(tx.gas_used, tx.priority_fee_per_gas, &tip) ||
            __builtin_mul_overflow(tx.gas_used, tx.base_fee_per_gas, &burn) ||
            __builtin_add_overflow(out.tips, tip, &out.tips) ||
            __builtin_add_overflow(out.burned, burn, &out.burned)) {
            domain_error(fmt::format("el_proposer_reward: overflow at tx {}", i));
        }
    }
    return out;
}

Gwei max_epoch_reward(
    Gwei eff_balance, Gwei total_active_balance, EpochBalances const &balances,
    bool in_sync_committee, WeightParams const &params)
{
    auto const base = base_reward(eff_balance, total_active_balance, params);
    Gwei total = attestation_reward(FlagSet::all(), base, balances, params);
    if (in_sync_committee) {
        auto const participant = sync_participant_reward(
            sync_total_reward(total_base_reward(total_active_balance, params), params), params);
        total += params.slots_per_epoch * participant;
    }
    return total;
}

} // namespace mer
