#pragma once

// Randomized comparison of every reward operation against the rational
// oracle. Shared by the unit tests and the acceptance binary.

#include "oracle.hpp"

#include <mer/reward_model.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>

namespace oracle {

struct SuiteResult
{
    // Operation name -> (cases, mismatches).
    std::map<std::string, std::pair<std::size_t, std::size_t>> operations;

    std::size_t mismatches() const
    {
        std::size_t n = 0;
        for (auto const &[name, r] : operations) {
            n += r.second;
        }
        return n;
    }
};

class InputGen
{
public:
    explicit InputGen(std::uint64_t seed)
        : rng_(seed)
    {
    }

    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi)
    {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng_);
    }

    // Log-uniform total active balance between one increment and ~10^19 Gwei.
    std::uint64_t total(mer::WeightParams const &p)
    {
        auto const exponent = std::uniform_real_distribution<double>(9.0, 19.2)(rng_);
        auto const raw = static_cast<std::uint64_t>(std::pow(10.0, exponent));
        return std::max<std::uint64_t>(raw, p.effective_balance_increment);
    }

    std::uint64_t effective(mer::WeightParams const &p, std::uint64_t total)
    {
        auto const cap = std::min(p.max_effective_balance, total);
        // Mostly increment multiples, sometimes arbitrary values.
        if (uniform(0, 3) == 0) {
            return uniform(0, cap);
        }
        return uniform(0, cap / p.effective_balance_increment) * p.effective_balance_increment;
    }

    mer::EpochBalances balances(std::uint64_t total)
    {
        return {total, uniform(0, total), uniform(0, total), uniform(0, total)};
    }

    mer::FlagSet flags()
    {
        return mer::FlagSet::from_bits(static_cast<std::uint8_t>(uniform(0, 7)));
    }

private:
    std::mt19937_64 rng_;
};

inline SuiteResult run_reward_suite(std::uint64_t seed, std::size_t cases)
{
    mer::WeightParams const p;
    InputGen gen(seed);
    SuiteResult result;

    auto check = [&](std::string const &name, auto &&body) {
        auto &[count, bad] = result.operations[name];
        for (std::size_t i = 0; i < cases; ++i) {
            ++count;
            if (!body()) {
                ++bad;
            }
        }
    };

    check("integer_sqrt", [&] {
        auto const n = gen.uniform(0, UINT64_MAX >> gen.uniform(0, 63));
        return Int(mer::integer_sqrt(n)) == isqrt(Int(n));
    });
    check("base_reward", [&] {
        auto const total = gen.total(p);
        auto const eff = gen.effective(p, total);
        return Int(mer::base_reward(eff, total, p)) == base_reward(eff, total, p);
    });
    check("flag_reward", [&] {
        auto const total = gen.total(p);
        auto const base = mer::base_reward(gen.effective(p, total), total, p);
        auto const att = gen.uniform(0, total);
        auto const w = gen.uniform(1, 26);
        return Int(mer::flag_reward(w, base, att, total, p)) == flag_reward(w, base, att, total, p);
    });
    check("attestation_reward", [&] {
        auto const total = gen.total(p);
        auto const base = mer::base_reward(gen.effective(p, total), total, p);
        auto const b = gen.balances(total);
        auto const f = gen.flags();
        return Int(mer::attestation_reward(f, base, b, p)) == attestation_reward(f, base, b, p);
    });
    check("attestation_penalty", [&] {
        auto const total = gen.total(p);
        auto const base = mer::base_reward(gen.effective(p, total), total, p);
        auto const f = gen.flags();
        return Int(mer::attestation_penalty(f, base, p)) == attestation_penalty(f, base, p);
    });
    check("sync_total_reward", [&] {
        auto const total = gen.total(p);
        auto const sum = mer::total_base_reward(total, p);
        return Int(mer::sync_total_reward(sum, p)) == sync_total_reward(sum, p) &&
               Int(sum) == total_base_reward(total, p);
    });
    check("sync_participant_reward", [&] {
        auto const total_sync = gen.uniform(0, UINT64_MAX >> gen.uniform(0, 40));
        return Int(mer::sync_participant_reward(total_sync, p)) ==
               sync_participant_reward(total_sync, p);
    });
    check("proposer_attestation_component", [&] {
        auto const sum = gen.uniform(0, UINT64_MAX >> gen.uniform(4, 40));
        return Int(mer::proposer_attestation_component(sum, p)) ==
               proposer_attestation_component(sum, p);
    });
    check("proposer_sync_component", [&] {
        auto const count = gen.uniform(0, p.sync_committee_size);
        auto const participant = gen.uniform(0, 10'000'000);
        return Int(mer::proposer_sync_component(count, participant, p)) ==
               proposer_sync_component(count, participant, p);
    });
    check("proposer_reward", [&] {
        auto const sum = gen.uniform(0, 1ULL << 50);
        auto const count = gen.uniform(0, p.sync_committee_size);
        auto const participant = gen.uniform(0, 10'000'000);
        auto const got = mer::proposer_reward(
            mer::proposer_attestation_component(sum, p),
            mer::proposer_sync_component(count, participant, p));
        return Int(got) == proposer_attestation_component(sum, p) +
                               proposer_sync_component(count, participant, p);
    });
    check("slashing_amounts", [&] {
        auto const eff = gen.uniform(0, p.max_effective_balance);
        auto const got = mer::slashing_amounts(eff, p);
        auto const want = slashing(eff, p);
        return Int(got.penalty) == want.penalty && Int(got.proposer_reward) == want.proposer &&
               Int(got.whistleblower_reward) == want.whistleblower;
    });
    check("el_proposer_reward", [&] {
        std::vector<mer::TransactionFees> txs(gen.uniform(0, 20));
        for (auto &tx : txs) {
            tx = {gen.uniform(21'000, 1'000'000), gen.uniform(0, 500), gen.uniform(0, 50)};
        }
        auto const got = mer::el_proposer_reward(txs);
        auto const want = el_reward(txs);
        return Int(got.tips) == want.tips && Int(got.burned) == want.burned;
    });
    check("max_epoch_reward", [&] {
        auto const total = gen.total(p);
        auto const eff = gen.effective(p, total);
        auto const b = gen.balances(total);
        bool const in_sync = gen.uniform(0, 1) == 1;
        return Int(mer::max_epoch_reward(eff, total, b, in_sync, p)) ==
               max_epoch_reward(eff, total, b, in_sync, p);
    });
    return result;
}

} // namespace oracle
