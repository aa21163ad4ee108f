#include "test_support.hpp"

#include <mer/chain_sim.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace mer;

namespace {

std::vector<std::string> trace(SimConfig const &config)
{
    std::vector<std::string> out;
    run(config, [&](BeaconStateSnapshot const &s) { out.push_back(to_json(s)); });
    return out;
}

// Drives slots by hand: only `voter`'s slot-0 vote is cast and only slots in
// `blocks` carry a block.
TruthLog drive_inclusion(std::set<Slot> const &blocks, ValidatorIndex &voter, Slot last_slot)
{
    SimConfig config;
    config.seed = 17;
    config.epochs = 4;
    TruthLog truth;
    auto state = genesis(config);
    state.truth = &truth;
    voter = state.assignments.committees[0].front();
    for (Slot slot = 0; slot <= last_slot; ++slot) {
        if (slot > 0 && slot % 32 == 0) {
            apply_epoch_transition(state, config);
        }
        auto out = simulate_slot(slot, state.assignments, config, state);
        std::erase_if(out.votes, [&](Vote const &v) { return slot != 0 || v.validator != voter; });
        out.block_proposed = blocks.contains(slot);
        if (!out.block_proposed) {
            out.sync_participation.assign(out.sync_participation.size(), false);
            out.el_tips = 0;
        }
        apply_slot_transition(state, out, config);
    }
    return truth;
}

} // namespace

TEST(Rng, BelowStaysInRangeAndCoversIt)
{
    Rng rng(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70'000; ++i) {
        auto const x = rng.below(7);
        ASSERT_LT(x, 7u);
        ++counts[x];
    }
    for (auto const c : counts) {
        EXPECT_NEAR(c, 10'000, 500);
    }
}

TEST(Rng, MixSeedSeparatesStreams)
{
    EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
    EXPECT_NE(mix_seed(1, 2, 3), mix_seed(2, 2, 3));
    EXPECT_EQ(mix_seed(5, 6, 7), mix_seed(5, 6, 7));
}

TEST(SimConfig, ValidationNamesTheField)
{
    auto expect_field = [](SimConfig const &c, std::string const &field) {
        try {
            c.validate();
            ADD_FAILURE() << "accepted invalid " << field;
        }
        catch (Error const &e) {
            EXPECT_EQ(e.code(), ErrorCode::invalid_config);
            EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
        }
    };
    SimConfig c;
    c.validator_count = 10;
    expect_field(c, "validators");
    c = {};
    c.p_missed_head = 1.5;
    expect_field(c, "p_missed_head");
    c = {};
    c.epochs = 0;
    expect_field(c, "epochs");
    c = {};
    c.el_tip_min = 5;
    c.el_tip_max = 1;
    expect_field(c, "el_tip_min");
    c = {};
    c.slashings.push_back({0, 500, std::nullopt});
    expect_field(c, "slashing[0]");
}

TEST(Simulator, SameSeedSameTrace)
{
    auto const config = testing_support::mixed_faults(42, 64, 6);
    EXPECT_EQ(trace(config), trace(config));
}

TEST(Simulator, DifferentSeedDifferentTrace)
{
    EXPECT_NE(trace(testing_support::mixed_faults(1, 64, 3)),
              trace(testing_support::mixed_faults(2, 64, 3)));
}

TEST(Simulator, ConservationWithMixedFaults)
{
    for (std::uint64_t seed : {1, 2, 3}) {
        auto const audit = run(testing_support::mixed_faults(seed, 64, 20), [](auto const &) {});
        EXPECT_TRUE(audit.ok) << seed;
        EXPECT_EQ(audit.balance_delta, audit.journal_net);
        EXPECT_EQ(audit.mismatched_validators, 0u);
    }
}

TEST(Simulator, SnapshotSlotsAreSequential)
{
    Simulator sim(SimConfig{});
    Slot expected = 0;
    while (sim.step()) {
        EXPECT_EQ(sim.snapshot().slot, expected++);
    }
    EXPECT_EQ(expected, SimConfig{}.slot_count());
    EXPECT_FALSE(sim.step());
}

TEST(AssignEpoch, CommitteesPartitionTheActiveSet)
{
    WeightParams const p;
    std::vector<ValidatorIndex> active(1000);
    std::iota(active.begin(), active.end(), 0);
    active.erase(active.begin() + 100, active.begin() + 150);
    SyncCommitteeCache cache;
    auto const a = assign_epoch(3, active, 9, p, cache);
    std::vector<ValidatorIndex> members;
    for (auto const &committee : a.committees) {
        EXPECT_GE(committee.size(), active.size() / 32);
        EXPECT_LE(committee.size(), active.size() / 32 + 1);
        members.insert(members.end(), committee.begin(), committee.end());
    }
    std::sort(members.begin(), members.end());
    EXPECT_EQ(members, active);
    for (auto const proposer : a.proposers) {
        EXPECT_TRUE(std::binary_search(active.begin(), active.end(), proposer));
    }
    std::set<ValidatorIndex> sync(a.sync_committee.begin(), a.sync_committee.end());
    EXPECT_EQ(a.sync_committee.size(), 512u);
    EXPECT_EQ(sync.size(), 512u);
}

TEST(AssignEpoch, SyncCommitteeFixedWithinPeriod)
{
    WeightParams const p;
    std::vector<ValidatorIndex> active(600);
    std::iota(active.begin(), active.end(), 0);
    SyncCommitteeCache cache;
    auto const first = assign_epoch(0, active, 1, p, cache).sync_committee;
    EXPECT_EQ(assign_epoch(255, active, 1, p, cache).sync_committee, first);
    EXPECT_NE(assign_epoch(256, active, 1, p, cache).sync_committee, first);
}

TEST(AssignEpoch, SmallRegistryUsesEveryValidatorForSync)
{
    WeightParams const p;
    std::vector<ValidatorIndex> active(64);
    std::iota(active.begin(), active.end(), 0);
    SyncCommitteeCache cache;
    auto sync = assign_epoch(0, active, 1, p, cache).sync_committee;
    std::sort(sync.begin(), sync.end());
    EXPECT_EQ(sync, active);
}

TEST(AssignEpoch, RejectsTooFewValidators)
{
    WeightParams const p;
    SyncCommitteeCache cache;
    std::vector<ValidatorIndex> none;
    EXPECT_THROW(assign_epoch(0, none, 1, p, cache), Error);
    std::vector<ValidatorIndex> few(10);
    EXPECT_THROW(assign_epoch(0, few, 1, p, cache), Error);
}

TEST(InclusionWindow, VoteIncludedThirtyOneSlotsLateCounts)
{
    for (Slot inclusion : {1, 31, 32}) {
        ValidatorIndex voter = 0;
        auto const truth = drive_inclusion({inclusion}, voter, 64);
        auto const it = truth.find({0, voter});
        ASSERT_NE(it, truth.end());
        EXPECT_TRUE(it->second.flags.any()) << "inclusion at slot " << inclusion;
    }
}

TEST(InclusionWindow, VoteMissingTheWindowIsLost)
{
    ValidatorIndex voter = 0;
    auto const truth = drive_inclusion({0, 33}, voter, 64);
    auto const it = truth.find({0, voter});
    ASSERT_NE(it, truth.end());
    EXPECT_FALSE(it->second.flags.any());
    EXPECT_GT(it->second.attestation_penalty, 0u);
}

TEST(InclusionWindow, IncludingAVoteTwiceAddsNothing)
{
    // The vote is consumed by the first block; a later block cannot credit
    // the proposer for it again.
    ValidatorIndex voter = 0;
    auto const once = drive_inclusion({5}, voter, 40);
    auto const twice = drive_inclusion({5, 6}, voter, 40);
    Gwei cl_once = 0;
    Gwei cl_twice = 0;
    for (auto const &[key, t] : once) {
        cl_once += t.proposer_cl;
    }
    for (auto const &[key, t] : twice) {
        cl_twice += t.proposer_cl;
    }
    // The second block only adds its sync component.
    SimConfig config;
    auto state = genesis(config);
    auto const participant = state.context(0).sync_participant_reward;
    EXPECT_LE(cl_twice - cl_once, proposer_sync_component(64, participant, config.params));
}

TEST(Simulator, SlashedValidatorExitsNextEpoch)
{
    SimConfig config;
    config.seed = 3;
    config.epochs = 4;
    config.slashings.push_back({1, 5, 6});
    TruthLog truth;
    Simulator sim(config);
    sim.record_truth(&truth);
    while (sim.step()) {
        auto const epoch = sim.slot() / 32;
        auto const &s = sim.state();
        if (epoch == 1) {
            EXPECT_TRUE(s.active[5]);
        }
        if (epoch >= 2) {
            EXPECT_FALSE(s.active[5]);
            EXPECT_TRUE(s.slashed[5]);
        }
    }
    auto const amounts = slashing_amounts(32 * kGweiPerEth, config.params);
    EXPECT_EQ(truth.at({1, 5}).slashing_penalty, amounts.penalty);
    EXPECT_EQ(truth.at({1, 6}).whistleblower_reward, amounts.whistleblower_reward);
    EXPECT_TRUE(audit_conservation(sim.state()).ok);
}

TEST(Simulator, HysteresisMovesEffectiveBalanceOnlyPastThresholds)
{
    SimConfig config;
    config.effective_balance_rule = EffectiveBalanceRule::hysteresis;
    auto state = genesis(config);
    for (Slot slot = 0; slot < 32; ++slot) {
        auto const out = simulate_slot(slot, state.assignments, config, state);
        apply_slot_transition(state, out, config);
    }
    state.balances[0] = 31'700'000'000ULL;
    state.balances[1] = 31'800'000'000ULL;
    apply_epoch_transition(state, config);
    EXPECT_EQ(state.effective_balances[0], 31 * kGweiPerEth);
    EXPECT_EQ(state.effective_balances[1], 32 * kGweiPerEth);
}

TEST(Simulator, GrowthAddsValidators)
{
    SimConfig config;
    config.epochs = 5;
    config.growth_per_epoch = 0.25;
    Simulator sim(config);
    while (sim.step()) {
    }
    EXPECT_EQ(sim.state().registry_size(), 64u + 4 * 16);
    EXPECT_TRUE(audit_conservation(sim.state()).ok);
}

TEST(Simulator, OfflineValidatorsMissEveryDuty)
{
    SimConfig config;
    config.epochs = 4;
    config.offline.push_back({1, 1, 0, 64, true, true, true});
    TruthLog truth;
    Simulator sim(config);
    sim.record_truth(&truth);
    while (sim.step()) {
        if (sim.slot() / 32 == 1) {
            EXPECT_FALSE(sim.state().epoch_slots.back().block_proposed);
        }
    }
    // Epoch-0 votes from the last slot needed an epoch-1 block, and none came.
    std::size_t epoch0_voters = 0;
    for (ValidatorIndex v = 0; v < 64; ++v) {
        EXPECT_FALSE(truth.at({1, v}).flags.any());
        epoch0_voters += truth.at({0, v}).flags.any() ? 1 : 0;
    }
    EXPECT_EQ(epoch0_voters, 62u);
}
