#include "oracle.hpp"
#include "test_support.hpp"

#include <mer/beacon_source.hpp>
#include <mer/state_analyzer.hpp>

#include <gtest/gtest.h>

#include <fstream>

using namespace mer;
using testing_support::TempDir;

namespace {

struct Indexed
{
    LedgerStore store;
    AnalyzeSummary summary;
    TruthLog truth;
};

// Simulates, then indexes every epoch whose lead-out state exists.
Indexed index_sim(SimConfig const &config, EntityMap const &entities = {})
{
    Indexed out;
    // One extra epoch so the truth log settles the last indexed epoch.
    auto longer = config;
    ++longer.epochs;
    Simulator sim(longer);
    sim.record_truth(&out.truth);
    while (sim.step()) {
    }
    SimProvider provider(config);
    AnalyzerOptions options;
    options.params = config.params;
    options.scaled_penalties = config.scaled_penalties;
    out.summary = process_range(provider, 0, config.epochs - 2, entities, out.store, options);
    return out;
}

void write_fixtures(SimConfig const &config, std::filesystem::path const &dir)
{
    run(config, [&](BeaconStateSnapshot const &s) {
        if ((s.slot + 1) % 32 == 0) {
            std::ofstream(dir / fixture_file_name(s.slot)) << to_json(s);
        }
    });
}

} // namespace

TEST(ResolveAttestations, ReadsPreviousParticipationOfActiveValidators)
{
    BeaconStateSnapshot n;
    n.balances.assign(4, 32 * kGweiPerEth);
    n.active = {true, true, false, true};
    BeaconStateSnapshot n1;
    n1.previous_participation_flags = {7, 0, 7, 3};
    auto const flags = resolve_attestations(n, n1);
    ASSERT_EQ(flags.size(), 4u);
    EXPECT_EQ(flags[0], FlagSet::all());
    EXPECT_FALSE(flags[1].any());
    EXPECT_FALSE(flags[2].any());
    EXPECT_EQ(flags[3], (FlagSet{true, true, false}));
}

TEST(ResolveAttestations, EmptyParticipationMeansNoFlags)
{
    BeaconStateSnapshot n;
    n.balances.assign(64, 32 * kGweiPerEth);
    n.active.assign(64, true);
    BeaconStateSnapshot n1;
    n1.previous_participation_flags.assign(64, 0);
    for (auto const f : resolve_attestations(n, n1)) {
        EXPECT_FALSE(f.any());
    }
}

TEST(MerRatio, DefinitionAndErrors)
{
    std::vector<ValidatorEpochRow> rows(2);
    rows[0].attestation_reward = 50;
    rows[0].max_attestation_reward = 100;
    rows[0].sync_reward = -20;
    rows[0].max_sync_reward = 20;
    rows[1].attestation_reward = 100;
    rows[1].max_attestation_reward = 100;
    EXPECT_DOUBLE_EQ(compute_mer_ratio(rows), 150.0 / 220.0);
    EXPECT_THROW(compute_mer_ratio({}), Error);
}

TEST(Checkpoint, NeverMovesBackwards)
{
    TempDir dir("cp");
    auto const path = dir.path() / "checkpoint.json";
    EXPECT_FALSE(load_checkpoint(path).has_value());
    EXPECT_EQ(save_checkpoint(path, {5, 191}), (AnalyzerCheckpoint{5, 191}));
    EXPECT_EQ(save_checkpoint(path, {3, 127}), (AnalyzerCheckpoint{5, 191}));
    EXPECT_EQ(save_checkpoint(path, {6, 223}), (AnalyzerCheckpoint{6, 223}));
    EXPECT_EQ(load_checkpoint(path), (AnalyzerCheckpoint{6, 223}));
    std::ofstream(path) << "{broken";
    EXPECT_THROW(load_checkpoint(path), Error);
}

TEST(ProcessRange, RowsMatchSimulatorGroundTruth)
{
    for (std::uint64_t seed : {11, 12}) {
        auto const result = index_sim(testing_support::mixed_faults(seed, 64, 14));
        EXPECT_TRUE(result.summary.audits_passed()) << seed;
        EXPECT_EQ(result.summary.epochs_written, 13u);
        std::size_t compared = 0;
        for (auto const &[epoch, batch] : result.store.epochs()) {
            for (auto const &row : batch.rows) {
                auto const it = result.truth.find({epoch, row.validator_index});
                ValidatorTruth const t = it == result.truth.end() ? ValidatorTruth{} : it->second;
                SCOPED_TRACE(testing::Message() << "epoch " << epoch << " validator " << row.validator_index);
                EXPECT_EQ(row.flags, t.flags);
                EXPECT_EQ(row.attestation_reward, t.attestation_reward);
                EXPECT_EQ(row.attestation_penalty, t.attestation_penalty + t.slashing_penalty);
                EXPECT_EQ(row.sync_reward, t.sync_net);
                EXPECT_EQ(row.proposer_cl_reward, t.proposer_cl + t.whistleblower_reward);
                EXPECT_EQ(row.el_reward, t.el);
                EXPECT_EQ(row.proposed_slots, t.proposed);
                EXPECT_EQ(row.missed_proposals, t.missed);
                EXPECT_LE(row.attestation_reward, row.max_attestation_reward);
                EXPECT_LE(row.sync_reward, static_cast<SignedGwei>(row.max_sync_reward));
                ++compared;
            }
        }
        EXPECT_GT(compared, 13u * 64u);
    }
}

TEST(ProcessRange, PerfectRunAttainsEveryMaximum)
{
    SimConfig config;
    config.epochs = 8;
    config.el_tip_max = 1'000'000;
    auto const result = index_sim(config);
    for (auto const &[epoch, batch] : result.store.epochs()) {
        for (auto const &row : batch.rows) {
            EXPECT_EQ(row.flags, FlagSet::all());
            EXPECT_EQ(row.attestation_reward, row.max_attestation_reward);
            EXPECT_EQ(row.attestation_penalty, 0u);
            EXPECT_EQ(row.missed_proposals, 0u);
        }
        EXPECT_EQ(compute_mer_ratio(batch.rows), 1.0);
    }
}

TEST(ProcessRange, OfflineForOneEpochOnlyHitsThatRow)
{
    SimConfig config;
    config.epochs = 8;
    ValidatorIndex const v = 9;
    Epoch const k = 3;
    config.offline.push_back({k, k, v, v + 1, true, false, false});
    auto const result = index_sim(config);

    auto const &row = result.store.find(k)->rows.at(v);
    ASSERT_EQ(row.validator_index, v);
    EXPECT_FALSE(row.flags.any());
    EXPECT_EQ(row.attestation_reward, 0u);
    auto const base = oracle::base_reward(row.effective_balance, 64 * 32 * kGweiPerEth, config.params);
    auto const penalty = oracle::attestation_penalty(FlagSet::all(), base, config.params);
    EXPECT_EQ(oracle::Int(row.attestation_penalty), penalty);
    EXPECT_EQ(row.attestation_penalty, base.convert_to<Gwei>() * 40 / 64);

    for (auto const &[epoch, batch] : result.store.epochs()) {
        for (auto const &r : batch.rows) {
            if (epoch == k && r.validator_index == v) {
                continue;
            }
            EXPECT_EQ(r.flags, FlagSet::all()) << epoch << "/" << r.validator_index;
            EXPECT_EQ(r.attestation_penalty, 0u);
        }
    }
}

TEST(ProcessRange, HalfOfflineMatchesClosedForm)
{
    // Attesters 0..31 drop out; every block still lands, so sync duties and
    // vote inclusion are untouched.
    SimConfig config;
    config.epochs = 6;
    Epoch const k = 2;
    config.offline.push_back({k, k, 0, 32, true, false, false});
    auto const result = index_sim(config);
    auto const ratio = compute_mer_ratio(result.store.find(k)->rows);

    auto const &p = config.params;
    oracle::Int const total = 64 * 32 * kGweiPerEth;
    oracle::Int const half = total / 2;
    auto const base = oracle::base_reward(32 * kGweiPerEth, total, p);
    oracle::Int att_max = 0;
    for (auto const w : {p.timely_source_weight, p.timely_target_weight, p.timely_head_weight}) {
        att_max += oracle::flag_reward(w, base, half, total, p);
    }
    auto const sync_max = 32 * oracle::sync_participant_reward(oracle::sync_total_reward(oracle::total_base_reward(total, p), p), p);
    oracle::Rational const expected(32 * att_max + 64 * sync_max, 64 * att_max + 64 * sync_max);
    EXPECT_NEAR(ratio, expected.convert_to<double>(), 1e-12);
    EXPECT_GT(ratio, 0.5);
    EXPECT_LT(ratio, 0.6);
}

TEST(ProcessRange, EmptyEpochsGiveZeroFlags)
{
    SimConfig config;
    config.epochs = 8;
    config.offline.push_back({3, 4, 0, 64, false, false, true});
    auto const result = index_sim(config);
    for (auto const &row : result.store.find(3)->rows) {
        EXPECT_FALSE(row.flags.any());
        EXPECT_EQ(row.proposed_slots, 0u);
    }
    EXPECT_TRUE(result.summary.audits_passed());
}

TEST(ProcessRange, RerunLeavesStoreUnchanged)
{
    auto const config = testing_support::mixed_faults(5, 64, 8);
    TempDir dir("rerun");
    SimProvider provider(config);
    LedgerStore store(dir.path());
    process_range(provider, 0, 6, {}, store);
    auto const hash = store.content_hash();
    LedgerStore again(dir.path());
    AnalyzerOptions options;
    options.resume = false;
    auto const summary = process_range(provider, 0, 6, {}, again, options);
    EXPECT_EQ(summary.epochs_written, 0u);
    EXPECT_EQ(summary.epochs_unchanged, 7u);
    EXPECT_EQ(again.content_hash(), hash);
}

TEST(ProcessRange, EntitiesLabelRows)
{
    std::istringstream deposits("0,0x01\n1,0x01\n");
    std::istringstream names("0x01,Lido\n");
    auto const entities = EntityMap::build(deposits, names);
    SimConfig config;
    auto const result = index_sim(config, entities);
    auto const &rows = result.store.find(0)->rows;
    EXPECT_EQ(rows[0].entity, "Lido");
    EXPECT_EQ(rows[1].entity, "Lido");
    EXPECT_EQ(rows[2].entity, "Other");
}

TEST(ProcessRange, TamperedBalanceFailsReconciliation)
{
    SimConfig config;
    config.epochs = 8;
    TempDir dir("tamper");
    write_fixtures(config, dir.path());
    auto const path = dir.path() / fixture_file_name(4 * 32 + 31);
    auto snapshot = snapshot_from_json(read_file(path));
    ValidatorIndex target = 0;
    while (std::any_of(snapshot.epoch_slots.begin(), snapshot.epoch_slots.end(),
                       [&](SlotRecord const &r) { return r.proposer_index == target; })) {
        ++target;
    }
    snapshot.balances[target] += 1;
    std::ofstream(path, std::ios::trunc) << to_json(snapshot);

    FileProvider provider(dir.path());
    LedgerStore store;
    auto const summary = process_range(provider, 0, 6, {}, store);
    EXPECT_GT(summary.reconciliation_failures, 0u);
    EXPECT_FALSE(summary.audits_passed());
}

TEST(ProcessRange, HaltsOnGapAndResumesFromCheckpoint)
{
    auto const config = testing_support::mixed_faults(21, 64, 12);
    TempDir fixtures("gap");
    write_fixtures(config, fixtures.path());
    auto const hole = fixtures.path() / fixture_file_name(7 * 32 + 31);
    auto const saved = read_file(hole);
    std::filesystem::remove(hole);

    TempDir out("gap_store");
    AnalyzerOptions options;
    options.checkpoint_path = out.path() / "checkpoint.json";
    options.checkpoint_interval = 1;
    {
        FileProvider provider(fixtures.path());
        LedgerStore store(out.path());
        try {
            process_range(provider, 0, 10, {}, store, options);
            FAIL() << "gap not detected";
        }
        catch (HaltError const &e) {
            EXPECT_EQ(e.code(), ErrorCode::not_found);
            ASSERT_TRUE(e.checkpoint().has_value());
            EXPECT_EQ(e.checkpoint()->last_fully_indexed_epoch, 5u);
        }
        EXPECT_EQ(store.epochs().rbegin()->first, 5u);
        EXPECT_EQ(load_checkpoint(*options.checkpoint_path)->last_fully_indexed_epoch, 5u);
    }

    write_file_atomic(hole, saved);
    FileProvider provider(fixtures.path());
    LedgerStore resumed(out.path());
    auto const summary = process_range(provider, 0, 10, {}, resumed, options);
    EXPECT_EQ(summary.first_epoch, 6u);
    EXPECT_EQ(summary.epochs_written, 5u);
    EXPECT_EQ(load_checkpoint(*options.checkpoint_path)->last_fully_indexed_epoch, 10u);

    LedgerStore clean;
    SimProvider sim(config);
    process_range(sim, 0, 10, {}, clean);
    EXPECT_EQ(resumed.content_hash(), clean.content_hash());
}

TEST(ProcessRange, MismatchedSnapshotSlotIsDecodeError)
{
    SimConfig config;
    TempDir dir("slotmix");
    write_fixtures(config, dir.path());
    auto const a = dir.path() / fixture_file_name(63);
    auto snapshot = snapshot_from_json(read_file(a));
    snapshot.slot = 62;
    std::ofstream(a, std::ios::trunc) << to_json(snapshot);
    FileProvider provider(dir.path());
    LedgerStore store;
    try {
        process_range(provider, 0, 2, {}, store);
        FAIL();
    }
    catch (HaltError const &e) {
        EXPECT_EQ(e.code(), ErrorCode::decode);
    }
}
