#include "test_support.hpp"

#include <mer/beacon_source.hpp>
#include <mer/metrics.hpp>
#include <mer/state_analyzer.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace mer;
using testing_support::TempDir;

namespace {

LedgerStore index_all(SimConfig const &config, EntityMap const &entities = {})
{
    SimProvider provider(config);
    LedgerStore store;
    AnalyzerOptions options;
    options.params = config.params;
    auto const summary = process_range(provider, 0, config.epochs - 2, entities, store, options);
    EXPECT_TRUE(summary.audits_passed());
    return store;
}

EntityMap synthetic_map(std::size_t validators, std::vector<SyntheticEntity> const &entities)
{
    std::ostringstream deposits;
    std::ostringstream names;
    write_synthetic_entities(validators, entities, 1, deposits, names);
    std::istringstream d(deposits.str());
    std::istringstream n(names.str());
    return EntityMap::build(d, n);
}

using Sequence = std::vector<std::optional<std::string>>;

// Reference counting: every window [i, i + k) with one entity throughout.
std::map<std::string, StreakCounts> brute_force_streaks(Sequence const &seq)
{
    std::map<std::string, StreakCounts> out;
    auto const n = seq.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!seq[i]) {
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && seq[j + 1] == seq[i]) {
            ++j;
            ++out[*seq[i]].cumulative[j - i + 1];
        }
        bool const starts = i == 0 || seq[i - 1] != seq[i];
        if (starts && j > i) {
            ++out[*seq[i]].maximal[j - i + 1];
        }
    }
    return out;
}

} // namespace

TEST(MissedFlags, PerfectRunIsAllZero)
{
    SimConfig config;
    config.epochs = 6;
    auto const store = index_all(config);
    auto const series = missed_flags_series(store);
    ASSERT_EQ(series.size(), 5u);
    for (auto const &p : series) {
        EXPECT_EQ(p.total, 0.0);
        EXPECT_EQ(p.source, 0.0);
        EXPECT_EQ(p.head, 0.0);
    }
    EXPECT_THROW(missed_flags_series(LedgerStore{}), Error);
}

TEST(MissedFlags, SpikeShowsOnlyAtItsEpoch)
{
    SimConfig config;
    config.validator_count = 100;
    config.epochs = 10;
    config.offline.push_back({5, 5, 0, 27, true, false, false});
    auto const series = missed_flags_series(index_all(config));
    for (auto const &p : series) {
        if (p.epoch == 5) {
            EXPECT_DOUBLE_EQ(p.source, 0.27);
            EXPECT_DOUBLE_EQ(p.target, 0.27);
            EXPECT_DOUBLE_EQ(p.head, 0.27);
            EXPECT_DOUBLE_EQ(p.total, 0.81);
        }
        else {
            EXPECT_EQ(p.total, 0.0) << p.epoch;
        }
    }
}

TEST(MissedFlags, EqualSourceAndTargetRatesMatch)
{
    SimConfig config;
    config.seed = 4;
    config.validator_count = 500;
    config.epochs = 22;
    config.p_missed_source = 0.05;
    config.p_missed_target = 0.05;
    auto const overall = missed_flags_overall(missed_flags_series(index_all(config)));
    EXPECT_NEAR(overall.source, overall.target, 0.01);
    EXPECT_NEAR(overall.source, 0.05, 0.01);
    EXPECT_EQ(overall.head, 0.0);
}

TEST(MissedBlocks, FromCountsEdgeCases)
{
    EXPECT_DOUBLE_EQ(MissedBlocksComparison::from_counts(5, 1000, 10, 2000, 20).reduction, 0.0);
    EXPECT_DOUBLE_EQ(MissedBlocksComparison::from_counts(5, 1000, 10, 2000, 0).reduction, 1.0);
    auto const c = MissedBlocksComparison::from_counts(5, 10'000, 113, 10'000, 72);
    EXPECT_NEAR(c.reduction, 1.0 - 72.0 / 113.0, 1e-15);
    EXPECT_THROW(MissedBlocksComparison::from_counts(5, 0, 0, 10, 1), Error);
    EXPECT_THROW(MissedBlocksComparison::from_counts(5, 10, 1, 0, 0), Error);
    EXPECT_THROW(MissedBlocksComparison::from_counts(5, 10, 0, 10, 1), Error);
}

TEST(MissedBlocks, CountsEverySlotOnItsSide)
{
    SimConfig config;
    config.epochs = 12;
    config.p_missed_block = 0.2;
    config.split_epoch = 6;
    config.p_missed_block_after = 0.05;
    auto const store = index_all(config);
    auto const c = missed_blocks_compare(store, 6);
    EXPECT_EQ(c.before_slots, 6u * 32u);
    EXPECT_EQ(c.after_slots, 5u * 32u);
    std::uint64_t missed = 0;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &s : batch.slots) {
            missed += s.block_proposed ? 0 : 1;
        }
    }
    EXPECT_EQ(c.before_missed + c.after_missed, missed);
    EXPECT_THROW(missed_blocks_compare(store, 0), Error);
    EXPECT_THROW(missed_blocks_compare(store, 11), Error);
}

TEST(RewardDecomposition, NoTipsMeansNoElShare)
{
    SimConfig config;
    config.epochs = 5;
    auto const d = reward_decomposition(index_all(config));
    EXPECT_EQ(d.el, 0u);
    EXPECT_EQ(d.el_share, 0.0);
    EXPECT_NEAR(d.attestation_share + d.proposer_share + d.sync_share + d.el_share, 1.0, 1e-12);
    EXPECT_THROW(reward_decomposition(LedgerStore{}), Error);
}

TEST(RewardDecomposition, RoundedSharesSumToHundred)
{
    auto const config = testing_support::mixed_faults(6, 64, 10);
    auto const d = reward_decomposition(index_all(config));
    double rounded = 0.0;
    for (double share : {d.attestation_share, d.proposer_share, d.sync_share, d.el_share}) {
        rounded += std::stod(percent(share));
    }
    EXPECT_NEAR(rounded, 100.0, 0.2);
    EXPECT_GT(d.el_share, 0.0);
}

TEST(ProposalsFrequency, OneEpochLargeRegistryHasThirtyTwoSingleProposers)
{
    SimConfig config;
    config.seed = 2;
    config.validator_count = 100'000;
    config.epochs = 2;
    auto const store = index_all(config);
    std::set<ValidatorIndex> proposers;
    for (auto const &s : store.find(0)->slots) {
        proposers.insert(s.proposer_index);
    }
    ASSERT_EQ(proposers.size(), 32u) << "seed draws a repeat proposer";
    auto const hist = proposals_frequency(store);
    ASSERT_EQ(hist.size(), 2u);
    EXPECT_EQ(hist[1], 32u);
    EXPECT_EQ(hist[0], 100'000u - 32u);
}

TEST(ProposalsFrequency, MatchesRecountFromRows)
{
    auto const config = testing_support::mixed_faults(8, 64, 30);
    auto const store = index_all(config);
    std::map<ValidatorIndex, std::uint64_t> per_validator;
    std::uint64_t blocks = 0;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &r : batch.rows) {
            per_validator[r.validator_index] += r.proposed_slots;
        }
        for (auto const &s : batch.slots) {
            blocks += s.block_proposed ? 1 : 0;
        }
    }
    std::vector<std::uint64_t> recount;
    for (auto const &[v, k] : per_validator) {
        if (recount.size() <= k) {
            recount.resize(k + 1, 0);
        }
        ++recount[k];
    }
    auto const hist = proposals_frequency(store);
    EXPECT_EQ(hist, recount);
    std::uint64_t validators = 0;
    std::uint64_t weighted = 0;
    for (std::size_t k = 0; k < hist.size(); ++k) {
        validators += hist[k];
        weighted += k * hist[k];
    }
    EXPECT_EQ(validators, per_validator.size());
    EXPECT_EQ(weighted, blocks);
}

TEST(Streaks, SmallExample)
{
    Sequence const seq = {"A", "A", "B", "A", "A", "A", std::nullopt, "A", "A"};
    auto const streaks = count_streaks(seq);
    auto const &a = streaks.at("A");
    EXPECT_EQ(a.maximal, (std::map<std::uint64_t, std::uint64_t>{{2, 2}, {3, 1}}));
    EXPECT_EQ(a.cumulative, (std::map<std::uint64_t, std::uint64_t>{{2, 4}, {3, 1}}));
    EXPECT_FALSE(streaks.contains("B"));
    EXPECT_EQ(streaks, brute_force_streaks(seq));
}

TEST(Streaks, MatchBruteForceOnRandomSequences)
{
    Rng rng(77);
    std::vector<std::string> const names = {"Lido", "Coinbase", "Kraken", "Other"};
    for (int trial = 0; trial < 20; ++trial) {
        Sequence seq(2000);
        for (auto &e : seq) {
            auto const x = rng.below(10);
            if (x == 9) {
                e = std::nullopt;
            }
            else {
                e = names[x < 4 ? 0 : x < 6 ? 1 : x < 7 ? 2 : 3];
            }
        }
        ASSERT_EQ(count_streaks(seq), brute_force_streaks(seq)) << trial;
    }
}

TEST(Streaks, SingleEntityRegistryIsOneRun)
{
    SimConfig config;
    config.epochs = 6;
    auto const map = synthetic_map(64, {{"Solo", 1.0}});
    auto const store = index_all(config, map);
    auto const streaks = entity_streaks(store, map);
    ASSERT_EQ(streaks.size(), 1u);
    auto const &solo = streaks.at("Solo");
    EXPECT_EQ(solo.maximal, (std::map<std::uint64_t, std::uint64_t>{{5 * 32, 1}}));
}

TEST(Streaks, MissedSlotsBreakRuns)
{
    SimConfig config;
    config.epochs = 6;
    config.p_missed_block = 0.2;
    auto const map = synthetic_map(64, {{"Solo", 1.0}});
    auto const store = index_all(config, map);
    auto const seq = proposer_entity_sequence(store, map);
    EXPECT_EQ(seq.size(), 5u * 32u);
    std::size_t missed = 0;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &s : batch.slots) {
            missed += s.block_proposed ? 0 : 1;
        }
    }
    EXPECT_EQ(static_cast<std::size_t>(std::count(seq.begin(), seq.end(), std::nullopt)), missed);
    EXPECT_EQ(entity_streaks(store, map), brute_force_streaks(seq));
}

TEST(EntityMer, PerfectEntityAndNetworkAggregate)
{
    auto config = testing_support::mixed_faults(9, 64, 12);
    config.profiles.push_back({0, 16, 0.0, 0.0, 0.0, 0.0, 0.0});
    config.offline.clear();
    config.slashings.clear();
    auto const map = synthetic_map(64, {{"Perfect", 0.25}});
    auto const store = index_all(config, map);
    auto const report = mer_per_entity(store, map);
    auto const it = std::find_if(report.entities.begin(), report.entities.end(),
                                 [](EntityMer const &e) { return e.entity == "Perfect"; });
    ASSERT_NE(it, report.entities.end());
    std::vector<ValidatorEpochRow> all;
    for (auto const &[epoch, batch] : store.epochs()) {
        all.insert(all.end(), batch.rows.begin(), batch.rows.end());
    }
    EXPECT_EQ(report.network.ratio, compute_mer_ratio(all));
    EXPECT_LT(report.network.ratio, 1.0);
    // Sync credit is lost in slots other entities fail to propose.
    EXPECT_GT(it->ratio, report.network.ratio);
    EXPECT_EQ(it->validators, 16u);
}

TEST(EntityMer, MissRateOnAllDutiesSetsTheFloor)
{
    // Block misses are left out: a missed block also drops everyone's sync
    // credit, which is not this entity's doing.
    SimConfig config;
    config.seed = 12;
    config.validator_count = 500;
    config.epochs = 32;
    config.profiles.push_back({0, 100, 0.058, 0.058, 0.058, 0.058, std::nullopt});
    auto const map = synthetic_map(500, {{"Floor", 0.2}});
    auto const report = mer_per_entity(index_all(config, map), map);
    for (auto const &e : report.entities) {
        if (e.entity == "Floor") {
            EXPECT_NEAR(e.ratio, 0.942, 0.005);
        }
        else {
            EXPECT_EQ(e.ratio, 1.0);
        }
    }
}

TEST(BlockShare, FollowsValidatorShareAndSumsToOne)
{
    SimConfig config;
    config.seed = 5;
    config.epochs = 1'600;
    auto const map = synthetic_map(64, {{"Lido", 0.3}, {"Coinbase", 0.14}, {"Kraken", 0.08}});
    auto const store = index_all(config, map);
    auto const shares = block_share_per_entity(store, map);
    auto const counts = map.validator_counts(64);
    double sum = 0.0;
    std::uint64_t blocks = 0;
    for (auto const &s : shares) {
        sum += s.share;
        blocks += s.blocks;
        EXPECT_NEAR(s.share, static_cast<double>(counts.at(s.entity)) / 64.0, 0.02) << s.entity;
    }
    EXPECT_GE(blocks, 50'000u);
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_TRUE(std::any_of(shares.begin(), shares.end(), [](BlockShare const &s) { return s.entity == "Other"; }));
}

TEST(Report, PercentFormatting)
{
    EXPECT_EQ(percent(0.1234), "12.3%");
    EXPECT_EQ(percent(1.0), "100.0%");
    EXPECT_EQ(percent(0.0), "0.0%");
}

TEST(Report, FilesAreReproducibleFromStoreContent)
{
    auto config = testing_support::mixed_faults(10, 64, 12);
    auto const map = synthetic_map(64, {{"Lido", 0.3}, {"Kraken", 0.1}});
    TempDir stored("report_store");
    {
        SimProvider provider(config);
        LedgerStore store(stored.path());
        process_range(provider, 0, 10, map, store);
    }
    ReportOptions options;
    options.split_epoch = 5;

    TempDir a("report_a");
    TempDir b("report_b");
    auto const files_a = write_report(LedgerStore(stored.path()), map, a.path(), options);
    auto const files_b = write_report(LedgerStore(stored.path()), map, b.path(), options);
    ASSERT_EQ(files_a.size(), 2u * std::size(kReportMetrics) + 1);
    for (std::size_t i = 0; i < files_a.size(); ++i) {
        EXPECT_EQ(files_a[i].filename(), files_b[i].filename());
        EXPECT_EQ(read_file(files_a[i]), read_file(files_b[i])) << files_a[i];
        if (files_a[i].extension() == ".json") {
            auto const doc = nlohmann::json::parse(read_file(files_a[i]));
            EXPECT_TRUE(doc.contains("metric"));
            EXPECT_TRUE(doc.contains("series"));
        }
    }
}

TEST(Report, MetricSelectionAndSplit)
{
    SimConfig config;
    config.epochs = 4;
    auto const store = index_all(config);
    TempDir dir("report_sel");
    ReportOptions options;
    options.metrics = {"mer_series", "missed_blocks"};
    auto const files = write_report(store, {}, dir.path(), options);
    std::set<std::string> names;
    for (auto const &f : files) {
        names.insert(f.filename().string());
    }
    // missed_blocks needs a split epoch.
    EXPECT_EQ(names, (std::set<std::string>{"mer_series.csv", "mer_series.json", "summary.txt"}));
    auto const summary = render_summary(store, {});
    EXPECT_NE(summary.find("network MER"), std::string::npos) << summary;
}
