#pragma once

// Analytics over a populated ledger. Every function is a pure function of
// the store (and entity map where noted), so exports are reproducible
// bit-exactly from ledger content.

#include <mer/entity_mapper.hpp>
#include <mer/ledger_store.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace mer {

struct MissedFlagsPoint
{
    Epoch epoch = 0;
    std::size_t active = 0;
    std::size_t missed_source = 0;
    std::size_t missed_target = 0;
    std::size_t missed_head = 0;
    double source = 0.0;
    double target = 0.0;
    double head = 0.0;
    // Sum of the three per-flag fractions, so within [0, 3].
    double total = 0.0;
};

// Throws Error(domain) on an empty store.
std::vector<MissedFlagsPoint> missed_flags_series(LedgerStore const &store);

// Pooled over the whole series (weighted by active validators).
MissedFlagsPoint missed_flags_overall(std::span<MissedFlagsPoint const> series);

struct MissedBlocksComparison
{
    Epoch split_epoch = 0;
    std::uint64_t before_slots = 0;
    std::uint64_t before_missed = 0;
    std::uint64_t after_slots = 0;
    std::uint64_t after_missed = 0;
    double before_ratio = 0.0;
    double after_ratio = 0.0;
    // 1 - after_ratio / before_ratio.
    double reduction = 0.0;

    // Throws Error(domain) when either side has no slots or nothing was
    // missed before the split.
    static MissedBlocksComparison from_counts(
        Epoch split_epoch, std::uint64_t before_slots, std::uint64_t before_missed,
        std::uint64_t after_slots, std::uint64_t after_missed);
};

// Slots of epochs < split_epoch against the rest.
MissedBlocksComparison missed_blocks_compare(LedgerStore const &store, Epoch split_epoch);

struct RewardDecomposition
{
    Gwei attestation = 0;
    Gwei proposer_cl = 0;
    // Positive part of each row's sync reward.
    Gwei sync = 0;
    Gwei el = 0;
    double attestation_share = 0.0;
    double proposer_share = 0.0;
    double sync_share = 0.0;
    double el_share = 0.0;
};

// Throws Error(domain) when no positive reward was earned.
RewardDecomposition reward_decomposition(LedgerStore const &store);

// result[k] = validators that proposed exactly k blocks over the store.
std::vector<std::uint64_t> proposals_frequency(LedgerStore const &store);

struct StreakCounts
{
    // Maximal single-entity runs, by length (>= 2).
    std::map<std::uint64_t, std::uint64_t> maximal;
    // Windows of each length (>= 2) lying inside a single-entity run, so a
    // run of length L adds L - k + 1 at every k in [2, L].
    std::map<std::uint64_t, std::uint64_t> cumulative;

    friend bool operator==(StreakCounts const &, StreakCounts const &) = default;
};

// Empty entries (missed or absent slots) break runs.
std::map<std::string, StreakCounts> count_streaks(
    std::span<std::optional<std::string> const> sequence);

// Slot-ordered proposer entities; missed slots and gaps in the slot record
// break runs.
std::vector<std::optional<std::string>> proposer_entity_sequence(
    LedgerStore const &store, EntityMap const &entities);

std::map<std::string, StreakCounts> entity_streaks(
    LedgerStore const &store, EntityMap const &entities);

struct EntityMer
{
    std::string entity;
    std::size_t validators = 0;
    Gwei achieved = 0;
    Gwei maximum = 0;
    double ratio = 0.0;
};

struct MerReport
{
    std::vector<EntityMer> entities;
    EntityMer network;
};

MerReport mer_per_entity(LedgerStore const &store, EntityMap const &entities);

struct BlockShare
{
    std::string entity;
    std::uint64_t blocks = 0;
    double share = 0.0;
};

// Every entity with a validator in the ledger appears, "Other" included.
std::vector<BlockShare> block_share_per_entity(
    LedgerStore const &store, EntityMap const &entities);

struct MerPoint
{
    Epoch epoch = 0;
    Gwei achieved = 0;
    Gwei maximum = 0;
    double ratio = 0.0;
};

std::vector<MerPoint> mer_series(LedgerStore const &store);

// "12.3%"
std::string percent(double fraction);

inline constexpr char const *kReportMetrics[] = {
    "missed_flags", "missed_blocks", "reward_decomposition", "proposals_frequency",
    "entity_streaks", "mer_per_entity", "block_share", "mer_series"};

struct ReportOptions
{
    std::optional<Epoch> split_epoch;
    // Metric names from kReportMetrics; empty selects all. missed_blocks is
    // only produced with a split epoch.
    std::set<std::string> metrics;

    bool selected(std::string const &metric) const
    {
        return metrics.empty() || metrics.contains(metric);
    }
};

// Writes <metric>.csv and <metric>.json for every metric plus summary.txt
// into dir. Returns the files written, in order.
std::vector<std::filesystem::path> write_report(
    LedgerStore const &store, EntityMap const &entities, std::filesystem::path const &dir,
    ReportOptions const &options = {});

std::string render_summary(
    LedgerStore const &store, EntityMap const &entities, ReportOptions const &options = {});

} // namespace mer
