#pragma once

#include <mer/chain_sim.hpp>
#include <mer/entity_mapper.hpp>
#include <mer/metrics.hpp>
#include <mer/state_analyzer.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mer {

enum class ProviderKind { sim, files, http };

// Everything one run needs. Populated from a `key = value` file and/or
// individual set() calls; later calls win, so flags applied after the file
// override it.
//
// Keys:
//   seed validators epochs split_epoch out provider base_url deposits entities
//   fixtures first_epoch last_epoch reports all_slots ndjson
//   p_missed_block p_missed_block_after p_missed_source p_missed_target
//   p_missed_head p_sync_miss growth_per_epoch el_tip_min el_tip_max
//   scaled_penalties effective_balance_rule checkpoint_interval
//   synthetic_entities   Name:share[,Name:share...]
//   offline              first_epoch:last_epoch:first:last[:duties]   (repeatable)
//   profile              first:last key=value [key=value...]          (repeatable)
//   slashing             epoch:validator[:whistleblower]              (repeatable)
struct RunConfig
{
    SimConfig sim;
    ProviderKind provider = ProviderKind::sim;
    std::string base_url;
    std::filesystem::path out = "run";
    std::optional<std::filesystem::path> deposits;
    std::optional<std::filesystem::path> entities;
    std::optional<std::filesystem::path> fixtures;
    std::optional<Epoch> first_epoch;
    std::optional<Epoch> last_epoch;
    std::set<std::string> reports;
    bool all_slots = false;
    bool ndjson = false;
    Epoch checkpoint_interval = 10;
    std::vector<SyntheticEntity> synthetic_entities;

    // Throws Error(invalid_config) naming the key.
    void set(std::string_view key, std::string_view value);

    // Blank lines and `#` comments are ignored. Errors carry the line number.
    void load(std::istream &in, std::string_view label = "config");
    void load(std::filesystem::path const &path);

    // Throws Error(invalid_config) naming the offending field.
    void validate() const;

    std::filesystem::path states_dir() const;
    std::filesystem::path store_dir() const;
    std::filesystem::path report_dir() const;
    std::filesystem::path checkpoint_path() const;
    std::filesystem::path deposits_path() const;
    std::filesystem::path entities_path() const;
};

char const *to_string(ProviderKind kind) noexcept;

struct CommandResult
{
    // False when an internal audit failed; artifacts are still written.
    bool audits_passed = true;
    std::vector<std::string> messages;
};

// Writes state fixtures under out/states (end-of-epoch slots, or every slot
// with all_slots), optional out/states.ndjson, synthetic entity files when
// configured, and out/audit.json.
CommandResult cmd_simulate(RunConfig const &config);

// Indexes the configured epoch range into out/store with its checkpoint.
// The range defaults to every epoch whose successor end state exists.
CommandResult cmd_analyze(RunConfig const &config);

// Writes metric exports and summary.txt to out/report.
CommandResult cmd_report(RunConfig const &config);

// Simulation is skipped when states come from elsewhere: an http backend or
// an explicit fixtures directory.
CommandResult cmd_full(RunConfig const &config);

// Builds the entity map from configured files, falling back to the run
// directory's deposits.csv/entities.csv and then to an all-"Other" map.
EntityMap load_entities(RunConfig const &config);

} // namespace mer
