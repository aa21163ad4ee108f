#pragma once

// Epoch indexer. Consumes the last state of each epoch in order and emits
// one ledger row per active validator. Attestation duties of epoch n are
// resolved from the end state of epoch n + 1; slot-level proposer, sync and
// slashing credits are reconstructed from the epoch's slot metadata and the
// balance delta since the previous epoch.

#include <mer/beacon_source.hpp>
#include <mer/entity_mapper.hpp>
#include <mer/ledger_store.hpp>
#include <mer/reward_model.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace mer {

struct AnalyzerCheckpoint
{
    Epoch last_fully_indexed_epoch = 0;
    // Slot of the last state consumed.
    Slot stream_position = 0;

    friend bool operator==(AnalyzerCheckpoint const &, AnalyzerCheckpoint const &) = default;
};

std::optional<AnalyzerCheckpoint> load_checkpoint(std::filesystem::path const &path);

// Never moves the checkpoint backwards: an older value than the one on disk
// is ignored. Returns the checkpoint now on disk.
AnalyzerCheckpoint save_checkpoint(
    std::filesystem::path const &path, AnalyzerCheckpoint const &checkpoint);

struct AnalyzerOptions
{
    WeightParams params;
    bool scaled_penalties = false;
    std::optional<std::filesystem::path> checkpoint_path;
    Epoch checkpoint_interval = 10;
    // Start after the stored checkpoint when it lies inside the range.
    bool resume = true;
};

struct AnalyzeSummary
{
    Epoch first_epoch = 0;
    Epoch last_epoch = 0;
    std::size_t epochs_written = 0;
    std::size_t epochs_unchanged = 0;
    std::size_t rows = 0;
    // Validator-epochs whose balance delta is not explained by the ledger.
    std::size_t reconciliation_failures = 0;
    // Rows with achieved above maximum.
    std::size_t dominance_violations = 0;

    bool audits_passed() const noexcept
    {
        return reconciliation_failures == 0 && dominance_violations == 0;
    }
};

// Raised when the provider cannot serve a required state. The checkpoint
// covers every epoch committed before the gap.
class HaltError : public Error
{
public:
    HaltError(ErrorCode code, std::string const &what, std::optional<AnalyzerCheckpoint> cp)
        : Error(code, what)
        , checkpoint_(cp)
    {
    }

    std::optional<AnalyzerCheckpoint> const &checkpoint() const noexcept
    {
        return checkpoint_;
    }

private:
    std::optional<AnalyzerCheckpoint> checkpoint_;
};

Slot epoch_end_slot(Epoch epoch, WeightParams const &params) noexcept;

// Flags of every validator active in epoch n, read from the participation
// that epoch n + 1's end state carries for its previous epoch. Inactive
// validators get empty flags.
std::vector<FlagSet> resolve_attestations(
    BeaconStateSnapshot const &epoch_n_state, BeaconStateSnapshot const &epoch_n_plus_1_state);

struct MerSums
{
    Gwei achieved = 0;
    Gwei maximum = 0;

    void add(ValidatorEpochRow const &row) noexcept;

    // Throws Error(domain) when maximum is zero.
    double ratio() const;
};

// sum(att + max(sync, 0)) / sum(att_max + sync_max).
double compute_mer_ratio(std::span<ValidatorEpochRow const> rows);

// Indexes epochs [first_epoch, last_epoch]. Reads end-of-epoch states from
// max(first_epoch, 2) - 2 through last_epoch + 1.
AnalyzeSummary process_range(
    StateProvider &provider, Epoch first_epoch, Epoch last_epoch, EntityMap const &entities,
    LedgerStore &store, AnalyzerOptions const &options = {});

} // namespace mer
