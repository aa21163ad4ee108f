#pragma once

#include <mer/types.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mer {

// One validator's duties and rewards for one epoch.
struct ValidatorEpochRow
{
    Epoch epoch = 0;
    ValidatorIndex validator_index = 0;
    Gwei effective_balance = 0;
    FlagSet flags;
    Gwei attestation_reward = 0;
    // Includes any slashing penalty applied in the epoch.
    Gwei attestation_penalty = 0;
    Gwei max_attestation_reward = 0;
    bool in_sync_committee = false;
    SignedGwei sync_reward = 0;
    Gwei max_sync_reward = 0;
    std::uint32_t proposed_slots = 0;
    std::uint32_t missed_proposals = 0;
    // Includes slashing proposer and whistleblower rewards.
    Gwei proposer_cl_reward = 0;
    Gwei el_reward = 0;
    std::string entity;

    friend bool operator==(ValidatorEpochRow const &, ValidatorEpochRow const &) = default;
};

struct SlotRow
{
    Slot slot = 0;
    ValidatorIndex proposer_index = 0;
    bool block_proposed = false;

    friend bool operator==(SlotRow const &, SlotRow const &) = default;
};

struct EpochBatch
{
    Epoch epoch = 0;
    std::vector<ValidatorEpochRow> rows;
    std::vector<SlotRow> slots;

    friend bool operator==(EpochBatch const &, EpochBatch const &) = default;
};

inline constexpr std::string_view kLedgerHeader =
    "epoch,validator_index,effective_balance,flag_source,flag_target,flag_head,att_reward,"
    "att_penalty,att_max,in_sync,sync_reward,sync_max,proposed,missed_proposals,"
    "proposer_reward,el_reward,entity";
inline constexpr std::string_view kSlotHeader = "slot,proposer_index,block_proposed";

std::string rows_to_csv(std::vector<ValidatorEpochRow> const &rows);
std::string slots_to_csv(std::vector<SlotRow> const &slots);
// Both throw Error(decode) with a line number on malformed input.
std::vector<ValidatorEpochRow> rows_from_csv(std::string_view text);
std::vector<SlotRow> slots_from_csv(std::string_view text);

// Ledger keyed by (epoch, validator), one batch per epoch. With a directory,
// each commit writes ledger/epoch_NNNNNNNN.csv and its _slots.csv sibling
// via rename, slots first; an epoch counts as stored once its row file
// exists.
class LedgerStore
{
public:
    enum class CommitResult { written, unchanged };

    LedgerStore() = default;
    // Loads any batches already present under dir.
    explicit LedgerStore(std::filesystem::path dir);

    // Identical content is a no-op; different content for a stored epoch
    // raises Error(conflict). Rows must be unique per validator and carry
    // the batch epoch.
    CommitResult commit(EpochBatch batch);

    std::map<Epoch, EpochBatch> const &epochs() const noexcept
    {
        return epochs_;
    }

    EpochBatch const *find(Epoch epoch) const;

    bool empty() const noexcept
    {
        return epochs_.empty();
    }

    std::size_t row_count() const noexcept;

    // FNV-1a over the canonical CSV of every batch in epoch order.
    std::uint64_t content_hash() const;

    std::optional<std::filesystem::path> const &dir() const noexcept
    {
        return dir_;
    }

private:
    std::optional<std::filesystem::path> dir_;
    std::map<Epoch, EpochBatch> epochs_;
};

std::string hash_hex(std::uint64_t hash);

// Writes via a sibling temporary file and rename.
void write_file_atomic(std::filesystem::path const &path, std::string_view content);
std::string read_file(std::filesystem::path const &path);

} // namespace mer
