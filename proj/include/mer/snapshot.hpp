#pragma once

#include <mer/types.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mer {

// One bit per sync committee member, member order as in the committee list.
using SyncBits = std::vector<bool>;

// Little-endian bit order within each byte, "0x" prefixed.
std::string encode_sync_bits(SyncBits const &bits);
SyncBits decode_sync_bits(std::string_view hex, std::size_t size);

struct SlashingRecord
{
    ValidatorIndex validator = 0;
    ValidatorIndex whistleblower = 0;

    friend bool operator==(SlashingRecord const &, SlashingRecord const &) = default;
};

// Per-slot duty metadata of the epoch a snapshot belongs to.
struct SlotRecord
{
    Slot slot = 0;
    bool block_proposed = false;
    ValidatorIndex proposer_index = 0;
    SyncBits sync_participation;
    Gwei el_tips = 0;
    std::vector<SlashingRecord> slashings;

    friend bool operator==(SlotRecord const &, SlotRecord const &) = default;
};

// Beacon state view after processing `slot`. Attestation rewards of epoch n
// are applied at the transition into epoch n + 2; the state at the last slot
// of epoch n + 1 therefore carries final epoch-n participation in
// previous_participation_flags while balances do not yet reflect it.
struct BeaconStateSnapshot
{
    Slot slot = 0;
    std::vector<Gwei> balances;
    std::vector<Gwei> effective_balances;
    bool block_proposed = false;
    ValidatorIndex proposer_index = 0;
    std::vector<std::uint8_t> participation_flags;
    std::vector<std::uint8_t> previous_participation_flags;
    SyncBits sync_participation;
    Gwei el_tips = 0;
    std::vector<bool> active;
    std::vector<bool> slashed;
    std::vector<ValidatorIndex> sync_committee;
    std::vector<SlotRecord> epoch_slots;

    std::size_t registry_size() const noexcept
    {
        return balances.size();
    }

    friend bool operator==(BeaconStateSnapshot const &, BeaconStateSnapshot const &) = default;
};

// Compact single-line JSON. Keys are emitted in sorted order, so equal
// snapshots serialize to identical bytes.
std::string to_json(BeaconStateSnapshot const &snapshot);

// Throws Error(decode) on malformed input.
BeaconStateSnapshot snapshot_from_json(std::string_view text);

void write_ndjson(std::ostream &out, BeaconStateSnapshot const &snapshot);

std::string fixture_file_name(Slot slot);

} // namespace mer
