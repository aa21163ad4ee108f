#include <mer/snapshot.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <ostream>

namespace mer {

namespace {

using nlohmann::json;

[[noreturn]] void decode_error(std::string const &what)
{
    throw Error(ErrorCode::decode, "snapshot: " + what);
}

int hex_value(char c)
{
    if (c >= '0' && c <= '9') {
        return c - '0';
    }
    if (c >= 'a' && c <= 'f') {
        return c - 'a' + 10;
    }
    if (c >= 'A' && c <= 'F') {
        return c - 'A' + 10;
    }
    return -1;
}

json bools_to_json(std::vector<bool> const &v)
{
    std::string s(v.size(), '0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i]) {
            s[i] = '1';
        }
    }
    return s;
}

std::vector<bool> bools_from_json(json const &j, char const *field)
{
    if (!j.is_string()) {
        decode_error(fmt::format("{} must be a 0/1 string", field));
    }
    auto const &s = j.get_ref<std::string const &>();
    std::vector<bool> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '0' && s[i] != '1') {
            decode_error(fmt::format("{} has a non 0/1 character", field));
        }
        out[i] = s[i] == '1';
    }
    return out;
}

json const &require(json const &j, char const *key)
{
    auto it = j.find(key);
    if (it == j.end()) {
        decode_error(fmt::format("missing field '{}'", key));
    }
    return *it;
}

template <typename T>
T get_as(json const &j, char const *key)
{
    try {
        return require(j, key).get<T>();
    }
    catch (nlohmann::json::exception const &e) {
        decode_error(fmt::format("field '{}': {}", key, e.what()));
    }
}

json slot_record_to_json(SlotRecord const &r)
{
    json slashings = json::array();
    for (auto const &s : r.slashings) {
        slashings.push_back({{"validator", s.validator}, {"whistleblower", s.whistleblower}});
    }
    return {
        {"slot", r.slot},
        {"block_proposed", r.block_proposed},
        {"proposer_index", r.proposer_index},
        {"sync_participation", encode_sync_bits(r.sync_participation)},
        {"el_tips", r.el_tips},
        {"slashings", std::move(slashings)},
    };
}

SlotRecord slot_record_from_json(json const &j, std::size_t committee_size)
{
    SlotRecord r;
    r.slot = get_as<Slot>(j, "slot");
    r.block_proposed = get_as<bool>(j, "block_proposed");
    r.proposer_index = get_as<ValidatorIndex>(j, "proposer_index");
    r.sync_participation =
        decode_sync_bits(get_as<std::string>(j, "sync_participation"), committee_size);
    r.el_tips = get_as<Gwei>(j, "el_tips");
    for (auto const &s : require(j, "slashings")) {
        r.slashings.push_back(
            {get_as<ValidatorIndex>(s, "validator"), get_as<ValidatorIndex>(s, "whistleblower")});
    }
    return r;
}

} // namespace

std::string encode_sync_bits(SyncBits const &bits)
{
    std::string out = "0x";
    out.reserve(2 + (bits.size() + 7) / 8 * 2);
    for (std::size_t byte = 0; byte * 8 < bits.size(); ++byte) {
        unsigned value = 0;
        for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < bits.size(); ++bit) {
            if (bits[byte * 8 + bit]) {
                value |= 1u << bit;
            }
        }
        out += fmt::format("{:02x}", value);
    }
    return out;
}

SyncBits decode_sync_bits(std::string_view hex, std::size_t size)
{
    if (hex.size() < 2 || hex[0] != '0' || hex[1] != 'x') {
        decode_error("sync bits must be 0x-prefixed hex");
    }
    hex.remove_prefix(2);
    if (hex.size() != (size + 7) / 8 * 2) {
        decode_error(fmt::format(
            "sync bits length {} does not fit committee size {}", hex.size(), size));
    }
    SyncBits bits(size);
    for (std::size_t byte = 0; byte * 2 < hex.size(); ++byte) {
        int const hi = hex_value(hex[byte * 2]);
        int const lo = hex_value(hex[byte * 2 + 1]);
        if (hi < 0 || lo < 0) {
            decode_error("sync bits contain a non-hex character");
        }
        unsigned const value = static_cast<unsigned>(hi * 16 + lo);
        for (std::size_t bit = 0; bit < 8; ++bit) {
            bool const set = (value >> bit) & 1u;
            if (byte * 8 + bit < size) {
                bits[byte * 8 + bit] = set;
            }
            else if (set) {
                decode_error("sync bits set past the committee size");
            }
        }
    }
    return bits;
}

std::string to_json(BeaconStateSnapshot const &s)
{
    json slots = json::array();
    for (auto const &r : s.epoch_slots) {
        slots.push_back(slot_record_to_json(r));
    }
    json j = {
        {"slot", s.slot},
        {"balances", s.balances},
        {"effective_balances", s.effective_balances},
        {"block_proposed", s.block_proposed},
        {"proposer_index", s.proposer_index},
        {"participation_flags", s.participation_flags},
        {"previous_participation_flags", s.previous_participation_flags},
        {"sync_participation", encode_sync_bits(s.sync_participation)},
        {"el_tips", s.el_tips},
        {"active", bools_to_json(s.active)},
        {"slashed", bools_to_json(s.slashed)},
        {"sync_committee", s.sync_committee},
        {"epoch_slots", std::move(slots)},
    };
    return j.dump();
}

BeaconStateSnapshot snapshot_from_json(std::string_view text)
{
    json j;
    try {
        j = json::parse(text);
    }
    catch (json::parse_error const &e) {
        decode_error(e.what());
    }
    if (!j.is_object()) {
        decode_error("top level is not an object");
    }

    BeaconStateSnapshot s;
    s.slot = get_as<Slot>(j, "slot");
    s.balances = get_as<std::vector<Gwei>>(j, "balances");
    s.effective_balances = get_as<std::vector<Gwei>>(j, "effective_balances");
    s.block_proposed = get_as<bool>(j, "block_proposed");
    s.proposer_index = get_as<ValidatorIndex>(j, "proposer_index");
    s.participation_flags = get_as<std::vector<std::uint8_t>>(j, "participation_flags");
    s.previous_participation_flags =
        get_as<std::vector<std::uint8_t>>(j, "previous_participation_flags");
    s.el_tips = get_as<Gwei>(j, "el_tips");
    s.active = bools_from_json(require(j, "active"), "active");
    s.slashed = bools_from_json(require(j, "slashed"), "slashed");
    s.sync_committee = get_as<std::vector<ValidatorIndex>>(j, "sync_committee");
    s.sync_participation = decode_sync_bits(
        get_as<std::string>(j, "sync_participation"), s.sync_committee.size());
    for (auto const &r : require(j, "epoch_slots")) {
        s.epoch_slots.push_back(slot_record_from_json(r, s.sync_committee.size()));
    }

    auto const n = s.balances.size();
    if (s.effective_balances.size() != n || s.participation_flags.size() != n ||
        s.previous_participation_flags.size() != n || s.active.size() != n ||
        s.slashed.size() != n) {
        decode_error(fmt::format("per-validator arrays disagree with registry size {}", n));
    }
    for (auto flags : s.participation_flags) {
        if (flags > 7) {
            decode_error("participation flag value out of range");
        }
    }
    for (auto flags : s.previous_participation_flags) {
        if (flags > 7) {
            decode_error("participation flag value out of range");
        }
    }
    for (auto index : s.sync_committee) {
        if (index >= n) {
            decode_error("sync committee index outside the registry");
        }
    }
    return s;
}

void write_ndjson(std::ostream &out, BeaconStateSnapshot const &snapshot)
{
    out << to_json(snapshot) << '\n';
}

std::string fixture_file_name(Slot slot)
{
    return fmt::format("state_{}.json", slot);
}

} // namespace mer
