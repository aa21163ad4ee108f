#pragma once

#include <mer/types.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mer {

inline constexpr std::string_view kOtherEntity = "Other";

// Validator -> staking entity, joined through deposit addresses. Immutable
// once built. Resolution is total: anything unmapped is "Other".
class EntityMap
{
public:
    EntityMap() = default;

    // deposits: validator_index,deposit_address
    // entities: deposit_address,entity_name
    // A header row matching those column names is optional. Malformed rows
    // raise Error(decode) with the file label and line number; a validator
    // listed twice with different entities raises Error(conflict).
    static EntityMap build(std::istream &deposits, std::istream &entities);
    static EntityMap build(
        std::filesystem::path const &deposits, std::filesystem::path const &entities);

    std::string const &resolve(ValidatorIndex validator) const;

    // Validators per entity over indices [0, registry_size), "Other" included.
    std::map<std::string, std::size_t> validator_counts(std::size_t registry_size) const;

    std::size_t mapped_validators() const noexcept
    {
        return by_validator_.size();
    }

private:
    std::map<std::string, std::string> by_address_;
    std::map<ValidatorIndex, std::string> by_validator_;
};

// Lowercase, 0x-prefixed, hex-only. Throws Error(decode) otherwise.
std::string normalize_address(std::string_view address);

struct SyntheticEntity
{
    std::string name;
    double share = 0.0;
};

// Writes deposits/entities CSVs assigning each entity a contiguous block of
// round(share * validator_count) validators, in order, with several deposit
// addresses per entity. Remaining validators get unlisted addresses.
void write_synthetic_entities(
    std::size_t validator_count, std::span<SyntheticEntity const> entities, std::uint64_t seed,
    std::ostream &deposits, std::ostream &entity_names);

// Minimal RFC 4180 field splitting (quoted fields, doubled quotes).
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);

} // namespace mer
