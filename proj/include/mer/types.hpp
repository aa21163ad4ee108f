#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mer {

// Token amounts in Gwei (1 ETH = 10^9 Gwei). Signed deltas use SignedGwei,
// never wrapped unsigned values.
using Gwei = std::uint64_t;
using SignedGwei = std::int64_t;

using Slot = std::uint64_t;
using Epoch = std::uint64_t;
using ValidatorIndex = std::uint32_t;

inline constexpr Gwei kGweiPerEth = 1'000'000'000ULL;

enum class ErrorCode {
    domain,
    not_found,
    backend_unavailable,
    decode,
    conflict,
    invalid_config,
    io,
    audit,
};

char const *to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, std::string const &what)
        : std::runtime_error(what)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept
    {
        return code_;
    }

private:
    ErrorCode code_;
};

// Attestation quality flags. Packed as bit 0 = source, bit 1 = target,
// bit 2 = head; zero means no vote was included within the window.
struct FlagSet
{
    bool source = false;
    bool target = false;
    bool head = false;

    static constexpr FlagSet all() noexcept
    {
        return {true, true, true};
    }

    static constexpr FlagSet from_bits(std::uint8_t bits) noexcept
    {
        return {(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0};
    }

    constexpr std::uint8_t bits() const noexcept
    {
        return static_cast<std::uint8_t>(
            (source ? 1u : 0u) | (target ? 2u : 0u) | (head ? 4u : 0u));
    }

    constexpr bool any() const noexcept
    {
        return source || target || head;
    }

    constexpr FlagSet missed() const noexcept
    {
        return {!source, !target, !head};
    }

    friend constexpr bool operator==(FlagSet, FlagSet) = default;
};

} // namespace mer
