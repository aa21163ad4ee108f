#pragma once

#include <mer/chain_sim.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace testing_support {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    explicit TempDir(std::string const &tag)
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mer_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }

    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    TempDir(TempDir const &) = delete;
    TempDir &operator=(TempDir const &) = delete;

    std::filesystem::path const &path() const noexcept
    {
        return path_;
    }

private:
    std::filesystem::path path_;
};

inline mer::SimConfig mixed_faults(std::uint64_t seed, std::uint32_t validators, std::uint64_t epochs)
{
    mer::SimConfig c;
    c.seed = seed;
    c.validator_count = validators;
    c.epochs = epochs;
    c.p_missed_block = 0.04;
    c.p_missed_source = 0.02;
    c.p_missed_target = 0.03;
    c.p_missed_head = 0.05;
    c.p_sync_miss = 0.03;
    c.el_tip_min = 1'000;
    c.el_tip_max = 40'000'000;
    c.growth_per_epoch = 0.02;
    c.effective_balance_rule = mer::EffectiveBalanceRule::hysteresis;
    c.offline.push_back({3, 5, 10, 20, true, true, true});
    c.profiles.push_back({40, 50, 0.3, std::nullopt, 0.5, 0.2, 0.1});
    c.slashings.push_back({4, 7, std::nullopt});
    c.slashings.push_back({9, 30, 31});
    return c;
}

} // namespace testing_support
