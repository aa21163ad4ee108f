#pragma once

#include <mer/chain_sim.hpp>
#include <mer/snapshot.hpp>

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace mer {

struct SlotRange
{
    Slot first_slot = 0;
    Slot last_slot = 0;

    bool contains(Slot slot) const noexcept
    {
        return slot >= first_slot && slot <= last_slot;
    }
};

// Source of beacon states by slot. get_state is total over range();
// out-of-range or absent slots raise Error(not_found). Implementations are
// safe for concurrent callers.
class StateProvider
{
public:
    virtual ~StateProvider() = default;

    virtual SlotRange range() const = 0;
    virtual BeaconStateSnapshot get_state(Slot slot) = 0;
    virtual char const *kind() const noexcept = 0;
};

// Runs the simulator forward on demand. Requests for slots it has already
// passed are served from a small cache or by replaying from genesis.
class SimProvider final : public StateProvider
{
public:
    explicit SimProvider(SimConfig config, std::size_t cache_capacity = 64);

    SlotRange range() const override;
    BeaconStateSnapshot get_state(Slot slot) override;

    char const *kind() const noexcept override
    {
        return "sim";
    }

private:
    SimConfig config_;
    std::unique_ptr<Simulator> sim_;
    std::map<Slot, BeaconStateSnapshot> cache_;
    std::size_t cache_capacity_;
    std::mutex mutex_;
};

// Reads state_{slot}.json files from a directory. The advertised range spans
// the lowest and highest slot present; holes inside it are not_found.
class FileProvider final : public StateProvider
{
public:
    explicit FileProvider(std::filesystem::path dir);

    SlotRange range() const override;
    BeaconStateSnapshot get_state(Slot slot) override;

    char const *kind() const noexcept override
    {
        return "files";
    }

    std::filesystem::path const &dir() const noexcept
    {
        return dir_;
    }

private:
    std::filesystem::path dir_;
    std::optional<SlotRange> range_;
};

struct RetryPolicy
{
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{10};
};

// GET {base}/states/{slot} and GET {base}/range. 404 maps to not_found;
// transport failures and 5xx are retried with doubling backoff and then
// raise backend_unavailable.
class HttpProvider final : public StateProvider
{
public:
    explicit HttpProvider(std::string base_url, RetryPolicy retry = {});

    SlotRange range() const override;
    BeaconStateSnapshot get_state(Slot slot) override;

    char const *kind() const noexcept override
    {
        return "http";
    }

private:
    std::string get(std::string const &path) const;

    std::string host_;
    std::string prefix_;
    RetryPolicy retry_;
};

// Serves another provider over the HTTP shape above. Binds on construction,
// serves on a background thread until stop() or destruction.
class MockBeaconServer
{
public:
    explicit MockBeaconServer(
        std::shared_ptr<StateProvider> source, std::string host = "127.0.0.1", int port = 0);
    ~MockBeaconServer();

    MockBeaconServer(MockBeaconServer const &) = delete;
    MockBeaconServer &operator=(MockBeaconServer const &) = delete;

    int port() const noexcept
    {
        return port_;
    }

    std::string base_url() const;

    void stop();

    // Blocks until stop() is called from another thread.
    void wait();

private:
    std::shared_ptr<StateProvider> source_;
    std::unique_ptr<httplib::Server> server_;
    std::string host_;
    int port_ = 0;
    std::thread thread_;
    std::mutex stop_mutex_;
    std::condition_variable stopped_cv_;
    bool stopped_ = false;
};

std::string range_to_json(SlotRange const &range);
SlotRange range_from_json(std::string const &text);

} // namespace mer
