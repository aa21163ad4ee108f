#include <mer/beacon_source.hpp>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace mer {

namespace {

[[noreturn]] void not_found(Slot slot, std::string const &where)
{
    throw Error(ErrorCode::not_found, fmt::format("state for slot {} not found ({})", slot, where));
}

std::optional<Slot> slot_from_file_name(std::string const &name)
{
    constexpr std::string_view prefix = "state_";
    constexpr std::string_view suffix = ".json";
    if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) ||
        !name.ends_with(suffix)) {
        return std::nullopt;
    }
    auto const digits = std::string_view(name).substr(
        prefix.size(), name.size() - prefix.size() - suffix.size());
    Slot slot = 0;
    auto const [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), slot);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        return std::nullopt;
    }
    return slot;
}

} // namespace

std::string range_to_json(SlotRange const &range)
{
    nlohmann::json j = {{"first_slot", range.first_slot}, {"last_slot", range.last_slot}};
    return j.dump();
}

SlotRange range_from_json(std::string const &text)
{
    try {
        auto const j = nlohmann::json::parse(text);
        return {j.at("first_slot").get<Slot>(), j.at("last_slot").get<Slot>()};
    }
    catch (nlohmann::json::exception const &e) {
        throw Error(ErrorCode::decode, fmt::format("range: {}", e.what()));
    }
}

SimProvider::SimProvider(SimConfig config, std::size_t cache_capacity)
    : config_(std::move(config))
    , sim_(std::make_unique<Simulator>(config_))
    , cache_capacity_(cache_capacity)
{
}

SlotRange SimProvider::range() const
{
    return {0, config_.slot_count() - 1};
}

BeaconStateSnapshot SimProvider::get_state(Slot slot)
{
    std::lock_guard lock(mutex_);
    if (!range().contains(slot)) {
        not_found(slot, "outside simulated range");
    }
    if (auto it = cache_.find(slot); it != cache_.end()) {
        return it->second;
    }
    if (sim_->state().next_slot > slot + 1) {
        sim_ = std::make_unique<Simulator>(config_);
    }
    while (sim_->state().next_slot <= slot) {
        sim_->step();
    }
    auto snapshot = sim_->snapshot();
    cache_.emplace(slot, snapshot);
    while (cache_.size() > cache_capacity_) {
        cache_.erase(cache_.begin());
    }
    return snapshot;
}

FileProvider::FileProvider(std::filesystem::path dir)
    : dir_(std::move(dir))
{
    std::error_code ec;
    for (auto const &entry : std::filesystem::directory_iterator(dir_, ec)) {
        auto const slot = slot_from_file_name(entry.path().filename().string());
        if (!slot) {
            continue;
        }
        if (!range_) {
            range_ = SlotRange{*slot, *slot};
        }
        range_->first_slot = std::min(range_->first_slot, *slot);
        range_->last_slot = std::max(range_->last_slot, *slot);
    }
    if (ec) {
        throw Error(
            ErrorCode::not_found,
            fmt::format("fixture directory {}: {}", dir_.string(), ec.message()));
    }
    if (!range_) {
        throw Error(
            ErrorCode::not_found, fmt::format("no state_*.json fixtures in {}", dir_.string()));
    }
}

SlotRange FileProvider::range() const
{
    return *range_;
}

BeaconStateSnapshot FileProvider::get_state(Slot slot)
{
    if (!range_->contains(slot)) {
        not_found(slot, "outside fixture range");
    }
    auto const path = dir_ / fixture_file_name(slot);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        not_found(slot, fmt::format("missing file {}", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return snapshot_from_json(buffer.str());
    }
    catch (Error const &e) {
        throw Error(ErrorCode::decode, fmt::format("{}: {}", path.string(), e.what()));
    }
}

HttpProvider::HttpProvider(std::string base_url, RetryPolicy retry)
    : retry_(retry)
{
    auto const scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::invalid_config, fmt::format("base_url: '{}' has no scheme", base_url));
    }
    if (base_url.compare(0, scheme_end, "http") != 0) {
        throw Error(ErrorCode::invalid_config, "base_url: only http:// is supported");
    }
    auto const path_start = base_url.find('/', scheme_end + 3);
    host_ = base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') {
            prefix_.pop_back();
        }
    }
}

std::string HttpProvider::get(std::string const &path) const
{
    httplib::Client client(host_);
    client.set_connection_timeout(retry_.timeout);
    client.set_read_timeout(retry_.timeout);

    auto backoff = retry_.initial_backoff;
    std::string last_failure;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
        auto const result = client.Get(prefix_ + path);
        if (result && result->status == 200) {
            return result->body;
        }
        if (result && result->status == 404) {
            throw Error(ErrorCode::not_found, fmt::format("GET {}{}: 404", host_, prefix_ + path));
        }
        last_failure = result ? fmt::format("HTTP {}", result->status)
                              : httplib::to_string(result.error());
        if (result && result->status < 500) {
            break;
        }
        if (attempt < retry_.attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw Error(
        ErrorCode::backend_unavailable,
        fmt::format("GET {}{} failed after retries: {}", host_, prefix_ + path, last_failure));
}

SlotRange HttpProvider::range() const
{
    return range_from_json(get("/range"));
}

BeaconStateSnapshot HttpProvider::get_state(Slot slot)
{
    return snapshot_from_json(get(fmt::format("/states/{}", slot)));
}

MockBeaconServer::MockBeaconServer(
    std::shared_ptr<StateProvider> source, std::string host, int port)
    : source_(std::move(source))
    , server_(std::make_unique<httplib::Server>())
    , host_(std::move(host))
{
    server_->Get("/range", [this](httplib::Request const &, httplib::Response &res) {
        res.set_content(range_to_json(source_->range()), "application/json");
    });
    server_->Get(R"(/states/(\d+))", [this](httplib::Request const &req, httplib::Response &res) {
        Slot slot = 0;
        auto const text = req.matches[1].str();
        auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), slot);
        if (ec != std::errc{}) {
            res.status = 400;
            return;
        }
        try {
            res.set_content(to_json(source_->get_state(slot)), "application/json");
        }
        catch (Error const &e) {
            res.status = e.code() == ErrorCode::not_found ? 404 : 500;
            res.set_content(e.what(), "text/plain");
        }
    });

    if (port == 0) {
        port_ = server_->bind_to_any_port(host_);
    }
    else if (server_->bind_to_port(host_, port)) {
        port_ = port;
    }
    else {
        port_ = -1;
    }
    if (port_ <= 0) {
        throw Error(
            ErrorCode::backend_unavailable, fmt::format("mock server: cannot bind {}:{}", host_, port));
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

MockBeaconServer::~MockBeaconServer()
{
    stop();
}

std::string MockBeaconServer::base_url() const
{
    return fmt::format("http://{}:{}", host_, port_);
}

void MockBeaconServer::stop()
{
    std::lock_guard lock(stop_mutex_);
    if (stopped_) {
        return;
    }
    server_->stop();
    if (thread_.joinable()) {
        thread_.join();
    }
    stopped_ = true;
    stopped_cv_.notify_all();
}

void MockBeaconServer::wait()
{
    std::unique_lock lock(stop_mutex_);
    stopped_cv_.wait(lock, [this] { return stopped_; });
}

} // namespace mer
