#include <mer/run_config.hpp>

#include <mer/beacon_source.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace mer {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why)
{
    throw Error(ErrorCode::invalid_config, fmt::format("{}: '{}' {}", key, value, why));
}

std::string_view trim(std::string_view s)
{
    auto const begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        return {};
    }
    return s.substr(begin, s.find_last_not_of(" \t\r") - begin + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    for (;;) {
        auto const next = s.find(sep, pos);
        out.push_back(trim(s.substr(pos, next == std::string_view::npos ? next : next - pos)));
        if (next == std::string_view::npos) {
            return out;
        }
        pos = next + 1;
    }
}

template <typename T>
T parse_int(std::string_view key, std::string_view value)
{
    T out{};
    auto const [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
        bad_value(key, value, "is not a non-negative integer");
    }
    return out;
}

double parse_double(std::string_view key, std::string_view value)
{
    double out = 0.0;
    auto const [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) {
        bad_value(key, value, "is not a number");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value)
{
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    bad_value(key, value, "is not a boolean");
}

OfflineEvent parse_offline(std::string_view key, std::string_view value)
{
    auto const parts = split(value, ':');
    if (parts.size() != 4 && parts.size() != 5) {
        bad_value(key, value, "expects first_epoch:last_epoch:first:last[:duties]");
    }
    OfflineEvent e;
    e.first_epoch = parse_int<Epoch>(key, parts[0]);
    e.last_epoch = parse_int<Epoch>(key, parts[1]);
    e.first = parse_int<ValidatorIndex>(key, parts[2]);
    e.last = parse_int<ValidatorIndex>(key, parts[3]);
    if (parts.size() == 5) {
        auto const duties = parts[4];
        if (duties.empty() || duties.find_first_not_of("asp") != std::string_view::npos) {
            bad_value(key, value, "duties must be letters from 'asp'");
        }
        e.attest = duties.find('a') != std::string_view::npos;
        e.sync = duties.find('s') != std::string_view::npos;
        e.propose = duties.find('p') != std::string_view::npos;
    }
    return e;
}

FaultProfile parse_profile(std::string_view key, std::string_view value)
{
    auto const fields = split(value, ' ');
    auto const range = split(fields.front(), ':');
    if (range.size() != 2) {
        bad_value(key, value, "expects first:last key=value...");
    }
    FaultProfile p;
    p.first = parse_int<ValidatorIndex>(key, range[0]);
    p.last = parse_int<ValidatorIndex>(key, range[1]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i].empty()) {
            continue;
        }
        auto const kv = split(fields[i], '=');
        if (kv.size() != 2) {
            bad_value(key, fields[i], "expects key=value");
        }
        auto const prob = parse_double(key, kv[1]);
        if (kv[0] == "p_missed_source") {
            p.p_missed_source = prob;
        }
        else if (kv[0] == "p_missed_target") {
            p.p_missed_target = prob;
        }
        else if (kv[0] == "p_missed_head") {
            p.p_missed_head = prob;
        }
        else if (kv[0] == "p_sync_miss") {
            p.p_sync_miss = prob;
        }
        else if (kv[0] == "p_missed_block") {
            p.p_missed_block = prob;
        }
        else {
            bad_value(key, kv[0], "is not a profile probability");
        }
    }
    return p;
}

SlashingEvent parse_slashing(std::string_view key, std::string_view value)
{
    auto const parts = split(value, ':');
    if (parts.size() != 2 && parts.size() != 3) {
        bad_value(key, value, "expects epoch:validator[:whistleblower]");
    }
    SlashingEvent s;
    s.epoch = parse_int<Epoch>(key, parts[0]);
    s.validator = parse_int<ValidatorIndex>(key, parts[1]);
    if (parts.size() == 3) {
        s.whistleblower = parse_int<ValidatorIndex>(key, parts[2]);
    }
    return s;
}

std::vector<SyntheticEntity> parse_entities(std::string_view key, std::string_view value)
{
    std::vector<SyntheticEntity> out;
    if (value.empty()) {
        return out;
    }
    for (auto const item : split(value, ',')) {
        auto const colon = item.rfind(':');
        if (colon == std::string_view::npos || colon == 0) {
            bad_value(key, item, "expects Name:share");
        }
        out.push_back(
            {std::string(trim(item.substr(0, colon))),
             parse_double(key, trim(item.substr(colon + 1)))});
    }
    return out;
}

void write_json(fs::path const &path, nlohmann::json const &j)
{
    write_file_atomic(path, j.dump(2) + "\n");
}

Epoch last_full_epoch(SlotRange const &range, WeightParams const &params)
{
    auto const full = (range.last_slot + 1) / params.slots_per_epoch;
    if (full == 0) {
        throw Error(ErrorCode::not_found, "provider range holds no complete epoch");
    }
    return full - 1;
}

std::unique_ptr<StateProvider> make_provider(RunConfig const &config)
{
    switch (config.provider) {
    case ProviderKind::sim:
        return std::make_unique<SimProvider>(config.sim);
    case ProviderKind::files:
        return std::make_unique<FileProvider>(config.fixtures.value_or(config.states_dir()));
    case ProviderKind::http:
        return std::make_unique<HttpProvider>(config.base_url);
    }
    throw Error(ErrorCode::invalid_config, "provider: unknown kind");
}

} // namespace

char const *to_string(ProviderKind kind) noexcept
{
    switch (kind) {
    case ProviderKind::sim:
        return "sim";
    case ProviderKind::files:
        return "files";
    case ProviderKind::http:
        return "http";
    }
    return "unknown";
}

void RunConfig::set(std::string_view key, std::string_view raw)
{
    auto const value = trim(raw);
    auto &s = sim;
    if (key == "seed") {
        s.seed = parse_int<std::uint64_t>(key, value);
    }
    else if (key == "validators") {
        s.validator_count = parse_int<std::uint32_t>(key, value);
    }
    else if (key == "epochs") {
        s.epochs = parse_int<std::uint64_t>(key, value);
    }
    else if (key == "split_epoch") {
        s.split_epoch = parse_int<Epoch>(key, value);
    }
    else if (key == "out") {
        out = std::string(value);
    }
    else if (key == "provider") {
        if (value == "sim") {
            provider = ProviderKind::sim;
        }
        else if (value == "files") {
            provider = ProviderKind::files;
        }
        else if (value == "http") {
            provider = ProviderKind::http;
        }
        else {
            bad_value(key, value, "must be one of sim, files, http");
        }
    }
    else if (key == "base_url") {
        base_url = std::string(value);
    }
    else if (key == "deposits") {
        deposits = std::string(value);
    }
    else if (key == "entities") {
        entities = std::string(value);
    }
    else if (key == "fixtures") {
        fixtures = std::string(value);
    }
    else if (key == "first_epoch") {
        first_epoch = parse_int<Epoch>(key, value);
    }
    else if (key == "last_epoch") {
        last_epoch = parse_int<Epoch>(key, value);
    }
    else if (key == "reports") {
        reports.clear();
        for (auto const name : split(value, ',')) {
            if (!name.empty()) {
                reports.emplace(name);
            }
        }
    }
    else if (key == "all_slots") {
        all_slots = parse_bool(key, value);
    }
    else if (key == "ndjson") {
        ndjson = parse_bool(key, value);
    }
    else if (key == "checkpoint_interval") {
        checkpoint_interval = parse_int<Epoch>(key, value);
    }
    else if (key == "p_missed_block") {
        s.p_missed_block = parse_double(key, value);
    }
    else if (key == "p_missed_block_after") {
        s.p_missed_block_after = parse_double(key, value);
    }
    else if (key == "p_missed_source") {
        s.p_missed_source = parse_double(key, value);
    }
    else if (key == "p_missed_target") {
        s.p_missed_target = parse_double(key, value);
    }
    else if (key == "p_missed_head") {
        s.p_missed_head = parse_double(key, value);
    }
    else if (key == "p_sync_miss") {
        s.p_sync_miss = parse_double(key, value);
    }
    else if (key == "growth_per_epoch") {
        s.growth_per_epoch = parse_double(key, value);
    }
    else if (key == "el_tip_min") {
        s.el_tip_min = parse_int<Gwei>(key, value);
    }
    else if (key == "el_tip_max") {
        s.el_tip_max = parse_int<Gwei>(key, value);
    }
    else if (key == "scaled_penalties") {
        s.scaled_penalties = parse_bool(key, value);
    }
    else if (key == "effective_balance_rule") {
        if (value == "pinned") {
            s.effective_balance_rule = EffectiveBalanceRule::pinned;
        }
        else if (value == "hysteresis") {
            s.effective_balance_rule = EffectiveBalanceRule::hysteresis;
        }
        else {
            bad_value(key, value, "must be pinned or hysteresis");
        }
    }
    else if (key == "synthetic_entities") {
        synthetic_entities = parse_entities(key, value);
    }
    else if (key == "offline") {
        s.offline.push_back(parse_offline(key, value));
    }
    else if (key == "profile") {
        s.profiles.push_back(parse_profile(key, value));
    }
    else if (key == "slashing") {
        s.slashings.push_back(parse_slashing(key, value));
    }
    else {
        throw Error(ErrorCode::invalid_config, fmt::format("unknown config key '{}'", key));
    }
}

void RunConfig::load(std::istream &in, std::string_view label)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = std::string_view(line);
        if (auto const hash = text.find('#'); hash != std::string_view::npos) {
            text = text.substr(0, hash);
        }
        text = trim(text);
        if (text.empty()) {
            continue;
        }
        auto const eq = text.find('=');
        if (eq == std::string_view::npos) {
            throw Error(
                ErrorCode::invalid_config,
                fmt::format("{}:{}: expected key = value", label, line_no));
        }
        try {
            set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
        }
        catch (Error const &e) {
            throw Error(e.code(), fmt::format("{}:{}: {}", label, line_no, e.what()));
        }
    }
}

void RunConfig::load(fs::path const &path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, fmt::format("config: cannot open {}", path.string()));
    }
    load(in, path.string());
}

void RunConfig::validate() const
{
    sim.validate();
    if (out.empty()) {
        throw Error(ErrorCode::invalid_config, "out: run directory must be named");
    }
    if (provider == ProviderKind::http && base_url.empty()) {
        throw Error(ErrorCode::invalid_config, "base_url: required with provider http");
    }
    if (first_epoch && last_epoch && *first_epoch > *last_epoch) {
        throw Error(ErrorCode::invalid_config, "first_epoch: after last_epoch");
    }
    // Against a stored ledger the range is only known later; missed_blocks
    // rejects a split outside it then.
    if (sim.split_epoch &&
        (*sim.split_epoch == 0 || (provider == ProviderKind::sim && *sim.split_epoch >= sim.epochs))) {
        throw Error(ErrorCode::invalid_config, "split_epoch: must fall strictly inside the run");
    }
    for (auto const &name : reports) {
        if (std::find_if(std::begin(kReportMetrics), std::end(kReportMetrics), [&](char const *m) {
                return name == m;
            }) == std::end(kReportMetrics)) {
            throw Error(ErrorCode::invalid_config, fmt::format("reports: unknown metric '{}'", name));
        }
    }
    double share = 0.0;
    for (auto const &e : synthetic_entities) {
        if (e.name.empty() || !(e.share >= 0.0 && e.share <= 1.0)) {
            throw Error(
                ErrorCode::invalid_config,
                fmt::format("synthetic_entities: bad entry '{}:{}'", e.name, e.share));
        }
        share += e.share;
    }
    if (share > 1.0 + 1e-9) {
        throw Error(ErrorCode::invalid_config, "synthetic_entities: shares exceed 1");
    }
    if ((deposits.has_value()) != (entities.has_value())) {
        throw Error(
            ErrorCode::invalid_config, deposits ? "entities: required with deposits"
                                                : "deposits: required with entities");
    }
}

fs::path RunConfig::states_dir() const
{
    return out / "states";
}

fs::path RunConfig::store_dir() const
{
    return out / "store";
}

fs::path RunConfig::report_dir() const
{
    return out / "report";
}

fs::path RunConfig::checkpoint_path() const
{
    return store_dir() / "checkpoint.json";
}

fs::path RunConfig::deposits_path() const
{
    return deposits.value_or(out / "deposits.csv");
}

fs::path RunConfig::entities_path() const
{
    return entities.value_or(out / "entities.csv");
}

EntityMap load_entities(RunConfig const &config)
{
    auto const deposits = config.deposits_path();
    auto const entities = config.entities_path();
    if (config.deposits || (fs::exists(deposits) && fs::exists(entities))) {
        return EntityMap::build(deposits, entities);
    }
    return {};
}

CommandResult cmd_simulate(RunConfig const &config)
{
    config.validate();
    CommandResult result;
    auto const states = config.states_dir();
    std::error_code ec;
    fs::create_directories(states, ec);
    if (ec) {
        throw Error(ErrorCode::io, fmt::format("cannot create {}: {}", states.string(), ec.message()));
    }
    for (auto const &entry : fs::directory_iterator(states)) {
        auto const name = entry.path().filename().string();
        if (name.starts_with("state_") && name.ends_with(".json")) {
            fs::remove(entry.path());
        }
    }

    std::ofstream ndjson;
    if (config.ndjson) {
        ndjson.open(config.out / "states.ndjson", std::ios::binary | std::ios::trunc);
        if (!ndjson) {
            throw Error(ErrorCode::io, "cannot open states.ndjson");
        }
    }

    auto const per_epoch = config.sim.params.slots_per_epoch;
    std::size_t written = 0;
    Simulator sim(config.sim);
    while (sim.step()) {
        auto const slot = sim.slot();
        bool const epoch_end = slot % per_epoch == per_epoch - 1;
        if (!config.all_slots && !epoch_end) {
            continue;
        }
        auto const snapshot = sim.snapshot();
        write_file_atomic(states / fixture_file_name(slot), to_json(snapshot));
        ++written;
        if (config.ndjson) {
            write_ndjson(ndjson, snapshot);
        }
    }

    if (!config.synthetic_entities.empty()) {
        std::ostringstream deposits;
        std::ostringstream entities;
        write_synthetic_entities(
            config.sim.validator_count, config.synthetic_entities, config.sim.seed, deposits,
            entities);
        write_file_atomic(config.out / "deposits.csv", deposits.str());
        write_file_atomic(config.out / "entities.csv", entities.str());
    }

    auto const audit = audit_conservation(sim.state());
    write_json(
        config.out / "audit.json",
        {{"ok", audit.ok},
         {"balance_delta", audit.balance_delta},
         {"journal_net", audit.journal_net},
         {"mismatched_validators", audit.mismatched_validators}});
    result.audits_passed = audit.ok;
    result.messages.push_back(
        fmt::format("simulated {} slots, wrote {} states to {}", config.sim.slot_count(), written,
                    states.string()));
    result.messages.push_back(fmt::format(
        "conservation audit: {} (balance delta {} Gwei, journal {} Gwei)",
        audit.ok ? "ok" : "FAILED", audit.balance_delta, audit.journal_net));
    return result;
}

CommandResult cmd_analyze(RunConfig const &config)
{
    config.validate();
    CommandResult result;
    auto provider = make_provider(config);
    auto const entities = load_entities(config);
    auto const &params = config.sim.params;

    Epoch const first = config.first_epoch.value_or(0);
    Epoch last = 0;
    if (config.last_epoch) {
        last = *config.last_epoch;
    }
    else {
        auto const full = last_full_epoch(provider->range(), params);
        if (full == 0) {
            throw Error(ErrorCode::not_found, "provider holds a single epoch; need two");
        }
        last = full - 1;
    }
    if (first > last) {
        throw Error(
            ErrorCode::invalid_config,
            fmt::format("first_epoch: {} is after the last indexable epoch {}", first, last));
    }

    LedgerStore store(config.store_dir());
    AnalyzerOptions options;
    options.params = params;
    options.scaled_penalties = config.sim.scaled_penalties;
    options.checkpoint_path = config.checkpoint_path();
    options.checkpoint_interval = config.checkpoint_interval;

    auto const summary = process_range(*provider, first, last, entities, store, options);
    write_json(
        config.store_dir() / "analyze.json",
        {{"first_epoch", first},
         {"last_epoch", last},
         {"rows", store.row_count()},
         {"store_hash", hash_hex(store.content_hash())},
         {"reconciliation_failures", summary.reconciliation_failures},
         {"dominance_violations", summary.dominance_violations}});
    result.audits_passed = summary.audits_passed();
    result.messages.push_back(fmt::format(
        "indexed epochs {}..{} from {} provider: {} new, {} unchanged, store hash {}", first, last,
        provider->kind(), summary.epochs_written, summary.epochs_unchanged,
        hash_hex(store.content_hash())));
    if (!summary.audits_passed()) {
        result.messages.push_back(fmt::format(
            "ledger audit FAILED: {} unreconciled validator-epochs, {} rows above maximum",
            summary.reconciliation_failures, summary.dominance_violations));
    }
    return result;
}

CommandResult cmd_report(RunConfig const &config)
{
    config.validate();
    CommandResult result;
    if (!fs::exists(config.store_dir() / "ledger")) {
        throw Error(
            ErrorCode::not_found, fmt::format("no ledger under {}", config.store_dir().string()));
    }
    LedgerStore const store(config.store_dir());
    auto const entities = load_entities(config);
    ReportOptions options;
    options.split_epoch = config.sim.split_epoch;
    options.metrics = config.reports;
    auto const files = write_report(store, entities, config.report_dir(), options);
    result.messages.push_back(
        fmt::format("wrote {} report files to {}", files.size(), config.report_dir().string()));
    return result;
}

CommandResult cmd_full(RunConfig const &config)
{
    CommandResult result;
    bool const external = config.provider == ProviderKind::http ||
                          (config.provider == ProviderKind::files && config.fixtures);
    for (auto *step : {&cmd_simulate, &cmd_analyze, &cmd_report}) {
        if (external && step == &cmd_simulate) {
            continue;
        }
        auto r = step(config);
        result.audits_passed = result.audits_passed && r.audits_passed;
        result.messages.insert(result.messages.end(), r.messages.begin(), r.messages.end());
    }
    return result;
}

} // namespace mer
