#include <mer/entity_mapper.hpp>

#include <mer/chain_sim.hpp>

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace mer {

namespace {

constexpr std::size_t kValidatorsPerAddress = 16;

std::string const kOther{kOtherEntity};

std::string trim(std::string_view s)
{
    auto const begin = s.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) {
        return {};
    }
    auto const end = s.find_last_not_of(" \t\r");
    return std::string(s.substr(begin, end - begin + 1));
}

template <typename Fn>
void for_each_row(
    std::istream &in, char const *label, std::string_view col0, std::string_view col1, Fn &&fn)
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw Error(
                ErrorCode::decode,
                fmt::format("{}:{}: expected 2 fields, got {}", label, line_no, fields.size()));
        }
        fields[0] = trim(fields[0]);
        fields[1] = trim(fields[1]);
        if (line_no == 1 && fields[0] == col0 && fields[1] == col1) {
            continue;
        }
        try {
            fn(fields[0], fields[1]);
        }
        catch (Error const &e) {
            throw Error(e.code(), fmt::format("{}:{}: {}", label, line_no, e.what()));
        }
    }
}

ValidatorIndex parse_index(std::string const &text)
{
    ValidatorIndex value = 0;
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(ErrorCode::decode, fmt::format("bad validator index '{}'", text));
    }
    return value;
}

std::string synthetic_address(std::uint64_t seed, std::uint64_t group, std::uint64_t n)
{
    auto const a = mix_seed(seed, group, n);
    auto const b = mix_seed(a, group, n);
    auto const c = mix_seed(b, group, n);
    return fmt::format("0x{:016x}{:016x}{:08x}", a, b, static_cast<std::uint32_t>(c));
}

} // namespace

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char const c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            }
            else if (c == '"') {
                quoted = false;
            }
            else {
                field += c;
            }
        }
        else if (c == '"') {
            quoted = true;
        }
        else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        }
        else if (c != '\r' && c != '\n') {
            field += c;
        }
    }
    if (quoted) {
        throw Error(ErrorCode::decode, "unterminated quoted field");
    }
    out.push_back(std::move(field));
    return out;
}

std::string csv_escape(std::string_view field)
{
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

std::string normalize_address(std::string_view address)
{
    std::string out = trim(address);
    for (auto &c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    if (!out.starts_with("0x")) {
        out.insert(0, "0x");
    }
    if (out.size() == 2) {
        throw Error(ErrorCode::decode, "empty deposit address");
    }
    for (std::size_t i = 2; i < out.size(); ++i) {
        char const c = out[i];
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            throw Error(ErrorCode::decode, fmt::format("deposit address '{}' is not hex", address));
        }
    }
    return out;
}

EntityMap EntityMap::build(std::istream &deposits, std::istream &entities)
{
    EntityMap map;
    for_each_row(
        entities, "entities", "deposit_address", "entity_name",
        [&](std::string const &address, std::string const &name) {
            if (name.empty()) {
                throw Error(ErrorCode::decode, "empty entity name");
            }
            auto const key = normalize_address(address);
            auto const [it, inserted] = map.by_address_.emplace(key, name);
            if (!inserted && it->second != name) {
                throw Error(
                    ErrorCode::conflict,
                    fmt::format("address {} mapped to both '{}' and '{}'", key, it->second, name));
            }
        });

    for_each_row(
        deposits, "deposits", "validator_index", "deposit_address",
        [&](std::string const &index_text, std::string const &address) {
            auto const index = parse_index(index_text);
            auto const key = normalize_address(address);
            auto const entity_it = map.by_address_.find(key);
            auto const &entity = entity_it == map.by_address_.end() ? kOther : entity_it->second;
            auto const [it, inserted] = map.by_validator_.emplace(index, entity);
            if (!inserted && it->second != entity) {
                throw Error(
                    ErrorCode::conflict,
                    fmt::format("validator {} maps to both '{}' and '{}'", index, it->second, entity));
            }
        });
    return map;
}

EntityMap EntityMap::build(
    std::filesystem::path const &deposits, std::filesystem::path const &entities)
{
    std::ifstream deposits_in(deposits);
    if (!deposits_in) {
        throw Error(ErrorCode::io, fmt::format("cannot open {}", deposits.string()));
    }
    std::ifstream entities_in(entities);
    if (!entities_in) {
        throw Error(ErrorCode::io, fmt::format("cannot open {}", entities.string()));
    }
    return build(deposits_in, entities_in);
}

std::string const &EntityMap::resolve(ValidatorIndex validator) const
{
    auto it = by_validator_.find(validator);
    return it == by_validator_.end() ? kOther : it->second;
}

std::map<std::string, std::size_t> EntityMap::validator_counts(std::size_t registry_size) const
{
    std::map<std::string, std::size_t> counts;
    for (std::size_t v = 0; v < registry_size; ++v) {
        ++counts[resolve(static_cast<ValidatorIndex>(v))];
    }
    return counts;
}

void write_synthetic_entities(
    std::size_t validator_count, std::span<SyntheticEntity const> entities, std::uint64_t seed,
    std::ostream &deposits, std::ostream &entity_names)
{
    deposits << "validator_index,deposit_address\n";
    entity_names << "deposit_address,entity_name\n";

    std::size_t next = 0;
    for (std::size_t e = 0; e < entities.size(); ++e) {
        auto const &entity = entities[e];
        if (!(entity.share >= 0.0 && entity.share <= 1.0)) {
            throw Error(
                ErrorCode::invalid_config,
                fmt::format("synthetic entity '{}': share outside [0, 1]", entity.name));
        }
        auto const count = static_cast<std::size_t>(
            std::llround(entity.share * static_cast<double>(validator_count)));
        if (next + count > validator_count) {
            throw Error(ErrorCode::invalid_config, "synthetic entity shares exceed 100%");
        }
        auto const addresses = std::max<std::size_t>(1, (count + kValidatorsPerAddress - 1) /
                                                            kValidatorsPerAddress);
        for (std::size_t a = 0; a < addresses; ++a) {
            entity_names << synthetic_address(seed, e + 1, a) << ',' << csv_escape(entity.name)
                         << '\n';
        }
        for (std::size_t i = 0; i < count; ++i) {
            deposits << next + i << ',' << synthetic_address(seed, e + 1, i % addresses) << '\n';
        }
        next += count;
    }
    // Group 0 holds solo stakers: one unlisted address each.
    for (; next < validator_count; ++next) {
        deposits << next << ',' << synthetic_address(seed, 0, next) << '\n';
    }
}

} // namespace mer
