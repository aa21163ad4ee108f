#include <mer/ledger_store.hpp>

#include <mer/entity_mapper.hpp>

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace mer {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(std::uint64_t hash, std::string_view data) noexcept
{
    for (unsigned char c : data) {
        hash ^= c;
        hash *= kFnvPrime;
    }
    return hash;
}

std::string rows_file(Epoch epoch)
{
    return fmt::format("epoch_{:08}.csv", epoch);
}

std::string slots_file(Epoch epoch)
{
    return fmt::format("epoch_{:08}_slots.csv", epoch);
}

template <typename T>
T parse_number(std::string const &text, std::size_t line, char const *column)
{
    T value{};
    auto const [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw Error(
            ErrorCode::decode, fmt::format("line {}: bad {} '{}'", line, column, text));
    }
    return value;
}

bool parse_bit(std::string const &text, std::size_t line, char const *column)
{
    if (text == "0") {
        return false;
    }
    if (text == "1") {
        return true;
    }
    throw Error(ErrorCode::decode, fmt::format("line {}: bad {} '{}'", line, column, text));
}

// Splits into lines, checks the header, and hands each data row's fields on.
template <typename Fn>
void for_each_record(
    std::string_view text, std::string_view header, std::size_t columns, Fn &&fn)
{
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line_no == 1) {
            if (line != header) {
                throw Error(ErrorCode::decode, "line 1: unexpected header");
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            throw Error(
                ErrorCode::decode,
                fmt::format("line {}: expected {} fields, got {}", line_no, columns, fields.size()));
        }
        fn(fields, line_no);
    }
    if (line_no == 0) {
        throw Error(ErrorCode::decode, "empty file");
    }
}

} // namespace

std::string rows_to_csv(std::vector<ValidatorEpochRow> const &rows)
{
    std::string out(kLedgerHeader);
    out += '\n';
    for (auto const &r : rows) {
        out += fmt::format(
            "{},{},{},{:d},{:d},{:d},{},{},{},{:d},{},{},{},{},{},{},{}\n", r.epoch,
            r.validator_index, r.effective_balance, r.flags.source, r.flags.target, r.flags.head,
            r.attestation_reward, r.attestation_penalty, r.max_attestation_reward,
            r.in_sync_committee, r.sync_reward, r.max_sync_reward, r.proposed_slots,
            r.missed_proposals, r.proposer_cl_reward, r.el_reward, csv_escape(r.entity));
    }
    return out;
}

std::string slots_to_csv(std::vector<SlotRow> const &slots)
{
    std::string out(kSlotHeader);
    out += '\n';
    for (auto const &s : slots) {
        out += fmt::format("{},{},{:d}\n", s.slot, s.proposer_index, s.block_proposed);
    }
    return out;
}

std::vector<ValidatorEpochRow> rows_from_csv(std::string_view text)
{
    std::vector<ValidatorEpochRow> rows;
    for_each_record(text, kLedgerHeader, 17, [&](std::vector<std::string> &f, std::size_t line) {
        ValidatorEpochRow r;
        r.epoch = parse_number<Epoch>(f[0], line, "epoch");
        r.validator_index = parse_number<ValidatorIndex>(f[1], line, "validator_index");
        r.effective_balance = parse_number<Gwei>(f[2], line, "effective_balance");
        r.flags.source = parse_bit(f[3], line, "flag_source");
        r.flags.target = parse_bit(f[4], line, "flag_target");
        r.flags.head = parse_bit(f[5], line, "flag_head");
        r.attestation_reward = parse_number<Gwei>(f[6], line, "att_reward");
        r.attestation_penalty = parse_number<Gwei>(f[7], line, "att_penalty");
        r.max_attestation_reward = parse_number<Gwei>(f[8], line, "att_max");
        r.in_sync_committee = parse_bit(f[9], line, "in_sync");
        r.sync_reward = parse_number<SignedGwei>(f[10], line, "sync_reward");
        r.max_sync_reward = parse_number<Gwei>(f[11], line, "sync_max");
        r.proposed_slots = parse_number<std::uint32_t>(f[12], line, "proposed");
        r.missed_proposals = parse_number<std::uint32_t>(f[13], line, "missed_proposals");
        r.proposer_cl_reward = parse_number<Gwei>(f[14], line, "proposer_reward");
        r.el_reward = parse_number<Gwei>(f[15], line, "el_reward");
        r.entity = std::move(f[16]);
        rows.push_back(std::move(r));
    });
    return rows;
}

std::vector<SlotRow> slots_from_csv(std::string_view text)
{
    std::vector<SlotRow> slots;
    for_each_record(text, kSlotHeader, 3, [&](std::vector<std::string> &f, std::size_t line) {
        slots.push_back(
            {parse_number<Slot>(f[0], line, "slot"),
             parse_number<ValidatorIndex>(f[1], line, "proposer_index"),
             parse_bit(f[2], line, "block_proposed")});
    });
    return slots;
}

std::string read_file(fs::path const &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io, fmt::format("cannot open {}", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(fs::path const &path, std::string_view content)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out.flush()) {
            throw Error(ErrorCode::io, fmt::format("cannot write {}", tmp.string()));
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(
            ErrorCode::io, fmt::format("cannot rename {}: {}", tmp.string(), ec.message()));
    }
}

std::string hash_hex(std::uint64_t hash)
{
    return fmt::format("{:016x}", hash);
}

LedgerStore::LedgerStore(fs::path dir)
    : dir_(std::move(dir))
{
    auto const ledger = *dir_ / "ledger";
    std::error_code ec;
    fs::create_directories(ledger, ec);
    if (ec) {
        throw Error(
            ErrorCode::io, fmt::format("cannot create {}: {}", ledger.string(), ec.message()));
    }
    for (auto const &entry : fs::directory_iterator(ledger)) {
        auto const name = entry.path().filename().string();
        Epoch epoch = 0;
        constexpr std::string_view prefix = "epoch_";
        if (name.size() != rows_file(0).size() || !name.starts_with(prefix) ||
            !name.ends_with(".csv")) {
            continue;
        }
        auto const digits = std::string_view(name).substr(prefix.size(), 8);
        auto const [ptr, err] = std::from_chars(digits.data(), digits.data() + digits.size(), epoch);
        if (err != std::errc{} || ptr != digits.data() + digits.size()) {
            continue;
        }
        EpochBatch batch;
        batch.epoch = epoch;
        try {
            batch.rows = rows_from_csv(read_file(entry.path()));
            batch.slots = slots_from_csv(read_file(ledger / slots_file(epoch)));
        }
        catch (Error const &e) {
            throw Error(e.code(), fmt::format("{}: {}", entry.path().string(), e.what()));
        }
        epochs_.emplace(epoch, std::move(batch));
    }
}

LedgerStore::CommitResult LedgerStore::commit(EpochBatch batch)
{
    std::set<ValidatorIndex> seen;
    for (auto const &row : batch.rows) {
        if (row.epoch != batch.epoch) {
            throw Error(
                ErrorCode::domain,
                fmt::format("row for epoch {} committed in batch {}", row.epoch, batch.epoch));
        }
        if (!seen.insert(row.validator_index).second) {
            throw Error(
                ErrorCode::conflict, fmt::format("duplicate row for validator {} in epoch {}",
                                                 row.validator_index, batch.epoch));
        }
    }

    if (auto it = epochs_.find(batch.epoch); it != epochs_.end()) {
        if (it->second == batch) {
            return CommitResult::unchanged;
        }
        throw Error(
            ErrorCode::conflict,
            fmt::format("epoch {} already stored with different content", batch.epoch));
    }

    if (dir_) {
        auto const ledger = *dir_ / "ledger";
        write_file_atomic(ledger / slots_file(batch.epoch), slots_to_csv(batch.slots));
        write_file_atomic(ledger / rows_file(batch.epoch), rows_to_csv(batch.rows));
    }
    epochs_.emplace(batch.epoch, std::move(batch));
    return CommitResult::written;
}

EpochBatch const *LedgerStore::find(Epoch epoch) const
{
    auto it = epochs_.find(epoch);
    return it == epochs_.end() ? nullptr : &it->second;
}

std::size_t LedgerStore::row_count() const noexcept
{
    std::size_t n = 0;
    for (auto const &[epoch, batch] : epochs_) {
        n += batch.rows.size();
    }
    return n;
}

std::uint64_t LedgerStore::content_hash() const
{
    auto hash = kFnvOffset;
    for (auto const &[epoch, batch] : epochs_) {
        hash = fnv1a(hash, rows_to_csv(batch.rows));
        hash = fnv1a(hash, slots_to_csv(batch.slots));
    }
    return hash;
}

} // namespace mer
