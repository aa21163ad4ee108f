#include <mer/metrics.hpp>

#include <mer/state_analyzer.hpp>

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <set>

namespace mer {

namespace {

using nlohmann::json;

double fraction(std::uint64_t part, std::uint64_t whole)
{
    return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}

void require_rows(LedgerStore const &store, char const *metric)
{
    if (store.row_count() == 0) {
        throw Error(ErrorCode::domain, fmt::format("{}: ledger has no rows", metric));
    }
}

std::string fixed(double value)
{
    return fmt::format("{:.6f}", value);
}

struct Export
{
    std::string csv;
    json series = json::array();
};

void emit(
    std::filesystem::path const &dir, std::string const &name, Export const &data,
    std::vector<std::filesystem::path> &written)
{
    auto const csv_path = dir / (name + ".csv");
    write_file_atomic(csv_path, data.csv);
    written.push_back(csv_path);

    json doc = {{"metric", name}, {"series", data.series}};
    auto const json_path = dir / (name + ".json");
    write_file_atomic(json_path, doc.dump(2) + "\n");
    written.push_back(json_path);
}

Export export_missed_flags(std::vector<MissedFlagsPoint> const &series)
{
    Export out;
    out.csv = "epoch,active,missed_source,missed_target,missed_head,source,target,head,total\n";
    for (auto const &p : series) {
        out.csv += fmt::format(
            "{},{},{},{},{},{},{},{},{}\n", p.epoch, p.active, p.missed_source, p.missed_target,
            p.missed_head, fixed(p.source), fixed(p.target), fixed(p.head), fixed(p.total));
        out.series.push_back(
            {{"epoch", p.epoch},
             {"active", p.active},
             {"source", p.source},
             {"target", p.target},
             {"head", p.head},
             {"total", p.total}});
    }
    return out;
}

Export export_missed_blocks(MissedBlocksComparison const &c)
{
    Export out;
    out.csv = "split_epoch,before_slots,before_missed,before_ratio,after_slots,after_missed,"
              "after_ratio,reduction\n";
    out.csv += fmt::format(
        "{},{},{},{},{},{},{},{}\n", c.split_epoch, c.before_slots, c.before_missed,
        fixed(c.before_ratio), c.after_slots, c.after_missed, fixed(c.after_ratio),
        fixed(c.reduction));
    out.series.push_back(
        {{"side", "before"},
         {"slots", c.before_slots},
         {"missed", c.before_missed},
         {"ratio", c.before_ratio}});
    out.series.push_back(
        {{"side", "after"},
         {"slots", c.after_slots},
         {"missed", c.after_missed},
         {"ratio", c.after_ratio}});
    return out;
}

Export export_decomposition(RewardDecomposition const &d)
{
    Export out;
    out.csv = "source,gwei,share\n";
    std::pair<char const *, std::pair<Gwei, double>> const parts[] = {
        {"attestation", {d.attestation, d.attestation_share}},
        {"proposer_cl", {d.proposer_cl, d.proposer_share}},
        {"sync", {d.sync, d.sync_share}},
        {"el", {d.el, d.el_share}},
    };
    for (auto const &[name, value] : parts) {
        out.csv += fmt::format("{},{},{}\n", name, value.first, fixed(value.second));
        out.series.push_back({{"source", name}, {"gwei", value.first}, {"share", value.second}});
    }
    return out;
}

Export export_proposals(std::vector<std::uint64_t> const &histogram)
{
    Export out;
    out.csv = "proposals,validators\n";
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        out.csv += fmt::format("{},{}\n", k, histogram[k]);
        out.series.push_back({{"proposals", k}, {"validators", histogram[k]}});
    }
    return out;
}

Export export_streaks(std::map<std::string, StreakCounts> const &streaks)
{
    Export out;
    out.csv = "entity,length,maximal_runs,cumulative_runs\n";
    for (auto const &[entity, counts] : streaks) {
        for (auto const &[length, windows] : counts.cumulative) {
            auto const it = counts.maximal.find(length);
            auto const maximal = it == counts.maximal.end() ? 0 : it->second;
            out.csv += fmt::format("{},{},{},{}\n", csv_escape(entity), length, maximal, windows);
            out.series.push_back(
                {{"entity", entity},
                 {"length", length},
                 {"maximal_runs", maximal},
                 {"cumulative_runs", windows}});
        }
    }
    return out;
}

Export export_entity_mer(MerReport const &report)
{
    Export out;
    out.csv = "entity,validators,achieved,max,mer\n";
    auto add = [&](EntityMer const &e, std::string const &label) {
        out.csv += fmt::format(
            "{},{},{},{},{}\n", csv_escape(label), e.validators, e.achieved, e.maximum,
            fixed(e.ratio));
        out.series.push_back(
            {{"entity", label},
             {"validators", e.validators},
             {"achieved", e.achieved},
             {"max", e.maximum},
             {"mer", e.ratio}});
    };
    for (auto const &e : report.entities) {
        add(e, e.entity);
    }
    add(report.network, "network");
    return out;
}

Export export_block_share(std::vector<BlockShare> const &shares)
{
    Export out;
    out.csv = "entity,blocks,share\n";
    for (auto const &s : shares) {
        out.csv += fmt::format("{},{},{}\n", csv_escape(s.entity), s.blocks, fixed(s.share));
        out.series.push_back({{"entity", s.entity}, {"blocks", s.blocks}, {"share", s.share}});
    }
    return out;
}

Export export_mer_series(std::vector<MerPoint> const &series)
{
    Export out;
    out.csv = "epoch,achieved,max,mer\n";
    for (auto const &p : series) {
        out.csv += fmt::format("{},{},{},{}\n", p.epoch, p.achieved, p.maximum, fixed(p.ratio));
        out.series.push_back(
            {{"epoch", p.epoch}, {"achieved", p.achieved}, {"max", p.maximum}, {"mer", p.ratio}});
    }
    return out;
}

} // namespace

std::vector<MissedFlagsPoint> missed_flags_series(LedgerStore const &store)
{
    require_rows(store, "missed_flags_series");
    std::vector<MissedFlagsPoint> series;
    for (auto const &[epoch, batch] : store.epochs()) {
        MissedFlagsPoint p;
        p.epoch = epoch;
        p.active = batch.rows.size();
        for (auto const &row : batch.rows) {
            p.missed_source += row.flags.source ? 0 : 1;
            p.missed_target += row.flags.target ? 0 : 1;
            p.missed_head += row.flags.head ? 0 : 1;
        }
        p.source = fraction(p.missed_source, p.active);
        p.target = fraction(p.missed_target, p.active);
        p.head = fraction(p.missed_head, p.active);
        p.total = p.source + p.target + p.head;
        series.push_back(p);
    }
    return series;
}

MissedFlagsPoint missed_flags_overall(std::span<MissedFlagsPoint const> series)
{
    MissedFlagsPoint out;
    for (auto const &p : series) {
        out.active += p.active;
        out.missed_source += p.missed_source;
        out.missed_target += p.missed_target;
        out.missed_head += p.missed_head;
    }
    out.source = fraction(out.missed_source, out.active);
    out.target = fraction(out.missed_target, out.active);
    out.head = fraction(out.missed_head, out.active);
    out.total = out.source + out.target + out.head;
    return out;
}

MissedBlocksComparison MissedBlocksComparison::from_counts(
    Epoch split_epoch, std::uint64_t before_slots, std::uint64_t before_missed,
    std::uint64_t after_slots, std::uint64_t after_missed)
{
    if (before_slots == 0 || after_slots == 0) {
        throw Error(
            ErrorCode::domain,
            fmt::format("missed_blocks_compare: split epoch {} leaves one side empty", split_epoch));
    }
    if (before_missed == 0) {
        throw Error(
            ErrorCode::domain, "missed_blocks_compare: no missed blocks before the split");
    }
    MissedBlocksComparison c;
    c.split_epoch = split_epoch;
    c.before_slots = before_slots;
    c.before_missed = before_missed;
    c.after_slots = after_slots;
    c.after_missed = after_missed;
    c.before_ratio = fraction(before_missed, before_slots);
    c.after_ratio = fraction(after_missed, after_slots);
    c.reduction = 1.0 - c.after_ratio / c.before_ratio;
    return c;
}

MissedBlocksComparison missed_blocks_compare(LedgerStore const &store, Epoch split_epoch)
{
    std::uint64_t counts[2][2] = {};
    for (auto const &[epoch, batch] : store.epochs()) {
        auto const side = epoch >= split_epoch ? 1 : 0;
        for (auto const &slot : batch.slots) {
            ++counts[side][0];
            counts[side][1] += slot.block_proposed ? 0 : 1;
        }
    }
    return MissedBlocksComparison::from_counts(
        split_epoch, counts[0][0], counts[0][1], counts[1][0], counts[1][1]);
}

RewardDecomposition reward_decomposition(LedgerStore const &store)
{
    RewardDecomposition d;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &row : batch.rows) {
            d.attestation += row.attestation_reward;
            d.proposer_cl += row.proposer_cl_reward;
            d.sync += row.sync_reward > 0 ? static_cast<Gwei>(row.sync_reward) : 0;
            d.el += row.el_reward;
        }
    }
    auto const total = d.attestation + d.proposer_cl + d.sync + d.el;
    if (total == 0) {
        throw Error(ErrorCode::domain, "reward_decomposition: no rewards in the ledger");
    }
    d.attestation_share = fraction(d.attestation, total);
    d.proposer_share = fraction(d.proposer_cl, total);
    d.sync_share = fraction(d.sync, total);
    d.el_share = fraction(d.el, total);
    return d;
}

std::vector<std::uint64_t> proposals_frequency(LedgerStore const &store)
{
    std::map<ValidatorIndex, std::uint64_t> per_validator;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &row : batch.rows) {
            per_validator[row.validator_index] += row.proposed_slots;
        }
    }
    std::vector<std::uint64_t> histogram;
    for (auto const &[validator, proposals] : per_validator) {
        if (histogram.size() <= proposals) {
            histogram.resize(proposals + 1, 0);
        }
        ++histogram[proposals];
    }
    return histogram;
}

std::map<std::string, StreakCounts> count_streaks(
    std::span<std::optional<std::string> const> sequence)
{
    std::map<std::string, StreakCounts> out;
    auto flush = [&](std::string const &entity, std::uint64_t length) {
        if (length < 2) {
            return;
        }
        auto &counts = out[entity];
        ++counts.maximal[length];
        for (std::uint64_t k = 2; k <= length; ++k) {
            counts.cumulative[k] += length - k + 1;
        }
    };

    std::optional<std::string> current;
    std::uint64_t length = 0;
    for (auto const &entry : sequence) {
        if (entry && current && *entry == *current) {
            ++length;
            continue;
        }
        if (current) {
            flush(*current, length);
        }
        current = entry;
        length = entry ? 1 : 0;
    }
    if (current) {
        flush(*current, length);
    }
    return out;
}

std::vector<std::optional<std::string>> proposer_entity_sequence(
    LedgerStore const &store, EntityMap const &entities)
{
    std::vector<std::optional<std::string>> sequence;
    std::optional<Slot> previous;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &slot : batch.slots) {
            if (previous && slot.slot != *previous + 1) {
                sequence.emplace_back();
            }
            previous = slot.slot;
            if (slot.block_proposed) {
                sequence.emplace_back(entities.resolve(slot.proposer_index));
            }
            else {
                sequence.emplace_back();
            }
        }
    }
    return sequence;
}

std::map<std::string, StreakCounts> entity_streaks(
    LedgerStore const &store, EntityMap const &entities)
{
    auto const sequence = proposer_entity_sequence(store, entities);
    return count_streaks(sequence);
}

MerReport mer_per_entity(LedgerStore const &store, EntityMap const &entities)
{
    require_rows(store, "mer_per_entity");
    std::map<std::string, MerSums> sums;
    std::map<std::string, std::set<ValidatorIndex>> members;
    MerSums network;
    std::set<ValidatorIndex> all;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &row : batch.rows) {
            auto const &entity = entities.resolve(row.validator_index);
            sums[entity].add(row);
            members[entity].insert(row.validator_index);
            network.add(row);
            all.insert(row.validator_index);
        }
    }

    MerReport report;
    for (auto const &[entity, s] : sums) {
        if (s.maximum == 0) {
            continue;
        }
        report.entities.push_back({entity, members[entity].size(), s.achieved, s.maximum, s.ratio()});
    }
    report.network = {"network", all.size(), network.achieved, network.maximum, network.ratio()};
    return report;
}

std::vector<BlockShare> block_share_per_entity(
    LedgerStore const &store, EntityMap const &entities)
{
    std::map<std::string, std::uint64_t> blocks;
    std::uint64_t total = 0;
    for (auto const &[epoch, batch] : store.epochs()) {
        for (auto const &row : batch.rows) {
            blocks.try_emplace(entities.resolve(row.validator_index), 0);
        }
        for (auto const &slot : batch.slots) {
            if (slot.block_proposed) {
                ++blocks[entities.resolve(slot.proposer_index)];
                ++total;
            }
        }
    }
    std::vector<BlockShare> shares;
    for (auto const &[entity, count] : blocks) {
        shares.push_back({entity, count, fraction(count, total)});
    }
    return shares;
}

std::vector<MerPoint> mer_series(LedgerStore const &store)
{
    std::vector<MerPoint> series;
    for (auto const &[epoch, batch] : store.epochs()) {
        MerSums sums;
        for (auto const &row : batch.rows) {
            sums.add(row);
        }
        series.push_back(
            {epoch, sums.achieved, sums.maximum, sums.maximum == 0 ? 0.0 : sums.ratio()});
    }
    return series;
}

std::string percent(double fraction_value)
{
    return fmt::format("{:.1f}%", fraction_value * 100.0);
}

std::string render_summary(
    LedgerStore const &store, EntityMap const &entities, ReportOptions const &options)
{
    require_rows(store, "summary");
    auto const &epochs = store.epochs();
    auto const flags = missed_flags_series(store);
    auto const overall = missed_flags_overall(flags);
    auto const peak = std::max_element(
        flags.begin(), flags.end(), [](auto const &a, auto const &b) { return a.total < b.total; });
    auto const decomposition = reward_decomposition(store);
    auto const histogram = proposals_frequency(store);
    auto const mer = mer_per_entity(store, entities);
    auto const series = mer_series(store);
    auto const lowest = std::min_element(
        series.begin(), series.end(), [](auto const &a, auto const &b) { return a.ratio < b.ratio; });
    auto const shares = block_share_per_entity(store, entities);
    auto const streaks = entity_streaks(store, entities);

    std::string out;
    auto line = [&out](std::string const &text) {
        out += text;
        out += '\n';
    };
    line(fmt::format("epochs: {}..{} ({} epochs)", epochs.begin()->first, epochs.rbegin()->first,
                     epochs.size()));
    line(fmt::format("validator_epochs: {}", store.row_count()));
    line(fmt::format("store_hash: {}", hash_hex(store.content_hash())));
    line("");
    line(fmt::format("network MER ratio: {}", percent(mer.network.ratio)));
    line(fmt::format("lowest epoch MER ratio: {} (epoch {})", percent(lowest->ratio), lowest->epoch));
    line("");
    line(fmt::format("missed flags total: {}", percent(overall.total)));
    line(fmt::format("missed source: {}", percent(overall.source)));
    line(fmt::format("missed target: {}", percent(overall.target)));
    line(fmt::format("missed head: {}", percent(overall.head)));
    line(fmt::format("peak missed flags total: {} (epoch {})", percent(peak->total), peak->epoch));
    line("");
    if (options.split_epoch) {
        try {
            auto const c = missed_blocks_compare(store, *options.split_epoch);
            line(fmt::format("missed blocks before epoch {}: {} of {} ({})", c.split_epoch,
                             c.before_missed, c.before_slots, percent(c.before_ratio)));
            line(fmt::format("missed blocks from epoch {}: {} of {} ({})", c.split_epoch,
                             c.after_missed, c.after_slots, percent(c.after_ratio)));
            line(fmt::format("missed block reduction: {}", percent(c.reduction)));
        }
        catch (Error const &e) {
            line(fmt::format("missed block comparison unavailable: {}", e.what()));
        }
        line("");
    }
    line(fmt::format("reward share attestation: {}", percent(decomposition.attestation_share)));
    line(fmt::format("reward share proposer: {}", percent(decomposition.proposer_share)));
    line(fmt::format("reward share sync committee: {}", percent(decomposition.sync_share)));
    line(fmt::format("reward share execution tips: {}", percent(decomposition.el_share)));
    line("");
    std::uint64_t validators = 0;
    for (auto const count : histogram) {
        validators += count;
    }
    for (std::size_t k = 0; k < histogram.size(); ++k) {
        line(fmt::format("validators with {} proposals: {} ({})", k, histogram[k],
                         percent(fraction(histogram[k], validators))));
    }
    line("");
    for (auto const &e : mer.entities) {
        line(fmt::format("MER {}: {}", e.entity, percent(e.ratio)));
    }
    for (auto const &s : shares) {
        line(fmt::format("block share {}: {}", s.entity, percent(s.share)));
    }
    for (auto const &[entity, counts] : streaks) {
        if (counts.maximal.empty()) {
            continue;
        }
        line(fmt::format("longest streak {}: {}", entity, counts.maximal.rbegin()->first));
    }
    return out;
}

std::vector<std::filesystem::path> write_report(
    LedgerStore const &store, EntityMap const &entities, std::filesystem::path const &dir,
    ReportOptions const &options)
{
    std::vector<std::filesystem::path> written;
    auto wanted = [&](char const *metric) { return options.selected(metric); };
    if (wanted("missed_flags")) {
        emit(dir, "missed_flags", export_missed_flags(missed_flags_series(store)), written);
    }
    if (wanted("missed_blocks") && options.split_epoch) {
        emit(dir, "missed_blocks",
             export_missed_blocks(missed_blocks_compare(store, *options.split_epoch)), written);
    }
    if (wanted("reward_decomposition")) {
        emit(dir, "reward_decomposition", export_decomposition(reward_decomposition(store)),
             written);
    }
    if (wanted("proposals_frequency")) {
        emit(dir, "proposals_frequency", export_proposals(proposals_frequency(store)), written);
    }
    if (wanted("entity_streaks")) {
        emit(dir, "entity_streaks", export_streaks(entity_streaks(store, entities)), written);
    }
    if (wanted("mer_per_entity")) {
        emit(dir, "mer_per_entity", export_entity_mer(mer_per_entity(store, entities)), written);
    }
    if (wanted("block_share")) {
        emit(dir, "block_share", export_block_share(block_share_per_entity(store, entities)),
             written);
    }
    if (wanted("mer_series")) {
        emit(dir, "mer_series", export_mer_series(mer_series(store)), written);
    }

    auto const summary = dir / "summary.txt";
    write_file_atomic(summary, render_summary(store, entities, options));
    written.push_back(summary);
    return written;
}

} // namespace mer
