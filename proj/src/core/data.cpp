// SPDX-License-Identifier: Apache-2.0

#include "core/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "core/error.hpp"

namespace mdap {

const char* domain_tag(Domain d) noexcept {
    return d == Domain::source ? "s" : "t";
}

const char* split_name(Split s) noexcept {
    switch (s) {
    case Split::train:
        return "train";
    case Split::valid:
        return "valid";
    case Split::test:
        return "test";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    for (Split s : kSplits) {
        if (name == split_name(s)) {
            return s;
        }
    }
    throw ParameterError("unknown split '" + name + "' (expected train, valid or test)");
}

// ---- loading -------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
    if (text.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

std::optional<std::string> parse_record(std::string_view line, char delim, InteractionRecord& rec) {
    const auto fields = split_fields(line, delim);
    if (fields.size() < 3 || fields.size() > 4) {
        return "expected 3 or 4 fields, found " + std::to_string(fields.size());
    }
    if (fields[0].empty() || fields[1].empty()) {
        return std::string("empty user or item id");
    }
    double rating = 0.0;
    if (!parse_number(fields[2], rating) || !std::isfinite(rating)) {
        return "rating '" + std::string(fields[2]) + "' is not a number";
    }
    rec.user_id.assign(fields[0]);
    rec.item_id.assign(fields[1]);
    rec.rating = rating;
    rec.timestamp.reset();
    if (fields.size() == 4) {
        std::int64_t ts = 0;
        if (!parse_number(fields[3], ts)) {
            return "timestamp '" + std::string(fields[3]) + "' is not an integer";
        }
        rec.timestamp = ts;
    }
    return std::nullopt;
}

} // namespace

LoadResult load_domain(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read interaction file " + path.string());
    }
    LoadResult result;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        InteractionRecord rec;
        if (auto err = parse_record(line, options.delimiter, rec)) {
            result.warnings.push_back({lineno, std::move(*err)});
            continue;
        }
        result.records.push_back(std::move(rec));
    }
    if (in.bad()) {
        throw IoError("error while reading " + path.string());
    }
    if (options.strict && !result.warnings.empty()) {
        std::ostringstream os;
        os << path.string() << ": " << result.warnings.size() << " malformed line(s)";
        const std::size_t shown = std::min<std::size_t>(10, result.warnings.size());
        for (std::size_t i = 0; i < shown; ++i) {
            os << "\n  line " << result.warnings[i].line << ": " << result.warnings[i].reason;
        }
        throw ParseError(os.str());
    }
    return result;
}

// ---- k-core --------------------------------------------------------------

std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& records, std::size_t k) {
    if (k == 0) {
        throw ParameterError("k-core level must be at least 1");
    }
    std::vector<char> alive(records.size(), 1);
    bool changed = true;
    while (changed) {
        changed = false;
        std::set<std::pair<std::string_view, std::string_view>> pairs;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (alive[i]) {
                pairs.emplace(records[i].user_id, records[i].item_id);
            }
        }
        std::unordered_map<std::string_view, std::size_t> user_deg;
        std::unordered_map<std::string_view, std::size_t> item_deg;
        for (const auto& [u, it] : pairs) {
            ++user_deg[u];
            ++item_deg[it];
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (alive[i] && (user_deg[records[i].user_id] < k || item_deg[records[i].item_id] < k)) {
                alive[i] = 0;
                changed = true;
            }
        }
    }
    std::vector<InteractionRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (alive[i]) {
            out.push_back(records[i]);
        }
    }
    return out;
}

// ---- dataset -------------------------------------------------------------

std::size_t InteractionDataset::split_size(Domain d, Split s) const {
    std::size_t n = 0;
    for (const auto& items_of_user : split_items(d, s)) {
        n += items_of_user.size();
    }
    return n;
}

void InteractionDataset::validate() const {
    for (Domain d : kDomains) {
        const std::size_t n_items = num_items(d);
        for (Split s : kSplits) {
            const auto& per_user = split_items(d, s);
            if (per_user.size() != users.size()) {
                throw DataError(std::string("split ") + domain_tag(d) + "/" + split_name(s) +
                                " does not cover every user");
            }
        }
        for (std::size_t u = 0; u < users.size(); ++u) {
            std::vector<std::uint32_t> seen;
            for (Split s : kSplits) {
                const auto& items_of_user = split_items(d, s)[u];
                for (std::size_t i = 0; i < items_of_user.size(); ++i) {
                    if (items_of_user[i] >= n_items) {
                        throw DataError("item index out of range in domain " + std::string(domain_tag(d)));
                    }
                    if (i > 0 && items_of_user[i] <= items_of_user[i - 1]) {
                        throw DataError("duplicate or unsorted item in a split of user " + users[u]);
                    }
                }
                seen.insert(seen.end(), items_of_user.begin(), items_of_user.end());
            }
            std::sort(seen.begin(), seen.end());
            if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
                throw DataError("splits overlap for user " + users[u] + " in domain " + domain_tag(d));
            }
        }
    }
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
    const std::array<double, 3> r = {ratios.train, ratios.valid, ratios.test};
    const double total = r[0] + r[1] + r[2];
    if (std::any_of(r.begin(), r.end(), [](double v) { return !(v >= 0.0); }) || std::abs(total - 1.0) > 1e-9) {
        throw ParameterError("split ratios must be nonnegative and sum to 1");
    }
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        const double quota = static_cast<double>(n) * r[j];
        const double fl = std::floor(quota + 1e-9);
        sizes[j] = static_cast<std::size_t>(fl);
        frac[j] = std::max(0.0, quota - fl);
        assigned += sizes[j];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
        ++sizes[order[i % 3]];
    }
    if (n >= 1 && sizes[0] == 0) {
        const std::size_t donor = sizes[1] >= sizes[2] ? 1 : 2;
        --sizes[donor];
        ++sizes[0];
    }
    return sizes;
}

namespace {

struct Binarized {
    std::map<std::string, std::set<std::string>> by_user;
    std::set<std::string> items;
};

Binarized binarize(const std::vector<InteractionRecord>& records, double threshold) {
    Binarized b;
    for (const auto& rec : records) {
        if (rec.rating >= threshold) {
            b.by_user[rec.user_id].insert(rec.item_id);
            b.items.insert(rec.item_id);
        }
    }
    return b;
}

} // namespace

InteractionDataset build_dataset(const std::vector<InteractionRecord>& records_s,
                                 const std::vector<InteractionRecord>& records_t,
                                 double threshold, const SplitRatios& ratios, Rng& rng) {
    split_sizes(0, ratios); // validates the ratios up front
    const std::array<Binarized, 2> bin = {binarize(records_s, threshold), binarize(records_t, threshold)};
    for (Domain d : kDomains) {
        if (bin[index_of(d)].items.empty()) {
            throw DataError(std::string("domain ") + domain_tag(d) + " has no interactions at threshold " +
                            std::to_string(threshold));
        }
    }

    InteractionDataset ds;
    ds.binarization_threshold = threshold;
    ds.seed = rng.seed();
    std::set<std::string> user_set;
    for (const auto& b : bin) {
        for (const auto& [u, _] : b.by_user) {
            user_set.insert(u);
        }
    }
    ds.users.assign(user_set.begin(), user_set.end());

    for (Domain d : kDomains) {
        const auto& b = bin[index_of(d)];
        auto& item_ids = ds.items[index_of(d)];
        item_ids.assign(b.items.begin(), b.items.end());
        std::unordered_map<std::string_view, std::uint32_t> item_index;
        for (std::size_t i = 0; i < item_ids.size(); ++i) {
            item_index.emplace(item_ids[i], static_cast<std::uint32_t>(i));
        }
        auto& splits = ds.interactions[index_of(d)];
        for (auto& s : splits) {
            s.assign(ds.users.size(), {});
        }
        for (std::size_t u = 0; u < ds.users.size(); ++u) {
            const auto it = b.by_user.find(ds.users[u]);
            if (it == b.by_user.end()) {
                continue;
            }
            std::vector<std::uint32_t> items_of_user;
            for (const auto& item : it->second) {
                items_of_user.push_back(item_index.at(item));
            }
            std::sort(items_of_user.begin(), items_of_user.end());
            rng.shuffle(std::span<std::uint32_t>(items_of_user));
            const auto sizes = split_sizes(items_of_user.size(), ratios);
            auto cursor = items_of_user.begin();
            for (std::size_t s = 0; s < 3; ++s) {
                auto& dst = splits[s][u];
                dst.assign(cursor, cursor + static_cast<std::ptrdiff_t>(sizes[s]));
                std::sort(dst.begin(), dst.end());
                cursor += static_cast<std::ptrdiff_t>(sizes[s]);
            }
        }
    }
    return ds;
}

Matrix densify(const InteractionDataset& dataset, Domain domain, Split split) {
    Matrix m(dataset.num_users(), dataset.num_items(domain));
    const auto& per_user = dataset.split_items(domain, split);
    for (std::size_t u = 0; u < per_user.size(); ++u) {
        for (std::uint32_t item : per_user[u]) {
            m(u, item) = 1.0;
        }
    }
    return m;
}

Matrix densify_concat_rows(const InteractionDataset& dataset, Split split, std::span<const std::size_t> users) {
    const std::size_t offset = dataset.num_items(Domain::source);
    Matrix m(users.size(), dataset.total_items());
    for (std::size_t r = 0; r < users.size(); ++r) {
        for (std::uint32_t item : dataset.split_items(Domain::source, split)[users[r]]) {
            m(r, item) = 1.0;
        }
        for (std::uint32_t item : dataset.split_items(Domain::target, split)[users[r]]) {
            m(r, offset + item) = 1.0;
        }
    }
    return m;
}

Matrix densify_concat(const InteractionDataset& dataset, Split split) {
    std::vector<std::size_t> all(dataset.num_users());
    for (std::size_t u = 0; u < all.size(); ++u) {
        all[u] = u;
    }
    return densify_concat_rows(dataset, split, all);
}

// ---- synthetic -----------------------------------------------------------

void SyntheticSpec::validate() const {
    if (n_users < 2) {
        throw ParameterError("synthetic spec needs at least 2 users");
    }
    if (k_true == 0) {
        throw ParameterError("synthetic spec needs k_true >= 1");
    }
    if (!(overlap >= 0.0 && overlap <= 1.0)) {
        throw ParameterError("synthetic overlap must lie in [0, 1]");
    }
    if (!(noise >= 0.0 && noise <= 1.0)) {
        throw ParameterError("synthetic noise must lie in [0, 1]");
    }
    for (std::size_t n_items : {n_items_s, n_items_t}) {
        const std::size_t min_block = n_items / k_true;
        if (min_block == 0) {
            throw ParameterError("infeasible synthetic spec: " + std::to_string(n_items) + " items cannot fill " +
                                 std::to_string(k_true) + " blocks");
        }
        if (per_user == 0 || per_user > min_block) {
            throw ParameterError("infeasible synthetic spec: per-user count " + std::to_string(per_user) +
                                 " must lie in [1, " + std::to_string(min_block) + "] (smallest block)");
        }
    }
}

namespace {

std::string padded_id(char prefix, std::size_t value, std::size_t count) {
    const std::size_t width = std::to_string(count > 0 ? count - 1 : 0).size();
    std::string digits = std::to_string(value);
    return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

} // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    SyntheticData out;
    const std::size_t n = spec.n_users;
    out.user_ids.resize(n);
    out.planted.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        out.user_ids[u] = padded_id('u', u, n);
        out.planted[u] = rng.uniform_index(spec.k_true);
    }

    // membership[u][d]
    std::vector<std::array<bool, 2>> member(n, {false, false});
    std::vector<std::size_t> order(n);
    for (std::size_t u = 0; u < n; ++u) {
        order[u] = u;
    }
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_both = static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(n)));
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t u = order[pos];
        if (pos < n_both) {
            member[u] = {true, true};
        } else {
            const bool source = (pos - n_both) % 2 == 0;
            member[u] = {source, !source};
        }
    }

    const std::array<std::size_t, 2> n_items = {spec.n_items_s, spec.n_items_t};
    const std::array<char, 2> prefix = {'s', 't'};
    std::array<std::vector<InteractionRecord>*, 2> sinks = {&out.records_s, &out.records_t};
    for (std::size_t d = 0; d < 2; ++d) {
        for (std::size_t u = 0; u < n; ++u) {
            if (!member[u][d]) {
                continue;
            }
            std::vector<std::size_t> in_block;
            std::vector<std::size_t> off_block;
            for (std::size_t i = 0; i < n_items[d]; ++i) {
                (SyntheticData::block_of(i, n_items[d], spec.k_true) == out.planted[u] ? in_block : off_block).push_back(i);
            }
            std::vector<std::size_t> chosen;
            for (std::size_t draw = 0; draw < spec.per_user; ++draw) {
                const bool want_in = rng.uniform() >= spec.noise;
                auto* pool = want_in ? &in_block : &off_block;
                if (pool->empty()) {
                    pool = want_in ? &off_block : &in_block;
                }
                const std::size_t pick = rng.uniform_index(pool->size());
                chosen.push_back((*pool)[pick]);
                pool->erase(pool->begin() + static_cast<std::ptrdiff_t>(pick));
            }
            std::sort(chosen.begin(), chosen.end());
            for (std::size_t item : chosen) {
                sinks[d]->push_back({out.user_ids[u], padded_id(prefix[d], item, n_items[d]), 1.0, std::nullopt});
            }
        }
    }
    out.dataset = build_dataset(out.records_s, out.records_t, 1.0, SplitRatios{}, rng);
    return out;
}

std::size_t synthetic_item_index(const std::string& item_id) {
    std::size_t value = 0;
    if (item_id.size() < 2 || !parse_number(std::string_view(item_id).substr(1), value)) {
        throw ParseError("not a synthetic item id: " + item_id);
    }
    return value;
}

// ---- persistence ---------------------------------------------------------

namespace {

void write_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    for (const auto& l : lines) {
        out << l << '\n';
    }
    if (!out) {
        throw IoError("error while writing " + path.string());
    }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::string split_file_name(Domain d, Split s) {
    return std::string(domain_tag(d)) + "_" + split_name(s) + ".tsv";
}

} // namespace

void save_splits(const InteractionDataset& dataset, const std::filesystem::path& splits_dir) {
    std::filesystem::create_directories(splits_dir);
    write_lines(dataset.users, splits_dir / "users.txt");
    write_lines(dataset.items[0], splits_dir / "items_s.txt");
    write_lines(dataset.items[1], splits_dir / "items_t.txt");
    for (Domain d : kDomains) {
        for (Split s : kSplits) {
            std::vector<std::string> lines;
            const auto& per_user = dataset.split_items(d, s);
            for (std::size_t u = 0; u < per_user.size(); ++u) {
                for (std::uint32_t item : per_user[u]) {
                    lines.push_back(std::to_string(u) + "\t" + std::to_string(item));
                }
            }
            write_lines(lines, splits_dir / split_file_name(d, s));
        }
    }
}

InteractionDataset load_splits(const std::filesystem::path& splits_dir) {
    InteractionDataset ds;
    ds.users = read_lines(splits_dir / "users.txt");
    ds.items[0] = read_lines(splits_dir / "items_s.txt");
    ds.items[1] = read_lines(splits_dir / "items_t.txt");
    for (Domain d : kDomains) {
        for (Split s : kSplits) {
            auto& per_user = ds.interactions[index_of(d)][index_of(s)];
            per_user.assign(ds.users.size(), {});
            const auto path = splits_dir / split_file_name(d, s);
            for (const auto& line : read_lines(path)) {
                const auto fields = split_fields(line, '\t');
                std::size_t u = 0;
                std::uint32_t item = 0;
                if (fields.size() != 2 || !parse_number(fields[0], u) || !parse_number(fields[1], item)) {
                    throw ParseError(path.string() + ": malformed line '" + line + "'");
                }
                if (u >= ds.users.size()) {
                    throw DataError(path.string() + ": user index " + std::to_string(u) + " out of range");
                }
                per_user[u].push_back(item);
            }
            for (auto& items_of_user : per_user) {
                std::sort(items_of_user.begin(), items_of_user.end());
            }
        }
    }
    ds.validate();
    return ds;
}

void write_records(const std::vector<InteractionRecord>& records, const std::filesystem::path& path) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const auto& r : records) {
        std::ostringstream os;
        os << r.user_id << '\t' << r.item_id << '\t' << r.rating;
        if (r.timestamp) {
            os << '\t' << *r.timestamp;
        }
        lines.push_back(os.str());
    }
    write_lines(lines, path);
}

} // namespace mdap
