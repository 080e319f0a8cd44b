// SPDX-License-Identifier: Apache-2.0
//
// Interaction ingestion, k-core filtering, user alignment across the two
// domains, per-user splitting and the planted-view synthetic generator.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/numerics.hpp"

namespace mdap {

enum class Domain : std::size_t { source = 0, target = 1 };
enum class Split : std::size_t { train = 0, valid = 1, test = 2 };

inline constexpr std::array<Domain, 2> kDomains = {Domain::source, Domain::target};
inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::valid, Split::test};

constexpr std::size_t index_of(Domain d) noexcept { return static_cast<std::size_t>(d); }
constexpr std::size_t index_of(Split s) noexcept { return static_cast<std::size_t>(s); }

/// "s" / "t"
const char* domain_tag(Domain d) noexcept;
/// "train" / "valid" / "test"
const char* split_name(Split s) noexcept;
Split parse_split(const std::string& name);

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    double rating = 1.0;
    std::optional<std::int64_t> timestamp;

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

struct LoadOptions {
    char delimiter = '\t';
    bool strict = false;
};

struct LoadWarning {
    std::size_t line = 0;
    std::string reason;
};

struct LoadResult {
    std::vector<InteractionRecord> records;
    std::vector<LoadWarning> warnings;
};

/// Reads `user <d> item <d> rating [<d> timestamp]` lines. Blank lines and
/// lines starting with '#' are skipped. Malformed lines become warnings, or a
/// ParseError listing the first ten when options.strict is set.
LoadResult load_domain(const std::filesystem::path& path, const LoadOptions& options = {});

/// Iteratively drops users and items with fewer than k distinct partners
/// until nothing changes. Record order is preserved.
std::vector<InteractionRecord> k_core_filter(const std::vector<InteractionRecord>& records, std::size_t k);

/// Per-user item lists for one (domain, split). Outer index is the user.
using UserItems = std::vector<std::vector<std::uint32_t>>;

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

struct InteractionDataset {
    std::vector<std::string> users;
    std::array<std::vector<std::string>, 2> items;
    /// interactions[domain][split][user] -> sorted item indices
    std::array<std::array<UserItems, 3>, 2> interactions;
    double binarization_threshold = 1.0;
    std::size_t k_core = 1;
    std::uint64_t seed = 0;

    std::size_t num_users() const noexcept { return users.size(); }
    std::size_t num_items(Domain d) const noexcept { return items[index_of(d)].size(); }
    std::size_t total_items() const noexcept { return items[0].size() + items[1].size(); }

    const UserItems& split_items(Domain d, Split s) const { return interactions[index_of(d)][index_of(s)]; }
    std::size_t split_size(Domain d, Split s) const;

    /// Throws DataError if any structural invariant is violated.
    void validate() const;
};

/// Largest-remainder apportionment of n interactions over the three ratios,
/// remainders to the largest fractional parts (ties to the earlier split),
/// then at least one training interaction whenever n >= 1.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Binarizes (rating >= threshold), unions users of both domains into one
/// lexicographic index and splits every user's interactions per domain.
InteractionDataset build_dataset(const std::vector<InteractionRecord>& records_s,
                                 const std::vector<InteractionRecord>& records_t,
                                 double threshold, const SplitRatios& ratios, Rng& rng);

/// |users| x |items_d| binary matrix of one split. Users absent from the
/// domain have all-zero rows.
Matrix densify(const InteractionDataset& dataset, Domain domain, Split split);

/// |users| x (|items_s| + |items_t|) binary matrix; source columns first.
Matrix densify_concat(const InteractionDataset& dataset, Split split);

/// Rows of densify_concat for the listed users only.
Matrix densify_concat_rows(const InteractionDataset& dataset, Split split, std::span<const std::size_t> users);

// ---- synthetic ---------------------------------------------------------

struct SyntheticSpec {
    std::size_t n_users = 200;
    std::size_t n_items_s = 40;
    std::size_t n_items_t = 30;
    std::size_t k_true = 4;
    double overlap = 0.5;
    double noise = 0.05;
    /// interactions drawn per user per domain the user belongs to
    std::size_t per_user = 7;

    void validate() const;
};

struct SyntheticData {
    std::vector<InteractionRecord> records_s;
    std::vector<InteractionRecord> records_t;
    std::vector<std::string> user_ids;
    /// planted view of user_ids[i]
    std::vector<std::size_t> planted;
    InteractionDataset dataset;

    /// Planted block of an item index within a domain of `n_items` items.
    static std::size_t block_of(std::size_t item, std::size_t n_items, std::size_t k_true) noexcept {
        return item * k_true / n_items;
    }
};

/// Users get a planted view; items of each domain are cut into k_true
/// contiguous blocks. Each draw lands in the user's block with probability
/// 1 - noise and on a uniformly chosen off-block item otherwise. The dataset
/// field is built with threshold 1 and the default 80/10/10 split.
SyntheticData generate_synthetic(const SyntheticSpec& spec, Rng& rng);

/// Item index of a synthetic item id such as "s07".
std::size_t synthetic_item_index(const std::string& item_id);

// ---- persistence -------------------------------------------------------

/// Writes splits/{users,items_s,items_t}.txt and splits/<d>_<split>.tsv.
void save_splits(const InteractionDataset& dataset, const std::filesystem::path& splits_dir);
InteractionDataset load_splits(const std::filesystem::path& splits_dir);

void write_records(const std::vector<InteractionRecord>& records, const std::filesystem::path& path);

} // namespace mdap
