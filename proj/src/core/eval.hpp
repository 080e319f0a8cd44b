// SPDX-License-Identifier: Apache-2.0
//
// Full-ranking top-K evaluation: every non-training item of a domain is a
// candidate, relevance is binary.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/model.hpp"
#include "core/numerics.hpp"

namespace mdap {

/// Highest-scoring items not in `excluded` (sorted ascending), by descending
/// score with ties to the smaller index. Shorter than k when fewer items are
/// eligible.
std::vector<std::uint32_t> top_k(std::span<const double> scores, std::span<const std::uint32_t> excluded, std::size_t k);

/// |ranked[:k] & truth| / |truth|. `truth` must be sorted and nonempty.
double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k);

/// Binary-gain NDCG with IDCG over min(k, |truth|) positions.
double ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k);

struct DomainMetrics {
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t n_users = 0;

    friend bool operator==(const DomainMetrics&, const DomainMetrics&) = default;
};

struct MetricsReport {
    Split split = Split::test;
    std::size_t cutoff = 20;
    std::array<DomainMetrics, 2> domains;
    std::uint64_t seed = 0;
    std::string checkpoint_id;
    std::string config_hash;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    std::string to_text() const;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Fills one score matrix per domain (B x N_s, B x N_t) for the given users.
using ScoreFn = std::function<void(std::span<const std::size_t> users, std::array<Matrix, 2>& scores)>;

/// Per-domain mean Recall@k / NDCG@k over users with a nonempty `split` set
/// in that domain, training items masked. Users are scored in batches of
/// `batch_users` and averaged in index order.
std::array<DomainMetrics, 2> evaluate_scores(const InteractionDataset& dataset, Split split, std::size_t k,
                                             std::size_t batch_users, const ScoreFn& score);

/// Evaluation-mode reconstructions of the given users from their training rows.
std::array<Matrix, 2> predict_scores(const ModelParams& params, const ModelConfig& config,
                                     const InteractionDataset& dataset, std::span<const std::size_t> users);

MetricsReport evaluate(const ModelParams& params, const ModelConfig& config, const InteractionDataset& dataset,
                       Split split, std::size_t k, std::size_t batch_users = 4096);

} // namespace mdap
