// SPDX-License-Identifier: Apache-2.0

#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/error.hpp"

namespace mdap {

std::vector<std::uint32_t> top_k(std::span<const double> scores, std::span<const std::uint32_t> excluded, std::size_t k) {
    if (k == 0) {
        throw ParameterError("top_k cutoff must be at least 1");
    }
    std::vector<std::uint32_t> candidates;
    candidates.reserve(scores.size());
    std::size_t next_excluded = 0;
    for (std::uint32_t i = 0; i < scores.size(); ++i) {
        while (next_excluded < excluded.size() && excluded[next_excluded] < i) {
            ++next_excluded;
        }
        if (next_excluded < excluded.size() && excluded[next_excluded] == i) {
            continue;
        }
        candidates.push_back(i);
    }
    const auto better = [&](std::uint32_t a, std::uint32_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    const std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                      better);
    candidates.resize(take);
    return candidates;
}

namespace {

bool contains(std::span<const std::uint32_t> sorted, std::uint32_t v) {
    return std::binary_search(sorted.begin(), sorted.end(), v);
}

} // namespace

double recall_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k) {
    if (truth.empty()) {
        throw ParameterError("recall_at_k needs a nonempty truth set");
    }
    std::size_t hits = 0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t p = 0; p < n; ++p) {
        hits += contains(truth, ranked[p]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double ndcg_at_k(std::span<const std::uint32_t> ranked, std::span<const std::uint32_t> truth, std::size_t k) {
    if (truth.empty()) {
        throw ParameterError("ndcg_at_k needs a nonempty truth set");
    }
    double dcg = 0.0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t p = 0; p < n; ++p) {
        if (contains(truth, ranked[p])) {
            dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, truth.size());
    for (std::size_t p = 0; p < ideal; ++p) {
        idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
    return dcg / idcg;
}

std::array<DomainMetrics, 2> evaluate_scores(const InteractionDataset& dataset, Split split, std::size_t k,
                                             std::size_t batch_users, const ScoreFn& score) {
    if (batch_users == 0) {
        throw ParameterError("evaluation batch size must be at least 1");
    }
    std::array<DomainMetrics, 2> out{};
    std::array<double, 2> recall_sum{};
    std::array<double, 2> ndcg_sum{};
    std::vector<std::size_t> users;
    std::array<Matrix, 2> scores;
    for (std::size_t start = 0; start < dataset.num_users(); start += batch_users) {
        const std::size_t end = std::min(dataset.num_users(), start + batch_users);
        users.clear();
        for (std::size_t u = start; u < end; ++u) {
            users.push_back(u);
        }
        score(users, scores);
        for (Domain d : kDomains) {
            const std::size_t di = index_of(d);
            if (scores[di].rows() != users.size() || scores[di].cols() != dataset.num_items(d)) {
                throw ShapeError(std::string("score matrix for domain ") + domain_tag(d) + " has shape " +
                                 shape_string(scores[di]));
            }
            const auto& truth = dataset.split_items(d, split);
            const auto& train = dataset.split_items(d, Split::train);
            for (std::size_t r = 0; r < users.size(); ++r) {
                const std::size_t u = users[r];
                if (truth[u].empty()) {
                    continue;
                }
                const auto ranked = top_k(scores[di].row(r), train[u], k);
                recall_sum[di] += recall_at_k(ranked, truth[u], k);
                ndcg_sum[di] += ndcg_at_k(ranked, truth[u], k);
                ++out[di].n_users;
            }
        }
    }
    for (std::size_t di = 0; di < 2; ++di) {
        if (out[di].n_users > 0) {
            out[di].recall = recall_sum[di] / static_cast<double>(out[di].n_users);
            out[di].ndcg = ndcg_sum[di] / static_cast<double>(out[di].n_users);
        }
    }
    return out;
}

std::array<Matrix, 2> predict_scores(const ModelParams& params, const ModelConfig& config,
                                     const InteractionDataset& dataset, std::span<const std::size_t> users) {
    const Matrix rows = densify_concat_rows(dataset, Split::train, users);
    Rng unused(0);
    ForwardTrace trace = forward(params, config, rows, unused, false);
    return {std::move(trace.recon[0]), std::move(trace.recon[1])};
}

MetricsReport evaluate(const ModelParams& params, const ModelConfig& config, const InteractionDataset& dataset,
                       Split split, std::size_t k, std::size_t batch_users) {
    MetricsReport report;
    report.split = split;
    report.cutoff = k;
    report.seed = dataset.seed;
    report.domains = evaluate_scores(dataset, split, k, batch_users,
                                     [&](std::span<const std::size_t> users, std::array<Matrix, 2>& scores) {
                                         scores = predict_scores(params, config, dataset, users);
                                     });
    return report;
}

// ---- report serialization --------------------------------------------------

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["split"] = split_name(split);
    j["cutoff"] = cutoff;
    for (Domain d : kDomains) {
        const auto& m = domains[index_of(d)];
        j["domains"][domain_tag(d)] = {{"recall", m.recall}, {"ndcg", m.ndcg}, {"n_users_evaluated", m.n_users}};
    }
    j["seed"] = seed;
    j["checkpoint_id"] = checkpoint_id;
    j["config_hash"] = config_hash;
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    MetricsReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.split = parse_split(j.at("split").get<std::string>());
        r.cutoff = j.at("cutoff").get<std::size_t>();
        for (Domain d : kDomains) {
            const auto& m = j.at("domains").at(domain_tag(d));
            auto& dst = r.domains[index_of(d)];
            dst.recall = m.at("recall").get<double>();
            dst.ndcg = m.at("ndcg").get<double>();
            dst.n_users = m.at("n_users_evaluated").get<std::size_t>();
        }
        r.seed = j.at("seed").get<std::uint64_t>();
        r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
        r.config_hash = j.value("config_hash", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed metrics report: ") + e.what());
    }
    return r;
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "split=" << split_name(split) << " cutoff=" << cutoff << " seed=" << seed << "\n";
    os << std::left << std::setw(8) << "domain" << std::right << std::setw(12) << "recall" << std::setw(12) << "ndcg"
       << std::setw(8) << "users" << "\n";
    os << std::fixed << std::setprecision(6);
    for (Domain d : kDomains) {
        const auto& m = domains[index_of(d)];
        os << std::left << std::setw(8) << domain_tag(d) << std::right << std::setw(12) << m.recall << std::setw(12)
           << m.ndcg << std::setw(8) << m.n_users << "\n";
    }
    return os.str();
}

} // namespace mdap
