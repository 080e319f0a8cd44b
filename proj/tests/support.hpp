// SPDX-License-Identifier: Apache-2.0
//
// Fixtures and independent reference implementations shared by the unit
// tests and the acceptance runner.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"
#include "core/numerics.hpp"
#include "core/training.hpp"

namespace mdap::testing {

// ---- files -------------------------------------------------------------------

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        Rng rng(std::hash<std::string>{}(tag) ^ ++counter ^ reinterpret_cast<std::uintptr_t>(this));
        path_ = std::filesystem::temp_directory_path() /
                ("mdap-test-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007ULL));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---- matrices ----------------------------------------------------------------

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = lo + (hi - lo) * rng.uniform();
    }
    return m;
}

/// Binary rows with the given density; every row has at least one 1 in each
/// column range [0, split) and [split, cols) when split is in (0, cols).
inline Matrix random_binary(Rng& rng, std::size_t rows, std::size_t cols, double density, std::size_t split = 0) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = rng.uniform() < density ? 1.0 : 0.0;
        }
        if (split > 0 && split < cols) {
            m(r, rng.uniform_index(split)) = 1.0;
            m(r, split + rng.uniform_index(cols - split)) = 1.0;
        }
    }
    return m;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) {
                s += a(i, p) * b(p, j);
            }
            out(i, j) = s;
        }
    }
    return out;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
    }
    return a.same_shape(b) ? worst : std::numeric_limits<double>::infinity();
}

// ---- toy model -----------------------------------------------------------------

struct Toy {
    ModelConfig config;
    ModelParams params;
    Matrix batch;
    NoiseSample noise;
    Matrix target_s;
    Matrix target_t;
};

/// 5 users, 4 + 3 items, k = 2, l = 3, hidden = 4, with frozen noise. Biases
/// and the gate table are moved off their zero initialization so that every
/// parameter sits at a generic point.
inline Toy make_toy(std::uint64_t seed, Ablation ablation = Ablation::full) {
    Toy toy;
    toy.config.views = 2;
    toy.config.embed_dim = 3;
    toy.config.hidden = 4;
    toy.config.tau = 0.5;
    toy.config.keep_prob = 0.8;
    toy.config.lambda = 0.5;
    toy.config.ablation = ablation;
    Rng rng(seed);
    toy.params = ModelParams::initialize(toy.config, 4, 3, rng);
    for (Matrix* m : {&toy.params.enc_b1, &toy.params.enc_b2, &toy.params.dec_b1, &toy.params.dec_b2,
                      &toy.params.gate_table}) {
        *m = random_matrix(rng, m->rows(), m->cols(), -0.5, 0.5);
    }
    toy.batch = random_binary(rng, 5, 7, 0.4, 4);
    toy.noise = draw_noise(toy.config, 5, 7, rng);
    toy.target_s = domain_slice(toy.batch, 4, Domain::source);
    toy.target_t = domain_slice(toy.batch, 4, Domain::target);
    return toy;
}

inline double toy_loss(const Toy& toy, const ModelParams& params) {
    const ForwardTrace t = forward_with_noise(params, toy.config, toy.batch, toy.noise, true);
    return loss(t, toy.target_s, toy.target_t, toy.config.lambda).total;
}

/// Central finite differences of the toy loss for every parameter entry.
inline GradientSet numeric_gradient(const Toy& toy, double h) {
    GradientSet g = ModelParams::zeros_like(toy.params);
    ModelParams p = toy.params;
    auto pf = p.fields();
    auto gf = g.fields();
    for (std::size_t f = 0; f < kParamFieldCount; ++f) {
        auto values = pf[f]->values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = toy_loss(toy, p);
            values[i] = saved - h;
            const double down = toy_loss(toy, p);
            values[i] = saved;
            gf[f]->values()[i] = (up - down) / (2.0 * h);
        }
    }
    return g;
}

inline constexpr double kRelErrorFloor = 1e-6;

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = kRelErrorFloor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic.values()[i];
        const double n = numeric.values()[i];
        worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
    return worst;
}

// ---- metric oracles -------------------------------------------------------------

/// Full stable sort of every non-excluded item by descending score.
inline std::vector<std::uint32_t> full_sort_ranking(const std::vector<double>& scores,
                                                    const std::set<std::uint32_t>& excluded) {
    std::vector<std::uint32_t> items;
    for (std::uint32_t i = 0; i < scores.size(); ++i) {
        if (!excluded.count(i)) {
            items.push_back(i);
        }
    }
    std::stable_sort(items.begin(), items.end(), [&](std::uint32_t a, std::uint32_t b) { return scores[a] > scores[b]; });
    return items;
}

inline double oracle_recall(const std::vector<std::uint32_t>& ranking, const std::set<std::uint32_t>& truth,
                            std::size_t k) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < std::min(k, ranking.size()); ++p) {
        hits += truth.count(ranking[p]);
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double oracle_ndcg(const std::vector<std::uint32_t>& ranking, const std::set<std::uint32_t>& truth,
                          std::size_t k) {
    double dcg = 0.0;
    for (std::size_t p = 0; p < std::min(k, ranking.size()); ++p) {
        if (truth.count(ranking[p])) {
            dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t p = 0; p < std::min(k, truth.size()); ++p) {
        idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
    return dcg / idcg;
}

// ---- split oracle ----------------------------------------------------------------

/// Exhaustive search over (train, valid, test) with train >= 1: the triple
/// closest to the exact ratios in squared error, ties to the lexicographically
/// larger triple.
inline std::array<std::size_t, 3> enumerate_split(std::size_t n, const SplitRatios& r) {
    std::array<std::size_t, 3> best{n, 0, 0};
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t a = n == 0 ? 0 : 1; a <= n; ++a) {
        for (std::size_t b = 0; a + b <= n; ++b) {
            const std::size_t c = n - a - b;
            const double ea = a - r.train * n, eb = b - r.valid * n, ec = c - r.test * n;
            const double err = ea * ea + eb * eb + ec * ec;
            const std::array<std::size_t, 3> cand{a, b, c};
            if (err < best_err - 1e-12 || (std::abs(err - best_err) <= 1e-12 && cand > best)) {
                best_err = err;
                best = cand;
            }
        }
    }
    return best;
}

// ---- synthetic fixture -------------------------------------------------------------

inline SyntheticSpec fixture_spec() {
    SyntheticSpec s;
    s.n_users = 200;
    s.n_items_s = 40;
    s.n_items_t = 30;
    s.k_true = 4;
    s.overlap = 0.5;
    s.noise = 0.05;
    return s;
}

inline InteractionDataset fixture_dataset(std::uint64_t seed = 7) {
    Rng rng(seed);
    return generate_synthetic(fixture_spec(), rng).dataset;
}

/// Per-user expected Recall@k under a uniformly random ranking of E eligible
/// items with t relevant ones: min(k, E) / E.
inline double random_recall_expectation(const InteractionDataset& ds, Domain d, Split split, std::size_t k) {
    double sum = 0.0;
    std::size_t users = 0;
    const std::size_t n = ds.num_items(d);
    for (std::size_t u = 0; u < ds.num_users(); ++u) {
        if (ds.split_items(d, split)[u].empty()) {
            continue;
        }
        const double eligible = static_cast<double>(n - ds.split_items(d, Split::train)[u].size());
        sum += std::min(static_cast<double>(k), eligible) / eligible;
        ++users;
    }
    return sum / static_cast<double>(users);
}

} // namespace mdap::testing
