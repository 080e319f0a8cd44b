// SPDX-License-Identifier: Apache-2.0
//
// Reconstruction objective with the gate-overlap penalty, reverse-mode
// gradients through a ForwardTrace, and the Adam epoch loop with early
// stopping on mean validation NDCG.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"
#include "core/numerics.hpp"

namespace mdap {

struct LossBreakdown {
    double total = 0.0;
    double rec_s = 0.0;
    double rec_t = 0.0;
    double orth = 0.0;
};

/// ||R_s - R^_s||^2 + ||R_t - R^_t||^2 + lambda * (w_s . w_t), summed over
/// every entry of the batch rows.
LossBreakdown loss(const ForwardTrace& trace, const Matrix& target_s, const Matrix& target_t, double lambda);

/// One gradient per ModelParams field, same shapes.
using GradientSet = ModelParams;

/// Exact gradient of loss() with the trace's dropout mask and Gumbel noise
/// held constant.
GradientSet backward(const ForwardTrace& trace, const Matrix& target_s, const Matrix& target_t,
                     const ModelParams& params, const ModelConfig& config);

struct TrainConfig {
    std::size_t epochs_max = 1000;
    std::size_t patience = 20;
    std::size_t batch_users = 4096;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    std::size_t eval_k = 20;
    ModelConfig model;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    LossBreakdown loss;
    std::array<double, 2> val_recall{};
    std::array<double, 2> val_ndcg{};
    std::array<std::vector<double>, 2> gates;

    /// mean validation NDCG of the two domains
    double criterion() const noexcept { return 0.5 * (val_ndcg[0] + val_ndcg[1]); }
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;

    /// One JSON object per epoch, fixed key order.
    std::string to_jsonl() const;
    static TrainLog from_jsonl(const std::string& text);
};

/// Validation hook, called once per epoch with the current parameters.
using Evaluator = std::function<std::array<DomainMetrics, 2>(const ModelParams&, const ModelConfig&)>;

struct TrainResult {
    ModelParams params; // parameters of the best epoch
    TrainLog log;
};

/// Throws TrainingError when the epoch loss is not finite. Without an
/// evaluator the validation split of `dataset` is ranked at config.eval_k.
TrainResult train(const InteractionDataset& dataset, const TrainConfig& config, const Evaluator& evaluator = {});

struct AblationRow {
    Ablation variant = Ablation::full;
    std::array<DomainMetrics, 2> test{};
    TrainLog log;
};

struct AblationReport {
    std::uint64_t seed = 0;
    std::size_t cutoff = 20;
    std::vector<AblationRow> rows;

    std::string to_json() const;
    /// Parses to_json() output; training logs are not part of the document.
    static AblationReport from_json(const std::string& text);
    std::string to_text() const;
};

/// Trains every variant with the same seed and ranks the test split.
AblationReport run_ablation(const InteractionDataset& dataset, const TrainConfig& config);

} // namespace mdap
