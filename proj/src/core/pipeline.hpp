// SPDX-License-Identifier: Apache-2.0
//
// Operator commands: prepare, synth, train, evaluate, ablate, grid. Every
// command validates its whole configuration first, computes its outputs in
// memory and only then writes them, so a failing command leaves nothing
// behind.
//
// Output directory layout:
//   manifest.json      dataset provenance (prepare)
//   splits/            index files and per-split pair lists (prepare)
//   checkpoints/       best.ckpt (train)
//   logs/              training logs and persisted run configs
//   reports/           metrics, ablation and grid reports (.json + .txt)

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "core/data.hpp"
#include "core/eval.hpp"
#include "core/model.hpp"
#include "core/training.hpp"

namespace mdap {

struct GridRanges {
    std::vector<double> dropout = {0.5, 0.7, 0.9};
    std::vector<double> tau = {0.1, 0.2, 0.5};
    std::vector<std::size_t> k = {4, 8, 16};
    std::vector<double> lambda = {0.1, 0.5, 1.0};
    bool full = false;
};

struct RunConfig {
    std::string domain_s;
    std::string domain_t;
    std::string out;
    std::string data; // prepared dataset directory; defaults to out
    std::string checkpoint;
    std::string split = "test";

    std::uint64_t seed = 42;
    double threshold = 1.0;
    std::size_t min_interactions = 5;
    bool strict = false;

    std::size_t k = 8;
    double tau = 0.2;
    double lambda = 0.5;
    double dropout = 0.5;
    std::size_t embed_dim = 64;
    std::size_t hidden = 256;
    std::string ablation = "full";

    std::size_t epochs = 1000;
    std::size_t patience = 20;
    std::size_t batch_users = 4096;
    double lr = 1e-3;
    std::size_t cutoff = 20;

    SyntheticSpec synth;
    GridRanges grid;

    /// Sets one option by its flag name, with or without the leading "--".
    /// Throws ParameterError on unknown keys or unparsable values.
    void set(std::string_view key, std::string_view value);

    /// Dataset presets: epinions, douban, amazon.
    void apply_preset(std::string_view name);

    /// Flat key=value lines; '#' starts a comment. A preset key is applied
    /// before the other keys of the file.
    void load_file(const std::filesystem::path& path);

    /// Range checks on every option.
    void validate() const;

    /// Sorted key=value lines covering every option.
    std::string canonical() const;
    /// FNV-1a 64 of canonical(), hex.
    std::string hash() const;

    std::filesystem::path data_dir() const { return data.empty() ? out : data; }
    ModelConfig model_config() const;
    TrainConfig train_config() const;
};

/// Every key accepted by RunConfig::set.
const std::vector<std::string>& run_config_keys();

struct PreparedDataset {
    InteractionDataset dataset;
    std::string manifest_json;
};

PreparedDataset load_prepared(const std::filesystem::path& dir);

/// Returns a short human-readable summary of what was produced.
std::string run_prepare(const RunConfig& config);
std::string run_synth(const RunConfig& config);
std::string run_train(const RunConfig& config);
std::string run_evaluate(const RunConfig& config);
std::string run_ablate(const RunConfig& config);
std::string run_grid(const RunConfig& config);

/// Dispatches by command name.
std::string run_command(std::string_view command, const RunConfig& config);

struct GridPoint {
    double dropout = 0.0;
    double tau = 0.0;
    std::size_t k = 0;
    double lambda = 0.0;

    friend auto operator<=>(const GridPoint&, const GridPoint&) = default;
};

/// Order in which the staged search visits configurations. `evaluate`
/// returns the selection score of a point; repeated points are not
/// re-evaluated. Returns the distinct points in evaluation order.
std::vector<GridPoint> staged_grid_search(const GridRanges& ranges, const GridPoint& base,
                                          const std::function<double(const GridPoint&)>& evaluate);

} // namespace mdap
