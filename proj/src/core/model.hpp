// SPDX-License-Identifier: Apache-2.0
//
// Multi-view encoder with Gumbel-Softmax view assignment and a
// domain-gated shared decoder.
//
// Shapes, with B users in a batch, N = |items_s| + |items_t|, k views, l the
// embedding width and H the hidden width:
//
//   input        B x N   concatenated interaction rows, source columns first
//   logits       B x k   dropped(normalize(input)) . normalize(item_emb) . normalize(core_emb)^T
//   assignment   B x k   softmax((logits + gumbel) / tau)
//   view input   B x N   dropped input with row b scaled by assignment(b, i)
//   view emb     B x l   enc_w2^T tanh(enc_w1^T x + enc_b1) + enc_b2
//   gate         k       softmax(gate_table[domain])
//   combined     B x l   sum_i gate_i * view_emb_i
//   recon        B x N_d column slice of dec_w2^T tanh(dec_w1^T z + dec_b1) + dec_b2

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core/data.hpp"
#include "core/numerics.hpp"

namespace mdap {

enum class Ablation : std::uint32_t {
    full = 0,
    no_gumbel = 1,
    single_view = 2,
    no_gate = 3,
};

inline constexpr std::array<Ablation, 4> kAblations = {Ablation::full, Ablation::no_gumbel, Ablation::single_view,
                                                       Ablation::no_gate};

/// "full", "no_gumbel", "single_view", "no_gate"
std::string_view ablation_name(Ablation a) noexcept;
/// "MDAP", "MDAP-GS", "MDAP-MV", "MDAP-DG"
std::string_view ablation_label(Ablation a) noexcept;
/// Accepts either the name or the label.
Ablation parse_ablation(std::string_view text);

struct ModelConfig {
    std::size_t views = 8;
    std::size_t embed_dim = 64;
    std::size_t hidden = 256;
    double tau = 0.2;
    double keep_prob = 0.5;
    double lambda = 0.5;
    Ablation ablation = Ablation::full;

    /// single_view always runs with one view
    std::size_t effective_views() const noexcept { return ablation == Ablation::single_view ? 1 : views; }
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::size_t kParamFieldCount = 11;

struct ModelParams {
    std::size_t items_s = 0;
    std::size_t items_t = 0;

    Matrix item_emb;   // N x l
    Matrix core_emb;   // k x l
    Matrix enc_w1;     // N x H
    Matrix enc_b1;     // 1 x H
    Matrix enc_w2;     // H x l
    Matrix enc_b2;     // 1 x l
    Matrix dec_w1;     // l x H
    Matrix dec_b1;     // 1 x H
    Matrix dec_w2;     // H x N
    Matrix dec_b2;     // 1 x N
    Matrix gate_table; // 2 x k

    /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights and embeddings drawn in
    /// field order, zero biases, zero gate table.
    static ModelParams initialize(const ModelConfig& config, std::size_t items_s, std::size_t items_t, Rng& rng);

    /// Zero matrices with the shapes of `like`.
    static ModelParams zeros_like(const ModelParams& like);

    std::size_t total_items() const noexcept { return items_s + items_t; }

    std::array<Matrix*, kParamFieldCount> fields() noexcept;
    std::array<const Matrix*, kParamFieldCount> fields() const noexcept;
    static const std::array<std::string_view, kParamFieldCount>& field_names() noexcept;

    /// Throws ShapeError if any field disagrees with the config and item counts.
    void check_shapes(const ModelConfig& config) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// The stochastic inputs of one training forward pass. Both are empty in
/// evaluation mode.
struct NoiseSample {
    Matrix dropout_mask; // B x N, entries 0 or 1/keep_prob
    Matrix gumbel;       // B x k
};

struct ForwardTrace {
    bool training = false;
    Ablation ablation = Ablation::full;
    double tau = 1.0;

    Matrix input;      // raw batch rows
    Matrix normalized; // row-normalized input
    NoiseSample noise;
    Matrix dropped;    // normalized with the dropout mask applied

    Matrix item_norm;  // normalized item embeddings
    Matrix core_norm;  // normalized core embeddings
    Matrix projected;  // dropped . item_norm
    Matrix logits;     // B x k
    Matrix assignment; // B x k

    /// dropped . enc_w1, shared by every view because view inputs are row
    /// scalings of `dropped`
    Matrix enc_projection;
    std::vector<Matrix> enc_hidden; // k of B x H
    std::vector<Matrix> view_embs;  // k of B x l

    std::array<std::vector<double>, 2> gates;
    std::array<Matrix, 2> combined;   // z_s, z_t
    std::array<Matrix, 2> dec_hidden; // B x H per domain
    std::array<Matrix, 2> recon;      // B x N_s, B x N_t

    std::size_t batch() const noexcept { return input.rows(); }
    std::size_t views() const noexcept { return view_embs.size(); }
};

// ---- individual stages -----------------------------------------------------

/// normalize -> dropout -> project through item and core embeddings. Draws a
/// dropout mask from `rng` when training and keep_prob < 1.
Matrix category_logits(const ModelParams& params, const Matrix& batch_rows, double keep_prob, Rng& rng, bool training);

/// Logits for input rows that are already normalized and dropped.
Matrix category_logits_prepared(const ModelParams& params, const Matrix& prepared_rows);

/// softmax((c + G) / tau) with fresh Gumbel noise when training with the full
/// model, softmax(c / tau) otherwise.
Matrix gumbel_softmax_assign(const Matrix& logits, double tau, Rng& rng, bool training, Ablation ablation);

/// One B x N matrix per view: row b of `rows` scaled by assignment(b, i).
std::vector<Matrix> view_inputs(const Matrix& rows, const Matrix& assignment);

struct EncoderOutput {
    Matrix hidden;    // B x H
    Matrix embedding; // B x l
};

EncoderOutput encode_view(const ModelParams& params, const Matrix& view_input);
/// Applies dropout to the view input before encoding.
Matrix encode_view(const ModelParams& params, const Matrix& view_input, double keep_prob, Rng& rng, bool training);

std::vector<double> gate_weights(const ModelParams& params, Domain domain, Ablation ablation);

Matrix combine_views(std::span<const Matrix> view_embs, std::span<const double> weights);

struct DecoderOutput {
    Matrix hidden; // B x H
    Matrix output; // B x N, or B x N_d for a domain slice
};

/// Full reconstruction over the concatenated item space.
DecoderOutput decode(const ModelParams& params, const Matrix& combined);
/// Only the columns of one domain.
DecoderOutput decode_slice(const ModelParams& params, const Matrix& combined, Domain domain);

/// Columns of `full` belonging to `domain`.
Matrix domain_slice(const Matrix& full, std::size_t items_s, Domain domain);

// ---- full pass -------------------------------------------------------------

/// Draws the dropout mask then the Gumbel noise (training only) and runs the
/// pass.
ForwardTrace forward(const ModelParams& params, const ModelConfig& config, const Matrix& batch_rows, Rng& rng,
                     bool training);

/// Draws the noise forward() would draw, without running the pass.
NoiseSample draw_noise(const ModelConfig& config, std::size_t batch, std::size_t total_items, Rng& rng);

/// Runs the pass with caller-supplied noise. An empty mask means no dropout;
/// an empty gumbel matrix means no noise.
ForwardTrace forward_with_noise(const ModelParams& params, const ModelConfig& config, const Matrix& batch_rows,
                                NoiseSample noise, bool training);

// ---- checkpoint ------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Layout: "MDAPCKPT", u32 version, config values, u32 field count, a
/// (rows, cols) u64 pair per field, then every field as little-endian f64 in
/// ModelParams declaration order.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 of the serialized checkpoint, as 16 hex digits.
std::string checkpoint_id(const Checkpoint& ckpt);

} // namespace mdap
