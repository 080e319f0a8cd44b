// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrices, a platform-stable seeded generator and the
// elementary differentiable operations the model is assembled from.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mdap {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double v);
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
bool all_finite(const Matrix& m) noexcept;

/// Seeded generator built on std::mt19937_64, whose output sequence is fixed
/// by the standard. Distributions are derived from raw 64-bit draws so the
/// sequence is identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on (0, 1), clamped to [1e-12, 1 - 1e-12].
    double uniform();

    /// Uniform integer in [0, n). Requires n > 0.
    std::size_t uniform_index(std::size_t n);

    /// Fisher-Yates shuffle driven by uniform_index.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

inline constexpr double kUniformClamp = 1e-12;

// ---- products ------------------------------------------------------------

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// ---- normalization -------------------------------------------------------

/// Scales each nonzero row to unit L2 norm. All-zero rows stay zero.
Matrix row_l2_normalize(const Matrix& m);

/// Vector-Jacobian product of row_l2_normalize. `input` is the original
/// matrix, `output` its normalized form and `grad_out` the upstream gradient.
/// Zero rows receive zero gradient.
Matrix row_l2_normalize_backward(const Matrix& input, const Matrix& output, const Matrix& grad_out);

// ---- sampling ------------------------------------------------------------

/// -log(-log(u)) for u in (0, 1).
double gumbel_from_uniform(double u);

/// rows x cols standard Gumbel draws, filled in row-major order.
Matrix sample_gumbel(Rng& rng, std::size_t rows, std::size_t cols);

// ---- softmax -------------------------------------------------------------

/// Row-wise softmax of logits / tau with max subtraction.
Matrix softmax_rows(const Matrix& logits, double tau);
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

/// Vector-Jacobian product of softmax_rows given its output.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_out, double tau);

// ---- dropout -------------------------------------------------------------

/// Inverted dropout mask. Entries are `scale` where kept and 0 where dropped,
/// so applying the mask is a plain elementwise product.
struct DropoutMask {
    double keep_prob = 1.0;
    double scale = 1.0;
    Matrix mask;

    Matrix apply(const Matrix& m) const;
};

/// Draws one Bernoulli(keep_prob) per entry in row-major order.
DropoutMask draw_dropout_mask(std::size_t rows, std::size_t cols, double keep_prob, Rng& rng);

/// Identity when !training or keep_prob == 1 (no draws are consumed in either
/// case); otherwise inverted dropout.
Matrix dropout(const Matrix& m, double keep_prob, Rng& rng, bool training);

void validate_keep_prob(double keep_prob);

// ---- optimizer -----------------------------------------------------------

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Matrix m;
    Matrix v;

    static AdamState zeros_like(const Matrix& param) {
        return {Matrix(param.rows(), param.cols()), Matrix(param.rows(), param.cols())};
    }
};

/// Bias-corrected Adam update in place. `step` is 1-based.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, std::uint64_t step, const AdamHyper& hyper);

} // namespace mdap
