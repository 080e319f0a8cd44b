// SPDX-License-Identifier: Apache-2.0

#include "core/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace mdap {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        std::ostringstream os;
        os << "matrix data length " << data_.size() << " does not match shape " << rows << "x" << cols;
        throw ShapeError(os.str());
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw ShapeError("ragged initializer for matrix");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

void Matrix::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

std::string shape_string(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

bool all_finite(const Matrix& m) noexcept {
    return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, std::string_view what) {
    if (!all_finite(m)) {
        throw NumericError(std::string(what) + ": non-finite value in " + shape_string(m) + " matrix");
    }
}

// ---- Rng -----------------------------------------------------------------

double Rng::uniform() {
    // 53 high bits, centred in their bucket so 0 is unreachable.
    const double u = (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    return std::clamp(u, kUniformClamp, 1.0 - kUniformClamp);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw ParameterError("uniform_index requires n > 0");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
}

// ---- products ------------------------------------------------------------

namespace {

[[noreturn]] void throw_product_shape(const char* op, const Matrix& a, const Matrix& b) {
    std::ostringstream os;
    os << op << ": incompatible shapes " << shape_string(a) << " and " << shape_string(b);
    throw ShapeError(os.str());
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw_product_shape("matmul", a, b);
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* dst = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            // interaction rows are mostly zero
            if (aik == 0.0) {
                continue;
            }
            const double* src = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) {
                dst[j] += aik * src[j];
            }
        }
    }
    require_finite(out, "matmul");
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw_product_shape("matmul_tn", a, b);
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* src = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari == 0.0) {
                continue;
            }
            double* dst = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) {
                dst[j] += ari * src[j];
            }
        }
    }
    require_finite(out, "matmul_tn");
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw_product_shape("matmul_nt", a, b);
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ar = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* br = b.row(j).data();
            double acc = 0.0;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += ar[k] * br[k];
            }
            out(i, j) = acc;
        }
    }
    require_finite(out, "matmul_nt");
    return out;
}

// ---- normalization -------------------------------------------------------

Matrix row_l2_normalize(const Matrix& m) {
    Matrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        double sq = 0.0;
        for (double v : row) {
            sq += v * v;
        }
        if (sq == 0.0) {
            continue;
        }
        const double norm = std::sqrt(sq);
        for (double& v : row) {
            v /= norm;
        }
    }
    return out;
}

Matrix row_l2_normalize_backward(const Matrix& input, const Matrix& output, const Matrix& grad_out) {
    if (!input.same_shape(output) || !input.same_shape(grad_out)) {
        throw ShapeError("row_l2_normalize_backward: shape mismatch " + shape_string(input) + ", " +
                         shape_string(output) + ", " + shape_string(grad_out));
    }
    Matrix grad(input.rows(), input.cols());
    for (std::size_t r = 0; r < input.rows(); ++r) {
        const auto x = input.row(r);
        double sq = 0.0;
        for (double v : x) {
            sq += v * v;
        }
        if (sq == 0.0) {
            continue;
        }
        const double norm = std::sqrt(sq);
        const auto y = output.row(r);
        const auto dy = grad_out.row(r);
        double proj = 0.0;
        for (std::size_t c = 0; c < y.size(); ++c) {
            proj += y[c] * dy[c];
        }
        auto dx = grad.row(r);
        for (std::size_t c = 0; c < y.size(); ++c) {
            dx[c] = (dy[c] - y[c] * proj) / norm;
        }
    }
    return grad;
}

// ---- sampling ------------------------------------------------------------

double gumbel_from_uniform(double u) {
    return -std::log(-std::log(u));
}

Matrix sample_gumbel(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix g(rows, cols);
    for (double& v : g.values()) {
        v = gumbel_from_uniform(rng.uniform());
    }
    return g;
}

// ---- softmax -------------------------------------------------------------

namespace {

void check_tau(double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ParameterError("softmax temperature must be positive, got " + std::to_string(tau));
    }
}

void softmax_into(std::span<const double> in, std::span<double> out, double tau) {
    if (in.empty()) {
        return;
    }
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::exp((in[i] - mx) / tau);
        total += out[i];
    }
    for (double& v : out) {
        v /= total;
    }
}

} // namespace

Matrix softmax_rows(const Matrix& logits, double tau) {
    check_tau(tau);
    require_finite(logits, "softmax_rows input");
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        softmax_into(logits.row(r), out.row(r), tau);
    }
    return out;
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
    check_tau(tau);
    std::vector<double> out(logits.size());
    softmax_into(logits, out, tau);
    return out;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_out, double tau) {
    if (!probs.same_shape(grad_out)) {
        throw ShapeError("softmax_rows_backward: shape mismatch " + shape_string(probs) + " vs " +
                         shape_string(grad_out));
    }
    Matrix grad(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const auto s = probs.row(r);
        const auto ds = grad_out.row(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < s.size(); ++c) {
            dot += s[c] * ds[c];
        }
        auto dz = grad.row(r);
        for (std::size_t c = 0; c < s.size(); ++c) {
            dz[c] = s[c] * (ds[c] - dot) / tau;
        }
    }
    return grad;
}

// ---- dropout -------------------------------------------------------------

void validate_keep_prob(double keep_prob) {
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
        throw ParameterError("keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
    }
}

Matrix DropoutMask::apply(const Matrix& m) const {
    if (!m.same_shape(mask)) {
        throw ShapeError("dropout mask " + shape_string(mask) + " does not match input " + shape_string(m));
    }
    Matrix out = m;
    auto dst = out.values();
    const auto src = mask.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] *= src[i];
    }
    return out;
}

DropoutMask draw_dropout_mask(std::size_t rows, std::size_t cols, double keep_prob, Rng& rng) {
    validate_keep_prob(keep_prob);
    DropoutMask dm;
    dm.keep_prob = keep_prob;
    dm.scale = 1.0 / keep_prob;
    dm.mask = Matrix(rows, cols);
    for (double& v : dm.mask.values()) {
        v = rng.uniform() < keep_prob ? dm.scale : 0.0;
    }
    return dm;
}

Matrix dropout(const Matrix& m, double keep_prob, Rng& rng, bool training) {
    validate_keep_prob(keep_prob);
    if (!training || keep_prob == 1.0) {
        return m;
    }
    return draw_dropout_mask(m.rows(), m.cols(), keep_prob, rng).apply(m);
}

// ---- optimizer -----------------------------------------------------------

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, std::uint64_t step, const AdamHyper& hyper) {
    if (!param.same_shape(grad) || !param.same_shape(state.m) || !param.same_shape(state.v)) {
        throw ShapeError("adam_step: param " + shape_string(param) + ", grad " + shape_string(grad) +
                         ", moments " + shape_string(state.m) + "/" + shape_string(state.v));
    }
    if (step == 0) {
        throw ParameterError("adam_step: step index is 1-based");
    }
    const double t = static_cast<double>(step);
    const double bias1 = 1.0 - std::pow(hyper.beta1, t);
    const double bias2 = 1.0 - std::pow(hyper.beta2, t);
    auto p = param.values();
    const auto g = grad.values();
    auto m = state.m.values();
    auto v = state.v.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
}

} // namespace mdap
