// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "core/error.hpp"
#include "core/numerics.hpp"
#include "support.hpp"

using namespace mdap;
using mdap::testing::max_abs_diff;
using mdap::testing::naive_matmul;
using mdap::testing::naive_transpose;
using mdap::testing::random_matrix;

TEST(Matrix, ConstructorRejectsWrongLength) {
    EXPECT_THROW(Matrix(2, 3, std::vector<double>(5)), ShapeError);
    EXPECT_NO_THROW(Matrix(2, 3, std::vector<double>(6)));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Matrix b = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(matmul(Matrix::identity(2), b), b);
}

TEST(Matmul, HandSum) {
    const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
    const Matrix b = Matrix::from_rows({{1}, {1}});
    EXPECT_EQ(matmul(a, b), Matrix::from_rows({{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop5x7x3) {
    Rng rng(11);
    const Matrix a = random_matrix(rng, 5, 7);
    const Matrix b = random_matrix(rng, 7, 3);
    EXPECT_LE(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-12);
}

TEST(Matmul, MatchesTripleLoopUpTo32) {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t m = 1 + rng.uniform_index(32), k = 1 + rng.uniform_index(32), n = 1 + rng.uniform_index(32);
        const Matrix a = random_matrix(rng, m, k, -3, 3);
        const Matrix b = random_matrix(rng, k, n, -3, 3);
        const Matrix ref = naive_matmul(a, b);
        EXPECT_LE(max_abs_diff(matmul(a, b), ref), 1e-10);
        EXPECT_LE(max_abs_diff(matmul_tn(naive_transpose(a), b), ref), 1e-10);
        EXPECT_LE(max_abs_diff(matmul_nt(a, naive_transpose(b)), ref), 1e-10);
    }
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        matmul(Matrix(2, 3), Matrix(4, 5));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("4x5"), std::string::npos) << msg;
    }
}

TEST(Matmul, NonFiniteResultThrows) {
    const Matrix a = Matrix::from_rows({{1e300, 1e300}});
    const Matrix b = Matrix::from_rows({{1e300}, {1e300}});
    EXPECT_THROW(matmul(a, b), NumericError);
}

TEST(RowL2Normalize, Examples) {
    const Matrix out = row_l2_normalize(Matrix::from_rows({{3, 4}, {0, 0}, {1, 1}}));
    EXPECT_DOUBLE_EQ(out(0, 0), 0.6);
    EXPECT_DOUBLE_EQ(out(0, 1), 0.8);
    EXPECT_EQ(out(1, 0), 0.0);
    EXPECT_EQ(out(1, 1), 0.0);
    EXPECT_NEAR(out(2, 0), 0.70710678, 1e-8);
    EXPECT_NEAR(out(2, 1), 0.70710678, 1e-8);
}

TEST(RowL2Normalize, Idempotent) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix m = random_matrix(rng, 6, 9, -5, 5);
        const Matrix once = row_l2_normalize(m);
        EXPECT_LE(max_abs_diff(row_l2_normalize(once), once), 1e-12);
    }
}

TEST(RowL2Normalize, BackwardMatchesFiniteDifference) {
    Rng rng(4);
    const Matrix x = random_matrix(rng, 3, 4);
    const Matrix w = random_matrix(rng, 3, 4);
    const Matrix y = row_l2_normalize(x);
    const Matrix g = row_l2_normalize_backward(x, y, w);
    const auto objective = [&](const Matrix& m) {
        const Matrix n = row_l2_normalize(m);
        double s = 0.0;
        for (std::size_t i = 0; i < n.size(); ++i) {
            s += n.values()[i] * w.values()[i];
        }
        return s;
    };
    Matrix probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe.values()[i];
        probe.values()[i] = saved + 1e-6;
        const double up = objective(probe);
        probe.values()[i] = saved - 1e-6;
        const double down = objective(probe);
        probe.values()[i] = saved;
        EXPECT_NEAR(g.values()[i], (up - down) / 2e-6, 1e-8);
    }
}

TEST(Gumbel, ClosedFormPoints) {
    EXPECT_NEAR(gumbel_from_uniform(std::exp(-1.0)), 0.0, 1e-15);
    EXPECT_NEAR(gumbel_from_uniform(0.5), 0.36651292, 1e-8);
}

TEST(Gumbel, SampleMeanIsEulerMascheroni) {
    Rng rng(2024);
    const Matrix g = sample_gumbel(rng, 1000, 100);
    double sum = 0.0;
    for (double v : g.values()) {
        sum += v;
    }
    EXPECT_NEAR(sum / static_cast<double>(g.size()), std::numbers::egamma, 0.02);
}

TEST(Gumbel, SeedReproducible) {
    Rng a(99), b(99);
    EXPECT_EQ(sample_gumbel(a, 7, 5), sample_gumbel(b, 7, 5));
}

TEST(Rng, UniformStaysInsideOpenInterval) {
    Rng rng(1);
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, kUniformClamp);
        ASSERT_LE(u, 1.0 - kUniformClamp);
    }
}

TEST(Rng, FixedSequence) {
    // std::mt19937_64 with seed 5489 has a standard-mandated 10000th output
    Rng rng(5489);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) {
        v = rng.next_u64();
    }
    EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(Rng, UniformIndexCoversRange) {
    Rng rng(8);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) {
        ++counts[rng.uniform_index(5)];
    }
    for (int c : counts) {
        EXPECT_GT(c, 850);
        EXPECT_LT(c, 1150);
    }
}

TEST(Softmax, Examples) {
    const Matrix half = softmax_rows(Matrix::from_rows({{0, 0}}), 0.3);
    EXPECT_DOUBLE_EQ(half(0, 0), 0.5);
    const Matrix t1 = softmax_rows(Matrix::from_rows({{1, 0}}), 1.0);
    EXPECT_NEAR(t1(0, 0), 0.73105858, 1e-8);
    EXPECT_NEAR(t1(0, 1), 0.26894142, 1e-8);
    const Matrix t05 = softmax_rows(Matrix::from_rows({{1, 0}}), 0.5);
    EXPECT_NEAR(t05(0, 0), 0.88079708, 1e-8);
    EXPECT_NEAR(t05(0, 1), 0.11920292, 1e-8);
}

TEST(Softmax, RejectsNonPositiveTau) {
    EXPECT_THROW(softmax_rows(Matrix(1, 2), 0.0), ParameterError);
    EXPECT_THROW(softmax_rows(Matrix(1, 2), -1.0), ParameterError);
}

TEST(Softmax, ExtremeLogitsStayOnSimplex) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Matrix logits = random_matrix(rng, 3, 6, -700, 700);
        const Matrix p = softmax_rows(logits, 0.1 + rng.uniform());
        for (std::size_t r = 0; r < p.rows(); ++r) {
            double s = 0.0;
            for (double v : p.row(r)) {
                ASSERT_GE(v, 0.0);
                s += v;
            }
            ASSERT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Softmax, BackwardMatchesJacobian) {
    Rng rng(6);
    const Matrix logits = random_matrix(rng, 2, 4);
    const Matrix grad = random_matrix(rng, 2, 4);
    const double tau = 0.7;
    const Matrix p = softmax_rows(logits, tau);
    const Matrix g = softmax_rows_backward(p, grad, tau);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t j = 0; j < 4; ++j) {
            double expect = 0.0;
            for (std::size_t i = 0; i < 4; ++i) {
                expect += grad(r, i) * p(r, i) * ((i == j ? 1.0 : 0.0) - p(r, j)) / tau;
            }
            EXPECT_NEAR(g(r, j), expect, 1e-14);
        }
    }
}

TEST(Dropout, IdentityCases) {
    Rng rng(1);
    const Matrix m = random_matrix(rng, 4, 4);
    Rng probe(2), reference(2);
    EXPECT_EQ(dropout(m, 1.0, probe, true), m);
    EXPECT_EQ(dropout(m, 0.5, probe, false), m);
    EXPECT_EQ(probe.next_u64(), reference.next_u64());
}

TEST(Dropout, PreservesExpectation) {
    Rng rng(77);
    const Matrix ones(1000, 100, 1.0);
    const Matrix out = dropout(ones, 0.5, rng, true);
    double sum = 0.0;
    for (double v : out.values()) {
        ASSERT_TRUE(v == 0.0 || v == 2.0);
        sum += v;
    }
    EXPECT_NEAR(sum / static_cast<double>(out.size()), 1.0, 0.01);
}

TEST(Dropout, RejectsKeepProbOutsideRange) {
    Rng rng(1);
    EXPECT_THROW(dropout(Matrix(1, 1), 0.0, rng, true), ParameterError);
    EXPECT_THROW(dropout(Matrix(1, 1), 1.5, rng, true), ParameterError);
}

TEST(Adam, ZeroGradientIsIdentity) {
    Rng rng(1);
    Matrix p = random_matrix(rng, 3, 3);
    const Matrix before = p;
    AdamState s = AdamState::zeros_like(p);
    for (std::uint64_t t = 1; t <= 5; ++t) {
        adam_step(p, Matrix(3, 3), s, t, {});
    }
    EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMagnitude) {
    Matrix p(1, 1, 0.0);
    AdamState s = AdamState::zeros_like(p);
    adam_step(p, Matrix(1, 1, 1.0), s, 1, {1e-3, 0.9, 0.999, 1e-8});
    EXPECT_NEAR(p(0, 0), -9.99999e-4, 1e-9);
}

TEST(Adam, TwoStepsMatchScalarOracle) {
    const AdamHyper h{1e-3, 0.9, 0.999, 1e-8};
    Matrix p(1, 1, 0.3);
    AdamState s = AdamState::zeros_like(p);
    double x = 0.3, m = 0.0, v = 0.0;
    for (std::uint64_t t = 1; t <= 2; ++t) {
        const double g = 0.7;
        adam_step(p, Matrix(1, 1, g), s, t, h);
        m = h.beta1 * m + (1 - h.beta1) * g;
        v = h.beta2 * v + (1 - h.beta2) * g * g;
        const double mh = m / (1 - std::pow(h.beta1, static_cast<double>(t)));
        const double vh = v / (1 - std::pow(h.beta2, static_cast<double>(t)));
        x -= h.lr * mh / (std::sqrt(vh) + h.eps);
    }
    EXPECT_NEAR(p(0, 0), x, 1e-12);
}

TEST(Adam, ShapeMismatchThrows) {
    Matrix p(2, 2);
    AdamState s = AdamState::zeros_like(p);
    EXPECT_THROW(adam_step(p, Matrix(2, 3), s, 1, {}), ShapeError);
    EXPECT_THROW(adam_step(p, Matrix(2, 2), s, 0, {}), ParameterError);
}
