#include <gtest/gtest.h>

#include "sade/gradcheck.hpp"
#include "test_util.hpp"

using namespace sade;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kTol = 1e-5;

// Random matrix with every entry at least `gap` away from zero, for ReLU.
Matrix<double> away_from_zero(std::size_t r, std::size_t c, std::uint64_t seed, double gap = 1e-2) {
    auto m = testutil::random_matrix(r, c, seed);
    for (auto& v : m.data()) {
        if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
    }
    return m;
}

// Weighted sum so every output entry carries a distinct upstream gradient.
template <typename S>
Var weighted_sum(Tape<S>& t, Var v) {
    const auto& m = t.value(v);
    Matrix<S> w(m.rows(), m.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = S(0.3) + S(0.17) * S(i % 7) - S(0.05) * S(i % 3);
    return ad::sum_all(t, ad::hadamard(t, v, t.constant(w)));
}

}  // namespace

TEST(GradCheck, Matmul) {
    auto r = gradient_check<double>([](auto& t, const auto& v) { return weighted_sum(t, ad::matmul(t, v[0], v[1])); },
                                    {testutil::random_matrix(4, 3, 1), testutil::random_matrix(3, 5, 2)});
    EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, AddSubHadamard) {
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) {
            return weighted_sum(t, ad::hadamard(t, ad::add(t, v[0], v[1]), ad::sub(t, v[1], v[2])));
        },
        {testutil::random_matrix(3, 4, 1), testutil::random_matrix(3, 4, 2), testutil::random_matrix(3, 4, 3)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(GradCheck, ReluAwayFromKinks) {
    auto r = gradient_check<double>([](auto& t, const auto& v) { return weighted_sum(t, ad::relu(t, v[0])); },
                                    {away_from_zero(5, 4, 3, 1e-3)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, SigmoidChain) {
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) { return weighted_sum(t, ad::sigmoid(t, ad::sigmoid(t, ad::matmul(t, v[0], v[1])))); },
        {testutil::random_matrix(3, 3, 4), testutil::random_matrix(3, 2, 5)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, RowSoftmax) {
    auto r = gradient_check<double>([](auto& t, const auto& v) { return weighted_sum(t, ad::row_softmax(t, v[0])); },
                                    {testutil::random_matrix(4, 6, 6)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, Affine) {
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) {
            using S = typename std::remove_reference_t<decltype(t)>::value_type;
            return weighted_sum(t, ad::affine(t, v[0], S(2), S(-1)));
        },
        {testutil::random_matrix(3, 3, 7)});
    EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, GatherRowsWithRepeats) {
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) { return weighted_sum(t, ad::gather_rows(t, v[0], {2, 0, 2, 3})); },
        {testutil::random_matrix(4, 3, 8)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(GradCheck, RowSumScaleRowsBias) {
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) {
            auto m = ad::add_row_bias(t, ad::scale_rows(t, v[0], v[1]), v[2]);
            return weighted_sum(t, ad::row_sum(t, m));
        },
        {testutil::random_matrix(5, 1, 9), testutil::random_matrix(5, 3, 10), testutil::random_matrix(1, 3, 11)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(GradCheck, SpmmWeightsAndFeatures) {
    const auto g = testutil::random_graph(8, 0.4, 3);
    auto r = gradient_check<double>(
        [&](auto& t, const auto& v) { return weighted_sum(t, ad::spmm(t, g, v[0], v[1])); },
        {testutil::random_matrix(g.num_edges(), 1, 12), testutil::random_matrix(8, 3, 13)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(GradCheck, EdgeDotAndSharedQueryKey) {
    const auto g = testutil::random_graph(9, 0.4, 4);
    auto r = gradient_check<double>(
        [&](auto& t, const auto& v) { return weighted_sum(t, ad::edge_dot(t, g, v[0], v[1])); },
        {testutil::random_matrix(9, 4, 14), testutil::random_matrix(9, 4, 15)});
    EXPECT_LT(r.max_rel_error, kTol);
    auto s = gradient_check<double>(
        [&](auto& t, const auto& v) { return weighted_sum(t, ad::edge_dot(t, g, v[0], v[0])); },
        {testutil::random_matrix(9, 4, 16)});
    EXPECT_LT(s.max_rel_error, kTol);
}

TEST(GradCheck, CrossEntropyMasked) {
    const LabelVector y({0, 2, 1, 1, 0, 2}, 3);
    auto r = gradient_check<double>(
        [&](auto& t, const auto& v) { return ad::cross_entropy(t, v[0], y, {0, 1, 3, 5}); },
        {testutil::random_matrix(6, 3, 17)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, DropoutWithFixedMask) {
    // The mask is drawn from a fresh rng each evaluation, so every call sees the same mask.
    auto r = gradient_check<double>(
        [](auto& t, const auto& v) {
            std::mt19937_64 rng(5);
            return weighted_sum(t, ad::dropout(t, v[0], 0.4, true, rng));
        },
        {testutil::random_matrix(4, 4, 18)});
    EXPECT_LT(r.max_rel_error, kTol);
}

TEST(Softmax, Examples) {
    const auto a = ad::row_softmax(Matrix<double>{{0, 0}});
    EXPECT_DOUBLE_EQ(a(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(a(0, 1), 0.5);
    const auto b = ad::row_softmax(Matrix<double>{{1000, 0}});
    EXPECT_TRUE(std::isfinite(b(0, 0)));
    EXPECT_DOUBLE_EQ(b(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(b(0, 1), 0.0);
}

TEST(Softmax, RowsOnSimplex) {
    const auto s = testutil::random_simplex(50, 7, 3);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0;
        for (double v : s.row(i)) {
            EXPECT_GE(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLnC) {
    Tape<double> t;
    const LabelVector y({0, 1, 2, 3, 4}, 5);
    auto loss = ad::cross_entropy(t, t.leaf(Matrix<double>(5, 5)), y, {0, 1, 2, 3, 4});
    EXPECT_NEAR(t.value(loss)(0, 0), std::log(5.0), 1e-12);
}

TEST(CrossEntropy, LargeMarginGoesToZeroAndMaskZeroesGradient) {
    Tape<double> t;
    const LabelVector y({1, 0}, 2);
    auto logits = t.leaf(Matrix<double>{{-50, 50}, {3, 1}});
    auto loss = ad::cross_entropy(t, logits, y, {0});
    EXPECT_LT(t.value(loss)(0, 0), 1e-30);
    t.backward(loss);
    EXPECT_EQ(t.grad(logits)(1, 0), 0.0);
    EXPECT_EQ(t.grad(logits)(1, 1), 0.0);
    EXPECT_THROW(ad::cross_entropy(t, logits, y, {}), std::invalid_argument);
}

TEST(Spmm, IdentityAndEmpty) {
    const Graph diag(3, {{0, 0}, {1, 1}, {2, 2}}, false);
    const auto h = testutil::random_matrix(3, 4, 1);
    const std::vector<double> ones(3, 1.0);
    EXPECT_EQ(spmm<double>(diag, ones, h), h);
    const Graph empty(3, {}, true);
    EXPECT_EQ(spmm<double>(empty, std::vector<double>{}, h), Matrix<double>(3, 4));
    EXPECT_THROW(spmm<double>(diag, ones, Matrix<double>(2, 4)), std::invalid_argument);
}

TEST(Dropout, EvalIdentityAndTrainMean) {
    std::mt19937_64 rng(1);
    Tape<double> t;
    auto x = t.leaf(Matrix<double>(1, 100000, 2.0));
    EXPECT_EQ(ad::dropout(t, x, 0.5, false, rng).id, x.id);
    auto y = ad::dropout(t, x, 0.3, true, rng);
    double mean = 0;
    std::size_t zeros = 0;
    for (double v : t.value(y).data()) {
        mean += v;
        zeros += v == 0.0;
    }
    mean /= 100000.0;
    EXPECT_NEAR(mean, 2.0, 0.02);
    EXPECT_NEAR(double(zeros) / 100000.0, 0.3, 0.01);
    EXPECT_THROW(ad::dropout(t, x, 1.0, true, rng), std::invalid_argument);
}

TEST(Glorot, BoundsSeedAndMean) {
    const auto a = glorot_init<double>(256, 256, 11);
    EXPECT_EQ(a, glorot_init<double>(256, 256, 11));
    EXPECT_NE(a, glorot_init<double>(256, 256, 12));
    const double bound = std::sqrt(6.0 / 512.0);
    double mean = 0;
    for (double v : a.data()) {
        EXPECT_LE(std::abs(v), bound);
        mean += v;
    }
    mean /= double(a.size());
    const double sigma = bound / std::sqrt(3.0);
    EXPECT_LT(std::abs(mean), 3.0 * sigma / 256.0);
}

TEST(Tape, BackwardNeedsScalar) {
    Tape<double> t;
    auto x = t.leaf(Matrix<double>(2, 2, 1.0));
    EXPECT_THROW(t.backward(x), std::invalid_argument);
}

TEST(Tape, ConstantsGetNoGradient) {
    Tape<double> t;
    auto c = t.constant(Matrix<double>(2, 2, 1.0));
    auto x = t.leaf(Matrix<double>(2, 2, 3.0));
    t.backward(ad::sum_all(t, ad::hadamard(t, c, x)));
    EXPECT_EQ(t.grad(c), Matrix<double>(2, 2));
    EXPECT_EQ(t.grad(x), Matrix<double>(2, 2, 1.0));
}
