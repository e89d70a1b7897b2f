#include "geomed/hilbert.hpp"
#include "geomed/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace geomed;

TEST(Inner, Examples) {
    const auto e2 = SpaceSpec::euclidean(2);
    EXPECT_EQ(inner({1, 0}, {0, 1}, e2), 0.0);
    EXPECT_EQ(inner({1, 2}, {1, 2}, SpaceSpec::weighted({2, 1})), 6.0);
    EXPECT_EQ(inner({3, 4}, {3, 4}, e2), 25.0);
}

TEST(Inner, DimensionMismatchIsContractViolation) {
    EXPECT_THROW(inner({1, 2, 3}, {1, 2}, SpaceSpec::euclidean(2)), ContractViolation);
    EXPECT_THROW(norm({1, 2, 3}, SpaceSpec::euclidean(2)), ContractViolation);
}

TEST(Norm, Examples) {
    EXPECT_EQ(norm({3, 4}, SpaceSpec::euclidean(2)), 5.0);
    EXPECT_EQ(norm(HilbertPoint::zeros(7), SpaceSpec::euclidean(7)), 0.0);
    EXPECT_DOUBLE_EQ(norm({1, 1, 1, 1}, SpaceSpec::weighted({0.25, 0.25, 0.25, 0.25})), 1.0);
}

TEST(Combine, Examples) {
    EXPECT_EQ(combine({0, 0}, 0.5, {2, 4}), (HilbertPoint{1, 2}));
    EXPECT_EQ(combine({1.5, -2}, 0.0, {9, 9}), (HilbertPoint{1.5, -2}));
    EXPECT_EQ(combine({1, 1}, -1.0, {1, 1}), (HilbertPoint{0, 0}));
}

TEST(Combine, Errors) {
    EXPECT_THROW(combine({1, 1}, 1.0, {1}), ContractViolation);
    EXPECT_THROW(combine({1, 1}, std::numeric_limits<double>::quiet_NaN(), {1, 1}), ContractViolation);
    EXPECT_THROW(combine({1, 1}, std::numeric_limits<double>::infinity(), {1, 1}), ContractViolation);
}

TEST(Types, Invariants) {
    EXPECT_THROW(SpaceSpec::euclidean(0), ContractViolation);
    EXPECT_THROW(SpaceSpec::weighted({1.0, 0.0}), ContractViolation);
    EXPECT_THROW(SpaceSpec::weighted({1.0, -2.0}), ContractViolation);
    EXPECT_THROW(SpaceSpec::weighted({1.0, std::numeric_limits<double>::infinity()}), ContractViolation);
    EXPECT_THROW(HilbertPoint({1.0, std::numeric_limits<double>::quiet_NaN()}), ContractViolation);
}

namespace {

HilbertPoint random_point(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal() * std::exp(rng.normal());
    return HilbertPoint(v);
}

SpaceSpec random_space(Rng& rng, std::size_t d, bool weighted) {
    if (!weighted) return SpaceSpec::euclidean(d);
    std::vector<double> w(d);
    for (auto& x : w) x = 0.01 + rng.uniform();
    return SpaceSpec::weighted(w);
}

} // namespace

TEST(Properties, CauchySchwarzAndTriangle) {
    Rng rng(11);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t d = 1 + rng.below(12);
        const auto space = random_space(rng, d, trial % 2 == 1);
        const auto a = random_point(rng, d), b = random_point(rng, d);
        const double s = rng.normal() * 3.0;
        const double na = norm(a, space), nb = norm(b, space);
        EXPECT_LE(std::abs(inner(a, b, space)), na * nb * (1 + 1e-14) + 1e-300);
        EXPECT_LE(norm(combine(a, s, b), space), (na + std::abs(s) * nb) * (1 + 1e-14));
        EXPECT_EQ(inner(a, b, space), inner(b, a, space));
    }
}

TEST(Properties, UnitWeightsMatchEuclideanFormulas) {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 1 + rng.below(30);
        const auto a = random_point(rng, d), b = random_point(rng, d);
        long double dot = 0, sq = 0;
        for (std::size_t i = 0; i < d; ++i) {
            dot += static_cast<long double>(a[i]) * b[i];
            sq += static_cast<long double>(a[i]) * a[i];
        }
        const auto unit = SpaceSpec::weighted(std::vector<double>(d, 1.0));
        const auto eu = SpaceSpec::euclidean(d);
        for (const auto& sp : {unit, eu}) {
            EXPECT_NEAR(inner(a, b, sp), static_cast<double>(dot), 1e-12 * static_cast<double>(sq + 1));
            EXPECT_NEAR(norm(a, sp), std::sqrt(static_cast<double>(sq)), 1e-12 * std::sqrt(static_cast<double>(sq)));
        }
    }
}

TEST(Properties, Bilinearity) {
    Rng rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t d = 1 + rng.below(8);
        const auto space = random_space(rng, d, true);
        const auto a = random_point(rng, d), b = random_point(rng, d), c = random_point(rng, d);
        const double s = rng.normal();
        const double lhs = inner(combine(a, s, b), c, space);
        const double rhs = inner(a, c, space) + s * inner(b, c, space);
        const double scale = norm(a, space) * norm(c, space) + std::abs(s) * norm(b, space) * norm(c, space);
        EXPECT_NEAR(lhs, rhs, 1e-12 * scale);
    }
}

TEST(Rng, MixSeedDependsOnBothArguments) {
    EXPECT_NE(mix_seed(1, 0), mix_seed(1, 1));
    EXPECT_NE(mix_seed(1, 0), mix_seed(2, 0));
    EXPECT_EQ(mix_seed(42, 7), mix_seed(42, 7));
}

TEST(Rng, NormalMoments) {
    Rng rng(5);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    EXPECT_NEAR(s / n, 0.0, 4.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, GammaMean) {
    Rng rng(6);
    for (double shape : {0.5, 1.5, 4.0}) {
        const int n = 100000;
        double s = 0;
        for (int i = 0; i < n; ++i) s += rng.gamma(shape);
        EXPECT_NEAR(s / n, shape, 5.0 * std::sqrt(shape / n)) << "shape " << shape;
    }
}

TEST(Rng, BelowIsInRange) {
    Rng rng(7);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}
