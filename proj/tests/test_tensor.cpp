#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "avaccel/rng.hpp"
#include "avaccel/tensor.hpp"

using namespace avaccel;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += a.at({i, p}) * b.at({p, j});
            c.at({i, j}) = s;
        }
    return c;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
}

// Reference xoshiro256** and SplitMix64, transcribed from the published
// algorithms.
struct RefXoshiro {
    std::uint64_t s[4];
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    explicit RefXoshiro(std::uint64_t seed) {
        for (auto& w : s) {
            seed += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = seed;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            w = z ^ (z >> 31);
        }
    }
    std::uint64_t next() {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }
};

}  // namespace

TEST(Tensor, ConstructionValidatesExtents) {
    EXPECT_THROW(Tensor({2, 0}), ShapeError);
    EXPECT_THROW(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), ShapeError);
    const Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_TRUE(Tensor().empty());
}

TEST(Tensor, ReshapeKeepsRowMajorOrder) {
    const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    const Tensor r = m.reshaped({3, 2});
    EXPECT_EQ(r.at({1, 0}), 3);
    EXPECT_EQ(r.at({2, 1}), 6);
    EXPECT_THROW(m.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, IndexBoundsChecked) {
    Tensor t({2, 2});
    EXPECT_THROW(t.at({2, 0}), ShapeError);
    EXPECT_THROW(t.at({0}), ShapeError);
}

TEST(Tensor, MatmulMatchesTripleLoop) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(7), k = 1 + rng.below(7), n = 1 + rng.below(7);
        const Tensor a = rand_normal(rng, {m, k}, 0, 1);
        const Tensor b = rand_normal(rng, {k, n}, 0, 1);
        expect_near(matmul(a, b), naive_matmul(a, b), 1e-12);
        expect_near(matmul_at_b(transpose(a), b), naive_matmul(a, b), 1e-12);
        EXPECT_EQ(matmul_a_bt(a, transpose(b)), matmul(a, b));
    }
}

TEST(Tensor, MatmulHandExample) {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor b = Tensor::matrix({{5, 6}, {7, 8}});
    EXPECT_EQ(matmul(a, b), Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Tensor, MatmulRejectsMismatch) {
    EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
    EXPECT_THROW(matmul(Tensor({2}), Tensor({2, 3})), ShapeError);
}

TEST(Tensor, NonFiniteResultRaises) {
    const Real inf = std::numeric_limits<Real>::infinity();
    const Tensor a = Tensor::matrix({{inf, 1}});
    const Tensor b = Tensor::matrix({{0}, {1}});
    EXPECT_THROW(matmul(a, b), NumericError);
}

TEST(Tensor, ElementwiseOps) {
    const Tensor a = Tensor::vector({1, -2, 3});
    const Tensor b = Tensor::vector({4, 5, -6});
    EXPECT_EQ(add(a, b), Tensor::vector({5, 3, -3}));
    EXPECT_EQ(sub(a, b), Tensor::vector({-3, -7, 9}));
    EXPECT_EQ(mul(a, b), Tensor::vector({4, -10, -18}));
    EXPECT_EQ(scale(a, Real(2)), Tensor::vector({2, -4, 6}));
    EXPECT_EQ(abs(a), Tensor::vector({1, 2, 3}));
    EXPECT_EQ(sign(Tensor::vector({-0.5, 0, 2})), Tensor::vector({-1, 0, 1}));
    EXPECT_THROW(add(a, Tensor({2})), ShapeError);
    Tensor acc = a;
    accumulate(acc, b);
    EXPECT_EQ(acc, add(a, b));
}

TEST(Tensor, ConcatThenSliceRoundTrips) {
    Rng rng(3);
    const Tensor a = rand_normal(rng, {2, 3, 4}, 0, 1);
    const Tensor b = rand_normal(rng, {2, 5, 4}, 0, 1);
    const Tensor c = concat(a, b, 1);
    EXPECT_EQ(c.shape(), (Shape{2, 8, 4}));
    EXPECT_EQ(slice(c, 1, 0, 3), a);
    EXPECT_EQ(slice(c, 1, 3, 8), b);
    EXPECT_THROW(concat(a, Tensor({3, 3, 4}), 1), ShapeError);
    EXPECT_THROW(slice(a, 1, 2, 2), ShapeError);
}

TEST(Tensor, ReductionsMatchLoops) {
    Rng rng(5);
    const Tensor a = rand_normal(rng, {3, 4}, 0, 1);
    const Tensor s0 = reduce(ReduceOp::sum, a, 0);
    const Tensor m1 = reduce(ReduceOp::max, a, 1);
    const Tensor mean1 = reduce(ReduceOp::mean, a, 1);
    for (std::size_t j = 0; j < 4; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < 3; ++i) s += a.at({i, j});
        EXPECT_NEAR(s0[j], s, 1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i) {
        double mx = -1e300, s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            mx = std::max<double>(mx, a.at({i, j}));
            s += a.at({i, j});
        }
        EXPECT_EQ(m1[i], mx);
        EXPECT_NEAR(mean1[i], s / 4, 1e-12);
    }
    const Tensor all = reduce(ReduceOp::sum, a);
    EXPECT_EQ(all.shape(), Shape{1});
    EXPECT_THROW(reduce(ReduceOp::sum, a, 2), ShapeError);
}

TEST(Rng, MatchesReferenceXoshiro) {
    for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xdeadbeefULL}) {
        Rng rng(seed);
        RefXoshiro ref(seed);
        for (int i = 0; i < 100; ++i) ASSERT_EQ(rng.next_u64(), ref.next());
    }
}

TEST(Rng, UniformIsTopBitsOfOutput) {
    Rng a(9), b(9);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(a.uniform(), static_cast<double>(b.next_u64() >> 11) * 0x1.0p-53);
    }
}

TEST(Rng, StreamsAreDeterministicAndSeedDependent) {
    Rng a(7), b(7), c(8);
    for (int i = 0; i < 10; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        EXPECT_NE(x, c.normal());
    }
}

TEST(Rng, NormalMoments) {
    Rng rng(123);
    const int n = 200000;
    double s = 0, ss = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s += z;
        ss += z * z;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Rng, RangesRespected) {
    Rng rng(4);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform(-2, 3);
        EXPECT_GE(u, -2);
        EXPECT_LT(u, 3);
        EXPECT_LT(rng.below(7), 7u);
    }
    EXPECT_THROW(rand_uniform(rng, {2}, 1, 1), ConfigError);
    EXPECT_THROW(rand_normal(rng, {2}, 0, -1), ConfigError);
}

TEST(Rng, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}
