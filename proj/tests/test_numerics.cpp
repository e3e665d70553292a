#include <doctest.h>

#include <atomic>
#include <numeric>
#include <set>

#include "saft/parallel.hpp"
#include "support.hpp"

using namespace saft;
using testing::random_vec;

TEST_SUITE("numerics") {

TEST_CASE("cosine of a vector with itself is one") {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const VectorXd u = random_vec(rng, 1 + rng.below(20));
        CHECK(cosine_similarity(u, u) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("cosine is symmetric and invariant to positive scaling") {
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto n = 1 + rng.below(20);
        const VectorXd u = random_vec(rng, n), v = random_vec(rng, n);
        const double c = cosine_similarity(u, v);
        CHECK(cosine_similarity(v, u) == doctest::Approx(c).epsilon(1e-14));
        const double a = rng.uniform(1e-3, 1e3), b = rng.uniform(1e-3, 1e3);
        CHECK(cosine_similarity(VectorXd(a * u), VectorXd(b * v)) == doctest::Approx(c).epsilon(1e-12));
        CHECK(std::abs(c) <= 1.0);
    }
}

TEST_CASE("cosine of opposite and orthogonal vectors") {
    VectorXd u(3), v(3);
    u << 1, 2, 3;
    v << -2, 1, 0;
    CHECK(cosine_similarity(u, VectorXd(-u)) == doctest::Approx(-1.0));
    CHECK(cosine_similarity(u, v) == doctest::Approx(0.0));
}

TEST_CASE("cosine rejects zero vectors and length mismatch") {
    VectorXd z = VectorXd::Zero(3), u = VectorXd::Ones(3), w = VectorXd::Ones(4);
    CHECK_THROWS_AS(cosine_similarity(z, u), DegenerateInputError);
    CHECK_THROWS_AS(cosine_similarity(u, z), DegenerateInputError);
    CHECK_THROWS_AS(cosine_similarity(u, w), ShapeMismatchError);
    CHECK_THROWS_AS(cosine_similarity_grad(z, u), DegenerateInputError);
    CHECK_THROWS_AS(l2_normalize(z), DegenerateInputError);
}

TEST_CASE("cosine gradient matches central differences") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const auto n = 2 + rng.below(16);
        const VectorXd u = random_vec(rng, n), v = random_vec(rng, n);
        const std::function<double(const VectorXd&)> f = [&](const VectorXd& x) { return cosine_similarity(x, v); };
        const VectorXd fd = finite_diff_grad(f, u, 1e-6);
        CHECK(max_relative_error(cosine_similarity_grad(u, v), fd) < 1e-6);
    }
}

TEST_CASE("cosine gradient is orthogonal to its argument") {
    Rng rng(4);
    const VectorXd u = random_vec(rng, 9), v = random_vec(rng, 9);
    CHECK(std::abs(cosine_similarity_grad(u, v).dot(u)) < 1e-14);
}

TEST_CASE("l2_normalize yields unit norm") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) CHECK(l2_normalize(random_vec(rng, 7, -5, 5)).norm() == doctest::Approx(1.0));
}

TEST_CASE("finite differences are exact on a quadratic") {
    VectorXd x(3);
    x << 0.5, -1.0, 2.0;
    const std::function<double(const VectorXd&)> f = [](const VectorXd& v) { return v.squaredNorm(); };
    CHECK(max_relative_error(finite_diff_grad(f, x, 1e-3), VectorXd(2 * x)) < 1e-10);
    CHECK_THROWS_AS(finite_diff_grad(f, x, 0.0), ConfigError);
    const std::function<double(const VectorXd&)> g = [](const VectorXd& v) { return std::log(v[0]); };
    VectorXd at_zero = VectorXd::Zero(1);
    CHECK_THROWS_AS(finite_diff_grad(g, at_zero, 1e-3), NonFiniteError);
}

TEST_CASE("max_relative_error falls back to absolute error near zero") {
    VectorXd a(2), b = VectorXd::Zero(2);
    a << 1e-9, -2e-9;
    CHECK(max_relative_error(a, b) == doctest::Approx(2e-9));
    VectorXd c(2), d(2);
    c << 1.1, 2.0;
    d << 1.0, 2.0;
    CHECK(max_relative_error(c, d) == doctest::Approx(0.05));
}

TEST_CASE("require_finite flags NaN") {
    VectorXd v = VectorXd::Ones(3);
    CHECK_NOTHROW(require_finite(v, "v"));
    v[1] = std::nan("");
    CHECK_THROWS_AS(require_finite(v, "v"), NonFiniteError);
}

TEST_CASE("rng uses the standard 64-bit Mersenne Twister stream") {
    Rng rng(5489);
    CHECK(rng.next() == 14514284786278117030ULL);
}

TEST_CASE("rng draws stay in range and repeat under a seed") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(u == b.uniform());
        const auto k = a.below(7);
        CHECK(k < 7);
        CHECK(k == b.below(7));
    }
}

TEST_CASE("shuffle is a seeded permutation") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    auto w = v;
    Rng(9).shuffle(v);
    Rng(9).shuffle(w);
    CHECK(v == w);
    CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
    std::vector<int> sorted(50);
    std::iota(sorted.begin(), sorted.end(), 0);
    CHECK(v != sorted);
}

TEST_CASE("derived seeds separate streams and indices") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t stream = 0; stream < 4; ++stream)
            for (std::uint64_t i = 0; i < 4; ++i) seen.insert(derive_seed(s, stream, i));
    CHECK(seen.size() == 64);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("parallel_for visits every index exactly once") {
    for (int threads : {1, 2, 5}) {
        std::vector<std::atomic<int>> hits(37);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (auto& h : hits) CHECK(h.load() == 1);
    }
    int calls = 0;
    parallel_for(0, 4, [&](std::size_t) { ++calls; });
    CHECK(calls == 0);
}

TEST_CASE("parallel_for rethrows worker exceptions") {
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 6) throw ConfigError("boom");
                    }),
                    ConfigError);
}

}
