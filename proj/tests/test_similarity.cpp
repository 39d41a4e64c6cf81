#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "protosurv/similarity.hpp"

using namespace protosurv;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t dim, double scale = 1.0) {
    std::normal_distribution<double> gauss(0.0, scale);
    Vec v(dim);
    for (double& x : v) x = gauss(rng);
    return v;
}

}  // namespace

TEST_CASE("pmdsim worked values", "[similarity]") {
    const Vec a{0.3, -1.2, 4.0};
    REQUIRE(pmdsim(a, a, 2.0) == 1.0);  // identity is exactly 1

    const Vec z{0.0, 0.0}, t{2.0, 2.0};
    REQUIRE_THAT(pmdsim(z, t, 2.0), Catch::Matchers::WithinAbs(0.2, 1e-12));

    const Vec ones{1.0, 1.0, 1.0, 1.0}, other{0.0, 2.0, 1.0, 1.0};
    REQUIRE_THAT(pmdsim(ones, other, 1.0), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("dissimilarity worked values and reciprocal law", "[similarity]") {
    const Vec a{1.0, 2.0};
    REQUIRE(dissimilarity(a, a, 2.0) == 1.0);

    const Vec z{0.0, 0.0}, t{2.0, 2.0};
    REQUIRE_THAT(dissimilarity(z, t, 2.0), Catch::Matchers::WithinAbs(5.0, 1e-12));

    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const Vec x = random_vec(rng, 8), y = random_vec(rng, 8);
        const double m = 1.0 + (i % 4);
        REQUIRE_THAT(dissimilarity(x, y, m),
                     Catch::Matchers::WithinRel(1.0 / pmdsim(x, y, m), 1e-15));
    }
}

TEST_CASE("pmdsim symmetry", "[similarity]") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        const Vec a = random_vec(rng, 1 + i % 16), b = random_vec(rng, 1 + i % 16);
        const double m = 0.5 + 0.25 * (i % 12);
        REQUIRE_THAT(pmdsim(a, b, m), Catch::Matchers::WithinAbs(pmdsim(b, a, m), 1e-12));
    }
}

TEST_CASE("pmdsim bounds", "[similarity]") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 200; ++i) {
        const Vec a = random_vec(rng, 6, 10.0), b = random_vec(rng, 6, 10.0);
        const double s = pmdsim(a, b, 2.0);
        REQUIRE(s > 0.0);
        REQUIRE(s <= 1.0);
        REQUIRE(dissimilarity(a, b, 2.0) >= 1.0);
    }
}

TEST_CASE("scaling differences strictly decreases similarity", "[similarity]") {
    std::mt19937_64 rng(19);
    for (int i = 0; i < 100; ++i) {
        const Vec a = random_vec(rng, 5);
        Vec b = random_vec(rng, 5);
        bool same = true;
        for (std::size_t d = 0; d < a.size(); ++d) same = same && a[d] == b[d];
        if (same) b[0] += 1.0;
        const double t = 1.0 + 0.1 * (1 + i % 30);
        Vec scaled(a.size());
        for (std::size_t d = 0; d < a.size(); ++d) scaled[d] = a[d] + t * (b[d] - a[d]);
        REQUIRE(pmdsim(a, scaled, 2.0) < pmdsim(a, b, 2.0));
    }
}

TEST_CASE("exponent sensitivity matches the distance regime", "[similarity]") {
    // all coordinate gaps above 1: larger exponents shrink the similarity
    const Vec a{0.0, 0.0, 0.0}, big{1.5, 2.0, 3.0};
    double prev = pmdsim(a, big, 1.0);
    for (double m : {2.0, 3.0, 4.0}) {
        const double cur = pmdsim(a, big, m);
        REQUIRE(cur < prev);
        prev = cur;
    }
    // all gaps below 1: larger exponents inflate the similarity
    const Vec small{0.2, 0.5, 0.8};
    prev = pmdsim(a, small, 1.0);
    for (double m : {2.0, 3.0, 4.0}) {
        const double cur = pmdsim(a, small, m);
        REQUIRE(cur > prev);
        prev = cur;
    }
}

TEST_CASE("pmdsim input validation", "[similarity]") {
    const Vec a{1.0, 2.0}, b{1.0, 2.0, 3.0};
    REQUIRE_THROWS_AS(pmdsim(a, b, 2.0), DataError);
    const Vec bad{1.0, std::nan("")};
    REQUIRE_THROWS_AS(pmdsim(a, bad, 2.0), NumericError);
    const Vec inf{1.0, std::numeric_limits<double>::infinity()};
    REQUIRE_THROWS_AS(pmdsim(a, inf, 2.0), NumericError);
    REQUIRE_THROWS_AS(pmdsim(Vec{}, Vec{}, 2.0), DataError);
    REQUIRE_THROWS_AS(pmdsim(a, a, 0.0), DataError);
}

TEST_CASE("pmdsim gradient matches finite differences", "[similarity]") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const double m = trial % 2 == 0 ? 2.0 : 3.0;
        Vec a = random_vec(rng, 6), b = random_vec(rng, 6);
        const Vec grad = pmdsim_gradient(a, b, m);
        const double h = 1e-6;
        for (std::size_t d = 0; d < a.size(); ++d) {
            Vec ap = a, am = a;
            ap[d] += h;
            am[d] -= h;
            const double fd = (pmdsim(ap, b, m) - pmdsim(am, b, m)) / (2 * h);
            REQUIRE_THAT(grad[d], Catch::Matchers::WithinAbs(fd, 1e-6));
        }
    }
}

TEST_CASE("l2_normalize worked values", "[similarity]") {
    const auto r = l2_normalize(Vec{3.0, 4.0});
    REQUIRE_FALSE(r.degenerate);
    REQUIRE_THAT(r.value[0], Catch::Matchers::WithinAbs(0.6, 1e-15));
    REQUIRE_THAT(r.value[1], Catch::Matchers::WithinAbs(0.8, 1e-15));

    const auto unit = l2_normalize(r.value);
    REQUIRE_THAT(unit.value[0], Catch::Matchers::WithinAbs(r.value[0], 1e-15));
    REQUIRE_THAT(unit.value[1], Catch::Matchers::WithinAbs(r.value[1], 1e-15));

    const auto zero = l2_normalize(Vec{0.0, 0.0});
    REQUIRE(zero.degenerate);
    REQUIRE(zero.value == Vec{0.0, 0.0});

    REQUIRE_THROWS_AS(l2_normalize(Vec{1.0, std::nan("")}), NumericError);
}

TEST_CASE("ablation kernels share the pmdsim signature", "[similarity]") {
    const Vec a{1.0, 0.0}, b{0.0, 1.0};
    REQUIRE_THAT(cosine_similarity(a, b), Catch::Matchers::WithinAbs(0.0, 1e-15));
    REQUIRE_THAT(cosine_similarity(a, a), Catch::Matchers::WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(euclidean_similarity(a, a), Catch::Matchers::WithinAbs(1.0, 1e-15));
    REQUIRE(euclidean_similarity(a, b) < 1.0);
}
