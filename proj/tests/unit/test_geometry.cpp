#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "esi/error.hpp"
#include "esi/geometry.hpp"

using namespace esi;

namespace {

double norm(const Vec3& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

// All-pairs hop counts by Floyd-Warshall.
std::vector<std::vector<std::size_t>> all_hops(const SourceSpace& s) {
    const std::size_t n = s.n_regions(), inf = n + 1;
    std::vector<std::vector<std::size_t>> d(n, std::vector<std::size_t>(n, inf));
    for (std::size_t i = 0; i < n; ++i) {
        d[i][i] = 0;
        for (auto j : s.neighbors(i)) d[i][j] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
    return d;
}

}  // namespace

TEST_CASE("Fibonacci lattice points lie on the sphere and are distinct") {
    const auto pts = fibonacci_sphere(64, 80.0);
    REQUIRE(pts.size() == 64);
    double min_gap = 1e9;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(norm(pts[i]) == doctest::Approx(80.0).epsilon(1e-12));
        for (std::size_t j = i + 1; j < pts.size(); ++j) min_gap = std::min(min_gap, distance(pts[i], pts[j]));
    }
    CHECK(min_gap > 5.0);
}

TEST_CASE("synthetic source space is a symmetric kNN graph") {
    const auto space = build_synthetic_source_space(64, 6, 1);
    REQUIRE(space.n_regions() == 64);
    for (std::size_t r = 0; r < 64; ++r) {
        const auto& nb = space.neighbors(r);
        CHECK(std::is_sorted(nb.begin(), nb.end()));
        CHECK(std::find(nb.begin(), nb.end(), r) == nb.end());
        CHECK(nb.size() >= 6);
        for (auto m : nb) {
            const auto& back = space.neighbors(m);
            CHECK(std::find(back.begin(), back.end(), r) != back.end());
        }
        // The 6 nearest other regions are all neighbors.
        std::vector<std::size_t> order(64);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
            return distance(space.centroid(r), space.centroid(a)) < distance(space.centroid(r), space.centroid(b));
        });
        for (std::size_t i = 1; i <= 6; ++i) CHECK(std::binary_search(nb.begin(), nb.end(), order[i]));
    }
    CHECK_THROWS_AS(build_synthetic_source_space(4, 2, 1), ParameterError);
    CHECK_THROWS_AS(build_synthetic_source_space(16, 16, 1), ParameterError);
}

TEST_CASE("hop distances and grown patches match all-pairs shortest paths") {
    const auto space = build_synthetic_source_space(40, 3, 9);
    const auto d = all_hops(space);
    for (std::size_t c = 0; c < space.n_regions(); c += 7) {
        for (std::size_t max_hops = 0; max_hops <= 3; ++max_hops) {
            std::vector<std::pair<std::size_t, std::size_t>> expect;
            for (std::size_t r = 0; r < space.n_regions(); ++r)
                if (d[c][r] <= max_hops) expect.emplace_back(r, d[c][r]);
            CHECK(hop_distances(space, c, max_hops) == expect);

            const auto patch = grow_patch(space, c, max_hops + 1);
            CHECK(patch.size() == expect.size());
            for (const auto& [r, h] : expect) CHECK(patch.contains(r));
        }
    }
    CHECK(grow_patch(space, 5, 1).size() == 1);
    CHECK_THROWS_AS(grow_patch(space, 5, 0), ParameterError);
    CHECK_THROWS_AS(hop_distances(space, 40, 1), ParameterError);
}

TEST_CASE("lead field has unit-norm columns and is seed-deterministic") {
    const auto space = build_synthetic_source_space(64, 6, 1);
    const auto lf = build_lead_field(space, 32, 2);
    REQUIRE(lf.n_channels() == 32);
    REQUIRE(lf.n_regions() == 64);
    for (std::size_t s = 0; s < 64; ++s) {
        double sq = 0.0;
        for (std::size_t c = 0; c < 32; ++c) sq += lf.matrix()(c, s) * lf.matrix()(c, s);
        CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(build_lead_field(space, 32, 2).matrix() == lf.matrix());
    CHECK_FALSE(build_lead_field(space, 32, 3).matrix() == lf.matrix());
}

TEST_CASE("region sets are sorted and support set algebra") {
    const RegionSet a({5, 1, 3, 3}), b({3, 4});
    CHECK(std::vector<std::size_t>(a.begin(), a.end()) == std::vector<std::size_t>{1, 3, 5});
    CHECK(a.intersects(b));
    CHECK(a.intersection_size(b) == 1);
    CHECK(a.united(b).size() == 4);
    CHECK_FALSE(a.contains(4));
}

TEST_CASE("geometry files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "esi_test_geometry";
    std::filesystem::create_directories(dir);
    const auto space = build_synthetic_source_space(16, 3, 4);
    const auto lf = build_lead_field(space, 8, 5);
    save_source_space(space, dir / "space.json");
    save_lead_field(lf, dir / "lf.esit");
    const auto space2 = load_source_space(dir / "space.json");
    REQUIRE(space2.n_regions() == 16);
    for (std::size_t r = 0; r < 16; ++r) {
        CHECK(space2.neighbors(r) == space.neighbors(r));
        CHECK(distance(space2.centroid(r), space.centroid(r)) < 1e-9);
    }
    const auto lf2 = load_lead_field(dir / "lf.esit");
    for (std::size_t i = 0; i < lf.matrix().size(); ++i)
        CHECK(lf2.matrix()[i] == doctest::Approx(lf.matrix()[i]).epsilon(1e-6));
    std::filesystem::remove_all(dir);
}
