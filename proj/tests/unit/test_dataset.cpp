#include <doctest.h>

#include "esi/dataset.hpp"
#include "esi/error.hpp"
#include "test_util.hpp"

using namespace esi;
using esi::testing::random_tensor;

TEST_CASE("patch counts cover the fragment with tail padding") {
    CHECK(patch_count(128, 16, 8) == 15);
    CHECK(padded_length(128, 16, 8) == 128);
    CHECK(patch_count(500, 16, 8) == 62);
    CHECK(padded_length(500, 16, 8) == 504);
    CHECK(patch_count(32, 8, 0) == 4);
    CHECK(patch_count(10, 16, 8) == 1);
    CHECK_THROWS_AS(patch_count(128, 16, 16), ParameterError);
}

TEST_CASE("extracted patches are the strided windows of the zero-padded signal") {
    Rng rng(1);
    const Tensor X = random_tensor({3, 37}, rng);
    const PatchGrid grid = extract_patches(X, 8, 3);
    REQUIRE(grid.patches.dims() == Dims{3, patch_count(37, 8, 3), 8});
    CHECK(grid.stride == 5);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t p = 0; p < grid.n_patches(); ++p)
            for (std::size_t i = 0; i < 8; ++i) {
                const std::size_t t = p * 5 + i;
                CHECK(grid.patches(c, p, i) == (t < 37 ? X(c, t) : 0.0));
            }
}

TEST_CASE("merge inverts extract and its backward is the adjoint") {
    Rng rng(2);
    for (auto [n, l, o] : {std::tuple{128, 16, 8}, {37, 8, 3}, {32, 8, 0}, {50, 16, 15}}) {
        const Tensor X = random_tensor({4, static_cast<std::size_t>(n)}, rng);
        const PatchGrid grid = extract_patches(X, l, o);
        CHECK(esi::testing::max_abs_diff(merge_patches(grid), X) < 1e-12);

        PatchGrid other = grid;
        other.patches = random_tensor(grid.patches.dims(), rng);
        const Tensor G = random_tensor(X.dims(), rng);
        const Tensor merged = merge_patches(other);
        const Tensor back = merge_patches_backward(G, other);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < G.size(); ++i) lhs += merged[i] * G[i];
        for (std::size_t i = 0; i < back.size(); ++i) rhs += other.patches[i] * back[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("fragment normalization divides by the max magnitude") {
    const Tensor X({2, 2}, std::vector<double>{1.0, -4.0, 2.0, 0.5});
    const auto n = normalize_fragment(X);
    CHECK(n.scale == 4.0);
    CHECK(n.X.max_abs() == 1.0);
    CHECK(n.X(0, 1) == -1.0);
    const auto z = normalize_fragment(Tensor({2, 2}));
    CHECK(z.scale == 1.0);
    CHECK(z.X.sum_squares() == 0.0);
}
