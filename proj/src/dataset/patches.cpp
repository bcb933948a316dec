#include "esi/dataset.hpp"

#include <cmath>
#include <vector>

#include "esi/error.hpp"

namespace esi {
namespace {

void validate_window(std::size_t length, std::size_t overlap) {
    if (length < 2) throw ParameterError("patch length must be >= 2");
    if (overlap >= length) throw ParameterError("patch overlap must be < patch length");
}

std::vector<double> coverage(std::size_t n_patches, std::size_t length, std::size_t stride) {
    std::vector<double> count((n_patches - 1) * stride + length, 0.0);
    for (std::size_t j = 0; j < n_patches; ++j)
        for (std::size_t k = 0; k < length; ++k) count[j * stride + k] += 1.0;
    return count;
}

void validate_grid(const PatchGrid& grid) {
    if (grid.patches.rank() != 3 || grid.patches.dim(2) != grid.length || grid.stride == 0 ||
        grid.stride > grid.length || grid.n_patches() == 0) {
        throw FormatError("inconsistent patch grid metadata: patches " + dims_to_string(grid.patches.dims()) +
                          ", length " + std::to_string(grid.length) + ", stride " + std::to_string(grid.stride));
    }
    if (grid.n_timepoints_original < grid.length ||
        padded_length(grid.n_timepoints_original, grid.length, grid.stride) != grid.padded_length()) {
        throw FormatError("patch grid original length " + std::to_string(grid.n_timepoints_original) +
                          " does not match padded length " + std::to_string(grid.padded_length()));
    }
}

}  // namespace

std::size_t padded_length(std::size_t n_timepoints, std::size_t length, std::size_t stride) {
    if (n_timepoints <= length) return length;
    const std::size_t extra = n_timepoints - length;
    return length + (extra + stride - 1) / stride * stride;
}

std::size_t patch_count(std::size_t n_timepoints, std::size_t length, std::size_t overlap) {
    validate_window(length, overlap);
    const std::size_t stride = length - overlap;
    return (padded_length(n_timepoints, length, stride) - length) / stride + 1;
}

PatchGrid extract_patches(const Tensor& X, std::size_t length, std::size_t overlap) {
    validate_window(length, overlap);
    if (X.rank() != 2) throw ParameterError("extract_patches expects N_c x N_t, got " + dims_to_string(X.dims()));
    const std::size_t n_channels = X.dim(0), n_t = X.dim(1);
    if (length > n_t) {
        throw ParameterError("patch length " + std::to_string(length) + " exceeds fragment length " +
                             std::to_string(n_t));
    }
    const std::size_t stride = length - overlap;
    const std::size_t n_patches = patch_count(n_t, length, overlap);
    PatchGrid grid{Tensor({n_channels, n_patches, length}), length, stride, n_t};
    for (std::size_t c = 0; c < n_channels; ++c)
        for (std::size_t j = 0; j < n_patches; ++j)
            for (std::size_t k = 0; k < length; ++k) {
                const std::size_t t = j * stride + k;
                grid.patches(c, j, k) = t < n_t ? X(c, t) : 0.0;
            }
    return grid;
}

Tensor merge_patches(const PatchGrid& grid) {
    validate_grid(grid);
    const std::size_t n_channels = grid.n_channels(), n_patches = grid.n_patches();
    const auto count = coverage(n_patches, grid.length, grid.stride);
    Tensor sum({n_channels, count.size()});
    for (std::size_t c = 0; c < n_channels; ++c)
        for (std::size_t j = 0; j < n_patches; ++j)
            for (std::size_t k = 0; k < grid.length; ++k) sum(c, j * grid.stride + k) += grid.patches(c, j, k);
    Tensor out({n_channels, grid.n_timepoints_original});
    for (std::size_t c = 0; c < n_channels; ++c)
        for (std::size_t t = 0; t < grid.n_timepoints_original; ++t) out(c, t) = sum(c, t) / count[t];
    return out;
}

Tensor merge_patches_backward(const Tensor& grad_merged, const PatchGrid& geometry) {
    validate_grid(geometry);
    const std::size_t n_channels = geometry.n_channels(), n_patches = geometry.n_patches();
    if (grad_merged.rank() != 2 || grad_merged.dim(0) != n_channels ||
        grad_merged.dim(1) != geometry.n_timepoints_original) {
        throw ParameterError("merge_patches_backward: gradient shape " + dims_to_string(grad_merged.dims()));
    }
    const auto count = coverage(n_patches, geometry.length, geometry.stride);
    Tensor grad({n_channels, n_patches, geometry.length});
    for (std::size_t c = 0; c < n_channels; ++c)
        for (std::size_t j = 0; j < n_patches; ++j)
            for (std::size_t k = 0; k < geometry.length; ++k) {
                const std::size_t t = j * geometry.stride + k;
                if (t < geometry.n_timepoints_original) grad(c, j, k) = grad_merged(c, t) / count[t];
            }
    return grad;
}

NormalizedFragment normalize_fragment(const Tensor& X) {
    if (!X.all_finite()) throw DataError("normalize_fragment: non-finite input");
    const double m = X.max_abs();
    if (m == 0.0) return {X, 1.0};
    Tensor out = X;
    for (double& v : out.values()) v /= m;
    return {std::move(out), m};
}

}  // namespace esi
