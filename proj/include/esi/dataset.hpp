#pragma once

#include <cstddef>

#include "esi/tensor.hpp"

namespace esi {

// N_c x N_p x l grid of channel-independent, temporally overlapping windows.
struct PatchGrid {
    Tensor patches;
    std::size_t length = 0;
    std::size_t stride = 0;
    std::size_t n_timepoints_original = 0;

    std::size_t n_channels() const { return patches.dim(0); }
    std::size_t n_patches() const { return patches.dim(1); }
    std::size_t padded_length() const { return (n_patches() - 1) * stride + length; }
};

// Shortest length >= n_timepoints reachable by whole windows.
std::size_t padded_length(std::size_t n_timepoints, std::size_t length, std::size_t stride);
std::size_t patch_count(std::size_t n_timepoints, std::size_t length, std::size_t overlap);

PatchGrid extract_patches(const Tensor& X, std::size_t length, std::size_t overlap);
// Overlap-add divided by per-sample coverage, trailing pad removed.
Tensor merge_patches(const PatchGrid& grid);
// Adjoint of merge_patches with respect to the patch values: d(loss)/d(patches) given d(loss)/d(X').
Tensor merge_patches_backward(const Tensor& grad_merged, const PatchGrid& geometry);

struct NormalizedFragment {
    Tensor X;
    double scale = 1.0;
};

// Divides by max |X|; all-zero input passes through with scale 1.
NormalizedFragment normalize_fragment(const Tensor& X);

}  // namespace esi
