#pragma once

#include <vector>

#include "esi/geometry.hpp"
#include "esi/tensor.hpp"

namespace esi::eval {

inline constexpr double kDefaultSloretaLambda = 0.05;

// Standardized minimum-norm inverse. With C = G G^T + lambda * tr(G G^T) / N_c * I:
// T = G^T C^-1, J = T X, S(j, :) = J(j, :) / sqrt(R_jj), R = T G.
class SloretaSolver {
public:
    explicit SloretaSolver(const LeadField& lf, double lambda = kDefaultSloretaLambda);

    const Tensor& kernel() const noexcept { return kernel_; }  // T, N_s x N_c
    const std::vector<double>& resolution_diagonal() const noexcept { return resolution_; }
    double lambda() const noexcept { return lambda_; }

    // Standardized estimate, N_s x N_t.
    Tensor solve(const Tensor& X) const;

private:
    double lambda_;
    Tensor kernel_;
    Tensor standardized_;  // rows of T divided by sqrt(R_jj)
    std::vector<double> resolution_;
};

Tensor sloreta_solve(const LeadField& lf, const Tensor& X, double lambda = kDefaultSloretaLambda);

}  // namespace esi::eval
