#include "esi/eval/sloreta.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "esi/error.hpp"

namespace esi::eval {

SloretaSolver::SloretaSolver(const LeadField& lf, double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("sLORETA lambda must be finite and >= 0");
    const Tensor& g = lf.matrix();
    const auto nc = static_cast<Eigen::Index>(lf.n_channels()), ns = static_cast<Eigen::Index>(lf.n_regions());
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMatrix> G(g.data(), nc, ns);

    Eigen::MatrixXd C = G * G.transpose();
    const double reg = lambda * C.trace() / static_cast<double>(nc);
    C.diagonal().array() += reg;

    Eigen::MatrixXd CinvG;
    if (lambda == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
        if (lu.rank() < nc) {
            throw NumericalError("sLORETA: G G^T is singular (rank " + std::to_string(lu.rank()) + " < " +
                                 std::to_string(nc) + ") and lambda = 0");
        }
        CinvG = lu.solve(G);
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
        if (ldlt.info() != Eigen::Success) throw NumericalError("sLORETA: regularized Gram matrix is not invertible");
        CinvG = ldlt.solve(G);
    }
    // C is symmetric, so T = G^T C^-1 = (C^-1 G)^T.
    kernel_ = Tensor({lf.n_regions(), lf.n_channels()});
    standardized_ = Tensor(kernel_.dims());
    resolution_.assign(lf.n_regions(), 0.0);
    for (Eigen::Index j = 0; j < ns; ++j) {
        double rjj = 0.0;
        for (Eigen::Index c = 0; c < nc; ++c) {
            kernel_(j, c) = CinvG(c, j);
            rjj += CinvG(c, j) * G(c, j);
        }
        if (!(rjj > 0.0)) throw NumericalError("sLORETA: non-positive resolution diagonal at region " + std::to_string(j));
        resolution_[j] = rjj;
        const double inv = 1.0 / std::sqrt(rjj);
        for (Eigen::Index c = 0; c < nc; ++c) standardized_(j, c) = kernel_(j, c) * inv;
    }
}

Tensor SloretaSolver::solve(const Tensor& X) const {
    if (X.rank() != 2 || X.dim(0) != kernel_.dim(1)) {
        throw ParameterError("sLORETA: fragment " + dims_to_string(X.dims()) + " does not match " +
                             std::to_string(kernel_.dim(1)) + " channels");
    }
    X.require_finite("sLORETA input");
    return matmul(standardized_, X);
}

Tensor sloreta_solve(const LeadField& lf, const Tensor& X, double lambda) { return SloretaSolver(lf, lambda).solve(X); }

}  // namespace esi::eval
