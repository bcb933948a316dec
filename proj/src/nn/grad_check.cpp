#include "esi/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "esi/error.hpp"

namespace esi::nn {

double grad_check(const DifferentiableFn& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw ParameterError("grad_check step must be > 0");
    Tensor analytic(x.dims());
    f(x, &analytic);
    require_same_dims(x, analytic, "grad_check analytic gradient");
    const double floor = 1e-4 * analytic.max_abs() + 1e-12;

    Tensor probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(probe, nullptr);
        probe[i] = orig - h;
        const double down = f(probe, nullptr);
        probe[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace esi::nn
