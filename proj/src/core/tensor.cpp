#include "esi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "esi/error.hpp"

namespace esi {

std::size_t dims_product(const Dims& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::string dims_to_string(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << 'x';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)), values_(dims_product(dims_), fill) {}

Tensor::Tensor(Dims dims, std::vector<double> values) : dims_(std::move(dims)), values_(std::move(values)) {
    if (values_.size() != dims_product(dims_)) {
        throw ParameterError("tensor value count " + std::to_string(values_.size()) + " does not match dims " +
                             dims_to_string(dims_));
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::reshaped(Dims dims) const {
    if (dims_product(dims) != size()) {
        throw ParameterError("cannot reshape " + dims_to_string(dims_) + " to " + dims_to_string(dims));
    }
    return Tensor(std::move(dims), values_);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericalError("non-finite value in " + what);
}

double Tensor::max_abs() const noexcept {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

double Tensor::sum_squares() const noexcept {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return s;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require_same_dims(*this, other, "tensor +=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    require_same_dims(*this, other, "tensor -=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor transpose(const Tensor& m) {
    if (m.rank() != 2) throw ParameterError("transpose expects a matrix, got " + dims_to_string(m.dims()));
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    Tensor t({cols, rows});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) t(c, r) = m(r, c);
    return t;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ParameterError("matmul shape mismatch: " + dims_to_string(a.dims()) + " * " + dims_to_string(b.dims()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const double* brow = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

void require_same_dims(const Tensor& a, const Tensor& b, const char* what) {
    if (a.dims() != b.dims()) {
        throw ParameterError(std::string(what) + ": shape mismatch " + dims_to_string(a.dims()) + " vs " +
                             dims_to_string(b.dims()));
    }
}

}  // namespace esi
