#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace esi {

using Dims = std::vector<std::size_t>;

std::size_t dims_product(const Dims& dims);
std::string dims_to_string(const Dims& dims);

// Dense row-major tensor. Values are held in double precision in memory;
// the on-disk format stores f32.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Dims dims, double fill = 0.0);
    Tensor(Dims dims, std::vector<double> values);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
    static Tensor vector(std::vector<double> values);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }

    double& operator[](std::size_t i) noexcept { return values_[i]; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }

    // Rank-2 access.
    double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * dims_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * dims_[1] + c]; }

    // Rank-3 access.
    double& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return values_[(i * dims_[1] + j) * dims_[2] + k];
    }

    // Row view of a rank-2 tensor.
    std::span<double> row(std::size_t r) { return {values_.data() + r * dims_[1], dims_[1]}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * dims_[1], dims_[1]}; }

    Tensor reshaped(Dims dims) const;
    void fill(double v);

    bool all_finite() const noexcept;
    // Throws NumericalError naming `what` when any entry is NaN/Inf.
    void require_finite(const std::string& what) const;

    double max_abs() const noexcept;
    double sum_squares() const noexcept;

    Tensor& operator+=(const Tensor& other);
    Tensor& operator-=(const Tensor& other);
    Tensor& operator*=(double s) noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Dims dims_;
    std::vector<double> values_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

Tensor transpose(const Tensor& m);
// (n x k) * (k x m)
Tensor matmul(const Tensor& a, const Tensor& b);

void require_same_dims(const Tensor& a, const Tensor& b, const char* what);

}  // namespace esi
