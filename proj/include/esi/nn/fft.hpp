#pragma once

#include <complex>
#include <span>
#include <vector>

namespace esi::nn {

// Real and imaginary parts of a spectrum, equal length.
struct ComplexPair {
    std::vector<double> re;
    std::vector<double> im;
};

bool is_power_of_two(std::size_t n);

// In-place iterative radix-2 transform. inverse=true uses e^{+i...} and divides by n.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

ComplexPair fft(std::span<const double> x);

struct IfftResult {
    std::vector<double> real;
    // Energy of the discarded imaginary part; nonzero when the spectrum is not conjugate-symmetric.
    double imag_energy = 0.0;
};

// Inverse transform returning the real part.
IfftResult ifft(const ComplexPair& spectrum);

// Vector-Jacobian products.
std::vector<double> fft_backward(const ComplexPair& grad_spectrum);
ComplexPair ifft_backward(std::span<const double> grad_real);

}  // namespace esi::nn
