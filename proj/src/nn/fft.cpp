#include "esi/nn/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "esi/error.hpp"

namespace esi::nn {
namespace {

void require_power_of_two(std::size_t n) {
    if (!is_power_of_two(n)) throw ParameterError("FFT length " + std::to_string(n) + " is not a power of two");
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<std::complex<double>>& data, bool inverse) {
    const std::size_t n = data.size();
    require_power_of_two(n);
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                // Twiddles computed directly rather than by repeated multiplication to keep roundoff flat.
                const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
                const auto u = data[start + k];
                const auto v = data[start + k + len / 2] * w;
                data[start + k] = u + v;
                data[start + k + len / 2] = u - v;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& c : data) c *= inv;
    }
}

ComplexPair fft(std::span<const double> x) {
    require_power_of_two(x.size());
    std::vector<std::complex<double>> buf(x.begin(), x.end());
    fft_inplace(buf, false);
    ComplexPair out{std::vector<double>(x.size()), std::vector<double>(x.size())};
    for (std::size_t k = 0; k < buf.size(); ++k) {
        out.re[k] = buf[k].real();
        out.im[k] = buf[k].imag();
    }
    return out;
}

IfftResult ifft(const ComplexPair& spectrum) {
    if (spectrum.re.size() != spectrum.im.size()) throw ParameterError("ifft: real/imaginary length mismatch");
    require_power_of_two(spectrum.re.size());
    std::vector<std::complex<double>> buf(spectrum.re.size());
    for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = {spectrum.re[k], spectrum.im[k]};
    fft_inplace(buf, true);
    IfftResult out{std::vector<double>(buf.size()), 0.0};
    for (std::size_t n = 0; n < buf.size(); ++n) {
        out.real[n] = buf[n].real();
        out.imag_energy += buf[n].imag() * buf[n].imag();
    }
    return out;
}

// re_k = sum_n x_n cos(t), im_k = -sum_n x_n sin(t), t = 2 pi k n / N
// => dx_n = sum_k g_re cos(t) - g_im sin(t) = N * Re(ifft(g_re + i g_im))_n
std::vector<double> fft_backward(const ComplexPair& grad_spectrum) {
    if (grad_spectrum.re.size() != grad_spectrum.im.size()) throw ParameterError("fft_backward: length mismatch");
    const std::size_t n = grad_spectrum.re.size();
    require_power_of_two(n);
    std::vector<std::complex<double>> buf(n);
    for (std::size_t k = 0; k < n; ++k) buf[k] = {grad_spectrum.re[k], grad_spectrum.im[k]};
    fft_inplace(buf, true);
    std::vector<double> dx(n);
    for (std::size_t i = 0; i < n; ++i) dx[i] = static_cast<double>(n) * buf[i].real();
    return dx;
}

// y_n = (1/N) sum_k re_k cos(t) - im_k sin(t)
// => d re_k = (1/N) Re(fft(g))_k, d im_k = (1/N) Im(fft(g))_k
ComplexPair ifft_backward(std::span<const double> grad_real) {
    const std::size_t n = grad_real.size();
    require_power_of_two(n);
    auto spec = fft(grad_real);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        spec.re[k] *= inv;
        spec.im[k] *= inv;
    }
    return spec;
}

}  // namespace esi::nn
