#include <array>
#include <cmath>
#include <sstream>

#include "esi/error.hpp"
#include "esi/nmm.hpp"
#include "esi/rng.hpp"

namespace esi {
namespace {

constexpr double kBlowUpThreshold = 1e6;

using State = std::array<double, 6>;

struct Derivative {
    const JansenRitParams& p;

    double sigmoid(double v) const { return 2.0 * p.e0 / (1.0 + std::exp(p.r_sig * (p.v0 - v))); }

    State operator()(const State& y, double input) const {
        const double c1 = p.c1_ratio * p.C, c2 = p.c2_ratio * p.C;
        const double c3 = p.c3_ratio * p.C, c4 = p.c4_ratio * p.C;
        State d{};
        d[0] = y[3];
        d[1] = y[4];
        d[2] = y[5];
        d[3] = p.A * p.a * sigmoid(y[1] - y[2]) - 2.0 * p.a * y[3] - p.a * p.a * y[0];
        d[4] = p.A * p.a * (input + c2 * sigmoid(c1 * y[0])) - 2.0 * p.a * y[4] - p.a * p.a * y[1];
        d[5] = p.B * p.b * c4 * sigmoid(c3 * y[0]) - 2.0 * p.b * y[5] - p.b * p.b * y[2];
        return d;
    }
};

State axpy(const State& y, double h, const State& k) {
    State out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[i] + h * k[i];
    return out;
}

// Piecewise-constant extrinsic drive. Values are drawn per hold interval in order, so the
// realization is independent of the integration step.
class InputProcess {
public:
    InputProcess(const JansenRitParams& p, std::uint64_t seed) : p_(p), rng_(seed) {}

    double at(std::size_t interval) {
        while (values_.size() <= interval) draw_next();
        return values_[interval];
    }

private:
    void draw_next() {
        double v = p_.input_mean + p_.input_std * rng_.normal();
        const double pulse_draw = rng_.uniform();
        if (p_.pulse_rate > 0.0 && pulse_draw < p_.pulse_rate * p_.input_hold) {
            pulse_left_ = static_cast<std::size_t>(std::llround(p_.pulse_width / p_.input_hold));
        }
        if (pulse_left_ > 0) {
            v += p_.pulse_amplitude;
            --pulse_left_;
        }
        values_.push_back(v);
    }

    const JansenRitParams& p_;
    Rng rng_;
    std::vector<double> values_;
    std::size_t pulse_left_ = 0;
};

}  // namespace

void JansenRitParams::validate() const {
    const auto positive = [&](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string("Jansen-Rit ") + name + " must be > 0");
    };
    positive(A, "A");
    positive(B, "B");
    positive(a, "a");
    positive(b, "b");
    positive(C, "C");
    positive(c1_ratio, "c1_ratio");
    positive(c2_ratio, "c2_ratio");
    positive(c3_ratio, "c3_ratio");
    positive(c4_ratio, "c4_ratio");
    positive(e0, "e0");
    positive(v0, "v0");
    positive(r_sig, "r_sig");
    positive(dt, "dt");
    positive(input_hold, "input_hold");
    if (dt > 1e-3) throw ParameterError("Jansen-Rit dt must be <= 1e-3 s");
    if (!(burn_in >= 0.0)) throw ParameterError("Jansen-Rit burn_in must be >= 0");
    if (input_std < 0.0 || input_mean < 0.0) throw ParameterError("Jansen-Rit input mean/std must be >= 0");
    if (pulse_rate < 0.0 || pulse_width < 0.0) throw ParameterError("Jansen-Rit pulse settings must be >= 0");
}

std::string JansenRitParams::describe() const {
    std::ostringstream os;
    os << "A=" << A << " B=" << B << " a=" << a << " b=" << b << " C=" << C << " C2/C=" << c2_ratio
       << " input_mean=" << input_mean << " input_std=" << input_std << " dt=" << dt;
    return os.str();
}

JansenRitParams jansen_rit_preset(const std::string& name) {
    JansenRitParams p;
    if (name == "alpha") return p;
    if (name == "spike") {
        p.c2_ratio = 0.9;
        p.pulse_rate = 2.0;
        p.pulse_amplitude = 300.0;
        p.pulse_width = 0.02;
        return p;
    }
    throw ParameterError("unknown Jansen-Rit preset '" + name + "' (expected alpha or spike)");
}

JansenRitParams ParameterJitter::apply(const JansenRitParams& base, std::uint64_t seed) const {
    Rng rng(seed);
    JansenRitParams p = base;
    const auto scale = [&](double& v, double frac) {
        const double u = rng.uniform(-1.0, 1.0);
        v *= 1.0 + frac * u;
    };
    scale(p.A, A);
    scale(p.B, B);
    scale(p.a, a);
    scale(p.b, b);
    scale(p.C, C);
    scale(p.input_mean, input_mean);
    return p;
}

std::vector<double> simulate_jansen_rit(const JansenRitParams& params, std::size_t n_timepoints, double sample_rate,
                                        std::uint64_t seed) {
    params.validate();
    if (!(sample_rate >= 100.0)) throw ParameterError("sample_rate must be >= 100 Hz");
    if (n_timepoints == 0) throw ParameterError("n_timepoints must be > 0");

    const double dt = params.dt;
    const auto step_at = [&](double t) { return static_cast<std::size_t>(std::llround(t / dt)); };
    const std::size_t first_output = step_at(params.burn_in);
    const double sample_period = 1.0 / sample_rate;
    const std::size_t last_step = step_at(params.burn_in + static_cast<double>(n_timepoints - 1) * sample_period);

    Derivative f{params};
    InputProcess input(params, seed);
    State y{};
    std::vector<double> out;
    out.reserve(n_timepoints);
    std::size_t next_sample = 0;
    for (std::size_t step = 0;; ++step) {
        if (step >= first_output && next_sample < n_timepoints &&
            step == step_at(params.burn_in + static_cast<double>(next_sample) * sample_period)) {
            out.push_back(y[1] - y[2]);
            ++next_sample;
        }
        if (step >= last_step) break;
        // The drive is constant across the RK4 stages of a step.
        const double t = static_cast<double>(step) * dt;
        const double p = input.at(static_cast<std::size_t>(std::floor(t / params.input_hold + 1e-9)));
        const State k1 = f(y, p);
        const State k2 = f(axpy(y, 0.5 * dt, k1), p);
        const State k3 = f(axpy(y, 0.5 * dt, k2), p);
        const State k4 = f(axpy(y, dt, k3), p);
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(y[i]) || std::abs(y[i]) > kBlowUpThreshold) {
                throw NumericalError("Jansen-Rit integration blew up at t=" + std::to_string(t) +
                                     " s with parameters " + params.describe());
            }
        }
    }
    if (out.size() != n_timepoints) throw NumericalError("Jansen-Rit sampling produced an unexpected length");

    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(out.size());
    for (double& v : out) v -= mean;
    return out;
}

}  // namespace esi
