#pragma once

// 3-axis acceleration signals and their DFT321 spectral reduction.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hapmetric/error.hpp"
#include "hapmetric/fft.hpp"

namespace hapmetric {

/// One acceleration reading (ax, ay, az).
using Sample3 = std::array<double, 3>;

/// Raw 3-axis acceleration trace. Always holds >= 2 finite samples and a
/// positive sample rate; the constructor enforces this.
class Signal {
public:
    Signal(std::vector<Sample3> samples, double sample_rate_hz)
        : samples_(std::move(samples)), sample_rate_(sample_rate_hz) {
        detail::require(std::isfinite(sample_rate_) && sample_rate_ > 0.0,
                        "signal: sample rate must be positive and finite");
        detail::require(samples_.size() >= 2, "signal: at least 2 samples are required");
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            for (double v : samples_[i]) {
                if (!std::isfinite(v)) {
                    throw InvalidInput("signal: non-finite value at sample " + std::to_string(i));
                }
            }
        }
    }

    const std::vector<Sample3>& samples() const { return samples_; }
    double sample_rate() const { return sample_rate_; }
    std::size_t size() const { return samples_.size(); }
    double nyquist() const { return sample_rate_ / 2.0; }
    double duration() const { return static_cast<double>(samples_.size()) / sample_rate_; }

    std::vector<double> axis(std::size_t a) const {
        std::vector<double> out(samples_.size());
        for (std::size_t i = 0; i < samples_.size(); ++i) out[i] = samples_[i][a];
        return out;
    }

private:
    std::vector<Sample3> samples_;
    double sample_rate_;
};

/// Combined magnitude spectrum |Y(f)| on bins f = k * freq_resolution,
/// k = 0 .. floor(f_max / freq_resolution).
struct Spectrum {
    std::vector<double> magnitudes;
    double freq_resolution = 0.0;
    double f_max = 0.0;
    double nyquist = 0.0;  ///< of the source signal; upper bound for truncation

    std::size_t size() const { return magnitudes.size(); }
    double frequency(std::size_t k) const { return static_cast<double>(k) * freq_resolution; }
};

enum class Window { Rectangular, Hann };

namespace detail {

/// floor(f / df) with a small guard so exact multiples are not lost to rounding.
inline std::size_t bins_up_to(double f, double df) {
    return static_cast<std::size_t>(std::floor(f / df + 1e-9));
}

}  // namespace detail

/// DFT321 reduction: magnitude[k] = sqrt(|X(k)|^2 + |Y(k)|^2 + |Z(k)|^2) over
/// the non-negative frequencies up to Nyquist. No zero padding; the
/// resolution is sample_rate / length.
inline Spectrum dft321_magnitude(const Signal& signal, Window window = Window::Rectangular) {
    const std::size_t n = signal.size();
    std::vector<double> taper;
    if (window == Window::Hann) {
        taper.resize(n);
        for (std::size_t t = 0; t < n; ++t) {
            taper[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) /
                                             static_cast<double>(n));
        }
    }

    std::vector<double> energy(n / 2 + 1, 0.0);
    for (std::size_t a = 0; a < 3; ++a) {
        std::vector<double> x = signal.axis(a);
        if (!taper.empty()) {
            for (std::size_t t = 0; t < n; ++t) x[t] *= taper[t];
        }
        const auto bins = fft::real_dft(x);
        for (std::size_t k = 0; k < bins.size(); ++k) energy[k] += std::norm(bins[k]);
    }

    Spectrum out;
    out.magnitudes.resize(energy.size());
    for (std::size_t k = 0; k < energy.size(); ++k) out.magnitudes[k] = std::sqrt(energy[k]);
    out.freq_resolution = signal.sample_rate() / static_cast<double>(n);
    out.nyquist = signal.nyquist();
    out.f_max = out.nyquist;
    return out;
}

/// Keeps bins with frequency <= f_max and records f_max.
inline Spectrum truncate_spectrum(const Spectrum& spectrum, double f_max) {
    detail::require(std::isfinite(f_max) && f_max > 0.0, "truncate_spectrum: f_max must be positive");
    detail::require(f_max <= spectrum.nyquist * (1.0 + 1e-12),
                    "truncate_spectrum: f_max " + std::to_string(f_max) + " Hz exceeds Nyquist " +
                        std::to_string(spectrum.nyquist) + " Hz");
    detail::require(f_max <= spectrum.f_max * (1.0 + 1e-12) + spectrum.freq_resolution,
                    "truncate_spectrum: f_max exceeds the spectrum's current range");
    const std::size_t count =
        std::min(detail::bins_up_to(f_max, spectrum.freq_resolution) + 1, spectrum.size());

    Spectrum out;
    out.magnitudes.assign(spectrum.magnitudes.begin(),
                          spectrum.magnitudes.begin() + static_cast<std::ptrdiff_t>(count));
    out.freq_resolution = spectrum.freq_resolution;
    out.f_max = f_max;
    out.nyquist = spectrum.nyquist;
    return out;
}

}  // namespace hapmetric
