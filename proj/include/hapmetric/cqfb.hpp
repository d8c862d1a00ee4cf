#pragma once

// Constant-Q Gaussian filter bank (CQFB) and the per-bin spectral energy
// feature it produces.
//
// Centers and widths grow geometrically with ratio alpha and the last center
// sits exactly on f_max:
//
//     f_c[j] = alpha^(j-1) f_c[1],   sigma[j] = alpha^(j-1) sigma[1],
//     f_c[1] = f_max / alpha^(N-1),  exp(-f_c[1]^2 / (2 sigma[1]^2)) = 0.1
//
// so f_c[j] / sigma[j] = sqrt(2 ln 10) for every window. With alpha = 1 the
// geometric rule collapses all centers onto f_max; that case instead uses
// N equally spaced centers j f_max / N with a single shared width.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hapmetric/error.hpp"
#include "hapmetric/signal.hpp"

namespace hapmetric {

struct FilterBankConfig {
    std::size_t n_bins = 11;
    double alpha = 1.8;
    double f_max = 1000.0;

    void validate() const {
        detail::require(n_bins >= 2, "filter bank: N must be at least 2");
        detail::require(std::isfinite(alpha) && alpha >= 1.0, "filter bank: alpha must be >= 1");
        detail::require(std::isfinite(f_max) && f_max > 0.0, "filter bank: f_max must be positive");
    }
};

struct FilterBank {
    std::vector<double> centers;  ///< f_c[1..N], Hz
    std::vector<double> sigmas;   ///< sigma[1..N], Hz
    std::vector<double> edges;    ///< f[0..N], Hz; window j spans [edges[j-1], edges[j]]
    FilterBankConfig config;

    std::size_t size() const { return centers.size(); }

    /// Unit-peak Gaussian window j (0-based) evaluated at frequency f.
    double weight(std::size_t j, double f) const {
        const double d = (f - centers[j]) / sigmas[j];
        return std::exp(-0.5 * d * d);
    }
};

/// sqrt(2 ln 10): ratio f_c / sigma at which a window falls to 10% at DC.
inline const double kTenPercentQ = std::sqrt(2.0 * std::numbers::ln10);

inline FilterBank build_filter_bank(const FilterBankConfig& config) {
    config.validate();
    const std::size_t n = config.n_bins;
    FilterBank bank;
    bank.config = config;
    bank.centers.resize(n);
    bank.sigmas.resize(n);
    bank.edges.resize(n + 1);

    if (config.alpha > 1.0) {
        const double fc1 = config.f_max / std::pow(config.alpha, static_cast<double>(n - 1));
        const double sigma1 = fc1 / kTenPercentQ;
        for (std::size_t j = 0; j < n; ++j) {
            const double growth = std::pow(config.alpha, static_cast<double>(j));
            bank.centers[j] = growth * fc1;
            bank.sigmas[j] = growth * sigma1;
        }
        bank.centers[n - 1] = config.f_max;
        for (std::size_t j = 1; j < n; ++j) {
            bank.edges[j] = std::sqrt(bank.centers[j - 1] * bank.centers[j]);
        }
    } else {
        const double spacing = config.f_max / static_cast<double>(n);
        const double sigma = spacing / kTenPercentQ;
        for (std::size_t j = 0; j < n; ++j) {
            bank.centers[j] = static_cast<double>(j + 1) * spacing;
            bank.sigmas[j] = sigma;
        }
        bank.centers[n - 1] = config.f_max;
        for (std::size_t j = 1; j < n; ++j) {
            bank.edges[j] = 0.5 * (bank.centers[j - 1] + bank.centers[j]);
        }
    }
    bank.edges[0] = 0.0;
    bank.edges[n] = config.f_max;
    return bank;
}

/// How far each Gaussian window integrates.
enum class IntegrationMode {
    Full,     ///< whole truncated spectrum [0, f_max]
    Bounded,  ///< only the window's own bin [edges[j-1], edges[j]]
};

inline std::string to_string(IntegrationMode mode) {
    return mode == IntegrationMode::Full ? "full" : "bounded";
}

inline IntegrationMode parse_integration_mode(const std::string& text) {
    if (text == "full") return IntegrationMode::Full;
    if (text == "bounded") return IntegrationMode::Bounded;
    throw InvalidInput("unknown integration mode '" + text + "' (expected full|bounded)");
}

struct FeatureVector {
    std::vector<double> energies;
    std::optional<std::string> label;
};

/// a[j] = sum_w W_j(w) |Y(w)|^2 df over the integration support of window j.
inline FeatureVector extract_features(const Spectrum& spectrum, const FilterBank& bank,
                                      IntegrationMode mode = IntegrationMode::Full) {
    detail::require(!spectrum.magnitudes.empty(), "extract_features: empty spectrum");
    detail::require(spectrum.freq_resolution > 0.0, "extract_features: invalid frequency resolution");
    detail::require(std::abs(spectrum.f_max - bank.config.f_max) <= spectrum.freq_resolution,
                    "extract_features: spectrum f_max " + std::to_string(spectrum.f_max) +
                        " Hz does not match filter bank f_max " + std::to_string(bank.config.f_max) +
                        " Hz");

    const std::size_t n = bank.size();
    const double df = spectrum.freq_resolution;
    std::vector<double> power(spectrum.size());
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
        power[k] = spectrum.magnitudes[k] * spectrum.magnitudes[k];
    }

    FeatureVector out;
    out.energies.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; k < power.size(); ++k) {
            const double f = spectrum.frequency(k);
            if (mode == IntegrationMode::Bounded) {
                const bool last = (j + 1 == n);
                if (f < bank.edges[j]) continue;
                if (last ? f > bank.edges[j + 1] : f >= bank.edges[j + 1]) continue;
            }
            sum += bank.weight(j, f) * power[k];
        }
        out.energies[j] = sum * df;
    }
    return out;
}

/// Signal -> DFT321 -> truncate at the bank's f_max -> CQFB energies.
inline FeatureVector signal_features(const Signal& signal, const FilterBank& bank,
                                     IntegrationMode mode = IntegrationMode::Full) {
    return extract_features(truncate_spectrum(dft321_magnitude(signal), bank.config.f_max), bank,
                            mode);
}

/// Optional compression of the raw energies; log1p keeps them non-negative.
inline void apply_log_energy(FeatureVector& features) {
    for (double& a : features.energies) a = std::log1p(a);
}

}  // namespace hapmetric
