#pragma once

// Thin RAII layer over FFTW's real-input transforms.
//
// FFTW's planner is not thread safe, so plan creation and destruction are
// serialized on one mutex; executing a plan is safe concurrently. Buffers are
// always fftw_malloc'ed so the chosen codelets do not depend on caller
// alignment, which keeps results bit-identical across calls.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "hapmetric/error.hpp"

namespace hapmetric::fft {

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> allocate(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
    if (p == nullptr) throw std::bad_alloc();
    return FftwBuffer<T>(p);
}

class Plan {
public:
    explicit Plan(fftw_plan plan) : plan_(plan) {
        if (plan_ == nullptr) throw ComputationError("FFTW failed to create a plan");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

}  // namespace detail

/// Unnormalized forward DFT of a real sequence: X[k] = sum_t x[t] e^{-2 pi i k t / n},
/// returning the n/2 + 1 non-negative frequency bins.
inline std::vector<std::complex<double>> real_dft(std::span<const double> x) {
    const std::size_t n = x.size();
    hapmetric::detail::require(n >= 1, "real_dft: empty input");
    const std::size_t bins = n / 2 + 1;

    auto in = detail::allocate<double>(n);
    auto out = detail::allocate<fftw_complex>(bins);
    std::unique_ptr<detail::Plan> plan;
    {
        std::lock_guard lock(detail::planner_mutex());
        plan = std::make_unique<detail::Plan>(
            fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
    }
    for (std::size_t i = 0; i < n; ++i) in[i] = x[i];
    plan->execute();

    std::vector<std::complex<double>> result(bins);
    for (std::size_t k = 0; k < bins; ++k) result[k] = {out[k][0], out[k][1]};
    return result;
}

/// Inverse of real_dft: reconstructs n real samples from n/2 + 1 bins
/// (scaled by 1/n, so inverse_real_dft(real_dft(x), x.size()) == x).
inline std::vector<double> inverse_real_dft(std::span<const std::complex<double>> spectrum,
                                            std::size_t n) {
    const std::size_t bins = n / 2 + 1;
    hapmetric::detail::require(n >= 1 && spectrum.size() == bins,
                               "inverse_real_dft: spectrum size must be n/2 + 1");

    auto in = detail::allocate<fftw_complex>(bins);
    auto out = detail::allocate<double>(n);
    std::unique_ptr<detail::Plan> plan;
    {
        std::lock_guard lock(detail::planner_mutex());
        plan = std::make_unique<detail::Plan>(
            fftw_plan_dft_c2r_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE));
    }
    // c2r planning may clobber the input array, so fill after planning
    for (std::size_t k = 0; k < bins; ++k) {
        in[k][0] = spectrum[k].real();
        in[k][1] = spectrum[k].imag();
    }
    plan->execute();

    std::vector<double> result(n);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) result[i] = out[i] * scale;
    return result;
}

}  // namespace hapmetric::fft
