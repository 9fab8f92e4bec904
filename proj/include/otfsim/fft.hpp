#pragma once

#include "otfsim/common.hpp"

#include <unsupported/Eigen/FFT>

namespace otfsim {

namespace detail {
inline Eigen::FFT<double>& fft_engine()
{
    // kissfft caches twiddles per size; one engine per thread.
    thread_local Eigen::FFT<double> engine;
    return engine;
}
} // namespace detail

/// Unitary forward DFT: X[k] = 1/sqrt(n) sum_t x[t] exp(-j 2 pi t k / n).
inline CVec unitary_dft(const CVec& x)
{
    if (x.size() == 0) return x;
    CVec out(x.size());
    detail::fft_engine().fwd(out, x);
    return out / std::sqrt(static_cast<double>(x.size()));
}

/// Unitary inverse DFT: x[t] = 1/sqrt(n) sum_k X[k] exp(+j 2 pi t k / n).
inline CVec unitary_idft(const CVec& x)
{
    if (x.size() == 0) return x;
    CVec out(x.size());
    detail::fft_engine().inv(out, x); // scaled by 1/n
    return out * std::sqrt(static_cast<double>(x.size()));
}

/// Unscaled forward DFT.
inline CVec raw_dft(const CVec& x)
{
    CVec out(x.size());
    detail::fft_engine().fwd(out, x);
    return out;
}

/// Inverse DFT including the 1/n factor.
inline CVec raw_idft(const CVec& x)
{
    CVec out(x.size());
    detail::fft_engine().inv(out, x);
    return out;
}

} // namespace otfsim
