#pragma once

// Delay-Doppler modulation, doubly-dispersive channel matrices and MMSE
// equalisation.
//
// Conventions used throughout the library:
//   * A DD grid is an M x N matrix, row = delay index l, column = Doppler
//     index k. Its vectorisation is column-major: element i <-> (i mod M, i / M).
//   * A time-domain frame has MN samples; sample nM + m is the m-th sample of
//     the n-th block. Modulation is an inverse unitary DFT along the Doppler
//     axis only, s[n, m] = 1/sqrt(N) sum_k S[m, k] exp(+j 2 pi n k / N), and
//     demodulation is its exact inverse.
//   * Channel paths sit on integer (delay, Doppler) bins with a cyclic delay
//     inside each block.

#include "otfsim/common.hpp"
#include "otfsim/fft.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace otfsim::otfs {

inline void check_grid_dims(int m, int n)
{
    require(m >= 2 && n >= 2, "DD grid dimensions must be >= 2");
    require(is_power_of_two(m) && is_power_of_two(n), "DD grid dimensions must be powers of two");
}

/// M x N symbol matrix on the delay-Doppler grid.
class DDGrid {
public:
    DDGrid(int m_delay, int n_doppler) : data_(CMat::Zero(m_delay, n_doppler))
    {
        check_grid_dims(m_delay, n_doppler);
    }

    explicit DDGrid(CMat data) : data_(std::move(data))
    {
        check_grid_dims(static_cast<int>(data_.rows()), static_cast<int>(data_.cols()));
    }

    static DDGrid from_vector(const CVec& v, int m_delay, int n_doppler)
    {
        require(v.size() == static_cast<Eigen::Index>(m_delay) * n_doppler, "DD vector length must be M*N");
        return DDGrid(CMat(Eigen::Map<const CMat>(v.data(), m_delay, n_doppler)));
    }

    int m_delay() const { return static_cast<int>(data_.rows()); }
    int n_doppler() const { return static_cast<int>(data_.cols()); }
    const CMat& data() const { return data_; }
    CMat& data() { return data_; }

    Complex operator()(int l, int k) const { return data_(l, k); }
    Complex& operator()(int l, int k) { return data_(l, k); }

    /// Column-major vectorisation.
    CVec vec() const { return Eigen::Map<const CVec>(data_.data(), data_.size()); }

    double energy() const { return data_.squaredNorm(); }

private:
    CMat data_;
};

/// Time-domain samples of one frame (critically sampled unless J > 1).
struct TDFrame {
    CVec samples;
    int oversample_factor = 1;

    double energy() const { return samples.squaredNorm(); }
    double mean_power() const { return samples.size() ? samples.squaredNorm() / static_cast<double>(samples.size()) : 0.0; }
};

struct Path {
    Complex gain{1.0, 0.0};
    int delay_idx = 0;
    int doppler_idx = 0;
    bool los = false;
};

/// One doubly-dispersive channel realisation on integer DD bins.
struct PathSet {
    std::vector<Path> paths;
    int l_max = 1; ///< number of delay taps L
    int k_max = 0;

    static PathSet identity() { return PathSet{{Path{{1.0, 0.0}, 0, 0, true}}, 1, 0}; }

    /// Checks the path-set invariants against an M x N grid.
    void validate(int m, int n) const
    {
        require(!paths.empty(), "path set is empty");
        require(static_cast<long long>(paths.size()) <= static_cast<long long>(m) * n, "more paths than grid bins");
        int los_count = 0;
        for (const auto& p : paths) {
            require(p.delay_idx >= 0 && p.delay_idx < m, "path delay index outside [0, M)");
            require(std::abs(p.doppler_idx) <= n / 2, "path Doppler index exceeds N/2");
            require(std::isfinite(p.gain.real()) && std::isfinite(p.gain.imag()), "path gain not finite");
            if (p.los) ++los_count;
        }
        require(los_count <= 1, "at most one LoS path allowed");
    }

    double total_power() const
    {
        double p = 0.0;
        for (const auto& path : paths) p += std::norm(path.gain);
        return p;
    }
};

/// Builds a path from real-valued indices; only on-grid (integer) values are accepted.
inline Path make_path(Complex gain, double delay_idx, double doppler_idx, bool los = false)
{
    require(std::floor(delay_idx) == delay_idx && std::floor(doppler_idx) == doppler_idx,
            "fractional delay/Doppler indices are not supported");
    return Path{gain, static_cast<int>(delay_idx), static_cast<int>(doppler_idx), los};
}

struct ChannelMatrices {
    CMat h_td;
    CMat h_dd;
};

/// DD grid -> time-domain frame (inverse unitary DFT along the Doppler axis).
inline TDFrame dd_modulate(const DDGrid& grid)
{
    const int m = grid.m_delay();
    const int n = grid.n_doppler();
    TDFrame frame;
    frame.samples.resize(static_cast<Eigen::Index>(m) * n);
    for (int l = 0; l < m; ++l) {
        const CVec row = grid.data().row(l).transpose();
        const CVec t = unitary_idft(row);
        for (int b = 0; b < n; ++b) frame.samples(static_cast<Eigen::Index>(b) * m + l) = t(b);
    }
    return frame;
}

/// Time-domain frame of length MN -> DD grid; exact inverse of dd_modulate.
inline DDGrid dd_demodulate(const TDFrame& frame, int m, int n)
{
    check_grid_dims(m, n);
    require(frame.samples.size() == static_cast<Eigen::Index>(m) * n, "frame length must equal M*N");
    DDGrid grid(m, n);
    for (int l = 0; l < m; ++l) {
        CVec line(n);
        for (int b = 0; b < n; ++b) line(b) = frame.samples(static_cast<Eigen::Index>(b) * m + l);
        grid.data().row(l) = unitary_dft(line).transpose();
    }
    return grid;
}

inline CVec modulate_vec(const CVec& dd, int m, int n) { return dd_modulate(DDGrid::from_vector(dd, m, n)).samples; }

inline CVec demodulate_vec(const CVec& td, int m, int n) { return dd_demodulate(TDFrame{td, 1}, m, n).vec(); }

/// Dense MN x MN matrix C with td = C * dd (column-major DD vectorisation).
inline CMat modulation_matrix(int m, int n)
{
    const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;
    CMat c(mn, mn);
    for (Eigen::Index j = 0; j < mn; ++j) c.col(j) = modulate_vec(CVec::Unit(mn, j), m, n);
    return c;
}

namespace detail {
inline Complex doppler_phase(int k, long long t, int l, long long mn)
{
    const double arg = 2.0 * kPi * static_cast<double>(k) * static_cast<double>(t - l) / static_cast<double>(mn);
    return {std::cos(arg), std::sin(arg)};
}

inline int wrap(int v, int m) { return ((v % m) + m) % m; }

// Noiseless channel output for one frame.
inline CVec propagate(const CVec& s, const PathSet& ps, int m, int n)
{
    const long long mn = static_cast<long long>(m) * n;
    CVec y = CVec::Zero(static_cast<Eigen::Index>(mn));
    for (const auto& p : ps.paths) {
        for (int b = 0; b < n; ++b) {
            for (int mm = 0; mm < m; ++mm) {
                const long long t = static_cast<long long>(b) * m + mm;
                const long long src = static_cast<long long>(b) * m + wrap(mm - p.delay_idx, m);
                y(t) += p.gain * doppler_phase(p.doppler_idx, t, p.delay_idx, mn) * s(src);
            }
        }
    }
    return y;
}
} // namespace detail

/// Time-domain channel matrix: row nM+m carries h_p w_MN^{k_p (nM+m-l_p)} at
/// column nM + <m - l_p>_M for every path. `n` may be 1 here.
inline CMat build_td_channel(const PathSet& ps, int m, int n)
{
    require(m >= 1 && n >= 1, "grid dimensions must be positive");
    for (const auto& p : ps.paths) require(p.delay_idx >= 0 && p.delay_idx < m, "path delay index outside [0, M)");
    const long long mn = static_cast<long long>(m) * n;
    CMat h = CMat::Zero(mn, mn);
    for (const auto& p : ps.paths) {
        for (int b = 0; b < n; ++b) {
            for (int mm = 0; mm < m; ++mm) {
                const long long t = static_cast<long long>(b) * m + mm;
                const long long col = static_cast<long long>(b) * m + detail::wrap(mm - p.delay_idx, m);
                h(t, col) += p.gain * detail::doppler_phase(p.doppler_idx, t, p.delay_idx, mn);
            }
        }
    }
    return h;
}

/// DD-domain channel matrix H_dd = C^H H_td C, so that
/// dd_demodulate(H_td dd_modulate(s)) == H_dd s by construction.
inline CMat build_dd_channel(const PathSet& ps, int m, int n)
{
    check_grid_dims(m, n);
    ps.validate(m, n);
    const Eigen::Index mn = static_cast<Eigen::Index>(m) * n;
    CMat h = CMat(mn, mn);
    for (Eigen::Index j = 0; j < mn; ++j) {
        const CVec td = modulate_vec(CVec::Unit(mn, j), m, n);
        h.col(j) = demodulate_vec(detail::propagate(td, ps, m, n), m, n);
    }
    return h;
}

inline ChannelMatrices build_channel_matrices(const PathSet& ps, int m, int n)
{
    return {build_td_channel(ps, m, n), build_dd_channel(ps, m, n)};
}

/// y = H s + v with v ~ CN(0, noise_var I). Deterministic given the RNG state.
inline TDFrame apply_channel(const TDFrame& frame, const PathSet& ps, int m, int n, double noise_var, Rng& rng)
{
    require(noise_var >= 0.0, "noise variance must be non-negative");
    require(frame.oversample_factor == 1, "channel expects a critically sampled frame");
    require(frame.samples.size() == static_cast<Eigen::Index>(m) * n, "frame length must equal M*N");
    for (const auto& p : ps.paths) require(p.delay_idx >= 0 && p.delay_idx < m, "path delay index outside [0, M)");
    TDFrame out{detail::propagate(frame.samples, ps, m, n), 1};
    if (noise_var > 0.0) {
        for (Eigen::Index i = 0; i < out.samples.size(); ++i) out.samples(i) += complex_normal(rng, noise_var);
    }
    return out;
}

inline constexpr double kMaxConditionNumber = 1e12;

/// Linear MMSE filter W = (H^H H + n0 I)^{-1} H^H, solved by LU with partial
/// pivoting. Throws NumericalError when the regularised Gram matrix has an
/// estimated condition number above 1e12.
inline CMat mmse_filter(const CMat& h, double n0)
{
    require(h.rows() == h.cols(), "channel matrix must be square");
    require(n0 >= 0.0, "noise power must be non-negative");
    CMat gram = h.adjoint() * h;
    gram.diagonal().array() += n0;
    Eigen::PartialPivLU<CMat> lu(gram);
    if (!(lu.rcond() * kMaxConditionNumber >= 1.0)) throw NumericalError("equalization failure: singular channel Gram matrix");
    return lu.solve(h.adjoint());
}

/// z = (H^H H + n0 I)^{-1} H^H y.
inline CVec mmse_equalize(const CVec& y_dd, const CMat& h_dd, double n0)
{
    require(h_dd.rows() == y_dd.size(), "channel/observation size mismatch");
    require(h_dd.rows() == h_dd.cols(), "channel matrix must be square");
    require(n0 >= 0.0, "noise power must be non-negative");
    CMat gram = h_dd.adjoint() * h_dd;
    gram.diagonal().array() += n0;
    Eigen::PartialPivLU<CMat> lu(gram);
    if (!(lu.rcond() * kMaxConditionNumber >= 1.0)) throw NumericalError("equalization failure: singular channel Gram matrix");
    return lu.solve(h_dd.adjoint() * y_dd);
}

} // namespace otfsim::otfs
