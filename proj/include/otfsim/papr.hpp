#pragma once

// Oversampled PAPR and empirical CCDF accumulation.

#include "otfsim/common.hpp"
#include "otfsim/fft.hpp"
#include "otfsim/im.hpp"
#include "otfsim/otfs.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace otfsim::papr {

struct PaprSample {
    double papr_db = 0.0;
    long long frame_id = 0;
};

struct CcdfCurve {
    std::vector<double> thresholds_db;
    std::vector<double> exceed_prob;
};

inline constexpr int kDefaultOversampling = 4;

/// 0:0.1:14 dB.
inline std::vector<double> default_thresholds()
{
    std::vector<double> t;
    for (int i = 0; i <= 140; ++i) t.push_back(i / 10.0);
    return t;
}

/// Band-limited interpolation by J: the spectrum is zero-padded symmetrically
/// (an even-length Nyquist bin is split between both halves) and the result is
/// rescaled to the input's mean power.
inline otfs::TDFrame oversample(const otfs::TDFrame& frame, int j)
{
    require(j >= 1, "oversampling factor must be >= 1");
    require(frame.oversample_factor == 1, "frame is already oversampled");
    const Eigen::Index len = frame.samples.size();
    if (j == 1 || len == 0) return frame;

    const CVec spec = raw_dft(frame.samples);
    const Eigen::Index big = len * j;
    CVec padded = CVec::Zero(big);
    const Eigen::Index half = len / 2;
    if (len % 2 == 0) {
        for (Eigen::Index k = 0; k < half; ++k) padded(k) = spec(k);
        for (Eigen::Index k = half + 1; k < len; ++k) padded(big - len + k) = spec(k);
        padded(half) = spec(half) / 2.0;
        padded(big - half) = spec(half) / 2.0;
    } else {
        for (Eigen::Index k = 0; k <= half; ++k) padded(k) = spec(k);
        for (Eigen::Index k = half + 1; k < len; ++k) padded(big - len + k) = spec(k);
    }
    otfs::TDFrame out{raw_idft(padded) * static_cast<double>(j), j};
    const double before = frame.mean_power();
    const double after = out.mean_power();
    if (after > 0.0) out.samples *= std::sqrt(before / after);
    return out;
}

/// 10 log10(max |s|^2 / mean |s|^2). `mean_power` overrides the per-frame
/// mean, e.g. with an ensemble average.
inline double papr_db(const otfs::TDFrame& frame, std::optional<double> mean_power = std::nullopt)
{
    require(frame.samples.size() > 0, "empty frame");
    const double peak = frame.samples.cwiseAbs2().maxCoeff();
    const double mean = mean_power.value_or(frame.mean_power());
    if (!(mean > 0.0) || !(peak > 0.0)) throw NumericalError("PAPR undefined for an all-zero frame");
    return std::max(0.0, linear_to_db(peak / mean));
}

/// Exceedance counts P(PAPR > threshold) over fixed thresholds. Partial
/// accumulators combine by merge() in any grouping with identical results.
class CcdfAccumulator {
public:
    explicit CcdfAccumulator(std::vector<double> thresholds_db = default_thresholds())
        : thresholds_(std::move(thresholds_db)), exceed_(thresholds_.size(), 0)
    {
        require(std::is_sorted(thresholds_.begin(), thresholds_.end()), "thresholds must be ascending");
    }

    void add(double papr_db)
    {
        ++total_;
        // thresholds strictly below the sample are exceeded
        const auto it = std::lower_bound(thresholds_.begin(), thresholds_.end(), papr_db);
        const auto cnt = static_cast<std::size_t>(it - thresholds_.begin());
        for (std::size_t i = 0; i < cnt; ++i) ++exceed_[i];
    }

    void merge(const CcdfAccumulator& other)
    {
        require(other.thresholds_ == thresholds_, "cannot merge CCDFs with different thresholds");
        for (std::size_t i = 0; i < exceed_.size(); ++i) exceed_[i] += other.exceed_[i];
        total_ += other.total_;
    }

    long long total() const { return total_; }

    CcdfCurve curve() const
    {
        if (total_ == 0) throw ConfigError("CCDF of an empty ensemble");
        CcdfCurve c{thresholds_, std::vector<double>(thresholds_.size())};
        for (std::size_t i = 0; i < exceed_.size(); ++i) c.exceed_prob[i] = static_cast<double>(exceed_[i]) / static_cast<double>(total_);
        return c;
    }

private:
    std::vector<double> thresholds_;
    std::vector<long long> exceed_;
    long long total_ = 0;
};

inline CcdfCurve ccdf(const std::vector<PaprSample>& samples, const std::vector<double>& thresholds_db = default_thresholds())
{
    if (samples.empty()) throw ConfigError("CCDF of an empty ensemble");
    CcdfAccumulator acc(thresholds_db);
    for (const auto& s : samples) acc.add(s.papr_db);
    return acc.curve();
}

/// Smallest PAPR value gamma among the samples with P(PAPR > gamma) <= p.
inline double papr_at_exceedance(std::vector<double> papr_values, double p)
{
    require(!papr_values.empty(), "empty ensemble");
    require(p > 0.0 && p < 1.0, "exceedance probability must lie in (0, 1)");
    std::sort(papr_values.begin(), papr_values.end(), std::greater<>());
    const auto allowed = static_cast<std::size_t>(std::floor(p * static_cast<double>(papr_values.size())));
    return papr_values[std::min(allowed, papr_values.size() - 1)];
}

/// Worst-case TD peak power of a non-spread frame whose DD symbols have
/// |x|^2 <= max_symbol_power: with A_m possibly-active bins on delay row m the
/// peak is at most max_m A_m^2 max|x|^2 / N. For a full grid this is
/// N max|x|^2; with G = M it equals rho^2 N max|x|^2, rho = K_a / D.
inline double im_peak_bound(const im::IMConfig& cfg, double max_symbol_power, int m, int n)
{
    cfg.validate(m, n);
    std::vector<std::vector<int>> per_row(m, std::vector<int>(cfg.groups, 0));
    for (int g = 0; g < cfg.groups; ++g)
        for (int j = 0; j < cfg.group_size; ++j) ++per_row[static_cast<int>(im::interleaved_index(g, j, cfg.groups) % m)][g];
    int worst = 0;
    for (const auto& row : per_row) {
        int a = 0;
        for (int cnt : row) a += std::min(cnt, cfg.active_count());
        worst = std::max(worst, a);
    }
    return static_cast<double>(worst) * worst * max_symbol_power / n;
}

} // namespace otfsim::papr
