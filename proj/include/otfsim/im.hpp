#pragma once

// Bit-to-grid mapping for grouped index modulation: combinatorial null
// patterns plus Gray-labelled square QAM, DFT spreading, the stride
// interleaver that places groups on the DD grid, and spectral efficiency.

#include "otfsim/common.hpp"
#include "otfsim/fft.hpp"
#include "otfsim/otfs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace otfsim::im {

enum class Scheme { fim_single_null, gfim_combinatorial };

/// Length of the DFT-spreading transform inside a group.
enum class SpreadMode {
    band,         ///< one length-D transform over the whole group
    doppler_line, ///< one transform per delay row, over the group's Doppler bins
};

namespace detail {
inline std::uint64_t binomial(int n, int k)
{
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
        if (r > (static_cast<unsigned __int128>(1) << 62)) throw ConfigError("pattern count overflows 62 bits");
    }
    return static_cast<std::uint64_t>(r);
}

inline int floor_log2(std::uint64_t v)
{
    int r = -1;
    while (v) {
        v >>= 1;
        ++r;
    }
    return r;
}
} // namespace detail

struct IMConfig {
    int groups = 2;      ///< G
    int group_size = 8;  ///< D = MN / G (a.k.a. N_f)
    int null_count = 2;  ///< K_z
    int constellation_order = 4;
    bool dft_spread = false;
    SpreadMode spread_mode = SpreadMode::band;
    Scheme scheme = Scheme::gfim_combinatorial;

    int active_count() const { return group_size - null_count; }
    int bits_per_symbol() const { return ilog2(constellation_order); }

    int index_bits() const
    {
        if (null_count == 0) return 0;
        if (scheme == Scheme::fim_single_null) return ilog2(group_size);
        return detail::floor_log2(detail::binomial(group_size, null_count));
    }

    int modulation_bits() const { return active_count() * bits_per_symbol(); }
    int bits_per_group() const { return index_bits() + modulation_bits(); }
    int bits_per_frame() const { return groups * bits_per_group(); }
    std::uint64_t pattern_count() const { return std::uint64_t{1} << index_bits(); }

    void validate() const
    {
        require(groups >= 1 && group_size >= 1, "group count and size must be positive");
        require(constellation_order == 4 || constellation_order == 16, "constellation order must be 4 or 16");
        require(null_count >= 0 && null_count <= group_size - 1, "null count must lie in [0, D-1]");
        require(active_count() >= 1, "at least one active slot per group");
        if (scheme == Scheme::fim_single_null) {
            require(null_count == 1, "single-null IM requires exactly one null");
            require(is_power_of_two(group_size), "single-null IM requires a power-of-two group size");
        } else if (null_count >= 1) {
            require(index_bits() >= 1, "combinatorial IM must carry at least one index bit");
        }
        require(index_bits() <= 62, "too many index bits");
    }

    void validate(int m, int n) const
    {
        validate();
        require(static_cast<long long>(groups) * group_size == static_cast<long long>(m) * n, "G * D must equal M * N");
    }

    static IMConfig standard(int m, int n, int groups, int q)
    {
        IMConfig c;
        c.groups = groups;
        c.group_size = m * n / groups;
        c.null_count = 0;
        c.constellation_order = q;
        return c;
    }
};

/// Unit-average-power square QAM with Gray labelling. Symbol label q has bits
/// (MSB first) split into an in-phase half and a quadrature half.
class Qam {
public:
    explicit Qam(int order) : order_(order), bits_(ilog2(order))
    {
        require(order == 4 || order == 16, "constellation order must be 4 or 16");
        const int half = bits_ / 2;
        const int levels = 1 << half;
        const double scale = std::sqrt(2.0 * (order - 1) / 3.0);
        points_.resize(order);
        for (int q = 0; q < order; ++q) {
            const int ib = q >> half;
            const int qb = q & (levels - 1);
            points_[q] = Complex(pam_level(ib, levels), pam_level(qb, levels)) / scale;
        }
        max_power_ = 0.0;
        for (const auto& p : points_) max_power_ = std::max(max_power_, std::norm(p));
    }

    int order() const { return order_; }
    int bits_per_symbol() const { return bits_; }
    Complex point(int label) const { return points_[label]; }
    const std::vector<Complex>& points() const { return points_; }
    double max_power() const { return max_power_; }

    int bit(int label, int b) const { return (label >> (bits_ - 1 - b)) & 1; }

    int nearest(Complex z) const
    {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int q = 0; q < order_; ++q) {
            const double d = std::norm(z - points_[q]);
            if (d < bd) {
                bd = d;
                best = q;
            }
        }
        return best;
    }

    int label_from_bits(std::span<const std::uint8_t> b) const
    {
        int q = 0;
        for (int i = 0; i < bits_; ++i) q = (q << 1) | (b[i] & 1);
        return q;
    }

private:
    // Gray-coded PAM level for a `levels`-ary axis: bits 00,01,11,10 -> -3,-1,1,3.
    static double pam_level(int gray_bits, int levels)
    {
        int bin = gray_bits;
        for (int s = 1; s < levels; s <<= 1) bin ^= gray_bits >> s;
        return 2.0 * bin - (levels - 1);
    }

    int order_;
    int bits_;
    std::vector<Complex> points_;
    double max_power_ = 1.0;
};

/// Lexicographic unranking of k-subsets of {0..n-1}: rank 0 = {0, 1, ..., k-1}.
inline std::vector<int> unrank_combination(std::uint64_t rank, int n, int k)
{
    require(rank < detail::binomial(n, k) || (k == 0 && rank == 0), "combination rank out of range");
    std::vector<int> out;
    out.reserve(k);
    int next = 0;
    for (int pos = 0; pos < k; ++pos) {
        for (int v = next;; ++v) {
            const std::uint64_t c = detail::binomial(n - v - 1, k - pos - 1);
            if (rank < c) {
                out.push_back(v);
                next = v + 1;
                break;
            }
            rank -= c;
        }
    }
    return out;
}

inline std::uint64_t rank_combination(std::span<const int> subset, int n)
{
    const int k = static_cast<int>(subset.size());
    std::uint64_t rank = 0;
    int prev = -1;
    for (int pos = 0; pos < k; ++pos) {
        for (int v = prev + 1; v < subset[pos]; ++v) rank += detail::binomial(n - v - 1, k - pos - 1);
        prev = subset[pos];
    }
    return rank;
}

/// Null positions addressed by pattern rank (sorted).
inline std::vector<int> null_positions(std::uint64_t rank, const IMConfig& cfg)
{
    return unrank_combination(rank, cfg.group_size, cfg.null_count);
}

inline std::vector<int> active_positions(std::uint64_t rank, const IMConfig& cfg)
{
    const auto nulls = null_positions(rank, cfg);
    std::vector<int> act;
    act.reserve(cfg.active_count());
    std::size_t z = 0;
    for (int i = 0; i < cfg.group_size; ++i) {
        if (z < nulls.size() && nulls[z] == i) {
            ++z;
            continue;
        }
        act.push_back(i);
    }
    return act;
}

struct IMSubblock {
    CVec symbols;                    ///< length D, exactly K_z zeros
    std::vector<int> active_pattern; ///< sorted active slots
    std::uint64_t pattern_rank = 0;
    std::vector<int> labels; ///< QAM label per active slot
};

/// Splits a frame's bits into G equal groups.
inline std::vector<Bits> split_bits(std::span<const std::uint8_t> bits, const IMConfig& cfg)
{
    const std::size_t bg = static_cast<std::size_t>(cfg.bits_per_group());
    require(bits.size() == bg * static_cast<std::size_t>(cfg.groups), "bit count must equal G * b_g");
    std::vector<Bits> out(cfg.groups);
    for (int g = 0; g < cfg.groups; ++g) out[g].assign(bits.begin() + g * bg, bits.begin() + (g + 1) * bg);
    return out;
}

inline Bits merge_bits(const std::vector<Bits>& groups)
{
    Bits out;
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    return out;
}

/// Index bits (MSB first) select the pattern rank; the remaining bits are
/// consumed log2(Q) at a time by the active slots in ascending order.
inline IMSubblock im_map(std::span<const std::uint8_t> group_bits, const IMConfig& cfg, const Qam& qam)
{
    require(static_cast<int>(group_bits.size()) == cfg.bits_per_group(), "group bit count mismatch");
    const int ib = cfg.index_bits();
    std::uint64_t rank = 0;
    for (int i = 0; i < ib; ++i) rank = (rank << 1) | (group_bits[i] & 1);

    IMSubblock blk;
    blk.pattern_rank = rank;
    blk.active_pattern = active_positions(rank, cfg);
    blk.symbols = CVec::Zero(cfg.group_size);
    const int bps = qam.bits_per_symbol();
    int pos = ib;
    for (int slot : blk.active_pattern) {
        const int label = qam.label_from_bits(group_bits.subspan(pos, bps));
        blk.labels.push_back(label);
        blk.symbols(slot) = qam.point(label);
        pos += bps;
    }
    return blk;
}

inline IMSubblock im_map(std::span<const std::uint8_t> group_bits, const IMConfig& cfg)
{
    return im_map(group_bits, cfg, Qam(cfg.constellation_order));
}

/// Bits carried by a (pattern rank, labels) pair.
inline Bits subblock_bits(std::uint64_t rank, std::span<const int> labels, const IMConfig& cfg, const Qam& qam)
{
    Bits out;
    out.reserve(cfg.bits_per_group());
    const int ib = cfg.index_bits();
    for (int i = ib - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((rank >> i) & 1));
    for (int label : labels)
        for (int b = 0; b < qam.bits_per_symbol(); ++b) out.push_back(static_cast<std::uint8_t>(qam.bit(label, b)));
    return out;
}

struct HardDecision {
    Bits bits;
    IMSubblock subblock;
};

/// Exhaustive minimum-distance detection over the addressed patterns with
/// per-slot nearest-symbol decisions. Ties resolve to the lowest pattern rank.
/// `noise_var` does not affect the decision (equal priors).
inline HardDecision im_demap_ml(const CVec& z, double noise_var, const IMConfig& cfg, const Qam& qam)
{
    (void)noise_var;
    require(z.size() == cfg.group_size, "sub-block length mismatch");
    const int d = cfg.group_size;
    std::vector<int> best_label(d);
    std::vector<double> gain(d); // |z|^2 - min_q |z - x_q|^2: saving from activating the slot
    for (int i = 0; i < d; ++i) {
        best_label[i] = qam.nearest(z(i));
        gain[i] = std::norm(z(i)) - std::norm(z(i) - qam.point(best_label[i]));
    }
    std::uint64_t best_rank = 0;
    double best_metric = std::numeric_limits<double>::infinity();
    const std::uint64_t patterns = cfg.pattern_count();
    for (std::uint64_t r = 0; r < patterns; ++r) {
        // metric relative to sum |z|^2: subtract gains of the active slots
        double metric = 0.0;
        if (cfg.null_count > 0) {
            for (int zpos : null_positions(r, cfg)) metric += gain[zpos];
        }
        if (metric < best_metric) {
            best_metric = metric;
            best_rank = r;
        }
    }
    HardDecision out;
    out.subblock.pattern_rank = best_rank;
    out.subblock.active_pattern = active_positions(best_rank, cfg);
    out.subblock.symbols = CVec::Zero(d);
    for (int slot : out.subblock.active_pattern) {
        out.subblock.labels.push_back(best_label[slot]);
        out.subblock.symbols(slot) = qam.point(best_label[slot]);
    }
    out.bits = subblock_bits(best_rank, out.subblock.labels, cfg, qam);
    return out;
}

inline HardDecision im_demap_ml(const CVec& z, double noise_var, const IMConfig& cfg)
{
    return im_demap_ml(z, noise_var, cfg, Qam(cfg.constellation_order));
}

/// Unitary DFT spreading (forward transform, the inverse of the Doppler-axis
/// transform used by the modulator).
inline CVec dft_spread(const CVec& x) { return unitary_dft(x); }
inline CVec dft_despread(const CVec& x) { return unitary_idft(x); }

/// DD-vector index of element j of group g: i = g + j G.
inline long long interleaved_index(int g, int j, int groups) { return static_cast<long long>(g) + static_cast<long long>(j) * groups; }

inline otfs::DDGrid interleave(const std::vector<CVec>& subblocks, int m, int n)
{
    const int groups = static_cast<int>(subblocks.size());
    require(groups >= 1, "no sub-blocks");
    const long long mn = static_cast<long long>(m) * n;
    require(mn % groups == 0, "G must divide M * N");
    const int d = static_cast<int>(mn / groups);
    CVec v(mn);
    for (int g = 0; g < groups; ++g) {
        require(subblocks[g].size() == d, "sub-block size mismatch");
        for (int j = 0; j < d; ++j) v(interleaved_index(g, j, groups)) = subblocks[g](j);
    }
    return otfs::DDGrid::from_vector(v, m, n);
}

inline std::vector<CVec> deinterleave_vec(const CVec& v, int groups)
{
    require(groups >= 1 && v.size() % groups == 0, "G must divide the vector length");
    const int d = static_cast<int>(v.size() / groups);
    std::vector<CVec> out(groups, CVec(d));
    for (int g = 0; g < groups; ++g)
        for (int j = 0; j < d; ++j) out[g](j) = v(interleaved_index(g, j, groups));
    return out;
}

inline std::vector<CVec> deinterleave(const otfs::DDGrid& grid, int groups) { return deinterleave_vec(grid.vec(), groups); }

/// Element lists of group g that share one delay row, each ordered by
/// Doppler index: the transform lines for SpreadMode::doppler_line.
inline std::vector<std::vector<int>> doppler_lines(int g, int groups, int m, int n)
{
    const int d = static_cast<int>(static_cast<long long>(m) * n / groups);
    std::vector<std::vector<std::pair<int, int>>> rows(m); // (doppler, j)
    for (int j = 0; j < d; ++j) {
        const long long i = interleaved_index(g, j, groups);
        rows[static_cast<int>(i % m)].push_back({static_cast<int>(i / m), j});
    }
    std::vector<std::vector<int>> lines;
    for (auto& r : rows) {
        if (r.empty()) continue;
        std::sort(r.begin(), r.end());
        std::vector<int> line;
        for (const auto& [k, j] : r) line.push_back(j);
        lines.push_back(std::move(line));
    }
    return lines;
}

/// Applies the configured spreading to group g's sub-block (identity when
/// spreading is off).
inline CVec spread_group(const CVec& x, int g, const IMConfig& cfg, int m, int n, bool inverse = false)
{
    if (!cfg.dft_spread) return x;
    if (cfg.spread_mode == SpreadMode::band) return inverse ? dft_despread(x) : dft_spread(x);
    CVec out(x.size());
    for (const auto& line : doppler_lines(g, cfg.groups, m, n)) {
        CVec seg(static_cast<Eigen::Index>(line.size()));
        for (std::size_t t = 0; t < line.size(); ++t) seg(t) = x(line[t]);
        const CVec r = inverse ? dft_despread(seg) : dft_spread(seg);
        for (std::size_t t = 0; t < line.size(); ++t) out(line[t]) = r(t);
    }
    return out;
}

/// D x D matrix S_g with spread_group(x) = S_g x.
inline CMat spreading_matrix(int g, const IMConfig& cfg, int m, int n)
{
    const int d = cfg.group_size;
    CMat s(d, d);
    for (int j = 0; j < d; ++j) s.col(j) = spread_group(CVec::Unit(d, j), g, cfg, m, n);
    return s;
}

/// Full transmitter mapping for one frame: bits -> DD grid.
struct MappedFrame {
    otfs::DDGrid grid;
    std::vector<IMSubblock> subblocks;
};

inline MappedFrame map_frame(std::span<const std::uint8_t> bits, const IMConfig& cfg, const Qam& qam, int m, int n)
{
    cfg.validate(m, n);
    const auto groups = split_bits(bits, cfg);
    std::vector<IMSubblock> blocks;
    std::vector<CVec> spread;
    for (int g = 0; g < cfg.groups; ++g) {
        blocks.push_back(im_map(groups[g], cfg, qam));
        spread.push_back(spread_group(blocks.back().symbols, g, cfg, m, n));
    }
    return {interleave(spread, m, n), std::move(blocks)};
}

struct Rational {
    long long num = 0;
    long long den = 1;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Bits per DD slot: (floor(log2 C(D, K_z)) + K_a log2 Q) / D.
inline Rational spectral_efficiency_exact(const IMConfig& cfg)
{
    cfg.validate();
    return {cfg.bits_per_group(), cfg.group_size};
}

inline double spectral_efficiency(const IMConfig& cfg, int m, int n)
{
    cfg.validate(m, n);
    return spectral_efficiency_exact(cfg).value();
}

} // namespace otfsim::im
