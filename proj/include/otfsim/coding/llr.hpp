#pragma once

// Soft demapping of index-modulated groups to extrinsic bit LLRs, iterative
// demapper/decoder exchange, and symbol-probability to LLR conversion.

#include "otfsim/coding/ldpc.hpp"
#include "otfsim/common.hpp"
#include "otfsim/im.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace otfsim::coding {

/// Every (addressed pattern, symbol vector) hypothesis of one group with the
/// bits it carries.
class CandidateTable {
public:
    CandidateTable(const im::IMConfig& cfg, const im::Qam& qam) : bits_per_group_(cfg.bits_per_group())
    {
        cfg.validate();
        const int ka = cfg.active_count();
        const double combos_d = std::pow(static_cast<double>(qam.order()), ka) * static_cast<double>(cfg.pattern_count());
        require(combos_d <= 1 << 20, "soft demapping hypothesis space too large (> 2^20 candidates)");
        std::uint64_t per_pattern = 1;
        for (int i = 0; i < ka; ++i) per_pattern *= static_cast<std::uint64_t>(qam.order());
        const auto total = static_cast<Eigen::Index>(per_pattern * cfg.pattern_count());
        symbols_.resize(cfg.group_size, total);
        labels_.resize(static_cast<std::size_t>(total) * bits_per_group_);
        std::vector<int> lab(ka);
        Eigen::Index c = 0;
        for (std::uint64_t r = 0; r < cfg.pattern_count(); ++r) {
            const auto act = im::active_positions(r, cfg);
            for (std::uint64_t s = 0; s < per_pattern; ++s, ++c) {
                std::uint64_t rem = s;
                for (int i = ka - 1; i >= 0; --i) {
                    lab[i] = static_cast<int>(rem % static_cast<std::uint64_t>(qam.order()));
                    rem /= static_cast<std::uint64_t>(qam.order());
                }
                CVec x = CVec::Zero(cfg.group_size);
                for (int i = 0; i < ka; ++i) x(act[i]) = qam.point(lab[i]);
                symbols_.col(c) = x;
                const Bits b = im::subblock_bits(r, lab, cfg, qam);
                std::copy(b.begin(), b.end(), labels_.begin() + static_cast<std::ptrdiff_t>(c) * bits_per_group_);
            }
        }
    }

    Eigen::Index size() const { return symbols_.cols(); }
    int bits_per_group() const { return bits_per_group_; }
    const CMat& symbols() const { return symbols_; }
    std::uint8_t bit(Eigen::Index cand, int l) const { return labels_[static_cast<std::size_t>(cand) * bits_per_group_ + l]; }

private:
    int bits_per_group_;
    CMat symbols_; // D x candidates
    std::vector<std::uint8_t> labels_;
};

namespace detail {
// Running log-sum-exp (or max) accumulator.
struct LogAcc {
    double v = -std::numeric_limits<double>::infinity();
    void add(double x, bool max_log)
    {
        if (max_log || v == -std::numeric_limits<double>::infinity()) {
            v = std::max(v, x);
            return;
        }
        v = v > x ? v + std::log1p(std::exp(x - v)) : x + std::log1p(std::exp(v - x));
    }
};
} // namespace detail

/// Extrinsic LLRs of one group's bits under y = h x + n, n ~ CN(0, n0 I):
/// L_e(u_l) = log sum_{x: u_l=1} exp(m_x) - log sum_{x: u_l=0} exp(m_x) - L_a(u_l)
/// with m_x = -||y - h x||^2 / n0 + sum_j u_j(x) L_a(u_j). An empty prior
/// vector means all-zero priors.
inline RVec soft_demap_group(const CVec& y, const CMat& h, double n0, const CandidateTable& table, const RVec& priors = RVec(),
                             bool max_log = false)
{
    const int nb = table.bits_per_group();
    require(h.rows() == y.size() && h.cols() == table.symbols().rows(), "group channel shape mismatch");
    require(n0 > 0.0, "noise power must be positive");
    require(priors.size() == 0 || priors.size() == nb, "prior length must equal the group bit count");
    const RVec la = priors.size() ? priors.unaryExpr([](double v) { return clamp_llr(v); }).eval() : RVec::Zero(nb).eval();

    const CMat hx = h * table.symbols();
    std::vector<detail::LogAcc> one(nb);
    std::vector<detail::LogAcc> zero(nb);
    for (Eigen::Index c = 0; c < table.size(); ++c) {
        double metric = -(y - hx.col(c)).squaredNorm() / n0;
        for (int j = 0; j < nb; ++j)
            if (table.bit(c, j)) metric += la(j);
        for (int l = 0; l < nb; ++l) (table.bit(c, l) ? one[l] : zero[l]).add(metric, max_log);
    }
    RVec out(nb);
    for (int l = 0; l < nb; ++l) {
        if (!std::isfinite(one[l].v) || !std::isfinite(zero[l].v)) throw NumericalError("soft demapper: empty hypothesis set");
        out(l) = clamp_llr(one[l].v - zero[l].v - la(l));
    }
    return out;
}

inline RVec soft_demap_group(const CVec& y, const CMat& h, double n0, const im::IMConfig& cfg, const RVec& priors = RVec(),
                             bool max_log = false)
{
    const im::Qam qam(cfg.constellation_order);
    return soft_demap_group(y, h, n0, CandidateTable(cfg, qam), priors, max_log);
}

struct ProbLlr {
    RVec llr;
    bool degenerate = false; ///< some marginal was zero and got clamped
};

/// Per-slot symbol probabilities (rows = slots, columns = QAM labels) to
/// per-bit LLRs, slot by slot, MSB first.
inline ProbLlr probs_to_llr(const RMat& probs, const im::Qam& qam)
{
    require(probs.cols() == qam.order(), "probability rows must have Q entries");
    const int bps = qam.bits_per_symbol();
    ProbLlr out;
    out.llr.resize(probs.rows() * bps);
    for (Eigen::Index s = 0; s < probs.rows(); ++s)
        for (int b = 0; b < bps; ++b) {
            double p1 = 0.0;
            double p0 = 0.0;
            for (int q = 0; q < qam.order(); ++q) (qam.bit(q, b) ? p1 : p0) += probs(s, q);
            double v = 0.0;
            if (p1 <= 0.0 || p0 <= 0.0) {
                out.degenerate = true;
                v = p1 <= 0.0 && p0 <= 0.0 ? 0.0 : (p1 <= 0.0 ? -kLlrClamp : kLlrClamp);
            } else {
                v = std::log(p1) - std::log(p0);
            }
            out.llr(s * bps + b) = clamp_llr(v);
        }
    return out;
}

/// Observation of one group after linear detection.
struct GroupObservation {
    CVec y;
    CMat h;
    double n0 = 1.0;
};

/// Random permutation used as the bit interleaver between code and groups:
/// transmitted position i carries coded bit perm[i].
inline std::vector<int> make_bit_interleaver(int length, std::uint64_t seed)
{
    std::vector<int> perm(length);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

struct IterativeResult {
    Bits info_bits;
    Bits code_bits;
    int unconverged_codewords = 0;
};

/// Turbo exchange between the group demapper and the LDPC decoder.
/// The coded stream (codewords back to back) is permuted by `perm` and
/// consumed b_g bits per group in order. Each outer iteration demaps with the
/// current priors and runs a fresh `bp_iters` decode per codeword; decoder
/// extrinsics become the next priors. i0 = 1 is one-shot demap and decode.
inline IterativeResult iterate_detection(const std::vector<GroupObservation>& groups, const CandidateTable& table, const LdpcCode& code,
                                         const std::vector<int>& perm, int i0, int bp_iters = 50, bool max_log = false)
{
    require(i0 >= 1, "outer iteration count must be >= 1");
    const int nb = table.bits_per_group();
    const std::size_t total = groups.size() * static_cast<std::size_t>(nb);
    require(perm.size() == total, "interleaver length must equal the number of carried bits");
    require(total % static_cast<std::size_t>(code.n()) == 0, "carried bits must hold whole codewords");
    const int words = static_cast<int>(total / code.n());

    RVec prior_t = RVec::Zero(static_cast<Eigen::Index>(total));
    RVec chan_c(static_cast<Eigen::Index>(total));
    IterativeResult res;
    std::vector<DecodeResult> dec(words);
    for (int it = 1; it <= i0; ++it) {
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const auto& o = groups[g];
            const RVec pr = prior_t.segment(static_cast<Eigen::Index>(g) * nb, nb);
            const RVec ext = soft_demap_group(o.y, o.h, o.n0, table, pr, max_log);
            for (int l = 0; l < nb; ++l) chan_c(perm[g * nb + l]) = ext(l);
        }
        for (int w = 0; w < words; ++w) dec[w] = ldpc_decode(chan_c.segment(static_cast<Eigen::Index>(w) * code.n(), code.n()), code, bp_iters);
        if (it < i0) {
            for (std::size_t i = 0; i < total; ++i) {
                const int c = perm[i];
                prior_t(static_cast<Eigen::Index>(i)) = dec[c / code.n()].extrinsic(c % code.n());
            }
        }
    }
    for (const auto& d : dec) {
        res.code_bits.insert(res.code_bits.end(), d.bits.begin(), d.bits.end());
        const Bits info = code.extract_info(d.bits);
        res.info_bits.insert(res.info_bits.end(), info.begin(), info.end());
        if (!d.converged) ++res.unconverged_codewords;
    }
    return res;
}

} // namespace otfsim::coding
