#pragma once

// Per-frame link simulation for every baseline: mapping, optional AE
// encoding, modulation, clipping, DD channel with noise, MMSE detection and
// hard or soft demapping.

#include "otfsim/coding/ldpc.hpp"
#include "otfsim/coding/llr.hpp"
#include "otfsim/harness/config.hpp"
#include "otfsim/im.hpp"
#include "otfsim/nn/autoencoder.hpp"
#include "otfsim/nn/training.hpp"
#include "otfsim/otfs.hpp"

#include <memory>
#include <numeric>
#include <vector>

namespace otfsim::harness {

/// Limits |s[n]| to the amplitude `threshold`, keeping phases.
inline CVec clip_magnitude(const CVec& s, double threshold)
{
    require(threshold >= 0.0, "clip threshold must be non-negative");
    CVec out = s;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double a = std::abs(out(i));
        if (a > threshold) out(i) *= threshold / a;
    }
    return out;
}

/// Hard clip whose amplitude A satisfies A^2 = gamma * mean|clip(s, A)|^2,
/// so the clipped frame's PAPR equals clip_db whenever clipping is active.
inline otfs::TDFrame clip_baseline(const otfs::TDFrame& frame, double clip_db)
{
    require(clip_db >= 0.0, "clip_db must be >= 0");
    const RVec p = frame.samples.cwiseAbs2();
    const double gamma = db_to_linear(clip_db);
    const double peak = p.size() ? p.maxCoeff() : 0.0;
    if (peak <= 0.0 || peak <= gamma * p.mean()) return frame;
    // mean(min(p, a)) / a falls monotonically in a; bisect for 1/gamma
    double lo = 0.0;
    double hi = peak;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * peak; ++it) {
        const double a = 0.5 * (lo + hi);
        const double ratio = p.cwiseMin(a).mean() / a;
        (ratio >= 1.0 / gamma ? lo : hi) = a;
    }
    otfs::TDFrame out = frame;
    out.samples = clip_magnitude(frame.samples, std::sqrt(std::max(lo, 1e-300)));
    return out;
}

/// Receiver-side channel estimate: CN(0, var) added to every nonzero entry.
inline CMat csi_perturb(const CMat& h_dd, double var, Rng& rng) { return nn::perturb_nonzero(h_dd, var, rng); }

struct FrameStats {
    long long bit_errors = 0;
    long long bits = 0;
    long long frames = 0;
};

inline long long count_errors(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b)
{
    require(a.size() == b.size(), "bit vectors differ in length");
    long long e = 0;
    for (std::size_t i = 0; i < a.size(); ++i) e += (a[i] != b[i]);
    return e;
}

/// Everything that stays fixed across frames of one experiment.
class Link {
public:
    explicit Link(const ExperimentConfig& cfg, std::shared_ptr<const nn::MultiBandAE> ae = nullptr)
        : cfg_(cfg), tx_(cfg.tx_im()), qam_(tx_.constellation_order), c_(otfs::modulation_matrix(cfg.grid.m, cfg.grid.n)),
          sampler_(cfg.sampler()), ae_(std::move(ae))
    {
        cfg_.validate();
        if (cfg_.baseline == Baseline::ae_variant) require(ae_ != nullptr, "ae_variant needs a model");
        for (int g = 0; g < tx_.groups; ++g) spread_.push_back(im::spreading_matrix(g, tx_, cfg.grid.m, cfg.grid.n));
        if (cfg_.coding) {
            code_ = std::make_shared<coding::LdpcCode>(coding::ldpc_build(cfg_.coding->ldpc));
            table_ = std::make_shared<coding::CandidateTable>(tx_, qam_);
            const int bpf = tx_.bits_per_frame();
            frames_per_block_ = code_->n() / std::gcd(code_->n(), bpf);
            perm_ = coding::make_bit_interleaver(frames_per_block_ * bpf, derive_seed(cfg_.seed, 0x1eaf));
        }
    }

    const ExperimentConfig& config() const { return cfg_; }
    const im::IMConfig& tx_im() const { return tx_; }
    int frames_per_unit() const { return cfg_.coding ? frames_per_block_ : 1; }
    const coding::LdpcCode* code() const { return code_.get(); }

    /// Mean transmitted energy per DD slot before any clipping.
    double slot_power() const
    {
        if (cfg_.baseline == Baseline::ae_variant) return 1.0;
        return static_cast<double>(tx_.active_count()) / tx_.group_size;
    }

    /// Information bits carried per frame (after the code rate).
    double info_bits_per_frame() const
    {
        const double b = tx_.bits_per_frame();
        return code_ ? b * code_->k() / code_->n() : b;
    }

    /// Noise variance per DD slot for a grid point.
    double noise_var(double point_db) const
    {
        const double ratio = db_to_linear(point_db);
        if (cfg_.snr_mode == SnrMode::snr) return slot_power() / ratio;
        const double mn = static_cast<double>(cfg_.grid.m) * cfg_.grid.n;
        return slot_power() * mn / (info_bits_per_frame() * ratio);
    }

    /// DD symbols actually sent for one frame's bits.
    CVec transmit(std::span<const std::uint8_t> bits) const
    {
        if (cfg_.baseline == Baseline::ae_variant) {
            im::IMConfig plain = tx_;
            plain.dft_spread = false;
            const CMat x = im::map_frame(bits, plain, qam_, cfg_.grid.m, cfg_.grid.n).grid.vec();
            return nn::encode(*ae_, x).col(0);
        }
        return im::map_frame(bits, tx_, qam_, cfg_.grid.m, cfg_.grid.n).grid.vec();
    }

    /// Time-domain frame, hard-clipped for the clipped baseline.
    CVec time_domain(const CVec& x) const
    {
        CVec s = c_ * x;
        if (cfg_.baseline == Baseline::otfs_clipped) s = clip_baseline(otfs::TDFrame{s, 1}, cfg_.clip_db).samples;
        return s;
    }

    struct Observation {
        CMat h;    ///< true DD channel
        CMat h_rx; ///< receiver estimate
        CVec y;    ///< received DD vector
    };

    Observation propagate(const CVec& x, double n0, Rng& rng) const
    {
        Observation o;
        o.h = otfs::build_dd_channel(sampler_(rng), cfg_.grid.m, cfg_.grid.n);
        o.h_rx = csi_perturb(o.h, cfg_.ce_error_var, rng);
        const CVec x_eff = cfg_.baseline == Baseline::otfs_clipped ? CVec(c_.adjoint() * time_domain(x)) : x;
        o.y = o.h * x_eff;
        for (Eigen::Index i = 0; i < o.y.size(); ++i) o.y(i) += complex_normal(rng, n0);
        return o;
    }

    /// Uncoded hard decisions for one observation.
    Bits detect(const Observation& o, double n0) const
    {
        if (cfg_.baseline == Baseline::ae_variant) {
            const CMat w = otfs::mmse_filter(o.h_rx, n0);
            const CMat z = w * o.y;
            const RVec power = o.h_rx.colwise().squaredNorm().transpose();
            const auto r = nn::ae_receive(*ae_, z, power);
            im::IMConfig plain = tx_;
            plain.dft_spread = false;
            if (ae_->config().head == nn::Head::hd_linear) return demap_groups(r.x_hat.col(0), plain, n0);
            return sd_bits(r.probs.col(0));
        }
        const CMat w = otfs::mmse_filter(o.h_rx, n0);
        CVec z = w * o.y;
        const CVec bias = (w * o.h_rx).diagonal();
        for (Eigen::Index i = 0; i < z.size(); ++i)
            if (std::abs(bias(i)) > 0.0) z(i) /= bias(i);
        return demap_groups(z, tx_, n0);
    }

    /// One uncoded frame.
    FrameStats run_frame(double n0, Rng& rng) const
    {
        const Bits bits = random_bits(rng, static_cast<std::size_t>(tx_.bits_per_frame()));
        const Observation o = propagate(transmit(bits), n0, rng);
        const Bits hat = detect(o, n0);
        return {count_errors(bits, hat), static_cast<long long>(bits.size()), 1};
    }

    /// Soft observation model of every group of one frame after MMSE:
    /// z_g = A_gg S_g a_g + interference + noise with A = W H_rx.
    std::vector<coding::GroupObservation> group_observations(const Observation& o, double n0) const
    {
        const CMat w = otfs::mmse_filter(o.h_rx, n0);
        const CVec z = w * o.y;
        const CMat a = w * o.h_rx;
        const RVec row_a = a.rowwise().squaredNorm();
        const RVec row_w = w.rowwise().squaredNorm();
        const double p = slot_power();
        const int d = tx_.group_size;
        std::vector<coding::GroupObservation> out(tx_.groups);
        for (int g = 0; g < tx_.groups; ++g) {
            std::vector<Eigen::Index> idx(d);
            for (int j = 0; j < d; ++j) idx[j] = im::interleaved_index(g, j, tx_.groups);
            auto& ob = out[g];
            ob.y.resize(d);
            CMat agg(d, d);
            double n_eff = 0.0;
            for (int r = 0; r < d; ++r) {
                ob.y(r) = z(idx[r]);
                double inside = 0.0;
                for (int c = 0; c < d; ++c) {
                    agg(r, c) = a(idx[r], idx[c]);
                    inside += std::norm(agg(r, c));
                }
                n_eff += p * std::max(0.0, row_a(idx[r]) - inside) + n0 * row_w(idx[r]);
            }
            ob.h = agg * spread_[g];
            ob.n0 = std::max(n_eff / d, 1e-12);
        }
        return out;
    }

    /// One coded block of frames_per_unit() frames through the iterative receiver.
    FrameStats run_block(double n0, Rng& rng) const
    {
        const auto& code = *code_;
        const int bpf = tx_.bits_per_frame();
        const int total = frames_per_block_ * bpf;
        const int words = total / code.n();
        Bits info;
        Bits coded;
        for (int w = 0; w < words; ++w) {
            const Bits u = random_bits(rng, static_cast<std::size_t>(code.k()));
            const Bits c = code.encode(u);
            info.insert(info.end(), u.begin(), u.end());
            coded.insert(coded.end(), c.begin(), c.end());
        }
        Bits sent(total);
        for (int i = 0; i < total; ++i) sent[i] = coded[perm_[i]];
        std::vector<coding::GroupObservation> groups;
        for (int f = 0; f < frames_per_block_; ++f) {
            const std::span<const std::uint8_t> fb(sent.data() + static_cast<std::ptrdiff_t>(f) * bpf, bpf);
            const Observation o = propagate(transmit(fb), n0, rng);
            auto g = group_observations(o, n0);
            groups.insert(groups.end(), g.begin(), g.end());
        }
        const auto res = coding::iterate_detection(groups, *table_, code, perm_, cfg_.coding->outer_iterations, cfg_.coding->bp_iterations,
                                                   cfg_.coding->max_log);
        return {count_errors(info, res.info_bits), static_cast<long long>(info.size()), frames_per_block_};
    }

    FrameStats run_unit(double n0, Rng& rng) const { return cfg_.coding ? run_block(n0, rng) : run_frame(n0, rng); }

private:
    Bits demap_groups(const CVec& z, const im::IMConfig& cfg, double n0) const
    {
        const auto parts = im::deinterleave_vec(z, cfg.groups);
        std::vector<Bits> out;
        for (int g = 0; g < cfg.groups; ++g) {
            const CVec v = im::spread_group(parts[g], g, cfg, cfg_.grid.m, cfg_.grid.n, true);
            out.push_back(im::im_demap_ml(v, n0, cfg, qam_).bits);
        }
        return im::merge_bits(out);
    }

    Bits sd_bits(const RVec& probs) const
    {
        const int q = qam_.order();
        const auto slots = probs.size() / q;
        std::vector<int> labels(slots);
        for (Eigen::Index s = 0; s < slots; ++s) {
            Eigen::Index best = 0;
            probs.segment(s * q, q).maxCoeff(&best);
            labels[s] = static_cast<int>(best);
        }
        std::vector<Bits> out;
        const int d = tx_.group_size;
        for (int g = 0; g < tx_.groups; ++g) {
            std::vector<int> lab(d);
            for (int j = 0; j < d; ++j) lab[j] = labels[im::interleaved_index(g, j, tx_.groups)];
            out.push_back(im::subblock_bits(0, lab, tx_, qam_));
        }
        return im::merge_bits(out);
    }

    ExperimentConfig cfg_;
    im::IMConfig tx_;
    im::Qam qam_;
    CMat c_;
    nn::ChannelSampler sampler_;
    std::shared_ptr<const nn::MultiBandAE> ae_;
    std::vector<CMat> spread_;
    std::shared_ptr<coding::LdpcCode> code_;
    std::shared_ptr<coding::CandidateTable> table_;
    int frames_per_block_ = 1;
    std::vector<int> perm_;
};

} // namespace otfsim::harness
