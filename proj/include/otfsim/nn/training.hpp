#pragma once

// Two-phase training: phase 1 minimises the reconstruction (or
// cross-entropy) loss alone, phase 2 the joint loss L1 + eta L2.

#include "otfsim/common.hpp"
#include "otfsim/im.hpp"
#include "otfsim/nn/autoencoder.hpp"
#include "otfsim/otfs.hpp"

#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace otfsim::nn {

using ChannelSampler = std::function<otfs::PathSet(Rng&)>;

struct TrainConfig {
    double lr = 1e-3;
    int batch = 200;
    int samples = 80000;
    int k1 = 0;
    int k2 = 0;
    double snr_db = 10.0;
    std::optional<std::pair<double, double>> snr_range_db; ///< mixed-SNR: uniform per batch
    double csi_error_var = 0.0;
    std::uint64_t seed = 1;
    im::IMConfig data; ///< symbol source for the training frames

    void validate(const AEConfig& ae) const
    {
        require(lr > 0.0, "learning rate must be positive");
        require(batch >= 2, "batch size must be >= 2");
        require(samples >= batch, "sample count must be at least one batch");
        require(k1 >= 0 && k2 >= 0, "iteration counts must be non-negative");
        require(csi_error_var >= 0.0, "CSI error variance must be non-negative");
        if (snr_range_db) require(snr_range_db->first <= snr_range_db->second, "SNR range must be ordered");
        data.validate(ae.m, ae.n);
        require(data.constellation_order == ae.constellation_order, "training data and AE constellation differ");
    }
};

struct TraceRow {
    int iteration = 0;
    int phase = 1;
    double l1 = 0.0;
    double l2 = 0.0;
    double total = 0.0;
};

struct TrainingDiverged : NumericalError {
    std::vector<TraceRow> trace;
    TrainingDiverged(const std::string& what, std::vector<TraceRow> t) : NumericalError(what), trace(std::move(t)) {}
};

/// Training frames: DD symbols (slots x samples) and per-slot QAM labels
/// (-1 on null slots).
struct Dataset {
    CMat x;
    Eigen::MatrixXi labels;
    std::vector<Bits> bits;

    Batch slice(Eigen::Index start, Eigen::Index count) const
    {
        Batch b;
        b.x.resize(x.rows(), count);
        b.labels.resize(labels.rows(), count);
        for (Eigen::Index c = 0; c < count; ++c) {
            const Eigen::Index src = (start + c) % x.cols();
            b.x.col(c) = x.col(src);
            b.labels.col(c) = labels.col(src);
        }
        return b;
    }
};

/// Random IM frames without DFT spreading.
inline Dataset make_dataset(const im::IMConfig& cfg, int m, int n, int samples, std::uint64_t seed)
{
    im::IMConfig plain = cfg;
    plain.dft_spread = false;
    plain.validate(m, n);
    const im::Qam qam(plain.constellation_order);
    Dataset ds;
    ds.x.resize(static_cast<Eigen::Index>(m) * n, samples);
    ds.labels = Eigen::MatrixXi::Constant(m * n, samples, -1);
    for (int s = 0; s < samples; ++s) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
        Bits bits = random_bits(rng, static_cast<std::size_t>(plain.bits_per_frame()));
        const auto frame = im::map_frame(bits, plain, qam, m, n);
        ds.x.col(s) = frame.grid.vec();
        for (int g = 0; g < plain.groups; ++g) {
            const auto& sb = frame.subblocks[g];
            const auto act = im::active_positions(sb.pattern_rank, plain);
            for (std::size_t i = 0; i < act.size(); ++i)
                ds.labels(static_cast<Eigen::Index>(im::interleaved_index(g, act[i], plain.groups)), s) = sb.labels[i];
        }
        ds.bits.push_back(std::move(bits));
    }
    return ds;
}

/// Adds CN(0, var) to every nonzero entry of a channel matrix.
inline CMat perturb_nonzero(const CMat& h, double var, Rng& rng)
{
    require(var >= 0.0, "perturbation variance must be non-negative");
    if (var == 0.0) return h;
    CMat out = h;
    for (Eigen::Index j = 0; j < h.cols(); ++j)
        for (Eigen::Index i = 0; i < h.rows(); ++i)
            if (h(i, j) != Complex(0.0, 0.0)) out(i, j) += complex_normal(rng, var);
    return out;
}

struct LinkDraw {
    LinkMatrices link;
    CMat noise;
    double n0 = 0.0;
};

/// One batch's channel, receiver estimate and DD noise.
inline LinkDraw draw_link(const ChannelSampler& sampler, const CMat& modulation, int m, int n, Eigen::Index batch, double snr_db,
                          double csi_error_var, Rng& rng)
{
    LinkDraw d;
    const otfs::PathSet ps = sampler(rng);
    const CMat h = otfs::build_dd_channel(ps, m, n);
    const CMat h_rx = perturb_nonzero(h, csi_error_var, rng);
    d.n0 = db_to_linear(-snr_db);
    d.link = make_link(h, h_rx, d.n0, modulation);
    d.noise.resize(static_cast<Eigen::Index>(m) * n, batch);
    for (Eigen::Index c = 0; c < d.noise.cols(); ++c)
        for (Eigen::Index i = 0; i < d.noise.rows(); ++i) d.noise(i, c) = complex_normal(rng, d.n0);
    return d;
}

struct TrainState {
    AdamState adam;
    std::vector<TraceRow> trace;
};

/// Runs k1 phase-1 and k2 phase-2 iterations. Batches cycle through a
/// pre-generated dataset; every batch sees a fresh channel and noise.
/// A non-finite loss throws TrainingDiverged carrying the trace so far.
inline TrainState train(MultiBandAE& ae, const TrainConfig& tc, const ChannelSampler& sampler)
{
    const AEConfig& cfg = ae.config();
    tc.validate(cfg);
    TrainState st;
    if (tc.k1 + tc.k2 == 0) return st;

    const Dataset ds = make_dataset(tc.data, cfg.m, cfg.n, tc.samples, derive_seed(tc.seed, 1));
    const CMat c = otfs::modulation_matrix(cfg.m, cfg.n);
    Rng rng(derive_seed(tc.seed, 2));
    const auto params = ae.params();
    const AdamConfig adam{tc.lr};
    std::uniform_real_distribution<double> snr_dist(tc.snr_range_db ? tc.snr_range_db->first : tc.snr_db,
                                                    tc.snr_range_db ? tc.snr_range_db->second : tc.snr_db);

    for (int it = 0; it < tc.k1 + tc.k2; ++it) {
        const int phase = it < tc.k1 ? 1 : 2;
        const Batch batch = ds.slice(static_cast<Eigen::Index>(it) * tc.batch % ds.x.cols(), tc.batch);
        const double snr = tc.snr_range_db ? snr_dist(rng) : tc.snr_db;
        const LinkDraw ld = draw_link(sampler, c, cfg.m, cfg.n, tc.batch, snr, tc.csi_error_var, rng);

        ae.zero_grad();
        PassOptions opt;
        opt.mode = Mode::train;
        opt.eta = phase == 1 ? 0.0 : cfg.eta;
        opt.backward = true;
        opt.update_running = true;
        const PassResult r = ae_pass(ae, batch, ld.link, ld.noise, opt);
        st.trace.push_back({it, phase, r.loss.l1, r.loss.l2, r.loss.total});
        if (!std::isfinite(r.loss.total)) throw TrainingDiverged("training diverged: non-finite loss", st.trace);
        try {
            adam_step(params, st.adam, adam);
        } catch (const NumericalError& e) {
            throw TrainingDiverged(e.what(), st.trace);
        }
    }
    return st;
}

/// Eval-mode end-to-end pass without gradients.
inline PassResult infer(MultiBandAE& ae, const Batch& batch, const LinkMatrices& link, const CMat& noise)
{
    PassOptions opt;
    opt.mode = Mode::eval;
    opt.eta = ae.config().eta;
    return ae_pass(ae, batch, link, noise, opt);
}

/// Eval-mode encoder output (DD symbols) for a batch.
inline CMat encode(const MultiBandAE& ae, const CMat& x)
{
    const AEConfig& cfg = ae.config();
    CMat out(x.rows(), x.cols());
    for (int g = 0; g < cfg.bands; ++g)
        set_band_rows(out, encoder_forward(ae.encoder(g), stack_re_im(band_rows(x, g, cfg.bands)), Mode::eval, cfg.norm), g, cfg.bands);
    return out;
}

} // namespace otfsim::nn
