#pragma once

// Multi-band autoencoder around the OTFS link. Each band (a stride slice of
// the DD grid) has its own encoder and decoder MLP; the link in between is
// modulation, a known doubly-dispersive channel, noise and MMSE detection.
//
// Complex gradients are packed as g = dL/dRe + j dL/dIm, so a linear map
// y = A x back-propagates as g_x = A^H g_y.

#include "otfsim/common.hpp"
#include "otfsim/nn/layers.hpp"
#include "otfsim/otfs.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace otfsim::nn {

enum class Head { hd_linear, sd_softmax };
enum class NormMode { per_sample, per_batch };

struct AEConfig {
    int m = 8;
    int n = 8;
    int bands = 2;
    int constellation_order = 4;
    std::array<int, 2> enc_widths{0, 0};    ///< 0 selects 4 * band_dim
    std::array<int, 3> dec_widths{0, 0, 0}; ///< 0 selects 6, 6, 4 * band_dim
    Head head = Head::hd_linear;
    double eta = 0.01;
    bool shared_weights = false;
    NormMode norm = NormMode::per_sample;
    double bn_eps = 1e-5;

    int slots() const { return m * n; }
    int band_slots() const { return m * n / bands; }
    int band_dim() const { return 2 * band_slots(); }
    int feature_dim() const { return 3 * band_slots(); }
    int output_dim() const { return head == Head::hd_linear ? band_dim() : band_slots() * constellation_order; }

    int enc_width(int i) const { return enc_widths[i] > 0 ? enc_widths[i] : 4 * band_dim(); }
    int dec_width(int i) const
    {
        static constexpr int mult[3] = {6, 6, 4};
        return dec_widths[i] > 0 ? dec_widths[i] : mult[i] * band_dim();
    }

    void validate() const
    {
        otfs::check_grid_dims(m, n);
        require(bands >= 1 && (m * n) % bands == 0, "band count must divide M * N");
        require(constellation_order == 4 || constellation_order == 16, "constellation order must be 4 or 16");
        require(eta >= 0.0, "eta must be non-negative");
        require(bn_eps > 0.0, "batch-norm epsilon must be positive");
        for (int w : enc_widths) require(w >= 0, "widths must be positive");
        for (int w : dec_widths) require(w >= 0, "widths must be positive");
    }
};

struct Encoder {
    Linear fc1;
    BatchNorm bn1;
    Linear fc2;
    Linear fc3;
};

struct Decoder {
    Linear fc1;
    BatchNorm bn1;
    Linear fc2;
    BatchNorm bn2;
    Linear fc3;
    BatchNorm bn3;
    Linear out;
};

/// Per-batch link: td = C x, equalised z = R H x + R w.
struct LinkMatrices {
    CMat modulation; ///< C
    CMat rh;         ///< R H (true channel)
    CMat r;          ///< MMSE filter from the receiver's channel estimate
    RVec chan_power; ///< diag(H_rx^H H_rx), the decoder's channel feature
};

inline LinkMatrices make_link(const CMat& h_true, const CMat& h_rx, double n0, const CMat& modulation)
{
    require(h_true.rows() == h_rx.rows() && h_true.cols() == h_rx.cols(), "channel matrices differ in shape");
    LinkMatrices l;
    l.modulation = modulation;
    l.r = otfs::mmse_filter(h_rx, n0);
    l.rh = l.r * h_true;
    l.chan_power = h_rx.colwise().squaredNorm().transpose();
    return l;
}

/// One training or evaluation batch in DD layout (slots x batch).
struct Batch {
    CMat x;                  ///< transmitted DD symbols (column-major DD vector per column)
    Eigen::MatrixXi labels;  ///< QAM label per slot, -1 on null slots (SD head)
};

struct Losses {
    double l1 = 0.0; ///< reconstruction (HD) or cross-entropy (SD)
    double l2 = 0.0; ///< PAPR term
    double total = 0.0;
};

/// L = L1 + eta L2.
inline double total_loss(double l1, double l2, double eta)
{
    require(eta >= 0.0, "eta must be non-negative");
    return l1 + eta * l2;
}

/// Batch mean of ||x - x_hat||^2 over columns.
inline double loss_reconstruction(const RMat& x, const RMat& x_hat)
{
    require(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), "shape mismatch");
    return (x - x_hat).squaredNorm() / static_cast<double>(x.cols());
}

/// Batch mean of max|s|^2 / mean|s|^2 over columns; gradient (packed) in `grad`
/// when non-null, scaled by `scale`. Ties at the peak go to the lowest index.
inline double loss_papr(const CMat& s, CMat* grad = nullptr, double scale = 1.0)
{
    const auto len = static_cast<double>(s.rows());
    const auto b = static_cast<double>(s.cols());
    double acc = 0.0;
    if (grad) grad->setZero(s.rows(), s.cols());
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
        Eigen::Index k = 0;
        const double peak = s.col(c).cwiseAbs2().maxCoeff(&k);
        const double mean = s.col(c).squaredNorm() / len;
        if (!(mean > 0.0)) throw NumericalError("PAPR loss undefined for an all-zero frame");
        acc += peak / mean;
        if (grad) {
            grad->col(c) = s.col(c) * (-2.0 * peak / (mean * mean * len) * scale / b);
            (*grad)(k, c) += s(k, c) * (2.0 / mean * scale / b);
        }
    }
    return acc / b;
}

/// Row-wise softmax over each slot's Q logits. Logits are slot-major:
/// entry s * Q + q of a column.
inline RMat softmax_slots(const RMat& logits, int q)
{
    RMat p(logits.rows(), logits.cols());
    const Eigen::Index slots = logits.rows() / q;
    for (Eigen::Index c = 0; c < logits.cols(); ++c)
        for (Eigen::Index s = 0; s < slots; ++s) {
            const auto seg = logits.col(c).segment(s * q, q);
            const double mx = seg.maxCoeff();
            const RVec e = (seg.array() - mx).exp();
            p.col(c).segment(s * q, q) = e / e.sum();
        }
    return p;
}

inline constexpr double kProbFloor = 1e-12;

struct CrossEntropy {
    double value = 0.0;
    bool clamped = false; ///< some true-label probability fell below the floor
};

/// Batch mean over columns of sum over valid slots of -log p(label).
/// `probs` is (slots * Q) x batch, slot-major; label -1 masks a slot.
inline CrossEntropy loss_cross_entropy(const RMat& probs, const Eigen::MatrixXi& labels, int q)
{
    require(probs.rows() == labels.rows() * q && probs.cols() == labels.cols(), "probability/label shape mismatch");
    CrossEntropy ce;
    for (Eigen::Index c = 0; c < labels.cols(); ++c)
        for (Eigen::Index s = 0; s < labels.rows(); ++s) {
            const int lab = labels(s, c);
            if (lab < 0) continue;
            require(lab < q, "label out of range");
            double p = probs(s * q + lab, c);
            if (p < kProbFloor) {
                p = kProbFloor;
                ce.clamped = true;
            }
            ce.value -= std::log(p);
        }
    ce.value /= static_cast<double>(labels.cols());
    return ce;
}

class MultiBandAE {
public:
    MultiBandAE() = default;

    MultiBandAE(const AEConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed)
    {
        cfg_.validate();
        Rng rng(derive_seed(seed, 0xae));
        const int copies = cfg_.shared_weights ? 1 : cfg_.bands;
        for (int i = 0; i < copies; ++i) {
            Encoder e;
            e.fc1 = Linear(cfg_.band_dim(), cfg_.enc_width(0), rng);
            e.bn1 = BatchNorm(cfg_.enc_width(0), cfg_.bn_eps);
            e.fc2 = Linear(cfg_.enc_width(0), cfg_.enc_width(1), rng);
            e.fc3 = Linear(cfg_.enc_width(1), cfg_.band_dim(), rng);
            enc_.push_back(std::move(e));
        }
        for (int i = 0; i < copies; ++i) {
            Decoder d;
            d.fc1 = Linear(cfg_.feature_dim(), cfg_.dec_width(0), rng);
            d.bn1 = BatchNorm(cfg_.dec_width(0), cfg_.bn_eps);
            d.fc2 = Linear(cfg_.dec_width(0), cfg_.dec_width(1), rng);
            d.bn2 = BatchNorm(cfg_.dec_width(1), cfg_.bn_eps);
            d.fc3 = Linear(cfg_.dec_width(1), cfg_.dec_width(2), rng);
            d.bn3 = BatchNorm(cfg_.dec_width(2), cfg_.bn_eps);
            d.out = Linear(cfg_.dec_width(2), cfg_.output_dim(), rng);
            dec_.push_back(std::move(d));
        }
    }

    const AEConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Encoder>& encoders() { return enc_; }
    std::vector<Decoder>& decoders() { return dec_; }
    const std::vector<Encoder>& encoders() const { return enc_; }
    const std::vector<Decoder>& decoders() const { return dec_; }

    Encoder& encoder(int band) { return enc_[cfg_.shared_weights ? 0 : band]; }
    Decoder& decoder(int band) { return dec_[cfg_.shared_weights ? 0 : band]; }
    const Encoder& encoder(int band) const { return enc_[cfg_.shared_weights ? 0 : band]; }
    const Decoder& decoder(int band) const { return dec_[cfg_.shared_weights ? 0 : band]; }

    /// Every trainable tensor with a stable name.
    std::vector<std::pair<std::string, Param*>> named_params()
    {
        std::vector<std::pair<std::string, Param*>> out;
        for (std::size_t i = 0; i < enc_.size(); ++i) {
            const std::string p = "enc" + std::to_string(i) + ".";
            auto& e = enc_[i];
            out.insert(out.end(), {{p + "fc1.w", &e.fc1.w}, {p + "fc1.b", &e.fc1.b}, {p + "bn1.gamma", &e.bn1.gamma},
                                   {p + "bn1.beta", &e.bn1.beta}, {p + "fc2.w", &e.fc2.w}, {p + "fc2.b", &e.fc2.b},
                                   {p + "fc3.w", &e.fc3.w}, {p + "fc3.b", &e.fc3.b}});
        }
        for (std::size_t i = 0; i < dec_.size(); ++i) {
            const std::string p = "dec" + std::to_string(i) + ".";
            auto& d = dec_[i];
            out.insert(out.end(), {{p + "fc1.w", &d.fc1.w},     {p + "fc1.b", &d.fc1.b},       {p + "bn1.gamma", &d.bn1.gamma},
                                   {p + "bn1.beta", &d.bn1.beta}, {p + "fc2.w", &d.fc2.w},     {p + "fc2.b", &d.fc2.b},
                                   {p + "bn2.gamma", &d.bn2.gamma}, {p + "bn2.beta", &d.bn2.beta}, {p + "fc3.w", &d.fc3.w},
                                   {p + "fc3.b", &d.fc3.b},     {p + "bn3.gamma", &d.bn3.gamma}, {p + "bn3.beta", &d.bn3.beta},
                                   {p + "out.w", &d.out.w},     {p + "out.b", &d.out.b}});
        }
        return out;
    }

    std::vector<Param*> params()
    {
        std::vector<Param*> out;
        for (auto& [name, p] : named_params()) out.push_back(p);
        return out;
    }

    /// Every batch-norm layer with a stable name (running statistics).
    std::vector<std::pair<std::string, BatchNorm*>> named_batchnorms()
    {
        std::vector<std::pair<std::string, BatchNorm*>> out;
        for (std::size_t i = 0; i < enc_.size(); ++i) out.push_back({"enc" + std::to_string(i) + ".bn1", &enc_[i].bn1});
        for (std::size_t i = 0; i < dec_.size(); ++i) {
            const std::string p = "dec" + std::to_string(i) + ".";
            out.insert(out.end(), {{p + "bn1", &dec_[i].bn1}, {p + "bn2", &dec_[i].bn2}, {p + "bn3", &dec_[i].bn3}});
        }
        return out;
    }

    void zero_grad()
    {
        for (Param* p : params()) p->zero_grad();
    }

private:
    AEConfig cfg_;
    std::uint64_t seed_ = 0;
    std::vector<Encoder> enc_;
    std::vector<Decoder> dec_;
};

/// Rows of band g in the stride layout: g, g + G, g + 2G, ...
inline CMat band_rows(const CMat& full, int g, int bands)
{
    const Eigen::Index d = full.rows() / bands;
    CMat out(d, full.cols());
    for (Eigen::Index j = 0; j < d; ++j) out.row(j) = full.row(g + j * bands);
    return out;
}

inline void set_band_rows(CMat& full, const CMat& part, int g, int bands)
{
    for (Eigen::Index j = 0; j < part.rows(); ++j) full.row(g + j * bands) = part.row(j);
}

inline RMat stack_re_im(const CMat& z)
{
    RMat out(2 * z.rows(), z.cols());
    out.topRows(z.rows()) = z.real();
    out.bottomRows(z.rows()) = z.imag();
    return out;
}

inline CMat unstack_re_im(const RMat& v)
{
    const Eigen::Index d = v.rows() / 2;
    CMat out(d, v.cols());
    out.real() = v.topRows(d);
    out.imag() = v.bottomRows(d);
    return out;
}

struct EncoderCache {
    RMat input;
    RMat h1;
    BatchNorm::Cache bn1;
    RMat b1;
    RMat r1;
    RMat h2;
    RMat v;
    RVec norms; ///< per column (per-sample) or a single entry (per-batch)
};

/// FC -> BN -> ReLU -> FC -> FC, complex reconstruction and power
/// normalisation to unit mean power per slot. Throws NumericalError on an
/// all-zero pre-normalisation output.
inline CMat encoder_forward(const Encoder& e, const RMat& x, Mode mode, NormMode norm, EncoderCache* cache = nullptr)
{
    EncoderCache c;
    c.input = x;
    c.h1 = e.fc1.forward(x);
    c.b1 = e.bn1.forward(c.h1, mode, &c.bn1);
    c.r1 = relu(c.b1);
    c.h2 = e.fc2.forward(c.r1);
    c.v = e.fc3.forward(c.h2);
    const double d = static_cast<double>(c.v.rows() / 2);
    RMat u(c.v.rows(), c.v.cols());
    if (norm == NormMode::per_sample) {
        c.norms = c.v.colwise().norm().transpose();
        for (Eigen::Index j = 0; j < c.v.cols(); ++j) {
            if (!(c.norms(j) > 0.0)) throw NumericalError("power normalisation of an all-zero encoder output");
            u.col(j) = c.v.col(j) * (std::sqrt(d) / c.norms(j));
        }
    } else {
        c.norms = RVec::Constant(1, c.v.norm());
        if (!(c.norms(0) > 0.0)) throw NumericalError("power normalisation of an all-zero encoder output");
        u = c.v * (std::sqrt(d * static_cast<double>(c.v.cols())) / c.norms(0));
    }
    CMat out = unstack_re_im(u);
    if (cache) *cache = std::move(c);
    return out;
}

/// Back-propagates a packed complex gradient on the encoder output.
inline void encoder_backward(Encoder& e, const EncoderCache& c, const CMat& g_out, NormMode norm)
{
    const RMat gu = stack_re_im(g_out);
    const double d = static_cast<double>(c.v.rows() / 2);
    RMat gv(gu.rows(), gu.cols());
    if (norm == NormMode::per_sample) {
        for (Eigen::Index j = 0; j < gu.cols(); ++j) {
            const double nrm = c.norms(j);
            const double proj = c.v.col(j).dot(gu.col(j)) / (nrm * nrm);
            gv.col(j) = (gu.col(j) - proj * c.v.col(j)) * (std::sqrt(d) / nrm);
        }
    } else {
        const double nrm = c.norms(0);
        const double proj = (c.v.array() * gu.array()).sum() / (nrm * nrm);
        gv = (gu - proj * c.v) * (std::sqrt(d * static_cast<double>(c.v.cols())) / nrm);
    }
    const RMat gh2 = e.fc3.backward(c.h2, gv);
    const RMat gr1 = e.fc2.backward(c.r1, gh2);
    const RMat gb1 = relu_backward(c.b1, gr1);
    const RMat gh1 = e.bn1.backward(c.bn1, gb1);
    e.fc1.backward(c.input, gh1);
}

struct DecoderCache {
    RMat input;
    RMat h1, b1, r1;
    RMat h2, b2, r2;
    RMat h3, b3, r3;
    BatchNorm::Cache bn1, bn2, bn3;
    RMat out;
};

/// Three FC -> BN -> ReLU blocks and a linear output layer (raw logits for
/// the SD head; apply softmax_slots for probabilities).
inline RMat decoder_forward(const Decoder& d, const RMat& features, Mode mode, DecoderCache* cache = nullptr)
{
    DecoderCache c;
    c.input = features;
    c.h1 = d.fc1.forward(features);
    c.b1 = d.bn1.forward(c.h1, mode, &c.bn1);
    c.r1 = relu(c.b1);
    c.h2 = d.fc2.forward(c.r1);
    c.b2 = d.bn2.forward(c.h2, mode, &c.bn2);
    c.r2 = relu(c.b2);
    c.h3 = d.fc3.forward(c.r2);
    c.b3 = d.bn3.forward(c.h3, mode, &c.bn3);
    c.r3 = relu(c.b3);
    c.out = d.out.forward(c.r3);
    RMat out = c.out;
    if (cache) *cache = std::move(c);
    return out;
}

/// Returns dL/dfeatures.
inline RMat decoder_backward(Decoder& d, const DecoderCache& c, const RMat& g_out)
{
    RMat g = d.out.backward(c.r3, g_out);
    g = d.bn3.backward(c.bn3, relu_backward(c.b3, g));
    g = d.fc3.backward(c.r2, g);
    g = d.bn2.backward(c.bn2, relu_backward(c.b2, g));
    g = d.fc2.backward(c.r1, g);
    g = d.bn1.backward(c.bn1, relu_backward(c.b1, g));
    return d.fc1.backward(c.input, g);
}

/// [Re z; Im z; channel power] per band.
inline RMat decoder_features(const CMat& z_band, const RVec& power_band)
{
    RMat f(3 * z_band.rows(), z_band.cols());
    f.topRows(2 * z_band.rows()) = stack_re_im(z_band);
    f.bottomRows(z_band.rows()) = power_band.replicate(1, z_band.cols());
    return f;
}

struct Reception {
    CMat x_hat; ///< HD head
    RMat probs; ///< SD head, (slots * Q) x batch
};

/// Eval-mode receiver half: per-band decoders on an equalised observation z
/// (slots x batch) with channel-power features `power` (slots).
inline Reception ae_receive(const MultiBandAE& ae, const CMat& z, const RVec& power)
{
    const AEConfig& cfg = ae.config();
    require(z.rows() == cfg.slots() && power.size() == cfg.slots(), "observation shape mismatch");
    const int bands = cfg.bands;
    const int q = cfg.constellation_order;
    Reception r;
    if (cfg.head == Head::hd_linear)
        r.x_hat = CMat(z.rows(), z.cols());
    else
        r.probs = RMat(z.rows() * q, z.cols());
    for (int g = 0; g < bands; ++g) {
        RVec pw(cfg.band_slots());
        for (int j = 0; j < cfg.band_slots(); ++j) pw(j) = power(g + j * bands);
        const RMat out = decoder_forward(ae.decoder(g), decoder_features(band_rows(z, g, bands), pw), Mode::eval);
        if (cfg.head == Head::hd_linear) {
            set_band_rows(r.x_hat, unstack_re_im(out), g, bands);
        } else {
            const RMat p = softmax_slots(out, q);
            for (int j = 0; j < cfg.band_slots(); ++j) r.probs.middleRows((g + j * bands) * q, q) = p.middleRows(j * q, q);
        }
    }
    return r;
}

struct PassResult {
    Losses loss;
    CMat x_tx;  ///< encoded DD symbols
    CMat s;     ///< time-domain frames
    CMat z;     ///< equalised DD observation
    CMat x_hat; ///< HD estimate in DD layout
    RMat probs; ///< SD probabilities, (slots * Q) x batch in DD slot order
    bool ce_clamped = false;
};

struct PassOptions {
    Mode mode = Mode::train;
    double eta = 0.0;             ///< weight of the PAPR term
    bool backward = false;        ///< accumulate parameter gradients
    bool update_running = false;  ///< refresh BN running statistics (train mode)
};

/// Full end-to-end pass: encode every band, interleave, modulate, channel and
/// noise, MMSE, deinterleave, decode. `noise` is the DD-domain noise (slots x
/// batch), fixed by the caller.
inline PassResult ae_pass(MultiBandAE& ae, const Batch& batch, const LinkMatrices& link, const CMat& noise, const PassOptions& opt)
{
    const AEConfig& cfg = ae.config();
    const int bands = cfg.bands;
    const Eigen::Index mn = cfg.slots();
    const Eigen::Index bsz = batch.x.cols();
    require(batch.x.rows() == mn, "batch rows must equal M * N");
    require(noise.rows() == mn && noise.cols() == bsz, "noise shape mismatch");
    require(link.rh.rows() == mn && link.modulation.rows() == mn, "link matrices shape mismatch");
    if (cfg.head == Head::sd_softmax) require(batch.labels.rows() == mn && batch.labels.cols() == bsz, "label shape mismatch");

    PassResult res;
    std::vector<EncoderCache> ec(bands);
    std::vector<DecoderCache> dc(bands);
    std::vector<RMat> targets(bands);
    res.x_tx = CMat(mn, bsz);
    for (int g = 0; g < bands; ++g) {
        targets[g] = stack_re_im(band_rows(batch.x, g, bands));
        set_band_rows(res.x_tx, encoder_forward(ae.encoder(g), targets[g], opt.mode, cfg.norm, &ec[g]), g, bands);
    }
    res.s = link.modulation * res.x_tx;
    res.z = link.rh * res.x_tx + link.r * noise;

    const int q = cfg.constellation_order;
    std::vector<RMat> outs(bands);
    if (cfg.head == Head::hd_linear)
        res.x_hat = CMat(mn, bsz);
    else
        res.probs = RMat(mn * q, bsz);
    for (int g = 0; g < bands; ++g) {
        RVec pw(cfg.band_slots());
        for (int j = 0; j < cfg.band_slots(); ++j) pw(j) = link.chan_power(g + j * bands);
        outs[g] = decoder_forward(ae.decoder(g), decoder_features(band_rows(res.z, g, bands), pw), opt.mode, &dc[g]);
        if (cfg.head == Head::hd_linear) {
            set_band_rows(res.x_hat, unstack_re_im(outs[g]), g, bands);
            res.loss.l1 += loss_reconstruction(targets[g], outs[g]);
        } else {
            const RMat p = softmax_slots(outs[g], q);
            for (int j = 0; j < cfg.band_slots(); ++j) res.probs.middleRows((g + j * bands) * q, q) = p.middleRows(j * q, q);
            outs[g] = p;
        }
    }
    if (cfg.head == Head::sd_softmax) {
        const auto ce = loss_cross_entropy(res.probs, batch.labels, q);
        res.loss.l1 = ce.value;
        res.ce_clamped = ce.clamped;
    }
    CMat g_s;
    res.loss.l2 = loss_papr(res.s, opt.backward ? &g_s : nullptr, opt.eta);
    res.loss.total = total_loss(res.loss.l1, res.loss.l2, opt.eta);

    if (opt.mode == Mode::train && opt.update_running) {
        for (int g = 0; g < bands; ++g) {
            ae.encoder(g).bn1.update_running(ec[g].bn1, static_cast<int>(bsz));
            auto& d = ae.decoder(g);
            d.bn1.update_running(dc[g].bn1, static_cast<int>(bsz));
            d.bn2.update_running(dc[g].bn2, static_cast<int>(bsz));
            d.bn3.update_running(dc[g].bn3, static_cast<int>(bsz));
        }
    }
    if (!opt.backward) return res;
    require(opt.mode == Mode::train, "gradients are only defined in train mode");

    const double inv_b = 1.0 / static_cast<double>(bsz);
    CMat g_z(mn, bsz);
    for (int g = 0; g < bands; ++g) {
        RMat g_out;
        if (cfg.head == Head::hd_linear) {
            g_out = 2.0 * inv_b * (outs[g] - targets[g]);
        } else {
            g_out = outs[g] * inv_b;
            for (Eigen::Index c = 0; c < bsz; ++c)
                for (int j = 0; j < cfg.band_slots(); ++j) {
                    const int lab = batch.labels(g + j * bands, c);
                    if (lab < 0)
                        g_out.col(c).segment(j * q, q).setZero();
                    else
                        g_out(j * q + lab, c) -= inv_b;
                }
        }
        const RMat g_feat = decoder_backward(ae.decoder(g), dc[g], g_out);
        set_band_rows(g_z, unstack_re_im(g_feat.topRows(2 * cfg.band_slots())), g, bands);
    }
    CMat g_x = link.rh.adjoint() * g_z;
    if (opt.eta > 0.0) g_x += link.modulation.adjoint() * g_s;
    for (int g = 0; g < bands; ++g) encoder_backward(ae.encoder(g), ec[g], band_rows(g_x, g, bands), cfg.norm);
    return res;
}

} // namespace otfsim::nn
