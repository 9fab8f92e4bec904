#pragma once

// JSON checkpoint container for a MultiBandAE.
//
// {
//   "format": "otfsim-ae-checkpoint", "version": 1,
//   "config": {...}, "seed": <uint64>,
//   "tensors":   {"<name>": {"shape": [rows, cols], "data": [column-major]}},
//   "batchnorm": {"<name>": {"running_mean": [...], "running_var": [...]}},
//   "optimizer": {"t": <int>, "m": {"<name>": tensor}, "v": {"<name>": tensor}}
// }
//
// Doubles are written in shortest round-trip form, so reloading is exact.

#include "otfsim/common.hpp"
#include "otfsim/nn/autoencoder.hpp"
#include "otfsim/nn/layers.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

namespace otfsim::nn {

inline constexpr const char* kCheckpointFormat = "otfsim-ae-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const AEConfig& c)
{
    return {{"m", c.m},
            {"n", c.n},
            {"bands", c.bands},
            {"constellation_order", c.constellation_order},
            {"enc_widths", {c.enc_width(0), c.enc_width(1)}},
            {"dec_widths", {c.dec_width(0), c.dec_width(1), c.dec_width(2)}},
            {"head", c.head == Head::hd_linear ? "hd_linear" : "sd_softmax"},
            {"eta", c.eta},
            {"shared_weights", c.shared_weights},
            {"norm", c.norm == NormMode::per_sample ? "per_sample" : "per_batch"},
            {"bn_eps", c.bn_eps}};
}

/// Missing keys keep their defaults; unknown enum strings are config errors.
inline AEConfig ae_config_from_json(const nlohmann::json& j)
{
    AEConfig c;
    try {
        c.m = j.value("m", c.m);
        c.n = j.value("n", c.n);
        c.bands = j.value("bands", c.bands);
        c.constellation_order = j.value("constellation_order", c.constellation_order);
        if (j.contains("enc_widths")) {
            require(j.at("enc_widths").size() == 2, "enc_widths needs two entries");
            for (int i = 0; i < 2; ++i) c.enc_widths[i] = j.at("enc_widths")[i].get<int>();
        }
        if (j.contains("dec_widths")) {
            require(j.at("dec_widths").size() == 3, "dec_widths needs three entries");
            for (int i = 0; i < 3; ++i) c.dec_widths[i] = j.at("dec_widths")[i].get<int>();
        }
        const std::string head = j.value("head", std::string("hd_linear"));
        require(head == "hd_linear" || head == "sd_softmax", "head must be hd_linear or sd_softmax");
        c.head = head == "hd_linear" ? Head::hd_linear : Head::sd_softmax;
        c.eta = j.value("eta", c.eta);
        c.shared_weights = j.value("shared_weights", c.shared_weights);
        const std::string norm = j.value("norm", std::string("per_sample"));
        require(norm == "per_sample" || norm == "per_batch", "norm must be per_sample or per_batch");
        c.norm = norm == "per_sample" ? NormMode::per_sample : NormMode::per_batch;
        c.bn_eps = j.value("bn_eps", c.bn_eps);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid autoencoder config: ") + e.what());
    }
    for (int w : c.enc_widths) require(w >= 0, "widths must be positive");
    for (int w : c.dec_widths) require(w >= 0, "widths must be positive");
    c.validate();
    return c;
}

namespace detail {

inline nlohmann::json tensor_json(const RMat& m)
{
    return {{"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline RMat tensor_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const std::string& name)
{
    const auto shape = j.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != rows || shape[1] != cols || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ConfigError("checkpoint tensor shape mismatch: " + name);
    return Eigen::Map<const RMat>(data.data(), rows, cols);
}

} // namespace detail

inline nlohmann::json checkpoint_json(MultiBandAE& ae, const AdamState* adam = nullptr)
{
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config"] = to_json(ae.config());
    j["seed"] = ae.seed();
    const auto params = ae.named_params();
    for (const auto& [name, p] : params) j["tensors"][name] = detail::tensor_json(p->value);
    for (const auto& [name, bn] : ae.named_batchnorms()) {
        j["batchnorm"][name] = {{"running_mean", std::vector<double>(bn->running_mean.data(), bn->running_mean.data() + bn->running_mean.size())},
                                {"running_var", std::vector<double>(bn->running_var.data(), bn->running_var.data() + bn->running_var.size())}};
    }
    nlohmann::json opt{{"t", 0}, {"m", nlohmann::json::object()}, {"v", nlohmann::json::object()}};
    if (adam && !adam->m.empty()) {
        opt["t"] = adam->t;
        for (std::size_t i = 0; i < params.size(); ++i) {
            opt["m"][params[i].first] = detail::tensor_json(adam->m[i]);
            opt["v"][params[i].first] = detail::tensor_json(adam->v[i]);
        }
    }
    j["optimizer"] = opt;
    return j;
}

struct Checkpoint {
    MultiBandAE ae;
    AdamState adam;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw ConfigError("not an otfsim autoencoder checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
        Checkpoint c{MultiBandAE(ae_config_from_json(j.at("config")), j.at("seed").get<std::uint64_t>()), {}};
        const auto params = c.ae.named_params();
        for (const auto& [name, p] : params) {
            p->value = detail::tensor_from_json(j.at("tensors").at(name), p->value.rows(), p->value.cols(), name);
            p->zero_grad();
        }
        for (const auto& [name, bn] : c.ae.named_batchnorms()) {
            const auto mean = j.at("batchnorm").at(name).at("running_mean").get<std::vector<double>>();
            const auto var = j.at("batchnorm").at(name).at("running_var").get<std::vector<double>>();
            if (static_cast<int>(mean.size()) != bn->dim() || static_cast<int>(var.size()) != bn->dim())
                throw ConfigError("checkpoint batch-norm shape mismatch: " + name);
            bn->running_mean = Eigen::Map<const RVec>(mean.data(), bn->dim());
            bn->running_var = Eigen::Map<const RVec>(var.data(), bn->dim());
        }
        const auto& opt = j.at("optimizer");
        c.adam.t = opt.at("t").get<long long>();
        if (!opt.at("m").empty()) {
            for (const auto& [name, p] : params) {
                c.adam.m.push_back(detail::tensor_from_json(opt.at("m").at(name), p->value.rows(), p->value.cols(), name));
                c.adam.v.push_back(detail::tensor_from_json(opt.at("v").at(name), p->value.rows(), p->value.cols(), name));
            }
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::string& path, MultiBandAE& ae, const AdamState* adam = nullptr)
{
    std::ofstream f(path);
    if (!f) throw NumericalError("cannot open checkpoint for writing: " + path);
    f << checkpoint_json(ae, adam).dump(1) << '\n';
    if (!f) throw NumericalError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed checkpoint: ") + e.what());
    }
    return checkpoint_from_json(j);
}

} // namespace otfsim::nn
