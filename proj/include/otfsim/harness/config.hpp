#pragma once

// Experiment configuration: JSON parsing with defaults, validation, named
// presets and resolution back to a canonical JSON echo.

#include "otfsim/coding/ldpc.hpp"
#include "otfsim/common.hpp"
#include "otfsim/im.hpp"
#include "otfsim/nn/checkpoint.hpp"
#include "otfsim/nn/training.hpp"
#include "otfsim/ntn.hpp"
#include "otfsim/papr.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace otfsim::harness {

using nlohmann::json;

enum class Baseline { otfs, otfs_clipped, otfs_im, mb_dfts_otfs_im, ae_variant };
enum class ChannelModel { awgn, shadowed, rician };
enum class SnrMode { snr, ebn0 };

inline const char* to_string(Baseline b)
{
    switch (b) {
    case Baseline::otfs: return "otfs";
    case Baseline::otfs_clipped: return "otfs_clipped";
    case Baseline::otfs_im: return "otfs_im";
    case Baseline::mb_dfts_otfs_im: return "mb_dfts_otfs_im";
    case Baseline::ae_variant: return "ae_variant";
    }
    return "?";
}

struct GridConfig {
    int m = 16;
    int n = 16;
    double subcarrier_spacing_hz = 90e3;
    double carrier_hz = 25.675e9;
};

struct ChannelConfig {
    ChannelModel model = ChannelModel::shadowed;
    ntn::ShadowedRicianParams fading;
    double rician_k = 0.0;
    int path_count = 10;
    double tau_max_s = 2.5e-6;
    std::optional<double> doppler_hz; ///< explicit nu_max; otherwise from the orbit geometry
    double altitude_m = 300e3;
    double speed_m_s = 7433.0;
    double elapsed_s = 1.0;
    double max_elevation_deg = 90.0;
    ntn::DopplerProfile doppler_profile = ntn::DopplerProfile::cosine_angle;
    ntn::LosFading los_fading = ntn::LosFading::nakagami;
    double los_angle_rad = 0.0;
};

struct CodingConfig {
    coding::LdpcSpec ldpc;
    int outer_iterations = 1; ///< I0
    int bp_iterations = 50;
    bool max_log = false;
};

struct PaprConfig {
    int frames = 10000;
    int oversampling = papr::kDefaultOversampling;
    std::vector<double> thresholds_db = papr::default_thresholds();
};

struct AeSection {
    nn::AEConfig model;
    nn::TrainConfig train;
    std::string checkpoint; ///< load instead of training when non-empty
};

struct ExperimentConfig {
    std::string name = "experiment";
    GridConfig grid;
    im::IMConfig im{.groups = 32, .group_size = 8, .null_count = 2};
    ChannelConfig channel;
    std::vector<double> snr_grid_db{0.0, 5.0, 10.0, 15.0, 20.0};
    SnrMode snr_mode = SnrMode::snr;
    long long frames_per_point = 1000;
    long long max_bit_errors = 200; ///< 0 disables early stopping
    std::uint64_t seed = 1;
    Baseline baseline = Baseline::mb_dfts_otfs_im;
    double clip_db = 6.0;
    double ce_error_var = 0.0;
    std::optional<CodingConfig> coding;
    std::optional<AeSection> ae;
    PaprConfig papr;

    /// The IM mapping actually transmitted by the chosen baseline.
    im::IMConfig tx_im() const
    {
        im::IMConfig c = im;
        if (baseline == Baseline::otfs || baseline == Baseline::otfs_clipped) {
            c.null_count = 0;
            c.scheme = im::Scheme::gfim_combinatorial;
        }
        c.dft_spread = baseline == Baseline::mb_dfts_otfs_im;
        return c;
    }

    ntn::GridTiming timing() const { return {grid.m, grid.n, grid.subcarrier_spacing_hz}; }

    ntn::ShadowedRicianParams fading() const
    {
        if (channel.model == ChannelModel::rician) return ntn::ShadowedRicianParams::from_rician_k(channel.rician_k, 1);
        return channel.fading;
    }

    /// nu_max: explicit, or the orbit-geometry bound evaluated elapsed_s after the apex.
    double doppler_hz() const
    {
        if (channel.doppler_hz) return *channel.doppler_hz;
        ntn::GeometryParams g;
        g.orbit_altitude_m = channel.altitude_m;
        g.max_elevation_rad = channel.max_elevation_deg * kPi / 180.0;
        g.angular_rate_rad_s = ntn::angular_rate_from_speed(channel.speed_m_s, g.orbit_radius_m());
        g.elapsed_s = channel.elapsed_s;
        ntn::LinkBudget lb;
        lb.carrier_hz = grid.carrier_hz;
        return std::abs(ntn::max_doppler(g, lb));
    }

    ntn::PathRecipe recipe() const
    {
        ntn::PathRecipe r;
        r.path_count = channel.path_count;
        r.tau_max_s = channel.tau_max_s;
        r.doppler_hz = doppler_hz();
        r.los_angle_rad = channel.los_angle_rad;
        r.doppler_profile = channel.doppler_profile;
        r.los_fading = channel.los_fading;
        return r;
    }

    /// Fresh path set per call; AWGN is the single unit LoS path.
    nn::ChannelSampler sampler() const
    {
        if (channel.model == ChannelModel::awgn) return [](Rng&) { return otfs::PathSet::identity(); };
        const auto rec = recipe();
        const auto fad = fading();
        const auto tim = timing();
        return [rec, fad, tim](Rng& rng) { return ntn::gen_paths(rec, fad, tim, rng); };
    }

    void validate() const
    {
        otfs::check_grid_dims(grid.m, grid.n);
        require(grid.subcarrier_spacing_hz > 0.0 && grid.carrier_hz > 0.0, "grid frequencies must be positive");
        tx_im().validate(grid.m, grid.n);
        require(!snr_grid_db.empty(), "snr_grid_db must not be empty");
        require(frames_per_point >= 1, "frames_per_point must be >= 1");
        require(max_bit_errors >= 0, "max_bit_errors must be >= 0");
        require(clip_db >= 0.0, "clip_db must be >= 0");
        require(ce_error_var >= 0.0, "ce_error_var must be >= 0");
        require(papr.frames >= 1 && papr.oversampling >= 1, "papr frames and oversampling must be >= 1");
        require(!papr.thresholds_db.empty(), "papr thresholds must not be empty");
        if (channel.model != ChannelModel::awgn) {
            fading().validate();
            require(channel.tau_max_s >= 0.0, "tau_max_s must be >= 0");
            const auto tim = timing();
            if (ntn::delay_taps(channel.tau_max_s, tim) > grid.m) throw ConfigError("delay spread exceeds the grid: L > M");
            if (ntn::doppler_index_span(doppler_hz(), tim) > grid.n / 2) throw ConfigError("Doppler spread exceeds the grid: k_max > N/2");
            require(channel.path_count >= 1 && channel.path_count <= grid.m * grid.n, "path_count out of range");
        }
        if (coding) {
            require(coding->outer_iterations >= 1, "outer_iterations must be >= 1");
            require(coding->bp_iterations >= 0, "bp_iterations must be >= 0");
            require(coding->ldpc.n >= 2 && coding->ldpc.rate > 0.0 && coding->ldpc.rate < 1.0, "invalid LDPC length or rate");
            require(baseline != Baseline::ae_variant, "the coded pipeline uses the soft IM demapper; not available for ae_variant");
            require(baseline != Baseline::otfs_clipped, "the coded pipeline is not defined for the clipped baseline");
        }
        if (baseline == Baseline::ae_variant) {
            require(ae.has_value(), "ae_variant needs an ae section");
            ae->model.validate();
            require(ae->model.m == grid.m && ae->model.n == grid.n, "ae grid must match the experiment grid");
            require(ae->model.constellation_order == im.constellation_order, "ae constellation must match im");
            if (ae->model.head == nn::Head::sd_softmax) require(im.null_count == 0, "the SD head bit decisions need K_z = 0");
            if (ae->checkpoint.empty()) ae->train.validate(ae->model);
        }
    }
};

namespace detail {

template <class T>
void get_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
{
    require(j.is_object(), where + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        require(ok, "unknown key '" + k + "' in " + where);
    }
}

template <class E>
E parse_enum(const json& j, const char* key, std::initializer_list<std::pair<const char*, E>> options, E fallback)
{
    if (!j.contains(key)) return fallback;
    const std::string s = j.at(key).get<std::string>();
    for (const auto& [name, v] : options)
        if (s == name) return v;
    throw ConfigError(std::string("invalid value '") + s + "' for " + key);
}

inline im::IMConfig im_from_json(const json& j, im::IMConfig c)
{
    check_keys(j, {"groups", "group_size", "null_count", "constellation_order", "dft_spread", "spread_mode", "scheme"}, "im");
    get_opt(j, "groups", c.groups);
    get_opt(j, "group_size", c.group_size);
    get_opt(j, "null_count", c.null_count);
    get_opt(j, "constellation_order", c.constellation_order);
    get_opt(j, "dft_spread", c.dft_spread);
    c.spread_mode = parse_enum<im::SpreadMode>(j, "spread_mode", {{"band", im::SpreadMode::band}, {"doppler_line", im::SpreadMode::doppler_line}},
                                               c.spread_mode);
    c.scheme = parse_enum<im::Scheme>(j, "scheme", {{"gfim", im::Scheme::gfim_combinatorial}, {"fim", im::Scheme::fim_single_null}}, c.scheme);
    return c;
}

inline json im_to_json(const im::IMConfig& c)
{
    return {{"groups", c.groups},
            {"group_size", c.group_size},
            {"null_count", c.null_count},
            {"constellation_order", c.constellation_order},
            {"dft_spread", c.dft_spread},
            {"spread_mode", c.spread_mode == im::SpreadMode::band ? "band" : "doppler_line"},
            {"scheme", c.scheme == im::Scheme::gfim_combinatorial ? "gfim" : "fim"}};
}

inline nn::TrainConfig train_from_json(const json& j, const im::IMConfig& data)
{
    check_keys(j, {"lr", "batch", "samples", "k1", "k2", "snr_db", "snr_range_db", "csi_error_var", "seed"}, "ae.train");
    nn::TrainConfig t;
    get_opt(j, "lr", t.lr);
    get_opt(j, "batch", t.batch);
    get_opt(j, "samples", t.samples);
    get_opt(j, "k1", t.k1);
    get_opt(j, "k2", t.k2);
    get_opt(j, "snr_db", t.snr_db);
    if (j.contains("snr_range_db") && !j.at("snr_range_db").is_null()) {
        const auto r = j.at("snr_range_db").get<std::vector<double>>();
        require(r.size() == 2, "snr_range_db needs [low, high]");
        t.snr_range_db = std::make_pair(r[0], r[1]);
    }
    get_opt(j, "csi_error_var", t.csi_error_var);
    get_opt(j, "seed", t.seed);
    t.data = data;
    return t;
}

inline json train_to_json(const nn::TrainConfig& t)
{
    json j{{"lr", t.lr}, {"batch", t.batch}, {"samples", t.samples}, {"k1", t.k1}, {"k2", t.k2}, {"snr_db", t.snr_db},
           {"csi_error_var", t.csi_error_var}, {"seed", t.seed}};
    j["snr_range_db"] = t.snr_range_db ? json{t.snr_range_db->first, t.snr_range_db->second} : json(nullptr);
    return j;
}

} // namespace detail

inline ExperimentConfig config_from_json(const json& j)
{
    using namespace detail;
    ExperimentConfig c;
    try {
        check_keys(j, {"name", "grid", "im", "channel", "snr_grid_db", "snr_mode", "frames_per_point", "max_bit_errors", "seed", "baseline",
                       "clip_db", "ce_error_var", "coding", "ae", "papr", "preset"},
                   "config");
        get_opt(j, "name", c.name);
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            check_keys(g, {"m", "n", "subcarrier_spacing_hz", "carrier_hz"}, "grid");
            get_opt(g, "m", c.grid.m);
            get_opt(g, "n", c.grid.n);
            get_opt(g, "subcarrier_spacing_hz", c.grid.subcarrier_spacing_hz);
            get_opt(g, "carrier_hz", c.grid.carrier_hz);
        }
        if (j.contains("im")) c.im = im_from_json(j.at("im"), c.im);
        if (j.contains("channel")) {
            const auto& ch = j.at("channel");
            check_keys(ch, {"model", "nakagami_m", "b0", "omega", "rician_k", "path_count", "tau_max_s", "doppler_hz", "altitude_m", "speed_m_s",
                            "elapsed_s", "max_elevation_deg", "doppler_profile", "los_fading", "los_angle_rad"},
                       "channel");
            auto& cc = c.channel;
            cc.model = parse_enum<ChannelModel>(ch, "model",
                                                {{"awgn", ChannelModel::awgn}, {"shadowed", ChannelModel::shadowed}, {"rician", ChannelModel::rician}},
                                                cc.model);
            get_opt(ch, "nakagami_m", cc.fading.nakagami_m);
            get_opt(ch, "b0", cc.fading.half_nlos_power);
            get_opt(ch, "omega", cc.fading.los_power);
            get_opt(ch, "rician_k", cc.rician_k);
            get_opt(ch, "path_count", cc.path_count);
            get_opt(ch, "tau_max_s", cc.tau_max_s);
            if (ch.contains("doppler_hz") && !ch.at("doppler_hz").is_null()) cc.doppler_hz = ch.at("doppler_hz").get<double>();
            get_opt(ch, "altitude_m", cc.altitude_m);
            get_opt(ch, "speed_m_s", cc.speed_m_s);
            get_opt(ch, "elapsed_s", cc.elapsed_s);
            get_opt(ch, "max_elevation_deg", cc.max_elevation_deg);
            cc.doppler_profile = parse_enum<ntn::DopplerProfile>(
                ch, "doppler_profile", {{"uniform_index", ntn::DopplerProfile::uniform_index}, {"cosine_angle", ntn::DopplerProfile::cosine_angle}},
                cc.doppler_profile);
            cc.los_fading = parse_enum<ntn::LosFading>(ch, "los_fading", {{"fixed", ntn::LosFading::fixed}, {"nakagami", ntn::LosFading::nakagami}},
                                                       cc.los_fading);
            get_opt(ch, "los_angle_rad", cc.los_angle_rad);
        }
        get_opt(j, "snr_grid_db", c.snr_grid_db);
        c.snr_mode = parse_enum<SnrMode>(j, "snr_mode", {{"snr", SnrMode::snr}, {"ebn0", SnrMode::ebn0}}, c.snr_mode);
        get_opt(j, "frames_per_point", c.frames_per_point);
        get_opt(j, "max_bit_errors", c.max_bit_errors);
        get_opt(j, "seed", c.seed);
        c.baseline = parse_enum<Baseline>(j, "baseline",
                                          {{"otfs", Baseline::otfs},
                                           {"otfs_clipped", Baseline::otfs_clipped},
                                           {"otfs_im", Baseline::otfs_im},
                                           {"mb_dfts_otfs_im", Baseline::mb_dfts_otfs_im},
                                           {"ae_variant", Baseline::ae_variant}},
                                          c.baseline);
        get_opt(j, "clip_db", c.clip_db);
        get_opt(j, "ce_error_var", c.ce_error_var);
        if (j.contains("coding") && !j.at("coding").is_null()) {
            const auto& cj = j.at("coding");
            check_keys(cj, {"n", "rate", "column_weight", "seed", "max_attempts", "outer_iterations", "bp_iterations", "max_log"}, "coding");
            CodingConfig cc;
            get_opt(cj, "n", cc.ldpc.n);
            get_opt(cj, "rate", cc.ldpc.rate);
            get_opt(cj, "column_weight", cc.ldpc.column_weight);
            get_opt(cj, "seed", cc.ldpc.seed);
            get_opt(cj, "max_attempts", cc.ldpc.max_attempts);
            get_opt(cj, "outer_iterations", cc.outer_iterations);
            get_opt(cj, "bp_iterations", cc.bp_iterations);
            get_opt(cj, "max_log", cc.max_log);
            c.coding = cc;
        }
        if (j.contains("ae") && !j.at("ae").is_null()) {
            const auto& aj = j.at("ae");
            check_keys(aj, {"model", "train", "checkpoint"}, "ae");
            AeSection a;
            json model = aj.value("model", json::object());
            model["m"] = c.grid.m;
            model["n"] = c.grid.n;
            if (!model.contains("constellation_order")) model["constellation_order"] = c.im.constellation_order;
            a.model = nn::ae_config_from_json(model);
            a.train = train_from_json(aj.value("train", json::object()), c.im);
            get_opt(aj, "checkpoint", a.checkpoint);
            c.ae = a;
        }
        if (j.contains("papr")) {
            const auto& pj = j.at("papr");
            check_keys(pj, {"frames", "oversampling", "thresholds_db"}, "papr");
            get_opt(pj, "frames", c.papr.frames);
            get_opt(pj, "oversampling", c.papr.oversampling);
            get_opt(pj, "thresholds_db", c.papr.thresholds_db);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

/// Canonical, fully resolved echo of a config.
inline json to_json(const ExperimentConfig& c)
{
    using namespace detail;
    json j;
    j["name"] = c.name;
    j["grid"] = {{"m", c.grid.m}, {"n", c.grid.n}, {"subcarrier_spacing_hz", c.grid.subcarrier_spacing_hz}, {"carrier_hz", c.grid.carrier_hz}};
    j["im"] = im_to_json(c.im);
    const auto& ch = c.channel;
    j["channel"] = {{"model", ch.model == ChannelModel::awgn ? "awgn" : ch.model == ChannelModel::shadowed ? "shadowed" : "rician"},
                    {"nakagami_m", ch.fading.nakagami_m},
                    {"b0", ch.fading.half_nlos_power},
                    {"omega", ch.fading.los_power},
                    {"rician_k", ch.rician_k},
                    {"path_count", ch.path_count},
                    {"tau_max_s", ch.tau_max_s},
                    {"doppler_hz", ch.doppler_hz ? json(*ch.doppler_hz) : json(nullptr)},
                    {"altitude_m", ch.altitude_m},
                    {"speed_m_s", ch.speed_m_s},
                    {"elapsed_s", ch.elapsed_s},
                    {"max_elevation_deg", ch.max_elevation_deg},
                    {"doppler_profile", ch.doppler_profile == ntn::DopplerProfile::cosine_angle ? "cosine_angle" : "uniform_index"},
                    {"los_fading", ch.los_fading == ntn::LosFading::nakagami ? "nakagami" : "fixed"},
                    {"los_angle_rad", ch.los_angle_rad}};
    j["snr_grid_db"] = c.snr_grid_db;
    j["snr_mode"] = c.snr_mode == SnrMode::snr ? "snr" : "ebn0";
    j["frames_per_point"] = c.frames_per_point;
    j["max_bit_errors"] = c.max_bit_errors;
    j["seed"] = c.seed;
    j["baseline"] = to_string(c.baseline);
    j["clip_db"] = c.clip_db;
    j["ce_error_var"] = c.ce_error_var;
    if (c.coding) {
        const auto& cc = *c.coding;
        j["coding"] = {{"n", cc.ldpc.n},
                       {"rate", cc.ldpc.rate},
                       {"column_weight", cc.ldpc.column_weight},
                       {"seed", cc.ldpc.seed},
                       {"max_attempts", cc.ldpc.max_attempts},
                       {"outer_iterations", cc.outer_iterations},
                       {"bp_iterations", cc.bp_iterations},
                       {"max_log", cc.max_log}};
    } else {
        j["coding"] = nullptr;
    }
    if (c.ae) {
        j["ae"] = {{"model", nn::to_json(c.ae->model)}, {"train", train_to_json(c.ae->train)}, {"checkpoint", c.ae->checkpoint}};
    } else {
        j["ae"] = nullptr;
    }
    j["papr"] = {{"frames", c.papr.frames}, {"oversampling", c.papr.oversampling}, {"thresholds_db", c.papr.thresholds_db}};
    return j;
}

/// Built-in presets. `paper_table3` holds the reference simulation table
/// (16-QAM column); `paper_table3_qam4` is the 4-QAM M = N = 16 variant.
inline json preset_json(const std::string& name)
{
    if (name == "paper_table3" || name == "paper_table3_qam4") {
        const int q = name == "paper_table3" ? 16 : 4;
        return json{{"name", name},
                    {"grid", {{"m", 16}, {"n", 16}, {"subcarrier_spacing_hz", 90e3}, {"carrier_hz", 25.675e9}}},
                    {"im", {{"groups", 32}, {"group_size", 8}, {"null_count", 2}, {"constellation_order", q}, {"dft_spread", true}}},
                    {"channel",
                     {{"model", "shadowed"},
                      {"nakagami_m", 2},
                      {"b0", 0.25},
                      {"omega", 0.5},
                      {"path_count", 10},
                      {"tau_max_s", 2.5e-6},
                      {"altitude_m", 300e3},
                      {"speed_m_s", 7433.0},
                      {"elapsed_s", 1.0},
                      {"max_elevation_deg", 90.0},
                      {"doppler_profile", "cosine_angle"},
                      {"los_fading", "nakagami"}}},
                    {"snr_grid_db", {0, 5, 10, 15, 20, 25, 30}},
                    {"frames_per_point", 2000},
                    {"max_bit_errors", 200},
                    {"seed", 1},
                    {"baseline", "mb_dfts_otfs_im"},
                    {"coding", {{"n", 8192}, {"rate", 1.0 / 3.0}, {"column_weight", 3}, {"outer_iterations", 1}, {"bp_iterations", 50}}},
                    {"ae",
                     {{"model", {{"bands", 2}, {"eta", 0.01}, {"head", "hd_linear"}}},
                      {"train", {{"lr", 1e-3}, {"batch", 200}, {"samples", 80000}, {"k1", 2000}, {"k2", 2000}, {"snr_db", 15.0}}}}}};
    }
    if (name == "desk_qam4") {
        return json{{"name", name},
                    {"grid", {{"m", 8}, {"n", 8}}},
                    {"im", {{"groups", 16}, {"group_size", 4}, {"null_count", 1}, {"constellation_order", 4}}},
                    {"channel", {{"model", "shadowed"}, {"nakagami_m", 2}, {"b0", 0.25}, {"omega", 0.5}, {"path_count", 4}, {"doppler_hz", 15e3}}},
                    {"snr_grid_db", {0, 5, 10, 15, 20}},
                    {"frames_per_point", 500},
                    {"baseline", "otfs_im"}};
    }
    throw ConfigError("unknown preset: " + name);
}

inline std::vector<std::string> preset_names() { return {"paper_table3", "paper_table3_qam4", "desk_qam4"}; }

/// Recursively overlays `patch` onto `base` (objects merge, everything else replaces).
inline json merge_json(json base, const json& patch)
{
    if (!base.is_object() || !patch.is_object()) return patch;
    for (const auto& [k, v] : patch.items()) base[k] = base.contains(k) ? merge_json(base[k], v) : v;
    return base;
}

/// A config file may name a "preset" that its remaining keys override.
inline json resolve_presets(const json& j)
{
    if (!j.is_object() || !j.contains("preset")) return j;
    json rest = j;
    rest.erase("preset");
    return merge_json(preset_json(j.at("preset").get<std::string>()), rest);
}

inline json read_json_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) { return config_from_json(resolve_presets(read_json_file(path))); }

} // namespace otfsim::harness
