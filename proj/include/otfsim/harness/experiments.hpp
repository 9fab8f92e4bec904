#pragma once

// Monte-Carlo drivers (BER, PAPR CCDF, training, parameter sweeps) and their
// CSV outputs.
//
// Every frame (or coded block) u at grid point p draws from its own stream
// Rng(derive_seed(derive_seed(seed, p), u)), so the result of a unit never
// depends on the worker that ran it. Units are merged in index order and the
// stopping rule is applied during that merge, which makes multi-worker output
// identical to single-worker output.

#include "otfsim/harness/config.hpp"
#include "otfsim/harness/transceiver.hpp"
#include "otfsim/nn/checkpoint.hpp"
#include "otfsim/nn/training.hpp"
#include "otfsim/papr.hpp"

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace otfsim::harness {

inline constexpr const char* kBerSchema = "ber/1";
inline constexpr const char* kPaprSchema = "papr/1";
inline constexpr const char* kTraceSchema = "trace/1";
inline constexpr const char* kBerColumns = "experiment,baseline,snr_mode,snr_db,ber,bit_errors,total_bits,frames,early_stopped,seed,papr_ccdf_ref";
inline constexpr const char* kPaprColumns = "experiment,baseline,threshold_db,ccdf,frames,seed";
inline constexpr const char* kTraceColumns = "iteration,phase,l1,l2,total";

inline std::string version_string()
{
#ifdef OTFSIM_VERSION
    return OTFSIM_VERSION;
#else
    return "unknown";
#endif
}

inline std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Runs f(i) for i in [begin, end) over `workers` threads, results in index order.
template <class T, class F>
std::vector<T> parallel_map(long long begin, long long end, int workers, F&& f)
{
    std::vector<T> out(static_cast<std::size_t>(std::max(0LL, end - begin)));
    if (workers <= 1 || out.size() <= 1) {
        for (long long i = begin; i < end; ++i) out[static_cast<std::size_t>(i - begin)] = f(i);
        return out;
    }
    const int w = std::min<long long>(workers, static_cast<long long>(out.size()));
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> pool;
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (long long i = begin + t; i < end; i += w) out[static_cast<std::size_t>(i - begin)] = f(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct PointResult {
    FrameStats stats;
    bool early_stopped = false;
};

/// Accumulates units until the frame budget is spent or, when max_errors > 0,
/// the error count reaches max_errors.
template <class F>
PointResult monte_carlo(F&& unit, long long max_frames, long long max_errors, int frames_per_unit, int workers)
{
    PointResult r;
    const long long max_units = (max_frames + frames_per_unit - 1) / frames_per_unit;
    const long long wave = workers <= 1 ? 1 : 4LL * workers;
    long long next = 0;
    while (next < max_units) {
        const long long end = std::min(max_units, next + wave);
        const auto res = parallel_map<FrameStats>(next, end, workers, unit);
        for (const auto& s : res) {
            r.stats.bit_errors += s.bit_errors;
            r.stats.bits += s.bits;
            r.stats.frames += s.frames;
            if (max_errors > 0 && r.stats.bit_errors >= max_errors) {
                r.early_stopped = r.stats.frames < max_frames;
                return r;
            }
        }
        next = end;
    }
    return r;
}

struct ResultRow {
    std::string experiment;
    std::string baseline;
    std::string snr_mode;
    double snr_db = 0.0;
    double ber = 0.0;
    long long bit_errors = 0;
    long long total_bits = 0;
    long long frames = 0;
    bool early_stopped = false;
    std::uint64_t seed = 0;
    std::string papr_ccdf_ref;
};

inline std::shared_ptr<const nn::MultiBandAE> train_or_load(const ExperimentConfig& cfg, nn::TrainState* state = nullptr)
{
    require(cfg.ae.has_value(), "no ae section in config");
    if (!cfg.ae->checkpoint.empty()) {
        auto ck = nn::load_checkpoint(cfg.ae->checkpoint);
        require(ck.ae.config().m == cfg.grid.m && ck.ae.config().n == cfg.grid.n, "checkpoint grid does not match the config");
        return std::make_shared<const nn::MultiBandAE>(std::move(ck.ae));
    }
    auto ae = std::make_shared<nn::MultiBandAE>(cfg.ae->model, derive_seed(cfg.ae->train.seed, 0xae0));
    auto st = nn::train(*ae, cfg.ae->train, cfg.sampler());
    if (state) *state = std::move(st);
    return ae;
}

/// BER per grid point. `ae` overrides the model for ae_variant (otherwise
/// it is loaded or trained from the config).
inline std::vector<ResultRow> run_ber(const ExperimentConfig& cfg, int workers = 1, std::shared_ptr<const nn::MultiBandAE> ae = nullptr)
{
    cfg.validate();
    if (cfg.baseline == Baseline::ae_variant && !ae) ae = train_or_load(cfg);
    const Link link(cfg, ae);
    std::vector<ResultRow> rows;
    for (std::size_t p = 0; p < cfg.snr_grid_db.size(); ++p) {
        const double n0 = link.noise_var(cfg.snr_grid_db[p]);
        const std::uint64_t point_seed = derive_seed(cfg.seed, p);
        auto unit = [&](long long u) {
            Rng rng(derive_seed(point_seed, static_cast<std::uint64_t>(u)));
            return link.run_unit(n0, rng);
        };
        const auto r = monte_carlo(unit, cfg.frames_per_point, cfg.max_bit_errors, link.frames_per_unit(), workers);
        ResultRow row;
        row.experiment = cfg.name;
        row.baseline = to_string(cfg.baseline);
        row.snr_mode = cfg.snr_mode == SnrMode::snr ? "snr" : "ebn0";
        row.snr_db = cfg.snr_grid_db[p];
        row.bit_errors = r.stats.bit_errors;
        row.total_bits = r.stats.bits;
        row.ber = r.stats.bits ? static_cast<double>(r.stats.bit_errors) / static_cast<double>(r.stats.bits) : 0.0;
        row.frames = r.stats.frames;
        row.early_stopped = r.early_stopped;
        row.seed = cfg.seed;
        row.papr_ccdf_ref = cfg.name + "_papr.csv";
        rows.push_back(row);
    }
    return rows;
}

struct PaprResult {
    papr::CcdfCurve curve;
    std::vector<double> papr_db; ///< per frame, in frame order
};

/// Oversampled PAPR of every frame. The clipped baseline clips the
/// oversampled waveform.
inline PaprResult run_papr(const ExperimentConfig& cfg, int workers = 1, std::shared_ptr<const nn::MultiBandAE> ae = nullptr)
{
    cfg.validate();
    if (cfg.baseline == Baseline::ae_variant && !ae) ae = train_or_load(cfg);
    ExperimentConfig uncoded = cfg;
    uncoded.coding.reset();
    const Link link(uncoded, ae);
    const std::uint64_t root = derive_seed(cfg.seed, 0xccdf);
    auto frame = [&](long long u) {
        Rng rng(derive_seed(root, static_cast<std::uint64_t>(u)));
        const Bits bits = random_bits(rng, static_cast<std::size_t>(link.tx_im().bits_per_frame()));
        const CVec x = link.transmit(bits);
        otfs::TDFrame s = papr::oversample(otfs::TDFrame{otfs::modulate_vec(x, cfg.grid.m, cfg.grid.n), 1}, cfg.papr.oversampling);
        if (cfg.baseline == Baseline::otfs_clipped) s = clip_baseline(s, cfg.clip_db);
        return papr::papr_db(s);
    };
    PaprResult res;
    res.papr_db = parallel_map<double>(0, cfg.papr.frames, workers, frame);
    papr::CcdfAccumulator acc(cfg.papr.thresholds_db);
    for (double v : res.papr_db) acc.add(v);
    res.curve = acc.curve();
    return res;
}

inline void write_header(std::ostream& os, const char* schema, const ExperimentConfig& cfg)
{
    os << "# otfsim " << version_string() << "\n";
    os << "# schema " << schema << "\n";
    os << "# config " << to_json(cfg).dump() << "\n";
}

inline void write_ber_csv(std::ostream& os, const ExperimentConfig& cfg, const std::vector<ResultRow>& rows)
{
    write_header(os, kBerSchema, cfg);
    os << kBerColumns << "\n";
    for (const auto& r : rows) {
        os << r.experiment << ',' << r.baseline << ',' << r.snr_mode << ',' << fmt_double(r.snr_db) << ',' << fmt_double(r.ber) << ','
           << r.bit_errors << ',' << r.total_bits << ',' << r.frames << ',' << (r.early_stopped ? 1 : 0) << ',' << r.seed << ','
           << r.papr_ccdf_ref << "\n";
    }
}

inline void write_papr_csv(std::ostream& os, const ExperimentConfig& cfg, const PaprResult& res)
{
    write_header(os, kPaprSchema, cfg);
    os << kPaprColumns << "\n";
    for (std::size_t i = 0; i < res.curve.thresholds_db.size(); ++i) {
        os << cfg.name << ',' << to_string(cfg.baseline) << ',' << fmt_double(res.curve.thresholds_db[i]) << ','
           << fmt_double(res.curve.exceed_prob[i]) << ',' << res.papr_db.size() << ',' << cfg.seed << "\n";
    }
}

inline void write_trace_csv(std::ostream& os, const ExperimentConfig& cfg, const std::vector<nn::TraceRow>& trace)
{
    write_header(os, kTraceSchema, cfg);
    os << kTraceColumns << "\n";
    for (const auto& t : trace)
        os << t.iteration << ',' << t.phase << ',' << fmt_double(t.l1) << ',' << fmt_double(t.l2) << ',' << fmt_double(t.total) << "\n";
}

template <class W>
void write_file(const std::filesystem::path& path, W&& writer)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NumericalError("cannot open output file: " + path.string());
    writer(f);
    if (!f) throw NumericalError("failed writing output file: " + path.string());
}

struct TrainingOutput {
    std::filesystem::path checkpoint;
    std::filesystem::path trace;
};

/// Trains the configured AE, writing the checkpoint and per-iteration trace.
/// On divergence the partial trace is written before the error propagates.
inline TrainingOutput run_training(const ExperimentConfig& cfg, const std::filesystem::path& out_dir)
{
    cfg.validate();
    require(cfg.ae.has_value(), "training needs an ae section");
    TrainingOutput out{out_dir / (cfg.name + "_model.json"), out_dir / (cfg.name + "_trace.csv")};
    nn::MultiBandAE ae(cfg.ae->model, derive_seed(cfg.ae->train.seed, 0xae0));
    nn::TrainState st;
    try {
        st = nn::train(ae, cfg.ae->train, cfg.sampler());
    } catch (const nn::TrainingDiverged& e) {
        write_file(out.trace, [&](std::ostream& os) { write_trace_csv(os, cfg, e.trace); });
        throw;
    }
    write_file(out.trace, [&](std::ostream& os) { write_trace_csv(os, cfg, st.trace); });
    write_file(out.checkpoint, [&](std::ostream& os) { os << nn::checkpoint_json(ae, &st.adam).dump(1) << "\n"; });
    return out;
}

enum class Task { ber, papr, train };

inline Task task_from_string(const std::string& s)
{
    if (s == "ber") return Task::ber;
    if (s == "papr") return Task::papr;
    if (s == "train") return Task::train;
    throw ConfigError("unknown sweep task: " + s);
}

/// Runs `task` once per value written at JSON pointer `key` of the base config.
/// Output names get the suffix _s<i>.
inline std::vector<std::filesystem::path> run_sweep(const json& base, const std::string& key, const std::vector<json>& values, Task task,
                                                    const std::filesystem::path& out_dir, int workers = 1)
{
    require(!values.empty(), "sweep needs at least one value");
    json::json_pointer ptr;
    try {
        ptr = json::json_pointer(key);
    } catch (const json::exception& e) {
        throw ConfigError("invalid sweep key '" + key + "': " + e.what());
    }
    std::vector<std::filesystem::path> outputs;
    for (std::size_t i = 0; i < values.size(); ++i) {
        json j = resolve_presets(base);
        j[ptr] = values[i];
        j["name"] = j.value("name", std::string("experiment")) + "_s" + std::to_string(i);
        const ExperimentConfig cfg = config_from_json(j);
        if (task == Task::ber) {
            const auto rows = run_ber(cfg, workers);
            outputs.push_back(out_dir / (cfg.name + "_ber.csv"));
            write_file(outputs.back(), [&](std::ostream& os) { write_ber_csv(os, cfg, rows); });
        } else if (task == Task::papr) {
            const auto res = run_papr(cfg, workers);
            outputs.push_back(out_dir / (cfg.name + "_papr.csv"));
            write_file(outputs.back(), [&](std::ostream& os) { write_papr_csv(os, cfg, res); });
        } else {
            const auto t = run_training(cfg, out_dir);
            outputs.push_back(t.checkpoint);
            outputs.push_back(t.trace);
        }
    }
    return outputs;
}

} // namespace otfsim::harness
