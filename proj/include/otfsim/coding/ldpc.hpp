#pragma once

// Binary LDPC codes: progressive-edge-growth construction, systematic
// encoding through GF(2) elimination, alist I/O and a flooding sum-product
// decoder.
//
// LLR convention: L = log P(b = 1) / P(b = 0), so positive favours a one.

#include "otfsim/common.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace otfsim::coding {

inline constexpr double kLlrClamp = 40.0;

inline double clamp_llr(double v) { return std::clamp(v, -kLlrClamp, kLlrClamp); }

namespace detail {

using Row = std::vector<std::uint64_t>;

inline bool test_bit(const Row& r, int i) { return (r[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1U; }
inline void flip_bit(Row& r, int i) { r[static_cast<std::size_t>(i) >> 6] ^= std::uint64_t{1} << (i & 63); }
inline void xor_into(Row& dst, const Row& src)
{
    for (std::size_t w = 0; w < dst.size(); ++w) dst[w] ^= src[w];
}

} // namespace detail

/// Sparse parity-check matrix with a systematic encoder. Codewords keep the
/// column order of H; `info_positions` lists the columns that carry the
/// message bits, in message order.
class LdpcCode {
public:
    LdpcCode() = default;

    /// `checks[r]` lists the (0-based) variable columns of row r.
    LdpcCode(int n, std::vector<std::vector<int>> checks) : n_(n), checks_(std::move(checks))
    {
        require(n_ >= 2, "code length must be >= 2");
        require(!checks_.empty(), "parity-check matrix has no rows");
        vars_.assign(n_, {});
        for (int r = 0; r < static_cast<int>(checks_.size()); ++r) {
            auto& row = checks_[r];
            std::sort(row.begin(), row.end());
            require(std::adjacent_find(row.begin(), row.end()) == row.end(), "duplicate entry in parity-check row");
            for (int v : row) {
                require(v >= 0 && v < n_, "parity-check column index out of range");
                vars_[v].push_back(r);
            }
        }
        build_encoder();
        build_edges();
    }

    int n() const { return n_; }
    int k() const { return k_; }
    int m() const { return static_cast<int>(checks_.size()); }
    int rank() const { return n_ - k_; }
    double rate() const { return static_cast<double>(k_) / n_; }

    const std::vector<std::vector<int>>& checks() const { return checks_; }
    const std::vector<std::vector<int>>& vars() const { return vars_; }
    const std::vector<int>& info_positions() const { return info_pos_; }

    Bits encode(std::span<const std::uint8_t> info) const
    {
        require(static_cast<int>(info.size()) == k_, "message length must equal k");
        Bits c(n_, 0);
        for (int i = 0; i < k_; ++i) c[info_pos_[i]] = info[i] & 1;
        for (std::size_t r = 0; r < pivot_cols_.size(); ++r) {
            const auto& coeff = parity_rows_[r];
            int acc = 0;
            for (std::size_t w = 0; w < coeff.size(); ++w) {
                std::uint64_t word = coeff[w];
                while (word) {
                    const int b = std::countr_zero(word);
                    acc ^= info[w * 64 + b] & 1;
                    word &= word - 1;
                }
            }
            c[pivot_cols_[r]] = static_cast<std::uint8_t>(acc);
        }
        return c;
    }

    bool is_codeword(std::span<const std::uint8_t> c) const
    {
        require(static_cast<int>(c.size()) == n_, "word length must equal n");
        for (const auto& row : checks_) {
            int s = 0;
            for (int v : row) s ^= c[v] & 1;
            if (s) return false;
        }
        return true;
    }

    Bits extract_info(std::span<const std::uint8_t> c) const
    {
        require(static_cast<int>(c.size()) == n_, "word length must equal n");
        Bits out(k_);
        for (int i = 0; i < k_; ++i) out[i] = c[info_pos_[i]];
        return out;
    }

    // Edge layout for the decoder: edges of check r are [check_start_[r], check_start_[r+1]).
    const std::vector<int>& edge_var() const { return edge_var_; }
    const std::vector<int>& check_start() const { return check_start_; }
    const std::vector<std::vector<int>>& var_edges() const { return var_edges_; }

    /// True when no two columns share two or more rows (no 4-cycles).
    bool girth_at_least_6() const
    {
        std::vector<int> mark(n_, -1);
        for (int v = 0; v < n_; ++v) {
            for (int r : vars_[v])
                for (int u : checks_[r]) {
                    if (u <= v) continue;
                    if (mark[u] == v) return false;
                    mark[u] = v;
                }
        }
        return true;
    }

private:
    void build_encoder()
    {
        const int m = static_cast<int>(checks_.size());
        const std::size_t words = (static_cast<std::size_t>(n_) + 63) / 64;
        std::vector<detail::Row> rows(m, detail::Row(words, 0));
        for (int r = 0; r < m; ++r)
            for (int v : checks_[r]) detail::flip_bit(rows[r], v);

        // reduced row echelon form
        std::vector<int> pivots;
        int rank = 0;
        for (int col = 0; col < n_ && rank < m; ++col) {
            int sel = -1;
            for (int r = rank; r < m; ++r)
                if (detail::test_bit(rows[r], col)) {
                    sel = r;
                    break;
                }
            if (sel < 0) continue;
            std::swap(rows[rank], rows[sel]);
            for (int r = 0; r < m; ++r)
                if (r != rank && detail::test_bit(rows[r], col)) detail::xor_into(rows[r], rows[rank]);
            pivots.push_back(col);
            ++rank;
        }
        k_ = n_ - rank;
        require(k_ >= 1, "parity-check matrix leaves no information bits");

        std::vector<char> is_pivot(n_, 0);
        for (int p : pivots) is_pivot[p] = 1;
        info_pos_.clear();
        for (int c = 0; c < n_; ++c)
            if (!is_pivot[c]) info_pos_.push_back(c);

        pivot_cols_ = pivots;
        const std::size_t info_words = (static_cast<std::size_t>(k_) + 63) / 64;
        parity_rows_.assign(rank, detail::Row(info_words, 0));
        for (int r = 0; r < rank; ++r)
            for (int i = 0; i < k_; ++i)
                if (detail::test_bit(rows[r], info_pos_[i])) detail::flip_bit(parity_rows_[r], i);
    }

    void build_edges()
    {
        check_start_.assign(1, 0);
        edge_var_.clear();
        var_edges_.assign(n_, {});
        for (const auto& row : checks_) {
            for (int v : row) {
                var_edges_[v].push_back(static_cast<int>(edge_var_.size()));
                edge_var_.push_back(v);
            }
            check_start_.push_back(static_cast<int>(edge_var_.size()));
        }
    }

    int n_ = 0;
    int k_ = 0;
    std::vector<std::vector<int>> checks_;
    std::vector<std::vector<int>> vars_;
    std::vector<int> info_pos_;
    std::vector<int> pivot_cols_;
    std::vector<detail::Row> parity_rows_; // parity bit = <row, info> over GF(2)
    std::vector<int> edge_var_;
    std::vector<int> check_start_;
    std::vector<std::vector<int>> var_edges_;
};

struct LdpcSpec {
    int n = 96;
    double rate = 1.0 / 3.0;
    int column_weight = 3;
    std::uint64_t seed = 1;
    int max_attempts = 64;
};

namespace detail {

// One PEG pass; returns the row lists, possibly with 4-cycles or rank loss.
inline std::vector<std::vector<int>> peg_graph(int n, int m, int dv, Rng& rng)
{
    std::vector<std::vector<int>> checks(m);
    std::vector<std::vector<int>> vars(n);
    std::vector<int> depth_c(m);
    std::vector<int> depth_v(n);
    for (int v = 0; v < n; ++v) {
        for (int e = 0; e < dv; ++e) {
            std::vector<int> candidates;
            if (e == 0) {
                for (int c = 0; c < m; ++c) candidates.push_back(c);
            } else {
                // breadth-first expansion from v; prefer checks not reached,
                // else those reached last
                std::fill(depth_c.begin(), depth_c.end(), -1);
                std::fill(depth_v.begin(), depth_v.end(), -1);
                depth_v[v] = 0;
                std::deque<int> frontier{v};
                int reached = 0;
                std::vector<int> last_level;
                while (!frontier.empty()) {
                    std::vector<int> level;
                    std::deque<int> next_vars;
                    for (int u : frontier)
                        for (int c : vars[u])
                            if (depth_c[c] < 0) {
                                depth_c[c] = depth_v[u];
                                level.push_back(c);
                            }
                    if (level.empty()) break;
                    reached += static_cast<int>(level.size());
                    last_level = level;
                    if (reached == m) break;
                    for (int c : level)
                        for (int u : checks[c])
                            if (depth_v[u] < 0) {
                                depth_v[u] = depth_v[v] + 1;
                                next_vars.push_back(u);
                            }
                    frontier = std::move(next_vars);
                }
                if (reached < m) {
                    for (int c = 0; c < m; ++c)
                        if (depth_c[c] < 0) candidates.push_back(c);
                } else {
                    candidates = last_level;
                    std::erase_if(candidates, [&](int c) { return std::find(vars[v].begin(), vars[v].end(), c) != vars[v].end(); });
                    if (candidates.empty())
                        for (int c = 0; c < m; ++c)
                            if (std::find(vars[v].begin(), vars[v].end(), c) == vars[v].end()) candidates.push_back(c);
                }
            }
            std::size_t min_deg = std::numeric_limits<std::size_t>::max();
            for (int c : candidates) min_deg = std::min(min_deg, checks[c].size());
            std::vector<int> best;
            for (int c : candidates)
                if (checks[c].size() == min_deg) best.push_back(c);
            const int pick = best[std::uniform_int_distribution<std::size_t>(0, best.size() - 1)(rng)];
            checks[pick].push_back(v);
            vars[v].push_back(pick);
        }
    }
    return checks;
}

} // namespace detail

/// Regular column-weight PEG code with girth >= 6 and full-rank H. Attempts
/// draw independent seed streams until both hold.
inline LdpcCode ldpc_build(const LdpcSpec& spec)
{
    require(spec.rate > 0.0 && spec.rate < 1.0, "code rate must lie in (0, 1)");
    const double kd = spec.n * spec.rate;
    const int k = static_cast<int>(std::llround(kd));
    require(std::abs(kd - k) < 1e-9, "n * rate must be an integer");
    const int m = spec.n - k;
    require(k >= 1 && m >= 1, "code dimensions must be positive");
    require(spec.column_weight >= 2 && spec.column_weight <= m, "column weight must lie in [2, n - k]");
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(attempt)));
        LdpcCode code(spec.n, detail::peg_graph(spec.n, m, spec.column_weight, rng));
        if (code.k() == k && code.girth_at_least_6()) return code;
    }
    throw ConfigError("infeasible degree profile: no full-rank girth-6 code found");
}

/// MacKay alist text format (1-based indices, zero padding allowed).
inline void write_alist(std::ostream& os, const LdpcCode& code)
{
    const auto& vars = code.vars();
    const auto& checks = code.checks();
    std::size_t max_col = 0;
    std::size_t max_row = 0;
    for (const auto& v : vars) max_col = std::max(max_col, v.size());
    for (const auto& c : checks) max_row = std::max(max_row, c.size());
    os << code.n() << ' ' << code.m() << '\n' << max_col << ' ' << max_row << '\n';
    for (std::size_t i = 0; i < vars.size(); ++i) os << vars[i].size() << (i + 1 < vars.size() ? ' ' : '\n');
    for (std::size_t i = 0; i < checks.size(); ++i) os << checks[i].size() << (i + 1 < checks.size() ? ' ' : '\n');
    const auto emit = [&](const std::vector<int>& list, std::size_t width) {
        for (std::size_t i = 0; i < width; ++i) os << (i < list.size() ? list[i] + 1 : 0) << (i + 1 < width ? ' ' : '\n');
    };
    for (const auto& v : vars) emit(v, max_col);
    for (const auto& c : checks) emit(c, max_row);
}

inline LdpcCode read_alist(std::istream& is)
{
    int n = 0;
    int m = 0;
    int max_col = 0;
    int max_row = 0;
    if (!(is >> n >> m >> max_col >> max_row) || n < 1 || m < 1) throw ConfigError("malformed alist header");
    std::vector<int> col_deg(n);
    std::vector<int> row_deg(m);
    for (auto& d : col_deg)
        if (!(is >> d)) throw ConfigError("malformed alist column degrees");
    for (auto& d : row_deg)
        if (!(is >> d)) throw ConfigError("malformed alist row degrees");
    std::vector<std::vector<int>> from_cols(m);
    for (int v = 0; v < n; ++v)
        for (int i = 0; i < max_col; ++i) {
            int r = 0;
            if (!(is >> r)) throw ConfigError("truncated alist column lists");
            if (r == 0) continue;
            if (r < 1 || r > m || i >= col_deg[v]) throw ConfigError("alist column entry out of range");
            from_cols[r - 1].push_back(v);
        }
    std::vector<std::vector<int>> checks(m);
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < max_row; ++i) {
            int v = 0;
            if (!(is >> v)) throw ConfigError("truncated alist row lists");
            if (v == 0) continue;
            if (v < 1 || v > n || i >= row_deg[r]) throw ConfigError("alist row entry out of range");
            checks[r].push_back(v - 1);
        }
    for (int r = 0; r < m; ++r) {
        std::sort(from_cols[r].begin(), from_cols[r].end());
        std::sort(checks[r].begin(), checks[r].end());
        if (from_cols[r] != checks[r]) throw ConfigError("alist row and column lists disagree");
    }
    return LdpcCode(n, std::move(checks));
}

inline LdpcCode load_alist(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parity-check file: " + path);
    return read_alist(in);
}

inline void save_alist(const std::string& path, const LdpcCode& code)
{
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write parity-check file: " + path);
    write_alist(out, code);
}

struct DecodeResult {
    Bits bits; ///< hard decisions on the full codeword
    bool converged = false;
    int iterations = 0;
    RVec posterior;
    RVec extrinsic; ///< posterior minus the input LLR
};

/// Flooding sum-product decoder with tanh-rule check updates. Stops as soon
/// as the hard decisions satisfy every check (when `early_stop`).
inline DecodeResult ldpc_decode(const RVec& llr, const LdpcCode& code, int max_iters, bool early_stop = true)
{
    require(llr.size() == code.n(), "LLR length must equal n");
    require(max_iters >= 0, "iteration budget must be non-negative");
    const int n = code.n();
    const auto& edge_var = code.edge_var();
    const auto& start = code.check_start();
    const auto& var_edges = code.var_edges();
    const std::size_t edges = edge_var.size();

    // internal messages use log P(0)/P(1)
    RVec chan(n);
    for (int v = 0; v < n; ++v) chan(v) = -clamp_llr(llr(v));
    std::vector<double> v2c(edges);
    std::vector<double> c2v(edges, 0.0);
    std::vector<double> t(edges);
    RVec post = chan;

    DecodeResult res;
    res.bits.assign(n, 0);
    const auto decide = [&] {
        for (int v = 0; v < n; ++v) res.bits[v] = post(v) < 0.0;
        return code.is_codeword(res.bits);
    };

    res.converged = decide();
    if (!(res.converged && early_stop)) {
        for (int it = 1; it <= max_iters; ++it) {
            for (int v = 0; v < n; ++v)
                for (int e : var_edges[v]) v2c[e] = std::clamp(post(v) - c2v[e], -kLlrClamp, kLlrClamp);
            for (int c = 0; c + 1 < static_cast<int>(start.size()); ++c) {
                const int b = start[c];
                const int end = start[c + 1];
                // leave-one-out products via prefix/suffix sweeps
                double prod = 1.0;
                for (int e = b; e < end; ++e) {
                    t[e] = prod;
                    prod *= std::tanh(v2c[e] / 2.0);
                }
                prod = 1.0;
                for (int e = end - 1; e >= b; --e) {
                    const double p = std::clamp(t[e] * prod, -1.0 + 1e-15, 1.0 - 1e-15);
                    prod *= std::tanh(v2c[e] / 2.0);
                    c2v[e] = std::clamp(2.0 * std::atanh(p), -kLlrClamp, kLlrClamp);
                }
            }
            for (int v = 0; v < n; ++v) {
                double s = chan(v);
                for (int e : var_edges[v]) s += c2v[e];
                post(v) = s;
            }
            res.iterations = it;
            res.converged = decide();
            if (res.converged && early_stop) break;
        }
    }
    res.posterior = (-post).unaryExpr([](double v) { return clamp_llr(v); });
    res.extrinsic = (res.posterior - llr.unaryExpr([](double v) { return clamp_llr(v); })).unaryExpr([](double v) { return clamp_llr(v); });
    return res;
}

} // namespace otfsim::coding
