#pragma once

// LEO-to-ground link model: refraction-aware slant path, path loss, gaseous
// absorption, Doppler geometry, Shadowed-Rician small-scale fading and
// generation of on-grid delay-Doppler path sets.

#include "otfsim/common.hpp"
#include "otfsim/otfs.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace otfsim::ntn {

struct GeometryParams {
    double earth_radius_m = kEarthRadius;
    double orbit_altitude_m = 300e3;
    double elevation_rad = kPi / 2; ///< initial (detected) elevation theta_0
    double max_elevation_rad = kPi / 2;
    int quadrature_points = 100;
    double angular_rate_rad_s = 0.0; ///< omega_{R,u}
    double elapsed_s = 0.0;          ///< t - t0

    double orbit_radius_m() const { return earth_radius_m + orbit_altitude_m; }
    /// Central angle travelled since the apex, psi(t, t0) for a circular orbit.
    double central_angle_rad() const { return angular_rate_rad_s * elapsed_s; }

    void validate() const
    {
        require(quadrature_points >= 2, "quadrature needs at least 2 points");
        require(earth_radius_m > 0.0 && orbit_altitude_m > 0.0, "radius and altitude must be positive");
        require(elevation_rad > 0.0 && elevation_rad <= kPi / 2 + 1e-15, "elevation must lie in (0, pi/2]");
    }
};

/// Relative angular rate for a satellite moving at `speed_m_s` on a circular orbit.
inline double angular_rate_from_speed(double speed_m_s, double orbit_radius_m) { return speed_m_s / orbit_radius_m; }

struct AtmosphereParams {
    double surface_refractivity = 315e-6;
    double scale_height_m = 7500.0;
    std::vector<double> optical_thicknesses;

    void validate() const
    {
        require(surface_refractivity >= 0.0, "surface refractivity must be non-negative");
        require(scale_height_m > 0.0, "scale height must be positive");
        for (double t : optical_thicknesses) require(t >= 0.0, "optical thickness must be non-negative");
    }
};

struct ShadowedRicianParams {
    int nakagami_m = 2;
    double half_nlos_power = 0.25; ///< b0
    double los_power = 0.5;        ///< Omega

    double k_scatter() const { return 2.0 * half_nlos_power; }
    double k_los() const { return los_power / nakagami_m; }

    void validate() const
    {
        require(nakagami_m >= 1, "Nakagami shape must be an integer >= 1");
        require(half_nlos_power >= 0.0 && los_power >= 0.0, "fading powers must be non-negative");
        require(std::abs(2.0 * half_nlos_power + los_power - 1.0) < 1e-9, "Shadowed-Rician powers must satisfy 2 b0 + Omega = 1");
    }

    /// Rician channel with K-factor K expressed in (b0, Omega) form; m is irrelevant to the LoS term.
    static ShadowedRicianParams from_rician_k(double k_factor, int nakagami_m = 1)
    {
        require(k_factor >= 0.0, "Rician K must be non-negative");
        return {nakagami_m, 0.5 / (k_factor + 1.0), k_factor / (k_factor + 1.0)};
    }
};

struct LinkBudget {
    double tx_power_w = 1.0;
    double carrier_hz = 25.675e9;
    double pathloss_exponent = 2.0;
    double noise_var = 1.0;
};

inline double refractive_index(double h_m, const AtmosphereParams& atm)
{
    require(h_m >= 0.0, "altitude must be non-negative");
    return 1.0 + atm.surface_refractivity * std::exp(-h_m / atm.scale_height_m);
}

/// Refracted slant path length from ground to altitude H'. Chebyshev-Gauss
/// quadrature with nodes kappa_i = H'(cos((2i-1)pi/2Q) + 1)/2 and weights pi/Q
/// of the ray path-length integrand.
inline double refracted_path_length(const GeometryParams& geom, const AtmosphereParams& atm)
{
    geom.validate();
    atm.validate();
    const int q = geom.quadrature_points;
    const double hp = geom.orbit_altitude_m;
    const double r = geom.earth_radius_m;
    const double n_surface = refractive_index(0.0, atm);
    const double cos_el = std::cos(geom.elevation_rad);
    const double weight = kPi / q;
    double d = 0.0;
    for (int i = 1; i <= q; ++i) {
        const double x = std::cos((2.0 * i - 1.0) * kPi / (2.0 * q));
        const double kappa = hp * (x + 1.0) / 2.0;
        const double n_k = refractive_index(kappa, atm);
        const double ratio = n_surface * cos_el / (n_k * (1.0 + kappa / r));
        const double arg = 1.0 - ratio * ratio;
        if (!(arg > 0.0)) throw ConfigError("geometry infeasible: non-positive square-root argument at quadrature node");
        d += hp * weight * n_k / 2.0 * std::sqrt(1.0 - x * x) / std::sqrt(arg);
    }
    return d;
}

/// Straight-line slant range on a spherical Earth (no refraction).
inline double slant_range(double earth_radius_m, double altitude_m, double elevation_rad)
{
    const double s = std::sin(elevation_rad);
    return std::sqrt(earth_radius_m * earth_radius_m * s * s + 2.0 * earth_radius_m * altitude_m + altitude_m * altitude_m) -
           earth_radius_m * s;
}

/// Large-scale gain (c / 4 pi f_c)^2 d^-alpha.
inline double path_loss(double d_m, const LinkBudget& link)
{
    require(d_m > 0.0, "distance must be positive");
    require(link.carrier_hz > 0.0, "carrier frequency must be positive");
    const double k = kSpeedOfLight / (4.0 * kPi * link.carrier_hz);
    return k * k * std::pow(d_m, -link.pathloss_exponent);
}

/// Beer-Lambert transmittance exp(-sum tau_i).
inline double absorption(const AtmosphereParams& atm)
{
    atm.validate();
    double sum = 0.0;
    for (double t : atm.optical_thicknesses) sum += t;
    return std::exp(-sum);
}

namespace detail {
inline double binomial(int n, int k)
{
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline double factorial(int n)
{
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}
} // namespace detail

/// Power-domain PDF of Shadowed-Rician fading for integer m'.
inline double shadowed_rician_pdf(double x, const ShadowedRicianParams& p)
{
    require(x >= 0.0, "power must be non-negative");
    p.validate();
    const int m = p.nakagami_m;
    const double ks = p.k_scatter();
    const double kl = p.k_los();
    const double s = ks + kl;
    double f = 0.0;
    for (int k = 0; k < m; ++k) {
        const double coef = detail::binomial(m - 1, k) * std::pow(ks, m - k - 1) * std::pow(kl, k) /
                            (detail::factorial(k) * std::pow(s, m));
        f += coef * std::pow(x / s, k) * std::exp(-x / s);
    }
    return f;
}

/// Power-domain CDF of Shadowed-Rician fading for integer m'.
inline double shadowed_rician_cdf(double x, const ShadowedRicianParams& p)
{
    require(x >= 0.0, "power must be non-negative");
    p.validate();
    const int m = p.nakagami_m;
    const double ks = p.k_scatter();
    const double kl = p.k_los();
    const double s = ks + kl;
    const double e = std::exp(-x / s);
    double tail = 0.0;
    for (int k = 0; k < m; ++k) {
        const double w = detail::binomial(m - 1, k) * std::pow(ks, m - k - 1) * std::pow(kl, k) / std::pow(s, m - 1);
        double inner = 0.0;
        double term = 1.0;
        for (int q = 0; q <= k; ++q) {
            if (q > 0) term *= (x / s) / q;
            inner += term;
        }
        tail += w * inner * e;
    }
    return 1.0 - tail;
}

/// Nakagami-m LoS amplitude with power Omega: |A|^2 ~ Gamma(m, Omega/m),
/// drawn as a sum of m exponential powers.
inline double sample_nakagami_power(int m, double omega, Rng& rng)
{
    std::exponential_distribution<double> ex(1.0);
    double acc = 0.0;
    for (int i = 0; i < m; ++i) acc += ex(rng);
    return acc * omega / m;
}

/// h = A e^{j phi} + Z, A Nakagami-m with power Omega, phi uniform, Z ~ CN(0, 2 b0).
inline Complex sample_fading(const ShadowedRicianParams& p, Rng& rng)
{
    p.validate();
    const double a2 = p.los_power > 0.0 ? sample_nakagami_power(p.nakagami_m, p.los_power, rng) : 0.0;
    const double phi = 2.0 * kPi * uniform01(rng);
    Complex h = std::sqrt(a2) * Complex(std::cos(phi), std::sin(phi));
    if (p.half_nlos_power > 0.0) h += complex_normal(rng, p.k_scatter());
    return h;
}

/// Maximum Doppler frequency of a circular-orbit LEO pass, evaluated at the
/// central angle psi(t, t0) = omega_{R,u} (t - t0).
inline double max_doppler(const GeometryParams& geom, const LinkBudget& link)
{
    geom.validate();
    const double r = geom.earth_radius_m;
    const double hos = geom.orbit_radius_m();
    const double psi = geom.central_angle_rad();
    const double th = geom.max_elevation_rad;
    const double cos_term = std::cos(std::acos(r * std::cos(th) / hos) - th);
    const double num = r * hos * std::sin(psi) * cos_term * geom.angular_rate_rad_s;
    const double den = std::sqrt(r * r + hos * hos - 2.0 * r * hos * std::cos(psi) * cos_term);
    return -(link.carrier_hz / kSpeedOfLight) * num / den;
}

/// Round half away from zero; used for every real-to-index conversion.
inline int round_index(double v) { return static_cast<int>(std::round(v)); }

enum class DopplerProfile {
    uniform_index, ///< integer Doppler indices uniform on [-k_max, k_max]
    cosine_angle,  ///< nu_i = nu_max cos(alpha_i), alpha_i uniform on [-pi, pi]
};

enum class LosFading {
    fixed,    ///< LoS gain sqrt(Omega)
    nakagami, ///< LoS gain A e^{j phi} with |A|^2 ~ Gamma(m', Omega/m')
};

struct GridTiming {
    int m = 16;
    int n = 16;
    double subcarrier_spacing_hz = 90e3; ///< symbol duration T = 1 / spacing
};

struct PathRecipe {
    int path_count = 10;
    double tau_max_s = 2.5e-6;
    double doppler_hz = 0.0;
    double los_angle_rad = 0.0;
    DopplerProfile doppler_profile = DopplerProfile::uniform_index;
    LosFading los_fading = LosFading::fixed;
};

inline int delay_taps(double tau_max_s, const GridTiming& g)
{
    return std::max(1, round_index(tau_max_s * g.m * g.subcarrier_spacing_hz));
}

inline int doppler_index_span(double doppler_hz, const GridTiming& g)
{
    return round_index(std::abs(doppler_hz) * g.n / g.subcarrier_spacing_hz);
}

/// One PathSet realisation: a LoS path at delay 0 plus P-1 scattered paths
/// with CN(0, 2 b0 / (P - 1)) gains, delays uniform on [0, L-1] and Doppler
/// drawn by the selected profile.
inline otfs::PathSet gen_paths(const PathRecipe& recipe, const ShadowedRicianParams& sr, const GridTiming& grid, Rng& rng)
{
    sr.validate();
    require(recipe.path_count >= 1, "path count must be >= 1");
    require(recipe.path_count >= 2 || sr.half_nlos_power == 0.0, "scattered power requires at least two paths");
    const int l_taps = delay_taps(recipe.tau_max_s, grid);
    const int k_max = doppler_index_span(recipe.doppler_hz, grid);
    if (l_taps > grid.m) throw ConfigError("delay spread exceeds the grid: L > M");
    if (k_max > grid.n / 2) throw ConfigError("Doppler spread exceeds the grid: k_max > N/2");

    const double nt = grid.n / grid.subcarrier_spacing_hz;
    otfs::PathSet ps;
    ps.l_max = l_taps;
    ps.k_max = k_max;

    otfs::Path los;
    los.los = true;
    los.delay_idx = 0;
    los.doppler_idx = round_index(recipe.doppler_hz * std::cos(recipe.los_angle_rad) * nt);
    if (recipe.los_fading == LosFading::fixed || sr.los_power == 0.0) {
        los.gain = std::sqrt(sr.los_power);
    } else {
        const double a2 = sample_nakagami_power(sr.nakagami_m, sr.los_power, rng);
        const double phi = 2.0 * kPi * uniform01(rng);
        los.gain = std::sqrt(a2) * Complex(std::cos(phi), std::sin(phi));
    }
    ps.paths.push_back(los);

    const int scattered = recipe.path_count - 1;
    std::uniform_int_distribution<int> delay_dist(0, l_taps - 1);
    std::uniform_int_distribution<int> dop_dist(-k_max, k_max);
    for (int p = 0; p < scattered; ++p) {
        otfs::Path path;
        path.gain = complex_normal(rng, sr.k_scatter() / scattered);
        path.delay_idx = delay_dist(rng);
        if (recipe.doppler_profile == DopplerProfile::uniform_index) {
            path.doppler_idx = dop_dist(rng);
        } else {
            const double alpha = -kPi + 2.0 * kPi * uniform01(rng);
            path.doppler_idx = std::clamp(round_index(recipe.doppler_hz * std::cos(alpha) * nt), -k_max, k_max);
        }
        ps.paths.push_back(path);
    }
    ps.validate(grid.m, grid.n);
    return ps;
}

/// gamma = P_s P_PL P_abs |h|^2 / sigma^2.
inline double received_snr(const LinkBudget& link, double pl, double abs_t, double h_pow)
{
    require(link.noise_var > 0.0, "noise variance must be positive");
    require(link.tx_power_w >= 0.0 && pl >= 0.0 && abs_t >= 0.0 && h_pow >= 0.0, "link factors must be non-negative");
    return link.tx_power_w * pl * abs_t * h_pow / link.noise_var;
}

} // namespace otfsim::ntn
