#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biphoton/rates.hpp"

namespace biphoton {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// One sampling point of a scan: the extra phase applied on top of the
/// signal-role and idler-role shifters' base values.
struct PhasePoint {
    double phi_s = 0.0;
    double phi_i = 0.0;
};

/// Half-open phase range [start, stop) sampled at `points` equal steps.
/// Excluding the stop keeps whole-period grids free of a duplicated
/// endpoint, so grid means equal period means.
struct PhaseRange {
    double start = 0.0;
    double stop = 0.0;
    int points = 1;

    friend bool operator==(const PhaseRange&, const PhaseRange&) = default;
};

/// Mirror-delay sweep at constant speeds. The phase of each arm grows as
/// phi(t) = geometry * 2*pi * v * t / lambda; speeds in nm/s, wavelengths in
/// nm, times in s. The default geometry of 1 gives one fringe per wavelength
/// of displacement; set 2 for a double-pass mirror.
struct TimeScan {
    double v_s = 0.0;
    double v_i = 0.0;
    double lambda_s = 1.0;
    double lambda_i = 1.0;
    double duration = 0.0;
    double step = 1.0;
    double geometry = 1.0;

    friend bool operator==(const TimeScan&, const TimeScan&) = default;
};

/// Either an explicit list of phase points or a time scan.
struct ScanConfig {
    std::vector<PhasePoint> phase_grid;
    std::optional<TimeScan> time_scan;
};

/// Signal-major product grid of two ranges: the idler phase cycles fastest.
inline std::vector<PhasePoint> grid_points(const PhaseRange& s, const PhaseRange& i) {
    auto step_of = [](const PhaseRange& r) {
        if (r.points < 1) throw std::invalid_argument("phase range needs at least one point");
        if (r.points == 1) return 0.0;
        return (r.stop - r.start) / r.points;
    };
    const double ds = step_of(s);
    const double di = step_of(i);
    std::vector<PhasePoint> out;
    out.reserve(static_cast<std::size_t>(s.points) * i.points);
    for (int a = 0; a < s.points; ++a)
        for (int b = 0; b < i.points; ++b)
            out.push_back({s.start + a * ds, i.start + b * di});
    return out;
}

/// Expands a config into concrete points. Time scans sample t = 0, step,
/// ..., including the duration itself when it is a whole number of steps.
inline std::vector<PhasePoint> phase_points(const ScanConfig& cfg) {
    if (!cfg.time_scan) {
        if (cfg.phase_grid.empty()) throw std::invalid_argument("scan grid is empty");
        return cfg.phase_grid;
    }
    const TimeScan& ts = *cfg.time_scan;
    if (ts.lambda_s <= 0.0 || ts.lambda_i <= 0.0)
        throw std::invalid_argument("wavelengths must be positive");
    if (ts.step <= 0.0) throw std::invalid_argument("time step must be positive");
    if (ts.duration < 0.0) throw std::invalid_argument("duration must be nonnegative");

    const double ratio = ts.duration / ts.step;
    long long n = static_cast<long long>(std::floor(ratio));
    if (std::abs(ratio - std::llround(ratio)) < 1e-9) n = std::llround(ratio);

    const double rate_s = ts.geometry * kTwoPi * ts.v_s / ts.lambda_s;
    const double rate_i = ts.geometry * kTwoPi * ts.v_i / ts.lambda_i;
    std::vector<PhasePoint> out;
    out.reserve(static_cast<std::size_t>(n) + 1);
    for (long long k = 0; k <= n; ++k) {
        const double t = k * ts.step;
        out.push_back({rate_s * t, rate_i * t});
    }
    return out;
}

struct ScanTarget {
    std::string label_a;
    std::string label_d;  // empty: singles at label_a

    static ScanTarget singles(std::string label) { return {std::move(label), {}}; }
    static ScanTarget coincidence(std::string a, std::string d) {
        return {std::move(a), std::move(d)};
    }
    bool is_coincidence() const { return !label_d.empty(); }
};

/// One scan sample. The phases are the effective totals seen by the
/// scan-role shifters: base value plus any propagation offset plus the grid
/// point, so a plot of rate against them lines up regardless of static
/// offsets built into the network.
struct ScanRow {
    double phi_s = 0.0;
    double phi_i = 0.0;
    double rate = 0.0;
};

namespace analysis_detail {

inline double first_role_base(const Network& net, ScanRole role) {
    for (const auto& e : net.elements)
        if (const auto* p = std::get_if<PhaseShift>(&e))
            if (p->role == role) return p->phase;
    return 0.0;
}

}  // namespace analysis_detail

/// Evaluates one rate over every point of a scan. The grid phases add to
/// whatever static offsets the options carry; reported phases are the
/// effective totals.
inline std::vector<ScanRow> scan(const Network& net, const ScanTarget& target,
                                 const ScanConfig& cfg, const RateOptions& opt = {}) {
    const auto points = phase_points(cfg);
    const double base_s =
        analysis_detail::first_role_base(net, ScanRole::signal) + opt.propagation.phi_s;
    const double base_i =
        analysis_detail::first_role_base(net, ScanRole::idler) + opt.propagation.phi_i;

    std::vector<ScanRow> rows;
    rows.reserve(points.size());
    for (const auto& p : points) {
        RateOptions at = opt;
        at.propagation.phi_s += p.phi_s;
        at.propagation.phi_i += p.phi_i;
        const double r = target.is_coincidence()
                             ? coincidence_value(net, target.label_a, target.label_d, at)
                             : singles_value(net, target.label_a, at);
        rows.push_back({base_s + p.phi_s, base_i + p.phi_i, r});
    }
    return rows;
}

/// Extremal summary of a fringe scan. `contrast` is filled only by the
/// overload that knows the two couplings; check `no_signal` before reading
/// `visibility` from an all-zero trace.
struct FringeStats {
    double visibility = 0.0;
    double contrast = std::numeric_limits<double>::quiet_NaN();
    double r_max = 0.0;
    double r_min = 0.0;
    double argmax_phase = 0.0;
    bool no_signal = false;
};

/// Which-path contrast K = | |c1|^2 - |c2|^2 | / ( |c1|^2 + |c2|^2 ).
inline double contrast(Complex c1, Complex c2) {
    const double p1 = std::norm(c1);
    const double p2 = std::norm(c2);
    if (p1 + p2 <= 0.0)
        throw std::invalid_argument("contrast is undefined for two zero couplings");
    return std::abs(p1 - p2) / (p1 + p2);
}

/// Ideal two-path fringe visibility V = 2 |c1 c2| / ( |c1|^2 + |c2|^2 );
/// satisfies V^2 + K^2 = 1 against contrast().
inline double two_path_visibility(Complex c1, Complex c2) {
    const double p1 = std::norm(c1);
    const double p2 = std::norm(c2);
    if (p1 + p2 <= 0.0)
        throw std::invalid_argument("visibility is undefined for two zero couplings");
    return 2.0 * std::abs(c1) * std::abs(c2) / (p1 + p2);
}

/// Extrema-based visibility of a scan table. The model's fringes are exact
/// sinusoids, so extrema need no fitting, but the table must sample at
/// least 16 points per fringe period for the extrema to be trustworthy.
/// argmax_phase is the signal phase of the maximal sample, or the idler
/// phase when the signal phase never moves.
inline FringeStats fringe_stats(const std::vector<ScanRow>& table) {
    if (table.empty()) throw std::invalid_argument("fringe statistics need a nonempty table");
    FringeStats st;
    st.r_max = table.front().rate;
    st.r_min = table.front().rate;
    double phi_s_min = table.front().phi_s, phi_s_max = phi_s_min;
    const ScanRow* best = &table.front();
    for (const auto& row : table) {
        if (row.rate < 0.0)
            throw std::invalid_argument("fringe statistics need nonnegative rates");
        if (row.rate > st.r_max) {
            st.r_max = row.rate;
            best = &row;
        }
        st.r_min = std::min(st.r_min, row.rate);
        phi_s_min = std::min(phi_s_min, row.phi_s);
        phi_s_max = std::max(phi_s_max, row.phi_s);
    }
    if (st.r_max <= 0.0) {
        st.no_signal = true;
        return st;
    }
    st.visibility = (st.r_max - st.r_min) / (st.r_max + st.r_min);
    st.argmax_phase = (phi_s_max > phi_s_min) ? best->phi_s : best->phi_i;
    return st;
}

inline FringeStats fringe_stats(const std::vector<ScanRow>& table, Complex c1, Complex c2) {
    FringeStats st = fringe_stats(table);
    st.contrast = contrast(c1, c2);
    return st;
}

/// Attaches a pump-coherence matrix to a rate computation. Cross terms
/// between amplitudes born in crystals j and k pick up the factor
/// gamma_jk; self terms are untouched. For two pumped crystals this scales
/// the fringe visibility by gamma_01 and leaves the contrast alone.
inline RateOptions apply_pump_coherence(RateOptions opt, CoherenceMatrix gamma) {
    opt.pump_coherence = std::move(gamma);
    return opt;
}

}  // namespace biphoton
