#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "biphoton/expression.hpp"
#include "biphoton/network.hpp"

namespace biphoton {

/// Raised when an operator application would push a mode's occupation above
/// the configured cap. The oracle refuses to truncate silently.
struct FockOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OracleOptions {
    int perturbation_order = 1;  // 1: single pairs; 2: adds double-pair terms
    int n_max = 2;               // per-mode occupation cap
};

/// Sparse state vector over truncated occupation-number space. Amplitudes
/// are keyed by the occupation of each canonical mode. Detector labels seen
/// while building are kept so click probabilities can be asked for by name.
struct FockState {
    std::size_t mode_count = 0;
    int n_max = 0;
    std::map<std::vector<int>, Complex> amplitudes;
    std::map<std::string, ModeId> detectors;

    double norm_squared() const {
        double s = 0.0;
        for (const auto& [occ, amp] : amplitudes) s += std::norm(amp);
        return s;
    }

    void normalize() {
        double n2 = norm_squared();
        if (n2 <= 0.0) throw std::domain_error("cannot normalize a zero state");
        double inv = 1.0 / std::sqrt(n2);
        for (auto& [occ, amp] : amplitudes) amp *= inv;
    }

    void prune(double eps = 1e-300) {
        for (auto it = amplitudes.begin(); it != amplitudes.end();)
            it = (std::abs(it->second) <= eps) ? amplitudes.erase(it) : std::next(it);
    }
};

namespace fock_detail {

inline double binomial(int n, int k) {
    double b = 1.0;
    for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
    return b;
}

inline double sqrt_factorial(int n) {
    double s = 1.0;
    for (int i = 2; i <= n; ++i) s *= std::sqrt(static_cast<double>(i));
    return s;
}

}  // namespace fock_detail

/// a†_m on every component; amplitudes pick up sqrt(n+1). Throws rather than
/// dropping weight when the cap would be exceeded.
inline void apply_creation(FockState& st, ModeId m, Complex scale = Complex{1.0, 0.0}) {
    std::map<std::vector<int>, Complex> out;
    for (const auto& [occ, amp] : st.amplitudes) {
        int n = occ[m.value];
        if (n + 1 > st.n_max)
            throw FockOverflowError("occupation above n_max=" + std::to_string(st.n_max) +
                                    " on mode index " + std::to_string(m.value));
        auto next = occ;
        next[m.value] = n + 1;
        out[next] += amp * scale * std::sqrt(static_cast<double>(n + 1));
    }
    st.amplitudes = std::move(out);
}

/// a_m on every component; the vacuum component of the mode is annihilated.
inline void apply_annihilation(FockState& st, ModeId m, Complex scale = Complex{1.0, 0.0}) {
    std::map<std::vector<int>, Complex> out;
    for (const auto& [occ, amp] : st.amplitudes) {
        int n = occ[m.value];
        if (n == 0) continue;
        auto next = occ;
        next[m.value] = n - 1;
        out[next] += amp * scale * std::sqrt(static_cast<double>(n));
    }
    st.amplitudes = std::move(out);
}

inline void apply_phase_shift(FockState& st, ModeId m, double phase) {
    for (auto& [occ, amp] : st.amplitudes) amp *= std::polar(1.0, phase * occ[m.value]);
}

/// Exact splitter unitary on the truncated basis, using the operator images
/// U a† U† = t a† + i r b† and U b† U† = i r a† + t b† expanded binomially.
/// Total occupation on the two ports above n_max can rotate into a single
/// mode, so that case throws instead of truncating.
inline void apply_beam_splitter(FockState& st, ModeId a, ModeId b, double transmission) {
    if (transmission < 0.0 || transmission > 1.0)
        throw std::invalid_argument("beam splitter transmission outside [0, 1]");
    const double t = transmission;
    const double r = std::sqrt(1.0 - t * t);
    const Complex ir{0.0, r};

    using fock_detail::binomial;
    using fock_detail::sqrt_factorial;

    std::map<std::vector<int>, Complex> out;
    for (const auto& [occ, amp] : st.amplitudes) {
        const int na = occ[a.value];
        const int nb = occ[b.value];
        const int total = na + nb;
        if (total == 0) {
            out[occ] += amp;
            continue;
        }
        if (total > st.n_max)
            throw FockOverflowError("beam splitter can exceed n_max=" +
                                    std::to_string(st.n_max) + " (ports hold " +
                                    std::to_string(total) + " photons)");
        const double denom = sqrt_factorial(na) * sqrt_factorial(nb);
        for (int j = 0; j <= na; ++j) {
            for (int l = 0; l <= nb; ++l) {
                const int pa = j + l;
                const int pb = total - pa;
                Complex c = binomial(na, j) * std::pow(t, j) * std::pow(ir, na - j) *
                            binomial(nb, l) * std::pow(ir, l) * std::pow(t, nb - l);
                c *= sqrt_factorial(pa) * sqrt_factorial(pb) / denom;
                auto next = occ;
                next[a.value] = pa;
                next[b.value] = pb;
                out[next] += amp * c;
            }
        }
    }
    st.amplitudes = std::move(out);
    st.prune();
}

/// Perturbative source state of a network, pushed through its linear optics.
///
/// All crystals are treated as one synchronously pumped source: the state
/// starts as |0> + sum_k C_k a†_sk a†_ik |0>, plus the half-square of that
/// pair sum when perturbation_order is 2. It is normalized, then every phase
/// shifter and beam splitter is applied in element order as an exact unitary
/// on the truncated basis. Detector taps are recorded by label.
///
/// This evaluator shares no machinery with the Wick-contraction engine; it
/// exists to cross-check it.
inline FockState build_state(const Network& net, const OracleOptions& opt = {}) {
    if (opt.perturbation_order < 1 || opt.perturbation_order > 2)
        throw std::invalid_argument("perturbation order must be 1 or 2");
    if (opt.n_max < opt.perturbation_order)
        throw std::invalid_argument("n_max must be at least the perturbation order");

    FockState st;
    st.mode_count = net.modes.canonical_count();
    st.n_max = opt.n_max;
    std::vector<int> vacuum(st.mode_count, 0);
    st.amplitudes[vacuum] = Complex{1.0, 0.0};

    auto pair_sum = [&](const FockState& in) {
        // sum_k C_k a†_sk a†_ik applied to `in`
        FockState acc;
        acc.mode_count = st.mode_count;
        acc.n_max = st.n_max;
        for (const auto& e : net.elements) {
            const auto* c = std::get_if<Crystal>(&e);
            if (!c) continue;
            if (!net.modes.valid(c->signal) || !net.modes.valid(c->idler))
                throw std::invalid_argument("crystal references an unregistered mode");
            if (c->signal == c->idler)
                throw std::invalid_argument("crystal '" + c->name +
                                            "' must couple two distinct canonical modes");
            Complex cv = c->coupling.value();
            if (cv == Complex{}) continue;
            FockState one = in;
            apply_creation(one, c->signal, cv);
            apply_creation(one, c->idler);
            for (const auto& [occ, amp] : one.amplitudes) acc.amplitudes[occ] += amp;
        }
        return acc;
    };

    FockState first = pair_sum(st);
    for (const auto& [occ, amp] : first.amplitudes) st.amplitudes[occ] += amp;
    if (opt.perturbation_order == 2) {
        FockState second = pair_sum(first);
        for (const auto& [occ, amp] : second.amplitudes) st.amplitudes[occ] += 0.5 * amp;
    }
    st.prune();
    st.normalize();

    for (const auto& element : net.elements) {
        if (const auto* p = std::get_if<PhaseShift>(&element)) {
            if (!net.modes.valid(p->mode))
                throw std::invalid_argument("phase shifter references an unregistered mode");
            apply_phase_shift(st, p->mode, p->phase);
        } else if (const auto* b = std::get_if<BeamSplitter>(&element)) {
            if (!net.modes.valid(b->in_a) || !net.modes.valid(b->in_b))
                throw std::invalid_argument("beam splitter references an unregistered mode");
            if (b->in_a == b->in_b)
                throw std::invalid_argument(
                    "beam splitter ports resolve to the same canonical mode");
            if (net.paper_normalization) {
                // The t = r = 1 bookkeeping convention is not unitary, so the
                // oracle has no exact state-space counterpart for it.
                throw std::invalid_argument(
                    "the Fock oracle requires the unitary splitter convention");
            }
            apply_beam_splitter(st, b->in_a, b->in_b, b->transmission);
        } else if (const auto* d = std::get_if<DetectorTap>(&element)) {
            if (!net.modes.valid(d->mode))
                throw std::invalid_argument("detector references an unregistered mode");
            if (st.detectors.count(d->label))
                throw std::invalid_argument("duplicate detector label '" + d->label + "'");
            st.detectors.emplace(d->label, d->mode);
        }
    }
    return st;
}

/// <n_m> for the mode a detector label taps. At low gain this is the click
/// probability per pump window, up to detector efficiency.
inline double click_probability(const FockState& st, const std::string& label) {
    auto it = st.detectors.find(label);
    if (it == st.detectors.end())
        throw std::out_of_range("unknown detector label '" + label + "'");
    double p = 0.0;
    for (const auto& [occ, amp] : st.amplitudes) p += std::norm(amp) * occ[it->second.value];
    return p;
}

/// <n_a n_d> for two distinct detector labels; the low-gain coincidence
/// probability.
inline double pair_probability(const FockState& st, const std::string& label_a,
                               const std::string& label_d) {
    auto a = st.detectors.find(label_a);
    auto d = st.detectors.find(label_d);
    if (a == st.detectors.end())
        throw std::out_of_range("unknown detector label '" + label_a + "'");
    if (d == st.detectors.end())
        throw std::out_of_range("unknown detector label '" + label_d + "'");
    if (a->second == d->second)
        throw std::invalid_argument("pair probability needs two distinct detector modes");
    double p = 0.0;
    for (const auto& [occ, amp] : st.amplitudes)
        p += std::norm(amp) * occ[a->second.value] * occ[d->second.value];
    return p;
}

/// Apply a linear form (sum of scaled a / a† operators) to a state. Not a
/// unitary and not normalized; this is the raw operator action used to
/// cross-check vacuum expectation values term by term.
inline FockState apply_linear_form(const FockState& st, const OperatorExpression& e) {
    FockState acc;
    acc.mode_count = st.mode_count;
    acc.n_max = st.n_max;
    acc.detectors = st.detectors;
    for (const auto& term : e.terms()) {
        if (term.mode.value >= st.mode_count)
            throw std::out_of_range("operator term on a mode outside the state");
        FockState one = st;
        if (term.dagger)
            apply_creation(one, term.mode, term.coeff);
        else
            apply_annihilation(one, term.mode, term.coeff);
        for (const auto& [occ, amp] : one.amplitudes) acc.amplitudes[occ] += amp;
    }
    acc.prune();
    return acc;
}

inline FockState vacuum_state(std::size_t mode_count, int n_max) {
    FockState st;
    st.mode_count = mode_count;
    st.n_max = n_max;
    st.amplitudes[std::vector<int>(mode_count, 0)] = Complex{1.0, 0.0};
    return st;
}

inline Complex vacuum_amplitude(const FockState& st) {
    auto it = st.amplitudes.find(std::vector<int>(st.mode_count, 0));
    return it == st.amplitudes.end() ? Complex{} : it->second;
}

}  // namespace biphoton
