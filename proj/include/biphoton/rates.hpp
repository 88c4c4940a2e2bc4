#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biphoton/network.hpp"
#include "biphoton/wick.hpp"

namespace biphoton {

/// Detection rate in coupling-power orders.
///
/// `by_order` maps even powers of the crystal couplings to their
/// contribution and `value` is the sum of the entries kept. In
/// leading-order mode only the lowest significant order is kept, so
/// `value` is that single contribution. `background_part` is the
/// phase-averaged component of the rate and `interference_part` the
/// remainder; at expression level, where no phase handles exist, the whole
/// value counts as background.
struct RateResult {
    double value = 0.0;
    std::map<int, double> by_order;
    double background_part = 0.0;
    double interference_part = 0.0;
};

/// Pairwise mutual coherence of the pump field between crystal sites,
/// indexed by crystal position in the element list. Symmetric, unit
/// diagonal, entries in [0, 1]. An off-diagonal entry gamma_jk weights the
/// interference between pair amplitudes born in crystals j and k; all
/// entries 1 is a fully coherent pump, all off-diagonal entries 0 an
/// incoherent one.
class CoherenceMatrix {
  public:
    explicit CoherenceMatrix(std::size_t crystal_count)
        : n_(crystal_count), data_(crystal_count * crystal_count, 0.0) {
        for (std::size_t j = 0; j < n_; ++j) data_[j * n_ + j] = 1.0;
    }

    static CoherenceMatrix uniform(std::size_t crystal_count, double gamma) {
        CoherenceMatrix m(crystal_count);
        for (std::size_t j = 0; j < crystal_count; ++j)
            for (std::size_t k = j + 1; k < crystal_count; ++k) m.set(j, k, gamma);
        return m;
    }

    std::size_t size() const { return n_; }

    double at(std::size_t j, std::size_t k) const {
        check(j, k);
        return data_[j * n_ + k];
    }

    /// Sets gamma_jk and its mirror at (k, j). Diagonal entries are pinned
    /// to 1 and entries outside [0, 1] are unphysical.
    void set(std::size_t j, std::size_t k, double gamma) {
        check(j, k);
        if (j == k) throw std::invalid_argument("diagonal coherence entries are fixed at 1");
        if (gamma < 0.0 || gamma > 1.0)
            throw std::invalid_argument("coherence factor outside [0, 1]");
        data_[j * n_ + k] = gamma;
        data_[k * n_ + j] = gamma;
    }

    friend bool operator==(const CoherenceMatrix&, const CoherenceMatrix&) = default;

  private:
    void check(std::size_t j, std::size_t k) const {
        if (j >= n_ || k >= n_) throw std::out_of_range("coherence index out of range");
    }

    std::size_t n_;
    std::vector<double> data_;
};

struct RateOptions {
    bool leading_order_only = true;
    std::optional<CoherenceMatrix> pump_coherence;
    PropagationOptions propagation;
};

namespace rate_detail {

/// Relative floor below which an order is treated as numerically absent.
inline constexpr double kOrderSignificance = 1e-14;

/// Contributions above `max_order` mix with terms the truncation already
/// dropped from the fields, so they are incomplete and discarded here.
inline std::map<int, double> real_orders(const Expectation& ex, int max_order) {
    std::map<int, double> out;
    for (const auto& [order, v] : ex.by_order)
        if (order <= max_order) out[order] += v.real();
    return out;
}

inline RateResult reduce(const std::map<int, double>& orders, bool leading_order_only) {
    RateResult r;
    double peak = 0.0;
    for (const auto& [order, v] : orders) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return r;
    const double cut = kOrderSignificance * peak;
    for (const auto& [order, v] : orders) {
        if (std::abs(v) <= cut) continue;
        r.by_order[order] = v;
        if (leading_order_only) break;
    }
    for (const auto& [order, v] : r.by_order) r.value += v;
    r.background_part = r.value;
    return r;
}

}  // namespace rate_detail

/// <E† E> of one detector field over the initial vacuum, graded by coupling
/// power. The leading contribution of a pair source appears at order 2.
inline RateResult singles_rate(const OperatorExpression& field, bool leading_order_only = true) {
    Expectation ex = vacuum_expectation({field.adjoint(), field});
    return rate_detail::reduce(rate_detail::real_orders(ex, field.max_order() + 1),
                               leading_order_only);
}

/// <E_a† E_d† E_d E_a> for two detector fields; the pair-detection rate.
inline RateResult coincidence_rate(const OperatorExpression& field_a,
                                   const OperatorExpression& field_d,
                                   bool leading_order_only = true) {
    Expectation ex =
        vacuum_expectation({field_a.adjoint(), field_d.adjoint(), field_d, field_a});
    const int max_order = std::max(field_a.max_order(), field_d.max_order()) + 1;
    return rate_detail::reduce(rate_detail::real_orders(ex, max_order), leading_order_only);
}

namespace rate_detail {

inline int effective_truncation(const Network& net, const PropagationOptions& opt) {
    return opt.truncation_order.value_or(net.truncation_order);
}

inline void check_coherence(const Network& net, const RateOptions& opt) {
    if (!opt.pump_coherence) return;
    if (!opt.leading_order_only)
        throw std::invalid_argument(
            "pump coherence weights single-crystal amplitudes, which only compose the "
            "leading order; full-order rates are not defined under partial coherence");
    const std::size_t n = net.crystals().size();
    if (opt.pump_coherence->size() != n)
        throw std::invalid_argument("coherence matrix size does not match the crystal count");
}

inline OperatorExpression find_tap(const std::map<std::string, OperatorExpression>& taps,
                                   const std::string& label) {
    auto it = taps.find(label);
    if (it == taps.end()) throw std::out_of_range("unknown detector label '" + label + "'");
    return it->second;
}

/// Phase-graded rate with a partially coherent pump: propagate once per
/// crystal with the other pumps switched off, then combine the variants
/// bilinearly with the coherence weights. The decomposition holds exactly
/// for the leading (second) order, where every surviving term is fed by one
/// crystal on the bra side and one on the ket side; higher orders would mix
/// more than two pair amplitudes, so they are cut.
template <typename VariantExpectation>
inline std::map<int, double> coherent_orders(const Network& net, const RateOptions& opt,
                                             const PropagationOptions& prop,
                                             VariantExpectation&& expect) {
    const auto& gamma = *opt.pump_coherence;
    const std::size_t n = net.crystals().size();

    std::vector<std::map<std::string, OperatorExpression>> variants;
    variants.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
        PropagationOptions pj = prop;
        pj.only_crystal = j;
        variants.push_back(propagate(net, pj));
    }

    std::map<int, Complex> acc;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
            const double g = gamma.at(j, k);
            if (g == 0.0) continue;
            Expectation ex = expect(variants[j], variants[k]);
            for (const auto& [order, v] : ex.by_order) acc[order] += g * v;
        }
    }

    std::map<int, double> out;
    for (const auto& [order, v] : acc)
        if (order <= 2) out[order] += v.real();
    return out;
}

inline std::map<int, double> singles_orders(const Network& net, const std::string& label,
                                            const RateOptions& opt, double phi_s_extra = 0.0,
                                            double phi_i_extra = 0.0) {
    PropagationOptions prop = opt.propagation;
    prop.phi_s += phi_s_extra;
    prop.phi_i += phi_i_extra;
    if (opt.pump_coherence) {
        auto expect = [&](const std::map<std::string, OperatorExpression>& tj,
                          const std::map<std::string, OperatorExpression>& tk) {
            return vacuum_expectation({find_tap(tj, label).adjoint(), find_tap(tk, label)});
        };
        return coherent_orders(net, opt, prop, expect);
    }
    const int max_order = effective_truncation(net, opt.propagation) + 1;
    OperatorExpression e = find_tap(propagate(net, prop), label);
    return real_orders(vacuum_expectation({e.adjoint(), e}), max_order);
}

inline std::map<int, double> coincidence_orders(const Network& net, const std::string& label_a,
                                                const std::string& label_d,
                                                const RateOptions& opt,
                                                double phi_s_extra = 0.0,
                                                double phi_i_extra = 0.0) {
    PropagationOptions prop = opt.propagation;
    prop.phi_s += phi_s_extra;
    prop.phi_i += phi_i_extra;
    if (opt.pump_coherence) {
        auto expect = [&](const std::map<std::string, OperatorExpression>& tj,
                          const std::map<std::string, OperatorExpression>& tk) {
            return vacuum_expectation({find_tap(tj, label_a).adjoint(),
                                       find_tap(tj, label_d).adjoint(), find_tap(tk, label_d),
                                       find_tap(tk, label_a)});
        };
        return coherent_orders(net, opt, prop, expect);
    }
    const int max_order = effective_truncation(net, opt.propagation) + 1;
    auto taps = propagate(net, prop);
    OperatorExpression ea = find_tap(taps, label_a);
    OperatorExpression ed = find_tap(taps, label_d);
    return real_orders(vacuum_expectation({ea.adjoint(), ed.adjoint(), ed, ea}), max_order);
}

/// Grid used to split a rate into its phase-averaged background and the
/// interference riding on it. Eight points per axis null every harmonic a
/// reasonable truncation can produce.
inline constexpr int kBackgroundGridPoints = 8;

template <typename OrdersAt>
inline double background_mean(const RateOptions& opt, OrdersAt&& orders_at) {
    constexpr int n = kBackgroundGridPoints;
    constexpr double step = 6.283185307179586476925286766559 / n;
    double sum = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            sum += reduce(orders_at(a * step, b * step), opt.leading_order_only).value;
    return sum / (n * n);
}

}  // namespace rate_detail

/// Singles rate at the named detector, split into background and
/// interference by averaging over one full period of both scan phases.
inline RateResult singles_rate(const Network& net, const std::string& detector_label,
                               const RateOptions& opt = {}) {
    rate_detail::check_coherence(net, opt);
    RateResult r = rate_detail::reduce(rate_detail::singles_orders(net, detector_label, opt),
                                       opt.leading_order_only);
    r.background_part = rate_detail::background_mean(opt, [&](double ds, double di) {
        return rate_detail::singles_orders(net, detector_label, opt, ds, di);
    });
    r.interference_part = r.value - r.background_part;
    return r;
}

/// Coincidence rate between two named detectors, split like singles_rate.
inline RateResult coincidence_rate(const Network& net, const std::string& label_a,
                                   const std::string& label_d, const RateOptions& opt = {}) {
    rate_detail::check_coherence(net, opt);
    RateResult r = rate_detail::reduce(
        rate_detail::coincidence_orders(net, label_a, label_d, opt), opt.leading_order_only);
    r.background_part = rate_detail::background_mean(opt, [&](double ds, double di) {
        return rate_detail::coincidence_orders(net, label_a, label_d, opt, ds, di);
    });
    r.interference_part = r.value - r.background_part;
    return r;
}

/// Rate value without the background decomposition; the cheap path for
/// scans, which sample many phase points and never need the split.
inline double singles_value(const Network& net, const std::string& detector_label,
                            const RateOptions& opt = {}) {
    rate_detail::check_coherence(net, opt);
    return rate_detail::reduce(rate_detail::singles_orders(net, detector_label, opt),
                               opt.leading_order_only)
        .value;
}

inline double coincidence_value(const Network& net, const std::string& label_a,
                                const std::string& label_d, const RateOptions& opt = {}) {
    rate_detail::check_coherence(net, opt);
    return rate_detail::reduce(rate_detail::coincidence_orders(net, label_a, label_d, opt),
                               opt.leading_order_only)
        .value;
}

}  // namespace biphoton
