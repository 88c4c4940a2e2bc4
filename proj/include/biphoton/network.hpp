#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "biphoton/expression.hpp"
#include "biphoton/modes.hpp"

namespace biphoton {

/// Amplitude transmission of a balanced (50:50) splitter.
inline constexpr double kBalancedTransmission = 0.7071067811865475244;

/// Above this coupling magnitude the single-pair treatment starts to leak
/// measurably into double-pair generation; validate() warns.
inline constexpr double kLowGainCouplingLimit = 0.3;

/// Pump-to-pair conversion amplitude of one crystal.
struct Coupling {
    double magnitude = 0.0;
    double phase = 0.0;  // radians

    Complex value() const { return std::polar(magnitude, phase); }

    friend bool operator==(const Coupling&, const Coupling&) = default;
};

/// Marks a phase shifter as the one driven by the signal-side or idler-side
/// delay when a scan sweeps phases.
enum class ScanRole { none, signal, idler };

struct Crystal {
    std::string name;
    ModeId signal;
    ModeId idler;
    Coupling coupling;

    friend bool operator==(const Crystal&, const Crystal&) = default;
};

struct PhaseShift {
    ModeId mode;
    double phase = 0.0;
    ScanRole role = ScanRole::none;

    friend bool operator==(const PhaseShift&, const PhaseShift&) = default;
};

/// Two-port splitter with amplitude transmission t and reflectivity
/// r = sqrt(1 - t^2); the mode map is (a, b) -> (t a + i r b, i r a + t b).
struct BeamSplitter {
    ModeId in_a;
    ModeId in_b;
    double transmission = kBalancedTransmission;

    friend bool operator==(const BeamSplitter&, const BeamSplitter&) = default;
};

struct DetectorTap {
    ModeId mode;
    std::string label;

    friend bool operator==(const DetectorTap&, const DetectorTap&) = default;
};

using Element = std::variant<Crystal, PhaseShift, BeamSplitter, DetectorTap>;

/// A source + linear optics layout. Elements act in listing order; detector
/// taps snapshot the expression of their mode at tap time. Treat a network
/// as immutable once built; scans and variants are expressed through
/// PropagationOptions rather than edits.
struct Network {
    ModeRegistry modes;
    std::vector<Element> elements;
    int truncation_order = 1;
    bool paper_normalization = false;  // t = r = 1 splitter bookkeeping

    ModeRef add_mode(const std::string& label,
                     std::optional<std::string> alias_of = std::nullopt,
                     std::optional<double> frequency = std::nullopt) {
        return modes.register_mode(label, std::move(alias_of), frequency);
    }

    void add_crystal(std::string name, const std::string& signal, const std::string& idler,
                     double magnitude, double phase = 0.0) {
        elements.push_back(Crystal{std::move(name), modes.resolve(signal).id,
                                   modes.resolve(idler).id, Coupling{magnitude, phase}});
    }

    void add_phase_shift(const std::string& mode, double phase, ScanRole role = ScanRole::none) {
        elements.push_back(PhaseShift{modes.resolve(mode).id, phase, role});
    }

    void add_beam_splitter(const std::string& a, const std::string& b,
                           double transmission = kBalancedTransmission) {
        elements.push_back(BeamSplitter{modes.resolve(a).id, modes.resolve(b).id, transmission});
    }

    void add_detector(const std::string& label, const std::string& mode) {
        elements.push_back(DetectorTap{modes.resolve(mode).id, label});
    }

    std::vector<const Crystal*> crystals() const {
        std::vector<const Crystal*> out;
        for (const auto& e : elements)
            if (const auto* c = std::get_if<Crystal>(&e)) out.push_back(c);
        return out;
    }

    std::vector<const DetectorTap*> detectors() const {
        std::vector<const DetectorTap*> out;
        for (const auto& e : elements)
            if (const auto* d = std::get_if<DetectorTap>(&e)) out.push_back(d);
        return out;
    }

    std::optional<std::size_t> crystal_index(std::string_view name) const {
        std::size_t i = 0;
        for (const auto& e : elements) {
            if (const auto* c = std::get_if<Crystal>(&e)) {
                if (c->name == name) return i;
                ++i;
            }
        }
        return std::nullopt;
    }

    friend bool operator==(const Network& a, const Network& b) {
        return a.modes == b.modes && a.elements == b.elements &&
               a.truncation_order == b.truncation_order &&
               a.paper_normalization == b.paper_normalization;
    }
};

struct PropagationOptions {
    std::optional<int> truncation_order;        // default: the network's
    std::optional<bool> paper_normalization;    // default: the network's
    double phi_s = 0.0;                         // added to signal-role shifters
    double phi_i = 0.0;                         // added to idler-role shifters
    std::optional<std::size_t> only_crystal;    // keep one pump on, zero the rest
};

namespace detail {

/// adjoint(e) scaled by c, with every term promoted one coupling order.
/// This is the partner-mode feedthrough of a crystal.
inline OperatorExpression crystal_feed(const OperatorExpression& e, Complex c) {
    OperatorExpression out;
    for (const auto& t : e.terms())
        out.add(t.mode, !t.dagger, c * std::conj(t.coeff), t.order + 1);
    return out;
}

}  // namespace detail

/// Heisenberg-picture propagation. Each canonical mode starts as its bare
/// annihilator; crystals add the adjoint of the partner mode's current
/// expression (one order up), phase shifters multiply by a unit phase, and
/// splitters mix pairs of expressions. Returns the snapshot each detector
/// tap took of its mode, keyed by detector label.
inline std::map<std::string, OperatorExpression> propagate(const Network& net,
                                                           const PropagationOptions& opt = {}) {
    const int trunc = opt.truncation_order.value_or(net.truncation_order);
    const bool paper = opt.paper_normalization.value_or(net.paper_normalization);
    if (trunc < 0) throw std::invalid_argument("truncation order must be nonnegative");

    std::vector<OperatorExpression> state;
    state.reserve(net.modes.canonical_count());
    for (std::uint32_t m = 0; m < net.modes.canonical_count(); ++m)
        state.push_back(OperatorExpression::annihilator(ModeId{m}));

    auto check_mode = [&](ModeId m) {
        if (!net.modes.valid(m))
            throw std::invalid_argument("element references an unregistered mode");
    };

    std::map<std::string, OperatorExpression> taps;
    std::size_t crystal_seq = 0;

    for (const auto& element : net.elements) {
        if (const auto* c = std::get_if<Crystal>(&element)) {
            check_mode(c->signal);
            check_mode(c->idler);
            if (c->signal == c->idler)
                throw std::invalid_argument("crystal '" + c->name +
                                            "' must couple two distinct canonical modes");
            if (c->coupling.magnitude < 0.0)
                throw std::invalid_argument("crystal '" + c->name + "' has negative coupling");
            Complex cv = c->coupling.value();
            if (opt.only_crystal && *opt.only_crystal != crystal_seq) cv = Complex{};
            ++crystal_seq;
            if (cv != Complex{}) {
                OperatorExpression es = state[c->signal.value];
                OperatorExpression ei = state[c->idler.value];
                state[c->signal.value] += detail::crystal_feed(ei, cv);
                state[c->idler.value] += detail::crystal_feed(es, cv);
                state[c->signal.value] = state[c->signal.value].filtered(trunc);
                state[c->idler.value] = state[c->idler.value].filtered(trunc);
            }
        } else if (const auto* p = std::get_if<PhaseShift>(&element)) {
            check_mode(p->mode);
            double phi = p->phase;
            if (p->role == ScanRole::signal) phi += opt.phi_s;
            if (p->role == ScanRole::idler) phi += opt.phi_i;
            state[p->mode.value] *= std::polar(1.0, phi);
        } else if (const auto* b = std::get_if<BeamSplitter>(&element)) {
            check_mode(b->in_a);
            check_mode(b->in_b);
            if (b->in_a == b->in_b)
                throw std::invalid_argument(
                    "beam splitter ports resolve to the same canonical mode");
            if (b->transmission < 0.0 || b->transmission > 1.0)
                throw std::invalid_argument("beam splitter transmission outside [0, 1]");
            const double t = paper ? 1.0 : b->transmission;
            const double r = paper ? 1.0 : std::sqrt(1.0 - b->transmission * b->transmission);
            const Complex ir{0.0, r};
            OperatorExpression ea = state[b->in_a.value];
            OperatorExpression eb = state[b->in_b.value];
            state[b->in_a.value] = t * ea + ir * eb;
            state[b->in_b.value] = ir * ea + t * eb;
        } else if (const auto* d = std::get_if<DetectorTap>(&element)) {
            check_mode(d->mode);
            if (taps.count(d->label))
                throw std::invalid_argument("duplicate detector label '" + d->label + "'");
            taps.emplace(d->label, state[d->mode.value]);
        }
    }
    return taps;
}

struct Diagnostic {
    enum class Level { warning, error };
    Level level;
    std::string code;
    std::string message;
    std::size_t element = static_cast<std::size_t>(-1);
};

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    for (const auto& d : diags)
        if (d.level == Diagnostic::Level::error) return true;
    return false;
}

/// Structural and physical sanity checks, reported as data rather than
/// thrown, so a CLI can print all of them at once.
inline std::vector<Diagnostic> validate(const Network& net) {
    using Level = Diagnostic::Level;
    std::vector<Diagnostic> out;
    std::set<std::string> labels;
    std::set<std::uint32_t> touched;
    std::size_t idx = 0;

    auto mode_ok = [&](ModeId m, const char* what) {
        if (net.modes.valid(m)) return true;
        out.push_back({Level::error, "unknown-mode",
                       std::string(what) + " references an unregistered mode", idx});
        return false;
    };

    if (net.truncation_order < 0)
        out.push_back({Level::error, "truncation-negative", "truncation order must be >= 0"});

    for (const auto& element : net.elements) {
        if (const auto* c = std::get_if<Crystal>(&element)) {
            bool ok = mode_ok(c->signal, "crystal") & mode_ok(c->idler, "crystal");
            if (ok && c->signal == c->idler)
                out.push_back({Level::error, "crystal-degenerate",
                               "crystal '" + c->name +
                                   "' couples a mode to itself after alias resolution",
                               idx});
            if (c->coupling.magnitude < 0.0)
                out.push_back({Level::error, "coupling-negative",
                               "crystal '" + c->name + "' has negative coupling magnitude",
                               idx});
            else if (c->coupling.magnitude > kLowGainCouplingLimit)
                out.push_back({Level::warning, "low-gain",
                               "coupling magnitude " + std::to_string(c->coupling.magnitude) +
                                   " on crystal '" + c->name +
                                   "' exceeds the low-gain regime (" +
                                   std::to_string(kLowGainCouplingLimit) +
                                   "); single-pair rates become unreliable",
                               idx});
            if (ok) {
                touched.insert(c->signal.value);
                touched.insert(c->idler.value);
            }
        } else if (const auto* p = std::get_if<PhaseShift>(&element)) {
            if (mode_ok(p->mode, "phase shifter")) touched.insert(p->mode.value);
        } else if (const auto* b = std::get_if<BeamSplitter>(&element)) {
            bool ok = mode_ok(b->in_a, "beam splitter") & mode_ok(b->in_b, "beam splitter");
            if (ok && b->in_a == b->in_b)
                out.push_back({Level::error, "bs-aliased-ports",
                               "beam splitter ports are the same canonical mode (aliased "
                               "labels?)",
                               idx});
            if (b->transmission < 0.0 || b->transmission > 1.0)
                out.push_back({Level::error, "bs-transmission-range",
                               "beam splitter transmission outside [0, 1]", idx});
            if (ok) {
                touched.insert(b->in_a.value);
                touched.insert(b->in_b.value);
            }
        } else if (const auto* d = std::get_if<DetectorTap>(&element)) {
            if (mode_ok(d->mode, "detector")) {
                if (!touched.count(d->mode.value))
                    out.push_back({Level::warning, "detector-unreachable",
                                   "detector '" + d->label +
                                       "' taps a mode no earlier element feeds",
                                   idx});
            }
            if (!labels.insert(d->label).second)
                out.push_back({Level::error, "detector-duplicate",
                               "duplicate detector label '" + d->label + "'", idx});
        }
        ++idx;
    }
    return out;
}

}  // namespace biphoton
