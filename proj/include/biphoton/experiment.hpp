#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "biphoton/analysis.hpp"
#include "biphoton/network.hpp"
#include "biphoton/rates.hpp"

namespace biphoton {

/// Malformed experiment text; carries the 1-based line of the offense.
struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_number, const std::string& what_)
        : std::runtime_error("line " + std::to_string(line_number) + ": " + what_),
          line(line_number) {}
};

/// Filesystem failure, kept apart from validation failures so callers can
/// exit with distinct codes.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kSchemaTag = "biphoton/1";

/// A mode line as declared, kept verbatim so serialization reproduces the
/// aliasing structure rather than only its canonical collapse.
struct ModeDecl {
    std::string label;
    std::optional<std::string> alias_of;
    std::optional<double> frequency;

    friend bool operator==(const ModeDecl&, const ModeDecl&) = default;
};

/// Pairwise pump-coherence declaration between two named crystals.
struct CoherenceDecl {
    std::string a;
    std::string b;
    double gamma = 1.0;

    friend bool operator==(const CoherenceDecl&, const CoherenceDecl&) = default;
};

struct PhaseGridSpec {
    PhaseRange s;
    PhaseRange i;

    friend bool operator==(const PhaseGridSpec&, const PhaseGridSpec&) = default;
};

/// Scan declaration: exactly one of a phase grid or a time sweep.
struct ExperimentScan {
    std::optional<PhaseGridSpec> grid;
    std::optional<TimeScan> time;

    friend bool operator==(const ExperimentScan&, const ExperimentScan&) = default;
};

/// Parsed experiment document: network, optional coherence, optional scan.
struct ExperimentFile {
    std::vector<ModeDecl> modes;
    Network network;
    std::vector<CoherenceDecl> coherence;
    std::optional<ExperimentScan> scan;

    friend bool operator==(const ExperimentFile&, const ExperimentFile&) = default;

    ScanConfig scan_config() const {
        if (!scan) throw std::invalid_argument("experiment file declares no scan");
        ScanConfig cfg;
        if (scan->time)
            cfg.time_scan = scan->time;
        else if (scan->grid)
            cfg.phase_grid = grid_points(scan->grid->s, scan->grid->i);
        return cfg;
    }

    /// Coherence matrix over the network's crystals, or nothing when the
    /// file declares no coherence lines.
    std::optional<CoherenceMatrix> coherence_matrix() const {
        if (coherence.empty()) return std::nullopt;
        CoherenceMatrix m(network.crystals().size());
        for (const auto& d : coherence) {
            auto ja = network.crystal_index(d.a);
            auto jb = network.crystal_index(d.b);
            if (!ja) throw std::invalid_argument("coherence names unknown crystal '" + d.a + "'");
            if (!jb) throw std::invalid_argument("coherence names unknown crystal '" + d.b + "'");
            if (*ja == *jb)
                throw std::invalid_argument("coherence must name two distinct crystals");
            m.set(*ja, *jb, d.gamma);
        }
        return m;
    }
};

namespace exp_detail {

inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline double to_double(const std::string& s, int line, const std::string& key) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(line, "value of '" + key + "' is not a number: '" + s + "'");
    }
    if (pos != s.size())
        throw ParseError(line, "value of '" + key + "' is not a number: '" + s + "'");
    return v;
}

inline int to_int(const std::string& s, int line, const std::string& key) {
    std::size_t pos = 0;
    int v = 0;
    try {
        v = std::stoi(s, &pos);
    } catch (const std::exception&) {
        throw ParseError(line, "value of '" + key + "' is not an integer: '" + s + "'");
    }
    if (pos != s.size())
        throw ParseError(line, "value of '" + key + "' is not an integer: '" + s + "'");
    return v;
}

/// key=value fields of one record, with required/optional accessors that
/// flag unknown leftovers.
class Fields {
  public:
    Fields(const std::vector<std::string>& tokens, std::size_t first, int line)
        : line_(line) {
        for (std::size_t i = first; i < tokens.size(); ++i) {
            auto eq = tokens[i].find('=');
            if (eq == std::string::npos || eq == 0)
                throw ParseError(line_, "expected key=value, got '" + tokens[i] + "'");
            auto key = tokens[i].substr(0, eq);
            if (!map_.emplace(key, tokens[i].substr(eq + 1)).second)
                throw ParseError(line_, "duplicate key '" + key + "'");
        }
    }

    std::string require(const std::string& key) {
        auto it = map_.find(key);
        if (it == map_.end()) throw ParseError(line_, "missing required key '" + key + "'");
        std::string v = it->second;
        map_.erase(it);
        return v;
    }

    std::optional<std::string> take(const std::string& key) {
        auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        std::string v = it->second;
        map_.erase(it);
        return v;
    }

    double require_double(const std::string& key) { return to_double(require(key), line_, key); }

    std::optional<double> take_double(const std::string& key) {
        auto v = take(key);
        if (!v) return std::nullopt;
        return to_double(*v, line_, key);
    }

    void finish(const std::string& kind) const {
        if (!map_.empty())
            throw ParseError(line_, "unknown key '" + map_.begin()->first + "' in '" + kind +
                                        "' record");
    }

  private:
    int line_;
    std::map<std::string, std::string> map_;
};

inline PhaseRange to_range(const std::string& s, int line, const std::string& key) {
    auto c1 = s.find(':');
    auto c2 = (c1 == std::string::npos) ? std::string::npos : s.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw ParseError(line, "value of '" + key + "' must be start:stop:points");
    PhaseRange r;
    r.start = to_double(s.substr(0, c1), line, key);
    r.stop = to_double(s.substr(c1 + 1, c2 - c1 - 1), line, key);
    r.points = to_int(s.substr(c2 + 1), line, key);
    if (r.points < 1) throw ParseError(line, "'" + key + "' needs at least one point");
    return r;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace exp_detail

/// Parses the experiment text format. Lines hold one record each: a record
/// kind followed by key=value fields, `#` starts a comment, and the first
/// record must be `schema biphoton/1`. Unknown kinds and keys are rejected
/// with their line number.
inline ExperimentFile parse_experiment(const std::string& text) {
    ExperimentFile out;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    bool have_schema = false;
    bool have_truncation = false;
    bool have_normalization = false;

    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        auto tokens = exp_detail::tokenize(raw);
        if (tokens.empty()) continue;
        const std::string& kind = tokens[0];

        if (!have_schema) {
            if (kind != "schema" || tokens.size() != 2 || tokens[1] != kSchemaTag)
                throw ParseError(line, "first record must be 'schema biphoton/1'");
            have_schema = true;
            continue;
        }

        try {
            if (kind == "schema") {
                throw ParseError(line, "duplicate schema record");
            } else if (kind == "truncation") {
                if (have_truncation) throw ParseError(line, "duplicate truncation record");
                have_truncation = true;
                exp_detail::Fields f(tokens, 1, line);
                int order = exp_detail::to_int(f.require("order"), line, "order");
                if (order < 0) throw ParseError(line, "truncation order must be >= 0");
                f.finish(kind);
                out.network.truncation_order = order;
            } else if (kind == "normalization") {
                if (have_normalization) throw ParseError(line, "duplicate normalization record");
                have_normalization = true;
                exp_detail::Fields f(tokens, 1, line);
                std::string conv = f.require("convention");
                f.finish(kind);
                if (conv == "paper")
                    out.network.paper_normalization = true;
                else if (conv == "unitary")
                    out.network.paper_normalization = false;
                else
                    throw ParseError(line, "convention must be 'unitary' or 'paper'");
            } else if (kind == "mode") {
                exp_detail::Fields f(tokens, 1, line);
                ModeDecl d;
                d.label = f.require("label");
                d.alias_of = f.take("alias");
                d.frequency = f.take_double("frequency");
                f.finish(kind);
                out.network.add_mode(d.label, d.alias_of, d.frequency);
                out.modes.push_back(std::move(d));
            } else if (kind == "crystal") {
                exp_detail::Fields f(tokens, 1, line);
                std::string name = f.require("name");
                std::string signal = f.require("signal");
                std::string idler = f.require("idler");
                double magnitude = f.require_double("magnitude");
                double phase = f.take_double("phase").value_or(0.0);
                f.finish(kind);
                out.network.add_crystal(std::move(name), signal, idler, magnitude, phase);
            } else if (kind == "phaseshift") {
                exp_detail::Fields f(tokens, 1, line);
                std::string mode = f.require("mode");
                auto phase = f.take_double("phase");
                auto displacement = f.take_double("displacement");
                auto lambda = f.take_double("lambda");
                auto geometry = f.take_double("geometry");
                auto scan_key = f.take("scan");
                f.finish(kind);

                if (phase && displacement)
                    throw ParseError(line, "give either phase= or displacement=, not both");
                double value = 0.0;
                if (displacement) {
                    if (!lambda || *lambda <= 0.0)
                        throw ParseError(line, "displacement needs a positive lambda=");
                    value = geometry.value_or(1.0) * kTwoPi * *displacement / *lambda;
                } else {
                    if (lambda || geometry)
                        throw ParseError(line,
                                         "lambda=/geometry= only apply with displacement=");
                    value = phase.value_or(0.0);
                }

                ScanRole role = ScanRole::none;
                if (scan_key) {
                    if (*scan_key == "signal")
                        role = ScanRole::signal;
                    else if (*scan_key == "idler")
                        role = ScanRole::idler;
                    else
                        throw ParseError(line, "scan= must be 'signal' or 'idler'");
                }
                out.network.add_phase_shift(mode, value, role);
            } else if (kind == "beamsplitter") {
                exp_detail::Fields f(tokens, 1, line);
                std::string a = f.require("a");
                std::string b = f.require("b");
                double t = f.take_double("transmission").value_or(kBalancedTransmission);
                f.finish(kind);
                out.network.add_beam_splitter(a, b, t);
            } else if (kind == "detector") {
                exp_detail::Fields f(tokens, 1, line);
                std::string label = f.require("label");
                std::string mode = f.require("mode");
                f.finish(kind);
                out.network.add_detector(label, mode);
            } else if (kind == "coherence") {
                exp_detail::Fields f(tokens, 1, line);
                CoherenceDecl d;
                d.a = f.require("a");
                d.b = f.require("b");
                d.gamma = f.require_double("gamma");
                f.finish(kind);
                if (d.gamma < 0.0 || d.gamma > 1.0)
                    throw ParseError(line, "gamma must lie in [0, 1]");
                out.coherence.push_back(std::move(d));
            } else if (kind == "scan") {
                if (out.scan) throw ParseError(line, "duplicate scan record");
                if (tokens.size() < 2)
                    throw ParseError(line, "scan needs a type: 'phase' or 'time'");
                const std::string& sub = tokens[1];
                ExperimentScan sc;
                if (sub == "phase") {
                    exp_detail::Fields f(tokens, 2, line);
                    PhaseGridSpec g;
                    g.s = exp_detail::to_range(f.require("phi_s"), line, "phi_s");
                    g.i = exp_detail::to_range(f.require("phi_i"), line, "phi_i");
                    f.finish("scan phase");
                    sc.grid = g;
                } else if (sub == "time") {
                    exp_detail::Fields f(tokens, 2, line);
                    TimeScan ts;
                    ts.v_s = f.require_double("v_s");
                    ts.v_i = f.require_double("v_i");
                    ts.lambda_s = f.require_double("lambda_s");
                    ts.lambda_i = f.require_double("lambda_i");
                    ts.duration = f.require_double("duration");
                    ts.step = f.require_double("step");
                    ts.geometry = f.take_double("geometry").value_or(1.0);
                    f.finish("scan time");
                    if (ts.lambda_s <= 0.0 || ts.lambda_i <= 0.0)
                        throw ParseError(line, "wavelengths must be positive");
                    if (ts.step <= 0.0) throw ParseError(line, "step must be positive");
                    if (ts.duration < 0.0) throw ParseError(line, "duration must be >= 0");
                    sc.time = ts;
                } else {
                    throw ParseError(line, "scan type must be 'phase' or 'time'");
                }
                out.scan = sc;
            } else {
                throw ParseError(line, "unknown record kind '" + kind + "'");
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception& e) {
            // Builder-level rejections (unknown labels, degenerate elements)
            // surface with the line that caused them.
            throw ParseError(line, e.what());
        }
    }

    if (!have_schema) throw ParseError(line > 0 ? line : 1, "missing 'schema biphoton/1' record");
    return out;
}

/// Canonical text form: schema, settings, modes, elements in order,
/// coherence, scan. parse_experiment(serialize(f)) == f.
inline std::string serialize(const ExperimentFile& f) {
    using exp_detail::fmt;
    std::string s;
    s += "schema ";
    s += kSchemaTag;
    s += '\n';
    s += "truncation order=" + std::to_string(f.network.truncation_order) + '\n';
    s += std::string("normalization convention=") +
         (f.network.paper_normalization ? "paper" : "unitary") + '\n';

    for (const auto& m : f.modes) {
        s += "mode label=" + m.label;
        if (m.alias_of) s += " alias=" + *m.alias_of;
        if (m.frequency) s += " frequency=" + fmt(*m.frequency);
        s += '\n';
    }

    const ModeRegistry& reg = f.network.modes;
    for (const auto& e : f.network.elements) {
        if (const auto* c = std::get_if<Crystal>(&e)) {
            s += "crystal name=" + c->name + " signal=" + reg.canonical_label(c->signal) +
                 " idler=" + reg.canonical_label(c->idler) +
                 " magnitude=" + fmt(c->coupling.magnitude) + " phase=" + fmt(c->coupling.phase) +
                 '\n';
        } else if (const auto* p = std::get_if<PhaseShift>(&e)) {
            s += "phaseshift mode=" + reg.canonical_label(p->mode) + " phase=" + fmt(p->phase);
            if (p->role == ScanRole::signal) s += " scan=signal";
            if (p->role == ScanRole::idler) s += " scan=idler";
            s += '\n';
        } else if (const auto* b = std::get_if<BeamSplitter>(&e)) {
            s += "beamsplitter a=" + reg.canonical_label(b->in_a) +
                 " b=" + reg.canonical_label(b->in_b) +
                 " transmission=" + fmt(b->transmission) + '\n';
        } else if (const auto* d = std::get_if<DetectorTap>(&e)) {
            s += "detector label=" + d->label + " mode=" + reg.canonical_label(d->mode) + '\n';
        }
    }

    for (const auto& c : f.coherence)
        s += "coherence a=" + c.a + " b=" + c.b + " gamma=" + fmt(c.gamma) + '\n';

    if (f.scan) {
        if (f.scan->grid) {
            auto range = [&](const PhaseRange& r) {
                return fmt(r.start) + ':' + fmt(r.stop) + ':' + std::to_string(r.points);
            };
            s += "scan phase phi_s=" + range(f.scan->grid->s) + " phi_i=" + range(f.scan->grid->i) +
                 '\n';
        } else if (f.scan->time) {
            const TimeScan& t = *f.scan->time;
            s += "scan time v_s=" + fmt(t.v_s) + " v_i=" + fmt(t.v_i) +
                 " lambda_s=" + fmt(t.lambda_s) + " lambda_i=" + fmt(t.lambda_i) +
                 " duration=" + fmt(t.duration) + " step=" + fmt(t.step) +
                 " geometry=" + fmt(t.geometry) + '\n';
        }
    }
    return s;
}

inline ExperimentFile load_experiment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path + "'");
    return parse_experiment(buf.str());
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

/// Runs the file's scan and renders the fixed-header CSV. Rows follow scan
/// order; phases are the effective totals at each sample. Formatting is
/// locale-independent (%.17g, '.', LF), so equal inputs give equal bytes.
inline std::string scan_csv(const ExperimentFile& f, RateOptions opt = {}) {
    const auto points = phase_points(f.scan_config());
    const Network& net = f.network;

    bool have_a = false, have_d = false;
    for (const auto* d : net.detectors()) {
        have_a |= d->label == "A";
        have_d |= d->label == "D";
    }
    if (!have_a || !have_d)
        throw std::invalid_argument("scan output requires detectors labeled A and D");

    if (auto gamma = f.coherence_matrix()) opt.pump_coherence = std::move(gamma);

    const double base_s =
        analysis_detail::first_role_base(net, ScanRole::signal) + opt.propagation.phi_s;
    const double base_i =
        analysis_detail::first_role_base(net, ScanRole::idler) + opt.propagation.phi_i;

    std::string csv = "phi_S,phi_I,rate_A,rate_D,rate_coinc\n";
    csv.reserve(csv.size() + points.size() * 96);
    char buf[160];
    for (const auto& p : points) {
        RateOptions at = opt;
        at.propagation.phi_s += p.phi_s;
        at.propagation.phi_i += p.phi_i;
        const double ra = singles_value(net, "A", at);
        const double rd = singles_value(net, "D", at);
        const double rc = coincidence_value(net, "A", "D", at);
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", base_s + p.phi_s,
                      base_i + p.phi_i, ra, rd, rc);
        csv += buf;
    }
    return csv;
}

/// Companion gnuplot script for a CSV written by scan_csv.
inline std::string gnuplot_script(const std::string& csv_path) {
    std::string s;
    s += "set datafile separator ','\n";
    s += "set key autotitle columnhead\n";
    s += "set xlabel 'phi_S (rad)'\n";
    s += "set ylabel 'rate'\n";
    s += "plot '" + csv_path + "' using 1:3 with lines, \\\n";
    s += "     '" + csv_path + "' using 1:4 with lines, \\\n";
    s += "     '" + csv_path + "' using 1:5 with lines\n";
    return s;
}

}  // namespace biphoton
