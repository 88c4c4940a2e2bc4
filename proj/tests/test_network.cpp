#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include <biphoton/network.hpp>
#include <biphoton/wick.hpp>

#include "support.hpp"

using biphoton::Complex;
using biphoton::Diagnostic;
using biphoton::ModeId;
using biphoton::Network;
using biphoton::OperatorExpression;
using biphoton::PropagationOptions;
using biphoton::propagate;
using biphoton::ScanRole;
using biphoton::validate;
using testsupport::three_crystal_network;

namespace {

bool approx_eq(Complex a, Complex b, double tol = 1e-12) { return std::abs(a - b) <= tol; }

Complex polar1(double phase) { return std::polar(1.0, phase); }

bool has_code(const std::vector<Diagnostic>& diags, const std::string& code) {
    for (const auto& d : diags)
        if (d.code == code) return true;
    return false;
}

}  // namespace

TEST_CASE("mode registry resolves aliases to one canonical id") {
    biphoton::ModeRegistry reg;
    const auto s1 = reg.register_mode("s1");
    const auto i1 = reg.register_mode("i1");
    const auto i2 = reg.register_mode("i2", "i1");

    CHECK(s1.id != i1.id);
    CHECK(i2.id == i1.id);
    CHECK(reg.canonical_count() == 2);
    CHECK(reg.resolve("i2").id == i1.id);
    CHECK(reg.canonical_label(i2.id) == "i1");

    // Idempotent re-registration; conflicting identities are rejected.
    CHECK(reg.register_mode("i2", "i1").id == i1.id);
    CHECK(reg.register_mode("s1").id == s1.id);
    CHECK_THROWS_AS(reg.register_mode("i2", "s1"), std::invalid_argument);
    CHECK_THROWS_AS(reg.register_mode("i2"), std::invalid_argument);
    CHECK_THROWS_AS(reg.register_mode("x", "nope"), std::invalid_argument);
    CHECK_THROWS_AS(reg.resolve("nope"), std::out_of_range);

    const auto labels = reg.labels_of(i1.id);
    CHECK(labels.size() == 2);
}

TEST_CASE("mode frequencies attach once and must agree") {
    biphoton::ModeRegistry reg;
    reg.register_mode("s1", std::nullopt, 2.0e15);
    CHECK(reg.frequency(reg.resolve("s1").id) == 2.0e15);
    CHECK_THROWS_AS(reg.register_mode("s1", std::nullopt, 3.0e15), std::invalid_argument);
    // A later registration may fill in a missing frequency.
    reg.register_mode("i1");
    reg.register_mode("i2", "i1", 1.5e15);
    CHECK(reg.frequency(reg.resolve("i1").id) == 1.5e15);
}

TEST_CASE("reference layout produces the expected detector fields") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> mag(0.1, 1.0), ang(0.0, 6.28);

    for (int trial = 0; trial < 25; ++trial) {
        const double m1 = mag(rng), m2 = mag(rng), m3 = mag(rng);
        const double p1 = ang(rng), p2 = ang(rng), p3 = ang(rng);
        const double phi_s = ang(rng), phi_i = ang(rng);
        const Complex c1 = std::polar(m1, p1), c2 = std::polar(m2, p2), c3 = std::polar(m3, p3);
        const Complex i_unit{0.0, 1.0};

        auto net = three_crystal_network({m1, p1}, {m2, p2}, {m3, p3}, 0.0, 0.0, 1, true);
        PropagationOptions opt;
        opt.phi_s = phi_s;
        opt.phi_i = phi_i;
        const auto taps = propagate(net, opt);
        REQUIRE(taps.count("A") == 1);
        REQUIRE(taps.count("D") == 1);

        const ModeId s1 = net.modes.resolve("s1").id, i1 = net.modes.resolve("i1").id;
        const ModeId s2 = net.modes.resolve("s2").id, i3 = net.modes.resolve("i3").id;

        // Signal-arm field: the undepleted s2 input, the phase-shifted s1
        // input, and one creator per pump path that can feed the arm.
        const auto& ea = taps.at("A");
        CHECK(ea.size() == 4);
        CHECK(approx_eq(ea.coefficient(s2, false, 0), Complex{1.0, 0.0}));
        CHECK(approx_eq(ea.coefficient(s1, false, 0), i_unit * polar1(phi_s)));
        CHECK(approx_eq(ea.coefficient(i1, true, 1), i_unit * c1 * polar1(phi_s) + c2));
        CHECK(approx_eq(ea.coefficient(i3, true, 1), i_unit * c3 * polar1(phi_s)));

        const auto& ed = taps.at("D");
        CHECK(ed.size() == 4);
        CHECK(approx_eq(ed.coefficient(i3, false, 0), Complex{1.0, 0.0}));
        CHECK(approx_eq(ed.coefficient(i1, false, 0), i_unit * polar1(phi_i)));
        CHECK(approx_eq(ed.coefficient(s1, true, 1), i_unit * c1 * polar1(phi_i) + c3));
        CHECK(approx_eq(ed.coefficient(s2, true, 1), i_unit * c2 * polar1(phi_i)));
    }
}

TEST_CASE("unitary splitter convention scales both quadratures") {
    auto net = three_crystal_network({0.2, 0.0}, {0.3, 0.0}, {0.0, 0.0});
    const auto taps = propagate(net);
    const ModeId s1 = net.modes.resolve("s1").id, s2 = net.modes.resolve("s2").id;
    const double k = biphoton::kBalancedTransmission;
    CHECK(approx_eq(taps.at("A").coefficient(s2, false, 0), Complex{k, 0.0}));
    CHECK(approx_eq(taps.at("A").coefficient(s1, false, 0), Complex{0.0, k}));
}

TEST_CASE("zero-coupling propagation is unitary") {
    std::mt19937_64 rng(211);
    std::uniform_real_distribution<double> ang(0.0, 6.28), trans(0.05, 0.95);
    std::uniform_int_distribution<int> mode_pick(0, 3), n_elems(2, 8);

    for (int trial = 0; trial < 60; ++trial) {
        Network net;
        for (const char* label : {"m0", "m1", "m2", "m3"}) net.add_mode(label);
        const char* labels[4] = {"m0", "m1", "m2", "m3"};

        const int n = n_elems(rng);
        for (int e = 0; e < n; ++e) {
            if (mode_pick(rng) % 2 == 0) {
                net.add_phase_shift(labels[mode_pick(rng)], ang(rng));
            } else {
                int a = mode_pick(rng), b = mode_pick(rng);
                if (a == b) b = (b + 1) % 4;
                net.add_beam_splitter(labels[a], labels[b], trans(rng));
            }
        }
        net.add_detector("A", labels[0]);
        net.add_detector("D", labels[1]);

        const auto taps = propagate(net);
        for (const char* d : {"A", "D"}) {
            double norm = 0.0;
            for (const auto& t : taps.at(d).terms()) {
                CHECK(t.order == 0);
                CHECK_FALSE(t.dagger);
                norm += std::norm(t.coeff);
            }
            CHECK(norm == Catch::Approx(1.0).margin(1e-12));
        }

        // Distinct rows of a unitary stay orthogonal; the mixed expectation
        // reads off exactly that inner product.
        const auto cross = biphoton::vacuum_expectation({taps.at("A"), taps.at("D").adjoint()});
        CHECK(std::abs(cross.value) <= 1e-12);
    }
}

TEST_CASE("truncation bounds the coupling order of every term") {
    auto net0 = three_crystal_network({0.5, 0.0}, {0.5, 0.0}, {0.5, 0.0}, 0, 0, 0);
    for (const auto& [label, e] : propagate(net0)) {
        (void)label;
        CHECK(e.max_order() == 0);
    }

    // At order 2 the signal arm picks up the feedthrough of a feedthrough:
    // an annihilator on s1 carrying C2 * conj(C1).
    auto net2 = three_crystal_network({0.4, 0.3}, {0.6, 1.1}, {0.0, 0.0}, 0, 0, 2, true);
    const auto taps2 = propagate(net2);
    const ModeId s1 = net2.modes.resolve("s1").id;
    const Complex c1 = std::polar(0.4, 0.3), c2 = std::polar(0.6, 1.1);
    CHECK(approx_eq(taps2.at("A").coefficient(s1, false, 2), c2 * std::conj(c1)));

    auto net1 = three_crystal_network({0.4, 0.3}, {0.6, 1.1}, {0.0, 0.0}, 0, 0, 1, true);
    CHECK(approx_eq(propagate(net1).at("A").coefficient(s1, false, 2), Complex{}));
}

TEST_CASE("crystal listing order is immaterial at leading truncation") {
    auto build = [](const std::vector<int>& order) {
        Network net;
        net.truncation_order = 1;
        net.add_mode("s1");
        net.add_mode("i1");
        net.add_mode("s2");
        net.add_mode("i2", "i1");
        net.add_mode("s3", "s1");
        net.add_mode("i3");
        for (int which : order) {
            if (which == 1) net.add_crystal("BBO1", "s1", "i1", 0.7, 0.2);
            if (which == 2) net.add_crystal("BBO2", "s2", "i2", 0.5, 1.3);
            if (which == 3) net.add_crystal("BBO3", "s3", "i3", 0.3, 2.1);
        }
        net.add_phase_shift("s1", 0.4, ScanRole::signal);
        net.add_phase_shift("i1", 1.9, ScanRole::idler);
        net.add_beam_splitter("s2", "s1");
        net.add_detector("A", "s2");
        net.add_beam_splitter("i3", "i1");
        net.add_detector("D", "i3");
        return net;
    };

    const auto base = propagate(build({1, 3, 2}));
    for (const auto& perm : {std::vector<int>{1, 2, 3}, {2, 1, 3}, {3, 2, 1}, {2, 3, 1}}) {
        const auto taps = propagate(build(perm));
        for (const auto& [label, e] : base) {
            const auto& other = taps.at(label);
            REQUIRE(other.size() == e.size());
            for (const auto& t : e.terms())
                CHECK(approx_eq(other.coefficient(t.mode, t.dagger, t.order), t.coeff));
        }
    }
}

TEST_CASE("scan-role shifters pick up the propagation offsets") {
    Network net;
    net.add_mode("s");
    net.add_mode("i");
    net.add_mode("r");
    net.add_phase_shift("s", 0.25, ScanRole::signal);
    net.add_phase_shift("i", 0.5, ScanRole::idler);
    net.add_phase_shift("r", 0.75);
    net.add_detector("S", "s");
    net.add_detector("I", "i");
    net.add_detector("R", "r");

    PropagationOptions opt;
    opt.phi_s = 1.0;
    opt.phi_i = 2.0;
    const auto taps = propagate(net, opt);
    const ModeId s = net.modes.resolve("s").id, i = net.modes.resolve("i").id,
                 r = net.modes.resolve("r").id;
    CHECK(approx_eq(taps.at("S").coefficient(s, false, 0), polar1(1.25)));
    CHECK(approx_eq(taps.at("I").coefficient(i, false, 0), polar1(2.5)));
    CHECK(approx_eq(taps.at("R").coefficient(r, false, 0), polar1(0.75)));
}

TEST_CASE("single-pump variants decompose the first-order field") {
    auto net = three_crystal_network({0.6, 0.4}, {0.5, 1.0}, {0.4, 2.0}, 0.3, 0.9, 1, true);
    PropagationOptions opt;
    opt.phi_s = 0.7;
    opt.phi_i = 1.1;
    const auto full = propagate(net, opt);

    std::map<std::string, OperatorExpression> sum;
    for (std::size_t j = 0; j < 3; ++j) {
        PropagationOptions var = opt;
        var.only_crystal = j;
        for (const auto& [label, e] : propagate(net, var)) {
            // Keep only the pump-dependent part of each variant.
            OperatorExpression first;
            for (const auto& t : e.terms())
                if (t.order == 1) first.add(t.mode, t.dagger, t.coeff, t.order);
            sum[label] += first;
        }
    }
    for (const auto& [label, e] : full) {
        for (const auto& t : e.terms()) {
            if (t.order != 1) continue;
            CHECK(approx_eq(sum.at(label).coefficient(t.mode, t.dagger, t.order), t.coeff));
        }
    }
}

TEST_CASE("propagation rejects malformed layouts") {
    Network degen;
    degen.add_mode("s1");
    degen.add_mode("s3", "s1");
    degen.add_mode("i1");
    degen.add_crystal("X", "s1", "s3", 0.1);
    CHECK_THROWS_AS(propagate(degen), std::invalid_argument);

    Network aliased;
    aliased.add_mode("a");
    aliased.add_mode("b", "a");
    aliased.add_beam_splitter("a", "b");
    CHECK_THROWS_AS(propagate(aliased), std::invalid_argument);

    Network dup;
    dup.add_mode("m");
    dup.add_detector("A", "m");
    dup.add_detector("A", "m");
    CHECK_THROWS_AS(propagate(dup), std::invalid_argument);

    Network neg;
    neg.add_mode("s");
    neg.add_mode("i");
    neg.elements.push_back(
        biphoton::Crystal{"N", neg.modes.resolve("s").id, neg.modes.resolve("i").id, {-0.1, 0.0}});
    CHECK_THROWS_AS(propagate(neg), std::invalid_argument);

    Network net;
    net.add_mode("m");
    net.add_detector("A", "m");
    PropagationOptions opt;
    opt.truncation_order = -1;
    CHECK_THROWS_AS(propagate(net, opt), std::invalid_argument);
}

TEST_CASE("validation reports every structural defect with its element") {
    Network net;
    net.add_mode("s1");
    net.add_mode("i1");
    net.add_mode("s3", "s1");
    net.add_crystal("BBO1", "s1", "i1", 0.5);             // low-gain warning
    net.add_crystal("D", "s1", "s3", 0.1);                // degenerate after aliasing
    net.elements.push_back(biphoton::Crystal{"N", ModeId{0}, ModeId{1}, {-0.2, 0.0}});
    net.elements.push_back(biphoton::Crystal{"U", ModeId{0}, ModeId{9}, {0.1, 0.0}});
    net.add_beam_splitter("s1", "s3");                    // aliased ports
    net.elements.push_back(biphoton::BeamSplitter{ModeId{0}, ModeId{1}, 1.5});
    net.add_detector("A", "s1");
    net.add_detector("A", "i1");                          // duplicate label

    const auto diags = validate(net);
    CHECK(biphoton::has_errors(diags));
    CHECK(has_code(diags, "low-gain"));
    CHECK(has_code(diags, "crystal-degenerate"));
    CHECK(has_code(diags, "coupling-negative"));
    CHECK(has_code(diags, "unknown-mode"));
    CHECK(has_code(diags, "bs-aliased-ports"));
    CHECK(has_code(diags, "bs-transmission-range"));
    CHECK(has_code(diags, "detector-duplicate"));

    for (const auto& d : diags)
        if (d.code == "crystal-degenerate") CHECK(d.element == 1);
}

TEST_CASE("validation stays quiet in the low-gain regime") {
    auto net = three_crystal_network({0.29, 0.0}, {0.1, 0.0}, {0.05, 0.0});
    const auto diags = validate(net);
    CHECK(diags.empty());

    auto hot = three_crystal_network({0.31, 0.0}, {0.1, 0.0}, {0.05, 0.0});
    const auto warn = validate(hot);
    REQUIRE(warn.size() == 1);
    CHECK(warn.front().level == Diagnostic::Level::warning);
    CHECK(warn.front().code == "low-gain");
    CHECK_FALSE(biphoton::has_errors(warn));
}

TEST_CASE("detectors on unfed modes draw a warning") {
    Network net;
    net.add_mode("m");
    net.add_mode("n");
    net.add_phase_shift("m", 0.1);
    net.add_detector("A", "m");
    net.add_detector("D", "n");
    const auto diags = validate(net);
    REQUIRE(diags.size() == 1);
    CHECK(diags.front().code == "detector-unreachable");
    CHECK(diags.front().element == 2);
}

TEST_CASE("crystal lookup by name follows listing order") {
    auto net = three_crystal_network({0.1, 0.0}, {0.2, 0.0}, {0.3, 0.0});
    CHECK(net.crystal_index("BBO1") == 0);
    CHECK(net.crystal_index("BBO3") == 1);
    CHECK(net.crystal_index("BBO2") == 2);
    CHECK_FALSE(net.crystal_index("BBO4").has_value());
    CHECK(net.crystals().size() == 3);
    CHECK(net.detectors().size() == 2);
}
