#pragma once

// Shared builders for the reference three-crystal layout used across the
// test suites: BBO1 pumps (s1, i1), BBO3 pumps (s3 = s1, i3), BBO2 pumps
// (s2, i2 = i1); the signal splitter mixes s2 with s1 into detector A and
// the idler splitter mixes i3 with i1 into detector D.

#include <biphoton/network.hpp>

namespace testsupport {

struct CrystalSpec {
    double magnitude = 0.0;
    double phase = 0.0;
};

inline biphoton::Network three_crystal_network(CrystalSpec c1, CrystalSpec c2, CrystalSpec c3,
                                               double phi_s_base = 0.0, double phi_i_base = 0.0,
                                               int truncation = 1, bool paper_norm = false) {
    biphoton::Network net;
    net.truncation_order = truncation;
    net.paper_normalization = paper_norm;
    net.add_mode("s1");
    net.add_mode("i1");
    net.add_mode("s2");
    net.add_mode("i2", "i1");
    net.add_mode("s3", "s1");
    net.add_mode("i3");
    net.add_crystal("BBO1", "s1", "i1", c1.magnitude, c1.phase);
    net.add_crystal("BBO3", "s3", "i3", c3.magnitude, c3.phase);
    net.add_crystal("BBO2", "s2", "i2", c2.magnitude, c2.phase);
    net.add_phase_shift("s1", phi_s_base, biphoton::ScanRole::signal);
    net.add_phase_shift("i1", phi_i_base, biphoton::ScanRole::idler);
    net.add_beam_splitter("s2", "s1");
    net.add_detector("A", "s2");
    net.add_beam_splitter("i3", "i1");
    net.add_detector("D", "i3");
    return net;
}

inline biphoton::Network two_crystal_network(CrystalSpec c1, CrystalSpec c2,
                                             double phi_s_base = 0.0, double phi_i_base = 0.0,
                                             int truncation = 1, bool paper_norm = false) {
    return three_crystal_network(c1, c2, CrystalSpec{}, phi_s_base, phi_i_base, truncation,
                                 paper_norm);
}

}  // namespace testsupport
