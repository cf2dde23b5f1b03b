// Copyright 2026 The catprep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "catprep/engine.hpp"
#include "catprep/schedule.hpp"

namespace catprep {

struct ProtocolOptions {
    double alpha = 2.6;
    /// Selective drive strength as a fraction of |chi_f|; pulses last pi/Omega_S.
    double drive_ratio = 0.25;
    int parity_rounds = 2;
    /// Repeat a parity check on the data mode right before measure_x so a
    /// photon lost during the teleportation gates cannot reach the readout.
    bool check_before_measure_x = true;
};

enum class Sign { plus, minus };

/// Selective drive strength for a gadget touching `modes`.
double selective_omega(const SystemLayout &layout, const std::vector<int> &modes, const ProtocolOptions &opt);

/// Repeated Ramsey parity check. Even agreement continues after the
/// fragment and odd agreement takes `on_odd`; disagreement and any e are
/// discarded.
void parity_measure(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, Branch on_odd = Branch::discard());

/// D(alpha) or D(i alpha) on a parked mode, then an even-parity check. A
/// clean odd result is a retry: the cavity is still uncorrelated with
/// everything else, so the preparation would simply be repeated.
void prep_plus(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, Sign sign = Sign::plus);

/// D(-beta), selective flip on photon numbers {0, 1}, D(beta), readout.
void discriminate(ScheduleBuilder &b, int mode, cplx beta, const ProtocolOptions &opt, Branch on_g, Branch on_e,
                  Branch on_f);

/// Sequential discrimination against -alpha, alpha, -i alpha, i alpha. The
/// first f ends the sequence and the mode is released while still displaced
/// by -beta of that stage. `minus_qubit` gets an X toggle on a minus result (pass -1
/// to skip). With release = false the mode stays live for inspection.
void measure_x(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, int minus_qubit, bool release = true);

/// Decoded measure_x herald: "plus", "minus" or "discard".
std::string decode_measure_x(const std::string &herald);

/// Imparts diag(1, e^{i theta}) = e^{i theta/2} Z_c(theta) with two
/// selective pi pulses on all even photon numbers. With frame_qubit >= 0 the
/// angle is negated at run time when that qubit carries a pending X.
void z_rot(ScheduleBuilder &b, int mode, double theta, const ProtocolOptions &opt, int frame_qubit = -1);

/// Same construction on the joint comb of even n_a + n_b: imparts e^{i theta}
/// on the odd-ZZ sector, e^{i theta/2} ZZ_c(theta).
void zz_rot(ScheduleBuilder &b, int mode_a, int mode_b, double theta, const ProtocolOptions &opt);

/// One-bit teleportation of H_c from `data` onto `fresh` (which must be
/// parked): prepares |+_c> on fresh, applies CZ, measures X on data.
void hadamard_teleport(ScheduleBuilder &b, int data, int fresh, int qubit, const ProtocolOptions &opt);

/// Non-detecting baseline: D(alpha), one parity round, then a SNAP-style
/// pulse pair that adds `phase` to the n = 2 mod 4 sector. No discard logic
/// after the parity round. Intended for a two-level ancilla.
void snap_baseline_prep(ScheduleBuilder &b, int mode, double phase, const ProtocolOptions &opt);

/// Outcome distribution of a standalone fragment run without noise.
struct GadgetOutcome {
    std::string herald;
    double probability = 0.0;
    bool accepted = false;
    PauliFrame frame;
    StateVector state;  // unnormalized accepted state
};
std::vector<GadgetOutcome> run_gadget(const Schedule &schedule, const StateVector &input,
                                      const NoiseModel &model);

/// Layout with `modes` identical cavities sized for alpha, chi_e = chi_f.
LayoutPtr cat_layout(std::size_t modes, double alpha, double chi_f, int truncation = 0);

}  // namespace catprep
