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

#include "catprep/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace catprep {
namespace {

constexpr double kPi = std::numbers::pi;

int comb_size(const ScheduleBuilder &b, const std::vector<int> &modes) {
    int n = 1;
    for (int k : modes) n += b.layout().mode(static_cast<std::size_t>(k)).truncation - 1;
    return n;
}

// Pulse pair imprinting theta on photon sums = 2 mod 4 and nothing on sums
// = 0 mod 4; odd sums are left undriven.
void geometric_pair(ScheduleBuilder &b, const std::vector<int> &modes, double theta, const ProtocolOptions &opt,
                    int frame_qubit, const std::string &label) {
    const int size = comb_size(b, modes);
    Comb first{modes, std::vector<std::optional<double>>(static_cast<std::size_t>(size))};
    Comb second = first;
    for (int s = 0; s < size; s += 2) {
        first.phase_by_sum[static_cast<std::size_t>(s)] = 0.0;
        const double imprint = s % 4 == 2 ? theta : 0.0;
        second.phase_by_sum[static_cast<std::size_t>(s)] = kPi - imprint;
    }
    const double omega = selective_omega(b.layout(), modes, opt);
    b.segment(Segment{kPi / omega, DriveGenerator{omega, std::move(first), frame_qubit}, label + ":loop1"});
    b.segment(Segment{kPi / omega, DriveGenerator{omega, std::move(second), frame_qubit}, label + ":loop2"});
}

// Attempts whose first parity reading is odd are repeated, so a run starts
// from the even part of D(beta)|0>. The parity check itself stays physical
// and a clean odd agreement after it is again a retry.
ModeKet even_part(ScheduleBuilder &b, int mode, cplx beta) {
    ModeKet ket = b.displacement(mode, beta)->col(0);
    for (int n = 1; n < ket.size(); n += 2) ket[n] = 0.0;
    return ket;
}

// Flips g -> f when the mode holds 0 or 1 photons.
void selective_flip(ScheduleBuilder &b, int mode, const ProtocolOptions &opt) {
    const int n = b.layout().mode(static_cast<std::size_t>(mode)).truncation;
    Comb comb{{mode}, std::vector<std::optional<double>>(static_cast<std::size_t>(n))};
    comb.phase_by_sum[0] = 0.0;
    comb.phase_by_sum[1] = 0.0;
    const double omega = selective_omega(b.layout(), {mode}, opt);
    b.segment(Segment{kPi / omega, DriveGenerator{omega, std::move(comb), -1}, "disc:S"});
}

}  // namespace

double selective_omega(const SystemLayout &layout, const std::vector<int> &modes, const ProtocolOptions &opt) {
    if (!(opt.drive_ratio > 0.0)) throw Error("protocol: drive_ratio must be > 0");
    double chi = 0.0;
    for (int k : modes) {
        const double c = std::abs(layout.coupling(static_cast<std::size_t>(k)).chi_f);
        chi = chi == 0.0 ? c : std::min(chi, c);
    }
    return opt.drive_ratio * chi;
}

void parity_measure(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, Branch on_odd) {
    if (opt.parity_rounds < 1) throw Error("protocol: parity_rounds must be >= 1");
    const double chi = std::abs(b.layout().coupling(static_cast<std::size_t>(mode)).chi_f);
    const Eigen::Matrix3cd half = ancilla_rotation(kPi / 2);
    const Eigen::Matrix3cd unhalf = ancilla_rotation(-kPi / 2);
    const std::string name = "parity[" + std::to_string(mode) + "]";
    auto round = [&](int r) {
        const std::string tag = name + std::to_string(r);
        b.ancilla_unitary(half, tag + ":R");
        b.segment(Segment{kPi / chi, DispersiveGenerator{{mode}}, tag + ":C_pi"});
        b.ancilla_unitary(unhalf, tag + ":R^-1");
    };
    if (on_odd.kind == Branch::Kind::discard) {
        // Only even agreement is kept, so a first odd round can stop early.
        for (int r = 0; r < opt.parity_rounds; ++r) {
            round(r);
            b.measure(name, Branch::next(), Branch::discard(), Branch::discard());
        }
        return;
    }
    if (opt.parity_rounds == 1) {
        round(0);
        b.measure(name, Branch::next(), Branch::discard(), std::move(on_odd));
        return;
    }
    const int odd_path = b.new_label();
    const int done = b.new_label();
    round(0);
    b.measure(name, Branch::next(), Branch::discard(), Branch::go(odd_path));
    for (int r = 1; r < opt.parity_rounds; ++r) {
        round(r);
        b.measure(name, Branch::next(), Branch::discard(), Branch::discard());
    }
    b.go(done);
    b.place(odd_path);
    for (int r = 1; r < opt.parity_rounds; ++r) {
        round(r);
        const bool last = r + 1 == opt.parity_rounds;
        b.measure(name, Branch::discard(), Branch::discard(), last ? on_odd : Branch::next());
    }
    b.place(done);
}

void prep_plus(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, Sign sign) {
    const cplx beta = sign == Sign::plus ? cplx(opt.alpha, 0.0) : cplx(0.0, opt.alpha);
    b.prepare(mode, even_part(b, mode, beta), "prep:D");
    parity_measure(b, mode, opt, Branch::retry());
}

void discriminate(ScheduleBuilder &b, int mode, cplx beta, const ProtocolOptions &opt, Branch on_g, Branch on_e,
                  Branch on_f) {
    b.mode_unitary(mode, b.displacement(mode, -beta), "disc:D-");
    selective_flip(b, mode, opt);
    b.mode_unitary(mode, b.displacement(mode, beta), "disc:D+");
    b.measure("disc", std::move(on_g), std::move(on_e), std::move(on_f));
}

void measure_x(ScheduleBuilder &b, int mode, const ProtocolOptions &opt, int minus_qubit, bool release) {
    const double a = opt.alpha;
    const std::array<cplx, 4> betas{cplx(-a, 0.0), cplx(a, 0.0), cplx(0.0, -a), cplx(0.0, a)};
    std::array<int, 4> found{};
    for (auto &l : found) l = b.new_label();
    const int done = b.new_label();
    // Readout is instantaneous, so D(beta_k) of one stage and D(-beta_k+1) of
    // the next are applied as a single product on the g path.
    b.mode_unitary(mode, b.displacement(mode, -betas[0]), "mx:D-");
    for (std::size_t k = 0; k < 4; ++k) {
        selective_flip(b, mode, opt);
        Branch on_f = Branch::go(found[k], "f" + std::string(3 - k, 'g'));
        if (k >= 2 && minus_qubit >= 0) on_f.toggle_x(minus_qubit);
        Branch on_g = k < 3 ? Branch::next("g") : Branch::discard("g");
        b.measure("disc", std::move(on_g), Branch::discard("e"), std::move(on_f));
        if (k < 3) {
            auto step = std::make_shared<const DenseOp>(*b.displacement(mode, -betas[k + 1]) * *b.displacement(mode, betas[k]));
            b.mode_unitary(mode, std::move(step), "mx:D");
        }
    }
    for (std::size_t k = 0; k < 4; ++k) {
        b.place(found[k]);
        // Tracing the mode out does not depend on the basis, so it is read in
        // the displaced frame it is already in.
        if (release) {
            b.release(mode, 0.0);
        } else {
            b.mode_unitary(mode, b.displacement(mode, betas[k]), "mx:D+");
        }
        if (k < 3) b.go(done);
    }
    b.place(done);
}

std::string decode_measure_x(const std::string &herald) {
    if (herald.size() < 4) return "discard";
    const std::string tail = herald.substr(herald.size() - 4);
    if (tail == "fggg" || tail == "gfgg") return "plus";
    if (tail == "ggfg" || tail == "gggf") return "minus";
    return "discard";
}

void z_rot(ScheduleBuilder &b, int mode, double theta, const ProtocolOptions &opt, int frame_qubit) {
    geometric_pair(b, {mode}, theta, opt, frame_qubit, "Z[" + std::to_string(mode) + "]");
    b.measure("Z", Branch::next(), Branch::discard(), Branch::discard());
}

void zz_rot(ScheduleBuilder &b, int mode_a, int mode_b, double theta, const ProtocolOptions &opt) {
    if (mode_a == mode_b) throw Error("protocol: zz_rot needs two distinct modes");
    geometric_pair(b, {mode_a, mode_b}, theta, opt, -1,
                   "ZZ[" + std::to_string(mode_a) + "," + std::to_string(mode_b) + "]");
    b.measure("ZZ", Branch::next(), Branch::discard(), Branch::discard());
}

void hadamard_teleport(ScheduleBuilder &b, int data, int fresh, int qubit, const ProtocolOptions &opt) {
    prep_plus(b, fresh, opt);
    // CZ = Z(-pi/2) x Z(-pi/2) . ZZ(pi/2) in the diag(1, e^{i theta}) convention.
    z_rot(b, data, -kPi / 2, opt);
    z_rot(b, fresh, -kPi / 2, opt);
    zz_rot(b, data, fresh, kPi / 2, opt);
    if (opt.check_before_measure_x) parity_measure(b, data, opt);
    measure_x(b, data, opt, qubit);
}

void snap_baseline_prep(ScheduleBuilder &b, int mode, double phase, const ProtocolOptions &opt) {
    b.prepare(mode, even_part(b, mode, cplx(opt.alpha, 0.0)), "snap:D");
    ProtocolOptions single = opt;
    single.parity_rounds = 1;
    parity_measure(b, mode, single, Branch::retry());
    const int n = b.layout().mode(static_cast<std::size_t>(mode)).truncation;
    Comb first{{mode}, std::vector<std::optional<double>>(static_cast<std::size_t>(n))};
    Comb second = first;
    for (int s = 2; s < n; s += 4) {
        first.phase_by_sum[static_cast<std::size_t>(s)] = 0.0;
        second.phase_by_sum[static_cast<std::size_t>(s)] = kPi - phase;
    }
    const double omega = selective_omega(b.layout(), {mode}, opt);
    b.segment(Segment{kPi / omega, DriveGenerator{omega, std::move(first), -1}, "snap:loop1"});
    b.segment(Segment{kPi / omega, DriveGenerator{omega, std::move(second), -1}, "snap:loop2"});
    b.measure("snap", Branch::next(), Branch::next(), Branch::next());
}

std::vector<GadgetOutcome> run_gadget(const Schedule &schedule, const StateVector &input, const NoiseModel &model) {
    const EngineContext ctx(schedule, model);
    std::vector<GadgetOutcome> out;
    for (auto &br : enumerate_no_jump_branches(ctx, PathState::start(schedule, input))) {
        out.push_back({br.state.herald, br.weight, br.accepted, br.state.frame, std::move(br.state.psi)});
    }
    return out;
}

LayoutPtr cat_layout(std::size_t modes, double alpha, double chi_f, int truncation) {
    const int n = truncation > 0 ? truncation : default_truncation(alpha);
    std::vector<ModeSpec> specs;
    std::vector<Coupling> couplings;
    for (std::size_t k = 0; k < modes; ++k) {
        specs.push_back({n, "c" + std::to_string(k)});
        couplings.push_back({chi_f, chi_f});
    }
    return std::make_shared<const SystemLayout>(std::move(specs), std::move(couplings));
}

}  // namespace catprep
