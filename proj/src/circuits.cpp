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

#include "catprep/circuits.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace catprep {
namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double t) {
    t = std::remainder(t, 2 * kPi);
    return t <= -kPi ? t + 2 * kPi : t;
}

// Physical gadget list before scheduling.
struct Op {
    enum class Kind { prep, z, zz, parity, mx } kind;
    int m1 = -1;
    int m2 = -1;
    double theta = 0.0;
    int qubit = -1;  // mx: qubit receiving the X toggle; z: feed-forward qubit
};

class CircuitBuilder {
  public:
    explicit CircuitBuilder(int qubits) : qubit_mode_(static_cast<std::size_t>(qubits), -1),
                                          maybe_x_(static_cast<std::size_t>(qubits), false) {}

    void prep(int q, int mode) {
        ops_.push_back({Op::Kind::prep, mode, -1, 0.0, -1});
        qubit_mode_.at(static_cast<std::size_t>(q)) = mode;
        gates_.push_back({LogicalGate::Kind::h, q, -1, 0.0});  // |0> -> |+>
    }

    void z(int q, double theta) {
        gates_.push_back({LogicalGate::Kind::z, q, -1, theta});
        const int fq = maybe_x_.at(static_cast<std::size_t>(q)) ? q : -1;
        ops_.push_back({Op::Kind::z, mode(q), -1, theta, fq});
    }

    void zz(int a, int b, double theta) {
        require_clean(a, "ZZ");
        require_clean(b, "ZZ");
        gates_.push_back({LogicalGate::Kind::zz, a, b, theta});
        ops_.push_back({Op::Kind::zz, mode(a), mode(b), theta, -1});
    }

    void h(int q, int fresh, bool check) {
        require_clean(q, "H");
        gates_.push_back({LogicalGate::Kind::h, q, -1, 0.0});
        const int data = mode(q);
        ops_.push_back({Op::Kind::prep, fresh, -1, 0.0, -1});
        ops_.push_back({Op::Kind::z, data, -1, -kPi / 2, -1});
        ops_.push_back({Op::Kind::z, fresh, -1, -kPi / 2, -1});
        ops_.push_back({Op::Kind::zz, data, fresh, kPi / 2, -1});
        if (check) ops_.push_back({Op::Kind::parity, data, -1, 0.0, -1});
        ops_.push_back({Op::Kind::mx, data, -1, 0.0, q});
        qubit_mode_.at(static_cast<std::size_t>(q)) = fresh;
        maybe_x_.at(static_cast<std::size_t>(q)) = true;
        ++teleports_;
    }

    int mode(int q) const {
        const int m = qubit_mode_.at(static_cast<std::size_t>(q));
        if (m < 0) throw CompileError("circuits: qubit " + std::to_string(q) + " used before preparation");
        return m;
    }
    const std::vector<LogicalGate> &gates() const { return gates_; }
    int teleports() const { return teleports_; }

    /// Merges Z gadgets on the same mode that are separated only by
    /// diagonal gadgets or by gadgets on other modes, and drops identities.
    std::vector<Op> optimized() const {
        std::vector<Op> out;
        for (const Op &op : ops_) {
            if (op.kind == Op::Kind::z) {
                bool merged = false;
                for (std::size_t i = out.size(); i-- > 0;) {
                    const Op &prev = out[i];
                    const bool touches = prev.m1 == op.m1 || prev.m2 == op.m1;
                    if (prev.kind == Op::Kind::z && prev.m1 == op.m1 && prev.qubit == op.qubit) {
                        out[i].theta += op.theta;
                        merged = true;
                        break;
                    }
                    if (touches && prev.kind != Op::Kind::zz && prev.kind != Op::Kind::z) break;
                }
                if (merged) continue;
            }
            out.push_back(op);
        }
        std::erase_if(out, [](const Op &op) {
            return op.kind == Op::Kind::z && std::abs(wrap_angle(op.theta)) < 1e-12;
        });
        return out;
    }

    void emit(ScheduleBuilder &b, const ProtocolOptions &opt) const {
        for (const Op &op : optimized()) {
            switch (op.kind) {
            case Op::Kind::prep: prep_plus(b, op.m1, opt); break;
            case Op::Kind::z: z_rot(b, op.m1, wrap_angle(op.theta), opt, op.qubit); break;
            case Op::Kind::zz: zz_rot(b, op.m1, op.m2, wrap_angle(op.theta), opt); break;
            case Op::Kind::parity: parity_measure(b, op.m1, opt); break;
            case Op::Kind::mx: measure_x(b, op.m1, opt, op.qubit); break;
            }
        }
    }

    std::vector<int> output_modes() const { return qubit_mode_; }
    std::vector<int> readout_modes() const {
        std::vector<int> out;
        for (const Op &op : ops_)
            if (op.kind == Op::Kind::mx && std::find(out.begin(), out.end(), op.m1) == out.end()) out.push_back(op.m1);
        return out;
    }

  private:
    void require_clean(int q, const char *what) const {
        if (maybe_x_.at(static_cast<std::size_t>(q))) {
            throw CompileError(std::string("circuits: ") + what + " on qubit " + std::to_string(q) +
                               " which may carry a pending X");
        }
    }

    std::vector<int> qubit_mode_;
    std::vector<bool> maybe_x_;
    std::vector<Op> ops_;
    std::vector<LogicalGate> gates_;
    int teleports_ = 0;
};

std::vector<ModeKet> codewords(const Schedule &s, CatWord w) {
    std::vector<ModeKet> out;
    for (int m : s.output_modes) out.push_back(cat_state(s.layout->mode(static_cast<std::size_t>(m)), s.alpha, w));
    return out;
}

LayoutPtr device_layout(std::size_t modes, const DeviceSettings &dev, const std::vector<int> &readout = {}) {
    std::vector<ModeSpec> specs;
    std::vector<Coupling> couplings;
    for (std::size_t k = 0; k < modes; ++k) {
        const bool read = std::find(readout.begin(), readout.end(), static_cast<int>(k)) != readout.end();
        int n = dev.truncation;
        if (n <= 0) n = read ? readout_truncation(dev.alpha) : default_truncation(dev.alpha);
        specs.push_back({n, "c" + std::to_string(k)});
        couplings.push_back({dev.chi_f, dev.chi_e});
    }
    return std::make_shared<const SystemLayout>(std::move(specs), std::move(couplings));
}

ProtocolOptions protocol_for(const DeviceSettings &dev) {
    ProtocolOptions o = dev.protocol;
    o.alpha = dev.alpha;
    return o;
}

// Runs the noiseless check shared by all compiled circuits.
void verify(CompiledCircuit &c, double tolerance) {
    const EngineContext ctx(c.schedule, noiseless(c.schedule.layout->num_modes()));
    const auto e = enumerate_no_jump(ctx, PathState::start(c.schedule, StateVector::vacuum(c.schedule.layout)),
                                     logical_scorer(c.schedule, c.target));
    const LogicalSummary s = summarize(e.tally, c.target);
    c.noiseless_infidelity = s.infidelity;
    c.noiseless_success = s.success;
    if (!(s.success > 0.0) || !(s.infidelity <= tolerance) || !(s.leakage < 1e-6)) {
        std::ostringstream msg;
        msg << "circuits: " << c.schedule.name << " fails its noiseless check (infidelity " << s.infidelity
            << ", tolerance " << tolerance << ", leakage " << s.leakage << ", success " << s.success << ")";
        throw CompileError(msg.str());
    }
}

void verify_logical(const std::vector<LogicalGate> &gates, const LogicalTarget &target, const std::string &name) {
    Eigen::Vector4cd zero = Eigen::Vector4cd::Zero();
    zero[0] = 1.0;
    const Eigen::Vector4cd out = logical_unitary(gates) * zero;
    const double f = std::norm(target.amplitudes.dot(out));
    if (!(f > 1 - 1e-12)) {
        throw CompileError("circuits: " + name + " gate list does not prepare the target (overlap " +
                           std::to_string(f) + ")");
    }
}

CompiledCircuit finish(CircuitBuilder &cb, const DeviceSettings &dev, std::size_t modes, LogicalTarget target,
                       const std::string &name) {
    verify_logical(cb.gates(), target, name);
    const ProtocolOptions opt = protocol_for(dev);
    ScheduleBuilder b(device_layout(modes, dev, cb.readout_modes()));
    cb.emit(b, opt);
    auto outputs = cb.output_modes();
    for (int m : outputs) parity_measure(b, m, opt);
    CompiledCircuit c{b.build(2, outputs, dev.alpha, name), std::move(target), cb.gates(), 0.0, 0.0, {}};
    verify(c, compile_tolerance(dev.alpha, cb.teleports()));
    return c;
}

Eigen::Matrix2cd pauli(int k) {
    Eigen::Matrix2cd p;
    switch (k) {
    case 0: p << 1, 0, 0, 1; break;
    case 1: p << 0, 1, 1, 0; break;
    case 2: p << 0, cplx(0, -1), cplx(0, 1), 0; break;
    default: p << 1, 0, 0, -1; break;
    }
    return p;
}

}  // namespace

int LogicalTarget::qubits() const { return amplitudes.size() == 4 ? 2 : 1; }

LogicalTarget LogicalTarget::from(Eigen::VectorXcd v) {
    if (v.size() != 2 && v.size() != 4) throw Error("circuits: logical targets have 1 or 2 qubits");
    const double n = v.norm();
    if (!(n > 0.0)) throw Error("circuits: zero logical target");
    return LogicalTarget{v / n};
}

LogicalTarget bell_phase_target() {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    v[0] = 1.0;
    v[3] = std::polar(1.0, kPi / 4);
    return LogicalTarget::from(v);
}

LogicalTarget psi_target(double theta, double phi) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    v[0] = std::cos(theta);
    v[3] = cplx(0, 1) * std::polar(1.0, phi) * std::sin(theta);
    return LogicalTarget::from(v);
}

Eigen::Matrix4cd logical_unitary(const std::vector<LogicalGate> &gates) {
    Eigen::Matrix4cd u = Eigen::Matrix4cd::Identity();
    auto bit = [](int index, int q) { return (index >> (1 - q)) & 1; };
    for (const auto &g : gates) {
        if (g.a < 0 || g.a > 1 || (g.kind == LogicalGate::Kind::zz && (g.b < 0 || g.b > 1 || g.b == g.a))) {
            throw Error("circuits: bad logical gate operands");
        }
        Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
        switch (g.kind) {
        case LogicalGate::Kind::z:
            for (int i = 0; i < 4; ++i) m(i, i) = bit(i, g.a) ? std::polar(1.0, g.theta) : 1.0;
            break;
        case LogicalGate::Kind::zz:
            for (int i = 0; i < 4; ++i) m(i, i) = bit(i, g.a) != bit(i, g.b) ? std::polar(1.0, g.theta) : 1.0;
            break;
        case LogicalGate::Kind::h:
            for (int i = 0; i < 4; ++i) {
                for (int j = 0; j < 4; ++j) {
                    const int other = 1 - g.a;
                    if (bit(i, other) != bit(j, other)) continue;
                    m(i, j) = (bit(i, g.a) && bit(j, g.a) ? -1.0 : 1.0) / std::sqrt(2.0);
                }
            }
            break;
        }
        u = m * u;
    }
    return u;
}

NoiseModel default_noise(std::size_t num_modes) {
    NoiseModel m;
    // Rates in 1/us: T_loss = 8 ms, T_deph = 40 ms, T_fe = 1 ms, T_phi = 4 ms.
    m.modes.assign(num_modes, ModeNoise{1.0 / 8000.0, 1.0 / 40000.0});
    m.ancilla.gamma_fe = 1.0 / 1000.0;
    m.ancilla.gamma_phi = 1.0 / 4000.0;
    return m;
}

NoiseModel baseline_noise(const NoiseModel &model) {
    NoiseModel m = model;
    m.ancilla.decay_to_ground = true;
    return m;
}

double compile_tolerance(double alpha, int teleports) {
    const double x = 2 * alpha * alpha;
    return 1e-5 + 5.0 * teleports * (1 + x) * std::exp(-x);
}

CompiledCircuit compile_bell_phase(const DeviceSettings &dev) {
    const bool check = dev.protocol.check_before_measure_x;
    CircuitBuilder cb(2);
    cb.prep(0, 0);
    cb.prep(1, 1);
    // CZ up to single-qubit phases, then the e^{i pi/4} on |11> folded into Z on qubit 0.
    cb.zz(0, 1, kPi / 2);
    cb.z(0, -kPi / 2);
    cb.z(1, -kPi / 2);
    cb.z(0, kPi / 4);
    cb.h(1, 2, check);
    return finish(cb, dev, 3, bell_phase_target(), "bell_phase");
}

CompiledCircuit compile_psi(double theta, double phi, const DeviceSettings &dev) {
    if (!(theta >= 0.0 && theta <= kPi / 2)) throw CompileError("circuits: theta must lie in [0, pi/2]");
    if (!(phi >= 0.0 && phi < 2 * kPi)) throw CompileError("circuits: phi must lie in [0, 2 pi)");
    const bool check = dev.protocol.check_before_measure_x;
    CircuitBuilder cb(2);
    cb.prep(0, 0);
    cb.prep(1, 1);
    cb.zz(0, 1, -2 * theta);
    cb.h(0, 2, check);
    cb.h(1, 0, check);
    cb.z(0, phi);
    return finish(cb, dev, 3, psi_target(theta, phi), "psi");
}

CompiledCircuit compile_snap_baseline(const DeviceSettings &dev) {
    const ProtocolOptions opt = protocol_for(dev);
    ScheduleBuilder b(device_layout(1, dev));
    snap_baseline_prep(b, 0, -kPi / 4, opt);
    Eigen::VectorXcd v(2);
    v << 1.0, std::polar(1.0, -kPi / 4);
    CompiledCircuit c{b.build(1, {0}, dev.alpha, "snap_baseline"), LogicalTarget::from(v), {}, 0.0, 0.0, {}};
    verify(c, compile_tolerance(dev.alpha, 0));
    return c;
}

const std::vector<std::string> &gadget_names() {
    static const std::vector<std::string> names{"parity", "z", "zz", "measure_x", "hadamard"};
    return names;
}

CompiledCircuit compile_gadget(const std::string &name, const DeviceSettings &dev) {
    const ProtocolOptions opt = protocol_for(dev);
    const double r = 1.0 / std::sqrt(2.0);
    Eigen::VectorXcd v;
    std::vector<int> outputs;
    std::vector<int> registers;
    int teleports = 0;
    std::size_t modes = 1;
    if (name == "zz" || name == "measure_x" || name == "hadamard") modes = 2;
    std::vector<int> readout;
    if (name == "measure_x" || name == "hadamard") readout = {0};
    ScheduleBuilder b(device_layout(modes, dev, readout));
    if (name == "parity") {
        prep_plus(b, 0, opt);
        parity_measure(b, 0, opt);
        v = Eigen::Vector2cd(r, r);
        outputs = {0};
    } else if (name == "z") {
        prep_plus(b, 0, opt);
        z_rot(b, 0, kPi / 4, opt);
        v = Eigen::Vector2cd(r, r * std::polar(1.0, kPi / 4));
        outputs = {0};
    } else if (name == "zz") {
        prep_plus(b, 0, opt);
        prep_plus(b, 1, opt);
        zz_rot(b, 0, 1, kPi / 2, opt);
        const cplx p = std::polar(1.0, kPi / 2);
        v = Eigen::Vector4cd(0.5, 0.5 * p, 0.5 * p, 0.5);
        outputs = {0, 1};
    } else if (name == "measure_x") {
        b.prepare(1, cat_state(b.layout().mode(1), dev.alpha, CatWord::zero), "register");
        prep_plus(b, 0, opt);
        measure_x(b, 0, opt, 0);
        v = Eigen::Vector2cd(1.0, 0.0);
        outputs = {1};
        registers = {1};
        teleports = 1;
    } else if (name == "hadamard") {
        prep_plus(b, 0, opt);
        hadamard_teleport(b, 0, 1, 0, opt);
        v = Eigen::Vector2cd(1.0, 0.0);
        outputs = {1};
        teleports = 1;
    } else {
        throw CompileError("circuits: unknown gadget '" + name + "'");
    }
    for (int m : outputs) {
        if (std::find(registers.begin(), registers.end(), m) == registers.end()) parity_measure(b, m, opt);
    }
    const int qubits = static_cast<int>(outputs.size());
    CompiledCircuit c{b.build(qubits, outputs, dev.alpha, "gadget:" + name), LogicalTarget::from(v), {}, 0.0, 0.0,
                      registers};
    verify(c, compile_tolerance(dev.alpha, teleports));
    return c;
}

std::vector<Eigen::VectorXcd> code_amplitudes(const PathState &leaf, const Schedule &schedule,
                                              const std::vector<ModeKet> &zero, const std::vector<ModeKet> &one) {
    const StateVector &psi = leaf.psi;
    const auto &outs = schedule.output_modes;
    const std::size_t nq = outs.size();
    for (std::size_t k = 0; k < psi.layout().num_modes(); ++k) {
        const bool output = std::find(outs.begin(), outs.end(), static_cast<int>(k)) != outs.end();
        if (psi.is_live(k) && !output) throw Error("circuits: a non-output mode is still live at the end");
    }
    std::vector<Eigen::VectorXcd> out(kAncillaLevels, Eigen::VectorXcd::Zero(1 << nq));
    if (nq == 1) {
        const auto m = static_cast<std::size_t>(outs[0]);
        const int n = psi.dim(m);
        for (int l = 0; l < kAncillaLevels; ++l) {
            for (int i = 0; i < n; ++i) {
                const cplx a = psi[static_cast<std::size_t>(i) * psi.stride(m) + static_cast<std::size_t>(l)];
                out[static_cast<std::size_t>(l)][0] += std::conj(zero[0][i]) * a;
                out[static_cast<std::size_t>(l)][1] += std::conj(one[0][i]) * a;
            }
        }
    } else {
        const auto m0 = static_cast<std::size_t>(outs[0]);
        const auto m1 = static_cast<std::size_t>(outs[1]);
        const int n0 = psi.dim(m0);
        const int n1 = psi.dim(m1);
        std::array<const ModeKet *, 2> w0{&zero[0], &one[0]};
        std::array<const ModeKet *, 2> w1{&zero[1], &one[1]};
        for (int l = 0; l < kAncillaLevels; ++l) {
            // Contract mode 1 first, then mode 0.
            Eigen::MatrixXcd partial = Eigen::MatrixXcd::Zero(n0, 2);
            for (int i = 0; i < n0; ++i) {
                for (int j = 0; j < n1; j += 2) {
                    const cplx a = psi[static_cast<std::size_t>(i) * psi.stride(m0) +
                                       static_cast<std::size_t>(j) * psi.stride(m1) + static_cast<std::size_t>(l)];
                    if (a == cplx(0.0)) continue;
                    partial(i, 0) += std::conj((*w1[0])[j]) * a;
                    partial(i, 1) += std::conj((*w1[1])[j]) * a;
                }
            }
            for (int q0 = 0; q0 < 2; ++q0)
                for (int q1 = 0; q1 < 2; ++q1)
                    out[static_cast<std::size_t>(l)][q0 * 2 + q1] = w0[static_cast<std::size_t>(q0)]->dot(partial.col(q1));
        }
    }
    for (std::size_t q = 0; q < nq && q < leaf.frame.size(); ++q) {
        const int bitpos = static_cast<int>(nq - 1 - q);
        for (auto &v : out) {
            if (leaf.frame.x(q)) {
                Eigen::VectorXcd w = v;
                for (int i = 0; i < v.size(); ++i) v[i] = w[i ^ (1 << bitpos)];
            }
            if (leaf.frame.z(q)) {
                for (int i = 0; i < v.size(); ++i)
                    if ((i >> bitpos) & 1) v[i] = -v[i];
            }
        }
    }
    return out;
}

LeafScorer logical_scorer(const Schedule &schedule, const LogicalTarget &target) {
    auto zero = std::make_shared<std::vector<ModeKet>>(codewords(schedule, CatWord::zero));
    auto one = std::make_shared<std::vector<ModeKet>>(codewords(schedule, CatWord::one));
    const Eigen::VectorXcd xi = target.amplitudes;
    const Schedule *sched = &schedule;
    return [zero, one, xi, sched](const PathState &leaf, double, Tally &t) {
        const auto amps = code_amplitudes(leaf, *sched, *zero, *one);
        if (t.values.size() < 2) t.values.resize(2, 0.0);
        if (t.matrix.size() == 0) t.matrix = Eigen::MatrixXcd::Zero(xi.size(), xi.size());
        for (const auto &a : amps) {
            t.values[0] += a.squaredNorm();
            t.values[1] += std::norm(xi.dot(a));
            t.matrix += a * a.adjoint();
        }
    };
}

Eigen::MatrixXcd pauli_reconstruction(const Eigen::MatrixXcd &r, double code_weight) {
    if (!(code_weight > 0.0)) throw Error("circuits: no code-space weight to reconstruct");
    const Eigen::MatrixXcd rho = r / code_weight;
    const int d = static_cast<int>(rho.rows());
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
    if (d == 2) {
        for (int k = 0; k < 4; ++k) {
            const Eigen::Matrix2cd p = pauli(k);
            out += (p * rho).trace() * p / 2.0;
        }
        return out;
    }
    for (int j = 0; j < 4; ++j) {
        for (int k = 0; k < 4; ++k) {
            const Eigen::Matrix2cd pj = pauli(j);
            const Eigen::Matrix2cd pk = pauli(k);
            Eigen::Matrix4cd p;
            for (int r = 0; r < 4; ++r)
                for (int q = 0; q < 4; ++q) p(r, q) = pj(r / 2, q / 2) * pk(r % 2, q % 2);
            out += (p * rho).trace() * p / 4.0;
        }
    }
    return out;
}

LogicalSummary summarize(const Tally &t, const LogicalTarget &target) {
    LogicalSummary s;
    s.success = t.success();
    if (!(t.accepted > 0.0)) throw Error("circuits: empty accepted ensemble");
    const double c = t.values.size() > 0 ? t.values[0] : 0.0;
    const double o = t.values.size() > 1 ? t.values[1] : 0.0;
    s.leakage = 1.0 - c / t.accepted;
    s.overlap_infidelity = 1.0 - o / t.accepted;
    s.infidelity = c > 0.0 ? 1.0 - o / c : 1.0;
    if (c > 0.0 && t.matrix.size() > 0) {
        const Eigen::MatrixXcd rho = pauli_reconstruction(t.matrix, c);
        s.pauli_infidelity = 1.0 - (target.amplitudes.adjoint() * rho * target.amplitudes)(0, 0).real();
    } else {
        s.pauli_infidelity = 1.0;
    }
    return s;
}

int auto_depth(double jump_mass) {
    // Poisson mean from the probability of at least one jump.
    const double mu = -std::log1p(-std::clamp(jump_mass, 0.0, 1.0 - 1e-12));
    double term = std::exp(-mu);
    double cdf = term;
    int d = 0;
    while (true) {
        ++d;
        term *= mu / d;
        cdf += term;
        if (d >= 2 && 1.0 - cdf < 0.02) return d;
        if (d >= 8) return d;
    }
}

EstimatorResult run_circuit(const CompiledCircuit &c, const NoiseModel &model, const RunSettings &run) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!(run.loss_bias > 0.0)) throw Error("run: loss_bias must be > 0");
    EngineContext ctx(c.schedule, model);
    for (const auto &ch : ctx.channels) ctx.forced_bias.push_back(ch.kind == Channel::cavity_loss ? run.loss_bias : 1.0);
    const PathState start = PathState::start(c.schedule, StateVector::vacuum(c.schedule.layout));
    const LeafScorer scorer = logical_scorer(c.schedule, c.target);
    EstimatorOptions eo;
    eo.trajectories = run.trajectories;
    eo.depth = run.depth > 0 ? run.depth : auto_depth(enumerate_no_jump(ctx, start, {}).tree.jump_mass());
    eo.seed = run.seed;
    eo.stream = run.stream;
    eo.workers = run.workers;

    const auto infid = [&](const Tally &t) {
        return t.values.size() > 1 && t.values[0] > 0.0 ? 1.0 - t.values[1] / t.values[0] : 1.0;
    };
    const auto success = [](const Tally &t) { return t.success(); };
    const std::uint64_t boot_seed = run.seed ^ (0x5EEDULL + run.stream * 0x9E3779B97F4A7C15ULL);

    StratifiedResult r = stratified_estimate(ctx, start, scorer, eo);
    EstimatorResult out;
    while (true) {
        out.infidelity_ci = bootstrap_interval(r, infid, run.resamples, boot_seed);
        const double f = infid(r.mean());
        const bool grow = run.target_ci > 0.0 && run.trajectories > 0 && r.jump_mass > 0.0 &&
                          r.samples.size() + run.trajectories <= run.max_trajectories &&
                          !(0.5 * (out.infidelity_ci.hi - out.infidelity_ci.lo) < run.target_ci * f);
        if (!grow) break;
        eo.first_sample = r.samples.size();
        auto more = stratified_estimate(ctx, start, scorer, eo);
        r.samples.insert(r.samples.end(), std::make_move_iterator(more.samples.begin()),
                         std::make_move_iterator(more.samples.end()));
    }
    out.summary = summarize(r.mean(), c.target);
    out.success_ci = bootstrap_interval(r, success, run.resamples, boot_seed + 1);
    out.w0 = 1.0 - r.jump_mass;
    out.depth = eo.depth;
    out.trajectories = r.samples.size();
    out.pruned = r.pruned;
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

FitResult fit_power_law(const std::vector<double> &s, const std::vector<double> &f, const std::vector<double> &sigma) {
    const std::size_t n = s.size();
    if (n < 4 || f.size() != n || sigma.size() != n) throw Error("fit: need at least 4 points with uncertainties");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(s[i] > 0.0)) throw Error("fit: s must be positive");
        if (!(sigma[i] > 0.0)) throw Error("fit: uncertainties must be positive");
    }
    Eigen::VectorXd w(n), y(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[static_cast<Eigen::Index>(i)] = 1.0 / (sigma[i] * sigma[i]);
        y[static_cast<Eigen::Index>(i)] = f[i];
        x[static_cast<Eigen::Index>(i)] = s[i];
    }
    // For fixed c the model is linear in (a, b).
    auto linear = [&](double c, double &a, double &b) {
        Eigen::MatrixXd j(n, 2);
        j.col(0).setOnes();
        j.col(1) = x.array().pow(c).matrix();
        const Eigen::MatrixXd jtw = j.transpose() * w.asDiagonal();
        Eigen::Vector2d p = (jtw * j).ldlt().solve(jtw * y);
        a = p[0];
        b = p[1];
        if (b < 0.0) {
            b = 0.0;
            a = w.dot(y) / w.sum();
        }
        const Eigen::VectorXd r = y - (a + b * x.array().pow(c)).matrix();
        return r.dot(w.asDiagonal() * r);
    };
    FitResult out;
    double best = std::numeric_limits<double>::infinity();
    for (double c = 0.05; c <= 6.0 + 1e-12; c += 0.01) {
        double a = 0.0, b = 0.0;
        const double chi2 = linear(c, a, b);
        if (chi2 < best) {
            best = chi2;
            out.a = a;
            out.b = b;
            out.c = c;
        }
    }
    Eigen::Vector3d p(out.a, out.b, out.c);
    auto chi2_at = [&](const Eigen::Vector3d &q) {
        const Eigen::VectorXd r = y - (q[0] + q[1] * x.array().pow(q[2])).matrix();
        return r.dot(w.asDiagonal() * r);
    };
    auto jacobian = [&](const Eigen::Vector3d &q) {
        Eigen::MatrixXd j(n, 3);
        j.col(0).setOnes();
        j.col(1) = x.array().pow(q[2]).matrix();
        j.col(2) = (q[1] * x.array().pow(q[2]) * x.array().log()).matrix();
        return j;
    };
    double chi2 = chi2_at(p);
    int it = 0;
    for (; it < 200; ++it) {
        const Eigen::MatrixXd j = jacobian(p);
        const Eigen::VectorXd r = y - (p[0] + p[1] * x.array().pow(p[2])).matrix();
        const Eigen::Matrix3d jtj = j.transpose() * w.asDiagonal() * j;
        const Eigen::Vector3d step = jtj.ldlt().solve(j.transpose() * w.asDiagonal() * r);
        if (!step.allFinite()) break;
        // Step halving keeps Gauss-Newton from overshooting when c is poorly determined.
        double lambda = 1.0;
        Eigen::Vector3d next = p + step;
        double next_chi2 = chi2_at(next);
        while (!(next_chi2 <= chi2) && lambda > 1e-6) {
            lambda *= 0.5;
            next = p + lambda * step;
            next_chi2 = chi2_at(next);
        }
        if (!(next_chi2 <= chi2)) break;
        const bool small = (lambda * step).cwiseAbs().maxCoeff() <= 1e-13 * (1.0 + p.cwiseAbs().maxCoeff());
        p = next;
        chi2 = next_chi2;
        if (small || chi2 == 0.0) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged && it < 200) out.converged = true;  // no further decrease possible
    out.a = p[0];
    out.b = p[1];
    out.c = p[2];
    out.residual = std::sqrt(chi2);
    const Eigen::MatrixXd j = jacobian(p);
    const Eigen::Matrix3d cov = (j.transpose() * w.asDiagonal() * j).inverse();
    out.sa = std::sqrt(std::max(0.0, cov(0, 0)));
    out.sb = std::sqrt(std::max(0.0, cov(1, 1)));
    out.sc = std::sqrt(std::max(0.0, cov(2, 2)));
    std::ostringstream d;
    d << "iterations " << it << ", chi2 " << chi2;
    out.diagnostics = d.str();
    if (!std::isfinite(out.c) || !std::isfinite(out.sc)) out.converged = false;
    return out;
}

AuditReport fault_injection_audit(const CompiledCircuit &c, const NoiseModel &model, int time_points, int workers) {
    if (time_points < 1) throw Error("audit: need at least one injection time");
    const Schedule &s = c.schedule;
    const std::size_t modes = s.layout->num_modes();
    const EngineContext quiet(s, noiseless(modes));
    auto channels = active_channels(*s.layout, model);
    std::erase_if(channels, [&](const JumpChannel &ch) {
        return ch.mode >= 0 && std::find(c.register_modes.begin(), c.register_modes.end(), ch.mode) !=
                                   c.register_modes.end();
    });
    const PathState start = PathState::start(s, StateVector::vacuum(s.layout));
    const LeafScorer scorer = logical_scorer(s, c.target);

    AuditReport rep;
    rep.baseline_infidelity = c.noiseless_infidelity;
    rep.bound = c.noiseless_infidelity + 10.0 * std::exp(-2 * s.alpha * s.alpha) + 1e-8;

    struct Job {
        std::size_t pc;
        double time;
    };
    std::vector<Job> jobs;
    for (std::size_t pc = 0; pc < s.program.size(); ++pc) {
        const auto *seg = std::get_if<Segment>(&s.program[pc]);
        if (!seg) continue;
        for (int k = 0; k < time_points; ++k)
            jobs.push_back({pc, seg->duration * (k + 0.5) / time_points});
    }
    std::vector<std::vector<AuditRow>> rows(jobs.size());
    parallel_for(jobs.size(), workers, [&](std::size_t i) {
        const Job &job = jobs[i];
        const auto &seg = std::get<Segment>(s.program[job.pc]);
        const auto stopped = advance_no_jump(quiet, start, job.pc, job.time);
        for (const auto &ch : channels) {
            AuditRow row;
            row.pc = job.pc;
            row.segment = seg.label;
            row.time = job.time;
            row.channel = ch.name();
            Tally t;
            double with_e = 0.0;
            double faulted = 0.0;
            for (const auto &st : stopped) {
                PathState hit = st;
                apply_jump(hit.psi, ch);
                const double w = hit.psi.norm_squared();
                if (!(w > 1e-30)) continue;
                row.fault_weight += w;
                const auto e = enumerate_no_jump(quiet, hit, scorer, true);
                t.add(e.tally);
                faulted += e.tally.total;
                for (const auto &leaf : e.leaves)
                    if (leaf.herald.find('e') != std::string::npos) with_e += leaf.weight;
            }
            if (faulted > 0.0) {
                row.accepted = t.accepted / faulted;
                row.heralded_e = with_e / faulted;
            }
            // Leaked weight has no code-space overlap; it counts as a loss of
            // acceptance, not as a logical error.
            if (t.accepted > 0.0 && t.values.size() > 1) {
                row.contribution = t.values[0] - t.values[1];  // normalized below
                row.infidelity = row.contribution / t.accepted;
            }
            rows[i].push_back(row);
        }
    });
    std::map<std::string, double> peak;
    for (const auto &r : rows)
        for (const auto &row : r) peak[row.channel] = std::max(peak[row.channel], row.fault_weight);
    for (auto &r : rows)
        for (auto &row : r) {
            const double p = peak[row.channel];
            row.contribution = p > 0.0 ? row.contribution / p : 0.0;
            rep.worst = std::max(rep.worst, row.contribution);
            rep.rows.push_back(std::move(row));
        }
    rep.passed = rep.worst <= rep.bound;
    return rep;
}

}  // namespace catprep
