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

#include <gtest/gtest.h>

#include <boost/math/distributions/poisson.hpp>
#include <cmath>
#include <numbers>
#include <random>

namespace catprep {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix4cd kron(const Eigen::Matrix2cd &a, const Eigen::Matrix2cd &b) {
    Eigen::Matrix4cd m;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) m.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return m;
}

Eigen::Matrix2cd phase(double theta) {
    Eigen::Matrix2cd z = Eigen::Matrix2cd::Identity();
    z(1, 1) = std::polar(1.0, theta);
    return z;
}

Eigen::Matrix2cd hadamard() {
    Eigen::Matrix2cd h;
    h << 1, 1, 1, -1;
    return h / std::sqrt(2.0);
}

double overlap(const Eigen::Vector4cd &a, const Eigen::VectorXcd &b) { return std::norm(a.dot(b)); }

TEST(LogicalUnitary, MatchesKroneckerProducts) {
    const Eigen::Matrix2cd id = Eigen::Matrix2cd::Identity();
    Eigen::Matrix4cd zz = Eigen::Matrix4cd::Identity();
    zz(1, 1) = zz(2, 2) = std::polar(1.0, 0.7);
    const Eigen::Matrix4cd expect = kron(id, hadamard()) * kron(phase(-0.3), id) * zz;
    const std::vector<LogicalGate> gates{{LogicalGate::Kind::zz, 0, 1, 0.7},
                                         {LogicalGate::Kind::z, 0, -1, -0.3},
                                         {LogicalGate::Kind::h, 1, -1, 0.0}};
    EXPECT_LT((logical_unitary(gates) - expect).norm(), 1e-13);
}

TEST(LogicalUnitary, RejectsBadOperands) {
    EXPECT_THROW(logical_unitary({{LogicalGate::Kind::zz, 0, 0, 1.0}}), Error);
    EXPECT_THROW(logical_unitary({{LogicalGate::Kind::z, 2, -1, 1.0}}), Error);
}

TEST(Targets, BellAndPsiAmplitudes) {
    const auto bell = bell_phase_target().amplitudes;
    EXPECT_NEAR(std::abs(bell[0]), 1 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(std::arg(bell[3]), kPi / 4, 1e-15);
    const auto psi = psi_target(kPi / 4, 0.0).amplitudes;
    Eigen::Vector4cd expect(1 / std::sqrt(2.0), 0, 0, cplx(0, 1 / std::sqrt(2.0)));
    EXPECT_NEAR(overlap(expect, psi), 1.0, 1e-15);
    EXPECT_THROW(LogicalTarget::from(Eigen::VectorXcd::Zero(4)), Error);
    EXPECT_THROW(LogicalTarget::from(Eigen::VectorXcd::Ones(3)), Error);
}

TEST(Compile, BellGateListPreparesTarget) {
    const auto c = compile_bell_phase(DeviceSettings{});
    Eigen::Vector4cd zero = Eigen::Vector4cd::Zero();
    zero[0] = 1.0;
    // The gate list starts from |00>; each preparation is recorded as an H.
    ASSERT_EQ(c.gates[0].kind, LogicalGate::Kind::h);
    EXPECT_NEAR(overlap(logical_unitary(c.gates) * zero, c.target.amplitudes), 1.0, 1e-12);
}

TEST(Compile, BellNoiselessCheck) {
    const auto c = compile_bell_phase(DeviceSettings{});
    EXPECT_LE(c.noiseless_infidelity, compile_tolerance(2.6, 1));
    EXPECT_GT(c.noiseless_success, 0.99);
    // The readout misfire falls off as (1 + 2 alpha^2) e^{-2 alpha^2}.
    DeviceSettings big;
    big.alpha = 3.0;
    EXPECT_LT(compile_bell_phase(big).noiseless_infidelity, 1e-5);
}

TEST(Compile, PsiThetaZeroIsProductState) {
    DeviceSettings dev;
    dev.alpha = 3.0;
    const auto c = compile_psi(0.0, 0.0, dev);
    EXPECT_NEAR(std::norm(c.target.amplitudes[0]), 1.0, 1e-15);
    EXPECT_LT(c.noiseless_infidelity, 1e-5);
    for (const auto &g : c.gates) EXPECT_FALSE(g.kind == LogicalGate::Kind::zz && std::abs(g.theta) > 0.0);
}

TEST(Compile, PsiQuarterTurn) {
    const auto c = compile_psi(kPi / 4, 0.0, DeviceSettings{});
    Eigen::Vector4cd zero = Eigen::Vector4cd::Zero();
    zero[0] = 1.0;
    Eigen::Vector4cd expect(1 / std::sqrt(2.0), 0, 0, cplx(0, 1 / std::sqrt(2.0)));
    EXPECT_NEAR(overlap(logical_unitary(c.gates) * zero, expect), 1.0, 1e-12);
    EXPECT_LE(c.noiseless_infidelity, compile_tolerance(2.6, 2));
}

TEST(Compile, RejectsOutOfRangeAngles) {
    EXPECT_THROW(compile_psi(-0.1, 0.0, DeviceSettings{}), CompileError);
    EXPECT_THROW(compile_psi(2.0, 0.0, DeviceSettings{}), CompileError);
    EXPECT_THROW(compile_psi(0.5, 2 * kPi, DeviceSettings{}), CompileError);
}

TEST(Compile, SnapBaselineIsExactUpToCodeOverlap) {
    const auto c = compile_snap_baseline(DeviceSettings{});
    EXPECT_LT(c.noiseless_infidelity, 1e-5);
    EXPECT_EQ(c.schedule.layout->num_modes(), 1u);
}

TEST(Compile, ReadoutModesGetLargerTruncation) {
    const auto c = compile_bell_phase(DeviceSettings{});
    const auto &layout = *c.schedule.layout;
    EXPECT_EQ(layout.mode(0).truncation, default_truncation(2.6));
    EXPECT_EQ(layout.mode(1).truncation, readout_truncation(2.6));
    EXPECT_EQ(layout.mode(2).truncation, default_truncation(2.6));
    EXPECT_GE(readout_truncation(2.6), 4 * 2.6 * 2.6 + 6 * 2.6 + 4);
}

ModeKet codeword(const Schedule &s, int mode, CatWord w) {
    return cat_state(s.layout->mode(static_cast<std::size_t>(mode)), s.alpha, w);
}

Tally score(const CompiledCircuit &c, const StateVector &psi) {
    PathState leaf = PathState::start(c.schedule, psi);
    Tally t;
    t.accepted = t.total = psi.norm_squared();
    logical_scorer(c.schedule, c.target)(leaf, t.total, t);
    return t;
}

StateVector embedded(const CompiledCircuit &c, const Eigen::Vector4cd &xi) {
    const Schedule &s = c.schedule;
    const int m0 = s.output_modes[0];
    const int m1 = s.output_modes[1];
    StateVector out(s.layout, [&] {
        std::vector<int> dims(s.layout->num_modes(), 1);
        dims[static_cast<std::size_t>(m0)] = s.layout->mode(static_cast<std::size_t>(m0)).truncation;
        dims[static_cast<std::size_t>(m1)] = s.layout->mode(static_cast<std::size_t>(m1)).truncation;
        return dims;
    }());
    for (int k = 0; k < 4; ++k) {
        std::vector<ModeKet> kets(s.layout->num_modes());
        kets[static_cast<std::size_t>(m0)] = codeword(s, m0, k >> 1 ? CatWord::one : CatWord::zero);
        kets[static_cast<std::size_t>(m1)] = codeword(s, m1, k & 1 ? CatWord::one : CatWord::zero);
        const StateVector part = StateVector::product(s.layout, kets);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += xi[k] * part[i];
    }
    return out;
}

TEST(LogicalFidelity, ExactTargetScoresOne) {
    const auto c = compile_bell_phase(DeviceSettings{});
    const Tally t = score(c, embedded(c, c.target.amplitudes));
    const auto s = summarize(t, c.target);
    EXPECT_NEAR(s.infidelity, 0.0, 1e-12);
    EXPECT_NEAR(s.pauli_infidelity, 0.0, 1e-12);
    EXPECT_NEAR(s.leakage, 0.0, 1e-12);
}

TEST(LogicalFidelity, ProductZeroAgainstBellIsHalf) {
    const auto c = compile_bell_phase(DeviceSettings{});
    const Tally t = score(c, embedded(c, Eigen::Vector4cd(1, 0, 0, 0)));
    EXPECT_NEAR(summarize(t, c.target).infidelity, 0.5, 1e-12);
    EXPECT_NEAR(summarize(t, c.target).pauli_infidelity, 0.5, 1e-12);
}

TEST(LogicalFidelity, PhotonLossLeavesTheCodeSpace) {
    const auto c = compile_bell_phase(DeviceSettings{});
    StateVector psi = embedded(c, c.target.amplitudes);
    JumpChannel loss;
    loss.kind = Channel::cavity_loss;
    loss.mode = c.schedule.output_modes[0];
    loss.rate = 1.0;
    apply_jump(psi, loss);
    ASSERT_GT(psi.norm_squared(), 1.0);
    const Tally t = score(c, psi);
    EXPECT_LT(t.values[0] / psi.norm_squared(), 1e-20);
    EXPECT_NEAR(summarize(t, c.target).leakage, 1.0, 1e-12);
}

TEST(LogicalFidelity, PauliReconstructionOfMixedStates) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int d : {2, 4}) {
        Eigen::MatrixXcd a(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) a(i, j) = cplx(g(rng), g(rng));
        const Eigen::MatrixXcd r = a * a.adjoint() * 0.3;
        const double tr = r.trace().real();
        EXPECT_LT((pauli_reconstruction(r, tr) - r / tr).norm(), 1e-12);
    }
    EXPECT_THROW(pauli_reconstruction(Eigen::Matrix2cd::Identity(), 0.0), Error);
}

TEST(Summarize, RetriesLeaveSuccessAlone) {
    Tally t;
    t.total = 1.0;
    t.retried = 0.2;
    t.accepted = 0.6;
    t.values = {0.6, 0.6};
    const auto s = summarize(t, LogicalTarget::from(Eigen::Vector2cd(1, 0)));
    EXPECT_NEAR(s.success, 0.75, 1e-15);
    EXPECT_NEAR(s.infidelity, 0.0, 1e-15);
}

std::vector<double> power_law(const std::vector<double> &s, double a, double b, double c) {
    std::vector<double> f;
    for (double x : s) f.push_back(a + b * std::pow(x, c));
    return f;
}

TEST(FitPowerLaw, RecoversExactSyntheticData) {
    const std::vector<double> s{1, 2, 3, 4, 6, 8};
    const auto f = power_law(s, 1.6e-4, 1.8e-4, 2.12);
    std::vector<double> sigma;
    for (double v : f) sigma.push_back(0.1 * v);
    const auto fit = fit_power_law(s, f, sigma);
    ASSERT_TRUE(fit.converged) << fit.diagnostics;
    EXPECT_NEAR(fit.a, 1.6e-4, 1e-6);
    EXPECT_NEAR(fit.b, 1.8e-4, 1e-6);
    EXPECT_NEAR(fit.c, 2.12, 1e-6);
    EXPECT_LT(fit.residual, 1e-6);
}

TEST(FitPowerLaw, LinearData) {
    const std::vector<double> s{1, 2, 3, 5, 8};
    const auto f = power_law(s, 0.0, 3e-3, 1.0);
    const auto fit = fit_power_law(s, f, std::vector<double>(s.size(), 1e-4));
    ASSERT_TRUE(fit.converged);
    EXPECT_NEAR(fit.c, 1.0, 1e-6);
    EXPECT_NEAR(fit.a, 0.0, 1e-9);
}

TEST(FitPowerLaw, NoisyDataWithinThreeSigma) {
    const std::vector<double> s{1, 2, 3, 4, 6, 8};
    const auto clean = power_law(s, 1.6e-4, 1.8e-4, 2.12);
    std::mt19937_64 rng(2026);
    std::normal_distribution<double> g;
    int inside = 0;
    double mean_c = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> f, sigma;
        for (double v : clean) {
            f.push_back(v * (1 + 0.05 * g(rng)));
            sigma.push_back(0.05 * v);
        }
        const auto fit = fit_power_law(s, f, sigma);
        ASSERT_TRUE(fit.converged) << fit.diagnostics;
        ASSERT_GT(fit.sc, 0.0);
        if (std::abs(fit.c - 2.12) <= 3 * fit.sc) ++inside;
        mean_c += fit.c / 100;
    }
    EXPECT_GE(inside, 97);
    EXPECT_NEAR(mean_c, 2.12, 0.05);
}

TEST(FitPowerLaw, RejectsBadInput) {
    EXPECT_THROW(fit_power_law({1, 2, 3}, {1, 2, 3}, {1, 1, 1}), Error);
    EXPECT_THROW(fit_power_law({0, 1, 2, 3}, {1, 2, 3, 4}, {1, 1, 1, 1}), Error);
    EXPECT_THROW(fit_power_law({1, 2, 3, 4}, {1, 2, 3, 4}, {1, 0, 1, 1}), Error);
}

TEST(AutoDepth, PoissonTailRule) {
    double last = 0;
    for (double mass : {1e-4, 0.01, 0.1, 0.3, 0.6, 0.8, 0.95}) {
        const int d = auto_depth(mass);
        EXPECT_GE(d, last);
        last = d;
        const double mu = -std::log1p(-mass);
        const boost::math::poisson_distribution<> p(mu);
        if (d < 8) EXPECT_LT(1 - boost::math::cdf(p, d), 0.02) << mass;
        if (d > 2) EXPECT_GE(1 - boost::math::cdf(p, d - 1), 0.02) << mass;
    }
    EXPECT_EQ(auto_depth(0.0), 2);
    EXPECT_EQ(auto_depth(1.0), 8);
}

// The Z gadget on one cavity: small enough for estimator statistics.
struct SmallRun {
    CompiledCircuit c = compile_gadget("z", DeviceSettings{});
    NoiseModel noise = [] {
        NoiseModel m = default_noise(1);
        m.multiplier = 20.0;
        return m;
    }();
};

TEST(RunCircuit, DeterministicAndWorkerIndependent) {
    SmallRun sr;
    RunSettings r;
    r.trajectories = 40;
    r.resamples = 200;
    const auto a = run_circuit(sr.c, sr.noise, r);
    const auto b = run_circuit(sr.c, sr.noise, r);
    r.workers = 3;
    const auto w = run_circuit(sr.c, sr.noise, r);
    for (const auto *x : {&b, &w}) {
        EXPECT_EQ(a.summary.infidelity, x->summary.infidelity);
        EXPECT_EQ(a.summary.success, x->summary.success);
        EXPECT_EQ(a.infidelity_ci.lo, x->infidelity_ci.lo);
        EXPECT_EQ(a.infidelity_ci.hi, x->infidelity_ci.hi);
    }
    r.seed = 2;
    EXPECT_NE(run_circuit(sr.c, sr.noise, r).summary.infidelity, a.summary.infidelity);
}

TEST(RunCircuit, GrowingRunMatchesOneLongRun) {
    SmallRun sr;
    RunSettings grow;
    grow.trajectories = 20;
    grow.target_ci = 1e-9;  // unreachable: grows to the cap
    grow.max_trajectories = 60;
    grow.resamples = 200;
    const auto g = run_circuit(sr.c, sr.noise, grow);
    EXPECT_EQ(g.trajectories, 60u);
    RunSettings once = grow;
    once.trajectories = 60;
    once.target_ci = 0.0;
    const auto o = run_circuit(sr.c, sr.noise, once);
    EXPECT_DOUBLE_EQ(g.summary.infidelity, o.summary.infidelity);
    EXPECT_DOUBLE_EQ(g.summary.success, o.summary.success);
}

TEST(RunCircuit, LossBiasIsUnbiased) {
    SmallRun sr;
    RunSettings r;
    r.trajectories = 600;
    r.resamples = 400;
    r.loss_bias = 1.0;
    const auto plain = run_circuit(sr.c, sr.noise, r);
    r.loss_bias = 8.0;
    r.seed = 99;
    const auto biased = run_circuit(sr.c, sr.noise, r);
    const double f0 = plain.summary.infidelity;
    const double f1 = biased.summary.infidelity;
    const double h0 = 0.5 * (plain.infidelity_ci.hi - plain.infidelity_ci.lo);
    const double h1 = 0.5 * (biased.infidelity_ci.hi - biased.infidelity_ci.lo);
    ASSERT_GT(f0, 0.0);
    EXPECT_LT(std::abs(f0 - f1), 2.0 * std::hypot(h0, h1)) << f0 << " vs " << f1;
    EXPECT_NEAR(plain.summary.success, biased.summary.success,
                0.5 * (plain.success_ci.hi - plain.success_ci.lo + biased.success_ci.hi - biased.success_ci.lo));
}

TEST(RunCircuit, NoiselessRunIsExact) {
    SmallRun sr;
    RunSettings r;
    r.trajectories = 10;
    const auto res = run_circuit(sr.c, noiseless(1), r);
    EXPECT_NEAR(res.summary.infidelity, sr.c.noiseless_infidelity, 1e-12);
    EXPECT_EQ(res.w0, 1.0);
}

TEST(Gadgets, AllCompile) {
    for (const auto &name : gadget_names()) {
        const auto c = compile_gadget(name, DeviceSettings{});
        EXPECT_LE(c.noiseless_infidelity, compile_tolerance(2.6, 1)) << name;
        EXPECT_GT(c.noiseless_success, 0.99) << name;
    }
    EXPECT_THROW(compile_gadget("cnot", DeviceSettings{}), CompileError);
}

TEST(Gadgets, PrepBaselineIsTheCodeOverlapDefect) {
    // |+_c> from D(alpha)|0> is not exactly (|0_c> + |1_c>)/sqrt(2).
    const auto c = compile_gadget("parity", DeviceSettings{});
    const ModeSpec &space = c.schedule.layout->mode(0);
    const ModeKet plus = cat_state(space, 2.6, CatWord::plus);
    const cplx a0 = cat_state(space, 2.6, CatWord::zero).dot(plus);
    const cplx a1 = cat_state(space, 2.6, CatWord::one).dot(plus);
    const double expect = 1.0 - std::norm(a0 + a1) / 2.0 / (std::norm(a0) + std::norm(a1));
    EXPECT_NEAR(c.noiseless_infidelity, expect, 1e-9);
}

TEST(Audit, ZGadgetPassesAndDecayIsHeralded) {
    const auto c = compile_gadget("z", DeviceSettings{});
    const auto rep = fault_injection_audit(c, default_noise(1), 20);
    EXPECT_TRUE(rep.passed) << rep.worst << " > " << rep.bound;
    EXPECT_EQ(rep.bound, c.noiseless_infidelity + 10 * std::exp(-2 * 2.6 * 2.6) + 1e-8);
    int decay = 0, heralded = 0;
    for (const auto &row : rep.rows) {
        if (row.channel != "ancilla_decay" || row.segment.find("loop") == std::string::npos) continue;
        ++decay;
        if (row.heralded_e >= 0.99) ++heralded;
    }
    ASSERT_GT(decay, 0);
    EXPECT_GE(heralded, 0.99 * decay);
}

TEST(Audit, MeasureXSurvivesLossDuringReadout) {
    const auto c = compile_gadget("measure_x", DeviceSettings{});
    const auto rep = fault_injection_audit(c, default_noise(2), 20);
    EXPECT_TRUE(rep.passed) << rep.worst << " > " << rep.bound;
    for (const auto &row : rep.rows) {
        if (row.channel.rfind("cavity_loss", 0) != 0 || row.segment != "disc:S") continue;
        EXPECT_LT(row.contribution, 1e-6) << row.time;
    }
}

TEST(Audit, RejectsEmptyGrid) {
    const auto c = compile_gadget("z", DeviceSettings{});
    EXPECT_THROW(fault_injection_audit(c, default_noise(1), 0), Error);
}

}  // namespace
}  // namespace catprep
