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

#include "catprep/noise.hpp"

#include <random>

#include <gtest/gtest.h>

namespace catprep {
namespace {

LayoutPtr two_modes() {
    return std::make_shared<const SystemLayout>(std::vector<ModeSpec>{{5, "a"}, {4, "b"}},
                                                std::vector<Coupling>{{-1.0, -0.5}, {-0.8, -0.4}});
}

NoiseModel busy_model() {
    NoiseModel m;
    m.modes = {{0.01, 0.002}, {0.02, 0.003}};
    m.ancilla.gamma_fe = 0.05;
    m.ancilla.gamma_phi = 0.01;
    m.ancilla.gamma_eg = 0.03;
    return m;
}

StateVector random_state(const LayoutPtr &layout, std::uint64_t seed) {
    std::vector<int> dims;
    for (const auto &m : layout->modes()) dims.push_back(m.truncation);
    StateVector psi(layout, dims);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = cplx(g(rng), g(rng));
    psi.normalize();
    return psi;
}

TEST(NoiseModel, ScalingComposes) {
    const NoiseModel m = busy_model();
    const NoiseModel a = scaled(scaled(m, 2.0), 3.0);
    const NoiseModel b = scaled(m, 6.0);
    EXPECT_DOUBLE_EQ(a.multiplier, b.multiplier);
    EXPECT_DOUBLE_EQ(a.loss_rate(1), 6.0 * m.modes[1].kappa_loss);
    EXPECT_THROW(scaled(m, -1.0), ValidationError);
}

TEST(NoiseModel, ValidationRejectsBadFields) {
    NoiseModel m = busy_model();
    m.modes[0].kappa_loss = -1e-3;
    EXPECT_THROW(m.validate(), ValidationError);
    m = busy_model();
    m.readout(0, 0) = 0.9;
    EXPECT_THROW(m.validate(), ValidationError);
    m.readout(2, 0) = 0.1;
    EXPECT_NO_THROW(m.validate());
}

TEST(NoiseModel, ZeroRatesAreOmitted) {
    auto layout = two_modes();
    NoiseModel m = noiseless(2);
    EXPECT_TRUE(active_channels(*layout, m).empty());
    m.ancilla.gamma_phi = 0.1;
    const auto ch = active_channels(*layout, m);
    ASSERT_EQ(ch.size(), 1u);
    EXPECT_EQ(ch[0].kind, Channel::ancilla_dephasing);
    EXPECT_EQ(ch[0].name(), "ancilla_dephasing");
}

TEST(Jumps, MatchDenseOperators) {
    auto layout = two_modes();
    const NoiseModel model = busy_model();
    const StateVector psi = random_state(layout, 5);
    const Eigen::VectorXcd v = to_full_vector(psi);
    const auto ops = jump_operators(*layout, model);
    ASSERT_EQ(ops.size(), 7u);
    for (const auto &j : ops) {
        const Eigen::VectorXcd want = j.op.matrix * v;
        StateVector got = psi;
        apply_jump(got, j.channel);
        const Eigen::VectorXcd g = std::sqrt(j.channel.rate) * to_full_vector(got);
        EXPECT_LT((g - want).cwiseAbs().maxCoeff(), 1e-13) << j.channel.name();
        EXPECT_NEAR(jump_intensity(psi, j.channel), want.squaredNorm(), 1e-14) << j.channel.name();
    }
}

TEST(Jumps, DampingTableIsSumOfLdagL) {
    auto layout = two_modes();
    const NoiseModel model = scaled(busy_model(), 1.7);
    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(60, 60);
    for (const auto &j : jump_operators(*layout, model)) {
        const Eigen::MatrixXcd l(j.op.matrix);
        sum += l.adjoint() * l;
    }
    const Eigen::MatrixXcd off = sum - Eigen::MatrixXcd(sum.diagonal().asDiagonal());
    EXPECT_LT(off.cwiseAbs().maxCoeff(), 1e-15);
    const auto table = damping_table(*layout, model);
    const StateVector shape(layout, {5, 4});
    std::vector<int> fock(2);
    for (std::size_t m = 0; m < shape.mode_space_size(); ++m) {
        shape.decode(m, fock);
        for (int l = 0; l < kAncillaLevels; ++l) {
            const double want = sum(static_cast<Eigen::Index>(m * 3 + static_cast<std::size_t>(l)),
                                    static_cast<Eigen::Index>(m * 3 + static_cast<std::size_t>(l)))
                                    .real();
            const double got = table.mode[0][static_cast<std::size_t>(fock[0])] +
                               table.mode[1][static_cast<std::size_t>(fock[1])] +
                               table.level[static_cast<std::size_t>(l)];
            EXPECT_NEAR(got, want, 1e-14);
        }
    }
}

TEST(Jumps, TwoLevelDecayGoesToGround) {
    auto layout = two_modes();
    NoiseModel m = noiseless(2);
    m.ancilla.gamma_fe = 1.0;
    m.ancilla.decay_to_ground = true;
    const auto ch = active_channels(*layout, m);
    ASSERT_EQ(ch.size(), 1u);
    StateVector psi = StateVector::vacuum(layout, Level::f);
    apply_jump(psi, ch[0]);
    EXPECT_NEAR(psi.level_populations()[0], 1.0, 1e-15);
}

TEST(Jumps, ParkedModeIsUntouchedByItsLossChannel) {
    auto layout = two_modes();
    NoiseModel m = noiseless(2);
    m.modes[0].kappa_loss = 1.0;
    const auto ch = active_channels(*layout, m);
    const StateVector psi = StateVector::vacuum(layout);
    EXPECT_EQ(jump_intensity(psi, ch[0]), 0.0);
}

}  // namespace
}  // namespace catprep
