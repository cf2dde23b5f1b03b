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

#include "catprep/hilbert.hpp"

#include <cmath>
#include <random>

#include <boost/math/special_functions/laguerre.hpp>
#include <gtest/gtest.h>

namespace catprep {
namespace {

LayoutPtr make_layout(std::vector<int> truncations) {
    std::vector<ModeSpec> modes;
    std::vector<Coupling> couplings;
    for (int n : truncations) {
        modes.push_back({n, "m" + std::to_string(modes.size())});
        couplings.push_back({-1.0, -0.5});
    }
    return std::make_shared<const SystemLayout>(modes, couplings);
}

ModeKet random_ket(int n, std::mt19937_64 &rng) {
    std::normal_distribution<double> g;
    ModeKet v(n);
    for (int i = 0; i < n; ++i) v(i) = cplx(g(rng), g(rng));
    return v.normalized();
}

// <m|D(b)|n> for m >= n from the associated Laguerre form.
cplx displacement_element(int m, int n, cplx b) {
    const double x = std::norm(b);
    const double pref = std::exp(0.5 * (std::lgamma(n + 1.0) - std::lgamma(m + 1.0)) - 0.5 * x);
    return pref * std::pow(b, m - n) *
           boost::math::laguerre(static_cast<unsigned>(n), static_cast<unsigned>(m - n), x);
}

TEST(Coherent, MatchesPoissonAmplitudes) {
    const ModeSpec space{40, "a"};
    const cplx beta(1.3, -0.7);
    const ModeKet v = coherent_state(space, beta);
    for (int n = 0; n < 25; ++n) {
        const cplx want = std::exp(-0.5 * std::norm(beta) - 0.5 * std::lgamma(n + 1.0)) * std::pow(beta, n);
        EXPECT_NEAR(std::abs(v(n) - want), 0.0, 1e-12) << n;
    }
    EXPECT_NEAR(v.squaredNorm(), 1.0, 1e-14);
}

TEST(Coherent, TruncationGuardThrows) {
    const ModeSpec space{20, "a"};
    EXPECT_THROW(coherent_state(space, 3.0), TruncationError);
    EXPECT_NO_THROW(coherent_state(space, 1.0));
    EXPECT_THROW(cat_state(space, 3.0, CatWord::zero), TruncationError);
}

TEST(Displacement, MatchesLaguerreElements) {
    const ModeSpec space{60, "a"};
    for (cplx b : {cplx(0.4, 0.0), cplx(1.1, 0.6), cplx(-2.0, 1.0)}) {
        const DenseOp d = displacement_matrix(space, b);
        for (int m = 0; m < 12; ++m) {
            for (int n = 0; n <= m; ++n) {
                const cplx want = displacement_element(m, n, b);
                EXPECT_NEAR(std::abs(d(m, n) - want), 0.0, 1e-10) << m << "," << n;
                // Upper triangle through D(b)^dag = D(-b).
                const cplx want_t = displacement_element(m, n, -b);
                EXPECT_NEAR(std::abs(d(n, m) - std::conj(want_t)), 0.0, 1e-10);
            }
        }
    }
}

TEST(Displacement, UnitaryAndInverse) {
    const ModeSpec space{36, "a"};
    const cplx b(1.7, -0.9);
    const DenseOp d = displacement_matrix(space, b);
    const DenseOp dinv = displacement_matrix(space, -b);
    EXPECT_LT((d.adjoint() * d - DenseOp::Identity(36, 36)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LT((d * dinv - DenseOp::Identity(36, 36)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_TRUE(displacement_op(space, b).flags_hold(1e-10));
}

TEST(Displacement, VacuumToCoherent) {
    const ModeSpec space{40, "a"};
    const cplx b(-1.2, 0.8);
    const ModeKet v = displacement_matrix(space, b) * fock_state(space, 0);
    EXPECT_NEAR(std::norm(coherent_state(space, b).dot(v)), 1.0, 1e-12);
}

class CatTest : public ::testing::TestWithParam<double> {};

TEST_P(CatTest, SupportAndNorm) {
    const double alpha = GetParam();
    const ModeSpec space{default_truncation(alpha), "a"};
    const ModeKet z = cat_state(space, alpha, CatWord::zero);
    const ModeKet o = cat_state(space, alpha, CatWord::one);
    EXPECT_NEAR(z.squaredNorm(), 1.0, 1e-14);
    EXPECT_NEAR(o.squaredNorm(), 1.0, 1e-14);
    EXPECT_NEAR(std::abs(z.dot(o)), 0.0, 1e-15);
    for (int n = 0; n < space.truncation; ++n) {
        if (n % 4 != 0) EXPECT_EQ(z(n), cplx(0.0)) << n;
        if (n % 4 != 2) EXPECT_EQ(o(n), cplx(0.0)) << n;
    }
}

TEST_P(CatTest, PlusIsEvenCatOfCoherentStates) {
    const double alpha = GetParam();
    const ModeSpec space{default_truncation(alpha), "a"};
    ModeKet want = coherent_state(space, alpha) + coherent_state(space, -alpha);
    want.normalize();
    EXPECT_NEAR(std::norm(want.dot(cat_state(space, alpha, CatWord::plus))), 1.0, 1e-12);
    ModeKet want_m = coherent_state(space, cplx(0, alpha)) + coherent_state(space, cplx(0, -alpha));
    want_m.normalize();
    EXPECT_NEAR(std::norm(want_m.dot(cat_state(space, alpha, CatWord::minus))), 1.0, 1e-12);
}

TEST_P(CatTest, MeanPhotonNumberClosedForm) {
    const double alpha = GetParam();
    const ModeSpec space{default_truncation(alpha), "a"};
    const double x = alpha * alpha;
    const double n0 = x * (std::sinh(x) - std::sin(x)) / (std::cosh(x) + std::cos(x));
    const double n1 = x * (std::sinh(x) + std::sin(x)) / (std::cosh(x) - std::cos(x));
    const auto ops = mode_operators(space);
    const ModeKet z = cat_state(space, alpha, CatWord::zero);
    const ModeKet o = cat_state(space, alpha, CatWord::one);
    EXPECT_NEAR(z.dot(ops.n.matrix * z).real(), n0, 1e-9);
    EXPECT_NEAR(o.dot(ops.n.matrix * o).real(), n1, 1e-9);
    // The codewords differ in mean photon number at order alpha^2 e^{-alpha^2},
    // with coefficient at most 4 sqrt(2).
    EXPECT_LT(std::abs(n0 - n1), 4.0 * std::sqrt(2.0) * x * std::exp(-x) * 1.05);
}

TEST_P(CatTest, PlusOverlapWithZero) {
    const double alpha = GetParam();
    const ModeSpec space{default_truncation(alpha), "a"};
    const double x = alpha * alpha;
    const ModeKet p = cat_state(space, alpha, CatWord::plus);
    const ModeKet z = cat_state(space, alpha, CatWord::zero);
    EXPECT_NEAR(std::norm(z.dot(p)), 0.5 + std::cos(x) / (2.0 * std::cosh(x)), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Alphas, CatTest, ::testing::Values(1.5, 2.0, 2.3, 2.6, 2.9));

TEST(StateVector, ActivateAndParkRoundTrip) {
    auto layout = make_layout({6, 5, 7});
    std::mt19937_64 rng(7);
    const ModeKet a = random_ket(6, rng);
    const ModeKet c = random_ket(7, rng);
    StateVector psi = StateVector::product(layout, {a, {}, c}, Level::e);
    EXPECT_FALSE(psi.is_live(1));
    EXPECT_EQ(psi.size(), 6u * 7u * 3u);
    psi.activate(1);
    EXPECT_EQ(psi.size(), 6u * 5u * 7u * 3u);
    EXPECT_NEAR(psi.norm_squared(), 1.0, 1e-14);
    EXPECT_THROW(psi.activate(1), LayoutError);
    const StateVector full = StateVector::product(layout, {a, fock_state(layout->mode(1), 0), c}, Level::e);
    EXPECT_NEAR(std::abs(inner(full, psi)), 1.0, 1e-14);

    psi.project_and_park(0, a);
    EXPECT_NEAR(psi.norm_squared(), 1.0, 1e-14);
    const auto pops = psi.level_populations();
    EXPECT_NEAR(pops[1], 1.0, 1e-14);
}

TEST(StateVector, IndexDecodeAreInverse) {
    auto layout = make_layout({4, 3});
    StateVector psi(layout, {4, 3});
    std::vector<int> fock(2);
    for (std::size_t m = 0; m < psi.mode_space_size(); ++m) {
        psi.decode(m, fock);
        EXPECT_EQ(psi.index(fock, Level::f), m * 3 + 2);
    }
}

TEST(StateVector, ModeMatrixAgreesWithEmbeddedOperator) {
    auto layout = make_layout({5, 4});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    StateVector psi(layout, {5, 4});
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = cplx(g(rng), g(rng));
    psi.normalize();
    const ModeSpec &space = layout->mode(1);
    const DenseOp d = displacement_matrix(space, cplx(0.3, 0.2));
    LinearOp op;
    op.matrix = d.sparseView();
    const Eigen::VectorXcd want = embed(op, Target::mode(1), *layout).matrix * to_full_vector(psi);
    StateVector got = psi;
    apply_mode_matrix(got, 1, d);
    EXPECT_LT((to_full_vector(got) - want).cwiseAbs().maxCoeff(), 1e-13);

    Eigen::Matrix3cd r = Eigen::Matrix3cd::Zero();
    r(0, 2) = r(2, 0) = 1.0;
    r(1, 1) = cplx(0, 1);
    LinearOp aop;
    aop.matrix = Eigen::MatrixXcd(r).sparseView();
    const Eigen::VectorXcd want_a = embed(aop, Target::ancilla(), *layout).matrix * to_full_vector(psi);
    StateVector got_a = psi;
    apply_ancilla_matrix(got_a, r);
    EXPECT_LT((to_full_vector(got_a) - want_a).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(StateVector, FullVectorRoundTrip) {
    auto layout = make_layout({3, 4});
    std::mt19937_64 rng(11);
    StateVector psi = StateVector::product(layout, {random_ket(3, rng), {}}, Level::f);
    const Eigen::VectorXcd v = to_full_vector(psi);
    EXPECT_EQ(v.size(), 36);
    const StateVector back = from_full_vector(layout, v);
    EXPECT_NEAR(fidelity(back, from_full_vector(layout, v)), 1.0, 1e-14);
    EXPECT_NEAR(v.squaredNorm(), 1.0, 1e-14);
}

TEST(Operators, FlagsAreHonest) {
    const ModeSpec space{12, "a"};
    const auto ops = mode_operators(space);
    EXPECT_TRUE(ops.n.flags_hold());
    EXPECT_TRUE(ops.even.flags_hold());
    EXPECT_TRUE(ops.odd.flags_hold());
    LinearOp lying = ops.a;
    lying.hermitian = true;
    EXPECT_FALSE(lying.flags_hold());
}

TEST(Layout, RejectsBadInput) {
    EXPECT_THROW(SystemLayout({{1, "a"}}, {{-1.0, 0.0}}), LayoutError);
    EXPECT_THROW(SystemLayout({{10, "a"}}, {}), LayoutError);
}

}  // namespace
}  // namespace catprep
