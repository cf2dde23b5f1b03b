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

#include <array>
#include <string>
#include <vector>

#include "catprep/hilbert.hpp"

namespace catprep {

struct ValidationError : Error {
    using Error::Error;
};

/// Rates in 1/us.
struct ModeNoise {
    double kappa_loss = 0.0;  // jump operator a
    double kappa_deph = 0.0;  // jump operator a^dag a
};

struct AncillaNoise {
    double gamma_fe = 0.0;   // jump operator |e><f|
    double gamma_phi = 0.0;  // jump operator eps_e|e><e| + eps_f|f><f|
    double eps_e = 1.0;
    double eps_f = 2.0;
    /// Optional |g><e| decay for sensitivity studies; off by default.
    double gamma_eg = 0.0;
    /// Two-level ancilla: the f level decays straight to g, so decay is
    /// not heralded. Used only by the non-detecting baseline.
    bool decay_to_ground = false;
};

struct NoiseModel {
    std::vector<ModeNoise> modes;
    AncillaNoise ancilla;
    double multiplier = 1.0;
    /// readout(reported, actual); identity means ideal readout.
    Eigen::Matrix3d readout = Eigen::Matrix3d::Identity();

    /// Throws ValidationError on negative rates or a non-stochastic readout.
    void validate() const;
    bool ideal_readout() const { return readout.isIdentity(0.0); }

    double loss_rate(std::size_t mode) const { return multiplier * modes.at(mode).kappa_loss; }
    double dephasing_rate(std::size_t mode) const { return multiplier * modes.at(mode).kappa_deph; }
};

/// Multiplies every rate by s (composes multiplicatively).
NoiseModel scaled(const NoiseModel &model, double s);

/// Zero noise on `num_modes` cavities.
NoiseModel noiseless(std::size_t num_modes);

enum class Channel { cavity_loss, cavity_dephasing, ancilla_decay, ancilla_dephasing, ancilla_decay_eg };
std::string channel_name(Channel c);

struct JumpChannel {
    Channel kind;
    int mode = -1;       // cavity channels only
    double rate = 0.0;   // already scaled by the multiplier
    double eps_e = 0.0;  // ancilla dephasing weights
    double eps_f = 0.0;
    Level decay_target = Level::e;

    std::string name() const;
};

/// Channels with nonzero rate, in a fixed order (per mode: loss, dephasing;
/// then ancilla decay, dephasing, optional e->g).
std::vector<JumpChannel> active_channels(const SystemLayout &layout, const NoiseModel &model);

/// Applies the bare jump operator L (without sqrt(rate)).
void apply_jump(StateVector &psi, const JumpChannel &ch);

/// rate * <psi|L^dag L|psi>.
double jump_intensity(const StateVector &psi, const JumpChannel &ch);

struct JumpOperator {
    JumpChannel channel;
    LinearOp op;  // sqrt(rate) * L on the full space
};
std::vector<JumpOperator> jump_operators(const SystemLayout &layout, const NoiseModel &model);

/// sum_k L_k^dag L_k splits into per-mode and per-level diagonal pieces:
/// Gamma(n_0..n_K, level) = sum_k mode[k][n_k] + level[level].
struct DampingTable {
    std::vector<std::vector<double>> mode;
    std::array<double, kAncillaLevels> level{0.0, 0.0, 0.0};
};
DampingTable damping_table(const SystemLayout &layout, const NoiseModel &model);

}  // namespace catprep
