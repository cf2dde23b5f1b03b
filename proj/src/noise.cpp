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

#include <cmath>

namespace catprep {

void NoiseModel::validate() const {
    auto check = [](double v, const std::string &field) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("noise: " + field + " must be a finite rate >= 0");
    };
    for (std::size_t k = 0; k < modes.size(); ++k) {
        check(modes[k].kappa_loss, "modes[" + std::to_string(k) + "].kappa_loss");
        check(modes[k].kappa_deph, "modes[" + std::to_string(k) + "].kappa_deph");
    }
    check(ancilla.gamma_fe, "ancilla.gamma_fe");
    check(ancilla.gamma_phi, "ancilla.gamma_phi");
    check(ancilla.gamma_eg, "ancilla.gamma_eg");
    check(multiplier, "multiplier");
    if (!std::isfinite(ancilla.eps_e) || !std::isfinite(ancilla.eps_f)) {
        throw ValidationError("noise: dephasing weights must be finite");
    }
    for (int c = 0; c < 3; ++c) {
        double col = 0.0;
        for (int r = 0; r < 3; ++r) {
            if (readout(r, c) < 0.0) throw ValidationError("noise: readout matrix entries must be >= 0");
            col += readout(r, c);
        }
        if (std::abs(col - 1.0) > 1e-12) throw ValidationError("noise: readout matrix columns must sum to 1");
    }
}

NoiseModel scaled(const NoiseModel &model, double s) {
    if (!(s >= 0.0)) throw ValidationError("noise: multiplier must be >= 0");
    NoiseModel m = model;
    m.multiplier = model.multiplier * s;
    return m;
}

NoiseModel noiseless(std::size_t num_modes) {
    NoiseModel m;
    m.modes.assign(num_modes, ModeNoise{});
    return m;
}

std::string channel_name(Channel c) {
    switch (c) {
        case Channel::cavity_loss:
            return "cavity_loss";
        case Channel::cavity_dephasing:
            return "cavity_dephasing";
        case Channel::ancilla_decay:
            return "ancilla_decay";
        case Channel::ancilla_dephasing:
            return "ancilla_dephasing";
        case Channel::ancilla_decay_eg:
            return "ancilla_decay_eg";
    }
    return "unknown";
}

std::string JumpChannel::name() const {
    if (mode >= 0) return channel_name(kind) + "[" + std::to_string(mode) + "]";
    return channel_name(kind);
}

std::vector<JumpChannel> active_channels(const SystemLayout &layout, const NoiseModel &model) {
    if (model.modes.size() != layout.num_modes()) throw ValidationError("noise: mode count differs from layout");
    model.validate();
    std::vector<JumpChannel> out;
    for (std::size_t k = 0; k < layout.num_modes(); ++k) {
        if (model.loss_rate(k) > 0.0) out.push_back({Channel::cavity_loss, static_cast<int>(k), model.loss_rate(k)});
        if (model.dephasing_rate(k) > 0.0) {
            out.push_back({Channel::cavity_dephasing, static_cast<int>(k), model.dephasing_rate(k)});
        }
    }
    const auto &a = model.ancilla;
    const double s = model.multiplier;
    if (s * a.gamma_fe > 0.0) {
        JumpChannel ch{Channel::ancilla_decay, -1, s * a.gamma_fe};
        ch.decay_target = a.decay_to_ground ? Level::g : Level::e;
        out.push_back(ch);
    }
    if (s * a.gamma_phi > 0.0 && (a.eps_e != 0.0 || a.eps_f != 0.0)) {
        JumpChannel ch{Channel::ancilla_dephasing, -1, s * a.gamma_phi};
        ch.eps_e = a.eps_e;
        ch.eps_f = a.eps_f;
        out.push_back(ch);
    }
    if (s * a.gamma_eg > 0.0) out.push_back({Channel::ancilla_decay_eg, -1, s * a.gamma_eg});
    return out;
}

void apply_jump(StateVector &psi, const JumpChannel &ch) {
    auto amps = psi.amplitudes();
    switch (ch.kind) {
        case Channel::cavity_loss: {
            const auto k = static_cast<std::size_t>(ch.mode);
            if (!psi.is_live(k)) {
                psi.scale(0.0);
                return;
            }
            const std::size_t n = static_cast<std::size_t>(psi.dim(k));
            const std::size_t inner = psi.stride(k);
            const std::size_t outer = psi.size() / (n * inner);
            for (std::size_t o = 0; o < outer; ++o) {
                cplx *blk = amps.data() + o * n * inner;
                for (std::size_t j = 0; j + 1 < n; ++j) {
                    const double s = std::sqrt(static_cast<double>(j + 1));
                    for (std::size_t i = 0; i < inner; ++i) blk[j * inner + i] = s * blk[(j + 1) * inner + i];
                }
                for (std::size_t i = 0; i < inner; ++i) blk[(n - 1) * inner + i] = 0.0;
            }
            return;
        }
        case Channel::cavity_dephasing: {
            const auto k = static_cast<std::size_t>(ch.mode);
            if (!psi.is_live(k)) {
                psi.scale(0.0);
                return;
            }
            const std::size_t n = static_cast<std::size_t>(psi.dim(k));
            const std::size_t inner = psi.stride(k);
            for (std::size_t idx = 0; idx < psi.size(); ++idx) {
                amps[idx] *= static_cast<double>((idx / inner) % n);
            }
            return;
        }
        case Channel::ancilla_decay:
            for (std::size_t i = 0; i < amps.size(); i += kAncillaLevels) {
                const cplx f = amps[i + 2];
                amps[i] = 0.0;
                amps[i + 1] = 0.0;
                amps[i + 2] = 0.0;
                amps[i + static_cast<int>(ch.decay_target)] = f;
            }
            return;
        case Channel::ancilla_dephasing:
            for (std::size_t i = 0; i < amps.size(); i += kAncillaLevels) {
                amps[i] = 0.0;
                amps[i + 1] *= ch.eps_e;
                amps[i + 2] *= ch.eps_f;
            }
            return;
        case Channel::ancilla_decay_eg:
            for (std::size_t i = 0; i < amps.size(); i += kAncillaLevels) {
                amps[i] = amps[i + 1];
                amps[i + 1] = 0.0;
                amps[i + 2] = 0.0;
            }
            return;
    }
}

double jump_intensity(const StateVector &psi, const JumpChannel &ch) {
    const auto amps = psi.amplitudes();
    double s = 0.0;
    switch (ch.kind) {
        case Channel::cavity_loss:
        case Channel::cavity_dephasing: {
            const auto k = static_cast<std::size_t>(ch.mode);
            if (!psi.is_live(k)) return 0.0;
            const std::size_t n = static_cast<std::size_t>(psi.dim(k));
            const std::size_t inner = psi.stride(k);
            for (std::size_t idx = 0; idx < amps.size(); ++idx) {
                const double m = static_cast<double>((idx / inner) % n);
                s += (ch.kind == Channel::cavity_loss ? m : m * m) * std::norm(amps[idx]);
            }
            break;
        }
        case Channel::ancilla_decay:
            for (std::size_t i = 2; i < amps.size(); i += kAncillaLevels) s += std::norm(amps[i]);
            break;
        case Channel::ancilla_dephasing:
            for (std::size_t i = 0; i < amps.size(); i += kAncillaLevels) {
                s += ch.eps_e * ch.eps_e * std::norm(amps[i + 1]) + ch.eps_f * ch.eps_f * std::norm(amps[i + 2]);
            }
            break;
        case Channel::ancilla_decay_eg:
            for (std::size_t i = 1; i < amps.size(); i += kAncillaLevels) s += std::norm(amps[i]);
            break;
    }
    return ch.rate * s;
}

std::vector<JumpOperator> jump_operators(const SystemLayout &layout, const NoiseModel &model) {
    std::vector<JumpOperator> out;
    for (const auto &ch : active_channels(layout, model)) {
        LinearOp local;
        const double amp = std::sqrt(ch.rate);
        Target target = Target::ancilla();
        if (ch.mode >= 0) {
            const auto ops = mode_operators(layout.mode(static_cast<std::size_t>(ch.mode)));
            local = ch.kind == Channel::cavity_loss ? ops.a : ops.n;
            target = Target::mode(ch.mode);
        } else {
            std::vector<Eigen::Triplet<cplx>> t;
            switch (ch.kind) {
                case Channel::ancilla_decay:
                    t.emplace_back(static_cast<int>(ch.decay_target), 2, 1.0);
                    break;
                case Channel::ancilla_dephasing:
                    t.emplace_back(1, 1, ch.eps_e);
                    t.emplace_back(2, 2, ch.eps_f);
                    local.diagonal = local.hermitian = true;
                    break;
                case Channel::ancilla_decay_eg:
                    t.emplace_back(0, 1, 1.0);
                    break;
                default:
                    break;
            }
            local.matrix.resize(kAncillaLevels, kAncillaLevels);
            local.matrix.setFromTriplets(t.begin(), t.end());
        }
        local.matrix *= amp;
        local.unitary = false;
        out.push_back({ch, embed(local, target, layout)});
    }
    return out;
}

DampingTable damping_table(const SystemLayout &layout, const NoiseModel &model) {
    DampingTable t;
    for (const auto &ch : active_channels(layout, model)) {
        switch (ch.kind) {
            case Channel::cavity_loss:
            case Channel::cavity_dephasing: {
                const auto k = static_cast<std::size_t>(ch.mode);
                if (t.mode.empty()) {
                    t.mode.resize(layout.num_modes());
                    for (std::size_t j = 0; j < layout.num_modes(); ++j) {
                        t.mode[j].assign(static_cast<std::size_t>(layout.mode(j).truncation), 0.0);
                    }
                }
                for (std::size_t n = 0; n < t.mode[k].size(); ++n) {
                    const double m = static_cast<double>(n);
                    t.mode[k][n] += ch.rate * (ch.kind == Channel::cavity_loss ? m : m * m);
                }
                break;
            }
            case Channel::ancilla_decay:
                t.level[2] += ch.rate;
                break;
            case Channel::ancilla_dephasing:
                t.level[1] += ch.rate * ch.eps_e * ch.eps_e;
                t.level[2] += ch.rate * ch.eps_f * ch.eps_f;
                break;
            case Channel::ancilla_decay_eg:
                t.level[1] += ch.rate;
                break;
        }
    }
    if (t.mode.empty()) {
        t.mode.resize(layout.num_modes());
        for (std::size_t j = 0; j < layout.num_modes(); ++j) {
            t.mode[j].assign(static_cast<std::size_t>(layout.mode(j).truncation), 0.0);
        }
    }
    return t;
}

}  // namespace catprep
