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

#include "catprep/schedule.hpp"

#include <cmath>

namespace catprep {

PauliFrame &PauliFrame::operator^=(const PauliFrame &o) {
    if (o.size() != size()) throw Error("frame: size mismatch");
    for (std::size_t q = 0; q < size(); ++q) {
        x_[q] ^= o.x_[q];
        z_[q] ^= o.z_[q];
    }
    return *this;
}

std::string PauliFrame::str() const {
    std::string s;
    for (std::size_t q = 0; q < size(); ++q) {
        if (x_[q] && z_[q]) {
            s += 'Y';
        } else if (x_[q]) {
            s += 'X';
        } else if (z_[q]) {
            s += 'Z';
        } else {
            s += 'I';
        }
    }
    return s;
}

double Schedule::duration() const {
    double t = 0.0;
    for (const auto &ins : program) {
        if (const auto *s = std::get_if<Segment>(&ins)) t += s->duration;
    }
    return t;
}

std::size_t Schedule::count_segments() const {
    std::size_t n = 0;
    for (const auto &ins : program) n += std::holds_alternative<Segment>(ins) ? 1 : 0;
    return n;
}

ScheduleBuilder::ScheduleBuilder(LayoutPtr layout) : layout_(std::move(layout)) {}

int ScheduleBuilder::new_label() {
    label_pc_.push_back(-1);
    return static_cast<int>(label_pc_.size()) - 1;
}

void ScheduleBuilder::place(int label) { label_pc_.at(static_cast<std::size_t>(label)) = static_cast<int>(program_.size()); }

void ScheduleBuilder::segment(Segment s) {
    if (!(s.duration >= 0.0)) throw Error("schedule: segment duration must be >= 0");
    program_.emplace_back(std::move(s));
}

void ScheduleBuilder::mode_unitary(int mode, std::shared_ptr<const DenseOp> m, std::string label) {
    program_.emplace_back(ModeUnitary{mode, std::move(m), std::move(label), false});
}

void ScheduleBuilder::prepare(int mode, const ModeKet &ket, std::string label) {
    const int n = layout_->mode(static_cast<std::size_t>(mode)).truncation;
    if (ket.size() != n || !(ket.norm() > 0.0)) throw Error("schedule: prepared ket does not fit the mode");
    auto m = std::make_shared<DenseOp>(DenseOp::Identity(n, n));
    m->col(0) = ket.normalized();
    program_.emplace_back(ModeUnitary{mode, std::move(m), std::move(label), true});
}

void ScheduleBuilder::ancilla_unitary(const Eigen::Matrix3cd &m, std::string label) {
    program_.emplace_back(AncillaUnitary{m, std::move(label)});
}

void ScheduleBuilder::measure(std::string label, Branch on_g, Branch on_e, Branch on_f) {
    program_.emplace_back(Measure{std::move(label), {std::move(on_g), std::move(on_e), std::move(on_f)}});
}

void ScheduleBuilder::activate(int mode) { program_.emplace_back(Activate{mode}); }

void ScheduleBuilder::release(int mode, cplx beta) {
    const auto &space = layout_->mode(static_cast<std::size_t>(mode));
    auto d = displacement(mode, beta);
    program_.emplace_back(Release{mode, beta, d});
    (void)space;
}

void ScheduleBuilder::go(int label) { program_.emplace_back(Goto{label}); }

std::shared_ptr<const DenseOp> ScheduleBuilder::displacement(int mode, cplx beta) {
    const auto &space = layout_->mode(static_cast<std::size_t>(mode));
    const auto key = std::make_tuple(space.truncation, beta.real(), beta.imag());
    auto it = displacements_.find(key);
    if (it != displacements_.end()) return it->second;
    require_truncation(space.truncation, beta, "schedule displacement");
    auto m = std::make_shared<const DenseOp>(displacement_matrix(space, beta));
    displacements_.emplace(key, m);
    return m;
}

Schedule ScheduleBuilder::build(int logical_qubits, std::vector<int> output_modes, double alpha, std::string name) const {
    Schedule s;
    s.layout = layout_;
    s.program = program_;
    s.logical_qubits = logical_qubits;
    s.output_modes = std::move(output_modes);
    s.alpha = alpha;
    s.name = std::move(name);
    auto resolve = [&](int label) {
        const int pc = label_pc_.at(static_cast<std::size_t>(label));
        if (pc < 0) throw Error("schedule: label used but never placed");
        return pc;
    };
    for (auto &ins : s.program) {
        if (auto *m = std::get_if<Measure>(&ins)) {
            for (auto &b : m->on) {
                if (b.kind == Branch::Kind::jump) b.target = resolve(b.target);
            }
        } else if (auto *g = std::get_if<Goto>(&ins)) {
            g->target = resolve(g->target);
        }
    }
    return s;
}

Eigen::Matrix3cd ancilla_rotation(double theta, double phi) {
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    const cplx i{0.0, 1.0};
    Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
    m(0, 0) = c;
    m(2, 2) = c;
    m(1, 1) = 1.0;
    // -i s (cos phi sx + sin phi sy): <g|.|f> = -i s e^{-i phi}, <f|.|g> = -i s e^{i phi}
    m(0, 2) = -i * s * std::exp(-i * phi);
    m(2, 0) = -i * s * std::exp(i * phi);
    return m;
}

}  // namespace catprep
