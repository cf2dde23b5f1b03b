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
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "catprep/hilbert.hpp"

namespace catprep {

/// Pending logical Pauli corrections, one (x, z) pair per logical qubit.
class PauliFrame {
  public:
    PauliFrame() = default;
    explicit PauliFrame(std::size_t qubits) : x_(qubits, 0), z_(qubits, 0) {}

    std::size_t size() const { return x_.size(); }
    bool x(std::size_t q) const { return x_.at(q) != 0; }
    bool z(std::size_t q) const { return z_.at(q) != 0; }
    void toggle_x(std::size_t q) { x_.at(q) ^= 1; }
    void toggle_z(std::size_t q) { z_.at(q) ^= 1; }

    PauliFrame &operator^=(const PauliFrame &o);
    bool operator==(const PauliFrame &) const = default;
    std::string str() const;

  private:
    std::vector<std::uint8_t> x_;
    std::vector<std::uint8_t> z_;
};

/// Drive teeth selected by the total photon number over `modes`.
struct Comb {
    std::vector<int> modes;
    /// phase_by_sum[s] = drive phase for teeth with photon sum s.
    std::vector<std::optional<double>> phase_by_sum;

    std::optional<double> phase(int sum) const {
        if (sum < 0 || static_cast<std::size_t>(sum) >= phase_by_sum.size()) return std::nullopt;
        return phase_by_sum[static_cast<std::size_t>(sum)];
    }
};

/// H = sum_{k in modes} (chi_f,k |f><f| + chi_e,k |e><e|) n_k. Empty `modes`
/// is a plain idle.
struct DispersiveGenerator {
    std::vector<int> modes;
};

/// H = -(omega/2) sum_teeth (e^{i phi} |f><g| + h.c.) (x) |n><n|, written in
/// the frame of each tone.
struct DriveGenerator {
    double omega = 0.0;
    Comb comb;
    /// When >= 0 and that qubit carries a pending X, every tooth phase is
    /// negated (classical feed-forward of a rotation angle).
    int frame_qubit = -1;
};

struct Segment {
    double duration = 0.0;  // us
    std::variant<DispersiveGenerator, DriveGenerator> generator;
    std::string label;
};

struct ModeUnitary {
    int mode = 0;
    std::shared_ptr<const DenseOp> matrix;
    std::string label;
    /// Only column 0 is meaningful: the mode must be parked in the vacuum.
    /// Used for heralded preparations that are repeated until they succeed.
    bool from_vacuum = false;
};

struct AncillaUnitary {
    Eigen::Matrix3cd matrix;
    std::string label;
};

struct FrameToggle {
    int qubit = 0;
    bool x = false;
    bool z = false;
};

struct Branch {
    /// retry: a heralded preparation failed cleanly and would be repeated;
    /// the weight is removed from the success denominator.
    enum class Kind { next, discard, jump, retry };
    Kind kind = Kind::next;
    int target = -1;     // label id while building, program counter after build
    std::string record;  // appended to the herald; empty means the outcome symbol
    std::vector<FrameToggle> frame;

    static Branch next(std::string record = {}) { return Branch{Kind::next, -1, std::move(record), {}}; }
    static Branch discard(std::string record = {}) { return Branch{Kind::discard, -1, std::move(record), {}}; }
    static Branch go(int label, std::string record = {}) { return Branch{Kind::jump, label, std::move(record), {}}; }
    static Branch retry(std::string record = {}) { return Branch{Kind::retry, -1, std::move(record), {}}; }
    Branch &toggle_x(int q) {
        frame.push_back({q, true, false});
        return *this;
    }
};

/// Projective ancilla readout in {g, e, f} followed by an ideal reset to g.
struct Measure {
    std::string label;
    std::array<Branch, kAncillaLevels> on;  // indexed by reported level
};

/// Brings a parked mode live in its vacuum.
struct Activate {
    int mode = 0;
};

/// Traces a mode out by reading it in the displaced Fock basis D(beta)|k>
/// and parks it. Outcomes are not part of the herald.
struct Release {
    int mode = 0;
    cplx beta{0.0, 0.0};
    std::shared_ptr<const DenseOp> basis;  // column k = D(beta)|k>
};

struct Goto {
    int target = -1;
};

using Instruction = std::variant<Segment, ModeUnitary, AncillaUnitary, Measure, Activate, Release, Goto>;

struct Schedule {
    LayoutPtr layout;
    std::vector<Instruction> program;
    /// Logical qubits tracked in the Pauli frame.
    int logical_qubits = 0;
    /// Mode holding each logical qubit once the program ends.
    std::vector<int> output_modes;
    /// Cat amplitude of the code the program targets.
    double alpha = 0.0;
    std::string name;

    /// Sum of all segment durations in the program (an upper bound on any
    /// single path, since routed paths skip some segments).
    double duration() const;
    std::size_t count_segments() const;
};

class ScheduleBuilder {
  public:
    explicit ScheduleBuilder(LayoutPtr layout);

    const SystemLayout &layout() const { return *layout_; }
    const LayoutPtr &layout_ptr() const { return layout_; }

    int new_label();
    void place(int label);

    void segment(Segment s);
    void mode_unitary(int mode, std::shared_ptr<const DenseOp> m, std::string label);
    /// Puts a parked mode into `ket` (normalized).
    void prepare(int mode, const ModeKet &ket, std::string label);
    void ancilla_unitary(const Eigen::Matrix3cd &m, std::string label);
    void measure(std::string label, Branch on_g, Branch on_e, Branch on_f);
    void activate(int mode);
    void release(int mode, cplx beta);
    void go(int label);

    /// Cached D(beta) on `mode`.
    std::shared_ptr<const DenseOp> displacement(int mode, cplx beta);

    Schedule build(int logical_qubits, std::vector<int> output_modes, double alpha, std::string name) const;

  private:
    LayoutPtr layout_;
    std::vector<Instruction> program_;
    std::vector<int> label_pc_;
    std::map<std::tuple<int, double, double>, std::shared_ptr<const DenseOp>> displacements_;
};

/// exp(-i theta/2 (cos(phi) sx + sin(phi) sy)) on the {g, f} pair; e untouched.
Eigen::Matrix3cd ancilla_rotation(double theta, double phi = 0.0);

}  // namespace catprep
