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

#include <string>
#include <vector>

#include "catprep/engine.hpp"
#include "catprep/protocol.hpp"

namespace catprep {

struct CompileError : Error {
    using Error::Error;
};

/// Ideal logical state over one or two cat qubits, qubit 0 most significant.
struct LogicalTarget {
    Eigen::VectorXcd amplitudes;

    int qubits() const;
    /// Normalizes; throws on a zero vector or a length other than 2 or 4.
    static LogicalTarget from(Eigen::VectorXcd v);
};

LogicalTarget bell_phase_target();
/// cos(theta)|00> + i e^{i phi} sin(theta)|11>.
LogicalTarget psi_target(double theta, double phi);

/// Two-qubit logical gates in the diag(1, e^{i theta}) convention.
struct LogicalGate {
    enum class Kind { z, zz, h } kind;
    int a = 0;
    int b = -1;
    double theta = 0.0;
};
Eigen::Matrix4cd logical_unitary(const std::vector<LogicalGate> &gates);

/// Physical-level settings shared by every experiment.
struct DeviceSettings {
    double alpha = 2.6;
    double chi_f = 2 * 3.14159265358979323846 * 2.0;  // rad/us
    double chi_e = 2 * 3.14159265358979323846 * 2.0;
    // 0: default_truncation(alpha), and readout_truncation(alpha) for modes
    // read out by measure_x. A positive value is used for every mode.
    int truncation = 0;
    ProtocolOptions protocol;
};

/// Device noise used when the config does not override it, per cavity.
NoiseModel default_noise(std::size_t num_modes);

struct CompiledCircuit {
    Schedule schedule;
    LogicalTarget target;
    std::vector<LogicalGate> gates;
    /// Noiseless accepted-state infidelity and acceptance found by the
    /// compile check.
    double noiseless_infidelity = 0.0;
    double noiseless_success = 0.0;
    /// Bookkeeping modes that only hold a classical result; the fault audit
    /// does not inject on them.
    std::vector<int> register_modes;
};

/// Allowed noiseless infidelity for a circuit with `teleports` X readouts.
double compile_tolerance(double alpha, int teleports);

/// (|00> + e^{i pi/4}|11>)/sqrt(2) from three cavities. Throws CompileError
/// if the noiseless check fails.
CompiledCircuit compile_bell_phase(const DeviceSettings &dev);
/// cos(theta)|00> + i e^{i phi} sin(theta)|11>, theta in [0, pi/2].
CompiledCircuit compile_psi(double theta, double phi, const DeviceSettings &dev);
/// Single-cavity preparation of diag(1, e^{-i pi/4})|+> without error
/// detection, for a two-level ancilla.
CompiledCircuit compile_snap_baseline(const DeviceSettings &dev);

/// Audit circuits for the gate set, each on |+> inputs and closed by the
/// usual terminal parity checks: "parity" (an extra check), "z" (Z(pi/4)),
/// "zz" (ZZ(pi/2)), "measure_x" (readout copied into a noiseless register
/// cavity holding |0>, so a wrong result flips it) and "hadamard".
CompiledCircuit compile_gadget(const std::string &name, const DeviceSettings &dev);
const std::vector<std::string> &gadget_names();

/// Noise model adjustments the baseline assumes (unheralded f -> g decay).
NoiseModel baseline_noise(const NoiseModel &model);

/// Code amplitudes of an accepted leaf, one vector per ancilla level, with
/// the Pauli frame already applied.
std::vector<Eigen::VectorXcd> code_amplitudes(const PathState &leaf, const Schedule &schedule,
                                              const std::vector<ModeKet> &zero, const std::vector<ModeKet> &one);

/// Scorer filling Tally::values = {C, O} and Tally::matrix = R where, summed
/// over accepted leaves, C is the code-space weight, O the weight on the
/// target and R the unnormalized logical density matrix.
LeafScorer logical_scorer(const Schedule &schedule, const LogicalTarget &target);

struct LogicalSummary {
    double infidelity = 0.0;          // 1 - O/C, code-normalized
    double overlap_infidelity = 0.0;  // 1 - O/A, leakage counted as error
    double leakage = 0.0;             // 1 - C/A
    double pauli_infidelity = 0.0;    // from the 16 logical Pauli expectations
    double success = 0.0;             // A / (1 - retried)
};
LogicalSummary summarize(const Tally &t, const LogicalTarget &target);

/// Logical density matrix rebuilt from its Pauli expectations.
Eigen::MatrixXcd pauli_reconstruction(const Eigen::MatrixXcd &r, double code_weight);

struct RunSettings {
    std::size_t trajectories = 2000;
    /// When > 0, batches of `trajectories` are added until the infidelity
    /// CI half-width is below target_ci * f_L or max_trajectories is reached.
    double target_ci = 0.0;
    std::size_t max_trajectories = 0;
    /// Jump orders resolved before plain sampling; 0 picks the smallest
    /// depth >= 2 whose Poisson tail beyond it is below 0.02.
    int depth = 0;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    int workers = 1;
    std::size_t resamples = 1000;
    /// Forced jumps pick cavity loss this many times more often than its
    /// intensity share, with likelihood reweighting.
    double loss_bias = 8.0;
};

/// Depth rule used when RunSettings::depth is 0, given the probability of at
/// least one jump.
int auto_depth(double jump_mass);

struct EstimatorResult {
    LogicalSummary summary;
    Interval infidelity_ci;
    Interval success_ci;
    double w0 = 0.0;  // zero-jump probability
    int depth = 0;
    std::size_t trajectories = 0;
    double pruned = 0.0;
    double wall_seconds = 0.0;
};

EstimatorResult run_circuit(const CompiledCircuit &c, const NoiseModel &model, const RunSettings &run);

/// Weighted fit of f = a + b s^c.
struct FitResult {
    double a = 0.0, b = 0.0, c = 0.0;
    double sa = 0.0, sb = 0.0, sc = 0.0;
    double residual = 0.0;  // weighted residual norm
    bool converged = false;
    std::string diagnostics;
};
FitResult fit_power_law(const std::vector<double> &s, const std::vector<double> &f, const std::vector<double> &sigma);

/// One single-fault injection: `channel` fires once at `time` inside
/// segment `pc`; everything else is noiseless.
struct AuditRow {
    std::size_t pc = 0;
    std::string segment;
    double time = 0.0;
    std::string channel;
    double fault_weight = 0.0;  // squared norm of L psi summed over branches
    double accepted = 0.0;      // accepted share of the faulted weight
    double heralded_e = 0.0;    // share whose record contains an e
    double infidelity = 0.0;    // (C - O) / A over accepted faulted branches
    /// Accepted wrong weight (C - O) of the faulted state divided by the
    /// channel's largest fault weight on the grid. Equals P(accepted and
    /// wrong | fault) where the fault is most likely and shrinks with the
    /// fault probability elsewhere. This is the audited quantity.
    double contribution = 0.0;
};
struct AuditReport {
    double baseline_infidelity = 0.0;
    double bound = 0.0;
    std::vector<AuditRow> rows;
    double worst = 0.0;  // largest contribution
    bool passed = false;
};
AuditReport fault_injection_audit(const CompiledCircuit &c, const NoiseModel &model, int time_points,
                                  int workers = 1);

}  // namespace catprep
