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
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace catprep {

using cplx = std::complex<double>;
using ModeKet = Eigen::VectorXcd;
using DenseOp = Eigen::MatrixXcd;
using SparseOp = Eigen::SparseMatrix<cplx>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncationError : Error {
    using Error::Error;
};
struct LayoutError : Error {
    using Error::Error;
};

/// Ancilla transmon levels. `e` is never driven on purpose; any population
/// found there at readout marks a detected fault.
enum class Level : int { g = 0, e = 1, f = 2 };
inline constexpr int kAncillaLevels = 3;

char level_symbol(Level l);

struct ModeSpec {
    int truncation = 40;  // Fock states 0..truncation-1
    std::string label;
};

/// Dispersive shifts of the active ancilla on one mode, in rad/us.
struct Coupling {
    double chi_f = 0.0;
    double chi_e = 0.0;
};

class SystemLayout {
  public:
    SystemLayout(std::vector<ModeSpec> modes, std::vector<Coupling> couplings);

    std::size_t num_modes() const { return modes_.size(); }
    const ModeSpec &mode(std::size_t k) const { return modes_.at(k); }
    const Coupling &coupling(std::size_t k) const { return couplings_.at(k); }
    const std::vector<ModeSpec> &modes() const { return modes_; }

    /// Dimension with every mode at full truncation.
    std::size_t full_dimension() const;

  private:
    std::vector<ModeSpec> modes_;
    std::vector<Coupling> couplings_;
};

using LayoutPtr = std::shared_ptr<const SystemLayout>;

/// Truncation used when none is given: keeps the coherent-state tail
/// below 1e-9 for the amplitudes swept here.
int default_truncation(double alpha);

/// Truncation for a mode read out by coherent-state discrimination. The
/// readout displaces the far component of the cat to |2 alpha>, and a photon
/// lost there must still act on an untruncated coherent state:
/// |2 alpha|^2 + 3|2 alpha| + 4, and never below default_truncation.
int readout_truncation(double alpha);

/// |beta|^2 + 5|beta| + 10 <= N.
bool truncation_adequate(int truncation, cplx beta);
void require_truncation(int truncation, cplx beta, const char *what);

/// Amplitudes over (modes..., ancilla) with the ancilla index fastest.
///
/// Each mode is either live (dimension = its truncation) or parked in the
/// vacuum (dimension 1). Parking lets the three-cavity circuits carry only
/// the cavities that currently hold information.
class StateVector {
  public:
    StateVector(LayoutPtr layout, std::vector<int> dims);

    /// All modes parked, ancilla in `level`.
    static StateVector vacuum(LayoutPtr layout, Level level = Level::g);
    /// Product state; `kets[k]` empty means parked vacuum for mode k.
    static StateVector product(LayoutPtr layout, const std::vector<ModeKet> &kets, Level level = Level::g);

    const SystemLayout &layout() const { return *layout_; }
    const LayoutPtr &layout_ptr() const { return layout_; }
    const std::vector<int> &dims() const { return dims_; }
    int dim(std::size_t mode) const { return dims_[mode]; }
    bool is_live(std::size_t mode) const { return dims_[mode] > 1; }

    std::size_t size() const { return amps_.size(); }
    std::size_t mode_space_size() const { return amps_.size() / kAncillaLevels; }
    std::size_t stride(std::size_t mode) const { return strides_[mode]; }

    std::span<cplx> amplitudes() { return amps_; }
    std::span<const cplx> amplitudes() const { return amps_; }
    cplx &operator[](std::size_t i) { return amps_[i]; }
    const cplx &operator[](std::size_t i) const { return amps_[i]; }

    std::size_t index(std::span<const int> fock, Level level) const;
    /// Decodes a mode-space index (index / 3) into Fock numbers.
    void decode(std::size_t mode_index, std::span<int> fock) const;

    double norm_squared() const;
    void scale(cplx c);
    void normalize();

    /// Probability mass on each ancilla level.
    std::array<double, kAncillaLevels> level_populations() const;

    /// Brings a parked mode live in its vacuum.
    void activate(std::size_t mode);
    /// Projects mode onto `basis_ket` (a vector over the live Fock space)
    /// and parks it. Returns nothing; the caller reads the norm.
    void project_and_park(std::size_t mode, const ModeKet &basis_ket);

    /// Same layout, same live dims.
    bool same_shape(const StateVector &other) const;

  private:
    void rebuild_strides();

    LayoutPtr layout_;
    std::vector<int> dims_;
    std::vector<std::size_t> strides_;
    std::vector<cplx> amps_;
};

cplx inner(const StateVector &a, const StateVector &b);

/// Sparse operator plus the structural properties it claims.
struct LinearOp {
    SparseOp matrix;
    bool unitary = false;
    bool hermitian = false;
    bool diagonal = false;

    /// Checks every claimed flag at tolerance `tol`.
    bool flags_hold(double tol = 1e-10) const;
};

ModeKet fock_state(const ModeSpec &space, int n);
ModeKet coherent_state(const ModeSpec &space, cplx beta);

/// exp(beta a^dag - beta^* a) on the truncated space, via scaling and
/// squaring of the truncated generator.
DenseOp displacement_matrix(const ModeSpec &space, cplx beta);
LinearOp displacement_op(const ModeSpec &space, cplx beta);

enum class CatWord { zero, one, plus, minus };
ModeKet cat_state(const ModeSpec &space, double alpha, CatWord which);

struct ModeOperators {
    LinearOp a;
    LinearOp n;
    LinearOp even;
    LinearOp odd;
};
ModeOperators mode_operators(const ModeSpec &space);

/// Embedding target: a mode index, or the ancilla.
struct Target {
    static constexpr int kAncilla = -1;
    int index = kAncilla;
    static Target mode(int k) { return Target{k}; }
    static Target ancilla() { return Target{kAncilla}; }
};

/// Lifts a single-factor operator to the full (all modes live) space.
LinearOp embed(const LinearOp &op, Target target, const SystemLayout &layout);

/// Dense vector over the full space (all modes live) for oracle use.
Eigen::VectorXcd to_full_vector(const StateVector &psi);
StateVector from_full_vector(LayoutPtr layout, const Eigen::VectorXcd &v);

/// |<target|psi>|^2 / <psi|psi>.
double fidelity(const StateVector &psi, const StateVector &target);
/// <target|rho|target>.
double fidelity(const Eigen::MatrixXcd &rho, const Eigen::VectorXcd &target);

/// Applies a dense matrix to one live mode in place.
void apply_mode_matrix(StateVector &psi, std::size_t mode, const DenseOp &m);
/// Applies a 3x3 matrix to the ancilla factor in place.
void apply_ancilla_matrix(StateVector &psi, const Eigen::Matrix3cd &m);

}  // namespace catprep
