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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace catprep {

char level_symbol(Level l) {
    switch (l) {
        case Level::g:
            return 'g';
        case Level::e:
            return 'e';
        case Level::f:
            return 'f';
    }
    return '?';
}

SystemLayout::SystemLayout(std::vector<ModeSpec> modes, std::vector<Coupling> couplings)
    : modes_(std::move(modes)), couplings_(std::move(couplings)) {
    if (couplings_.size() != modes_.size()) {
        throw LayoutError("layout: one coupling per mode required");
    }
    for (std::size_t k = 0; k < modes_.size(); ++k) {
        if (modes_[k].truncation < 2) {
            throw LayoutError("layout: mode '" + modes_[k].label + "' needs truncation >= 2");
        }
        if (couplings_[k].chi_f == 0.0) {
            throw LayoutError("layout: chi_f must be nonzero for mode '" + modes_[k].label + "'");
        }
    }
}

std::size_t SystemLayout::full_dimension() const {
    std::size_t d = kAncillaLevels;
    for (const auto &m : modes_) d *= static_cast<std::size_t>(m.truncation);
    return d;
}

int default_truncation(double alpha) {
    const double a = std::abs(alpha);
    return std::max(16, static_cast<int>(std::ceil(a * a + 6.0 * a + 10.0)));
}

int readout_truncation(double alpha) {
    const double b = 2.0 * std::abs(alpha);
    return std::max(default_truncation(alpha), static_cast<int>(std::ceil(b * b + 3.0 * b + 4.0)));
}

bool truncation_adequate(int truncation, cplx beta) {
    const double b = std::abs(beta);
    return b * b + 5.0 * b + 10.0 <= static_cast<double>(truncation) + 1e-12;
}

void require_truncation(int truncation, cplx beta, const char *what) {
    if (!truncation_adequate(truncation, beta)) {
        std::ostringstream os;
        os << what << ": truncation " << truncation << " too small for |beta|=" << std::abs(beta)
           << " (need |beta|^2 + 5|beta| + 10 <= N)";
        throw TruncationError(os.str());
    }
}

// ---------------------------------------------------------------------------
// StateVector

StateVector::StateVector(LayoutPtr layout, std::vector<int> dims) : layout_(std::move(layout)), dims_(std::move(dims)) {
    if (dims_.size() != layout_->num_modes()) throw LayoutError("state: dims do not match layout");
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (dims_[k] != 1 && dims_[k] != layout_->mode(k).truncation) {
            throw LayoutError("state: mode dimension must be 1 or the truncation");
        }
    }
    rebuild_strides();
}

void StateVector::rebuild_strides() {
    strides_.assign(dims_.size(), 0);
    std::size_t s = kAncillaLevels;
    for (std::size_t k = dims_.size(); k-- > 0;) {
        strides_[k] = s;
        s *= static_cast<std::size_t>(dims_[k]);
    }
    amps_.assign(s, cplx{0.0, 0.0});
}

StateVector StateVector::vacuum(LayoutPtr layout, Level level) {
    std::vector<int> dims(layout->num_modes(), 1);
    StateVector s(std::move(layout), std::move(dims));
    s.amps_[static_cast<int>(level)] = 1.0;
    return s;
}

StateVector StateVector::product(LayoutPtr layout, const std::vector<ModeKet> &kets, Level level) {
    if (kets.size() != layout->num_modes()) throw LayoutError("product: one ket (or empty) per mode");
    std::vector<int> dims(kets.size(), 1);
    for (std::size_t k = 0; k < kets.size(); ++k) {
        if (kets[k].size() == 0) continue;
        if (kets[k].size() != layout->mode(k).truncation) throw LayoutError("product: ket dimension mismatch");
        dims[k] = layout->mode(k).truncation;
    }
    StateVector s(std::move(layout), dims);
    std::vector<int> fock(dims.size());
    for (std::size_t m = 0; m < s.mode_space_size(); ++m) {
        s.decode(m, fock);
        cplx c = 1.0;
        for (std::size_t k = 0; k < dims.size(); ++k) {
            if (dims[k] > 1) c *= kets[k](fock[k]);
        }
        s.amps_[m * kAncillaLevels + static_cast<int>(level)] = c;
    }
    return s;
}

std::size_t StateVector::index(std::span<const int> fock, Level level) const {
    std::size_t i = static_cast<std::size_t>(level);
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (fock[k] < 0 || fock[k] >= dims_[k]) throw LayoutError("state: Fock index outside live space");
        i += strides_[k] * static_cast<std::size_t>(fock[k]);
    }
    return i;
}

void StateVector::decode(std::size_t mode_index, std::span<int> fock) const {
    for (std::size_t k = dims_.size(); k-- > 0;) {
        fock[k] = static_cast<int>(mode_index % static_cast<std::size_t>(dims_[k]));
        mode_index /= static_cast<std::size_t>(dims_[k]);
    }
}

double StateVector::norm_squared() const {
    double s = 0.0;
    for (const auto &a : amps_) s += std::norm(a);
    return s;
}

void StateVector::scale(cplx c) {
    for (auto &a : amps_) a *= c;
}

void StateVector::normalize() {
    const double n = norm_squared();
    if (n <= 0.0) throw Error("state: cannot normalize a zero vector");
    scale(1.0 / std::sqrt(n));
}

std::array<double, kAncillaLevels> StateVector::level_populations() const {
    std::array<double, kAncillaLevels> p{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < amps_.size(); ++i) p[i % kAncillaLevels] += std::norm(amps_[i]);
    return p;
}

void StateVector::activate(std::size_t mode) {
    if (is_live(mode)) throw LayoutError("activate: mode already live");
    const std::vector<cplx> old = std::move(amps_);
    const std::size_t inner = strides_[mode];
    dims_[mode] = layout_->mode(mode).truncation;
    rebuild_strides();
    const std::size_t n = static_cast<std::size_t>(dims_[mode]);
    const std::size_t outer = old.size() / inner;
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(old.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                    amps_.begin() + static_cast<std::ptrdiff_t>(o * n * inner));
    }
}

void StateVector::project_and_park(std::size_t mode, const ModeKet &basis_ket) {
    if (!is_live(mode)) throw LayoutError("park: mode is not live");
    const std::size_t n = static_cast<std::size_t>(dims_[mode]);
    if (static_cast<std::size_t>(basis_ket.size()) != n) throw LayoutError("park: basis ket dimension mismatch");
    const std::vector<cplx> old = std::move(amps_);
    const std::size_t inner = strides_[mode];
    dims_[mode] = 1;
    rebuild_strides();
    const std::size_t outer = old.size() / (inner * n);
    for (std::size_t o = 0; o < outer; ++o) {
        const cplx *src = old.data() + o * n * inner;
        cplx *dst = amps_.data() + o * inner;
        for (std::size_t j = 0; j < n; ++j) {
            const cplx w = std::conj(basis_ket(static_cast<Eigen::Index>(j)));
            if (w == cplx{0.0, 0.0}) continue;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[j * inner + i];
        }
    }
}

bool StateVector::same_shape(const StateVector &other) const {
    return layout_.get() == other.layout_.get() && dims_ == other.dims_;
}

cplx inner(const StateVector &a, const StateVector &b) {
    if (!a.same_shape(b)) throw LayoutError("inner: layout mismatch");
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

// ---------------------------------------------------------------------------
// Operators

bool LinearOp::flags_hold(double tol) const {
    const Eigen::MatrixXcd m = Eigen::MatrixXcd(matrix);
    if (unitary) {
        const Eigen::MatrixXcd d = m.adjoint() * m - Eigen::MatrixXcd::Identity(m.rows(), m.cols());
        if (d.cwiseAbs().maxCoeff() >= tol) return false;
    }
    if (hermitian && (m - m.adjoint()).cwiseAbs().maxCoeff() >= tol) return false;
    if (diagonal) {
        for (int k = 0; k < matrix.outerSize(); ++k) {
            for (SparseOp::InnerIterator it(matrix, k); it; ++it) {
                if (it.row() != it.col() && std::abs(it.value()) > 0.0) return false;
            }
        }
    }
    return true;
}

ModeKet fock_state(const ModeSpec &space, int n) {
    if (n < 0 || n >= space.truncation) throw LayoutError("fock_state: n outside truncation");
    ModeKet v = ModeKet::Zero(space.truncation);
    v(n) = 1.0;
    return v;
}

namespace {

// c_n = e^{-|b|^2/2} b^n / sqrt(n!), built by recurrence.
ModeKet coherent_coefficients(int truncation, cplx beta) {
    ModeKet v(truncation);
    cplx c = std::exp(-0.5 * std::norm(beta));
    v(0) = c;
    for (int n = 1; n < truncation; ++n) {
        c *= beta / std::sqrt(static_cast<double>(n));
        v(n) = c;
    }
    return v;
}

double one_norm(const DenseOp &m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

}  // namespace

ModeKet coherent_state(const ModeSpec &space, cplx beta) {
    require_truncation(space.truncation, beta, "coherent_state");
    ModeKet v = coherent_coefficients(space.truncation, beta);
    v.normalize();
    return v;
}

DenseOp displacement_matrix(const ModeSpec &space, cplx beta) {
    const int n = space.truncation;
    DenseOp gen = DenseOp::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double s = std::sqrt(static_cast<double>(k));
        gen(k, k - 1) = beta * s;              // beta a^dag
        gen(k - 1, k) = -std::conj(beta) * s;  // -beta^* a
    }
    if (beta == cplx{0.0, 0.0}) return DenseOp::Identity(n, n);

    int squarings = 0;
    const double norm = one_norm(gen);
    if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
    gen /= std::ldexp(1.0, squarings);

    DenseOp result = DenseOp::Identity(n, n);
    DenseOp term = DenseOp::Identity(n, n);
    for (int k = 1; k < 40; ++k) {
        term = (term * gen) / static_cast<double>(k);
        result += term;
        if (one_norm(term) < 1e-18) break;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

LinearOp displacement_op(const ModeSpec &space, cplx beta) {
    require_truncation(space.truncation, beta, "displacement_op");
    LinearOp op;
    op.matrix = displacement_matrix(space, beta).sparseView(1e-300, 1.0);
    op.unitary = true;
    op.diagonal = beta == cplx{0.0, 0.0};
    return op;
}

ModeKet cat_state(const ModeSpec &space, double alpha, CatWord which) {
    require_truncation(space.truncation, alpha, "cat_state");
    const ModeKet c = coherent_coefficients(space.truncation, alpha);
    ModeKet v = ModeKet::Zero(space.truncation);
    for (int n = 0; n < space.truncation; ++n) {
        const int r = n % 4;
        switch (which) {
            case CatWord::zero:
                if (r == 0) v(n) = c(n);
                break;
            case CatWord::one:
                if (r == 2) v(n) = c(n);
                break;
            case CatWord::plus:  // |a> + |-a>
                if (r % 2 == 0) v(n) = c(n);
                break;
            case CatWord::minus:  // |ia> + |-ia>
                if (r == 0) v(n) = c(n);
                if (r == 2) v(n) = -c(n);
                break;
        }
    }
    v.normalize();
    return v;
}

ModeOperators mode_operators(const ModeSpec &space) {
    const int n = space.truncation;
    std::vector<Eigen::Triplet<cplx>> a, num, even, odd;
    for (int k = 0; k < n; ++k) {
        if (k > 0) a.emplace_back(k - 1, k, std::sqrt(static_cast<double>(k)));
        if (k > 0) num.emplace_back(k, k, static_cast<double>(k));
        (k % 2 == 0 ? even : odd).emplace_back(k, k, 1.0);
    }
    ModeOperators ops;
    ops.a.matrix.resize(n, n);
    ops.a.matrix.setFromTriplets(a.begin(), a.end());
    ops.n.matrix.resize(n, n);
    ops.n.matrix.setFromTriplets(num.begin(), num.end());
    ops.n.hermitian = ops.n.diagonal = true;
    ops.even.matrix.resize(n, n);
    ops.even.matrix.setFromTriplets(even.begin(), even.end());
    ops.even.hermitian = ops.even.diagonal = true;
    ops.odd.matrix.resize(n, n);
    ops.odd.matrix.setFromTriplets(odd.begin(), odd.end());
    ops.odd.hermitian = ops.odd.diagonal = true;
    return ops;
}

LinearOp embed(const LinearOp &op, Target target, const SystemLayout &layout) {
    // Kronecker order: mode 0 (slowest) ... mode K-1, ancilla (fastest).
    std::vector<std::size_t> dims;
    for (const auto &m : layout.modes()) dims.push_back(static_cast<std::size_t>(m.truncation));
    dims.push_back(kAncillaLevels);
    const std::size_t factor = target.index == Target::kAncilla ? dims.size() - 1 : static_cast<std::size_t>(target.index);
    if (factor >= dims.size()) throw LayoutError("embed: target outside layout");
    if (static_cast<std::size_t>(op.matrix.rows()) != dims[factor] || op.matrix.rows() != op.matrix.cols()) {
        throw LayoutError("embed: operator dimension does not match the targeted factor");
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t k = 0; k < factor; ++k) outer *= dims[k];
    for (std::size_t k = factor + 1; k < dims.size(); ++k) inner *= dims[k];
    const std::size_t d = dims[factor];
    const std::size_t total = outer * d * inner;

    std::vector<Eigen::Triplet<cplx>> trips;
    trips.reserve(static_cast<std::size_t>(op.matrix.nonZeros()) * outer * inner);
    for (int col = 0; col < op.matrix.outerSize(); ++col) {
        for (SparseOp::InnerIterator it(op.matrix, col); it; ++it) {
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t i = 0; i < inner; ++i) {
                    const auto r = (o * d + static_cast<std::size_t>(it.row())) * inner + i;
                    const auto c = (o * d + static_cast<std::size_t>(it.col())) * inner + i;
                    trips.emplace_back(static_cast<int>(r), static_cast<int>(c), it.value());
                }
            }
        }
    }
    LinearOp out;
    out.matrix.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total));
    out.matrix.setFromTriplets(trips.begin(), trips.end());
    out.unitary = op.unitary;
    out.hermitian = op.hermitian;
    out.diagonal = op.diagonal;
    return out;
}

Eigen::VectorXcd to_full_vector(const StateVector &psi) {
    const auto &layout = psi.layout();
    std::vector<int> full_dims;
    for (const auto &m : layout.modes()) full_dims.push_back(m.truncation);
    const StateVector shape(psi.layout_ptr(), full_dims);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(shape.size()));
    std::vector<int> fock(full_dims.size());
    for (std::size_t m = 0; m < psi.mode_space_size(); ++m) {
        psi.decode(m, fock);
        for (int l = 0; l < kAncillaLevels; ++l) {
            v(static_cast<Eigen::Index>(shape.index(fock, static_cast<Level>(l)))) = psi[m * kAncillaLevels + l];
        }
    }
    return v;
}

StateVector from_full_vector(LayoutPtr layout, const Eigen::VectorXcd &v) {
    std::vector<int> full_dims;
    for (const auto &m : layout->modes()) full_dims.push_back(m.truncation);
    StateVector s(std::move(layout), full_dims);
    if (static_cast<std::size_t>(v.size()) != s.size()) throw LayoutError("from_full_vector: dimension mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = v(static_cast<Eigen::Index>(i));
    return s;
}

double fidelity(const StateVector &psi, const StateVector &target) {
    const double n = psi.norm_squared();
    if (n <= 0.0) return 0.0;
    return std::norm(inner(target, psi)) / n;
}

double fidelity(const Eigen::MatrixXcd &rho, const Eigen::VectorXcd &target) {
    if (rho.rows() != target.size()) throw LayoutError("fidelity: layout mismatch");
    return std::real(target.dot(rho * target));
}

void apply_mode_matrix(StateVector &psi, std::size_t mode, const DenseOp &m) {
    if (!psi.is_live(mode)) throw LayoutError("apply_mode_matrix: mode is parked");
    const auto n = static_cast<Eigen::Index>(psi.dim(mode));
    if (m.rows() != n || m.cols() != n) throw LayoutError("apply_mode_matrix: dimension mismatch");
    const auto inner = static_cast<Eigen::Index>(psi.stride(mode));
    const std::size_t block = static_cast<std::size_t>(n * inner);
    const std::size_t outer = psi.size() / block;
    const DenseOp mt = m.transpose();
    cplx *data = psi.amplitudes().data();
    if (static_cast<std::size_t>(inner) >= outer) {
        Eigen::MatrixXcd tmp(inner, n);
        for (std::size_t o = 0; o < outer; ++o) {
            Eigen::Map<Eigen::MatrixXcd> x(data + o * block, inner, n);
            tmp.noalias() = x * mt;
            x = tmp;
        }
        return;
    }
    // Few inner slices: one tall product per slice beats many tiny ones.
    using Strided = Eigen::Map<Eigen::MatrixXcd, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
    const auto rows = static_cast<Eigen::Index>(outer);
    Eigen::MatrixXcd tmp(rows, n);
    for (Eigen::Index i = 0; i < inner; ++i) {
        Strided x(data + i, rows, n, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(inner, static_cast<Eigen::Index>(block)));
        tmp.noalias() = x * mt;
        x = tmp;
    }
}

void apply_ancilla_matrix(StateVector &psi, const Eigen::Matrix3cd &m) {
    auto amps = psi.amplitudes();
    for (std::size_t i = 0; i < amps.size(); i += kAncillaLevels) {
        Eigen::Map<Eigen::Vector3cd> v(amps.data() + i);
        const Eigen::Vector3cd r = m * v;
        v = r;
    }
}

}  // namespace catprep
