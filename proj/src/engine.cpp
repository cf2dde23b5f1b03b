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

#include "catprep/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>

namespace catprep {
namespace {

const cplx kI{0.0, 1.0};

// Kronecker expansion of per-mode tables, slowest mode first.
template <typename T>
void kron_tables(const std::vector<std::vector<T>> &tables, std::vector<T> &out) {
    out.assign(1, T(1.0));
    std::vector<T> next;
    for (const auto &tab : tables) {
        next.resize(out.size() * tab.size());
        std::size_t j = 0;
        for (const T &a : out) {
            for (const T &b : tab) next[j++] = a * b;
        }
        out.swap(next);
    }
}

std::vector<std::size_t> live_modes(const StateVector &psi) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < psi.dims().size(); ++k) {
        if (psi.is_live(k)) out.push_back(k);
    }
    return out;
}

Eigen::Matrix2cd expm2(const Eigen::Matrix2cd &b) {
    const cplx mu = 0.5 * (b(0, 0) + b(1, 1));
    Eigen::Matrix2cd d = b;
    d(0, 0) -= mu;
    d(1, 1) -= mu;
    const cplx q = std::sqrt(d(0, 0) * d(0, 0) + d(0, 1) * d(1, 0));
    const cplx sinhc = std::abs(q) < 1e-6 ? 1.0 + q * q / 6.0 : std::sinh(q) / q;
    Eigen::Matrix2cd out = sinhc * d;
    out(0, 0) += std::cosh(q);
    out(1, 1) += std::cosh(q);
    return std::exp(mu) * out;
}

std::array<double, kAncillaLevels> level_weights(const StateVector &psi) {
    std::array<double, kAncillaLevels> w{};
    const auto a = psi.amplitudes();
    for (std::size_t i = 0; i < a.size(); i += kAncillaLevels) {
        w[0] += std::norm(a[i]);
        w[1] += std::norm(a[i + 1]);
        w[2] += std::norm(a[i + 2]);
    }
    return w;
}

// Keeps the `level` component, moves it to g and scales by `amp`.
void collapse_and_reset(StateVector &psi, int level, double amp) {
    auto a = psi.amplitudes();
    for (std::size_t i = 0; i < a.size(); i += kAncillaLevels) {
        const cplx v = a[i + static_cast<std::size_t>(level)] * amp;
        a[i] = v;
        a[i + 1] = 0.0;
        a[i + 2] = 0.0;
    }
}

std::string branch_record(const Branch &b, int reported) {
    return b.record.empty() ? std::string(1, level_symbol(static_cast<Level>(reported))) : b.record;
}

// Applies the routing of a measurement branch. Returns false on discard.
bool take_branch(PathState &st, const Branch &b, int reported) {
    st.herald += branch_record(b, reported);
    for (const auto &t : b.frame) {
        if (t.x) st.frame.toggle_x(static_cast<std::size_t>(t.qubit));
        if (t.z) st.frame.toggle_z(static_cast<std::size_t>(t.qubit));
    }
    switch (b.kind) {
        case Branch::Kind::next:
            ++st.pc;
            return true;
        case Branch::Kind::jump:
            st.pc = static_cast<std::size_t>(b.target);
            return true;
        case Branch::Kind::discard:
            return false;
        case Branch::Kind::retry:
            st.retry = true;
            return false;
    }
    return false;
}

// Every D(beta)|k> component of the released mode, parked.
std::vector<StateVector> release_components(const StateVector &psi_in, const Release &r) {
    StateVector psi = psi_in;
    const auto mode = static_cast<std::size_t>(r.mode);
    if (!psi.is_live(mode)) psi.activate(mode);
    if (r.beta != cplx(0.0, 0.0)) apply_mode_matrix(psi, mode, r.basis->adjoint());
    const std::size_t n = static_cast<std::size_t>(psi.dim(mode));
    const std::size_t inner = psi.stride(mode);
    const std::size_t outer = psi.size() / (n * inner);
    std::vector<int> dims = psi.dims();
    dims[mode] = 1;
    std::vector<StateVector> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        StateVector s(psi.layout_ptr(), dims);
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(psi.amplitudes().data() + o * n * inner + k * inner, inner, s.amplitudes().data() + o * inner);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Handles instructions that neither branch nor take time. Returns false
// for segments, measurements and releases.
bool step_plain(PathState &st, const Instruction &ins) {
    if (const auto *u = std::get_if<ModeUnitary>(&ins)) {
        const auto mode = static_cast<std::size_t>(u->mode);
        if (u->from_vacuum && st.psi.is_live(mode)) throw Error("engine: preparation on a live mode");
        if (!st.psi.is_live(mode)) st.psi.activate(mode);
        apply_mode_matrix(st.psi, mode, *u->matrix);
        ++st.pc;
        return true;
    }
    if (const auto *u = std::get_if<AncillaUnitary>(&ins)) {
        apply_ancilla_matrix(st.psi, u->matrix);
        ++st.pc;
        return true;
    }
    if (const auto *a = std::get_if<Activate>(&ins)) {
        st.psi.activate(static_cast<std::size_t>(a->mode));
        ++st.pc;
        return true;
    }
    if (const auto *g = std::get_if<Goto>(&ins)) {
        st.pc = static_cast<std::size_t>(g->target);
        return true;
    }
    return false;
}

// Picks a channel with probability proportional to intensity times bias and
// returns it with the unbiased-to-biased probability ratio.
std::pair<int, double> choose_channel(const EngineContext &ctx, const StateVector &psi, double u,
                                      const std::vector<double> *bias) {
    std::vector<double> w(ctx.channels.size());
    std::vector<double> q(ctx.channels.size());
    double total = 0.0;
    double biased = 0.0;
    for (std::size_t c = 0; c < ctx.channels.size(); ++c) {
        w[c] = jump_intensity(psi, ctx.channels[c]);
        q[c] = bias && !bias->empty() ? w[c] * bias->at(c) : w[c];
        total += w[c];
        biased += q[c];
    }
    if (!(total > 0.0) || !(biased > 0.0)) throw Error("engine: jump requested on a state no channel can act on");
    auto pick = [&](std::size_t c) { return std::make_pair(static_cast<int>(c), (w[c] / total) / (q[c] / biased)); };
    double x = u * biased;
    for (std::size_t c = 0; c < q.size(); ++c) {
        if (x < q[c]) return pick(c);
        x -= q[c];
    }
    for (std::size_t c = q.size(); c-- > 0;) {
        if (q[c] > 0.0) return pick(c);
    }
    return pick(0);
}

// Evolves `st` (positioned inside a segment, state at the segment-entry
// point `st.elapsed`) to the time where its squared norm equals `target`,
// applies a jump and normalizes.
double jump_at_norm(const EngineContext &ctx, PathState &st, const Segment &seg, double target, double u_channel,
                    const std::vector<double> *bias = nullptr) {
    const SegmentPropagator prop(st.psi, seg, ctx, st.frame);
    const double remaining = seg.duration - st.elapsed;
    auto f = [&](double t) { return prop.norm_after(st.psi, t) - target; };
    const double f0 = st.psi.norm_squared() - target;
    double t_jump = 0.0;
    if (f0 > 0.0) {
        const double f1 = f(remaining);
        if (f1 >= 0.0) {
            t_jump = remaining;
        } else {
            const double tol = 1e-12 * std::max(seg.duration, 1e-300);
            auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
            std::uintmax_t iters = 200;
            const auto r = boost::math::tools::toms748_solve(f, 0.0, remaining, f0, f1, stop, iters);
            t_jump = 0.5 * (r.first + r.second);
        }
    }
    prop.apply(st.psi, t_jump);
    const auto [c, ratio] = choose_channel(ctx, st.psi, u_channel, bias);
    apply_jump(st.psi, ctx.channels[static_cast<std::size_t>(c)]);
    st.psi.normalize();
    st.elapsed += t_jump;
    st.clock += t_jump;
    st.jumps.push_back({st.clock, c, st.pc});
    return ratio;
}

class Enumerator {
  public:
    Enumerator(const EngineContext &ctx, const LeafScorer *scorer, Enumeration &out, bool keep_leaves,
               std::vector<BranchState> *states)
        : ctx_(ctx), scorer_(scorer), out_(out), keep_(keep_leaves), states_(states) {}

    void run(PathState st, int node) {
        const auto &prog = ctx_.schedule->program;
        while (true) {
            if (st.pc >= prog.size()) {
                leaf(std::move(st), true);
                return;
            }
            const Instruction &ins = prog[st.pc];
            if (step_plain(st, ins)) continue;
            if (const auto *seg = std::get_if<Segment>(&ins)) {
                if (stopped_ && st.pc == stop_pc_) {
                    SegmentPropagator(st.psi, *seg, ctx_, st.frame).apply(st.psi, stop_time_ - st.elapsed);
                    st.clock += stop_time_ - st.elapsed;
                    st.elapsed = stop_time_;
                    stopped_->push_back(std::move(st));
                    return;
                }
                const double remaining = seg->duration - st.elapsed;
                const double n0 = st.psi.norm_squared();
                const double n1 = SegmentPropagator(st.psi, *seg, ctx_, st.frame).apply(st.psi, remaining);
                auto &nd = out_.tree.nodes[static_cast<std::size_t>(node)];
                nd.segment_start.push_back(n0);
                // Without channels the only loss is rounding.
                const double drop = ctx_.channels.empty() || n0 - n1 <= 4e-16 * n0 ? 0.0 : n0 - n1;
                nd.segment_drop.push_back(drop);
                st.clock += remaining;
                st.elapsed = 0.0;
                ++st.pc;
                continue;
            }
            if (const auto *m = std::get_if<Measure>(&ins)) {
                const auto weights = level_weights(st.psi);
                const double total = weights[0] + weights[1] + weights[2];
                struct Outcome {
                    int a, r;
                    double p;
                };
                std::vector<Outcome> live;
                for (int a = 0; a < kAncillaLevels; ++a) {
                    const double q = weights[static_cast<std::size_t>(a)];
                    if (!(q > 0.0)) continue;
                    if (q < ctx_.branch_prune * total) {
                        out_.tree.pruned += q;
                        continue;
                    }
                    for (int r = 0; r < kAncillaLevels; ++r) {
                        const double p = ctx_.model.readout(r, a);
                        if (!(p > 0.0)) continue;
                        const Branch &br = m->on[static_cast<std::size_t>(r)];
                        const bool ends = br.kind == Branch::Kind::discard || br.kind == Branch::Kind::retry;
                        if (ends && !states_) {
                            // Only the weight of a rejected leaf is needed.
                            rejected_leaf(st, br, r, p * q);
                            continue;
                        }
                        live.push_back({a, r, p});
                    }
                }
                for (std::size_t i = 0; i < live.size(); ++i) {
                    const auto [a, r, p] = live[i];
                    PathState child = i + 1 == live.size() ? std::move(st) : st;
                    collapse_and_reset(child.psi, a, std::sqrt(p));
                    if (!take_branch(child, m->on[static_cast<std::size_t>(r)], r)) {
                        leaf(std::move(child), false);
                        continue;
                    }
                    run(std::move(child), add_child(node, a * kAncillaLevels + r));
                }
                return;
            }
            if (const auto *rel = std::get_if<Release>(&ins)) {
                const double total = st.psi.norm_squared();
                auto parts = release_components(st.psi, *rel);
                for (std::size_t k = 0; k < parts.size(); ++k) {
                    const double w = parts[k].norm_squared();
                    if (!(w > 0.0)) continue;
                    if (w < ctx_.branch_prune * total) {
                        out_.tree.pruned += w;
                        continue;
                    }
                    PathState child{std::move(parts[k]), st.pc + 1, 0.0, st.clock, st.herald, st.frame, st.jumps, false};
                    run(std::move(child), add_child(node, kReleaseChoice + static_cast<int>(k)));
                }
                return;
            }
            throw Error("engine: unknown instruction");
        }
    }

    static constexpr int kReleaseChoice = 16;

    void stop_at(std::size_t pc, double t, std::vector<PathState> *stopped) {
        stop_pc_ = pc;
        stop_time_ = t;
        stopped_ = stopped;
    }

  private:
    int add_child(int parent, int choice) {
        out_.tree.nodes.emplace_back();
        const int id = static_cast<int>(out_.tree.nodes.size()) - 1;
        out_.tree.nodes[static_cast<std::size_t>(parent)].children.push_back({choice, id});
        return id;
    }

    void rejected_leaf(const PathState &st, const Branch &br, int reported, double w) {
        if (++leaves_ > ctx_.branch_cap) {
            throw BranchCapError("engine: more than " + std::to_string(ctx_.branch_cap) + " zero-jump branches");
        }
        out_.tally.total += w;
        if (st.retry || br.kind == Branch::Kind::retry) out_.tally.retried += w;
        if (keep_) {
            PauliFrame frame = st.frame;
            for (const auto &t : br.frame) {
                if (t.x) frame.toggle_x(static_cast<std::size_t>(t.qubit));
                if (t.z) frame.toggle_z(static_cast<std::size_t>(t.qubit));
            }
            out_.leaves.push_back({st.herald + branch_record(br, reported), w, false, frame});
        }
    }

    void leaf(PathState st, bool accepted) {
        if (++leaves_ > ctx_.branch_cap) {
            throw BranchCapError("engine: more than " + std::to_string(ctx_.branch_cap) + " zero-jump branches");
        }
        const double w = st.psi.norm_squared();
        out_.tally.total += w;
        if (st.retry) out_.tally.retried += w;
        if (accepted) {
            out_.tally.accepted += w;
            if (scorer_ && *scorer_) (*scorer_)(st, w, out_.tally);
        }
        if (keep_) out_.leaves.push_back({st.herald, w, accepted, st.frame});
        if (states_) states_->push_back({std::move(st), w, accepted});
    }

    const EngineContext &ctx_;
    const LeafScorer *scorer_;
    Enumeration &out_;
    bool keep_;
    std::vector<BranchState> *states_;
    std::size_t leaves_ = 0;
    std::size_t stop_pc_ = 0;
    double stop_time_ = 0.0;
    std::vector<PathState> *stopped_ = nullptr;
};

void finish_tree(NoJumpTree &tree) {
    for (std::size_t i = tree.nodes.size(); i-- > 0;) {
        auto &nd = tree.nodes[i];
        double m = 0.0;
        for (double d : nd.segment_drop) m += d;
        for (const auto &c : nd.children) m += tree.nodes[static_cast<std::size_t>(c.node)].mass;
        nd.mass = m;
    }
}

double uniform(std::mt19937_64 &rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------

EngineContext::EngineContext(const Schedule &s, NoiseModel m)
    : schedule(&s), model(std::move(m)), damping(damping_table(*s.layout, model)),
      channels(active_channels(*s.layout, model)) {}

SegmentPropagator::SegmentPropagator(const StateVector &shape, const Segment &segment, const EngineContext &ctx,
                                     const PauliFrame &frame)
    : level_gamma_(ctx.damping.level), mode_space_(shape.mode_space_size()) {
    const auto &layout = shape.layout();
    const auto live = live_modes(shape);
    for (std::size_t k : live) mode_gamma_.push_back(ctx.damping.mode[k]);

    if (const auto *disp = std::get_if<DispersiveGenerator>(&segment.generator)) {
        for (std::size_t k : live) {
            std::array<std::vector<double>, kAncillaLevels> h;
            const std::size_t n = static_cast<std::size_t>(shape.dim(k));
            for (auto &v : h) v.assign(n, 0.0);
            if (std::find(disp->modes.begin(), disp->modes.end(), static_cast<int>(k)) != disp->modes.end()) {
                const auto &c = layout.coupling(k);
                for (std::size_t j = 0; j < n; ++j) {
                    h[1][j] = c.chi_e * static_cast<double>(j);
                    h[2][j] = c.chi_f * static_cast<double>(j);
                }
            }
            mode_h_.push_back(std::move(h));
        }
        return;
    }

    const auto &drive = std::get<DriveGenerator>(segment.generator);
    drive_ = true;
    omega_ = drive.omega;
    const bool flip = drive.frame_qubit >= 0 && static_cast<std::size_t>(drive.frame_qubit) < frame.size() &&
                      frame.x(static_cast<std::size_t>(drive.frame_qubit));
    // Photon-number sum over the comb modes for every mode-space index.
    std::vector<std::vector<int>> counts;
    int max_sum = 0;
    for (std::size_t k : live) {
        const bool in_comb =
            std::find(drive.comb.modes.begin(), drive.comb.modes.end(), static_cast<int>(k)) != drive.comb.modes.end();
        std::vector<int> c(static_cast<std::size_t>(shape.dim(k)), 0);
        if (in_comb) {
            for (std::size_t n = 0; n < c.size(); ++n) c[n] = static_cast<int>(n);
            max_sum += static_cast<int>(c.size()) - 1;
        }
        counts.push_back(std::move(c));
    }
    std::vector<std::int16_t> slot(static_cast<std::size_t>(max_sum) + 1, -1);
    for (int sum = 0; sum <= max_sum; ++sum) {
        const auto ph = drive.comb.phase(sum);
        if (!ph) continue;
        const double phi = flip ? -*ph : *ph;
        auto it = std::find(phases_.begin(), phases_.end(), phi);
        if (it == phases_.end()) {
            phases_.push_back(phi);
            it = phases_.end() - 1;
        }
        slot[static_cast<std::size_t>(sum)] = static_cast<std::int16_t>(it - phases_.begin());
    }
    std::vector<int> sums{0};
    std::vector<int> next;
    for (const auto &c : counts) {
        next.resize(sums.size() * c.size());
        std::size_t j = 0;
        for (int a : sums)
            for (int b : c) next[j++] = a + b;
        sums.swap(next);
    }
    tooth_.resize(mode_space_);
    for (std::size_t m = 0; m < mode_space_; ++m) tooth_[m] = slot[static_cast<std::size_t>(sums[m])];
}

void SegmentPropagator::mode_damping(double t, std::vector<double> &out) const {
    std::vector<std::vector<double>> tables(mode_gamma_.size());
    for (std::size_t j = 0; j < mode_gamma_.size(); ++j) {
        tables[j].resize(mode_gamma_[j].size());
        for (std::size_t n = 0; n < mode_gamma_[j].size(); ++n) tables[j][n] = std::exp(-0.5 * mode_gamma_[j][n] * t);
    }
    kron_tables(tables, out);
}

std::vector<Eigen::Matrix2cd> SegmentPropagator::tooth_blocks(double t) const {
    Eigen::Matrix2cd b;
    b << -0.5 * level_gamma_[0] * t, 0.5 * kI * omega_ * t, 0.5 * kI * omega_ * t, -0.5 * level_gamma_[2] * t;
    const Eigen::Matrix2cd base = expm2(b);
    std::vector<Eigen::Matrix2cd> blocks;
    for (double phi : phases_) {
        Eigen::Matrix2cd u = base;
        u(1, 0) *= std::exp(kI * phi);
        u(0, 1) *= std::exp(-kI * phi);
        blocks.push_back(u);
    }
    return blocks;
}

double SegmentPropagator::norm_after(const StateVector &psi, double t) const {
    if (psi.mode_space_size() != mode_space_) throw LayoutError("propagator: state shape changed");
    const auto a = psi.amplitudes();
    std::vector<double> damp;
    mode_damping(t, damp);
    std::array<double, kAncillaLevels> lev;
    for (int l = 0; l < kAncillaLevels; ++l) lev[static_cast<std::size_t>(l)] = std::exp(-level_gamma_[static_cast<std::size_t>(l)] * t);
    double total = 0.0;
    if (!drive_) {
        // The dispersive part is a pure phase.
        for (std::size_t m = 0; m < mode_space_; ++m) {
            const cplx *v = a.data() + m * kAncillaLevels;
            total += damp[m] * damp[m] * (lev[0] * std::norm(v[0]) + lev[1] * std::norm(v[1]) + lev[2] * std::norm(v[2]));
        }
        return total;
    }
    const auto blocks = tooth_blocks(t);
    for (std::size_t m = 0; m < mode_space_; ++m) {
        const cplx *v = a.data() + m * kAncillaLevels;
        double s = lev[1] * std::norm(v[1]);
        const int slot = tooth_[m];
        if (slot < 0) {
            s += lev[0] * std::norm(v[0]) + lev[2] * std::norm(v[2]);
        } else {
            const auto &u = blocks[static_cast<std::size_t>(slot)];
            s += std::norm(u(0, 0) * v[0] + u(0, 1) * v[2]) + std::norm(u(1, 0) * v[0] + u(1, 1) * v[2]);
        }
        total += damp[m] * damp[m] * s;
    }
    return total;
}

double SegmentPropagator::apply(StateVector &psi, double t) const {
    if (psi.mode_space_size() != mode_space_) throw LayoutError("propagator: state shape changed");
    auto a = psi.amplitudes();
    if (!drive_) {
        std::array<cplx, kAncillaLevels> lev;
        for (int l = 0; l < kAncillaLevels; ++l) lev[static_cast<std::size_t>(l)] = std::exp(-0.5 * level_gamma_[static_cast<std::size_t>(l)] * t);
        std::vector<std::vector<cplx>> tables(mode_gamma_.size());
        std::array<std::vector<cplx>, kAncillaLevels> prod;
        for (int l = 0; l < kAncillaLevels; ++l) {
            for (std::size_t j = 0; j < mode_gamma_.size(); ++j) {
                const auto &h = mode_h_[j][static_cast<std::size_t>(l)];
                auto &tab = tables[j];
                tab.resize(h.size());
                for (std::size_t n = 0; n < h.size(); ++n) tab[n] = std::exp(cplx(-0.5 * mode_gamma_[j][n] * t, -h[n] * t));
            }
            kron_tables(tables, prod[static_cast<std::size_t>(l)]);
            for (auto &c : prod[static_cast<std::size_t>(l)]) c *= lev[static_cast<std::size_t>(l)];
        }
        double norm = 0.0;
        for (std::size_t m = 0; m < mode_space_; ++m) {
            cplx *v = a.data() + m * kAncillaLevels;
            v[0] *= prod[0][m];
            v[1] *= prod[1][m];
            v[2] *= prod[2][m];
            norm += std::norm(v[0]) + std::norm(v[1]) + std::norm(v[2]);
        }
        return norm;
    }

    std::vector<double> damp;
    mode_damping(t, damp);
    const auto blocks = tooth_blocks(t);
    const double lg = std::exp(-0.5 * level_gamma_[0] * t);
    const double le = std::exp(-0.5 * level_gamma_[1] * t);
    const double lf = std::exp(-0.5 * level_gamma_[2] * t);
    double norm = 0.0;
    for (std::size_t m = 0; m < mode_space_; ++m) {
        cplx *v = a.data() + m * kAncillaLevels;
        const double d = damp[m];
        v[1] *= d * le;
        const int slot = tooth_[m];
        if (slot < 0) {
            v[0] *= d * lg;
            v[2] *= d * lf;
        } else {
            const auto &u = blocks[static_cast<std::size_t>(slot)];
            const cplx g0 = v[0];
            const cplx f0 = v[2];
            v[0] = d * (u(0, 0) * g0 + u(0, 1) * f0);
            v[2] = d * (u(1, 0) * g0 + u(1, 1) * f0);
        }
        norm += std::norm(v[0]) + std::norm(v[1]) + std::norm(v[2]);
    }
    return norm;
}

StateVector propagate_no_jump(const StateVector &psi, const Segment &segment, const EngineContext &ctx, double t,
                              const PauliFrame &frame) {
    StateVector out = psi;
    SegmentPropagator(psi, segment, ctx, frame).apply(out, t);
    return out;
}

PathState PathState::start(const Schedule &schedule, StateVector psi) {
    PathState st{std::move(psi), 0, 0.0, 0.0, {}, {}, {}, false};
    st.frame = PauliFrame(static_cast<std::size_t>(schedule.logical_qubits));
    return st;
}

void Tally::add(const Tally &o, double scale) {
    total += scale * o.total;
    accepted += scale * o.accepted;
    retried += scale * o.retried;
    if (values.size() < o.values.size()) values.resize(o.values.size(), 0.0);
    for (std::size_t i = 0; i < o.values.size(); ++i) values[i] += scale * o.values[i];
    if (o.matrix.size() > 0) {
        if (matrix.size() == 0) matrix = Eigen::MatrixXcd::Zero(o.matrix.rows(), o.matrix.cols());
        matrix += scale * o.matrix;
    }
}

Enumeration enumerate_no_jump(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                              bool keep_leaves) {
    Enumeration out;
    out.tree.nodes.emplace_back();
    Enumerator(ctx, &scorer, out, keep_leaves, nullptr).run(start, 0);
    finish_tree(out.tree);
    return out;
}

std::vector<BranchState> enumerate_no_jump_branches(const EngineContext &ctx, const PathState &start) {
    Enumeration out;
    out.tree.nodes.emplace_back();
    std::vector<BranchState> states;
    Enumerator(ctx, nullptr, out, false, &states).run(start, 0);
    return states;
}

std::vector<PathState> advance_no_jump(const EngineContext &ctx, const PathState &start, std::size_t pc,
                                       double time) {
    const auto *seg = pc < ctx.schedule->program.size() ? std::get_if<Segment>(&ctx.schedule->program[pc]) : nullptr;
    if (!seg || time < 0.0 || time > seg->duration) throw Error("engine: stop point is not inside a segment");
    Enumeration out;
    out.tree.nodes.emplace_back();
    std::vector<PathState> stopped;
    Enumerator e(ctx, nullptr, out, false, nullptr);
    e.stop_at(pc, time, &stopped);
    e.run(start, 0);
    return stopped;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    const std::uint64_t x = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(x >> 32),
                      static_cast<std::uint32_t>(splitmix64(x)), static_cast<std::uint32_t>(splitmix64(x) >> 32)};
    return std::mt19937_64(seq);
}

TrajectoryResult sample_trajectory(const EngineContext &ctx, const PathState &start, std::mt19937_64 &rng) {
    const auto &prog = ctx.schedule->program;
    PathState st = start;
    st.psi.normalize();
    double r = uniform(rng);
    while (true) {
        if (st.pc >= prog.size()) {
            st.psi.normalize();
            return {std::move(st), true};
        }
        const Instruction &ins = prog[st.pc];
        if (step_plain(st, ins)) continue;
        if (const auto *seg = std::get_if<Segment>(&ins)) {
            const double remaining = seg->duration - st.elapsed;
            StateVector s0 = st.psi;
            SegmentPropagator(st.psi, *seg, ctx, st.frame).apply(st.psi, remaining);
            if (st.psi.norm_squared() > r) {
                st.clock += remaining;
                st.elapsed = 0.0;
                ++st.pc;
                continue;
            }
            st.psi = std::move(s0);
            jump_at_norm(ctx, st, *seg, r, uniform(rng));
            r = uniform(rng);
            continue;
        }
        if (const auto *m = std::get_if<Measure>(&ins)) {
            const auto w = level_weights(st.psi);
            const double q = w[0] + w[1] + w[2];
            double u = uniform(rng) * q;
            int actual = kAncillaLevels - 1;
            for (int a = 0; a < kAncillaLevels; ++a) {
                if (u < w[static_cast<std::size_t>(a)]) {
                    actual = a;
                    break;
                }
                u -= w[static_cast<std::size_t>(a)];
            }
            while (actual > 0 && w[static_cast<std::size_t>(actual)] <= 0.0) --actual;
            double v = uniform(rng);
            int reported = actual;
            for (int rr = 0; rr < kAncillaLevels; ++rr) {
                const double p = ctx.model.readout(rr, actual);
                if (v < p) {
                    reported = rr;
                    break;
                }
                v -= p;
            }
            const double qa = w[static_cast<std::size_t>(actual)];
            collapse_and_reset(st.psi, actual, 1.0 / std::sqrt(qa));
            r /= q;
            if (!take_branch(st, m->on[static_cast<std::size_t>(reported)], reported)) return {std::move(st), false};
            continue;
        }
        if (const auto *rel = std::get_if<Release>(&ins)) {
            const double q = st.psi.norm_squared();
            auto parts = release_components(st.psi, *rel);
            double u = uniform(rng) * q;
            std::size_t pick = parts.size();
            for (std::size_t k = 0; k < parts.size(); ++k) {
                const double w = parts[k].norm_squared();
                if (w > 0.0) pick = k;
                if (u < w) break;
                u -= w;
            }
            if (pick == parts.size()) throw Error("engine: release of a zero state");
            st.psi = std::move(parts[pick]);
            st.psi.normalize();
            r /= q;
            ++st.pc;
            st.elapsed = 0.0;
            continue;
        }
        throw Error("engine: unknown instruction");
    }
}

PathState force_first_jump(const EngineContext &ctx, const PathState &start, const NoJumpTree &tree,
                           std::mt19937_64 &rng, double *likelihood) {
    if (!(tree.jump_mass() > 0.0)) throw Error("engine: no jump mass to force");
    double u = uniform(rng) * tree.jump_mass();
    const double u_channel = uniform(rng);

    // Descend to the segment that owns u.
    std::vector<int> choices;
    int node = 0;
    std::size_t seg_ordinal = 0;
    double target = 0.0;
    while (true) {
        const auto &nd = tree.nodes[static_cast<std::size_t>(node)];
        bool found = false;
        for (std::size_t j = 0; j < nd.segment_drop.size(); ++j) {
            if (u < nd.segment_drop[j]) {
                seg_ordinal = j;
                target = nd.segment_start[j] - u;
                found = true;
                break;
            }
            u -= nd.segment_drop[j];
        }
        if (found) break;
        int next = -1;
        int last_positive = -1;
        for (std::size_t c = 0; c < nd.children.size(); ++c) {
            const double m = tree.nodes[static_cast<std::size_t>(nd.children[c].node)].mass;
            if (m > 0.0) last_positive = static_cast<int>(c);
            if (u < m) {
                next = static_cast<int>(c);
                break;
            }
            u -= m;
        }
        if (next < 0) {
            // Rounding left u just past the end; fall back to the last
            // place with mass.
            if (last_positive >= 0) {
                next = last_positive;
                u = 0.5 * tree.nodes[static_cast<std::size_t>(nd.children[static_cast<std::size_t>(next)].node)].mass;
            } else {
                std::size_t j = nd.segment_drop.size();
                while (j-- > 0 && !(nd.segment_drop[j] > 0.0)) {
                }
                if (j >= nd.segment_drop.size()) throw Error("engine: jump tree descent failed");
                seg_ordinal = j;
                target = nd.segment_start[j] - 0.5 * nd.segment_drop[j];
                break;
            }
        }
        choices.push_back(nd.children[static_cast<std::size_t>(next)].choice);
        node = nd.children[static_cast<std::size_t>(next)].node;
    }

    // Replay the chosen zero-jump path.
    const auto &prog = ctx.schedule->program;
    PathState st = start;
    std::size_t choice_pos = 0;
    std::size_t seg_count = 0;
    while (true) {
        if (st.pc >= prog.size()) throw Error("engine: replay ran off the program");
        const Instruction &ins = prog[st.pc];
        if (step_plain(st, ins)) continue;
        if (const auto *seg = std::get_if<Segment>(&ins)) {
            if (choice_pos == choices.size() && seg_count == seg_ordinal) {
                const double ratio = jump_at_norm(ctx, st, *seg, target, u_channel, &ctx.forced_bias);
                if (likelihood) *likelihood = ratio;
                return st;
            }
            SegmentPropagator(st.psi, *seg, ctx, st.frame).apply(st.psi, seg->duration - st.elapsed);
            st.clock += seg->duration - st.elapsed;
            st.elapsed = 0.0;
            ++st.pc;
            ++seg_count;
            continue;
        }
        if (choice_pos >= choices.size()) throw Error("engine: replay needs a choice that was not recorded");
        const int choice = choices[choice_pos++];
        seg_count = 0;
        if (const auto *m = std::get_if<Measure>(&ins)) {
            const int a = choice / kAncillaLevels;
            const int r = choice % kAncillaLevels;
            collapse_and_reset(st.psi, a, std::sqrt(ctx.model.readout(r, a)));
            if (!take_branch(st, m->on[static_cast<std::size_t>(r)], r)) throw Error("engine: replay hit a discard");
            continue;
        }
        if (const auto *rel = std::get_if<Release>(&ins)) {
            auto parts = release_components(st.psi, *rel);
            st.psi = std::move(parts.at(static_cast<std::size_t>(choice - Enumerator::kReleaseChoice)));
            ++st.pc;
            st.elapsed = 0.0;
            continue;
        }
        throw Error("engine: unknown instruction");
    }
}

namespace {

Tally continue_after_jump(const EngineContext &ctx, const PathState &s, int depth, const LeafScorer &scorer,
                          std::mt19937_64 &rng) {
    if (depth <= 0) {
        auto tr = sample_trajectory(ctx, s, rng);
        Tally t;
        t.total = 1.0;
        if (tr.state.retry) t.retried = 1.0;
        if (tr.accepted) {
            t.accepted = 1.0;
            if (scorer) scorer(tr.state, 1.0, t);
        }
        return t;
    }
    auto e = enumerate_no_jump(ctx, s, scorer);
    Tally t = std::move(e.tally);
    const double p = e.tree.jump_mass();
    if (p > 0.0) {
        double ratio = 1.0;
        const PathState s2 = force_first_jump(ctx, s, e.tree, rng, &ratio);
        t.add(continue_after_jump(ctx, s2, depth - 1, scorer, rng), p * ratio);
    }
    return t;
}

}  // namespace

Tally StratifiedResult::mean() const {
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return mean_of(idx);
}

Tally StratifiedResult::mean_of(const std::vector<std::size_t> &indices) const {
    Tally t = zero_jump;
    if (indices.empty() || !(jump_mass > 0.0)) return t;
    Tally s;
    for (std::size_t i : indices) s.add(samples.at(i));
    t.add(s, jump_mass / static_cast<double>(indices.size()));
    return t;
}

StratifiedResult stratified_estimate(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                                     const EstimatorOptions &opt) {
    StratifiedResult res;
    auto root = enumerate_no_jump(ctx, start, scorer, true);
    res.zero_jump = std::move(root.tally);
    res.jump_mass = root.tree.jump_mass();
    res.zero_jump_leaves = std::move(root.leaves);
    res.pruned = root.tree.pruned;
    if (!(res.jump_mass > 0.0) || opt.trajectories == 0) return res;
    res.samples.resize(opt.trajectories);
    parallel_for(opt.trajectories, opt.workers, [&](std::size_t i) {
        auto rng = make_rng(opt.seed, opt.stream, opt.first_sample + i);
        double ratio = 1.0;
        const PathState s = force_first_jump(ctx, start, root.tree, rng, &ratio);
        res.samples[i].add(continue_after_jump(ctx, s, opt.depth - 1, scorer, rng), ratio);
    });
    return res;
}

Tally monte_carlo_estimate(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                           const EstimatorOptions &opt) {
    std::vector<Tally> per(opt.trajectories);
    parallel_for(opt.trajectories, opt.workers, [&](std::size_t i) {
        auto rng = make_rng(opt.seed, opt.stream, i);
        per[i] = continue_after_jump(ctx, start, 0, scorer, rng);
    });
    Tally t;
    for (const auto &p : per) t.add(p, 1.0 / static_cast<double>(std::max<std::size_t>(1, per.size())));
    return t;
}

Interval bootstrap_interval(const StratifiedResult &r, const std::function<double(const Tally &)> &statistic,
                            std::size_t resamples, std::uint64_t seed, double level) {
    const double point = statistic(r.mean());
    if (r.samples.empty() || resamples == 0) return {point, point};
    auto rng = make_rng(seed, 0xB007, 0);
    std::uniform_int_distribution<std::size_t> pick(0, r.samples.size() - 1);
    std::vector<double> stats;
    stats.reserve(resamples);
    std::vector<std::size_t> idx(r.samples.size());
    for (std::size_t b = 0; b < resamples; ++b) {
        for (auto &i : idx) i = pick(rng);
        stats.push_back(statistic(r.mean_of(idx)));
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(stats.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, stats.size() - 1);
        return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
    };
    const double tail = 0.5 * (1.0 - level);
    return {quantile(tail), quantile(1.0 - tail)};
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)> &fn) {
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), std::max<std::size_t>(n, 1));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    for (auto &th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Dense reference

namespace {

std::vector<int> full_dims(const SystemLayout &layout) {
    std::vector<int> d;
    for (const auto &m : layout.modes()) d.push_back(m.truncation);
    return d;
}

Eigen::MatrixXcd dense_mode_op(const DenseOp &m, std::size_t mode, const SystemLayout &layout) {
    LinearOp op;
    op.matrix = m.sparseView();
    return Eigen::MatrixXcd(embed(op, Target::mode(static_cast<int>(mode)), layout).matrix);
}

Eigen::MatrixXcd dense_ancilla_op(const Eigen::Matrix3cd &m, const SystemLayout &layout) {
    LinearOp op;
    op.matrix = Eigen::MatrixXcd(m).sparseView();
    return Eigen::MatrixXcd(embed(op, Target::ancilla(), layout).matrix);
}

}  // namespace

Eigen::MatrixXcd segment_hamiltonian(const Segment &segment, const SystemLayout &layout) {
    auto layout_ptr = std::make_shared<const SystemLayout>(layout);
    const StateVector shape(layout_ptr, full_dims(layout));
    const auto dim = static_cast<Eigen::Index>(shape.size());
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(dim, dim);
    std::vector<int> fock(layout.num_modes());
    for (std::size_t m = 0; m < shape.mode_space_size(); ++m) {
        shape.decode(m, fock);
        const auto ig = static_cast<Eigen::Index>(m * kAncillaLevels);
        if (const auto *disp = std::get_if<DispersiveGenerator>(&segment.generator)) {
            for (int k : disp->modes) {
                const auto &c = layout.coupling(static_cast<std::size_t>(k));
                const double n = fock[static_cast<std::size_t>(k)];
                h(ig + 1, ig + 1) += c.chi_e * n;
                h(ig + 2, ig + 2) += c.chi_f * n;
            }
        } else {
            const auto &drive = std::get<DriveGenerator>(segment.generator);
            int sum = 0;
            for (int k : drive.comb.modes) sum += fock[static_cast<std::size_t>(k)];
            if (const auto ph = drive.comb.phase(sum)) {
                h(ig + 2, ig) += -0.5 * drive.omega * std::exp(kI * *ph);
                h(ig, ig + 2) += -0.5 * drive.omega * std::exp(-kI * *ph);
            }
        }
    }
    return h;
}

Eigen::MatrixXcd lindblad_evolve(const Schedule &schedule, const NoiseModel &model, const Eigen::MatrixXcd &rho0) {
    const auto &layout = *schedule.layout;
    const auto dim = static_cast<Eigen::Index>(layout.full_dimension());
    if (dim > 64) throw Error("lindblad_evolve: dense reference limited to dimension 64");
    if (rho0.rows() != dim || rho0.cols() != dim) throw LayoutError("lindblad_evolve: rho0 dimension mismatch");

    std::vector<Eigen::MatrixXcd> ls;
    Eigen::MatrixXcd lsum = Eigen::MatrixXcd::Zero(dim, dim);
    for (const auto &j : jump_operators(layout, model)) {
        ls.emplace_back(Eigen::MatrixXcd(j.op.matrix));
        lsum += ls.back().adjoint() * ls.back();
    }

    using State = std::vector<cplx>;
    namespace ode = boost::numeric::odeint;
    Eigen::MatrixXcd rho = rho0;
    std::size_t pc = 0;
    const auto &prog = schedule.program;
    while (pc < prog.size()) {
        const Instruction &ins = prog[pc];
        if (const auto *seg = std::get_if<Segment>(&ins)) {
            const Eigen::MatrixXcd heff = segment_hamiltonian(*seg, layout) - 0.5 * kI * lsum;
            const Eigen::MatrixXcd heff_dag = heff.adjoint();
            State x(rho.data(), rho.data() + rho.size());
            auto rhs = [&](const State &in, State &out, double) {
                Eigen::Map<const Eigen::MatrixXcd> r(in.data(), dim, dim);
                Eigen::Map<Eigen::MatrixXcd> d(out.data(), dim, dim);
                d.noalias() = -kI * (heff * r - r * heff_dag);
                for (const auto &l : ls) d.noalias() += l * r * l.adjoint();
            };
            if (seg->duration > 0.0) {
                ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-12, 1e-12), rhs, x, 0.0,
                                        seg->duration, seg->duration / 100.0);
            }
            rho = Eigen::Map<Eigen::MatrixXcd>(x.data(), dim, dim);
            ++pc;
        } else if (const auto *u = std::get_if<ModeUnitary>(&ins)) {
            if (u->from_vacuum) throw Error("lindblad_evolve: preparations are not supported");
            const Eigen::MatrixXcd m = dense_mode_op(*u->matrix, static_cast<std::size_t>(u->mode), layout);
            rho = m * rho * m.adjoint();
            ++pc;
        } else if (const auto *u = std::get_if<AncillaUnitary>(&ins)) {
            const Eigen::MatrixXcd m = dense_ancilla_op(u->matrix, layout);
            rho = m * rho * m.adjoint();
            ++pc;
        } else if (const auto *m = std::get_if<Measure>(&ins)) {
            Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
            for (int a = 0; a < kAncillaLevels; ++a) {
                for (int r = 0; r < kAncillaLevels; ++r) {
                    const double p = model.readout(r, a);
                    if (!(p > 0.0)) continue;
                    const auto &b = m->on[static_cast<std::size_t>(r)];
                    if (b.kind == Branch::Kind::jump) throw Error("lindblad_evolve: routed branches are not supported");
                    if (b.kind == Branch::Kind::discard || b.kind == Branch::Kind::retry) continue;
                    Eigen::Matrix3cd k = Eigen::Matrix3cd::Zero();
                    k(0, a) = std::sqrt(p);
                    const Eigen::MatrixXcd kk = dense_ancilla_op(k, layout);
                    out += kk * rho * kk.adjoint();
                }
            }
            rho = out;
            ++pc;
        } else if (const auto *rel = std::get_if<Release>(&ins)) {
            const auto &space = layout.mode(static_cast<std::size_t>(rel->mode));
            Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
            for (int k = 0; k < space.truncation; ++k) {
                DenseOp kraus = DenseOp::Zero(space.truncation, space.truncation);
                kraus.row(0) = rel->basis->col(k).adjoint();
                const Eigen::MatrixXcd kk = dense_mode_op(kraus, static_cast<std::size_t>(rel->mode), layout);
                out += kk * rho * kk.adjoint();
            }
            rho = out;
            ++pc;
        } else if (std::holds_alternative<Activate>(ins)) {
            ++pc;
        } else if (const auto *g = std::get_if<Goto>(&ins)) {
            pc = static_cast<std::size_t>(g->target);
        }
    }
    return rho;
}

}  // namespace catprep
