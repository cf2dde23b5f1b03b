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

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "catprep/hilbert.hpp"
#include "catprep/noise.hpp"
#include "catprep/schedule.hpp"

namespace catprep {

struct BranchCapError : Error {
    using Error::Error;
};

/// Everything the interpreter needs that does not change along a path.
struct EngineContext {
    EngineContext(const Schedule &schedule, NoiseModel model);

    const Schedule *schedule;
    NoiseModel model;
    DampingTable damping;
    std::vector<JumpChannel> channels;
    /// Measurement and release outcomes lighter than this fraction of the
    /// incoming weight are dropped; the dropped mass is reported.
    double branch_prune = 1e-12;
    std::size_t branch_cap = 20000;
    /// Per-channel preference used when a jump is forced (importance
    /// sampling); samples carry the likelihood ratio. Empty: proportional to
    /// the jump intensities.
    std::vector<double> forced_bias;
};

/// Closed-form e^{-i H_eff t} for one segment on a fixed state shape.
/// H_eff = H - (i/2) sum_k L_k^dag L_k is diagonal in the Fock basis apart
/// from 2x2 g<->f blocks on driven teeth.
class SegmentPropagator {
  public:
    SegmentPropagator(const StateVector &shape, const Segment &segment, const EngineContext &ctx,
                      const PauliFrame &frame);

    /// Returns the squared norm of the result.
    double apply(StateVector &psi, double t) const;
    /// Squared norm apply() would leave, without touching psi.
    double norm_after(const StateVector &psi, double t) const;

  private:
    void mode_damping(double t, std::vector<double> &out) const;
    std::vector<Eigen::Matrix2cd> tooth_blocks(double t) const;

    // Per live mode (slowest first): damping rate per Fock level.
    std::vector<std::vector<double>> mode_gamma_;
    // Per live mode: dispersive rate per level and Fock number, [level][n].
    std::vector<std::array<std::vector<double>, kAncillaLevels>> mode_h_;
    std::array<double, kAncillaLevels> level_gamma_{};
    bool drive_ = false;
    double omega_ = 0.0;
    std::vector<double> phases_;      // distinct tooth phases
    std::vector<std::int16_t> tooth_;  // per mode-space index: phase slot or -1
    std::size_t mode_space_ = 0;
};

StateVector propagate_no_jump(const StateVector &psi, const Segment &segment, const EngineContext &ctx, double t,
                              const PauliFrame &frame = {});

struct JumpRecord {
    double time = 0.0;  // us since the path started
    int channel = 0;    // index into EngineContext::channels
    std::size_t pc = 0;
};

struct PathState {
    StateVector psi;
    std::size_t pc = 0;
    double elapsed = 0.0;  // time already spent inside program[pc]
    double clock = 0.0;
    std::string herald;
    PauliFrame frame;
    std::vector<JumpRecord> jumps;
    bool retry = false;  // ended on a retry branch

    static PathState start(const Schedule &schedule, StateVector psi);
};

/// Scorer-defined accumulators. `total` is all weight that reached a leaf,
/// `accepted` the part that reached the end of the program and `retried`
/// the part that ended on a retry branch.
struct Tally {
    double total = 0.0;
    double accepted = 0.0;
    double retried = 0.0;

    /// Accepted share of the weight that was not retried.
    double success() const { return total - retried > 0.0 ? accepted / (total - retried) : 0.0; }
    std::vector<double> values;
    Eigen::MatrixXcd matrix;

    void add(const Tally &o, double scale = 1.0);
};

/// Called for each accepted leaf. The leaf state is unnormalized and carries
/// its probability in its norm: ||leaf.psi||^2 == weight.
using LeafScorer = std::function<void(const PathState &leaf, double weight, Tally &out)>;

struct LeafRecord {
    std::string herald;
    double weight = 0.0;
    bool accepted = false;
    PauliFrame frame;
};

/// Zero-jump branch structure: per node the norm lost in each segment and
/// the children reached through measurements and releases.
struct NoJumpTree {
    struct Child {
        int choice;
        int node;
    };
    struct Node {
        std::vector<double> segment_start;  // absolute squared norm at segment start
        std::vector<double> segment_drop;
        std::vector<Child> children;
        double mass = 0.0;  // total jump probability in this subtree
    };
    std::vector<Node> nodes;
    double pruned = 0.0;

    double jump_mass() const { return nodes.empty() ? 0.0 : nodes.front().mass; }
};

struct Enumeration {
    NoJumpTree tree;
    Tally tally;
    std::vector<LeafRecord> leaves;
};

/// Exhaustive no-jump evolution from `start`: every measurement outcome and
/// release outcome with nonzero weight becomes a branch.
Enumeration enumerate_no_jump(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                              bool keep_leaves = false);

/// Same as enumerate_no_jump but returns the branch states themselves.
struct BranchState {
    PathState state;
    double weight;
    bool accepted;
};
std::vector<BranchState> enumerate_no_jump_branches(const EngineContext &ctx, const PathState &start);

/// Runs every no-jump branch from `start` up to time `time` inside segment
/// `pc` and returns the branches that got there, unnormalized. Branches that
/// end or are routed past `pc` are dropped.
std::vector<PathState> advance_no_jump(const EngineContext &ctx, const PathState &start, std::size_t pc,
                                       double time);

/// Mixes (seed, a, b) into an independent generator.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

struct TrajectoryResult {
    PathState state;  // normalized when accepted
    bool accepted = false;
};

/// One quantum-jump trajectory from `start` (normalized).
TrajectoryResult sample_trajectory(const EngineContext &ctx, const PathState &start, std::mt19937_64 &rng);

/// Draws the first jump of `tree` with probability proportional to its
/// share of the jump mass and returns the normalized post-jump state. The
/// channel follows ctx.forced_bias; `likelihood` receives the ratio of the
/// unbiased to the biased channel probability.
PathState force_first_jump(const EngineContext &ctx, const PathState &start, const NoJumpTree &tree,
                           std::mt19937_64 &rng, double *likelihood = nullptr);

struct EstimatorOptions {
    std::size_t trajectories = 1000;
    /// Number of jump orders resolved by exact enumeration plus forcing
    /// before falling back to plain sampling.
    int depth = 2;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    int workers = 1;
    /// Sample i draws from make_rng(seed, stream, first_sample + i), so runs
    /// can be extended without changing earlier samples.
    std::size_t first_sample = 0;
};

struct StratifiedResult {
    Tally zero_jump;
    double jump_mass = 0.0;
    std::vector<Tally> samples;  // one per trajectory, each conditioned on >= 1 jump
    std::vector<LeafRecord> zero_jump_leaves;
    double pruned = 0.0;

    Tally mean() const;
    /// Estimate using a resampled subset of samples (bootstrap helper).
    Tally mean_of(const std::vector<std::size_t> &indices) const;
};

StratifiedResult stratified_estimate(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                                     const EstimatorOptions &opt);

/// Plain quantum-jump average of `trajectories` independent samples.
Tally monte_carlo_estimate(const EngineContext &ctx, const PathState &start, const LeafScorer &scorer,
                           const EstimatorOptions &opt);

/// Percentile bootstrap interval of `statistic` over the jump samples.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};
Interval bootstrap_interval(const StratifiedResult &r, const std::function<double(const Tally &)> &statistic,
                            std::size_t resamples, std::uint64_t seed, double level = 0.95);

/// Runs fn(i) for i in [0, n) on `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)> &fn);

/// Dense master-equation reference on the full space (all modes live).
/// Measurements become Kraus sums over outcomes that continue; discarded
/// outcomes drop trace. Only for small spaces (dimension <= 64).
Eigen::MatrixXcd lindblad_evolve(const Schedule &schedule, const NoiseModel &model, const Eigen::MatrixXcd &rho0);

/// Dense full-space Hamiltonian of one segment (frame ignored).
Eigen::MatrixXcd segment_hamiltonian(const Segment &segment, const SystemLayout &layout);

}  // namespace catprep
