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
#include <iosfwd>
#include <string>
#include <vector>

#include "catprep/circuits.hpp"
#include "json.hpp"

namespace catprep::exp {

struct ConfigError : Error {
    using Error::Error;
};

/// Everything a run needs. Rates are in 1/us, chi values are chi/2pi in MHz.
struct ExperimentConfig {
    std::string experiment = "prep-bell";
    double alpha = 2.6;
    double s = 1.0;
    double theta = 3.14159265358979323846 / 6;
    double phi = 0.0;

    struct Device {
        double chi_f_mhz = 2.0;
        double chi_e_mhz = 2.0;
        int truncation = 0;  // 0: automatic per mode
        double drive_ratio = 0.25;
        int parity_rounds = 2;
        bool check_before_measure_x = true;
    } device;

    struct Noise {
        double kappa_loss = 1.0 / 8000.0;
        double kappa_deph = 1.0 / 40000.0;
        double gamma_fe = 1.0 / 1000.0;
        double gamma_phi = 1.0 / 4000.0;
        double eps_e = 1.0;
        double eps_f = 2.0;
        double gamma_eg = 0.0;
        /// readout[reported][actual]
        std::vector<std::vector<double>> readout{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    } noise;

    struct Run {
        std::size_t trajectories = 2000;
        double target_ci = 0.0;
        std::size_t max_trajectories = 0;
        int depth = 0;
        double loss_bias = 8.0;
        std::size_t resamples = 1000;
        std::uint64_t seed = 1;
        int workers = 0;  // 0: available parallelism, resolved on load
    } run;

    struct Sweep {
        std::string var = "s";        // alpha | s | theta
        std::string circuit = "bell";  // bell | psi | snap
        std::vector<double> grid{1, 2, 3, 4, 6, 8};
    } sweep;

    struct Audit {
        std::string gadget = "all";  // a gadget name, bell, psi or all
        int time_points = 20;
    } audit;

    struct Output {
        std::string csv = "results.csv";
        std::string manifest = "manifest.json";
    } output;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    nlohmann::json to_json() const;
    /// Strict: unknown fields and wrong types are errors. Missing fields
    /// keep their defaults. The result is validated and workers resolved.
    static ExperimentConfig from_json(const nlohmann::json &j);
    static ExperimentConfig load(const std::string &path);

    DeviceSettings device_settings(double alpha_value) const;
    NoiseModel noise_model(std::size_t modes, double s_value) const;
    RunSettings run_settings(std::uint64_t stream) const;
};

/// Applies CATPREP_SEED when it is set. Throws ConfigError on a bad value.
void apply_environment(ExperimentConfig &cfg);

int available_workers();

/// One CSV row; the column order is fixed by csv_header().
struct ResultRow {
    std::string experiment;
    double alpha = 0, s = 0, theta = 0, phi = 0;
    std::size_t n_traj = 0;
    double f_L = 0, f_L_ci_lo = 0, f_L_ci_hi = 0;
    double p_success = 0, p_success_ci_lo = 0, p_success_ci_hi = 0;
    double w0 = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0;
};

const std::string &csv_header();
std::string csv_line(const ResultRow &r);
void write_csv(std::ostream &os, const std::vector<ResultRow> &rows);
std::vector<ResultRow> read_csv(std::istream &is);

/// Compiles `circuit` ("bell", "psi" or "snap") at the given point and runs
/// the estimator. Sweep point i uses stream i of the master seed.
ResultRow run_point(const ExperimentConfig &cfg, const std::string &circuit, double alpha, double s, double theta,
                    double phi, std::uint64_t stream, EstimatorResult *detail = nullptr);
std::vector<ResultRow> run_sweep(const ExperimentConfig &cfg);

/// Fit of f_L = a + b s^c to rows, using the half CI width as sigma.
FitResult fit_rows(const std::vector<ResultRow> &rows);

struct AuditSummary {
    std::string gadget;
    AuditReport report;
    double wall_seconds = 0.0;
};
/// `name`: a gadget, "bell", "psi" or "all" (every gadget plus bell).
std::vector<AuditSummary> run_audit(const ExperimentConfig &cfg, const std::string &name);
void write_audit_csv(std::ostream &os, const std::vector<AuditSummary> &audits);

nlohmann::json manifest(const ExperimentConfig &cfg, const std::string &command, double wall_seconds);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};
/// Operator identities and compile checks; fast and deterministic.
std::vector<Check> selftest();

}  // namespace catprep::exp
