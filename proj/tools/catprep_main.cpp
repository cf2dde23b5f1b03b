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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "experiment.hpp"

namespace {

using namespace catprep;
using namespace catprep::exp;

struct Overrides {
    std::string config;
    std::optional<std::string> csv, manifest;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::size_t> trajectories, max_trajectories;
    std::optional<double> target_ci, alpha, s;
};

ExperimentConfig resolve(const Overrides &o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig::from_json(ExperimentConfig{}.to_json())
                                            : ExperimentConfig::load(o.config);
    apply_environment(cfg);
    // Command-line flags win over both the file and the environment.
    if (o.csv) cfg.output.csv = *o.csv;
    if (o.manifest) cfg.output.manifest = *o.manifest;
    if (o.seed) cfg.run.seed = *o.seed;
    if (o.workers) cfg.run.workers = *o.workers > 0 ? *o.workers : available_workers();
    if (o.trajectories) cfg.run.trajectories = *o.trajectories;
    if (o.target_ci) cfg.run.target_ci = *o.target_ci;
    if (o.max_trajectories) cfg.run.max_trajectories = *o.max_trajectories;
    if (o.alpha) cfg.alpha = *o.alpha;
    if (o.s) cfg.s = *o.s;
    cfg.validate();
    return cfg;
}

void write_outputs(const ExperimentConfig &cfg, const std::string &command, const std::vector<ResultRow> &rows,
                   double wall) {
    {
        std::ofstream out(cfg.output.csv);
        if (!out) throw ConfigError("output.csv: cannot write '" + cfg.output.csv + "'");
        write_csv(out, rows);
    }
    if (!cfg.output.manifest.empty()) {
        std::ofstream out(cfg.output.manifest);
        if (!out) throw ConfigError("output.manifest: cannot write '" + cfg.output.manifest + "'");
        out << manifest(cfg, command, wall).dump(2) << '\n';
    }
    write_csv(std::cout, rows);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Error-detected cat-qubit state preparation simulator"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--csv", o.csv, "Result CSV path");
    app.add_option("--manifest", o.manifest, "Run manifest path (empty string disables)");
    app.add_option("--seed", o.seed, "Master seed (overrides CATPREP_SEED)");
    app.add_option("--workers", o.workers, "Worker threads, 0 for all cores");
    app.add_option("--trajectories", o.trajectories, "Trajectories per batch");
    app.add_option("--target-ci", o.target_ci, "Relative CI half-width that stops adaptive growth");
    app.add_option("--max-trajectories", o.max_trajectories, "Cap on adaptive growth");
    app.add_option("--alpha", o.alpha, "Cat amplitude");
    app.add_option("--s", o.s, "Noise multiplier");

    auto *bell = app.add_subcommand("prep-bell", "Prepare (|00> + e^{i pi/4}|11>)/sqrt(2)");
    std::optional<double> theta, phi;
    auto *psi = app.add_subcommand("prep-psi", "Prepare cos(theta)|00> + i e^{i phi} sin(theta)|11>");
    psi->add_option("--theta", theta, "Angle in [0, pi/2]");
    psi->add_option("--phi", phi, "Phase in [0, 2 pi)");
    auto *snap = app.add_subcommand("baseline-snap", "Non-detecting single-cavity baseline");

    auto *sweep = app.add_subcommand("sweep", "Sweep one variable over a grid");
    std::optional<std::string> var, circuit;
    std::vector<double> grid;
    sweep->add_option("--var", var, "alpha, s or theta")->check(CLI::IsMember({"alpha", "s", "theta"}));
    sweep->add_option("--grid", grid, "Grid values")->delimiter(',');
    sweep->add_option("--circuit", circuit, "bell, psi or snap")->check(CLI::IsMember({"bell", "psi", "snap"}));
    sweep->add_flag("--fit", "Fit f_L = a + b s^c to the sweep");

    auto *fit = app.add_subcommand("fit", "Fit f_L = a + b s^c to a result CSV");
    std::string input;
    fit->add_option("--input", input, "Result CSV")->required()->check(CLI::ExistingFile);

    auto *audit = app.add_subcommand("audit-faults", "Single-fault injection audit");
    std::optional<std::string> gadget;
    std::optional<int> points;
    audit->add_option("--gadget", gadget, "parity, z, zz, measure_x, hadamard, bell, psi or all");
    audit->add_option("--points", points, "Injection times per segment")->check(CLI::PositiveNumber);

    auto *self = app.add_subcommand("selftest", "Operator identities and compile checks");
    auto *config = app.add_subcommand("config", "Print the resolved config as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto t0 = std::chrono::steady_clock::now();
        ExperimentConfig cfg = resolve(o);

        if (*self) {
            int failed = 0;
            for (const auto &c : selftest()) {
                std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
                failed += c.passed ? 0 : 1;
            }
            std::cout << (failed ? "selftest failed\n" : "selftest passed\n");
            return failed ? 1 : 0;
        }
        if (*config) {
            std::cout << cfg.to_json().dump(2) << '\n';
            return 0;
        }
        if (*fit) {
            std::ifstream in(input);
            const auto rows = read_csv(in);
            const FitResult r = fit_rows(rows);
            std::printf("a = %.6g +- %.2g\nb = %.6g +- %.2g\nc = %.6g +- %.2g\nresidual = %.4g\nconverged = %s\n", r.a,
                        r.sa, r.b, r.sb, r.c, r.sc, r.residual, r.converged ? "yes" : "no");
            if (!r.diagnostics.empty()) std::printf("%s\n", r.diagnostics.c_str());
            return r.converged ? 0 : 1;
        }
        if (*audit) {
            if (gadget) cfg.audit.gadget = *gadget;
            if (points) cfg.audit.time_points = *points;
            const auto audits = run_audit(cfg, cfg.audit.gadget);
            bool ok = true;
            for (const auto &a : audits) {
                std::printf("%-10s %s worst %.3g bound %.3g baseline %.3g (%zu rows, %.1f s)\n", a.gadget.c_str(),
                            a.report.passed ? "PASS" : "FAIL", a.report.worst, a.report.bound,
                            a.report.baseline_infidelity, a.report.rows.size(), a.wall_seconds);
                ok = ok && a.report.passed;
            }
            std::ofstream out(cfg.output.csv);
            if (!out) throw ConfigError("output.csv: cannot write '" + cfg.output.csv + "'");
            write_audit_csv(out, audits);
            if (!cfg.output.manifest.empty()) {
                std::ofstream m(cfg.output.manifest);
                m << manifest(cfg, "audit-faults", seconds_since(t0)).dump(2) << '\n';
            }
            return ok ? 0 : 2;
        }

        std::vector<ResultRow> rows;
        std::string command;
        if (*bell) {
            command = "prep-bell";
            rows.push_back(run_point(cfg, "bell", cfg.alpha, cfg.s, 0.0, 0.0, 0));
        } else if (*psi) {
            command = "prep-psi";
            if (theta) cfg.theta = *theta;
            if (phi) cfg.phi = *phi;
            cfg.validate();
            rows.push_back(run_point(cfg, "psi", cfg.alpha, cfg.s, cfg.theta, cfg.phi, 0));
        } else if (*snap) {
            command = "baseline-snap";
            rows.push_back(run_point(cfg, "snap", cfg.alpha, cfg.s, 0.0, 0.0, 0));
        } else if (*sweep) {
            command = "sweep";
            if (var) cfg.sweep.var = *var;
            if (circuit) cfg.sweep.circuit = *circuit;
            if (!grid.empty()) cfg.sweep.grid = grid;
            cfg.validate();
            rows = run_sweep(cfg);
        }
        cfg.experiment = command;
        write_outputs(cfg, command, rows, seconds_since(t0));
        if (*sweep && sweep->count("--fit")) {
            const FitResult r = fit_rows(rows);
            std::printf("fit: a = %.4g, b = %.4g, c = %.4g +- %.2g%s\n", r.a, r.b, r.c, r.sc,
                        r.converged ? "" : " (not converged)");
        }
        return 0;
    } catch (const CompileError &e) {
        std::cerr << "compile failed: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
