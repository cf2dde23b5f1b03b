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

#include "experiment.hpp"

#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

namespace catprep::exp {
namespace {

using nlohmann::json;

TEST(Config, RoundTripsThroughJson) {
    ExperimentConfig c;
    c.alpha = 2.9;
    c.noise.kappa_loss = 1e-4;
    c.sweep.grid = {0.5, 1.5};
    c.run.seed = 77;
    c.run.workers = 3;
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, MissingFieldsKeepDefaults) {
    const ExperimentConfig c = ExperimentConfig::from_json(json{{"alpha", 2.2}});
    EXPECT_DOUBLE_EQ(c.alpha, 2.2);
    EXPECT_DOUBLE_EQ(c.noise.gamma_fe, 1.0 / 1000.0);
    EXPECT_GE(c.run.workers, 1);
}

TEST(Config, RejectsUnknownFieldsWithPath) {
    try {
        ExperimentConfig::from_json(json{{"noise", {{"kappa_los", 1e-4}}}});
        FAIL() << "accepted a misspelled field";
    } catch (const ConfigError &e) {
        EXPECT_NE(std::string(e.what()).find("noise.kappa_los"), std::string::npos) << e.what();
    }
}

TEST(Config, RejectsWrongTypesAndRanges) {
    EXPECT_THROW(ExperimentConfig::from_json(json{{"alpha", "big"}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json{{"alpha", -1.0}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json{{"run", {{"trajectories", -5}}}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json{{"device", {{"parity_rounds", 1.5}}}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json{{"noise", {{"readout", {{1, 0, 0}, {0, 1, 0}, {0, 0, 0.5}}}}}}),
                 ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json{{"sweep", {{"var", "theta"}, {"circuit", "bell"}}}}), ConfigError);
    EXPECT_THROW(ExperimentConfig::from_json(json::array()), ConfigError);
}

TEST(Config, EnvironmentSeed) {
    ExperimentConfig c;
    ::setenv("CATPREP_SEED", "123", 1);
    apply_environment(c);
    EXPECT_EQ(c.run.seed, 123u);
    ::setenv("CATPREP_SEED", "12x", 1);
    EXPECT_THROW(apply_environment(c), ConfigError);
    ::unsetenv("CATPREP_SEED");
}

TEST(Config, DeviceUnitsAreConverted) {
    ExperimentConfig c;
    c.device.chi_f_mhz = 1.5;
    const DeviceSettings d = c.device_settings(2.4);
    EXPECT_DOUBLE_EQ(d.alpha, 2.4);
    EXPECT_NEAR(d.chi_f, 2 * 3.14159265358979 * 1.5, 1e-12);
    const NoiseModel m = c.noise_model(3, 4.0);
    EXPECT_EQ(m.modes.size(), 3u);
    EXPECT_DOUBLE_EQ(m.loss_rate(2), 4.0 / 8000.0);
}

TEST(Csv, RoundTripsExactly) {
    ResultRow r;
    r.experiment = "prep-psi";
    r.alpha = 2.6;
    r.s = 3;
    r.theta = 0.1 + 0.2;
    r.n_traj = 1234;
    r.f_L = 1.0 / 3.0 * 1e-4;
    r.f_L_ci_lo = 2e-5;
    r.f_L_ci_hi = 5e-5;
    r.p_success = 0.9512345678901234;
    r.w0 = 0.123;
    r.seed = 18446744073709551615ull;
    r.wall_seconds = 1.5;
    std::stringstream ss;
    write_csv(ss, {r, r});
    const auto back = read_csv(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].experiment, r.experiment);
    EXPECT_EQ(back[0].theta, r.theta);
    EXPECT_EQ(back[0].f_L, r.f_L);
    EXPECT_EQ(back[0].p_success, r.p_success);
    EXPECT_EQ(back[0].n_traj, r.n_traj);
    EXPECT_EQ(back[0].seed, r.seed);
}

TEST(Csv, HeaderMatchesSchema) {
    EXPECT_EQ(csv_header(),
              "experiment,alpha,s,theta,phi,n_traj,f_L,f_L_ci_lo,f_L_ci_hi,p_success,p_success_ci_lo,p_success_ci_hi,"
              "w0,seed,wall_seconds");
}

TEST(Csv, RejectsMalformedInput) {
    std::stringstream bad_header("a,b,c\n");
    EXPECT_THROW(read_csv(bad_header), ConfigError);
    std::stringstream short_row(csv_header() + "\nprep-bell,2.6\n");
    EXPECT_THROW(read_csv(short_row), ConfigError);
    std::stringstream bad_number(csv_header() + "\nprep-bell,2.6,1,0,0,10,x,0,0,1,1,1,1,1,0.1\n");
    EXPECT_THROW(read_csv(bad_number), ConfigError);
}

ExperimentConfig quick() {
    ExperimentConfig c;
    c.run.trajectories = 4;
    c.run.resamples = 50;
    c.run.workers = 1;
    c.run.seed = 9;
    return c;
}

TEST(Sweep, SingletonSweepEqualsDirectRun) {
    ExperimentConfig c = quick();
    c.sweep = {"s", "snap", {3.0}};
    const auto rows = run_sweep(c);
    const ResultRow direct = run_point(c, "snap", c.alpha, 3.0, 0.0, 0.0, 0);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].f_L, direct.f_L);
    EXPECT_EQ(rows[0].p_success, direct.p_success);
    EXPECT_EQ(rows[0].experiment, "baseline-snap");
}

TEST(Sweep, PointsUseDistinctStreams) {
    ExperimentConfig c = quick();
    c.run.trajectories = 50;
    c.sweep = {"s", "snap", {2.0, 2.0}};
    const auto rows = run_sweep(c);
    EXPECT_NE(rows[0].f_L, rows[1].f_L);
    EXPECT_EQ(rows[0].w0, rows[1].w0);
}

TEST(Fit, RecoversSyntheticExponentFromRows) {
    std::vector<ResultRow> rows;
    for (double s : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) {
        ResultRow r;
        r.s = s;
        r.f_L = 2e-5 + 7e-5 * std::pow(s, 2.1);
        r.f_L_ci_lo = 0.95 * r.f_L;
        r.f_L_ci_hi = 1.05 * r.f_L;
        rows.push_back(r);
    }
    const FitResult f = fit_rows(rows);
    EXPECT_TRUE(f.converged);
    EXPECT_NEAR(f.c, 2.1, 1e-6);
}

TEST(Manifest, RecordsRunIdentity) {
    ExperimentConfig c = quick();
    const json m = manifest(c, "prep-bell", 1.25);
    EXPECT_EQ(m["seed"], 9u);
    EXPECT_EQ(m["command"], "prep-bell");
    EXPECT_EQ(m["version"], CATPREP_VERSION);
    EXPECT_EQ(m["config"], c.to_json());
}

TEST(Selftest, AllChecksPass) {
    for (const auto &c : selftest()) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
}

}  // namespace
}  // namespace catprep::exp
