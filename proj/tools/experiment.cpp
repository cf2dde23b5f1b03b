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

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

namespace catprep::exp {
namespace {

using nlohmann::json;
constexpr double kPi = std::numbers::pi;

// Reads one JSON object strictly: every key must be claimed by a field.
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "config integers assume a 64-bit size_t");

class ObjectReader {
  public:
    ObjectReader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where("") + "expected an object");
    }

    template <class T>
    void field(const char *key, T &out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        read(*it, out, where(key));
    }

    template <class F>
    void object(const char *key, F &&fn) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        ObjectReader sub(*it, join(key));
        fn(sub);
        sub.finish();
    }

    void finish() const {
        for (const auto &item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError(where(item.key()) + "unknown field");
        }
    }

  private:
    std::string join(const std::string &key) const {
        return path_.empty() ? key : key.empty() ? path_ : path_ + "." + key;
    }
    std::string where(const std::string &key) const {
        const std::string p = join(key);
        return p.empty() ? "config: " : p + ": ";
    }

    static void read(const json &v, double &out, const std::string &at) {
        if (!v.is_number()) throw ConfigError(at + "expected a number");
        out = v.get<double>();
    }
    static void read(const json &v, int &out, const std::string &at) {
        if (!v.is_number_integer()) throw ConfigError(at + "expected an integer");
        out = v.get<int>();
    }
    static void read(const json &v, std::uint64_t &out, const std::string &at) {
        if (!v.is_number_unsigned()) throw ConfigError(at + "expected a non-negative integer");
        out = v.get<std::uint64_t>();
    }
    static void read(const json &v, bool &out, const std::string &at) {
        if (!v.is_boolean()) throw ConfigError(at + "expected true or false");
        out = v.get<bool>();
    }
    static void read(const json &v, std::string &out, const std::string &at) {
        if (!v.is_string()) throw ConfigError(at + "expected a string");
        out = v.get<std::string>();
    }
    static void read(const json &v, std::vector<double> &out, const std::string &at) {
        if (!v.is_array()) throw ConfigError(at + "expected an array of numbers");
        out.clear();
        for (const auto &x : v) {
            if (!x.is_number()) throw ConfigError(at + "expected an array of numbers");
            out.push_back(x.get<double>());
        }
    }
    static void read(const json &v, std::vector<std::vector<double>> &out, const std::string &at) {
        if (!v.is_array()) throw ConfigError(at + "expected a 3x3 array");
        out.clear();
        for (const auto &row : v) {
            std::vector<double> r;
            read(row, r, at);
            out.push_back(std::move(r));
        }
    }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_double(const std::string &s, const std::string &column) {
    char *end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("csv: bad number in column " + column + ": '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string &s, const std::string &column) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw ConfigError("csv: bad integer in column " + column + ": '" + s + "'");
    }
    return v;
}

CompiledCircuit compile(const std::string &circuit, const DeviceSettings &dev, double theta, double phi) {
    if (circuit == "bell") return compile_bell_phase(dev);
    if (circuit == "psi") return compile_psi(theta, phi, dev);
    if (circuit == "snap") return compile_snap_baseline(dev);
    throw ConfigError("circuit: expected bell, psi or snap, got '" + circuit + "'");
}

std::string experiment_name(const std::string &circuit) {
    if (circuit == "bell") return "prep-bell";
    if (circuit == "psi") return "prep-psi";
    return "baseline-snap";
}

}  // namespace

int available_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string &field, const std::string &why) { throw ConfigError(field + ": " + why); };
    if (!(alpha > 0.0 && alpha <= 6.0)) fail("alpha", "must lie in (0, 6]");
    if (!(s >= 0.0 && std::isfinite(s))) fail("s", "must be finite and >= 0");
    if (!(theta >= 0.0 && theta <= kPi / 2)) fail("theta", "must lie in [0, pi/2]");
    if (!(phi >= 0.0 && phi < 2 * kPi)) fail("phi", "must lie in [0, 2 pi)");
    if (!(device.chi_f_mhz != 0.0 && std::isfinite(device.chi_f_mhz))) fail("device.chi_f_mhz", "must be nonzero");
    if (!std::isfinite(device.chi_e_mhz)) fail("device.chi_e_mhz", "must be finite");
    if (device.truncation < 0) fail("device.truncation", "must be >= 0");
    if (!(device.drive_ratio > 0.0)) fail("device.drive_ratio", "must be > 0");
    if (device.parity_rounds < 1) fail("device.parity_rounds", "must be >= 1");
    const std::pair<const char *, double> rates[] = {{"noise.kappa_loss", noise.kappa_loss},
                                                     {"noise.kappa_deph", noise.kappa_deph},
                                                     {"noise.gamma_fe", noise.gamma_fe},
                                                     {"noise.gamma_phi", noise.gamma_phi},
                                                     {"noise.gamma_eg", noise.gamma_eg}};
    for (const auto &[name, v] : rates)
        if (!(v >= 0.0 && std::isfinite(v))) fail(name, "must be finite and >= 0");
    if (noise.readout.size() != 3) fail("noise.readout", "must be 3x3");
    for (std::size_t actual = 0; actual < 3; ++actual) {
        double col = 0.0;
        for (std::size_t r = 0; r < 3; ++r) {
            if (noise.readout[r].size() != 3) fail("noise.readout", "must be 3x3");
            if (!(noise.readout[r][actual] >= 0.0)) fail("noise.readout", "entries must be >= 0");
            col += noise.readout[r][actual];
        }
        if (std::abs(col - 1.0) > 1e-9) fail("noise.readout", "columns must sum to 1");
    }
    if (run.trajectories == 0 && run.target_ci > 0.0) fail("run.trajectories", "must be > 0 when target_ci is set");
    if (!(run.target_ci >= 0.0)) fail("run.target_ci", "must be >= 0");
    if (run.depth < 0) fail("run.depth", "must be >= 0");
    if (!(run.loss_bias > 0.0)) fail("run.loss_bias", "must be > 0");
    if (run.resamples < 10) fail("run.resamples", "must be >= 10");
    if (run.workers < 0) fail("run.workers", "must be >= 0");
    if (sweep.var != "alpha" && sweep.var != "s" && sweep.var != "theta") fail("sweep.var", "expected alpha, s or theta");
    if (sweep.circuit != "bell" && sweep.circuit != "psi" && sweep.circuit != "snap") {
        fail("sweep.circuit", "expected bell, psi or snap");
    }
    if (sweep.var == "theta" && sweep.circuit != "psi") fail("sweep.var", "theta sweeps need circuit psi");
    if (sweep.grid.empty()) fail("sweep.grid", "must not be empty");
    if (audit.time_points < 1) fail("audit.time_points", "must be >= 1");
    if (output.csv.empty()) fail("output.csv", "must not be empty");
}

json ExperimentConfig::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["alpha"] = alpha;
    j["s"] = s;
    j["theta"] = theta;
    j["phi"] = phi;
    j["device"] = {{"chi_f_mhz", device.chi_f_mhz},       {"chi_e_mhz", device.chi_e_mhz},
                   {"truncation", device.truncation},     {"drive_ratio", device.drive_ratio},
                   {"parity_rounds", device.parity_rounds}, {"check_before_measure_x", device.check_before_measure_x}};
    j["noise"] = {{"kappa_loss", noise.kappa_loss}, {"kappa_deph", noise.kappa_deph}, {"gamma_fe", noise.gamma_fe},
                  {"gamma_phi", noise.gamma_phi},   {"eps_e", noise.eps_e},           {"eps_f", noise.eps_f},
                  {"gamma_eg", noise.gamma_eg},     {"readout", noise.readout}};
    j["run"] = {{"trajectories", run.trajectories}, {"target_ci", run.target_ci},
                {"max_trajectories", run.max_trajectories}, {"depth", run.depth},
                {"loss_bias", run.loss_bias},       {"resamples", run.resamples},
                {"seed", run.seed},                 {"workers", run.workers}};
    j["sweep"] = {{"var", sweep.var}, {"circuit", sweep.circuit}, {"grid", sweep.grid}};
    j["audit"] = {{"gadget", audit.gadget}, {"time_points", audit.time_points}};
    j["output"] = {{"csv", output.csv}, {"manifest", output.manifest}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json &j) {
    ExperimentConfig c;
    ObjectReader r(j, "");
    r.field("experiment", c.experiment);
    r.field("alpha", c.alpha);
    r.field("s", c.s);
    r.field("theta", c.theta);
    r.field("phi", c.phi);
    r.object("device", [&](ObjectReader &d) {
        d.field("chi_f_mhz", c.device.chi_f_mhz);
        d.field("chi_e_mhz", c.device.chi_e_mhz);
        d.field("truncation", c.device.truncation);
        d.field("drive_ratio", c.device.drive_ratio);
        d.field("parity_rounds", c.device.parity_rounds);
        d.field("check_before_measure_x", c.device.check_before_measure_x);
    });
    r.object("noise", [&](ObjectReader &n) {
        n.field("kappa_loss", c.noise.kappa_loss);
        n.field("kappa_deph", c.noise.kappa_deph);
        n.field("gamma_fe", c.noise.gamma_fe);
        n.field("gamma_phi", c.noise.gamma_phi);
        n.field("eps_e", c.noise.eps_e);
        n.field("eps_f", c.noise.eps_f);
        n.field("gamma_eg", c.noise.gamma_eg);
        n.field("readout", c.noise.readout);
    });
    r.object("run", [&](ObjectReader &x) {
        x.field("trajectories", c.run.trajectories);
        x.field("target_ci", c.run.target_ci);
        x.field("max_trajectories", c.run.max_trajectories);
        x.field("depth", c.run.depth);
        x.field("loss_bias", c.run.loss_bias);
        x.field("resamples", c.run.resamples);
        x.field("seed", c.run.seed);
        x.field("workers", c.run.workers);
    });
    r.object("sweep", [&](ObjectReader &x) {
        x.field("var", c.sweep.var);
        x.field("circuit", c.sweep.circuit);
        x.field("grid", c.sweep.grid);
    });
    r.object("audit", [&](ObjectReader &x) {
        x.field("gadget", c.audit.gadget);
        x.field("time_points", c.audit.time_points);
    });
    r.object("output", [&](ObjectReader &x) {
        x.field("csv", c.output.csv);
        x.field("manifest", c.output.manifest);
    });
    r.finish();
    c.validate();
    if (c.run.workers == 0) c.run.workers = available_workers();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

DeviceSettings ExperimentConfig::device_settings(double alpha_value) const {
    DeviceSettings d;
    d.alpha = alpha_value;
    d.chi_f = 2 * kPi * device.chi_f_mhz;
    d.chi_e = 2 * kPi * device.chi_e_mhz;
    d.truncation = device.truncation;
    d.protocol.drive_ratio = device.drive_ratio;
    d.protocol.parity_rounds = device.parity_rounds;
    d.protocol.check_before_measure_x = device.check_before_measure_x;
    return d;
}

NoiseModel ExperimentConfig::noise_model(std::size_t modes, double s_value) const {
    NoiseModel m;
    m.modes.assign(modes, ModeNoise{noise.kappa_loss, noise.kappa_deph});
    m.ancilla.gamma_fe = noise.gamma_fe;
    m.ancilla.gamma_phi = noise.gamma_phi;
    m.ancilla.eps_e = noise.eps_e;
    m.ancilla.eps_f = noise.eps_f;
    m.ancilla.gamma_eg = noise.gamma_eg;
    for (int r = 0; r < 3; ++r)
        for (int a = 0; a < 3; ++a) m.readout(r, a) = noise.readout[static_cast<std::size_t>(r)][static_cast<std::size_t>(a)];
    m.multiplier = s_value;
    m.validate();
    return m;
}

RunSettings ExperimentConfig::run_settings(std::uint64_t stream) const {
    RunSettings r;
    r.trajectories = run.trajectories;
    r.target_ci = run.target_ci;
    r.max_trajectories = run.max_trajectories;
    r.depth = run.depth;
    r.loss_bias = run.loss_bias;
    r.resamples = run.resamples;
    r.seed = run.seed;
    r.stream = stream;
    r.workers = run.workers > 0 ? run.workers : available_workers();
    return r;
}

void apply_environment(ExperimentConfig &cfg) {
    const char *seed = std::getenv("CATPREP_SEED");
    if (!seed) return;
    try {
        cfg.run.seed = parse_u64(seed, "CATPREP_SEED");
    } catch (const ConfigError &) {
        throw ConfigError(std::string("CATPREP_SEED: expected a non-negative integer, got '") + seed + "'");
    }
}

const std::string &csv_header() {
    static const std::string h =
        "experiment,alpha,s,theta,phi,n_traj,f_L,f_L_ci_lo,f_L_ci_hi,p_success,p_success_ci_lo,p_success_ci_hi,w0,"
        "seed,wall_seconds";
    return h;
}

std::string csv_line(const ResultRow &r) {
    std::ostringstream os;
    os << r.experiment << ',' << fmt(r.alpha) << ',' << fmt(r.s) << ',' << fmt(r.theta) << ',' << fmt(r.phi) << ','
       << r.n_traj << ',' << fmt(r.f_L) << ',' << fmt(r.f_L_ci_lo) << ',' << fmt(r.f_L_ci_hi) << ','
       << fmt(r.p_success) << ',' << fmt(r.p_success_ci_lo) << ',' << fmt(r.p_success_ci_hi) << ',' << fmt(r.w0)
       << ',' << r.seed << ',' << std::fixed << std::setprecision(3) << r.wall_seconds;
    return os.str();
}

void write_csv(std::ostream &os, const std::vector<ResultRow> &rows) {
    os << csv_header() << '\n';
    for (const auto &r : rows) os << csv_line(r) << '\n';
}

std::vector<ResultRow> read_csv(std::istream &is) {
    std::string line;
    if (!std::getline(is, line)) throw ConfigError("csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != csv_header()) throw ConfigError("csv: header does not match the result schema");
    std::vector<std::string> names;
    {
        std::istringstream hs(line);
        std::string c;
        while (std::getline(hs, c, ',')) names.push_back(c);
    }
    std::vector<ResultRow> rows;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) f.push_back(c);
        if (f.size() != names.size()) throw ConfigError("csv: row has " + std::to_string(f.size()) + " fields");
        ResultRow r;
        r.experiment = f[0];
        double *numbers[] = {&r.alpha, &r.s, &r.theta, &r.phi};
        for (int i = 0; i < 4; ++i) *numbers[i] = parse_double(f[static_cast<std::size_t>(1 + i)], names[static_cast<std::size_t>(1 + i)]);
        r.n_traj = static_cast<std::size_t>(parse_u64(f[5], names[5]));
        double *rest[] = {&r.f_L, &r.f_L_ci_lo, &r.f_L_ci_hi, &r.p_success, &r.p_success_ci_lo, &r.p_success_ci_hi, &r.w0};
        for (int i = 0; i < 7; ++i) *rest[i] = parse_double(f[static_cast<std::size_t>(6 + i)], names[static_cast<std::size_t>(6 + i)]);
        r.seed = parse_u64(f[13], names[13]);
        r.wall_seconds = parse_double(f[14], names[14]);
        rows.push_back(std::move(r));
    }
    return rows;
}

ResultRow run_point(const ExperimentConfig &cfg, const std::string &circuit, double alpha, double s, double theta,
                    double phi, std::uint64_t stream, EstimatorResult *detail) {
    const auto c = compile(circuit, cfg.device_settings(alpha), theta, phi);
    NoiseModel model = cfg.noise_model(c.schedule.layout->num_modes(), s);
    if (circuit == "snap") model = baseline_noise(model);
    const EstimatorResult res = run_circuit(c, model, cfg.run_settings(stream));
    ResultRow row;
    row.experiment = experiment_name(circuit);
    row.alpha = alpha;
    row.s = s;
    row.theta = circuit == "psi" ? theta : 0.0;
    row.phi = circuit == "psi" ? phi : 0.0;
    row.n_traj = res.trajectories;
    row.f_L = res.summary.infidelity;
    row.f_L_ci_lo = res.infidelity_ci.lo;
    row.f_L_ci_hi = res.infidelity_ci.hi;
    row.p_success = res.summary.success;
    row.p_success_ci_lo = res.success_ci.lo;
    row.p_success_ci_hi = res.success_ci.hi;
    row.w0 = res.w0;
    row.seed = cfg.run.seed;
    row.wall_seconds = res.wall_seconds;
    if (detail) *detail = res;
    return row;
}

std::vector<ResultRow> run_sweep(const ExperimentConfig &cfg) {
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < cfg.sweep.grid.size(); ++i) {
        double alpha = cfg.alpha, s = cfg.s, theta = cfg.theta;
        const double v = cfg.sweep.grid[i];
        if (cfg.sweep.var == "alpha") alpha = v;
        if (cfg.sweep.var == "s") s = v;
        if (cfg.sweep.var == "theta") theta = v;
        rows.push_back(run_point(cfg, cfg.sweep.circuit, alpha, s, theta, cfg.phi, i));
    }
    return rows;
}

FitResult fit_rows(const std::vector<ResultRow> &rows) {
    std::vector<double> s, f, sigma;
    for (const auto &r : rows) {
        s.push_back(r.s);
        f.push_back(r.f_L);
        // A degenerate interval (no jump samples) still needs a finite weight.
        const double half = 0.5 * (r.f_L_ci_hi - r.f_L_ci_lo);
        sigma.push_back(half > 0.0 ? half : std::max(1e-3 * std::abs(r.f_L), 1e-12));
    }
    return fit_power_law(s, f, sigma);
}

std::vector<AuditSummary> run_audit(const ExperimentConfig &cfg, const std::string &name) {
    std::vector<std::string> names;
    if (name == "all") {
        names = gadget_names();
        names.push_back("bell");
    } else {
        names = {name};
    }
    const DeviceSettings dev = cfg.device_settings(cfg.alpha);
    std::vector<AuditSummary> out;
    for (const auto &n : names) {
        const auto t0 = std::chrono::steady_clock::now();
        CompiledCircuit c = n == "bell"  ? compile_bell_phase(dev)
                            : n == "psi" ? compile_psi(cfg.theta, cfg.phi, dev)
                                         : compile_gadget(n, dev);
        const NoiseModel model = cfg.noise_model(c.schedule.layout->num_modes(), 1.0);
        AuditSummary a{n, fault_injection_audit(c, model, cfg.audit.time_points, cfg.run_settings(0).workers), 0.0};
        a.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(a));
    }
    return out;
}

void write_audit_csv(std::ostream &os, const std::vector<AuditSummary> &audits) {
    os << "gadget,pc,segment,time,channel,fault_weight,accepted,heralded_e,infidelity,contribution,bound,pass\n";
    for (const auto &a : audits) {
        for (const auto &r : a.report.rows) {
            os << a.gadget << ',' << r.pc << ',' << r.segment << ',' << fmt(r.time) << ',' << r.channel << ','
               << fmt(r.fault_weight) << ',' << fmt(r.accepted) << ',' << fmt(r.heralded_e) << ','
               << fmt(r.infidelity) << ',' << fmt(r.contribution) << ',' << fmt(a.report.bound) << ','
               << (r.contribution <= a.report.bound ? 1 : 0) << '\n';
        }
    }
}

json manifest(const ExperimentConfig &cfg, const std::string &command, double wall_seconds) {
    json m;
    m["command"] = command;
    m["config"] = cfg.to_json();
    m["seed"] = cfg.run.seed;
    m["version"] = CATPREP_VERSION;
    m["wall_seconds"] = wall_seconds;
    m["workers"] = cfg.run_settings(0).workers;
    return m;
}

std::vector<Check> selftest() {
    std::vector<Check> out;
    auto add = [&](std::string name, bool ok, std::string detail) { out.push_back({std::move(name), ok, std::move(detail)}); };
    auto guarded = [&](const std::string &name, const std::function<void()> &fn) {
        try {
            fn();
        } catch (const std::exception &e) {
            add(name, false, std::string("threw: ") + e.what());
        }
    };

    guarded("displacement matrix element <2|D(1)|0>", [&] {
        const ModeSpec space{24, "m"};
        const double got = std::abs(displacement_matrix(space, 1.0)(2, 0));
        // <2|D(b)|0> = e^{-|b|^2/2} b^2 / sqrt(2)
        const double want = std::exp(-0.5) / std::sqrt(2.0);
        add("displacement matrix element <2|D(1)|0>", std::abs(got - want) < 1e-10 && std::abs(got - 0.42888) < 5e-6,
            "got " + fmt(got));
    });

    guarded("displacement unitarity and composition", [&] {
        const ModeSpec space{60, "m"};
        const cplx a(1.3, -0.4), b(-0.7, 0.9);
        const DenseOp da = displacement_matrix(space, a);
        const DenseOp db = displacement_matrix(space, b);
        const DenseOp dab = displacement_matrix(space, a + b);
        const DenseOp dm = displacement_matrix(space, -a);
        // Products pass through the truncation edge, so only a low block is exact.
        const int low = 20;
        const double inv = (da * dm - DenseOp::Identity(60, 60)).topLeftCorner(low, low).cwiseAbs().maxCoeff();
        // D(a) D(b) = e^{i Im(a b*)} D(a + b)
        const cplx ph = std::exp(cplx(0, std::imag(a * std::conj(b))));
        const double comp = (da * db - ph * dab).topLeftCorner(low, low).cwiseAbs().maxCoeff();
        const double uni = (da.adjoint() * da - DenseOp::Identity(60, 60)).topLeftCorner(low, low).cwiseAbs().maxCoeff();
        add("displacement unitarity and composition", inv < 1e-8 && comp < 1e-8 && uni < 1e-8,
            "inverse " + fmt(inv) + ", composition " + fmt(comp) + ", unitarity " + fmt(uni));
    });

    guarded("cat code words have mod-4 support", [&] {
        const ModeSpec space{default_truncation(2.6), "m"};
        double off = 0.0;
        const ModeKet z = cat_state(space, 2.6, CatWord::zero);
        const ModeKet o = cat_state(space, 2.6, CatWord::one);
        for (int n = 0; n < space.truncation; ++n) {
            if (n % 4 != 0) off += std::norm(z[n]);
            if (n % 4 != 2) off += std::norm(o[n]);
        }
        add("cat code words have mod-4 support", off < 1e-24 && std::abs(z.norm() - 1) < 1e-12, "off-support " + fmt(off));
    });

    guarded("parity projector algebra", [&] {
        const ModeSpec space{16, "m"};
        const auto ops = mode_operators(space);
        const Eigen::MatrixXcd e(ops.even.matrix);
        const Eigen::MatrixXcd o(ops.odd.matrix);
        const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(16, 16);
        const double err = std::max({(e + o - id).norm(), (e * e - e).norm(), (e * o).norm()});
        add("parity projector algebra", err < 1e-14, "max error " + fmt(err));
    });

    guarded("parity measurement reads Fock parity", [&] {
        const auto layout = cat_layout(1, 2.0, 2 * kPi * 2.0, 12);
        ProtocolOptions opt;
        opt.alpha = 2.0;
        double err = 0.0;
        for (int n = 0; n < 8; ++n) {
            ScheduleBuilder b(layout);
            parity_measure(b, 0, opt, Branch::discard());
            const Schedule sched = b.build(0, {0}, 2.0, "parity");
            double acc = 0.0;
            for (const auto &o : run_gadget(sched, StateVector::product(layout, {fock_state(layout->mode(0), n)}), noiseless(1)))
                if (o.accepted) acc += o.probability;
            err = std::max(err, std::abs(acc - (n % 2 == 0 ? 1.0 : 0.0)));
        }
        add("parity measurement reads Fock parity", err < 1e-12, "max error " + fmt(err));
    });

    guarded("pulse pair imprints pi - offset", [&] {
        double err = 0.0;
        for (double d : {0.0, 0.3, kPi / 2, 2.0, kPi}) {
            const Eigen::Matrix3cd u = ancilla_rotation(kPi, d) * ancilla_rotation(kPi, 0.0);
            err = std::max(err, std::abs(u(0, 0) - std::polar(1.0, kPi - d)));
            err = std::max(err, std::abs(u(2, 0)));
        }
        add("pulse pair imprints pi - offset", err < 1e-14, "max error " + fmt(err));
    });

    for (const auto &name : gadget_names()) {
        guarded("gadget " + name + " compiles", [&] {
            const auto c = compile_gadget(name, DeviceSettings{});
            add("gadget " + name + " compiles", true, "noiseless infidelity " + fmt(c.noiseless_infidelity));
        });
    }
    guarded("bell circuit compiles", [&] {
        const auto c = compile_bell_phase(DeviceSettings{});
        add("bell circuit compiles", true, "noiseless infidelity " + fmt(c.noiseless_infidelity));
    });
    guarded("psi circuit compiles", [&] {
        const auto c = compile_psi(kPi / 6, 0.0, DeviceSettings{});
        add("psi circuit compiles", true, "noiseless infidelity " + fmt(c.noiseless_infidelity));
    });
    guarded("snap baseline compiles", [&] {
        const auto c = compile_snap_baseline(DeviceSettings{});
        add("snap baseline compiles", true, "noiseless infidelity " + fmt(c.noiseless_infidelity));
    });
    return out;
}

}  // namespace catprep::exp
