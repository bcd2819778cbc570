// pythia: offline calibration, table-driven simulation, data validation and
// plot-ready report emission for the heterogeneous packet-processing
// scheduler.
//
// Exit codes: 0 success, 1 usage, 2 validation failure, 3 runtime error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "pythia/livebackend.hpp"
#include "pythia/simengine.hpp"

namespace fs = std::filesystem;
using namespace pythia;

namespace {

PerfTable load_table_for(const ScenarioSpec& s) {
    if (s.calibration_file.empty()) throw UsageError("scenario does not name a calibration_file");
    return load_calibration(s.calibration_file, s.devices);
}

PolicyRegistry& registry() {
    static PolicyRegistry reg = [] {
        PolicyRegistry r;
        // Shipped example of a user-defined policy: best work per watt.
        r.register_user_policy("gbps_per_watt", [](const ConfigStore& store, const PolicyContext&) {
            int best = -1;
            double best_v = -1;
            for (const auto& [id, e] : store) {
                if (!e.stats.profiled || e.stats.avg_power_watts <= 0) continue;
                double v = e.stats.agg_gbps / e.stats.avg_power_watts;
                if (v > best_v) {
                    best_v = v;
                    best = id;
                }
            }
            if (best < 0) throw InvariantError("gbps_per_watt: nothing profiled");
            return best;
        });
        return r;
    }();
    return reg;
}

int cmd_calibrate(const std::string& scenario_path, const std::string& backend_sel, int training_override,
                  const std::string& out_path) {
    auto t0 = std::chrono::steady_clock::now();
    ScenarioSpec s = parse_scenario(scenario_path);
    if (!backend_sel.empty()) s.backend = backend_sel;
    int training = training_override > 0 ? training_override : s.training_batches;

    std::unique_ptr<Backend> backend;
    PerfTable table;
    if (s.backend == "sim") {
        table = load_table_for(s);
        backend = std::make_unique<SimEngine>(table, s, &registry());
    } else {
        auto live = std::make_unique<LiveCpuBackend>(s.devices, s.seed, s.packet_bytes, s.match_target);
        for (const auto& a : s.apps) live->set_app_kernel(a.id, a.kernel);
        backend = std::move(live);
    }

    auto configs = enumerate_configs(s.app_ids(), s.device_ids(), s.batch_grid);
    ConfigStore store = build_store(configs, training, *backend);

    int profiled = 0, skipped = 0;
    for (const auto& [id, e] : store) (e.stats.profiled ? profiled : skipped)++;

    std::ofstream out(out_path);
    if (!out) throw UsageError("cannot write store file: " + out_path);
    store.serialize(out);

    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "profiled " << configs.size() << " configurations (" << profiled << " usable";
    if (skipped) std::cout << ", " << skipped << " unprofiled";
    std::cout << ") in " << fmt_double(elapsed) << " s -> " << out_path << "\n";
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& store_path, const std::string& out_dir,
                 std::int64_t seed_override, double monitor_override, bool paper_fidelity,
                 const std::string& control_file) {
    ScenarioSpec s = parse_scenario(scenario_path);
    if (seed_override >= 0) s.seed = static_cast<std::uint64_t>(seed_override);
    if (monitor_override > 0) s.monitor_interval_ms = monitor_override;
    if (paper_fidelity) s.hysteresis_frac = 0;

    std::ifstream in(store_path);
    if (!in) throw UsageError("cannot open store file: " + store_path);
    ConfigStore store = ConfigStore::deserialize(in);
    if (store.empty()) throw std::runtime_error("store is empty: " + store_path);

    // the store must cover this scenario's apps and devices
    auto kernels = s.app_kernels();
    for (const auto& [id, e] : store) {
        for (const auto& [app, dev] : e.config.mapping) {
            if (!kernels.count(app))
                throw std::runtime_error("store/scenario mismatch: store maps unknown app '" + app + "'");
            bool dev_ok = false;
            for (const auto& d : s.devices) dev_ok = dev_ok || d.id == dev;
            if (!dev_ok) throw std::runtime_error("store/scenario mismatch: unknown device '" + dev + "'");
        }
    }

    PerfTable table = load_table_for(s);
    SimEngine engine(table, s, &registry());

    if (!control_file.empty()) {
        engine.set_control_poll([control_file, pos = std::streamoff(0)]() mutable {
            std::vector<std::string> lines;
            std::ifstream f(control_file);
            if (!f) return lines;
            f.seekg(pos);
            std::string line;
            while (std::getline(f, line)) {
                auto t = trim(line);
                if (!t.empty()) lines.emplace_back(t);
                pos = f.tellg();
                if (pos < 0) break;
            }
            return lines;
        });
    }

    Trace tr = engine.run(store);

    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "trace.csv");
        tr.write_trace_csv(f);
    }
    {
        std::ofstream f(fs::path(out_dir) / "switches.csv");
        tr.write_switches_csv(f);
    }
    {
        std::ofstream f(fs::path(out_dir) / "summary.txt");
        tr.write_summary(f);
        for (const auto& n : tr.notes) f << "note " << n << '\n';
    }

    std::cout << "simulated " << fmt_double(tr.summary.horizon_ms) << " ms: mean "
              << fmt_double(tr.summary.mean_processed_gbps) << " Gbps, peak "
              << fmt_double(tr.summary.peak_processed_gbps) << " Gbps, mean power "
              << fmt_double(tr.summary.mean_power_watts) << " W, energy "
              << fmt_double(tr.summary.total_energy_joules) << " J, drops " << tr.summary.total_drops
              << ", switches " << tr.summary.switch_count << "\n";
    if (!tr.conservation_ok) throw std::runtime_error("packet conservation check failed");
    return 0;
}

int cmd_validate(const std::string& calibration_path, const std::string& devices_path) {
    auto devices = load_device_profiles(devices_path);
    PerfTable table;
    try {
        table = load_calibration(calibration_path, devices);
    } catch (const ParseError& e) {
        std::cout << "no data: " << e.what() << "\n";
        return 2;
    }

    auto results = run_all_checks(table);
    bool all_ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.rows_checked << " rows)\n";
        all_ok = all_ok && r.passed;
        std::size_t shown = 0;
        for (const auto& o : r.offenders) {
            if (++shown > 5) {
                std::cout << "      ... " << (r.offenders.size() - 5) << " more\n";
                break;
            }
            std::cout << "      worst: " << o.key << " value " << fmt_double(o.value) << " (" << o.detail << ")\n";
        }
    }
    return all_ok ? 0 : 2;
}

int cmd_report(const std::string& trace_path, const std::string& switches_path, const std::string& out_dir) {
    std::ifstream in(trace_path);
    if (!in) throw UsageError("cannot open trace: " + trace_path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("malformed trace: empty file");
    auto cols = split(trim(header), ',');
    if (cols.size() < 6 || cols[0] != "t_ms") throw std::runtime_error("malformed trace header");
    std::vector<std::string> devices;
    for (std::size_t i = 6; i < cols.size(); ++i) {
        std::string c(cols[i]);
        if (c.rfind("dev:", 0) != 0 || c.find("_watts") == std::string::npos)
            throw std::runtime_error("malformed trace header column: " + c);
        devices.push_back(c.substr(4, c.size() - 4 - 6));
    }

    fs::create_directories(out_dir);
    std::ofstream thr(fs::path(out_dir) / "throughput.csv");
    std::ofstream pow(fs::path(out_dir) / "power.csv");
    std::ofstream lat(fs::path(out_dir) / "latency.csv");
    thr << "t_ms,offered_gbps,processed_gbps\n";
    pow << "t_ms";
    for (const auto& d : devices) pow << ',' << d;
    pow << ",total\n";
    lat << "t_ms,latency_ms\n";

    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        auto f = split(trim(line), ',');
        if (f.size() != 6 + devices.size()) throw std::runtime_error("malformed trace row");
        thr << f[0] << ',' << f[2] << ',' << f[3] << '\n';
        lat << f[0] << ',' << f[4] << '\n';
        pow << f[0];
        double total = 0;
        for (std::size_t i = 0; i < devices.size(); ++i) {
            pow << ',' << f[6 + i];
            total += parse_double(f[6 + i], "watts");
        }
        pow << ',' << fmt_double(total) << '\n';
        ++rows;
    }

    std::ofstream ann(fs::path(out_dir) / "annotations.csv");
    ann << "t_ms,kind,from,to,reason,completion_ms\n";
    if (!switches_path.empty()) {
        std::ifstream sw(switches_path);
        if (!sw) throw UsageError("cannot open switches file: " + switches_path);
        std::string swline;
        std::getline(sw, swline);  // header
        while (std::getline(sw, swline)) {
            auto f = split(trim(swline), ',');
            if (f.size() < 5) throw std::runtime_error("malformed switches row");
            ann << f[0] << ",switch," << f[1] << ',' << f[2] << ',' << f[3] << ',' << f[4] << '\n';
        }
    }

    std::cout << "report: " << rows << " rows -> " << out_dir
              << " (throughput.csv, power.csv, latency.csv, annotations.csv)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"table-calibrated scheduling of concurrent packet-processing apps on heterogeneous devices"};
    app.require_subcommand(1);

    std::string scenario, out, backend, store, control_file, calibration, devices_path, trace, switches;
    int training = -1;
    std::int64_t seed = -1;
    double monitor = -1;
    bool paper_fidelity = false;

    auto* cal = app.add_subcommand("calibrate", "profile every configuration and write the store");
    cal->add_option("--scenario", scenario, "scenario file")->required();
    cal->add_option("--backend", backend, "sim or live (default: scenario)");
    cal->add_option("--training-batches", training, "batches per app per configuration");
    cal->add_option("--out", out, "store file to write")->required();

    auto* sim = app.add_subcommand("simulate", "run a scenario against a store");
    sim->add_option("--scenario", scenario, "scenario file")->required();
    sim->add_option("--store", store, "store file from calibrate")->required();
    sim->add_option("--out", out, "output directory")->required();
    sim->add_option("--seed", seed, "override the scenario seed");
    sim->add_option("--monitor-interval-ms", monitor, "override the monitor interval");
    sim->add_flag("--paper-fidelity", paper_fidelity, "disable switch hysteresis");
    sim->add_option("--control-file", control_file, "command file polled every tick");

    auto* val = app.add_subcommand("validate", "run the calibration data checks");
    val->add_option("--calibration", calibration, "calibration csv")->required();
    val->add_option("--devices", devices_path, "device profile file")->required();

    auto* rep = app.add_subcommand("report", "emit plot-ready series from a trace");
    rep->add_option("--trace", trace, "trace.csv from simulate")->required();
    rep->add_option("--switches", switches, "switches.csv from simulate");
    rep->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (cal->parsed()) return cmd_calibrate(scenario, backend, training, out);
        if (sim->parsed()) return cmd_simulate(scenario, store, out, seed, monitor, paper_fidelity, control_file);
        if (val->parsed()) return cmd_validate(calibration, devices_path);
        if (rep->parsed()) return cmd_report(trace, switches, out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
