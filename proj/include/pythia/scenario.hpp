#pragma once

/// Scenario files: versioned, line-oriented, strict.  Unknown keys are
/// errors so that a regression scenario can never silently degrade into a
/// different experiment.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pythia/config.hpp"
#include "pythia/profiler.hpp"
#include "pythia/policies.hpp"
#include "pythia/traffic.hpp"
#include "pythia/util.hpp"

namespace pythia {

struct TimedCommand {
    double t_ms = 0;
    std::string command;  // "policy <name>" or "shutdown <ms>"
};

struct ScenarioSpec {
    std::string name;
    std::uint64_t seed = 1;
    double horizon_ms = 10000;
    double monitor_interval_ms = 1000;
    double hysteresis_frac = 0.02;
    double ingest_cap_gbps = 30.0;  // <= 0 disables the cap
    int interfaces = 4;
    int packet_bytes = kDefaultPacketBytes;
    int flows = kDefaultFlowsPerStream;
    int burst = 1;
    std::vector<int> batch_grid = kDefaultBatchGrid;
    int training_batches = kDefaultTrainingBatches;
    double match_target = 0.30;
    std::string backend = "sim";
    PolicyId policy;
    std::vector<DeviceProfile> devices;
    std::vector<AppSpec> apps;
    RateSchedule schedule;  // keyed per (app, iface)
    std::vector<TimedCommand> commands;
    std::uint64_t backlog_cap_packets = 1u << 20;

    std::string devices_file;
    std::string calibration_file;

    std::map<std::string, std::string> app_kernels() const {
        std::map<std::string, std::string> out;
        for (const auto& a : apps) out[a.id] = a.kernel;
        return out;
    }

    std::vector<std::string> app_ids() const {
        std::vector<std::string> out;
        for (const auto& a : apps) out.push_back(a.id);
        return out;
    }

    std::vector<std::string> device_ids() const {
        std::vector<std::string> out;
        for (const auto& d : devices) out.push_back(d.id);
        return out;
    }

    void validate() const {
        if (apps.empty()) throw ParseError("scenario: no apps");
        if (devices.empty()) throw ParseError("scenario: no devices");
        if (horizon_ms <= 0) throw ParseError("scenario: horizon must be > 0");
        if (monitor_interval_ms <= 0) throw ParseError("scenario: monitor interval must be > 0");
        if (interfaces < 1) throw ParseError("scenario: need at least one interface");
        if (batch_grid.empty()) throw ParseError("scenario: empty batch grid");
        for (const auto& a : apps) {
            if (a.ifaces.empty()) throw ParseError("scenario: app " + a.id + " has no interfaces");
            for (int f : a.ifaces)
                if (f < 0 || f >= interfaces)
                    throw ParseError("scenario: app " + a.id + " references interface " + std::to_string(f));
            if (a.kernel != "aes" && a.kernel != "dpi" && a.kernel != "md5")
                throw ParseError("scenario: app " + a.id + " has unknown kernel '" + a.kernel + "'");
        }
        // one worker per interface: interfaces cannot be shared between apps
        std::set<int> used;
        for (const auto& a : apps)
            for (int f : a.ifaces)
                if (!used.insert(f).second)
                    throw ParseError("scenario: interface " + std::to_string(f) + " assigned twice");
        for (const auto& [key, steps] : schedule.streams) {
            for (const auto& s : steps) {
                if (s.start_ms < 0 || s.start_ms >= horizon_ms)
                    throw ParseError("scenario: rate step outside horizon for app " + key.first);
                if (s.gbps > kIfaceLineRateGbps + 1e-9)
                    throw ParseError("scenario: per-interface rate above line rate for app " + key.first);
            }
        }
        for (const auto& c : commands)
            if (c.t_ms < 0 || c.t_ms >= horizon_ms) throw ParseError("scenario: timed command outside horizon");
    }
};

/// Parse a scenario file; `devices_file`/`calibration_file` paths are
/// resolved relative to the scenario's own directory.
inline ScenarioSpec parse_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario: " + path);
    std::filesystem::path base = std::filesystem::path(path).parent_path();

    ScenarioSpec s;
    std::string line;
    int lineno = 0;
    bool versioned = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (auto hash = t.find('#'); hash != std::string_view::npos) t = trim(t.substr(0, hash));
        if (t.empty()) continue;
        auto err = [&](const std::string& msg) {
            return ParseError(path + ":" + std::to_string(lineno) + ": " + msg);
        };
        auto tok = tokenize(t);
        if (!versioned) {
            if (tok.size() != 2 || tok[0] != "pythia-scenario" || tok[1] != "v1")
                throw err("expected header 'pythia-scenario v1'");
            versioned = true;
            continue;
        }
        const auto& key = tok[0];
        auto need = [&](std::size_t n) {
            if (tok.size() != n + 1) throw err("key '" + std::string(key) + "' expects " + std::to_string(n) + " value(s)");
        };
        if (key == "name") {
            need(1);
            s.name = std::string(tok[1]);
        } else if (key == "seed") {
            need(1);
            s.seed = static_cast<std::uint64_t>(parse_int(tok[1], "seed"));
        } else if (key == "horizon_ms") {
            need(1);
            s.horizon_ms = parse_double(tok[1], "horizon_ms");
        } else if (key == "monitor_interval_ms") {
            need(1);
            s.monitor_interval_ms = parse_double(tok[1], "monitor_interval_ms");
        } else if (key == "hysteresis_pct") {
            need(1);
            s.hysteresis_frac = parse_double(tok[1], "hysteresis_pct") / 100.0;
        } else if (key == "ingest_cap_gbps") {
            need(1);
            s.ingest_cap_gbps = parse_double(tok[1], "ingest_cap_gbps");
        } else if (key == "interfaces") {
            need(1);
            s.interfaces = static_cast<int>(parse_int(tok[1], "interfaces"));
        } else if (key == "packet_bytes") {
            need(1);
            s.packet_bytes = static_cast<int>(parse_int(tok[1], "packet_bytes"));
            if (s.packet_bytes < 64 || s.packet_bytes > 1514) throw err("packet_bytes must be in [64, 1514]");
        } else if (key == "flows") {
            need(1);
            s.flows = static_cast<int>(parse_int(tok[1], "flows"));
        } else if (key == "burst") {
            need(1);
            s.burst = static_cast<int>(parse_int(tok[1], "burst"));
        } else if (key == "batch_grid") {
            s.batch_grid.clear();
            for (std::size_t i = 1; i < tok.size(); ++i)
                s.batch_grid.push_back(static_cast<int>(parse_int(tok[i], "batch")));
            if (s.batch_grid.empty()) throw err("batch_grid needs at least one size");
        } else if (key == "training_batches") {
            need(1);
            s.training_batches = static_cast<int>(parse_int(tok[1], "training_batches"));
        } else if (key == "match_target") {
            need(1);
            s.match_target = parse_double(tok[1], "match_target");
        } else if (key == "backend") {
            need(1);
            s.backend = std::string(tok[1]);
            if (s.backend != "sim" && s.backend != "live") throw err("backend must be sim or live");
        } else if (key == "backlog_cap_packets") {
            need(1);
            s.backlog_cap_packets = static_cast<std::uint64_t>(parse_int(tok[1], "backlog_cap_packets"));
        } else if (key == "policy") {
            std::string rest;
            for (std::size_t i = 1; i < tok.size(); ++i) {
                if (i > 1) rest += ' ';
                rest += std::string(tok[i]);
            }
            s.policy = parse_policy(rest);
        } else if (key == "devices_file") {
            need(1);
            s.devices_file = (base / std::string(tok[1])).string();
            s.devices = load_device_profiles(s.devices_file);
        } else if (key == "calibration_file") {
            need(1);
            s.calibration_file = (base / std::string(tok[1])).string();
        } else if (key == "app") {
            // app <id> <kernel> <iface,iface,...>
            if (tok.size() != 4) throw err("app <id> <kernel> <iface,iface,...>");
            AppSpec a;
            a.id = std::string(tok[1]);
            a.kernel = std::string(tok[2]);
            for (auto part : split(tok[3], ','))
                a.ifaces.push_back(static_cast<int>(parse_int(part, "iface")));
            for (const auto& prev : s.apps)
                if (prev.id == a.id) throw err("duplicate app id " + a.id);
            s.apps.push_back(std::move(a));
        } else if (key == "rate") {
            // rate <app> <t_ms> <gbps-total-for-app>; split across its ifaces
            need(3);
            std::string app(tok[1]);
            double t_ms = parse_double(tok[2], "t_ms");
            double gbps = parse_double(tok[3], "gbps");
            const AppSpec* spec = nullptr;
            for (const auto& a : s.apps)
                if (a.id == app) spec = &a;
            if (!spec) throw err("rate for unknown app " + app);
            for (int f : spec->ifaces) s.schedule.add(app, f, t_ms, gbps / spec->ifaces.size());
        } else if (key == "rate_iface") {
            need(4);
            std::string app(tok[1]);
            s.schedule.add(app, static_cast<int>(parse_int(tok[2], "iface")), parse_double(tok[3], "t_ms"),
                           parse_double(tok[4], "gbps"));
        } else if (key == "at") {
            // at <t_ms> policy <name...> | at <t_ms> shutdown <ms>
            if (tok.size() < 3) throw err("at <t_ms> <command...>");
            TimedCommand c;
            c.t_ms = parse_double(tok[1], "t_ms");
            for (std::size_t i = 2; i < tok.size(); ++i) {
                if (i > 2) c.command += ' ';
                c.command += std::string(tok[i]);
            }
            s.commands.push_back(std::move(c));
        } else {
            throw err("unknown key '" + std::string(key) + "'");
        }
    }
    if (!versioned) throw ParseError(path + ": empty scenario");
    s.validate();
    return s;
}

}  // namespace pythia
