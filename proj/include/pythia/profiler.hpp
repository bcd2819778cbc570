#pragma once

/// Offline analysis: enumerate every configuration, run each on a backend
/// for a training window, and keep the results in an ordered store with one
/// secondary index per selection metric.

#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pythia/config.hpp"
#include "pythia/util.hpp"

namespace pythia {

constexpr int kDefaultTrainingBatches = 20;
inline const std::vector<int> kDefaultBatchGrid = {1024, 2048, 4096, 8192, 16384, 32768, 65536};

/// |devices|^|apps| x |batch_grid| configurations, ids stable for fixed
/// inputs: device assignment varies fastest on the last app, batch sizes
/// innermost.
inline std::vector<Configuration> enumerate_configs(const std::vector<std::string>& apps,
                                                    const std::vector<std::string>& devices,
                                                    const std::vector<int>& batch_grid) {
    if (apps.empty() || devices.empty() || batch_grid.empty())
        throw InvariantError("enumerate_configs: empty input");
    std::vector<Configuration> out;
    std::vector<std::size_t> pick(apps.size(), 0);
    int id = 0;
    while (true) {
        for (int batch : batch_grid) {
            Configuration c;
            c.id = id++;
            c.batch_size = batch;
            for (std::size_t i = 0; i < apps.size(); ++i) c.mapping[apps[i]] = devices[pick[i]];
            out.push_back(std::move(c));
        }
        // odometer increment over device assignments
        std::size_t i = apps.size();
        while (i > 0) {
            --i;
            if (++pick[i] < devices.size()) break;
            pick[i] = 0;
            if (i == 0) return out;
        }
    }
}

class Backend;

struct StoreEntry {
    Configuration config;
    ConfigStats stats;
};

/// Ordered configuration store: a red-black tree keyed by id plus one
/// ordered index per metric (throughput desc, latency asc, power asc).
/// Unprofiled entries stay out of the indexes.
class ConfigStore {
  public:
    void upsert(const Configuration& cfg, const ConfigStats& stats) {
        auto it = by_id_.find(cfg.id);
        if (it != by_id_.end()) drop_index(cfg.id, it->second.stats);
        by_id_[cfg.id] = {cfg, stats};
        add_index(cfg.id, stats);
    }

    void update_stats(int id, const ConfigStats& stats) {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) throw InvariantError("store: unknown config id " + std::to_string(id));
        drop_index(id, it->second.stats);
        it->second.stats = stats;
        add_index(id, stats);
    }

    const StoreEntry* find(int id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return by_id_.size(); }
    bool empty() const { return by_id_.empty(); }

    auto begin() const { return by_id_.begin(); }
    auto end() const { return by_id_.end(); }

    // Index heads; -1 when nothing profiled.
    int best_gbps_id() const { return idx_gbps_.empty() ? -1 : idx_gbps_.begin()->second; }
    int best_latency_id() const { return idx_latency_.empty() ? -1 : idx_latency_.begin()->second; }
    int best_power_id() const { return idx_power_.empty() ? -1 : idx_power_.begin()->second; }

    bool indexes_consistent() const {
        std::size_t profiled = 0;
        for (const auto& [id, e] : by_id_) {
            if (!e.stats.profiled) continue;
            ++profiled;
            if (!idx_gbps_.count({-e.stats.agg_gbps, id})) return false;
            if (!idx_latency_.count({e.stats.avg_latency_ms, id})) return false;
            if (!idx_power_.count({e.stats.avg_power_watts, id})) return false;
        }
        return profiled == idx_gbps_.size() && profiled == idx_latency_.size() && profiled == idx_power_.size();
    }

    void serialize(std::ostream& out) const {
        out << "# id|mapping(app=dev,...)|batch|gbps|mpps|latency_ms|watts|samples\n";
        for (const auto& [id, e] : by_id_) {
            out << id << '|' << e.config.mapping_str() << '|' << e.config.batch_size << '|'
                << fmt_double(e.stats.agg_gbps) << '|' << fmt_double(e.stats.agg_mpps) << '|'
                << fmt_double(e.stats.avg_latency_ms) << '|' << fmt_double(e.stats.avg_power_watts) << '|'
                << e.stats.samples << '\n';
        }
    }

    static ConfigStore deserialize(std::istream& in) {
        ConfigStore store;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            auto f = split(t, '|');
            if (f.size() != 8) throw ParseError("store line " + std::to_string(lineno) + ": expected 8 fields");
            Configuration cfg;
            cfg.id = static_cast<int>(parse_int(f[0], "id"));
            for (auto part : split(f[1], ',')) {
                auto kv = split(part, '=');
                if (kv.size() != 2) throw ParseError("store line " + std::to_string(lineno) + ": bad mapping");
                cfg.mapping[std::string(kv[0])] = std::string(kv[1]);
            }
            cfg.batch_size = static_cast<int>(parse_int(f[2], "batch"));
            ConfigStats st;
            st.agg_gbps = parse_double(f[3], "gbps");
            st.agg_mpps = parse_double(f[4], "mpps");
            st.avg_latency_ms = parse_double(f[5], "latency");
            st.avg_power_watts = parse_double(f[6], "watts");
            st.samples = parse_int(f[7], "samples");
            st.profiled = st.samples > 0;
            st.finalize_energy();
            if (store.by_id_.count(cfg.id))
                throw InvariantError("store line " + std::to_string(lineno) + ": duplicate config id");
            store.upsert(cfg, st);
        }
        return store;
    }

  private:
    void add_index(int id, const ConfigStats& s) {
        if (!s.profiled) return;
        idx_gbps_.insert({-s.agg_gbps, id});
        idx_latency_.insert({s.avg_latency_ms, id});
        idx_power_.insert({s.avg_power_watts, id});
    }
    void drop_index(int id, const ConfigStats& s) {
        if (!s.profiled) return;
        idx_gbps_.erase({-s.agg_gbps, id});
        idx_latency_.erase({s.avg_latency_ms, id});
        idx_power_.erase({s.avg_power_watts, id});
    }

    std::map<int, StoreEntry> by_id_;
    std::set<std::pair<double, int>> idx_gbps_;     // (-gbps, id)
    std::set<std::pair<double, int>> idx_latency_;  // (latency, id)
    std::set<std::pair<double, int>> idx_power_;    // (watts, id)
};

/// Execution backend contract shared by the simulator and the live host
/// backend.
class Backend {
  public:
    virtual ~Backend() = default;
    virtual const std::vector<DeviceProfile>& devices() const = 0;
    /// Activate the configuration, process `training_batches` batches per
    /// app at capacity, deactivate, and report the measured stats.
    virtual ConfigStats profile_config(const Configuration& cfg, int training_batches) = 0;
    /// Bring the configuration up from cold; returns the ready time in ms.
    virtual double activate(const Configuration& cfg, double now_ms) = 0;
    /// Drain-and-switch to a new configuration; returns the completion time
    /// in ms.  Throws on activation failure, leaving the old config running.
    virtual double switch_to(const Configuration& to, double now_ms) = 0;
};

inline ConfigStats profile(const Configuration& cfg, int training_batches, Backend& backend) {
    if (training_batches < 1) throw InvariantError("training_batches must be >= 1");
    return backend.profile_config(cfg, training_batches);
}

/// Profile every configuration strictly in sequence.  Model gaps mark the
/// entry unprofiled instead of aborting the sweep.
inline ConfigStore build_store(const std::vector<Configuration>& configs, int training_batches, Backend& backend) {
    if (configs.empty()) throw InvariantError("build_store: no configurations");
    ConfigStore store;
    std::set<int> seen;
    for (const auto& cfg : configs) {
        if (!seen.insert(cfg.id).second) throw InvariantError("build_store: duplicate config id");
        ConfigStats stats;
        try {
            stats = profile(cfg, training_batches, backend);
        } catch (const ModelGapError&) {
            stats = ConfigStats{};  // unprofiled sentinel
        }
        store.upsert(cfg, stats);
    }
    return store;
}

inline ConfigStore build_store(const std::vector<std::pair<Configuration, ConfigStats>>& profiled) {
    if (profiled.empty()) throw InvariantError("build_store: no configurations");
    ConfigStore store;
    std::set<int> seen;
    for (const auto& [cfg, stats] : profiled) {
        if (!seen.insert(cfg.id).second) throw InvariantError("build_store: duplicate config id");
        store.upsert(cfg, stats);
    }
    return store;
}

}  // namespace pythia
