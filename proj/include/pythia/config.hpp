#pragma once

/// Shared scheduling domain types: configurations, their measured stats, and
/// switch events.

#include <map>
#include <string>
#include <vector>

#include "pythia/calibration.hpp"
#include "pythia/util.hpp"

namespace pythia {

/// An application instance: a stable id plus the kernel it runs.  Two
/// instances may run the same kernel.
struct AppSpec {
    std::string id;
    std::string kernel;  // one of the calibrated kernels (aes, dpi, md5)
    std::vector<int> ifaces;
};

/// A complete assignment of every app to one device, plus one global batch
/// size.  The unit the profiler enumerates and the scheduler activates.
struct Configuration {
    int id = -1;
    std::map<std::string, std::string> mapping;  // app id -> device id
    int batch_size = 0;

    std::string mapping_str() const {
        std::string out;
        for (const auto& [app, dev] : mapping) {
            if (!out.empty()) out += ',';
            out += app + "=" + dev;
        }
        return out;
    }

    std::vector<std::string> devices_used() const {
        std::vector<std::string> out;
        for (const auto& [app, dev] : mapping)
            if (std::find(out.begin(), out.end(), dev) == out.end()) out.push_back(dev);
        return out;
    }

    bool operator==(const Configuration& o) const { return mapping == o.mapping && batch_size == o.batch_size; }
};

struct ConfigStats {
    double agg_gbps = 0;
    double agg_mpps = 0;
    double avg_latency_ms = 0;
    double avg_power_watts = 0;
    double energy_per_bit_nj = 0;
    long samples = 0;
    double last_updated_ms = 0;
    bool profiled = false;  // unprofiled entries are sentinels that policies skip

    void finalize_energy() { energy_per_bit_nj = agg_gbps > 0 ? avg_power_watts / agg_gbps : 0; }
};

enum class SwitchReason { Startup, PolicyDecision, PolicyChange, Degraded };

inline std::string to_string(SwitchReason r) {
    switch (r) {
        case SwitchReason::Startup: return "startup";
        case SwitchReason::PolicyDecision: return "policy-decision";
        case SwitchReason::PolicyChange: return "policy-change";
        case SwitchReason::Degraded: return "degraded";
    }
    return "?";
}

struct SwitchEvent {
    double t_ms = 0;
    int from_config = -1;
    int to_config = -1;
    SwitchReason reason = SwitchReason::PolicyDecision;
    double completion_ms = 0;
    double candidate_staleness_ms = 0;  // age of the chosen entry's stats at decision time
};

/// One monitor window's measurements, as seen by the scheduler.
struct WindowStats {
    double t0_ms = 0;
    double t1_ms = 0;
    std::map<std::string, double> offered_gbps_per_app;  // wire basis
    double offered_gbps_total = 0;
    double processed_gbps = 0;  // wire basis
    long drops = 0;
    ConfigStats measured;  // capacity-basis stats for the active configuration
};

/// Kernels co-resident with one app under a configuration.  Devices packed
/// on the same die (cpu + integrated gpu) contend for the shared LLC and
/// memory controller, so kernels across die sibling devices count as
/// co-workers too.
inline std::vector<std::string> coworker_kernels(const Configuration& cfg, const std::string& app_id,
                                                 const std::map<std::string, std::string>& app_kernels,
                                                 const std::vector<DeviceProfile>& devices) {
    auto klass_of = [&](const std::string& dev) {
        for (const auto& d : devices)
            if (d.id == dev) return d.klass;
        throw ModelGapError("unknown device '" + dev + "'");
    };
    const std::string& my_dev = cfg.mapping.at(app_id);
    DeviceClass my_class = klass_of(my_dev);
    auto on_die = [&](DeviceClass a, DeviceClass b) {
        return (a == DeviceClass::Cpu && b == DeviceClass::IntegratedGpu) ||
               (a == DeviceClass::IntegratedGpu && b == DeviceClass::Cpu);
    };
    std::vector<std::string> cows;
    for (const auto& [other, dev] : cfg.mapping) {
        if (other == app_id) continue;
        if (dev == my_dev || on_die(my_class, klass_of(dev))) cows.push_back(app_kernels.at(other));
    }
    return cows;
}

/// Calibration row for an app kernel under an arbitrary co-worker mix.
/// Counts or mixes absent from the calibration data are served by blending
/// slow-downs over the measured contexts.
inline PerfRecord lookup_for_context(const PerfTable& table, const std::string& dev, const std::string& kernel,
                                     int batch, const std::vector<std::string>& coworkers) {
    if (coworkers.empty()) return lookup(table, dev, kernel, batch, 0, "");
    bool same = true;
    for (const auto& c : coworkers) same = same && c == coworkers.front();
    int count = static_cast<int>(coworkers.size());
    if (same) return lookup(table, dev, kernel, batch, count, coworkers.front());

    double s = 0;
    int lookup_count = std::min(count, 3);
    for (const auto& c : coworkers) s += lookup(table, dev, kernel, batch, lookup_count, c).slowdown_frac;
    s /= static_cast<double>(coworkers.size());

    PerfRecord solo = lookup(table, dev, kernel, batch, 0, "");
    PerfRecord r = solo;
    r.coworkers = count;
    r.coworker_app = "mixed";
    r.modeled = true;
    r.slowdown_frac = s;
    r.kernel_mpps = solo.kernel_mpps * (1.0 - s);
    r.kernel_gbps = solo.kernel_gbps * (1.0 - s);
    r.kernel_latency_ms = solo.kernel_latency_ms / (1.0 - s);
    r.agg_mpps = r.kernel_mpps * (count + 1);
    r.agg_gbps = r.kernel_gbps * (count + 1);
    r.agg_latency_ms = r.kernel_latency_ms * (count + 1);
    return r;
}

}  // namespace pythia
