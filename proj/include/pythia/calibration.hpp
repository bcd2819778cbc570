#pragma once

/// Calibrated device performance model.
///
/// The model is a lookup table of measured kernel rows (device x app x batch
/// size x co-worker context) plus per-device power envelopes.  Rows at
/// uncalibrated batch sizes are served by log-batch geometric interpolation
/// between the two nearest calibrated sizes, clamped at the grid edges.
/// Solo rows (no co-workers) are synthesized from the measured slow-down
/// columns, since the shipped data only contains shared-device runs.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pythia/util.hpp"

namespace pythia {

enum class DeviceClass { Cpu, IntegratedGpu, DiscreteGpu };

inline std::string to_string(DeviceClass c) {
    switch (c) {
        case DeviceClass::Cpu: return "cpu";
        case DeviceClass::IntegratedGpu: return "integrated-gpu";
        case DeviceClass::DiscreteGpu: return "discrete-gpu";
    }
    return "?";
}

inline DeviceClass device_class_from(std::string_view s) {
    if (s == "cpu") return DeviceClass::Cpu;
    if (s == "integrated-gpu") return DeviceClass::IntegratedGpu;
    if (s == "discrete-gpu") return DeviceClass::DiscreteGpu;
    throw ParseError("unknown device class '" + std::string(s) + "'");
}

struct DeviceProfile {
    std::string id;
    DeviceClass klass = DeviceClass::Cpu;
    double tdp_watts = 0;
    double idle_watts = 0;
    double off_watts = 0;
    double switch_latency_ms = 0;
    int queue_capacity_batches = 0;

    void check() const {
        if (!(0 <= off_watts && off_watts <= idle_watts && idle_watts < tdp_watts))
            throw InvariantError("device " + id + ": need 0 <= off <= idle < tdp");
        if (!(switch_latency_ms > 0)) throw InvariantError("device " + id + ": switch_latency_ms must be > 0");
        if (queue_capacity_batches < 1) throw InvariantError("device " + id + ": queue capacity must be >= 1");
    }
};

/// Linear power envelope: off -> off_watts, on -> idle + u * (tdp - idle).
inline double power_draw(const DeviceProfile& p, double utilization, bool powered) {
    if (!powered) return p.off_watts;
    double u = std::clamp(utilization, 0.0, 1.0);
    return p.idle_watts + u * (p.tdp_watts - p.idle_watts);
}

struct PerfRecord {
    std::string device;
    std::string app;
    int batch_size = 0;
    int coworkers = 0;             // 0, 1 or 3 in the shipped data
    std::string coworker_app;      // empty when coworkers == 0
    double kernel_latency_ms = 0;
    double kernel_mpps = 0;
    double kernel_gbps = 0;
    double slowdown_frac = 0;      // fraction of solo rate lost to sharing
    double agg_latency_ms = 0;
    double agg_mpps = 0;
    double agg_gbps = 0;
    bool modeled = false;          // true for interpolated/clamped/synthesized rows

    std::string key_str() const {
        return device + "/" + app + "/" + std::to_string(batch_size) + "/" + std::to_string(coworkers) + "/" +
               (coworker_app.empty() ? "none" : coworker_app);
    }
};

/// Solo rate implied by a shared-device measurement.
inline double implied_solo_mpps(const PerfRecord& r) {
    if (r.coworkers == 0) return r.kernel_mpps;
    return r.kernel_mpps / (1.0 - r.slowdown_frac);
}

inline double implied_solo_gbps(const PerfRecord& r) {
    if (r.coworkers == 0) return r.kernel_gbps;
    return r.kernel_gbps / (1.0 - r.slowdown_frac);
}

struct PerfTable {
    std::vector<DeviceProfile> devices;
    std::vector<std::string> apps;
    // Keyed by (device, app, batch, coworkers, coworker_app); includes the
    // synthesized coworkers==0 rows.
    std::map<std::tuple<std::string, std::string, int, int, std::string>, PerfRecord> records;
    std::vector<int> calibrated_batches;  // sorted, e.g. {1024, 4096, 16384}

    const DeviceProfile& device(std::string_view id) const {
        for (const auto& d : devices)
            if (d.id == id) return d;
        throw ModelGapError("unknown device '" + std::string(id) + "'");
    }

    bool has_device(std::string_view id) const {
        for (const auto& d : devices)
            if (d.id == id) return true;
        return false;
    }

    bool has_app(std::string_view id) const {
        for (const auto& a : apps)
            if (a == id) return true;
        return false;
    }

    const PerfRecord* find(const std::string& dev, const std::string& app, int batch, int cow,
                           const std::string& cow_app) const {
        auto it = records.find({dev, app, batch, cow, cow_app});
        return it == records.end() ? nullptr : &it->second;
    }
};

inline std::vector<DeviceProfile> load_device_profiles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open device file: " + path);
    std::vector<DeviceProfile> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto tok = tokenize(t);
        if (tok.size() != 7)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected 7 fields, got " +
                             std::to_string(tok.size()));
        DeviceProfile d;
        d.id = std::string(tok[0]);
        d.klass = device_class_from(tok[1]);
        d.tdp_watts = parse_double(tok[2], "tdp_watts");
        d.idle_watts = parse_double(tok[3], "idle_watts");
        d.off_watts = parse_double(tok[4], "off_watts");
        d.switch_latency_ms = parse_double(tok[5], "switch_latency_ms");
        d.queue_capacity_batches = static_cast<int>(parse_int(tok[6], "queue_capacity_batches"));
        d.check();
        for (const auto& prev : out)
            if (prev.id == d.id) throw ParseError(path + ": duplicate device id " + d.id);
        out.push_back(std::move(d));
    }
    if (out.empty()) throw ParseError(path + ": no device profiles");
    return out;
}

namespace detail {

inline void check_record(const PerfRecord& r) {
    auto bad = [&](const std::string& why) { throw InvariantError("record " + r.key_str() + ": " + why); };
    if (r.batch_size < 1) bad("batch_size must be >= 1");
    if (r.coworkers < 0) bad("coworkers must be >= 0");
    if (r.kernel_latency_ms <= 0 || r.kernel_mpps <= 0 || r.kernel_gbps <= 0) bad("kernel metrics must be > 0");
    if (r.agg_latency_ms <= 0 || r.agg_mpps <= 0 || r.agg_gbps <= 0) bad("aggregate metrics must be > 0");
    if (r.coworkers == 0 && r.slowdown_frac != 0) bad("solo rows must have zero slow-down");
    if (r.coworkers > 0 && !(r.slowdown_frac > 0 && r.slowdown_frac < 1)) bad("slow-down must be in (0,1)");
    if (r.agg_mpps < r.kernel_mpps) bad("aggregate mpps below kernel mpps");
    auto ratio_ok = [](double gbps, double mpps) {
        double kbit_per_pkt = gbps / mpps;
        return kbit_per_pkt >= 11.5 && kbit_per_pkt <= 12.0;
    };
    if (!ratio_ok(r.kernel_gbps, r.kernel_mpps)) bad("kernel gbps/mpps ratio outside [11.5, 12.0]");
    if (!ratio_ok(r.agg_gbps, r.agg_mpps)) bad("aggregate gbps/mpps ratio outside [11.5, 12.0]");
}

// Synthesize the coworkers==0 row for (device, app, batch) by averaging the
// solo rates implied by every measured co-worker context at that batch size.
// Solo latency is modeled first-order as kernel latency shrunk by the
// slow-down.
inline PerfRecord synthesize_solo(const std::string& dev, const std::string& app, int batch,
                                  const std::vector<const PerfRecord*>& ctx_rows) {
    PerfRecord solo;
    solo.device = dev;
    solo.app = app;
    solo.batch_size = batch;
    solo.coworkers = 0;
    solo.modeled = true;
    double mpps = 0, gbps = 0, lat = 0;
    for (const PerfRecord* r : ctx_rows) {
        mpps += implied_solo_mpps(*r);
        gbps += implied_solo_gbps(*r);
        lat += r->kernel_latency_ms * (1.0 - r->slowdown_frac);
    }
    double n = static_cast<double>(ctx_rows.size());
    solo.kernel_mpps = mpps / n;
    solo.kernel_gbps = gbps / n;
    solo.kernel_latency_ms = lat / n;
    solo.agg_mpps = solo.kernel_mpps;
    solo.agg_gbps = solo.kernel_gbps;
    solo.agg_latency_ms = solo.kernel_latency_ms;
    return solo;
}

}  // namespace detail

/// Parse the calibration CSV, validate row/type invariants, synthesize solo
/// rows, and return the finished table.
inline PerfTable load_calibration(const std::string& csv_path, std::vector<DeviceProfile> devices) {
    std::ifstream in(csv_path);
    if (!in) throw ParseError("cannot open calibration file: " + csv_path);

    PerfTable table;
    table.devices = std::move(devices);

    std::string line;
    int lineno = 0;
    bool got_any = false;
    std::set<int> batches;
    std::set<std::string> apps;
    while (std::getline(in, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (!got_any && t.substr(0, 7) == "device,") {  // header row
            got_any = true;
            continue;
        }
        got_any = true;
        auto f = split(t, ',');
        if (f.size() != 12)
            throw ParseError(csv_path + ":" + std::to_string(lineno) + ": expected 12 columns, got " +
                             std::to_string(f.size()));
        PerfRecord r;
        r.device = std::string(trim(f[0]));
        r.app = std::string(trim(f[1]));
        r.batch_size = static_cast<int>(parse_int(trim(f[2]), "batch"));
        r.coworkers = static_cast<int>(parse_int(trim(f[3]), "coworkers"));
        std::string cow = std::string(trim(f[4]));
        r.coworker_app = (cow == "none") ? "" : cow;
        r.kernel_latency_ms = parse_double(trim(f[5]), "k_ms");
        r.kernel_mpps = parse_double(trim(f[6]), "k_mpps");
        r.kernel_gbps = parse_double(trim(f[7]), "k_gbps");
        r.slowdown_frac = parse_double(trim(f[8]), "slowdown_pct") / 100.0;
        r.agg_latency_ms = parse_double(trim(f[9]), "agg_ms");
        r.agg_mpps = parse_double(trim(f[10]), "agg_mpps");
        r.agg_gbps = parse_double(trim(f[11]), "agg_gbps");

        if (!table.has_device(r.device))
            throw ParseError(csv_path + ":" + std::to_string(lineno) + ": unknown device '" + r.device + "'");
        if (r.coworkers != 1 && r.coworkers != 3)
            throw ParseError(csv_path + ":" + std::to_string(lineno) +
                             ": calibration rows must have 1 or 3 coworkers");
        if (r.coworker_app.empty())
            throw ParseError(csv_path + ":" + std::to_string(lineno) + ": missing coworker app");
        detail::check_record(r);

        auto key = std::make_tuple(r.device, r.app, r.batch_size, r.coworkers, r.coworker_app);
        if (table.records.count(key))
            throw InvariantError(csv_path + ":" + std::to_string(lineno) + ": duplicate key " + r.key_str());
        batches.insert(r.batch_size);
        apps.insert(r.app);
        table.records.emplace(key, std::move(r));
    }
    if (table.records.empty()) throw ParseError(csv_path + ": no calibration rows");

    table.apps.assign(apps.begin(), apps.end());
    table.calibrated_batches.assign(batches.begin(), batches.end());

    // Synthesize solo rows per (device, app, batch).
    std::map<std::tuple<std::string, std::string, int>, std::vector<const PerfRecord*>> groups;
    for (const auto& [key, rec] : table.records)
        groups[{rec.device, rec.app, rec.batch_size}].push_back(&rec);
    std::vector<PerfRecord> solos;
    for (const auto& [key, rows] : groups)
        solos.push_back(detail::synthesize_solo(std::get<0>(key), std::get<1>(key), std::get<2>(key), rows));
    for (auto& s : solos) {
        detail::check_record(s);
        table.records.emplace(std::make_tuple(s.device, s.app, s.batch_size, 0, std::string()), std::move(s));
    }
    return table;
}

namespace detail {

inline double geo_interp(double lo, double hi, double t) { return std::pow(lo, 1.0 - t) * std::pow(hi, t); }

inline PerfRecord interpolate(const PerfRecord& lo, const PerfRecord& hi, int batch) {
    double t = (std::log(static_cast<double>(batch)) - std::log(static_cast<double>(lo.batch_size))) /
               (std::log(static_cast<double>(hi.batch_size)) - std::log(static_cast<double>(lo.batch_size)));
    PerfRecord r = lo;
    r.batch_size = batch;
    r.modeled = true;
    r.kernel_latency_ms = geo_interp(lo.kernel_latency_ms, hi.kernel_latency_ms, t);
    r.kernel_mpps = geo_interp(lo.kernel_mpps, hi.kernel_mpps, t);
    r.kernel_gbps = geo_interp(lo.kernel_gbps, hi.kernel_gbps, t);
    r.agg_latency_ms = geo_interp(lo.agg_latency_ms, hi.agg_latency_ms, t);
    r.agg_mpps = geo_interp(lo.agg_mpps, hi.agg_mpps, t);
    r.agg_gbps = geo_interp(lo.agg_gbps, hi.agg_gbps, t);
    if (lo.slowdown_frac > 0 && hi.slowdown_frac > 0)
        r.slowdown_frac = geo_interp(lo.slowdown_frac, hi.slowdown_frac, t);
    else
        r.slowdown_frac = lo.slowdown_frac + t * (hi.slowdown_frac - lo.slowdown_frac);
    return r;
}

// Rates clamp at the grid edge; latency scales with the packet count so that
// batch/latency stays consistent with the clamped rate.
inline PerfRecord clamp_to(const PerfRecord& edge, int batch) {
    PerfRecord r = edge;
    double scale = static_cast<double>(batch) / static_cast<double>(edge.batch_size);
    r.batch_size = batch;
    r.modeled = true;
    r.kernel_latency_ms = edge.kernel_latency_ms * scale;
    r.agg_latency_ms = edge.agg_latency_ms * scale;
    return r;
}

}  // namespace detail

/// Exact row if calibrated, otherwise an interpolated/clamped row (flagged
/// via `modeled`).  Contexts with 2 co-workers blend the 1- and 3-co-worker
/// rows; the shipped data only measures those two counts.
inline PerfRecord lookup(const PerfTable& table, const std::string& dev, const std::string& app, int batch,
                         int coworkers, const std::string& coworker_app) {
    if (!table.has_device(dev)) throw ModelGapError("unknown device '" + dev + "'");
    if (!table.has_app(app)) throw ModelGapError("unknown app '" + app + "'");
    std::string cow = coworkers == 0 ? std::string() : coworker_app;

    auto row_at = [&](int b) -> PerfRecord {
        if (coworkers == 0 || coworkers == 1 || coworkers == 3) {
            if (const PerfRecord* r = table.find(dev, app, b, coworkers, cow)) return *r;
            throw ModelGapError("no record for " + dev + "/" + app + "/" + std::to_string(b) + " with " +
                                std::to_string(coworkers) + " coworker(s) of " + (cow.empty() ? "none" : cow));
        }
        // Blend between the calibrated co-worker counts on the slow-down axis.
        const PerfRecord* lo = table.find(dev, app, b, 1, cow);
        const PerfRecord* hi = table.find(dev, app, b, 3, cow);
        const PerfRecord* solo = table.find(dev, app, b, 0, std::string());
        if (!lo || !hi || !solo)
            throw ModelGapError("no blendable records for " + dev + "/" + app + "/" + std::to_string(b));
        double t = coworkers <= 1 ? 0.0 : coworkers >= 3 ? 1.0 : (coworkers - 1) / 2.0;
        double s = lo->slowdown_frac + t * (hi->slowdown_frac - lo->slowdown_frac);
        PerfRecord r = *lo;
        r.coworkers = coworkers;
        r.modeled = true;
        r.slowdown_frac = s;
        r.kernel_mpps = solo->kernel_mpps * (1.0 - s);
        r.kernel_gbps = solo->kernel_gbps * (1.0 - s);
        r.kernel_latency_ms = solo->kernel_latency_ms / (1.0 - s);
        r.agg_mpps = r.kernel_mpps * (coworkers + 1);
        r.agg_gbps = r.kernel_gbps * (coworkers + 1);
        r.agg_latency_ms = r.kernel_latency_ms * (coworkers + 1);
        return r;
    };

    const auto& grid = table.calibrated_batches;
    if (std::binary_search(grid.begin(), grid.end(), batch)) return row_at(batch);
    if (batch <= grid.front()) return detail::clamp_to(row_at(grid.front()), batch);
    if (batch >= grid.back()) return detail::clamp_to(row_at(grid.back()), batch);
    auto hi_it = std::upper_bound(grid.begin(), grid.end(), batch);
    int hi = *hi_it;
    int lo = *(hi_it - 1);
    return detail::interpolate(row_at(lo), row_at(hi), batch);
}

// ---------------------------------------------------------------------------
// Data validation checks (surfaced by the `validate` CLI command).

struct CheckFinding {
    std::string key;
    double value = 0;
    std::string detail;
};

struct CheckResult {
    std::string name;
    bool passed = true;
    int rows_checked = 0;
    std::vector<CheckFinding> offenders;  // worst first
};

inline CheckResult check_gbps_mpps_ratio(const PerfTable& t) {
    CheckResult res{"gbps/mpps ratio in [11.5, 12.0]"};
    for (const auto& [key, r] : t.records) {
        if (r.modeled) continue;
        ++res.rows_checked;
        for (auto [gbps, mpps, what] : {std::tuple{r.kernel_gbps, r.kernel_mpps, "kernel"},
                                        std::tuple{r.agg_gbps, r.agg_mpps, "agg"}}) {
            double ratio = gbps / mpps;
            if (ratio < 11.5 || ratio > 12.0) {
                res.passed = false;
                res.offenders.push_back({r.key_str(), ratio, what});
            }
        }
    }
    return res;
}

/// Relative spread (max-min)/mean of the solo rates implied by all co-worker
/// contexts of one (device, app, batch).
inline CheckResult check_solo_consistency(const PerfTable& t, double tolerance = 0.02) {
    CheckResult res{"implied-solo spread <= " + fmt_double(tolerance * 100) + "%"};
    std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
    for (const auto& [key, r] : t.records)
        if (!r.modeled && r.coworkers > 0) groups[{r.device, r.app, r.batch_size}].push_back(implied_solo_mpps(r));
    for (const auto& [key, solos] : groups) {
        ++res.rows_checked;
        auto [mn, mx] = std::minmax_element(solos.begin(), solos.end());
        double mean = 0;
        for (double v : solos) mean += v;
        mean /= static_cast<double>(solos.size());
        double spread = (*mx - *mn) / mean;
        if (spread > tolerance) {
            res.passed = false;
            res.offenders.push_back({std::get<0>(key) + "/" + std::get<1>(key) + "/" +
                                         std::to_string(std::get<2>(key)),
                                     spread, "spread"});
        }
    }
    std::sort(res.offenders.begin(), res.offenders.end(),
              [](const auto& a, const auto& b) { return a.value > b.value; });
    return res;
}

/// For same-app sharing, the aggregate rate should be (coworkers+1) times the
/// per-kernel rate.
inline CheckResult check_homogeneous_aggregation(const PerfTable& t, double tolerance = 0.05) {
    CheckResult res{"homogeneous aggregation ratio = coworkers+1 within " + fmt_double(tolerance * 100) + "%"};
    for (const auto& [key, r] : t.records) {
        if (r.modeled || r.coworkers == 0 || r.coworker_app != r.app) continue;
        ++res.rows_checked;
        double expected = r.coworkers + 1;
        double ratio = r.agg_mpps / r.kernel_mpps;
        double err = std::abs(ratio - expected) / expected;
        if (err > tolerance) {
            res.passed = false;
            res.offenders.push_back({r.key_str(), ratio, "relative error " + fmt_double(err * 100) + "%"});
        }
    }
    std::sort(res.offenders.begin(), res.offenders.end(), [](const auto& a, const auto& b) {
        return a.detail > b.detail;
    });
    return res;
}

inline std::vector<CheckResult> run_all_checks(const PerfTable& t) {
    return {check_gbps_mpps_ratio(t), check_solo_consistency(t), check_homogeneous_aggregation(t)};
}

}  // namespace pythia
