#pragma once

/// Uniform energy/power metering with pluggable providers.
///
/// A provider answers two questions for a device it knows: instantaneous
/// power at a time, and exact energy over an interval.  The simulation
/// provider is fed a piecewise-constant power timeline by the engine, so its
/// integrals are exact.  Metering a cpu-class device reports the whole die,
/// including any integrated GPU: that is what the underlying hardware
/// counters can actually observe.

#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pythia/calibration.hpp"
#include "pythia/util.hpp"

namespace pythia {

struct PowerSample {
    double t_ms = 0;
    double watts = 0;
    double joules_since_prev = 0;
};

class PowerProvider {
  public:
    virtual ~PowerProvider() = default;
    virtual std::string id() const = 0;
    virtual bool knows_device(const std::string& dev) const = 0;
    /// Metered power at time t (die-aggregated for cpu-class devices).
    virtual double watts_at(const std::string& dev, Ticks t) const = 0;
    /// Exact energy over (t0, t1] in joules, same aggregation as watts_at.
    virtual double energy_joules(const std::string& dev, Ticks t0, Ticks t1) const = 0;
};

/// Piecewise-constant power timeline; the simulation engine appends a point
/// whenever a device's power changes.
class PowerTimeline {
  public:
    void set(Ticks t, double watts) {
        if (!points_.empty() && points_.back().first > t) throw InvariantError("power timeline must be appended in time order");
        if (!points_.empty() && points_.back().first == t) {
            points_.back().second = watts;
            return;
        }
        if (points_.empty() || points_.back().second != watts) points_.emplace_back(t, watts);
    }

    double at(Ticks t) const {
        if (points_.empty() || t < points_.front().first) return 0.0;
        auto it = std::upper_bound(points_.begin(), points_.end(), t,
                                   [](Ticks v, const auto& p) { return v < p.first; });
        return (it - 1)->second;
    }

    /// Integral over (t0, t1], exact for the stored step function.
    double energy_joules(Ticks t0, Ticks t1) const {
        if (t1 < t0) throw InvariantError("energy interval reversed");
        if (points_.empty() || t1 == t0) return 0.0;
        double joules = 0;
        Ticks cur = t0;
        auto it = std::upper_bound(points_.begin(), points_.end(), t0,
                                   [](Ticks v, const auto& p) { return v < p.first; });
        if (it != points_.begin()) --it;
        for (; it != points_.end() && cur < t1; ++it) {
            Ticks seg_start = std::max(cur, it->first);
            Ticks seg_end = t1;
            if (it + 1 != points_.end()) seg_end = std::min(seg_end, (it + 1)->first);
            if (seg_end > seg_start && it->first <= seg_start)
                joules += it->second * ticks_to_ms(seg_end - seg_start) / 1000.0;
            cur = std::max(cur, seg_end);
        }
        return joules;
    }

    /// Time-weighted mean power over (t0, t1]; bit-exact (equal to the
    /// segment value) when the power is constant across the window.
    double mean_watts(Ticks t0, Ticks t1) const {
        if (t1 <= t0) return at(t1);
        double weighted = 0;
        Ticks cur = t0;
        auto it = std::upper_bound(points_.begin(), points_.end(), t0,
                                   [](Ticks v, const auto& p) { return v < p.first; });
        if (it != points_.begin()) --it;
        for (; it != points_.end() && cur < t1; ++it) {
            Ticks seg_start = std::max(cur, it->first);
            Ticks seg_end = t1;
            if (it + 1 != points_.end()) seg_end = std::min(seg_end, (it + 1)->first);
            if (seg_end > seg_start && it->first <= seg_start)
                weighted += it->second * static_cast<double>(seg_end - seg_start);
            cur = std::max(cur, seg_end);
        }
        return weighted / static_cast<double>(t1 - t0);
    }

  private:
    std::vector<std::pair<Ticks, double>> points_;
};

class SimPowerProvider : public PowerProvider {
  public:
    explicit SimPowerProvider(std::vector<DeviceProfile> profiles) : profiles_(std::move(profiles)) {
        for (const auto& p : profiles_) timelines_[p.id];  // materialize
    }

    std::string id() const override { return "sim"; }

    bool knows_device(const std::string& dev) const override { return timelines_.count(dev) > 0; }

    void set_power(const std::string& dev, Ticks t, double watts) { timelines_.at(dev).set(t, watts); }

    /// Per-device power without die aggregation (simulator ground truth).
    double own_watts_at(const std::string& dev, Ticks t) const { return timelines_.at(dev).at(t); }
    double own_energy_joules(const std::string& dev, Ticks t0, Ticks t1) const {
        return timelines_.at(dev).energy_joules(t0, t1);
    }
    double own_mean_watts(const std::string& dev, Ticks t0, Ticks t1) const {
        return timelines_.at(dev).mean_watts(t0, t1);
    }

    double watts_at(const std::string& dev, Ticks t) const override {
        double w = 0;
        for (const auto& d : metered_view(dev)) w += timelines_.at(d).at(t);
        return w;
    }

    double energy_joules(const std::string& dev, Ticks t0, Ticks t1) const override {
        double j = 0;
        for (const auto& d : metered_view(dev)) j += timelines_.at(d).energy_joules(t0, t1);
        return j;
    }

  private:
    // The die cannot be metered piecemeal: a cpu handle covers the cpu cores
    // plus every integrated GPU packed on the same die.
    std::vector<std::string> metered_view(const std::string& dev) const {
        std::vector<std::string> out{dev};
        for (const auto& p : profiles_)
            if (p.id == dev && p.klass == DeviceClass::Cpu)
                for (const auto& q : profiles_)
                    if (q.klass == DeviceClass::IntegratedGpu) out.push_back(q.id);
        return out;
    }

    std::vector<DeviceProfile> profiles_;
    std::map<std::string, PowerTimeline> timelines_;
};

/// Host-side fallback: models the given profile with the linear power curve
/// driven by process CPU utilization.  No vendor registers are touched.
class LiveCpuPowerProvider : public PowerProvider {
  public:
    explicit LiveCpuPowerProvider(DeviceProfile profile, double fixed_utilization = 0.5)
        : profile_(std::move(profile)), utilization_(fixed_utilization) {}

    std::string id() const override { return "live-cpu"; }
    bool knows_device(const std::string& dev) const override { return dev == profile_.id; }
    void set_utilization(double u) { utilization_ = u; }

    double watts_at(const std::string&, Ticks) const override { return power_draw(profile_, utilization_, true); }
    double energy_joules(const std::string& dev, Ticks t0, Ticks t1) const override {
        return watts_at(dev, t1) * ticks_to_ms(t1 - t0) / 1000.0;
    }

  private:
    DeviceProfile profile_;
    double utilization_;
};

class ProviderRegistry {
  public:
    void add(std::shared_ptr<PowerProvider> p) { providers_[p->id()] = std::move(p); }

    std::shared_ptr<PowerProvider> get(const std::string& id) const {
        auto it = providers_.find(id);
        if (it == providers_.end()) throw ModelGapError("unknown power provider '" + id + "'");
        return it->second;
    }

  private:
    std::map<std::string, std::shared_ptr<PowerProvider>> providers_;
};

constexpr std::size_t kMeterHistoryCap = 10000;

struct MeterHandle {
    std::string device;
    std::shared_ptr<PowerProvider> provider;
    double sample_interval_ms = 100;

    Ticks opened_at = 0;
    Ticks last_sample = 0;
    bool sampled_once = false;
    Ticks history_start = 0;
    std::deque<PowerSample> history;  // ring of the last kMeterHistoryCap samples
};

inline MeterHandle open_meter(const ProviderRegistry& reg, const std::string& device,
                              const std::string& provider_id, double interval_ms, double now_ms = 0) {
    if (interval_ms <= 0) throw InvariantError("sample interval must be > 0");
    auto provider = reg.get(provider_id);
    if (!provider->knows_device(device))
        throw ModelGapError("provider '" + provider_id + "' does not know device '" + device + "'");
    MeterHandle h;
    h.device = device;
    h.provider = std::move(provider);
    h.sample_interval_ms = interval_ms;
    h.opened_at = h.last_sample = h.history_start = ms_to_ticks(now_ms);
    return h;
}

inline PowerSample sample(MeterHandle& h, double now_ms) {
    Ticks now = ms_to_ticks(now_ms);
    if (now < h.last_sample) throw InvariantError("meter clock moved backwards");
    PowerSample s;
    s.t_ms = ticks_to_ms(now);
    s.watts = h.provider->watts_at(h.device, now);
    s.joules_since_prev = h.provider->energy_joules(h.device, h.last_sample, now);
    if (h.history.size() == kMeterHistoryCap) {
        // Coverage now starts where the evicted sample's interval ended.
        h.history_start = ms_to_ticks(h.history.front().t_ms);
        h.history.pop_front();
    }
    h.history.push_back(s);
    h.last_sample = now;
    return s;
}

/// Energy over [t0, t1]; both endpoints must lie inside the retained sample
/// history.
inline double energy_between(const MeterHandle& h, double t0_ms, double t1_ms) {
    if (t1_ms < t0_ms) throw InvariantError("energy_between: t0 > t1");
    Ticks t0 = ms_to_ticks(t0_ms), t1 = ms_to_ticks(t1_ms);
    if (!h.history.empty()) {
        Ticks lo = h.history_start;
        Ticks hi = ms_to_ticks(h.history.back().t_ms);
        if (t0 < lo || t1 > hi) throw InvariantError("energy_between: range outside sampled history");
    } else if (t0 != t1 || t0 != h.opened_at) {
        throw InvariantError("energy_between: no samples yet");
    }
    return h.provider->energy_joules(h.device, t0, t1);
}

inline void export_power_csv(std::ostream& out, const std::string& device, const std::deque<PowerSample>& samples) {
    out << "t_ms,device,watts,joules_interval\n";
    for (const auto& s : samples)
        out << fmt_double(s.t_ms) << ',' << device << ',' << fmt_double(s.watts) << ','
            << fmt_double(s.joules_since_prev) << '\n';
}

}  // namespace pythia
