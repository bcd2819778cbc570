#pragma once

/// Deterministic discrete-event backend.  Executes configurations against
/// the calibration model: per-interface batch assembly under an ingest cap,
/// bounded device queues with interface-side backpressure, concurrent
/// kernels per device with table-driven service times, device power states,
/// and flow-affinity deferral across switches.
///
/// Everything runs on an integer 0.1 ms clock; events are processed in
/// (time, insertion) order, so a fixed (scenario, store, seed) triple always
/// produces a byte-identical trace.

#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>

#include "pythia/config.hpp"
#include "pythia/powermeter.hpp"
#include "pythia/profiler.hpp"
#include "pythia/scenario.hpp"
#include "pythia/scheduler.hpp"
#include "pythia/traffic.hpp"

namespace pythia {

struct ServiceLogEntry {
    std::string device;
    std::string app;
    FlowSlotRange slots;
    double start_ms = 0;
    double end_ms = 0;
    int packets = 0;
};

struct TraceRow {
    double t_ms = 0;
    int config_id = -1;
    double offered_gbps = 0;    // wire basis, generated this window
    double processed_gbps = 0;  // wire basis, completed this window
    double latency_ms = 0;      // mean end-to-end of batches completed this window
    long drops = 0;             // window total
    std::vector<double> dev_watts;  // window-average, per device in trace order
};

struct RunSummary {
    double horizon_ms = 0;
    double mean_processed_gbps = 0;
    double peak_processed_gbps = 0;
    double mean_power_watts = 0;
    double total_energy_joules = 0;
    long total_drops = 0;
    int switch_count = 0;
    std::uint64_t generated_packets = 0;
    std::uint64_t processed_packets = 0;
};

struct Trace {
    std::vector<std::string> device_order;
    std::vector<TraceRow> rows;
    std::vector<SwitchEvent> switches;
    std::vector<ServiceLogEntry> services;
    RunSummary summary;
    std::vector<std::string> notes;
    bool conservation_ok = true;

    void write_trace_csv(std::ostream& out) const {
        out << "t_ms,config_id,offered_gbps,processed_gbps,latency_ms,drops";
        for (const auto& d : device_order) out << ",dev:" << d << "_watts";
        out << '\n';
        for (const auto& r : rows) {
            out << fmt_double(r.t_ms) << ',' << r.config_id << ',' << fmt_double(r.offered_gbps) << ','
                << fmt_double(r.processed_gbps) << ',' << fmt_double(r.latency_ms) << ',' << r.drops;
            for (double w : r.dev_watts) out << ',' << fmt_double(w);
            out << '\n';
        }
    }

    void write_switches_csv(std::ostream& out) const {
        out << "t_ms,from,to,reason,completion_ms,staleness_ms\n";
        for (const auto& s : switches)
            out << fmt_double(s.t_ms) << ',' << s.from_config << ',' << s.to_config << ',' << to_string(s.reason)
                << ',' << fmt_double(s.completion_ms) << ',' << fmt_double(s.candidate_staleness_ms) << '\n';
    }

    void write_summary(std::ostream& out) const {
        out << "horizon_ms " << fmt_double(summary.horizon_ms) << '\n'
            << "mean_processed_gbps " << fmt_double(summary.mean_processed_gbps) << '\n'
            << "peak_processed_gbps " << fmt_double(summary.peak_processed_gbps) << '\n'
            << "mean_power_watts " << fmt_double(summary.mean_power_watts) << '\n'
            << "total_energy_joules " << fmt_double(summary.total_energy_joules) << '\n'
            << "total_drops " << summary.total_drops << '\n'
            << "switches " << summary.switch_count << '\n'
            << "generated_packets " << summary.generated_packets << '\n'
            << "processed_packets " << summary.processed_packets << '\n';
    }
};

/// Zero when no two same-flow services overlap in time on different
/// devices; the reordering guarantee checked over a whole run.
inline int count_flow_safety_violations(const std::vector<ServiceLogEntry>& services) {
    std::vector<const ServiceLogEntry*> sorted;
    sorted.reserve(services.size());
    for (const auto& s : services) sorted.push_back(&s);
    std::sort(sorted.begin(), sorted.end(), [](const ServiceLogEntry* a, const ServiceLogEntry* b) {
        if (a->start_ms != b->start_ms) return a->start_ms < b->start_ms;
        return a->end_ms < b->end_ms;
    });
    int violations = 0;
    std::vector<const ServiceLogEntry*> active;
    for (const ServiceLogEntry* s : sorted) {
        active.erase(std::remove_if(active.begin(), active.end(),
                                    [&](const ServiceLogEntry* a) { return a->end_ms <= s->start_ms; }),
                     active.end());
        for (const ServiceLogEntry* a : active)
            if (a->device != s->device && a->slots.overlaps(s->slots)) ++violations;
        active.push_back(s);
    }
    return violations;
}

// ---------------------------------------------------------------------------
// Stand-alone operation contracts (also used inside the engine pipeline).

enum class DispatchResult { Enqueued, Deferred, Dropped };

struct DispatchTarget {
    int queue_size = 0;
    int queue_capacity = 0;
    // Slot ranges currently in service on other devices (same app space).
    std::vector<FlowSlotRange> in_service_elsewhere;
};

/// Enqueue unless a flow-affinity conflict forces deferral; drop iff the
/// queue is full.
inline DispatchResult dispatch(const FlowSlotRange& batch_slots, const DispatchTarget& target) {
    for (const auto& r : target.in_service_elsewhere)
        if (r.overlaps(batch_slots)) return DispatchResult::Deferred;
    if (target.queue_size >= target.queue_capacity) return DispatchResult::Dropped;
    return DispatchResult::Enqueued;
}

/// Busy time over a window, clamped to [0, 1].
inline double utilization(double busy_ms, double window_ms) {
    if (window_ms <= 0) throw InvariantError("utilization: window must be > 0");
    return std::clamp(busy_ms / window_ms, 0.0, 1.0);
}

/// Per-batch service time for an app under a configuration.
inline double service_time(const PerfTable& table, const Configuration& cfg, const std::string& app_id,
                           const std::map<std::string, std::string>& app_kernels,
                           const std::vector<DeviceProfile>& devices) {
    auto cows = coworker_kernels(cfg, app_id, app_kernels, devices);
    PerfRecord row = lookup_for_context(table, cfg.mapping.at(app_id), app_kernels.at(app_id), cfg.batch_size, cows);
    return row.kernel_latency_ms;
}

// ---------------------------------------------------------------------------

class SimEngine : public Backend {
  public:
    SimEngine(const PerfTable& table, const ScenarioSpec& scenario, const PolicyRegistry* registry = nullptr)
        : table_(table), scenario_(scenario), registry_(registry) {
        provider_ = std::make_shared<SimPowerProvider>(scenario.devices);
        for (const auto& d : scenario_.devices) {
            DevState ds;
            ds.profile = d;
            devs_.emplace(d.id, std::move(ds));
            device_order_.push_back(d.id);
            provider_->set_power(d.id, 0, d.off_watts);
        }
        for (const auto& a : scenario_.apps) {
            AppState as;
            as.spec = a;
            apps_.emplace(a.id, std::move(as));
        }
    }

    const std::vector<DeviceProfile>& devices() const override { return scenario_.devices; }
    std::shared_ptr<SimPowerProvider> power_provider() const { return provider_; }
    const Configuration& active_config() const { return config_; }
    bool device_powered(const std::string& id) const { return devs_.at(id).powered; }

    /// Control channel hook, polled once per monitor tick; each returned
    /// line is executed as a command at that tick.
    void set_control_poll(std::function<std::vector<std::string>()> poll) { control_poll_ = std::move(poll); }

    // ------------------------------------------------------------------
    // Profiling: a capacity probe.  Batches are fed back to back straight
    // into the kernels (no NIC path, no ingest cap), so each kernel runs at
    // its calibrated rate for the whole training window and the measured
    // stats surface the calibration rows without distortion.
    ConfigStats profile_config(const Configuration& cfg, int training_batches) override {
        if (training_batches < 1) throw InvariantError("profile: training_batches must be >= 1");
        auto rows = resolve_rows(cfg);

        Ticks t0 = profile_clock_;
        Ticks min_span = 0, max_span = 0;
        bool first = true;
        double gbps = 0, mpps = 0, latency = 0;
        for (const auto& [app, row] : rows) {
            Ticks span = static_cast<Ticks>(training_batches) * std::max<Ticks>(1, ms_to_ticks(row.kernel_latency_ms));
            min_span = first ? span : std::min(min_span, span);
            max_span = std::max(max_span, span);
            first = false;
            gbps += row.kernel_gbps;
            mpps += row.kernel_mpps;
            latency += row.kernel_latency_ms;
        }

        // Every kernel is busy over [t0, t0 + min_span); record the draw on
        // the meters and keep the exact saturated sum as the statistic, so
        // equal mappings stay bit-identical across batch sizes.
        double watts = 0;
        for (const auto& dev : cfg.devices_used()) {
            double w = power_draw(table_.device(dev), 1.0, true);
            provider_->set_power(dev, t0, w);
            watts += w;
        }
        for (const auto& dev : cfg.devices_used())
            provider_->set_power(dev, t0 + max_span, table_.device(dev).off_watts);
        profile_clock_ = t0 + max_span;

        ConfigStats s;
        s.agg_gbps = gbps;
        s.agg_mpps = mpps;
        s.avg_latency_ms = latency / static_cast<double>(rows.size());
        s.avg_power_watts = watts;
        s.samples = training_batches;
        s.profiled = true;
        s.finalize_energy();
        return s;
    }

    // ------------------------------------------------------------------
    // Scheduler-facing surface.

    double activate(const Configuration& cfg, double now_ms) override { return switch_to(cfg, now_ms); }

    double switch_to(const Configuration& to, double now_ms) override {
        for (const auto& a : scenario_.apps)
            if (!to.mapping.count(a.id))
                throw ModelGapError("configuration " + std::to_string(to.id) + " does not map app " + a.id);
        auto rows = resolve_rows(to);  // throws ModelGapError before any mutation
        Ticks now = ms_to_ticks(now_ms);

        std::set<std::string> new_devs;
        for (const auto& [app, dev] : to.mapping) new_devs.insert(dev);

        // Unstarted batches of moving apps migrate with their app; in-flight
        // service on the departing device completes.
        for (auto& [app_id, A] : apps_) {
            const std::string& new_dev = to.mapping.at(app_id);
            if (!A.device.empty() && A.device != new_dev) {
                auto& old_q = devs_.at(A.device).queue;
                std::vector<EngineBatch> moved;
                for (auto it = old_q.begin(); it != old_q.end();) {
                    if (it->app == app_id) {
                        moved.push_back(*it);
                        it = old_q.erase(it);
                    } else {
                        ++it;
                    }
                }
                for (auto rit = moved.rbegin(); rit != moved.rend(); ++rit) A.pending.push_front(*rit);
            }
            A.device = new_dev;
            A.row = rows.at(app_id);
            A.service_ticks = std::max<Ticks>(1, ms_to_ticks(A.row.kernel_latency_ms));
        }
        for (auto& [dev_id, D] : devs_) {
            D.kernels_mapped = 0;
            for (const auto& [app, dev] : to.mapping)
                if (dev == dev_id) ++D.kernels_mapped;
        }
        config_ = to;

        Ticks completion = now;
        for (const auto& dev : new_devs) {
            DevState& D = devs_.at(dev);
            if (D.powered) {
                refresh_power(dev, now);
                continue;
            }
            ++D.power_epoch;
            Ticks ready = D.power_pending ? D.power_ready_at : now + ms_to_ticks(D.profile.switch_latency_ms);
            D.power_pending = true;
            D.power_ready_at = ready;
            push_event(ready, EvKind::PowerOn, dev, "", D.power_epoch);
            completion = std::max(completion, ready);
        }
        for (auto& [dev_id, D] : devs_) {
            if (new_devs.count(dev_id)) continue;
            if (!D.powered && !D.power_pending) continue;
            ++D.power_epoch;
            D.power_pending = false;
            Ticks drain_done = now;
            for (const auto& [app, svc] : D.in_service) drain_done = std::max(drain_done, svc.done_at);
            push_event(drain_done, EvKind::DrainOff, dev_id, "", D.power_epoch);
            completion = std::max(completion, drain_done);
        }

        for (auto& [app_id, A] : apps_) try_dispatch(app_id, now);
        // batch-size changes invalidate previously computed batch boundaries
        for (std::size_t i = 0; i < streams_.size(); ++i) {
            streams_[i].arrival_scheduled = false;
            try_assemble(i, now);
        }
        return ticks_to_ms(completion);
    }

    // ------------------------------------------------------------------
    /// Full scenario run.  The store is live: the scheduler refreshes it.
    Trace run(ConfigStore& store) {
        Scheduler sched(store, scenario_.policy, *this, scenario_.monitor_interval_ms, registry_);
        sched.set_hysteresis(scenario_.hysteresis_frac);
        scheduler_ = &sched;

        end_at_ = ms_to_ticks(scenario_.horizon_ms);
        trace_.device_order = device_order_;

        // The initial configuration is live before traffic starts; the first
        // packets queue at the interfaces while devices power on.
        sched.start(0);
        int app_index = 0;
        for (const auto& a : scenario_.apps) {
            for (int f : a.ifaces) {
                auto it = scenario_.schedule.streams.find({a.id, f});
                std::vector<RateStep> steps =
                    it == scenario_.schedule.streams.end() ? std::vector<RateStep>{} : it->second;
                streams_.push_back(StreamState{
                    PacketStream(a.id, app_index, f, steps, scenario_.horizon_ms, scenario_.seed,
                                 scenario_.packet_bytes, scenario_.flows, scenario_.burst),
                    0, 0, false, 0});
            }
            ++app_index;
        }
        for (std::size_t i = 0; i < streams_.size(); ++i) schedule_next_arrival(i, 0);

        for (const auto& c : scenario_.commands)
            push_event(ms_to_ticks(c.t_ms), EvKind::Control, c.command, "", 0);
        push_event(ms_to_ticks(scenario_.monitor_interval_ms), EvKind::MonitorTick, "", "", 0);

        window_start_ = 0;
        while (!events_.empty()) {
            Event ev = events_.top();
            if (ev.t > end_at_) break;
            events_.pop();
            clock_ = ev.t;
            handle(ev);
        }
        clock_ = end_at_;
        emit_final_row(end_at_);

        finalize(sched);
        scheduler_ = nullptr;
        return std::move(trace_);
    }

    /// Exact packet-count identity:
    /// consumed = pending + queued + in-service + processed, and
    /// arrived >= consumed + nic-drops (the rest sits in the NIC ring).
    bool check_conservation() const {
        std::uint64_t arrived = 0, consumed = 0, nic_drop = 0;
        for (const auto& s : streams_) {
            arrived += s.gen.count_arrived_at(clock_);
            consumed += s.consumed;
            nic_drop += s.nic_dropped;
        }
        std::uint64_t in_pending = 0, in_queue = 0, in_service = 0;
        for (const auto& [id, A] : apps_)
            for (const auto& b : A.pending) in_pending += static_cast<std::uint64_t>(b.count);
        for (const auto& [id, D] : devs_) {
            for (const auto& b : D.queue) in_queue += static_cast<std::uint64_t>(b.count);
            for (const auto& [app, svc] : D.in_service) in_service += static_cast<std::uint64_t>(svc.batch.count);
        }
        return consumed == in_pending + in_queue + in_service + processed_packets_ &&
               arrived >= consumed + nic_drop;
    }

  private:
    enum class EvKind { BatchArrival, ServiceDone, PowerOn, DrainOff, MonitorTick, Control };

    struct Event {
        Ticks t = 0;
        std::uint64_t seq = 0;
        EvKind kind = EvKind::MonitorTick;
        std::string a;
        std::string b;
        std::uint64_t tag = 0;

        bool operator>(const Event& o) const { return std::tie(t, seq) > std::tie(o.t, o.seq); }
    };

    struct EngineBatch {
        std::uint64_t seq = 0;
        std::string app;
        int iface = 0;
        int count = 0;
        Ticks first_arrival = 0;
        Ticks last_arrival = 0;
        Ticks enqueued_at = 0;
        FlowSlotRange slots;
    };

    struct InServiceRec {
        EngineBatch batch;
        Ticks started_at = 0;
        Ticks done_at = 0;
    };

    struct DevState {
        DeviceProfile profile;
        bool powered = false;
        bool power_pending = false;
        Ticks power_ready_at = 0;
        std::uint64_t power_epoch = 0;
        std::deque<EngineBatch> queue;
        std::map<std::string, InServiceRec> in_service;
        int kernels_mapped = 0;
    };

    struct AppState {
        AppSpec spec;
        std::string device;
        PerfRecord row;
        Ticks service_ticks = 0;
        std::deque<EngineBatch> pending;
        std::uint64_t window_completed_pkts = 0;
    };

    struct StreamState {
        PacketStream gen;
        std::uint64_t consumed = 0;     // packets placed into batches
        std::uint64_t nic_dropped = 0;  // ring overruns
        bool arrival_scheduled = false;
        std::uint64_t window_arrived_mark = 0;
    };

    std::map<std::string, PerfRecord> resolve_rows(const Configuration& cfg) const {
        auto kernels = scenario_.app_kernels();
        std::map<std::string, PerfRecord> rows;
        for (const auto& [app, dev] : cfg.mapping) {
            if (!kernels.count(app)) throw ModelGapError("configuration maps unknown app " + app);
            auto cows = coworker_kernels(cfg, app, kernels, scenario_.devices);
            rows[app] = lookup_for_context(table_, dev, kernels.at(app), cfg.batch_size, cows);
        }
        return rows;
    }

    void push_event(Ticks t, EvKind kind, std::string a, std::string b, std::uint64_t tag) {
        events_.push(Event{t, event_seq_++, kind, std::move(a), std::move(b), tag});
    }

    void handle(const Event& ev) {
        switch (ev.kind) {
            case EvKind::BatchArrival: {
                std::size_t idx = static_cast<std::size_t>(ev.tag);
                streams_[idx].arrival_scheduled = false;
                try_assemble(idx, ev.t);
                break;
            }
            case EvKind::ServiceDone:
                complete_service(ev.a, ev.b, ev.t);
                break;
            case EvKind::PowerOn: {
                DevState& D = devs_.at(ev.a);
                if (ev.tag != D.power_epoch || !D.power_pending) break;  // superseded
                D.power_pending = false;
                D.powered = true;
                refresh_power(ev.a, ev.t);
                try_start_service(ev.a, ev.t);
                for (auto& [app_id, A] : apps_)
                    if (A.device == ev.a) try_dispatch(app_id, ev.t);
                break;
            }
            case EvKind::DrainOff: {
                DevState& D = devs_.at(ev.a);
                if (ev.tag != D.power_epoch) break;  // superseded by a later switch
                if (!D.in_service.empty()) break;
                D.powered = false;
                D.power_pending = false;
                refresh_power(ev.a, ev.t);
                break;
            }
            case EvKind::MonitorTick:
                on_tick(ev.t);
                break;
            case EvKind::Control:
                on_control(ev.a, ev.t);
                break;
        }
    }

    // --- assembly -----------------------------------------------------

    void schedule_next_arrival(std::size_t idx, Ticks now) {
        StreamState& S = streams_[idx];
        if (S.arrival_scheduled) return;
        int B = config_.batch_size > 0 ? config_.batch_size : scenario_.batch_grid.front();
        std::uint64_t next_end = S.consumed + S.nic_dropped + static_cast<std::uint64_t>(B) - 1;
        auto t = S.gen.arrival_of(next_end);
        if (!t) return;  // stream ends before a full batch; remainder stays in the ring
        Ticks ready = std::max(now, ms_to_ticks(*t));
        S.arrival_scheduled = true;
        push_event(ready, EvKind::BatchArrival, "", "", idx);
    }

    void try_assemble(std::size_t idx, Ticks now) {
        StreamState& S = streams_[idx];
        auto app_it = apps_.find(S.gen.app());
        if (app_it == apps_.end()) return;
        AppState& A = app_it->second;
        int B = config_.batch_size;
        if (B <= 0) return;

        while (true) {
            if (A.pending.size() >= kPendingCapBatches) {
                blocked_streams_.insert(idx);
                break;
            }
            std::uint64_t start = S.consumed + S.nic_dropped;
            auto last_t = S.gen.arrival_of(start + static_cast<std::uint64_t>(B) - 1);
            if (!last_t) break;
            Ticks arrived_at = ms_to_ticks(*last_t);
            if (arrived_at > now) {
                schedule_next_arrival(idx, now);
                break;
            }
            // global ingest cap: admission no faster than the NIC bus
            if (scenario_.ingest_cap_gbps > 0) {
                if (cap_free_at_ > now) {
                    S.arrival_scheduled = true;
                    push_event(cap_free_at_, EvKind::BatchArrival, "", "", idx);
                    break;
                }
                double batch_bits = static_cast<double>(B) * S.gen.bits_per_packet();
                cap_free_at_ =
                    std::max(cap_free_at_, now) + ms_to_ticks(batch_bits / (scenario_.ingest_cap_gbps * 1e6));
            }

            EngineBatch b;
            b.seq = batch_seq_++;
            b.app = A.spec.id;
            b.iface = S.gen.iface();
            b.count = B;
            b.first_arrival = ms_to_ticks(*S.gen.arrival_of(start));
            b.last_arrival = arrived_at;
            b.slots.app = A.spec.id;
            b.slots.iface = b.iface;
            b.slots.space = static_cast<std::uint32_t>(S.gen.flow_slots());
            b.slots.begin = S.gen.slot_of(start);
            b.slots.len = static_cast<std::uint32_t>(
                std::min<std::uint64_t>(static_cast<std::uint64_t>(B), S.gen.flow_slots()));
            S.consumed += static_cast<std::uint64_t>(B);
            A.pending.push_back(std::move(b));
            try_dispatch(A.spec.id, now);
        }
    }

    // NIC ring overruns: the oldest unbatched packets are lost once the
    // ring exceeds capacity.  Enforced at monitor granularity.
    void enforce_backlog_cap(Ticks now) {
        for (auto& S : streams_) {
            std::uint64_t arrived = S.gen.count_arrived_at(now);
            std::uint64_t ring = arrived - S.consumed - S.nic_dropped;
            if (ring > scenario_.backlog_cap_packets) {
                std::uint64_t drop = ring - scenario_.backlog_cap_packets;
                S.nic_dropped += drop;
                window_drops_ += static_cast<long>(drop);
            }
        }
    }

    // --- dispatch & service -------------------------------------------

    bool affinity_conflict(const EngineBatch& b, const std::string& target_dev) const {
        for (const auto& [dev_id, D] : devs_) {
            if (dev_id == target_dev) continue;
            for (const auto& [app, svc] : D.in_service)
                if (svc.batch.slots.overlaps(b.slots)) return true;
        }
        return false;
    }

    void try_dispatch(const std::string& app_id, Ticks now) {
        AppState& A = apps_.at(app_id);
        if (A.device.empty()) return;
        DevState& D = devs_.at(A.device);
        // Queue slots are shared fairly between the device's kernels, so a
        // backlogged app cannot starve its co-workers of admission.
        int quota = std::max(1, D.profile.queue_capacity_batches / std::max(1, D.kernels_mapped));
        while (!A.pending.empty()) {
            if (static_cast<int>(D.queue.size()) >= D.profile.queue_capacity_batches) break;
            int own = 0;
            for (const auto& q : D.queue)
                if (q.app == app_id) ++own;
            if (own >= quota) break;
            EngineBatch& b = A.pending.front();
            if (affinity_conflict(b, A.device)) break;  // wait for the conflicting device to drain
            b.enqueued_at = now;
            D.queue.push_back(b);
            A.pending.pop_front();
        }
        try_start_service(A.device, now);
        resume_blocked_streams(now);
    }

    void try_start_service(const std::string& dev_id, Ticks now) {
        DevState& D = devs_.at(dev_id);
        if (!D.powered) return;
        bool started = false;
        for (auto& [app_id, A] : apps_) {
            if (A.device != dev_id || D.in_service.count(app_id)) continue;
            auto it = std::find_if(D.queue.begin(), D.queue.end(),
                                   [&](const EngineBatch& b) { return b.app == app_id; });
            if (it == D.queue.end()) continue;
            if (affinity_conflict(*it, dev_id)) continue;
            EngineBatch b = *it;
            D.queue.erase(it);
            InServiceRec rec;
            rec.batch = b;
            rec.started_at = now;
            Ticks svc = A.service_ticks;
            if (config_.batch_size > 0 && b.count != config_.batch_size)
                svc = static_cast<Ticks>(static_cast<double>(svc) * b.count / config_.batch_size + 0.5);
            rec.done_at = now + std::max<Ticks>(1, svc);
            push_event(rec.done_at, EvKind::ServiceDone, dev_id, app_id, 0);
            trace_.services.push_back(ServiceLogEntry{dev_id, app_id, b.slots, ticks_to_ms(now),
                                                      ticks_to_ms(rec.done_at), b.count});
            D.in_service.emplace(app_id, rec);
            started = true;
        }
        if (started) refresh_power(dev_id, now);
    }

    void complete_service(const std::string& dev_id, const std::string& app_id, Ticks now) {
        DevState& D = devs_.at(dev_id);
        auto it = D.in_service.find(app_id);
        if (it == D.in_service.end() || it->second.done_at != now) return;
        EngineBatch b = it->second.batch;
        D.in_service.erase(it);

        processed_packets_ += static_cast<std::uint64_t>(b.count);
        apps_.at(app_id).window_completed_pkts += static_cast<std::uint64_t>(b.count);
        window_completed_batches_ += 1;
        window_latency_sum_ms_ += ticks_to_ms(now - b.first_arrival);

        refresh_power(dev_id, now);
        try_start_service(dev_id, now);
        // freed queue space and cleared flow pins can unblock any app
        for (auto& [other_app, OA] : apps_)
            if (!OA.pending.empty()) try_dispatch(other_app, now);
    }

    void resume_blocked_streams(Ticks now) {
        if (blocked_streams_.empty()) return;
        auto blocked = std::move(blocked_streams_);
        blocked_streams_.clear();
        for (std::size_t idx : blocked) try_assemble(idx, now);
    }

    // --- power ----------------------------------------------------------

    void refresh_power(const std::string& dev_id, Ticks t) {
        DevState& D = devs_.at(dev_id);
        double watts;
        if (!D.powered) {
            watts = D.profile.off_watts;
        } else {
            double util = D.kernels_mapped > 0
                              ? static_cast<double>(D.in_service.size()) / static_cast<double>(D.kernels_mapped)
                              : 0.0;
            watts = power_draw(D.profile, util, true);
        }
        provider_->set_power(dev_id, t, watts);
    }

    // --- monitor --------------------------------------------------------

    void on_tick(Ticks now) {
        enforce_backlog_cap(now);
        if (control_poll_)
            for (const auto& cmd : control_poll_()) on_control(cmd, now);

        WindowStats w = measure_window(now);
        if (scheduler_) scheduler_->tick(w, w.t1_ms);
        emit_row_from(w, now);

        window_start_ = now;
        window_drops_ = 0;
        window_latency_sum_ms_ = 0;
        window_completed_batches_ = 0;

        if (!check_conservation()) {
            trace_.conservation_ok = false;
            trace_.notes.push_back("conservation violated at t=" + fmt_double(ticks_to_ms(now)));
        }

        if (scheduler_ && scheduler_->state().shutdown_at_ms &&
            ms_to_ticks(*scheduler_->state().shutdown_at_ms) <= now) {
            end_at_ = now;
            return;
        }
        Ticks next = now + ms_to_ticks(scenario_.monitor_interval_ms);
        if (next <= end_at_) push_event(next, EvKind::MonitorTick, "", "", 0);
    }

    WindowStats measure_window(Ticks now) {
        WindowStats w;
        w.t0_ms = ticks_to_ms(window_start_);
        w.t1_ms = ticks_to_ms(now);
        double dt_s = (w.t1_ms - w.t0_ms) / 1000.0;

        for (auto& s : streams_) {
            std::uint64_t n = s.gen.count_arrived_at(now);
            double bits = static_cast<double>(n - s.window_arrived_mark) * s.gen.bits_per_packet();
            s.window_arrived_mark = n;
            w.offered_gbps_per_app[s.gen.app()] += dt_s > 0 ? bits / (dt_s * 1e9) : 0;
        }
        for (const auto& [app, g] : w.offered_gbps_per_app) w.offered_gbps_total += g;

        std::uint64_t processed_pkts_w = 0;
        for (auto& [id, A] : apps_) {
            processed_pkts_w += A.window_completed_pkts;
            A.window_completed_pkts = 0;
        }
        w.processed_gbps =
            dt_s > 0 ? static_cast<double>(processed_pkts_w) * scenario_.packet_bytes * 8.0 / (dt_s * 1e9) : 0;
        w.drops = window_drops_;

        // Capacity-basis measurement of the active configuration: the
        // calibrated service rates in effect, plus measured latency/power.
        ConfigStats m;
        for (const auto& [id, A] : apps_) {
            m.agg_gbps += A.row.kernel_gbps;
            m.agg_mpps += A.row.kernel_mpps;
        }
        if (window_completed_batches_ > 0)
            m.avg_latency_ms = window_latency_sum_ms_ / static_cast<double>(window_completed_batches_);
        else
            m.avg_latency_ms = last_measured_latency_ms_;  // measurement gap, carry forward
        last_measured_latency_ms_ = m.avg_latency_ms;
        for (const auto& dev : config_.devices_used())
            m.avg_power_watts += provider_->own_mean_watts(dev, window_start_, now);
        m.samples = apps_.empty() ? 0 : static_cast<long>(window_completed_batches_ / apps_.size());
        m.last_updated_ms = w.t1_ms;
        m.profiled = true;
        m.finalize_energy();
        w.measured = m;
        return w;
    }

    void emit_row_from(const WindowStats& w, Ticks now) {
        TraceRow r;
        r.t_ms = w.t1_ms;
        r.config_id = scheduler_ ? scheduler_->active_config() : config_.id;
        r.offered_gbps = w.offered_gbps_total;
        r.processed_gbps = w.processed_gbps;
        r.latency_ms = w.measured.avg_latency_ms;
        r.drops = w.drops;
        Ticks t0 = ms_to_ticks(w.t0_ms);
        for (const auto& dev : device_order_) r.dev_watts.push_back(provider_->own_mean_watts(dev, t0, now));
        trace_.rows.push_back(std::move(r));
    }

    void emit_final_row(Ticks now) {
        if (now <= window_start_) return;
        enforce_backlog_cap(now);
        WindowStats w = measure_window(now);
        emit_row_from(w, now);
        window_start_ = now;
        window_drops_ = 0;
        window_latency_sum_ms_ = 0;
        window_completed_batches_ = 0;
    }

    void on_control(const std::string& command, Ticks now) {
        auto tok = tokenize(command);
        if (tok.empty() || !scheduler_) return;
        try {
            if (tok[0] == "policy") {
                std::string rest;
                for (std::size_t i = 1; i < tok.size(); ++i) {
                    if (i > 1) rest += ' ';
                    rest += std::string(tok[i]);
                }
                scheduler_->set_policy(parse_policy(rest), ticks_to_ms(now));
            } else if (tok[0] == "shutdown") {
                if (tok.size() != 2) throw ParseError("shutdown <ms>");
                scheduler_->set_shutdown(ticks_to_ms(now) + parse_double(tok[1], "shutdown ms"));
            } else {
                throw ParseError("unknown control command '" + std::string(tok[0]) + "'");
            }
        } catch (const std::exception& e) {
            trace_.notes.push_back("control rejected at t=" + fmt_double(ticks_to_ms(now)) + ": " + e.what());
        }
    }

    void finalize(Scheduler& sched) {
        trace_.switches = sched.events();
        RunSummary& s = trace_.summary;
        s.horizon_ms = ticks_to_ms(end_at_);
        double total_time_s = 0, gbits = 0, joules = 0, peak = 0;
        double prev_t = 0;
        for (const auto& r : trace_.rows) {
            double dt_s = (r.t_ms - prev_t) / 1000.0;
            prev_t = r.t_ms;
            if (dt_s <= 0) continue;
            total_time_s += dt_s;
            gbits += r.processed_gbps * dt_s;
            double w = 0;
            for (double v : r.dev_watts) w += v;
            joules += w * dt_s;
            peak = std::max(peak, r.processed_gbps);
            s.total_drops += r.drops;
        }
        s.mean_processed_gbps = total_time_s > 0 ? gbits / total_time_s : 0;
        s.peak_processed_gbps = peak;
        s.mean_power_watts = total_time_s > 0 ? joules / total_time_s : 0;
        s.total_energy_joules = joules;
        for (const auto& ev : trace_.switches)
            if (ev.from_config != ev.to_config && ev.from_config >= 0) ++s.switch_count;
        std::uint64_t arrived = 0;
        for (const auto& st : streams_) arrived += st.gen.count_arrived_at(end_at_);
        s.generated_packets = arrived;
        s.processed_packets = processed_packets_;
    }

    static constexpr std::size_t kPendingCapBatches = 4;

    const PerfTable& table_;
    ScenarioSpec scenario_;
    const PolicyRegistry* registry_;
    std::shared_ptr<SimPowerProvider> provider_;

    std::map<std::string, DevState> devs_;
    std::map<std::string, AppState> apps_;
    std::vector<std::string> device_order_;

    std::vector<StreamState> streams_;
    std::set<std::size_t> blocked_streams_;

    Configuration config_;
    Scheduler* scheduler_ = nullptr;
    std::function<std::vector<std::string>()> control_poll_;

    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
    std::uint64_t event_seq_ = 0;
    std::uint64_t batch_seq_ = 0;
    Ticks clock_ = 0;
    Ticks end_at_ = 0;
    Ticks cap_free_at_ = 0;
    Ticks profile_clock_ = 0;

    Ticks window_start_ = 0;
    long window_drops_ = 0;
    double window_latency_sum_ms_ = 0;
    std::uint64_t window_completed_batches_ = 0;
    double last_measured_latency_ms_ = 0;

    std::uint64_t processed_packets_ = 0;

    Trace trace_;
};

}  // namespace pythia
