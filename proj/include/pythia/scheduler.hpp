#pragma once

/// The adaptive loop: a periodic monitor measures the active configuration,
/// refreshes its store entry, re-runs the policy selector, and switches the
/// backend when the selection changes.  The scheduler is the single writer
/// of both its own state and the store.

#include <optional>
#include <string>
#include <vector>

#include "pythia/config.hpp"
#include "pythia/policies.hpp"
#include "pythia/profiler.hpp"
#include "pythia/util.hpp"

namespace pythia {

struct MonitorState {
    double interval_ms = 1000;
    PolicyId policy;
    int active = -1;
    ConfigStats snapshot_prev;
    ConfigStats snapshot_last;
    std::optional<double> shutdown_at_ms;
    // A switch requires the candidate to beat the active entry by this
    // fraction on the policy metric (0 = paper-fidelity, no hysteresis).
    double hysteresis_frac = 0.0;
    bool refresh_enabled = true;
};

class Scheduler {
  public:
    Scheduler(ConfigStore& store, PolicyId policy, Backend& backend, double monitor_interval_ms,
              const PolicyRegistry* registry = nullptr)
        : store_(store), backend_(backend), registry_(registry) {
        if (store_.empty()) throw InvariantError("scheduler: empty store");
        state_.interval_ms = monitor_interval_ms;
        if (monitor_interval_ms <= 0) throw InvariantError("scheduler: monitor interval must be > 0");
        state_.policy = std::move(policy);
        validate_policy(state_.policy);
    }

    /// Pick and activate the initial configuration before any traffic runs.
    SwitchEvent start(double now_ms = 0) {
        PolicyContext ctx;  // no traffic yet: zero offered load
        const StoreEntry& choice = select_entry(state_.policy, store_, ctx, registry_);
        double done = backend_.activate(choice.config, now_ms);
        state_.active = choice.config.id;
        SwitchEvent ev;
        ev.t_ms = now_ms;
        ev.from_config = -1;
        ev.to_config = choice.config.id;
        ev.reason = SwitchReason::Startup;
        ev.completion_ms = done;
        events_.push_back(ev);
        return ev;
    }

    /// One monitor tick: refresh the store with the window measurement, run
    /// the selector, switch if beaten.  Returns the switch event if one
    /// happened.
    std::optional<SwitchEvent> tick(const WindowStats& window, double now_ms) {
        if (state_.active < 0) throw InvariantError("scheduler: tick before start");

        // (1)-(2) measure and refresh ("keeps training itself over time")
        state_.snapshot_prev = state_.snapshot_last;
        state_.snapshot_last = window.measured;
        const StoreEntry* active = store_.find(state_.active);
        if (state_.refresh_enabled && active && window.measured.profiled)
            store_.update_stats(state_.active, window.measured);

        // (3) dispatch the policy selector
        PolicyContext ctx;
        ctx.offered_gbps_per_app = window.offered_gbps_per_app;
        ctx.active_config = state_.active;
        ctx.snapshot_prev = state_.snapshot_prev;
        ctx.snapshot_last = state_.snapshot_last;
        const StoreEntry& choice = select_entry(state_.policy, store_, ctx, registry_);

        std::optional<SwitchEvent> out;
        if (choice.config.id != state_.active && beats_active(choice, ctx)) {
            out = switch_config(state_.active, choice.config.id, now_ms, pending_reason_);
        }
        pending_reason_ = SwitchReason::PolicyDecision;

        // (5) shutdown timer upkeep happens at the engine; the state only
        // carries the deadline.
        return out;
    }

    /// Drain-and-activate semantics live in the backend; failures revert to
    /// the previous configuration and are logged as degraded.
    SwitchEvent switch_config(int from_id, int to_id, double now_ms, SwitchReason reason) {
        const StoreEntry* to = store_.find(to_id);
        if (!to) throw InvariantError("switch_config: unknown target config " + std::to_string(to_id));
        SwitchEvent ev;
        ev.t_ms = now_ms;
        ev.from_config = from_id;
        ev.to_config = to_id;
        ev.reason = reason;
        ev.candidate_staleness_ms = now_ms - to->stats.last_updated_ms;
        if (from_id == to_id) {
            ev.completion_ms = now_ms;  // no-op
            events_.push_back(ev);
            return ev;
        }
        try {
            ev.completion_ms = backend_.switch_to(to->config, now_ms);
            state_.active = to_id;
        } catch (const std::exception&) {
            ev.to_config = from_id;  // revert, stays degraded on the old config
            ev.reason = SwitchReason::Degraded;
            ev.completion_ms = now_ms;
        }
        events_.push_back(ev);
        return ev;
    }

    /// Takes effect at the next tick.  Unknown policies are rejected and the
    /// active policy stays.
    void set_policy(const PolicyId& policy, double now_ms) {
        (void)now_ms;
        validate_policy(policy);
        if (policy.kind == state_.policy.kind && policy.user_name == state_.policy.user_name &&
            policy.target_gbps == state_.policy.target_gbps)
            return;  // no-op
        state_.policy = policy;
        pending_reason_ = SwitchReason::PolicyChange;
    }

    void set_shutdown(double at_ms) { state_.shutdown_at_ms = at_ms; }
    void set_hysteresis(double frac) { state_.hysteresis_frac = frac; }
    void set_refresh(bool on) { state_.refresh_enabled = on; }

    const MonitorState& state() const { return state_; }
    int active_config() const { return state_.active; }
    const std::vector<SwitchEvent>& events() const { return events_; }

  private:
    void validate_policy(const PolicyId& p) const {
        if (p.kind == PolicyKind::User && (!registry_ || !registry_->has(p.user_name)))
            throw InvariantError("policy '" + p.str() + "' is not registered");
    }

    /// Hysteresis gate: with margin zero any differing selection switches;
    /// otherwise the candidate must beat the active entry on the policy
    /// metric by the margin.  An infeasible or unprofiled active always
    /// loses.
    bool beats_active(const StoreEntry& cand, const PolicyContext& ctx) const {
        double m = state_.hysteresis_frac;
        if (m <= 0) return true;
        const StoreEntry* act = store_.find(state_.active);
        if (!act || !act->stats.profiled) return true;
        double offered = ctx.offered_total();
        switch (state_.policy.kind) {
            case PolicyKind::MaxThroughput:
                return cand.stats.agg_gbps > act->stats.agg_gbps * (1 + m);
            case PolicyKind::MinLatency:
                if (act->stats.agg_gbps < offered) return true;
                return cand.stats.avg_latency_ms < act->stats.avg_latency_ms * (1 - m);
            case PolicyKind::MinEnergy:
                if (act->stats.agg_gbps < offered) return true;
                return cand.stats.avg_power_watts < act->stats.avg_power_watts * (1 - m);
            case PolicyKind::TargetRate: {
                double t = state_.policy.target_gbps;
                return std::abs(cand.stats.agg_gbps - t) < std::abs(act->stats.agg_gbps - t) * (1 - m);
            }
            case PolicyKind::User:
                return true;
        }
        return true;
    }

    ConfigStore& store_;
    Backend& backend_;
    const PolicyRegistry* registry_;
    MonitorState state_;
    SwitchReason pending_reason_ = SwitchReason::PolicyDecision;
    std::vector<SwitchEvent> events_;
};

}  // namespace pythia
