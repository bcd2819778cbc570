#pragma once

/// Selection policies over the configuration store.  Each policy maps the
/// store plus current conditions to one configuration; user policies are
/// registered selectors dispatched exactly like the built-ins.

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "pythia/profiler.hpp"
#include "pythia/util.hpp"

namespace pythia {

enum class PolicyKind { MaxThroughput, MinLatency, MinEnergy, TargetRate, User };

struct PolicyId {
    PolicyKind kind = PolicyKind::MaxThroughput;
    std::string user_name;      // for PolicyKind::User
    double target_gbps = 10.0;  // for PolicyKind::TargetRate

    std::string str() const {
        switch (kind) {
            case PolicyKind::MaxThroughput: return "max_throughput";
            case PolicyKind::MinLatency: return "min_latency";
            case PolicyKind::MinEnergy: return "min_energy";
            case PolicyKind::TargetRate: return "target_rate " + fmt_double(target_gbps);
            case PolicyKind::User: return "user:" + user_name;
        }
        return "?";
    }
};

inline PolicyId parse_policy(std::string_view text) {
    auto tok = tokenize(text);
    if (tok.empty()) throw ParseError("empty policy");
    PolicyId p;
    if (tok[0] == "max_throughput") {
        p.kind = PolicyKind::MaxThroughput;
    } else if (tok[0] == "min_latency") {
        p.kind = PolicyKind::MinLatency;
    } else if (tok[0] == "min_energy") {
        p.kind = PolicyKind::MinEnergy;
    } else if (tok[0] == "target_rate") {
        p.kind = PolicyKind::TargetRate;
        if (tok.size() > 1) p.target_gbps = parse_double(tok[1], "target_rate parameter");
    } else if (tok[0].substr(0, 5) == "user:") {
        p.kind = PolicyKind::User;
        p.user_name = std::string(tok[0].substr(5));
        if (p.user_name.empty()) throw ParseError("user policy needs a name");
    } else {
        throw ParseError("unknown policy '" + std::string(tok[0]) + "'");
    }
    return p;
}

struct PolicyContext {
    std::map<std::string, double> offered_gbps_per_app;
    int active_config = -1;
    ConfigStats snapshot_prev;  // second-to-last monitor window of the active config
    ConfigStats snapshot_last;  // last monitor window

    double offered_total() const {
        double t = 0;
        for (const auto& [app, g] : offered_gbps_per_app) t += g;
        return t;
    }
};

using UserSelector = std::function<int(const ConfigStore&, const PolicyContext&)>;

class PolicyRegistry {
  public:
    PolicyId register_user_policy(const std::string& name, UserSelector selector) {
        if (name.empty()) throw InvariantError("user policy needs a name");
        if (selectors_.count(name)) throw InvariantError("user policy '" + name + "' already registered");
        selectors_[name] = std::move(selector);
        return PolicyId{PolicyKind::User, name};
    }

    bool has(const std::string& name) const { return selectors_.count(name) > 0; }

    const UserSelector& get(const std::string& name) const {
        auto it = selectors_.find(name);
        if (it == selectors_.end()) throw InvariantError("user policy '" + name + "' is not registered");
        return it->second;
    }

  private:
    std::map<std::string, UserSelector> selectors_;
};

namespace detail {

// Deterministic tie-break: lower power, then smaller batch, then lower id.
inline bool tie_break_before(const StoreEntry& a, const StoreEntry& b) {
    if (a.stats.avg_power_watts != b.stats.avg_power_watts)
        return a.stats.avg_power_watts < b.stats.avg_power_watts;
    if (a.config.batch_size != b.config.batch_size) return a.config.batch_size < b.config.batch_size;
    return a.config.id < b.config.id;
}

/// Linear scan for the best entry under a strict-metric comparator; ties
/// resolved by tie_break_before.
template <typename BetterMetric>
const StoreEntry* scan(const ConfigStore& store, BetterMetric better, bool (*filter)(const StoreEntry&),
                       const PolicyContext& ctx) {
    const StoreEntry* best = nullptr;
    for (const auto& [id, e] : store) {
        if (!e.stats.profiled) continue;
        if (filter && !filter(e)) continue;
        (void)ctx;
        if (!best || better(e, *best) || (!better(*best, e) && tie_break_before(e, *best))) best = &e;
    }
    return best;
}

}  // namespace detail

/// Built-in and user policy dispatch.  Unprofiled entries are never chosen.
inline const StoreEntry& select_entry(const PolicyId& policy, const ConfigStore& store, const PolicyContext& ctx,
                                      const PolicyRegistry* registry = nullptr) {
    if (store.empty()) throw InvariantError("select: empty store");

    if (policy.kind == PolicyKind::User) {
        if (!registry) throw InvariantError("select: no policy registry supplied");
        int id = registry->get(policy.user_name)(store, ctx);
        const StoreEntry* e = store.find(id);
        if (!e || !e->stats.profiled)
            throw InvariantError("user policy '" + policy.user_name + "' chose an unusable config");
        return *e;
    }

    double offered = ctx.offered_total();
    auto feasible = [offered](const StoreEntry& e) { return e.stats.agg_gbps >= offered; };

    const StoreEntry* best = nullptr;
    switch (policy.kind) {
        case PolicyKind::MaxThroughput:
            best = detail::scan(
                store, [](const StoreEntry& a, const StoreEntry& b) { return a.stats.agg_gbps > b.stats.agg_gbps; },
                nullptr, ctx);
            break;
        case PolicyKind::MinLatency: {
            auto better = [](const StoreEntry& a, const StoreEntry& b) {
                return a.stats.avg_latency_ms < b.stats.avg_latency_ms;
            };
            for (const auto& [id, e] : store)
                if (e.stats.profiled && feasible(e) &&
                    (!best || better(e, *best) || (!better(*best, e) && detail::tie_break_before(e, *best))))
                    best = &e;
            if (!best) best = detail::scan(store, better, nullptr, ctx);
            break;
        }
        case PolicyKind::MinEnergy: {
            auto better = [](const StoreEntry& a, const StoreEntry& b) {
                return a.stats.avg_power_watts < b.stats.avg_power_watts;
            };
            for (const auto& [id, e] : store)
                if (e.stats.profiled && feasible(e) &&
                    (!best || better(e, *best) || (!better(*best, e) && detail::tie_break_before(e, *best))))
                    best = &e;
            if (!best) {
                // nothing can absorb the load: keep the most useful work per watt
                auto per_watt = [](const StoreEntry& e) {
                    return e.stats.avg_power_watts > 0 ? e.stats.agg_gbps / e.stats.avg_power_watts : 0.0;
                };
                best = detail::scan(
                    store,
                    [per_watt](const StoreEntry& a, const StoreEntry& b) { return per_watt(a) > per_watt(b); },
                    nullptr, ctx);
            }
            break;
        }
        case PolicyKind::TargetRate: {
            double target = policy.target_gbps;
            best = detail::scan(
                store,
                [target](const StoreEntry& a, const StoreEntry& b) {
                    return std::abs(a.stats.agg_gbps - target) < std::abs(b.stats.agg_gbps - target);
                },
                nullptr, ctx);
            break;
        }
        case PolicyKind::User: break;  // handled above
    }
    if (!best) throw InvariantError("select: no profiled configuration available");
    return *best;
}

inline Configuration select(const PolicyId& policy, const ConfigStore& store, const PolicyContext& ctx,
                            const PolicyRegistry* registry = nullptr) {
    return select_entry(policy, store, ctx, registry).config;
}

}  // namespace pythia
