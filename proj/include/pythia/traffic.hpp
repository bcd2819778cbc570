#pragma once

/// Deterministic synthetic traffic: per-interface rate schedules, 5-tuple
/// flow identity, and in-order batch assembly.
///
/// Arrival times come from inverting the cumulative-bits curve of the
/// piecewise-constant schedule, so packet counts carry remainders across
/// intervals exactly and identical inputs always produce identical streams.
/// One worker owns one interface; flows never span interfaces.

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pythia/refkernels/kernels.hpp"
#include "pythia/util.hpp"

namespace pythia {

constexpr int kDefaultPacketBytes = 1514;
constexpr int kDefaultFlowsPerStream = 4096;
constexpr double kIfaceLineRateGbps = 10.0;

struct FiveTuple {
    std::uint32_t src_addr = 0;
    std::uint32_t dst_addr = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t proto = 6;

    // Direction-free form: the lexicographically smaller endpoint first.
    FiveTuple canonical() const {
        FiveTuple t = *this;
        auto a = std::pair{src_addr, src_port};
        auto b = std::pair{dst_addr, dst_port};
        if (b < a) {
            std::swap(t.src_addr, t.dst_addr);
            std::swap(t.src_port, t.dst_port);
        }
        return t;
    }
};

struct FlowKey {
    std::uint64_t hash = 0;
    bool operator==(const FlowKey&) const = default;
    auto operator<=>(const FlowKey&) const = default;
};

inline FlowKey flow_key(const FiveTuple& tuple) {
    FiveTuple c = tuple.canonical();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    auto feed = [&h](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    feed(c.src_addr, 4);
    feed(c.dst_addr, 4);
    feed(c.src_port, 2);
    feed(c.dst_port, 2);
    feed(c.proto, 1);
    return {h};
}

struct PacketRecord {
    double arrival_ms = 0;
    int size_bytes = 0;
    FlowKey flow;
    std::uint32_t flow_slot = 0;  // flow index within its (app, iface) stream
    std::uint64_t payload_seed = 0;
    int iface = 0;
};

struct RateStep {
    double start_ms = 0;
    double gbps = 0;
};

/// Piecewise-constant offered rate per (app, iface).
struct RateSchedule {
    std::map<std::pair<std::string, int>, std::vector<RateStep>> streams;

    void add(const std::string& app, int iface, double start_ms, double gbps) {
        auto& steps = streams[{app, iface}];
        if (!steps.empty() && steps.back().start_ms > start_ms)
            throw InvariantError("rate steps must be time-ordered");
        if (gbps < 0) throw InvariantError("rates must be >= 0");
        steps.push_back({start_ms, gbps});
    }

    double rate_at(const std::string& app, int iface, double t_ms) const {
        auto it = streams.find({app, iface});
        if (it == streams.end()) return 0;
        double r = 0;
        for (const auto& s : it->second) {
            if (s.start_ms > t_ms) break;
            r = s.gbps;
        }
        return r;
    }

    double total_rate_at(double t_ms) const {
        double total = 0;
        for (const auto& [key, steps] : streams) total += rate_at(key.first, key.second, t_ms);
        return total;
    }
};

/// Synthetic payload with a controlled DPI match rate: a pattern from the
/// corpus is embedded with probability `match_target`, everything else is
/// filled from an alphabet disjoint from the corpus alphabet.
inline std::vector<std::uint8_t> synth_payload(std::uint64_t seed, std::size_t size, double match_target,
                                               const std::vector<std::vector<std::uint8_t>>& patterns) {
    if (match_target < 0 || match_target > 1) throw InvariantError("match_target must be in [0,1]");
    Rng rng(seed);
    std::vector<std::uint8_t> out(size);
    std::size_t fill_len = std::string(refkernels::kFillAlphabet).size();
    for (auto& b : out) b = static_cast<std::uint8_t>(refkernels::kFillAlphabet[rng.below(fill_len)]);
    bool embed = !patterns.empty() && match_target > 0 && rng.unit() < match_target;
    if (embed) {
        const auto& p = patterns[rng.below(patterns.size())];
        if (p.size() <= size) {
            std::size_t off = rng.below(size - p.size() + 1);
            std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
        }
    }
    return out;
}

/// Lazy per-(app, iface) packet source.  O(1) amortized per packet, no
/// materialized buffers, byte-deterministic for fixed inputs.
class PacketStream {
  public:
    PacketStream(std::string app, int app_index, int iface, std::vector<RateStep> steps, double horizon_ms,
                 std::uint64_t seed, int packet_bytes = kDefaultPacketBytes,
                 int flow_slots = kDefaultFlowsPerStream, int burst = 1)
        : app_(std::move(app)),
          app_index_(app_index),
          iface_(iface),
          steps_(std::move(steps)),
          horizon_ms_(horizon_ms),
          seed_(seed),
          packet_bytes_(packet_bytes),
          flow_slots_(flow_slots),
          burst_(std::max(1, burst)) {
        if (horizon_ms_ <= 0) throw InvariantError("horizon must be > 0");
        if (flow_slots_ < 1) throw InvariantError("flows must be >= 1");
        if (steps_.empty()) steps_.push_back({0, 0});
        // cumulative bits at the start of each segment
        cum_bits_.resize(steps_.size(), 0);
        for (std::size_t i = 1; i < steps_.size(); ++i)
            cum_bits_[i] = cum_bits_[i - 1] + steps_[i - 1].gbps * 1e6 * (steps_[i].start_ms - steps_[i - 1].start_ms);
    }

    const std::string& app() const { return app_; }
    int iface() const { return iface_; }
    int packet_bytes() const { return packet_bytes_; }
    int flow_slots() const { return flow_slots_; }
    std::uint64_t emitted() const { return emitted_; }

    /// Arrival time of the moment packet n (0-based) completes on the wire,
    /// or nothing if it lands beyond the horizon.
    std::optional<double> arrival_of(std::uint64_t n) const {
        double target_bits = static_cast<double>(n + 1) * bits_per_packet();
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            double seg_end = (i + 1 < steps_.size()) ? steps_[i + 1].start_ms : horizon_ms_;
            double seg_bits_end = (i + 1 < steps_.size()) ? cum_bits_[i + 1]
                                                          : cum_bits_[i] + steps_[i].gbps * 1e6 * (seg_end - steps_[i].start_ms);
            if (target_bits <= seg_bits_end && steps_[i].gbps > 0) {
                double t = steps_[i].start_ms + (target_bits - cum_bits_[i]) / (steps_[i].gbps * 1e6);
                if (t > horizon_ms_) return std::nullopt;
                return t;
            }
        }
        return std::nullopt;
    }

    std::optional<PacketRecord> next() {
        auto t = arrival_of(emitted_);
        if (!t) return std::nullopt;
        PacketRecord p;
        p.arrival_ms = *t;
        p.size_bytes = packet_bytes_;
        p.iface = iface_;
        p.flow_slot = slot_of(emitted_);
        p.flow = slot_flow_key(p.flow_slot);
        p.payload_seed = mix_hash(mix_hash(mix_hash(seed_, app_index_), static_cast<std::uint64_t>(iface_)), emitted_);
        ++emitted_;
        return p;
    }

    std::uint32_t slot_of(std::uint64_t n) const {
        return static_cast<std::uint32_t>((n / burst_) % static_cast<std::uint64_t>(flow_slots_));
    }

    double cumulative_bits(double t_ms) const {
        t_ms = std::min(t_ms, horizon_ms_);
        double bits = 0;
        for (std::size_t i = 0; i < steps_.size() && steps_[i].start_ms < t_ms; ++i) {
            double seg_end = (i + 1 < steps_.size()) ? std::min(steps_[i + 1].start_ms, t_ms) : t_ms;
            bits += steps_[i].gbps * 1e6 * (seg_end - steps_[i].start_ms);
        }
        return bits;
    }

    /// Packets whose (tick-quantized) arrival is at or before tick t.
    std::uint64_t count_arrived_at(Ticks t) const {
        if (t < 0) return 0;
        double est = cumulative_bits(ticks_to_ms(t)) / bits_per_packet();
        std::uint64_t n = est <= 0 ? 0 : static_cast<std::uint64_t>(est);
        auto arrived = [this, t](std::uint64_t k) {
            auto a = arrival_of(k);
            return a.has_value() && ms_to_ticks(*a) <= t;
        };
        while (n > 0 && !arrived(n - 1)) --n;
        while (arrived(n)) ++n;
        return n;
    }

    /// Synthetic 5-tuple for a slot; distinct across apps and interfaces.
    FlowKey slot_flow_key(std::uint32_t slot) const {
        FiveTuple t;
        t.src_addr = 0x0a000000u | (static_cast<std::uint32_t>(app_index_) << 20) |
                     (static_cast<std::uint32_t>(iface_) << 16) | (slot & 0xffff);
        t.dst_addr = 0xc0a80000u | (static_cast<std::uint32_t>(iface_) << 8) | 1;
        t.src_port = static_cast<std::uint16_t>(1024 + (slot % 60000));
        t.dst_port = 443;
        t.proto = 6;
        return flow_key(t);
    }

    double bits_per_packet() const { return static_cast<double>(packet_bytes_) * 8.0; }

  private:
    std::string app_;
    int app_index_;
    int iface_;
    std::vector<RateStep> steps_;
    double horizon_ms_;
    std::uint64_t seed_;
    int packet_bytes_;
    int flow_slots_;
    int burst_;
    std::vector<double> cum_bits_;
    std::uint64_t emitted_ = 0;
};

/// Circular range of flow slots covered by a batch; the engine's compact
/// stand-in for the full flow set.
struct FlowSlotRange {
    std::string app;
    int iface = 0;
    std::uint32_t begin = 0;
    std::uint32_t len = 0;    // <= space
    std::uint32_t space = 1;  // total slots in this stream

    bool overlaps(const FlowSlotRange& o) const {
        if (app != o.app || iface != o.iface) return false;  // disjoint flow spaces
        if (len == 0 || o.len == 0) return false;
        if (len >= space || o.len >= space) return true;
        // circular interval intersection
        std::uint32_t a0 = begin, a1 = (begin + len - 1) % space;
        std::uint32_t b0 = o.begin, b1 = (o.begin + o.len - 1) % space;
        auto contains = [&](std::uint32_t s0, std::uint32_t s1, std::uint32_t x) {
            return s0 <= s1 ? (x >= s0 && x <= s1) : (x >= s0 || x <= s1);
        };
        return contains(a0, a1, b0) || contains(b0, b1, a0);
    }
};

struct Batch {
    std::string app;
    int iface = 0;
    std::vector<PacketRecord> packets;  // empty for summary-only batches
    int count = 0;
    std::set<std::uint64_t> flow_set;
    FlowSlotRange slots;
    double first_arrival_ms = 0;
    double assembled_at_ms = 0;  // arrival of the last packet
    double fill_latency_ms = 0;
};

/// Which device last took responsibility for each flow; dispatch consults it
/// to keep one flow off two devices at once.
using FlowAffinityMap = std::map<std::uint64_t, std::string>;

inline std::map<std::pair<std::string, int>, std::vector<PacketRecord>> generate(
    const RateSchedule& schedule, int flows, double horizon_ms, std::uint64_t seed,
    int packet_bytes = kDefaultPacketBytes, int burst = 1) {
    std::map<std::pair<std::string, int>, std::vector<PacketRecord>> out;
    int app_index = 0;
    std::map<std::string, int> app_indices;
    for (const auto& [key, steps] : schedule.streams) {
        if (!app_indices.count(key.first)) app_indices[key.first] = app_index++;
        PacketStream s(key.first, app_indices[key.first], key.second, steps, horizon_ms, seed, packet_bytes, flows,
                       burst);
        auto& vec = out[key];
        while (auto p = s.next()) vec.push_back(*p);
    }
    return out;
}

/// Flat per-packet dump for debugging generated streams.
inline void dump_packets(std::ostream& out, const std::vector<PacketRecord>& packets) {
    out << "arrival_ms,iface,size,flow_hash\n";
    for (const auto& p : packets)
        out << fmt_double(p.arrival_ms) << ',' << p.iface << ',' << p.size_bytes << ',' << p.flow.hash << '\n';
}

/// Consecutive packets fill batches in arrival order; the final batch may be
/// partial.  The affinity map is only annotated here, enforcement happens at
/// dispatch.
inline std::vector<Batch> assemble_batches(const std::vector<PacketRecord>& stream, const std::string& app,
                                           int batch_size, FlowAffinityMap* affinity = nullptr,
                                           int flow_slots = kDefaultFlowsPerStream) {
    if (batch_size < 1) throw InvariantError("batch_size must be >= 1");
    std::vector<Batch> out;
    for (std::size_t i = 0; i < stream.size(); i += batch_size) {
        std::size_t end = std::min(stream.size(), i + batch_size);
        Batch b;
        b.app = app;
        b.iface = stream[i].iface;
        b.packets.assign(stream.begin() + static_cast<std::ptrdiff_t>(i),
                         stream.begin() + static_cast<std::ptrdiff_t>(end));
        b.count = static_cast<int>(b.packets.size());
        b.first_arrival_ms = b.packets.front().arrival_ms;
        b.assembled_at_ms = b.packets.back().arrival_ms;
        b.fill_latency_ms = b.assembled_at_ms - b.first_arrival_ms;
        for (const auto& p : b.packets) b.flow_set.insert(p.flow.hash);
        b.slots.app = app;
        b.slots.iface = b.iface;
        b.slots.space = static_cast<std::uint32_t>(flow_slots);
        b.slots.begin = b.packets.front().flow_slot;
        b.slots.len = static_cast<std::uint32_t>(
            std::min<std::size_t>(b.packets.size(), static_cast<std::size_t>(flow_slots)));
        if (affinity)
            for (const auto& p : b.packets)
                if (!affinity->count(p.flow.hash)) (*affinity)[p.flow.hash] = "";
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace pythia
