#pragma once

/// Host-only execution backend: runs the reference kernels on real payloads
/// and measures wall time.  It profiles cpu-class devices only; there is no
/// vendor GPU path.  Co-resident kernels time-share the host, so their
/// per-kernel rate is measured under sequential interleaving.

#include <chrono>

#include "pythia/config.hpp"
#include "pythia/powermeter.hpp"
#include "pythia/profiler.hpp"
#include "pythia/refkernels/kernels.hpp"
#include "pythia/traffic.hpp"

namespace pythia {

class LiveCpuBackend : public Backend {
  public:
    LiveCpuBackend(std::vector<DeviceProfile> devices, std::uint64_t seed = 1, int packet_bytes = kDefaultPacketBytes,
                   double match_target = 0.30, std::size_t pattern_count = 1000)
        : devices_(std::move(devices)), seed_(seed), packet_bytes_(packet_bytes), match_target_(match_target) {
        patterns_ = refkernels::gen_patterns(pattern_count, refkernels::kCorpusSeed);
        matcher_ = std::make_unique<refkernels::DfaMatcher>(refkernels::ac_build(patterns_));
    }

    const std::vector<DeviceProfile>& devices() const override { return devices_; }

    ConfigStats profile_config(const Configuration& cfg, int training_batches) override {
        const DeviceProfile* host = nullptr;
        for (const auto& [app, dev] : cfg.mapping) {
            const DeviceProfile* p = find_device(dev);
            if (!p) throw ModelGapError("live backend: unknown device " + dev);
            if (p->klass != DeviceClass::Cpu)
                throw ModelGapError("live backend: device " + dev + " is not a cpu-class device");
            host = p;
        }

        double total_mpps = 0;
        double latency_sum = 0;
        int kernels = 0;
        std::size_t payload_len = packet_bytes_ > 64 ? static_cast<std::size_t>(packet_bytes_ - 54) : 16;
        for (const auto& [app, dev] : cfg.mapping) {
            std::string kernel = kernel_of(app);
            double wall_total = 0;
            for (int b = 0; b < training_batches; ++b) {
                refkernels::Payloads batch(static_cast<std::size_t>(cfg.batch_size));
                for (std::size_t i = 0; i < batch.size(); ++i)
                    batch[i] = synth_payload(mix_hash(mix_hash(seed_, b), i), payload_len, match_target_, patterns_);
                wall_total += run_kernel(kernel, batch);
            }
            double per_batch_ms = wall_total / training_batches;
            latency_sum += per_batch_ms;
            total_mpps += per_batch_ms > 0 ? cfg.batch_size / per_batch_ms / 1000.0 : 0;
            ++kernels;
        }

        ConfigStats s;
        s.agg_mpps = total_mpps;
        s.agg_gbps = total_mpps * packet_bytes_ * 8.0 / 1000.0;
        s.avg_latency_ms = kernels > 0 ? latency_sum / kernels : 0;
        s.avg_power_watts = host ? power_draw(*host, 1.0, true) : 0;
        s.samples = training_batches;
        s.profiled = true;
        s.finalize_energy();
        return s;
    }

    double activate(const Configuration& cfg, double now_ms) override {
        for (const auto& [app, dev] : cfg.mapping)
            if (!find_device(dev)) throw ModelGapError("live backend: unknown device " + dev);
        active_ = cfg;
        return now_ms;
    }

    double switch_to(const Configuration& to, double now_ms) override { return activate(to, now_ms); }

    /// App ids carry their kernel as the prefix up to the first digit
    /// (aes0, dpi1, ...); explicit kernels can be registered instead.
    void set_app_kernel(const std::string& app, const std::string& kernel) { app_kernels_[app] = kernel; }

  private:
    const DeviceProfile* find_device(const std::string& id) const {
        for (const auto& d : devices_)
            if (d.id == id) return &d;
        return nullptr;
    }

    std::string kernel_of(const std::string& app) const {
        auto it = app_kernels_.find(app);
        if (it != app_kernels_.end()) return it->second;
        std::string k;
        for (char c : app) {
            if (c >= '0' && c <= '9') break;
            k.push_back(c);
        }
        if (k != "aes" && k != "dpi" && k != "md5")
            throw ModelGapError("live backend: cannot infer kernel for app " + app);
        return k;
    }

    double run_kernel(const std::string& kernel, const refkernels::Payloads& batch) {
        using clock = std::chrono::steady_clock;
        auto t0 = clock::now();
        std::uint64_t acc = 0;
        if (kernel == "dpi") {
            for (const auto& p : batch) acc += matcher_->match_count(p);
        } else if (kernel == "md5") {
            for (const auto& p : batch) acc ^= refkernels::md5_digest(p)[0];
        } else {
            refkernels::AesBlock iv{};
            refkernels::AesKey key = refkernels::derive_flow_key(0x5157, seed_);
            for (const auto& p : batch) acc ^= refkernels::aes128_cbc_encrypt(p, key, iv)[0];
        }
        sink_ = acc;  // keep the work observable
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    }

    std::vector<DeviceProfile> devices_;
    std::uint64_t seed_;
    int packet_bytes_;
    double match_target_;
    std::vector<std::vector<std::uint8_t>> patterns_;
    std::unique_ptr<refkernels::DfaMatcher> matcher_;
    std::map<std::string, std::string> app_kernels_;
    Configuration active_;
    volatile std::uint64_t sink_ = 0;
};

}  // namespace pythia
