#pragma once

/// Batch-level entry points for the three packet-processing kernels, plus
/// the synthetic pattern corpus used by the DPI matcher.

#include <chrono>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "pythia/refkernels/aes128.hpp"
#include "pythia/refkernels/aho_corasick.hpp"
#include "pythia/refkernels/md5.hpp"
#include "pythia/util.hpp"

namespace pythia::refkernels {

// Pattern corpus bytes come from this alphabet; synthetic non-matching
// payload bytes are drawn from a disjoint one, so a payload matches iff a
// pattern was embedded into it.
inline constexpr const char* kPatternAlphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr const char* kFillAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";

constexpr std::size_t kMinPatternLen = 4;
constexpr std::size_t kMaxPatternLen = 32;
constexpr std::uint64_t kCorpusSeed = 0x9717;
constexpr std::size_t kCorpusSize = 10000;

/// Deterministic synthetic fixed-string corpus (lengths 4..32 uniform).
inline std::vector<std::vector<std::uint8_t>> gen_patterns(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::set<std::vector<std::uint8_t>> uniq;
    std::size_t alpha = std::string(kPatternAlphabet).size();
    while (uniq.size() < count) {
        std::size_t len = kMinPatternLen + rng.below(kMaxPatternLen - kMinPatternLen + 1);
        std::vector<std::uint8_t> p(len);
        for (auto& b : p) b = static_cast<std::uint8_t>(kPatternAlphabet[rng.below(alpha)]);
        uniq.insert(std::move(p));
    }
    return {uniq.begin(), uniq.end()};
}

inline std::string to_hex(const std::vector<std::uint8_t>& v) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(v.size() * 2);
    for (std::uint8_t b : v) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xf]);
    }
    return out;
}

inline std::vector<std::uint8_t> from_hex(std::string_view s) {
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ParseError("bad hex digit");
    };
    if (s.size() % 2 != 0) throw ParseError("odd-length hex string");
    std::vector<std::uint8_t> out(s.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>((nib(s[2 * i]) << 4) | nib(s[2 * i + 1]));
    return out;
}

/// Corpus file: one pattern per line, hex-escaped.
inline void save_patterns(const std::string& path, const std::vector<std::vector<std::uint8_t>>& patterns) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write pattern file: " + path);
    for (const auto& p : patterns) out << to_hex(p) << '\n';
}

inline std::vector<std::vector<std::uint8_t>> load_patterns(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open pattern file: " + path);
    std::vector<std::vector<std::uint8_t>> out;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        out.push_back(from_hex(t));
    }
    if (out.empty()) throw ParseError(path + ": no patterns");
    return out;
}

/// Per-connection AES key, derived deterministically from the flow identity.
inline AesKey derive_flow_key(std::uint64_t flow_hash, std::uint64_t seed) {
    std::uint8_t material[16];
    for (int i = 0; i < 8; ++i) material[i] = static_cast<std::uint8_t>(flow_hash >> (8 * i));
    for (int i = 0; i < 8; ++i) material[8 + i] = static_cast<std::uint8_t>(seed >> (8 * i));
    return md5_digest(material, sizeof material);
}

struct KernelResult {
    std::string app;
    std::vector<std::uint64_t> match_counts;                // dpi
    std::vector<std::array<std::uint8_t, 16>> digests;      // md5
    std::vector<std::vector<std::uint8_t>> transformed;     // aes
    double wall_latency_ms = 0;
    double mpps = 0;
};

using Payloads = std::vector<std::vector<std::uint8_t>>;

inline KernelResult ac_match(const DfaMatcher& matcher, const Payloads& batch) {
    KernelResult r;
    r.app = "dpi";
    auto t0 = std::chrono::steady_clock::now();
    r.match_counts.reserve(batch.size());
    for (const auto& p : batch) r.match_counts.push_back(matcher.match_count(p));
    auto t1 = std::chrono::steady_clock::now();
    r.wall_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (r.wall_latency_ms > 0) r.mpps = batch.size() / r.wall_latency_ms / 1000.0;
    return r;
}

inline KernelResult md5_batch(const Payloads& batch) {
    KernelResult r;
    r.app = "md5";
    auto t0 = std::chrono::steady_clock::now();
    r.digests.reserve(batch.size());
    for (const auto& p : batch) r.digests.push_back(md5_digest(p));
    auto t1 = std::chrono::steady_clock::now();
    r.wall_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (r.wall_latency_ms > 0) r.mpps = batch.size() / r.wall_latency_ms / 1000.0;
    return r;
}

enum class CipherDir { Encrypt, Decrypt };

/// Every packet is processed with its own per-connection key.
inline KernelResult aes128_cbc_batch(const Payloads& batch, const std::vector<AesKey>& keys, const AesBlock& iv,
                                     CipherDir dir) {
    if (keys.size() != batch.size()) throw InvariantError("aes batch: one key per packet required");
    KernelResult r;
    r.app = "aes";
    auto t0 = std::chrono::steady_clock::now();
    r.transformed.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        r.transformed.push_back(dir == CipherDir::Encrypt ? aes128_cbc_encrypt(batch[i], keys[i], iv)
                                                          : aes128_cbc_decrypt(batch[i], keys[i], iv));
    auto t1 = std::chrono::steady_clock::now();
    r.wall_latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (r.wall_latency_ms > 0) r.mpps = batch.size() / r.wall_latency_ms / 1000.0;
    return r;
}

}  // namespace pythia::refkernels
