#pragma once

// Multi-pattern matcher: Aho-Corasick goto/failure construction converted to
// a dense DFA over the full byte alphabet.  Sized for pattern sets in the
// tens of thousands; memory is roughly states x 256 x 4 bytes.

#include <array>
#include <cstdint>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "pythia/util.hpp"

namespace pythia::refkernels {

class DfaMatcher {
  public:
    static DfaMatcher build(const std::vector<std::vector<std::uint8_t>>& patterns) {
        if (patterns.empty()) throw InvariantError("ac_build: empty pattern set");
        DfaMatcher m;
        m.next_.emplace_back();  // root
        m.next_[0].fill(-1);
        m.out_count_.push_back(0);

        // Duplicate patterns collapse to one; the input is a set.
        std::set<std::vector<std::uint8_t>> uniq(patterns.begin(), patterns.end());
        for (const auto& p : uniq) {
            if (p.empty()) throw InvariantError("ac_build: empty pattern");
            if (p.size() > 1024) throw InvariantError("ac_build: pattern longer than 1024 bytes");
            std::int32_t s = 0;
            for (std::uint8_t b : p) {
                if (m.next_[s][b] == -1) {
                    m.next_[s][b] = static_cast<std::int32_t>(m.next_.size());
                    m.next_.emplace_back();
                    m.next_.back().fill(-1);
                    m.out_count_.push_back(0);
                }
                s = m.next_[s][b];
            }
            m.out_count_[s] += 1;
        }
        m.pattern_count_ = uniq.size();

        // BFS failure links, folding suffix outputs and densifying in place.
        std::vector<std::int32_t> fail(m.next_.size(), 0);
        std::queue<std::int32_t> q;
        for (int b = 0; b < 256; ++b) {
            std::int32_t s = m.next_[0][b];
            if (s == -1) {
                m.next_[0][b] = 0;
            } else {
                fail[s] = 0;
                q.push(s);
            }
        }
        while (!q.empty()) {
            std::int32_t s = q.front();
            q.pop();
            m.out_count_[s] += m.out_count_[fail[s]];
            for (int b = 0; b < 256; ++b) {
                std::int32_t t = m.next_[s][b];
                if (t == -1) {
                    m.next_[s][b] = m.next_[fail[s]][b];
                } else {
                    fail[t] = m.next_[fail[s]][b];
                    q.push(t);
                }
            }
        }
        return m;
    }

    /// Total pattern occurrences in the text, overlapping ones included.
    std::uint64_t match_count(const std::uint8_t* data, std::size_t len) const {
        std::uint64_t hits = 0;
        std::int32_t s = 0;
        for (std::size_t i = 0; i < len; ++i) {
            s = next_[s][data[i]];
            hits += out_count_[s];
        }
        return hits;
    }

    std::uint64_t match_count(const std::vector<std::uint8_t>& v) const { return match_count(v.data(), v.size()); }

    std::size_t state_count() const { return next_.size(); }
    std::size_t pattern_count() const { return pattern_count_; }

  private:
    DfaMatcher() = default;
    std::vector<std::array<std::int32_t, 256>> next_;
    std::vector<std::uint32_t> out_count_;
    std::size_t pattern_count_ = 0;
};

inline DfaMatcher ac_build(const std::vector<std::vector<std::uint8_t>>& patterns) {
    return DfaMatcher::build(patterns);
}

inline DfaMatcher ac_build_strings(const std::vector<std::string>& patterns) {
    std::vector<std::vector<std::uint8_t>> bytes;
    bytes.reserve(patterns.size());
    for (const auto& p : patterns) bytes.emplace_back(p.begin(), p.end());
    return DfaMatcher::build(bytes);
}

}  // namespace pythia::refkernels
