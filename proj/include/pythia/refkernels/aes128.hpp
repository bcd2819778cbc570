#pragma once

// AES-128 block cipher (FIPS-197) with CBC mode and PKCS#7 padding.
// The S-boxes are derived at startup from the GF(2^8) inverse plus the
// affine transform rather than hardcoded tables.

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "pythia/util.hpp"

namespace pythia::refkernels {

namespace aes_detail {

inline std::uint8_t gmul(std::uint8_t a, std::uint8_t b) {
    std::uint8_t p = 0;
    for (int i = 0; i < 8; ++i) {
        if (b & 1) p ^= a;
        bool hi = a & 0x80;
        a <<= 1;
        if (hi) a ^= 0x1b;
        b >>= 1;
    }
    return p;
}

struct SBoxes {
    std::array<std::uint8_t, 256> fwd{};
    std::array<std::uint8_t, 256> inv{};

    SBoxes() {
        std::array<std::uint8_t, 256> ginv{};
        ginv[0] = 0;
        for (int a = 1; a < 256; ++a)
            for (int b = 1; b < 256; ++b)
                if (gmul(static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)) == 1) {
                    ginv[a] = static_cast<std::uint8_t>(b);
                    break;
                }
        auto rotl8 = [](std::uint8_t x, int n) -> std::uint8_t {
            return static_cast<std::uint8_t>((x << n) | (x >> (8 - n)));
        };
        for (int i = 0; i < 256; ++i) {
            std::uint8_t b = ginv[i];
            std::uint8_t s = b ^ rotl8(b, 1) ^ rotl8(b, 2) ^ rotl8(b, 3) ^ rotl8(b, 4) ^ 0x63;
            fwd[i] = s;
            inv[s] = static_cast<std::uint8_t>(i);
        }
    }
};

inline const SBoxes& sboxes() {
    static const SBoxes s;
    return s;
}

}  // namespace aes_detail

using AesKey = std::array<std::uint8_t, 16>;
using AesBlock = std::array<std::uint8_t, 16>;

class Aes128 {
  public:
    explicit Aes128(const AesKey& key) { expand_key(key); }

    AesBlock encrypt_block(const AesBlock& in) const {
        AesBlock st = in;
        add_round_key(st, 0);
        for (int round = 1; round < 10; ++round) {
            sub_bytes(st);
            shift_rows(st);
            mix_columns(st);
            add_round_key(st, round);
        }
        sub_bytes(st);
        shift_rows(st);
        add_round_key(st, 10);
        return st;
    }

    AesBlock decrypt_block(const AesBlock& in) const {
        AesBlock st = in;
        add_round_key(st, 10);
        for (int round = 9; round >= 1; --round) {
            inv_shift_rows(st);
            inv_sub_bytes(st);
            add_round_key(st, round);
            inv_mix_columns(st);
        }
        inv_shift_rows(st);
        inv_sub_bytes(st);
        add_round_key(st, 0);
        return st;
    }

  private:
    // State bytes are kept in FIPS order: byte i sits at row i%4, column i/4.
    void expand_key(const AesKey& key) {
        std::memcpy(round_keys_.data(), key.data(), 16);
        std::uint8_t rcon = 1;
        for (int i = 16; i < 176; i += 4) {
            std::uint8_t t[4];
            std::memcpy(t, &round_keys_[i - 4], 4);
            if (i % 16 == 0) {
                std::uint8_t tmp = t[0];
                t[0] = static_cast<std::uint8_t>(aes_detail::sboxes().fwd[t[1]] ^ rcon);
                t[1] = aes_detail::sboxes().fwd[t[2]];
                t[2] = aes_detail::sboxes().fwd[t[3]];
                t[3] = aes_detail::sboxes().fwd[tmp];
                rcon = aes_detail::gmul(rcon, 2);
            }
            for (int j = 0; j < 4; ++j) round_keys_[i + j] = round_keys_[i - 16 + j] ^ t[j];
        }
    }

    void add_round_key(AesBlock& st, int round) const {
        for (int i = 0; i < 16; ++i) st[i] ^= round_keys_[16 * round + i];
    }

    static void sub_bytes(AesBlock& st) {
        for (auto& b : st) b = aes_detail::sboxes().fwd[b];
    }
    static void inv_sub_bytes(AesBlock& st) {
        for (auto& b : st) b = aes_detail::sboxes().inv[b];
    }

    static void shift_rows(AesBlock& st) {
        AesBlock t = st;
        for (int r = 1; r < 4; ++r)
            for (int c = 0; c < 4; ++c) st[r + 4 * c] = t[r + 4 * ((c + r) % 4)];
    }
    static void inv_shift_rows(AesBlock& st) {
        AesBlock t = st;
        for (int r = 1; r < 4; ++r)
            for (int c = 0; c < 4; ++c) st[r + 4 * ((c + r) % 4)] = t[r + 4 * c];
    }

    static void mix_columns(AesBlock& st) {
        using aes_detail::gmul;
        for (int c = 0; c < 4; ++c) {
            std::uint8_t* col = &st[4 * c];
            std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
            col[0] = gmul(a0, 2) ^ gmul(a1, 3) ^ a2 ^ a3;
            col[1] = a0 ^ gmul(a1, 2) ^ gmul(a2, 3) ^ a3;
            col[2] = a0 ^ a1 ^ gmul(a2, 2) ^ gmul(a3, 3);
            col[3] = gmul(a0, 3) ^ a1 ^ a2 ^ gmul(a3, 2);
        }
    }
    static void inv_mix_columns(AesBlock& st) {
        using aes_detail::gmul;
        for (int c = 0; c < 4; ++c) {
            std::uint8_t* col = &st[4 * c];
            std::uint8_t a0 = col[0], a1 = col[1], a2 = col[2], a3 = col[3];
            col[0] = gmul(a0, 14) ^ gmul(a1, 11) ^ gmul(a2, 13) ^ gmul(a3, 9);
            col[1] = gmul(a0, 9) ^ gmul(a1, 14) ^ gmul(a2, 11) ^ gmul(a3, 13);
            col[2] = gmul(a0, 13) ^ gmul(a1, 9) ^ gmul(a2, 14) ^ gmul(a3, 11);
            col[3] = gmul(a0, 11) ^ gmul(a1, 13) ^ gmul(a2, 9) ^ gmul(a3, 14);
        }
    }

    std::array<std::uint8_t, 176> round_keys_{};
};

inline std::vector<std::uint8_t> pkcs7_pad(const std::vector<std::uint8_t>& in) {
    std::size_t pad = 16 - (in.size() % 16);
    std::vector<std::uint8_t> out = in;
    out.insert(out.end(), pad, static_cast<std::uint8_t>(pad));
    return out;
}

inline std::vector<std::uint8_t> pkcs7_unpad(const std::vector<std::uint8_t>& in) {
    if (in.empty() || in.size() % 16 != 0) throw InvariantError("pkcs7: bad padded length");
    std::uint8_t pad = in.back();
    if (pad == 0 || pad > 16 || pad > in.size()) throw InvariantError("pkcs7: bad pad byte");
    for (std::size_t i = in.size() - pad; i < in.size(); ++i)
        if (in[i] != pad) throw InvariantError("pkcs7: corrupt padding");
    return std::vector<std::uint8_t>(in.begin(), in.end() - pad);
}

/// CBC encrypt with PKCS#7 applied internally.
inline std::vector<std::uint8_t> aes128_cbc_encrypt(const std::vector<std::uint8_t>& plain, const AesKey& key,
                                                    const AesBlock& iv) {
    Aes128 aes(key);
    std::vector<std::uint8_t> padded = pkcs7_pad(plain);
    std::vector<std::uint8_t> out(padded.size());
    AesBlock prev = iv;
    for (std::size_t off = 0; off < padded.size(); off += 16) {
        AesBlock blk;
        for (int i = 0; i < 16; ++i) blk[i] = padded[off + i] ^ prev[i];
        prev = aes.encrypt_block(blk);
        std::memcpy(&out[off], prev.data(), 16);
    }
    return out;
}

inline std::vector<std::uint8_t> aes128_cbc_decrypt(const std::vector<std::uint8_t>& cipher, const AesKey& key,
                                                    const AesBlock& iv) {
    if (cipher.empty() || cipher.size() % 16 != 0) throw InvariantError("cbc: ciphertext not block aligned");
    Aes128 aes(key);
    std::vector<std::uint8_t> padded(cipher.size());
    AesBlock prev = iv;
    for (std::size_t off = 0; off < cipher.size(); off += 16) {
        AesBlock blk;
        std::memcpy(blk.data(), &cipher[off], 16);
        AesBlock dec = aes.decrypt_block(blk);
        for (int i = 0; i < 16; ++i) padded[off + i] = dec[i] ^ prev[i];
        prev = blk;
    }
    return pkcs7_unpad(padded);
}

/// Raw CBC over already block-aligned data, no padding; used for test
/// vectors that specify exact blocks.
inline std::vector<std::uint8_t> aes128_cbc_encrypt_raw(const std::vector<std::uint8_t>& plain, const AesKey& key,
                                                        const AesBlock& iv) {
    if (plain.size() % 16 != 0) throw InvariantError("cbc raw: input not block aligned");
    Aes128 aes(key);
    std::vector<std::uint8_t> out(plain.size());
    AesBlock prev = iv;
    for (std::size_t off = 0; off < plain.size(); off += 16) {
        AesBlock blk;
        for (int i = 0; i < 16; ++i) blk[i] = plain[off + i] ^ prev[i];
        prev = aes.encrypt_block(blk);
        std::memcpy(&out[off], prev.data(), 16);
    }
    return out;
}

}  // namespace pythia::refkernels
