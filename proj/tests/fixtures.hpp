#pragma once

// Small channels and codes shared by the test suites.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "maccoop/maccoop.hpp"

namespace fixtures {

using namespace maccoop;

inline std::vector<std::string> labels(std::size_t n, const std::string& prefix = "") {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

/// Deterministic MAC with Y = (x1, x2), so |Y| = q^2.
inline DiscreteMAC identity_mac(std::size_t q = 2) {
    std::vector<double> p(q * q * q * q, 0.0);
    for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = 0; b < q; ++b) p[(a * q + b) * q * q + a * q + b] = 1.0;
    return DiscreteMAC(labels(q), labels(q), labels(q * q, "y"), p);
}

/// Y = (x1 xor flip1, x2 xor flip2) with independent flips of probability eps.
inline DiscreteMAC noisy_identity_mac(double eps = 0.1) {
    std::vector<double> p(16, 0.0);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t y1 = 0; y1 < 2; ++y1)
                for (std::size_t y2 = 0; y2 < 2; ++y2)
                    p[(a * 2 + b) * 4 + y1 * 2 + y2] = (y1 == a ? 1 - eps : eps) * (y2 == b ? 1 - eps : eps);
    return DiscreteMAC(labels(2), labels(2), labels(4, "y"), p);
}

/// Seeded channel with random rows.
inline DiscreteMAC random_mac(std::uint64_t seed, std::size_t a, std::size_t b, std::size_t y) {
    std::mt19937_64 rng(seed);
    std::vector<double> p(a * b * y);
    for (std::size_t r = 0; r < a * b; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < y; ++k) {
            p[r * y + k] = -std::log(1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53);
            s += p[r * y + k];
        }
        for (std::size_t k = 0; k < y; ++k) p[r * y + k] /= s;
    }
    return DiscreteMAC(labels(a), labels(b), labels(y, "y"), p);
}

/// Seeded channel whose rows are indicators.
inline DiscreteMAC random_deterministic_mac(std::uint64_t seed, std::size_t a, std::size_t b, std::size_t y) {
    std::mt19937_64 rng(seed);
    std::vector<double> p(a * b * y, 0.0);
    for (std::size_t r = 0; r < a * b; ++r) p[r * y + rng() % y] = 1.0;
    return DiscreteMAC(labels(a), labels(b), labels(y, "y"), p);
}

/// J = 0 code of blocklength n whose codewords are the base-|X_i| digits of
/// the message; the decoder inverts the joint encoding when it is injective.
inline CooperationCode uncoded(const DiscreteMAC& mac, int n, std::size_t m1, std::size_t m2) {
    CodeBlueprint bp;
    bp.n = n;
    bp.messages = {m1, m2};
    bp.x1_size = mac.x1_size();
    bp.x2_size = mac.x2_size();
    bp.y_size = mac.y_size();
    bp.rounds = 0;
    bp.up = [](int, std::size_t, std::size_t, std::span<const std::size_t>) { return std::size_t{0}; };
    bp.cf = [](int, std::size_t, std::span<const std::size_t>, std::span<const std::size_t>) { return std::size_t{0}; };
    bp.encode = [&mac, n](int user, std::size_t m, std::span<const std::size_t>, std::span<std::size_t> out) {
        const std::size_t q = user == 0 ? mac.x1_size() : mac.x2_size();
        for (int t = n - 1; t >= 0; --t) {
            out[static_cast<std::size_t>(t)] = m % q;
            m /= q;
        }
    };
    bp.decode = [](std::size_t) { return std::array<std::size_t, 2>{0, 0}; };
    CooperationCode c = tabulate(bp);
    if (mac.deterministic()) c.decoder = invert_deterministic(c, mac);
    return c;
}

/// Maximum-a-posteriori decoder (uniform messages) for an arbitrary code.
inline void map_decoder(CooperationCode& c, const DiscreteMAC& mac) {
    const std::size_t Y = c.y_sequences();
    std::vector<double> best(Y, -1.0);
    const auto n = static_cast<std::size_t>(c.n);
    for (std::size_t m1 = 0; m1 < c.m1(); ++m1)
        for (std::size_t m2 = 0; m2 < c.m2(); ++m2) {
            const Transcript tr = transcript(c, m1, m2);
            for (std::size_t y = 0; y < Y; ++y) {
                double p = 1.0;
                std::size_t rest = y;
                for (std::size_t t = n; t-- > 0;) {
                    p *= mac.prob(tr.x[0][t], tr.x[1][t], rest % mac.y_size());
                    rest /= mac.y_size();
                }
                if (p > best[y] + 1e-15) {
                    best[y] = p;
                    c.decoder[y] = {m1, m2};
                }
            }
        }
}

/// Index of the output sequence produced by a deterministic channel.
inline std::size_t deterministic_output(const CooperationCode& c, const DiscreteMAC& mac, std::size_t m1,
                                        std::size_t m2) {
    const Transcript tr = transcript(c, m1, m2);
    std::size_t y = 0;
    for (std::size_t t = 0; t < static_cast<std::size_t>(c.n); ++t) {
        std::size_t sym = 0;
        for (std::size_t k = 0; k < mac.y_size(); ++k)
            if (mac.prob(tr.x[0][t], tr.x[1][t], k) == 1.0) sym = k;
        y = y * mac.y_size() + sym;
    }
    return y;
}

/// The planted CF-round instance: identity MAC, n = 3, M1 = M2 = 8, and the
/// output of one message pair decoded as (0, 0).
inline CooperationCode planted_code(const DiscreteMAC& mac, std::size_t bad1 = 5, std::size_t bad2 = 6) {
    CooperationCode c = uncoded(mac, 3, 8, 8);
    c.decoder[deterministic_output(c, mac, bad1, bad2)] = {0, 0};
    return c;
}

/// One-round conferencing code over n = 1: message m_i = k_i L + l_i with
/// k_i in [4]; each encoder forwards k_i mod 2 and sends a seeded random
/// symbol of (m_i, received bit). MAP decoding.
inline CooperationCode conferencing_toy(const DiscreteMAC& mac, std::uint64_t seed, std::size_t L = 2) {
    std::mt19937_64 rng(seed);
    const std::size_t M = 4 * L;
    std::array<std::vector<std::size_t>, 2> table;
    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t q = i == 0 ? mac.x1_size() : mac.x2_size();
        for (std::size_t k = 0; k < M * 2; ++k) table[i].push_back(rng() % q);
    }
    CodeBlueprint bp;
    bp.n = 1;
    bp.messages = {M, M};
    bp.x1_size = mac.x1_size();
    bp.x2_size = mac.x2_size();
    bp.y_size = mac.y_size();
    bp.rounds = 1;
    bp.up_sizes = {std::vector<std::size_t>{2}, std::vector<std::size_t>{2}};
    bp.down_sizes = {std::vector<std::size_t>{2}, std::vector<std::size_t>{2}};
    bp.up = [L](int, std::size_t, std::size_t m, std::span<const std::size_t>) { return (m / L) % 2; };
    bp.cf = [](int user, std::size_t, std::span<const std::size_t> u1, std::span<const std::size_t> u2) {
        return user == 0 ? u2[0] : u1[0];
    };
    bp.encode = [&table](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
        out[0] = table[static_cast<std::size_t>(user)][m * 2 + v[0]];
    };
    bp.decode = [](std::size_t) { return std::array<std::size_t, 2>{0, 0}; };
    CooperationCode c = tabulate(bp);
    c.links = LinkCapacities::conferencing(1.0, 1.0);
    map_decoder(c, mac);
    c.validate();
    return c;
}

}  // namespace fixtures
