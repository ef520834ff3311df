#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace maccoop {

/// CF link capacities in bits per channel use; index 0 is encoder 1.
struct LinkCapacities {
    std::array<double, 2> c_in{0.0, 0.0};
    std::array<double, 2> c_out{0.0, 0.0};

    void validate() const {
        for (double c : {c_in[0], c_in[1], c_out[0], c_out[1]})
            if (!(c >= 0.0) || !std::isfinite(c)) throw ValidationError("link capacities must be finite and >= 0");
    }

    /// Conferencing links (C12, C21) viewed as a forwarding CF.
    static LinkCapacities conferencing(double c12, double c21) { return {{c12, c21}, {c21, c12}}; }

    friend bool operator==(const LinkCapacities&, const LinkCapacities&) = default;
};

namespace detail {

inline std::size_t product(std::span<const std::size_t> sizes, std::size_t count) {
    std::size_t out = 1;
    for (std::size_t l = 0; l < count; ++l) {
        if (sizes[l] != 0 && out > std::numeric_limits<std::size_t>::max() / sizes[l])
            throw SizeLimitError("history alphabet size overflows");
        out *= sizes[l];
    }
    return out;
}

/// Mixed-radix digits of a history index; the earliest round is most significant.
inline std::vector<std::size_t> decode_history(std::size_t index, std::span<const std::size_t> sizes,
                                               std::size_t length) {
    std::vector<std::size_t> out(length);
    for (std::size_t l = length; l-- > 0;) {
        out[l] = index % sizes[l];
        index /= sizes[l];
    }
    return out;
}

inline std::size_t encode_history(std::span<const std::size_t> symbols, std::span<const std::size_t> sizes) {
    std::size_t idx = 0;
    for (std::size_t l = 0; l < symbols.size(); ++l) idx = idx * sizes[l] + symbols[l];
    return idx;
}

inline double log2_size(std::span<const std::size_t> sizes) {
    double bits = 0.0;
    for (std::size_t s : sizes) bits += std::log2(static_cast<double>(s));
    return bits;
}

}  // namespace detail

/// An explicit (n, M1, M2, J) code with a cooperation facilitator.
///
/// All maps are total lookup tables and every index is 0-based:
///  - up_maps[i][j]   : [M_i] x V_i^{j}       -> U_{i,j}   (row-major, message major)
///  - cf_maps[i][j]   : U_1^{j+1} x U_2^{j+1} -> V_{i,j}   (row-major, user-1 history major)
///  - channel_maps[i] : [M_i] x V_i^J          -> X_i^n     (n symbols per entry)
///  - decoder         : Y^n -> [M1] x [M2], y^n indexed row-major with t = 1 most significant
/// Histories are mixed-radix indices over the per-round alphabet sizes.
struct CooperationCode {
    int n = 0;
    std::array<std::size_t, 2> messages{1, 1};
    std::size_t x1_size = 1, x2_size = 1, y_size = 1;
    int rounds = 0;
    std::array<std::vector<std::size_t>, 2> up_sizes;
    std::array<std::vector<std::size_t>, 2> down_sizes;
    std::array<std::vector<std::vector<std::size_t>>, 2> up_maps;
    std::array<std::vector<std::vector<std::size_t>>, 2> cf_maps;
    std::array<std::vector<std::size_t>, 2> channel_maps;
    std::vector<std::array<std::size_t, 2>> decoder;
    std::optional<LinkCapacities> links;

    std::size_t m1() const { return messages[0]; }
    std::size_t m2() const { return messages[1]; }
    std::size_t x_size(int user) const { return user == 0 ? x1_size : x2_size; }

    /// |V_i^j|: number of down-link histories after j rounds.
    std::size_t down_histories(int user, std::size_t j) const {
        return detail::product(down_sizes[static_cast<std::size_t>(user)], j);
    }
    std::size_t up_histories(int user, std::size_t j) const {
        return detail::product(up_sizes[static_cast<std::size_t>(user)], j);
    }
    std::size_t y_sequences() const { return detail::checked_pow(y_size, n); }

    /// log2 |U_i^J| and log2 |V_i^J|.
    double up_bits(int user) const { return detail::log2_size(up_sizes[static_cast<std::size_t>(user)]); }
    double down_bits(int user) const { return detail::log2_size(down_sizes[static_cast<std::size_t>(user)]); }

    /// Rate (1/n) log2 M_i; zero for the empty code.
    double rate(int user) const {
        return n == 0 ? 0.0 : std::log2(static_cast<double>(messages[static_cast<std::size_t>(user)])) / n;
    }

    /// Codeword symbol t of encoder `user` for message m and down-link history index.
    std::size_t codeword_symbol(int user, std::size_t m, std::size_t vhist, int t) const {
        const auto u = static_cast<std::size_t>(user);
        const std::size_t hist = down_histories(user, static_cast<std::size_t>(rounds));
        return channel_maps[u][(m * hist + vhist) * static_cast<std::size_t>(n) + static_cast<std::size_t>(t)];
    }

    /// The code with no channel uses and a single message per user.
    static CooperationCode empty(std::size_t x1_size, std::size_t x2_size, std::size_t y_size) {
        CooperationCode c;
        c.x1_size = x1_size;
        c.x2_size = x2_size;
        c.y_size = y_size;
        c.channel_maps = {std::vector<std::size_t>{}, std::vector<std::size_t>{}};
        c.decoder = {{0, 0}};
        return c;
    }

    /// Checks table shapes, value ranges, decoder totality and link budgets.
    void validate(int max_bits = kDefaultEnumBits) const {
        if (n < 0) throw ValidationError("blocklength must be >= 0");
        if (rounds < 0) throw ValidationError("round count must be >= 0");
        if (messages[0] < 1 || messages[1] < 1) throw ValidationError("message counts must be >= 1");
        if (x1_size < 1 || x2_size < 1 || y_size < 1) throw ValidationError("alphabet sizes must be >= 1");
        if (n * std::log2(static_cast<double>(y_size)) > max_bits)
            throw SizeLimitError("decoder table guard: n*log2|Y| exceeds " + std::to_string(max_bits) + " bits");
        const auto J = static_cast<std::size_t>(rounds);
        for (int user = 0; user < 2; ++user) {
            const auto i = static_cast<std::size_t>(user);
            if (up_sizes[i].size() != J || down_sizes[i].size() != J)
                throw ValidationError("per-round alphabet lists must have J entries");
            if (up_maps[i].size() != J || cf_maps[i].size() != J)
                throw ValidationError("per-round map lists must have J entries");
            for (std::size_t j = 0; j < J; ++j) {
                if (up_sizes[i][j] < 1 || down_sizes[i][j] < 1)
                    throw ValidationError("CF alphabets must be nonempty");
                const std::size_t up_domain = messages[i] * down_histories(user, j);
                if (up_maps[i][j].size() != up_domain)
                    throw ValidationError("up map of user " + std::to_string(user + 1) + " round " +
                                          std::to_string(j + 1) + " is not total");
                for (std::size_t v : up_maps[i][j])
                    if (v >= up_sizes[i][j]) throw ValidationError("up map value out of range");
                const std::size_t cf_domain = up_histories(0, j + 1) * up_histories(1, j + 1);
                if (cf_maps[i][j].size() != cf_domain)
                    throw ValidationError("CF map to user " + std::to_string(user + 1) + " round " +
                                          std::to_string(j + 1) + " is not total");
                for (std::size_t v : cf_maps[i][j])
                    if (v >= down_sizes[i][j]) throw ValidationError("CF map value out of range");
            }
            const std::size_t enc_domain = messages[i] * down_histories(user, J) * static_cast<std::size_t>(n);
            if (channel_maps[i].size() != enc_domain)
                throw ValidationError("channel encoder of user " + std::to_string(user + 1) + " is not total");
            for (std::size_t x : channel_maps[i])
                if (x >= x_size(user)) throw ValidationError("codeword symbol out of range");
        }
        if (decoder.size() != y_sequences()) throw ValidationError("decoder table must cover every output sequence");
        for (const auto& d : decoder)
            if (d[0] >= messages[0] || d[1] >= messages[1]) throw ValidationError("decoder output out of range");
        if (links) {
            links->validate();
            for (int user = 0; user < 2; ++user) {
                const auto i = static_cast<std::size_t>(user);
                if (up_bits(user) > n * links->c_in[i] + 1e-9)
                    throw ValidationError("up-link alphabets exceed n*C_in for user " + std::to_string(user + 1));
                if (down_bits(user) > n * links->c_out[i] + 1e-9)
                    throw ValidationError("down-link alphabets exceed n*C_out for user " + std::to_string(user + 1));
            }
        }
    }

    friend bool operator==(const CooperationCode&, const CooperationCode&) = default;
};

/// Everything exchanged for one message pair.
struct Transcript {
    std::array<std::vector<std::size_t>, 2> u;
    std::array<std::vector<std::size_t>, 2> v;
    std::array<std::vector<std::size_t>, 2> x;

    friend bool operator==(const Transcript&, const Transcript&) = default;
};

/// Runs u_ij = phi_ij(m_i, v_i^{j-1}), v_ij = psi_ij(u_1^j, u_2^j), then x_i = f_i(m_i, v_i^J).
inline Transcript transcript(const CooperationCode& code, std::size_t m1, std::size_t m2) {
    if (m1 >= code.messages[0] || m2 >= code.messages[1])
        throw InputError("message pair (" + std::to_string(m1) + "," + std::to_string(m2) + ") out of range");
    Transcript tr;
    const std::array<std::size_t, 2> m{m1, m2};
    std::array<std::size_t, 2> vhist{0, 0};
    std::array<std::size_t, 2> uhist{0, 0};
    for (std::size_t j = 0; j < static_cast<std::size_t>(code.rounds); ++j) {
        for (std::size_t i = 0; i < 2; ++i) {
            const std::size_t hist = code.down_histories(static_cast<int>(i), j);
            const std::size_t u = code.up_maps[i][j][m[i] * hist + vhist[i]];
            tr.u[i].push_back(u);
            uhist[i] = uhist[i] * code.up_sizes[i][j] + u;
        }
        const std::size_t u2_count = code.up_histories(1, j + 1);
        for (std::size_t i = 0; i < 2; ++i) {
            const std::size_t v = code.cf_maps[i][j][uhist[0] * u2_count + uhist[1]];
            tr.v[i].push_back(v);
            vhist[i] = vhist[i] * code.down_sizes[i][j] + v;
        }
    }
    for (int i = 0; i < 2; ++i)
        for (int t = 0; t < code.n; ++t)
            tr.x[static_cast<std::size_t>(i)].push_back(
                code.codeword_symbol(i, m[static_cast<std::size_t>(i)], vhist[static_cast<std::size_t>(i)], t));
    return tr;
}

/// The M1 x M2 matrix of per-pair error probabilities.
class ErrorMatrix {
public:
    ErrorMatrix() = default;

    ErrorMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
        : rows_(rows), cols_(cols), v_(std::move(entries)) {
        if (rows_ < 1 || cols_ < 1) throw ValidationError("error matrix must be nonempty");
        if (v_.size() != rows_ * cols_) throw ValidationError("error matrix size mismatch");
        for (double& x : v_) {
            if (!(x >= -1e-12 && x <= 1.0 + 1e-12)) throw ValidationError("error matrix entry outside [0,1]");
            x = std::clamp(x, 0.0, 1.0);
        }
    }

    static ErrorMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw ValidationError("error matrix must be nonempty");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != rows.front().size()) throw ValidationError("ragged error matrix");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return ErrorMatrix(rows.size(), rows.front().size(), std::move(flat));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t m1, std::size_t m2) const { return v_[m1 * cols_ + m2]; }
    const std::vector<double>& values() const { return v_; }

    double row_sum(std::size_t m1) const {
        return std::accumulate(v_.begin() + static_cast<long>(m1 * cols_),
                               v_.begin() + static_cast<long>((m1 + 1) * cols_), 0.0);
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> v_;
};

/// lambda_n(m1, m2) = sum over y^n outside g^{-1}(m1, m2) of p(y^n | x1^n, x2^n), exactly.
inline ErrorMatrix error_matrix(const CooperationCode& code, const DiscreteMAC& mac, int max_bits = kDefaultEnumBits) {
    if (code.x1_size != mac.x1_size() || code.x2_size != mac.x2_size() || code.y_size != mac.y_size())
        throw ValidationError("code alphabets do not match the channel");
    code.validate(max_bits);

    // Per input pair, the support of p(.|x1,x2).
    std::vector<std::vector<std::pair<std::size_t, double>>> support(mac.x1_size() * mac.x2_size());
    for (std::size_t a = 0; a < mac.x1_size(); ++a)
        for (std::size_t b = 0; b < mac.x2_size(); ++b)
            for (std::size_t y = 0; y < mac.y_size(); ++y)
                if (const double p = mac.prob(a, b, y); p > 0.0) support[a * mac.x2_size() + b].emplace_back(y, p);

    const std::size_t M1 = code.m1(), M2 = code.m2();
    std::vector<double> lambda(M1 * M2, 0.0);
    const auto n = static_cast<std::size_t>(code.n);
    parallel_for(M1 * M2, [&](std::size_t pair) {
        const std::size_t m1 = pair / M2, m2 = pair % M2;
        const Transcript tr = transcript(code, m1, m2);
        std::vector<const std::vector<std::pair<std::size_t, double>>*> rows(n);
        for (std::size_t t = 0; t < n; ++t) rows[t] = &support[tr.x[0][t] * mac.x2_size() + tr.x[1][t]];
        // Odometer over the product of per-letter supports.
        std::vector<std::size_t> pos(n, 0);
        double wrong = 0.0;
        for (;;) {
            double p = 1.0;
            std::size_t yidx = 0;
            for (std::size_t t = 0; t < n; ++t) {
                const auto& [y, q] = (*rows[t])[pos[t]];
                p *= q;
                yidx = yidx * code.y_size + y;
            }
            const auto& d = code.decoder[yidx];
            if (d[0] != m1 || d[1] != m2) wrong += p;
            bool done = true;
            for (std::size_t t = n; t-- > 0;) {
                if (++pos[t] < rows[t]->size()) {
                    done = false;
                    break;
                }
                pos[t] = 0;
            }
            if (done) break;
        }
        lambda[pair] = std::clamp(wrong, 0.0, 1.0);
    });
    return ErrorMatrix(M1, M2, std::move(lambda));
}

inline double avg_error(const ErrorMatrix& em) {
    return std::accumulate(em.values().begin(), em.values().end(), 0.0) / static_cast<double>(em.values().size());
}

inline double max_error(const ErrorMatrix& em) {
    return *std::max_element(em.values().begin(), em.values().end());
}

/// floor(2^x), snapping values within 1e-9 (relative) of an integer so that
/// e.g. n*r = log2(3) yields 3. Saturates at 2^62.
inline std::size_t floor_pow2(double x) {
    if (x >= 62.0) return std::size_t{1} << 62;
    const double v = std::exp2(x);
    const double r = std::round(v);
    if (std::abs(v - r) <= 1e-9 * std::max(1.0, r)) return static_cast<std::size_t>(r);
    return static_cast<std::size_t>(std::floor(v));
}

/// Block structure induced by a rate pair: K_i = min(floor(2^{n r_i}), M_i), L_i = floor(M_i / K_i).
struct ErrorProfileQuery {
    double r1 = 0.0, r2 = 0.0;
    int n = 1;
    std::array<std::size_t, 2> k{1, 1};
    std::array<std::size_t, 2> l{1, 1};

    static ErrorProfileQuery make(double r1, double r2, int n, std::size_t m1, std::size_t m2) {
        if (!(r1 >= 0.0) || !(r2 >= 0.0)) throw ValidationError("rates must be nonnegative");
        if (n < 1) throw ValidationError("blocklength must be positive");
        ErrorProfileQuery q;
        q.r1 = r1;
        q.r2 = r2;
        q.n = n;
        const std::array<double, 2> r{r1, r2};
        const std::array<std::size_t, 2> m{m1, m2};
        for (std::size_t i = 0; i < 2; ++i) {
            q.k[i] = std::min(floor_pow2(n * r[i]), m[i]);
            q.l[i] = m[i] / q.k[i];
        }
        return q;
    }

    /// Block structure given directly by (K1, K2) for an M1 x M2 matrix.
    static ErrorProfileQuery with_blocks(std::size_t k1, std::size_t k2, std::size_t m1, std::size_t m2) {
        if (k1 < 1 || k2 < 1 || k1 > m1 || k2 > m2) throw ValidationError("block counts out of range");
        ErrorProfileQuery q;
        q.k = {k1, k2};
        q.l = {m1 / k1, m2 / k2};
        q.r1 = std::log2(static_cast<double>(k1));
        q.r2 = std::log2(static_cast<double>(k2));
        return q;
    }
};

enum class BlockwiseMode { Exact, Heuristic };

struct BlockwiseOptions {
    std::size_t max_exact_messages = 8;
    std::uint64_t exact_budget = 10'000'000;  ///< symmetry-reduced partition pairs
    std::size_t restarts = 64;
    std::uint64_t seed = 0;
};

struct BlockwiseResult {
    double value = 0.0;
    std::string bound_kind;  ///< "exact" or "upper_bound"
    std::vector<std::size_t> perm1, perm2;  ///< position -> message
    std::array<std::size_t, 2> witness_block{0, 0};
    ErrorProfileQuery query;
};

/// Max over the K1 x K2 blocks of the block average of lambda(perm1(p1), perm2(p2)).
/// Entries past K_i L_i are the remainder block and are ignored.
inline std::pair<double, std::array<std::size_t, 2>> max_block_average(const ErrorMatrix& em,
                                                                         const ErrorProfileQuery& q,
                                                                         std::span<const std::size_t> perm1,
                                                                         std::span<const std::size_t> perm2) {
    double best = -1.0;
    std::array<std::size_t, 2> at{0, 0};
    const double area = static_cast<double>(q.l[0] * q.l[1]);
    for (std::size_t k1 = 0; k1 < q.k[0]; ++k1)
        for (std::size_t k2 = 0; k2 < q.k[1]; ++k2) {
            double s = 0.0;
            for (std::size_t a = k1 * q.l[0]; a < (k1 + 1) * q.l[0]; ++a)
                for (std::size_t b = k2 * q.l[1]; b < (k2 + 1) * q.l[1]; ++b) s += em(perm1[a], perm2[b]);
            if (s / area > best) {
                best = s / area;
                at = {k1, k2};
            }
        }
    return {best, at};
}

namespace detail {

/// Canonical assignments of {0..m-1} into k labelled-by-first-element groups of
/// size l plus one remainder group (label k). Two permutations with the same
/// canonical assignment give the same block averages up to block reordering.
inline void enumerate_partitions(std::size_t m, std::size_t k, std::size_t l,
                                 std::vector<std::vector<std::uint8_t>>& out) {
    std::vector<std::uint8_t> group(m, 0);
    std::vector<std::size_t> fill(k + 1, 0);
    const std::size_t rem = m - k * l;
    std::size_t opened = 0;
    auto rec = [&](auto&& self, std::size_t e) -> void {
        if (e == m) {
            out.push_back(group);
            return;
        }
        if (fill[k] < rem) {
            group[e] = static_cast<std::uint8_t>(k);
            ++fill[k];
            self(self, e + 1);
            --fill[k];
        }
        for (std::size_t g = 0; g < opened; ++g) {
            if (fill[g] < l) {
                group[e] = static_cast<std::uint8_t>(g);
                ++fill[g];
                self(self, e + 1);
                --fill[g];
            }
        }
        if (opened < k) {
            group[e] = static_cast<std::uint8_t>(opened);
            ++fill[opened];
            ++opened;
            self(self, e + 1);
            --opened;
            --fill[opened];
        }
    };
    rec(rec, 0);
}

/// Number of canonical assignments m! / ((l!)^k k! (m-kl)!).
inline double partition_count(std::size_t m, std::size_t k, std::size_t l) {
    double lg = std::lgamma(m + 1.0) - k * std::lgamma(l + 1.0) - std::lgamma(k + 1.0) -
                std::lgamma(static_cast<double>(m - k * l) + 1.0);
    return std::round(std::exp(lg));
}

inline std::vector<std::size_t> permutation_from_groups(std::span<const std::uint8_t> group, std::size_t k) {
    std::vector<std::size_t> perm;
    perm.reserve(group.size());
    for (std::size_t g = 0; g <= k; ++g)
        for (std::size_t e = 0; e < group.size(); ++e)
            if (group[e] == g) perm.push_back(e);
    return perm;
}

inline std::vector<std::size_t> sorted_marginal_order(const std::vector<double>& sums) {
    std::vector<std::size_t> idx(sums.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sums[a] < sums[b]; });
    return idx;
}

/// Lay the k*l smallest-marginal elements into groups in snake order so that
/// low- and high-error elements share blocks; the rest form the remainder.
inline std::vector<std::size_t> snake_permutation(const std::vector<double>& sums, std::size_t k, std::size_t l) {
    const auto order = sorted_marginal_order(sums);
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t r = 0; r < k * l; ++r) {
        const std::size_t lap = r / k, off = r % k;
        groups[lap % 2 == 0 ? off : k - 1 - off].push_back(order[r]);
    }
    std::vector<std::size_t> perm;
    for (auto& g : groups) perm.insert(perm.end(), g.begin(), g.end());
    for (std::size_t r = k * l; r < order.size(); ++r) perm.push_back(order[r]);
    return perm;
}

/// Swap-based local search on (perm1, perm2) minimizing the max block sum,
/// with the sum of squared block sums as a tie-breaker to leave plateaus.
inline void improve_by_swaps(const ErrorMatrix& em, const ErrorProfileQuery& q, std::vector<std::size_t>& p1,
                             std::vector<std::size_t>& p2, std::size_t max_passes) {
    const std::size_t K1 = q.k[0], K2 = q.k[1];
    auto group_of = [](std::size_t pos, std::size_t K, std::size_t L) { return std::min(pos / L, K); };
    std::vector<double> block((K1 + 1) * (K2 + 1), 0.0);
    for (std::size_t a = 0; a < p1.size(); ++a)
        for (std::size_t b = 0; b < p2.size(); ++b)
            block[group_of(a, K1, q.l[0]) * (K2 + 1) + group_of(b, K2, q.l[1])] += em(p1[a], p2[b]);

    for (std::size_t pass = 0; pass < max_passes; ++pass) {
        bool improved = false;
        for (int axis = 0; axis < 2; ++axis) {
            auto& p = axis == 0 ? p1 : p2;
            const auto& other = axis == 0 ? p2 : p1;
            const std::size_t K = q.k[static_cast<std::size_t>(axis)], L = q.l[static_cast<std::size_t>(axis)];
            const std::size_t oK = q.k[static_cast<std::size_t>(1 - axis)],
                              oL = q.l[static_cast<std::size_t>(1 - axis)];
            auto at = [&](std::size_t g, std::size_t h) -> double& {
                return axis == 0 ? block[g * (K2 + 1) + h] : block[h * (K2 + 1) + g];
            };
            std::vector<std::vector<double>> lines(p.size(), std::vector<double>(oK + 1, 0.0));
            for (std::size_t a = 0; a < p.size(); ++a)
                for (std::size_t b = 0; b < other.size(); ++b)
                    lines[a][group_of(b, oK, oL)] += axis == 0 ? em(p[a], other[b]) : em(other[b], p[a]);
            std::vector<double> rmax(K, 0.0);
            auto refresh = [&](std::size_t g) {
                double mx = -1.0;
                for (std::size_t h = 0; h < oK; ++h) mx = std::max(mx, at(g, h));
                rmax[g] = mx;
            };
            for (std::size_t g = 0; g < K; ++g) refresh(g);
            double cur = *std::max_element(rmax.begin(), rmax.end());
            std::vector<double> na(oK + 1), nb(oK + 1);
            for (std::size_t a = 0; a < p.size(); ++a) {
                for (std::size_t b = a + 1; b < p.size(); ++b) {
                    const std::size_t ga = group_of(a, K, L), gb = group_of(b, K, L);
                    if (ga == gb) continue;
                    double other_max = -1.0;
                    for (std::size_t g = 0; g < K; ++g)
                        if (g != ga && g != gb) other_max = std::max(other_max, rmax[g]);
                    double new_max = other_max, dsq = 0.0;
                    for (std::size_t h = 0; h <= oK; ++h) {
                        na[h] = at(ga, h) - lines[a][h] + lines[b][h];
                        nb[h] = at(gb, h) - lines[b][h] + lines[a][h];
                        if (h == oK) continue;
                        if (ga < K) {
                            new_max = std::max(new_max, na[h]);
                            dsq += na[h] * na[h] - at(ga, h) * at(ga, h);
                        }
                        if (gb < K) {
                            new_max = std::max(new_max, nb[h]);
                            dsq += nb[h] * nb[h] - at(gb, h) * at(gb, h);
                        }
                    }
                    if (new_max < cur - 1e-12 || (new_max <= cur + 1e-12 && dsq < -1e-12)) {
                        for (std::size_t h = 0; h <= oK; ++h) {
                            at(ga, h) = na[h];
                            at(gb, h) = nb[h];
                        }
                        std::swap(p[a], p[b]);
                        std::swap(lines[a], lines[b]);
                        if (ga < K) refresh(ga);
                        if (gb < K) refresh(gb);
                        cur = *std::max_element(rmax.begin(), rmax.end());
                        improved = true;
                    }
                }
            }
        }
        if (!improved) break;
    }
}

}  // namespace detail

/// The (r1, r2)-error: min over row/column permutations of the max block average.
/// Exact mode enumerates canonical block assignments; heuristic mode returns an
/// upper bound from sorted-marginal and random starts improved by swaps.
inline BlockwiseResult blockwise_error(const ErrorMatrix& em, const ErrorProfileQuery& q, BlockwiseMode mode,
                                       const BlockwiseOptions& opt = {}) {
    const std::size_t M1 = em.rows(), M2 = em.cols();
    if (q.k[0] < 1 || q.k[1] < 1 || q.k[0] * q.l[0] > M1 || q.k[1] * q.l[1] > M2 || q.l[0] < 1 || q.l[1] < 1)
        throw ValidationError("query block structure does not fit the error matrix");
    BlockwiseResult res;
    res.query = q;
    const std::size_t K1 = q.k[0], K2 = q.k[1], L1 = q.l[0], L2 = q.l[1];

    if (mode == BlockwiseMode::Exact) {
        if (M1 > opt.max_exact_messages || M2 > opt.max_exact_messages)
            throw BudgetExceeded("exact (r1,r2)-error is limited to M_i <= " + std::to_string(opt.max_exact_messages) +
                                 " (got " + std::to_string(M1) + "x" + std::to_string(M2) + ")");
        const double pairs = detail::partition_count(M1, K1, L1) * detail::partition_count(M2, K2, L2);
        if (pairs > static_cast<double>(opt.exact_budget))
            throw BudgetExceeded("exact (r1,r2)-error needs " + std::to_string(pairs) +
                                 " partition pairs > budget " + std::to_string(opt.exact_budget));
        std::vector<std::vector<std::uint8_t>> rows_p, cols_p;
        detail::enumerate_partitions(M1, K1, L1, rows_p);
        detail::enumerate_partitions(M2, K2, L2, cols_p);
        const double area = static_cast<double>(L1 * L2);
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_r = 0, best_c = 0;
        std::vector<double> g(K1 * M2);
        std::vector<double> blk(K1 * K2);
        for (std::size_t r = 0; r < rows_p.size(); ++r) {
            std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t a = 0; a < M1; ++a) {
                const std::size_t ga = rows_p[r][a];
                if (ga == K1) continue;
                for (std::size_t b = 0; b < M2; ++b) g[ga * M2 + b] += em(a, b);
            }
            for (std::size_t c = 0; c < cols_p.size(); ++c) {
                std::fill(blk.begin(), blk.end(), 0.0);
                for (std::size_t b = 0; b < M2; ++b) {
                    const std::size_t gb = cols_p[c][b];
                    if (gb == K2) continue;
                    for (std::size_t ga = 0; ga < K1; ++ga) blk[ga * K2 + gb] += g[ga * M2 + b];
                }
                const double mx = *std::max_element(blk.begin(), blk.end()) / area;
                if (mx < best) {
                    best = mx;
                    best_r = r;
                    best_c = c;
                }
            }
        }
        res.perm1 = detail::permutation_from_groups(rows_p[best_r], K1);
        res.perm2 = detail::permutation_from_groups(cols_p[best_c], K2);
        res.bound_kind = "exact";
    } else {
        std::vector<double> rs(M1, 0.0), cs(M2, 0.0);
        for (std::size_t a = 0; a < M1; ++a)
            for (std::size_t b = 0; b < M2; ++b) {
                rs[a] += em(a, b);
                cs[b] += em(a, b);
            }
        auto p1 = detail::snake_permutation(rs, K1, L1);
        auto p2 = detail::snake_permutation(cs, K2, L2);
        const std::size_t passes = 4;
        detail::improve_by_swaps(em, q, p1, p2, passes);
        double best = max_block_average(em, q, p1, p2).first;
        res.perm1 = p1;
        res.perm2 = p2;
        // Restart slots are independent and reduced in index order, so the result
        // does not depend on the worker count.
        std::vector<std::pair<double, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>> slots(
            opt.restarts);
        parallel_for(opt.restarts, [&](std::size_t r) {
            std::mt19937_64 rng(mix_seed(opt.seed, r));
            std::vector<std::size_t> a(M1), b(M2);
            std::iota(a.begin(), a.end(), 0);
            std::iota(b.begin(), b.end(), 0);
            std::shuffle(a.begin(), a.end(), rng);
            std::shuffle(b.begin(), b.end(), rng);
            detail::improve_by_swaps(em, q, a, b, passes);
            slots[r] = {max_block_average(em, q, a, b).first, {std::move(a), std::move(b)}};
        });
        for (auto& s : slots)
            if (s.first < best - 1e-15) {
                best = s.first;
                res.perm1 = std::move(s.second.first);
                res.perm2 = std::move(s.second.second);
            }
        res.bound_kind = "upper_bound";
    }
    const auto [value, block] = max_block_average(em, q, res.perm1, res.perm2);
    res.value = value;
    res.witness_block = block;
    return res;
}

// ---------------------------------------------------------------------------
// Time sharing

/// Back-to-back concatenation of two codes over the same channel. Messages are
/// pairs (m_a, m_b) indexed m_a * M_b + m_b; CF rounds run in parallel with
/// product alphabets; link capacities mix in proportion to blocklength.
inline CooperationCode concatenate(const CooperationCode& a, const CooperationCode& b, const DiscreteMAC& mac) {
    for (const CooperationCode* c : {&a, &b})
        if (c->x1_size != mac.x1_size() || c->x2_size != mac.x2_size() || c->y_size != mac.y_size())
            throw ValidationError("concatenate: code alphabets do not match the channel");
    a.validate();
    b.validate();
    CooperationCode out;
    out.n = a.n + b.n;
    out.x1_size = mac.x1_size();
    out.x2_size = mac.x2_size();
    out.y_size = mac.y_size();
    out.rounds = std::max(a.rounds, b.rounds);
    const auto J = static_cast<std::size_t>(out.rounds);
    // Pad the shorter code with trivial rounds (alphabet size 1).
    auto padded = [J](const std::vector<std::size_t>& s) {
        std::vector<std::size_t> p = s;
        p.resize(J, 1);
        return p;
    };
    std::array<std::array<std::vector<std::size_t>, 2>, 2> up{}, down{};
    for (std::size_t i = 0; i < 2; ++i) {
        up[0][i] = padded(a.up_sizes[i]);
        up[1][i] = padded(b.up_sizes[i]);
        down[0][i] = padded(a.down_sizes[i]);
        down[1][i] = padded(b.down_sizes[i]);
        out.messages[i] = a.messages[i] * b.messages[i];
        out.up_sizes[i].resize(J);
        out.down_sizes[i].resize(J);
        for (std::size_t j = 0; j < J; ++j) {
            out.up_sizes[i][j] = up[0][i][j] * up[1][i][j];
            out.down_sizes[i][j] = down[0][i][j] * down[1][i][j];
        }
    }
    const std::array<const CooperationCode*, 2> parts{&a, &b};
    // Split a combined history into the two component histories.
    auto split = [&](std::size_t idx, const std::vector<std::size_t>& sizes, const std::vector<std::size_t>& sa,
                     const std::vector<std::size_t>& sb, std::size_t len) {
        const auto sym = detail::decode_history(idx, sizes, len);
        std::vector<std::size_t> ha(len), hb(len);
        for (std::size_t l = 0; l < len; ++l) {
            ha[l] = sym[l] / sb[l];
            hb[l] = sym[l] % sb[l];
        }
        return std::pair{detail::encode_history(ha, sa), detail::encode_history(hb, sb)};
    };
    for (std::size_t i = 0; i < 2; ++i) {
        const auto user = static_cast<int>(i);
        out.up_maps[i].resize(J);
        out.cf_maps[i].resize(J);
        for (std::size_t j = 0; j < J; ++j) {
            const std::size_t hist = out.down_histories(user, j);
            auto& table = out.up_maps[i][j];
            table.resize(out.messages[i] * hist);
            for (std::size_t m = 0; m < out.messages[i]; ++m) {
                const std::size_t ma = m / b.messages[i], mb = m % b.messages[i];
                for (std::size_t h = 0; h < hist; ++h) {
                    const auto [ha, hb] = split(h, out.down_sizes[i], down[0][i], down[1][i], j);
                    std::array<std::size_t, 2> sym{0, 0};
                    const std::array<std::size_t, 2> msg{ma, mb};
                    const std::array<std::size_t, 2> hh{ha, hb};
                    for (std::size_t c = 0; c < 2; ++c)
                        if (j < static_cast<std::size_t>(parts[c]->rounds))
                            sym[c] = parts[c]->up_maps[i][j][msg[c] * parts[c]->down_histories(user, j) + hh[c]];
                    table[m * hist + h] = sym[0] * up[1][i][j] + sym[1];
                }
            }
            const std::size_t h1 = out.up_histories(0, j + 1), h2 = out.up_histories(1, j + 1);
            auto& cf = out.cf_maps[i][j];
            cf.resize(h1 * h2);
            for (std::size_t x = 0; x < h1; ++x) {
                const auto [xa, xb] = split(x, out.up_sizes[0], up[0][0], up[1][0], j + 1);
                for (std::size_t z = 0; z < h2; ++z) {
                    const auto [za, zb] = split(z, out.up_sizes[1], up[0][1], up[1][1], j + 1);
                    std::array<std::size_t, 2> sym{0, 0};
                    const std::array<std::size_t, 2> hx{xa, xb}, hz{za, zb};
                    for (std::size_t c = 0; c < 2; ++c) {
                        const CooperationCode& p = *parts[c];
                        if (j < static_cast<std::size_t>(p.rounds))
                            sym[c] = p.cf_maps[i][j][hx[c] * p.up_histories(1, j + 1) + hz[c]];
                    }
                    cf[x * h2 + z] = sym[0] * down[1][i][j] + sym[1];
                }
            }
        }
        const std::size_t hist = out.down_histories(user, J);
        auto& enc = out.channel_maps[i];
        enc.resize(out.messages[i] * hist * static_cast<std::size_t>(out.n));
        for (std::size_t m = 0; m < out.messages[i]; ++m) {
            const std::size_t ma = m / b.messages[i], mb = m % b.messages[i];
            for (std::size_t h = 0; h < hist; ++h) {
                const auto [ha, hb] = split(h, out.down_sizes[i], down[0][i], down[1][i], J);
                // Padding rounds have radix 1 and trail the real ones, so the padded
                // index equals the component's own history index.
                const std::size_t a_hist = ha, b_hist = hb;
                std::size_t t = (m * hist + h) * static_cast<std::size_t>(out.n);
                for (int s = 0; s < a.n; ++s) enc[t++] = a.codeword_symbol(user, ma, a_hist, s);
                for (int s = 0; s < b.n; ++s) enc[t++] = b.codeword_symbol(user, mb, b_hist, s);
            }
        }
    }
    const std::size_t ya = a.y_sequences(), yb = b.y_sequences();
    out.decoder.resize(ya * yb);
    for (std::size_t y = 0; y < ya * yb; ++y) {
        const auto& da = a.decoder[y / yb];
        const auto& db = b.decoder[y % yb];
        out.decoder[y] = {da[0] * b.messages[0] + db[0], da[1] * b.messages[1] + db[1]};
    }
    // Blocklength-weighted link capacities over the components that use the channel.
    bool have_links = true;
    LinkCapacities mix;
    for (const CooperationCode* c : parts) {
        if (c->n == 0) continue;
        if (!c->links) {
            have_links = false;
            break;
        }
        for (std::size_t i = 0; i < 2; ++i) {
            mix.c_in[i] += c->n * c->links->c_in[i] / out.n;
            mix.c_out[i] += c->n * c->links->c_out[i] / out.n;
        }
    }
    if (have_links && out.n > 0) out.links = mix;
    if (a.n == 0 && b.n > 0) out.links = b.links;
    if (b.n == 0 && a.n > 0) out.links = a.links;
    return out;
}

/// Decoder for a deterministic channel: each y^n maps to the first message pair
/// (row-major) whose codewords produce it; unreachable outputs map to (0, 0).
inline std::vector<std::array<std::size_t, 2>> invert_deterministic(const CooperationCode& code,
                                                                     const DiscreteMAC& mac) {
    if (!mac.deterministic()) throw ValidationError("table-inversion decoder requires a deterministic channel");
    std::vector<std::array<std::size_t, 2>> dec(code.y_sequences(), {0, 0});
    std::vector<bool> seen(dec.size(), false);
    for (std::size_t m1 = 0; m1 < code.m1(); ++m1)
        for (std::size_t m2 = 0; m2 < code.m2(); ++m2) {
            const Transcript tr = transcript(code, m1, m2);
            std::size_t yidx = 0;
            for (int t = 0; t < code.n; ++t) {
                const auto row = mac.row(tr.x[0][static_cast<std::size_t>(t)], tr.x[1][static_cast<std::size_t>(t)]);
                const auto y = static_cast<std::size_t>(std::find(row.begin(), row.end(), 1.0) - row.begin());
                yidx = yidx * code.y_size + y;
            }
            if (!seen[yidx]) {
                seen[yidx] = true;
                dec[yidx] = {m1, m2};
            }
        }
    return dec;
}

// ---------------------------------------------------------------------------
// JSON code files

namespace detail {

inline nlohmann::json nest2(const std::vector<std::size_t>& flat, std::size_t cols) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t r = 0; cols > 0 && r < flat.size() / cols; ++r)
        out.push_back(std::vector<std::size_t>(flat.begin() + static_cast<long>(r * cols),
                                               flat.begin() + static_cast<long>((r + 1) * cols)));
    return out;
}

inline std::vector<std::size_t> flatten(const nlohmann::json& j, std::size_t depth) {
    std::vector<std::size_t> out;
    auto rec = [&](auto&& self, const nlohmann::json& node, std::size_t d) -> void {
        if (d == 0) {
            out.push_back(node.get<std::size_t>());
            return;
        }
        if (!node.is_array()) throw ValidationError("code file: expected nested array");
        for (const auto& c : node) self(self, c, d - 1);
    };
    rec(rec, j, depth);
    return out;
}

}  // namespace detail

inline nlohmann::json to_json(const CooperationCode& c) {
    nlohmann::json j;
    j["n"] = c.n;
    j["m1"] = c.messages[0];
    j["m2"] = c.messages[1];
    j["rounds"] = c.rounds;
    j["alphabets"] = {{"x1", c.x1_size}, {"x2", c.x2_size}, {"y", c.y_size}};
    j["up_sizes"] = {c.up_sizes[0], c.up_sizes[1]};
    j["down_sizes"] = {c.down_sizes[0], c.down_sizes[1]};
    nlohmann::json up = nlohmann::json::array(), cf = nlohmann::json::array(), enc = nlohmann::json::array();
    for (int user = 0; user < 2; ++user) {
        const auto i = static_cast<std::size_t>(user);
        nlohmann::json up_i = nlohmann::json::array(), cf_i = nlohmann::json::array();
        for (std::size_t r = 0; r < static_cast<std::size_t>(c.rounds); ++r) {
            up_i.push_back(detail::nest2(c.up_maps[i][r], c.down_histories(user, r)));
            cf_i.push_back(detail::nest2(c.cf_maps[i][r], c.up_histories(1, r + 1)));
        }
        up.push_back(up_i);
        cf.push_back(cf_i);
        nlohmann::json enc_i = nlohmann::json::array();
        const std::size_t hist = c.down_histories(user, static_cast<std::size_t>(c.rounds));
        for (std::size_t m = 0; m < c.messages[i]; ++m) {
            nlohmann::json per_m = nlohmann::json::array();
            for (std::size_t h = 0; h < hist; ++h) {
                std::vector<std::size_t> word;
                for (int t = 0; t < c.n; ++t) word.push_back(c.codeword_symbol(user, m, h, t));
                per_m.push_back(word);
            }
            enc_i.push_back(per_m);
        }
        enc.push_back(enc_i);
    }
    j["up_maps"] = up;
    j["cf_maps"] = cf;
    j["channel_maps"] = enc;
    nlohmann::json dec = nlohmann::json::array();
    for (const auto& d : c.decoder) dec.push_back({d[0], d[1]});
    j["decoder"] = dec;
    if (c.links) j["links"] = {{"c_in", c.links->c_in}, {"c_out", c.links->c_out}};
    return j;
}

inline CooperationCode code_from_json(const nlohmann::json& j) {
    try {
        CooperationCode c;
        c.n = j.at("n").get<int>();
        c.messages = {j.at("m1").get<std::size_t>(), j.at("m2").get<std::size_t>()};
        c.rounds = j.value("rounds", 0);
        const auto& al = j.at("alphabets");
        c.x1_size = al.at("x1").get<std::size_t>();
        c.x2_size = al.at("x2").get<std::size_t>();
        c.y_size = al.at("y").get<std::size_t>();
        const auto J = static_cast<std::size_t>(c.rounds);
        for (std::size_t i = 0; i < 2; ++i) {
            c.up_sizes[i] = J ? j.at("up_sizes").at(i).get<std::vector<std::size_t>>() : std::vector<std::size_t>{};
            c.down_sizes[i] =
                J ? j.at("down_sizes").at(i).get<std::vector<std::size_t>>() : std::vector<std::size_t>{};
            c.up_maps[i].resize(J);
            c.cf_maps[i].resize(J);
            for (std::size_t r = 0; r < J; ++r) {
                c.up_maps[i][r] = detail::flatten(j.at("up_maps").at(i).at(r), 2);
                c.cf_maps[i][r] = detail::flatten(j.at("cf_maps").at(i).at(r), 2);
            }
            c.channel_maps[i] = detail::flatten(j.at("channel_maps").at(i), 3);
        }
        for (const auto& d : j.at("decoder")) c.decoder.push_back({d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>()});
        if (j.contains("links")) {
            LinkCapacities l;
            l.c_in = j["links"].at("c_in").get<std::array<double, 2>>();
            l.c_out = j["links"].at("c_out").get<std::array<double, 2>>();
            c.links = l;
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("code file: ") + e.what());
    }
}

}  // namespace maccoop
