#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "blockperm.hpp"
#include "channel.hpp"
#include "code.hpp"
#include "errors.hpp"

namespace maccoop {

// ---------------------------------------------------------------------------
// Tabulating codes from functional descriptions

/// A code described by functions over symbol histories; tabulate() turns it
/// into the lookup-table form of CooperationCode.
struct CodeBlueprint {
    int n = 0;
    std::array<std::size_t, 2> messages{1, 1};
    std::size_t x1_size = 1, x2_size = 1, y_size = 1;
    int rounds = 0;
    std::array<std::vector<std::size_t>, 2> up_sizes, down_sizes;
    std::function<std::size_t(int, std::size_t, std::size_t, std::span<const std::size_t>)> up;
    std::function<std::size_t(int, std::size_t, std::span<const std::size_t>, std::span<const std::size_t>)> cf;
    std::function<void(int, std::size_t, std::span<const std::size_t>, std::span<std::size_t>)> encode;
    std::function<std::array<std::size_t, 2>(std::size_t)> decode;
};

inline CooperationCode tabulate(const CodeBlueprint& bp) {
    CooperationCode c;
    c.n = bp.n;
    c.messages = bp.messages;
    c.x1_size = bp.x1_size;
    c.x2_size = bp.x2_size;
    c.y_size = bp.y_size;
    c.rounds = bp.rounds;
    c.up_sizes = bp.up_sizes;
    c.down_sizes = bp.down_sizes;
    const auto J = static_cast<std::size_t>(bp.rounds);
    for (int user = 0; user < 2; ++user) {
        const auto i = static_cast<std::size_t>(user);
        c.up_maps[i].resize(J);
        c.cf_maps[i].resize(J);
        for (std::size_t j = 0; j < J; ++j) {
            const std::size_t hist = c.down_histories(user, j);
            auto& up = c.up_maps[i][j];
            up.resize(c.messages[i] * hist);
            for (std::size_t m = 0; m < c.messages[i]; ++m)
                for (std::size_t h = 0; h < hist; ++h)
                    up[m * hist + h] = bp.up(user, j, m, detail::decode_history(h, c.down_sizes[i], j));
            const std::size_t h1 = c.up_histories(0, j + 1), h2 = c.up_histories(1, j + 1);
            auto& cf = c.cf_maps[i][j];
            cf.resize(h1 * h2);
            for (std::size_t a = 0; a < h1; ++a) {
                const auto ua = detail::decode_history(a, c.up_sizes[0], j + 1);
                for (std::size_t b = 0; b < h2; ++b)
                    cf[a * h2 + b] = bp.cf(user, j, ua, detail::decode_history(b, c.up_sizes[1], j + 1));
            }
        }
        const std::size_t hist = c.down_histories(user, J);
        const auto n = static_cast<std::size_t>(c.n);
        auto& enc = c.channel_maps[i];
        enc.resize(c.messages[i] * hist * n);
        for (std::size_t m = 0; m < c.messages[i]; ++m)
            for (std::size_t h = 0; h < hist; ++h)
                bp.encode(user, m, detail::decode_history(h, c.down_sizes[i], J),
                          std::span<std::size_t>(enc.data() + (m * hist + h) * n, n));
    }
    c.decoder.resize(c.y_sequences());
    for (std::size_t y = 0; y < c.decoder.size(); ++y) c.decoder[y] = bp.decode(y);
    return c;
}

namespace detail {

/// Original-code round-j up symbol for a message and an explicit down-link history.
inline std::size_t up_symbol(const CooperationCode& c, int user, std::size_t j, std::size_t m,
                             std::span<const std::size_t> vhist) {
    const auto i = static_cast<std::size_t>(user);
    return c.up_maps[i][j][m * c.down_histories(user, j) + encode_history(vhist, c.down_sizes[i])];
}

inline std::size_t cf_symbol(const CooperationCode& c, int user, std::size_t j, std::span<const std::size_t> u1,
                             std::span<const std::size_t> u2) {
    const std::size_t a = encode_history(u1, c.up_sizes[0]);
    const std::size_t b = encode_history(u2, c.up_sizes[1]);
    return c.cf_maps[static_cast<std::size_t>(user)][j][a * c.up_histories(1, j + 1) + b];
}

inline std::vector<std::size_t> inverse(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t p = 0; p < perm.size(); ++p) inv[perm[p]] = p;
    return inv;
}

inline std::size_t ceil_log2(std::size_t v) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < v) ++bits;
    return bits;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plans

enum class KStarPolicy {
    MinimalCertified,  ///< smallest K* in [1, ceil(n(R1+R2+2 delta))] whose block search is certified
    MeasuredRate,      ///< K* = ceil(n(R1+R2+2 delta)) with measured rates R_i = (1/n) log2 M_i
};

struct Theorem1Options {
    KStarPolicy policy = KStarPolicy::MinimalCertified;
    PermSearchOptions search{};
    int max_bits = kDefaultEnumBits;
};

/// Best-quarter selection for the conferencing transformation.
struct ConferencingSelection {
    double c12 = 0.0, c21 = 0.0;
    std::vector<double> block_avg;                  ///< K1 x K2 row-major
    std::vector<std::array<std::size_t, 2>> chosen;  ///< phi(k1', k2') = chosen[k1' * K2/2 + k2']
    bool conferencing_form = false;                  ///< v_i^J depends only on (k1, k2, l_i)
};

/// All intermediate artifacts of a transformation.
struct TransformPlan {
    std::string kind;  ///< "theorem1" or "prop3"
    int n = 0;
    std::array<std::size_t, 2> m{1, 1};
    std::array<double, 2> rate_measured{0.0, 0.0};
    std::array<double, 2> r_tilde{0.0, 0.0};
    double delta = 0.0;
    std::size_t k_star = 1, k_star_max = 1;
    std::string k_star_policy;
    std::array<std::size_t, 2> k{1, 1}, l{1, 1};
    std::array<std::size_t, 2> k_star_blocks{0, 0};  ///< floor(K_i / K*)
    std::array<std::vector<std::size_t>, 2> kept;    ///< renumbered index -> original message
    ZeroOneMatrix a_matrix;
    double epsilon = 0.0;
    double threshold = 0.0;  ///< block-sum threshold L1 L2 e^3 epsilon
    std::array<std::vector<std::size_t>, 2> perm;     ///< position -> block index
    std::vector<std::array<std::size_t, 2>> good_entry;  ///< per K* x K* block (s,t): zero position (p1,p2)
    std::array<std::size_t, 2> round1_up_bits{0, 0}, round1_down_bits{0, 0};
    std::string search;  ///< "matrix", "vector-rows", "vector-cols" or "single-block"
    double bound = 0.0;
    bool certified = false;
    std::optional<ConferencingSelection> conferencing;
};

/// Two-pass selection: the keep1 rows with the smallest row sums, then the
/// keep2 columns with the smallest sums over those rows. Ties go to the lower
/// index; each list is returned in ascending message order.
inline std::array<std::vector<std::size_t>, 2> two_pass_selection(const ErrorMatrix& em, std::size_t keep1,
                                                                  std::size_t keep2) {
    if (keep1 < 1 || keep1 > em.rows() || keep2 < 1 || keep2 > em.cols())
        throw ValidationError("kept counts out of range");
    std::vector<double> rs(em.rows());
    for (std::size_t a = 0; a < em.rows(); ++a) rs[a] = em.row_sum(a);
    auto rows = detail::sorted_marginal_order(rs);
    rows.resize(keep1);
    std::sort(rows.begin(), rows.end());
    std::vector<double> cs(em.cols(), 0.0);
    for (std::size_t a : rows)
        for (std::size_t b = 0; b < em.cols(); ++b) cs[b] += em(a, b);
    auto cols = detail::sorted_marginal_order(cs);
    cols.resize(keep2);
    std::sort(cols.begin(), cols.end());
    return {rows, cols};
}

namespace detail {

struct Thm1Stage {
    std::array<std::size_t, 2> k{}, l{};
    std::array<std::vector<std::size_t>, 2> kept;
    double epsilon = 0.0, threshold = 0.0;
    ZeroOneMatrix a;
};

inline Thm1Stage thm1_stage(const ErrorMatrix& em, int n, std::array<double, 2> r_tilde, std::size_t k_star) {
    Thm1Stage st;
    const std::array<std::size_t, 2> m{em.rows(), em.cols()};
    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t blocks = floor_pow2(n * r_tilde[i]);
        const std::size_t want = blocks > (std::size_t{1} << 62) / k_star ? m[i] : k_star * blocks;
        st.k[i] = std::min(want, m[i]);
        st.l[i] = m[i] / st.k[i];
    }
    st.kept = two_pass_selection(em, st.k[0] * st.l[0], st.k[1] * st.l[1]);
    double sum = 0.0;
    for (std::size_t a : st.kept[0])
        for (std::size_t b : st.kept[1]) sum += em(a, b);
    st.epsilon = sum / static_cast<double>(st.kept[0].size() * st.kept[1].size());
    const double e3 = std::exp(3.0);
    st.threshold = static_cast<double>(st.l[0] * st.l[1]) * e3 * st.epsilon;
    std::vector<std::uint8_t> bits(st.k[0] * st.k[1], 0);
    for (std::size_t k1 = 0; k1 < st.k[0]; ++k1)
        for (std::size_t k2 = 0; k2 < st.k[1]; ++k2) {
            double s = 0.0;
            for (std::size_t r1 = k1 * st.l[0]; r1 < (k1 + 1) * st.l[0]; ++r1)
                for (std::size_t r2 = k2 * st.l[1]; r2 < (k2 + 1) * st.l[1]; ++r2)
                    s += em(st.kept[0][r1], st.kept[1][r2]);
            bits[k1 * st.k[1] + k2] = s > st.threshold ? 1 : 0;
        }
    st.a = ZeroOneMatrix(st.k[0], st.k[1], std::move(bits));
    return st;
}

struct BlockSearch {
    bool found = false;
    double bound = 0.0;
    std::string mode;
    std::array<std::vector<std::size_t>, 2> perm;
};

/// Finds permutations of [K1], [K2] leaving a zero in every K* x K* block.
/// When one side has exactly K* block indices, only the other side needs
/// permuting and the vector search applies.
inline BlockSearch search_blocks(const ZeroOneMatrix& a, std::size_t k_star, const PermSearchOptions& opt) {
    BlockSearch out;
    const std::size_t K1 = a.rows(), K2 = a.cols();
    auto identity = [](std::size_t size) {
        std::vector<std::size_t> p(size);
        std::iota(p.begin(), p.end(), 0);
        return p;
    };
    if (K1 == k_star && K2 == k_star) {
        out.mode = "single-block";
        out.bound = existence_bound(K1, K2, k_star, a.ones());
        out.perm = {identity(K1), identity(K2)};
        out.found = a.ones() < K1 * K2;
        return out;
    }
    if (K1 == k_star || K2 == k_star) {
        const bool rows_fixed = K1 == k_star;
        // Entry t of the vector is 1 iff line t (a column when rows are fixed) is all ones.
        const std::size_t len = rows_fixed ? K2 : K1;
        std::vector<std::uint8_t> v(len, 1);
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t s = 0; s < (rows_fixed ? K1 : K2); ++s)
                if ((rows_fixed ? a(s, t) : a(t, s)) == 0) v[t] = 0;
        const auto res = find_permutation_vector(v, k_star);
        out.mode = rows_fixed ? "vector-cols" : "vector-rows";
        out.bound = res.bound;
        out.found = res.found;
        out.perm = rows_fixed ? std::array{identity(K1), res.perm} : std::array{res.perm, identity(K2)};
        return out;
    }
    const auto res = find_permutations(a, k_star, opt);
    out.mode = "matrix";
    out.bound = res.bound;
    out.found = res.found;
    out.perm = {res.perm1, res.perm2};
    return out;
}

}  // namespace detail

/// Builds the CF-round plan: kept messages, the thresholded (0,1)-matrix,
/// the CF block size K*, permutations and the designated zero of every block.
inline TransformPlan plan_theorem1(const CooperationCode& code, const DiscreteMAC& mac, double r1, double r2,
                                   double delta, const Theorem1Options& opt = {}) {
    if (!(r1 >= 0.0) || !(r2 >= 0.0)) throw ValidationError("target rates must be nonnegative");
    if (!(delta > 0.0)) throw ValidationError("delta must be positive");
    if (code.n < 1) throw ValidationError("transformation needs a code with n >= 1");
    const ErrorMatrix em = error_matrix(code, mac, opt.max_bits);

    TransformPlan plan;
    plan.kind = "theorem1";
    plan.n = code.n;
    plan.m = code.messages;
    plan.rate_measured = {code.rate(0), code.rate(1)};
    plan.r_tilde = {r1, r2};
    plan.delta = delta;
    plan.k_star_max = static_cast<std::size_t>(
        std::max(1.0, std::ceil(code.n * (plan.rate_measured[0] + plan.rate_measured[1] + 2.0 * delta) - 1e-12)));
    plan.k_star_policy = opt.policy == KStarPolicy::MinimalCertified ? "minimal_certified" : "measured_rate";

    std::vector<std::size_t> candidates;
    if (opt.policy == KStarPolicy::MeasuredRate)
        candidates.push_back(plan.k_star_max);
    else
        for (std::size_t ks = 1; ks <= plan.k_star_max; ++ks) candidates.push_back(ks);

    std::optional<std::pair<std::size_t, std::pair<detail::Thm1Stage, detail::BlockSearch>>> chosen, fallback;
    std::optional<std::pair<std::size_t, std::pair<detail::Thm1Stage, detail::BlockSearch>>> best_failure;
    for (std::size_t ks : candidates) {
        auto st = detail::thm1_stage(em, code.n, plan.r_tilde, ks);
        if (st.k[0] / ks == 0 || st.k[1] / ks == 0) continue;  // no full K* x K* block
        auto search = detail::search_blocks(st.a, ks, opt.search);
        if (search.found && search.bound < 1.0) {
            chosen.emplace(ks, std::pair{std::move(st), std::move(search)});
            break;
        }
        if (search.found && !fallback) {
            fallback.emplace(ks, std::pair{std::move(st), std::move(search)});
        } else if (!search.found && !best_failure) {
            best_failure.emplace(ks, std::pair{std::move(st), std::move(search)});
        }
    }
    if (!chosen) chosen = std::move(fallback);
    if (!chosen) {
        std::string detail_msg = "no K* in [1, " + std::to_string(plan.k_star_max) + "] admits good permutations";
        if (best_failure)
            detail_msg += " (best attempt: K* = " + std::to_string(best_failure->first) +
                          ", bound = " + std::to_string(best_failure->second.second.bound) + ")";
        throw CertificateError("uncertified-plan: " + detail_msg);
    }
    auto& [ks, payload] = *chosen;
    auto& [st, search] = payload;
    plan.k_star = ks;
    plan.k = st.k;
    plan.l = st.l;
    plan.kept = st.kept;
    plan.a_matrix = st.a;
    plan.epsilon = st.epsilon;
    plan.threshold = st.threshold;
    plan.perm = search.perm;
    plan.search = search.mode;
    plan.bound = search.bound;
    plan.certified = search.bound < 1.0;
    for (std::size_t i = 0; i < 2; ++i) {
        plan.k_star_blocks[i] = plan.k[i] / ks;
        plan.round1_up_bits[i] = detail::ceil_log2(plan.k[i]);
        plan.round1_down_bits[i] = detail::ceil_log2(ks);
    }
    // Designated zero per block: lowest position in row-major order.
    for (std::size_t s = 0; s < plan.k_star_blocks[0]; ++s)
        for (std::size_t t = 0; t < plan.k_star_blocks[1]; ++t) {
            std::optional<std::array<std::size_t, 2>> zero;
            for (std::size_t p1 = s * ks; p1 < (s + 1) * ks && !zero; ++p1)
                for (std::size_t p2 = t * ks; p2 < (t + 1) * ks && !zero; ++p2)
                    if (plan.a_matrix(plan.perm[0][p1], plan.perm[1][p2]) == 0) zero = std::array{p1, p2};
            if (!zero) throw CertificateError("uncertified-plan: block without a zero after verification");
            plan.good_entry.push_back(*zero);
        }
    return plan;
}

struct ApplyOptions {
    /// Collapse all cooperation into one round (encoders send their whole
    /// message to the CF). Requires input links at least the message rates.
    bool single_round = false;
};

/// Message (s, l) of the transformed code maps to original message
/// kept[perm(q) * L + l], where q is the designated zero position on this
/// user's side; this returns that original index for a given CF offset.
namespace detail {

inline std::size_t thm1_original_message(const TransformPlan& plan, std::size_t user, std::size_t msg,
                                         std::size_t offset) {
    const std::size_t s = msg / plan.l[user], ell = msg % plan.l[user];
    const std::size_t q = s * plan.k_star + offset % plan.k_star;
    const std::size_t block = plan.perm[user][q];
    return plan.kept[user][block * plan.l[user] + ell];
}

inline void check_plan(const TransformPlan& plan, const CooperationCode& code, const char* kind) {
    if (plan.kind != kind) throw ValidationError(std::string("plan is not a ") + kind + " plan");
    if (plan.n != code.n || plan.m != code.messages)
        throw ValidationError("plan was built for a different code (blocklength or message counts differ)");
}

}  // namespace detail

/// Executes the CF-round construction: one added CF round in which each
/// encoder sends its block index and the CF replies with the offset
/// (mod K*) to the designated zero of the K* x K* block; the original code
/// then runs unchanged on the redirected messages.
inline CooperationCode apply_theorem1(const TransformPlan& plan, const CooperationCode& code,
                                      const ApplyOptions& opt = {}) {
    detail::check_plan(plan, code, "theorem1");
    const std::size_t ks = plan.k_star;
    const std::array<std::vector<std::size_t>, 2> pos_of{detail::inverse(plan.perm[0]), detail::inverse(plan.perm[1])};
    const std::size_t T = plan.k_star_blocks[1];

    // CF reply: offsets of the designated zero for the blocks holding (k1, k2).
    auto offsets = [&](std::size_t k1, std::size_t k2) -> std::optional<std::array<std::size_t, 2>> {
        const std::array<std::size_t, 2> pos{pos_of[0][k1], pos_of[1][k2]};
        const std::size_t s = pos[0] / ks, t = pos[1] / ks;
        if (s >= plan.k_star_blocks[0] || t >= T) return std::nullopt;
        const auto& z = plan.good_entry[s * T + t];
        return std::array{(z[0] + ks - pos[0] % ks) % ks, (z[1] + ks - pos[1] % ks) % ks};
    };

    std::array<std::unordered_map<std::size_t, std::size_t>, 2> kept_index;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t r = 0; r < plan.kept[i].size(); ++r) kept_index[i][plan.kept[i][r]] = r;

    CodeBlueprint bp;
    bp.n = code.n;
    bp.x1_size = code.x1_size;
    bp.x2_size = code.x2_size;
    bp.y_size = code.y_size;
    for (std::size_t i = 0; i < 2; ++i) bp.messages[i] = plan.k_star_blocks[i] * plan.l[i];
    bp.decode = [&, ks](std::size_t y) {
        const auto d = code.decoder[y];
        std::array<std::size_t, 2> out{0, 0};
        for (std::size_t i = 0; i < 2; ++i) {
            const auto it = kept_index[i].find(d[i]);
            if (it == kept_index[i].end()) continue;
            const std::size_t block = it->second / plan.l[i], ell = it->second % plan.l[i];
            const std::size_t s = pos_of[i][block] / ks;
            if (s < plan.k_star_blocks[i]) out[i] = s * plan.l[i] + ell;
        }
        return out;
    };
    // Representative block index sent by message (s, l): the one at the first position of group s.
    auto representative = [&](std::size_t i, std::size_t msg) { return plan.perm[i][(msg / plan.l[i]) * ks]; };

    if (opt.single_round) {
        bp.rounds = 1;
        for (std::size_t i = 0; i < 2; ++i) {
            bp.up_sizes[i] = {bp.messages[i]};
            bp.down_sizes[i] = {ks * code.down_histories(static_cast<int>(i), static_cast<std::size_t>(code.rounds))};
        }
        bp.up = [](int, std::size_t, std::size_t m, std::span<const std::size_t>) { return m; };
        bp.cf = [&, ks](int user, std::size_t, std::span<const std::size_t> u1, std::span<const std::size_t> u2) {
            const std::array<std::size_t, 2> msg{u1[0], u2[0]};
            const auto off = offsets(representative(0, msg[0]), representative(1, msg[1]));
            const auto i = static_cast<std::size_t>(user);
            if (!off) return std::size_t{0};
            const std::size_t o1 = detail::thm1_original_message(plan, 0, msg[0], (*off)[0]);
            const std::size_t o2 = detail::thm1_original_message(plan, 1, msg[1], (*off)[1]);
            const Transcript tr = transcript(code, o1, o2);
            const std::size_t vhist = detail::encode_history(tr.v[i], code.down_sizes[i]);
            const std::size_t hist = code.down_histories(user, static_cast<std::size_t>(code.rounds));
            return (*off)[i] * hist + vhist;
        };
        bp.encode = [&](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
            const auto i = static_cast<std::size_t>(user);
            const std::size_t hist = code.down_histories(user, static_cast<std::size_t>(code.rounds));
            const std::size_t orig = detail::thm1_original_message(plan, i, m, v[0] / hist);
            for (int t = 0; t < code.n; ++t) out[static_cast<std::size_t>(t)] = code.codeword_symbol(user, orig, v[0] % hist, t);
        };
        return tabulate(bp);
    }

    bp.rounds = code.rounds + 1;
    for (std::size_t i = 0; i < 2; ++i) {
        bp.up_sizes[i] = {plan.k[i]};
        bp.down_sizes[i] = {ks};
        bp.up_sizes[i].insert(bp.up_sizes[i].end(), code.up_sizes[i].begin(), code.up_sizes[i].end());
        bp.down_sizes[i].insert(bp.down_sizes[i].end(), code.down_sizes[i].begin(), code.down_sizes[i].end());
    }
    bp.up = [&](int user, std::size_t j, std::size_t m, std::span<const std::size_t> v) {
        const auto i = static_cast<std::size_t>(user);
        if (j == 0) return representative(i, m);
        const std::size_t orig = detail::thm1_original_message(plan, i, m, v[0]);
        return detail::up_symbol(code, user, j - 1, orig, v.subspan(1));
    };
    bp.cf = [&](int user, std::size_t j, std::span<const std::size_t> u1, std::span<const std::size_t> u2) {
        if (j == 0) {
            const auto off = offsets(u1[0], u2[0]);
            return off ? (*off)[static_cast<std::size_t>(user)] : std::size_t{0};
        }
        return detail::cf_symbol(code, user, j - 1, u1.subspan(1), u2.subspan(1));
    };
    bp.encode = [&](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
        const auto i = static_cast<std::size_t>(user);
        const std::size_t orig = detail::thm1_original_message(plan, i, m, v[0]);
        const std::size_t vhist = detail::encode_history(v.subspan(1), code.down_sizes[i]);
        for (int t = 0; t < code.n; ++t) out[static_cast<std::size_t>(t)] = code.codeword_symbol(user, orig, vhist, t);
    };
    CooperationCode out = tabulate(bp);
    // Inflated budgets: C_in + r + (1/n) log2(1 + n(R1 + R2 + 2 delta)), C_out + (1/n) log2(...).
    const double slack = std::log2(1.0 + code.n * (plan.rate_measured[0] + plan.rate_measured[1] + 2.0 * plan.delta)) /
                         code.n;
    LinkCapacities links;
    for (std::size_t i = 0; i < 2; ++i) {
        const int user = static_cast<int>(i);
        const double c_in = code.links ? code.links->c_in[i] : code.up_bits(user) / code.n;
        const double c_out = code.links ? code.links->c_out[i] : code.down_bits(user) / code.n;
        links.c_in[i] = c_in + plan.r_tilde[i] + slack;
        links.c_out[i] = c_out + slack;
    }
    out.links = links;
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// Conferencing: best-quarter selection

namespace detail {

/// True when every encoder's CF history depends on the other message only
/// through its block index k, i.e. the code is a one-shot conferencing code.
inline bool conferencing_form(const CooperationCode& code, std::array<std::size_t, 2> L) {
    const std::array<std::size_t, 2> M = code.messages;
    for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t o = 1 - i;
        for (std::size_t mi = 0; mi < M[i]; ++mi)
            for (std::size_t ko = 0; ko < M[o] / L[o]; ++ko) {
                std::optional<std::vector<std::size_t>> ref;
                for (std::size_t lo = 0; lo < L[o]; ++lo) {
                    const std::size_t mo = ko * L[o] + lo;
                    const Transcript tr = i == 0 ? transcript(code, mi, mo) : transcript(code, mo, mi);
                    if (!ref)
                        ref = tr.v[i];
                    else if (*ref != tr.v[i])
                        return false;
                }
            }
    }
    return true;
}

}  // namespace detail

/// Selects the K1 K2 / 4 blocks (k1, k2) with the smallest block averages.
/// The code's messages must factor as m_i = k_i L_i + l_i with
/// K1 = 2 floor(2^{n C12}) and K2 = 2 floor(2^{n C21}).
inline TransformPlan plan_prop3(const CooperationCode& code, const DiscreteMAC& mac, double c12, double c21,
                                int max_bits = kDefaultEnumBits) {
    if (!(c12 >= 0.0) || !(c21 >= 0.0)) throw ValidationError("conferencing capacities must be nonnegative");
    if (code.n < 1) throw ValidationError("transformation needs a code with n >= 1");
    TransformPlan plan;
    plan.kind = "prop3";
    plan.n = code.n;
    plan.m = code.messages;
    plan.rate_measured = {code.rate(0), code.rate(1)};
    plan.r_tilde = {c12, c21};
    plan.k = {2 * floor_pow2(code.n * c12), 2 * floor_pow2(code.n * c21)};
    for (std::size_t i = 0; i < 2; ++i) {
        if (plan.k[i] > code.messages[i] || code.messages[i] % plan.k[i] != 0)
            throw ValidationError("message set of user " + std::to_string(i + 1) + " (" +
                                  std::to_string(code.messages[i]) + ") does not factor as [K_i] x [L_i] with K_i = " +
                                  std::to_string(plan.k[i]));
        plan.l[i] = code.messages[i] / plan.k[i];
        plan.kept[i].resize(code.messages[i]);
        std::iota(plan.kept[i].begin(), plan.kept[i].end(), 0);
    }
    const ErrorMatrix em = error_matrix(code, mac, max_bits);
    plan.epsilon = avg_error(em);
    plan.threshold = 4.0 * plan.epsilon / 3.0;

    ConferencingSelection sel;
    sel.c12 = c12;
    sel.c21 = c21;
    const std::size_t K1 = plan.k[0], K2 = plan.k[1], L1 = plan.l[0], L2 = plan.l[1];
    sel.block_avg.assign(K1 * K2, 0.0);
    for (std::size_t k1 = 0; k1 < K1; ++k1)
        for (std::size_t k2 = 0; k2 < K2; ++k2) {
            double s = 0.0;
            for (std::size_t a = 0; a < L1; ++a)
                for (std::size_t b = 0; b < L2; ++b) s += em(k1 * L1 + a, k2 * L2 + b);
            sel.block_avg[k1 * K2 + k2] = s / static_cast<double>(L1 * L2);
        }
    std::vector<std::size_t> order(K1 * K2);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sel.block_avg[a] < sel.block_avg[b]; });
    order.resize(K1 * K2 / 4);
    std::sort(order.begin(), order.end());
    for (std::size_t idx : order) sel.chosen.push_back({idx / K2, idx % K2});
    sel.conferencing_form = code.rounds >= 1 && detail::conferencing_form(code, plan.l);

    std::vector<std::uint8_t> bits(K1 * K2, 1);
    for (const auto& c : sel.chosen) bits[c[0] * K2 + c[1]] = 0;
    plan.a_matrix = ZeroOneMatrix(K1, K2, std::move(bits));
    plan.conferencing = std::move(sel);
    plan.search = "best-quarter";
    plan.certified = true;
    for (std::size_t i = 0; i < 2; ++i) {
        plan.k_star_blocks[i] = plan.k[i] / 2;
        plan.round1_up_bits[i] = detail::ceil_log2(plan.k[i] / 2);
        plan.round1_down_bits[i] = detail::ceil_log2(plan.k[1 - i] / 2);
    }
    return plan;
}

/// Executes the best-quarter construction: messages (k1', k2', l_i) are sent
/// with the original codewords of (phi(k1', k2'), l_i); the decoder maps
/// pairs outside the selection to (0, 0, l1, l2).
///
/// One-shot conferencing codes stay single-round (each encoder forwards k_i'
/// to the other); any other code gets a forwarding round followed by the
/// original rounds.
inline CooperationCode apply_prop3(const TransformPlan& plan, const CooperationCode& code) {
    detail::check_plan(plan, code, "prop3");
    const auto& sel = *plan.conferencing;
    const std::size_t K1 = plan.k[0], K2 = plan.k[1], H1 = K1 / 2, H2 = K2 / 2;
    std::vector<std::optional<std::array<std::size_t, 2>>> phi_inv(K1 * K2);
    for (std::size_t idx = 0; idx < sel.chosen.size(); ++idx)
        phi_inv[sel.chosen[idx][0] * K2 + sel.chosen[idx][1]] = std::array{idx / H2, idx % H2};
    auto phi = [&](std::size_t a, std::size_t b) { return sel.chosen[a * H2 + b]; };

    CodeBlueprint bp;
    bp.n = code.n;
    bp.x1_size = code.x1_size;
    bp.x2_size = code.x2_size;
    bp.y_size = code.y_size;
    bp.messages = {H1 * plan.l[0], H2 * plan.l[1]};
    const std::array<std::size_t, 2> H{H1, H2};
    bp.decode = [&](std::size_t y) {
        const auto d = code.decoder[y];
        const std::size_t k1 = d[0] / plan.l[0], k2 = d[1] / plan.l[1];
        const std::size_t l1 = d[0] % plan.l[0], l2 = d[1] % plan.l[1];
        const auto kp = phi_inv[k1 * K2 + k2].value_or(std::array<std::size_t, 2>{0, 0});
        return std::array{kp[0] * plan.l[0] + l1, kp[1] * plan.l[1] + l2};
    };
    // Original message of user i given both primed block indices.
    auto original = [&](std::size_t i, std::size_t kp1, std::size_t kp2, std::size_t ell) {
        const auto k = phi(kp1, kp2);
        return k[i] * plan.l[i] + ell;
    };
    bp.up_sizes = {std::vector<std::size_t>{H1}, std::vector<std::size_t>{H2}};
    bp.down_sizes = {std::vector<std::size_t>{H2}, std::vector<std::size_t>{H1}};
    bp.up = [&](int user, std::size_t j, std::size_t m, std::span<const std::size_t> v) -> std::size_t {
        const auto i = static_cast<std::size_t>(user);
        if (j == 0) return m / plan.l[i];
        const std::size_t kp_own = m / plan.l[i], ell = m % plan.l[i];
        const std::size_t orig = i == 0 ? original(0, kp_own, v[0], ell) : original(1, v[0], kp_own, ell);
        return detail::up_symbol(code, user, j - 1, orig, v.subspan(1));
    };
    bp.cf = [&](int user, std::size_t j, std::span<const std::size_t> u1, std::span<const std::size_t> u2) {
        if (j == 0) return user == 0 ? u2[0] : u1[0];
        return detail::cf_symbol(code, user, j - 1, u1.subspan(1), u2.subspan(1));
    };

    if (sel.conferencing_form) {
        bp.rounds = 1;
        bp.encode = [&](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
            const auto i = static_cast<std::size_t>(user);
            const std::size_t kp_own = m / plan.l[i], ell = m % plan.l[i];
            const std::size_t kp1 = i == 0 ? kp_own : v[0], kp2 = i == 0 ? v[0] : kp_own;
            const auto k = phi(kp1, kp2);
            // In conferencing form the history depends only on (k1, k2, l_i):
            // take l_other = 0 to recover it.
            const std::size_t mine = k[i] * plan.l[i] + ell;
            const std::size_t theirs = k[1 - i] * plan.l[1 - i];
            const Transcript tr = i == 0 ? transcript(code, mine, theirs) : transcript(code, theirs, mine);
            const std::size_t vhist = detail::encode_history(tr.v[i], code.down_sizes[i]);
            for (int t = 0; t < code.n; ++t) out[static_cast<std::size_t>(t)] = code.codeword_symbol(user, mine, vhist, t);
        };
        CooperationCode out = tabulate(bp);
        out.links = LinkCapacities::conferencing(sel.c12, sel.c21);
        out.validate();
        return out;
    }

    bp.rounds = code.rounds + 1;
    for (std::size_t i = 0; i < 2; ++i) {
        bp.up_sizes[i].insert(bp.up_sizes[i].end(), code.up_sizes[i].begin(), code.up_sizes[i].end());
        bp.down_sizes[i].insert(bp.down_sizes[i].end(), code.down_sizes[i].begin(), code.down_sizes[i].end());
    }
    bp.encode = [&](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
        const auto i = static_cast<std::size_t>(user);
        const std::size_t kp_own = m / plan.l[i], ell = m % plan.l[i];
        const std::size_t orig = i == 0 ? original(0, kp_own, v[0], ell) : original(1, v[0], kp_own, ell);
        const std::size_t vhist = detail::encode_history(v.subspan(1), code.down_sizes[i]);
        for (int t = 0; t < code.n; ++t) out[static_cast<std::size_t>(t)] = code.codeword_symbol(user, orig, vhist, t);
    };
    (void)H;
    return tabulate(bp);
}

// ---------------------------------------------------------------------------
// Verification

struct TransformReport {
    std::string kind;
    std::array<double, 2> rate_before{}, rate_kept{}, rate_after{}, rate_loss{};
    double rate_loss_budget = 0.0;
    bool rate_loss_ok = true;
    std::array<double, 2> up_bits{}, down_bits{}, up_budget{}, down_budget{};
    std::array<double, 2> added_up_bits{}, added_down_bits{};
    bool cf_budget_ok = true;
    double original_avg = 0.0, original_max = 0.0;
    double transformed_avg = 0.0, transformed_max = 0.0;
    double blockwise_witness = 0.0;  ///< max block average with identity permutations
    BlockwiseResult blockwise;       ///< exact when small enough, otherwise an upper bound
    double epsilon = 0.0;
    double certificate_limit = 0.0;
    std::string certificate;  ///< "pass", "fail" or "none"
    ErrorProfileQuery query;
};

/// Re-evaluates both codes exactly and checks the construction's guarantees.
/// Without a plan only rates and errors are compared.
inline TransformReport verify_transform(const CooperationCode& original, const CooperationCode& transformed,
                                        const DiscreteMAC& mac, const ErrorProfileQuery& query,
                                        const TransformPlan* plan = nullptr, const BlockwiseOptions& bopt = {}) {
    TransformReport rep;
    rep.kind = plan ? plan->kind : "none";
    rep.query = query;
    const ErrorMatrix eo = error_matrix(original, mac);
    const ErrorMatrix et = error_matrix(transformed, mac);
    rep.original_avg = avg_error(eo);
    rep.original_max = max_error(eo);
    rep.transformed_avg = avg_error(et);
    rep.transformed_max = max_error(et);
    std::vector<std::size_t> id1(et.rows()), id2(et.cols());
    std::iota(id1.begin(), id1.end(), 0);
    std::iota(id2.begin(), id2.end(), 0);
    rep.blockwise_witness = max_block_average(et, query, id1, id2).first;
    const bool small = et.rows() <= bopt.max_exact_messages && et.cols() <= bopt.max_exact_messages;
    try {
        rep.blockwise = blockwise_error(et, query, small ? BlockwiseMode::Exact : BlockwiseMode::Heuristic, bopt);
    } catch (const BudgetExceeded&) {
        rep.blockwise = blockwise_error(et, query, BlockwiseMode::Heuristic, bopt);
    }
    const int n = original.n;
    for (std::size_t i = 0; i < 2; ++i) {
        const int user = static_cast<int>(i);
        rep.rate_before[i] = original.rate(user);
        rep.rate_after[i] = transformed.rate(user);
        rep.rate_kept[i] = plan && n > 0 ? std::log2(static_cast<double>(plan->k[i] * plan->l[i])) / n
                                         : rep.rate_before[i];
        rep.rate_loss[i] = rep.rate_before[i] - rep.rate_after[i];
        rep.up_bits[i] = transformed.up_bits(user);
        rep.down_bits[i] = transformed.down_bits(user);
        rep.up_budget[i] = rep.up_bits[i];
        rep.down_budget[i] = rep.down_bits[i];
    }
    rep.certificate = "none";
    if (!plan) return rep;

    rep.epsilon = plan->epsilon;
    const double tol = 1e-12;
    if (plan->kind == "theorem1") {
        rep.rate_loss_budget = 2.0 * plan->delta;
        const double slack =
            std::log2(1.0 + n * (plan->rate_measured[0] + plan->rate_measured[1] + 2.0 * plan->delta));
        for (std::size_t i = 0; i < 2; ++i) {
            const int user = static_cast<int>(i);
            const double c_in = original.links ? original.links->c_in[i] : original.up_bits(user) / n;
            const double c_out = original.links ? original.links->c_out[i] : original.down_bits(user) / n;
            rep.up_budget[i] = n * (c_in + plan->r_tilde[i]) + slack;
            rep.down_budget[i] = n * c_out + slack;
            rep.added_up_bits[i] = std::log2(static_cast<double>(plan->k[i]));
            rep.added_down_bits[i] = std::log2(static_cast<double>(plan->k_star));
        }
        rep.certificate_limit = std::exp(3.0) * plan->epsilon;
    } else {
        rep.rate_loss_budget = 1.0 / n;
        const auto& sel = *plan->conferencing;
        const LinkCapacities conf = LinkCapacities::conferencing(sel.c12, sel.c21);
        for (std::size_t i = 0; i < 2; ++i) {
            const int user = static_cast<int>(i);
            rep.up_budget[i] = n * conf.c_in[i] + (transformed.rounds > 1 ? original.up_bits(user) : 0.0);
            rep.down_budget[i] = n * conf.c_out[i] + (transformed.rounds > 1 ? original.down_bits(user) : 0.0);
            rep.added_up_bits[i] = std::log2(static_cast<double>(plan->k[i] / 2));
            rep.added_down_bits[i] = std::log2(static_cast<double>(plan->k[1 - i] / 2));
        }
        rep.certificate_limit = 4.0 * plan->epsilon / 3.0;
    }
    for (std::size_t i = 0; i < 2; ++i) {
        rep.rate_loss_ok = rep.rate_loss_ok && rep.rate_loss[i] <= rep.rate_loss_budget + 1e-12;
        rep.cf_budget_ok = rep.cf_budget_ok && rep.up_bits[i] <= rep.up_budget[i] + 1e-9 &&
                           rep.down_bits[i] <= rep.down_budget[i] + 1e-9;
    }
    rep.certificate = rep.blockwise_witness <= rep.certificate_limit + tol ? "pass" : "fail";
    return rep;
}

}  // namespace maccoop
