#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "code.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace maccoop {

/// Dense (0,1)-matrix.
class ZeroOneMatrix {
public:
    ZeroOneMatrix() = default;

    ZeroOneMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
        : rows_(rows), cols_(cols), bits_(std::move(bits)) {
        if (rows_ < 1 || cols_ < 1) throw ValidationError("(0,1)-matrix needs at least one row and column");
        if (bits_.size() != rows_ * cols_) throw ValidationError("(0,1)-matrix size mismatch");
        for (auto b : bits_)
            if (b > 1) throw ValidationError("(0,1)-matrix entries must be 0 or 1");
        ones_ = static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
    }

    static ZeroOneMatrix zeros(std::size_t rows, std::size_t cols) {
        return {rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};
    }

    static ZeroOneMatrix from_rows(const std::vector<std::vector<int>>& rows) {
        if (rows.empty()) throw ValidationError("(0,1)-matrix needs at least one row");
        std::vector<std::uint8_t> bits;
        for (const auto& r : rows) {
            if (r.size() != rows.front().size()) throw ValidationError("ragged (0,1)-matrix");
            for (int v : r) {
                if (v != 0 && v != 1) throw ValidationError("(0,1)-matrix entries must be 0 or 1");
                bits.push_back(static_cast<std::uint8_t>(v));
            }
        }
        return {rows.size(), rows.front().size(), std::move(bits)};
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t ones() const { return ones_; }
    std::uint8_t operator()(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j]; }
    const std::vector<std::uint8_t>& bits() const { return bits_; }

private:
    std::size_t rows_ = 0, cols_ = 0, ones_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// (mn/k^2) (N_A e^2 / (mn))^k. A value below 1 guarantees row/column
/// permutations leaving a zero in every full k x k block.
inline double existence_bound(std::size_t m, std::size_t n, std::size_t k, std::size_t n_ones) {
    if (k < 1 || k > std::min(m, n))
        throw ValidationError("block size k must satisfy 1 <= k <= min(m, n)");
    const double mn = static_cast<double>(m) * static_cast<double>(n);
    const double e2 = std::numbers::e * std::numbers::e;
    return mn / static_cast<double>(k * k) * std::pow(static_cast<double>(n_ones) * e2 / mn, static_cast<double>(k));
}

/// Vector analogue: (m/k) (N_A e / m)^k.
inline double vector_existence_bound(std::size_t m, std::size_t k, std::size_t n_ones) {
    if (k < 1 || k > m) throw ValidationError("block size k must satisfy 1 <= k <= m");
    const double md = static_cast<double>(m);
    return md / static_cast<double>(k) * std::pow(static_cast<double>(n_ones) * std::numbers::e / md,
                                                  static_cast<double>(k));
}

namespace detail {

inline void check_permutation(std::span<const std::size_t> perm, std::size_t size, const char* what) {
    if (perm.size() != size) throw ValidationError(std::string(what) + " has the wrong length");
    std::vector<bool> seen(size, false);
    for (std::size_t v : perm) {
        if (v >= size || seen[v]) throw ValidationError(std::string(what) + " is not a bijection");
        seen[v] = true;
    }
}

/// Number of full k x k blocks of A(perm1(i), perm2(j)) made entirely of ones.
inline std::size_t count_violations(const ZeroOneMatrix& a, std::size_t k, std::span<const std::size_t> p1,
                                    std::span<const std::size_t> p2) {
    std::size_t bad = 0;
    for (std::size_t s = 0; s < a.rows() / k; ++s)
        for (std::size_t t = 0; t < a.cols() / k; ++t) {
            bool zero = false;
            for (std::size_t i = s * k; i < (s + 1) * k && !zero; ++i)
                for (std::size_t j = t * k; j < (t + 1) * k && !zero; ++j) zero = a(p1[i], p2[j]) == 0;
            bad += zero ? 0 : 1;
        }
    return bad;
}

inline double log_factorial(std::size_t n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace detail

/// Exhaustive scan of the full blocks; returns the first (s, t) (row-major,
/// 0-based) without a zero entry, or nullopt if every block has one.
inline std::optional<std::array<std::size_t, 2>> verify_permutations(const ZeroOneMatrix& a, std::size_t k,
                                                                      std::span<const std::size_t> perm1,
                                                                      std::span<const std::size_t> perm2) {
    if (k < 1 || k > std::min(a.rows(), a.cols()))
        throw ValidationError("block size k must satisfy 1 <= k <= min(m, n)");
    detail::check_permutation(perm1, a.rows(), "row permutation");
    detail::check_permutation(perm2, a.cols(), "column permutation");
    for (std::size_t s = 0; s < a.rows() / k; ++s)
        for (std::size_t t = 0; t < a.cols() / k; ++t) {
            bool zero = false;
            for (std::size_t i = s * k; i < (s + 1) * k && !zero; ++i)
                for (std::size_t j = t * k; j < (t + 1) * k && !zero; ++j) zero = a(perm1[i], perm2[j]) == 0;
            if (!zero) return std::array<std::size_t, 2>{s, t};
        }
    return std::nullopt;
}

struct PermSearchOptions {
    std::size_t budget = 10'000;  ///< random restarts
    std::uint64_t seed = 0;
    double exhaustive_limit = 1e7;  ///< use exhaustive search when m! n! is at most this
};

struct PermSearchResult {
    bool found = false;
    std::vector<std::size_t> perm1, perm2;  ///< position -> original index
    std::string strategy;                   ///< "exhaustive" or "random"
    std::size_t restarts_used = 0;
    std::size_t violations = 0;  ///< all-ones blocks at the best attempt
    double bound = 0.0;
    bool certified = false;  ///< bound < 1
};

namespace detail {

/// Greedy repair: repeatedly apply the row or column swap that most reduces
/// the number of all-ones blocks, at most max_swaps times.
inline std::size_t greedy_repair(const ZeroOneMatrix& a, std::size_t k, std::vector<std::size_t>& p1,
                                 std::vector<std::size_t>& p2, std::size_t max_swaps) {
    std::size_t bad = count_violations(a, k, p1, p2);
    for (std::size_t step = 0; step < max_swaps && bad > 0; ++step) {
        const auto v = verify_permutations(a, k, p1, p2);
        const std::size_t s = (*v)[0], t = (*v)[1];
        std::size_t best = bad;
        int best_axis = -1;
        std::size_t best_x = 0, best_y = 0;
        for (int axis = 0; axis < 2; ++axis) {
            auto& p = axis == 0 ? p1 : p2;
            const std::size_t lo = (axis == 0 ? s : t) * k;
            for (std::size_t x = lo; x < lo + k; ++x)
                for (std::size_t y = 0; y < p.size(); ++y) {
                    if (y >= lo && y < lo + k) continue;
                    std::swap(p[x], p[y]);
                    const std::size_t c = count_violations(a, k, p1, p2);
                    std::swap(p[x], p[y]);
                    if (c < best) {
                        best = c;
                        best_axis = axis;
                        best_x = x;
                        best_y = y;
                    }
                }
        }
        if (best_axis < 0) break;
        auto& p = best_axis == 0 ? p1 : p2;
        std::swap(p[best_x], p[best_y]);
        bad = best;
    }
    return bad;
}

}  // namespace detail

/// Searches for (perm1, perm2) putting a zero in every full k x k block.
/// Exhaustive over canonical block assignments when m! n! <= exhaustive_limit,
/// otherwise seeded uniform restarts each followed by greedy repair. Among
/// successful restarts the lowest index wins, so the result is independent of
/// the worker count.
inline PermSearchResult find_permutations(const ZeroOneMatrix& a, std::size_t k, const PermSearchOptions& opt = {}) {
    if (k < 1 || k > std::min(a.rows(), a.cols()))
        throw ValidationError("block size k must satisfy 1 <= k <= min(m, n)");
    if (opt.budget < 1) throw ValidationError("search budget must be at least one restart");
    const std::size_t m = a.rows(), n = a.cols();
    PermSearchResult res;
    res.bound = existence_bound(m, n, k, a.ones());
    res.certified = res.bound < 1.0;

    const double log_pairs = detail::log_factorial(m) + detail::log_factorial(n);
    if (log_pairs <= std::log(opt.exhaustive_limit) + 1e-9) {
        res.strategy = "exhaustive";
        std::vector<std::vector<std::uint8_t>> rows_p, cols_p;
        detail::enumerate_partitions(m, m / k, k, rows_p);
        detail::enumerate_partitions(n, n / k, k, cols_p);
        const std::size_t S = m / k, T = n / k;
        std::vector<std::uint8_t> has_zero(S * n);
        std::size_t best_bad = S * T + 1;
        for (const auto& rp : rows_p) {
            std::fill(has_zero.begin(), has_zero.end(), 0);
            for (std::size_t i = 0; i < m; ++i)
                if (rp[i] < S)
                    for (std::size_t j = 0; j < n; ++j)
                        if (a(i, j) == 0) has_zero[rp[i] * n + j] = 1;
            for (const auto& cp : cols_p) {
                std::vector<std::uint8_t> ok(S * T, 0);
                for (std::size_t j = 0; j < n; ++j)
                    if (cp[j] < T)
                        for (std::size_t s = 0; s < S; ++s) ok[s * T + cp[j]] |= has_zero[s * n + j];
                const auto bad = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 0));
                if (bad < best_bad) {
                    best_bad = bad;
                    res.perm1 = detail::permutation_from_groups(rp, S);
                    res.perm2 = detail::permutation_from_groups(cp, T);
                }
                if (bad == 0) break;
            }
            if (best_bad == 0) break;
        }
        res.violations = best_bad;
        res.found = best_bad == 0;
        res.restarts_used = 0;
        return res;
    }

    res.strategy = "random";
    struct Attempt {
        std::size_t bad = 0;
        std::vector<std::size_t> p1, p2;
    };
    const std::size_t batch = std::max<std::size_t>(8, worker_count() * 4);
    res.violations = std::numeric_limits<std::size_t>::max();
    for (std::size_t start = 0; start < opt.budget; start += batch) {
        const std::size_t count = std::min(batch, opt.budget - start);
        std::vector<Attempt> slots(count);
        parallel_for(count, [&](std::size_t s) {
            std::mt19937_64 rng(mix_seed(opt.seed, start + s));
            Attempt at;
            at.p1.resize(m);
            at.p2.resize(n);
            std::iota(at.p1.begin(), at.p1.end(), 0);
            std::iota(at.p2.begin(), at.p2.end(), 0);
            std::shuffle(at.p1.begin(), at.p1.end(), rng);
            std::shuffle(at.p2.begin(), at.p2.end(), rng);
            at.bad = detail::greedy_repair(a, k, at.p1, at.p2, m + n);
            slots[s] = std::move(at);
        });
        for (std::size_t s = 0; s < count; ++s) {
            if (slots[s].bad < res.violations) {
                res.violations = slots[s].bad;
                res.perm1 = slots[s].p1;
                res.perm2 = slots[s].p2;
            }
            if (slots[s].bad == 0) {
                res.found = true;
                res.restarts_used = start + s + 1;
                return res;
            }
        }
    }
    res.restarts_used = opt.budget;
    return res;
}

struct VectorSearchResult {
    bool found = false;
    std::vector<std::size_t> perm;  ///< position -> original index
    std::size_t violations = 0;     ///< all-ones windows at the returned permutation
    double bound = 0.0;
    bool certified = false;
};

/// Number of full length-k windows of a(perm(.)) that contain no zero.
inline std::size_t vector_violations(std::span<const std::uint8_t> a, std::size_t k,
                                     std::span<const std::size_t> perm) {
    detail::check_permutation(perm, a.size(), "permutation");
    std::size_t bad = 0;
    for (std::size_t s = 0; s < a.size() / k; ++s) {
        bool zero = false;
        for (std::size_t i = s * k; i < (s + 1) * k && !zero; ++i) zero = a[perm[i]] == 0;
        bad += zero ? 0 : 1;
    }
    return bad;
}

/// Vector version of the block search. Zeros are placed at stride-k positions
/// first; a good permutation exists iff there are at least floor(m/k) zeros,
/// so this single deterministic attempt is decisive.
inline VectorSearchResult find_permutation_vector(std::span<const std::uint8_t> a, std::size_t k) {
    if (k < 1 || k > a.size()) throw ValidationError("block size k must satisfy 1 <= k <= m");
    for (auto v : a)
        if (v > 1) throw ValidationError("(0,1)-vector entries must be 0 or 1");
    const std::size_t m = a.size();
    VectorSearchResult res;
    const auto ones = static_cast<std::size_t>(std::count(a.begin(), a.end(), 1));
    res.bound = vector_existence_bound(m, k, ones);
    res.certified = res.bound < 1.0;
    std::vector<std::size_t> zeros, rest;
    for (std::size_t i = 0; i < m; ++i) (a[i] == 0 ? zeros : rest).push_back(i);
    res.perm.assign(m, 0);
    std::vector<bool> used(m, false);
    std::size_t z = 0;
    for (std::size_t s = 0; s < m / k && z < zeros.size(); ++s) {
        res.perm[s * k] = zeros[z++];
        used[s * k] = true;
    }
    rest.insert(rest.begin(), zeros.begin() + static_cast<long>(z), zeros.end());
    std::sort(rest.begin(), rest.end());
    std::size_t r = 0;
    for (std::size_t pos = 0; pos < m; ++pos)
        if (!used[pos]) res.perm[pos] = rest[r++];
    res.violations = vector_violations(a, k, res.perm);
    res.found = res.violations == 0;
    return res;
}

}  // namespace maccoop
