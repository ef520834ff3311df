#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"

namespace maccoop {

inline constexpr double kNormTolerance = 1e-9;
inline constexpr int kDefaultEnumBits = 24;

namespace detail {

inline void check_distribution(std::span<const double> dist, const std::string& what) {
    if (dist.empty()) throw ValidationError(what + ": empty distribution");
    double sum = 0.0;
    for (double v : dist) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(what + ": negative or non-finite entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kNormTolerance)
        throw ValidationError(what + ": entries sum to " + std::to_string(sum) + ", expected 1");
}

inline double plogp(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

inline std::uint64_t checked_pow(std::uint64_t base, int exponent) {
    std::uint64_t out = 1;
    for (int i = 0; i < exponent; ++i) {
        if (base != 0 && out > UINT64_MAX / base) throw SizeLimitError("integer power overflows 64 bits");
        out *= base;
    }
    return out;
}

}  // namespace detail

/// Finite two-input discrete memoryless MAC with transition tensor p(y|x1,x2).
/// Entries are stored row-major over (x1, x2, y); labels are only used for I/O.
class DiscreteMAC {
public:
    DiscreteMAC() = default;

    DiscreteMAC(std::vector<std::string> x1, std::vector<std::string> x2, std::vector<std::string> y,
                std::vector<double> transition)
        : x1_(std::move(x1)), x2_(std::move(x2)), y_(std::move(y)), p_(std::move(transition)) {
        if (x1_.empty() || x2_.empty() || y_.empty()) throw ValidationError("channel alphabets must be nonempty");
        if (p_.size() != x1_.size() * x2_.size() * y_.size())
            throw ValidationError("transition tensor has " + std::to_string(p_.size()) + " entries, expected " +
                                  std::to_string(x1_.size() * x2_.size() * y_.size()));
        for (std::size_t a = 0; a < x1_.size(); ++a)
            for (std::size_t b = 0; b < x2_.size(); ++b)
                detail::check_distribution(row(a, b), "p(.|" + x1_[a] + "," + x2_[b] + ")");
        deterministic_ = true;
        for (std::size_t a = 0; a < x1_.size() && deterministic_; ++a)
            for (std::size_t b = 0; b < x2_.size() && deterministic_; ++b) {
                const auto r = row(a, b);
                deterministic_ = std::count(r.begin(), r.end(), 1.0) == 1 &&
                                 std::count(r.begin(), r.end(), 0.0) == static_cast<long>(r.size()) - 1;
            }
    }

    /// Builds a deterministic channel from an output-index table f[x1][x2].
    static DiscreteMAC from_function(std::vector<std::string> x1, std::vector<std::string> x2,
                                     std::vector<std::string> y,
                                     const std::vector<std::vector<std::size_t>>& f) {
        std::vector<double> p(x1.size() * x2.size() * y.size(), 0.0);
        if (f.size() != x1.size()) throw ValidationError("function table row count mismatch");
        for (std::size_t a = 0; a < x1.size(); ++a) {
            if (f[a].size() != x2.size()) throw ValidationError("function table column count mismatch");
            for (std::size_t b = 0; b < x2.size(); ++b) {
                if (f[a][b] >= y.size()) throw ValidationError("function table output out of range");
                p[(a * x2.size() + b) * y.size() + f[a][b]] = 1.0;
            }
        }
        return DiscreteMAC(std::move(x1), std::move(x2), std::move(y), std::move(p));
    }

    std::size_t x1_size() const { return x1_.size(); }
    std::size_t x2_size() const { return x2_.size(); }
    std::size_t y_size() const { return y_.size(); }
    const std::vector<std::string>& x1_labels() const { return x1_; }
    const std::vector<std::string>& x2_labels() const { return x2_; }
    const std::vector<std::string>& y_labels() const { return y_; }
    const std::vector<double>& tensor() const { return p_; }

    /// p(y | x1, x2)
    double prob(std::size_t x1, std::size_t x2, std::size_t y) const {
        return p_[(x1 * x2_.size() + x2) * y_.size() + y];
    }

    std::span<const double> row(std::size_t x1, std::size_t x2) const {
        return {p_.data() + (x1 * x2_.size() + x2) * y_.size(), y_.size()};
    }

    bool deterministic() const { return deterministic_; }

    /// Position of a label in the given alphabet (0 = x1, 1 = x2, 2 = y).
    std::size_t index_of(int alphabet, const std::string& label) const {
        const auto& labels = alphabet == 0 ? x1_ : alphabet == 1 ? x2_ : y_;
        const auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw InputError("unknown symbol '" + label + "'");
        return static_cast<std::size_t>(it - labels.begin());
    }

    friend bool operator==(const DiscreteMAC&, const DiscreteMAC&) = default;

private:
    std::vector<std::string> x1_, x2_, y_;
    std::vector<double> p_;
    bool deterministic_ = false;
};

/// Dueck's contraction MAC: X1 = {A,B,a,b}, X2 = {0,1}, Y = {A,B,C,a,b,c} x {0,1}.
/// f(a,0) = f(b,0) = (c,0), f(A,1) = f(B,1) = (C,1), identity elsewhere.
inline DiscreteMAC contraction_mac() {
    const std::vector<std::string> x1{"A", "B", "a", "b"};
    const std::vector<std::string> x2{"0", "1"};
    const std::vector<std::string> first{"A", "B", "C", "a", "b", "c"};
    std::vector<std::string> y;
    for (const auto& s : first)
        for (const auto& t : x2) y.push_back("(" + s + "," + t + ")");
    auto out = [&](const std::string& s, std::size_t bit) {
        const auto pos = static_cast<std::size_t>(std::find(first.begin(), first.end(), s) - first.begin());
        return pos * 2 + bit;
    };
    std::vector<std::vector<std::size_t>> f(4, std::vector<std::size_t>(2));
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 2; ++b) f[a][b] = out(x1[a], b);
    f[2][0] = f[3][0] = out("c", 0);
    f[0][1] = f[1][1] = out("C", 1);
    return DiscreteMAC::from_function(x1, x2, y, f);
}

/// Binary adder MAC: X1 = X2 = {0,1}, Y = X1 + X2 in {0,1,2}.
inline DiscreteMAC binary_adder_mac() {
    return DiscreteMAC::from_function({"0", "1"}, {"0", "1"}, {"0", "1", "2"}, {{0, 1}, {1, 2}});
}

/// n-th memoryless extension. Tuple symbols are indexed row-major with the
/// first time step most significant.
inline DiscreteMAC extend(const DiscreteMAC& mac, int n, int max_bits = kDefaultEnumBits) {
    if (n < 1) throw ValidationError("extension order must be positive");
    const double y_bits = n * std::log2(static_cast<double>(mac.y_size()));
    if (y_bits > max_bits)
        throw SizeLimitError("extension guard: y dimension needs n*log2|Y| = " + std::to_string(y_bits) +
                             " bits > " + std::to_string(max_bits));
    const double total_bits =
        n * std::log2(static_cast<double>(mac.x1_size() * mac.x2_size() * mac.y_size()));
    if (total_bits > max_bits) {
        const double x1_bits = n * std::log2(static_cast<double>(mac.x1_size()));
        const double x2_bits = n * std::log2(static_cast<double>(mac.x2_size()));
        const char* worst = x1_bits >= x2_bits ? "x1" : "x2";
        throw SizeLimitError(std::string("extension guard: tensor needs ") + std::to_string(total_bits) +
                             " bits > " + std::to_string(max_bits) + " (largest input dimension: " + worst + ")");
    }
    auto tuples = [n](const std::vector<std::string>& base) {
        std::vector<std::string> out;
        const std::size_t count = detail::checked_pow(base.size(), n);
        out.reserve(count);
        std::vector<std::size_t> digits(static_cast<std::size_t>(n), 0);
        for (std::size_t idx = 0; idx < count; ++idx) {
            std::size_t rest = idx;
            for (int t = n - 1; t >= 0; --t) {
                digits[static_cast<std::size_t>(t)] = rest % base.size();
                rest /= base.size();
            }
            std::string label = "[";
            for (int t = 0; t < n; ++t) {
                if (t) label += ",";
                label += base[digits[static_cast<std::size_t>(t)]];
            }
            out.push_back(label + "]");
        }
        return out;
    };
    auto x1 = tuples(mac.x1_labels());
    auto x2 = tuples(mac.x2_labels());
    auto y = tuples(mac.y_labels());
    const std::size_t ny = y.size();
    std::vector<double> p(x1.size() * x2.size() * ny, 0.0);
    auto digit = [](std::size_t idx, std::size_t base, int n_digits, int t) {
        for (int s = n_digits - 1; s > t; --s) idx /= base;
        return idx % base;
    };
    for (std::size_t a = 0; a < x1.size(); ++a)
        for (std::size_t b = 0; b < x2.size(); ++b)
            for (std::size_t c = 0; c < ny; ++c) {
                double prob = 1.0;
                for (int t = 0; t < n && prob > 0.0; ++t)
                    prob *= mac.prob(digit(a, mac.x1_size(), n, t), digit(b, mac.x2_size(), n, t),
                                     digit(c, mac.y_size(), n, t));
                p[(a * x2.size() + b) * ny + c] = prob;
            }
    // Products of normalized rows drift by at most ~n ulps; renormalize per row
    // so the result passes the 1e-9 constructor check for any admissible n.
    for (std::size_t r = 0; r < x1.size() * x2.size(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < ny; ++c) sum += p[r * ny + c];
        for (std::size_t c = 0; c < ny; ++c) p[r * ny + c] /= sum;
    }
    return DiscreteMAC(std::move(x1), std::move(x2), std::move(y), std::move(p));
}

// ---------------------------------------------------------------------------
// Entropy primitives (bits)

/// Shannon entropy of a normalized distribution; 0 log 0 = 0.
inline double entropy(std::span<const double> dist) {
    detail::check_distribution(dist, "entropy");
    double h = 0.0;
    for (double p : dist) h += detail::plogp(p);
    return h;
}

inline double entropy(std::initializer_list<double> dist) {
    return entropy(std::span<const double>(dist.begin(), dist.size()));
}

inline double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binary_entropy: p outside [0,1]");
    return detail::plogp(p) + detail::plogp(1.0 - p);
}

/// Input law p(u) p(x1|u) p(x2|u). A plain product input p(x1)p(x2) is the
/// case |U| = 1.
struct ProductInput {
    std::vector<double> pu;
    std::vector<std::vector<double>> x1_given_u;
    std::vector<std::vector<double>> x2_given_u;

    static ProductInput product(std::vector<double> p1, std::vector<double> p2) {
        ProductInput in{{1.0}, {std::move(p1)}, {std::move(p2)}};
        in.validate();
        return in;
    }

    static ProductInput layered(std::vector<double> pu, std::vector<std::vector<double>> x1_given_u,
                                std::vector<std::vector<double>> x2_given_u) {
        ProductInput in{std::move(pu), std::move(x1_given_u), std::move(x2_given_u)};
        in.validate();
        return in;
    }

    std::size_t u_size() const { return pu.size(); }
    bool has_u_layer() const { return pu.size() > 1; }

    void validate() const {
        detail::check_distribution(pu, "p(u)");
        if (x1_given_u.size() != pu.size() || x2_given_u.size() != pu.size())
            throw ValidationError("conditional tables must have one row per u");
        for (std::size_t u = 0; u < pu.size(); ++u) {
            detail::check_distribution(x1_given_u[u], "p(x1|u)");
            detail::check_distribution(x2_given_u[u], "p(x2|u)");
            if (x1_given_u[u].size() != x1_given_u[0].size() || x2_given_u[u].size() != x2_given_u[0].size())
                throw ValidationError("conditional rows have inconsistent lengths");
        }
    }
};

/// Joint law p(u, x1, x2, y) stored row-major.
class JointDistribution {
public:
    JointDistribution(std::array<std::size_t, 4> dims, std::vector<double> p) : dims_(dims), p_(std::move(p)) {
        if (p_.size() != dims_[0] * dims_[1] * dims_[2] * dims_[3])
            throw ValidationError("joint distribution size mismatch");
        detail::check_distribution(p_, "joint distribution");
    }

    static JointDistribution from(const DiscreteMAC& mac, const ProductInput& in) {
        in.validate();
        if (in.x1_given_u[0].size() != mac.x1_size() || in.x2_given_u[0].size() != mac.x2_size())
            throw ValidationError("input distribution does not match channel alphabets");
        const std::array<std::size_t, 4> dims{in.u_size(), mac.x1_size(), mac.x2_size(), mac.y_size()};
        std::vector<double> p(dims[0] * dims[1] * dims[2] * dims[3], 0.0);
        for (std::size_t u = 0; u < dims[0]; ++u)
            for (std::size_t a = 0; a < dims[1]; ++a)
                for (std::size_t b = 0; b < dims[2]; ++b) {
                    const double w = in.pu[u] * in.x1_given_u[u][a] * in.x2_given_u[u][b];
                    for (std::size_t y = 0; y < dims[3]; ++y)
                        p[((u * dims[1] + a) * dims[2] + b) * dims[3] + y] = w * mac.prob(a, b, y);
                }
        return JointDistribution(dims, std::move(p));
    }

    const std::array<std::size_t, 4>& dims() const { return dims_; }
    const std::vector<double>& values() const { return p_; }

    /// Entropy of the marginal over the variables selected by mask
    /// (bit 0 = U, bit 1 = X1, bit 2 = X2, bit 3 = Y).
    double marginal_entropy(unsigned mask) const {
        std::array<std::size_t, 4> strides{};
        std::size_t size = 1;
        for (int v = 3; v >= 0; --v) {
            if (mask & (1u << v)) {
                strides[static_cast<std::size_t>(v)] = size;
                size *= dims_[static_cast<std::size_t>(v)];
            }
        }
        std::vector<double> marginal(size, 0.0);
        std::size_t idx = 0;
        for (std::size_t u = 0; u < dims_[0]; ++u)
            for (std::size_t a = 0; a < dims_[1]; ++a)
                for (std::size_t b = 0; b < dims_[2]; ++b)
                    for (std::size_t y = 0; y < dims_[3]; ++y, ++idx) {
                        const std::size_t slot = strides[0] * u + strides[1] * a + strides[2] * b + strides[3] * y;
                        marginal[slot] += p_[idx];
                    }
        double h = 0.0;
        for (double v : marginal) h += detail::plogp(v);
        return h;
    }

private:
    std::array<std::size_t, 4> dims_;
    std::vector<double> p_;
};

enum class Grouping {
    X1X2_Y,          ///< I(X1,X2;Y)
    X1_Y,            ///< I(X1;Y)
    X2_Y,            ///< I(X2;Y)
    X2_Y_given_X1,   ///< I(X2;Y|X1)
    X1_Y_given_X2,   ///< I(X1;Y|X2)
    X1_Y_given_UX2,  ///< I(X1;Y|U,X2)
    X2_Y_given_UX1,  ///< I(X2;Y|U,X1)
    X1X2_Y_given_U,  ///< I(X1,X2;Y|U)
};

/// I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C), computed from marginals.
inline double mutual_info(const JointDistribution& joint, Grouping g) {
    constexpr unsigned U = 1, X1 = 2, X2 = 4, Y = 8;
    unsigned a = 0, b = Y, c = 0;
    switch (g) {
        case Grouping::X1X2_Y: a = X1 | X2; break;
        case Grouping::X1_Y: a = X1; break;
        case Grouping::X2_Y: a = X2; break;
        case Grouping::X2_Y_given_X1: a = X2; c = X1; break;
        case Grouping::X1_Y_given_X2: a = X1; c = X2; break;
        case Grouping::X1_Y_given_UX2: a = X1; c = U | X2; break;
        case Grouping::X2_Y_given_UX1: a = X2; c = U | X1; break;
        case Grouping::X1X2_Y_given_U: a = X1 | X2; c = U; break;
    }
    const double value = joint.marginal_entropy(a | c) + joint.marginal_entropy(b | c) -
                         joint.marginal_entropy(a | b | c) - (c ? joint.marginal_entropy(c) : 0.0);
    return std::max(value, 0.0);
}

// ---------------------------------------------------------------------------
// JSON channel files: {"x1": [...], "x2": [...], "y": [...], "p": [[[...]]]}

inline nlohmann::json to_json(const DiscreteMAC& mac) {
    nlohmann::json p = nlohmann::json::array();
    for (std::size_t a = 0; a < mac.x1_size(); ++a) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t b = 0; b < mac.x2_size(); ++b) {
            const auto r = mac.row(a, b);
            rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        p.push_back(rows);
    }
    return {{"x1", mac.x1_labels()}, {"x2", mac.x2_labels()}, {"y", mac.y_labels()}, {"p", p}};
}

inline DiscreteMAC channel_from_json(const nlohmann::json& j) {
    try {
        auto x1 = j.at("x1").get<std::vector<std::string>>();
        auto x2 = j.at("x2").get<std::vector<std::string>>();
        auto y = j.at("y").get<std::vector<std::string>>();
        const auto& p = j.at("p");
        if (p.size() != x1.size()) throw ValidationError("channel file: p must have one entry per x1 symbol");
        std::vector<double> flat;
        flat.reserve(x1.size() * x2.size() * y.size());
        for (const auto& rows : p) {
            if (rows.size() != x2.size()) throw ValidationError("channel file: p[x1] must have one entry per x2 symbol");
            for (const auto& r : rows) {
                auto v = r.get<std::vector<double>>();
                if (v.size() != y.size()) throw ValidationError("channel file: p[x1][x2] must have one entry per y symbol");
                flat.insert(flat.end(), v.begin(), v.end());
            }
        }
        return DiscreteMAC(std::move(x1), std::move(x2), std::move(y), std::move(flat));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("channel file: ") + e.what());
    }
}

}  // namespace maccoop
