#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "channel.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace maccoop {

// ---------------------------------------------------------------------------
// Support curves and polytopes

/// Samples (alpha, C^alpha) of a support function.
struct SupportCurve {
    std::vector<std::pair<double, double>> samples;

    void validate() const {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto [a, v] = samples[i];
            if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("support curve alpha outside [0,1]");
            if (!std::isfinite(v) || v < 0.0) throw ValidationError("support curve values must be finite and >= 0");
            if (i > 0 && !(a > samples[i - 1].first)) throw ValidationError("support curve alphas must increase");
        }
    }
};

struct Point2 {
    double x = 0.0, y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

/// alpha x + (1 - alpha) y <= c
struct HalfPlane {
    double alpha = 0.0;
    double c = 0.0;
};

namespace detail {

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Counter-clockwise convex hull without collinear points.
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point2& a, const Point2& b) {
                              return std::abs(a.x - b.x) <= 1e-12 && std::abs(a.y - b.y) <= 1e-12;
                          }),
              pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 1e-15) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lo = k + 1; i-- > 0;) {
        while (k >= lo && cross(hull[k - 2], hull[k - 1], pts[i]) <= 1e-15) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

}  // namespace detail

/// Region in the nonnegative quadrant cut out by half-planes
/// alpha x + (1 - alpha) y <= c; always contains the origin when nonempty.
class RegionPolytope {
public:
    RegionPolytope() = default;
    explicit RegionPolytope(std::vector<HalfPlane> half_planes, std::string label = "")
        : planes_(std::move(half_planes)), label_(std::move(label)) {
        for (const auto& h : planes_) {
            if (!(h.alpha >= 0.0 && h.alpha <= 1.0)) throw ValidationError("half-plane alpha outside [0,1]");
            if (!std::isfinite(h.c)) throw ValidationError("half-plane offset must be finite");
        }
        compute_vertices();
    }

    /// Down-closure in the quadrant of the convex hull of the given points.
    static RegionPolytope from_vertices(const std::vector<Point2>& points, std::string label = "") {
        if (points.empty()) throw ValidationError("polygon needs at least one point");
        std::vector<Point2> all{{0.0, 0.0}};
        for (const auto& p : points) {
            if (!(p.x >= 0.0 && p.y >= 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y))
                throw ValidationError("polygon points must lie in the nonnegative quadrant");
            all.push_back(p);
            all.push_back({p.x, 0.0});
            all.push_back({0.0, p.y});
        }
        const auto hull = detail::convex_hull(all);
        std::vector<HalfPlane> planes;
        double xmax = 0.0, ymax = 0.0;
        for (const auto& p : hull) {
            xmax = std::max(xmax, p.x);
            ymax = std::max(ymax, p.y);
        }
        planes.push_back({1.0, xmax});
        planes.push_back({0.0, ymax});
        for (std::size_t i = 0; i < hull.size(); ++i) {
            const Point2& a = hull[i];
            const Point2& b = hull[(i + 1) % hull.size()];
            // Outward normal of a counter-clockwise edge.
            const double nx = b.y - a.y, ny = a.x - b.x;
            if (nx <= 0.0 || ny <= 0.0) continue;
            const double alpha = nx / (nx + ny);
            planes.push_back({alpha, alpha * a.x + (1.0 - alpha) * a.y});
        }
        return RegionPolytope(std::move(planes), std::move(label));
    }

    const std::vector<HalfPlane>& half_planes() const { return planes_; }
    const std::vector<Point2>& vertices() const { return vertices_; }
    const std::string& label() const { return label_; }
    bool empty() const { return vertices_.empty(); }

    bool contains(const Point2& p, double tol = 1e-9) const {
        if (p.x < -tol || p.y < -tol) return false;
        for (const auto& h : planes_)
            if (h.alpha * p.x + (1.0 - h.alpha) * p.y > h.c + tol) return false;
        return true;
    }

private:
    void compute_vertices() {
        bool x_bounded = false, y_bounded = false;
        for (const auto& h : planes_) {
            x_bounded = x_bounded || h.alpha > 0.0;
            y_bounded = y_bounded || h.alpha < 1.0;
        }
        if (!x_bounded || !y_bounded) throw ValidationError("region is unbounded; include alpha = 0 and alpha = 1");
        // Lines as a x + b y = c, including the two axes.
        struct Line {
            double a, b, c;
        };
        std::vector<Line> lines{{-1.0, 0.0, 0.0}, {0.0, -1.0, 0.0}};
        for (const auto& h : planes_) lines.push_back({h.alpha, 1.0 - h.alpha, h.c});
        std::vector<Point2> pts;
        double scale = 1.0;
        for (const auto& h : planes_) scale = std::max(scale, std::abs(h.c));
        const double tol = 1e-9 * scale;
        for (std::size_t i = 0; i < lines.size(); ++i)
            for (std::size_t j = i + 1; j < lines.size(); ++j) {
                const double det = lines[i].a * lines[j].b - lines[j].a * lines[i].b;
                if (std::abs(det) < 1e-14) continue;
                Point2 p{(lines[i].c * lines[j].b - lines[j].c * lines[i].b) / det,
                         (lines[i].a * lines[j].c - lines[j].a * lines[i].c) / det};
                if (!contains(p, tol)) continue;
                p.x = std::max(p.x, 0.0);
                p.y = std::max(p.y, 0.0);
                pts.push_back(p);
            }
        vertices_ = detail::convex_hull(std::move(pts));
    }

    std::vector<HalfPlane> planes_;
    std::vector<Point2> vertices_;
    std::string label_;
};

/// Support function of a polytope: max over vertices of alpha x + (1 - alpha) y.
inline double c_alpha_of_polytope(const RegionPolytope& region, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
    if (region.empty()) throw ValidationError("empty region");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& v : region.vertices()) best = std::max(best, alpha * v.x + (1.0 - alpha) * v.y);
    return best;
}

/// Outer approximation of a region from sampled support values.
inline RegionPolytope region_from_support(const SupportCurve& curve, std::string label = "") {
    curve.validate();
    if (curve.samples.size() < 2 || curve.samples.front().first != 0.0 || curve.samples.back().first != 1.0)
        throw ValidationError("support curve needs at least 2 samples including alpha = 0 and alpha = 1");
    std::vector<HalfPlane> planes;
    for (const auto& [a, v] : curve.samples) planes.push_back({a, v});
    return RegionPolytope(std::move(planes), std::move(label));
}

inline SupportCurve support_curve(const RegionPolytope& region, const std::vector<double>& alphas) {
    SupportCurve curve;
    for (double a : alphas) curve.samples.emplace_back(a, c_alpha_of_polytope(region, a));
    curve.validate();
    return curve;
}

namespace detail {

inline double segment_distance(const Point2& p, const Point2& a, const Point2& b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

/// Distance from a point to a convex polygon given counter-clockwise.
inline double polygon_distance(const Point2& p, const std::vector<Point2>& poly) {
    if (poly.size() == 1) return std::hypot(p.x - poly[0].x, p.y - poly[0].y);
    if (poly.size() >= 3) {
        bool inside = true;
        for (std::size_t i = 0; i < poly.size() && inside; ++i)
            inside = cross(poly[i], poly[(i + 1) % poly.size()], p) >= -1e-12;
        if (inside) return 0.0;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < poly.size(); ++i)
        best = std::min(best, segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
    return best;
}

}  // namespace detail

/// Hausdorff distance between two convex polygons. The distance to a convex
/// set is convex, so the supremum over a polygon is attained at a vertex.
inline double hausdorff_distance(const RegionPolytope& a, const RegionPolytope& b) {
    if (a.empty() || b.empty()) throw ValidationError("empty region");
    double d = 0.0;
    for (const auto& p : a.vertices()) d = std::max(d, detail::polygon_distance(p, b.vertices()));
    for (const auto& p : b.vertices()) d = std::max(d, detail::polygon_distance(p, a.vertices()));
    return d;
}

inline double diameter(const RegionPolytope& r) {
    double d = 0.0;
    for (const auto& p : r.vertices())
        for (const auto& q : r.vertices()) d = std::max(d, std::hypot(p.x - q.x, p.y - q.y));
    return d;
}

// ---------------------------------------------------------------------------
// Optimizer over products of simplices

struct OptimizerConfig {
    std::size_t grid = 21;               ///< lattice points per free coordinate and line-search points
    std::size_t sweeps = 8;              ///< coordinate-ascent sweeps per start
    std::size_t restarts = 16;           ///< lattice starts and random starts, each
    std::uint64_t seed = 0;
    std::size_t max_grid_evals = 200000;  ///< full lattice enumeration limit
    std::size_t lattice_samples = 4096;   ///< random lattice points when the lattice is larger

    void validate() const {
        if (grid < 2) throw ValidationError("optimizer grid needs at least 2 points");
    }
};

using SimplexPoint = std::vector<std::vector<double>>;

struct OptimizerResult {
    double value = 0.0;
    SimplexPoint point;
    std::size_t start_index = 0;
    std::string start_kind;
    std::size_t starts = 0;
    std::size_t evaluations = 0;
    double last_sweep_gain = 0.0;  ///< improvement of the winning start's final sweep
    std::string bound_kind = "lower_bound";
};

namespace detail {

inline double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::vector<double> random_simplex(std::size_t d, std::mt19937_64& rng) {
    std::vector<double> p(d);
    double s = 0.0;
    for (auto& v : p) {
        v = -std::log(1.0 - unit_double(rng));
        s += v;
    }
    for (auto& v : p) v /= s;
    return p;
}

/// All compositions of `total` into d parts, lexicographic.
inline void compositions(std::size_t d, std::size_t total, std::vector<std::vector<std::size_t>>& out) {
    std::vector<std::size_t> cur(d, 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t pos, std::size_t left) {
        if (pos + 1 == d) {
            cur[pos] = left;
            out.push_back(cur);
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            cur[pos] = v;
            rec(pos + 1, left - v);
        }
    };
    if (d == 0) return;
    rec(0, total);
}

inline double binom(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

struct AscentOutcome {
    double value = 0.0;
    SimplexPoint point;
    std::size_t evaluations = 0;
    double last_gain = 0.0;
};

inline AscentOutcome coordinate_ascent(const std::function<double(const SimplexPoint&)>& f, SimplexPoint p,
                                       const OptimizerConfig& cfg) {
    AscentOutcome out;
    double cur = f(p);
    out.evaluations = 1;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
        const double start = cur;
        for (std::size_t b = 0; b < p.size(); ++b) {
            const std::size_t d = p[b].size();
            if (d < 2) continue;
            for (std::size_t j = 0; j < d; ++j) {
                const double pj = p[b][j];
                if (pj >= 1.0 - 1e-15) continue;
                const std::vector<double> base = p[b];
                const double t_lo = -pj / (1.0 - pj);
                auto at = [&](double t) {
                    SimplexPoint q = p;
                    double s = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        const double e = k == j ? 1.0 : 0.0;
                        q[b][k] = std::max(0.0, base[k] + t * (e - base[k]));
                        s += q[b][k];
                    }
                    for (auto& v : q[b]) v /= s;
                    return q;
                };
                auto eval = [&](double t) {
                    ++out.evaluations;
                    return f(at(t));
                };
                const std::size_t G = cfg.grid;
                std::vector<double> ts(G), vs(G);
                std::size_t best = 0;
                for (std::size_t g = 0; g < G; ++g) {
                    ts[g] = t_lo + (1.0 - t_lo) * static_cast<double>(g) / static_cast<double>(G - 1);
                    vs[g] = eval(ts[g]);
                    if (vs[g] > vs[best]) best = g;
                }
                double lo = ts[best == 0 ? 0 : best - 1], hi = ts[best + 1 == G ? G - 1 : best + 1];
                double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
                double f1 = eval(x1), f2 = eval(x2);
                for (int it = 0; it < 40; ++it) {
                    if (f1 < f2) {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = eval(x2);
                    } else {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = eval(x1);
                    }
                }
                double bt = ts[best], bv = vs[best];
                if (f1 > bv) bt = x1, bv = f1;
                if (f2 > bv) bt = x2, bv = f2;
                if (bv > cur + 1e-15) {
                    p = at(bt);
                    cur = bv;
                }
            }
        }
        out.last_gain = cur - start;
        if (out.last_gain <= 1e-13) break;
    }
    out.value = cur;
    out.point = std::move(p);
    return out;
}

}  // namespace detail

/// Maximizes f over a product of probability simplices with the given
/// dimensions. Starts: the uniform point, injected seeds, the best lattice
/// points and seeded random points; each is refined by coordinate ascent
/// along lines toward the simplex vertices. The result is the best value
/// found, so it is a lower bound on the true maximum.
inline OptimizerResult maximize_on_simplices(const std::vector<std::size_t>& dims,
                                             const std::function<double(const SimplexPoint&)>& f,
                                             const OptimizerConfig& cfg, const std::vector<SimplexPoint>& seeds = {}) {
    cfg.validate();
    for (std::size_t d : dims)
        if (d == 0) throw ValidationError("simplex dimension must be positive");
    std::vector<SimplexPoint> starts;
    std::vector<std::string> kinds;
    SimplexPoint uniform;
    for (std::size_t d : dims) uniform.emplace_back(d, 1.0 / static_cast<double>(d));
    starts.push_back(uniform);
    kinds.push_back("uniform");
    for (const auto& s : seeds) {
        if (s.size() != dims.size()) throw ValidationError("seed point has the wrong number of blocks");
        for (std::size_t b = 0; b < dims.size(); ++b) {
            if (s[b].size() != dims[b]) throw ValidationError("seed point block has the wrong dimension");
            detail::check_distribution(s[b], "seed point block");
        }
        starts.push_back(s);
        kinds.push_back("seed");
    }

    // Lattice seeding.
    const std::size_t steps = cfg.grid - 1;
    std::vector<std::vector<std::vector<std::size_t>>> block_lattice(dims.size());
    double lattice_size = 1.0;
    for (std::size_t b = 0; b < dims.size(); ++b) lattice_size *= detail::binom(steps + dims[b] - 1, dims[b] - 1);
    std::vector<SimplexPoint> lattice;
    auto to_point = [&](const std::vector<const std::vector<std::size_t>*>& parts) {
        SimplexPoint p;
        for (const auto* c : parts) {
            std::vector<double> v;
            for (std::size_t x : *c) v.push_back(static_cast<double>(x) / static_cast<double>(steps));
            p.push_back(std::move(v));
        }
        return p;
    };
    if (lattice_size <= static_cast<double>(cfg.max_grid_evals)) {
        for (std::size_t b = 0; b < dims.size(); ++b) detail::compositions(dims[b], steps, block_lattice[b]);
        std::vector<std::size_t> idx(dims.size(), 0);
        const auto total = static_cast<std::size_t>(lattice_size);
        lattice.reserve(total);
        for (std::size_t n = 0; n < total; ++n) {
            std::vector<const std::vector<std::size_t>*> parts;
            for (std::size_t b = 0; b < dims.size(); ++b) parts.push_back(&block_lattice[b][idx[b]]);
            lattice.push_back(to_point(parts));
            for (std::size_t b = dims.size(); b-- > 0;) {
                if (++idx[b] < block_lattice[b].size()) break;
                idx[b] = 0;
            }
        }
    } else {
        std::mt19937_64 rng(mix_seed(cfg.seed, 0x1a77ce));
        for (std::size_t n = 0; n < cfg.lattice_samples; ++n) {
            SimplexPoint p;
            for (std::size_t d : dims) {
                // Random composition of `steps` into d parts via sorted cut points.
                std::vector<std::size_t> cuts;
                for (std::size_t k = 0; k + 1 < d; ++k) cuts.push_back(rng() % (steps + 1));
                std::sort(cuts.begin(), cuts.end());
                std::vector<double> v;
                std::size_t prev = 0;
                for (std::size_t c : cuts) {
                    v.push_back(static_cast<double>(c - prev) / static_cast<double>(steps));
                    prev = c;
                }
                v.push_back(static_cast<double>(steps - prev) / static_cast<double>(steps));
                p.push_back(std::move(v));
            }
            lattice.push_back(std::move(p));
        }
    }
    std::vector<double> lattice_val(lattice.size());
    parallel_for(lattice.size(), [&](std::size_t i) { lattice_val[i] = f(lattice[i]); });
    std::vector<std::size_t> order(lattice.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t top = std::min(cfg.restarts, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          return lattice_val[a] > lattice_val[b] || (lattice_val[a] == lattice_val[b] && a < b);
                      });
    for (std::size_t i = 0; i < top; ++i) {
        starts.push_back(lattice[order[i]]);
        kinds.push_back("lattice");
    }
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        std::mt19937_64 rng(mix_seed(cfg.seed, r));
        SimplexPoint p;
        for (std::size_t d : dims) p.push_back(detail::random_simplex(d, rng));
        starts.push_back(std::move(p));
        kinds.push_back("random");
    }

    std::vector<detail::AscentOutcome> outcomes(starts.size());
    parallel_for(starts.size(), [&](std::size_t i) { outcomes[i] = detail::coordinate_ascent(f, starts[i], cfg); });

    OptimizerResult res;
    res.starts = starts.size();
    res.evaluations = lattice.size();
    std::size_t best = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        res.evaluations += outcomes[i].evaluations;
        if (outcomes[i].value > outcomes[best].value) best = i;
    }
    res.value = outcomes[best].value;
    res.point = outcomes[best].point;
    res.start_index = best;
    res.start_kind = kinds[best];
    res.last_sweep_gain = outcomes[best].last_gain;
    return res;
}

// ---------------------------------------------------------------------------
// MAC support function without cooperation

namespace detail {

inline double entropy_of(const double* p, std::size_t n) {
    double h = 0.0;
    for (std::size_t i = 0; i < n; ++i) h += plogp(p[i]);
    return h;
}

/// Conditional entropies of a product input: H(Y), H(Y|X1), H(Y|X2), H(Y|X1,X2).
struct ProductEntropies {
    double hy = 0.0, hy_x1 = 0.0, hy_x2 = 0.0, hy_x1x2 = 0.0;
};

inline ProductEntropies product_entropies(const DiscreteMAC& mac, std::span<const double> p1,
                                          std::span<const double> p2) {
    const std::size_t A = mac.x1_size(), B = mac.x2_size(), Y = mac.y_size();
    const auto& W = mac.tensor();
    ProductEntropies e;
    std::vector<double> py(Y, 0.0), tmp(Y);
    std::vector<double> py_x2(B * Y, 0.0);
    for (std::size_t a = 0; a < A; ++a) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            const double* row = &W[(a * B + b) * Y];
            const double w = p2[b];
            for (std::size_t y = 0; y < Y; ++y) {
                tmp[y] += w * row[y];
                py_x2[b * Y + y] += p1[a] * row[y];
            }
            if (!mac.deterministic()) e.hy_x1x2 += p1[a] * w * entropy_of(row, Y);
        }
        e.hy_x1 += p1[a] * entropy_of(tmp.data(), Y);
        for (std::size_t y = 0; y < Y; ++y) py[y] += p1[a] * tmp[y];
    }
    for (std::size_t b = 0; b < B; ++b) e.hy_x2 += p2[b] * entropy_of(&py_x2[b * Y], Y);
    e.hy = entropy_of(py.data(), Y);
    return e;
}

/// Support value of the pentagon of one product input.
inline double pentagon_support(const ProductEntropies& e, double alpha) {
    if (alpha <= 0.5) {
        const double i1 = e.hy - e.hy_x1;        // I(X1;Y)
        const double i2 = e.hy_x1 - e.hy_x1x2;   // I(X2;Y|X1)
        return alpha * i1 + (1.0 - alpha) * i2;
    }
    const double i1 = e.hy_x2 - e.hy_x1x2;  // I(X1;Y|X2)
    const double i2 = e.hy - e.hy_x2;       // I(X2;Y)
    return alpha * i1 + (1.0 - alpha) * i2;
}

inline void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
}

}  // namespace detail

/// Value of the no-cooperation objective at a given product input.
inline double mac_calpha_objective(const DiscreteMAC& mac, double alpha, std::span<const double> p1,
                                   std::span<const double> p2) {
    detail::check_alpha(alpha);
    return detail::pentagon_support(detail::product_entropies(mac, p1, p2), alpha);
}

/// Average-error support function of the MAC without cooperation, maximized
/// over product inputs. The value is a lower bound on the true C^alpha.
inline OptimizerResult mac_avg_calpha(const DiscreteMAC& mac, double alpha, const OptimizerConfig& cfg = {},
                                      const std::vector<SimplexPoint>& seeds = {}) {
    detail::check_alpha(alpha);
    auto f = [&](const SimplexPoint& p) { return mac_calpha_objective(mac, alpha, p[0], p[1]); };
    return maximize_on_simplices({mac.x1_size(), mac.x2_size()}, f, cfg, seeds);
}

// ---------------------------------------------------------------------------
// Dueck's contraction MAC

/// Maximizer of the maximal-error outer bound; 0 at alpha = 1 by continuity.
inline double dueck_pstar(double alpha) {
    detail::check_alpha(alpha);
    if (alpha >= 1.0) return 0.0;
    const double r = alpha / (1.0 - alpha);
    const double t = std::exp2(-r);
    return t / (1.0 + t);
}

/// Outer bound on the maximal-error support function of the contraction MAC:
/// alpha (log 3 - 1) + (1 - alpha) log(1 + 2^{alpha/(1-alpha)}), evaluated as
/// alpha log 3 + (1 - alpha) log(1 + 2^{-alpha/(1-alpha)}) to avoid overflow.
inline double dueck_max_upper(double alpha) {
    detail::check_alpha(alpha);
    if (alpha >= 1.0) return std::log2(3.0);
    const double r = alpha / (1.0 - alpha);
    return alpha * std::log2(3.0) + (1.0 - alpha) * std::log1p(std::exp2(-r)) / std::numbers::ln2;
}

/// Inner bound on the average-error support function of the contraction MAC.
inline double dueck_avg_lower(double alpha) {
    const double p = dueck_pstar(alpha);
    return (1.0 - alpha) * binary_entropy(p) + alpha * (std::log2(3.0) - p / 3.0);
}

/// The product input that attains dueck_avg_lower: q = p*,
/// p_A = p_B = 1/3, p_a = p_b = 1/6 (alphabet order of contraction_mac()).
inline SimplexPoint dueck_witness_input(double alpha) {
    const double q = dueck_pstar(alpha);
    return {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0}, {1.0 - q, q}};
}

struct DueckRow {
    double alpha = 0.0, pstar = 0.0, lower = 0.0, upper = 0.0, gap = 0.0;
    bool ok = true;  ///< gap > 0 inside (0,1), gap ~ 0 at the endpoints
};

inline std::vector<DueckRow> dueck_gap_report(const std::vector<double>& alphas, double endpoint_tol = 1e-9) {
    std::vector<DueckRow> rows;
    for (double a : alphas) {
        DueckRow r;
        r.alpha = a;
        r.pstar = dueck_pstar(a);
        r.lower = dueck_avg_lower(a);
        r.upper = dueck_max_upper(a);
        r.gap = r.lower - r.upper;
        r.ok = (a == 0.0 || a == 1.0) ? std::abs(r.gap) <= endpoint_tol : r.gap > 0.0;
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Conferencing encoders

/// Mutual informations of one p(u)p(x1|u)p(x2|u):
/// I(X1;Y|U,X2), I(X2;Y|U,X1), I(X1,X2;Y|U), I(X1,X2;Y).
struct WillemsTerms {
    double i1 = 0.0, i2 = 0.0, i3 = 0.0, i4 = 0.0;
};

inline WillemsTerms willems_terms(const DiscreteMAC& mac, const SimplexPoint& p) {
    const std::size_t U = p[0].size();
    const std::size_t Y = mac.y_size();
    WillemsTerms t;
    std::vector<double> py(Y, 0.0);
    const auto& W = mac.tensor();
    const std::size_t A = mac.x1_size(), B = mac.x2_size();
    for (std::size_t u = 0; u < U; ++u) {
        const double pu = p[0][u];
        if (pu <= 0.0) continue;
        const auto& p1 = p[1 + u];
        const auto& p2 = p[1 + U + u];
        const auto e = detail::product_entropies(mac, p1, p2);
        t.i1 += pu * (e.hy_x2 - e.hy_x1x2);
        t.i2 += pu * (e.hy_x1 - e.hy_x1x2);
        t.i3 += pu * (e.hy - e.hy_x1x2);
        t.i4 -= pu * e.hy_x1x2;
        for (std::size_t a = 0; a < A; ++a)
            for (std::size_t b = 0; b < B; ++b) {
                const double w = pu * p1[a] * p2[b];
                if (w == 0.0) continue;
                const double* row = &W[(a * B + b) * Y];
                for (std::size_t y = 0; y < Y; ++y) py[y] += w * row[y];
            }
    }
    t.i4 += detail::entropy_of(py.data(), Y);
    return t;
}

/// Maximum of alpha R1 + (1 - alpha) R2 over the Willems region of one
/// distribution: {R1 <= a, R2 <= b, R1 + R2 <= s} with
/// a = C12 + min(I1, I3), b = C21 + min(I2, I3), s = min(C12 + C21 + I3, I4).
/// Filling the heavier coordinate first is optimal on this polytope.
inline double willems_support(const WillemsTerms& t, double c12, double c21, double alpha) {
    const double a = c12 + std::min(t.i1, t.i3);
    const double b = c21 + std::min(t.i2, t.i3);
    const double s = std::max(0.0, std::min(c12 + c21 + t.i3, t.i4));
    double r1, r2;
    if (alpha >= 0.5) {
        r1 = std::min(a, s);
        r2 = std::min(b, s - r1);
    } else {
        r2 = std::min(b, s);
        r1 = std::min(a, s - r2);
    }
    return alpha * r1 + (1.0 - alpha) * r2;
}

namespace detail {

inline std::vector<std::size_t> willems_dims(const DiscreteMAC& mac, std::size_t u_card) {
    if (u_card < 1) throw ValidationError("auxiliary cardinality must be at least 1");
    std::vector<std::size_t> dims{u_card};
    for (std::size_t u = 0; u < u_card; ++u) dims.push_back(mac.x1_size());
    for (std::size_t u = 0; u < u_card; ++u) dims.push_back(mac.x2_size());
    return dims;
}

inline void check_links(double c12, double c21) {
    if (!(c12 >= 0.0) || !(c21 >= 0.0) || !std::isfinite(c12) || !std::isfinite(c21))
        throw ValidationError("conferencing capacities must be finite and nonnegative");
}

}  // namespace detail

/// Average-error support function with (C12, C21)-conferencing, maximized over
/// p(u)p(x1|u)p(x2|u) with |U| fixed. Points are laid out as
/// [p(u), p(x1|u=0..U-1), p(x2|u=0..U-1)]. The value is a lower bound.
inline OptimizerResult conferencing_calpha(const DiscreteMAC& mac, double c12, double c21, double alpha,
                                           std::size_t u_card = 4, const OptimizerConfig& cfg = {},
                                           const std::vector<SimplexPoint>& seeds = {}) {
    detail::check_alpha(alpha);
    detail::check_links(c12, c21);
    auto f = [&](const SimplexPoint& p) { return willems_support(willems_terms(mac, p), c12, c21, alpha); };
    return maximize_on_simplices(detail::willems_dims(mac, u_card), f, cfg, seeds);
}

struct RStar {
    double r1 = 0.0, r2 = 0.0;
    OptimizerResult opt1, opt2;
};

/// Largest single-user rates with conferencing:
/// R1* = max min{I(X1;Y|U,X2) + C12, I(X1,X2;Y)}, R2* symmetric.
inline RStar rstar(const DiscreteMAC& mac, double c12, double c21, std::size_t u_card = 4,
                   const OptimizerConfig& cfg = {}) {
    detail::check_links(c12, c21);
    const auto dims = detail::willems_dims(mac, u_card);
    RStar r;
    r.opt1 = maximize_on_simplices(
        dims,
        [&](const SimplexPoint& p) {
            const auto t = willems_terms(mac, p);
            return std::min(t.i1 + c12, t.i4);
        },
        cfg);
    r.opt2 = maximize_on_simplices(
        dims,
        [&](const SimplexPoint& p) {
            const auto t = willems_terms(mac, p);
            return std::min(t.i2 + c21, t.i4);
        },
        cfg);
    r.r1 = r.opt1.value;
    r.r2 = r.opt2.value;
    return r;
}

struct ContinuityRow {
    double c12 = 0.0, c21 = 0.0;
    double value = 0.0;       ///< C^alpha(c12, c21)
    double value_c12_0 = 0.0;  ///< C^alpha(c12, 0)
    double value_0_c21 = 0.0;  ///< C^alpha(0, c21)
    double two2zero_rhs = 0.0;  ///< C^alpha(c12, 0) + (1 - alpha) c21
    double one2zero_rhs = 0.0;  ///< C^alpha(0, c21) + alpha c12
    bool two2zero_ok = true, one2zero_ok = true;
    double offset = 0.0;  ///< (c12 + c21) / 2, the maximal-error offset for alpha = 1/2
};

struct ContinuityReport {
    double alpha = 0.0;
    double tau = 0.0;
    std::size_t u_card = 0;
    std::vector<ContinuityRow> rows;
    bool all_ok = true;
};

/// Checks C(c12,c21) <= C(c12,0) + (1-alpha) c21 and C(c12,c21) <= C(0,c21) + alpha c12
/// up to tau, with every value from the same optimizer configuration.
inline ContinuityReport continuity_checks(const DiscreteMAC& mac, const std::vector<std::pair<double, double>>& grid,
                                          double alpha, std::size_t u_card = 4, const OptimizerConfig& cfg = {},
                                          double tau = 0.02) {
    detail::check_alpha(alpha);
    if (!(tau > 0.0)) throw ValidationError("tolerance must be positive");
    ContinuityReport rep;
    rep.alpha = alpha;
    rep.tau = tau;
    rep.u_card = u_card;
    std::map<std::pair<double, double>, double> cache;
    auto value = [&](double a, double b) {
        const auto key = std::pair{a, b};
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        const double v = conferencing_calpha(mac, a, b, alpha, u_card, cfg).value;
        cache.emplace(key, v);
        return v;
    };
    for (const auto& [c12, c21] : grid) {
        detail::check_links(c12, c21);
        ContinuityRow r;
        r.c12 = c12;
        r.c21 = c21;
        r.value = value(c12, c21);
        r.value_c12_0 = value(c12, 0.0);
        r.value_0_c21 = value(0.0, c21);
        r.two2zero_rhs = r.value_c12_0 + (1.0 - alpha) * c21;
        r.one2zero_rhs = r.value_0_c21 + alpha * c12;
        r.two2zero_ok = r.value <= r.two2zero_rhs + tau;
        r.one2zero_ok = r.value <= r.one2zero_rhs + tau;
        r.offset = 0.5 * (c12 + c21);
        rep.all_ok = rep.all_ok && r.two2zero_ok && r.one2zero_ok;
        rep.rows.push_back(r);
    }
    return rep;
}

}  // namespace maccoop
