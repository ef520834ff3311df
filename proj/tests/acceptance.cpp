// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace maccoop;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

oracle::Matrix as_matrix(const ErrorMatrix& em) {
    oracle::Matrix m(em.rows(), std::vector<double>(em.cols()));
    for (std::size_t i = 0; i < em.rows(); ++i)
        for (std::size_t j = 0; j < em.cols(); ++j) m[i][j] = em(i, j);
    return m;
}

std::vector<std::vector<int>> to_rows(const ZeroOneMatrix& a) {
    std::vector<std::vector<int>> r(a.rows(), std::vector<int>(a.cols()));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r[i][j] = a(i, j);
    return r;
}

Outcome dueck_gap() {
    Outcome o;
    const double gap = dueck_avg_lower(0.5) - dueck_max_upper(0.5);
    o.require(std::abs(gap - 1.0 / 9.0) <= 1e-9, "gap at 1/2 is " + fmt(gap));
    const double alt = 0.5 * binary_entropy(1.0 / 3.0) + 0.5 * (std::log2(3.0) - 1.0 / 3.0);
    o.require(std::abs(dueck_max_upper(0.5) - alt) <= 1e-12, "upper-bound forms disagree");
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) grid.push_back(i / 20.0);
    for (const auto& r : dueck_gap_report(grid)) {
        if (r.alpha == 0.0 || r.alpha == 1.0)
            o.require(std::abs(r.gap) <= 1e-9, "endpoint gap " + fmt(r.gap) + " at alpha " + fmt(r.alpha));
        else
            o.require(r.gap > 0.0, "nonpositive gap at alpha " + fmt(r.alpha));
    }
    o.detail = o.ok ? "gap(1/2) = " + fmt(gap) : o.detail;
    return o;
}

Outcome contraction_witness() {
    Outcome o;
    const auto res = mac_avg_calpha(contraction_mac(), 0.5, {}, {dueck_witness_input(0.5)});
    o.require(res.value >= 1.19607 - 1e-6, "value " + fmt(res.value) + " below the witness");
    o.require(res.value >= dueck_max_upper(0.5) + 0.11, "value " + fmt(res.value) + " not above upper + 0.11");
    if (o.ok) o.detail = "C^1/2 >= " + fmt(res.value);
    return o;
}

Outcome adder_sanity() {
    Outcome o;
    const double v = mac_avg_calpha(binary_adder_mac(), 0.5).value;
    const double want = 0.5 * oracle::entropy({0.25, 0.5, 0.25});
    o.require(std::abs(v - want) <= 0.01, "value " + fmt(v));
    if (o.ok) o.detail = "C^1/2 = " + fmt(v);
    return o;
}

Outcome block_zero_suite() {
    Outcome o;
    std::mt19937_64 rng(2024);
    std::size_t found = 0, small = 0, tried = 0;
    while (tried < 200) {
        const std::size_t m = 2 + rng() % 11, n = 2 + rng() % 11;
        const std::size_t k = 1 + rng() % std::min<std::size_t>(4, std::min(m, n));
        const double density = std::uniform_real_distribution<double>(0.0, 0.15)(rng);
        std::vector<std::uint8_t> bits(m * n);
        for (auto& b : bits) b = std::bernoulli_distribution(density)(rng) ? 1 : 0;
        const ZeroOneMatrix a(m, n, bits);
        if (existence_bound(m, n, k, a.ones()) >= 1.0) continue;
        ++tried;
        PermSearchOptions opt;
        opt.seed = tried;
        const auto r = find_permutations(a, k, opt);
        if (!r.found) {
            o.require(false, "search failed on a certified " + std::to_string(m) + "x" + std::to_string(n) +
                                 " instance with k = " + std::to_string(k));
            continue;
        }
        ++found;
        if (m <= 6 && n <= 6) {
            ++small;
            const auto rows = to_rows(a);
            o.require(oracle::blocks_have_zero(rows, k, r.perm1, r.perm2), "oracle rejects a found pair");
            o.require(oracle::zero_in_every_block_exists(rows, k), "oracle finds no valid pair");
        }
    }
    if (o.ok) o.detail = std::to_string(found) + "/200 found, " + std::to_string(small) + " oracle-confirmed";
    return o;
}

Outcome spectrum_endpoints() {
    Outcome o;
    std::mt19937_64 rng(77);
    std::size_t brute = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m1 = 1 + rng() % 8, m2 = 1 + rng() % 8;
        std::vector<std::vector<double>> rows(m1, std::vector<double>(m2));
        for (auto& r : rows)
            for (auto& v : r) v = std::uniform_real_distribution<double>(0, 1)(rng);
        const auto em = ErrorMatrix::from_rows(rows);
        const int n = 1 + static_cast<int>(rng() % 3);
        const auto zero = blockwise_error(em, ErrorProfileQuery::make(0, 0, n, m1, m2), BlockwiseMode::Exact);
        o.require(std::abs(zero.value - avg_error(em)) <= 1e-12, "r = 0 differs from the mean");
        const auto big = blockwise_error(em, ErrorProfileQuery::make(10, 10, n, m1, m2), BlockwiseMode::Exact);
        o.require(big.value == max_error(em), "large r differs from the maximum");
        if (m1 <= 5 && m2 <= 5) {
            ++brute;
            const double r1 = std::uniform_real_distribution<double>(0, 3.0 / n)(rng);
            const double r2 = std::uniform_real_distribution<double>(0, 3.0 / n)(rng);
            const auto q = ErrorProfileQuery::make(r1, r2, n, m1, m2);
            const auto ex = blockwise_error(em, q, BlockwiseMode::Exact);
            const double want = oracle::blockwise_min_max(rows, q.k[0], q.k[1]);
            o.require(std::abs(ex.value - want) <= 1e-12, "exact mode disagrees with brute force");
        }
    }
    if (o.ok) o.detail = "100 matrices, " + std::to_string(brute) + " brute-force comparisons";
    return o;
}

Outcome theorem1_end_to_end() {
    Outcome o;
    const auto mac = fixtures::identity_mac();
    const auto code = fixtures::planted_code(mac);
    const double delta = 0.2;
    const auto plan = plan_theorem1(code, mac, 1.0, 1.0, delta);
    const auto out = apply_theorem1(plan, code);
    const auto q = ErrorProfileQuery::make(1.0, 1.0, code.n, out.m1(), out.m2());
    const auto rep = verify_transform(code, out, mac, q, &plan);
    const double limit = std::exp(3.0) * plan.epsilon;
    const double brute = oracle::blockwise_min_max(as_matrix(error_matrix(out, mac)), q.k[0], q.k[1]);
    o.require(rep.blockwise.bound_kind == "exact", "blockwise value is not exact");
    o.require(rep.blockwise.value <= limit, "blockwise " + fmt(rep.blockwise.value) + " > e^3 eps");
    o.require(brute <= limit, "brute-force blockwise above e^3 eps");
    o.require(rep.certificate == "pass", "certificate " + rep.certificate);
    o.require(rep.rate_loss_ok && rep.rate_loss[0] <= 2 * delta && rep.rate_loss[1] <= 2 * delta,
              "rate loss " + fmt(rep.rate_loss[0]) + " exceeds 2 delta");
    o.require(rep.cf_budget_ok, "CF bits exceed the inflated budget");
    if (o.ok)
        o.detail = "K* = " + std::to_string(plan.k_star) + ", blockwise " + fmt(rep.blockwise.value) + " <= " +
                   fmt(limit) + ", rate loss " + fmt(rep.rate_loss[0]);
    return o;
}

Outcome prop3_end_to_end() {
    Outcome o;
    const auto mac = fixtures::random_mac(7, 2, 2, 3);
    const auto code = fixtures::conferencing_toy(mac, 107, 2);
    const auto plan = plan_prop3(code, mac, 1.0, 1.0);
    o.require(plan.k[0] == 4 && plan.k[1] == 4, "K is not 4");
    const auto out = apply_prop3(plan, code);
    const auto et = error_matrix(out, mac);
    const auto q = ErrorProfileQuery::make(1.0, 1.0, code.n, out.m1(), out.m2());
    std::vector<std::size_t> id(out.m1());
    std::iota(id.begin(), id.end(), 0);
    const double worst = max_block_average(et, q, id, id).first;
    const double eps = avg_error(error_matrix(code, mac));
    o.require(worst <= 4.0 * eps / 3.0 + 1e-12, "max block average " + fmt(worst) + " > 4 eps / 3");
    if (o.ok) o.detail = "max block average " + fmt(worst) + " <= " + fmt(4.0 * eps / 3.0);
    return o;
}

Outcome region_round_trip() {
    Outcome o;
    std::mt19937_64 rng(99);
    std::vector<double> alphas;
    for (int i = 0; i <= 40; ++i) alphas.push_back(i / 40.0);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Point2> pts;
        const std::size_t n = 1 + rng() % 8;
        for (std::size_t i = 0; i < n; ++i)
            pts.push_back({std::uniform_real_distribution<double>(0, 3)(rng), std::uniform_real_distribution<double>(0, 3)(rng)});
        const auto poly = RegionPolytope::from_vertices(pts);
        const auto curve = support_curve(poly, alphas);
        const auto region = region_from_support(curve);
        const double d = hausdorff_distance(region, poly), diam = diameter(poly);
        worst = std::max(worst, diam > 0 ? d / diam : d);
        o.require(d <= 0.02 * diam + 1e-12, "Hausdorff " + fmt(d) + " > 0.02 diameter");
        for (const auto& [a, c] : curve.samples)
            o.require(std::abs(c_alpha_of_polytope(region, a) - c) <= 1e-9, "support round trip off");
    }
    if (o.ok) o.detail = "worst Hausdorff / diameter " + fmt(worst);
    return o;
}

Outcome continuity() {
    Outcome o;
    std::vector<std::pair<double, double>> grid;
    for (double a : {0.0, 0.25, 0.5})
        for (double b : {0.0, 0.25, 0.5}) grid.push_back({a, b});
    double slack = -1e9;
    for (double alpha : {0.25, 0.5, 0.75}) {
        const auto rep = continuity_checks(binary_adder_mac(), grid, alpha, 4, {}, 0.02);
        o.require(rep.all_ok, "inequality violated at alpha " + fmt(alpha));
        for (const auto& r : rep.rows) slack = std::max({slack, r.value - r.two2zero_rhs, r.value - r.one2zero_rhs});
    }
    if (o.ok) o.detail = "largest lhs - rhs " + fmt(slack);
    return o;
}

std::string run_cli(const std::vector<std::string>& args, const std::string& threads, int& status) {
    std::string cmd = "MACCOOP_THREADS=" + threads + " '" + std::string(MACCOOP_CLI) + "'";
    for (const auto& a : args) cmd += " '" + a + "'";
    cmd += " 2>/dev/null";
    std::string out;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) {
        status = -1;
        return out;
    }
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, got);
    status = pclose(p);
    return out;
}

Outcome reproducibility() {
    Outcome o;
    const std::string data = MACCOOP_DATA_DIR;
    const auto tmp = std::filesystem::temp_directory_path() / "maccoop_acceptance_matrix.txt";
    {
        std::mt19937_64 rng(5);
        std::ofstream f(tmp);
        for (int i = 0; i < 12; ++i) {
            for (int j = 0; j < 12; ++j) f << (rng() % 5 == 0 ? 1 : 0) << (j + 1 < 12 ? " " : "\n");
        }
    }
    const std::vector<std::vector<std::string>> commands{
        {"--seed", "1", "capacity", "dueck", "--alphas", "0:1:0.1"},
        {"--seed", "2", "capacity", "calpha", "--channel", "contraction", "--alpha", "0.5"},
        {"--seed", "3", "capacity", "calpha", "--channel", "adder", "--alpha", "0.3", "--conf", "0.25", "0.25"},
        {"--seed", "4", "--restarts", "4", "capacity", "region", "--channel", "adder", "--alphas", "0:1:0.25"},
        {"--seed", "5", "--restarts", "4", "capacity", "continuity", "--channel", "adder", "--caps", "0,0.5"},
        {"--seed", "6", "perm", "search", "--matrix", tmp.string(), "--k", "3"},
        {"--seed", "7", "code", "eval", "--channel", data + "/identity.json", "--code", data + "/planted_code.json",
         "--r1", "1", "--r2", "1"},
        {"--seed", "8", "transform", "thm1", "--channel", data + "/identity.json", "--code",
         data + "/planted_code.json", "--r1", "1", "--r2", "1", "--delta", "0.2"},
        {"--seed", "9", "transform", "prop3", "--channel", data + "/random_2x2x3.json", "--code",
         data + "/conferencing_code.json", "--c12", "1", "--c21", "1"},
        {"--seed", "10", "capacity", "rstar", "--channel", "adder", "--conf", "0.5", "0"},
    };
    for (const auto& args : commands) {
        int s1 = 0, s2 = 0, s3 = 0;
        const auto a = run_cli(args, "1", s1);
        const auto b = run_cli(args, "1", s2);
        const auto c = run_cli(args, "4", s3);
        const std::string name = args[2] == "--restarts" ? args[4] + " " + args[5] : args[2] + " " + args[3];
        o.require(!a.empty() && a.find("\"seed\"") != std::string::npos, name + ": no report");
        o.require(s1 == 0 && s2 == 0 && s3 == 0, name + ": nonzero exit");
        o.require(a == b, name + ": reruns differ");
        o.require(a == c, name + ": worker counts differ");
    }
    std::filesystem::remove(tmp);
    if (o.ok) o.detail = std::to_string(commands.size()) + " commands byte-identical for 1 and 4 workers";
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "contraction MAC gap", 1, dueck_gap},
        {2, "optimizer vs witness", 30, contraction_witness},
        {3, "adder MAC sanity", 10, adder_sanity},
        {4, "block-zero permutations", 60, block_zero_suite},
        {5, "error-spectrum endpoints", 120, spectrum_endpoints},
        {6, "average-to-blockwise transform", 60, theorem1_end_to_end},
        {7, "conferencing best quarter", 30, prop3_end_to_end},
        {8, "region round trip", 10, region_round_trip},
        {9, "conferencing continuity", 300, continuity},
        {10, "reproducibility", 600, reproducibility},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit_s) {
            o.ok = false;
            o.detail += " (over the " + fmt(c.limit_s) + " s limit)";
        }
        failures += o.ok ? 0 : 1;
        std::printf("%s criterion %d: %s: %s [%.2f s]\n", o.ok ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
