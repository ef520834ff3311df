#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "blockperm.hpp"
#include "capacity.hpp"
#include "channel.hpp"
#include "code.hpp"
#include "errors.hpp"
#include "report.hpp"
#include "transform.hpp"

namespace maccoop::cli {

using nlohmann::json;

/// Settings shared by every subcommand.
struct RunConfig {
    std::uint64_t seed = 0;
    double tolerance = 0.02;
    int max_enum_bits = kDefaultEnumBits;
    std::string format = "json";
    OptimizerConfig optimizer{};

    json to_json() const {
        return {{"seed", seed},
                {"tolerance", tolerance},
                {"max_enum_bits", max_enum_bits},
                {"format", format},
                {"optimizer",
                 {{"grid", optimizer.grid},
                  {"sweeps", optimizer.sweeps},
                  {"restarts", optimizer.restarts},
                  {"max_grid_evals", optimizer.max_grid_evals},
                  {"lattice_samples", optimizer.lattice_samples}}}};
    }
};

enum ExitCode : int { kOk = 0, kValidation = 1, kCertificate = 2, kUsage = 64 };

// ---------------------------------------------------------------------------
// Input helpers

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline json read_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
}

/// Builtin name ("contraction", "adder") or path to a channel JSON file.
inline DiscreteMAC load_channel(const std::string& spec) {
    if (spec == "contraction") return contraction_mac();
    if (spec == "adder") return binary_adder_mac();
    try {
        return channel_from_json(read_json_file(spec));
    } catch (const json::exception& e) {
        throw InputError(spec + ": " + e.what());
    }
}

inline CooperationCode load_code(const std::string& path) {
    try {
        return code_from_json(read_json_file(path));
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

/// JSON (array of rows or {"rows": [...]}) or text with one row of 0/1 per line.
inline ZeroOneMatrix load_matrix(const std::string& path) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
        try {
            json j = json::parse(text);
            if (j.is_object()) j = j.at("rows");
            return ZeroOneMatrix::from_rows(j.get<std::vector<std::vector<int>>>());
        } catch (const json::exception& e) {
            throw InputError(path + ": " + e.what());
        }
    }
    std::vector<std::vector<int>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<int> row;
        for (char ch : line) {
            if (ch == '0' || ch == '1')
                row.push_back(ch - '0');
            else if (!std::isspace(static_cast<unsigned char>(ch)) && ch != ',')
                throw InputError(path + ": unexpected character '" + std::string(1, ch) + "' in matrix");
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return ZeroOneMatrix::from_rows(rows);
}

/// "a:b:step" or a comma-separated list.
inline std::vector<double> parse_alphas(const std::string& spec) {
    std::vector<double> out;
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("cannot parse number '" + s + "'");
        }
    };
    if (std::count(spec.begin(), spec.end(), ':') == 2) {
        const auto p1 = spec.find(':'), p2 = spec.find(':', p1 + 1);
        const double a = number(spec.substr(0, p1)), b = number(spec.substr(p1 + 1, p2 - p1 - 1));
        const double step = number(spec.substr(p2 + 1));
        if (!(step > 0.0) || b < a) throw ValidationError("range needs step > 0 and end >= start");
        const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
        for (std::size_t i = 0; i <= count; ++i) out.push_back(std::min(b, a + static_cast<double>(i) * step));
        if (b - out.back() > 1e-9 * std::max(1.0, std::abs(b))) out.push_back(b);
        // Snap values that are an integer number of steps so 0.05 * 3 prints as 0.15.
        for (auto& v : out) v = std::round(v * 1e12) / 1e12;
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(number(item));
    }
    if (out.empty()) throw ValidationError("no values in '" + spec + "'");
    return out;
}

inline json envelope(const std::string& command, const RunConfig& cfg, json options) {
    json config = cfg.to_json();
    config["options"] = std::move(options);
    return {{"tool", kToolName}, {"version", kToolVersion}, {"command", command}, {"seed", cfg.seed},
            {"config", config}};
}

inline json pair_json(const std::array<double, 2>& a) { return json::array({a[0], a[1]}); }
inline json pair_json(const std::array<std::size_t, 2>& a) { return json::array({a[0], a[1]}); }

inline json query_json(const ErrorProfileQuery& q) {
    return {{"r", json::array({q.r1, q.r2})}, {"n", q.n}, {"k", pair_json(q.k)}, {"l", pair_json(q.l)}};
}

inline json blockwise_json(const BlockwiseResult& b) {
    return {{"value", b.value},
            {"bound_kind", b.bound_kind},
            {"witness", {{"perm1", b.perm1}, {"perm2", b.perm2}, {"block", pair_json(b.witness_block)}}},
            {"query", query_json(b.query)}};
}

inline json optimizer_json(const OptimizerResult& r) {
    return {{"value", r.value},
            {"bound_kind", r.bound_kind},
            {"point", r.point},
            {"start_kind", r.start_kind},
            {"start_index", r.start_index},
            {"starts", r.starts},
            {"evaluations", r.evaluations},
            {"last_sweep_gain", r.last_sweep_gain}};
}

inline json plan_json(const TransformPlan& p) {
    json j = {{"kind", p.kind},
              {"n", p.n},
              {"m", pair_json(p.m)},
              {"rate_measured", pair_json(p.rate_measured)},
              {"k", pair_json(p.k)},
              {"l", pair_json(p.l)},
              {"kept1", p.kept[0]},
              {"kept2", p.kept[1]},
              {"epsilon", p.epsilon},
              {"threshold", p.threshold},
              {"ones", p.a_matrix.ones()},
              {"search", p.search},
              {"certified", p.certified}};
    if (p.kind == "theorem1") {
        j["r_tilde"] = pair_json(p.r_tilde);
        j["delta"] = p.delta;
        j["k_star"] = p.k_star;
        j["k_star_max"] = p.k_star_max;
        j["k_star_policy"] = p.k_star_policy;
        j["k_star_blocks"] = pair_json(p.k_star_blocks);
        j["perm1"] = p.perm[0];
        j["perm2"] = p.perm[1];
        j["bound"] = p.bound;
        json good = json::array();
        for (const auto& g : p.good_entry) good.push_back(pair_json(g));
        j["designated_zero"] = good;
        j["added_round_bits"] = {{"up", pair_json(p.round1_up_bits)}, {"down", pair_json(p.round1_down_bits)}};
    } else if (p.conferencing) {
        json chosen = json::array();
        for (const auto& c : p.conferencing->chosen) chosen.push_back(pair_json(c));
        j["c12"] = p.conferencing->c12;
        j["c21"] = p.conferencing->c21;
        j["selected_blocks"] = chosen;
        j["block_averages"] = p.conferencing->block_avg;
        j["conferencing_form"] = p.conferencing->conferencing_form;
    }
    return j;
}

inline json transform_report_json(const TransformReport& r) {
    return {{"kind", r.kind},
            {"rate_before", pair_json(r.rate_before)},
            {"rate_kept", pair_json(r.rate_kept)},
            {"rate_after", pair_json(r.rate_after)},
            {"rate_loss", pair_json(r.rate_loss)},
            {"rate_loss_budget", r.rate_loss_budget},
            {"rate_loss_ok", r.rate_loss_ok},
            {"cf_bits", {{"up", pair_json(r.up_bits)}, {"down", pair_json(r.down_bits)}}},
            {"cf_budget", {{"up", pair_json(r.up_budget)}, {"down", pair_json(r.down_budget)}}},
            {"added_bits", {{"up", pair_json(r.added_up_bits)}, {"down", pair_json(r.added_down_bits)}}},
            {"cf_budget_ok", r.cf_budget_ok},
            {"original", {{"avg", r.original_avg}, {"max", r.original_max}}},
            {"transformed", {{"avg", r.transformed_avg}, {"max", r.transformed_max}}},
            {"blockwise_witness", r.blockwise_witness},
            {"blockwise", blockwise_json(r.blockwise)},
            {"epsilon", r.epsilon},
            {"certificate_limit", r.certificate_limit},
            {"certificate", r.certificate}};
}

// ---------------------------------------------------------------------------
// Dispatch

struct Output {
    json report;
    std::string text;  ///< CSV output when requested
    int code = kOk;
};

/// Runs one command line (without the program name). Reports go to `out`,
/// usage and diagnostics to `err`.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Exact desk-scale analysis of cooperation in two-user multiple access channels", "maccoop"};
    app.require_subcommand(1);
    app.fallthrough();
    RunConfig cfg;
    app.add_option("--seed", cfg.seed, "Random seed recorded in every report");
    app.add_option("--tolerance", cfg.tolerance, "Tolerance for optimizer-based inequality checks")
        ->check(CLI::PositiveNumber);
    app.add_option("--max-enum-bits", cfg.max_enum_bits, "Size guard: log2 of the largest enumerated output space")
        ->check(CLI::Range(1, 40));
    app.add_option("--format", cfg.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    app.add_option("--grid", cfg.optimizer.grid, "Optimizer lattice points per coordinate")->check(CLI::Range(2, 1001));
    app.add_option("--sweeps", cfg.optimizer.sweeps, "Coordinate-ascent sweeps per start");
    app.add_option("--restarts", cfg.optimizer.restarts, "Optimizer lattice and random starts");

    std::function<Output()> action;
    auto sub = [&](CLI::App* parent, const std::string& name, const std::string& help) {
        auto* s = parent->add_subcommand(name, help);
        s->fallthrough();
        return s;
    };

    // channel
    auto* channel = sub(&app, "channel", "Inspect and extend channels");
    channel->require_subcommand(1);
    std::string channel_spec, out_path, code_path, code_b_path, matrix_path;
    int n_ext = 1;
    auto* ch_info = sub(channel, "info", "Alphabets and properties of a channel");
    ch_info->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    ch_info->callback([&] {
        action = [&] {
            const auto mac = load_channel(channel_spec);
            Output o;
            o.report = envelope("channel info", cfg, {{"channel", channel_spec}});
            o.report["result"] = {{"x1", mac.x1_labels()},
                                  {"x2", mac.x2_labels()},
                                  {"y", mac.y_labels()},
                                  {"deterministic", mac.deterministic()}};
            return o;
        };
    });
    auto* ch_ext = sub(channel, "extend", "n-th extension of a channel");
    ch_ext->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    ch_ext->add_option("--n", n_ext, "Blocklength")->required()->check(CLI::PositiveNumber);
    ch_ext->add_option("--out", out_path, "Write the extended channel here");
    ch_ext->callback([&] {
        action = [&] {
            const auto mac = extend(load_channel(channel_spec), n_ext, cfg.max_enum_bits);
            Output o;
            o.report = envelope("channel extend", cfg, {{"channel", channel_spec}, {"n", n_ext}, {"out", out_path}});
            json res = {{"sizes", {mac.x1_size(), mac.x2_size(), mac.y_size()}},
                        {"deterministic", mac.deterministic()}};
            if (out_path.empty())
                res["channel"] = to_json(mac);
            else
                write_file(out_path, canonical_json(to_json(mac)));
            o.report["result"] = res;
            return o;
        };
    });

    // code
    auto* code = sub(&app, "code", "Evaluate and combine codes");
    code->require_subcommand(1);
    double r1 = 0.0, r2 = 0.0;
    bool exact = false;
    auto* code_eval = sub(code, "eval", "Exact error matrix and (r1,r2)-error of a code");
    code_eval->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    code_eval->add_option("--code", code_path, "Code file")->required();
    code_eval->add_option("--r1", r1, "Rate r1 of the block partition")->check(CLI::NonNegativeNumber);
    code_eval->add_option("--r2", r2, "Rate r2 of the block partition")->check(CLI::NonNegativeNumber);
    code_eval->add_flag("--exact", exact, "Exact minimization over permutations (small codes only)");
    code_eval->callback([&] {
        action = [&] {
            const auto mac = load_channel(channel_spec);
            const auto c = load_code(code_path);
            c.validate(cfg.max_enum_bits);
            const auto em = error_matrix(c, mac, cfg.max_enum_bits);
            Output o;
            o.report = envelope("code eval", cfg,
                                {{"channel", channel_spec}, {"code", code_path}, {"r1", r1}, {"r2", r2}, {"exact", exact}});
            json res = {{"avg", avg_error(em)}, {"max", max_error(em)}, {"n", c.n}, {"m", pair_json(c.messages)}};
            if (c.n >= 1) {
                BlockwiseOptions bo;
                bo.seed = cfg.seed;
                const auto q = ErrorProfileQuery::make(r1, r2, c.n, em.rows(), em.cols());
                res["blockwise"] =
                    blockwise_json(blockwise_error(em, q, exact ? BlockwiseMode::Exact : BlockwiseMode::Heuristic, bo));
            }
            if (em.rows() * em.cols() <= 4096) {
                json rows = json::array();
                for (std::size_t a = 0; a < em.rows(); ++a) {
                    std::vector<double> row;
                    for (std::size_t b = 0; b < em.cols(); ++b) row.push_back(em(a, b));
                    rows.push_back(row);
                }
                res["error_matrix"] = rows;
            }
            o.report["result"] = res;
            return o;
        };
    });
    auto* code_concat = sub(code, "concat", "Concatenate two codes (time sharing)");
    code_concat->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    code_concat->add_option("--a", code_path, "First code file")->required();
    code_concat->add_option("--b", code_b_path, "Second code file")->required();
    code_concat->add_option("--out", out_path, "Write the concatenated code here");
    code_concat->callback([&] {
        action = [&] {
            const auto mac = load_channel(channel_spec);
            const auto c = concatenate(load_code(code_path), load_code(code_b_path), mac);
            Output o;
            o.report = envelope("code concat", cfg,
                                {{"channel", channel_spec}, {"a", code_path}, {"b", code_b_path}, {"out", out_path}});
            json res = {{"n", c.n}, {"m", pair_json(c.messages)}, {"rounds", c.rounds},
                        {"rate", json::array({c.rate(0), c.rate(1)})}};
            if (out_path.empty())
                res["code"] = to_json(c);
            else
                write_file(out_path, canonical_json(to_json(c)));
            o.report["result"] = res;
            return o;
        };
    });

    // perm
    auto* perm = sub(&app, "perm", "Block-zero permutation search");
    perm->require_subcommand(1);
    std::size_t k = 1, budget = 10000, pm = 1, pn = 1, ones = 0;
    bool vector_mode = false;
    auto* perm_search = sub(perm, "search", "Find permutations leaving a zero in every k x k block");
    perm_search->add_option("--matrix", matrix_path, "0/1 matrix file")->required();
    perm_search->add_option("--k", k, "Block size")->required()->check(CLI::PositiveNumber);
    perm_search->add_option("--budget", budget, "Random restarts")->check(CLI::PositiveNumber);
    perm_search->add_flag("--vector", vector_mode, "Treat a single-row matrix as a vector");
    perm_search->callback([&] {
        action = [&] {
            const auto a = load_matrix(matrix_path);
            Output o;
            o.report = envelope("perm search", cfg,
                                {{"matrix", matrix_path}, {"k", k}, {"budget", budget}, {"vector", vector_mode}});
            json res;
            bool ok = false;
            if (vector_mode) {
                if (a.rows() != 1) throw ValidationError("--vector needs a single-row matrix");
                std::vector<std::uint8_t> v(a.bits().begin(), a.bits().end());
                const auto r = find_permutation_vector(v, k);
                ok = r.found && vector_violations(v, k, r.perm) == 0;
                res = {{"found", r.found}, {"perm", r.perm}, {"violations", r.violations}, {"bound", r.bound},
                       {"certified", r.certified}};
            } else {
                PermSearchOptions po;
                po.budget = budget;
                po.seed = cfg.seed;
                const auto r = find_permutations(a, k, po);
                ok = r.found && !verify_permutations(a, k, r.perm1, r.perm2);
                res = {{"found", r.found},       {"perm1", r.perm1},           {"perm2", r.perm2},
                       {"strategy", r.strategy}, {"restarts_used", r.restarts_used}, {"violations", r.violations},
                       {"bound", r.bound},       {"certified", r.certified}};
            }
            res["ones"] = a.ones();
            res["verification"] = ok ? "pass" : "fail";
            o.report["result"] = res;
            o.code = ok ? kOk : kCertificate;
            return o;
        };
    });
    auto* perm_bound = sub(perm, "bound", "Existence bound for given dimensions and number of ones");
    perm_bound->add_option("--m", pm, "Rows (vector length with --vector)")->required()->check(CLI::PositiveNumber);
    perm_bound->add_option("--n", pn, "Columns")->check(CLI::PositiveNumber);
    perm_bound->add_option("--k", k, "Block size")->required()->check(CLI::PositiveNumber);
    perm_bound->add_option("--ones", ones, "Number of ones")->required();
    perm_bound->add_flag("--vector", vector_mode, "Vector version");
    perm_bound->callback([&] {
        action = [&] {
            Output o;
            o.report = envelope("perm bound", cfg,
                                {{"m", pm}, {"n", pn}, {"k", k}, {"ones", ones}, {"vector", vector_mode}});
            const double b = vector_mode ? vector_existence_bound(pm, k, ones) : existence_bound(pm, pn, k, ones);
            o.report["result"] = {{"bound", b}, {"certified", b < 1.0}};
            return o;
        };
    });

    // transform
    auto* transform = sub(&app, "transform", "Average-to-blockwise error code transformations");
    transform->require_subcommand(1);
    double delta = 0.2, c12 = 0.0, c21 = 0.0;
    std::string kstar = "minimal";
    bool single_round = false;
    auto* thm1 = sub(transform, "thm1", "Add one CF round so the (r1,r2)-error is at most e^3 times the average error");
    thm1->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    thm1->add_option("--code", code_path, "Code file")->required();
    thm1->add_option("--r1", r1, "Target r1")->required()->check(CLI::NonNegativeNumber);
    thm1->add_option("--r2", r2, "Target r2")->required()->check(CLI::NonNegativeNumber);
    thm1->add_option("--delta", delta, "Rate slack delta")->check(CLI::PositiveNumber);
    thm1->add_option("--out", out_path, "Write the transformed code here");
    thm1->add_option("--kstar", kstar, "K* policy")->check(CLI::IsMember({"minimal", "measured"}));
    thm1->add_flag("--single-round", single_round, "Collapse all cooperation into one round");
    thm1->callback([&] {
        action = [&] {
            const auto mac = load_channel(channel_spec);
            const auto c = load_code(code_path);
            Output o;
            o.report = envelope("transform thm1", cfg,
                                {{"channel", channel_spec}, {"code", code_path}, {"r1", r1}, {"r2", r2},
                                 {"delta", delta}, {"out", out_path}, {"kstar", kstar}, {"single_round", single_round}});
            Theorem1Options opt;
            opt.policy = kstar == "minimal" ? KStarPolicy::MinimalCertified : KStarPolicy::MeasuredRate;
            opt.search.seed = cfg.seed;
            opt.max_bits = cfg.max_enum_bits;
            const auto plan = plan_theorem1(c, mac, r1, r2, delta, opt);
            ApplyOptions ao;
            ao.single_round = single_round;
            const auto t = apply_theorem1(plan, c, ao);
            BlockwiseOptions bo;
            bo.seed = cfg.seed;
            const auto q = ErrorProfileQuery::make(r1, r2, t.n, t.messages[0], t.messages[1]);
            const auto rep = verify_transform(c, t, mac, q, &plan, bo);
            if (!out_path.empty()) write_file(out_path, canonical_json(to_json(t)));
            o.report["result"] = {{"plan", plan_json(plan)}, {"verification", transform_report_json(rep)}};
            o.report["certificate"] = {{"plan", plan.certified ? "certified" : "uncertified"},
                                       {"verification", rep.certificate}};
            o.code = rep.certificate == "pass" && rep.rate_loss_ok && rep.cf_budget_ok ? kOk : kCertificate;
            return o;
        };
    });
    auto* prop3 = sub(transform, "prop3", "Best-quarter selection for conferencing codes");
    prop3->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    prop3->add_option("--code", code_path, "Code file")->required();
    prop3->add_option("--c12", c12, "Conferencing capacity 1 -> 2")->required()->check(CLI::NonNegativeNumber);
    prop3->add_option("--c21", c21, "Conferencing capacity 2 -> 1")->required()->check(CLI::NonNegativeNumber);
    prop3->add_option("--out", out_path, "Write the transformed code here");
    prop3->callback([&] {
        action = [&] {
            const auto mac = load_channel(channel_spec);
            const auto c = load_code(code_path);
            Output o;
            o.report = envelope("transform prop3", cfg,
                                {{"channel", channel_spec}, {"code", code_path}, {"c12", c12}, {"c21", c21},
                                 {"out", out_path}});
            const auto plan = plan_prop3(c, mac, c12, c21, cfg.max_enum_bits);
            const auto t = apply_prop3(plan, c);
            BlockwiseOptions bo;
            bo.seed = cfg.seed;
            const auto q = ErrorProfileQuery::make(c12, c21, t.n, t.messages[0], t.messages[1]);
            const auto rep = verify_transform(c, t, mac, q, &plan, bo);
            if (!out_path.empty()) write_file(out_path, canonical_json(to_json(t)));
            o.report["result"] = {{"plan", plan_json(plan)}, {"verification", transform_report_json(rep)}};
            o.report["certificate"] = {{"verification", rep.certificate}};
            o.code = rep.certificate == "pass" && rep.rate_loss_ok && rep.cf_budget_ok ? kOk : kCertificate;
            return o;
        };
    });

    // capacity
    auto* capacity = sub(&app, "capacity", "Support functions and capacity bounds");
    capacity->require_subcommand(1);
    double alpha = 0.5;
    std::vector<double> conf;
    std::size_t ucard = 4;
    std::string alphas_spec = "0:1:0.05", caps_spec = "0,0.25,0.5";
    auto conf_pair = [&]() -> std::pair<double, double> {
        if (conf.empty()) return {0.0, 0.0};
        return {conf[0], conf[1]};
    };
    // The contraction MAC gets the known witness input as an extra start.
    auto calpha_value = [&](const DiscreteMAC& mac, double a) {
        const auto [x, y] = conf_pair();
        if (conf.empty()) {
            std::vector<SimplexPoint> seeds;
            if (mac == contraction_mac()) seeds.push_back(dueck_witness_input(a));
            return mac_avg_calpha(mac, a, cfg.optimizer, seeds);
        }
        return conferencing_calpha(mac, x, y, a, ucard, cfg.optimizer);
    };
    auto sync_seed = [&] { cfg.optimizer.seed = cfg.seed; };

    auto* cap_calpha = sub(capacity, "calpha", "Average-error support function (lower bound)");
    cap_calpha->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    cap_calpha->add_option("--alpha", alpha, "Weight alpha in [0,1]")->check(CLI::Range(0.0, 1.0));
    cap_calpha->add_option("--conf", conf, "Conferencing capacities C12 C21")->expected(2);
    cap_calpha->add_option("--ucard", ucard, "Auxiliary alphabet size")->check(CLI::PositiveNumber);
    cap_calpha->callback([&] {
        action = [&] {
            sync_seed();
            const auto mac = load_channel(channel_spec);
            Output o;
            json opts = {{"channel", channel_spec}, {"alpha", alpha}};
            if (!conf.empty()) opts["conf"] = conf, opts["ucard"] = ucard;
            o.report = envelope("capacity calpha", cfg, opts);
            const auto r = calpha_value(mac, alpha);
            o.report["result"] = optimizer_json(r);
            o.report["certificate"] = {{"value", "lower_bound"}};
            if (cfg.format == "csv") o.text = "alpha,value\n" + format_number(alpha) + "," + format_number(r.value) + "\n";
            return o;
        };
    });
    auto* cap_dueck = sub(capacity, "dueck", "Maximal/average-error gap of the contraction MAC");
    cap_dueck->add_option("--alphas", alphas_spec, "a:b:step or comma list");
    cap_dueck->callback([&] {
        action = [&] {
            Output o;
            o.report = envelope("capacity dueck", cfg, {{"alphas", alphas_spec}});
            json rows = json::array();
            bool ok = true;
            std::string csv = "alpha,pstar,lower,upper,gap\n";
            for (const auto& r : dueck_gap_report(parse_alphas(alphas_spec))) {
                rows.push_back({{"alpha", r.alpha}, {"pstar", r.pstar}, {"lower", r.lower}, {"upper", r.upper},
                                {"gap", r.gap}, {"ok", r.ok}});
                csv += format_number(r.alpha) + "," + format_number(r.pstar) + "," + format_number(r.lower) + "," +
                       format_number(r.upper) + "," + format_number(r.gap) + "\n";
                ok = ok && r.ok;
            }
            o.report["result"] = {{"rows", rows}, {"all_ok", ok}};
            o.report["certificate"] = {{"lower", "lower_bound"}, {"upper", "upper_bound"}};
            o.text = csv;
            return o;
        };
    });
    auto* cap_region = sub(capacity, "region", "Support curve and the polygon it determines");
    cap_region->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    cap_region->add_option("--alphas", alphas_spec, "a:b:step or comma list; must include 0 and 1");
    cap_region->add_option("--conf", conf, "Conferencing capacities C12 C21")->expected(2);
    cap_region->add_option("--ucard", ucard, "Auxiliary alphabet size")->check(CLI::PositiveNumber);
    cap_region->add_option("--out", cfg.format, "Output format (alias of --format)")
        ->check(CLI::IsMember({"json", "csv"}));
    cap_region->callback([&] {
        action = [&] {
            sync_seed();
            const auto mac = load_channel(channel_spec);
            Output o;
            json opts = {{"channel", channel_spec}, {"alphas", alphas_spec}};
            if (!conf.empty()) opts["conf"] = conf, opts["ucard"] = ucard;
            o.report = envelope("capacity region", cfg, opts);
            SupportCurve curve;
            for (double a : parse_alphas(alphas_spec)) curve.samples.emplace_back(a, calpha_value(mac, a).value);
            const auto region = region_from_support(curve);
            json samples = json::array(), verts = json::array();
            std::string csv = "kind,a,b\n";
            for (const auto& [a, v] : curve.samples) {
                samples.push_back({{"alpha", a}, {"value", v}});
                csv += "support," + format_number(a) + "," + format_number(v) + "\n";
            }
            for (const auto& p : region.vertices()) {
                verts.push_back(json::array({p.x, p.y}));
                csv += "vertex," + format_number(p.x) + "," + format_number(p.y) + "\n";
            }
            o.report["result"] = {{"support", samples}, {"vertices", verts}};
            o.report["certificate"] = {{"support", "lower_bound"}};
            o.text = csv;
            return o;
        };
    });
    auto* cap_rstar = sub(capacity, "rstar", "Largest single-user rates with conferencing");
    cap_rstar->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    cap_rstar->add_option("--conf", conf, "Conferencing capacities C12 C21")->expected(2)->required();
    cap_rstar->add_option("--ucard", ucard, "Auxiliary alphabet size")->check(CLI::PositiveNumber);
    cap_rstar->callback([&] {
        action = [&] {
            sync_seed();
            const auto mac = load_channel(channel_spec);
            Output o;
            o.report = envelope("capacity rstar", cfg, {{"channel", channel_spec}, {"conf", conf}, {"ucard", ucard}});
            const auto r = rstar(mac, conf[0], conf[1], ucard, cfg.optimizer);
            o.report["result"] = {{"r1", optimizer_json(r.opt1)}, {"r2", optimizer_json(r.opt2)}};
            o.report["certificate"] = {{"r1", "lower_bound"}, {"r2", "lower_bound"}};
            return o;
        };
    });
    auto* cap_cont = sub(capacity, "continuity", "Conferencing continuity inequalities on a grid");
    cap_cont->add_option("--channel", channel_spec, "Builtin name or channel file")->required();
    cap_cont->add_option("--alpha", alpha, "Weight alpha in [0,1]")->check(CLI::Range(0.0, 1.0));
    cap_cont->add_option("--caps", caps_spec, "Values for C12 and C21 (grid is their square)");
    cap_cont->add_option("--ucard", ucard, "Auxiliary alphabet size")->check(CLI::PositiveNumber);
    cap_cont->callback([&] {
        action = [&] {
            sync_seed();
            const auto mac = load_channel(channel_spec);
            Output o;
            o.report = envelope("capacity continuity", cfg,
                                {{"channel", channel_spec}, {"alpha", alpha}, {"caps", caps_spec}, {"ucard", ucard}});
            std::vector<std::pair<double, double>> grid;
            const auto values = parse_alphas(caps_spec);
            for (double a : values)
                for (double b : values) grid.emplace_back(a, b);
            const auto rep = continuity_checks(mac, grid, alpha, ucard, cfg.optimizer, cfg.tolerance);
            json rows = json::array();
            for (const auto& r : rep.rows)
                rows.push_back({{"c12", r.c12},
                                {"c21", r.c21},
                                {"value", r.value},
                                {"value_c12_0", r.value_c12_0},
                                {"value_0_c21", r.value_0_c21},
                                {"two2zero_rhs", r.two2zero_rhs},
                                {"one2zero_rhs", r.one2zero_rhs},
                                {"two2zero_ok", r.two2zero_ok},
                                {"one2zero_ok", r.one2zero_ok},
                                {"offset", r.offset}});
            o.report["result"] = {{"rows", rows}, {"all_ok", rep.all_ok}};
            o.report["certificate"] = {{"values", "lower_bound"}};
            o.code = rep.all_ok ? kOk : kCertificate;
            return o;
        };
    });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        err << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // Subcommand --help
            err << e.what() << '\n';
            return kOk;
        }
        err << "error: " << e.what() << "\n\n" << app.help();
        json rep = {{"tool", kToolName}, {"version", kToolVersion}, {"status", "usage"}, {"error", e.what()}};
        out << canonical_json(rep);
        return kUsage;
    }

    std::string command;
    for (auto* s = &app; !s->get_subcommands().empty();) {
        s = s->get_subcommands().front();
        command += (command.empty() ? "" : " ") + s->get_name();
    }
    auto fail = [&](const char* kind, const std::string& msg, int code) {
        json rep = envelope(command, cfg, json::object());
        rep["status"] = "error";
        rep["error"] = {{"kind", kind}, {"message", msg}};
        out << canonical_json(rep);
        err << "error: " << msg << '\n';
        return code;
    };
    try {
        if (!action) throw ValidationError("incomplete command");
        Output o = action();
        const bool csv_capable = !o.text.empty();
        if (cfg.format == "csv" && !csv_capable)
            throw ValidationError("csv output is only available for capacity calpha, dueck and region");
        o.report["status"] = o.code == kOk ? "ok" : "certificate_failure";
        if (cfg.format == "csv")
            out << o.text;
        else
            out << canonical_json(o.report);
        return o.code;
    } catch (const CertificateError& e) {
        return fail("certificate", e.what(), kCertificate);
    } catch (const BudgetExceeded& e) {
        return fail("budget", e.what(), kValidation);
    } catch (const SizeLimitError& e) {
        return fail("size_limit", e.what(), kValidation);
    } catch (const InputError& e) {
        return fail("input", e.what(), kValidation);
    } catch (const Error& e) {
        return fail("validation", e.what(), kValidation);
    } catch (const json::exception& e) {
        return fail("input", e.what(), kValidation);
    }
}

}  // namespace maccoop::cli
