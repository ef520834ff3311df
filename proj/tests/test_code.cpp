#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace maccoop;

namespace {

ErrorMatrix random_matrix(std::mt19937_64& rng, std::size_t m1, std::size_t m2) {
    std::vector<std::vector<double>> rows(m1, std::vector<double>(m2));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& r : rows)
        for (auto& v : r) v = u(rng) < 0.3 ? 0.0 : u(rng);
    return ErrorMatrix::from_rows(rows);
}

oracle::Matrix to_rows(const ErrorMatrix& em) {
    oracle::Matrix rows(em.rows(), std::vector<double>(em.cols()));
    for (std::size_t a = 0; a < em.rows(); ++a)
        for (std::size_t b = 0; b < em.cols(); ++b) rows[a][b] = em(a, b);
    return rows;
}

/// Two rounds with the second CF reply depending on both round-1 symbols.
CooperationCode two_round_toy() {
    CodeBlueprint bp;
    bp.n = 1;
    bp.messages = {3, 2};
    bp.x1_size = 2;
    bp.x2_size = 2;
    bp.y_size = 4;
    bp.rounds = 2;
    bp.up_sizes = {std::vector<std::size_t>{2, 3}, std::vector<std::size_t>{2, 2}};
    bp.down_sizes = {std::vector<std::size_t>{2, 4}, std::vector<std::size_t>{2, 3}};
    bp.up = [](int user, std::size_t j, std::size_t m, std::span<const std::size_t> v) -> std::size_t {
        if (j == 0) return user == 0 ? m % 2 : m;
        return user == 0 ? (m + v[0]) % 3 : (m + v[0]) % 2;
    };
    bp.cf = [](int user, std::size_t j, std::span<const std::size_t> u1, std::span<const std::size_t> u2) -> std::size_t {
        if (j == 0) return user == 0 ? u1[0] ^ u2[0] : u1[0];
        return user == 0 ? (u1[0] + 2 * u2[0] + u1[1]) % 4 : (u1[1] * u2[1] + u2[0]) % 3;
    };
    bp.encode = [](int user, std::size_t m, std::span<const std::size_t> v, std::span<std::size_t> out) {
        out[0] = (m + v[0] + v[1] + static_cast<std::size_t>(user)) % 2;
    };
    bp.decode = [](std::size_t y) { return std::array<std::size_t, 2>{y % 3, y % 2}; };
    return tabulate(bp);
}

}  // namespace

TEST(Transcript, NoRounds) {
    const auto mac = fixtures::identity_mac(2);
    const auto c = fixtures::uncoded(mac, 2, 4, 4);
    const auto tr = transcript(c, 2, 1);
    EXPECT_TRUE(tr.v[0].empty());
    EXPECT_TRUE(tr.u[1].empty());
    EXPECT_EQ(tr.x[0], (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(tr.x[1], (std::vector<std::size_t>{0, 1}));
}

TEST(Transcript, ForwardingRound) {
    const auto mac = fixtures::random_mac(1, 2, 2, 3);
    const auto c = fixtures::conferencing_toy(mac, 4);
    for (std::size_t m1 = 0; m1 < c.m1(); ++m1)
        for (std::size_t m2 = 0; m2 < c.m2(); ++m2) {
            const auto tr = transcript(c, m1, m2);
            EXPECT_EQ(tr.v[0][0], tr.u[1][0]);
            EXPECT_EQ(tr.v[1][0], tr.u[0][0]);
        }
}

TEST(Transcript, TwoRoundsMatchHandUnrolling) {
    const auto c = two_round_toy();
    for (std::size_t m1 = 0; m1 < 3; ++m1)
        for (std::size_t m2 = 0; m2 < 2; ++m2) {
            const std::size_t u11 = m1 % 2, u21 = m2;
            const std::size_t v11 = u11 ^ u21, v21 = u11;
            const std::size_t u12 = (m1 + v11) % 3, u22 = (m2 + v21) % 2;
            const std::size_t v12 = (u11 + 2 * u21 + u12) % 4, v22 = (u12 * u22 + u21) % 3;
            const auto tr = transcript(c, m1, m2);
            EXPECT_EQ(tr.u[0], (std::vector<std::size_t>{u11, u12}));
            EXPECT_EQ(tr.u[1], (std::vector<std::size_t>{u21, u22}));
            EXPECT_EQ(tr.v[0], (std::vector<std::size_t>{v11, v12}));
            EXPECT_EQ(tr.v[1], (std::vector<std::size_t>{v21, v22}));
            EXPECT_EQ(tr.x[0][0], (m1 + v11 + v12) % 2);
            EXPECT_EQ(tr.x[1][0], (m2 + v21 + v22 + 1) % 2);
            EXPECT_EQ(transcript(c, m1, m2), tr);
        }
}

TEST(Transcript, OutOfRange) {
    const auto c = two_round_toy();
    EXPECT_THROW(transcript(c, 3, 0), InputError);
    EXPECT_THROW(transcript(c, 0, 2), InputError);
}

TEST(CodeValidate, LinkBudget) {
    auto c = two_round_toy();
    // up: log2(2*3) = 2.585 bits for user 1 over n = 1
    c.links = LinkCapacities{{2.0, 2.0}, {5.0, 5.0}};
    EXPECT_THROW(c.validate(), ValidationError);
    c.links = LinkCapacities{{2.6, 2.0}, {3.0, 2.6}};
    EXPECT_NO_THROW(c.validate());
}

TEST(CodeValidate, PartialTables) {
    auto c = two_round_toy();
    c.decoder.pop_back();
    EXPECT_THROW(c.validate(), ValidationError);
    c = two_round_toy();
    c.cf_maps[0][1][0] = 9;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ErrorMatrix, PerfectCodeIsZero) {
    const auto mac = fixtures::identity_mac(2);
    const auto em = error_matrix(fixtures::uncoded(mac, 2, 4, 4), mac);
    EXPECT_EQ(avg_error(em), 0.0);
    EXPECT_EQ(max_error(em), 0.0);
}

TEST(ErrorMatrix, ConstantDecoder) {
    const auto mac = fixtures::identity_mac(2);
    auto c = fixtures::uncoded(mac, 1, 2, 2);
    for (auto& d : c.decoder) d = {0, 0};
    const auto em = error_matrix(c, mac);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(em(a, b), a == 0 && b == 0 ? 0.0 : 1.0);
}

TEST(ErrorMatrix, NoisyToyMatchesEnumeration) {
    const double eps = 0.1;
    const auto mac = fixtures::noisy_identity_mac(eps);
    const auto c = fixtures::uncoded(mac, 1, 2, 2);
    auto dec = c;
    for (std::size_t y = 0; y < 4; ++y) dec.decoder[y] = {y / 2, y % 2};
    const auto em = error_matrix(dec, mac);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = 0; b < 2; ++b) {
            double wrong = 0;
            for (std::size_t y1 = 0; y1 < 2; ++y1)
                for (std::size_t y2 = 0; y2 < 2; ++y2)
                    if (y1 != a || y2 != b) wrong += (y1 == a ? 1 - eps : eps) * (y2 == b ? 1 - eps : eps);
            EXPECT_NEAR(em(a, b), wrong, 1e-12);
            EXPECT_NEAR(em(a, b), 1 - 0.81, 1e-12);
        }
}

TEST(ErrorMatrix, InvariantUnderOutputRelabeling) {
    const auto mac = fixtures::random_mac(21, 2, 2, 3);
    auto c = fixtures::uncoded(mac, 2, 4, 4);
    fixtures::map_decoder(c, mac);
    const auto em = error_matrix(c, mac);
    // Swap output symbols 0 and 2 in the channel and in the decoder table.
    std::vector<double> p = mac.tensor();
    for (std::size_t r = 0; r < 4; ++r) std::swap(p[r * 3], p[r * 3 + 2]);
    const DiscreteMAC relabeled(mac.x1_labels(), mac.x2_labels(), mac.y_labels(), p);
    auto c2 = c;
    auto sw = [](std::size_t s) { return s == 0 ? 2 : s == 2 ? 0 : s; };
    for (std::size_t y = 0; y < 9; ++y) c2.decoder[sw(y / 3) * 3 + sw(y % 3)] = c.decoder[y];
    const auto em2 = error_matrix(c2, relabeled);
    for (std::size_t i = 0; i < em.values().size(); ++i) EXPECT_NEAR(em.values()[i], em2.values()[i], 1e-12);
}

TEST(ErrorMatrix, AlphabetMismatch) {
    const auto c = fixtures::uncoded(fixtures::identity_mac(2), 1, 2, 2);
    EXPECT_THROW(error_matrix(c, binary_adder_mac()), ValidationError);
}

TEST(ErrorMatrix, RejectsOutOfRange) {
    EXPECT_THROW(ErrorMatrix::from_rows({{0.5, 1.2}}), ValidationError);
    EXPECT_NO_THROW(ErrorMatrix::from_rows({{0.5, 1.0 + 1e-13}}));
}

TEST(ErrorSummaries, Simple) {
    const auto em = ErrorMatrix::from_rows({{0, 1}, {1, 0}});
    EXPECT_DOUBLE_EQ(avg_error(em), 0.5);
    EXPECT_DOUBLE_EQ(max_error(em), 1.0);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        const auto r = random_matrix(rng, 1 + rng() % 6, 1 + rng() % 6);
        EXPECT_LE(avg_error(r), max_error(r));
    }
}

TEST(FloorPow2, SnapsNearIntegers) {
    EXPECT_EQ(floor_pow2(0.0), 1u);
    EXPECT_EQ(floor_pow2(1.0), 2u);
    EXPECT_EQ(floor_pow2(3.0 * (2.0 / 3.0)), 4u);
    EXPECT_EQ(floor_pow2(std::log2(3.0)), 3u);
    EXPECT_EQ(floor_pow2(0.5), 1u);
    EXPECT_EQ(floor_pow2(1.9999999999999), 4u);
}

TEST(ErrorProfileQuery, Arithmetic) {
    const auto q = ErrorProfileQuery::make(1.0, 0.0, 1, 2, 2);
    EXPECT_EQ(q.k, (std::array<std::size_t, 2>{2, 1}));
    EXPECT_EQ(q.l, (std::array<std::size_t, 2>{1, 2}));
    const auto q2 = ErrorProfileQuery::make(0.5, 0.8, 3, 7, 5);
    EXPECT_EQ(q2.k[0], 2u);  // floor(2^1.5) = 2
    EXPECT_EQ(q2.l[0], 3u);
    EXPECT_EQ(q2.k[1], 5u);  // floor(2^2.4) = 5 = M2
    EXPECT_EQ(q2.l[1], 1u);
}

TEST(Blockwise, SpecExample) {
    const auto em = ErrorMatrix::from_rows({{0, 1}, {1, 0}});
    const auto q = ErrorProfileQuery::make(1.0, 0.0, 1, 2, 2);
    const auto r = blockwise_error(em, q, BlockwiseMode::Exact);
    EXPECT_DOUBLE_EQ(r.value, 0.5);
    EXPECT_EQ(r.bound_kind, "exact");
    EXPECT_DOUBLE_EQ(oracle::blockwise_min_max(to_rows(em), 2, 1), 0.5);
}

TEST(Blockwise, Endpoints) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 30; ++t) {
        const std::size_t m1 = 1 + rng() % 7, m2 = 1 + rng() % 7;
        const auto em = random_matrix(rng, m1, m2);
        const auto zero = blockwise_error(em, ErrorProfileQuery::make(0, 0, 2, m1, m2), BlockwiseMode::Exact);
        EXPECT_NEAR(zero.value, avg_error(em), 1e-12);
        const auto big = blockwise_error(em, ErrorProfileQuery::make(10, 10, 2, m1, m2), BlockwiseMode::Exact);
        EXPECT_EQ(big.value, max_error(em));
        const auto heur = blockwise_error(em, ErrorProfileQuery::make(10, 10, 2, m1, m2), BlockwiseMode::Heuristic);
        EXPECT_EQ(heur.value, max_error(em));
    }
}

TEST(Blockwise, ExactMatchesBruteForce) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 40; ++t) {
        const std::size_t m1 = 2 + rng() % 4, m2 = 2 + rng() % 4;
        const auto em = random_matrix(rng, m1, m2);
        const std::size_t k1 = 1 + rng() % m1, k2 = 1 + rng() % m2;
        const auto q = ErrorProfileQuery::with_blocks(k1, k2, m1, m2);
        const auto ex = blockwise_error(em, q, BlockwiseMode::Exact);
        EXPECT_NEAR(ex.value, oracle::blockwise_min_max(to_rows(em), k1, k2), 1e-12);
        // The witness reproduces the value.
        EXPECT_NEAR(max_block_average(em, q, ex.perm1, ex.perm2).first, ex.value, 1e-12);
        const auto h = blockwise_error(em, q, BlockwiseMode::Heuristic);
        EXPECT_EQ(h.bound_kind, "upper_bound");
        EXPECT_GE(h.value, ex.value - 1e-12);
        EXPECT_LE(h.value, max_error(em) + 1e-12);
    }
}

TEST(Blockwise, ExactRefusesLargeInputs) {
    std::mt19937_64 rng(1);
    const auto em = random_matrix(rng, 9, 3);
    EXPECT_THROW(blockwise_error(em, ErrorProfileQuery::with_blocks(3, 1, 9, 3), BlockwiseMode::Exact), BudgetExceeded);
    BlockwiseOptions tight;
    tight.exact_budget = 10;
    const auto em2 = random_matrix(rng, 8, 8);
    EXPECT_THROW(blockwise_error(em2, ErrorProfileQuery::with_blocks(2, 2, 8, 8), BlockwiseMode::Exact, tight),
                 BudgetExceeded);
}

TEST(Blockwise, HeuristicDeterministic) {
    std::mt19937_64 rng(4);
    const auto em = random_matrix(rng, 12, 12);
    const auto q = ErrorProfileQuery::with_blocks(3, 4, 12, 12);
    const auto a = blockwise_error(em, q, BlockwiseMode::Heuristic);
    const auto b = blockwise_error(em, q, BlockwiseMode::Heuristic);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.perm1, b.perm1);
    EXPECT_LE(a.value, max_error(em));
    EXPECT_GE(a.value, avg_error(em) - 1e-12);
}

TEST(Blockwise, NestedPartitionsAtFixedPermutation) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 30; ++t) {
        const auto em = random_matrix(rng, 8, 8);
        std::vector<std::size_t> p1(8), p2(8);
        std::iota(p1.begin(), p1.end(), 0);
        std::iota(p2.begin(), p2.end(), 0);
        std::shuffle(p1.begin(), p1.end(), rng);
        std::shuffle(p2.begin(), p2.end(), rng);
        const double coarse = max_block_average(em, ErrorProfileQuery::with_blocks(2, 2, 8, 8), p1, p2).first;
        const double fine = max_block_average(em, ErrorProfileQuery::with_blocks(4, 8, 8, 8), p1, p2).first;
        EXPECT_LE(coarse, fine + 1e-12);
    }
}

TEST(Concatenate, WithEmptyCodeIsIdentity) {
    const auto mac = fixtures::random_mac(3, 2, 2, 3);
    auto c = fixtures::conferencing_toy(mac, 2);
    const auto e = CooperationCode::empty(2, 2, 3);
    const auto cat = concatenate(c, e, mac);
    EXPECT_EQ(cat.messages, c.messages);
    EXPECT_EQ(cat.channel_maps, c.channel_maps);
    EXPECT_EQ(cat.decoder, c.decoder);
    EXPECT_EQ(cat.up_maps, c.up_maps);
    EXPECT_EQ(cat.cf_maps, c.cf_maps);
    const auto cat2 = concatenate(e, c, mac);
    EXPECT_EQ(cat2.channel_maps, c.channel_maps);
    EXPECT_EQ(cat2.decoder, c.decoder);
}

TEST(Concatenate, RatesAndUnionBound) {
    const auto mac = fixtures::noisy_identity_mac(0.05);
    auto a = fixtures::uncoded(mac, 1, 2, 2);
    for (std::size_t y = 0; y < 4; ++y) a.decoder[y] = {y / 2, y % 2};
    a.links = LinkCapacities{{0.0, 0.0}, {0.0, 0.0}};
    auto b = fixtures::conferencing_toy(mac, 5, 1);
    const auto cat = concatenate(a, b, mac);
    EXPECT_EQ(cat.n, 2);
    for (int i = 0; i < 2; ++i)
        EXPECT_NEAR(cat.rate(i), (a.n * a.rate(i) + b.n * b.rate(i)) / (a.n + b.n), 1e-12);
    const auto ea = error_matrix(a, mac), eb = error_matrix(b, mac), ec = error_matrix(cat, mac);
    for (std::size_t m1 = 0; m1 < cat.m1(); ++m1)
        for (std::size_t m2 = 0; m2 < cat.m2(); ++m2) {
            const std::size_t a1 = m1 / b.m1(), b1 = m1 % b.m1(), a2 = m2 / b.m2(), b2 = m2 % b.m2();
            EXPECT_LE(ec(m1, m2), ea(a1, a2) + eb(b1, b2) + 1e-12);
        }
    // Links mix in proportion to blocklength.
    ASSERT_TRUE(cat.links.has_value());
    EXPECT_DOUBLE_EQ(cat.links->c_in[0], 0.5);
    EXPECT_NO_THROW(cat.validate());
}

TEST(Concatenate, AlphabetMismatch) {
    const auto a = fixtures::uncoded(fixtures::identity_mac(2), 1, 2, 2);
    const auto b = fixtures::uncoded(fixtures::identity_mac(3), 1, 3, 3);
    EXPECT_THROW(concatenate(a, b, fixtures::identity_mac(2)), ValidationError);
}

TEST(CodeJson, RoundTrip) {
    const auto c = two_round_toy();
    EXPECT_EQ(code_from_json(to_json(c)), c);
    const auto mac = fixtures::random_mac(3, 2, 2, 3);
    const auto conf = fixtures::conferencing_toy(mac, 9);
    EXPECT_EQ(code_from_json(to_json(conf)), conf);
}

TEST(CodeJson, RejectsPartialDecoder) {
    auto j = to_json(two_round_toy());
    j["decoder"].erase(0);
    EXPECT_THROW(code_from_json(j), Error);
}
