#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "negtome/kernel.hpp"
#include "oracle.hpp"

using namespace negtome;

namespace {

FeatureBatch random_batch(std::mt19937& rng, int64_t b, int64_t n, int64_t d) {
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    Tensor t({b, n, d});
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
    return FeatureBatch(std::move(t));
}

ReferenceTokens random_ref(std::mt19937& rng, int64_t n_ref, int64_t d, bool with_mask) {
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    Tensor t({n_ref, d});
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = dist(rng);
    std::optional<MaskVector> mask;
    if (with_mask) {
        std::uniform_real_distribution<float> mdist(0.0f, 1.0f);
        std::bernoulli_distribution hard(0.3);
        MaskVector mv;
        mv.weights.resize(static_cast<size_t>(n_ref));
        for (auto& w : mv.weights) w = hard(rng) ? (hard(rng) ? 0.0f : 1.0f) : mdist(rng);
        mask = std::move(mv);
    }
    return ReferenceTokens(std::move(t), std::move(mask));
}

} // namespace

TEST_CASE("cosine_similarity hand values") {
    FeatureBatch src(Tensor({1, 1, 2}, {0.6f, 0.8f}));
    ReferenceTokens ref(Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));
    SimilarityMatrix s = cosine_similarity(src, ref);
    CHECK(s.values.shape() == std::vector<int64_t>{1, 2});
    CHECK(s.values(0, 0) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(s.values(0, 1) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK_FALSE(s.biased);
}

TEST_CASE("cosine_similarity self-row is 1 and zero row is 0") {
    std::mt19937 rng(5);
    Tensor src_t({1, 3, 8});
    Tensor ref_t({4, 8});
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    for (int64_t i = 0; i < src_t.size(); ++i) src_t.data()[i] = dist(rng);
    for (int64_t i = 0; i < ref_t.size(); ++i) ref_t.data()[i] = dist(rng);
    // token 1 is a bit-copy of ref row 2, token 2 all zeros
    for (int64_t k = 0; k < 8; ++k) {
        ref_t(2, k) = src_t(0, 1, k);
        src_t(0, 2, k) = 0.0f;
    }
    SimilarityMatrix s = cosine_similarity(FeatureBatch(src_t), ReferenceTokens(ref_t));
    CHECK(s.values(1, 2) == doctest::Approx(1.0).epsilon(1e-6));
    for (int64_t j = 0; j < 4; ++j) CHECK(s.values(2, j) == 0.0f);
}

TEST_CASE("cosine_similarity rejects feature mismatch") {
    FeatureBatch src(Tensor({1, 1, 3}, {1.0f, 0.0f, 0.0f}));
    ReferenceTokens ref(Tensor({1, 2}, {1.0f, 0.0f}));
    CHECK_THROWS_AS(static_cast<void>(cosine_similarity(src, ref)), DimensionError);
}

TEST_CASE("apply_mask_bias hand values and argmax flip") {
    FeatureBatch src(Tensor({1, 1, 2}, {0.6f, 0.8f}));
    ReferenceTokens ref(Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));
    SimilarityMatrix s = cosine_similarity(src, ref);

    MaskVector mask{{1.0f, 0.0f}};
    SimilarityMatrix biased = apply_mask_bias(s, mask, 1e-6f);
    CHECK(biased.biased);
    // ln(1 + 1e-6) and ln(1e-6), frozen
    CHECK(biased.values(0, 0) == doctest::Approx(0.6 + 9.9999950000333e-7).epsilon(1e-6));
    CHECK(biased.values(0, 1) == doctest::Approx(0.8 - 13.815510557964274).epsilon(1e-6));

    MatchResult m = match_targets(biased, ref);
    CHECK(m.target_index[0] == 0); // bias moved the best match away from index 1
}

TEST_CASE("uniform mask shifts every entry but keeps the match") {
    std::mt19937 rng(17);
    FeatureBatch src = random_batch(rng, 2, 5, 6);
    ReferenceTokens ref = random_ref(rng, 7, 6, false);
    SimilarityMatrix s = cosine_similarity(src, ref);
    MaskVector ones{std::vector<float>(7, 1.0f)};
    SimilarityMatrix biased = apply_mask_bias(s, ones, 1e-6f);
    const double shift = std::log(1.0 + 1e-6);
    for (int64_t i = 0; i < s.values.extent(0); ++i) {
        for (int64_t j = 0; j < 7; ++j) {
            CHECK(biased.values(i, j) ==
                  doctest::Approx(static_cast<double>(s.values(i, j)) + shift).epsilon(1e-6));
        }
    }
    CHECK(match_targets(biased, ref).target_index == match_targets(s, ref).target_index);
}

TEST_CASE("all-zero mask pushes maxima below any usable threshold") {
    std::mt19937 rng(23);
    FeatureBatch src = random_batch(rng, 1, 8, 6);
    ReferenceTokens ref = random_ref(rng, 5, 6, false);
    SimilarityMatrix s = cosine_similarity(src, ref);
    MaskVector zeros{std::vector<float>(5, 0.0f)};
    MatchResult m = gate_by_threshold(match_targets(apply_mask_bias(s, zeros, 1e-6f), ref), 0.7f);
    for (size_t i = 0; i < m.gate.size(); ++i) {
        CHECK(m.max_sim[i] <= 1.0f + std::log(1e-6f));
        CHECK(m.gate[i] == 0);
    }
}

TEST_CASE("masked-out columns lose to usable columns") {
    std::mt19937 rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        FeatureBatch src = random_batch(rng, 1, 4, 8);
        ReferenceTokens ref = random_ref(rng, 6, 8, false);
        MaskVector mask;
        mask.weights.assign(6, 0.0f);
        mask.weights[1] = 0.5f;
        mask.weights[4] = 1.0f;
        SimilarityMatrix biased =
            apply_mask_bias(cosine_similarity(src, ref), mask, 1e-6f);
        MatchResult m = match_targets(biased, ref);
        for (int64_t idx : m.target_index) {
            CHECK((idx == 1 || idx == 4)); // ln(1e-6) dominates any cosine gap
        }
    }
}

TEST_CASE("gate_by_threshold is strict") {
    MatchResult m;
    m.target_index = {0, 0, 0};
    m.max_sim = {0.8f, 0.7f, 0.6f};
    m = gate_by_threshold(std::move(m), 0.7f);
    CHECK(m.gate == std::vector<uint8_t>{1, 0, 0});
}

TEST_CASE("extrapolate hand values") {
    FeatureBatch src(Tensor({1, 1, 2}, {0.6f, 0.8f}));
    Tensor target({1, 2}, {0.0f, 1.0f});
    std::vector<uint8_t> gate{1};

    FeatureBatch out = extrapolate(src, target, gate, 0.5f);
    CHECK(out.tokens(0, 0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(out.tokens(0, 0, 1) == doctest::Approx(0.7).epsilon(1e-6));

    FeatureBatch interp = extrapolate(src, target, gate, -0.5f);
    CHECK(interp.tokens(0, 0, 0) == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(interp.tokens(0, 0, 1) == doctest::Approx(0.9).epsilon(1e-6));

    FeatureBatch identity = extrapolate(src, target, gate, 0.0f);
    CHECK(identity.tokens == src.tokens);

    CHECK_THROWS_AS(
        static_cast<void>(extrapolate(src, target, gate, std::nanf(""))), ConfigError);
}

TEST_CASE("negtome worked example") {
    FeatureBatch src(Tensor({1, 1, 2}, {0.6f, 0.8f}));
    ReferenceTokens ref(Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}));
    FeatureBatch out = merge(src, ref, 0.5f, 0.7f);
    CHECK(out.tokens(0, 0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(out.tokens(0, 0, 1) == doctest::Approx(0.7).epsilon(1e-6));

    FeatureBatch pulled = merge(src, ref, -0.5f, 0.7f);
    CHECK(pulled.tokens(0, 0, 0) == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(pulled.tokens(0, 0, 1) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("negtome identities are bit-exact") {
    std::mt19937 rng(31);
    FeatureBatch src = random_batch(rng, 2, 9, 12);

    SUBCASE("alpha = 0") {
        ReferenceTokens ref = random_ref(rng, 11, 12, false);
        CHECK(merge(src, ref, 0.0f, 0.7f).tokens == src.tokens);
    }
    SUBCASE("tau above cosine range") {
        ReferenceTokens ref = random_ref(rng, 11, 12, false);
        CHECK(merge(src, ref, 0.8f, 1.1f).tokens == src.tokens);
    }
    SUBCASE("self reference") {
        Tensor flat({src.batch() * src.n_tokens(), src.features()},
                    std::vector<float>(src.tokens.data(), src.tokens.data() + src.tokens.size()));
        ReferenceTokens self(flat);
        CHECK(merge(src, self, 0.37f, 0.7f).tokens == src.tokens);
        CHECK(merge(src, self, -0.9f, 0.7f).tokens == src.tokens);
    }
    SUBCASE("gate-off rows are untouched") {
        ReferenceTokens ref = random_ref(rng, 11, 12, false);
        MergeResult r = merge_detailed(src, ref, 0.9f, 0.7f);
        const int64_t d = src.features();
        for (int64_t row = 0; row < src.batch() * src.n_tokens(); ++row) {
            if (r.match.gate[static_cast<size_t>(row)]) continue;
            CHECK(std::memcmp(r.merged.tokens.data() + row * d, src.tokens.data() + row * d,
                              static_cast<size_t>(d) * sizeof(float)) == 0);
        }
    }
}

TEST_CASE("negtome matches the naive oracle") {
    std::mt19937 rng(101);
    std::uniform_int_distribution<int64_t> bdist(1, 4), ndist(1, 64), rdist(1, 64), ddist(1, 32);
    std::uniform_real_distribution<float> adist(-1.0f, 1.0f), tdist(0.0f, 1.0f);
    for (int trial = 0; trial < 200; ++trial) {
        const int64_t b = bdist(rng), n = ndist(rng), n_ref = rdist(rng), d = ddist(rng);
        const bool with_mask = trial % 2 == 1;
        FeatureBatch src = random_batch(rng, b, n, d);
        ReferenceTokens ref = random_ref(rng, n_ref, d, with_mask);
        const float alpha = adist(rng);
        const float tau = tdist(rng);

        MergeResult got = merge_detailed(src, ref, alpha, tau);
        const std::vector<float> src_v(src.tokens.data(), src.tokens.data() + src.tokens.size());
        const std::vector<float> ref_v(ref.tokens.data(), ref.tokens.data() + ref.tokens.size());
        oracle::NaiveResult want = oracle::negtome_naive(
            src_v, b, n, d, ref_v, n_ref, ref.mask ? &ref.mask->weights : nullptr, alpha, tau,
            1e-6f);

        REQUIRE(got.match.target_index == want.target_index);
        REQUIRE(got.match.gate == want.gate);
        for (size_t i = 0; i < want.merged.size(); ++i) {
            REQUIRE(std::abs(got.merged.tokens.data()[i] - want.merged[i]) <= 1e-5f);
        }
    }
}

TEST_CASE("argmax is invariant to a uniform row shift") {
    std::mt19937 rng(41);
    FeatureBatch src = random_batch(rng, 2, 6, 10);
    ReferenceTokens ref = random_ref(rng, 9, 10, false);
    SimilarityMatrix s = cosine_similarity(src, ref);
    SimilarityMatrix shifted = s;
    for (int64_t i = 0; i < shifted.values.size(); ++i) shifted.values.data()[i] += 0.123f;
    CHECK(match_targets(s, ref).target_index == match_targets(shifted, ref).target_index);
}

TEST_CASE("merge offset is affine and sign-symmetric under a fixed gate") {
    std::mt19937 rng(43);
    FeatureBatch src = random_batch(rng, 2, 8, 6);
    ReferenceTokens ref = random_ref(rng, 10, 6, false);
    // tau = -1 keeps every gate on for both calls
    const float tau = -1.0f;
    const float alpha = 0.35f;
    FeatureBatch out1 = merge(src, ref, alpha, tau);
    FeatureBatch out2 = merge(src, ref, 2 * alpha, tau);
    FeatureBatch outm = merge(src, ref, -alpha, tau);
    for (int64_t i = 0; i < src.tokens.size(); ++i) {
        const double d1 = static_cast<double>(out1.tokens.data()[i]) - src.tokens.data()[i];
        const double d2 = static_cast<double>(out2.tokens.data()[i]) - src.tokens.data()[i];
        const double dm = static_cast<double>(outm.tokens.data()[i]) - src.tokens.data()[i];
        CHECK(std::abs(d2 - 2.0 * d1) <= 1e-5);
        CHECK(std::abs(dm + d1) <= 1e-5);
    }
}

TEST_CASE("alpha_at windows and schedules") {
    MergeConfig cfg;
    cfg.alpha = 0.9f;
    cfg.t_hi = 1000;
    cfg.t_lo = 600;

    SUBCASE("constant inside the window") {
        CHECK(alpha_at(cfg, 800) == 0.9f);
        CHECK(alpha_at(cfg, 1000) == 0.9f);
        CHECK(alpha_at(cfg, 600) == 0.9f);
    }
    SUBCASE("zero outside") {
        CHECK(alpha_at(cfg, 500) == 0.0f);
        CHECK(alpha_at(cfg, 1001) == 0.0f);
        CHECK(alpha_at(cfg, 0) == 0.0f);
    }
    SUBCASE("linear decay") {
        cfg.schedule = ScheduleKind::LinearDecay;
        CHECK(alpha_at(cfg, 600) == 0.0f);
        CHECK(alpha_at(cfg, 1000) == 0.9f);
        CHECK(alpha_at(cfg, 800) == doctest::Approx(0.45).epsilon(1e-7));
    }
    SUBCASE("signed alpha passes through") {
        cfg.alpha = -0.5f;
        CHECK(alpha_at(cfg, 700) == -0.5f);
    }
    SUBCASE("degenerate one-step window") {
        cfg.schedule = ScheduleKind::LinearDecay;
        cfg.t_hi = cfg.t_lo = 750;
        CHECK(alpha_at(cfg, 750) == 0.9f);
    }
}

TEST_CASE("merge config validation") {
    MergeConfig cfg;
    validate_merge_config(cfg);
    cfg.epsilon = 0.0f;
    CHECK_THROWS_AS(validate_merge_config(cfg), ConfigError);
    cfg.epsilon = 1e-6f;
    cfg.t_lo = 1200;
    CHECK_THROWS_AS(validate_merge_config(cfg), ConfigError);
}
