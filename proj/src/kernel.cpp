#include "negtome/kernel.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "negtome/parallel.hpp"

namespace negtome {

namespace {

void require_finite(const Tensor& t, const char* what) {
    for (float v : t.values()) {
        if (!std::isfinite(v)) {
            throw ConfigError(std::string(what) + " contains a non-finite value");
        }
    }
}

Tensor flatten_tokens(const Tensor& t) {
    // B x N x D viewed as (B*N) x D; data is shared layout, so just copy shape.
    return Tensor({t.extent(0) * t.extent(1), t.extent(2)},
                  std::vector<float>(t.data(), t.data() + t.size()));
}

} // namespace

FeatureBatch::FeatureBatch(Tensor t) : tokens(std::move(t)) {
    if (tokens.rank() != 3) {
        throw DimensionError("FeatureBatch expects B x N x D tokens, got " +
                             shape_to_string(tokens.shape()));
    }
    require_finite(tokens, "FeatureBatch");
}

ReferenceTokens::ReferenceTokens(Tensor t, std::optional<MaskVector> m)
    : tokens(std::move(t)), mask(std::move(m)) {
    if (tokens.rank() != 2) {
        throw DimensionError("ReferenceTokens expects N_ref x D tokens, got " +
                             shape_to_string(tokens.shape()));
    }
    require_finite(tokens, "ReferenceTokens");
    if (mask) {
        if (static_cast<int64_t>(mask->weights.size()) != tokens.extent(0)) {
            std::ostringstream os;
            os << "mask length " << mask->weights.size() << " does not match reference token count "
               << tokens.extent(0);
            throw DimensionError(os.str());
        }
        for (float w : mask->weights) {
            if (!(w >= 0.0f && w <= 1.0f)) {
                throw ConfigError("mask weights must lie in [0, 1]");
            }
        }
    }
}

void validate_merge_config(const MergeConfig& cfg) {
    if (!std::isfinite(cfg.alpha)) throw ConfigError("alpha must be finite");
    if (!(cfg.tau >= -1.0f && cfg.tau <= 2.0f)) throw ConfigError("tau must lie in [-1, 2]");
    if (!(cfg.epsilon > 0.0f)) throw ConfigError("epsilon must be > 0");
    if (cfg.t_lo < 0 || cfg.t_hi < cfg.t_lo) {
        throw ConfigError("merge window requires t_hi >= t_lo >= 0");
    }
}

SimilarityMatrix cosine_similarity(const FeatureBatch& src, const ReferenceTokens& ref) {
    if (src.features() != ref.features()) {
        throw DimensionError("feature dimensions differ: src is " +
                             shape_to_string(src.tokens.shape()) + ", ref is " +
                             shape_to_string(ref.tokens.shape()));
    }
    const Tensor src_n = l2_normalize_rows(flatten_tokens(src.tokens));
    const Tensor ref_n = l2_normalize_rows(ref.tokens);
    Tensor s = matmul_nt(src_n, ref_n);
    for (int64_t i = 0; i < s.size(); ++i) {
        float& v = s.data()[i];
        if (v > 1.0f) v = 1.0f;
        if (v < -1.0f) v = -1.0f;
    }
    return SimilarityMatrix{std::move(s), false};
}

SimilarityMatrix apply_mask_bias(const SimilarityMatrix& s, const MaskVector& mask, float epsilon) {
    const int64_t n_ref = s.values.extent(1);
    if (static_cast<int64_t>(mask.weights.size()) != n_ref) {
        std::ostringstream os;
        os << "mask length " << mask.weights.size() << " does not match similarity columns " << n_ref;
        throw DimensionError(os.str());
    }
    std::vector<double> bias(static_cast<size_t>(n_ref));
    for (int64_t j = 0; j < n_ref; ++j) {
        bias[static_cast<size_t>(j)] =
            std::log(static_cast<double>(mask.weights[static_cast<size_t>(j)]) +
                     static_cast<double>(epsilon));
    }
    Tensor out(s.values.shape());
    const int64_t rows = s.values.extent(0);
    const float* src = s.values.data();
    float* dst = out.data();
    parallel_for(rows, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            for (int64_t j = 0; j < n_ref; ++j) {
                dst[i * n_ref + j] = static_cast<float>(
                    static_cast<double>(src[i * n_ref + j]) + bias[static_cast<size_t>(j)]);
            }
        }
    });
    return SimilarityMatrix{std::move(out), true};
}

MatchResult match_targets(const SimilarityMatrix& s, const ReferenceTokens& ref) {
    if (s.values.extent(1) != ref.n_ref()) {
        throw DimensionError("similarity columns do not match reference token count");
    }
    ArgmaxRows am = argmax_rows(s.values);
    MatchResult m;
    m.target_index = std::move(am.indices);
    m.max_sim = std::move(am.maxima);
    return m;
}

MatchResult gate_by_threshold(MatchResult m, float tau) {
    m.gate.resize(m.max_sim.size());
    for (size_t i = 0; i < m.max_sim.size(); ++i) {
        m.gate[i] = m.max_sim[i] > tau ? 1 : 0;
    }
    return m;
}

FeatureBatch extrapolate(const FeatureBatch& src, const Tensor& targets,
                         const std::vector<uint8_t>& gate, float alpha) {
    if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
    const int64_t n_rows = src.batch() * src.n_tokens();
    const int64_t d = src.features();
    if (targets.rank() != 2 || targets.extent(0) != n_rows || targets.extent(1) != d) {
        throw DimensionError("target rows " + shape_to_string(targets.shape()) +
                             " do not align with source " + shape_to_string(src.tokens.shape()));
    }
    if (static_cast<int64_t>(gate.size()) != n_rows) {
        throw DimensionError("gate length does not match source token count");
    }
    Tensor out(src.tokens.shape());
    const float* ps = src.tokens.data();
    const float* pt = targets.data();
    float* po = out.data();
    const double a = static_cast<double>(alpha);
    parallel_for(n_rows, [&](int64_t begin, int64_t end) {
        for (int64_t r = begin; r < end; ++r) {
            const float* xs = ps + r * d;
            const float* xt = pt + r * d;
            float* xo = po + r * d;
            if (!gate[static_cast<size_t>(r)] || alpha == 0.0f) {
                std::memcpy(xo, xs, static_cast<size_t>(d) * sizeof(float));
                continue;
            }
            for (int64_t k = 0; k < d; ++k) {
                const double diff = static_cast<double>(xs[k]) - static_cast<double>(xt[k]);
                // diff == 0 keeps the source bits (self-match fixed point)
                xo[k] = diff == 0.0 ? xs[k] : static_cast<float>(static_cast<double>(xs[k]) + a * diff);
            }
        }
    });
    return FeatureBatch(std::move(out));
}

MergeResult merge_detailed(const FeatureBatch& src, const ReferenceTokens& ref,
                               float alpha, float tau, float epsilon) {
    if (!std::isfinite(alpha)) throw ConfigError("alpha must be finite");
    if (!(epsilon > 0.0f)) throw ConfigError("epsilon must be > 0");
    SimilarityMatrix s = cosine_similarity(src, ref);
    if (ref.mask) {
        s = apply_mask_bias(s, *ref.mask, epsilon);
    }
    MatchResult m = gate_by_threshold(match_targets(s, ref), tau);
    Tensor targets = gather_rows(ref.tokens, m.target_index);
    FeatureBatch merged = extrapolate(src, targets, m.gate, alpha);
    return MergeResult{std::move(merged), std::move(m)};
}

FeatureBatch merge(const FeatureBatch& src, const ReferenceTokens& ref,
                     float alpha, float tau, float epsilon) {
    return merge_detailed(src, ref, alpha, tau, epsilon).merged;
}

float alpha_at(const MergeConfig& cfg, int64_t t) {
    if (t < cfg.t_lo || t > cfg.t_hi) return 0.0f;
    if (cfg.schedule == ScheduleKind::Constant) return cfg.alpha;
    if (cfg.t_hi == cfg.t_lo) return cfg.alpha;
    const double frac = static_cast<double>(t - cfg.t_lo) / static_cast<double>(cfg.t_hi - cfg.t_lo);
    return static_cast<float>(static_cast<double>(cfg.alpha) * frac);
}

} // namespace negtome
