#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "negtome/tensor.hpp"

namespace negtome {

// Attention-block output being guided: B x N x D token features.
struct FeatureBatch {
    Tensor tokens;

    FeatureBatch() = default;
    explicit FeatureBatch(Tensor t);

    int64_t batch() const { return tokens.extent(0); }
    int64_t n_tokens() const { return tokens.extent(1); }
    int64_t features() const { return tokens.extent(2); }
};

// Per-reference-token weight in [0, 1]. Length matches the reference.
struct MaskVector {
    std::vector<float> weights;
};

// Reference tokens (N_ref x D) the source is pushed away from, with an
// optional mask restricting which reference regions may be matched.
struct ReferenceTokens {
    Tensor tokens;
    std::optional<MaskVector> mask;

    ReferenceTokens() = default;
    explicit ReferenceTokens(Tensor t, std::optional<MaskVector> m = std::nullopt);

    int64_t n_ref() const { return tokens.extent(0); }
    int64_t features() const { return tokens.extent(1); }
};

// (B*N) x N_ref cosine similarities, optionally shifted by the mask bias.
struct SimilarityMatrix {
    Tensor values;
    bool biased = false;
};

// Per source token: best reference row, its similarity, and whether the
// token passed the threshold gate. `gate` stays empty until
// gate_by_threshold fills it.
struct MatchResult {
    std::vector<int64_t> target_index;
    std::vector<float> max_sim;
    std::vector<uint8_t> gate;
};

enum class ScheduleKind { Constant, LinearDecay };

// Merge strength and when to apply it. The window is inclusive on both
// ends, t_hi >= t_lo, timesteps counted down from 1000.
struct MergeConfig {
    float alpha = 0.9f;
    float tau = 0.7f;
    int64_t t_hi = 1000;
    int64_t t_lo = 600;
    ScheduleKind schedule = ScheduleKind::Constant;
    float epsilon = 1e-6f;
};

void validate_merge_config(const MergeConfig& cfg);

// S[i][j] = <normalize(src row i), normalize(ref row j)>, source rows taken
// in row-major (batch, token) order. Entries are clamped to [-1, 1] before
// the f32 round so accumulated dust cannot push a cosine past 1.
SimilarityMatrix cosine_similarity(const FeatureBatch& src, const ReferenceTokens& ref);

// S'[i][j] = S[i][j] + ln(mask[j] + epsilon). A zero mask entry shifts the
// column by ln(epsilon), pushing it out of contention for any usable tau.
SimilarityMatrix apply_mask_bias(const SimilarityMatrix& s, const MaskVector& mask, float epsilon);

// Row argmax of the (possibly biased) similarity matrix; ties break to the
// lowest reference index. gate is left empty.
MatchResult match_targets(const SimilarityMatrix& s, const ReferenceTokens& ref);

// gate[i] = max_sim[i] > tau, strict.
MatchResult gate_by_threshold(MatchResult m, float tau);

// Gated rows: out = (1 + alpha) * src - alpha * target, evaluated as
// src + alpha * (src - target) in f64 so an exact self-match stays
// bit-identical. Ungated rows are copied bit-exactly.
FeatureBatch extrapolate(const FeatureBatch& src, const Tensor& targets,
                         const std::vector<uint8_t>& gate, float alpha);

struct MergeResult {
    FeatureBatch merged;
    MatchResult match;
};

// Full pipeline: cosine similarity, mask bias when the reference carries a
// mask, matching, gating, gather, extrapolation. Output has src's shape.
MergeResult merge_detailed(const FeatureBatch& src, const ReferenceTokens& ref,
                               float alpha, float tau, float epsilon = 1e-6f);

FeatureBatch merge(const FeatureBatch& src, const ReferenceTokens& ref,
                     float alpha, float tau, float epsilon = 1e-6f);

// Merge strength at timestep t: 0 outside [t_lo, t_hi]; inside, either the
// constant alpha or alpha * (t - t_lo) / (t_hi - t_lo) for linear decay.
float alpha_at(const MergeConfig& cfg, int64_t t);

} // namespace negtome
