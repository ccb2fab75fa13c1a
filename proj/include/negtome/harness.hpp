#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "negtome/kernel.hpp"

namespace negtome {

struct ToyDims {
    int64_t n_blocks = 4;
    int64_t n_tokens = 64; // token grid is square: n_tokens = n * n
    int64_t d_model = 32;
    int64_t d_hidden = 128;
};

// Per-block parameters. Projection matrices are stored [out][in] so a row
// of x maps through matmul_nt(x, w).
struct BlockParams {
    Tensor wq, wk, wv; // d_model x d_model
    Tensor w1;         // d_hidden x d_model
    Tensor w2;         // d_model x d_hidden
    std::vector<float> cond_bias; // d_hidden, used by the conditional branch
};

struct ToyModel {
    ToyDims dims;
    uint64_t seed = 0;
    std::vector<BlockParams> blocks;
};

enum class RefMode { None, FirstInBatch, AllPairs, ExternalAsset };

// One multi-step batched generation. block_lo > block_hi means the merge
// stage is disabled in every block.
struct RunConfig {
    int64_t batch = 1;
    int64_t steps = 1;
    uint64_t seed = 0;
    MergeConfig merge;
    RefMode ref_mode = RefMode::None;
    int64_t block_lo = 0;
    int64_t block_hi = -1; // defaulted to n_blocks - 1 by normalize_block_range
    std::optional<double> cfg_like_scale;
};

struct Asset {
    ReferenceTokens ref; // mask already resized to the asset's token count
    std::string label;
};

struct AssetStore {
    std::vector<Asset> assets;
    bool empty() const { return assets.empty(); }
};

// Deterministic: equal (seed, dims) give bit-identical parameters. All draws
// come from per-block SplitMix64 streams (see prng.hpp for the equations).
ToyModel init_model(uint64_t seed, const ToyDims& dims);

// softmax(Q K^T / sqrt(D)) V per batch item, softmax rows in f64. No
// residual; this is the raw attention output the merge stage sees.
Tensor attention_block(const ToyModel& model, int64_t block, const Tensor& x);

// x + w2 * tanh(w1 * x [+ cond_bias]), the per-token feed-forward branch.
Tensor mlp_block(const ToyModel& model, int64_t block, const Tensor& x, bool conditioned);

// Row-wise softmax of scale * s, computed in f64, rounded to f32.
Tensor softmax_rows(const Tensor& s, double scale);

// Descending timesteps mapped into [0, 1000]: round(1000 * (T-1-s) / (T-1)),
// or {1000} for a single step.
std::vector<int64_t> timestep_sequence(int64_t steps);

// One reverse step: attention -> merge (blocks inside the range, when
// alpha_at(t) != 0) -> MLP per block, then the decaying noise update.
// This overload serves None / FirstInBatch / AllPairs modes.
Tensor denoise_step(const ToyModel& model, const Tensor& state, int64_t t, const RunConfig& run);

// ExternalAsset mode: refs holds one reference per batch item (or a single
// shared reference).
Tensor denoise_step(const ToyModel& model, const Tensor& state, int64_t t, const RunConfig& run,
                    const std::vector<ReferenceTokens>& refs);

// Full run: seeded init, T denoise steps, returns final B x N x D features.
// In ExternalAsset mode the best-matching asset is re-selected per item at
// every step where the merge is active.
Tensor run(const ToyModel& model, const RunConfig& run_cfg, const AssetStore* assets = nullptr);

// Asset maximizing the mean over source tokens of each token's best cosine
// similarity to the asset's tokens. Ties go to the lowest index. Returns
// (asset index, score).
std::pair<int64_t, double> select_reference_rag(const Tensor& src_tokens, const AssetStore& store);

// Area-average pooling of an H x W grid in [0, 1] down (or up) to the
// sqrt(n_tokens) x sqrt(n_tokens) token grid, flattened row-major.
MaskVector resize_mask(const Tensor& grid, int64_t n_tokens);

} // namespace negtome
