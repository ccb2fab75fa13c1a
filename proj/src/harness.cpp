#include "negtome/harness.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "negtome/parallel.hpp"
#include "negtome/prng.hpp"

namespace negtome {

namespace {

// Stream tags; part of the documented seeding scheme.
constexpr uint64_t kTagParams = 0xA001;
constexpr uint64_t kTagPrompt = 0xA002;
constexpr uint64_t kTagInit = 0xA003;
constexpr uint64_t kTagNoise = 0xA004;

// Shared "prompt" component of the initial state; batch items start as
// prompt + per-item noise, which is what makes them collapse toward each
// other when no adversarial guidance is applied.
constexpr double kPromptScale = 2.0;
constexpr double kInitNoiseScale = 1.0;
constexpr double kStepNoiseScale = 0.05;

// Gains on the value and MLP output projections keep every block roughly
// non-expanding; trajectories must stay laminar for an unguided batch to
// collapse toward the shared component.
constexpr double kValueGain = 0.9;
constexpr double kMlpGain = 0.9;

Tensor gaussian_tensor(SplitMix64& g, std::vector<int64_t> shape, double scale) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) {
        t.data()[i] = static_cast<float>(g.gaussian() * scale);
    }
    return t;
}

void validate_run(const ToyModel& model, const RunConfig& run) {
    if (run.batch < 1) throw ConfigError("batch must be >= 1");
    if (run.steps < 1) throw ConfigError("steps must be >= 1");
    validate_merge_config(run.merge);
    const bool range_empty = run.block_lo > run.block_hi;
    if (!range_empty && (run.block_lo < 0 || run.block_hi >= model.dims.n_blocks)) {
        std::ostringstream os;
        os << "block_range [" << run.block_lo << ", " << run.block_hi
           << "] outside [0, " << model.dims.n_blocks << ")";
        throw ConfigError(os.str());
    }
}

// item i's N x D token slice of a B x N x D state, copied.
Tensor item_tokens(const Tensor& state, int64_t item) {
    const int64_t n = state.extent(1);
    const int64_t d = state.extent(2);
    std::vector<float> data(state.data() + item * n * d, state.data() + (item + 1) * n * d);
    return Tensor({n, d}, std::move(data));
}

void softmax_rows_f64(const float* src, int64_t rows, int64_t cols, double scale,
                      std::vector<double>& out) {
    out.resize(static_cast<size_t>(rows * cols));
    for (int64_t i = 0; i < rows; ++i) {
        const float* r = src + i * cols;
        double m = static_cast<double>(r[0]) * scale;
        for (int64_t j = 1; j < cols; ++j) m = std::max(m, static_cast<double>(r[j]) * scale);
        double sum = 0.0;
        double* o = out.data() + i * cols;
        for (int64_t j = 0; j < cols; ++j) {
            o[j] = std::exp(static_cast<double>(r[j]) * scale - m);
            sum += o[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < cols; ++j) o[j] *= inv;
    }
}

// Applies the merge stage for one step at one block, given the per-item
// attention outputs. Items listed in `skip` keep their attention output.
void merge_stage(Tensor& attn, const RunConfig& run, float alpha,
                 const std::vector<ReferenceTokens>& per_item_refs) {
    const int64_t b = attn.extent(0);
    for (int64_t i = 0; i < b; ++i) {
        const ReferenceTokens* ref = nullptr;
        if (static_cast<int64_t>(per_item_refs.size()) == b) {
            ref = &per_item_refs[static_cast<size_t>(i)];
        } else if (per_item_refs.size() == 1) {
            ref = &per_item_refs[0];
        }
        if (!ref || ref->tokens.empty()) continue;
        Tensor item = item_tokens(attn, i);
        FeatureBatch src(Tensor({1, item.extent(0), item.extent(1)},
                                std::vector<float>(item.data(), item.data() + item.size())));
        FeatureBatch merged = merge(src, *ref, alpha, run.merge.tau, run.merge.epsilon);
        std::memcpy(attn.data() + i * item.size(), merged.tokens.data(),
                    static_cast<size_t>(item.size()) * sizeof(float));
    }
}

// References per item for the batch modes, built from the pre-merge
// attention outputs of this block.
std::vector<ReferenceTokens> batch_refs(const Tensor& attn, RefMode mode) {
    const int64_t b = attn.extent(0);
    const int64_t n = attn.extent(1);
    const int64_t d = attn.extent(2);
    std::vector<ReferenceTokens> refs(static_cast<size_t>(b));
    if (mode == RefMode::FirstInBatch) {
        const Tensor first = item_tokens(attn, 0);
        for (int64_t i = 1; i < b; ++i) {
            refs[static_cast<size_t>(i)] = ReferenceTokens(first);
        }
        // item 0 keeps an empty ref and is never modified
    } else if (mode == RefMode::AllPairs) {
        for (int64_t i = 0; i < b; ++i) {
            if (b == 1) break;
            std::vector<float> rows;
            rows.reserve(static_cast<size_t>((b - 1) * n * d));
            for (int64_t j = 0; j < b; ++j) {
                if (j == i) continue;
                const float* p = attn.data() + j * n * d;
                rows.insert(rows.end(), p, p + n * d);
            }
            refs[static_cast<size_t>(i)] = ReferenceTokens(Tensor({(b - 1) * n, d}, std::move(rows)));
        }
    }
    return refs;
}

Tensor blocks_pass(const ToyModel& model, const Tensor& state, const RunConfig& run, float alpha,
                   bool conditioned, const std::vector<ReferenceTokens>* external_refs) {
    Tensor x = state;
    const bool merging = alpha != 0.0f && run.ref_mode != RefMode::None;
    for (int64_t b = 0; b < model.dims.n_blocks; ++b) {
        Tensor attn = attention_block(model, b, x);
        if (merging && b >= run.block_lo && b <= run.block_hi) {
            if (run.ref_mode == RefMode::ExternalAsset) {
                merge_stage(attn, run, alpha, *external_refs);
            } else {
                merge_stage(attn, run, alpha, batch_refs(attn, run.ref_mode));
            }
        }
        x = mlp_block(model, b, attn, conditioned);
    }
    return x;
}

Tensor step_core(const ToyModel& model, const Tensor& state, int64_t t, const RunConfig& run,
                 const std::vector<ReferenceTokens>* external_refs) {
    if (state.rank() != 3 || state.extent(0) != run.batch ||
        state.extent(1) != model.dims.n_tokens || state.extent(2) != model.dims.d_model) {
        throw DimensionError("state shape " + shape_to_string(state.shape()) +
                             " does not match the model/run configuration");
    }
    const float alpha = alpha_at(run.merge, t);
    const bool merging = alpha != 0.0f && run.ref_mode != RefMode::None;
    if (merging && run.ref_mode == RefMode::ExternalAsset) {
        if (!external_refs || external_refs->empty()) {
            throw ConfigError("external-asset mode requires reference tokens when the merge is active");
        }
        if (external_refs->size() != 1 &&
            static_cast<int64_t>(external_refs->size()) != run.batch) {
            throw ConfigError("external reference count must be 1 or match the batch size");
        }
    }

    Tensor out = blocks_pass(model, state, run, alpha, true, external_refs);
    if (run.cfg_like_scale) {
        const Tensor uncond = blocks_pass(model, state, run, alpha, false, external_refs);
        const double w = *run.cfg_like_scale;
        for (int64_t i = 0; i < out.size(); ++i) {
            const double c = static_cast<double>(out.data()[i]);
            const double u = static_cast<double>(uncond.data()[i]);
            out.data()[i] = static_cast<float>(u + w * (c - u));
        }
    }

    // decaying seeded noise keeps trajectories distinct across steps
    const double sigma = kStepNoiseScale * static_cast<double>(t) / 1000.0;
    if (sigma > 0.0) {
        const int64_t per_item = model.dims.n_tokens * model.dims.d_model;
        for (int64_t i = 0; i < run.batch; ++i) {
            SplitMix64 g(derive_seed(run.seed, {kTagNoise, static_cast<uint64_t>(t),
                                                static_cast<uint64_t>(i)}));
            float* p = out.data() + i * per_item;
            for (int64_t k = 0; k < per_item; ++k) {
                p[k] = static_cast<float>(static_cast<double>(p[k]) + sigma * g.gaussian());
            }
        }
    }
    return out;
}

} // namespace

ToyModel init_model(uint64_t seed, const ToyDims& dims) {
    if (dims.n_blocks < 1 || dims.n_tokens < 1 || dims.d_model < 1 || dims.d_hidden < 1) {
        throw ConfigError("model dimensions must all be >= 1");
    }
    ToyModel m;
    m.dims = dims;
    m.seed = seed;
    m.blocks.reserve(static_cast<size_t>(dims.n_blocks));
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(dims.d_model));
    const double out_scale = 1.0 / std::sqrt(static_cast<double>(dims.d_hidden));
    for (int64_t b = 0; b < dims.n_blocks; ++b) {
        SplitMix64 g(derive_seed(seed, {kTagParams, static_cast<uint64_t>(b)}));
        BlockParams p;
        p.wq = gaussian_tensor(g, {dims.d_model, dims.d_model}, proj_scale);
        p.wk = gaussian_tensor(g, {dims.d_model, dims.d_model}, proj_scale);
        p.wv = gaussian_tensor(g, {dims.d_model, dims.d_model}, kValueGain * proj_scale);
        p.w1 = gaussian_tensor(g, {dims.d_hidden, dims.d_model}, proj_scale);
        p.w2 = gaussian_tensor(g, {dims.d_model, dims.d_hidden}, kMlpGain * out_scale);
        p.cond_bias.resize(static_cast<size_t>(dims.d_hidden));
        for (auto& v : p.cond_bias) v = static_cast<float>(g.gaussian());
        m.blocks.push_back(std::move(p));
    }
    return m;
}

Tensor softmax_rows(const Tensor& s, double scale) {
    if (s.rank() != 2) {
        throw DimensionError("softmax_rows expects a rank-2 tensor, got " +
                             shape_to_string(s.shape()));
    }
    std::vector<double> p;
    softmax_rows_f64(s.data(), s.extent(0), s.extent(1), scale, p);
    Tensor out(s.shape());
    for (int64_t i = 0; i < out.size(); ++i) out.data()[i] = static_cast<float>(p[static_cast<size_t>(i)]);
    return out;
}

Tensor attention_block(const ToyModel& model, int64_t block, const Tensor& x) {
    if (block < 0 || block >= model.dims.n_blocks) {
        throw ConfigError("block index out of range");
    }
    if (x.rank() != 3 || x.extent(2) != model.dims.d_model) {
        throw DimensionError("attention_block expects B x N x " +
                             std::to_string(model.dims.d_model) + " input, got " +
                             shape_to_string(x.shape()));
    }
    const BlockParams& p = model.blocks[static_cast<size_t>(block)];
    const int64_t batch = x.extent(0);
    const int64_t n = x.extent(1);
    const int64_t d = x.extent(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor out(x.shape());
    std::vector<double> probs;
    for (int64_t i = 0; i < batch; ++i) {
        const Tensor xi = item_tokens(x, i);
        const Tensor q = matmul_nt(xi, p.wq);
        const Tensor k = matmul_nt(xi, p.wk);
        const Tensor v = matmul_nt(xi, p.wv);
        const Tensor logits = matmul_nt(q, k); // N x N
        softmax_rows_f64(logits.data(), n, n, scale, probs);
        float* dst = out.data() + i * n * d;
        const float* pv = v.data();
        parallel_for(n, [&](int64_t begin, int64_t end) {
            for (int64_t r = begin; r < end; ++r) {
                const double* pr = probs.data() + r * n;
                for (int64_t c = 0; c < d; ++c) {
                    double acc = 0.0;
                    for (int64_t kk = 0; kk < n; ++kk) {
                        acc += pr[kk] * static_cast<double>(pv[kk * d + c]);
                    }
                    dst[r * d + c] = static_cast<float>(acc);
                }
            }
        });
    }
    return out;
}

Tensor mlp_block(const ToyModel& model, int64_t block, const Tensor& x, bool conditioned) {
    if (block < 0 || block >= model.dims.n_blocks) {
        throw ConfigError("block index out of range");
    }
    const BlockParams& p = model.blocks[static_cast<size_t>(block)];
    const int64_t batch = x.extent(0);
    const int64_t n = x.extent(1);
    const int64_t d = x.extent(2);
    const int64_t h = model.dims.d_hidden;
    Tensor out(x.shape());
    for (int64_t i = 0; i < batch; ++i) {
        const Tensor xi = item_tokens(x, i);
        Tensor hidden = matmul_nt(xi, p.w1); // N x H
        float* ph = hidden.data();
        parallel_for(n, [&](int64_t begin, int64_t end) {
            for (int64_t r = begin; r < end; ++r) {
                for (int64_t c = 0; c < h; ++c) {
                    double v = static_cast<double>(ph[r * h + c]);
                    if (conditioned) v += static_cast<double>(p.cond_bias[static_cast<size_t>(c)]);
                    ph[r * h + c] = static_cast<float>(std::tanh(v));
                }
            }
        });
        const Tensor y = matmul_nt(hidden, p.w2); // N x D
        float* dst = out.data() + i * n * d;
        const float* px = xi.data();
        const float* py = y.data();
        for (int64_t k = 0; k < n * d; ++k) {
            dst[k] = static_cast<float>(static_cast<double>(px[k]) + static_cast<double>(py[k]));
        }
    }
    return out;
}

std::vector<int64_t> timestep_sequence(int64_t steps) {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    std::vector<int64_t> ts;
    ts.reserve(static_cast<size_t>(steps));
    if (steps == 1) {
        ts.push_back(1000);
        return ts;
    }
    for (int64_t s = 0; s < steps; ++s) {
        ts.push_back(static_cast<int64_t>(
            std::llround(1000.0 * static_cast<double>(steps - 1 - s) / static_cast<double>(steps - 1))));
    }
    return ts;
}

Tensor denoise_step(const ToyModel& model, const Tensor& state, int64_t t, const RunConfig& run) {
    validate_run(model, run);
    return step_core(model, state, t, run, nullptr);
}

Tensor denoise_step(const ToyModel& model, const Tensor& state, int64_t t, const RunConfig& run,
                    const std::vector<ReferenceTokens>& refs) {
    validate_run(model, run);
    return step_core(model, state, t, run, &refs);
}

Tensor run(const ToyModel& model, const RunConfig& run_cfg, const AssetStore* assets) {
    validate_run(model, run_cfg);
    if (run_cfg.ref_mode == RefMode::ExternalAsset && (!assets || assets->empty())) {
        throw ConfigError("external-asset mode requires a non-empty asset store");
    }
    const int64_t n = model.dims.n_tokens;
    const int64_t d = model.dims.d_model;

    Tensor state({run_cfg.batch, n, d});
    {
        SplitMix64 pg(derive_seed(run_cfg.seed, {kTagPrompt}));
        Tensor prompt = gaussian_tensor(pg, {n, d}, kPromptScale);
        for (int64_t i = 0; i < run_cfg.batch; ++i) {
            SplitMix64 g(derive_seed(run_cfg.seed, {kTagInit, static_cast<uint64_t>(i)}));
            float* p = state.data() + i * n * d;
            for (int64_t k = 0; k < n * d; ++k) {
                p[k] = static_cast<float>(static_cast<double>(prompt.data()[k]) +
                                          kInitNoiseScale * g.gaussian());
            }
        }
    }

    for (int64_t t : timestep_sequence(run_cfg.steps)) {
        const float alpha = alpha_at(run_cfg.merge, t);
        if (run_cfg.ref_mode == RefMode::ExternalAsset && alpha != 0.0f) {
            std::vector<ReferenceTokens> refs;
            refs.reserve(static_cast<size_t>(run_cfg.batch));
            for (int64_t i = 0; i < run_cfg.batch; ++i) {
                const auto [idx, score] = select_reference_rag(item_tokens(state, i), *assets);
                (void)score;
                refs.push_back(assets->assets[static_cast<size_t>(idx)].ref);
            }
            state = step_core(model, state, t, run_cfg, &refs);
        } else {
            state = step_core(model, state, t, run_cfg, nullptr);
        }
    }
    return state;
}

std::pair<int64_t, double> select_reference_rag(const Tensor& src_tokens, const AssetStore& store) {
    if (store.empty()) throw ConfigError("asset store is empty");
    if (src_tokens.rank() != 2) {
        throw DimensionError("select_reference_rag expects N x D source tokens, got " +
                             shape_to_string(src_tokens.shape()));
    }
    FeatureBatch src(Tensor({1, src_tokens.extent(0), src_tokens.extent(1)},
                            std::vector<float>(src_tokens.data(),
                                               src_tokens.data() + src_tokens.size())));
    int64_t best = 0;
    double best_score = -2.0;
    for (size_t a = 0; a < store.assets.size(); ++a) {
        const SimilarityMatrix s = cosine_similarity(src, store.assets[a].ref);
        const ArgmaxRows am = argmax_rows(s.values);
        double mean = 0.0;
        for (float v : am.maxima) mean += static_cast<double>(v);
        mean /= static_cast<double>(am.maxima.size());
        if (mean > best_score) {
            best_score = mean;
            best = static_cast<int64_t>(a);
        }
    }
    return {best, best_score};
}

MaskVector resize_mask(const Tensor& grid, int64_t n_tokens) {
    if (grid.rank() != 2) {
        throw DimensionError("resize_mask expects an H x W grid, got " +
                             shape_to_string(grid.shape()));
    }
    for (float v : grid.values()) {
        if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("mask grid values must lie in [0, 1]");
    }
    const auto side = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n_tokens))));
    if (n_tokens < 1 || side * side != n_tokens) {
        throw ConfigError("n_tokens " + std::to_string(n_tokens) +
                          " is not a perfect square; the token grid is assumed square");
    }
    const int64_t hh = grid.extent(0);
    const int64_t ww = grid.extent(1);
    MaskVector mv;
    mv.weights.resize(static_cast<size_t>(n_tokens));
    for (int64_t i = 0; i < side; ++i) {
        const double y0 = static_cast<double>(i) * hh / side;
        const double y1 = static_cast<double>(i + 1) * hh / side;
        for (int64_t j = 0; j < side; ++j) {
            const double x0 = static_cast<double>(j) * ww / side;
            const double x1 = static_cast<double>(j + 1) * ww / side;
            double acc = 0.0;
            for (int64_t r = static_cast<int64_t>(std::floor(y0)); r < hh && r < y1; ++r) {
                const double ry = std::min(y1, static_cast<double>(r + 1)) -
                                  std::max(y0, static_cast<double>(r));
                if (ry <= 0.0) continue;
                for (int64_t c = static_cast<int64_t>(std::floor(x0)); c < ww && c < x1; ++c) {
                    const double rx = std::min(x1, static_cast<double>(c + 1)) -
                                      std::max(x0, static_cast<double>(c));
                    if (rx <= 0.0) continue;
                    acc += ry * rx * static_cast<double>(grid(r, c));
                }
            }
            const double area = (y1 - y0) * (x1 - x0);
            mv.weights[static_cast<size_t>(i * side + j)] = static_cast<float>(acc / area);
        }
    }
    return mv;
}

} // namespace negtome
