#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "negtome/harness.hpp"
#include "negtome/tensor.hpp"

namespace negtome {

// Diversity over a set of flattened feature vectors. The similarity here is
// plain cosine over the flattened features, a desk-scale stand-in for a
// learned perceptual metric; reports must carry that label.
struct DiversityReport {
    double mean_pairwise_similarity = 0.0;
    double diversity = 0.0; // 1 - mean_pairwise_similarity, in [0, 2]
    Tensor pair_matrix;     // n x n, symmetric, unit diagonal
};

struct CategoryCounts {
    std::map<std::string, int64_t> counts;
};

// Mean cosine similarity over unordered pairs; diversity = 1 - mean.
// Requires >= 2 vectors of equal length. Bit-identical vectors score
// exactly 1, so identical inputs give diversity exactly 0.
DiversityReport pairwise_diversity(const std::vector<std::vector<float>>& vectors);

// Shannon entropy in nats: -sum p_i ln p_i with p_i = count_i / total.
// Zero counts contribute nothing; an all-zero total is an input error.
double entropy_score(std::span<const int64_t> counts);
double entropy_score(const CategoryCounts& counts);

// Max cosine similarity between the flattened feature vector and each
// asset's flattened tokens, optionally excluding one asset index.
double max_ref_similarity(std::span<const float> feature, const AssetStore& store,
                          std::optional<int64_t> exclude = std::nullopt);

// timed_with / timed_without; the baseline must be positive.
double overhead_ratio(double timed_with, double timed_without);

// Cosine of two equal-length vectors in f64 with a 1e-12 zero guard;
// bit-identical vectors return exactly 1.
double cosine_flat(std::span<const float> a, std::span<const float> b);

} // namespace negtome
