#include "negtome/metrics.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace negtome {

double cosine_flat(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        std::ostringstream os;
        os << "vector lengths differ: " << a.size() << " vs " << b.size();
        throw InputError(os.str());
    }
    if (a.empty()) throw InputError("cosine of empty vectors");
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0) {
        double sq = 0.0;
        for (float v : a) sq += static_cast<double>(v) * v;
        return sq == 0.0 ? 0.0 : 1.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    const double denom = std::max(std::sqrt(na * nb), 1e-12);
    return dot / denom;
}

DiversityReport pairwise_diversity(const std::vector<std::vector<float>>& vectors) {
    const int64_t n = static_cast<int64_t>(vectors.size());
    if (n < 2) throw InputError("pairwise_diversity needs at least 2 vectors");
    for (const auto& v : vectors) {
        if (v.size() != vectors[0].size()) {
            throw InputError("pairwise_diversity vectors must have equal lengths");
        }
    }
    DiversityReport rep;
    rep.pair_matrix = Tensor({n, n});
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        rep.pair_matrix(i, i) = 1.0f;
        for (int64_t j = i + 1; j < n; ++j) {
            const double s = cosine_flat(vectors[static_cast<size_t>(i)],
                                         vectors[static_cast<size_t>(j)]);
            rep.pair_matrix(i, j) = static_cast<float>(s);
            rep.pair_matrix(j, i) = static_cast<float>(s);
            sum += s;
        }
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    rep.mean_pairwise_similarity = sum / pairs;
    rep.diversity = 1.0 - rep.mean_pairwise_similarity;
    return rep;
}

double entropy_score(std::span<const int64_t> counts) {
    int64_t total = 0;
    for (int64_t c : counts) {
        if (c < 0) throw InputError("counts must be non-negative");
        total += c;
    }
    if (total == 0) throw InputError("entropy of an all-zero distribution");
    double e = 0.0;
    for (int64_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        e -= p * std::log(p);
    }
    return e;
}

double entropy_score(const CategoryCounts& counts) {
    std::vector<int64_t> flat;
    flat.reserve(counts.counts.size());
    for (const auto& [label, c] : counts.counts) flat.push_back(c);
    return entropy_score(flat);
}

double max_ref_similarity(std::span<const float> feature, const AssetStore& store,
                          std::optional<int64_t> exclude) {
    double best = -2.0;
    bool any = false;
    for (size_t a = 0; a < store.assets.size(); ++a) {
        if (exclude && static_cast<int64_t>(a) == *exclude) continue;
        const Tensor& tok = store.assets[a].ref.tokens;
        const double s = cosine_flat(feature, tok.values());
        best = std::max(best, s);
        any = true;
    }
    if (!any) throw InputError("no assets left after exclusion");
    return best;
}

double overhead_ratio(double timed_with, double timed_without) {
    if (!(timed_without > 0.0)) throw InputError("baseline duration must be positive");
    return timed_with / timed_without;
}

} // namespace negtome
