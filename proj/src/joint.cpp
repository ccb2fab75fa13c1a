#include "negtome/joint.hpp"

#include <cstring>
#include <sstream>

namespace negtome {

namespace {

// Copies tokens [token_begin, token_end) of every batch item into a new
// B x (end-begin) x D tensor.
Tensor slice_tokens(const Tensor& t, int64_t token_begin, int64_t token_end) {
    const int64_t b = t.extent(0);
    const int64_t n = t.extent(1);
    const int64_t d = t.extent(2);
    const int64_t m = token_end - token_begin;
    Tensor out({b, m, d});
    for (int64_t i = 0; i < b; ++i) {
        std::memcpy(out.data() + i * m * d, t.data() + (i * n + token_begin) * d,
                    static_cast<size_t>(m * d) * sizeof(float));
    }
    return out;
}

} // namespace

JointTokens split_joint(const Tensor& joint, int64_t n_text) {
    if (joint.rank() != 3) {
        throw DimensionError("split_joint expects B x N x D tokens, got " +
                             shape_to_string(joint.shape()));
    }
    const int64_t seq = joint.extent(1);
    if (n_text < 0 || n_text >= seq) {
        std::ostringstream os;
        os << "n_text " << n_text << " must lie in [0, " << seq << ") for sequence length " << seq;
        throw DimensionError(os.str());
    }
    JointTokens jt;
    if (n_text > 0) jt.text = slice_tokens(joint, 0, n_text);
    jt.img = slice_tokens(joint, n_text, seq);
    return jt;
}

Tensor concat_joint(const JointTokens& jt) {
    const int64_t b = jt.img.extent(0);
    const int64_t d = jt.img.extent(2);
    const int64_t n_text = jt.n_text();
    if (jt.text && (jt.text->extent(0) != b || jt.text->extent(2) != d)) {
        throw DimensionError("text part " + shape_to_string(jt.text->shape()) +
                             " does not align with image part " + shape_to_string(jt.img.shape()));
    }
    const int64_t n_img = jt.n_img();
    const int64_t seq = n_text + n_img;
    Tensor out({b, seq, d});
    for (int64_t i = 0; i < b; ++i) {
        if (n_text > 0) {
            std::memcpy(out.data() + i * seq * d, jt.text->data() + i * n_text * d,
                        static_cast<size_t>(n_text * d) * sizeof(float));
        }
        std::memcpy(out.data() + (i * seq + n_text) * d, jt.img.data() + i * n_img * d,
                    static_cast<size_t>(n_img * d) * sizeof(float));
    }
    return out;
}

Tensor merge_joint(const JointTokens& jt, const ReferenceTokens& ref_img,
                     float alpha, float tau, float epsilon) {
    FeatureBatch merged = merge(FeatureBatch(jt.img), ref_img, alpha, tau, epsilon);
    JointTokens out;
    out.text = jt.text;
    out.img = std::move(merged.tokens);
    return concat_joint(out);
}

} // namespace negtome
