#pragma once

#include <optional>

#include "negtome/kernel.hpp"

namespace negtome {

// Text-first concatenated token sequence of a joint-attention block. The
// text part is absent when n_text is 0.
struct JointTokens {
    std::optional<Tensor> text; // B x N_text x D
    Tensor img;                 // B x N_img x D

    int64_t n_text() const { return text ? text->extent(1) : 0; }
    int64_t n_img() const { return img.extent(1); }
};

// Partitions B x (N_text + N_img) x D into text-first parts. n_text must
// leave at least one image token.
JointTokens split_joint(const Tensor& joint, int64_t n_text);

// Reassembles the sequence; concat_joint(split_joint(x, n)) == x bit-exactly.
Tensor concat_joint(const JointTokens& jt);

// text part passes through untouched; the image part goes through the
// merge kernel against image-only reference tokens.
Tensor merge_joint(const JointTokens& jt, const ReferenceTokens& ref_img,
                     float alpha, float tau, float epsilon = 1e-6f);

} // namespace negtome
