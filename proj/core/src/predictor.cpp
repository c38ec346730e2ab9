#include "aba/predictor.hpp"

#include <cmath>

#include "aba/encoder.hpp"
#include "aba/error.hpp"

namespace aba {

SpanHead SpanHead::init(std::size_t fused_width, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fused_width));
    return SpanHead{Tensor::uniform({fused_width, 1}, -bound, bound, rng, true),
                    Tensor::uniform({fused_width, 1}, -bound, bound, rng, true)};
}

std::pair<TensorPtr, TensorPtr> span_logits(const FusedRepresentation& fused,
                                            const SpanHead& head,
                                            const std::vector<bool>& mask) {
    const std::size_t l = fused.features->shape[0];
    if (mask.size() != l)
        throw DimensionError("span_logits: mask length " + std::to_string(mask.size()) +
                             " does not match " + shape_str(fused.features->shape));

    auto mask_vec = Tensor::create({l});
    for (std::size_t i = 0; i < l; ++i) mask_vec->data[i] = mask[i] ? 0.0 : kMaskValue;

    auto begin = add(reshape(matmul(fused.features, head.begin_w), {l}), mask_vec);
    auto end = add(reshape(matmul(fused.features, head.end_w), {l}), mask_vec);
    return {begin, end};
}

SpanPrediction decode_span(const std::vector<double>& begin_logits,
                           const std::vector<double>& end_logits, std::size_t max_len) {
    const std::size_t l = begin_logits.size();
    if (l == 0) throw DimensionError("decode_span: empty logits");
    if (end_logits.size() != l)
        throw DimensionError("decode_span: begin/end lengths disagree, " + std::to_string(l) +
                             " vs " + std::to_string(end_logits.size()));
    if (max_len == 0) throw ParameterError("decode_span: max_len must be positive");

    SpanPrediction best;
    best.score = -std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < l; ++b) {
        const std::size_t e_hi = std::min(l - 1, b + max_len - 1);
        for (std::size_t e = b; e <= e_hi; ++e) {
            const double score = begin_logits[b] + end_logits[e];
            if (score > best.score) {
                best.begin = b;
                best.end = e;
                best.score = score;
            }
        }
    }
    best.is_unanswerable = best.begin == l - 1 && best.end == l - 1;
    return best;
}

TensorPtr span_loss(const TensorPtr& begin_logits, const TensorPtr& end_logits,
                    std::size_t gold_begin, std::size_t gold_end) {
    return add(cross_entropy(begin_logits, gold_begin), cross_entropy(end_logits, gold_end));
}

}  // namespace aba
