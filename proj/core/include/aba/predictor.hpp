#pragma once

#include <utility>
#include <vector>

#include "aba/biattention.hpp"
#include "aba/tensor.hpp"

namespace aba {

// An answer span over passage token indices. A span at the last token
// (begin == end == l-1) encodes "no answer".
struct SpanPrediction {
    std::size_t begin = 0;
    std::size_t end = 0;
    double score = 0.0;  // begin_logit + end_logit of the chosen pair
    bool is_unanswerable = false;
};

// Independent linear projections of the fused features onto begin/end
// logits.
struct SpanHead {
    TensorPtr begin_w;  // [4D x 1]
    TensorPtr end_w;    // [4D x 1]

    static SpanHead init(std::size_t fused_width, Rng& rng);
};

// Two [l] logit vectors. Masked (padding) positions are forced to kMaskValue;
// the last real token stays unmasked so the no-answer position always exists.
std::pair<TensorPtr, TensorPtr> span_logits(const FusedRepresentation& fused,
                                            const SpanHead& head,
                                            const std::vector<bool>& mask);

// Argmax over pairs (b, e) with b <= e <= b + max_len - 1 of
// begin[b] + end[e]; ties broken by smallest b, then smallest e.
SpanPrediction decode_span(const std::vector<double>& begin_logits,
                           const std::vector<double>& end_logits, std::size_t max_len);

// Sum of the begin and end cross-entropies. Unanswerable gold examples use
// gold_begin == gold_end == l-1.
TensorPtr span_loss(const TensorPtr& begin_logits, const TensorPtr& end_logits,
                    std::size_t gold_begin, std::size_t gold_end);

}  // namespace aba
