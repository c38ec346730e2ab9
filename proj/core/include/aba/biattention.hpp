#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aba/hos.hpp"
#include "aba/tensor.hpp"

namespace aba {

// Weights of the trilinear similarity score w . [p; q; p*q] over feature
// width D: the first D entries weight p, the next D weight q, the last D
// weight the elementwise product.
struct TrilinearWeights {
    TensorPtr w;  // [3*D]

    std::size_t feature_width() const { return w->shape[0] / 3; }

    static TrilinearWeights init(std::size_t feature_width, Rng& rng);
};

// Similarity matrix H together with its two normalizations and the attention
// outputs derived from them.
struct AttentionBundle {
    TensorPtr h;      // [l x m], after dropout and masking
    TensorPtr h_row;  // row-softmax of h
    TensorPtr h_col;  // column-softmax of h
    TensorPtr m;      // passage-to-question attention, [l x D]
    TensorPtr s;      // question-to-passage attention, [l x D]
};

// Raw trilinear scores, no dropout or masking.
TensorPtr trilinear_similarity(const TensorPtr& p, const TensorPtr& q,
                               const TrilinearWeights& w);

// Trilinear scores with dropout applied to the raw matrix, then masked
// positions (either side) forced to kMaskValue so every later softmax
// assigns them zero probability.
TensorPtr similarity(const TensorPtr& p, const TensorPtr& q, const TrilinearWeights& w,
                     const std::vector<bool>& p_mask, const std::vector<bool>& q_mask,
                     double dropout_rate, bool training, Rng& rng);

// M = H_row . q : each passage row becomes a convex combination of
// question feature rows.
TensorPtr p2q_attention(const TensorPtr& h_row, const TensorPtr& q);

// S = H_row . H_col^T . p : second-hop attention back onto the passage.
TensorPtr q2p_attention(const TensorPtr& h_row, const TensorPtr& h_col, const TensorPtr& p);

// I = [p; M; p*M; p*S], shape [l x 4D].
struct FusedRepresentation {
    TensorPtr features;
};

FusedRepresentation fuse(const TensorPtr& p, const TensorPtr& m, const TensorPtr& s);

// Full fusion pass: H -> H_row/H_col -> M, S.
AttentionBundle bidirectional_attention(const TensorPtr& p, const TensorPtr& q,
                                        const TrilinearWeights& w,
                                        const std::vector<bool>& p_mask,
                                        const std::vector<bool>& q_mask, double dropout_rate,
                                        bool training, Rng& rng);

// Attention matrix dump:
//   {"rows": l, "cols": m, "passage_tokens": [...], "question_tokens": [...],
//    "weights": [...]}  -- weights row-major, printed with 6 decimal places.
struct AttentionDump {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::string> passage_tokens;
    std::vector<std::string> question_tokens;
    std::vector<double> weights;
};

void write_attention_json(std::ostream& out, const AttentionDump& dump);
AttentionDump read_attention_json(std::istream& in);

}  // namespace aba
