#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aba/tensor.hpp"

namespace aba {

// Additive score for masked attention keys; large enough that softmax assigns
// them exactly zero probability in double precision.
inline constexpr double kMaskValue = -1e30;

// Token <-> id map. PAD is always id 0 and UNK id 1; real tokens follow in
// first-seen order, which keeps vocabulary construction deterministic.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary();
    // Reconstruct from a full id->token list (as stored in checkpoints);
    // entries 0 and 1 must be the PAD and UNK tokens.
    explicit Vocabulary(std::vector<std::string> tokens);

    int add(const std::string& token);
    int id_of(const std::string& token) const;  // kUnk when absent
    const std::string& token_of(int id) const;
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    static Vocabulary build(const std::vector<const std::vector<std::string>*>& sequences);

private:
    std::unordered_map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

struct EmbeddingTable {
    TensorPtr weights;  // [V x d]

    std::size_t vocab_size() const { return weights->shape[0]; }
    std::size_t width() const { return weights->shape[1]; }

    // Uniform in [-1/sqrt(d), +1/sqrt(d)]; the PAD row is zeroed.
    static EmbeddingTable init(std::size_t vocab_size, std::size_t d, Rng& rng);
};

// Row i is the table row for token id i. Throws VocabularyError on id >= V.
TensorPtr embed(const std::vector<int>& tokens, const EmbeddingTable& table);

// x plus fixed sinusoidal position signals:
//   pe[pos][2i] = sin(pos / 10000^(2i/d)), pe[pos][2i+1] = cos(same).
TensorPtr add_position_signal(const TensorPtr& x);

// Single-head self-attention + two-layer feed-forward, both with residual
// connections and layer normalization. Output shape equals input shape.
struct EncoderBlock {
    TensorPtr wq, wk, wv;       // [d x d]
    TensorPtr ff1_w, ff1_b;     // [d x d_ff], [d_ff]
    TensorPtr ff2_w, ff2_b;     // [d_ff x d], [d]
    TensorPtr ln1_g, ln1_b;     // [d]
    TensorPtr ln2_g, ln2_b;     // [d]

    static EncoderBlock init(std::size_t d, std::size_t d_ff, Rng& rng);

    // mask[j] == false marks a PAD position: it receives zero attention
    // weight from every other position.
    TensorPtr forward(const TensorPtr& x, const std::vector<bool>& mask) const;
};

// Applies the blocks in order and returns every intermediate output
// C^1 ... C^n. n == 0 yields an empty list.
std::vector<TensorPtr> encode_stack(const TensorPtr& x, const std::vector<EncoderBlock>& blocks,
                                    const std::vector<bool>& mask);

// Question-aware passage rows (a_p) and passage-aware question rows (a_q)
// from one parameterless scaled-dot-product pass over the final encoder
// outputs.
struct BaseAttentionOutput {
    TensorPtr a_p;  // [l x d]
    TensorPtr a_q;  // [m x d]
};

BaseAttentionOutput cross_attend(const TensorPtr& c_p, const TensorPtr& c_q,
                                 const std::vector<bool>& p_mask,
                                 const std::vector<bool>& q_mask);

// [rows x cols] constant with kMaskValue in every column j where
// key_mask[j] is false, 0 elsewhere. Not part of the autodiff graph.
TensorPtr key_mask_matrix(std::size_t rows, const std::vector<bool>& key_mask);

}  // namespace aba
