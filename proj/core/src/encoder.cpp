#include "aba/encoder.hpp"

#include <cmath>

#include "aba/error.hpp"

namespace aba {

Vocabulary::Vocabulary() {
    tokens_ = {"<pad>", "<unk>"};
    ids_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
    if (tokens.size() < 2)
        throw ConfigError("vocabulary list must include the PAD and UNK entries");
    tokens_ = std::move(tokens);
    for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(tokens_.size()));
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
}

Vocabulary Vocabulary::build(const std::vector<const std::vector<std::string>*>& sequences) {
    Vocabulary vocab;
    for (const auto* seq : sequences)
        for (const auto& token : *seq) vocab.add(token);
    return vocab;
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab_size, std::size_t d, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    EmbeddingTable table{Tensor::uniform({vocab_size, d}, -bound, bound, rng, true)};
    for (std::size_t j = 0; j < d; ++j) table.weights->data[Vocabulary::kPad * d + j] = 0.0;
    return table;
}

TensorPtr embed(const std::vector<int>& tokens, const EmbeddingTable& table) {
    return gather_rows(table.weights, tokens);
}

TensorPtr add_position_signal(const TensorPtr& x) {
    const std::size_t len = x->shape[0], d = x->shape[1];
    auto pe = Tensor::create({len, d});
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; 2 * i < d; ++i) {
            const double freq =
                std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double angle = static_cast<double>(pos) * freq;
            pe->data[pos * d + 2 * i] = std::sin(angle);
            if (2 * i + 1 < d) pe->data[pos * d + 2 * i + 1] = std::cos(angle);
        }
    }
    return add(x, pe);
}

EncoderBlock EncoderBlock::init(std::size_t d, std::size_t d_ff, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    const double ff_bound = 1.0 / std::sqrt(static_cast<double>(d_ff));
    EncoderBlock b;
    b.wq = Tensor::uniform({d, d}, -bound, bound, rng, true);
    b.wk = Tensor::uniform({d, d}, -bound, bound, rng, true);
    b.wv = Tensor::uniform({d, d}, -bound, bound, rng, true);
    b.ff1_w = Tensor::uniform({d, d_ff}, -bound, bound, rng, true);
    b.ff1_b = Tensor::zeros({d_ff}, true);
    b.ff2_w = Tensor::uniform({d_ff, d}, -ff_bound, ff_bound, rng, true);
    b.ff2_b = Tensor::zeros({d}, true);
    b.ln1_g = Tensor::ones({d}, true);
    b.ln1_b = Tensor::zeros({d}, true);
    b.ln2_g = Tensor::ones({d}, true);
    b.ln2_b = Tensor::zeros({d}, true);
    return b;
}

TensorPtr key_mask_matrix(std::size_t rows, const std::vector<bool>& key_mask) {
    auto m = Tensor::create({rows, key_mask.size()});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < key_mask.size(); ++j)
            m->data[i * key_mask.size() + j] = key_mask[j] ? 0.0 : kMaskValue;
    return m;
}

TensorPtr EncoderBlock::forward(const TensorPtr& x, const std::vector<bool>& mask) const {
    const std::size_t len = x->shape[0], d = x->shape[1];
    if (mask.size() != len)
        throw DimensionError("encoder block: mask length " + std::to_string(mask.size()) +
                             " does not match input " + shape_str(x->shape));

    auto q = matmul(x, wq);
    auto k = matmul(x, wk);
    auto v = matmul(x, wv);
    auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    auto weights = softmax_rows(add(scores, key_mask_matrix(len, mask)));
    auto context = matmul(weights, v);
    auto h = layer_norm_rows(add(x, context), ln1_g, ln1_b);

    auto ff = add(matmul(relu(add(matmul(h, ff1_w), ff1_b)), ff2_w), ff2_b);
    return layer_norm_rows(add(h, ff), ln2_g, ln2_b);
}

std::vector<TensorPtr> encode_stack(const TensorPtr& x, const std::vector<EncoderBlock>& blocks,
                                    const std::vector<bool>& mask) {
    std::vector<TensorPtr> outputs;
    outputs.reserve(blocks.size());
    TensorPtr h = x;
    for (const auto& block : blocks) {
        h = block.forward(h, mask);
        outputs.push_back(h);
    }
    return outputs;
}

BaseAttentionOutput cross_attend(const TensorPtr& c_p, const TensorPtr& c_q,
                                 const std::vector<bool>& p_mask,
                                 const std::vector<bool>& q_mask) {
    const std::size_t d = c_p->shape[1];
    if (c_q->shape[1] != d)
        throw DimensionError("cross_attend: widths disagree, " + shape_str(c_p->shape) + " vs " +
                             shape_str(c_q->shape));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

    auto p_to_q = scale(matmul(c_p, transpose(c_q)), inv_sqrt_d);
    auto a_p = matmul(softmax_rows(add(p_to_q, key_mask_matrix(c_p->shape[0], q_mask))), c_q);

    auto q_to_p = scale(matmul(c_q, transpose(c_p)), inv_sqrt_d);
    auto a_q = matmul(softmax_rows(add(q_to_p, key_mask_matrix(c_q->shape[0], p_mask))), c_p);

    return {a_p, a_q};
}

}  // namespace aba
