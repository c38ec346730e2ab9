#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aba/biattention.hpp"
#include "aba/data.hpp"
#include "aba/encoder.hpp"
#include "aba/hos.hpp"
#include "aba/predictor.hpp"
#include "aba/tensor.hpp"

namespace aba {

struct ModelConfig {
    std::size_t d = 64;
    std::size_t d_ff = 128;
    std::size_t n = 4;  // encoder depth; 0 is legal (stack [E; A])
    double dropout_rate = 0.1;
    std::size_t max_passage_len = 384;
    std::size_t max_question_len = 64;
    std::size_t max_answer_len = 30;
    GateInit gate_init = GateInit::FirstLayer;
    bool baseline = false;  // final-layer-only ablation: no stack, no gate
    std::uint64_t seed = 0;

    void validate() const;
    // Fused-attention feature width D: (n+2)*d with the layer stack, d in
    // the baseline.
    std::size_t feature_width() const { return baseline ? d : (n + 2) * d; }
};

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

// All trainable state plus the vocabulary it was built against.
struct Model {
    ModelConfig config;
    Vocabulary vocab;
    EmbeddingTable embedding;
    std::vector<EncoderBlock> blocks;
    GateMatrix lambda_p;  // null tensors in the baseline
    GateMatrix lambda_q;
    TrilinearWeights trilinear;
    SpanHead span_head;
    std::size_t step = 0;

    // Parameters drawn from Rng(config.seed), in declaration order.
    static Model init(const ModelConfig& config, Vocabulary vocab);

    // Fixed name -> tensor listing; checkpoint manifest and optimizer order.
    std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
};

// Token ids padded to the per-batch maximum, with validity masks and the
// (first) gold span per example.
struct Batch {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> passage_ids;
    std::vector<std::vector<int>> question_ids;
    std::vector<std::vector<bool>> passage_mask;
    std::vector<std::vector<bool>> question_mask;
    std::vector<std::size_t> passage_len;  // real lengths after truncation
    std::vector<std::size_t> question_len;
    std::vector<std::pair<std::size_t, std::size_t>> gold;

    std::size_t size() const { return ids.size(); }
};

// Builds a batch from examples[begin, end). Passages and questions are
// truncated to the config limits; an answerable gold span that no longer
// fits raises InputError (train() filters such examples up front).
Batch make_batch(const std::vector<MrcExample>& examples, std::size_t begin, std::size_t end,
                 const Vocabulary& vocab, const ModelConfig& config);

struct ExampleOutput {
    TensorPtr begin_logits;  // [l_pad], padding masked to kMaskValue
    TensorPtr end_logits;
    AttentionBundle attention;
    std::size_t passage_len;
    std::size_t question_len;
};

// Full pass: E -> C^1..C^n -> A -> layer stack -> gate -> H/M/S -> I ->
// span logits. Requires a model built with baseline == false.
std::vector<ExampleOutput> forward(const Model& model, const Batch& batch, bool training,
                                   Rng& rng);

// Ablation pass: the base attention output A feeds the same bidirectional
// attention directly (feature width d, no stack, no gate).
std::vector<ExampleOutput> forward_baseline(const Model& model, const Batch& batch,
                                            bool training, Rng& rng);

// Dispatches on model.config.baseline.
std::vector<ExampleOutput> run_model(const Model& model, const Batch& batch, bool training,
                                     Rng& rng);

// Adaptive moment estimation with global-norm gradient clipping.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<TensorPtr> params, double lr, double clip_norm,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();

private:
    std::vector<TensorPtr> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, clip_norm_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::size_t epochs = 15;
    double lr = 1e-3;
    std::size_t batch_size = 16;
    double clip_norm = 5.0;
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean batch loss
    double dev_em = 0.0;
    double dev_f1 = 0.0;
};

// Minimizes span_loss over the corpus. Deterministic given (model config,
// seed, corpus). Throws DivergenceError when the loss goes non-finite.
std::vector<EpochStats> train(Model& model, const std::vector<MrcExample>& train_set,
                              const std::vector<MrcExample>& dev_set,
                              const TrainConfig& train_config,
                              std::vector<std::string>* warnings = nullptr);

// Greedy span decoding over a corpus; unanswerable spans yield "".
std::vector<std::pair<std::string, std::string>> predict(
    const Model& model, const std::vector<MrcExample>& examples, std::size_t batch_size = 16);

// Single file: magic "ABAMRC1\n", little-endian u64 header length, JSON
// header {config, params: [{name, shape, offset}], step, vocab}, then raw
// little-endian 64-bit float blocks at ascending offsets.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// metrics history as "epoch,loss,dev_em,dev_f1" CSV
std::string metrics_csv(const std::vector<EpochStats>& history);

// Writes the row-normalized attention matrix of one example (eval mode) in
// the attention-dump JSON format.
void dump_attention(const Model& model, const MrcExample& example, const std::string& path);

// Writes via a temp file in the same directory, then renames, so failures
// never leave partial output.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace aba
